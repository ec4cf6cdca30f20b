use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::fairshare::ClassFloors;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{key} = {value} is outside the accepted range {range}")]
    Range {
        key: &'static str,
        value: String,
        range: &'static str,
    },
    #[error("{nb_video} videos do not fit on {nb_vs} servers of capacity {capacity_c}")]
    CatalogOverflow {
        nb_video: u32,
        nb_vs: u32,
        capacity_c: u32,
    },
    #[error("unknown strategy {0:?} (expected baseline, mk, mk_kframes or mk_kframes_repl)")]
    UnknownStrategy(String),
}

/// Which mechanisms a run switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// FIFO servers, no fair share, random network drops.
    Baseline,
    /// Fair share and per-class removal counts; removed positions are random
    /// within each class and servers stay FIFO.
    Mk,
    /// Adds k-frames labels: evenly spread drop plans, label-priority queues
    /// and the late-frame rejection rule.
    MkKframes,
    /// Adds saturation-triggered replication.
    MkKframesRepl,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Baseline,
        Strategy::Mk,
        Strategy::MkKframes,
        Strategy::MkKframesRepl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Mk => "mk",
            Strategy::MkKframes => "mk_kframes",
            Strategy::MkKframesRepl => "mk_kframes_repl",
        }
    }

    pub fn fair_share(self) -> bool {
        self != Strategy::Baseline
    }

    pub fn kframes(self) -> bool {
        matches!(self, Strategy::MkKframes | Strategy::MkKframesRepl)
    }

    pub fn replication(self) -> bool {
        self == Strategy::MkKframesRepl
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "baseline" => Ok(Strategy::Baseline),
            "mk" => Ok(Strategy::Mk),
            "mkkframes" => Ok(Strategy::MkKframes),
            "mkkframesrepl" => Ok(Strategy::MkKframesRepl),
            _ => Err(ConfigError::UnknownStrategy(s.trim().to_string())),
        }
    }
}

/// Parameters of one simulation run. Time is in abstract units, rates in
/// frames per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub t_sim: T,
    pub nb_measure: u32,
    pub nb_video: u32,
    pub nb_gop: u32,
    pub nb_p: u32,
    /// Request arrivals per time unit.
    pub lambda: T,
    /// Frames per time unit each client requires.
    pub qos: u32,
    /// Longest a request waits for a server.
    pub tm_service: T,
    pub nb_vs: u32,
    /// Server speed in frames per time unit.
    pub beta: T,
    /// Videos a server can store.
    pub capacity_c: u32,
    /// Network frames per time unit.
    pub net_capacity: u64,
    pub p_loss: T,
    pub strategy: Strategy,
    pub seed: u64,
    /// Deadline slack in inter-frame intervals.
    pub deadline_slack_multiplier: T,
    pub sampling_period: T,
    pub b_per_group: u32,
    /// Constant network transit time.
    pub latency: T,
    /// Service granularity of servers and network.
    pub tick: T,
    /// Zipf exponent of video popularity; 0 is uniform.
    pub popularity_skew: T,
    /// Frames per GoP the controller restores per period once headroom holds.
    pub restore_step: u32,
    /// Consecutive periods of headroom before restoring.
    pub restore_hold: u32,
    pub p_floor: u32,
    pub b_floor: u32,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        SimConfig {
            t_sim: T::lit(100.0),
            nb_measure: 20,
            nb_video: 20,
            nb_gop: 20,
            nb_p: 3,
            lambda: T::lit(1.0),
            qos: 30,
            tm_service: T::lit(5.0),
            nb_vs: 5,
            beta: T::lit(100.0),
            capacity_c: 8,
            net_capacity: 290,
            p_loss: T::lit(0.02),
            strategy: Strategy::MkKframes,
            seed: 1,
            deadline_slack_multiplier: T::lit(5.0),
            sampling_period: T::lit(1.0),
            b_per_group: 2,
            latency: T::lit(0.05),
            tick: T::lit(0.02),
            popularity_skew: T::lit(1.0),
            restore_step: 4,
            restore_hold: 2,
            p_floor: 1,
            b_floor: 0,
        }
    }
}

fn range_err<V: fmt::Display>(key: &'static str, value: V, range: &'static str) -> ConfigError {
    ConfigError::Range {
        key,
        value: value.to_string(),
        range,
    }
}

fn check_u32(key: &'static str, v: u32, lo: u32, hi: u32, range: &'static str) -> Result<(), ConfigError> {
    if v < lo || v > hi {
        Err(range_err(key, v, range))
    } else {
        Ok(())
    }
}

fn check_real<T: Scalar>(key: &'static str, v: T, lo: f64, hi: f64, range: &'static str) -> Result<(), ConfigError> {
    let x = v.as_f64();
    if !(x >= lo && x <= hi) {
        Err(range_err(key, v, range))
    } else {
        Ok(())
    }
}

fn positive<T: Scalar>(key: &'static str, v: T) -> Result<(), ConfigError> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(range_err(key, v, "(0, inf)"))
    }
}

impl<T: Scalar> SimConfig<T> {
    /// Positivity and consistency checks that every run needs.
    pub fn validate_basic(&self) -> Result<(), ConfigError> {
        positive("t_sim", self.t_sim)?;
        check_u32("nb_measure", self.nb_measure, 1, u32::MAX, "[1, inf)")?;
        check_u32("nb_video", self.nb_video, 1, u32::MAX, "[1, inf)")?;
        check_u32("nb_gop", self.nb_gop, 1, u32::MAX, "[1, inf)")?;
        check_u32("nb_p", self.nb_p, 1, 40, "[1, 40]")?;
        check_real("lambda", self.lambda, 0.0, f64::MAX, "[0, inf)")?;
        check_u32("qos", self.qos, 1, u32::MAX, "[1, inf)")?;
        positive("tm_service", self.tm_service)?;
        check_u32("nb_vs", self.nb_vs, 1, u32::MAX, "[1, inf)")?;
        positive("beta", self.beta)?;
        check_u32("capacity_c", self.capacity_c, 1, u32::MAX, "[1, inf)")?;
        if self.net_capacity == 0 {
            return Err(range_err("net_capacity", 0, "[1, inf)"));
        }
        check_real("p_loss", self.p_loss, 0.0, 1.0, "[0, 1]")?;
        positive("deadline_slack_multiplier", self.deadline_slack_multiplier)?;
        positive("sampling_period", self.sampling_period)?;
        check_u32("b_per_group", self.b_per_group, 0, 8, "[0, 8]")?;
        check_real("latency", self.latency, 0.0, f64::MAX, "[0, inf)")?;
        positive("tick", self.tick)?;
        check_real("popularity_skew", self.popularity_skew, 0.0, 10.0, "[0, 10]")?;
        check_u32("restore_step", self.restore_step, 1, u32::MAX, "[1, inf)")?;
        let gop_len = 1 + self.nb_p + (self.nb_p + 1) * self.b_per_group;
        if gop_len > 128 {
            return Err(range_err("b_per_group", self.b_per_group, "GoP length <= 128"));
        }
        if u64::from(self.nb_video) > u64::from(self.nb_vs) * u64::from(self.capacity_c) {
            return Err(ConfigError::CatalogOverflow {
                nb_video: self.nb_video,
                nb_vs: self.nb_vs,
                capacity_c: self.capacity_c,
            });
        }
        Ok(())
    }

    /// [`validate_basic`](Self::validate_basic) plus the parameter ranges of
    /// the reference experiment table.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_basic()?;
        check_u32("nb_measure", self.nb_measure, 15, 100, "[15, 100]")?;
        check_u32("nb_video", self.nb_video, 5, 200, "[5, 200]")?;
        check_u32("nb_gop", self.nb_gop, 20, 100, "[20, 100]")?;
        check_u32("nb_p", self.nb_p, 3, 9, "[3, 9]")?;
        check_real("lambda", self.lambda, 0.0, 2.0, "[0, 2.0]")?;
        check_u32("qos", self.qos, 25, 35, "[25, 35]")?;
        check_real("tm_service", self.tm_service, 1.0, 20.0, "[1, 20]")?;
        check_u32("nb_vs", self.nb_vs, 5, 100, "[5, 100]")?;
        check_real("beta", self.beta, 100.0, 200.0, "[100, 200]")?;
        check_u32("capacity_c", self.capacity_c, 1, 20, "[1, 20]")?;
        Ok(())
    }

    pub fn floors(&self) -> ClassFloors {
        ClassFloors {
            p: self.p_floor,
            b: self.b_floor,
        }
    }

    pub fn gop_len(&self) -> u32 {
        1 + self.nb_p + (self.nb_p + 1) * self.b_per_group
    }

    /// Width of one measurement bucket.
    pub fn bucket_interval(&self) -> T {
        self.t_sim / T::from_count(u64::from(self.nb_measure))
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        SimConfig {
            strategy,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        SimConfig {
            lambda,
            ..self.clone()
        }
    }
}
