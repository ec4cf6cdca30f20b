use rayon::prelude::*;

use super::config::{ConfigError, SimConfig};
use super::engine::Simulation;
use super::metrics::{BucketCounters, Metric, Rates};
use crate::scalar::Scalar;

/// Mean and population standard deviation of each rate for one bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketStats<T> {
    pub bucket_index: u32,
    pub mean: Rates<T>,
    pub stddev: Rates<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSummary<T> {
    pub n_reps: u32,
    pub buckets: Vec<BucketStats<T>>,
    /// Whole-run rates of every replicate, in seed order.
    pub runs: Vec<Rates<T>>,
    /// Counters summed over all replicates.
    pub totals: BucketCounters,
    /// Largest in-flight residue of any replicate.
    pub max_in_flight_end: u64,
    /// Every per-bucket conservation check held.
    pub conserved: bool,
}

impl<T: Scalar> ReplicateSummary<T> {
    /// Mean of the whole-run rate across replicates.
    pub fn run_mean(&self, metric: Metric) -> T {
        mean_std(self.runs.iter().map(|r| r.get(metric))).0
    }

    pub fn run_stddev(&self, metric: Metric) -> T {
        mean_std(self.runs.iter().map(|r| r.get(metric))).1
    }
}

fn mean_std<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = xs.clone().count();
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let nf = T::from_count(n as u64);
    let mean = xs.clone().sum::<T>() / nf;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<T>() / nf;
    (mean, var.sqrt())
}

fn rates_stats<T: Scalar>(rs: &[Rates<T>]) -> (Rates<T>, Rates<T>) {
    let mut mean = Rates::default();
    let mut sd = Rates::default();
    for m in Metric::ALL {
        let (mu, s) = mean_std(rs.iter().map(|r| r.get(m)));
        match m {
            Metric::Received => (mean.received, sd.received) = (mu, s),
            Metric::Useful => (mean.useful, sd.useful) = (mu, s),
            Metric::Lost => (mean.lost, sd.lost) = (mu, s),
            Metric::Waiting => (mean.waiting, sd.waiting) = (mu, s),
            Metric::Served => (mean.served, sd.served) = (mu, s),
        }
    }
    (mean, sd)
}

/// Runs seeds `seed, seed+1, …, seed+n_reps−1` on the current rayon pool
/// and aggregates per bucket. Output does not depend on scheduling.
pub fn run_replicates<T: Scalar>(
    config: &SimConfig<T>,
    n_reps: u32,
) -> Result<ReplicateSummary<T>, ConfigError> {
    if n_reps == 0 {
        return Err(ConfigError::Range {
            key: "reps",
            value: "0".into(),
            range: "[1, inf)",
        });
    }
    config.validate()?;
    let reports: Vec<_> = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let cfg = config.with_seed(config.seed.wrapping_add(u64::from(i)));
            Simulation::new(cfg).map(Simulation::run)
        })
        .collect::<Result<_, _>>()?;

    let nb = config.nb_measure as usize;
    let buckets = (0..nb)
        .map(|b| {
            let rs: Vec<Rates<T>> = reports.iter().map(|r| r.samples[b].rates).collect();
            let (mean, stddev) = rates_stats(&rs);
            BucketStats {
                bucket_index: b as u32,
                mean,
                stddev,
            }
        })
        .collect();
    let mut totals = BucketCounters::default();
    for r in &reports {
        totals.merge(&r.totals);
    }
    let conserved = reports.iter().all(|r| {
        r.totals.sent == r.totals.received + r.totals.lost + r.in_flight_end
            && r.closes
                .iter()
                .all(|c| c.sent == c.received + c.lost + c.in_flight)
            && r.samples.iter().all(|s| {
                s.counts.sent >= s.counts.received + s.counts.lost && s.counts.useful <= s.counts.received
            })
    });
    Ok(ReplicateSummary {
        n_reps,
        buckets,
        runs: reports.iter().map(|r| r.rates()).collect(),
        totals,
        max_in_flight_end: reports.iter().map(|r| r.in_flight_end).max().unwrap_or(0),
        conserved,
    })
}
