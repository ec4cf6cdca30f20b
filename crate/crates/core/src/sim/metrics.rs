use crate::scalar::Scalar;

/// Why a frame never reached its client in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCause {
    /// Dropped by a degradation plan or rejected by a server.
    Policy,
    /// Network over capacity.
    Overflow,
    /// Random network loss.
    Random,
    /// Arrived after its deadline and was discarded by the client.
    Expired,
}

/// Frame counters for one measurement bucket. Frames are attributed to the
/// bucket in which they were released, so every rate stays within `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BucketCounters {
    pub sent: u64,
    pub received: u64,
    pub useful: u64,
    pub lost: u64,
    pub waiting: u64,
    pub served: u64,
    pub lost_policy: u64,
    pub lost_overflow: u64,
    pub lost_random: u64,
    pub lost_expired: u64,
    /// I frames removed by a plan or rejected by a server.
    pub i_policy_drops: u64,
    /// I frames dropped by network overflow.
    pub i_overflow_drops: u64,
    /// I frames dropped by overflow while a non-mandatory frame of the same
    /// tick was still available to drop instead.
    pub i_overflow_drops_avoidable: u64,
}

impl BucketCounters {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.received - self.lost
    }

    pub(crate) fn record_loss(&mut self, cause: LossCause) {
        self.lost += 1;
        match cause {
            LossCause::Policy => self.lost_policy += 1,
            LossCause::Overflow => self.lost_overflow += 1,
            LossCause::Random => self.lost_random += 1,
            LossCause::Expired => self.lost_expired += 1,
        }
    }

    pub fn merge(&mut self, other: &BucketCounters) {
        self.sent += other.sent;
        self.received += other.received;
        self.useful += other.useful;
        self.lost += other.lost;
        self.waiting += other.waiting;
        self.served += other.served;
        self.lost_policy += other.lost_policy;
        self.lost_overflow += other.lost_overflow;
        self.lost_random += other.lost_random;
        self.lost_expired += other.lost_expired;
        self.i_policy_drops += other.i_policy_drops;
        self.i_overflow_drops += other.i_overflow_drops;
        self.i_overflow_drops_avoidable += other.i_overflow_drops_avoidable;
    }
}

/// Rates normalized by frames sent; all zero when nothing was sent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Rates<T> {
    pub received: T,
    pub useful: T,
    pub lost: T,
    pub waiting: T,
    pub served: T,
}

impl<T: Scalar> Rates<T> {
    pub fn from_counters(c: &BucketCounters) -> Self {
        if c.sent == 0 {
            return Rates {
                received: T::zero(),
                useful: T::zero(),
                lost: T::zero(),
                waiting: T::zero(),
                served: T::zero(),
            };
        }
        let sent = T::from_count(c.sent);
        let r = |n: u64| T::from_count(n) / sent;
        Rates {
            received: r(c.received),
            useful: r(c.useful),
            lost: r(c.lost),
            waiting: r(c.waiting),
            served: r(c.served),
        }
    }

    pub fn get(&self, metric: Metric) -> T {
        match metric {
            Metric::Received => self.received,
            Metric::Useful => self.useful,
            Metric::Lost => self.lost,
            Metric::Waiting => self.waiting,
            Metric::Served => self.served,
        }
    }
}

/// The five reported rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Received,
    Useful,
    Lost,
    Waiting,
    Served,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Received,
        Metric::Useful,
        Metric::Lost,
        Metric::Waiting,
        Metric::Served,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Received => "received",
            Metric::Useful => "useful",
            Metric::Lost => "lost",
            Metric::Waiting => "waiting",
            Metric::Served => "served",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSample<T> {
    pub bucket_index: u32,
    pub counts: BucketCounters,
    pub rates: Rates<T>,
}

/// Turns a bucket's counters into a sample.
pub fn collect_metrics<T: Scalar>(counters: &BucketCounters, bucket_index: u32) -> MetricsSample<T> {
    MetricsSample {
        bucket_index,
        counts: *counters,
        rates: Rates::from_counters(counters),
    }
}

/// Cumulative totals observed when a bucket closed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BucketClose {
    pub sent: u64,
    pub received: u64,
    pub lost: u64,
    /// Frames queued at servers or in transit at the close instant.
    pub in_flight: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bucket_has_zero_rates() {
        let s: MetricsSample<f64> = collect_metrics(&BucketCounters::default(), 0);
        assert_eq!(s.rates, Rates::default());
    }

    #[test]
    fn rates_normalize_by_sent() {
        let mut c = BucketCounters {
            sent: 10,
            received: 8,
            useful: 8,
            served: 10,
            ..Default::default()
        };
        c.record_loss(LossCause::Overflow);
        c.record_loss(LossCause::Random);
        let s: MetricsSample<f32> = collect_metrics(&c, 3);
        assert_eq!(s.rates.received, 0.8);
        assert_eq!(s.rates.lost, 0.2);
        assert_eq!(s.counts.in_flight(), 0);
        assert_eq!(s.counts.lost_overflow, 1);
    }
}
