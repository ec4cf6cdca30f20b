use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::scalar::Scalar;

/// Poisson arrival instants in `[0, horizon)`: cumulative sums of
/// exponential inter-arrival times with rate `lambda`.
pub fn draw_arrivals<T: Scalar, R: Rng + ?Sized>(lambda: T, horizon: T, rng: &mut R) -> Vec<T> {
    let rate = lambda.as_f64();
    if !(rate > 0.0) {
        return Vec::new();
    }
    let exp = Exp::new(rate).expect("positive rate");
    let end = horizon.as_f64();
    let mut out = Vec::with_capacity((rate * end * 1.2) as usize + 4);
    let mut t = 0.0f64;
    loop {
        t += exp.sample(rng);
        if t >= end {
            break;
        }
        out.push(T::lit(t));
    }
    out
}

/// Zipf-like popularity over `n` items: weight of rank `r` is `1 / (r+1)^s`.
/// Returns the cumulative distribution.
pub fn popularity_cdf(n: usize, skew: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..n).map(|r| ((r + 1) as f64).powf(-skew)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

pub fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}
