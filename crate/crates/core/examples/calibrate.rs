use std::time::Instant;

use mkstream::sim::{run_replicates, Metric, SimConfig, Strategy};

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() {
    let reps: u32 = env("REPS", 10);
    let mut base = SimConfig::<f64>::default();
    base.beta = env("BETA", base.beta);
    base.net_capacity = env("NET", base.net_capacity);
    base.popularity_skew = env("SKEW", base.popularity_skew);
    base.nb_vs = env("NBVS", base.nb_vs);
    base.capacity_c = env("CAP", base.capacity_c);
    let t0 = Instant::now();
    let mut heavy = [0.0f64; 4];
    let mut wins = [0u32; 3];
    let sets = env("SETS", 5u32);
    for set in 0..sets {
        let mut per = [0.0f64; 4];
        for lambda in [1.5, 1.6, 1.7, 1.8, 1.9, 2.0] {
            for (i, s) in Strategy::ALL.iter().enumerate() {
                let cfg = base.with_lambda(lambda).with_strategy(*s).with_seed(1 + u64::from(set) * 1000);
                let r = run_replicates(&cfg, reps).unwrap();
                per[i] += r.run_mean(Metric::Received) / 6.0;
            }
        }
        for i in 0..4 {
            heavy[i] += per[i] / f64::from(sets);
        }
        wins[0] += u32::from(per[3] > per[2]);
        wins[1] += u32::from(per[2] > per[1]);
        wins[2] += u32::from(per[1] > per[0]);
    }
    println!("heavy recv base={:.3} mk={:.3} kf={:.3} repl={:.3} wins repl>kf {} kf>mk {} mk>base {} of {sets}",
        heavy[0], heavy[1], heavy[2], heavy[3], wins[0], wins[1], wins[2]);
    eprintln!("elapsed {:?}", t0.elapsed());
}
