use std::fs;
use std::process::Command;

use mkstream::cli::{
    emit_summary, parse_config, parse_plan, run_experiment, serialize_config, summary_csv,
    write_outputs, ExperimentPlan,
};
use mkstream::sim::{SimConfig, Strategy};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mkstream"))
}

fn small_plan(dir: &std::path::Path) -> ExperimentPlan<f64> {
    ExperimentPlan {
        lambda_grid: vec![1.0],
        strategies: vec![Strategy::MkKframes],
        n_reps: 1,
        output_path: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn single_rep_has_zero_stddev_and_stable_schema() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    let res = run_experiment(&plan).unwrap();
    let files = write_outputs(&res, dir.path()).unwrap();
    assert_eq!(files.len(), 6);
    for m in ["received", "useful", "lost", "waiting", "served"] {
        let text = fs::read_to_string(dir.path().join(format!("{m}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("lambda,strategy,bucket_index,mean_rate,stddev"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 20);
        assert!(text.ends_with('\n'));
        for r in rows {
            let cols: Vec<&str> = r.split(',').collect();
            assert_eq!(cols.len(), 5);
            assert_eq!(cols[1], "mk_kframes");
            assert_eq!(cols[4], "0.000000");
        }
    }
    let summary = summary_csv(&res);
    assert!(summary.starts_with("lambda,strategy,n_reps,received,useful,lost,waiting,served\n1,mk_kframes,1,"));
    let table = emit_summary(&res).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(!table.contains("ordering"));
}

#[test]
fn summary_flags_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let plan = ExperimentPlan {
        lambda_grid: vec![1.8, 2.0],
        strategies: Strategy::ALL.to_vec(),
        n_reps: 4,
        ..small_plan(dir.path())
    };
    let table = emit_summary(&run_experiment(&plan).unwrap()).unwrap();
    let first = table.lines().nth(1).unwrap();
    assert!(first.starts_with("mk_kframes_repl") && first.ends_with('*'), "{table}");
    assert!(table.contains("received ordering: mk_kframes_repl > mk_kframes > mk > baseline"), "{table}");
}

#[test]
fn plan_keys_parse() {
    let p: ExperimentPlan<f64> =
        parse_plan("lambda_grid = 0.5, 1.0\nstrategies = baseline,MkKframes\nn_reps = 3\noutput_path = res\n").unwrap();
    assert_eq!(p.lambda_grid, vec![0.5, 1.0]);
    assert_eq!(p.strategies, vec![Strategy::Baseline, Strategy::MkKframes]);
    assert_eq!(p.n_reps, 3);
    assert!(parse_plan::<f64>("lambda_grid = 2.5").is_err());
    assert!(parse_plan::<f64>("strategies = fifo").is_err());
    assert!(parse_plan::<f64>("n_reps = 0").is_err());
}

#[test]
fn run_writes_csvs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("o{i}"));
        let st = bin()
            .args(["run", "--reps", "3", "--seed", "5", "--jobs", "2", "--out"])
            .arg(&out)
            .env("MKSTREAM_LAMBDA", "1.2")
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        assert!(String::from_utf8_lossy(&st.stdout).contains("mk_kframes"));
        outs.push(fs::read(out.join("received.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    let text = String::from_utf8(outs[0].clone()).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("1.2,mk_kframes,0,"));
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let st = bin()
        .args(["run", "--reps", "1", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert!(!st.status.success());

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "nb_p = 12\n").unwrap();
    let st = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("[3, 9]"));

    let st = bin().arg("validate").env("MKSTREAM_BOGUS", "1").output().unwrap();
    assert!(!st.status.success());
}

#[test]
fn validate_prints_round_trippable_config() {
    let st = bin().arg("validate").env("MKSTREAM_QOS", "27").output().unwrap();
    assert!(st.status.success());
    let text = String::from_utf8(st.stdout).unwrap();
    let c: SimConfig<f64> = parse_config(&text).unwrap();
    assert_eq!(c.qos, 27);
}

fn arb_config() -> impl proptest::strategy::Strategy<Value = SimConfig<f64>> {
    (
        (15u32..=100, 5u32..=40, 20u32..=100, 3u32..=9, 0.0f64..=2.0, 25u32..=35),
        (1.0f64..=20.0, 5u32..=100, 100.0f64..=200.0, 1u32..=20, 1u64..5000, 0.0f64..=1.0),
        (prop::sample::select(mkstream::sim::Strategy::ALL.to_vec()), any::<u64>(), 0.01f64..1.0, 0u32..4),
    )
        .prop_filter_map("catalog fits", |(a, b, c)| {
            let cfg = SimConfig {
                nb_measure: a.0,
                nb_video: a.1,
                nb_gop: a.2,
                nb_p: a.3,
                lambda: a.4,
                qos: a.5,
                tm_service: b.0,
                nb_vs: b.1,
                beta: b.2,
                capacity_c: b.3,
                net_capacity: b.4,
                p_loss: b.5,
                strategy: c.0,
                seed: c.1,
                latency: c.2,
                b_per_group: c.3,
                ..SimConfig::default()
            };
            cfg.validate().is_ok().then_some(cfg)
        })
}

proptest! {
    #[test]
    fn parse_inverts_serialize(cfg in arb_config()) {
        prop_assert_eq!(parse_config::<f64>(&serialize_config(&cfg)).unwrap(), cfg);
    }
}
