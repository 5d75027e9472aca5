mod support;

use std::path::Path;
use std::process::Command;

use cec_core::policy::{build_policy, LfuWindow, PolicyContext, PolicyId};
use cec_core::sim::{
    compare, relative_improvement, replay_policy, run_fif_selector, run_simulation,
    SimulationConfig, SimulationReport,
};
use cec_core::trace::{generate_zipf_irm_trace, RawRequest, Trace};
use cec_core::virtual_cache::EnsembleConfig;
use proptest::prelude::*;

fn ids(names: &[&str]) -> Vec<PolicyId> {
    names.iter().map(|n| n.parse().unwrap()).collect()
}

#[test]
fn lfu_matches_the_top_k_mass_under_irm() {
    let trace = generate_zipf_irm_trace(50, 1.0, 50_000, 1.0, 8).unwrap();
    let r = run_simulation(
        &trace,
        &SimulationConfig::new(5),
        PolicyId::Lfu(LfuWindow::Infinite),
        &PolicyContext::default(),
    )
    .unwrap();
    let mass = support::zipf_top_mass(50, 1.0, 5);
    assert!(
        (r.hit_ratio - mass).abs() <= 0.03,
        "{} vs {mass}",
        r.hit_ratio
    );
    let crate_mass: f64 = support::crate_zipf(50, 1.0).iter().take(5).sum();
    assert!((crate_mass - mass).abs() < 1e-12);
}

#[test]
fn single_policy_selector_is_that_policy() {
    let trace = support::mixed_trace(3, 4000);
    let cfg = SimulationConfig::new(12);
    for id in ids(&["lru-1", "lfu-inf", "lru-3"]) {
        let mut p = build_policy(id, &PolicyContext::default()).unwrap();
        let alone = replay_policy(&trace, 12, p.as_mut(), |_, _, _| {}).unwrap();
        let ens = EnsembleConfig::new(vec![id]);
        let sel = run_fif_selector(&trace, &cfg, &ens, &PolicyContext::default()).unwrap();
        assert_eq!(
            sel.hits,
            alone.iter().filter(|h| **h).count() as u64,
            "{id}"
        );
    }
}

#[test]
fn selector_beats_its_constituents_almost_always() {
    let ens = EnsembleConfig::new(ids(&["lru-1", "lru-2", "lfu-inf", "lfu-100"]));
    let mut wins = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let trace = support::mixed_trace(200 + seed, 3000);
        let cfg = SimulationConfig::new(10);
        let sel = run_fif_selector(&trace, &cfg, &ens, &PolicyContext::default()).unwrap();
        let best = ens
            .policies
            .iter()
            .map(|id| {
                run_simulation(&trace, &cfg, *id, &PolicyContext::default())
                    .unwrap()
                    .hit_ratio
            })
            .fold(0.0, f64::max);
        wins += usize::from(sel.hit_ratio >= best);
    }
    assert!(wins * 100 >= 95 * seeds as usize, "{wins}/{seeds}");
}

#[test]
fn comparing_different_runs_is_an_error() {
    let a = support::mixed_trace(1, 1000);
    let b = support::mixed_trace(2, 1000);
    let ctx = PolicyContext::default();
    let ra = run_simulation(&a, &SimulationConfig::new(5), PolicyId::Lru(1), &ctx).unwrap();
    let rb = run_simulation(&b, &SimulationConfig::new(5), PolicyId::Lru(1), &ctx).unwrap();
    let rc = run_simulation(&a, &SimulationConfig::new(6), PolicyId::Lru(1), &ctx).unwrap();
    assert!(compare(&[ra.clone(), rb]).is_err());
    assert!(compare(&[ra.clone(), rc]).is_err());
    assert!(compare(&[]).is_err());
    let fif = run_simulation(&a, &SimulationConfig::new(5), PolicyId::Fif, &ctx).unwrap();
    let table = compare(&[ra.clone(), fif.clone()]).unwrap();
    assert_eq!(
        table.rows[1].improvement[0],
        relative_improvement(fif.hit_ratio, ra.hit_ratio)
    );
    assert_eq!(table.rows[0].improvement[0], Some(0.0));
    assert_eq!(relative_improvement(0.5, 0.0), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn slots_partition_the_measured_requests(seed in 0u64..500, warmup in 0usize..1500, slot in 1usize..700) {
        let trace = support::mixed_trace(seed, 1200);
        let cfg = SimulationConfig { capacity: 8, slot_size: slot, warmup, seed: 0 };
        let r = run_simulation(&trace, &cfg, PolicyId::Lru(2), &PolicyContext::default()).unwrap();
        let measured = trace.len().saturating_sub(warmup);
        prop_assert_eq!(r.measured_requests, measured);
        prop_assert_eq!(r.slot_hits.len(), measured.div_ceil(slot));
        prop_assert_eq!(r.slot_hits.iter().sum::<u64>(), r.hits);
        for (k, (h, ratio)) in r.slot_hits.iter().zip(&r.slot_hit_ratios).enumerate() {
            let len = slot.min(measured - k * slot);
            prop_assert_eq!(*ratio, *h as f64 / len as f64);
        }
        let back: SimulationReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}

fn cec() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cec"));
    c.env("RUST_LOG", "off");
    c
}

fn write_trace(path: &Path, rows: &[(f64, &str)]) {
    let t = Trace::from_raw(rows.iter().map(|(t, n)| RawRequest::new(*t, *n)).collect()).unwrap();
    t.save(path).unwrap();
}

#[test]
fn cli_reports_usage_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = cec().arg("simulate").output().unwrap();
    assert!(!out.status.success());
    let out = cec()
        .args([
            "simulate",
            "--trace",
            "missing.csv",
            "--capacity",
            "3",
            "--policy",
            "lru-1",
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    std::fs::write(dir.path().join("bad.csv"), "time,item\n1,a\n").unwrap();
    let out = cec()
        .args([
            "simulate",
            "--trace",
            "bad.csv",
            "--capacity",
            "3",
            "--policy",
            "lru-1",
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());

    write_trace(
        &dir.path().join("t.csv"),
        &[(0.0, "a"), (1.0, "b"), (2.0, "a")],
    );
    let out = cec()
        .args([
            "simulate",
            "--trace",
            "t.csv",
            "--capacity",
            "0",
            "--policy",
            "lru-1",
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = cec()
        .args([
            "simulate",
            "--trace",
            "t.csv",
            "--capacity",
            "1",
            "--policy",
            "lru-0",
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn cli_rebases_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let rows = [
        (0.0, "a"),
        (5.0, "b"),
        (9.0, "a"),
        (12.0, "c"),
        (13.0, "b"),
        (20.0, "a"),
    ];
    let shifted: Vec<(f64, &str)> = rows.iter().map(|(t, n)| (t + 1.7e9, *n)).collect();
    write_trace(&dir.path().join("zero.csv"), &rows);
    write_trace(&dir.path().join("epoch.csv"), &shifted);
    for (trace, out) in [("zero.csv", "zero.json"), ("epoch.csv", "epoch.json")] {
        let status = cec()
            .args([
                "simulate",
                "--trace",
                trace,
                "--capacity",
                "2",
                "--policy",
                "lru-2",
                "-o",
                out,
            ])
            .current_dir(dir.path())
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = SimulationReport::load(dir.path().join("zero.json")).unwrap();
    let b = SimulationReport::load(dir.path().join("epoch.json")).unwrap();
    assert_eq!(a, b);
}
