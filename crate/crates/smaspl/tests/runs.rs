use std::path::{Path, PathBuf};

use smaspl::executor::Workers;
use smaspl::log::LOG_FILE;
use smaspl::run;
use smaspl::scenario::{load_scenario_with, ModeEntry, Overrides, Scenario};
use smaspl_core::exec::Sequential;

fn two_mg(overrides: Overrides) -> Scenario {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/two-mg.toml");
    load_scenario_with(&path, &overrides).unwrap()
}

fn keys(line: &str) -> Vec<String> {
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn unconstrained_mode_writes_the_same_schema() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let safe = two_mg(Overrides { episodes: Some(2), ..Overrides::default() });
    let loose = two_mg(Overrides { episodes: Some(2), mode: Some(ModeEntry::UPl), ..Overrides::default() });
    run::train(&safe, Some(a.path()), &Sequential).unwrap();
    let out = run::train(&loose, Some(b.path()), &Sequential).unwrap();
    let names = |dir: &Path| {
        let mut v: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        v.sort();
        v
    };
    assert_eq!(names(a.path()), names(b.path()));
    let la = std::fs::read_to_string(a.path().join(LOG_FILE)).unwrap();
    let lb = std::fs::read_to_string(b.path().join(LOG_FILE)).unwrap();
    assert_eq!(keys(la.lines().next().unwrap()), keys(lb.lines().next().unwrap()));
    let table = &out.trainer.env().table;
    assert!(table.rows().iter().all(|r| !table.is_active(r.id)));
    assert!(out.logs.iter().all(|l| l.lambda.iter().flatten().all(|v| *v == 0.0)));
}

#[test]
fn thread_count_does_not_change_results() {
    let sc = two_mg(Overrides { episodes: Some(4), ..Overrides::default() });
    let seq = run::train(&sc, None, &Sequential).unwrap().logs;
    let par = run::train(&sc, None, &Workers::with_threads(3)).unwrap().logs;
    assert_eq!(seq, par);
    let other = two_mg(Overrides { episodes: Some(4), seed: Some(8), ..Overrides::default() });
    assert_ne!(run::train(&other, None, &Sequential).unwrap().logs, seq);
}

/// Mann-Kendall statistic `z` for an upward trend.
fn mann_kendall_z(x: &[f64]) -> f64 {
    let n = x.len();
    let s: f64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (x[j] - x[i]).signum()).sum();
    let var = (n * (n - 1) * (2 * n + 5)) as f64 / 18.0;
    if s > 0.0 {
        (s - 1.0) / var.sqrt()
    } else {
        (s + 1.0) / var.sqrt()
    }
}

#[test]
fn training_reward_trends_upward() {
    let sc = two_mg(Overrides::default());
    let logs = run::train(&sc, None, &Workers::with_threads(4)).unwrap().logs;
    let rewards: Vec<f64> = logs.iter().map(|l| l.total_reward()).collect();
    let z = mann_kendall_z(&rewards);
    // two-sided 5% critical value
    assert!(z > 1.96, "z = {z}");
    assert!(rewards.last().unwrap() > rewards.first().unwrap());
}
