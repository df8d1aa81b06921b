use std::path::Path;

use dualpolicy::controller::{ControllerMode, TriggerReason};
use dualpolicy::experiment::{evaluate_run_dir, run_ablation, run_training, RunConfig, Scenario};

fn small(out: &Path) -> RunConfig {
    RunConfig {
        scenario: Scenario::Multi,
        epochs: 3,
        episodes_per_epoch: 6,
        eval_episodes: 6,
        eval_every: 1,
        distill_period: 1,
        seeds: vec![21, 22],
        corpus_episodes: 20,
        out_dir: Some(out.to_path_buf()),
        ..RunConfig::default()
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ca = small(a.path());
    let cb = small(b.path());
    run_training(&ca, 21).unwrap();
    run_training(&cb, 21).unwrap();
    let fa = files(&ca.run_dir(a.path(), 21));
    let fb = files(&cb.run_dir(b.path(), 21));
    assert!(fa.len() >= 7);
    assert_eq!(fa, fb);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let x = run_training(&c, 21).unwrap();
    let y = run_training(&c, 22).unwrap();
    assert_ne!(x.triggers, y.triggers);
}

#[test]
fn ablation_rows_follow_their_modes() {
    let dir = tempfile::tempdir().unwrap();
    let t = run_ablation(&small(dir.path())).unwrap();
    assert_eq!(t.rows.len(), 5);
    assert!(dir.path().join("ablation.tsv").exists());
    let s1 = t.row(ControllerMode::S1Only).unwrap();
    assert!(s1.s2_rate.iter().all(|r| *r == 0.0));
    // every random-mode run logged only random triggers
    let triggers = std::fs::read_to_string(dir.path().join("multi/random_p/seed-21/triggers.jsonl")).unwrap();
    let random = TriggerReason::Random.as_str();
    assert!(triggers.lines().all(|l| l.contains(&format!("\"reason\":\"{random}\""))));
}

#[test]
fn evaluation_of_a_saved_run_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    run_training(&c, 22).unwrap();
    let run_dir = c.run_dir(dir.path(), 22);
    let a = evaluate_run_dir(&c, 22, &run_dir).unwrap();
    let b = evaluate_run_dir(&c, 22, &run_dir).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=100.0).contains(&a.report.success));
}
