//! End-to-end smoke tests of the `revisit` binary: generate, match, stats,
//! and byte-identical reruns under a fixed seed.

use std::fs;
use std::path::Path;
use std::process::Command;

fn revisit(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_revisit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn config_file(dir: &Path) -> String {
    // small synthetic world keeps the smoke test quick
    let path = dir.join("test.cfg");
    fs::write(&path, "n_frames = 30\nimage_size = 64\npyramid_levels = 2\n").unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn generate_match_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path());

    let out = revisit(
        &["--seed", "5", "--config", &cfg, "--out", "data", "generate"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("data/synthA_5.manifest").exists());
    assert!(dir.path().join("data/synthB_5.manifest").exists());
    assert!(dir.path().join("data/ground_truth_5.csv").exists());

    let out = revisit(
        &[
            "--seed", "5", "--config", &cfg, "--out", "res", "match", "--query-frame", "10",
            "--radius", "25",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let match_csv = dir.path().join("res/match_10.csv");
    assert!(match_csv.exists());

    let out = revisit(
        &[
            "--config",
            &cfg,
            "--out",
            "res",
            "stats",
            "--scores",
            match_csv.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = fs::read_to_string(dir.path().join("res/stats.csv")).unwrap();
    assert!(stats.starts_with("combo,avg_score,std_dev"));
}

#[test]
fn extract_writes_one_cache_file_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path());
    revisit(
        &["--seed", "6", "--config", &cfg, "--out", "data", "generate"],
        dir.path(),
    );
    let out = revisit(
        &[
            "--config", &cfg, "--out", "cache", "extract", "--manifest",
            "data/synthA_6.manifest", "--family", "mLBP", "--space", "gs",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let n = fs::read_dir(dir.path().join("cache")).unwrap().count();
    assert_eq!(n, 30);
}

#[test]
fn identical_seeds_emit_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path());
    for out_dir in ["run1", "run2"] {
        let out = revisit(
            &[
                "--seed", "9", "--config", &cfg, "--out", out_dir, "sweep-radius", "--family",
                "mLBP", "--space", "gs",
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.path().join("run1/radius_sweep.csv")).unwrap();
    let b = fs::read(dir.path().join("run2/radius_sweep.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_family_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_file(dir.path());
    revisit(
        &["--seed", "7", "--config", &cfg, "--out", "data", "generate"],
        dir.path(),
    );
    let out = revisit(
        &[
            "--config", &cfg, "--out", "c", "extract", "--manifest", "data/synthA_7.manifest",
            "--family", "nope", "--space", "gs",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown descriptor family"));
}
