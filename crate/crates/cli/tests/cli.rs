//! End-to-end tests against the compiled binary: exit codes, flag
//! precedence, record contents, and determinism across worker counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use varsearch_core::config::Strategy;
use varsearch_core::record::RunRecord;
use varsearch_core::rng::replicate_seed;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_varsearch"));
    cmd.env_remove("VARSEARCH_SEED");
    cmd
}

fn ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn failed(output: &Output) -> String {
    assert!(!output.status.success(), "command unexpectedly succeeded");
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn record_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("run_{rep:04}.json"))
}

#[test]
fn run_writes_a_loadable_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--seed", "5", "--out"]).arg(dir.path()).output().unwrap();
    ok(&out);
    let record = RunRecord::load(&record_path(dir.path(), 0)).unwrap();
    assert_eq!(record.strategy, Strategy::TtsVar);
    assert_eq!(record.master_seed, replicate_seed(5, 0));
    assert_eq!(record.image_shape, (32, 32));
    assert_eq!(record.events.len(), 5);
}

#[test]
fn strategy_flags_reach_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--strategy", "bon", "--n", "8", "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let record = RunRecord::load(&record_path(dir.path(), 0)).unwrap();
    assert_eq!(record.strategy, Strategy::Bon { n: 8 });
    assert!(record.events.is_empty());
    assert_eq!(record.final_rewards.len(), 8);
}

#[test]
fn replicates_write_records_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--seed", "8", "--replicates", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    for rep in 0..3 {
        let record = RunRecord::load(&record_path(dir.path(), rep)).unwrap();
        assert_eq!(record.master_seed, replicate_seed(8, rep));
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("strategy,runs,"));
    assert!(summary.contains("ttsvar,3,"));
}

#[test]
fn unknown_keys_are_fatal_and_named() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, "strateggy = bon\n").unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(failed(&out).contains("strateggy"));

    let out = bin()
        .args(["run", "generator.dirft=0.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(failed(&out).contains("generator.dirft"));
}

#[test]
fn bad_values_are_fatal_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "generator.drift=fast", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(failed(&out).contains("generator.drift"));
}

#[test]
fn seed_env_and_flag_precedence() {
    let render = |dir: &Path| fs::read(record_path(dir, 0)).unwrap();

    let via_env = tempfile::tempdir().unwrap();
    let out = bin()
        .env("VARSEARCH_SEED", "11")
        .args(["run", "--out"])
        .arg(via_env.path())
        .output()
        .unwrap();
    ok(&out);

    let via_flag = tempfile::tempdir().unwrap();
    let out =
        bin().args(["run", "--seed", "11", "--out"]).arg(via_flag.path()).output().unwrap();
    ok(&out);

    let flag_beats_env = tempfile::tempdir().unwrap();
    let out = bin()
        .env("VARSEARCH_SEED", "99")
        .args(["run", "--seed", "11", "--out"])
        .arg(flag_beats_env.path())
        .output()
        .unwrap();
    ok(&out);

    let other = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--seed", "12", "--out"]).arg(other.path()).output().unwrap();
    ok(&out);

    assert_eq!(render(via_env.path()), render(via_flag.path()));
    assert_eq!(render(via_env.path()), render(flag_beats_env.path()));
    assert_ne!(render(via_env.path()), render(other.path()));
}

#[test]
fn overrides_beat_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, "# paired baseline\nseed = 1\nstrategy = bon\nn = 2\n").unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["seed=2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let record = RunRecord::load(&record_path(dir.path(), 0)).unwrap();
    assert_eq!(record.master_seed, replicate_seed(2, 0));
    assert_eq!(record.strategy, Strategy::Bon { n: 2 });
}

#[test]
fn worker_count_never_reaches_the_record() {
    let mut bytes = Vec::new();
    for workers in ["1", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let out = bin()
            .args(["run", "--seed", "7", "--workers", workers, "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        ok(&out);
        bytes.push(fs::read(record_path(dir.path(), 0)).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn replay_rebuilds_every_lineage_and_rejects_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--seed", "9", "--out"]).arg(dir.path()).output().unwrap();
    ok(&out);
    let path = record_path(dir.path(), 0);
    let record = RunRecord::load(&path).unwrap();

    for slot in 0..record.final_rewards.len() {
        let out = bin()
            .args(["replay", "--lineage", &slot.to_string(), "--record"])
            .arg(&path)
            .output()
            .unwrap();
        ok(&out);
    }

    let out = bin().args(["replay", "--record"]).arg(&path).output().unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("bit for bit"));

    let out =
        bin().args(["replay", "--lineage", "999", "--record"]).arg(&path).output().unwrap();
    failed(&out);
}

#[test]
fn replay_writes_a_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--seed", "9", "--out"]).arg(dir.path()).output().unwrap();
    ok(&out);
    let image = dir.path().join("final.pgm");
    let out = bin()
        .args(["replay", "--record"])
        .arg(record_path(dir.path(), 0))
        .args(["--image"])
        .arg(&image)
        .output()
        .unwrap();
    ok(&out);
    let written = varsearch_core::tensor::read_pgm(&image).unwrap();
    assert_eq!(written.dim(), (32, 32));
}

#[test]
fn cost_csv_covers_the_deep_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["cost", "--out"]).arg(dir.path()).output().unwrap();
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("cost.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 14);
    assert_eq!(
        lines[0],
        "scale,tokens,cum_tokens,fixed_batch,fixed_flops,adaptive_batch,adaptive_flops,ratio"
    );
}

#[test]
fn cost_ratio_is_one_when_schedules_match() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["cost", "cost.adaptive_flat=true", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("cost.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let ratio: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(ratio, 1.0);
    }
}

#[test]
fn consistency_curve_lands_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["consistency", "--seed", "4", "--replicates", "100", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("consistency.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "scale,consistency,err");
    assert!(lines[6].starts_with("6,1,"));

    let out = bin()
        .args(["consistency", "--replicates", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(failed(&out).contains("100"));
}

#[test]
fn sweep_table_lands_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "sweep",
            "--seed",
            "3",
            "--replicates",
            "10",
            "sweep.axis=lambda",
            "sweep.values=0,150",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("lambda,mean_reward,"));

    let out = bin().args(["sweep", "--out"]).arg(dir.path()).output().unwrap();
    assert!(failed(&out).contains("sweep.axis"));
}
