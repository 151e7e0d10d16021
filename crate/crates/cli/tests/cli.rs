//! End-to-end runs of the `pcg` binary on small synthetic inputs.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use pcg_core::signal_io::write_wav;

fn pcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcg"))
        .args(args)
        .env_remove("PCG_CACHE_DIR")
        .output()
        .expect("run pcg")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tone(path: &Path, secs: f64, rate: u32) {
    let n = (secs * rate as f64) as usize;
    let x: Vec<f64> = (0..n)
        .map(|i| 0.3 * (2.0 * PI * 60.0 * i as f64 / rate as f64).sin())
        .collect();
    write_wav(path, &x, rate).unwrap();
}

fn zero_checkpoint(path: &Path) {
    ok(pcg(&["init", "--out", s(path), "--width-divisor", "16", "--zero"]));
}

#[test]
fn prepare_reports_spectrogram_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cache) = (tmp.path().join("data"), tmp.path().join("cache"));
    ok(pcg(&["synth", "--out", s(&data), "--per-class", "2", "--seed", "3"]));
    let text = ok(pcg(&[
        "prepare", "--root", s(&data), "--dataset", "physionet", "--cache", s(&cache),
    ]));
    let line = text.lines().last().unwrap();
    let dir = cache.join("physionet");
    let images = fs::read_dir(dir.join("spectrograms")).unwrap().count();
    let segments = fs::read_dir(dir.join("segments")).unwrap().count();
    assert_eq!(images, segments);
    assert!(line.starts_with(&format!("{images} spectrograms (")), "{line}");
    assert!(dir.join("manifest.csv").is_file());
    assert!(fs::read_to_string(dir.join("prepare.txt")).unwrap().contains("dataset = physionet"));
}

#[test]
fn prepare_on_empty_root_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pcg(&[
        "prepare", "--root", s(tmp.path()), "--dataset", "physionet", "--cache",
        s(&tmp.path().join("cache")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no recordings found"));
}

#[test]
fn smoke_sweep_writes_one_summary_row_per_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let text = ok(pcg(&[
        "train", "--study", "1", "--smoke", "--cache", s(&tmp.path().join("cache")), "--out",
        s(tmp.path()),
    ]));
    assert!(t.elapsed().as_secs() < 60, "smoke sweep took {:?}", t.elapsed());
    assert!(text.contains("# data = synthetic"));
    let dir = tmp.path().join("study1");
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 7, "{summary}");
    for name in ["EXP1", "EXP4", "EXP7"] {
        assert!(dir.join(format!("metrics_{name}.csv")).is_file());
        assert!(dir.join(format!("epochs_{name}.csv")).is_file());
        assert!(dir.join(format!("{name}.pcgm")).is_file());
        assert!(dir.join("checkpoints").join(format!("{name}_fold0_best.pcgm")).is_file());
    }
    assert!(fs::read_to_string(dir.join("config.txt")).unwrap().contains("study = 1"));

    // re-aggregation from the CSVs matches the run
    let report = ok(pcg(&["report", "--dir", s(&dir)]));
    assert!(report.contains("EXP1") && report.contains("EXP7"), "{report}");
}

#[test]
fn smoke_transfer_echoes_freeze_list() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src.pcgm");
    ok(pcg(&["init", "--out", s(&src), "--width-divisor", "16", "--seed", "4"]));
    let text = ok(pcg(&[
        "transfer", "--source", s(&src), "--freeze", "conv1,conv2", "--smoke", "--cache",
        s(&tmp.path().join("cache")), "--out", s(tmp.path()),
    ]));
    assert!(text.contains("# freeze = conv1,conv2"), "{text}");
    let dir = tmp.path().join("study3");
    assert!(dir.join("BEST.pcgm").is_file());
    assert_eq!(fs::read_to_string(dir.join("summary.csv")).unwrap().lines().count(), 2);
}

#[test]
fn transfer_rejects_a_mismatched_source() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("exp1.pcgm");
    ok(pcg(&["init", "--out", s(&src), "--preset", "exp1", "--width-divisor", "16"]));
    let out = pcg(&[
        "transfer", "--source", s(&src), "--smoke", "--cache", s(&tmp.path().join("cache")),
        "--out", s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn predict_scores_each_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("zero.pcgm");
    zero_checkpoint(&ck);
    let wav = tmp.path().join("long.wav");
    tone(&wav, 16.5, 4000);
    let text = ok(pcg(&["predict", "--checkpoint", s(&ck), "--wav", s(&wav)]));
    let probs: Vec<&str> = text.lines().filter(|l| l.starts_with("segment ")).collect();
    assert_eq!(probs.len(), 2, "{text}");
    assert!(probs.iter().all(|l| l.ends_with(": 0.5000")), "{text}");
    // a tie at the threshold counts as abnormal
    assert!(text.contains("verdict: abnormal"), "{text}");
}

#[test]
fn predict_rejects_short_recordings() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("zero.pcgm");
    zero_checkpoint(&ck);
    let wav = tmp.path().join("short.wav");
    tone(&wav, 7.0, 2000);
    let out = pcg(&["predict", "--checkpoint", s(&ck), "--wav", s(&wav)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too short"));
}

#[test]
fn predict_rejects_a_corrupt_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("bad.pcgm");
    fs::write(&ck, b"not a checkpoint").unwrap();
    let wav = tmp.path().join("a.wav");
    tone(&wav, 9.0, 2000);
    let out = pcg(&["predict", "--checkpoint", s(&ck), "--wav", s(&wav)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn evaluate_writes_one_aggregate_block() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, cache) = (tmp.path().join("data"), tmp.path().join("cache"));
    ok(pcg(&["synth", "--out", s(&data), "--per-class", "2"]));
    ok(pcg(&["prepare", "--root", s(&data), "--dataset", "physionet", "--cache", s(&cache)]));
    let ck = tmp.path().join("zero.pcgm");
    zero_checkpoint(&ck);
    let report = tmp.path().join("eval.txt");
    let text = ok(pcg(&[
        "evaluate", "--checkpoint", s(&ck), "--dataset", "physionet", "--cache", s(&cache),
        "--out", s(&report),
    ]));
    assert_eq!(fs::read_to_string(&report).unwrap(), text);
    // p = 0.5 everywhere: every image is called abnormal, so sensitivity is 1
    assert!(text.contains("sensitivity"), "{text}");
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let custom = tmp.path().join("custom");
    let cfg = tmp.path().join("study.cfg");
    fs::write(
        &cfg,
        format!("study = 1\npresets = EXP3\nseed = 5\noutput_dir = {}\n", custom.display()),
    )
    .unwrap();
    let text = ok(pcg(&[
        "train", "--config", s(&cfg), "--smoke", "--seed", "7", "--cache",
        s(&tmp.path().join("cache")),
    ]));
    assert!(text.contains("# presets = EXP3"), "{text}");
    let written = fs::read_to_string(custom.join("config.txt")).unwrap();
    assert!(written.contains("seed = 7") && written.contains("width_divisor = 16"), "{written}");
    assert_eq!(fs::read_to_string(custom.join("summary.csv")).unwrap().lines().count(), 2);
}

#[test]
fn config_for_another_study_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("study.cfg");
    fs::write(&cfg, "study = 2\n").unwrap();
    let out = pcg(&["train", "--study", "1", "--config", s(&cfg), "--smoke"]);
    assert_eq!(out.status.code(), Some(2));
}
