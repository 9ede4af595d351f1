use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hsinr::codec::read_file;
use hsinr::quality::QualityReport;
use hsinr::siren::param_count;

fn hsinr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsinr"))
        .args(args)
        .env("HSINR_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hsinr(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_compress_decompress_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("cube.raw");
    let hsin = dir.path().join("cube.hsin");
    let recon = dir.path().join("recon.raw");
    ok(&[
        "synth",
        "--kind",
        "smooth-gradient",
        "--dims",
        "32x32x8",
        "--seed",
        "0",
        "--out",
        p(&cube),
    ]);
    assert!(dir.path().join("cube.hdr").exists());
    let text = ok(&[
        "compress",
        "--input",
        p(&cube),
        "--layers",
        "3",
        "--width",
        "32",
        "--iters",
        "3000",
        "--seed",
        "1",
        "--out",
        p(&hsin),
    ]);
    let report = QualityReport::parse(&text).unwrap();
    assert!(report.psnr >= 40.0, "{text}");
    assert!(text.contains("layers=3\n") && text.contains("width=32\n"));

    ok(&["decompress", "--in", p(&hsin), "--out", p(&recon)]);
    let metrics = ok(&[
        "metrics",
        "--orig",
        p(&cube),
        "--recon",
        p(&recon),
        "--encoded",
        p(&hsin),
    ]);
    let psnr: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("psnr="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(psnr >= 40.0, "{metrics}");
    assert!((psnr - report.psnr).abs() < 0.1, "{psnr} vs {}", report.psnr);
    assert!(metrics.contains(&format!("bpppb={}", report.bpppb)));
}

#[test]
fn corrupted_magic_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("c.raw");
    let hsin = dir.path().join("c.hsin");
    ok(&["synth", "--kind", "random", "--dims", "4x4x2", "--out", p(&cube)]);
    ok(&[
        "compress",
        "--input",
        p(&cube),
        "--layers",
        "1",
        "--width",
        "4",
        "--iters",
        "5",
        "--out",
        p(&hsin),
    ]);
    let mut bytes = fs::read(&hsin).unwrap();
    bytes[0] = b'X';
    fs::write(&hsin, bytes).unwrap();
    let out = hsinr(&["decompress", "--in", p(&hsin), "--out", p(&dir.path().join("r.raw"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn usage_and_missing_file_codes() {
    assert_eq!(hsinr(&["compress", "--bogus"]).status.code(), Some(1));
    assert_eq!(hsinr(&[]).status.code(), Some(1));
    assert_eq!(hsinr(&["--help"]).status.code(), Some(0));
    let both = hsinr(&[
        "compress",
        "--input",
        "x",
        "--layers",
        "2",
        "--width",
        "4",
        "--budget-bpppb",
        "1",
        "--out",
        "y",
    ]);
    assert_eq!(both.status.code(), Some(1));
    let missing = hsinr(&["decompress", "--in", "/nonexistent/file.hsin", "--out", "/tmp/x.raw"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_hsinr"))
        .args([
            "synth",
            "--kind",
            "random",
            "--dims",
            "2x2x2",
            "--out",
            "/tmp/unused.raw",
        ])
        .env("HSINR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
}

#[test]
fn half_precision_saves_two_bytes_per_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("c.raw");
    let full = dir.path().join("full.hsin");
    let half = dir.path().join("half.hsin");
    ok(&["synth", "--kind", "band-sinusoid", "--dims", "8x8x5", "--out", p(&cube)]);
    let base = [
        "compress",
        "--input",
        p(&cube),
        "--layers",
        "2",
        "--width",
        "12",
        "--iters",
        "50",
    ];
    ok(&[&base[..], &["--out", p(&full)]].concat());
    ok(&[&base[..], &["--half", "--out", p(&half)]].concat());
    let n = param_count(&read_file(&full).unwrap().spec().unwrap());
    let diff = fs::metadata(&full).unwrap().len() - fs::metadata(&half).unwrap().len();
    assert_eq!(diff, 2 * n as u64);
    assert!(read_file(&half).unwrap().quantized());
}

#[test]
fn identical_invocations_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("c.raw");
    ok(&[
        "synth",
        "--kind",
        "random",
        "--dims",
        "9x6x3",
        "--seed",
        "4",
        "--out",
        p(&cube),
    ]);
    let mut outputs = Vec::new();
    for name in ["a.hsin", "b.hsin"] {
        let out = dir.path().join(name);
        ok(&[
            "compress",
            "--input",
            p(&cube),
            "--layers",
            "2",
            "--width",
            "8",
            "--iters",
            "120",
            "--sample-window",
            "3",
            "--sample-rate",
            "0.5",
            "--seed",
            "9",
            "--half",
            "--out",
            p(&out),
        ]);
        outputs.push(fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let again = dir.path().join("c2.raw");
    ok(&[
        "synth",
        "--kind",
        "random",
        "--dims",
        "9x6x3",
        "--seed",
        "4",
        "--out",
        p(&again),
    ]);
    assert_eq!(fs::read(&cube).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn search_lists_feasible_probes() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path().join("c.raw");
    ok(&[
        "synth",
        "--kind",
        "smooth-gradient",
        "--dims",
        "64x64x4",
        "--out",
        p(&cube),
    ]);
    // At this size only the smallest default shape fits 4 bpppb.
    let text = ok(&[
        "search",
        "--input",
        p(&cube),
        "--budget-bpppb",
        "4",
        "--probe-iters",
        "20",
        "--eval-every",
        "10",
    ]);
    assert!(text.contains("best_layers=5\n"), "{text}");
    assert!(text.contains("best_width=20\n"), "{text}");
    let none = hsinr(&[
        "search",
        "--input",
        p(&cube),
        "--budget-bpppb",
        "0.001",
        "--probe-iters",
        "5",
    ]);
    assert_eq!(none.status.code(), Some(1));
}
