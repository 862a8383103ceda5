use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdm"))
        .args(args)
        .env("QDM_THREADS", "2")
        .output()
        .expect("spawn qdm")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .display()
        .to_string()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn manifest(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("manifest.txt")).unwrap()
}

fn out(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

const SMALL_FRAMES: &str = r#"
[scenario]
kind = "sensitivity"
seed = 5
[fieldsolve.geometry]
width = 12
height = 10
[pipeline]
frames_per_set = 40
"#;

#[test]
fn same_seed_same_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_FRAMES);
    let a = out(tmp.path(), "a");
    let b = out(tmp.path(), "b");
    for d in [&a, &b] {
        let o = qdm(&["simulate-frames", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(manifest(&a), manifest(&b));

    // thread count does not change the draws
    let c = out(tmp.path(), "c");
    let o = Command::new(env!("CARGO_BIN_EXE_qdm"))
        .args(["simulate-frames", "--config", &cfg, "--out", c.to_str().unwrap(), "--threads", "1"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(manifest(&a), manifest(&c));

    let d = out(tmp.path(), "d");
    let o = qdm(&["simulate-frames", "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "6"]);
    assert!(o.status.success());
    assert_ne!(manifest(&a), manifest(&d));
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o_dir = out(tmp.path(), "o");
    let o_dir = o_dir.to_str().unwrap();

    let cfg = write_config(tmp.path(), "[camsim]\nbogus = 1\n");
    assert_eq!(qdm(&["simulate-field", "--config", &cfg, "--out", o_dir]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), "[camsim]\nframe_rate = 9000.0\n");
    assert_eq!(qdm(&["simulate-frames", "--config", &cfg, "--out", o_dir]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), "[fieldsolve]\nphantom_file = \"missing.csv\"\n");
    let o = qdm(&["simulate-field", "--config", &cfg, "--out", o_dir]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}

#[test]
fn failing_check_exits_4_only_with_flag() {
    let tmp = tempfile::tempdir().unwrap();
    // at an input SNR of several hundred there is nothing for NLM to gain
    let cfg = write_config(tmp.path(), "[scenario]\nkind = \"denoise\"\n[denoise]\nnoise_sigma = 1e-13\n");
    let o_dir = out(tmp.path(), "o");
    let o_dir = o_dir.to_str().unwrap();
    let o = qdm(&["report", "--config", &cfg, "--out", o_dir, "--check"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(qdm(&["report", "--config", &cfg, "--out", o_dir]).status.code(), Some(0));
}

#[test]
fn analyze_reads_stored_stack() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_FRAMES);
    let frames = out(tmp.path(), "frames");
    for fmt in ["csv", "bin"] {
        let o = qdm(&["simulate-frames", "--config", &cfg, "--out", frames.to_str().unwrap(), "--format", fmt]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stack = std::fs::read_dir(&frames)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.file_stem().is_some_and(|s| s.to_string_lossy().starts_with("frames")))
            .expect("frame stack written");
        let a = out(tmp.path(), "analysis");
        let o = qdm(&[
            "analyze",
            "--config",
            &cfg,
            "--out",
            a.to_str().unwrap(),
            "--input",
            stack.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("median_eta"));
        std::fs::remove_dir_all(&frames).unwrap();
    }
}

#[test]
fn bundled_scenarios_pass_their_checks() {
    let tmp = tempfile::tempdir().unwrap();
    for name in [
        "sensitivity.toml",
        "noise_scaling.toml",
        "static_phantom.toml",
        "picotesla_denoise.toml",
        "p1_spectrum.toml",
        "dynamic_cardiac.toml",
        "timing.toml",
    ] {
        let d = out(tmp.path(), name);
        let o = qdm(&["report", "--config", &scenario(name), "--out", d.to_str().unwrap(), "--check"]);
        assert!(
            o.status.success(),
            "{name}: {}{}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(d.join("report.txt").is_file());
        assert!(d.join("manifest.txt").is_file());
    }
}

#[test]
fn svg_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = out(tmp.path(), "svg");
    let o = qdm(&[
        "simulate-field",
        "--config",
        &scenario("static_phantom.toml"),
        "--out",
        d.to_str().unwrap(),
        "--format",
        "svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_dir(&d)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "svg"))
        .expect("svg written");
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn check_subset() {
    let o = qdm(&["check", "--criterion", "1", "--criterion", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.contains("PASS")));
    assert_eq!(qdm(&["check", "--criterion", "14"]).status.code(), Some(2));
}
