use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lfq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfq"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const SMALL: &str = "preset = biatech\nproteins = 10\ndifferential = 4\nbiological = 3\ntechnical = 1\nrun_length = 900\n";

fn simulate_small(dir: &Path) -> String {
    let cfg = dir.join("sim.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.join("data");
    let out = lfq(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    data.to_str().unwrap().to_string()
}

fn stage(name: &str, data: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![name, "--input", data, "--out", out, "--permutations", "200"];
    args.extend_from_slice(extra);
    lfq(&args)
}

#[test]
fn full_pipeline_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for name in ["quantify", "rollup", "test", "diagnose", "evaluate"] {
        let o = stage(name, &data, out, &[]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "species.abundance.tsv",
        "protein.count.tsv",
        "tau.peptide.abundance.tsv",
        "interference.tsv",
        "semi_profile.tsv",
        "stratified_w.tsv",
        "auc.tsv",
        "confusion.tsv",
    ] {
        assert!(Path::new(out).join(f).exists(), "{f} missing");
    }
    let auc = fs::read_to_string(Path::new(out).join("auc.tsv")).unwrap();
    assert_eq!(auc.lines().count(), 1 + 6);
}

#[test]
fn level_and_measure_flags_restrict_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let only = ["--level", "protein", "--measure", "count"];
    for name in ["quantify", "rollup", "test"] {
        assert_eq!(code(&stage(name, &data, out, &only)), 0);
    }
    assert!(Path::new(out).join("tau.protein.count.tsv").exists());
    assert!(!Path::new(out).join("tau.species.count.tsv").exists());
    assert!(!Path::new(out).join("fits.tsv").exists());
}

#[test]
fn missing_raster_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let rasters = Path::new(&data).join("rasters");
    let victim = fs::read_dir(&rasters).unwrap().next().unwrap().unwrap().path();
    fs::remove_file(victim).unwrap();
    let out = dir.path().join("out");
    let o = stage("quantify", &data, out.to_str().unwrap(), &[]);
    assert_eq!(code(&o), 2);
    assert!(!out.join("species.count.tsv").exists(), "no partial outputs");
}

#[test]
fn empty_identifications_give_empty_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_small(dir.path());
    let ids = Path::new(&data).join("identifications.tsv");
    let header = fs::read_to_string(&ids).unwrap().lines().next().unwrap().to_string();
    fs::write(&ids, header + "\n").unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for name in ["quantify", "rollup", "test"] {
        let o = stage(name, &data, out, &[]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let tau = fs::read_to_string(Path::new(out).join("tau.protein.abundance.tsv")).unwrap();
    assert_eq!(tau.lines().count(), 1);
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(code(&lfq(&["bogus"])), 1);
    assert_eq!(code(&lfq(&["test", "--level", "galaxy"])), 1);
    assert_eq!(code(&lfq(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "alpha = 0.05\nunknown_key = 1\n").unwrap();
    let o = lfq(&["test", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(code(&lfq(&["test", "--alpha", "2"])), 1);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = stage("quantify", dir.path().join("nowhere").to_str().unwrap(), dir.path().to_str().unwrap(), &[]);
    assert_eq!(code(&o), 2);
}
