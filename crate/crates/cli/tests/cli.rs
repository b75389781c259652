use std::path::{Path, PathBuf};
use std::process::Command;

use nlkpp_cli::{cmd_hbar, ExperimentConfig, RunReport};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nlkpp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlkpp")).args(args).output().expect("binary runs")
}

fn error_path(text: &str) -> String {
    let err = ExperimentConfig::from_toml_str(text)
        .and_then(|c| c.validate().map_err(anyhow::Error::from))
        .expect_err("config should be rejected");
    format!("{err:#}")
}

#[test]
fn shipped_configs_validate() {
    for name in ["homogeneous.toml", "checkerboard.toml"] {
        let cfg = ExperimentConfig::load(&configs().join(name)).unwrap();
        cfg.validate().unwrap();
    }
}

#[test]
fn invalid_settings_name_their_key_path() {
    assert!(error_path("[simulate]\ncfl_fraction = 2.0\n").starts_with("simulate.cfl_fraction"));
    assert!(error_path("[cell]\nlambdas = [0.1, 0.2, 0.05]\n").starts_with("cell.lambdas"));
    assert!(error_path("[cell]\np_lo = -3.0\np_hi = 4.0\n").starts_with("cell.p_lo"));
    assert!(error_path("[metric]\ndirections = [[0.0, 0.0]]\n").starts_with("metric.directions[0]"));
    assert!(error_path("[converge]\nepsilons = [0.1, 0.2, 0.4]\n").starts_with("converge.epsilons"));
    assert!(error_path("seeds = []\n").starts_with("seeds"));
    assert!(error_path(
        "[media.generator]\nkind = \"checkerboard\"\ncell = 1.0\nc_lo = 0.05\nc_hi = 1.0\nsigma = 0.1\n"
    )
    .starts_with("media.generator"));
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ExperimentConfig::from_toml_str("[cell]\nlamdas = [0.2, 0.1, 0.05]\n").is_err());
    assert!(ExperimentConfig::from_toml_str(
        "[vi]\ng0 = { shape = \"ball\", center = [0.0, 0.0], radius = 1.0, r = 2.0 }\n"
    )
    .is_err());
}

#[test]
fn hash_ignores_the_output_directory() {
    let mut a = ExperimentConfig::default();
    let h = a.hash();
    a.output = PathBuf::from("elsewhere");
    assert_eq!(a.hash(), h);
    a.seeds = vec![7];
    assert_ne!(a.hash(), h);
}

#[test]
fn hbar_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let mut cfg = ExperimentConfig::load(&configs().join("homogeneous.toml")).unwrap();
        cfg.output = dir.path().join(format!("run{run}"));
        let (report, table) = cmd_hbar(&cfg).unwrap();
        assert!(report.passed(), "{:?}", report.failures());
        assert!(table.meta.concavity_ok && table.meta.bound_ok);
        bytes.push(std::fs::read(cfg.output.join("hbar.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    assert!(text.starts_with("# config_hash="));
}

#[test]
fn reports_from_different_configs_do_not_merge() {
    let mut a = RunReport::new("hbar", "aaaa", &[0]);
    let b = RunReport::new("vi", "bbbb", &[0]);
    assert!(a.merge(b).is_err());
    let mut c = RunReport::new("vi", "aaaa", &[0]);
    c.metric("growth_rate", 0.9);
    a.merge(c).unwrap();
    assert_eq!(a.commands.len(), 2);
    assert_eq!(a.metrics["growth_rate"], 0.9);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[simulate]\ncfl_fraction = 2.0\n").unwrap();
    let out = nlkpp(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate.cfl_fraction"));

    let cfg = configs().join("homogeneous.toml");
    let target = dir.path().join("out");
    let out =
        nlkpp(&["validate", "--config", cfg.to_str().unwrap(), "--out", target.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = RunReport::load(&target.join("report_validate.json")).unwrap();
    assert!(report.passed());
    assert!(target.join("validate.csv").exists());
}
