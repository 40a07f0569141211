use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swellcast_core::synth::read_truth_csv;
use swellcast_core::{HsSeries, LandMask, WindGrid};

const QUICK: &str = "\
nlat = 8
nlon = 8
land_from_col = 7
target_ilat = 4
target_ilon = 6
T = 400
storms = 40
kernel = 4:4:1:0.002; 2:2:3:0.002
seed = 1
t_max = 3
epochs = 3
conv_channels = 4,8
dense1 = 16
lstm_units = 8
dense2 = 8
cv_k = 2
tmax_candidates = 1,3
";

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swellcast"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn setup(text: &str) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    (dir, cfg, out)
}

#[test]
fn synth_files_parse_and_repeat_byte_for_byte() {
    let (dir, cfg, out) = setup(QUICK);
    ok(&run("synth", &cfg, &out, &[]));
    let wind = WindGrid::load(&out.join("wind.wgrd")).unwrap();
    assert_eq!(wind.n_times(), 400);
    LandMask::load(&out.join("mask.lmsk")).unwrap();
    assert_eq!(HsSeries::load(&out.join("hs.csv")).unwrap().len(), 400);
    let truth = read_truth_csv(&fs::read_to_string(out.join("truth.csv")).unwrap()).unwrap();
    assert_eq!(truth.len(), 2);
    assert!(out.join("synth.config").is_file() && out.join("synth.manifest").is_file());

    let again = dir.path().join("again");
    ok(&run("synth", &cfg, &again, &[]));
    for f in ["wind.wgrd", "mask.lmsk", "hs.csv", "truth.csv", "synth.manifest"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_2_naming_the_key() {
    let (_dir, cfg, out) = setup(&QUICK.replace("T = 400", "T = 4"));
    let o = run("synth", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`T`"));

    let (_dir, cfg, out) = setup(&format!("{QUICK}colour = blue\n"));
    let o = run("synth", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn missing_prerequisites_exit_3() {
    let (_dir, cfg, out) = setup(QUICK);
    ok(&run("synth", &cfg, &out, &[]));
    let o = run("train1", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("features.feat"));
    ok(&run("features", &cfg, &out, &[]));
    let o = run("train2", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage1.wckp"));
    let o = run("synth", Path::new("/nonexistent/run.conf"), &out, &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn tampered_input_exits_4() {
    let (_dir, cfg, out) = setup(QUICK);
    ok(&run("synth", &cfg, &out, &[]));
    let hs = out.join("hs.csv");
    let mut text = fs::read_to_string(&hs).unwrap();
    text.push_str("# edited\n");
    fs::write(&hs, text).unwrap();
    ok(&run("features", &cfg, &out, &[]));
    let o = run("train1", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn full_pipeline_is_reproducible() {
    let (dir, cfg, out) = setup(QUICK);
    for cmd in ["synth", "features", "train1", "train2", "eval"] {
        ok(&run(cmd, &cfg, &out, &[]));
    }
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("method,r,rmse,bias"));
    assert!(lines.next().unwrap().starts_with("two-stage,"));
    assert!(lines.next().unwrap().starts_with("window-regression baseline,"));
    assert!(fs::read_to_string(out.join("scatter.csv")).unwrap().starts_with("time,obs,pred\n"));
    assert!(fs::read_to_string(out.join("timeseries.csv")).unwrap().starts_with("time,obs,two_stage,baseline\n"));

    let first = fs::read(out.join("report.csv")).unwrap();
    ok(&run("eval", &cfg, &out, &[]));
    assert_eq!(first, fs::read(out.join("report.csv")).unwrap());

    // the config echo reproduces the checkpoint
    let echo = out.join("train1.config");
    let copy = dir.path().join("copy");
    fs::create_dir_all(&copy).unwrap();
    for f in ["features.feat", "hs.csv"] {
        fs::copy(out.join(f), copy.join(f)).unwrap();
    }
    ok(&run("train1", &echo, &copy, &[]));
    assert_eq!(fs::read(out.join("stage1.wckp")).unwrap(), fs::read(copy.join("stage1.wckp")).unwrap());

    let o = run("train2", &cfg, &out, &["--seed", "9"]);
    ok(&o);
    assert!(fs::read_to_string(out.join("train2.config")).unwrap().contains("seed=9"));
}

#[test]
fn cv_writes_curve_and_folds() {
    let (_dir, cfg, out) = setup(QUICK);
    for cmd in ["synth", "features"] {
        ok(&run(cmd, &cfg, &out, &[]));
    }
    ok(&run("cv", &cfg, &out, &["--jobs", "2"]));
    let curve = fs::read_to_string(out.join("cv_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("tmax,mean_rmse,min_rmse,max_rmse"));
    assert_eq!(curve.lines().count(), 3);
    let folds = fs::read_to_string(out.join("cv_folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 1 + 2 * 2);
    let o = run("cv", &cfg, &out, &["--jobs", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
