//! `swellcast` command-line pipeline: synth → features → train1 → train2 →
//! eval, plus the `cv` study over `t_max`.
//!
//! Every command reads one flat `key=value` config, rejects unknown keys and
//! writes into `--out` (or `out_dir`) a resolved config echo
//! `<command>.config` and a summary `<command>.manifest` with FNV-1a
//! checksums of its inputs and outputs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swellcast_core::eval::{
    baseline_weather_window, predict_samples, kfold_cv_tmax, metrics, BaselineConfig, BASELINE_LABEL,
};
use swellcast_core::features::{format_time, FeatureOptions};
use swellcast_core::io::fnv1a64_file;
use swellcast_core::kv::KvMap;
use swellcast_core::model::{train_stage1, train_stage2, Split, Stage1Model, Stage2Model, TrainConfig};
use swellcast_core::nn::Checkpoint;
use swellcast_core::synth::{generate, SynthConfig, HS_FILE, MASK_FILE, TRUTH_FILE, WIND_FILE};
use swellcast_core::{Dataset, Error, FeatureSet, HsSeries, LandMask, LatLon, WindGrid};

const FEATURES_FILE: &str = "features.feat";
const STAGE1_FILE: &str = "stage1.wckp";
const STAGE2_FILE: &str = "stage2.wckp";

#[derive(Parser)]
#[command(name = "swellcast", version, about = "Downscale gridded wind to significant wave height")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a planted travel-time kernel.
    Synth(Common),
    /// Build the global and local predictors.
    Features(Common),
    /// Train stage 1.
    Train1(Common),
    /// Train stage 2 on a frozen stage 1.
    Train2(Common),
    /// Evaluate both stages and the window-regression baseline.
    Eval(Common),
    /// Blocked k-fold cross-validation over `t_max`.
    Cv {
        #[command(flatten)]
        common: Common,
        /// Worker threads for folds.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
enum Fail {
    Config(String),
    Missing(PathBuf),
    Checksum { path: PathBuf, declared: String, found: String },
    Other(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Config(_) => 2,
            Fail::Missing(_) => 3,
            Fail::Checksum { .. } => 4,
            Fail::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for Fail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fail::Config(m) => write!(f, "config error: {m}"),
            Fail::Missing(p) => write!(f, "missing prerequisite: {}", p.display()),
            Fail::Checksum { path, declared, found } => write!(
                f,
                "checksum mismatch for {}: manifest declares {declared}, file has {found}",
                path.display()
            ),
            Fail::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid { .. } => Fail::Config(e.to_string()),
            other => Fail::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Other(e.to_string())
    }
}

type Res<T> = std::result::Result<T, Fail>;

/// Everything a command may need from the config file.
struct Run {
    kv: KvMap,
    out: PathBuf,
    data: PathBuf,
    synth: SynthConfig,
    train: TrainConfig,
    baseline: BaselineConfig,
    target: LatLon,
    wind_path: PathBuf,
    mask_path: PathBuf,
    hs_path: PathBuf,
    cv_k: usize,
    candidates: Vec<usize>,
}

fn load(common: &Common) -> Res<Run> {
    let text = fs::read_to_string(&common.config).map_err(|_| Fail::Missing(common.config.clone()))?;
    let mut kv = KvMap::parse(&text)?;
    if let Some(s) = common.seed {
        kv.set("seed", s);
    }
    let out = match &common.out {
        Some(p) => p.clone(),
        None => PathBuf::from(kv.take_or("out_dir", "out".to_string())?),
    };
    // consumed either way, so a config may carry it alongside --out
    kv.take::<String>("out_dir")?;
    let data = kv.take::<String>("data_dir")?.map(PathBuf::from).unwrap_or_else(|| out.clone());
    let path = |key: &str, default: &str| -> Res<PathBuf> {
        Ok(kv.take::<String>(key)?.map(PathBuf::from).unwrap_or_else(|| data.join(default)))
    };
    let wind_path = path("wind_path", WIND_FILE)?;
    let mask_path = path("mask_path", MASK_FILE)?;
    let hs_path = path("hs_path", HS_FILE)?;
    let synth = SynthConfig::from_kv(&kv)?;
    let train = TrainConfig::from_kv(&kv)?;
    train.validate()?;
    let d = BaselineConfig::default();
    let baseline = BaselineConfig {
        max_lag: kv.take_or("baseline_max_lag", d.max_lag)?,
        max_alpha: kv.take_or("baseline_max_alpha", d.max_alpha)?,
        ..d
    };
    let target = match (kv.take::<f64>("target_lat")?, kv.take::<f64>("target_lon")?) {
        (Some(lat), Some(lon)) => LatLon::new(lat, lon),
        (None, None) => synth.target,
        _ => return Err(Fail::Config("invalid config key `target_lat`: target_lat and target_lon go together".into())),
    };
    let cv_k = kv.take_or("cv_k", 5usize)?;
    let candidates = kv.take_list("tmax_candidates")?.unwrap_or_else(|| vec![2, 4, 6, 8, 10]);
    kv.reject_unknown()?;
    Ok(Run {
        kv,
        out,
        data,
        synth,
        train,
        baseline,
        target,
        wind_path,
        mask_path,
        hs_path,
        cv_k,
        candidates,
    })
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

fn require(path: &Path) -> Res<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Fail::Missing(path.to_path_buf()))
    }
}

/// Checks an input against any manifest in its directory that declares it
/// as an output, then returns its checksum.
fn verify(path: &Path) -> Res<String> {
    require(path)?;
    let found = hex(fnv1a64_file(path).map_err(Fail::from)?);
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let key = format!("output.{name}");
    if let Ok(entries) = fs::read_dir(dir) {
        let mut manifests: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "manifest"))
            .collect();
        manifests.sort();
        for m in manifests {
            let Ok(text) = fs::read_to_string(&m) else { continue };
            let Ok(kv) = KvMap::parse(&text) else { continue };
            if let Some(declared) = kv.get(&key) {
                if declared != found {
                    return Err(Fail::Checksum {
                        path: path.to_path_buf(),
                        declared: declared.to_string(),
                        found,
                    });
                }
            }
        }
    }
    Ok(found)
}

/// Accumulates the manifest of one command.
struct Manifest {
    command: &'static str,
    kv: KvMap,
}

impl Manifest {
    fn new(command: &'static str) -> Self {
        let mut kv = KvMap::new();
        kv.set("command", command);
        kv.set("version", env!("CARGO_PKG_VERSION"));
        Self { command, kv }
    }

    fn input(&mut self, path: &Path) -> Res<()> {
        let sum = verify(path)?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        self.kv.set(&format!("input.{name}.path"), path.display());
        self.kv.set(&format!("input.{name}"), sum);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Res<()> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        self.kv.set(&format!("output.{name}"), hex(fnv1a64_file(path)?));
        Ok(())
    }

    /// Writes the config echo and the manifest into `dir`.
    fn finish(self, run: &Run) -> Res<()> {
        fs::write(run.out.join(format!("{}.config", self.command)), run.kv.render())?;
        fs::write(run.out.join(format!("{}.manifest", self.command)), self.kv.render())?;
        Ok(())
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> swellcast_core::Result<()>) -> Res<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn feature_options(run: &Run) -> FeatureOptions {
    FeatureOptions {
        step_km: run.synth.step_km,
        fetch_cap_km: run.synth.fetch_cap_km,
        convention: run.synth.convention,
    }
}

fn cmd_synth(run: &Run) -> Res<()> {
    let out = generate(&run.synth)?;
    out.write_dir(&run.out)?;
    let mut m = Manifest::new("synth");
    for f in [WIND_FILE, MASK_FILE, HS_FILE, TRUTH_FILE] {
        m.output(&run.out.join(f))?;
    }
    println!(
        "T={} p={} storms={} kernel_terms={} max_lag={}",
        run.synth.t_steps,
        out.sea_points.len(),
        run.synth.storms,
        out.truth.len(),
        run.synth.max_lag()
    );
    m.finish(run)
}

fn cmd_features(run: &Run) -> Res<()> {
    let mut m = Manifest::new("features");
    m.input(&run.wind_path)?;
    m.input(&run.mask_path)?;
    let wind = WindGrid::load(&run.wind_path)?;
    let mask = LandMask::load(&run.mask_path)?;
    let fs = FeatureSet::build(&wind, &mask, run.target, &feature_options(run))?;
    let path = run.out.join(FEATURES_FILE);
    fs.save(&path)?;
    m.output(&path)?;
    println!("T={} p={} local_valid={}", fs.n_times(), fs.n_points(), fs.local_valid.iter().filter(|v| **v).count());
    m.finish(run)
}

fn dataset(run: &Run, m: &mut Manifest) -> Res<Dataset> {
    let fpath = run.data.join(FEATURES_FILE);
    m.input(&fpath)?;
    m.input(&run.hs_path)?;
    let fs = FeatureSet::load(&fpath)?;
    let hs = HsSeries::load(&run.hs_path)?;
    Ok(Dataset::join(&fs, &hs)?)
}

fn split(run: &Run, ds: &Dataset) -> Split {
    Split::holdout(ds.len(), run.train.val_fraction)
}

fn load_stage1(run: &Run, m: &mut Manifest) -> Res<Stage1Model> {
    let p = run.data.join(STAGE1_FILE);
    m.input(&p)?;
    let s1 = Stage1Model::from_checkpoint(&Checkpoint::load(&p)?)?;
    if s1.t_max != run.train.t_max {
        return Err(Fail::Config(format!(
            "invalid config key `t_max`: stage 1 in {} was trained with t_max {}",
            p.display(),
            s1.t_max
        )));
    }
    Ok(s1)
}

fn cmd_train1(run: &Run) -> Res<()> {
    let mut m = Manifest::new("train1");
    let ds = dataset(run, &mut m)?;
    let (s1, curve, adam) = train_stage1(&ds, &split(run, &ds), &run.train)?;
    let ck = run.out.join(STAGE1_FILE);
    s1.to_checkpoint(&run.kv.render(), run.train.seed, Some(adam)).save(&ck)?;
    let log = run.out.join("stage1_loss.csv");
    write_file(&log, |w| curve.write_csv(w))?;
    m.output(&ck)?;
    m.output(&log)?;
    println!("stage 1: {} epochs, {} steps, best epoch {} (val {:.6})", curve.epochs.len(), curve.steps, curve.best_epoch, curve.best_val());
    m.finish(run)
}

fn cmd_train2(run: &Run) -> Res<()> {
    let mut m = Manifest::new("train2");
    let s1 = load_stage1(run, &mut m)?;
    let ds = dataset(run, &mut m)?;
    let (s2, curve, adam) = train_stage2(&s1, &ds, &split(run, &ds), &run.train)?;
    let ck = run.out.join(STAGE2_FILE);
    s2.to_checkpoint(&run.kv.render(), run.train.seed, Some(adam)).save(&ck)?;
    let log = run.out.join("stage2_loss.csv");
    write_file(&log, |w| curve.write_csv(w))?;
    m.output(&ck)?;
    m.output(&log)?;
    println!("stage 2: {} epochs, {} steps, best epoch {} (val {:.6})", curve.epochs.len(), curve.steps, curve.best_epoch, curve.best_val());
    m.finish(run)
}

fn cmd_eval(run: &Run) -> Res<()> {
    let mut m = Manifest::new("eval");
    let s1 = load_stage1(run, &mut m)?;
    let p2 = run.data.join(STAGE2_FILE);
    m.input(&p2)?;
    let s2 = Stage2Model::from_checkpoint(&Checkpoint::load(&p2)?)?;
    let ds = dataset(run, &mut m)?;
    let sp = split(run, &ds);
    let pred = predict_samples(&s1, &s2, &ds, &sp.val)?;
    let two = metrics(&pred.obs, &pred.pred)?.with_label("two-stage");
    let base = baseline_weather_window(&ds, &sp, &run.baseline)?;

    let report = run.out.join("report.csv");
    write_file(&report, |w| {
        writeln!(w, "method,r,rmse,bias")?;
        for r in [&two, &base.report] {
            writeln!(w, "{},{},{},{}", r.label, r.r, r.rmse, r.bias)?;
        }
        Ok(())
    })?;
    let scatter = run.out.join("scatter.csv");
    write_file(&scatter, |w| {
        writeln!(w, "time,obs,pred")?;
        for ((t, o), p) in pred.idx.iter().zip(&pred.obs).zip(&pred.pred) {
            writeln!(w, "{},{},{}", format_time(ds.features.times[*t]), o, p)?;
        }
        Ok(())
    })?;
    let series = run.out.join("timeseries.csv");
    let base_at: std::collections::HashMap<usize, f64> = base.idx.iter().copied().zip(base.pred.iter().copied()).collect();
    write_file(&series, |w| {
        writeln!(w, "time,obs,two_stage,baseline")?;
        for ((t, o), p) in pred.idx.iter().zip(&pred.obs).zip(&pred.pred) {
            let b = base_at.get(t).map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", format_time(ds.features.times[*t]), o, p, b)?;
        }
        Ok(())
    })?;
    for p in [&report, &scatter, &series] {
        m.output(p)?;
    }
    for r in [&two, &base.report] {
        println!("{:<28} r {:.4}  rmse {:.4}  bias {:+.4}  n {}", r.label, r.r, r.rmse, r.bias, r.n);
    }
    debug_assert_eq!(base.report.label, BASELINE_LABEL);
    m.finish(run)
}

fn cmd_cv(run: &Run, jobs: usize) -> Res<()> {
    if jobs == 0 {
        return Err(Fail::Config("invalid value for --jobs: must be at least 1".into()));
    }
    let mut m = Manifest::new("cv");
    let ds = dataset(run, &mut m)?;
    // folds cover the training period only
    let sp = split(run, &ds);
    let train_end = sp.train.last().map_or(0, |r| r.end);
    let train_ds = ds.prefix(train_end)?;
    let curve = kfold_cv_tmax(&train_ds, &run.candidates, run.cv_k, &run.train, jobs)?;
    let cpath = run.out.join("cv_curve.csv");
    write_file(&cpath, |w| curve.write_csv(w))?;
    let fpath = run.out.join("cv_folds.csv");
    write_file(&fpath, |w| curve.write_folds_csv(w))?;
    m.output(&cpath)?;
    m.output(&fpath)?;
    for p in &curve.points {
        println!("t_max {:>3}  mean {:.4}  min {:.4}  max {:.4}", p.t_max, p.mean, p.min, p.max);
    }
    m.finish(run)
}

fn dispatch(cmd: Command) -> Res<()> {
    let (common, jobs) = match &cmd {
        Command::Synth(c) | Command::Features(c) | Command::Train1(c) | Command::Train2(c) | Command::Eval(c) => {
            (c.clone(), 1)
        }
        Command::Cv { common, jobs } => (common.clone(), *jobs),
    };
    let run = load(&common)?;
    fs::create_dir_all(&run.out)?;
    match cmd {
        Command::Synth(_) => cmd_synth(&run),
        Command::Features(_) => cmd_features(&run),
        Command::Train1(_) => cmd_train1(&run),
        Command::Train2(_) => cmd_train2(&run),
        Command::Eval(_) => cmd_eval(&run),
        Command::Cv { .. } => cmd_cv(&run, jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("swellcast: {e}");
            ExitCode::from(e.code())
        }
    }
}
