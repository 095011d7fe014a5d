//! The `mcdepth` command line.
//!
//! Every subcommand writes its artifacts plus one `manifest.txt` into
//! `--out`. Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 acceptance failure. Failures print one JSON error line on stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autodiff::gradcheck::{primitive_suites, SuiteResult};
use crate::cloud::{self, DEFAULT_Z_MIN};
use crate::error::{Error, Result};
use crate::experiment::{run_ab, AbConfig, AbOutcome, Corpus};
use crate::io::{self, Calibration, RunManifest};
use crate::loss::{composite_suite, LossMode};
use crate::metrics::{render_table, MetricsAccumulator, MetricsReport, TableRow};
use crate::raster::DepthKind;
use crate::simdata::{generate_split, DatasetProfile, DatasetTag, SimConfig};
use crate::stereo::{self, StereoRig};
use crate::train::{fit, initial_state, validate, FitOptions, TrainConfig, TrainData, TrainState, ValidationReport};

/// Relative error bound for the finite-difference suites.
pub const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "mcdepth", version, about = "Metric depth training toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sparse depth cap in meters [default: 80].
    #[arg(long, global = true)]
    pub depth_cap_sparse: Option<f64>,
    /// Dense depth cap in meters [default: 120].
    #[arg(long, global = true)]
    pub depth_cap_dense: Option<f64>,
    /// Dense-sparse consistency supervision.
    #[arg(long, global = true, value_enum)]
    pub consistency: Option<OnOff>,
    /// Keep the loss weights at their initial values.
    #[arg(long, global = true)]
    pub freeze_weights: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileName {
    Orchard,
    Stereo,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset directory.
    Gen {
        #[arg(long, value_enum, default_value = "orchard")]
        profile: ProfileName,
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Index of the first sample.
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Project a point cloud into the calibrated camera.
    Project {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        calib: PathBuf,
    },
    /// Block-match a rectified pair into disparity and depth.
    Stereo {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        /// Baseline in meters.
        #[arg(long)]
        baseline: f64,
        #[arg(long, default_value_t = 64)]
        max_disparity: usize,
        #[arg(long, default_value_t = 3)]
        block_radius: usize,
        #[arg(long, default_value_t = 1.0)]
        lr_threshold: f64,
    },
    /// Train on one or more dataset directories.
    Train {
        /// Dataset directory; repeat for several.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        /// Validation dataset directory.
        #[arg(long)]
        val: Option<PathBuf>,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score depth maps, or a checkpoint on a dataset directory.
    Eval {
        /// Predicted PFM file or directory of PFMs.
        #[arg(long, requires = "gt", conflicts_with = "checkpoint")]
        pred: Option<PathBuf>,
        /// Ground-truth PFM file or directory with matching names.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Which cap and report slot the ground truth uses.
        #[arg(long, value_enum, default_value = "sparse")]
        kind: KindName,
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        label: String,
    },
    /// Finite-difference checks of every primitive and the full loss.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Side-by-side table of two metrics files.
    Report { first: PathBuf, second: PathBuf },
    /// Consistency on versus off on a synthetic corpus.
    Ab {
        /// Seeds to run; defaults to `--seed`, or 1.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindName {
    Sparse,
    Dense,
}

/// Metrics of one run on up to three validation sets; the file `report` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetrics {
    pub label: String,
    pub sparse: Option<MetricsReport>,
    pub dense: Option<MetricsReport>,
    pub exact: Option<MetricsReport>,
}

impl RunMetrics {
    pub fn from_validation(label: impl Into<String>, v: &ValidationReport) -> Self {
        Self {
            label: label.into(),
            sparse: v.sparse,
            dense: v.dense,
            exact: v.exact,
        }
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join("metrics.txt") } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(&path, e.message().to_string()))
    }
}

/// Table of several runs, grouped by validation set.
pub fn comparison_table(runs: &[&RunMetrics]) -> String {
    let mut rows = Vec::new();
    for (data, pick) in [
        ("sparse", (|r: &RunMetrics| r.sparse) as fn(&RunMetrics) -> Option<MetricsReport>),
        ("dense", |r| r.dense),
        ("exact", |r| r.exact),
    ] {
        for r in runs {
            if let Some(m) = pick(r) {
                rows.push((data, r.label.as_str(), m));
            }
        }
    }
    let rows: Vec<TableRow> = rows
        .iter()
        .map(|(data, label, m)| TableRow { data, label, report: m })
        .collect();
    render_table(&rows)
}

/// How a subcommand ended when it did not error.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Success,
    AcceptanceFailed(String),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}

fn error_kind(code: i32) -> &'static str {
    match code {
        2 => "config",
        3 => "data",
        _ => "acceptance",
    }
}

fn error_line(code: i32, message: &str) -> String {
    serde_json::json!({ "error": error_kind(code), "exit_code": code, "message": message }).to_string()
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(Status::Success) => 0,
        Ok(Status::AcceptanceFailed(msg)) => {
            eprintln!("{}", error_line(4, &msg));
            4
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}", error_line(code, &e.to_string()));
            code
        }
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let c = &cli.common;
    match &cli.command {
        Command::Gen { profile, count, start } => cmd_gen(c, *profile, *count, *start),
        Command::Project { cloud, calib } => cmd_project(c, cloud, calib),
        Command::Stereo {
            left,
            right,
            calib,
            baseline,
            max_disparity,
            block_radius,
            lr_threshold,
        } => {
            let k = Calibration::read(calib)?.intrinsics()?;
            let rig = StereoRig {
                intrinsics: k,
                baseline: *baseline,
                max_disparity: *max_disparity,
                block_radius: *block_radius,
                lr_threshold: *lr_threshold,
            };
            cmd_stereo(c, left, right, calib, &rig)
        }
        Command::Train { data, val, resume } => cmd_train(c, data, val.as_deref(), resume.as_deref()),
        Command::Eval {
            pred,
            gt,
            kind,
            checkpoint,
            data,
            label,
        } => match (pred, gt, checkpoint, data) {
            (Some(p), Some(g), None, _) => cmd_eval_maps(c, p, g, *kind, label),
            (None, _, Some(ck), Some(d)) => cmd_eval_checkpoint(c, ck, d, label),
            _ => Err(Error::Config("eval needs --pred and --gt, or --checkpoint and --data".into())),
        },
        Command::Gradcheck { trials } => cmd_gradcheck(c, *trials),
        Command::Report { first, second } => cmd_report(c, first, second),
        Command::Ab { seeds } => cmd_ab(c, seeds),
    }
}

fn out_dir(c: &Common) -> Result<&Path> {
    let dir = c.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn config_text(c: &Common) -> Result<Option<String>> {
    c.config
        .as_ref()
        .map(|p| fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
        .transpose()
}

fn parse_config<T: serde::de::DeserializeOwned>(c: &Common) -> Result<Option<T>> {
    match config_text(c)? {
        Some(t) => toml::from_str(&t)
            .map(Some)
            .map_err(|e| Error::Config(format!("{}: {}", c.config.as_ref().unwrap().display(), e.message()))),
        None => Ok(None),
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<String> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(name.to_string())
}

fn finish(dir: &Path, mut m: RunManifest, started: Instant) -> Result<()> {
    m.wall_time_s = started.elapsed().as_secs_f64();
    m.write(dir)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Generation settings read from `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub sim: SimConfig,
    /// Replaces the `--profile` preset when given.
    pub profile: Option<DatasetProfile>,
}

fn cmd_gen(c: &Common, profile: ProfileName, count: usize, start: usize) -> Result<Status> {
    let t0 = Instant::now();
    let dir = out_dir(c)?;
    let mut cfg: GenConfig = parse_config(c)?.unwrap_or_default();
    if let Some(cap) = c.depth_cap_sparse {
        cfg.sim.sparse_cap = cap;
    }
    if let Some(cap) = c.depth_cap_dense {
        cfg.sim.dense_cap = cap;
    }
    let profile = cfg.profile.clone().unwrap_or_else(|| match profile {
        ProfileName::Orchard => DatasetProfile::orchard(60.0),
        ProfileName::Stereo => DatasetProfile::stereo(68.0, 0.2),
    });
    if count == 0 {
        return Err(Error::Config("--count must be positive".into()));
    }
    let seed = c.seed.unwrap_or(0);
    let records = generate_split(&cfg.sim, &profile, seed, start..start + count).map_err(as_config)?;
    let (samples, files) = io::write_dataset(dir, &records, start, &profile.extrinsics())?;
    let effective = toml::to_string(&GenConfig {
        sim: cfg.sim,
        profile: Some(profile),
    })
    .map_err(|e| Error::invalid(e.to_string()))?;
    let mut m = RunManifest::new("gen", &effective, seed);
    m.outputs = files;
    m.outputs.push(write_text(dir, "config.toml", &effective)?);
    m.samples = samples;
    finish(dir, m, t0)?;
    println!("wrote {count} samples to {}", dir.display());
    Ok(Status::Success)
}

/// Invalid generator settings are configuration errors, not data errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        e => e,
    }
}

fn cmd_project(c: &Common, cloud_path: &Path, calib_path: &Path) -> Result<Status> {
    let t0 = Instant::now();
    let dir = out_dir(c)?;
    let calib = Calibration::read(calib_path)?;
    let k = calib.intrinsics()?;
    let pc = io::read_cloud(cloud_path)?;
    let in_camera = if pc.frame == "camera" {
        pc
    } else {
        let t = calib
            .transforms()?
            .into_iter()
            .find(|t| t.from_frame == pc.frame && t.to_frame == "camera")
            .ok_or_else(|| Error::invalid(format!("calibration has no `{}` to camera extrinsic", pc.frame)))?;
        pc.transformed(&t)?
    };
    let cap = c.depth_cap_sparse.unwrap_or(cloud::DEFAULT_Z_MAX);
    let depth = cloud::project(&in_camera, &k, DEFAULT_Z_MIN, cap)?;
    io::write_pfm(dir.join("sparse.pfm"), &depth)?;
    let mut m = RunManifest::new("project", &format!("z_max = {cap}\n"), c.seed.unwrap_or(0));
    m.inputs = vec![display(cloud_path), display(calib_path)];
    m.outputs = vec!["sparse.pfm".into()];
    finish(dir, m, t0)?;
    println!("{} points, {} valid pixels", in_camera.len(), depth.valid_count());
    Ok(Status::Success)
}

fn cmd_stereo(c: &Common, left: &Path, right: &Path, calib: &Path, rig: &StereoRig) -> Result<Status> {
    let t0 = Instant::now();
    let dir = out_dir(c)?;
    rig.validate().map_err(as_config)?;
    let (l, r) = (io::read_image(left)?, io::read_image(right)?);
    let disp = stereo::match_pair(&l, &r, rig)?;
    let cap = c.depth_cap_dense.unwrap_or(stereo::DEFAULT_DENSE_CAP);
    let depth = stereo::disparity_to_depth(&disp, rig, cap);
    fs::write(dir.join("disparity.pfm"), io::encode_pfm(disp.width, disp.height, &disp.values))
        .map_err(|e| Error::io(dir.join("disparity.pfm"), e))?;
    io::write_pfm(dir.join("depth.pfm"), &depth)?;
    let settings = format!(
        "baseline = {}\nmax_disparity = {}\nblock_radius = {}\nlr_threshold = {}\nz_max = {cap}\n",
        rig.baseline, rig.max_disparity, rig.block_radius, rig.lr_threshold
    );
    let mut m = RunManifest::new("stereo", &settings, c.seed.unwrap_or(0));
    m.inputs = vec![display(left), display(right), display(calib)];
    m.outputs = vec!["disparity.pfm".into(), "depth.pfm".into()];
    finish(dir, m, t0)?;
    println!("{} of {} pixels matched", disp.valid_count(), disp.width * disp.height);
    Ok(Status::Success)
}

fn train_config(c: &Common, base: TrainConfig) -> Result<TrainConfig> {
    let mut tc = base;
    if let Some(s) = c.seed {
        tc.seed = s;
    }
    if let Some(cap) = c.depth_cap_sparse {
        tc.loss.sparse_cap = cap;
    }
    if let Some(cap) = c.depth_cap_dense {
        tc.loss.dense_cap = cap;
    }
    match c.consistency {
        Some(OnOff::On) => tc.loss.mode = LossMode::Consistency,
        Some(OnOff::Off) => tc.loss.mode = LossMode::SparseSilog,
        None => {}
    }
    tc.freeze_weights |= c.freeze_weights;
    tc.validate()?;
    Ok(tc)
}

fn mode_label(mode: LossMode) -> &'static str {
    match mode {
        LossMode::SparseSilog => "silog",
        LossMode::Consistency => "consistency",
    }
}

fn cmd_train(c: &Common, data_dirs: &[PathBuf], val: Option<&Path>, resume: Option<&Path>) -> Result<Status> {
    let t0 = Instant::now();
    let dir = out_dir(c)?;
    let base = match config_text(c)? {
        Some(t) => TrainConfig::from_toml(&t)?,
        None => TrainConfig::desk(),
    };
    let tc = train_config(c, base)?;
    let mut dense = Vec::new();
    let mut sparse = Vec::new();
    for d in data_dirs {
        for r in io::read_dataset(d)? {
            match r.dataset_tag {
                DatasetTag::DenseAndSparse => dense.push(r),
                DatasetTag::SparseOnly => sparse.push(r),
            }
        }
    }
    let val_records = val.map(io::read_dataset).transpose()?.unwrap_or_default();
    let data = TrainData {
        dense: &dense,
        sparse: &sparse,
    };
    let state = match resume {
        Some(p) => TrainState::load(p)?,
        None => initial_state(data, &tc)?,
    };
    let log_path = dir.join("train_log.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let out = fit(
        state,
        data,
        &tc,
        FitOptions {
            validation: &val_records,
            checkpoint_dir: Some(dir),
            log: Some(&mut log),
            until_epoch: None,
        },
    )?;
    out.state.save(&dir.join("final.ckpt"))?;
    let config_text = tc.to_toml()?;
    let mut m = RunManifest::new("train", &config_text, tc.seed);
    m.inputs = data_dirs.iter().map(|p| display(p)).chain(val.map(display)).chain(resume.map(display)).collect();
    m.outputs = (1..=out.state.epoch).map(|e| format!("epoch_{e:03}.ckpt")).collect();
    m.outputs.extend(["final.ckpt".to_string(), "train_log.jsonl".to_string()]);
    m.outputs.push(write_text(dir, "config.toml", &config_text)?);
    if let Some(v) = out.epochs.last().and_then(|e| e.validation) {
        let rm = RunMetrics::from_validation(mode_label(tc.loss.mode), &v);
        m.outputs.push(write_text(dir, "metrics.txt", &rm.to_text()?)?);
        print!("{}", comparison_table(&[&rm]));
    }
    finish(dir, m, t0)?;
    Ok(Status::Success)
}

/// `(name, path)` pairs: the file itself, or every `.pfm` in a directory.
fn pfm_files(p: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !p.is_dir() {
        return Ok(vec![(String::new(), p.to_path_buf())]);
    }
    let mut v: Vec<(String, PathBuf)> = fs::read_dir(p)
        .map_err(|e| Error::io(p, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|q| q.extension().is_some_and(|x| x == "pfm"))
        .map(|q| (q.file_name().unwrap().to_string_lossy().into_owned(), q))
        .collect();
    v.sort();
    Ok(v)
}

fn cmd_eval_maps(c: &Common, pred: &Path, gt: &Path, kind: KindName, label: &str) -> Result<Status> {
    let t0 = Instant::now();
    let (dk, cap) = match kind {
        KindName::Sparse => (DepthKind::Sparse, c.depth_cap_sparse.unwrap_or(cloud::DEFAULT_Z_MAX)),
        KindName::Dense => (DepthKind::Dense, c.depth_cap_dense.unwrap_or(stereo::DEFAULT_DENSE_CAP)),
    };
    let gts = pfm_files(gt)?;
    if gts.is_empty() {
        return Err(Error::invalid(format!("no PFM files in {}", gt.display())));
    }
    let mut acc = MetricsAccumulator::default();
    for (name, g) in &gts {
        let p = if pred.is_dir() { pred.join(name) } else { pred.to_path_buf() };
        let (pm, gm) = (io::read_pfm(&p, DepthKind::Dense)?, io::read_pfm(g, dk)?);
        if !pm.same_shape(&gm) {
            return Err(Error::shape("eval", format!("{} vs {}", p.display(), g.display())));
        }
        acc.add(&pm.values, &gm.values, cap)?;
    }
    let report = acc.finish()?;
    let rm = RunMetrics {
        label: label.into(),
        sparse: (kind == KindName::Sparse).then_some(report),
        dense: (kind == KindName::Dense).then_some(report),
        exact: None,
    };
    emit_metrics(c, "eval", &rm, vec![display(pred), display(gt)], &format!("z_cap = {cap}\n"), t0)
}

fn emit_metrics(c: &Common, command: &str, rm: &RunMetrics, inputs: Vec<String>, settings: &str, t0: Instant) -> Result<Status> {
    let text = rm.to_text()?;
    print!("{text}");
    if c.out.is_some() {
        let dir = out_dir(c)?;
        let mut m = RunManifest::new(command, settings, c.seed.unwrap_or(0));
        m.inputs = inputs;
        m.outputs = vec![write_text(dir, "metrics.txt", &text)?];
        finish(dir, m, t0)?;
    }
    Ok(Status::Success)
}

fn cmd_eval_checkpoint(c: &Common, ck: &Path, data: &Path, label: &str) -> Result<Status> {
    let t0 = Instant::now();
    let state = TrainState::load(ck)?;
    let records = io::read_dataset(data)?;
    let (sc, dc) = (
        c.depth_cap_sparse.unwrap_or(cloud::DEFAULT_Z_MAX),
        c.depth_cap_dense.unwrap_or(stereo::DEFAULT_DENSE_CAP),
    );
    let v = validate(&state, &records, sc, dc)?;
    let rm = RunMetrics::from_validation(label, &v);
    let settings = format!("sparse_cap = {sc}\ndense_cap = {dc}\n");
    emit_metrics(c, "eval", &rm, vec![display(ck), display(data)], &settings, t0)
}

fn cmd_gradcheck(c: &Common, trials: usize) -> Result<Status> {
    let t0 = Instant::now();
    if trials == 0 {
        return Err(Error::Config("--trials must be positive".into()));
    }
    let seed = c.seed.unwrap_or(1);
    let mut suites = primitive_suites(trials, seed)?;
    suites.push(composite_suite(trials, seed)?);
    let text = gradcheck_report(&suites);
    print!("{text}");
    if c.out.is_some() {
        let dir = out_dir(c)?;
        let mut m = RunManifest::new("gradcheck", &format!("trials = {trials}\n"), seed);
        m.outputs = vec![write_text(dir, "gradcheck.txt", &text)?];
        finish(dir, m, t0)?;
    }
    let failed: Vec<&str> = suites.iter().filter(|s| !s.passed(GRADCHECK_TOL)).map(|s| s.name).collect();
    Ok(if failed.is_empty() {
        Status::Success
    } else {
        Status::AcceptanceFailed(format!("gradient check failed for {}", failed.join(", ")))
    })
}

pub fn gradcheck_report(suites: &[SuiteResult]) -> String {
    let mut s = String::new();
    for r in suites {
        let verdict = if r.passed(GRADCHECK_TOL) { "pass" } else { "FAIL" };
        s.push_str(&format!("{:<16} trials {:>4} max_rel_err {:.3e} {verdict}\n", r.name, r.trials, r.max_rel_err));
    }
    s
}

fn cmd_report(c: &Common, first: &Path, second: &Path) -> Result<Status> {
    let t0 = Instant::now();
    let (a, b) = (RunMetrics::read(first)?, RunMetrics::read(second)?);
    let text = comparison_table(&[&a, &b]);
    print!("{text}");
    if c.out.is_some() {
        let dir = out_dir(c)?;
        let mut m = RunManifest::new("report", "", 0);
        m.inputs = vec![display(first), display(second)];
        m.outputs = vec![write_text(dir, "report.txt", &text)?];
        finish(dir, m, t0)?;
    }
    Ok(Status::Success)
}

fn cmd_ab(c: &Common, seeds: &[u64]) -> Result<Status> {
    let t0 = Instant::now();
    let dir = out_dir(c)?;
    let mut cfg: AbConfig = parse_config(c)?.unwrap_or_default();
    if c.consistency.is_some() {
        log::warn!("ab always trains both arms; --consistency is ignored");
    }
    cfg.train = train_config(
        &Common {
            consistency: None,
            ..c.clone()
        },
        cfg.train,
    )?;
    let seeds: Vec<u64> = if seeds.is_empty() { vec![c.seed.unwrap_or(1)] } else { seeds.to_vec() };
    let config_text = toml::to_string(&cfg).map_err(|e| Error::invalid(e.to_string()))?;
    let mut m = RunManifest::new("ab", &config_text, seeds[0]);
    m.outputs.push(write_text(dir, "config.toml", &config_text)?);
    let mut outcomes: Vec<AbOutcome> = Vec::new();
    for &seed in &seeds {
        let corpus = Corpus::generate(&cfg, seed).map_err(as_config)?;
        let out = run_ab(&cfg, &corpus, seed)?;
        println!("seed {seed}");
        print!("{}", out.table());
        println!(
            "dense rmse gain {:.4} (need >= {}), sparse d1 change {:+.4} (allow +/-{}): {}",
            out.dense_rmse_gain,
            cfg.min_dense_rmse_gain,
            out.sparse_delta1_change,
            cfg.max_sparse_delta1_change,
            if out.passed { "pass" } else { "FAIL" }
        );
        for (arm, row) in [("silog", &out.baseline), ("consistency", &out.consistency)] {
            let rm = RunMetrics {
                label: arm.into(),
                sparse: Some(row.sparse),
                dense: Some(row.dense),
                exact: row.exact,
            };
            m.outputs.push(write_text(dir, &format!("seed_{seed}.{arm}.metrics.txt"), &rm.to_text()?)?);
        }
        m.outputs.push(write_text(dir, &format!("seed_{seed}.table.txt"), &out.table())?);
        outcomes.push(out);
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        outcomes: &'a [AbOutcome],
    }
    let summary = toml::to_string(&Summary { outcomes: &outcomes }).map_err(|e| Error::invalid(e.to_string()))?;
    m.outputs.push(write_text(dir, "summary.txt", &summary)?);
    finish(dir, m, t0)?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.seed.to_string()).collect();
    Ok(if failed.is_empty() {
        Status::Success
    } else {
        Status::AcceptanceFailed(format!("direction not met for seed(s) {}", failed.join(", ")))
    })
}
