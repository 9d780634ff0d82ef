//! Batch pipeline commands behind the `mocomplete` binary: synthetic data
//! generation, preprocessing, training, reconstruction, and reporting.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 usage or
//! configuration error, 2 data error, 3 numerical failure. A report run with
//! some failed cells exits 2; one where every cell failed exits 3.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_mask, fill_missing, gen_limb_mask, gen_perframe_mask, gen_random_mask, hip_center,
    mean_trajectories, resample, synth, ActionSequence, Dataset, FillStrategy, MaskSpec,
    MeanTrajectories,
};
use crate::eval::{self, ExperimentReport, GridArtifacts, GridConfig, GridExport, Method};
use crate::invert::{feedforward_reconstruct, latent_optimize, nearest_joint_baseline, InversionConfig};
use crate::models::{
    load_spec, Autoencoder, AutoencoderSpec, ClassifierSpec, FramewiseAutoencoder, FramewiseSpec,
    TcnClassifier,
};
use crate::nn::array::Tensor;
use crate::nn::{checkpoint, AdamState};
use crate::sparse::{learn_dictionary, DictLearnConfig, Dictionary};
use crate::train::{
    run_ae_training, train_classifier, LossMode, MaskAssignment, TrainConfig, TrainLog,
};
use crate::util::{atomic_write, derive_seed, sha256_hex};
use crate::{Error, Result};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser)]
#[command(
    name = "mocomplete",
    about = "Recover unobserved joint trajectories in 3D action sequences via latent-space optimization over a temporal-convolutional prior",
    version
)]
pub struct Cli {
    /// Worker threads for parallel sections (grid cells, inversions).
    #[arg(long, global = true, default_value_t = 4)]
    pub workers: usize,
    /// Master seed; overrides seeds carried in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate the synthetic action dataset (raw, unnormalized).
    Synth(SynthArgs),
    /// Resample, hip-center, and compute train-set mean trajectories.
    Prepare(PrepareArgs),
    /// Train an action autoencoder (full / ambient / denoising).
    TrainAe(TrainAeArgs),
    /// Train the TCN evaluation classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Train the frame-wise (pose prior) autoencoder baseline.
    TrainFramewise(TrainFramewiseArgs),
    /// Learn the sparse-coding dictionary.
    TrainDict(TrainDictArgs),
    /// Complete masked test sequences with one method.
    Reconstruct(ReconstructArgs),
    /// Run the OTP experiment grid and write report files.
    Report(ReportArgs),
    /// Unseen-class protocol: class-disjoint train/test, averaged RMSE.
    UnseenClass(UnseenClassArgs),
    /// Export penultimate-layer classifier features as CSV.
    ExportFeatures(ExportFeaturesArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub train: usize,
    #[arg(long, default_value_t = 120)]
    pub test: usize,
    /// Resampling target recorded in the manifest.
    #[arg(long, default_value_t = 64)]
    pub target_frames: usize,
    #[arg(long, default_value_t = 48)]
    pub frames_min: usize,
    #[arg(long, default_value_t = 80)]
    pub frames_max: usize,
    #[arg(long, default_value_t = 0.004)]
    pub noise: f64,
}

#[derive(Args)]
pub struct PrepareArgs {
    /// Raw dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the manifest's resampling target.
    #[arg(long)]
    pub target_frames: Option<usize>,
}

/// Run config for autoencoder training: the optimizer schedule plus the
/// masking protocol.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AeRunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// OTP of training masks; omit (or 100) for complete-data training.
    pub mask_otp: Option<f64>,
    #[serde(default)]
    pub per_frame_masks: bool,
}

#[derive(Args)]
pub struct TrainAeArgs {
    /// Prepared dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Autoencoder spec (JSON).
    #[arg(long)]
    pub model_spec: PathBuf,
    /// Run config (JSON): training schedule + mask protocol.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Resume from this run's training state.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub model_spec: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Train on masked + filled sequences at this OTP (the
    /// classify-on-incomplete baseline).
    #[arg(long)]
    pub mask_otp: Option<f64>,
}

#[derive(Args)]
pub struct TrainFramewiseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Frame-wise spec (JSON).
    #[arg(long)]
    pub model_spec: PathBuf,
    /// Training config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainDictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Dictionary learning config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Autoencoder training output directory (model.ckpt + stats.csv).
    #[arg(long)]
    pub ae: Option<PathBuf>,
    #[arg(long)]
    pub framewise: Option<PathBuf>,
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Random-mask OTP for the test masks.
    #[arg(long)]
    pub mask_otp: Option<f64>,
    /// Drop a named limb instead of random joints.
    #[arg(long)]
    pub mask_limb: Option<String>,
    /// Load masks from a JSON file (list of MaskSpec, one per sequence).
    #[arg(long)]
    pub mask_file: Option<PathBuf>,
    /// Draw independent masks per frame.
    #[arg(long)]
    pub per_frame: bool,
    /// Inversion config (JSON); defaults to 500 Adam iterations at lr 1.0.
    #[arg(long)]
    pub inversion_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mean-trajectory")]
    pub fill: FillArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Grid report config (JSON), see `ReportConfig`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct UnseenClassArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Unseen-class protocol config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ExportFeaturesArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Classifier training output directory or checkpoint file.
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum MethodArg {
    Feedforward,
    LatentOpt,
    Framewise,
    FramewiseOpt,
    Sparse,
    Nearest,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Feedforward => Method::Feedforward,
            MethodArg::LatentOpt => Method::LatentOpt,
            MethodArg::Framewise => Method::Framewise,
            MethodArg::FramewiseOpt => Method::FramewiseOpt,
            MethodArg::Sparse => Method::Sparse,
            MethodArg::Nearest => Method::Nearest,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum FillArg {
    MeanTrajectory,
    Zeros,
    NearestJoint,
}

impl From<FillArg> for FillStrategy {
    fn from(f: FillArg) -> FillStrategy {
        match f {
            FillArg::MeanTrajectory => FillStrategy::MeanTrajectory,
            FillArg::Zeros => FillStrategy::Zeros,
            FillArg::NearestJoint => FillStrategy::NearestJoint,
        }
    }
}

/// Report run config: the pure grid config plus artifact locations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportConfig {
    pub data: PathBuf,
    #[serde(default = "default_split")]
    pub split: String,
    pub grid: GridConfig,
    /// Train-OTP key -> autoencoder run directory.
    pub autoencoders: BTreeMap<String, PathBuf>,
    pub classifier: PathBuf,
    #[serde(default)]
    pub framewise: Option<PathBuf>,
    #[serde(default)]
    pub dictionary: Option<PathBuf>,
    #[serde(default)]
    pub incomplete_classifiers: BTreeMap<String, PathBuf>,
    /// Complete-data mean trajectory file (fallback fill stats).
    #[serde(default)]
    pub stats: Option<PathBuf>,
    /// Export reconstructions/SSMs for the first k sequences per cell.
    #[serde(default)]
    pub export_reconstructions: usize,
    #[serde(default)]
    pub export_ssms: usize,
}

fn default_split() -> String {
    "test".to_string()
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers.max(1)).build_global();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Every command writes one of these next to its artifacts; each written
/// artifact is listed in `outputs`.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    seed: Option<u64>,
    config_hash: Option<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    crate_version: String,
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

struct ManifestBuilder {
    manifest: RunManifest,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    fn new(command: &str, out_dir: &Path, seed: Option<u64>) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                seed,
                config_hash: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                started_unix_ms: now_ms(),
                finished_unix_ms: 0,
            },
            out_dir: out_dir.to_path_buf(),
        }
    }

    fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    fn config_hash(&mut self, hash: String) {
        self.manifest.config_hash = Some(hash);
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finished_unix_ms = now_ms();
        let path = self.out_dir.join("run_manifest.json");
        atomic_write(&path, serde_json::to_string_pretty(&self.manifest)?.as_bytes())
    }
}

/// Resolve a data path against `MOCOMPLETE_DATA_ROOT` when it does not exist
/// as given.
fn resolve_data_path(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Ok(root) = std::env::var("MOCOMPLETE_DATA_ROOT") {
        let candidate = Path::new(&root).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let path = resolve_data_path(path);
    let manifest_path = if path.is_dir() { path.join("manifest.json") } else { path };
    Dataset::load(&manifest_path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args, cli.seed),
        Command::Prepare(args) => cmd_prepare(args, cli.seed),
        Command::TrainAe(args) => cmd_train_ae(args, cli.seed),
        Command::TrainClassifier(args) => cmd_train_classifier(args, cli.seed),
        Command::TrainFramewise(args) => cmd_train_framewise(args, cli.seed),
        Command::TrainDict(args) => cmd_train_dict(args, cli.seed),
        Command::Reconstruct(args) => cmd_reconstruct(args, cli.seed),
        Command::Report(args) => cmd_report(args, cli.seed),
        Command::UnseenClass(args) => cmd_unseen_class(args, cli.seed),
        Command::ExportFeatures(args) => cmd_export_features(args),
    }
}

fn cmd_synth(args: SynthArgs, seed: Option<u64>) -> Result<i32> {
    let cfg = synth::SynthConfig {
        train: args.train,
        test: args.test,
        seed: seed.unwrap_or(synth::SynthConfig::default().seed),
        frames_min: args.frames_min,
        frames_max: args.frames_max,
        noise: args.noise,
    };
    if cfg.frames_min < 2 || cfg.frames_max < cfg.frames_min {
        return Err(Error::Config("frame range must satisfy 2 <= min <= max".into()));
    }
    let mut mb = ManifestBuilder::new("synth", &args.out, Some(cfg.seed));
    let data = synth::generate(&cfg);
    synth::write_raw_dataset(&args.out, &data, args.target_frames)?;
    mb.output(&args.out.join("manifest.json"));
    mb.output(&args.out.join("topology.json"));
    for i in 0..data.train.len() {
        mb.output(&args.out.join(format!("sequences/train_{i:04}.csv")));
    }
    for i in 0..data.test.len() {
        mb.output(&args.out.join(format!("sequences/test_{i:04}.csv")));
    }
    mb.finish()?;
    println!(
        "synthetic dataset: {} train + {} test sequences ({} classes) at {}",
        data.train.len(),
        data.test.len(),
        synth::CLASSES,
        args.out.display()
    );
    Ok(0)
}

fn cmd_prepare(args: PrepareArgs, seed: Option<u64>) -> Result<i32> {
    let manifest_path = resolve_data_path(&args.manifest);
    let dataset = Dataset::load(&manifest_path)?;
    let target = args.target_frames.unwrap_or(dataset.manifest.target_frames);
    let mut mb = ManifestBuilder::new("prepare", &args.out, seed);
    mb.input(&manifest_path);

    std::fs::create_dir_all(args.out.join("sequences"))?;
    let mut failures = Vec::new();
    let mut normalized = Vec::with_capacity(dataset.sequences.len());
    for (i, seq) in dataset.sequences.iter().enumerate() {
        match resample(seq, target).and_then(|s| hip_center(&s, &dataset.topology)) {
            Ok(s) => normalized.push(s),
            Err(e) => failures.push(format!("{}: {e}", dataset.manifest.sequences[i].path)),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("prepare: {f}");
        }
        return Err(Error::Data(format!("{} sequences failed preprocessing", failures.len())));
    }

    let mut out_manifest = dataset.manifest.clone();
    out_manifest.target_frames = target;
    for (i, (seq, entry)) in normalized.iter().zip(out_manifest.sequences.iter_mut()).enumerate() {
        let rel = format!("sequences/seq_{i:04}.csv");
        seq.write_csv(&args.out.join(&rel))?;
        mb.output(&args.out.join(&rel));
        entry.path = rel;
    }
    dataset.topology.save(&args.out.join("topology.json"))?;
    out_manifest.topology = "topology.json".to_string();
    out_manifest.save(&args.out.join("manifest.json"))?;
    mb.output(&args.out.join("topology.json"));
    mb.output(&args.out.join("manifest.json"));

    // complete-data mean trajectories over the train split
    let train_idx = out_manifest
        .splits
        .get("train")
        .ok_or_else(|| Error::Data("manifest has no train split".into()))?;
    let train: Vec<ActionSequence> = train_idx.iter().map(|&i| normalized[i].clone()).collect();
    let stats = mean_trajectories(&train, None)?;
    stats.save(&args.out.join("mean_traj.csv"))?;
    mb.output(&args.out.join("mean_traj.csv"));
    mb.finish()?;
    println!(
        "prepared {} sequences to N={target} at {}",
        normalized.len(),
        args.out.display()
    );
    Ok(0)
}

/// Names of the files an autoencoder training run leaves behind.
pub mod ae_files {
    pub const MODEL: &str = "model.ckpt";
    pub const STATE: &str = "train_state.ckpt";
    pub const STATS: &str = "stats.csv";
    pub const LOG: &str = "train_log.csv";
}

fn cmd_train_ae(args: TrainAeArgs, seed: Option<u64>) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let spec: AutoencoderSpec = load_spec(&args.model_spec)?;
    let mut run_cfg: AeRunConfig = read_json(&args.config)?;
    if let Some(s) = seed {
        run_cfg.train.seed = s;
    }
    let cfg_hash = sha256_hex(&serde_json::to_vec(&run_cfg)?);
    let train_seqs: Vec<ActionSequence> =
        dataset.split(&args.split)?.into_iter().cloned().collect();
    let hip = dataset.topology.hip_index;

    let mask_otp = run_cfg.mask_otp.filter(|o| *o < 100.0);
    if run_cfg.train.loss != LossMode::Full && mask_otp.is_none() {
        return Err(Error::Config(format!(
            "{:?} training requires mask_otp < 100 in the run config",
            run_cfg.train.loss
        )));
    }
    let assignment = match mask_otp {
        Some(otp) => MaskAssignment::Redrawn { otp, hip, per_frame: run_cfg.per_frame_masks },
        None => MaskAssignment::None,
    };

    let mut model = Autoencoder::<f32>::build(&spec, run_cfg.train.seed)?;
    let mut adam = AdamState::new(model.params(), run_cfg.train.learning_rate as f32);
    let mut start_iter = 0u64;
    if args.resume {
        start_iter = load_train_state(&args.out.join(ae_files::STATE), &mut model, &mut adam)?;
        println!("resuming from iteration {start_iter}");
    }

    let mut mb = ManifestBuilder::new("train-ae", &args.out, Some(run_cfg.train.seed));
    mb.input(&args.model_spec);
    mb.input(&args.config);
    mb.config_hash(cfg_hash.clone());

    let outcome =
        run_ae_training(&mut model, &train_seqs, assignment, &run_cfg.train, &mut adam, start_iter)?;

    let mut meta = BTreeMap::new();
    meta.insert("train_config_hash".to_string(), cfg_hash);
    meta.insert("loss_mode".to_string(), format!("{:?}", run_cfg.train.loss));
    if let Some(otp) = mask_otp {
        meta.insert("mask_otp".to_string(), format!("{otp}"));
        meta.insert("per_frame_masks".to_string(), format!("{}", run_cfg.per_frame_masks));
    }
    let model_path = args.out.join(ae_files::MODEL);
    model.save(&model_path, &meta)?;
    mb.output(&model_path);

    save_train_state(&args.out.join(ae_files::STATE), &model, &adam, run_cfg.train.iterations, &meta)?;
    mb.output(&args.out.join(ae_files::STATE));

    // fill statistics for test time: masked means in ambient/denoising mode,
    // complete-data means otherwise
    let stats = match outcome.stats {
        Some(s) => s,
        None => mean_trajectories(&train_seqs, None)?,
    };
    stats.save(&args.out.join(ae_files::STATS))?;
    mb.output(&args.out.join(ae_files::STATS));

    outcome.log.write_csv(&args.out.join(ae_files::LOG))?;
    mb.output(&args.out.join(ae_files::LOG));
    mb.finish()?;

    println!(
        "trained autoencoder ({:?}) for {} iterations; final loss {:.6}",
        run_cfg.train.loss,
        run_cfg.train.iterations,
        outcome.log.final_loss().unwrap_or(f64::NAN)
    );
    Ok(0)
}

/// Training state = parameters plus Adam moments, one checkpoint file.
fn save_train_state(
    path: &Path,
    model: &Autoencoder<f32>,
    adam: &AdamState<f32>,
    iteration: u64,
    extra_meta: &BTreeMap<String, String>,
) -> Result<()> {
    let (m, v) = adam.moments();
    let names: Vec<String> = model.params().iter().map(|(n, _, _)| n.to_string()).collect();
    let mut entries: Vec<(&str, &Tensor<f32>, bool)> = Vec::new();
    for (name, tensor, trainable) in model.params().iter() {
        entries.push((name, tensor, trainable));
    }
    let m_names: Vec<String> = names.iter().map(|n| format!("adam.m/{n}")).collect();
    let v_names: Vec<String> = names.iter().map(|n| format!("adam.v/{n}")).collect();
    for (i, t) in m.iter().enumerate() {
        entries.push((&m_names[i], t, false));
    }
    for (i, t) in v.iter().enumerate() {
        entries.push((&v_names[i], t, false));
    }
    let mut meta = extra_meta.clone();
    meta.insert("iteration".to_string(), iteration.to_string());
    meta.insert("adam_step".to_string(), adam.step_count().to_string());
    meta.insert("spec".to_string(), serde_json::to_string(model.spec())?);
    checkpoint::save_entries(path, &entries, &meta)
}

fn load_train_state(
    path: &Path,
    model: &mut Autoencoder<f32>,
    adam: &mut AdamState<f32>,
) -> Result<u64> {
    let (entries, meta) = checkpoint::load_entries(path)?;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, tensor, _) in model.params().iter() {
        let find = |key: &str| -> Result<Tensor<f32>> {
            entries
                .iter()
                .find(|e| e.name == key)
                .map(|e| e.tensor.clone())
                .ok_or_else(|| Error::Data(format!("{}: missing entry {key}", path.display())))
        };
        let value = find(name)?;
        if value.shape() != tensor.shape() {
            return Err(Error::Data(format!(
                "{}: parameter {name} has shape {:?}, model wants {:?}",
                path.display(),
                value.shape(),
                tensor.shape()
            )));
        }
        m.push(find(&format!("adam.m/{name}"))?);
        v.push(find(&format!("adam.v/{name}"))?);
    }
    // copy values in after all lookups succeeded
    let loaded: Vec<Tensor<f32>> = model
        .params()
        .iter()
        .map(|(name, _, _)| entries.iter().find(|e| e.name == name).unwrap().tensor.clone())
        .collect();
    for (id, tensor) in model.params_mut().ids().zip(loaded).collect::<Vec<_>>() {
        *model.params_mut().value_mut(id) = tensor;
    }
    let step: u64 = meta
        .get("adam_step")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("{}: missing adam_step", path.display())))?;
    adam.restore(m, v, step)?;
    meta.get("iteration")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("{}: missing iteration", path.display())))
}

fn cmd_train_classifier(args: TrainClassifierArgs, seed: Option<u64>) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let spec: ClassifierSpec = load_spec(&args.model_spec)?;
    let mut cfg: TrainConfig = read_json(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cfg_hash = sha256_hex(&serde_json::to_vec(&cfg)?);
    let mut train_seqs: Vec<ActionSequence> =
        dataset.split(&args.split)?.into_iter().cloned().collect();

    // classify-on-incomplete baseline: mask + fill the training set itself
    if let Some(otp) = args.mask_otp.filter(|o| *o < 100.0) {
        let hip = dataset.topology.hip_index;
        let masks: Vec<MaskSpec> = train_seqs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                gen_random_mask(s.joints(), hip, otp, derive_seed(cfg.seed, &format!("cls-mask/{i}")))
            })
            .collect::<Result<_>>()?;
        let stats = mean_trajectories(&train_seqs, Some(&masks))?;
        train_seqs = train_seqs
            .iter()
            .zip(&masks)
            .map(|(s, m)| {
                let y = apply_mask(s, m)?;
                fill_missing(&y, m, cfg.fill, Some(&stats))
            })
            .collect::<Result<_>>()?;
    }

    let mut mb = ManifestBuilder::new("train-classifier", &args.out, Some(cfg.seed));
    mb.input(&args.model_spec);
    mb.input(&args.config);
    mb.config_hash(cfg_hash.clone());

    let mut model = TcnClassifier::<f32>::build(&spec, cfg.seed)?;
    let log = train_classifier(&mut model, &train_seqs, &cfg)?;

    let mut meta = BTreeMap::new();
    meta.insert("train_config_hash".to_string(), cfg_hash);
    if let Some(otp) = args.mask_otp {
        meta.insert("mask_otp".to_string(), format!("{otp}"));
    }
    let model_path = args.out.join("model.ckpt");
    model.save(&model_path, &meta)?;
    mb.output(&model_path);
    log.write_csv(&args.out.join("train_log.csv"))?;
    mb.output(&args.out.join("train_log.csv"));
    mb.finish()?;

    println!(
        "trained classifier for {} iterations; final loss {:.6}",
        cfg.iterations,
        log.final_loss().unwrap_or(f64::NAN)
    );
    Ok(0)
}

fn cmd_train_framewise(args: TrainFramewiseArgs, seed: Option<u64>) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let spec: FramewiseSpec = load_spec(&args.model_spec)?;
    let mut cfg: TrainConfig = read_json(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let cfg_hash = sha256_hex(&serde_json::to_vec(&cfg)?);
    let train_seqs: Vec<ActionSequence> =
        dataset.split(&args.split)?.into_iter().cloned().collect();

    let mut mb = ManifestBuilder::new("train-framewise", &args.out, Some(cfg.seed));
    mb.input(&args.model_spec);
    mb.input(&args.config);
    mb.config_hash(cfg_hash.clone());

    let mut model = FramewiseAutoencoder::<f32>::build(&spec, cfg.seed)?;
    let log = crate::train::train_framewise(&mut model, &train_seqs, &cfg)?;

    let mut meta = BTreeMap::new();
    meta.insert("train_config_hash".to_string(), cfg_hash);
    let model_path = args.out.join("model.ckpt");
    model.save(&model_path, &meta)?;
    mb.output(&model_path);
    log.write_csv(&args.out.join("train_log.csv"))?;
    mb.output(&args.out.join("train_log.csv"));
    mb.finish()?;

    println!(
        "trained frame-wise autoencoder for {} iterations; final loss {:.6}",
        cfg.iterations,
        log.final_loss().unwrap_or(f64::NAN)
    );
    Ok(0)
}

fn cmd_train_dict(args: TrainDictArgs, seed: Option<u64>) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let mut cfg: DictLearnConfig = read_json(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rows: Vec<Vec<f64>> = dataset
        .split(&args.split)?
        .iter()
        .map(|s| crate::sparse::vectorize_sequence(s))
        .collect();
    let mut mb = ManifestBuilder::new("train-dict", &args.out, Some(cfg.seed));
    mb.input(&args.config);
    mb.config_hash(sha256_hex(&serde_json::to_vec(&cfg)?));

    let outcome = learn_dictionary(&rows, &cfg)?;
    for w in &outcome.warnings {
        eprintln!("train-dict: {w}");
    }
    let dict_path = args.out.join("dictionary.ckpt");
    outcome.dictionary.save(&dict_path)?;
    mb.output(&dict_path);

    let mut log = TrainLog::default();
    for (i, obj) in outcome.objective_log.iter().enumerate() {
        log.push(i as u64, f64::NAN, *obj);
    }
    log.write_csv(&args.out.join("train_log.csv"))?;
    mb.output(&args.out.join("train_log.csv"));
    mb.finish()?;
    println!(
        "learned dictionary: {} atoms of dimension {}",
        outcome.dictionary.atoms, outcome.dictionary.dim
    );
    Ok(0)
}

/// Load the artifacts of a `train-ae` run directory.
pub fn load_ae_dir(dir: &Path) -> Result<(Autoencoder<f32>, MeanTrajectories)> {
    let (model, _) = Autoencoder::load_with_embedded_spec(&dir.join(ae_files::MODEL))?;
    let stats = MeanTrajectories::load(&dir.join(ae_files::STATS))?;
    Ok((model, stats))
}

fn load_classifier_path(path: &Path) -> Result<TcnClassifier<f32>> {
    let file = if path.is_dir() { path.join("model.ckpt") } else { path.to_path_buf() };
    Ok(TcnClassifier::load_with_embedded_spec(&file)?.0)
}

#[derive(Serialize)]
struct ReconSidecar<'a> {
    method: &'a str,
    index: usize,
    label: Option<usize>,
    config_hash: &'a str,
    mask: &'a MaskSpec,
    objective_initial: Option<f64>,
    objective_best: Option<f64>,
    trace: Option<&'a [f64]>,
}

fn cmd_reconstruct(args: ReconstructArgs, seed: Option<u64>) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let seqs = dataset.split(&args.split)?;
    let hip = dataset.topology.hip_index;
    let seed = seed.unwrap_or(0);
    let inversion: InversionConfig = match &args.inversion_config {
        Some(p) => read_json(p)?,
        None => InversionConfig::default(),
    };
    let fill: FillStrategy = args.fill.into();
    let method: Method = args.method.into();

    // masks: explicit file > limb > random otp
    let masks: Vec<MaskSpec> = if let Some(file) = &args.mask_file {
        let loaded: Vec<MaskSpec> = read_json(file)?;
        if loaded.len() != seqs.len() {
            return Err(Error::Config(format!(
                "mask file has {} masks for {} sequences",
                loaded.len(),
                seqs.len()
            )));
        }
        for m in &loaded {
            m.validate()?;
        }
        loaded
    } else if let Some(limb) = &args.mask_limb {
        let mask = gen_limb_mask(&dataset.topology, limb)?;
        vec![mask; seqs.len()]
    } else if let Some(otp) = args.mask_otp {
        seqs.iter()
            .enumerate()
            .map(|(i, s)| {
                let ms = derive_seed(seed, &format!("recon-mask/{i}"));
                if args.per_frame {
                    gen_perframe_mask(s.joints(), hip, s.frames(), otp, ms)
                } else {
                    gen_random_mask(s.joints(), hip, otp, ms)
                }
            })
            .collect::<Result<_>>()?
    } else {
        return Err(Error::Config("one of --mask-otp, --mask-limb, --mask-file is required".into()));
    };

    let ae = match &args.ae {
        Some(dir) => Some(load_ae_dir(dir)?),
        None => None,
    };
    let framewise = match &args.framewise {
        Some(dir) => {
            let file = if dir.is_dir() { dir.join("model.ckpt") } else { dir.clone() };
            Some(FramewiseAutoencoder::load_with_embedded_spec(&file)?.0)
        }
        None => None,
    };
    let dictionary = match &args.dict {
        Some(p) => {
            let file = if p.is_dir() { p.join("dictionary.ckpt") } else { p.clone() };
            Some(Dictionary::load(&file)?)
        }
        None => None,
    };

    let cfg_bytes = serde_json::to_vec(&(
        method.name(),
        &inversion,
        args.mask_otp,
        &args.mask_limb,
        args.per_frame,
        seed,
    ))?;
    let config_hash = sha256_hex(&cfg_bytes);

    let mut mb = ManifestBuilder::new("reconstruct", &args.out, Some(seed));
    mb.config_hash(config_hash.clone());
    std::fs::create_dir_all(&args.out)?;

    for (i, (x, mask)) in seqs.iter().zip(&masks).enumerate() {
        let y = apply_mask(x, mask)?;
        let mut objective_initial = None;
        let mut objective_best = None;
        let mut trace: Option<Vec<f64>> = None;
        let xhat: ActionSequence = match method {
            Method::Nearest => nearest_joint_baseline(&y, mask)?,
            Method::Sparse => {
                let dict = dictionary
                    .as_ref()
                    .ok_or_else(|| Error::Config("--dict is required for sparse".into()))?;
                let vec = crate::sparse::vectorize_sequence(&y);
                let observed = eval::coordinate_mask(mask, x.frames());
                let code =
                    crate::sparse::omp_encode(&vec, dict, Some(&observed), &Default::default())?;
                crate::sparse::devectorize_sequence(
                    crate::sparse::sc_reconstruct(&code, dict),
                    x.joints(),
                    x.frames(),
                )?
            }
            Method::Framewise => {
                let model = framewise
                    .as_ref()
                    .ok_or_else(|| Error::Config("--framewise is required".into()))?;
                let stats_owned;
                let stats = match &ae {
                    Some((_, s)) => Some(s),
                    None => {
                        stats_owned = try_dataset_stats(&dataset);
                        stats_owned.as_ref()
                    }
                };
                let filled = fill_missing(&y, mask, fill, stats)?;
                let frames = crate::invert::array_to_frames(&filled.to_array3::<f32>());
                let out = model.reconstruct_frames(&frames)?;
                ActionSequence::from_array3(&crate::invert::frames_to_array(&out), 0, x.joints())?
            }
            Method::FramewiseOpt => {
                let model = framewise
                    .as_ref()
                    .ok_or_else(|| Error::Config("--framewise is required".into()))?;
                let stats_owned = try_dataset_stats(&dataset);
                let filled = fill_missing(&y, mask, fill, stats_owned.as_ref())?;
                let frames = crate::invert::array_to_frames(&filled.to_array3::<f32>());
                let (zf, _) = model.encode_frames(&frames)?;
                let z0 = crate::nn::array::Mat::from_vec(1, zf.rows() * zf.cols(), zf.data().to_vec())?;
                let dec = crate::invert::FramewiseSeqDecoder { model, frames: x.frames() };
                let res = latent_optimize(&y.to_array3::<f32>(), mask, &dec, &z0, &inversion)?;
                objective_initial = Some(res.initial_objective);
                objective_best = Some(res.objective);
                trace = Some(res.trace);
                ActionSequence::from_array3(&res.x_hat, 0, x.joints())?
            }
            Method::Feedforward | Method::LatentOpt => {
                let (model, stats) = ae
                    .as_ref()
                    .ok_or_else(|| Error::Config("--ae is required for this method".into()))?;
                let filled = fill_missing(&y, mask, fill, Some(stats))?;
                let (ff, z0) = feedforward_reconstruct(&filled.to_array3::<f32>(), model)?;
                if method == Method::Feedforward {
                    ActionSequence::from_array3(&ff, 0, x.joints())?
                } else {
                    let res = latent_optimize(&y.to_array3::<f32>(), mask, model, &z0, &inversion)?;
                    objective_initial = Some(res.initial_objective);
                    objective_best = Some(res.objective);
                    trace = Some(res.trace);
                    ActionSequence::from_array3(&res.x_hat, 0, x.joints())?
                }
            }
            Method::ClassifyIncomplete => {
                return Err(Error::Config(
                    "classify-incomplete is a report-grid method, not a reconstruction".into(),
                ))
            }
        };

        let mut out_seq = xhat;
        out_seq.label = x.label;
        let csv_path = args.out.join(format!("recon_{i:04}.csv"));
        out_seq.write_csv(&csv_path)?;
        mb.output(&csv_path);

        let sidecar = ReconSidecar {
            method: method.name(),
            index: i,
            label: x.label,
            config_hash: &config_hash,
            mask,
            objective_initial,
            objective_best,
            trace: trace.as_deref(),
        };
        let json_path = args.out.join(format!("recon_{i:04}.json"));
        atomic_write(&json_path, serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
        mb.output(&json_path);
    }
    mb.finish()?;
    println!("reconstructed {} sequences with {}", seqs.len(), method.name());
    Ok(0)
}

/// Complete-data mean trajectories from a prepared dataset directory, when
/// present.
fn try_dataset_stats(dataset: &Dataset) -> Option<MeanTrajectories> {
    MeanTrajectories::load(&dataset.root.join("mean_traj.csv")).ok()
}

fn cmd_report(args: ReportArgs, seed: Option<u64>) -> Result<i32> {
    let mut cfg: ReportConfig = read_json(&args.config)?;
    if let Some(s) = seed {
        cfg.grid.seed = s;
    }
    let dataset = load_dataset(&cfg.data)?;
    let test: Vec<ActionSequence> = dataset.split(&cfg.split)?.into_iter().cloned().collect();

    // load artifacts
    let mut ae_models: BTreeMap<String, (Autoencoder<f32>, MeanTrajectories)> = BTreeMap::new();
    for (key, dir) in &cfg.autoencoders {
        match load_ae_dir(dir) {
            Ok(pair) => {
                ae_models.insert(key.clone(), pair);
            }
            Err(e) => eprintln!("report: autoencoder {key} unavailable: {e}"),
        }
    }
    let classifier = load_classifier_path(&cfg.classifier)?;
    let framewise = match &cfg.framewise {
        Some(p) => {
            let file = if p.is_dir() { p.join("model.ckpt") } else { p.clone() };
            Some(FramewiseAutoencoder::load_with_embedded_spec(&file)?.0)
        }
        None => None,
    };
    let dictionary = match &cfg.dictionary {
        Some(p) => {
            let file = if p.is_dir() { p.join("dictionary.ckpt") } else { p.clone() };
            Some(Dictionary::load(&file)?)
        }
        None => None,
    };
    let mut incomplete: BTreeMap<String, TcnClassifier<f32>> = BTreeMap::new();
    for (key, path) in &cfg.incomplete_classifiers {
        incomplete.insert(key.clone(), load_classifier_path(path)?);
    }
    let full_stats = match &cfg.stats {
        Some(p) => Some(MeanTrajectories::load(p)?),
        None => try_dataset_stats(&dataset),
    };

    let artifacts = GridArtifacts {
        autoencoders: ae_models.iter().map(|(k, (m, s))| (k.clone(), (m, Some(s)))).collect(),
        classifier: &classifier,
        framewise: framewise.as_ref(),
        dictionary: dictionary.as_ref(),
        incomplete_classifiers: incomplete.iter().map(|(k, m)| (k.clone(), m)).collect(),
        full_stats: full_stats.as_ref(),
    };

    let mut mb = ManifestBuilder::new("report", &args.out, Some(cfg.grid.seed));
    mb.input(&args.config);
    mb.config_hash(sha256_hex(&serde_json::to_vec(&cfg)?));

    std::fs::create_dir_all(&args.out)?;
    let export = if cfg.export_reconstructions > 0 || cfg.export_ssms > 0 {
        Some(GridExport {
            dir: &args.out,
            reconstructions: cfg.export_reconstructions,
            ssms: cfg.export_ssms,
        })
    } else {
        None
    };
    let report = eval::run_grid(&test, &dataset.topology, &artifacts, &cfg.grid, export.as_ref())?;
    report.write(&args.out)?;
    mb.output(&args.out.join("report.csv"));
    mb.output(&args.out.join("report.json"));
    write_accuracy_pivot(&report, &args.out.join("accuracy_by_otp.csv"))?;
    mb.output(&args.out.join("accuracy_by_otp.csv"));
    mb.finish()?;

    let failed = report.rows.iter().filter(|r| r.status != "ok").count();
    let total = report.rows.len();
    for row in &report.rows {
        println!(
            "{}/{} {}: rmse={} acc={} [{}]",
            row.train_otp,
            row.test_condition,
            row.method,
            row.rmse_cm.map(|v| format!("{v:.2}cm")).unwrap_or_else(|| "-".into()),
            row.acc_percent.map(|v| format!("{v:.1}%")).unwrap_or_else(|| "-".into()),
            row.status
        );
    }
    if failed == 0 {
        Ok(0)
    } else if failed < total {
        eprintln!("report: {failed}/{total} cells failed");
        Ok(EXIT_DATA)
    } else {
        eprintln!("report: all {total} cells failed");
        Ok(EXIT_NUMERIC)
    }
}

/// Plot-ready pivot: one row per (train, test) cell, one accuracy column per
/// method.
fn write_accuracy_pivot(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut methods: Vec<String> = report.rows.iter().map(|r| r.method.clone()).collect();
    methods.sort();
    methods.dedup();
    let mut cells: Vec<(String, String)> = report
        .rows
        .iter()
        .map(|r| (r.train_otp.clone(), r.test_condition.clone()))
        .collect();
    cells.dedup();
    let mut out = String::from("train_otp,test_condition");
    for m in &methods {
        out.push_str(&format!(",acc_{m}"));
    }
    out.push('\n');
    for (train, cond) in cells.iter() {
        out.push_str(&format!("{train},{cond}"));
        for m in &methods {
            let acc = report
                .row(train, cond, m)
                .and_then(|r| r.acc_percent)
                .map(|v| format!("{v:.2}"))
                .unwrap_or_default();
            out.push_str(&format!(",{acc}"));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

fn cmd_unseen_class(args: UnseenClassArgs, seed: Option<u64>) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let mut cfg: eval::UnseenClassConfig = read_json(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut mb = ManifestBuilder::new("unseen-class", &args.out, Some(cfg.seed));
    mb.input(&args.config);
    mb.config_hash(sha256_hex(&serde_json::to_vec(&cfg)?));

    let rows = eval::run_unseen_class(&dataset.sequences, dataset.topology.hip_index, &cfg)?;
    let mut out = String::from("train_otp,test_otp,method,repetitions,rmse_cm\n");
    for r in &rows {
        out.push_str(&format!(
            "{:.0},{:.0},{},{},{:.4}\n",
            r.train_otp, r.test_otp, r.method, r.repetitions, r.rmse_cm
        ));
        println!("unseen {}@{}: {} -> {:.2} cm", r.train_otp, r.test_otp, r.method, r.rmse_cm);
    }
    let path = args.out.join("unseen_class.csv");
    atomic_write(&path, out.as_bytes())?;
    mb.output(&path);
    mb.finish()?;
    Ok(0)
}

fn cmd_export_features(args: ExportFeaturesArgs) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let classifier = load_classifier_path(&args.classifier)?;
    let seqs = dataset.split(&args.split)?;
    if let Some(dir) = args.out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    eval::export_features(&classifier, &seqs, &args.out)?;
    let mut mb = ManifestBuilder::new(
        "export-features",
        args.out.parent().unwrap_or(Path::new(".")),
        None,
    );
    mb.output(&args.out);
    mb.finish()?;
    println!("exported features for {} sequences to {}", seqs.len(), args.out.display());
    Ok(0)
}
