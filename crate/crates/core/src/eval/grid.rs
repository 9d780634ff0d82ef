//! The OTP experiment grid: (train condition) x (test condition) x (method)
//! cells, each producing RMSE and classification accuracy over the test set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, otp_percent, rmse, ssm};
use crate::data::{
    apply_mask, fill_missing, gen_limb_mask, gen_perframe_mask, gen_random_mask, ActionSequence,
    FillStrategy, MaskSpec, MeanTrajectories, SkeletonTopology,
};
use crate::invert::{
    feedforward_reconstruct, latent_optimize, nearest_joint_baseline, FramewiseSeqDecoder,
    InversionConfig,
};
use crate::models::{Autoencoder, FramewiseAutoencoder, TcnClassifier};
use crate::sparse::{devectorize_sequence, omp_encode, sc_reconstruct, vectorize_sequence, Dictionary, OmpConfig};
use crate::util::{atomic_write, sha256_hex};
use crate::{Error, Result};

/// Completion methods the grid can evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `D(E(Y))` feed-forward pass through the action autoencoder.
    Feedforward,
    /// Latent-space optimization `D(z*)` (the proposed method).
    LatentOpt,
    /// Frame-wise autoencoder feed-forward `D_F(E_F(Y))`.
    Framewise,
    /// Frame-wise latent optimization `D_F(z_F*)`.
    FramewiseOpt,
    /// Dictionary + masked OMP completion.
    Sparse,
    /// Per-frame nearest observed joint copy.
    Nearest,
    /// No reconstruction: classify the filled observation directly with a
    /// classifier trained on incomplete data.
    ClassifyIncomplete,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Feedforward => "feedforward",
            Method::LatentOpt => "latent-opt",
            Method::Framewise => "framewise",
            Method::FramewiseOpt => "framewise-opt",
            Method::Sparse => "sparse",
            Method::Nearest => "nearest",
            Method::ClassifyIncomplete => "classify-incomplete",
        }
    }
}

/// A test-time masking condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TestCondition {
    /// Random per-sequence masks at this OTP.
    Otp { otp: f64 },
    /// Independent random masks per frame at this OTP.
    PerFrameOtp { otp: f64 },
    /// Drop one named limb group (same mask for every sequence).
    Limb { name: String },
}

impl TestCondition {
    pub fn label(&self) -> String {
        match self {
            TestCondition::Otp { otp } => format!("otp{otp:.0}"),
            TestCondition::PerFrameOtp { otp } => format!("otp{otp:.0}-perframe"),
            TestCondition::Limb { name } => format!("limb:{name}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridConfig {
    pub methods: Vec<Method>,
    /// Keys into the autoencoder artifact map ("100", "75", ...).
    pub train_otps: Vec<String>,
    pub test_conditions: Vec<TestCondition>,
    pub seed: u64,
    pub inversion: InversionConfig,
    #[serde(default = "default_fill")]
    pub fill: FillStrategy,
    #[serde(default)]
    pub omp: OmpConfig,
}

fn default_fill() -> FillStrategy {
    FillStrategy::MeanTrajectory
}

/// Everything a grid run reads. All models are frozen; cells share them
/// read-only.
pub struct GridArtifacts<'a> {
    /// Autoencoder (+ its training fill statistics) per train-OTP key.
    pub autoencoders: BTreeMap<String, (&'a Autoencoder<f32>, Option<&'a MeanTrajectories>)>,
    pub classifier: &'a TcnClassifier<f32>,
    pub framewise: Option<&'a FramewiseAutoencoder<f32>>,
    pub dictionary: Option<&'a Dictionary>,
    /// Classifiers trained on incomplete data, per train-OTP key
    /// (classify-incomplete baseline only).
    pub incomplete_classifiers: BTreeMap<String, &'a TcnClassifier<f32>>,
    /// Complete-data mean trajectories (fallback fill stats).
    pub full_stats: Option<&'a MeanTrajectories>,
}

/// Optional per-cell artifact dump (reconstructions and SSMs for the first
/// few test sequences).
pub struct GridExport<'a> {
    pub dir: &'a Path,
    pub reconstructions: usize,
    pub ssms: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportRow {
    pub train_otp: String,
    pub test_condition: String,
    pub mask_otp: f64,
    pub method: String,
    pub n: usize,
    pub rmse_cm: Option<f64>,
    pub acc_percent: Option<f64>,
    pub acc_macro: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceDetail {
    pub index: usize,
    pub label: Option<usize>,
    pub predicted: Option<usize>,
    pub rmse_cm: f64,
    pub objective_initial: Option<f64>,
    pub objective_final: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellDetail {
    pub train_otp: String,
    pub test_condition: String,
    pub method: String,
    pub sequences: Vec<SequenceDetail>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub crate_version: String,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    pub detail: Vec<CellDetail>,
}

impl ExperimentReport {
    /// One CSV row per grid cell, fixed formatting (deterministic bytes).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "train_otp,test_condition,mask_otp,method,n,rmse_cm,acc_percent,acc_macro,status\n",
        );
        for r in &self.rows {
            let fmt = |v: Option<f64>, digits: usize| match v {
                Some(x) => format!("{:.*}", digits, x),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{:.1},{},{},{},{},{},{}\n",
                r.train_otp,
                r.test_condition,
                r.mask_otp,
                r.method,
                r.n,
                fmt(r.rmse_cm, 4),
                fmt(r.acc_percent, 2),
                fmt(r.acc_macro, 2),
                r.status
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        atomic_write(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        atomic_write(&dir.join("report.json"), serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn row(&self, train: &str, cond: &str, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.train_otp == train && r.test_condition == cond && r.method == method
        })
    }
}

struct CellOutcome {
    row: ReportRow,
    detail: CellDetail,
}

/// Run the full grid. Cells are evaluated sequentially; within a cell the
/// test sequences run in parallel (inversions share the frozen decoder).
pub fn run_grid(
    test_set: &[ActionSequence],
    topology: &SkeletonTopology,
    artifacts: &GridArtifacts,
    cfg: &GridConfig,
    export: Option<&GridExport>,
) -> Result<ExperimentReport> {
    if test_set.is_empty() {
        return Err(Error::Data("grid: empty test set".into()));
    }
    let config_hash = sha256_hex(&serde_json::to_vec(cfg)?);
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for train_key in &cfg.train_otps {
        for cond in &cfg.test_conditions {
            let masks = condition_masks(test_set, topology, cond, cfg.seed)?;
            for method in &cfg.methods {
                let outcome =
                    run_cell(test_set, topology, artifacts, cfg, train_key, cond, &masks, *method, export);
                match outcome {
                    Ok(o) => {
                        rows.push(o.row);
                        details.push(o.detail);
                    }
                    Err(e) => {
                        // a missing artifact fails the cell, not the run
                        rows.push(ReportRow {
                            train_otp: train_key.clone(),
                            test_condition: cond.label(),
                            mask_otp: condition_otp(cond, topology),
                            method: method.name().to_string(),
                            n: test_set.len(),
                            rmse_cm: None,
                            acc_percent: None,
                            acc_macro: None,
                            status: format!("failed: {e}"),
                        });
                    }
                }
            }
        }
    }
    Ok(ExperimentReport {
        schema: "mocomplete-report-v1".to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        rows,
        detail: details,
    })
}

/// The nominal OTP of a condition (for the report's mask_otp column).
fn condition_otp(cond: &TestCondition, topology: &SkeletonTopology) -> f64 {
    match cond {
        TestCondition::Otp { otp } | TestCondition::PerFrameOtp { otp } => *otp,
        TestCondition::Limb { name } => topology
            .limbs
            .get(name)
            .map(|g| otp_percent(topology.joints() - g.len(), topology.joints()))
            .unwrap_or(f64::NAN),
    }
}

/// Masks are drawn once per condition from (seed, condition, index) and
/// shared by every method and train OTP, so comparisons see identical
/// sampling operators.
fn condition_masks(
    test_set: &[ActionSequence],
    topology: &SkeletonTopology,
    cond: &TestCondition,
    seed: u64,
) -> Result<Vec<MaskSpec>> {
    let hip = topology.hip_index;
    test_set
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let s = crate::util::derive_seed(seed, &format!("test-mask/{}/{i}", cond.label()));
            match cond {
                TestCondition::Otp { otp } => gen_random_mask(x.joints(), hip, *otp, s),
                TestCondition::PerFrameOtp { otp } => {
                    gen_perframe_mask(x.joints(), hip, x.frames(), *otp, s)
                }
                TestCondition::Limb { name } => gen_limb_mask(topology, name),
            }
        })
        .collect()
}

struct SeqResult {
    xhat: Option<ActionSequence>,
    rmse_cm: f64,
    objective_initial: Option<f64>,
    objective_final: Option<f64>,
    predicted: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    test_set: &[ActionSequence],
    topology: &SkeletonTopology,
    artifacts: &GridArtifacts,
    cfg: &GridConfig,
    train_key: &str,
    cond: &TestCondition,
    masks: &[MaskSpec],
    method: Method,
    export: Option<&GridExport>,
) -> Result<CellOutcome> {
    let stats = artifacts
        .autoencoders
        .get(train_key)
        .and_then(|(_, s)| *s)
        .or(artifacts.full_stats);

    let per_seq: Vec<Result<SeqResult>> = test_set
        .par_iter()
        .zip(masks.par_iter())
        .map(|(x, mask)| reconstruct_one(x, mask, artifacts, cfg, train_key, stats, method))
        .collect();

    let mut results = Vec::with_capacity(test_set.len());
    for r in per_seq {
        results.push(r?);
    }

    // classification over the reconstructions (or the filled observations
    // for classify-incomplete, already handled per sequence)
    let labels: Vec<usize> = test_set.iter().map(|s| s.label.unwrap_or(0)).collect();
    let (micro, macro_acc, preds) = match method {
        Method::ClassifyIncomplete => {
            let preds: Vec<usize> =
                results.iter().map(|r| r.predicted.unwrap_or(usize::MAX)).collect();
            let correct = preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
            let micro = 100.0 * correct as f64 / labels.len() as f64;
            (micro, micro, preds)
        }
        _ => {
            let xhats: Vec<&ActionSequence> =
                results.iter().map(|r| r.xhat.as_ref().expect("reconstruction present")).collect();
            accuracy(artifacts.classifier, &xhats, &labels)?
        }
    };

    let mean_rmse = results.iter().map(|r| r.rmse_cm).sum::<f64>() / results.len() as f64;

    if let Some(export) = export {
        export_cell(export, train_key, cond, method, test_set, &results)?;
    }

    let detail = CellDetail {
        train_otp: train_key.to_string(),
        test_condition: cond.label(),
        method: method.name().to_string(),
        sequences: results
            .iter()
            .enumerate()
            .map(|(i, r)| SequenceDetail {
                index: i,
                label: test_set[i].label,
                predicted: preds.get(i).copied(),
                rmse_cm: r.rmse_cm,
                objective_initial: r.objective_initial,
                objective_final: r.objective_final,
            })
            .collect(),
    };
    Ok(CellOutcome {
        row: ReportRow {
            train_otp: train_key.to_string(),
            test_condition: cond.label(),
            mask_otp: condition_otp(cond, topology),
            method: method.name().to_string(),
            n: test_set.len(),
            rmse_cm: Some(mean_rmse),
            acc_percent: Some(micro),
            acc_macro: Some(macro_acc),
            status: "ok".to_string(),
        },
        detail,
    })
}

fn reconstruct_one(
    x: &ActionSequence,
    mask: &MaskSpec,
    artifacts: &GridArtifacts,
    cfg: &GridConfig,
    train_key: &str,
    stats: Option<&MeanTrajectories>,
    method: Method,
) -> Result<SeqResult> {
    let y = apply_mask(x, mask)?;
    let need_ae = matches!(method, Method::Feedforward | Method::LatentOpt);
    let ae = if need_ae {
        Some(
            artifacts
                .autoencoders
                .get(train_key)
                .ok_or_else(|| Error::Config(format!("no autoencoder checkpoint for train OTP {train_key:?}")))?
                .0,
        )
    } else {
        None
    };

    let mut objective_initial = None;
    let mut objective_final = None;
    let mut predicted = None;

    let xhat = match method {
        Method::Feedforward => {
            let filled = fill_missing(&y, mask, cfg.fill, stats)?;
            let (out, _) = feedforward_reconstruct(&filled.to_array3::<f32>(), ae.unwrap())?;
            Some(ActionSequence::from_array3(&out, 0, x.joints())?)
        }
        Method::LatentOpt => {
            let model = ae.unwrap();
            let filled = fill_missing(&y, mask, cfg.fill, stats)?;
            let (_, z0) = feedforward_reconstruct(&filled.to_array3::<f32>(), model)?;
            let res = latent_optimize(&y.to_array3::<f32>(), mask, model, &z0, &cfg.inversion)?;
            objective_initial = Some(res.initial_objective);
            objective_final = Some(res.objective);
            Some(ActionSequence::from_array3(&res.x_hat, 0, x.joints())?)
        }
        Method::Framewise => {
            let model = artifacts
                .framewise
                .ok_or_else(|| Error::Config("no frame-wise checkpoint configured".into()))?;
            let filled = fill_missing(&y, mask, cfg.fill, stats)?;
            let frames = crate::invert::array_to_frames(&filled.to_array3::<f32>());
            let out = model.reconstruct_frames(&frames)?;
            let arr = crate::invert::frames_to_array(&out);
            Some(ActionSequence::from_array3(&arr, 0, x.joints())?)
        }
        Method::FramewiseOpt => {
            let model = artifacts
                .framewise
                .ok_or_else(|| Error::Config("no frame-wise checkpoint configured".into()))?;
            let filled = fill_missing(&y, mask, cfg.fill, stats)?;
            let frames = crate::invert::array_to_frames(&filled.to_array3::<f32>());
            let (zf, _) = model.encode_frames(&frames)?;
            let z0 = crate::nn::array::Mat::from_vec(1, zf.rows() * zf.cols(), zf.data().to_vec())?;
            let dec = FramewiseSeqDecoder { model, frames: x.frames() };
            let res = latent_optimize(&y.to_array3::<f32>(), mask, &dec, &z0, &cfg.inversion)?;
            objective_initial = Some(res.initial_objective);
            objective_final = Some(res.objective);
            Some(ActionSequence::from_array3(&res.x_hat, 0, x.joints())?)
        }
        Method::Sparse => {
            let dict = artifacts
                .dictionary
                .ok_or_else(|| Error::Config("no dictionary checkpoint configured".into()))?;
            let vec = vectorize_sequence(&y);
            let observed = coordinate_mask(mask, x.frames());
            let code = omp_encode(&vec, dict, Some(&observed), &cfg.omp)?;
            let rebuilt = sc_reconstruct(&code, dict);
            Some(devectorize_sequence(rebuilt, x.joints(), x.frames())?)
        }
        Method::Nearest => Some(nearest_joint_baseline(&y, mask)?),
        Method::ClassifyIncomplete => {
            let cls = artifacts.incomplete_classifiers.get(train_key).ok_or_else(|| {
                Error::Config(format!("no incomplete-data classifier for train OTP {train_key:?}"))
            })?;
            let filled = fill_missing(&y, mask, cfg.fill, stats)?;
            predicted = Some(cls.predict(&filled.to_array3::<f32>())?[0]);
            None
        }
    };

    let rmse_cm = match &xhat {
        Some(r) => rmse(x, r)?,
        // classify-incomplete does no reconstruction; score the fill itself
        None => rmse(x, &fill_missing(&y, mask, cfg.fill, stats)?)?,
    };
    Ok(SeqResult { xhat, rmse_cm, objective_initial, objective_final, predicted })
}

/// Expand a joint mask to the vectorized coordinate layout (row-major
/// `3J x N`): coordinate `r * N + n` is observed iff joint `r / 3` is
/// observed at frame `n`.
pub fn coordinate_mask(mask: &MaskSpec, frames: usize) -> Vec<bool> {
    let joints = mask.joints();
    let mut out = vec![false; 3 * joints * frames];
    for r in 0..3 * joints {
        let j = r / 3;
        for n in 0..frames {
            out[r * frames + n] = mask.is_observed(j, n);
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub fn masks_for(
        test_set: &[ActionSequence],
        topology: &SkeletonTopology,
        cond: &TestCondition,
        seed: u64,
    ) -> Result<Vec<MaskSpec>> {
        condition_masks(test_set, topology, cond, seed)
    }
}

fn export_cell(
    export: &GridExport,
    train_key: &str,
    cond: &TestCondition,
    method: Method,
    test_set: &[ActionSequence],
    results: &[SeqResult],
) -> Result<()> {
    let cell_dir: PathBuf = export.dir.join(format!(
        "train{}_{}_{}",
        train_key,
        cond.label().replace(':', "-"),
        method.name()
    ));
    for (i, r) in results.iter().take(export.reconstructions.max(export.ssms)).enumerate() {
        let Some(xhat) = &r.xhat else { continue };
        if i < export.reconstructions {
            xhat.write_csv(&cell_dir.join(format!("recon_{i:03}.csv")))?;
        }
        if i < export.ssms {
            ssm(xhat)?.save_csv(&cell_dir.join(format!("ssm_recon_{i:03}.csv")))?;
            ssm(&test_set[i])?.save_csv(&cell_dir.join(format!("ssm_truth_{i:03}.csv")))?;
        }
    }
    Ok(())
}
