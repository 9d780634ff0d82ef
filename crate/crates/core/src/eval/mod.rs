//! Metrics (RMSE, classification accuracy, self-similarity matrices), the
//! OTP experiment grid runner, penultimate-feature export, and the
//! unseen-class protocol.

mod grid;
mod metrics;

pub use grid::{
    coordinate_mask, run_grid, CellDetail, ExperimentReport, GridArtifacts, GridConfig,
    GridExport, Method, ReportRow, SequenceDetail, TestCondition,
};
pub use metrics::{accuracy, otp_percent, rmse, ssm, SsMatrix};

use std::path::Path;

use crate::data::{gen_random_mask, ActionSequence, MaskSpec};
use crate::models::{Autoencoder, AutoencoderSpec, TcnClassifier};
use crate::train::{train_autoencoder, MaskAssignment, TrainConfig};
use crate::util::{atomic_write, derive_seed};
use crate::{Error, Result};

/// Export penultimate-layer classifier features as CSV, one row per
/// sequence: `index,label,f0,...`. Embedding/visualization is an external
/// tool's job.
pub fn export_features(
    classifier: &TcnClassifier<f32>,
    seqs: &[&ActionSequence],
    path: &Path,
) -> Result<()> {
    if seqs.is_empty() {
        return Err(Error::Data("feature export over an empty set".into()));
    }
    let mut rows: Vec<String> = Vec::with_capacity(seqs.len());
    let mut width = None;
    let mut index = 0usize;
    for chunk in seqs.chunks(32) {
        let x = crate::data::sequence::batch_to_array3::<f32>(chunk)?;
        let feats = classifier.features_eval(&x)?;
        width.get_or_insert(feats.cols());
        for (bi, seq) in chunk.iter().enumerate() {
            let label = seq.label.map(|l| l.to_string()).unwrap_or_default();
            let values: Vec<String> =
                feats.row(bi).iter().map(|v| format!("{:.6e}", v)).collect();
            rows.push(format!("{index},{label},{}", values.join(",")));
            index += 1;
        }
    }
    let width = width.unwrap_or(0);
    let header: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    let mut out = format!("index,label,{}\n", header.join(","));
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// One averaged row of the unseen-class protocol.
#[derive(Clone, Debug, serde::Serialize)]
pub struct UnseenClassRow {
    pub train_otp: f64,
    pub test_otp: f64,
    pub method: String,
    pub repetitions: usize,
    pub rmse_cm: f64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct UnseenClassConfig {
    /// Classes held out for testing in each repetition.
    pub test_classes: usize,
    pub repetitions: usize,
    /// OTP of the (ambient) training masks; 100 trains on complete data.
    pub train_otp: f64,
    pub test_otps: Vec<f64>,
    pub ae_spec: AutoencoderSpec,
    pub train: TrainConfig,
    pub inversion: crate::invert::InversionConfig,
    pub seed: u64,
}

/// Random class partitions, an autoencoder trained per repetition, RMSE of
/// feed-forward vs latent-opt on the held-out classes, averaged over
/// repetitions. Reported in RMSE only: the unseen classes have no
/// classifier.
pub fn run_unseen_class(
    all: &[ActionSequence],
    hip: usize,
    cfg: &UnseenClassConfig,
) -> Result<Vec<UnseenClassRow>> {
    if cfg.repetitions == 0 {
        return Err(Error::Config("unseen-class protocol needs at least one repetition".into()));
    }
    let labels: Vec<Option<usize>> = all.iter().map(|s| s.label).collect();
    let mut sums: std::collections::BTreeMap<(String, String), f64> = Default::default();

    for rep in 0..cfg.repetitions {
        let split_seed = derive_seed(cfg.seed, &format!("unseen/{rep}"));
        let (train_idx, test_idx) =
            crate::data::manifest::split_by_class(&labels, cfg.test_classes, split_seed)?;
        let train: Vec<ActionSequence> = train_idx.iter().map(|&i| all[i].clone()).collect();
        let test: Vec<&ActionSequence> = test_idx.iter().map(|&i| &all[i]).collect();
        if train.is_empty() || test.is_empty() {
            return Err(Error::Data("unseen-class split left an empty side".into()));
        }

        let mut model = Autoencoder::<f32>::build(&cfg.ae_spec, derive_seed(split_seed, "ae"))?;
        let mut tcfg = cfg.train.clone();
        tcfg.seed = derive_seed(split_seed, "train");
        let assignment = if cfg.train_otp >= 100.0 {
            MaskAssignment::None
        } else {
            MaskAssignment::Redrawn { otp: cfg.train_otp, hip, per_frame: false }
        };
        if cfg.train_otp >= 100.0 {
            tcfg.loss = crate::train::LossMode::Full;
        }
        let outcome = train_autoencoder(&mut model, &train, assignment, &tcfg)?;
        let stats = outcome
            .stats
            .unwrap_or(crate::data::mean_trajectories(&train, None)?);

        for &test_otp in &cfg.test_otps {
            let mut ff_sum = 0.0;
            let mut opt_sum = 0.0;
            for (i, x) in test.iter().enumerate() {
                let mask_seed = derive_seed(split_seed, &format!("mask/{test_otp}/{i}"));
                let mask: MaskSpec = gen_random_mask(x.joints(), hip, test_otp, mask_seed)?;
                let y = crate::data::apply_mask(x, &mask)?;
                let filled = crate::data::fill_missing(
                    &y,
                    &mask,
                    crate::data::FillStrategy::MeanTrajectory,
                    Some(&stats),
                )?;
                let (ff, z0) =
                    crate::invert::feedforward_reconstruct(&filled.to_array3::<f32>(), &model)?;
                let res = crate::invert::latent_optimize(
                    &y.to_array3::<f32>(),
                    &mask,
                    &model,
                    &z0,
                    &cfg.inversion,
                )?;
                ff_sum += rmse(x, &ActionSequence::from_array3(&ff, 0, x.joints())?)?;
                opt_sum += rmse(x, &ActionSequence::from_array3(&res.x_hat, 0, x.joints())?)?;
            }
            let n = test.len() as f64;
            *sums.entry((format!("{test_otp}"), "feedforward".into())).or_default() += ff_sum / n;
            *sums.entry((format!("{test_otp}"), "latent-opt".into())).or_default() += opt_sum / n;
        }
    }

    let reps = cfg.repetitions as f64;
    Ok(sums
        .into_iter()
        .map(|((otp, method), sum)| UnseenClassRow {
            train_otp: cfg.train_otp,
            test_otp: otp.parse().unwrap_or(f64::NAN),
            method,
            repetitions: cfg.repetitions,
            rmse_cm: sum / reps,
        })
        .collect())
}
