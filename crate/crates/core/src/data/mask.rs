//! The sampling operator `A`: which joints are observed, per sequence or per
//! frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sequence::ActionSequence;
use super::topology::SkeletonTopology;
use crate::{Error, Result};

/// Observed-joint specification. Indices are sorted and deduplicated.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MaskSpec {
    /// The same joints are observed in every frame.
    PerSequence { joints: usize, observed: Vec<usize> },
    /// An independent observed set per frame.
    PerFrame { joints: usize, frames: Vec<Vec<usize>> },
}

impl MaskSpec {
    pub fn joints(&self) -> usize {
        match self {
            MaskSpec::PerSequence { joints, .. } | MaskSpec::PerFrame { joints, .. } => *joints,
        }
    }

    pub fn is_per_frame(&self) -> bool {
        matches!(self, MaskSpec::PerFrame { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joints();
        let check = |set: &[usize]| -> Result<()> {
            for &idx in set {
                if idx >= j {
                    return Err(Error::Data(format!(
                        "mask references joint {idx}, but J = {j}"
                    )));
                }
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Data("mask observed set must be sorted and unique".into()));
            }
            Ok(())
        };
        match self {
            MaskSpec::PerSequence { observed, .. } => check(observed),
            MaskSpec::PerFrame { frames, .. } => {
                for set in frames {
                    check(set)?;
                }
                Ok(())
            }
        }
    }

    /// True when joint `j` is observed at frame `n`.
    #[inline]
    pub fn is_observed(&self, j: usize, n: usize) -> bool {
        match self {
            MaskSpec::PerSequence { observed, .. } => observed.binary_search(&j).is_ok(),
            MaskSpec::PerFrame { frames, .. } => frames[n].binary_search(&j).is_ok(),
        }
    }

    /// Number of observed joints (per-sequence masks only).
    pub fn observed_count(&self) -> Option<usize> {
        match self {
            MaskSpec::PerSequence { observed, .. } => Some(observed.len()),
            MaskSpec::PerFrame { .. } => None,
        }
    }

    /// Observed-to-total percentage `100 K / J` (per-sequence masks only).
    pub fn otp(&self) -> Option<f64> {
        self.observed_count()
            .map(|k| 100.0 * k as f64 / self.joints() as f64)
    }

    /// The expected frame count, when the mask is frame-resolved.
    pub fn frames(&self) -> Option<usize> {
        match self {
            MaskSpec::PerSequence { .. } => None,
            MaskSpec::PerFrame { frames, .. } => Some(frames.len()),
        }
    }

    /// Check compatibility with a sequence's shape.
    pub fn check_sequence(&self, seq: &ActionSequence) -> Result<()> {
        if self.joints() != seq.joints() {
            return Err(Error::Shape(format!(
                "mask has J = {}, sequence has J = {}",
                self.joints(),
                seq.joints()
            )));
        }
        if let Some(f) = self.frames() {
            if f != seq.frames() {
                return Err(Error::Shape(format!(
                    "per-frame mask covers {f} frames, sequence has {}",
                    seq.frames()
                )));
            }
        }
        Ok(())
    }

    /// Dense per-frame observation flags (frames x joints), for hot loops.
    pub fn dense(&self, frames: usize) -> Vec<bool> {
        let j = self.joints();
        let mut out = vec![false; frames * j];
        match self {
            MaskSpec::PerSequence { observed, .. } => {
                for n in 0..frames {
                    for &ji in observed {
                        out[n * j + ji] = true;
                    }
                }
            }
            MaskSpec::PerFrame { frames: sets, .. } => {
                for (n, set) in sets.iter().enumerate().take(frames) {
                    for &ji in set {
                        out[n * j + ji] = true;
                    }
                }
            }
        }
        out
    }
}

/// Number of observed joints for a given OTP: round-half-up of `J * otp / 100`.
pub fn observed_for_otp(joints: usize, otp_percent: f64) -> usize {
    (joints as f64 * otp_percent / 100.0).round() as usize
}

/// Draw a per-sequence random mask: `K = round(J * otp / 100)` joints observed,
/// chosen uniformly without replacement. The hip is always observed (dropping
/// it is information-free after hip-centering).
pub fn gen_random_mask(joints: usize, hip: usize, otp_percent: f64, seed: u64) -> Result<MaskSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed = draw_observed(joints, hip, otp_percent, &mut rng)?;
    Ok(MaskSpec::PerSequence { joints, observed })
}

/// Draw an independent observed set for every frame; the hip stays observed
/// in every frame.
pub fn gen_perframe_mask(
    joints: usize,
    hip: usize,
    frames: usize,
    otp_percent: f64,
    seed: u64,
) -> Result<MaskSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = (0..frames)
        .map(|_| draw_observed(joints, hip, otp_percent, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskSpec::PerFrame { joints, frames: sets })
}

fn draw_observed(joints: usize, hip: usize, otp_percent: f64, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if !(0.0 < otp_percent && otp_percent <= 100.0) {
        return Err(Error::Config(format!("otp {otp_percent} outside (0, 100]")));
    }
    if hip >= joints {
        return Err(Error::Config(format!("hip index {hip} out of range for J = {joints}")));
    }
    let k = observed_for_otp(joints, otp_percent);
    if k == 0 {
        return Err(Error::Config(format!(
            "otp {otp_percent}% of {joints} joints keeps zero joints"
        )));
    }
    let mut observed = Vec::with_capacity(k);
    observed.push(hip);
    if k > 1 {
        // sample k-1 of the non-hip joints
        let pool: Vec<usize> = (0..joints).filter(|&j| j != hip).collect();
        let picks = rand::seq::index::sample(rng, pool.len(), k - 1);
        observed.extend(picks.iter().map(|i| pool[i]));
    }
    observed.sort_unstable();
    Ok(observed)
}

/// Mask dropping one named limb group; everything else stays observed.
pub fn gen_limb_mask(topology: &SkeletonTopology, limb: &str) -> Result<MaskSpec> {
    let group = topology
        .limbs
        .get(limb)
        .ok_or_else(|| Error::Config(format!("unknown limb {limb:?}")))?;
    let joints = topology.joints();
    let observed = (0..joints).filter(|j| !group.contains(j)).collect();
    Ok(MaskSpec::PerSequence { joints, observed })
}

/// Apply the sampling operator: observed rows are copied verbatim and
/// unobserved joint coordinates are set to exactly 0.
pub fn apply_mask(x: &ActionSequence, mask: &MaskSpec) -> Result<ActionSequence> {
    mask.check_sequence(x)?;
    let mut y = x.clone();
    for n in 0..x.frames() {
        for j in 0..x.joints() {
            if !mask.is_observed(j, n) {
                y.set_joint(j, n, [0.0, 0.0, 0.0]);
            }
        }
    }
    Ok(y)
}
