//! Seeded generator of synthetic articulated action sequences.
//!
//! A 15-joint skeleton performs six action classes built from sinusoidal limb
//! motions around one shared base pose. Classes are distinguished by their
//! dynamics (which limbs move, phase relations, frequency), not by static
//! pose, and every class couples small correlated motions into the rest of
//! the body — so masked limbs leave a recoverable trace in the observed
//! joints.
//!
//! Raw sequences vary in length and carry a global hip drift; the prepare
//! step (resampling + hip-centering) normalizes both away.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, SequenceEntry};
use super::sequence::ActionSequence;
use super::topology::SkeletonTopology;
use crate::util::derive_seed;
use crate::Result;

pub const JOINTS: usize = 15;
pub const CLASSES: usize = 6;
pub const SUBJECTS: usize = 5;

// joint indices
const HIP: usize = 0;
const SPINE: usize = 1;
const CHEST: usize = 2;
const NECK: usize = 3;
const HEAD: usize = 4;
const R_SHOULDER: usize = 5;
const R_ELBOW: usize = 6;
const R_HAND: usize = 7;
const L_SHOULDER: usize = 8;
const L_ELBOW: usize = 9;
const L_HAND: usize = 10;
const R_KNEE: usize = 11;
const R_FOOT: usize = 12;
const L_KNEE: usize = 13;
const L_FOOT: usize = 14;

/// Base pose in meters, hip at the origin (x lateral, y up, z forward).
const BASE_POSE: [[f64; 3]; JOINTS] = [
    [0.0, 0.0, 0.0],      // hip
    [0.0, 0.15, 0.0],     // spine
    [0.0, 0.35, 0.0],     // chest
    [0.0, 0.52, 0.0],     // neck
    [0.0, 0.65, 0.0],     // head
    [-0.20, 0.48, 0.0],   // r_shoulder
    [-0.24, 0.22, 0.0],   // r_elbow
    [-0.26, -0.02, 0.0],  // r_hand
    [0.20, 0.48, 0.0],    // l_shoulder
    [0.24, 0.22, 0.0],    // l_elbow
    [0.26, -0.02, 0.0],   // l_hand
    [-0.10, -0.45, 0.0],  // r_knee
    [-0.11, -0.90, 0.0],  // r_foot
    [0.10, -0.45, 0.0],   // l_knee
    [0.11, -0.90, 0.0],   // l_foot
];

const CLASS_NAMES: [&str; CLASSES] = ["wave_right", "wave_left", "walk", "squat", "clap", "twist"];
const CLASS_CYCLES: [f64; CLASSES] = [2.0, 2.0, 2.5, 1.5, 2.2, 1.3];

pub fn topology() -> SkeletonTopology {
    let joint_names = vec![
        "hip", "spine", "chest", "neck", "head", "r_shoulder", "r_elbow", "r_hand", "l_shoulder",
        "l_elbow", "l_hand", "r_knee", "r_foot", "l_knee", "l_foot",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    let mut limbs = BTreeMap::new();
    limbs.insert("right_arm".to_string(), vec![R_SHOULDER, R_ELBOW, R_HAND]);
    limbs.insert("left_arm".to_string(), vec![L_SHOULDER, L_ELBOW, L_HAND]);
    limbs.insert("right_leg".to_string(), vec![R_KNEE, R_FOOT]);
    limbs.insert("left_leg".to_string(), vec![L_KNEE, L_FOOT]);
    SkeletonTopology { joint_names, hip_index: HIP, limbs }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Coordinate noise, meters (uniform half-width).
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { train: 300, test: 120, seed: 7, frames_min: 48, frames_max: 80, noise: 0.004 }
    }
}

pub struct SynthDataset {
    pub train: Vec<ActionSequence>,
    pub test: Vec<ActionSequence>,
    pub topology: SkeletonTopology,
}

/// Per-joint displacement for one class at phase `s`, base amplitude `a`.
fn class_offsets(class: usize, s: f64, a: f64) -> [[f64; 3]; JOINTS] {
    let mut d = [[0.0; 3]; JOINTS];
    match class {
        0 | 1 => {
            // wave_right / wave_left: one hand arcs (with a harmonic kink),
            // torso sways along
            let (hand, elbow, shoulder, sign) = if class == 0 {
                (R_HAND, R_ELBOW, R_SHOULDER, 1.0)
            } else {
                (L_HAND, L_ELBOW, L_SHOULDER, -1.0)
            };
            let hx = 0.5 * a * (s.sin() + 0.35 * (2.0 * s + 0.8).sin());
            let hy = 0.35 * a * (s.cos() + 0.25 * (2.0 * s).cos());
            let hz = 0.25 * a * (s + 0.5).sin();
            d[hand] = [sign * hx, hy, hz];
            d[elbow] = [sign * 0.55 * hx, 0.55 * hy, 0.55 * hz];
            d[shoulder] = [sign * 0.2 * hx, 0.2 * hy, 0.2 * hz];
            d[CHEST] = [sign * 0.08 * a * s.sin(), 0.0, 0.04 * a * s.cos()];
            d[HEAD] = [sign * 0.06 * a * s.sin(), 0.03 * a * s.cos(), 0.0];
        }
        2 => {
            // walk: legs antiphase in z with a stride harmonic, arms
            // counter-swing
            let sw = s.sin() + 0.3 * (2.0 * s + 1.1).sin();
            let lift = |p: f64| 0.5 * (1.0 - (2.0 * p).cos());
            d[R_FOOT] = [0.0, 0.12 * a * lift(s), 0.6 * a * sw];
            d[R_KNEE] = [0.0, 0.07 * a * lift(s), 0.35 * a * sw];
            d[L_FOOT] = [0.0, 0.12 * a * lift(s + std::f64::consts::PI), -0.6 * a * sw];
            d[L_KNEE] = [0.0, 0.07 * a * lift(s + std::f64::consts::PI), -0.35 * a * sw];
            d[R_HAND] = [0.0, 0.0, -0.3 * a * sw];
            d[R_ELBOW] = [0.0, 0.0, -0.18 * a * sw];
            d[L_HAND] = [0.0, 0.0, 0.3 * a * sw];
            d[L_ELBOW] = [0.0, 0.0, 0.18 * a * sw];
            d[CHEST] = [0.0, 0.04 * a * (2.0 * s).cos(), 0.0];
            d[HEAD] = [0.0, 0.05 * a * (2.0 * s).cos(), 0.0];
        }
        3 => {
            // squat: legs compress in phase (contrast with walk's antiphase),
            // arms raise forward for balance
            let c = 0.5 * (1.0 - s.cos()) + 0.12 * (2.0 * s + 0.9).sin();
            for j in [R_FOOT, L_FOOT] {
                d[j] = [0.0, 0.45 * a * c, 0.0];
            }
            for j in [R_KNEE, L_KNEE] {
                d[j] = [0.0, 0.3 * a * c, 0.15 * a * c];
            }
            for j in [R_HAND, L_HAND] {
                d[j] = [0.0, 0.15 * a * c, 0.35 * a * c];
            }
            for j in [R_ELBOW, L_ELBOW] {
                d[j] = [0.0, 0.09 * a * c, 0.21 * a * c];
            }
            d[HEAD] = [0.0, -0.06 * a * c, 0.0];
            d[CHEST] = [0.0, -0.03 * a * c, 0.02 * a * c];
        }
        4 => {
            // clap: both hands drive toward the center line, in phase, with
            // a sharpened (harmonic) strike profile
            let m = 0.5 * (1.0 + s.sin()) + 0.15 * (2.0 * s + 0.4).sin();
            d[R_HAND] = [0.45 * a * m, 0.08 * a * s.cos(), 0.2 * a * m];
            d[L_HAND] = [-0.45 * a * m, 0.08 * a * s.cos(), 0.2 * a * m];
            d[R_ELBOW] = [0.22 * a * m, 0.04 * a * s.cos(), 0.1 * a * m];
            d[L_ELBOW] = [-0.22 * a * m, 0.04 * a * s.cos(), 0.1 * a * m];
            d[R_SHOULDER] = [0.07 * a * m, 0.0, 0.03 * a * m];
            d[L_SHOULDER] = [-0.07 * a * m, 0.0, 0.03 * a * m];
            d[CHEST] = [0.0, 0.0, 0.05 * a * m];
        }
        _ => {
            // twist: upper body sways laterally, growing up the chain; legs
            // counter-sway
            let u = s.sin() + 0.25 * (3.0 * s).sin();
            let chain = [
                (CHEST, 0.25),
                (NECK, 0.4),
                (HEAD, 0.55),
                (R_SHOULDER, 0.45),
                (L_SHOULDER, 0.45),
                (R_ELBOW, 0.6),
                (L_ELBOW, 0.6),
                (R_HAND, 0.75),
                (L_HAND, 0.75),
            ];
            for (j, c) in chain {
                d[j] = [c * a * u, 0.0, 0.1 * c * a * s.cos()];
            }
            for j in [R_KNEE, L_KNEE, R_FOOT, L_FOOT] {
                d[j] = [-0.1 * a * u, 0.0, 0.0];
            }
            d[SPINE] = [0.12 * a * u, 0.0, 0.0];
        }
    }
    d
}

/// Generate one raw sample. Deterministic in (config seed, split, index).
fn sample(cfg: &SynthConfig, split: &str, index: usize, label: usize, subject: usize) -> ActionSequence {
    let seed = derive_seed(cfg.seed, &format!("synth/{split}/{index}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let frames = rng.gen_range(cfg.frames_min..=cfg.frames_max);
    let amp = 0.18 * rng.gen_range(0.7..1.3);
    let cycles = CLASS_CYCLES[label] + rng.gen_range(-0.35..0.35);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    // monotone time warp (speed modulation): makes the class manifolds
    // nonlinear in sample space, as articulated motion is
    let warp_strength = rng.gen_range(-0.45..0.45);
    let warp_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let subject_scale = 0.95 + 0.025 * subject as f64;

    // static per-joint pose offsets (identity variation), hip excluded so the
    // drift below is the only hip motion
    let mut pose_jitter = [[0.0; 3]; JOINTS];
    for jit in pose_jitter.iter_mut().skip(1) {
        for v in jit.iter_mut() {
            *v = rng.gen_range(-0.02..0.02);
        }
    }

    // global drift, removed later by hip-centering
    let drift_amp = [
        rng.gen_range(0.05..0.15),
        rng.gen_range(-0.05..0.10),
        rng.gen_range(0.05..0.30),
    ];
    let drift_phase = rng.gen_range(0.0..std::f64::consts::TAU);

    let mut seq = ActionSequence::new(JOINTS, frames).with_label(label).with_subject(subject);
    for n in 0..frames {
        let p = n as f64 / (frames - 1) as f64;
        let tau = std::f64::consts::TAU;
        let warped = p + warp_strength * ((tau * p + warp_phase).sin() - warp_phase.sin()) / tau;
        let s = tau * cycles * warped + phase;
        let offsets = class_offsets(label, s, amp);
        let drift = [
            drift_amp[0] * (std::f64::consts::TAU * p + drift_phase).sin(),
            drift_amp[1] * p,
            drift_amp[2] * p,
        ];
        for j in 0..JOINTS {
            let mut pos = [0.0; 3];
            for k in 0..3 {
                pos[k] = subject_scale * BASE_POSE[j][k]
                    + pose_jitter[j][k]
                    + offsets[j][k]
                    + drift[k]
                    + rng.gen_range(-cfg.noise..cfg.noise);
            }
            seq.set_joint(j, n, pos);
        }
    }
    seq
}

/// Generate the full dataset: labels cycle so classes stay balanced, and
/// subjects rotate per class round.
pub fn generate(cfg: &SynthConfig) -> SynthDataset {
    let gen_split = |split: &str, count: usize| -> Vec<ActionSequence> {
        (0..count)
            .map(|i| {
                let label = i % CLASSES;
                let subject = (i / CLASSES) % SUBJECTS;
                sample(cfg, split, i, label, subject)
            })
            .collect()
    };
    SynthDataset {
        train: gen_split("train", cfg.train),
        test: gen_split("test", cfg.test),
        topology: topology(),
    }
}

pub fn class_name(label: usize) -> &'static str {
    CLASS_NAMES[label]
}

/// Write a generated dataset as a raw directory: sequence CSVs, topology, and
/// a manifest with train/test splits.
pub fn write_raw_dataset(dir: &Path, data: &SynthDataset, target_frames: usize) -> Result<()> {
    std::fs::create_dir_all(dir.join("sequences"))?;
    data.topology.save(&dir.join("topology.json"))?;
    let mut entries = Vec::new();
    let write = |seqs: &[ActionSequence], split: &str, entries: &mut Vec<SequenceEntry>| -> Result<Vec<usize>> {
        let mut indices = Vec::new();
        for (i, seq) in seqs.iter().enumerate() {
            let rel = format!("sequences/{split}_{i:04}.csv");
            seq.write_csv(&dir.join(&rel))?;
            indices.push(entries.len());
            entries.push(SequenceEntry { path: rel, label: seq.label, subject: seq.subject });
        }
        Ok(indices)
    };
    let train_idx = write(&data.train, "train", &mut entries)?;
    let test_idx = write(&data.test, "test", &mut entries)?;
    let manifest = DatasetManifest {
        sequences: entries,
        topology: "topology.json".to_string(),
        target_frames,
        hip_index: data.topology.hip_index,
        splits: BTreeMap::from([
            ("train".to_string(), train_idx),
            ("test".to_string(), test_idx),
        ]),
    };
    manifest.save(&dir.join("manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let cfg = SynthConfig { train: 24, test: 12, ..Default::default() };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.train.len(), 24);
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.coords(), y.coords());
        }
        let mut counts = [0usize; CLASSES];
        for s in &a.train {
            counts[s.label.unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4), "balanced classes: {counts:?}");
    }

    #[test]
    fn raw_samples_vary_in_length_and_drift() {
        let cfg = SynthConfig { train: 10, test: 0, ..Default::default() };
        let d = generate(&cfg);
        let lengths: Vec<usize> = d.train.iter().map(|s| s.frames()).collect();
        assert!(lengths.iter().any(|&l| l != lengths[0]), "lengths should vary: {lengths:?}");
        // hip is not at the origin before preprocessing
        let hip = d.train[0].joint(HIP, d.train[0].frames() - 1);
        assert!(hip.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn topology_limbs_are_valid() {
        let t = topology();
        t.validate().unwrap();
        assert_eq!(t.joints(), JOINTS);
        assert_eq!(t.limbs["right_arm"].len(), 3);
        assert_eq!(t.limbs["left_leg"].len(), 2);
    }
}
