//! Preprocessing: temporal resampling, hip-centering, train-set mean
//! trajectories and missing-joint fill.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mask::MaskSpec;
use super::sequence::ActionSequence;
use super::topology::SkeletonTopology;
use crate::{Error, Result};

/// Piecewise-linear resampling to `target_n` frames at uniformly spaced
/// normalized times. Endpoints are preserved exactly.
pub fn resample(seq: &ActionSequence, target_n: usize) -> Result<ActionSequence> {
    let n = seq.frames();
    if n < 2 {
        return Err(Error::Data(format!("resample: sequence has {n} frames, need at least 2")));
    }
    if target_n < 2 {
        return Err(Error::Config(format!("resample: target N = {target_n}, need at least 2")));
    }
    if target_n == n {
        return Ok(seq.clone());
    }
    let rows = 3 * seq.joints();
    let mut coords = vec![0.0; rows * target_n];
    let scale = (n - 1) as f64 / (target_n - 1) as f64;
    for r in 0..rows {
        let src = seq.row(r);
        for i in 0..target_n {
            let v = if i == target_n - 1 {
                src[n - 1]
            } else {
                let pos = i as f64 * scale;
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                if frac == 0.0 {
                    src[lo]
                } else {
                    src[lo] * (1.0 - frac) + src[lo + 1] * frac
                }
            };
            coords[r * target_n + i] = v;
        }
    }
    let mut out = ActionSequence::from_coords(seq.joints(), target_n, coords)?;
    out.label = seq.label;
    out.subject = seq.subject;
    Ok(out)
}

/// Subtract the hip position from every joint, per frame, so the hip is
/// fixed at the origin.
pub fn hip_center(seq: &ActionSequence, topology: &SkeletonTopology) -> Result<ActionSequence> {
    if topology.joints() != seq.joints() {
        return Err(Error::Shape(format!(
            "hip_center: topology has {} joints, sequence has {}",
            topology.joints(),
            seq.joints()
        )));
    }
    let hip = topology.hip_index;
    let mut out = seq.clone();
    for n in 0..seq.frames() {
        let h = seq.joint(hip, n);
        for j in 0..seq.joints() {
            let p = seq.joint(j, n);
            out.set_joint(j, n, [p[0] - h[0], p[1] - h[1], p[2] - h[2]]);
        }
    }
    Ok(out)
}

/// Per-joint mean trajectories over a training set, as a `3J x N` matrix.
///
/// When masks are supplied, each (joint, frame) entry averages only the
/// sequences in which that joint is observed there; entries never observed
/// anywhere fall back to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanTrajectories {
    pub joints: usize,
    pub frames: usize,
    /// Row-major `3J x N`.
    pub values: Vec<f64>,
}

impl MeanTrajectories {
    #[inline]
    pub fn joint(&self, j: usize, n: usize) -> [f64; 3] {
        let base = 3 * j * self.frames + n;
        [
            self.values[base],
            self.values[base + self.frames],
            self.values[base + 2 * self.frames],
        ]
    }

    /// Stats files reuse the sequence CSV format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let seq = ActionSequence::from_coords(self.joints, self.frames, self.values.clone())?;
        seq.write_csv(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let seq = ActionSequence::read_csv(path)?;
        Ok(MeanTrajectories {
            joints: seq.joints(),
            frames: seq.frames(),
            values: seq.coords().to_vec(),
        })
    }
}

/// Compute mean trajectories over `seqs`; `masks`, when given, must be
/// parallel to `seqs` and restricts each average to observed entries.
pub fn mean_trajectories(
    seqs: &[ActionSequence],
    masks: Option<&[MaskSpec]>,
) -> Result<MeanTrajectories> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Data("mean trajectories over an empty training set".into()))?;
    let (j, n) = (first.joints(), first.frames());
    if let Some(masks) = masks {
        if masks.len() != seqs.len() {
            return Err(Error::Shape(format!(
                "{} masks for {} sequences",
                masks.len(),
                seqs.len()
            )));
        }
    }
    let mut sums = vec![0.0; 3 * j * n];
    let mut counts = vec![0usize; j * n];
    for (si, seq) in seqs.iter().enumerate() {
        if seq.joints() != j || seq.frames() != n {
            return Err(Error::Shape(format!(
                "sequence {si} has J={}, N={}, expected J={j}, N={n}",
                seq.joints(),
                seq.frames()
            )));
        }
        for ji in 0..j {
            for ni in 0..n {
                let observed = match masks {
                    Some(masks) => masks[si].is_observed(ji, ni),
                    None => true,
                };
                if observed {
                    let p = seq.joint(ji, ni);
                    let base = 3 * ji * n + ni;
                    sums[base] += p[0];
                    sums[base + n] += p[1];
                    sums[base + 2 * n] += p[2];
                    counts[ji * n + ni] += 1;
                }
            }
        }
    }
    let mut values = vec![0.0; 3 * j * n];
    for ji in 0..j {
        for ni in 0..n {
            let c = counts[ji * n + ni];
            if c > 0 {
                let base = 3 * ji * n + ni;
                values[base] = sums[base] / c as f64;
                values[base + n] = sums[base + n] / c as f64;
                values[base + 2 * n] = sums[base + 2 * n] / c as f64;
            }
        }
    }
    Ok(MeanTrajectories { joints: j, frames: n, values })
}

/// How unobserved joints are filled before feeding a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillStrategy {
    /// Train-set mean trajectories (the main protocol).
    MeanTrajectory,
    /// Leave the zero fill in place.
    Zeros,
    /// Copy the nearest observed joint, per frame.
    NearestJoint,
}

/// Replace unobserved entries of `y` according to `strategy`; observed
/// entries are never touched.
///
/// Nearest-joint measures distances from the unobserved joint's current
/// (fill-input) position to the observed positions of the same frame; ties go
/// to the lower joint index.
pub fn fill_missing(
    y: &ActionSequence,
    mask: &MaskSpec,
    strategy: FillStrategy,
    stats: Option<&MeanTrajectories>,
) -> Result<ActionSequence> {
    mask.check_sequence(y)?;
    let mut out = y.clone();
    match strategy {
        FillStrategy::Zeros => {
            for n in 0..y.frames() {
                for j in 0..y.joints() {
                    if !mask.is_observed(j, n) {
                        out.set_joint(j, n, [0.0, 0.0, 0.0]);
                    }
                }
            }
        }
        FillStrategy::MeanTrajectory => {
            let stats = stats.ok_or_else(|| {
                Error::Config("mean-trajectory fill requires train-set statistics".into())
            })?;
            if stats.joints != y.joints() || stats.frames != y.frames() {
                return Err(Error::Shape(format!(
                    "stats are {}x{}, sequence is {}x{}",
                    stats.joints,
                    stats.frames,
                    y.joints(),
                    y.frames()
                )));
            }
            for n in 0..y.frames() {
                for j in 0..y.joints() {
                    if !mask.is_observed(j, n) {
                        out.set_joint(j, n, stats.joint(j, n));
                    }
                }
            }
        }
        FillStrategy::NearestJoint => {
            for n in 0..y.frames() {
                let observed: Vec<usize> =
                    (0..y.joints()).filter(|&j| mask.is_observed(j, n)).collect();
                if observed.is_empty() {
                    return Err(Error::Data(format!(
                        "nearest-joint fill: frame {n} has zero observed joints"
                    )));
                }
                for j in 0..y.joints() {
                    if mask.is_observed(j, n) {
                        continue;
                    }
                    let r = y.joint(j, n);
                    let mut best = observed[0];
                    let mut best_d = f64::INFINITY;
                    for &o in &observed {
                        let p = y.joint(o, n);
                        let d = (p[0] - r[0]).powi(2) + (p[1] - r[1]).powi(2) + (p[2] - r[2]).powi(2);
                        if d < best_d {
                            best_d = d;
                            best = o;
                        }
                    }
                    out.set_joint(j, n, y.joint(best, n));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mask::apply_mask;
    use std::collections::BTreeMap;

    fn topo(joints: usize) -> SkeletonTopology {
        SkeletonTopology {
            joint_names: (0..joints).map(|i| format!("j{i}")).collect(),
            hip_index: 0,
            limbs: BTreeMap::new(),
        }
    }

    fn linear_track_seq() -> ActionSequence {
        // single joint whose x runs 0, 1, 2; y and z constant
        let mut seq = ActionSequence::new(1, 3);
        for n in 0..3 {
            seq.set_joint(0, n, [n as f64, 4.0, -1.0]);
        }
        seq
    }

    #[test]
    fn resample_linear_track() {
        let seq = linear_track_seq();
        let up = resample(&seq, 5).unwrap();
        assert_eq!(up.row(0), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(up.row(1).iter().all(|v| *v == 4.0));
    }

    #[test]
    fn resample_identity_and_constant() {
        let seq = linear_track_seq();
        assert_eq!(resample(&seq, 3).unwrap(), seq);

        let mut c = ActionSequence::new(2, 4);
        for n in 0..4 {
            c.set_joint(0, n, [1.0, 2.0, 3.0]);
            c.set_joint(1, n, [-1.0, 0.5, 0.0]);
        }
        let r = resample(&c, 7).unwrap();
        assert_eq!(r.frames(), 7);
        for n in 0..7 {
            assert_eq!(r.joint(0, n), [1.0, 2.0, 3.0]);
            assert_eq!(r.joint(1, n), [-1.0, 0.5, 0.0]);
        }

        assert!(resample(&seq, 1).is_err());
    }

    #[test]
    fn resample_roundtrip_preserves_linear_tracks() {
        let seq = linear_track_seq();
        let there = resample(&seq, 8).unwrap();
        let back = resample(&there, 3).unwrap();
        for (a, b) in back.coords().iter().zip(seq.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
        // endpoints exactly
        assert_eq!(back.joint(0, 0), seq.joint(0, 0));
        assert_eq!(back.joint(0, 2), seq.joint(0, 2));
    }

    #[test]
    fn hip_center_moves_hip_to_origin() {
        let mut seq = ActionSequence::new(3, 1);
        seq.set_joint(0, 0, [1.0, 2.0, 3.0]);
        seq.set_joint(1, 0, [2.0, 2.0, 3.0]);
        seq.set_joint(2, 0, [1.0, 0.0, 0.0]);
        let centered = hip_center(&seq, &topo(3)).unwrap();
        assert_eq!(centered.joint(0, 0), [0.0, 0.0, 0.0]);
        assert_eq!(centered.joint(1, 0), [1.0, 0.0, 0.0]);
        assert_eq!(centered.joint(2, 0), [0.0, -2.0, -3.0]);
    }

    #[test]
    fn hip_center_idempotent_and_translation_invariant() {
        let mut seq = ActionSequence::new(2, 3);
        for n in 0..3 {
            seq.set_joint(0, n, [0.1 * n as f64, 1.0, 0.0]);
            seq.set_joint(1, n, [0.5, 0.2 * n as f64, 1.0]);
        }
        let t = topo(2);
        let once = hip_center(&seq, &t).unwrap();
        let twice = hip_center(&once, &t).unwrap();
        assert_eq!(once, twice);

        let mut shifted = seq.clone();
        for n in 0..3 {
            for j in 0..2 {
                let p = seq.joint(j, n);
                shifted.set_joint(j, n, [p[0] + 5.0, p[1] - 2.0, p[2] + 0.25]);
            }
        }
        let a = hip_center(&seq, &t).unwrap();
        let b = hip_center(&shifted, &t).unwrap();
        for (x, y) in a.coords().iter().zip(b.coords()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fill_zeros_matches_apply_mask_output() {
        let mut x = ActionSequence::new(3, 2);
        for n in 0..2 {
            for j in 0..3 {
                x.set_joint(j, n, [j as f64 + 1.0, n as f64, 0.5]);
            }
        }
        let mask = MaskSpec::PerSequence { joints: 3, observed: vec![0, 2] };
        let y = apply_mask(&x, &mask).unwrap();
        let filled = fill_missing(&y, &mask, FillStrategy::Zeros, None).unwrap();
        assert_eq!(filled, y);
    }

    #[test]
    fn fill_mean_trajectory_from_identical_training_set() {
        let mut x = ActionSequence::new(2, 3);
        for n in 0..3 {
            x.set_joint(0, n, [0.0, 0.0, 0.0]);
            x.set_joint(1, n, [1.0 + n as f64, -2.0, 0.25]);
        }
        let stats = mean_trajectories(&[x.clone(), x.clone(), x.clone()], None).unwrap();
        let mask = MaskSpec::PerSequence { joints: 2, observed: vec![0] };
        let y = apply_mask(&x, &mask).unwrap();
        let filled = fill_missing(&y, &mask, FillStrategy::MeanTrajectory, Some(&stats)).unwrap();
        for (a, b) in filled.coords().iter().zip(x.coords()) {
            assert!((a - b).abs() < 1e-12);
        }

        assert!(fill_missing(&y, &mask, FillStrategy::MeanTrajectory, None).is_err());
    }

    #[test]
    fn fill_nearest_single_candidate_and_tiebreak() {
        let mut x = ActionSequence::new(2, 2);
        for n in 0..2 {
            x.set_joint(0, n, [3.0, 1.0, 0.0]);
            x.set_joint(1, n, [9.0, 9.0, 9.0]);
        }
        let mask = MaskSpec::PerSequence { joints: 2, observed: vec![0] };
        let y = apply_mask(&x, &mask).unwrap();
        let filled = fill_missing(&y, &mask, FillStrategy::NearestJoint, None).unwrap();
        for n in 0..2 {
            assert_eq!(filled.joint(1, n), [3.0, 1.0, 0.0], "only candidate is copied");
        }

        // joints 0 and 2 observed, equidistant from joint 1's zero-filled
        // reference: the lower index wins
        let mut x3 = ActionSequence::new(3, 1);
        x3.set_joint(0, 0, [2.0, 0.0, 0.0]);
        x3.set_joint(1, 0, [5.0, 5.0, 5.0]);
        x3.set_joint(2, 0, [-2.0, 0.0, 0.0]);
        let mask3 = MaskSpec::PerSequence { joints: 3, observed: vec![0, 2] };
        let y3 = apply_mask(&x3, &mask3).unwrap();
        let filled3 = fill_missing(&y3, &mask3, FillStrategy::NearestJoint, None).unwrap();
        assert_eq!(filled3.joint(1, 0), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn fill_full_mask_is_identity_for_every_strategy() {
        let mut x = ActionSequence::new(2, 2);
        for n in 0..2 {
            x.set_joint(0, n, [0.3, -0.4, 1.1]);
            x.set_joint(1, n, [1.5, 0.0, -0.7]);
        }
        let mask = MaskSpec::PerSequence { joints: 2, observed: vec![0, 1] };
        let stats = mean_trajectories(&[x.clone()], None).unwrap();
        for strategy in [FillStrategy::Zeros, FillStrategy::MeanTrajectory, FillStrategy::NearestJoint] {
            let filled = fill_missing(&x, &mask, strategy, Some(&stats)).unwrap();
            assert_eq!(filled, x);
        }
    }

    #[test]
    fn observed_rows_survive_every_strategy() {
        let mut x = ActionSequence::new(3, 2);
        for n in 0..2 {
            for j in 0..3 {
                x.set_joint(j, n, [j as f64 * 0.2, n as f64 * 0.3, 0.1]);
            }
        }
        let mask = MaskSpec::PerSequence { joints: 3, observed: vec![0, 1] };
        let stats = mean_trajectories(&[x.clone()], None).unwrap();
        let y = apply_mask(&x, &mask).unwrap();
        for strategy in [FillStrategy::Zeros, FillStrategy::MeanTrajectory, FillStrategy::NearestJoint] {
            let filled = fill_missing(&y, &mask, strategy, Some(&stats)).unwrap();
            for n in 0..2 {
                for j in [0usize, 1] {
                    assert_eq!(filled.joint(j, n), x.joint(j, n));
                }
            }
        }
    }

    #[test]
    fn masked_mean_trajectories_ignore_unobserved_entries() {
        // two sequences; joint 1 observed only in the first
        let mut a = ActionSequence::new(2, 2);
        let mut b = ActionSequence::new(2, 2);
        for n in 0..2 {
            a.set_joint(1, n, [1.0, 1.0, 1.0]);
            b.set_joint(1, n, [99.0, 99.0, 99.0]); // must not contribute
        }
        let ma = MaskSpec::PerSequence { joints: 2, observed: vec![0, 1] };
        let mb = MaskSpec::PerSequence { joints: 2, observed: vec![0] };
        let stats = mean_trajectories(&[a, b], Some(&[ma, mb])).unwrap();
        assert_eq!(stats.joint(1, 0), [1.0, 1.0, 1.0]);
    }
}
