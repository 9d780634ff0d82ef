//! Action sequences: a `3J x N` matrix of joint coordinates in meters.

use std::fs;
use std::path::Path;

use crate::nn::Array3;
use crate::util::{atomic_write, fmt_sig9};
use crate::{Error, Result};

/// A skeletal action: `J` joints tracked over `N` frames.
///
/// Coordinates are stored row-major as a `3J x N` matrix (rows are the x/y/z
/// trajectories of each joint, columns are frames), in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSequence {
    joints: usize,
    frames: usize,
    coords: Vec<f64>,
    pub label: Option<usize>,
    pub subject: Option<usize>,
}

impl ActionSequence {
    pub fn new(joints: usize, frames: usize) -> Self {
        ActionSequence {
            joints,
            frames,
            coords: vec![0.0; 3 * joints * frames],
            label: None,
            subject: None,
        }
    }

    /// Build from a row-major `3J x N` coordinate vector.
    pub fn from_coords(joints: usize, frames: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != 3 * joints * frames {
            return Err(Error::Shape(format!(
                "sequence: {} coords for J={joints}, N={frames} (want {})",
                coords.len(),
                3 * joints * frames
            )));
        }
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("sequence contains non-finite coordinates".into()));
        }
        Ok(ActionSequence { joints, frames, coords, label: None, subject: None })
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// All coordinates, row-major `3J x N`.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    /// One coordinate row (a single x, y or z trajectory).
    pub fn row(&self, r: usize) -> &[f64] {
        &self.coords[r * self.frames..(r + 1) * self.frames]
    }

    /// 3D position of joint `j` at frame `n`.
    #[inline]
    pub fn joint(&self, j: usize, n: usize) -> [f64; 3] {
        let base = 3 * j * self.frames + n;
        [
            self.coords[base],
            self.coords[base + self.frames],
            self.coords[base + 2 * self.frames],
        ]
    }

    #[inline]
    pub fn set_joint(&mut self, j: usize, n: usize, p: [f64; 3]) {
        let base = 3 * j * self.frames + n;
        self.coords[base] = p[0];
        self.coords[base + self.frames] = p[1];
        self.coords[base + 2 * self.frames] = p[2];
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_subject(mut self, subject: usize) -> Self {
        self.subject = Some(subject);
        self
    }

    /// Convert to a single-element batch (1, 3J, N) in the given precision.
    pub fn to_array3<F: crate::nn::Scalar>(&self) -> Array3<F> {
        let data = self.coords.iter().map(|v| F::from_f64(*v)).collect();
        Array3::from_vec(1, 3 * self.joints, self.frames, data).expect("dims consistent")
    }

    /// Rebuild a sequence from batch element `b` of a (B, 3J, N) array.
    pub fn from_array3<F: crate::nn::Scalar>(arr: &Array3<F>, b: usize, joints: usize) -> Result<Self> {
        if arr.channels() != 3 * joints {
            return Err(Error::Shape(format!(
                "array has {} channels, expected 3J = {}",
                arr.channels(),
                3 * joints
            )));
        }
        let stride = arr.channels() * arr.time();
        let coords = arr.data()[b * stride..(b + 1) * stride]
            .iter()
            .map(|v| v.into_f64())
            .collect();
        ActionSequence::from_coords(joints, arr.time(), coords)
    }

    /// Read from the sequence CSV format: a `# J=<J> N=<N> [label=<id>]`
    /// header, then one row per frame with 3J comma-separated columns ordered
    /// (x0, y0, z0, x1, ...).
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Data(format!("{}: missing '#' header line", path.display())))?;
        let mut joints = None;
        let mut frames = None;
        let mut label = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("J=") {
                joints = Some(v.parse::<usize>().map_err(|_| bad_header(path, tok))?);
            } else if let Some(v) = tok.strip_prefix("N=") {
                frames = Some(v.parse::<usize>().map_err(|_| bad_header(path, tok))?);
            } else if let Some(v) = tok.strip_prefix("label=") {
                label = Some(v.parse::<usize>().map_err(|_| bad_header(path, tok))?);
            }
        }
        let joints = joints.ok_or_else(|| bad_header(path, "J=<missing>"))?;
        let frames = frames.ok_or_else(|| bad_header(path, "N=<missing>"))?;

        let mut coords = vec![0.0; 3 * joints * frames];
        let mut n = 0usize;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            if n >= frames {
                return Err(Error::Data(format!(
                    "{}: more than N={frames} data rows",
                    path.display()
                )));
            }
            let mut cols = 0usize;
            for (c, tok) in line.split(',').enumerate() {
                if c >= 3 * joints {
                    return Err(Error::Data(format!(
                        "{}: frame {n} has more than 3J={} columns",
                        path.display(),
                        3 * joints
                    )));
                }
                let v: f64 = tok.trim().parse().map_err(|_| {
                    Error::Data(format!("{}: bad float {tok:?} at frame {n}", path.display()))
                })?;
                coords[c * frames + n] = v;
                cols += 1;
            }
            if cols != 3 * joints {
                return Err(Error::Data(format!(
                    "{}: frame {n} has {cols} columns, expected 3J={}",
                    path.display(),
                    3 * joints
                )));
            }
            n += 1;
        }
        if n != frames {
            return Err(Error::Data(format!(
                "{}: {n} data rows, header says N={frames}",
                path.display()
            )));
        }
        let mut seq = ActionSequence::from_coords(joints, frames, coords)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        seq.label = label;
        Ok(seq)
    }

    /// Write the sequence CSV format (floats with 9 significant digits).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# J={} N={}", self.joints, self.frames));
        if let Some(label) = self.label {
            out.push_str(&format!(" label={label}"));
        }
        out.push('\n');
        for n in 0..self.frames {
            for c in 0..3 * self.joints {
                if c > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_sig9(self.coords[c * self.frames + n]));
            }
            out.push('\n');
        }
        atomic_write(path, out.as_bytes())
    }
}

fn bad_header(path: &Path, tok: &str) -> Error {
    Error::Data(format!("{}: malformed header token {tok:?}", path.display()))
}

/// Stack sequences into a batch array (B, 3J, N) in the given precision.
pub fn batch_to_array3<F: crate::nn::Scalar>(seqs: &[&ActionSequence]) -> Result<Array3<F>> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::Data("cannot batch zero sequences".into()))?;
    let (j, n) = (first.joints(), first.frames());
    let mut data = Vec::with_capacity(seqs.len() * 3 * j * n);
    for s in seqs {
        if s.joints() != j || s.frames() != n {
            return Err(Error::Shape(format!(
                "batch: sequence with J={}, N={} among J={j}, N={n}",
                s.joints(),
                s.frames()
            )));
        }
        data.extend(s.coords().iter().map(|v| F::from_f64(*v)));
    }
    Array3::from_vec(seqs.len(), 3 * j, n, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_sequence() -> ActionSequence {
        let mut seq = ActionSequence::new(2, 3).with_label(4);
        for n in 0..3 {
            seq.set_joint(0, n, [n as f64, 0.5 * n as f64, -1.0]);
            seq.set_joint(1, n, [1.0 + n as f64 / 3.0, 2.0, 0.25]);
        }
        seq
    }

    #[test]
    fn csv_roundtrip_preserves_values_and_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.csv");
        let seq = demo_sequence();
        seq.write_csv(&path).unwrap();
        let back = ActionSequence::read_csv(&path).unwrap();
        assert_eq!(back.joints(), 2);
        assert_eq!(back.frames(), 3);
        assert_eq!(back.label, Some(4));
        for (a, b) in seq.coords().iter().zip(back.coords()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn csv_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "# J=2 N=2\n1,2,3,4,5,6\n").unwrap();
        assert!(ActionSequence::read_csv(&path).is_err()); // row count mismatch
        std::fs::write(&path, "# J=2 N=1\n1,2,3,oops,5,6\n").unwrap();
        assert!(ActionSequence::read_csv(&path).is_err()); // bad float
        std::fs::write(&path, "1,2,3\n").unwrap();
        assert!(ActionSequence::read_csv(&path).is_err()); // missing header
    }

    #[test]
    fn array3_roundtrip() {
        let seq = demo_sequence();
        let arr = seq.to_array3::<f64>();
        assert_eq!((arr.batch(), arr.channels(), arr.time()), (1, 6, 3));
        let back = ActionSequence::from_array3(&arr, 0, 2).unwrap();
        assert_eq!(back.coords(), seq.coords());
    }

    #[test]
    fn non_finite_coords_rejected() {
        assert!(ActionSequence::from_coords(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
    }
}
