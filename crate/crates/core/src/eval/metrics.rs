//! Reconstruction and classification metrics, and self-similarity matrices.

use crate::data::ActionSequence;
use crate::models::TcnClassifier;
use crate::util::atomic_write;
use crate::{Error, Result};

/// Root-mean-square joint error in centimeters:
/// `100 * sqrt( (1/NJ) sum_n sum_j ||X_nj - Xhat_nj||^2 )`.
pub fn rmse(x: &ActionSequence, xhat: &ActionSequence) -> Result<f64> {
    let loss = crate::train::full_loss(x, xhat)?;
    let nj = (x.frames() * x.joints()) as f64;
    Ok(100.0 * (loss / nj).sqrt())
}

/// OTP column value: `100 K / J`.
pub fn otp_percent(observed: usize, joints: usize) -> f64 {
    100.0 * observed as f64 / joints as f64
}

/// Top-1 accuracy (micro) and per-class-averaged accuracy (macro), percent,
/// plus the raw predictions. Eval-mode batch norm throughout.
pub fn accuracy(
    classifier: &TcnClassifier<f32>,
    seqs: &[&ActionSequence],
    labels: &[usize],
) -> Result<(f64, f64, Vec<usize>)> {
    if seqs.len() != labels.len() {
        return Err(Error::Shape(format!("{} sequences, {} labels", seqs.len(), labels.len())));
    }
    if seqs.is_empty() {
        return Err(Error::Data("accuracy over an empty set".into()));
    }
    let mut preds = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(32) {
        let x = crate::data::sequence::batch_to_array3::<f32>(chunk)?;
        preds.extend(classifier.predict(&x)?);
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    let micro = 100.0 * correct as f64 / labels.len() as f64;

    let classes = classifier.spec().classes;
    let mut per_class_total = vec![0usize; classes];
    let mut per_class_correct = vec![0usize; classes];
    for (p, &l) in preds.iter().zip(labels) {
        if l >= classes {
            return Err(Error::Data(format!("label {l} out of range for {classes} classes")));
        }
        per_class_total[l] += 1;
        if *p == l {
            per_class_correct[l] += 1;
        }
    }
    let mut macro_sum = 0.0;
    let mut macro_n = 0usize;
    for c in 0..classes {
        if per_class_total[c] > 0 {
            macro_sum += per_class_correct[c] as f64 / per_class_total[c] as f64;
            macro_n += 1;
        }
    }
    let macro_acc = 100.0 * macro_sum / macro_n.max(1) as f64;
    Ok((micro, macro_acc, preds))
}

/// N x N self-similarity matrix: `exp(-||X_n - X_m|| / sigma^2)` with
/// `sigma^2` the population variance of the pairwise frame distances.
/// A degenerate zero variance (e.g. constant sequences) yields all-ones.
pub struct SsMatrix {
    pub n: usize,
    /// Row-major N x N.
    pub values: Vec<f64>,
}

impl SsMatrix {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{:.9e}", self.at(i, j)));
            }
            out.push('\n');
        }
        atomic_write(path, out.as_bytes())
    }
}

pub fn ssm(x: &ActionSequence) -> Result<SsMatrix> {
    let n = x.frames();
    if n < 2 {
        return Err(Error::Data(format!("ssm needs at least 2 frames, got {n}")));
    }
    let rows = 3 * x.joints();
    // pairwise Euclidean distances between stacked frame vectors
    let frame = |i: usize| -> Vec<f64> { (0..rows).map(|r| x.row(r)[i]).collect() };
    let frames: Vec<Vec<f64>> = (0..n).map(frame).collect();
    let mut dist = vec![0.0f64; n * n];
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = frames[i]
                .iter()
                .zip(&frames[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
            upper.push(d);
        }
    }
    let m = upper.len() as f64;
    let mean = upper.iter().sum::<f64>() / m;
    let var = upper.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / m;

    let mut values = vec![1.0f64; n * n];
    if var > 0.0 {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i * n + j] = (-dist[i * n + j] / var).exp();
                }
            }
        }
    }
    Ok(SsMatrix { n, values })
}
