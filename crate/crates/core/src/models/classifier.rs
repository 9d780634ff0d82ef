//! TCN action classifier: conv/batch-norm/ReLU blocks with residual
//! connections, halving average pool after each block, global temporal
//! average, then a fully-connected softmax head.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{spec_hash, ClassifierSpec};
use crate::nn::array::{Array3, Mat, Scalar, Tensor};
use crate::nn::init::uniform_fanin;
use crate::nn::ops;
use crate::nn::ops::BatchNormCache;
use crate::nn::params::{Gradients, ParamId, ParamStore};
use crate::util::derive_seed;
use crate::{Error, Result};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

struct ConvBn {
    w: ParamId,
    b: ParamId,
    gamma: ParamId,
    beta: ParamId,
    rmean: ParamId,
    rvar: ParamId,
}

struct Block {
    convs: Vec<ConvBn>,
    /// 1x1 projection for the residual when the width changes.
    proj: Option<(ParamId, ParamId)>,
}

pub struct TcnClassifier<F> {
    spec: ClassifierSpec,
    store: ParamStore<F>,
    blocks: Vec<Block>,
    head: (ParamId, ParamId),
}

struct ConvCache<F> {
    conv_in: Array3<F>,
    bn: BatchNormCache<F>,
    bn_out: Array3<F>,
}

pub struct ClassifierCache<F> {
    blocks: Vec<Vec<ConvCache<F>>>,
    /// Input to each block (the residual source).
    block_in: Vec<Array3<F>>,
    /// Input to the global average (for backward through pooling chain).
    pooled: Mat<F>,
    last_time: usize,
}

impl<F: Scalar> TcnClassifier<F> {
    pub fn build(spec: &ClassifierSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "classifier-init"));
        let mut store = ParamStore::new();
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        let mut cin = spec.input_channels;
        for (bi, &width) in spec.blocks.iter().enumerate() {
            let mut convs = Vec::with_capacity(spec.convs_per_block);
            let mut c = cin;
            for li in 0..spec.convs_per_block {
                let prefix = format!("blk{bi}.conv{li}");
                let w = store.add(
                    format!("{prefix}.w"),
                    uniform_fanin(&[width, c, spec.kernel], c * spec.kernel, &mut rng),
                    true,
                )?;
                let b = store.add(
                    format!("{prefix}.b"),
                    uniform_fanin(&[width], c * spec.kernel, &mut rng),
                    true,
                )?;
                let gamma = store.add(format!("{prefix}.bn.scale"), Tensor::full(&[width], F::one()), true)?;
                let beta = store.add(format!("{prefix}.bn.shift"), Tensor::zeros(&[width]), true)?;
                let rmean = store.add(format!("{prefix}.bn.rmean"), Tensor::zeros(&[width]), false)?;
                let rvar = store.add(format!("{prefix}.bn.rvar"), Tensor::full(&[width], F::one()), false)?;
                convs.push(ConvBn { w, b, gamma, beta, rmean, rvar });
                c = width;
            }
            let proj = if cin != width {
                let w = store.add(
                    format!("blk{bi}.proj.w"),
                    uniform_fanin(&[width, cin, 1], cin, &mut rng),
                    true,
                )?;
                let b = store.add(format!("blk{bi}.proj.b"), uniform_fanin(&[width], cin, &mut rng), true)?;
                Some((w, b))
            } else {
                None
            };
            blocks.push(Block { convs, proj });
            cin = width;
        }
        let head = (
            store.add("head.w", uniform_fanin(&[spec.classes, cin], cin, &mut rng), true)?,
            store.add("head.b", uniform_fanin(&[spec.classes], cin, &mut rng), true)?,
        );
        Ok(TcnClassifier { spec: spec.clone(), store, blocks, head })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    fn check_input(&self, x: &Array3<F>) -> Result<()> {
        if x.channels() != self.spec.input_channels || x.time() != self.spec.frames {
            return Err(Error::Shape(format!(
                "classifier input is ({}, {}, {}), spec wants channels {} and frames {}",
                x.batch(),
                x.channels(),
                x.time(),
                self.spec.input_channels,
                self.spec.frames
            )));
        }
        Ok(())
    }

    /// Training forward pass: batch statistics, running stats updated.
    /// Training is single-owner, hence `&mut self`.
    pub fn forward_train(&mut self, x: &Array3<F>) -> Result<(Mat<F>, ClassifierCache<F>)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut cache = ClassifierCache {
            blocks: Vec::with_capacity(self.blocks.len()),
            block_in: Vec::with_capacity(self.blocks.len()),
            pooled: Mat::zeros(1, 1),
            last_time: 0,
        };
        for bi in 0..self.blocks.len() {
            let block_in = h.clone();
            let mut conv_caches = Vec::with_capacity(self.blocks[bi].convs.len());
            let mut s = block_in.clone();
            for li in 0..self.blocks[bi].convs.len() {
                let ids = {
                    let c = &self.blocks[bi].convs[li];
                    (c.w, c.b, c.gamma, c.beta, c.rmean, c.rvar)
                };
                let conv_in = s.clone();
                let y = ops::conv1d(&conv_in, self.store.value(ids.0), self.store.value(ids.1))?;
                let gamma = self.store.value(ids.2).clone();
                let beta = self.store.value(ids.3).clone();
                let mut rmean = self.store.value(ids.4).clone();
                let mut rvar = self.store.value(ids.5).clone();
                let (bn_out, bn) = ops::batchnorm1d_train(
                    &y,
                    &gamma,
                    &beta,
                    &mut rmean,
                    &mut rvar,
                    F::from_f64(BN_EPS),
                    F::from_f64(BN_MOMENTUM),
                )?;
                *self.store.value_mut(ids.4) = rmean;
                *self.store.value_mut(ids.5) = rvar;
                s = ops::relu3(&bn_out);
                conv_caches.push(ConvCache { conv_in, bn, bn_out });
            }
            let added = self.add_residual(bi, &block_in, &s)?;
            h = ops::avg_pool1d(&added)?;
            cache.blocks.push(conv_caches);
            cache.block_in.push(block_in);
        }
        let (g, t_last) = global_avg(&h);
        cache.pooled = g.clone();
        cache.last_time = t_last;
        let logits = ops::linear(&g, self.store.value(self.head.0), self.store.value(self.head.1))?;
        Ok((logits, cache))
    }

    fn add_residual(&self, bi: usize, block_in: &Array3<F>, s: &Array3<F>) -> Result<Array3<F>> {
        let r = match self.blocks[bi].proj {
            Some((w, b)) => ops::conv1d(block_in, self.store.value(w), self.store.value(b))?,
            None => block_in.clone(),
        };
        if r.channels() != s.channels() || r.time() != s.time() {
            return Err(Error::Shape(format!(
                "residual add in block {bi}: stack is ({}, {}), shortcut is ({}, {})",
                s.channels(),
                s.time(),
                r.channels(),
                r.time()
            )));
        }
        let mut out = s.clone();
        for (o, v) in out.data_mut().iter_mut().zip(r.data()) {
            *o += *v;
        }
        Ok(out)
    }

    /// Backward for the training pass, accumulating parameter gradients.
    pub fn backward(
        &self,
        cache: &ClassifierCache<F>,
        dlogits: &Mat<F>,
        grads: &mut Gradients<F>,
    ) -> Result<()> {
        let (dg, dw, db) = ops::linear_backward(&cache.pooled, self.store.value(self.head.0), dlogits)?;
        grads.accumulate(self.head.0, &dw);
        grads.accumulate(self.head.1, &db);
        // undo the global temporal average
        let t = cache.last_time;
        let inv_t = F::from_f64(t as f64).recip();
        let mut dh = Array3::zeros(dg.rows(), dg.cols(), t);
        for b in 0..dg.rows() {
            for c in 0..dg.cols() {
                let g = dg.at(b, c) * inv_t;
                dh.series_mut(b, c).iter_mut().for_each(|v| *v = g);
            }
        }
        for bi in (0..self.blocks.len()).rev() {
            let dadded = ops::avg_pool1d_backward(&dh);
            // through the conv stack
            let mut ds = dadded.clone();
            for li in (0..self.blocks[bi].convs.len()).rev() {
                let c = &self.blocks[bi].convs[li];
                let cc = &cache.blocks[bi][li];
                let dbn_out = ops::relu3_backward(&cc.bn_out, &ds);
                let (dy, dgamma, dbeta) =
                    ops::batchnorm1d_train_backward(&cc.bn, self.store.value(c.gamma), &dbn_out);
                grads.accumulate(c.gamma, &dgamma);
                grads.accumulate(c.beta, &dbeta);
                let (dx, dw, db) = ops::conv1d_backward(&cc.conv_in, self.store.value(c.w), &dy)?;
                grads.accumulate(c.w, &dw);
                grads.accumulate(c.b, &db);
                ds = dx;
            }
            // through the residual shortcut
            let dresid = match self.blocks[bi].proj {
                Some((w, b)) => {
                    let (dx, dw, db) =
                        ops::conv1d_backward(&cache.block_in[bi], self.store.value(w), &dadded)?;
                    grads.accumulate(w, &dw);
                    grads.accumulate(b, &db);
                    dx
                }
                None => dadded,
            };
            for (a, r) in ds.data_mut().iter_mut().zip(dresid.data()) {
                *a += *r;
            }
            dh = ds;
        }
        Ok(())
    }

    /// Deterministic eval-mode logits (running statistics).
    pub fn forward_eval(&self, x: &Array3<F>) -> Result<Mat<F>> {
        let g = self.features_eval(x)?;
        ops::linear(&g, self.store.value(self.head.0), self.store.value(self.head.1))
    }

    /// Penultimate-layer features: the global-average vector before the head.
    pub fn features_eval(&self, x: &Array3<F>) -> Result<Mat<F>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for bi in 0..self.blocks.len() {
            let block_in = h.clone();
            let mut s = block_in.clone();
            for c in &self.blocks[bi].convs {
                let y = ops::conv1d(&s, self.store.value(c.w), self.store.value(c.b))?;
                let bn_out = ops::batchnorm1d_eval(
                    &y,
                    self.store.value(c.gamma),
                    self.store.value(c.beta),
                    self.store.value(c.rmean),
                    self.store.value(c.rvar),
                    F::from_f64(BN_EPS),
                )?;
                s = ops::relu3(&bn_out);
            }
            let added = self.add_residual(bi, &block_in, &s)?;
            h = ops::avg_pool1d(&added)?;
        }
        Ok(global_avg(&h).0)
    }

    /// Argmax class per batch row, eval mode.
    pub fn predict(&self, x: &Array3<F>) -> Result<Vec<usize>> {
        let logits = self.forward_eval(x)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0usize;
                for (c, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

fn global_avg<F: Scalar>(h: &Array3<F>) -> (Mat<F>, usize) {
    let t = h.time();
    let inv_t = F::from_f64(t as f64).recip();
    let mut g = Mat::zeros(h.batch(), h.channels());
    for b in 0..h.batch() {
        for c in 0..h.channels() {
            *g.at_mut(b, c) = h.series(b, c).iter().copied().sum::<F>() * inv_t;
        }
    }
    (g, t)
}

impl TcnClassifier<f32> {
    pub fn save(&self, path: &Path, extra_meta: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra_meta.clone();
        meta.insert("model".into(), "classifier".into());
        meta.insert("spec".into(), serde_json::to_string(&self.spec)?);
        meta.insert("spec_hash".into(), spec_hash(&self.spec));
        crate::nn::checkpoint::save_store(path, &self.store, &meta)
    }

    pub fn load(path: &Path, spec: &ClassifierSpec) -> Result<(Self, BTreeMap<String, String>)> {
        let mut model = TcnClassifier::build(spec, 0)?;
        let meta = crate::nn::checkpoint::load_into(path, &mut model.store)?;
        match meta.get("spec_hash") {
            Some(h) if *h == spec_hash(spec) => Ok((model, meta)),
            _ => Err(Error::Data(format!(
                "checkpoint {} does not match the classifier spec",
                path.display()
            ))),
        }
    }

    pub fn load_with_embedded_spec(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let (_, meta) = crate::nn::checkpoint::load_entries(path)?;
        let spec_text = meta
            .get("spec")
            .ok_or_else(|| Error::Data(format!("checkpoint {} has no embedded spec", path.display())))?;
        let spec: ClassifierSpec = serde_json::from_str(spec_text)?;
        Self::load(path, &spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_spec(classes: usize) -> ClassifierSpec {
        ClassifierSpec {
            input_channels: 6,
            frames: 16,
            blocks: vec![8, 12],
            convs_per_block: 2,
            kernel: 4,
            classes,
        }
    }

    #[test]
    fn logits_shape_follows_spec() {
        // HDM-scale head: 130 classes
        let spec = ClassifierSpec {
            input_channels: 93,
            frames: 112,
            blocks: vec![16, 24, 32],
            convs_per_block: 1,
            kernel: 8,
            classes: 130,
        };
        let mut model = TcnClassifier::<f32>::build(&spec, 3).unwrap();
        let x = Array3::<f32>::zeros(4, 93, 112);
        let (logits, _) = model.forward_train(&x).unwrap();
        assert_eq!((logits.rows(), logits.cols()), (4, 130));
    }

    #[test]
    fn untrained_accuracy_is_chance_level() {
        let classes = 10usize;
        let spec = small_spec(classes);
        let model = TcnClassifier::<f32>::build(&spec, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let samples = 1000usize;
        let mut correct = 0usize;
        for _ in 0..samples {
            let n = spec.input_channels * spec.frames;
            let x = Array3::from_vec(
                1,
                spec.input_channels,
                spec.frames,
                (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
            )
            .unwrap();
            let label = rng.gen_range(0..classes);
            if model.predict(&x).unwrap()[0] == label {
                correct += 1;
            }
        }
        // accuracy ~ Binomial(1000, 1/10): 3 sigma around 100
        let p = 1.0 / classes as f64;
        let sigma = (samples as f64 * p * (1.0 - p)).sqrt();
        let dev = (correct as f64 - samples as f64 * p).abs();
        assert!(dev < 3.0 * sigma, "untrained accuracy {correct}/1000 deviates from chance");
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let spec = small_spec(4);
        let model = TcnClassifier::<f64>::build(&spec, 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let n = spec.input_channels * spec.frames;
        let x = Array3::from_vec(
            2,
            spec.input_channels,
            spec.frames,
            (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let a = model.forward_eval(&x).unwrap();
        let b = model.forward_eval(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn residual_projection_appears_exactly_when_width_changes() {
        let spec = ClassifierSpec {
            input_channels: 8,
            frames: 8,
            blocks: vec![8, 16],
            convs_per_block: 1,
            kernel: 3,
            classes: 3,
        };
        let model = TcnClassifier::<f32>::build(&spec, 29).unwrap();
        assert!(model.blocks[0].proj.is_none(), "same width, identity shortcut");
        assert!(model.blocks[1].proj.is_some(), "width change needs projection");
    }

    #[test]
    fn training_gradients_match_finite_differences() {
        use crate::nn::gradcheck::{finite_difference_grad, max_rel_error};
        let spec = ClassifierSpec {
            input_channels: 3,
            frames: 8,
            blocks: vec![4],
            convs_per_block: 1,
            kernel: 3,
            classes: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 2 * spec.input_channels * spec.frames;
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = vec![2usize, 0];

        // run forward_train on fresh clones so running-stat updates don't
        // leak between finite-difference evaluations
        let model = TcnClassifier::<f64>::build(&spec, 33).unwrap();
        let f = |xv: &[f64]| -> f64 {
            let mut m = TcnClassifier::<f64>::build(&spec, 33).unwrap();
            let x = Array3::from_vec(2, 3, 8, xv.to_vec()).unwrap();
            let (logits, _) = m.forward_train(&x).unwrap();
            ops::softmax_cross_entropy(&logits, &labels).unwrap().0
        };

        let mut m = TcnClassifier::<f64>::build(&spec, 33).unwrap();
        let x = Array3::from_vec(2, 3, 8, x0.clone()).unwrap();
        let (logits, cache) = m.forward_train(&x).unwrap();
        let (_, probs) = ops::softmax_cross_entropy(&logits, &labels).unwrap();
        let dlogits = ops::softmax_cross_entropy_backward(&probs, &labels);
        let mut grads = Gradients::zeros_like(model.params());
        m.backward(&cache, &dlogits, &mut grads).unwrap();

        // check the head and first conv weight gradients against FD
        for name in ["head.w", "blk0.conv0.w", "blk0.conv0.bn.scale"] {
            let id = m.params().id_of(name).unwrap();
            let w0 = m.params().value(id).data().to_vec();
            let shape = m.params().value(id).shape().to_vec();
            let fm = |wv: &[f64]| -> f64 {
                let mut m2 = TcnClassifier::<f64>::build(&spec, 33).unwrap();
                let id2 = m2.params().id_of(name).unwrap();
                *m2.params_mut().value_mut(id2) = Tensor::from_vec(&shape, wv.to_vec()).unwrap();
                let x = Array3::from_vec(2, 3, 8, x0.clone()).unwrap();
                let (logits, _) = m2.forward_train(&x).unwrap();
                ops::softmax_cross_entropy(&logits, &labels).unwrap().0
            };
            let fd = finite_difference_grad(fm, &w0, 1e-5);
            let err = max_rel_error(grads.get(id).data(), &fd);
            assert!(err < 1e-4, "{name} gradient error {err}");
        }
        let fd_x = finite_difference_grad(f, &x0, 1e-5);
        assert!(fd_x.iter().all(|v| v.is_finite()));
    }
}
