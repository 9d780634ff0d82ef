//! The frame-wise autoencoder baseline: a pose prior with no temporal
//! context.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{spec_hash, FramewiseSpec};
use crate::nn::array::{Mat, Scalar};
use crate::nn::init::uniform_fanin;
use crate::nn::ops;
use crate::nn::params::{Gradients, ParamId, ParamStore};
use crate::util::derive_seed;
use crate::{Error, Result};

/// Fully-connected autoencoder applied to single frames (rows of 3J values).
/// ReLU after every layer except the bottleneck and the output.
pub struct FramewiseAutoencoder<F> {
    spec: FramewiseSpec,
    store: ParamStore<F>,
    /// (weight, bias, relu_after) per layer, encoder then decoder.
    layers: Vec<(ParamId, ParamId, bool)>,
    enc_layers: usize,
}

pub struct FramewiseCache<F> {
    /// Input to each linear layer.
    inputs: Vec<Mat<F>>,
    /// Pre-ReLU output of layers that carry an activation.
    pre_relu: Vec<Option<Mat<F>>>,
}

impl<F: Scalar> FramewiseAutoencoder<F> {
    pub fn build(spec: &FramewiseSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "framewise-init"));
        let mut store = ParamStore::new();
        let mut widths = vec![spec.input_dim];
        widths.extend(&spec.hidden);
        widths.push(spec.latent);
        let enc_widths = widths.clone();
        let mut dec_widths: Vec<usize> = widths.into_iter().rev().collect();
        dec_widths[0] = spec.latent;

        let mut layers = Vec::new();
        let add_stack = |widths: &[usize], prefix: &str, store: &mut ParamStore<F>, rng: &mut ChaCha8Rng| -> Result<Vec<(ParamId, ParamId, bool)>> {
            let mut out = Vec::new();
            for l in 0..widths.len() - 1 {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let w = store.add(
                    format!("{prefix}{l}.w"),
                    uniform_fanin(&[fan_out, fan_in], fan_in, rng),
                    true,
                )?;
                let b = store.add(format!("{prefix}{l}.b"), uniform_fanin(&[fan_out], fan_in, rng), true)?;
                // relu on all but the stack's final layer (bottleneck / output)
                out.push((w, b, l + 1 < widths.len() - 1));
            }
            Ok(out)
        };
        let enc = add_stack(&enc_widths, "enc.fc", &mut store, &mut rng)?;
        let enc_layers = enc.len();
        layers.extend(enc);
        layers.extend(add_stack(&dec_widths, "dec.fc", &mut store, &mut rng)?);

        Ok(FramewiseAutoencoder { spec: spec.clone(), store, layers, enc_layers })
    }

    pub fn spec(&self) -> &FramewiseSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    fn run_stack(
        &self,
        x: &Mat<F>,
        range: std::ops::Range<usize>,
    ) -> Result<(Mat<F>, FramewiseCache<F>)> {
        let mut h = x.clone();
        let mut cache = FramewiseCache { inputs: Vec::new(), pre_relu: Vec::new() };
        for li in range {
            let (w, b, act) = self.layers[li];
            cache.inputs.push(h.clone());
            let y = ops::linear(&h, self.store.value(w), self.store.value(b))?;
            if act {
                cache.pre_relu.push(Some(y.clone()));
                h = Mat::from_vec(y.rows(), y.cols(), ops::relu(y.data()))?;
            } else {
                cache.pre_relu.push(None);
                h = y;
            }
        }
        Ok((h, cache))
    }

    fn stack_backward(
        &self,
        cache: &FramewiseCache<F>,
        range: std::ops::Range<usize>,
        dy: &Mat<F>,
        grads: &mut Gradients<F>,
    ) -> Result<Mat<F>> {
        let mut dh = dy.clone();
        for (ci, li) in range.clone().enumerate().rev() {
            let (w, b, _) = self.layers[li];
            if let Some(pre) = &cache.pre_relu[ci] {
                dh = Mat::from_vec(dh.rows(), dh.cols(), ops::relu_backward(pre.data(), dh.data()))?;
            }
            let (dx, dw, db) = ops::linear_backward(&cache.inputs[ci], self.store.value(w), &dh)?;
            grads.accumulate(w, &dw);
            grads.accumulate(b, &db);
            dh = dx;
        }
        Ok(dh)
    }

    /// Encode frames (rows of 3J) to per-frame latents (rows of `latent`).
    pub fn encode_frames(&self, x: &Mat<F>) -> Result<(Mat<F>, FramewiseCache<F>)> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "frame-wise encode: {} columns, spec wants 3J = {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        self.run_stack(x, 0..self.enc_layers)
    }

    pub fn decode_frames(&self, z: &Mat<F>) -> Result<(Mat<F>, FramewiseCache<F>)> {
        if z.cols() != self.spec.latent {
            return Err(Error::Shape(format!(
                "frame-wise decode: {} columns, spec wants latent = {}",
                z.cols(),
                self.spec.latent
            )));
        }
        self.run_stack(z, self.enc_layers..self.layers.len())
    }

    pub fn encode_backward(
        &self,
        cache: &FramewiseCache<F>,
        dz: &Mat<F>,
        grads: &mut Gradients<F>,
    ) -> Result<Mat<F>> {
        self.stack_backward(cache, 0..self.enc_layers, dz, grads)
    }

    pub fn decode_backward(
        &self,
        cache: &FramewiseCache<F>,
        dy: &Mat<F>,
        grads: &mut Gradients<F>,
    ) -> Result<Mat<F>> {
        self.stack_backward(cache, self.enc_layers..self.layers.len(), dy, grads)
    }

    /// Latent gradient only (frozen decoder).
    pub fn decode_backward_input(&self, cache: &FramewiseCache<F>, dy: &Mat<F>) -> Result<Mat<F>> {
        let mut dh = dy.clone();
        for (ci, li) in (self.enc_layers..self.layers.len()).enumerate().rev() {
            let (w, _, _) = self.layers[li];
            if let Some(pre) = &cache.pre_relu[ci] {
                dh = Mat::from_vec(dh.rows(), dh.cols(), ops::relu_backward(pre.data(), dh.data()))?;
            }
            dh = ops::linear_backward_input(self.store.value(w), &dh);
        }
        Ok(dh)
    }

    /// Reconstruct frames: decode(encode(x)).
    pub fn reconstruct_frames(&self, x: &Mat<F>) -> Result<Mat<F>> {
        let (z, _) = self.encode_frames(x)?;
        Ok(self.decode_frames(&z)?.0)
    }
}

impl FramewiseAutoencoder<f32> {
    pub fn save(&self, path: &Path, extra_meta: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra_meta.clone();
        meta.insert("model".into(), "framewise".into());
        meta.insert("spec".into(), serde_json::to_string(&self.spec)?);
        meta.insert("spec_hash".into(), spec_hash(&self.spec));
        crate::nn::checkpoint::save_store(path, &self.store, &meta)
    }

    pub fn load(path: &Path, spec: &FramewiseSpec) -> Result<(Self, BTreeMap<String, String>)> {
        let mut model = FramewiseAutoencoder::build(spec, 0)?;
        let meta = crate::nn::checkpoint::load_into(path, &mut model.store)?;
        match meta.get("spec_hash") {
            Some(h) if *h == spec_hash(spec) => Ok((model, meta)),
            _ => Err(Error::Data(format!(
                "checkpoint {} does not match the frame-wise spec",
                path.display()
            ))),
        }
    }

    pub fn load_with_embedded_spec(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let (_, meta) = crate::nn::checkpoint::load_entries(path)?;
        let spec_text = meta
            .get("spec")
            .ok_or_else(|| Error::Data(format!("checkpoint {} has no embedded spec", path.display())))?;
        let spec: FramewiseSpec = serde_json::from_str(spec_text)?;
        Self::load(path, &spec)
    }
}
