//! The temporal-convolutional action autoencoder (the deep prior).

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{spec_hash, AutoencoderSpec};
use crate::nn::array::{Array3, Mat, Scalar};
use crate::nn::init::uniform_fanin;
use crate::nn::ops;
use crate::nn::params::{Gradients, ParamId, ParamStore};
use crate::util::derive_seed;
use crate::{Error, Result};

/// Encoder: `depth` x (conv + ReLU + avg-pool), then FC to the latent code.
/// Decoder: FC back to the pooled shape, then `depth` transposed convolutions
/// (ReLU between, linear output so coordinates can be negative).
pub struct Autoencoder<F> {
    spec: AutoencoderSpec,
    store: ParamStore<F>,
    enc_convs: Vec<(ParamId, ParamId)>,
    enc_fc: (ParamId, ParamId),
    dec_fc: (ParamId, ParamId),
    dec_convts: Vec<(ParamId, ParamId)>,
}

pub struct EncodeCache<F> {
    conv_in: Vec<Array3<F>>,
    conv_out: Vec<Array3<F>>,
    flat: Mat<F>,
}

pub struct DecodeCache<F> {
    z: Mat<F>,
    convt_in: Vec<Array3<F>>,
    convt_out: Vec<Array3<F>>,
}

impl<F: Scalar> Autoencoder<F> {
    /// Build with fan-in uniform initialization, deterministic per seed.
    pub fn build(spec: &AutoencoderSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "autoencoder-init"));
        let mut store = ParamStore::new();
        let maps = spec.feature_maps;
        let k = spec.kernel;

        let mut enc_convs = Vec::with_capacity(spec.depth);
        for l in 0..spec.depth {
            let cin = if l == 0 { spec.input_channels } else { maps };
            let w = store.add(
                format!("enc.conv{l}.w"),
                uniform_fanin(&[maps, cin, k], cin * k, &mut rng),
                true,
            )?;
            let b = store.add(format!("enc.conv{l}.b"), uniform_fanin(&[maps], cin * k, &mut rng), true)?;
            enc_convs.push((w, b));
        }
        let flat_dim = maps * spec.pooled_frames();
        let enc_fc = (
            store.add("enc.fc.w", uniform_fanin(&[spec.latent, flat_dim], flat_dim, &mut rng), true)?,
            store.add("enc.fc.b", uniform_fanin(&[spec.latent], flat_dim, &mut rng), true)?,
        );
        let dec_fc = (
            store.add("dec.fc.w", uniform_fanin(&[flat_dim, spec.latent], spec.latent, &mut rng), true)?,
            store.add("dec.fc.b", uniform_fanin(&[flat_dim], spec.latent, &mut rng), true)?,
        );
        let mut dec_convts = Vec::with_capacity(spec.depth);
        for l in 0..spec.depth {
            let cout = if l == spec.depth - 1 { spec.input_channels } else { maps };
            let w = store.add(
                format!("dec.convt{l}.w"),
                uniform_fanin(&[cout, maps, k], maps * k, &mut rng),
                true,
            )?;
            let b = store.add(format!("dec.convt{l}.b"), uniform_fanin(&[cout], maps * k, &mut rng), true)?;
            dec_convts.push((w, b));
        }
        Ok(Autoencoder { spec: spec.clone(), store, enc_convs, enc_fc, dec_fc, dec_convts })
    }

    pub fn spec(&self) -> &AutoencoderSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent
    }

    fn check_input(&self, x: &Array3<F>) -> Result<()> {
        if x.channels() != self.spec.input_channels || x.time() != self.spec.frames {
            return Err(Error::Shape(format!(
                "autoencoder input is ({}, {}, {}), spec wants channels {} and frames {}",
                x.batch(),
                x.channels(),
                x.time(),
                self.spec.input_channels,
                self.spec.frames
            )));
        }
        Ok(())
    }

    /// Map (B, 3J, N) to latent codes (B, latent).
    pub fn encode(&self, x: &Array3<F>) -> Result<(Mat<F>, EncodeCache<F>)> {
        self.check_input(x)?;
        let mut conv_in = Vec::with_capacity(self.spec.depth);
        let mut conv_out = Vec::with_capacity(self.spec.depth);
        let mut h = x.clone();
        for (w, b) in &self.enc_convs {
            conv_in.push(h.clone());
            let z = ops::conv1d(&h, self.store.value(*w), self.store.value(*b))?;
            let r = ops::relu3(&z);
            conv_out.push(z);
            h = ops::avg_pool1d(&r)?;
        }
        let flat = h.flatten_rows();
        let z = ops::linear(&flat, self.store.value(self.enc_fc.0), self.store.value(self.enc_fc.1))?;
        Ok((z, EncodeCache { conv_in, conv_out, flat }))
    }

    /// Backward through the encoder, accumulating parameter gradients and
    /// returning the input gradient.
    pub fn encode_backward(
        &self,
        cache: &EncodeCache<F>,
        dz: &Mat<F>,
        grads: &mut Gradients<F>,
    ) -> Result<Array3<F>> {
        let (dflat, dw, db) =
            ops::linear_backward(&cache.flat, self.store.value(self.enc_fc.0), dz)?;
        grads.accumulate(self.enc_fc.0, &dw);
        grads.accumulate(self.enc_fc.1, &db);
        let maps = self.spec.feature_maps;
        let mut dh = dflat.into_array3(maps, self.spec.pooled_frames())?;
        for l in (0..self.spec.depth).rev() {
            let dr = ops::avg_pool1d_backward(&dh);
            let dz_l = ops::relu3_backward(&cache.conv_out[l], &dr);
            let (w, b) = self.enc_convs[l];
            let (dx, dw, db) = ops::conv1d_backward(&cache.conv_in[l], self.store.value(w), &dz_l)?;
            grads.accumulate(w, &dw);
            grads.accumulate(b, &db);
            dh = dx;
        }
        Ok(dh)
    }

    /// Map latent codes (B, latent) to reconstructions (B, 3J, N).
    pub fn decode(&self, z: &Mat<F>) -> Result<(Array3<F>, DecodeCache<F>)> {
        if z.cols() != self.spec.latent {
            return Err(Error::Shape(format!(
                "decode: latent width {} does not match spec latent {}",
                z.cols(),
                self.spec.latent
            )));
        }
        let flat = ops::linear(z, self.store.value(self.dec_fc.0), self.store.value(self.dec_fc.1))?;
        let mut h = flat.into_array3(self.spec.feature_maps, self.spec.pooled_frames())?;
        let mut convt_in = Vec::with_capacity(self.spec.depth);
        let mut convt_out = Vec::with_capacity(self.spec.depth);
        for (l, (w, b)) in self.dec_convts.iter().enumerate() {
            convt_in.push(h.clone());
            let y = ops::conv_transpose1d(&h, self.store.value(*w), self.store.value(*b))?;
            if l + 1 < self.spec.depth {
                convt_out.push(y.clone());
                h = ops::relu3(&y);
            } else {
                h = y;
            }
        }
        Ok((h, DecodeCache { z: z.clone(), convt_in, convt_out }))
    }

    /// Backward through the decoder, accumulating parameter gradients and
    /// returning the latent gradient.
    pub fn decode_backward(
        &self,
        cache: &DecodeCache<F>,
        dxhat: &Array3<F>,
        grads: &mut Gradients<F>,
    ) -> Result<Mat<F>> {
        let mut dh = dxhat.clone();
        for l in (0..self.spec.depth).rev() {
            let (w, b) = self.dec_convts[l];
            let (dx, dw, db) =
                ops::conv_transpose1d_backward(&cache.convt_in[l], self.store.value(w), &dh)?;
            grads.accumulate(w, &dw);
            grads.accumulate(b, &db);
            dh = if l > 0 { ops::relu3_backward(&cache.convt_out[l - 1], &dx) } else { dx };
        }
        let dflat = dh.flatten_rows();
        let (dz, dw, db) = ops::linear_backward(&cache.z, self.store.value(self.dec_fc.0), &dflat)?;
        grads.accumulate(self.dec_fc.0, &dw);
        grads.accumulate(self.dec_fc.1, &db);
        Ok(dz)
    }

    /// Latent gradient only, skipping the weight gradients. This is the
    /// inversion hot path; the decoder stays frozen there.
    pub fn decode_backward_input(&self, cache: &DecodeCache<F>, dxhat: &Array3<F>) -> Mat<F> {
        let mut dh = dxhat.clone();
        for l in (0..self.spec.depth).rev() {
            let (w, _) = self.dec_convts[l];
            let dx = ops::conv_transpose1d_backward_input(self.store.value(w), &dh);
            dh = if l > 0 { ops::relu3_backward(&cache.convt_out[l - 1], &dx) } else { dx };
        }
        let dflat = dh.flatten_rows();
        ops::linear_backward_input(self.store.value(self.dec_fc.0), &dflat)
    }

    /// Full reconstruction pass, dropping caches.
    pub fn reconstruct(&self, x: &Array3<F>) -> Result<Array3<F>> {
        let (z, _) = self.encode(x)?;
        Ok(self.decode(&z)?.0)
    }
}

impl Autoencoder<f32> {
    pub fn save(&self, path: &Path, extra_meta: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra_meta.clone();
        meta.insert("model".into(), "autoencoder".into());
        meta.insert("spec".into(), serde_json::to_string(&self.spec)?);
        meta.insert("spec_hash".into(), spec_hash(&self.spec));
        crate::nn::checkpoint::save_store(path, &self.store, &meta)
    }

    /// Load weights for `spec`; the checkpoint's spec hash must match.
    pub fn load(path: &Path, spec: &AutoencoderSpec) -> Result<(Self, BTreeMap<String, String>)> {
        let mut model = Autoencoder::build(spec, 0)?;
        let meta = crate::nn::checkpoint::load_into(path, &mut model.store)?;
        match meta.get("spec_hash") {
            Some(h) if *h == spec_hash(spec) => Ok((model, meta)),
            Some(_) => Err(Error::Data(format!(
                "checkpoint {} was trained with a different autoencoder spec",
                path.display()
            ))),
            None => Err(Error::Data(format!("checkpoint {} has no spec hash", path.display()))),
        }
    }

    /// Load a checkpoint using the spec embedded in its metadata.
    pub fn load_with_embedded_spec(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let (_, meta) = crate::nn::checkpoint::load_entries(path)?;
        let spec_text = meta
            .get("spec")
            .ok_or_else(|| Error::Data(format!("checkpoint {} has no embedded spec", path.display())))?;
        let spec: AutoencoderSpec = serde_json::from_str(spec_text)?;
        Self::load(path, &spec)
    }
}
