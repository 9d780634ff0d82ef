//! Builders for the three network families: the temporal-convolutional
//! action autoencoder, the frame-wise autoencoder baseline, and the TCN
//! classifier used as the evaluation metric.

mod autoencoder;
mod classifier;
mod framewise;

pub use autoencoder::{Autoencoder, DecodeCache, EncodeCache};
pub use classifier::{ClassifierCache, TcnClassifier};
pub use framewise::{FramewiseAutoencoder, FramewiseCache};

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::util::sha256_hex;
use crate::{Error, Result};

/// Action autoencoder hyperparameters.
///
/// The encoder is `depth` rounds of (same-padded conv, ReLU, halving average
/// pool) followed by a fully-connected layer to the latent code; the decoder
/// mirrors it with transposed convolutions. `frames` must be divisible by
/// `2^depth` so the pooling chain stays integral.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AutoencoderSpec {
    /// 3J for a J-joint skeleton.
    pub input_channels: usize,
    pub depth: usize,
    pub kernel: usize,
    pub feature_maps: usize,
    pub latent: usize,
    pub frames: usize,
}

impl AutoencoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 {
            return Err(Error::Config("autoencoder: latent dimension must be positive".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("autoencoder: depth must be at least 1".into()));
        }
        let div = 1usize << self.depth;
        if self.frames % div != 0 {
            return Err(Error::Config(format!(
                "autoencoder: N = {} not divisible by 2^depth = {div}; pick a resampling target that is",
                self.frames
            )));
        }
        if self.input_channels == 0 || self.feature_maps == 0 || self.kernel == 0 {
            return Err(Error::Config("autoencoder: zero-sized dimension in spec".into()));
        }
        Ok(())
    }

    /// Time length at the bottom of the encoder.
    pub fn pooled_frames(&self) -> usize {
        self.frames >> self.depth
    }
}

/// Frame-wise autoencoder hyperparameters: `2 * (hidden.len() + 1)`
/// fully-connected layers with a width-`latent` bottleneck.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FramewiseSpec {
    /// 3J per frame.
    pub input_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent: usize,
}

impl FramewiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent == 0 {
            return Err(Error::Config("frame-wise autoencoder: zero-sized dimension".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("frame-wise autoencoder: zero hidden width".into()));
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        2 * (self.hidden.len() + 1)
    }
}

/// TCN classifier hyperparameters: per-block feature widths, convolutions
/// per block, residual connections, halving pool after each block, then a
/// global-average + fully-connected softmax head.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassifierSpec {
    pub input_channels: usize,
    pub frames: usize,
    /// Feature width of each TCN block.
    pub blocks: Vec<usize>,
    pub convs_per_block: usize,
    pub kernel: usize,
    pub classes: usize,
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("classifier: needs at least one block".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("classifier: needs at least two classes".into()));
        }
        if self.convs_per_block == 0 {
            return Err(Error::Config("classifier: needs at least one conv per block".into()));
        }
        let div = 1usize << self.blocks.len();
        if self.frames % div != 0 {
            return Err(Error::Config(format!(
                "classifier: N = {} not divisible by 2^blocks = {div}",
                self.frames
            )));
        }
        if self.blocks.iter().any(|&b| b == 0) || self.input_channels == 0 || self.kernel == 0 {
            return Err(Error::Config("classifier: zero-sized dimension in spec".into()));
        }
        Ok(())
    }
}

/// Canonical hash of a spec, stored in checkpoints so mismatched weights are
/// rejected at load time.
pub fn spec_hash<S: Serialize>(spec: &S) -> String {
    let bytes = serde_json::to_vec(spec).expect("spec serializes");
    sha256_hex(&bytes)
}

/// Read a JSON spec file.
pub fn load_spec<S: DeserializeOwned>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let mut spec = AutoencoderSpec {
            input_channels: 93,
            depth: 4,
            kernel: 4,
            feature_maps: 75,
            latent: 200,
            frames: 112,
        };
        spec.validate().unwrap();
        assert_eq!(spec.pooled_frames(), 7);
        spec.frames = 100; // not divisible by 16
        assert!(spec.validate().is_err());

        let cls = ClassifierSpec {
            input_channels: 93,
            frames: 112,
            blocks: vec![32, 64, 96],
            convs_per_block: 1,
            kernel: 8,
            classes: 130,
        };
        cls.validate().unwrap();

        let fw = FramewiseSpec { input_dim: 93, hidden: vec![64, 32, 16], latent: 8 };
        fw.validate().unwrap();
        assert_eq!(fw.layer_count(), 8);
    }

    #[test]
    fn spec_hash_is_stable_and_discriminating() {
        let a = AutoencoderSpec {
            input_channels: 45,
            depth: 3,
            kernel: 4,
            feature_maps: 48,
            latent: 32,
            frames: 64,
        };
        let mut b = a.clone();
        assert_eq!(spec_hash(&a), spec_hash(&b));
        b.latent = 33;
        assert_ne!(spec_hash(&a), spec_hash(&b));
    }
}
