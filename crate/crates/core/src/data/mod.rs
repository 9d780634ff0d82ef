//! Data model for skeletal action sequences: the `3J x N` coordinate matrix,
//! skeleton topology, the sampling operator in all its variants, and
//! preprocessing (resampling, hip-centering, missing-joint fill).

pub mod manifest;
pub mod mask;
pub mod preprocess;
pub mod sequence;
pub mod synth;
pub mod topology;

pub use manifest::{Dataset, DatasetManifest, SequenceEntry};
pub use mask::{apply_mask, gen_limb_mask, gen_perframe_mask, gen_random_mask, MaskSpec};
pub use preprocess::{
    fill_missing, hip_center, mean_trajectories, resample, FillStrategy, MeanTrajectories,
};
pub use sequence::ActionSequence;
pub use topology::SkeletonTopology;
