//! Synthetic simulator, on-disk dataset container and train/val/test splits.

mod dataset;
mod simulator;
mod split;

pub use dataset::{
    ArrayDescriptor, Dataset, DatasetManifest, DTYPE, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use simulator::{
    validate_size, Observation, Regime, Simulator, BAND_SHRINK, BAND_WEIGHTS, DEAD_AMPLITUDE,
    NOISE_STD, NUM_BANDS, NUM_PARAMS, SIMULATOR_VERSION,
};
pub use split::{check_fraction, halves, split, subsample, SplitSpec, Splits, ALLOWED_FRACTIONS};
