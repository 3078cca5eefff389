//! Seed-reproducible synthesis of labelled multi-species mosquito swarm audio.
//!
//! The pipeline runs source recordings through a [`bank::ChunkBank`], mixes
//! chunks into noisy swarm samples ([`synth`]), turns them into log-mel
//! images ([`features`], [`featurize`]), splits the dataset by label
//! cardinality ([`dataset`]) and scores multi-label predictions ([`metrics`]).

pub mod audio;
pub mod bank;
pub mod dataset;
pub mod error;
pub mod features;
pub mod featurize;
pub mod metrics;
pub mod seed;
pub mod species;
pub mod synth;

pub use audio::{load_wav, write_wav, AudioClip, TARGET_RATE};
pub use bank::{Catalog, ChunkBank, ChunkRef, ChunkSource, MemorySource};
pub use dataset::{
    label_matrix, read_manifest, stratified_split, write_manifest, ManifestRecord, Split, SplitAssignment,
    SplitRatios,
};
pub use error::{Error, Result};
pub use features::{log_mel, render_image, MelConfig, SpectrogramMatrix, StftConfig};
pub use featurize::{featurize_dataset, FeatureConfig};
pub use metrics::{threshold_sweep, EvalReport, PredictionMatrix, ThresholdConfig};
pub use species::{SpeciesId, NUM_SPECIES};
pub use synth::{
    add_noise, draw_recipe, render_mix, synthesize_dataset, LabelVector, MixComponent, SwarmRecipe,
    SynthConfig, SynthMode,
};
