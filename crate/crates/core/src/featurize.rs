//! Dataset-level featurization: one PNG per manifest record plus `meta.json`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, TARGET_RATE};
use crate::dataset::ManifestRecord;
use crate::error::{Error, Result};
use crate::features::{render_image, LogMel, MelConfig, StftConfig, DEFAULT_FLOOR_DB, DEFAULT_IMAGE_SIZE};

pub const FEATURES_DIR: &str = "features";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub floor_db: f64,
    pub image_size: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            floor_db: DEFAULT_FLOOR_DB,
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.mel.validate(TARGET_RATE)?;
        if self.image_size == 0 {
            return Err(Error::InvalidConfig("image_size must be positive".into()));
        }
        if self.floor_db.is_nan() || self.floor_db >= 0.0 {
            return Err(Error::InvalidConfig("floor_db must be negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub config: FeatureConfig,
    pub sample_rate: u32,
    pub collapsed_mel_bands: Vec<usize>,
    pub n_images: usize,
    pub degenerate_samples: Vec<String>,
}

/// Render every record's WAV into `<out_root>/features/<sample_id>.png`,
/// returning the records with `image_path` filled in. Image paths are
/// relative to `dataset_dir` when `out_root` lies inside it, absolute otherwise.
pub fn featurize_dataset(
    dataset_dir: &Path,
    out_root: &Path,
    records: &[ManifestRecord],
    cfg: &FeatureConfig,
) -> Result<(Vec<ManifestRecord>, FeatureMeta)> {
    cfg.validate()?;
    let front = LogMel::new(cfg.stft.clone(), &cfg.mel, cfg.floor_db)?;
    let out_dir = out_root.join(FEATURES_DIR);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let prefix = image_prefix(dataset_dir, &out_dir);

    let results: Vec<(ManifestRecord, bool)> = records
        .par_iter()
        .map(|r| {
            let clip = audio::load_wav(dataset_dir.join(&r.wav_path))?.resample(TARGET_RATE);
            let spec = front.compute(clip.samples())?;
            let name = format!("{}.png", r.sample_id);
            render_image(&spec, cfg.image_size).write_png(&out_dir.join(&name))?;
            let mut rec = r.clone();
            rec.image_path = Some(format!("{prefix}/{name}"));
            Ok((rec, spec.degenerate))
        })
        .collect::<Result<_>>()?;

    let degenerate_samples = results
        .iter()
        .filter(|(_, d)| *d)
        .map(|(r, _)| r.sample_id.clone())
        .collect();
    let updated: Vec<ManifestRecord> = results.into_iter().map(|(r, _)| r).collect();
    let meta = FeatureMeta {
        config: cfg.clone(),
        sample_rate: TARGET_RATE,
        collapsed_mel_bands: front.filterbank().collapsed.clone(),
        n_images: updated.len(),
        degenerate_samples,
    };
    let meta_path = out_dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok((updated, meta))
}

fn image_prefix(dataset_dir: &Path, features_dir: &Path) -> String {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_owned());
    let (base, feat) = (abs(dataset_dir), abs(features_dir));
    match feat.strip_prefix(&base) {
        Ok(rel) => rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
        Err(_) => feat.to_string_lossy().into_owned(),
    }
}
