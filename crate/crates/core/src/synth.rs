//! Swarm synthesis: recipe drawing, mixing and white-noise injection.
//!
//! A sample is the sum of `n` chunk placements inside a fixed window,
//!
//! ```text
//! X[k] = Σ_i g_i · x_i[k − round(τ_i · 16000)]      (support of x_i only)
//! ```
//!
//! followed by an optional global rescale when the peak exceeds 1.0 and then
//! additive Gaussian noise at a target SNR measured against the clean mix
//! over the whole window.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip, TARGET_RATE};
use crate::bank::{Catalog, ChunkRef, ChunkSource, MAX_CHUNK_S};
use crate::dataset::{self, ManifestRecord};
use crate::error::{Error, Result};
use crate::seed;
use crate::species::{SpeciesId, NUM_SPECIES};

pub const GAIN_MIN: f64 = 0.2;
pub const GAIN_MAX: f64 = 1.0;
pub const OFFSET_MAX_S: f64 = 3.0;
/// Peak the mix is rescaled to when it would otherwise exceed 1.0.
pub const CLIP_GUARD_PEAK: f64 = 0.99;
/// Attempts per sample before giving up on silent mixes.
pub const REJECTION_BUDGET: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    /// 3–7 chunks from at most 3 species.
    #[default]
    Detailed,
    /// 1–10 chunks from any of the 6 species.
    Eq3,
}

impl std::str::FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "detailed" => Ok(SynthMode::Detailed),
            "eq3" => Ok(SynthMode::Eq3),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub window_s: f64,
    pub chunks_min: usize,
    pub chunks_max: usize,
    pub max_species: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub mode: SynthMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::for_mode(SynthMode::Detailed)
    }
}

impl SynthConfig {
    pub fn for_mode(mode: SynthMode) -> Self {
        let (chunks_min, chunks_max, max_species) = match mode {
            SynthMode::Detailed => (3, 7, 3),
            SynthMode::Eq3 => (1, 10, NUM_SPECIES),
        };
        Self {
            window_s: 5.0,
            chunks_min,
            chunks_max,
            max_species,
            snr_min_db: 20.0,
            snr_max_db: 40.0,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.chunks_min < 1 || self.chunks_min > self.chunks_max {
            return bad(format!(
                "need 1 <= chunks_min <= chunks_max, got {}..{}",
                self.chunks_min, self.chunks_max
            ));
        }
        if !(1..=NUM_SPECIES).contains(&self.max_species) {
            return bad(format!("max_species must be in 1..=6, got {}", self.max_species));
        }
        if !(self.snr_min_db.is_finite() && self.snr_max_db.is_finite()) || self.snr_min_db > self.snr_max_db
        {
            return bad(format!(
                "need snr_min_db <= snr_max_db, got {}..{}",
                self.snr_min_db, self.snr_max_db
            ));
        }
        if self.window_s.is_nan() || self.window_s < OFFSET_MAX_S + MAX_CHUNK_S {
            return bad(format!(
                "window_s must be at least {} s, got {}",
                OFFSET_MAX_S + MAX_CHUNK_S,
                self.window_s
            ));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * TARGET_RATE as f64).round() as usize
    }
}

/// One chunk placed in the mix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixComponent {
    pub chunk: ChunkRef,
    pub gain: f64,
    pub offset_s: f64,
}

impl MixComponent {
    pub fn offset_sample(&self) -> usize {
        (self.offset_s * TARGET_RATE as f64).round() as usize
    }
}

/// Complete provenance of one synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmRecipe {
    pub sample_id: String,
    pub components: Vec<MixComponent>,
    pub snr_db: f64,
    pub noise_seed: u64,
    /// Clipping-guard factor applied to the clean mix (1.0 when unused).
    pub post_mix_scale: f64,
}

impl SwarmRecipe {
    pub fn labels(&self) -> LabelVector {
        LabelVector::from_species(self.components.iter().map(|c| c.chunk.species))
    }
}

/// Presence flags, per-species chunk counts and total count. Each chunk is one mosquito.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelVector {
    pub y: [u8; NUM_SPECIES],
    pub counts: [u32; NUM_SPECIES],
    pub total: u32,
}

impl LabelVector {
    pub fn from_species(species: impl IntoIterator<Item = SpeciesId>) -> Self {
        let mut counts = [0u32; NUM_SPECIES];
        for s in species {
            counts[s.index()] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: [u32; NUM_SPECIES]) -> Self {
        Self {
            y: counts.map(|c| u8::from(c > 0)),
            counts,
            total: counts.iter().sum(),
        }
    }

    /// Number of distinct species present.
    pub fn cardinality(&self) -> usize {
        self.y.iter().map(|&v| v as usize).sum()
    }
}

/// Draw one recipe from the catalog.
///
/// The chunk count `n` is drawn first, then the number of species
/// `m ~ U{1..min(max_species, species available, n)}`, so every drawn species
/// can receive at least one chunk. Chunks are assigned to the `m` species
/// uniformly (redrawn until none is empty) and picked with replacement within
/// a species.
pub fn draw_recipe<R: Rng + ?Sized>(
    catalog: &Catalog,
    config: &SynthConfig,
    sample_id: impl Into<String>,
    rng: &mut R,
) -> Result<SwarmRecipe> {
    config.validate()?;
    let available = catalog.species_present();
    if available.is_empty() {
        return Err(Error::EmptyBank);
    }
    let n = rng.random_range(config.chunks_min..=config.chunks_max);
    let m_max = config.max_species.min(available.len()).min(n);
    let m = rng.random_range(1..=m_max);
    let chosen: Vec<SpeciesId> = index::sample(rng, available.len(), m)
        .into_iter()
        .map(|i| available[i])
        .collect();

    let assignment: Vec<usize> = loop {
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let mut hit = vec![false; m];
        a.iter().for_each(|&s| hit[s] = true);
        if hit.iter().all(|&h| h) {
            break a;
        }
    };

    let components = assignment
        .into_iter()
        .map(|s| {
            let pool: Vec<&ChunkRef> = catalog.species_chunks(chosen[s]).collect();
            let chunk = pool[rng.random_range(0..pool.len())].clone();
            MixComponent {
                chunk,
                gain: rng.random_range(GAIN_MIN..=GAIN_MAX),
                offset_s: rng.random_range(0.0..=OFFSET_MAX_S),
            }
        })
        .collect();
    let snr_db = rng.random_range(config.snr_min_db..=config.snr_max_db);
    let noise_seed = rng.random::<u64>();

    Ok(SwarmRecipe {
        sample_id: sample_id.into(),
        components,
        snr_db,
        noise_seed,
        post_mix_scale: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedMix {
    pub clip: AudioClip,
    pub post_mix_scale: f64,
}

/// Sum the recipe's components into a window of `window_samples` samples.
pub fn render_mix<S: ChunkSource + ?Sized>(
    recipe: &SwarmRecipe,
    source: &S,
    window_samples: usize,
) -> Result<RenderedMix> {
    let mut mix = vec![0.0; window_samples];
    for comp in &recipe.components {
        let chunk = source.get_chunk(&comp.chunk)?;
        let offset = comp.offset_sample();
        if offset >= window_samples {
            continue;
        }
        let span = chunk.len().min(window_samples - offset);
        for (out, &x) in mix[offset..offset + span].iter_mut().zip(chunk.samples()) {
            *out += comp.gain * x;
        }
    }
    let peak = mix.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let post_mix_scale = if peak > 1.0 {
        let scale = CLIP_GUARD_PEAK / peak;
        mix.iter_mut().for_each(|s| *s *= scale);
        scale
    } else {
        1.0
    };
    Ok(RenderedMix {
        clip: AudioClip::new(mix, TARGET_RATE)?,
        post_mix_scale,
    })
}

/// Add i.i.d. Gaussian noise with variance `P_sig · 10^(−snr/10)`, where
/// `P_sig` is the mean-square of `mix`. No clamping is applied.
pub fn add_noise(mix: &AudioClip, snr_db: f64, noise_seed: u64) -> Result<AudioClip> {
    let power = mix.power();
    if power == 0.0 {
        return Err(Error::ZeroSignalPower);
    }
    let sigma = (power * 10f64.powf(-snr_db / 10.0)).sqrt();
    let mut rng = seed::rng_from_seed(noise_seed);
    let noisy = mix
        .samples()
        .iter()
        .map(|&s| {
            let e: f64 = rng.sample(StandardNormal);
            s + sigma * e
        })
        .collect();
    AudioClip::new(noisy, mix.sample_rate())
}

/// Recipe plus its noisy rendering.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub recipe: SwarmRecipe,
    pub clean: AudioClip,
    pub noisy: AudioClip,
}

pub fn sample_id(index: usize) -> String {
    format!("sample_{index:06}")
}

/// Draw, render and noise sample `index` of a dataset seeded by `master_seed`.
///
/// Samples whose clean mix is silent are redrawn from a fresh derived seed, up
/// to [`REJECTION_BUDGET`] attempts.
pub fn synthesize_sample<S: ChunkSource + ?Sized>(
    catalog: &Catalog,
    source: &S,
    config: &SynthConfig,
    master_seed: u64,
    index: usize,
) -> Result<SynthSample> {
    let sample_seed = seed::derive_seed(master_seed, index as u64);
    for attempt in 0..REJECTION_BUDGET {
        let mut rng = seed::rng_from_seed(seed::derive_seed(sample_seed, attempt as u64));
        let mut recipe = draw_recipe(catalog, config, sample_id(index), &mut rng)?;
        let rendered = render_mix(&recipe, source, config.window_samples())?;
        recipe.post_mix_scale = rendered.post_mix_scale;
        match add_noise(&rendered.clip, recipe.snr_db, recipe.noise_seed) {
            Ok(noisy) => {
                return Ok(SynthSample {
                    recipe,
                    clean: rendered.clip,
                    noisy,
                })
            }
            Err(Error::ZeroSignalPower) => {
                log::debug!("sample {index}: silent mix on attempt {attempt}, redrawing");
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::RejectionBudgetExceeded {
        index,
        attempts: REJECTION_BUDGET,
    })
}

/// Re-render a recipe exactly as [`synthesize_sample`] produced it.
pub fn replay_recipe<S: ChunkSource + ?Sized>(
    recipe: &SwarmRecipe,
    source: &S,
    window_samples: usize,
) -> Result<AudioClip> {
    let rendered = render_mix(recipe, source, window_samples)?;
    add_noise(&rendered.clip, recipe.snr_db, recipe.noise_seed)
}

pub const AUDIO_DIR: &str = "audio";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Generate `count` samples into `out_dir/audio/` and write `out_dir/manifest.jsonl`.
///
/// Samples are rendered in parallel on the current rayon pool; output depends
/// only on `(master_seed, index, catalog, config)`.
pub fn synthesize_dataset<S: ChunkSource + ?Sized>(
    catalog: &Catalog,
    source: &S,
    config: &SynthConfig,
    count: usize,
    master_seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestRecord>> {
    if count == 0 {
        return Err(Error::InvalidConfig("count must be at least 1".into()));
    }
    config.validate()?;
    if catalog.is_empty() {
        return Err(Error::EmptyBank);
    }
    let audio_dir = out_dir.join(AUDIO_DIR);
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

    let records: Vec<ManifestRecord> = (0..count)
        .into_par_iter()
        .map(|i| {
            let sample = synthesize_sample(catalog, source, config, master_seed, i)?;
            let rel = format!("{AUDIO_DIR}/{}.wav", sample.recipe.sample_id);
            audio::write_wav(&sample.noisy, out_dir.join(&rel))?;
            Ok(ManifestRecord::new(&sample.recipe, rel))
        })
        .collect::<Result<_>>()?;

    dataset::write_manifest(&out_dir.join(MANIFEST_FILE), &records)?;
    Ok(records)
}
