//! Dataset manifest (JSON Lines), label matrices and cardinality-stratified splits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bank::Catalog;
use crate::error::{Error, Result};
use crate::seed;
use crate::species::NUM_SPECIES;
use crate::synth::{LabelVector, MixComponent, SwarmRecipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub chunk_id: String,
    pub gain: f64,
    pub offset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeRecord {
    pub components: Vec<ComponentRecord>,
    pub snr_db: f64,
    pub noise_seed: u64,
    pub post_mix_scale: f64,
}

impl RecipeRecord {
    /// Rebuild the in-memory recipe by resolving chunk ids against `catalog`.
    pub fn resolve(&self, sample_id: &str, catalog: &Catalog) -> Result<SwarmRecipe> {
        let components = self
            .components
            .iter()
            .map(|c| {
                let chunk = catalog
                    .lookup(&c.chunk_id)
                    .ok_or_else(|| Error::UnknownChunk(c.chunk_id.clone()))?;
                Ok(MixComponent {
                    chunk: chunk.clone(),
                    gain: c.gain,
                    offset_s: c.offset_s,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SwarmRecipe {
            sample_id: sample_id.to_owned(),
            components,
            snr_db: self.snr_db,
            noise_seed: self.noise_seed,
            post_mix_scale: self.post_mix_scale,
        })
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub wav_path: String,
    pub image_path: Option<String>,
    pub y: [u8; NUM_SPECIES],
    pub counts: [u32; NUM_SPECIES],
    pub total: u32,
    pub recipe: RecipeRecord,
    pub split: Split,
}

impl ManifestRecord {
    pub fn new(recipe: &SwarmRecipe, wav_path: String) -> Self {
        let labels = recipe.labels();
        Self {
            sample_id: recipe.sample_id.clone(),
            wav_path,
            image_path: None,
            y: labels.y,
            counts: labels.counts,
            total: labels.total,
            recipe: RecipeRecord {
                components: recipe
                    .components
                    .iter()
                    .map(|c| ComponentRecord {
                        chunk_id: c.chunk.chunk_id.clone(),
                        gain: c.gain,
                        offset_s: c.offset_s,
                    })
                    .collect(),
                snr_db: recipe.snr_db,
                noise_seed: recipe.noise_seed,
                post_mix_scale: recipe.post_mix_scale,
            },
            split: Split::Unassigned,
        }
    }

    pub fn labels(&self) -> LabelVector {
        LabelVector {
            y: self.y,
            counts: self.counts,
            total: self.total,
        }
    }

    /// Label cardinality `Σ y`.
    pub fn cardinality(&self) -> usize {
        self.y.iter().map(|&v| v as usize).sum()
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::json(path, e))?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(records)
}

/// `N × 6` presence matrix, columns in species index order.
pub fn label_matrix(records: &[ManifestRecord]) -> Result<Array2<u8>> {
    if records.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut y = Array2::zeros((records.len(), NUM_SPECIES));
    for (i, r) in records.iter().enumerate() {
        for j in 0..NUM_SPECIES {
            y[[i, j]] = u8::from(r.counts[j] > 0);
        }
    }
    Ok(y)
}

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|&r| !r.is_finite() || r <= 0.0) {
            return Err(Error::InvalidRatios(format!("{parts:?} must all be positive")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("{parts:?} sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// Parses `"0.7,0.15,0.15"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidRatios(format!("{s:?}: {e}")))?;
        let [train, val, test] = parts[..] else {
            return Err(Error::InvalidRatios(format!("{s:?}: expected three values")));
        };
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StratumCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl StratumCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
            Split::Unassigned => 0,
        }
    }
}

/// Result of a stratified split: one split per manifest record plus per-stratum counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratios: SplitRatios,
    pub seed: u64,
    /// Keyed by label cardinality.
    pub strata: BTreeMap<usize, StratumCounts>,
    /// Aligned with the manifest order.
    pub assignments: Vec<Split>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn totals(&self) -> StratumCounts {
        self.strata
            .values()
            .fold(StratumCounts::default(), |acc, c| StratumCounts {
                train: acc.train + c.train,
                val: acc.val + c.val,
                test: acc.test + c.test,
            })
    }

    pub fn apply(&self, records: &mut [ManifestRecord]) {
        for (r, s) in records.iter_mut().zip(&self.assignments) {
            r.split = *s;
        }
    }
}

/// Largest-remainder apportionment of `n` items over three ratios.
///
/// Ties in the fractional part go to the earlier split. When `n >= 3`, val
/// and test are each topped up to at least one item, taken from the largest
/// part.
pub fn apportion(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    const EPS: f64 = 1e-9;
    let ideal = ratios.as_array().map(|r| r * n as f64);
    let mut counts = ideal.map(|x| (x + EPS).floor() as usize);
    let mut remaining = n - counts.iter().sum::<usize>();
    let frac = [0, 1, 2].map(|k| ideal[k] - counts[k] as f64);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        if (frac[a] - frac[b]).abs() <= EPS {
            a.cmp(&b)
        } else {
            frac[b].total_cmp(&frac[a])
        }
    });
    for &k in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[k] += 1;
        remaining -= 1;
    }
    if n >= 3 {
        for k in [1, 2] {
            if counts[k] == 0 {
                let donor = (0..3).max_by_key(|&d| (counts[d], std::cmp::Reverse(d))).unwrap();
                counts[donor] -= 1;
                counts[k] += 1;
            }
        }
    }
    counts
}

/// Split by label cardinality: each stratum is shuffled with its own seeded
/// stream and cut into contiguous train/val/test blocks by [`apportion`].
/// Strata of one or two samples go entirely to train, with a warning.
pub fn stratified_split(
    records: &[ManifestRecord],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    if records.len() < 3 {
        return Err(Error::TooFewSamples(records.len()));
    }
    let mut by_card: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_card.entry(r.cardinality()).or_default().push(i);
    }

    let mut assignments = vec![Split::Unassigned; records.len()];
    let mut strata = BTreeMap::new();
    let mut warnings = Vec::new();
    for (card, mut members) in by_card {
        let n = members.len();
        let counts = if n < 3 {
            let msg = format!("stratum with cardinality {card} has {n} sample(s); assigned to train");
            log::warn!("{msg}");
            warnings.push(msg);
            [n, 0, 0]
        } else {
            let mut rng = seed::rng_from_seed(seed::derive_seed(seed, card as u64));
            members.shuffle(&mut rng);
            apportion(n, &ratios)
        };
        let mut cursor = 0;
        for (split, &c) in Split::ASSIGNED.iter().zip(&counts) {
            for &m in &members[cursor..cursor + c] {
                assignments[m] = *split;
            }
            cursor += c;
        }
        strata.insert(
            card,
            StratumCounts {
                train: counts[0],
                val: counts[1],
                test: counts[2],
            },
        );
    }
    Ok(SplitAssignment {
        ratios,
        seed,
        strata,
        assignments,
        warnings,
    })
}
