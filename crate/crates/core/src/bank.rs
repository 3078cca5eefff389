//! Per-species source recordings tiled into short wingbeat chunks.
//!
//! A bank lives in a directory:
//!
//! ```text
//! bank/catalog.json
//! bank/audio/<species>/<basename>.wav   (16 kHz, peak-normalized copies)
//! ```
//!
//! Every catalog entry carries the content hash of the copy it slices, so a
//! chunk whose source has been removed or rewritten is reported as stale
//! instead of silently returning different audio.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip, INGEST_PEAK, TARGET_RATE};
use crate::error::{Error, Result};
use crate::seed;
use crate::species::{SpeciesId, NUM_SPECIES};

pub const MIN_CHUNK_S: f64 = 0.3;
pub const MAX_CHUNK_S: f64 = 0.6;
pub const CATALOG_FILE: &str = "catalog.json";
pub const CATALOG_VERSION: u32 = 1;

const MIN_CHUNK_SAMPLES: usize = 4_800;
const MAX_CHUNK_SAMPLES: usize = 9_600;

/// Address of one chunk inside a bank. Times are whole 16 kHz samples expressed in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRef {
    pub chunk_id: String,
    pub species: SpeciesId,
    /// Path of the ingested copy, relative to the bank root, `/`-separated.
    pub source_file: String,
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(with = "hex_u64")]
    pub hash: u64,
}

impl ChunkRef {
    pub fn start_sample(&self) -> usize {
        (self.start_s * TARGET_RATE as f64).round() as usize
    }

    pub fn len_samples(&self) -> usize {
        (self.duration_s * TARGET_RATE as f64).round() as usize
    }
}

mod hex_u64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(de::Error::custom)
    }
}

/// Something that can hand out the 16 kHz samples of a chunk.
pub trait ChunkSource: Sync {
    fn get_chunk(&self, chunk: &ChunkRef) -> Result<AudioClip>;
}

/// Greedy left-to-right tiling of `total` samples into chunk spans `(start, len)`.
///
/// Each duration is drawn from U(0.3 s, 0.6 s) and clamped to the remaining
/// audio; tiling stops once fewer than 0.3 s remain.
pub fn tile_spans<R: Rng + ?Sized>(total: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while total - pos >= MIN_CHUNK_SAMPLES {
        let drawn = rng.random_range(MIN_CHUNK_S..=MAX_CHUNK_S);
        let len = ((drawn * TARGET_RATE as f64).round() as usize)
            .clamp(MIN_CHUNK_SAMPLES, MAX_CHUNK_SAMPLES)
            .min(total - pos);
        spans.push((pos, len));
        pos += len;
    }
    spans
}

/// Load, resample to 16 kHz, peak-normalize and store one source recording in the
/// bank, returning its chunk tiling.
pub fn ingest_source<R: Rng + ?Sized>(
    bank_root: &Path,
    path: &Path,
    species: SpeciesId,
    rng: &mut R,
) -> Result<Vec<ChunkRef>> {
    let clip = audio::load_wav(path)?
        .resample(TARGET_RATE)
        .peak_normalize(INGEST_PEAK);
    if clip.len() < MIN_CHUNK_SAMPLES {
        return Err(Error::SourceTooShort {
            path: path.to_owned(),
            duration_s: clip.duration_s(),
        });
    }
    let rel = relative_copy_path(path, species);
    let dest = bank_root.join(&rel);
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let bytes = audio::encode_wav(&clip);
    fs::write(&dest, &bytes).map_err(|e| Error::io(&dest, e))?;
    let hash = seed::content_hash(&bytes);

    let refs = tile_spans(clip.len(), rng)
        .into_iter()
        .enumerate()
        .map(|(i, (start, len))| ChunkRef {
            chunk_id: format!("{rel}#{i:04}"),
            species,
            source_file: rel.clone(),
            start_s: start as f64 / TARGET_RATE as f64,
            duration_s: len as f64 / TARGET_RATE as f64,
            hash,
        })
        .collect();
    Ok(refs)
}

fn relative_copy_path(path: &Path, species: SpeciesId) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "source".into());
    format!("audio/{}/{stem}.wav", species.dir_name())
}

/// The list of chunks in a bank, indexed by id and by species.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    chunks: Vec<ChunkRef>,
    by_id: HashMap<String, usize>,
    by_species: [Vec<usize>; NUM_SPECIES],
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    version: u32,
    chunks: Vec<ChunkRef>,
}

impl Catalog {
    pub fn new(chunks: Vec<ChunkRef>) -> Self {
        let mut by_id = HashMap::with_capacity(chunks.len());
        let mut by_species: [Vec<usize>; NUM_SPECIES] = Default::default();
        for (i, c) in chunks.iter().enumerate() {
            by_id.insert(c.chunk_id.clone(), i);
            by_species[c.species.index()].push(i);
        }
        Self {
            chunks,
            by_id,
            by_species,
        }
    }

    pub fn chunks(&self) -> &[ChunkRef] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn lookup(&self, chunk_id: &str) -> Option<&ChunkRef> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn species_chunks(&self, species: SpeciesId) -> impl Iterator<Item = &ChunkRef> {
        self.by_species[species.index()].iter().map(|&i| &self.chunks[i])
    }

    pub fn species_count(&self, species: SpeciesId) -> usize {
        self.by_species[species.index()].len()
    }

    /// Species with at least one chunk, in index order.
    pub fn species_present(&self) -> Vec<SpeciesId> {
        SpeciesId::ALL
            .into_iter()
            .filter(|s| !self.by_species[s.index()].is_empty())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            version: CATALOG_VERSION,
            chunks: self.chunks.clone(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        if file.version != CATALOG_VERSION {
            return Err(Error::Unsupported(format!(
                "catalog version {} in {}",
                file.version,
                path.display()
            )));
        }
        Ok(Self::new(file.chunks))
    }
}

/// An on-disk bank: a catalog plus lazily loaded, hash-verified source copies.
#[derive(Debug)]
pub struct ChunkBank {
    root: PathBuf,
    catalog: Catalog,
    sources: HashMap<String, OnceLock<Arc<Vec<f64>>>>,
}

impl ChunkBank {
    fn with_catalog(root: PathBuf, catalog: Catalog) -> Self {
        let sources = catalog
            .chunks()
            .iter()
            .map(|c| (c.source_file.clone(), OnceLock::new()))
            .collect();
        Self {
            root,
            catalog,
            sources,
        }
    }

    /// Ingest `(path, species)` sources into `root` and write the catalog.
    ///
    /// Each file gets its own stream derived from `seed` and its destination
    /// path, so the catalog does not depend on ingest order or parallelism.
    pub fn build(root: impl Into<PathBuf>, sources: &[(PathBuf, SpeciesId)], seed: u64) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;

        let mut ordered: BTreeMap<String, (&Path, SpeciesId)> = BTreeMap::new();
        for (path, species) in sources {
            let rel = relative_copy_path(path, *species);
            if ordered.insert(rel.clone(), (path.as_path(), *species)).is_some() {
                return Err(Error::DuplicateSource(rel));
            }
        }
        let per_file: Vec<Vec<ChunkRef>> = ordered
            .par_iter()
            .map(|(rel, (path, species))| {
                let mut rng = seed::rng_from_seed(seed::derive_seed_str(seed, rel));
                ingest_source(&root, path, *species, &mut rng)
            })
            .collect::<Result<_>>()?;

        let catalog = Catalog::new(per_file.into_iter().flatten().collect());
        let catalog_path = root.join(CATALOG_FILE);
        fs::write(&catalog_path, catalog.to_json()).map_err(|e| Error::io(&catalog_path, e))?;
        Ok(Self::with_catalog(root, catalog))
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join(CATALOG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let catalog = Catalog::from_json(&text, &path)?;
        Ok(Self::with_catalog(root, catalog))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn source_samples(&self, chunk: &ChunkRef) -> Result<Arc<Vec<f64>>> {
        let stale = |reason: String| Error::StaleRef {
            chunk_id: chunk.chunk_id.clone(),
            reason,
        };
        let cell = self
            .sources
            .get(&chunk.source_file)
            .ok_or_else(|| stale("source not in catalog".into()))?;
        if let Some(samples) = cell.get() {
            return Ok(samples.clone());
        }
        let path = self.root.join(&chunk.source_file);
        let bytes = fs::read(&path).map_err(|e| stale(format!("{}: {e}", path.display())))?;
        if seed::content_hash(&bytes) != chunk.hash {
            return Err(stale(format!("{} changed since ingest", path.display())));
        }
        let clip = audio::decode_wav(&bytes, &path)?;
        if clip.sample_rate() != TARGET_RATE {
            return Err(stale(format!("{} is not 16 kHz", path.display())));
        }
        let samples = Arc::new(clip.into_samples());
        Ok(cell.get_or_init(|| samples).clone())
    }
}

impl ChunkSource for ChunkBank {
    fn get_chunk(&self, chunk: &ChunkRef) -> Result<AudioClip> {
        if self.catalog.lookup(&chunk.chunk_id) != Some(chunk) {
            return Err(Error::StaleRef {
                chunk_id: chunk.chunk_id.clone(),
                reason: "reference does not match the catalog".into(),
            });
        }
        let source = self.source_samples(chunk)?;
        let start = chunk.start_sample();
        let end = start + chunk.len_samples();
        if end > source.len() {
            return Err(Error::StaleRef {
                chunk_id: chunk.chunk_id.clone(),
                reason: "chunk extends past the end of its source".into(),
            });
        }
        AudioClip::new(source[start..end].to_vec(), TARGET_RATE)
    }
}

/// In-memory chunk store keyed by chunk id; used by tests and benchmarks.
#[derive(Debug, Default, Clone)]
pub struct MemorySource {
    clips: HashMap<String, Vec<f64>>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, chunk_id: impl Into<String>, samples: Vec<f64>) {
        self.clips.insert(chunk_id.into(), samples);
    }
}

impl ChunkSource for MemorySource {
    fn get_chunk(&self, chunk: &ChunkRef) -> Result<AudioClip> {
        let samples = self
            .clips
            .get(&chunk.chunk_id)
            .ok_or_else(|| Error::UnknownChunk(chunk.chunk_id.clone()))?;
        AudioClip::new(samples.clone(), TARGET_RATE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn tiling_single_chunk_when_short() {
        // 0.45 s: only one chunk fits.
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let spans = tile_spans(7_200, &mut rng);
            assert_eq!(spans.len(), 1);
            assert!(spans[0].1 <= 7_200 && spans[0].1 >= MIN_CHUNK_SAMPLES);
        }
    }

    #[test]
    fn tiling_ten_seconds_within_bounds() {
        let mut rng = rng_from_seed(11);
        for _ in 0..100 {
            let spans = tile_spans(160_000, &mut rng);
            assert!((16..=33).contains(&spans.len()), "{} chunks", spans.len());
            let mut expected_start = 0;
            for &(start, len) in &spans {
                assert_eq!(start, expected_start);
                assert!((MIN_CHUNK_SAMPLES..=MAX_CHUNK_SAMPLES).contains(&len));
                expected_start = start + len;
            }
            assert!(expected_start <= 160_000);
            assert!(160_000 - expected_start < MIN_CHUNK_SAMPLES);
        }
    }

    #[test]
    fn tiling_below_minimum_is_empty() {
        let mut rng = rng_from_seed(0);
        assert!(tile_spans(4_000, &mut rng).is_empty());
    }

    #[test]
    fn catalog_json_round_trip() {
        let c = ChunkRef {
            chunk_id: "audio/ae_aegypti/a.wav#0000".into(),
            species: SpeciesId::AeAegypti,
            source_file: "audio/ae_aegypti/a.wav".into(),
            start_s: 0.0,
            duration_s: 0.4123125,
            hash: u64::MAX - 5,
        };
        let cat = Catalog::new(vec![c.clone()]);
        let back = Catalog::from_json(&cat.to_json(), Path::new("x")).unwrap();
        assert_eq!(back.chunks(), &[c]);
        assert_eq!(back.species_present(), vec![SpeciesId::AeAegypti]);
    }

    #[test]
    fn catalog_rejects_other_version() {
        let err = Catalog::from_json(r#"{"version":2,"chunks":[]}"#, Path::new("x"));
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }
}
