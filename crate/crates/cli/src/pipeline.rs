//! Pipeline stages. Each stage hashes its inputs and parameters; when the
//! stamp left by a previous run matches and the outputs are present, the
//! stage is reported up to date and nothing is written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use swarmforge::bank::CATALOG_FILE;
use swarmforge::featurize::{FEATURES_DIR, META_FILE};
use swarmforge::metrics::SweepReport;
use swarmforge::seed::content_hash;
use swarmforge::synth::MANIFEST_FILE;
use swarmforge::{
    featurize_dataset, label_matrix, read_manifest, stratified_split, synthesize_dataset, threshold_sweep,
    write_manifest, ChunkBank, ManifestRecord, PredictionMatrix, SpeciesId, Split, ThresholdConfig,
};

use crate::config::RunConfig;

pub const SPLIT_FILE: &str = "split.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ran,
    UpToDate,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub status: Status,
    pub hash: String,
    pub output: PathBuf,
}

/// Directory layout used by `run`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn bank(&self) -> PathBuf {
        self.root.join("bank")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("eval").join("report.json")
    }
}

fn hash_of<T: Serialize>(stage: &str, value: &T) -> String {
    let bytes = serde_json::to_vec(&(stage, value)).expect("stage key serializes");
    format!("{:016x}", content_hash(&bytes))
}

fn file_hash(path: &Path) -> anyhow::Result<u64> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(content_hash(&bytes))
}

fn stamp_path(dir: &Path, stage: &str) -> PathBuf {
    dir.join(format!("stage_{stage}.stamp"))
}

fn up_to_date(dir: &Path, stage: &str, hash: &str, outputs: &[PathBuf]) -> bool {
    let stamped = fs::read_to_string(stamp_path(dir, stage)).is_ok_and(|s| s.trim() == hash);
    stamped && outputs.iter().all(|p| p.exists())
}

fn stamp(dir: &Path, stage: &str, hash: &str) -> anyhow::Result<()> {
    let p = stamp_path(dir, stage);
    fs::write(&p, format!("{hash}\n")).with_context(|| format!("writing {}", p.display()))
}

fn report(stage: &'static str, status: Status, hash: String, output: &Path) -> StageReport {
    match status {
        Status::Ran => log::info!("{stage}: done -> {}", output.display()),
        Status::UpToDate => log::info!("{stage}: up to date ({hash})"),
        Status::Skipped => log::info!("{stage}: skipped"),
    }
    StageReport {
        stage,
        status,
        hash,
        output: output.to_owned(),
    }
}

/// Collect `<sources>/<species>/*.wav`, sorted by path.
pub fn discover_sources(sources: &Path) -> anyhow::Result<Vec<(PathBuf, SpeciesId)>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(sources).with_context(|| format!("listing {}", sources.display()))?;
    for entry in entries {
        let dir = entry?.path();
        if !dir.is_dir() {
            continue;
        }
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let species: SpeciesId = match name.parse() {
            Ok(s) => s,
            Err(_) => {
                log::warn!("ignoring {}: not a species directory", dir.display());
                continue;
            }
        };
        for f in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let f = f?.path();
            if f.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                out.push((f, species));
            }
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("no <species>/*.wav files under {}", sources.display());
    }
    Ok(out)
}

pub fn ingest(cfg: &RunConfig, sources: &Path, bank_dir: &Path) -> anyhow::Result<StageReport> {
    let files = discover_sources(sources)?;
    let mut key = Vec::new();
    for (path, species) in &files {
        let rel = path
            .strip_prefix(sources)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        key.push((rel, *species, file_hash(path)?));
    }
    let hash = hash_of("ingest", &(cfg.seed, &key));
    if up_to_date(bank_dir, "ingest", &hash, &[bank_dir.join(CATALOG_FILE)]) {
        return Ok(report("ingest", Status::UpToDate, hash, bank_dir));
    }
    let bank = ChunkBank::build(bank_dir, &files, cfg.seed)?;
    log::info!(
        "ingest: {} files -> {} chunks over {} species",
        files.len(),
        bank.catalog().len(),
        bank.catalog().species_present().len()
    );
    cfg.write_into(bank_dir)?;
    stamp(bank_dir, "ingest", &hash)?;
    Ok(report("ingest", Status::Ran, hash, bank_dir))
}

fn wav_outputs(dataset_dir: &Path, count: usize) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = (0..count)
        .map(|i| dataset_dir.join(format!("audio/{}.wav", swarmforge::synth::sample_id(i))))
        .collect();
    v.push(dataset_dir.join(MANIFEST_FILE));
    v
}

pub fn synth(cfg: &RunConfig, bank_dir: &Path, dataset_dir: &Path) -> anyhow::Result<StageReport> {
    let catalog_hash = file_hash(&bank_dir.join(CATALOG_FILE))?;
    let hash = hash_of("synth", &(catalog_hash, cfg.seed, cfg.count, &cfg.synth));
    if up_to_date(dataset_dir, "synth", &hash, &wav_outputs(dataset_dir, cfg.count)) {
        return Ok(report("synth", Status::UpToDate, hash, dataset_dir));
    }
    let bank = ChunkBank::open(bank_dir)?;
    let records = synthesize_dataset(
        bank.catalog(),
        &bank,
        &cfg.synth,
        cfg.count,
        cfg.seed,
        dataset_dir,
    )?;
    log::info!("synth: {} samples ({:?} mode)", records.len(), cfg.synth.mode);
    cfg.write_into(dataset_dir)?;
    stamp(dataset_dir, "synth", &hash)?;
    Ok(report("synth", Status::Ran, hash, dataset_dir))
}

/// Manifest content with downstream annotations removed, so a stage's
/// key does not depend on what later stages wrote back.
fn manifest_key(records: &[ManifestRecord], keep_images: bool) -> u64 {
    let stripped: Vec<ManifestRecord> = records
        .iter()
        .map(|r| ManifestRecord {
            image_path: if keep_images { r.image_path.clone() } else { None },
            split: Split::Unassigned,
            ..r.clone()
        })
        .collect();
    content_hash(&serde_json::to_vec(&stripped).expect("manifest serializes"))
}

fn load_records(manifest: &Path) -> anyhow::Result<Vec<ManifestRecord>> {
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        bail!(swarmforge::Error::EmptyManifest);
    }
    Ok(records)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    }
}

pub fn featurize(cfg: &RunConfig, dataset_dir: &Path, out_root: &Path) -> anyhow::Result<StageReport> {
    let manifest = dataset_dir.join(MANIFEST_FILE);
    let records = load_records(&manifest)?;
    let features_dir = out_root.join(FEATURES_DIR);
    let hash = hash_of(
        "featurize",
        &(
            manifest_key(&records, false),
            &cfg.features,
            out_root.to_string_lossy(),
        ),
    );
    let mut outputs: Vec<PathBuf> = records
        .iter()
        .map(|r| features_dir.join(format!("{}.png", r.sample_id)))
        .collect();
    outputs.push(features_dir.join(META_FILE));
    let annotated = records.iter().all(|r| r.image_path.is_some());
    if annotated && up_to_date(&features_dir, "featurize", &hash, &outputs) {
        return Ok(report("featurize", Status::UpToDate, hash, &features_dir));
    }
    let (updated, meta) = featurize_dataset(dataset_dir, out_root, &records, &cfg.features)?;
    if !meta.collapsed_mel_bands.is_empty() {
        log::warn!(
            "featurize: {} mel bands narrower than one FFT bin were replaced by single-bin filters",
            meta.collapsed_mel_bands.len()
        );
    }
    if !meta.degenerate_samples.is_empty() {
        log::warn!("featurize: {} silent samples", meta.degenerate_samples.len());
    }
    write_manifest(&manifest, &updated)?;
    cfg.write_into(&features_dir)?;
    stamp(&features_dir, "featurize", &hash)?;
    Ok(report("featurize", Status::Ran, hash, &features_dir))
}

pub fn split(cfg: &RunConfig, manifest: &Path) -> anyhow::Result<StageReport> {
    if cfg.split.group_by_source {
        bail!(swarmforge::Error::Unsupported(
            "--group-by-source is reserved and not implemented".into()
        ));
    }
    let dir = parent_dir(manifest);
    let records = load_records(manifest)?;
    let hash = hash_of(
        "split",
        &(manifest_key(&records, true), cfg.seed, &cfg.split.ratios),
    );
    let assigned = records.iter().all(|r| r.split != Split::Unassigned);
    if assigned && up_to_date(&dir, "split", &hash, &[dir.join(SPLIT_FILE)]) {
        return Ok(report("split", Status::UpToDate, hash, &dir));
    }
    let assignment = stratified_split(&records, cfg.split.ratios, cfg.seed)?;
    let mut updated = records;
    assignment.apply(&mut updated);
    let t = assignment.totals();
    log::info!("split: train {} / val {} / test {}", t.train, t.val, t.test);
    write_manifest(manifest, &updated)?;
    let split_path = dir.join(SPLIT_FILE);
    let text = serde_json::to_string_pretty(&assignment).expect("split serializes") + "\n";
    fs::write(&split_path, text).with_context(|| format!("writing {}", split_path.display()))?;
    cfg.write_into(&dir)?;
    stamp(&dir, "split", &hash)?;
    Ok(report("split", Status::Ran, hash, &dir))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub split: Split,
    pub n_samples: usize,
    #[serde(flatten)]
    pub sweep: SweepReport,
}

pub fn evaluate(
    cfg: &RunConfig,
    manifest: &Path,
    predictions: &Path,
    report_path: &Path,
) -> anyhow::Result<StageReport> {
    let records = load_records(manifest)?;
    let wanted = cfg.eval.split;
    let hash = hash_of(
        "eval",
        &(
            content_hash(&serde_json::to_vec(&records)?),
            file_hash(predictions)?,
            &cfg.eval,
        ),
    );
    let dir = parent_dir(report_path);
    let stamp_name = format!(
        "eval_{}",
        report_path.file_stem().unwrap_or_default().to_string_lossy()
    );
    if up_to_date(&dir, &stamp_name, &hash, &[report_path.to_owned()]) {
        return Ok(report("eval", Status::UpToDate, hash, report_path));
    }
    let subset: Vec<ManifestRecord> = records.into_iter().filter(|r| r.split == wanted).collect();
    if subset.is_empty() {
        bail!(
            "no manifest records in split `{}`; run the split stage first",
            wanted.as_str()
        );
    }
    let file = fs::File::open(predictions).with_context(|| format!("opening {}", predictions.display()))?;
    let preds = PredictionMatrix::read_csv(file)?;
    let ids: Vec<String> = subset.iter().map(|r| r.sample_id.clone()).collect();
    let scores = preds.aligned_to(&ids)?;
    let y = label_matrix(&subset)?;
    let sweep = threshold_sweep(
        scores.view(),
        y.view(),
        &ThresholdConfig {
            taus: cfg.eval.taus.clone(),
        },
    )?;
    for r in &sweep.reports {
        log::info!(
            "eval: tau {:.2}  acc {:.4}  P {:.4}  R {:.4}  F1 {:.4}",
            r.tau,
            r.multilabel_accuracy,
            r.macro_precision,
            r.macro_recall,
            r.macro_f1
        );
    }
    let out = EvalOutput {
        split: wanted,
        n_samples: subset.len(),
        sweep,
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = serde_json::to_string_pretty(&out).expect("report serializes") + "\n";
    fs::write(report_path, text).with_context(|| format!("writing {}", report_path.display()))?;
    cfg.write_into(&dir)?;
    stamp(&dir, &stamp_name, &hash)?;
    Ok(report("eval", Status::Ran, hash, report_path))
}

/// Run every stage in order under `cfg.paths.out`. Eval runs only when a
/// predictions file is configured.
pub fn run_pipeline(cfg: &RunConfig) -> anyhow::Result<Vec<StageReport>> {
    cfg.validate()?;
    let Some(sources) = cfg.paths.sources.as_deref() else {
        bail!("paths.sources is required for `run`");
    };
    let layout = Layout::new(&cfg.paths.out);
    let dataset = layout.dataset();
    let manifest = dataset.join(MANIFEST_FILE);
    let mut reports = vec![
        ingest(cfg, sources, &layout.bank()).context("stage ingest")?,
        synth(cfg, &layout.bank(), &dataset).context("stage synth")?,
        featurize(cfg, &dataset, &dataset).context("stage featurize")?,
        split(cfg, &manifest).context("stage split")?,
    ];
    match cfg.paths.predictions.as_deref() {
        Some(pred) => reports.push(evaluate(cfg, &manifest, pred, &layout.report()).context("stage eval")?),
        None => reports.push(report("eval", Status::Skipped, String::new(), &layout.report())),
    }
    Ok(reports)
}
