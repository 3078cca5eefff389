//! The run configuration: every parameter that influences an artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use swarmforge::metrics::validate_tau;
use swarmforge::{FeatureConfig, Split, SplitRatios, SynthConfig};

/// File written into every artifact directory.
pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed shared by ingest tiling, synthesis and splitting.
    pub seed: u64,
    pub count: usize,
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 1_000,
            paths: PathsConfig::default(),
            synth: SynthConfig::default(),
            features: FeatureConfig::default(),
            split: SplitConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory of `<species>/*.wav` recordings.
    pub sources: Option<PathBuf>,
    /// Root for `bank/`, `dataset/` and `eval/`.
    pub out: PathBuf,
    /// Optional predictions CSV; the eval stage is skipped without it.
    pub predictions: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            sources: None,
            out: PathBuf::from("swarmforge_out"),
            predictions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub ratios: SplitRatios,
    /// Reserved: keep all chunks of a source recording on one side of the split.
    pub group_by_source: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: Split,
    pub taus: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            taus: swarmforge::metrics::DEFAULT_TAUS.to_vec(),
        }
    }
}

impl RunConfig {
    /// Load from TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg = if is_toml {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn write_into(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RUN_CONFIG_FILE);
        fs::write(&path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }

    /// Checks every stage's parameters; performs no I/O.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.synth.validate().context("synth config")?;
        self.features.validate().context("feature config")?;
        self.split.ratios.validate().context("split config")?;
        if self.count == 0 {
            bail!("count must be at least 1");
        }
        if self.split.group_by_source {
            bail!(swarmforge::Error::Unsupported(
                "group_by_source splitting is reserved".into()
            ));
        }
        if self.eval.taus.is_empty() {
            bail!("eval needs at least one threshold");
        }
        if self.eval.split == Split::Unassigned {
            bail!("eval split must be train, val or test");
        }
        for &t in &self.eval.taus {
            validate_tau(t).context("eval config")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut cfg = RunConfig {
            seed: 77,
            ..RunConfig::default()
        };
        cfg.synth.snr_min_db = 21.5;
        cfg.paths.sources = Some("raw".into());
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"synth": {"chunk_min": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(
            r#"{"split": {"ratios": {"train": 0.7, "val": 0.15, "test": 0.15, "x": 0}}}"#
        )
        .is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 5\n[synth]\nchunks_max = 6\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.synth.chunks_max, 6);
        assert_eq!(cfg.synth.chunks_min, 3);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let mut c = RunConfig::default();
        c.synth.chunks_min = 8;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.eval.taus = vec![0.5, 1.0];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.split.group_by_source = true;
        assert!(c.validate().is_err());
    }
}
