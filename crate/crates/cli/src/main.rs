use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use swarmforge::synth::{SynthConfig, MANIFEST_FILE};
use swarmforge::{Split, SplitRatios, SynthMode};
use swarmforge_cli::pipeline::{self, Layout};
use swarmforge_cli::{RunConfig, StageReport};

#[derive(Parser)]
#[command(
    name = "swarmforge",
    version,
    about = "Synthetic mosquito swarm audio toolkit"
)]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (TOML or JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for the chosen command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Emit log events as JSON lines on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a chunk bank from `<sources>/<species>/*.wav`.
    Ingest {
        #[arg(long)]
        sources: Option<PathBuf>,
    },
    /// Generate labelled swarm mixtures from a chunk bank.
    Synth {
        #[arg(long)]
        bank: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Render log-mel images for every sample of a dataset.
    Featurize {
        /// Dataset directory holding `manifest.jsonl`.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Assign train/val/test stratified by label cardinality.
    Split {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Score a predictions CSV against manifest labels.
    Eval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
        /// Report path (default: `<out>/eval/report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every stage; up-to-date stages are skipped.
    Run {
        #[arg(long)]
        sources: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    count: Option<usize>,
    /// Preset applied before the individual overrides below.
    #[arg(long)]
    mode: Option<SynthMode>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    chunks_min: Option<usize>,
    #[arg(long)]
    chunks_max: Option<usize>,
    #[arg(long)]
    max_species: Option<usize>,
    #[arg(long)]
    snr_min_db: Option<f64>,
    #[arg(long)]
    snr_max_db: Option<f64>,
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long)]
    n_mels: Option<usize>,
    /// Square image side in pixels.
    #[arg(long)]
    img: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    /// `train,val,test` fractions.
    #[arg(long)]
    ratios: Option<SplitRatios>,
    /// Reserved; currently rejected.
    #[arg(long)]
    group_by_source: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    split: Option<Split>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
}

impl SynthArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(mode) = self.mode {
            cfg.synth = SynthConfig {
                window_s: cfg.synth.window_s,
                snr_min_db: cfg.synth.snr_min_db,
                snr_max_db: cfg.synth.snr_max_db,
                ..SynthConfig::for_mode(mode)
            };
        }
        let s = &mut cfg.synth;
        set(&mut cfg.count, self.count);
        set(&mut s.window_s, self.window_s);
        set(&mut s.chunks_min, self.chunks_min);
        set(&mut s.chunks_max, self.chunks_max);
        set(&mut s.max_species, self.max_species);
        set(&mut s.snr_min_db, self.snr_min_db);
        set(&mut s.snr_max_db, self.snr_max_db);
    }
}

impl FeatureArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.features.mel.n_mels, self.n_mels);
        set(&mut cfg.features.image_size, self.img);
    }
}

impl SplitArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.split.ratios, self.ratios);
        cfg.split.group_by_source |= self.group_by_source;
    }
}

impl EvalArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.eval.split, self.split);
        set(&mut cfg.eval.taus, self.taus.clone());
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn init_logging(json: bool) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if json {
        b.format(|buf, record| {
            let event = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{event}")
        });
    } else {
        b.format_timestamp(None).format_target(false);
    }
    b.init();
}

fn required(value: Option<PathBuf>, flag: &str) -> anyhow::Result<PathBuf> {
    value.with_context(|| format!("{flag} is required"))
}

fn execute(cli: Cli) -> anyhow::Result<Vec<StageReport>> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    if let Some(out) = &cli.out {
        cfg.paths.out = out.clone();
    }
    let layout = Layout::new(&cfg.paths.out);

    let reports = match cli.command {
        Command::Ingest { sources } => {
            set(&mut cfg.paths.sources, sources.map(Some));
            cfg.validate()?;
            let sources = required(cfg.paths.sources.clone(), "--sources")?;
            let bank = cli.out.clone().unwrap_or_else(|| layout.bank());
            vec![pipeline::ingest(&cfg, &sources, &bank).context("stage ingest")?]
        }
        Command::Synth { bank, synth } => {
            synth.apply(&mut cfg);
            cfg.validate()?;
            let bank = bank.unwrap_or_else(|| layout.bank());
            let out = cli.out.clone().unwrap_or_else(|| layout.dataset());
            vec![pipeline::synth(&cfg, &bank, &out).context("stage synth")?]
        }
        Command::Featurize { input, features } => {
            features.apply(&mut cfg);
            cfg.validate()?;
            let input = input.unwrap_or_else(|| layout.dataset());
            let out = cli.out.clone().unwrap_or_else(|| input.clone());
            vec![pipeline::featurize(&cfg, &input, &out).context("stage featurize")?]
        }
        Command::Split { manifest, split } => {
            split.apply(&mut cfg);
            cfg.validate()?;
            let manifest = manifest.unwrap_or_else(|| layout.dataset().join(MANIFEST_FILE));
            vec![pipeline::split(&cfg, &manifest).context("stage split")?]
        }
        Command::Eval {
            manifest,
            pred,
            eval,
            report,
        } => {
            eval.apply(&mut cfg);
            set(&mut cfg.paths.predictions, pred.map(Some));
            cfg.validate()?;
            let manifest = manifest.unwrap_or_else(|| layout.dataset().join(MANIFEST_FILE));
            let pred = required(cfg.paths.predictions.clone(), "--pred")?;
            let report = report.unwrap_or_else(|| layout.report());
            vec![pipeline::evaluate(&cfg, &manifest, &pred, &report).context("stage eval")?]
        }
        Command::Run {
            sources,
            pred,
            synth,
            features,
            split,
            eval,
        } => {
            set(&mut cfg.paths.sources, sources.map(Some));
            set(&mut cfg.paths.predictions, pred.map(Some));
            synth.apply(&mut cfg);
            features.apply(&mut cfg);
            split.apply(&mut cfg);
            eval.apply(&mut cfg);
            pipeline::run_pipeline(&cfg)?
        }
    };
    Ok(reports)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.json);
    let json = cli.json;
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::error!("cannot configure {jobs} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli) {
        Ok(reports) => {
            if json {
                println!("{}", serde_json::json!({ "status": "ok", "stages": reports }));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if json {
                println!(
                    "{}",
                    serde_json::json!({ "status": "error", "error": format!("{e:#}") })
                );
            }
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
