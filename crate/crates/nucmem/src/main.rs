use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nucmem::config::{parse_config, Overrides, RunConfig};
use nucmem::pipeline;
use nucmem::{AppError, AppResult};

/// Memorization under nucleus sampling: controlled-duplication corpora,
/// n-gram training and decode sweeps.
#[derive(Parser)]
#[command(name = "nucmem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic base corpus to <out>/base.jsonl.
    GenSynthetic(Common),
    /// Tokenize the base corpus, plan duplication, materialize the training stream.
    Build(Common),
    /// Train the n-gram model on the materialized stream.
    Train(Common),
    /// Decode single probes with full traces (into <out>/probe/).
    Probe {
        #[command(flatten)]
        common: Common,
        /// Probe (document) id; repeatable. Defaults to every probe.
        #[arg(long = "probe-id")]
        probe_ids: Vec<String>,
    },
    /// Run the memorization sweep and write records and the heatmap.
    Sweep(Common),
    /// Ramp-up/saturation, deterministic steps, BLEU and context reports.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides io.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `sweep.top_p_values`; repeatable.
    #[arg(long = "top-p")]
    top_p: Vec<f64>,
    /// Overrides `sweep.prefix_len`.
    #[arg(long = "prefix-len")]
    prefix_len: Option<usize>,
    /// Overrides `model.order`.
    #[arg(long)]
    order: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Common {
    fn load(&self) -> AppResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            top_p: self.top_p.clone(),
            prefix_len: self.prefix_len,
            order: self.order,
            out_dir: self.out.clone(),
        });
        cfg.validate()?;
        if self.jobs == 0 {
            return Err(AppError::Config("--jobs: must be at least 1".into()));
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> AppResult<()> {
    let (common, probe_ids) = match &cli.command {
        Command::Probe { common, probe_ids } => (common, probe_ids.as_slice()),
        Command::GenSynthetic(c)
        | Command::Build(c)
        | Command::Train(c)
        | Command::Sweep(c)
        | Command::Analyze(c) => (c, &[][..]),
    };
    let cfg = common.load()?;
    let out = cfg.out_dir()?.to_path_buf();
    match cli.command {
        Command::GenSynthetic(_) => {
            let path = pipeline::gen_synthetic(&cfg, &out)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Build(_) => {
            let r = pipeline::build(&cfg, &out)?;
            eprintln!(
                "{} documents, {} duplicated ({} copies), stream of {} copies",
                r.base_docs - r.dropped_duplicates,
                r.duplicated_docs,
                r.duplicated_copies,
                r.stream_copies
            );
        }
        Command::Train(_) => {
            let r = pipeline::train(&cfg, &out)?;
            eprintln!("train perplexity {:?} (uniform {})", r.train, r.uniform);
        }
        Command::Probe { .. } => {
            let n = pipeline::probe(&cfg, &out, probe_ids, common.jobs)?;
            eprintln!("{n} probe runs");
        }
        Command::Sweep(_) => {
            let r = pipeline::sweep(&cfg, &out, common.jobs)?;
            eprintln!(
                "{} records over {} probes ({} too short)",
                r.records, r.probes, r.skipped_short
            );
        }
        Command::Analyze(_) => pipeline::analyze(&cfg, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
