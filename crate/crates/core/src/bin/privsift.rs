use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privsift::cli::{
    cmd_evaluate, cmd_extract, cmd_report, cmd_select, cmd_synth, cmd_train, Algorithm,
    CommandOutcome, RunConfig,
};
use privsift::corpus::SynthSpec;
use privsift::keyword::KeywordPattern;
use privsift::select::Approach;
use privsift::Error;

#[derive(Parser)]
#[command(
    name = "privsift",
    version,
    about = "Per-keyword occurrence classifiers for privilege review"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        /// Generator spec (TOML); defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_docs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        privileged_fraction: Option<f64>,
        #[arg(long)]
        footer_probability: Option<f64>,
    },
    /// Extract keyword occurrences and their labels.
    Extract(Common),
    /// Score candidate positives against negatives and keep the likely-true ones.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        approach: Option<String>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train one model per keyword.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cnn")]
        algorithm: String,
    },
    /// Cross-validate per-keyword models.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of cnn, logistic, svm.
        #[arg(long, default_value = "cnn,logistic")]
        algorithms: String,
    },
    /// Render the result tables as markdown.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Run config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated keyword patterns, e.g. `privi*,legal`.
    #[arg(long)]
    keywords: Option<String>,
    #[arg(long)]
    window_radius: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    grid_search: bool,
    #[arg(long)]
    train_on_selected: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.corpus {
            cfg.corpus = v.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.keywords {
            cfg.keywords = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<KeywordPattern>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = self.window_radius {
            cfg.window_radius = v;
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(v) = self.epochs {
            cfg.cnn.epochs = v;
        }
        cfg.grid_search |= self.grid_search;
        cfg.train_on_selected |= self.train_on_selected;
        Ok(cfg)
    }
}

fn parse_approach(s: &str) -> Result<Approach, Error> {
    match s {
        "one" | "1" => Ok(Approach::One),
        "two" | "2" => Ok(Approach::Two),
        other => Err(Error::Config(format!("unknown approach {other:?}"))),
    }
}

fn run(command: Command) -> Result<CommandOutcome, Error> {
    match command {
        Command::Synth {
            spec,
            out,
            n_docs,
            seed,
            privileged_fraction,
            footer_probability,
        } => {
            let mut s = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    SynthSpec::from_toml(&text)?
                }
                None => SynthSpec::default(),
            };
            if let Some(v) = n_docs {
                s.n_docs = v;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = privileged_fraction {
                s.privileged_fraction = v;
            }
            if let Some(v) = footer_probability {
                s.footer_probability = v;
            }
            cmd_synth(&s, &out)
        }
        Command::Extract(c) => cmd_extract(&c.resolve()?),
        Command::Select {
            common,
            approach,
            cutoff,
            k,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(a) = approach {
                cfg.selection.approach = parse_approach(&a)?;
            }
            if let Some(v) = cutoff {
                cfg.selection.cutoff = v;
            }
            if let Some(v) = k {
                cfg.selection.k = v;
            }
            cmd_select(&cfg)
        }
        Command::Train { common, algorithm } => cmd_train(&common.resolve()?, algorithm.parse()?),
        Command::Evaluate { common, algorithms } => {
            let algs = algorithms
                .split(',')
                .map(|s| s.trim().parse::<Algorithm>())
                .collect::<Result<Vec<_>, _>>()?;
            cmd_evaluate(&common.resolve()?, &algs)
        }
        Command::Report(c) => cmd_report(&c.resolve()?),
    }
}

fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(outcome) => {
            for line in &outcome.log {
                eprintln!("{line}");
            }
            for p in &outcome.written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
