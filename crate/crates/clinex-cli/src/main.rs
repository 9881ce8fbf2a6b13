//! `clinex` — corpus, training and evaluation workflow over the
//! clinical annotation toolkit.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "clinex", version, about = "Clinical information annotation and extraction workflow")]
pub struct Cli {
    /// Scheme file; the built-in scheme when omitted.
    #[arg(long, global = true, env = "CLINEX_SCHEME")]
    pub scheme: Option<PathBuf>,

    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0, env = "CLINEX_SEED")]
    pub seed: u64,

    /// Parallel document workers; defaults to the available cores.
    #[arg(long, global = true, env = "CLINEX_JOBS")]
    pub jobs: Option<usize>,

    /// Experiment configuration file (TOML).
    #[arg(long, global = true, env = "CLINEX_CONFIG")]
    pub config: Option<PathBuf>,

    /// Turn validation findings into a failing exit status.
    #[arg(long, global = true, env = "CLINEX_STRICT")]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Check a corpus against the scheme and report violations.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        /// Also write the violations as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-serialize a corpus in canonical standoff form.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump gold annotations as BIO2 tag columns.
    Encode {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic annotated corpus.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Generator recipe; the built-in recipe when omitted.
        #[arg(long)]
        recipe: Option<PathBuf>,
        /// Override the recipe's record count.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Stratified record sampling with a per-condition cap.
    Sample {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        quota: usize,
        #[arg(long, default_value_t = 1)]
        cap: usize,
        /// Selected record ids, one per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/dev/test splits at record level (updates the manifest).
    Split {
        #[arg(long)]
        corpus: PathBuf,
        /// Explicit record counts, e.g. 300,100,100.
        #[arg(long, value_delimiter = ',', conflicts_with = "ratios")]
        counts: Option<Vec<usize>>,
        /// Ratios summing to one, e.g. 0.6,0.2,0.2.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Train the entity recognition model.
    TrainEntity {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the attribute and relation models.
    TrainSpan {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline over a corpus and write the predictions.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        entity_model: PathBuf,
        #[arg(long)]
        span_model: PathBuf,
        /// Restrict to one split (train|dev|test|none).
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract, then randomly drop a proportion of the annotations.
    Preannotate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        entity_model: PathBuf,
        #[arg(long)]
        span_model: PathBuf,
        #[arg(long)]
        drop_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold annotations.
    Score {
        #[arg(long)]
        task: String,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Also write per-type rows as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inter-annotator agreement over two parallel corpora.
    Iaa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train at growing fractions of the pool and tabulate test F1.
    LearningCurve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // Ignore failure: the pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    match commands::run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
