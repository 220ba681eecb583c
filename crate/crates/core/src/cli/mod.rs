//! Command-line front end.
//!
//! Every subcommand reads and writes plain files under the output
//! directory, so the pipeline can be run one step at a time:
//!
//! ```text
//! ingest -> train -> evaluate
//!                 -> embed -> tsne -> render
//!                          -> network
//!                          -> lineage
//! ```
//!
//! Exit codes: 0 success, 2 invalid input, 3 missing prerequisite artifact,
//! 4 numeric failure.

mod commands;
pub mod config;
pub mod render;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::PipelineConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    pub fn missing(what: impl fmt::Display, hint: &str) -> Self {
        CliError {
            code: EXIT_MISSING,
            message: format!("missing {what} ({hint})"),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "artstyle", version, about = "Art style classification and artist influence networks")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the split, training and T-SNE (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config; default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubsetArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and clean a manifest, then split it into train/test.
    Ingest {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Root that image paths in the manifest are relative to.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Read every image and drop unreadable or near-monochrome ones.
        #[arg(long)]
        probe: bool,
        /// Fraction of paintings used for training.
        #[arg(long)]
        split_ratio: Option<f64>,
    },
    /// Train the classifier on the training split.
    Train {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the test split: accuracy, confusion matrix, top mistakes.
    Evaluate {
        #[arg(long)]
        images: Option<PathBuf>,
        /// Number of confident misclassifications to list.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Extract 512-d painting embeddings.
    Embed {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SubsetArg::All)]
        subset: SubsetArg,
    },
    /// Grad-CAM heat map for one image.
    Gradcam {
        #[arg(long)]
        image: PathBuf,
        /// Class name or 0-based index (default: the predicted class).
        #[arg(long)]
        class: Option<String>,
        /// Convolution layer, e.g. conv2 (default: the last one).
        #[arg(long)]
        layer: Option<String>,
    },
    /// Project embeddings (or any id + numeric columns CSV) with T-SNE.
    Tsne {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Embed artist mean profiles instead of paintings.
        #[arg(long)]
        artists: bool,
        #[arg(long)]
        dims: Option<usize>,
    },
    /// Maximum-cosine-similarity artist network.
    Network {
        #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
        format: GraphFormat,
        /// `index,artist_name` CSV used to label nodes.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Chronological lineage graph plus timeline layout.
    Lineage {
        #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
        format: GraphFormat,
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// SVG scatter plot of a T-SNE output.
    Render {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
            PipelineConfig::parse(&text)
                .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    commands::dispatch(cli.command, cfg)
}
