//! Command-line driver. Each command is one pipeline stage writing its
//! artifacts, plus a `stage-<name>.json` record, into the artifact directory.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training error.

mod config;
mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;
use crate::nlp::TokenizerKind;

pub use config::{ExplainSettings, Mode, Paths, Preset, RunConfig, SplitSettings, SynthSettings};
pub use stages::{execute, StageRecord};

#[derive(Debug, Parser)]
#[command(
    name = "apifeat",
    version,
    about = "Feature engineering and classification for sandbox API-call reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Feature groups for knowledge mode: all, api-only, params-only or a `+` list.
    #[arg(long, global = true)]
    pub mask: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_tokenizer)]
    pub tokenizer: Option<TokenizerKind>,
    #[arg(long, global = true)]
    pub vocab_cap: Option<usize>,
    #[arg(long, global = true)]
    pub seq_len: Option<usize>,
}

fn parse_tokenizer(s: &str) -> std::result::Result<TokenizerKind, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse the corpus listed in the manifest into a report store.
    Ingest,
    /// Argument-type proportions per label.
    Stats,
    /// Temporal, balanced train/val/test split with drift profile.
    Split,
    /// Fit encoders (knowledge) or tokenizer and vocabulary (nlp) on the training split.
    Fit,
    /// Encode every split with the fitted encoders.
    Encode,
    /// Train the CNN on the encoded training split.
    Train,
    /// Score the trained model on the test split.
    Eval,
    /// Correlations, permutation importance and Shapley values for the trained model.
    Explain,
    /// Generate a synthetic corpus.
    Synth,
    /// Train and score all six feature-group masks (knowledge mode).
    Ablate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Stats => "stats",
            Command::Split => "split",
            Command::Fit => "fit",
            Command::Encode => "encode",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Explain => "explain",
            Command::Synth => "synth",
            Command::Ablate => "ablate",
        }
    }
}

impl Cli {
    /// Config file (or defaults) with flag overrides applied, resolved and validated.
    pub fn effective_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(m) = &self.mask {
            cfg.mask = m.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = &self.corpus {
            cfg.paths.corpus = Some(c.clone());
        }
        if let Some(m) = &self.manifest {
            cfg.paths.manifest = Some(m.clone());
        }
        if let Some(o) = &self.out {
            cfg.paths.out = o.clone();
        }
        if let Some(t) = self.tokenizer {
            cfg.nlp.tokenizer = t;
        }
        if let Some(v) = self.vocab_cap {
            cfg.nlp.vocab_cap = v;
        }
        if let Some(l) = self.seq_len {
            cfg.model.seq_len = l;
        }
        let cfg = cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .try_init();
    match cli
        .effective_config()
        .and_then(|cfg| execute(cli.command, &cfg))
    {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
