use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::{sha256_hex, EncoderConfig, FeatureMask};
use crate::error::{Error, Result};
use crate::experiment::ModelSettings;
use crate::explain::{SummaryStat, MAX_SHAPLEY_FEATURES};
use crate::ingest::Month;
use crate::model::TrainConfig;
use crate::nlp::NlpConfig;
use crate::split::{RatioScope, SplitConfig};
use crate::synth::{planted_pairs, single_signal, CorpusSpec, Signal};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Knowledge,
    Nlp,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Knowledge => "knowledge",
            Mode::Nlp => "nlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of `<sample_id>.json` reports.
    pub corpus: Option<PathBuf>,
    /// Defaults to `<corpus>/manifest.csv`.
    pub manifest: Option<PathBuf>,
    /// Artifact directory.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            manifest: None,
            out: PathBuf::from("artifacts"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    /// Last training month, `YYYY-MM`. Required by `split`.
    pub train_end: Option<Month>,
    /// Last validation month, `YYYY-MM`. Required by `split`.
    pub val_end: Option<Month>,
    pub goodware_ratio: f64,
    pub ratio_scope: RatioScope,
    pub balance_families: bool,
    pub holdout_new_families: bool,
    pub profile_calls: usize,
    pub drift_threshold: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        let d = SplitConfig::new(Month::from_ordinal(0), Month::from_ordinal(1));
        SplitSettings {
            train_end: None,
            val_end: None,
            goodware_ratio: d.goodware_ratio,
            ratio_scope: d.ratio_scope,
            balance_families: d.balance_families,
            holdout_new_families: d.holdout_new_families,
            profile_calls: d.profile_calls,
            drift_threshold: d.drift_threshold,
        }
    }
}

impl SplitSettings {
    pub fn to_config(&self, seed: u64) -> Result<SplitConfig> {
        let (Some(train_end), Some(val_end)) = (self.train_end, self.val_end) else {
            return Err(Error::config(
                "split.train_end and split.val_end must be set",
            ));
        };
        let cfg = SplitConfig {
            train_end,
            val_end,
            goodware_ratio: self.goodware_ratio,
            ratio_scope: self.ratio_scope,
            balance_families: self.balance_families,
            holdout_new_families: self.holdout_new_families,
            seed,
            profile_calls: self.profile_calls,
            drift_threshold: self.drift_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub repeats: usize,
    /// Tokens scored: by permutation, those whose presence varies most; by
    /// occlusion, the most widespread.
    pub max_tokens: usize,
    /// Rows of the per-class token table.
    pub top_k: usize,
    pub summary: SummaryStat,
    /// Features in the exact Shapley breakdown of one test sample (at most 15).
    pub shapley_features: usize,
    /// Index of that test sample.
    pub sample: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            repeats: 5,
            max_tokens: 50,
            top_k: 10,
            summary: SummaryStat::MeanAbs,
            shapley_features: 10,
            sample: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Six families in three motif-sharing pairs.
    #[default]
    PlantedPairs,
    /// One family carries the only string arguments.
    StringSignal,
    /// One family calls an API nobody else uses.
    TokenSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub preset: Preset,
    /// Planted pairs: samples per family, spread evenly over `months`.
    pub per_family: usize,
    pub months: usize,
    pub strength: f64,
    /// Single-signal presets: samples per class and month.
    pub per_month: usize,
    /// Full corpus description; overrides the preset when present.
    pub spec: Option<PathBuf>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            preset: Preset::PlantedPairs,
            per_family: 200,
            months: 10,
            strength: 0.6,
            per_month: 20,
            spec: None,
        }
    }
}

impl SynthSettings {
    pub fn spec(&self, seed: u64) -> Result<CorpusSpec> {
        if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path)?;
            let mut spec: CorpusSpec = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            spec.seed = seed;
            return Ok(spec);
        }
        match self.preset {
            Preset::PlantedPairs => {
                planted_pairs(self.per_family, self.months, self.strength, seed)
            }
            Preset::StringSignal => {
                single_signal(Signal::StringArgument, self.per_month, self.months, seed)
            }
            Preset::TokenSignal => {
                single_signal(Signal::ApiToken, self.per_month, self.months, seed)
            }
        }
    }
}

/// Everything a run needs. Every field has a default; `seed` is the master
/// seed and overrides the seeds of the individual components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Feature groups encoded in knowledge mode, e.g. `all`, `api-only`, `api+string`.
    pub mask: String,
    pub seed: u64,
    pub paths: Paths,
    pub encoders: EncoderConfig,
    pub nlp: NlpConfig,
    pub split: SplitSettings,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub explain: ExplainSettings,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Knowledge,
            mask: "all".into(),
            seed: 0,
            paths: Paths::default(),
            encoders: EncoderConfig::default(),
            nlp: NlpConfig::default(),
            split: SplitSettings::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            explain: ExplainSettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }

    /// Propagates the master seed and the shared sequence length.
    pub fn resolve(mut self) -> Self {
        self.train.seed = self.seed;
        self.encoders.skipgram.seed = self.seed;
        self.nlp.seq_len = self.model.seq_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_mask()?;
        self.nlp.validate()?;
        self.train.validate()?;
        let m = &self.model;
        if m.seq_len == 0
            || m.channels == 0
            || m.widths.is_empty()
            || m.widths.contains(&0)
            || m.embed_dim == 0
        {
            return Err(Error::config("model sizes must be positive"));
        }
        if self.explain.shapley_features > MAX_SHAPLEY_FEATURES {
            return Err(Error::config(format!(
                "explain.shapley_features is {}, exact enumeration supports at most {MAX_SHAPLEY_FEATURES}",
                self.explain.shapley_features
            )));
        }
        if self.explain.repeats == 0 {
            return Err(Error::config("explain.repeats must be positive"));
        }
        Ok(())
    }

    pub fn feature_mask(&self) -> Result<FeatureMask> {
        self.mask.parse()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn manifest_path(&self) -> Result<PathBuf> {
        match (&self.paths.manifest, &self.paths.corpus) {
            (Some(m), _) => Ok(m.clone()),
            (None, Some(c)) => Ok(c.join("manifest.csv")),
            (None, None) => Err(Error::config(
                "no corpus given; set paths.corpus or pass --corpus",
            )),
        }
    }
}
