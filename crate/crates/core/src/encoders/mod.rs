//! Knowledge-based per-call encoders.
//!
//! Every API call becomes one fixed-width vector made of contiguous blocks:
//!
//! | block         | width | encoder                         |
//! |---------------|-------|---------------------------------|
//! | API name      | 32    | skip-gram embedding             |
//! | file path     | 16    | similarity to dictionary        |
//! | DLL name      | 16    | similarity to dictionary        |
//! | registry key  | 16    | similarity to dictionary        |
//! | URL           | 16    | similarity to dictionary        |
//! | integer       | 16    | signed hashing on name          |
//! | address       | 20    | signed hashing on name+segment  |
//!
//! for 132 dimensions with the default configuration.

pub mod hashing;
pub mod similarity;
pub mod skipgram;

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{ApiCall, ArgValue, Report};

pub use hashing::{HashEncoder, HashKind, Segment, DEFAULT_SEGMENT_BOUNDARY};
pub use similarity::{
    classify_string, cosine_sim, fit_similarity_encoder, ngram_counts, NgramCounts,
    SimilarityEncoder, StringCategory,
};
pub use skipgram::{train_skipgram, SkipGramConfig, SkipGramModel};

pub const BUNDLE_FORMAT: &str = "apifeat-encoders";
pub const BUNDLE_VERSION: u32 = 1;

/// Blocks of the per-call vector, in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    Api,
    FilePath,
    Dll,
    Registry,
    Url,
    Integer,
    Address,
}

impl Block {
    pub const ALL: [Block; 7] = [
        Block::Api,
        Block::FilePath,
        Block::Dll,
        Block::Registry,
        Block::Url,
        Block::Integer,
        Block::Address,
    ];

    pub fn group(self) -> FeatureGroup {
        match self {
            Block::Api => FeatureGroup::Api,
            Block::FilePath | Block::Dll | Block::Registry | Block::Url => FeatureGroup::String,
            Block::Integer => FeatureGroup::Integer,
            Block::Address => FeatureGroup::Address,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Block::Api => "api",
            Block::FilePath => "file-path",
            Block::Dll => "dll",
            Block::Registry => "registry",
            Block::Url => "url",
            Block::Integer => "integer",
            Block::Address => "address",
        }
    }
}

/// The four feature types that ablation masks select between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureGroup {
    Api,
    String,
    Integer,
    Address,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Api,
        FeatureGroup::String,
        FeatureGroup::Integer,
        FeatureGroup::Address,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Api => "api",
            FeatureGroup::String => "string",
            FeatureGroup::Integer => "integer",
            FeatureGroup::Address => "address",
        }
    }
}

/// Block offsets for a given set of block widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    widths: [usize; 7],
}

impl Layout {
    pub fn new(api: usize, string_k: usize, integer: usize, address: usize) -> Self {
        Layout {
            widths: [
                api, string_k, string_k, string_k, string_k, integer, address,
            ],
        }
    }

    pub fn total(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        let i = Block::ALL.iter().position(|&b| b == block).unwrap();
        let start: usize = self.widths[..i].iter().sum();
        start..start + self.widths[i]
    }

    /// Union of the block ranges belonging to `group`.
    pub fn group_range(&self, group: FeatureGroup) -> Range<usize> {
        let ranges: Vec<Range<usize>> = Block::ALL
            .iter()
            .filter(|b| b.group() == group)
            .map(|&b| self.range(b))
            .collect();
        ranges[0].start..ranges[ranges.len() - 1].end
    }
}

impl Default for Layout {
    fn default() -> Self {
        Layout::new(32, 16, 16, 20)
    }
}

/// Selects which feature groups are encoded; the rest stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask {
    pub api: bool,
    pub string: bool,
    pub integer: bool,
    pub address: bool,
}

impl FeatureMask {
    pub const ALL: FeatureMask = FeatureMask {
        api: true,
        string: true,
        integer: true,
        address: true,
    };
    pub const API_ONLY: FeatureMask = FeatureMask {
        api: true,
        string: false,
        integer: false,
        address: false,
    };
    pub const PARAMS_ONLY: FeatureMask = FeatureMask {
        api: false,
        string: true,
        integer: true,
        address: true,
    };
    pub const API_ADDRESS: FeatureMask = FeatureMask {
        api: true,
        string: false,
        integer: false,
        address: true,
    };
    pub const API_STRING: FeatureMask = FeatureMask {
        api: true,
        string: true,
        integer: false,
        address: false,
    };
    pub const API_INTEGER: FeatureMask = FeatureMask {
        api: true,
        string: false,
        integer: true,
        address: false,
    };

    /// The six ablation modes.
    pub const ABLATION: [(&'static str, FeatureMask); 6] = [
        ("api-only", FeatureMask::API_ONLY),
        ("params-only", FeatureMask::PARAMS_ONLY),
        ("api+address", FeatureMask::API_ADDRESS),
        ("api+string", FeatureMask::API_STRING),
        ("api+integer", FeatureMask::API_INTEGER),
        ("all", FeatureMask::ALL),
    ];

    pub fn includes(&self, group: FeatureGroup) -> bool {
        match group {
            FeatureGroup::Api => self.api,
            FeatureGroup::String => self.string,
            FeatureGroup::Integer => self.integer,
            FeatureGroup::Address => self.address,
        }
    }
}

impl Default for FeatureMask {
    fn default() -> Self {
        FeatureMask::ALL
    }
}

impl FromStr for FeatureMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "all" => return Ok(FeatureMask::ALL),
            "api-only" => return Ok(FeatureMask::API_ONLY),
            "params-only" => return Ok(FeatureMask::PARAMS_ONLY),
            _ => {}
        }
        let mut m = FeatureMask {
            api: false,
            string: false,
            integer: false,
            address: false,
        };
        for part in s.split('+') {
            match part.trim() {
                "api" => m.api = true,
                "string" => m.string = true,
                "integer" => m.integer = true,
                "address" => m.address = true,
                other => {
                    return Err(Error::config(format!(
                        "unknown feature group `{other}` in mask `{s}`"
                    )))
                }
            }
        }
        Ok(m)
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((name, _)) = FeatureMask::ABLATION.iter().find(|(_, m)| m == self) {
            return f.write_str(name);
        }
        let parts: Vec<&str> = FeatureGroup::ALL
            .iter()
            .filter(|g| self.includes(**g))
            .map(|g| g.as_str())
            .collect();
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub skipgram: SkipGramConfig,
    pub dictionary_size: usize,
    pub integer_hash_dim: usize,
    pub address_hash_dim: usize,
    pub segment_boundary: u64,
    /// Divide each block by its root-mean-square over the training calls.
    pub standardize_blocks: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            skipgram: SkipGramConfig::default(),
            dictionary_size: 16,
            integer_hash_dim: 16,
            address_hash_dim: 20,
            segment_boundary: DEFAULT_SEGMENT_BOUNDARY,
            standardize_blocks: false,
        }
    }
}

/// All fitted knowledge-based encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBundle {
    pub format: String,
    pub version: u32,
    pub config: EncoderConfig,
    pub layout: Layout,
    pub skipgram: SkipGramModel,
    /// One encoder per [`StringCategory::ENCODED`] entry, in that order.
    pub strings: Vec<SimilarityEncoder>,
    pub integer_hash: HashEncoder,
    pub address_hash: HashEncoder,
    /// Per-block divisors, present when `standardize_blocks` is set.
    pub block_scales: Option<Vec<f64>>,
}

impl EncoderBundle {
    /// Fits every encoder on the given (training) reports.
    pub fn fit(train: &[Report], cfg: &EncoderConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyCorpus(
                "no training reports to fit encoders".into(),
            ));
        }
        let names: Vec<Vec<&str>> = train
            .iter()
            .map(|r| r.calls.iter().map(|c| c.api.as_str()).collect())
            .collect();
        let skipgram = train_skipgram(&names, &cfg.skipgram)?;

        let mut per_category: Vec<Vec<&str>> = vec![Vec::new(); StringCategory::ENCODED.len()];
        for call in train.iter().flat_map(|r| &r.calls) {
            for arg in &call.arguments {
                if let ArgValue::Str(s) = &arg.value {
                    let cat = classify_string(s);
                    if let Some(i) = StringCategory::ENCODED.iter().position(|&c| c == cat) {
                        per_category[i].push(s);
                    }
                }
            }
        }
        let strings = StringCategory::ENCODED
            .iter()
            .zip(&per_category)
            .map(|(&cat, strs)| {
                if strs.is_empty() {
                    Ok(SimilarityEncoder::empty(cat, cfg.dictionary_size))
                } else {
                    fit_similarity_encoder(strs, cat, cfg.dictionary_size)
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut bundle = EncoderBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            config: cfg.clone(),
            layout: Layout::new(
                cfg.skipgram.dim,
                cfg.dictionary_size,
                cfg.integer_hash_dim,
                cfg.address_hash_dim,
            ),
            skipgram,
            strings,
            integer_hash: HashEncoder::integer(cfg.integer_hash_dim),
            address_hash: HashEncoder::address(cfg.address_hash_dim, cfg.segment_boundary),
            block_scales: None,
        };
        if cfg.standardize_blocks {
            bundle.block_scales = Some(bundle.block_rms(train));
        }
        Ok(bundle)
    }

    fn block_rms(&self, train: &[Report]) -> Vec<f64> {
        let mut sums = [0.0f64; 7];
        let mut n = 0usize;
        for call in train.iter().flat_map(|r| &r.calls) {
            let v = self.encode_call(call, FeatureMask::ALL);
            for (i, b) in Block::ALL.iter().enumerate() {
                sums[i] += v[self.layout.range(*b)].iter().map(|x| x * x).sum::<f64>();
            }
            n += 1;
        }
        Block::ALL
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let count = (n * self.layout.range(*b).len()) as f64;
                let rms = if count > 0.0 {
                    (sums[i] / count).sqrt()
                } else {
                    0.0
                };
                if rms > 0.0 {
                    rms
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    pub fn string_encoder(&self, category: StringCategory) -> Option<&SimilarityEncoder> {
        self.strings.iter().find(|e| e.category() == category)
    }

    /// Encodes one call. Blocks outside `mask` are zero; several strings of
    /// one category in a call are mean-pooled.
    pub fn encode_call(&self, call: &ApiCall, mask: FeatureMask) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode_call_into(call, mask, &mut out);
        out
    }

    pub fn encode_call_into(&self, call: &ApiCall, mask: FeatureMask, out: &mut [f64]) {
        let layout = &self.layout;
        out.iter_mut().for_each(|x| *x = 0.0);
        if mask.api {
            if let Some(v) = self.skipgram.vector(&call.api) {
                out[layout.range(Block::Api)].copy_from_slice(v);
            }
        }
        if mask.string {
            let blocks = [Block::FilePath, Block::Dll, Block::Registry, Block::Url];
            let mut counts = [0usize; 4];
            let mut scratch = vec![0.0; self.config.dictionary_size];
            for arg in &call.arguments {
                let ArgValue::Str(s) = &arg.value else {
                    continue;
                };
                let cat = classify_string(s);
                let Some(i) = StringCategory::ENCODED.iter().position(|&c| c == cat) else {
                    continue;
                };
                self.strings[i].encode_grams_into(&ngram_counts(s), &mut scratch);
                for (o, x) in out[layout.range(blocks[i])].iter_mut().zip(&scratch) {
                    *o += x;
                }
                counts[i] += 1;
            }
            for (i, &n) in counts.iter().enumerate() {
                if n > 1 {
                    out[layout.range(blocks[i])]
                        .iter_mut()
                        .for_each(|x| *x /= n as f64);
                }
            }
        }
        if mask.integer {
            self.integer_hash
                .encode_into(&call.arguments, &mut out[layout.range(Block::Integer)]);
        }
        if mask.address {
            self.address_hash
                .encode_into(&call.arguments, &mut out[layout.range(Block::Address)]);
        }
        if let Some(scales) = &self.block_scales {
            for (b, s) in Block::ALL.iter().zip(scales) {
                out[layout.range(*b)].iter_mut().for_each(|x| *x /= s);
            }
        }
    }

    /// Encodes the first `max_calls` calls into a row-major `calls × dim` matrix.
    pub fn encode_report(&self, report: &Report, mask: FeatureMask, max_calls: usize) -> Vec<f64> {
        let n = report.calls.len().min(max_calls);
        let d = self.dim();
        let mut out = vec![0.0; n * d];
        for (call, row) in report.calls[..n].iter().zip(out.chunks_mut(d)) {
            self.encode_call_into(call, mask, row);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<String> {
        let json = self.to_json()?;
        w.write_all(json.as_bytes())?;
        Ok(sha256_hex(json.as_bytes()))
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = String::new();
        r.read_to_string(&mut buf)?;
        let bundle: EncoderBundle = serde_json::from_str(&buf)
            .map_err(|e| Error::format(format!("encoder bundle: {e}")))?;
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(Error::format(format!(
                "unsupported encoder bundle {} v{}",
                bundle.format, bundle.version
            )));
        }
        Ok(bundle)
    }

    /// SHA-256 of the serialized bundle; changes iff any fitted state changes.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.to_json().expect("bundle serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_report, Argument, Label};

    fn fig4() -> Report {
        parse_report(
            crate::ingest::tests::FIG4.as_bytes(),
            "fig4",
            Label::new("banker"),
            "2019-01".parse().unwrap(),
        )
        .unwrap()
    }

    fn bundle() -> EncoderBundle {
        EncoderBundle::fit(&[fig4()], &EncoderConfig::default()).unwrap()
    }

    #[test]
    fn default_layout_is_132() {
        let l = Layout::default();
        assert_eq!(l.total(), 132);
        assert_eq!(l.range(Block::Api), 0..32);
        assert_eq!(l.range(Block::FilePath), 32..48);
        assert_eq!(l.range(Block::Dll), 48..64);
        assert_eq!(l.range(Block::Registry), 64..80);
        assert_eq!(l.range(Block::Url), 80..96);
        assert_eq!(l.range(Block::Integer), 96..112);
        assert_eq!(l.range(Block::Address), 112..132);
        assert_eq!(l.group_range(FeatureGroup::String), 32..96);
    }

    #[test]
    fn mask_parsing() {
        for (name, m) in FeatureMask::ABLATION {
            assert_eq!(name.parse::<FeatureMask>().unwrap(), m);
            assert_eq!(m.to_string(), name);
        }
        assert_eq!(
            "string+api".parse::<FeatureMask>().unwrap(),
            FeatureMask::API_STRING
        );
        assert!("api+bogus".parse::<FeatureMask>().is_err());
    }

    #[test]
    fn fig4_full_mask() {
        let b = bundle();
        let r = fig4();
        let call = &r.calls[0];
        let v = b.encode_call(call, FeatureMask::ALL);
        assert_eq!(v.len(), 132);
        assert_eq!(
            &v[0..32],
            b.skipgram.vector("LdrGetProcedureAddress").unwrap()
        );
        let dll = b
            .string_encoder(StringCategory::DllName)
            .unwrap()
            .encode("ADVAPI32.dll");
        assert_eq!(&v[48..64], &dll[..]);
        assert_eq!(v[48], 1.0);
        assert!(v[32..48].iter().chain(&v[64..96]).all(|&x| x == 0.0));
        // Ordinal=0 is the only integer argument.
        assert!(v[96..112].iter().all(|&x| x == 0.0));
        let addr: Vec<Argument> = call
            .arguments
            .iter()
            .filter(|a| matches!(a.value, ArgValue::VAddr(_)))
            .cloned()
            .collect();
        assert_eq!(addr.len(), 2);
        assert_eq!(&v[112..132], &b.address_hash.encode(&addr)[..]);
        assert!(v[112..132].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn api_only_mask_zeroes_the_rest() {
        let b = bundle();
        let v = b.encode_call(&fig4().calls[0], FeatureMask::API_ONLY);
        assert!(v[32..].iter().all(|&x| x == 0.0));
        assert!(v[..32].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn call_without_arguments() {
        let b = bundle();
        let call = ApiCall {
            api: "LdrGetProcedureAddress".into(),
            arguments: vec![],
        };
        let v = b.encode_call(&call, FeatureMask::ALL);
        assert!(v[32..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn strings_of_one_category_are_mean_pooled() {
        let b = bundle();
        let call = ApiCall {
            api: "X".into(),
            arguments: vec![
                Argument::new("a", "ADVAPI32.dll"),
                Argument::new("b", "kernel32.dll"),
            ],
        };
        let v = b.encode_call(&call, FeatureMask::ALL);
        let enc = b.string_encoder(StringCategory::DllName).unwrap();
        let (x, y) = (enc.encode("ADVAPI32.dll"), enc.encode("kernel32.dll"));
        for i in 0..16 {
            assert!((v[48 + i] - (x[i] + y[i]) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bundle_round_trip_and_fingerprint() {
        let b = bundle();
        let mut buf = Vec::new();
        let hash = b.save(&mut buf).unwrap();
        assert_eq!(hash, b.fingerprint());
        let back = EncoderBundle::load(&buf[..]).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.fingerprint(), b.fingerprint());
    }

    #[test]
    fn standardized_blocks_keep_mask_zeroes() {
        let cfg = EncoderConfig {
            standardize_blocks: true,
            ..Default::default()
        };
        let b = EncoderBundle::fit(&[fig4()], &cfg).unwrap();
        let scales = b.block_scales.as_ref().unwrap();
        assert_eq!(scales.len(), 7);
        assert!(scales.iter().all(|s| *s > 0.0 && s.is_finite()));
        let v = b.encode_call(&fig4().calls[0], FeatureMask::API_ONLY);
        assert!(v[32..].iter().all(|&x| x == 0.0));
    }
}
