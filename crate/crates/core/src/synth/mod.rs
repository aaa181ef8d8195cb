//! Synthetic labeled corpora with planted family motifs.
//!
//! Each sample is a run of background calls drawn uniformly from a fixed API
//! list, with family motifs (short call subsequences carrying their own
//! argument templates) written over it at evenly spaced slots. A slot holds a
//! motif with probability equal to the family's motif strength.

pub mod fixtures;

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::hashing::keyed_hash;
use crate::error::{Error, Result};
use crate::ingest::{write_manifest, ApiCall, Argument, Label, ManifestEntry, Month, Report};
use fixtures::*;

/// How a motif argument value is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValueTemplate {
    Literal {
        value: String,
    },
    /// Uniform over the list; repeat an entry to weight it.
    Choice {
        values: Vec<String>,
    },
    /// `#` a decimal digit, `%` a hex digit, `?` a lowercase letter, anything else verbatim.
    Pattern {
        pattern: String,
    },
    /// Page-aligned address below 2^31.
    UserAddress,
    /// Page-aligned address in [2^31, 2^32).
    KernelAddress,
    IntRange {
        min: i64,
        max: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgTemplate {
    pub name: String,
    pub value: ValueTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifCall {
    pub api: String,
    #[serde(default)]
    pub args: Vec<ArgTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub calls: Vec<MotifCall>,
}

/// Probabilities of each argument type among background arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMix {
    pub string: f64,
    pub integer: f64,
    pub vaddr: f64,
}

impl Default for TypeMix {
    fn default() -> Self {
        TypeMix {
            string: 0.4,
            integer: 0.35,
            vaddr: 0.25,
        }
    }
}

impl TypeMix {
    fn validate(&self, owner: &str) -> Result<()> {
        let p = [self.string, self.integer, self.vaddr];
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(format!(
                "{owner}: argument type probabilities must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub first_month: Month,
    pub last_month: Month,
    pub per_month: usize,
    #[serde(default)]
    pub motifs: Vec<Motif>,
    /// Probability that a slot carries a motif.
    pub strength: f64,
    #[serde(default)]
    pub type_mix: TypeMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub families: Vec<FamilySpec>,
    /// Goodware samples per month over the months any family covers.
    #[serde(default)]
    pub goodware_per_month: usize,
    #[serde(default)]
    pub goodware_mix: TypeMix,
    /// Motifs planted in goodware, for calls that should not tell classes apart.
    #[serde(default)]
    pub goodware_motifs: Vec<Motif>,
    #[serde(default)]
    pub goodware_strength: f64,
    /// Inclusive range of report lengths.
    pub calls_per_sample: (usize, usize),
    /// Inclusive range of background arguments per call.
    pub args_per_call: (usize, usize),
    pub motif_slots: usize,
    #[serde(default = "default_background")]
    pub background_apis: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_background() -> Vec<String> {
    BACKGROUND_APIS.iter().map(|s| s.to_string()).collect()
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::config("corpus needs at least one family"));
        }
        let (lo, hi) = self.calls_per_sample;
        if lo == 0 || lo > hi {
            return Err(Error::config(
                "calls_per_sample must be a non-empty range of positive lengths",
            ));
        }
        if self.args_per_call.0 > self.args_per_call.1 {
            return Err(Error::config("args_per_call range is empty"));
        }
        if self.background_apis.is_empty() {
            return Err(Error::config("background API list is empty"));
        }
        self.goodware_mix.validate("goodware")?;
        let mut names = BTreeSet::new();
        for f in &self.families {
            if !names.insert(f.name.to_lowercase()) {
                return Err(Error::config(format!("duplicate family `{}`", f.name)));
            }
            if Label::new(f.name.as_str()).is_goodware() || f.name.is_empty() {
                return Err(Error::config(format!(
                    "`{}` is not a usable family name",
                    f.name
                )));
            }
            if f.first_month > f.last_month {
                return Err(Error::config(format!("{}: month range is empty", f.name)));
            }
            if !(0.0..=1.0).contains(&f.strength) {
                return Err(Error::config(format!(
                    "{}: motif strength must lie in [0, 1]",
                    f.name
                )));
            }
            f.type_mix.validate(&f.name)?;
            self.validate_motifs(&f.name, &f.motifs)?;
        }
        if !(0.0..=1.0).contains(&self.goodware_strength) {
            return Err(Error::config("goodware motif strength must lie in [0, 1]"));
        }
        self.validate_motifs("goodware", &self.goodware_motifs)?;
        Ok(())
    }

    fn validate_motifs(&self, owner: &str, motifs: &[Motif]) -> Result<()> {
        let lo = self.calls_per_sample.0;
        for m in motifs {
            if m.calls.is_empty() {
                return Err(Error::config(format!("{owner}: empty motif")));
            }
            if self.motif_slots > 0 && m.calls.len() > lo / self.motif_slots {
                return Err(Error::config(format!(
                    "{owner}: motif of {} calls does not fit {} slots in {lo} calls",
                    m.calls.len(),
                    self.motif_slots
                )));
            }
            for a in m.calls.iter().flat_map(|c| &c.args) {
                match &a.value {
                    ValueTemplate::Choice { values } if values.is_empty() => {
                        return Err(Error::config(format!(
                            "{owner}: empty choice for `{}`",
                            a.name
                        )))
                    }
                    ValueTemplate::IntRange { min, max } if min > max => {
                        return Err(Error::config(format!(
                            "{owner}: empty range for `{}`",
                            a.name
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn month_span(&self) -> (Month, Month) {
        let first = self
            .families
            .iter()
            .map(|f| f.first_month)
            .min()
            .expect("validated");
        let last = self
            .families
            .iter()
            .map(|f| f.last_month)
            .max()
            .expect("validated");
        (first, last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub reports: Vec<Report>,
    pub manifest: Vec<ManifestEntry>,
}

fn months(first: Month, last: Month) -> impl Iterator<Item = Month> {
    (first.ordinal()..=last.ordinal()).map(Month::from_ordinal)
}

/// Generates every sample of the spec. Each sample draws from its own RNG
/// seeded by the corpus seed and its id, so output is fully deterministic.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut reports = Vec::new();
    for fam in &spec.families {
        for month in months(fam.first_month, fam.last_month) {
            for i in 0..fam.per_month {
                let id = format!("{}-{month}-{i:04}", fam.name.to_lowercase());
                reports.push(sample(
                    spec,
                    &id,
                    Label::new(fam.name.as_str()),
                    month,
                    &fam.type_mix,
                    &fam.motifs,
                    fam.strength,
                ));
            }
        }
    }
    if spec.goodware_per_month > 0 {
        let (first, last) = spec.month_span();
        for month in months(first, last) {
            for i in 0..spec.goodware_per_month {
                let id = format!("goodware-{month}-{i:04}");
                reports.push(sample(
                    spec,
                    &id,
                    Label::new(Label::GOODWARE),
                    month,
                    &spec.goodware_mix,
                    &spec.goodware_motifs,
                    spec.goodware_strength,
                ));
            }
        }
    }
    let manifest = reports
        .iter()
        .map(|r| ManifestEntry {
            sample_id: r.sample_id.clone(),
            label: r.label.clone(),
            month: r.month,
        })
        .collect();
    Ok(Corpus { reports, manifest })
}

fn sample(
    spec: &CorpusSpec,
    id: &str,
    label: Label,
    month: Month,
    mix: &TypeMix,
    motifs: &[Motif],
    strength: f64,
) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(keyed_hash(spec.seed, id.as_bytes()));
    let n = rng.gen_range(spec.calls_per_sample.0..=spec.calls_per_sample.1);
    let mut calls: Vec<ApiCall> = (0..n)
        .map(|_| background_call(spec, mix, &mut rng))
        .collect();
    if spec.motif_slots > 0 {
        let seg = n / spec.motif_slots;
        for k in 0..spec.motif_slots {
            // Drawn even when there is nothing to plant so every class consumes
            // the same random stream.
            let hit = rng.gen::<f64>() < strength;
            if !hit || motifs.is_empty() {
                continue;
            }
            let motif = &motifs[rng.gen_range(0..motifs.len())];
            let start = k * seg + rng.gen_range(0..=seg - motif.calls.len());
            for (j, mc) in motif.calls.iter().enumerate() {
                calls[start + j] = ApiCall {
                    api: mc.api.clone(),
                    arguments: mc
                        .args
                        .iter()
                        .map(|a| Argument::new(a.name.as_str(), &draw(&a.value, &mut rng)))
                        .collect(),
                };
            }
        }
    }
    Report::new(id, label, month, calls)
}

fn background_call(spec: &CorpusSpec, mix: &TypeMix, rng: &mut ChaCha8Rng) -> ApiCall {
    let api = spec.background_apis[rng.gen_range(0..spec.background_apis.len())].clone();
    let k = rng.gen_range(spec.args_per_call.0..=spec.args_per_call.1);
    let arguments = (0..k)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < mix.string {
                let (name, cat) = STRING_ARG_NAMES[rng.gen_range(0..STRING_ARG_NAMES.len())];
                let pool = [FILE_PATHS, DLL_NAMES, REGISTRY_KEYS, URLS, OTHER_STRINGS][cat];
                Argument::new(name, pool[rng.gen_range(0..pool.len())])
            } else if u < mix.string + mix.integer {
                let name = INTEGER_ARG_NAMES[rng.gen_range(0..INTEGER_ARG_NAMES.len())];
                let v = if rng.gen_bool(0.2) {
                    0
                } else {
                    10f64.powf(rng.gen_range(0.0..6.0)) as i64
                };
                Argument::new(name, &v.to_string())
            } else {
                let name = ADDRESS_ARG_NAMES[rng.gen_range(0..ADDRESS_ARG_NAMES.len())];
                let tmpl = if rng.gen_bool(0.8) {
                    ValueTemplate::UserAddress
                } else {
                    ValueTemplate::KernelAddress
                };
                Argument::new(name, &draw(&tmpl, rng))
            }
        })
        .collect();
    ApiCall { api, arguments }
}

fn draw(t: &ValueTemplate, rng: &mut ChaCha8Rng) -> String {
    const HEX: &[u8] = b"0123456789abcdef";
    match t {
        ValueTemplate::Literal { value } => value.clone(),
        ValueTemplate::Choice { values } => values[rng.gen_range(0..values.len())].clone(),
        ValueTemplate::Pattern { pattern } => pattern
            .chars()
            .map(|c| match c {
                '#' => char::from(b'0' + rng.gen_range(0..10u8)),
                '%' => char::from(HEX[rng.gen_range(0..16)]),
                '?' => char::from(b'a' + rng.gen_range(0..26u8)),
                c => c,
            })
            .collect(),
        ValueTemplate::UserAddress => format!("0x{:08x}", rng.gen_range(0x10u64..0x7_fff0) << 12),
        ValueTemplate::KernelAddress => {
            format!("0x{:08x}", rng.gen_range(0x8_0000u64..0x10_0000) << 12)
        }
        ValueTemplate::IntRange { min, max } => rng.gen_range(*min..=*max).to_string(),
    }
}

/// Writes `<dir>/<sample_id>.json` per report plus `<dir>/manifest.csv`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in &corpus.reports {
        std::fs::write(
            dir.join(format!("{}.json", r.sample_id)),
            r.to_sandbox_json(),
        )?;
    }
    write_manifest(
        std::fs::File::create(dir.join("manifest.csv"))?,
        &corpus.manifest,
    )
}

fn month0() -> Month {
    Month::new(2019, 1).expect("valid month")
}

fn spread(per_family: usize, months: usize) -> Result<usize> {
    if months == 0 || per_family % months != 0 {
        return Err(Error::config(format!(
            "{per_family} samples do not spread evenly over {months} months"
        )));
    }
    Ok(per_family / months)
}

/// Path strings that reveal which member of a pair a motif belongs to.
pub const SIDE_PATHS: [&str; 2] = [
    "C:\\Users\\Public\\Libraries\\svchost.exe",
    "\\??\\C:\\ProgramData\\Package Cache\\setup.bin",
];
pub const SHARED_PATH: &str = "C:\\Windows\\System32\\rundll32.exe";

/// Six families in three pairs. Mates share one 3-call API motif; within a
/// pair the mate is told apart only by its arguments: the motif's view base
/// sits in the user or kernel segment, and its image path names the mate's
/// side with probability 3/4 (otherwise a path shared by everyone).
///
/// Argument names, integer ranges and path choices depend on the side alone,
/// so argument features identify the side but not the pair, and API names
/// identify the pair but not the side.
pub fn planted_pairs(
    per_family: usize,
    months: usize,
    strength: f64,
    seed: u64,
) -> Result<CorpusSpec> {
    let per_month = spread(per_family, months)?;
    let first = month0();
    let last = Month::from_ordinal(first.ordinal() + months as u32 - 1);
    let families = (0..6)
        .map(|f| {
            let (pair, side) = (f / 2, f % 2);
            let apis = &MOTIF_APIS[pair * 3..pair * 3 + 3];
            let mut paths = vec![SIDE_PATHS[side].to_string(); 3];
            paths.push(SHARED_PATH.to_string());
            let base = if side == 0 {
                ValueTemplate::UserAddress
            } else {
                ValueTemplate::KernelAddress
            };
            let motif = Motif {
                calls: vec![
                    MotifCall {
                        api: apis[0].into(),
                        args: vec![ArgTemplate {
                            name: "ImagePath".into(),
                            value: ValueTemplate::Choice { values: paths },
                        }],
                    },
                    MotifCall {
                        api: apis[1].into(),
                        args: vec![
                            ArgTemplate {
                                name: "ViewBase".into(),
                                value: base,
                            },
                            ArgTemplate {
                                name: "ViewSize".into(),
                                value: ValueTemplate::IntRange {
                                    min: 4096,
                                    max: 1 << 20,
                                },
                            },
                        ],
                    },
                    MotifCall {
                        api: apis[2].into(),
                        args: vec![],
                    },
                ],
            };
            FamilySpec {
                name: FAMILY_NAMES[f].into(),
                first_month: first,
                last_month: last,
                per_month,
                motifs: vec![motif],
                strength,
                type_mix: TypeMix::default(),
            }
        })
        .collect();
    Ok(CorpusSpec {
        families,
        goodware_per_month: 0,
        goodware_mix: TypeMix::default(),
        goodware_motifs: vec![],
        goodware_strength: 0.0,
        calls_per_sample: (40, 56),
        args_per_call: (0, 3),
        motif_slots: 6,
        background_apis: default_background(),
        seed,
    })
}

/// Where the single planted signal of [`single_signal`] lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    /// One family makes a common API call carrying a URL; goodware makes the
    /// same call without it, and no other call has string arguments.
    StringArgument,
    /// One family makes an argument-free call to an API nobody else uses.
    ApiToken,
}

/// API name planted by [`Signal::ApiToken`].
pub const PLANTED_API: &str = "NtRaiseHardError";
/// Background API that carries the URL planted by [`Signal::StringArgument`].
pub const URL_CARRIER_API: &str = "InternetOpenUrlW";

/// One family against goodware, separable through exactly one planted signal.
pub fn single_signal(
    signal: Signal,
    per_month: usize,
    months: usize,
    seed: u64,
) -> Result<CorpusSpec> {
    if months == 0 {
        return Err(Error::config("need at least one month"));
    }
    let first = month0();
    let last = Month::from_ordinal(first.ordinal() + months as u32 - 1);
    let (call, mix, decoy) = match signal {
        Signal::StringArgument => (
            MotifCall {
                api: URL_CARRIER_API.into(),
                args: vec![ArgTemplate {
                    name: "URL".into(),
                    value: ValueTemplate::Choice {
                        values: URLS.iter().map(|s| s.to_string()).collect(),
                    },
                }],
            },
            TypeMix {
                string: 0.0,
                integer: 0.6,
                vaddr: 0.4,
            },
            // Goodware makes the same call without the URL, so the API sequence carries no signal.
            vec![Motif {
                calls: vec![MotifCall {
                    api: URL_CARRIER_API.into(),
                    args: vec![],
                }],
            }],
        ),
        Signal::ApiToken => (
            MotifCall {
                api: PLANTED_API.into(),
                args: vec![],
            },
            TypeMix::default(),
            vec![],
        ),
    };
    Ok(CorpusSpec {
        families: vec![FamilySpec {
            name: FAMILY_NAMES[0].into(),
            first_month: first,
            last_month: last,
            per_month,
            motifs: vec![Motif { calls: vec![call] }],
            strength: 1.0,
            type_mix: mix,
        }],
        goodware_per_month: per_month,
        goodware_mix: mix,
        goodware_strength: if decoy.is_empty() { 0.0 } else { 1.0 },
        goodware_motifs: decoy,
        calls_per_sample: (24, 40),
        args_per_call: (0, 3),
        motif_slots: 3,
        background_apis: default_background(),
        seed,
    })
}
