use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{Mode, RunConfig};
use super::Command;
use crate::encoders::{EncoderBundle, FeatureMask};
use crate::error::{Error, Result};
use crate::experiment::{
    class_map, encode_knowledge, encode_nlp, fit_and_score, partition, Encoded,
};
use crate::explain::{
    occlusion_tokens, pearson_blocks, permutation_importance_blocks, permutation_importance_tokens,
    shapley_blocks, shapley_tokens, AttributionReport, PermutationConfig,
};
use crate::ingest::{
    load_corpus, read_manifest, read_reports, type_counts, write_manifest, write_reports_with_meta,
    ManifestEntry, Report,
};
use crate::model::{
    evaluate, train, Checkpoint, ClassMap, Cnn, Dataset, InputMode, Inputs, Metrics,
};
use crate::nlp::NlpPipeline;
use crate::split::{
    build_split, covariate_profile, read_split_manifest, split_summary, write_split_manifest,
    Assignment, Split,
};
use crate::synth::generate_corpus;

const TOOL: &str = "apifeat";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Written as `stage-<name>.json` after a stage succeeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub mode: Mode,
    pub config_hash: String,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

/// Removes the lock file when the stage ends.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Lock> {
        let path = dir.join(".lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::config(format!(
                "{} is held by another run; delete it if that run is gone",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    hash: String,
    outputs: Vec<String>,
}

impl<'a> Ctx<'a> {
    fn meta(&self) -> BTreeMap<String, String> {
        [
            ("tool", TOOL.to_string()),
            ("version", VERSION.to_string()),
            ("config_hash", self.hash.clone()),
            ("mode", self.cfg.mode.as_str().to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.outputs.push(name.to_string());
        Ok(p)
    }

    fn json(&mut self, name: &str, body: Value) -> Result<()> {
        let mut doc = json!({ "tool": TOOL, "version": VERSION, "config_hash": self.hash });
        match body {
            Value::Object(map) => doc.as_object_mut().expect("object").extend(map),
            other => {
                doc["data"] = other;
            }
        }
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::format(e.to_string()))?;
        fs::write(self.path(name)?, text + "\n")?;
        Ok(())
    }

    /// CSV with a leading `#` provenance comment.
    fn csv<F: FnOnce(&mut Vec<u8>) -> Result<()>>(&mut self, name: &str, body: F) -> Result<()> {
        let mut buf = format!("# {TOOL} {VERSION} config {}\n", self.hash).into_bytes();
        body(&mut buf)?;
        fs::write(self.path(name)?, buf)?;
        Ok(())
    }

    fn require(&self, stage: &str) -> Result<StageRecord> {
        let p = self.out.join(format!("stage-{stage}.json"));
        let Ok(text) = fs::read_to_string(&p) else {
            return Err(Error::Stage {
                required: stage.to_string(),
            });
        };
        let rec: StageRecord = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", p.display())))?;
        if rec.config_hash != self.hash {
            log::warn!(
                "`{stage}` ran with config {}, this run uses {}",
                &rec.config_hash[..12],
                &self.hash[..12]
            );
        }
        Ok(rec)
    }

    /// Like `require`, and the stage must have run in the current mode.
    fn require_mode(&self, stage: &str) -> Result<StageRecord> {
        let rec = self.require(stage)?;
        if rec.mode != self.cfg.mode {
            log::error!(
                "`{stage}` ran in {} mode, this run is {}",
                rec.mode.as_str(),
                self.cfg.mode.as_str()
            );
            return Err(Error::Stage {
                required: stage.to_string(),
            });
        }
        Ok(rec)
    }

    fn finish(self, stage: &str) -> Result<()> {
        let rec = StageRecord {
            tool: TOOL.into(),
            version: VERSION.into(),
            stage: stage.into(),
            mode: self.cfg.mode,
            config_hash: self.hash.clone(),
            outputs: self.outputs,
            config: self.cfg.clone(),
        };
        let text = serde_json::to_string_pretty(&rec).map_err(|e| Error::format(e.to_string()))?;
        fs::write(self.out.join(format!("stage-{stage}.json")), text + "\n")?;
        Ok(())
    }

    fn reports(&self) -> Result<Vec<Report>> {
        read_reports(fs::File::open(self.out.join("reports.jsonl"))?)
    }

    fn assignments(&self) -> Result<Vec<Assignment>> {
        read_split_manifest(fs::File::open(self.out.join("split.csv"))?)
    }

    fn bundle(&self) -> Result<EncoderBundle> {
        let doc: Value = serde_json::from_slice(&fs::read(self.out.join("encoders.json"))?)
            .map_err(|e| Error::format(format!("encoders.json: {e}")))?;
        let bundle = doc
            .get("bundle")
            .ok_or_else(|| Error::format("encoders.json has no bundle"))?;
        EncoderBundle::load(bundle.to_string().as_bytes())
    }

    fn dataset(&self, split: Split) -> Result<(Dataset, ClassMap, BTreeMap<String, String>)> {
        Dataset::read(fs::File::open(
            self.out.join(format!("encoded/{}.bin", split.as_str())),
        )?)
    }
}

/// Runs one stage under the artifact directory lock.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<()> {
    let out = cfg.paths.out.clone();
    fs::create_dir_all(&out)?;
    let _lock = Lock::acquire(&out)?;
    let mut ctx = Ctx {
        cfg,
        out,
        hash: cfg.hash(),
        outputs: Vec::new(),
    };
    log::info!("{} (config {})", command.name(), &ctx.hash[..12]);
    match command {
        Command::Ingest => ingest(&mut ctx)?,
        Command::Stats => stats(&mut ctx)?,
        Command::Split => split(&mut ctx)?,
        Command::Fit => fit(&mut ctx)?,
        Command::Encode => encode(&mut ctx)?,
        Command::Train => train_stage(&mut ctx)?,
        Command::Eval => eval(&mut ctx)?,
        Command::Explain => explain(&mut ctx)?,
        Command::Synth => synth(&mut ctx)?,
        Command::Ablate => ablate(&mut ctx)?,
    }
    ctx.finish(command.name())
}

fn ingest(ctx: &mut Ctx) -> Result<()> {
    let corpus = ctx
        .cfg
        .paths
        .corpus
        .clone()
        .ok_or_else(|| Error::config("no corpus given; pass --corpus"))?;
    let manifest = read_manifest(fs::File::open(ctx.cfg.manifest_path()?)?)?;
    if manifest.is_empty() {
        return Err(Error::EmptyCorpus("manifest lists no samples".into()));
    }
    let reports = load_corpus(&corpus, &manifest)?;
    let meta = ctx.meta();
    write_reports_with_meta(
        fs::File::create(ctx.path("reports.jsonl")?)?,
        &reports,
        &meta,
    )?;
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    let mut months: BTreeMap<String, usize> = BTreeMap::new();
    for r in &reports {
        *labels.entry(r.label.as_str()).or_default() += 1;
        *months.entry(r.month.to_string()).or_default() += 1;
    }
    let empty: Vec<&str> = reports
        .iter()
        .filter(|r| r.has_warnings())
        .map(|r| r.sample_id.as_str())
        .collect();
    if !empty.is_empty() {
        log::warn!("{} reports contain no calls", empty.len());
    }
    let calls: usize = reports.iter().map(|r| r.calls.len()).sum();
    ctx.json("ingest.json", json!({ "samples": reports.len(), "calls": calls, "labels": labels, "months": months, "no_calls": empty }))?;
    log::info!("ingested {} reports", reports.len());
    Ok(())
}

fn stats(ctx: &mut Ctx) -> Result<()> {
    ctx.require("ingest")?;
    let reports = ctx.reports()?;
    let mut groups: BTreeMap<String, Vec<&Report>> = BTreeMap::new();
    for r in &reports {
        groups
            .entry(r.label.as_str().to_string())
            .or_default()
            .push(r);
    }
    groups.insert("all".into(), reports.iter().collect());
    let mut rows = Vec::new();
    for (label, rs) in &groups {
        let c = type_counts(rs.iter().copied(), None);
        let p = c.proportions();
        rows.push(json!({
            "label": label,
            "samples": rs.len(),
            "api_name": p.map(|p| p.api_name),
            "string": p.map(|p| p.string),
            "integer": p.map(|p| p.integer),
            "vaddr": p.map(|p| p.vaddr),
            "counts": { "api_name": c.api_name, "string": c.string, "integer": c.integer, "vaddr": c.vaddr },
        }));
    }
    ctx.csv("stats.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["label", "samples", "api_name", "string", "integer", "vaddr"])?;
        for r in &rows {
            let f = |k: &str| {
                r[k].as_f64()
                    .map_or("NA".to_string(), |v| format!("{v:.6}"))
            };
            w.write_record([
                r["label"].as_str().unwrap_or("").to_string(),
                r["samples"].to_string(),
                f("api_name"),
                f("string"),
                f("integer"),
                f("vaddr"),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    ctx.json("stats.json", json!({ "labels": rows }))
}

fn split(ctx: &mut Ctx) -> Result<()> {
    ctx.require("ingest")?;
    let cfg = ctx.cfg.split.to_config(ctx.cfg.seed)?;
    let reports = ctx.reports()?;
    let entries: Vec<ManifestEntry> = reports
        .iter()
        .map(|r| ManifestEntry {
            sample_id: r.sample_id.clone(),
            label: r.label.clone(),
            month: r.month,
        })
        .collect();
    let plan = build_split(&entries, &cfg)?;
    ctx.csv("split.csv", |buf| write_split_manifest(buf, &plan))?;
    let mut summary = split_summary(&plan);
    summary["classes"] = json!(class_map(&plan.assignments).names);
    ctx.json("split.json", summary)?;
    let profile = covariate_profile(&plan, &reports, cfg.profile_calls, cfg.drift_threshold);
    if profile.flagged {
        log::warn!(
            "covariate drift {:.3} exceeds {:.3}",
            profile.max_drift,
            profile.threshold
        );
    }
    ctx.json(
        "drift.json",
        serde_json::to_value(&profile).map_err(|e| Error::format(e.to_string()))?,
    )?;
    Ok(())
}

fn fit(ctx: &mut Ctx) -> Result<()> {
    ctx.require("split")?;
    let parts = partition(&ctx.reports()?, &ctx.assignments()?)?;
    match ctx.cfg.mode {
        Mode::Knowledge => {
            let bundle = EncoderBundle::fit(&parts.train, &ctx.cfg.encoders)?;
            let fingerprint = bundle.fingerprint();
            let doc = json!({ "fingerprint": fingerprint, "bundle": bundle });
            ctx.json("encoders.json", doc)?;
        }
        Mode::Nlp => {
            let pipeline = NlpPipeline::fit(&parts.train, &ctx.cfg.nlp)?;
            let meta = ctx.meta();
            let dir = ctx.path("nlp")?;
            pipeline.save_with_meta(&dir, &meta)?;
            log::info!("vocabulary of {} tokens", pipeline.vocab.len());
        }
    }
    Ok(())
}

fn encoded(ctx: &Ctx) -> Result<(Encoded, ClassMap, Option<usize>)> {
    let assignments = ctx.assignments()?;
    let parts = partition(&ctx.reports()?, &assignments)?;
    let classes = class_map(&assignments);
    match ctx.cfg.mode {
        Mode::Knowledge => {
            let bundle = ctx.bundle()?;
            let e = encode_knowledge(
                &bundle,
                &parts,
                ctx.cfg.feature_mask()?,
                ctx.cfg.model.seq_len,
                &classes,
            )?;
            Ok((e, classes, None))
        }
        Mode::Nlp => {
            let p = NlpPipeline::load(&ctx.out.join("nlp"))?;
            Ok((
                encode_nlp(&p, &parts, &classes)?,
                classes,
                Some(p.vocab.len()),
            ))
        }
    }
}

fn encode(ctx: &mut Ctx) -> Result<()> {
    ctx.require_mode("fit")?;
    let (data, classes, vocab) = encoded(ctx)?;
    let mut meta = ctx.meta();
    meta.insert("mask".into(), ctx.cfg.mask.clone());
    if let Some(v) = vocab {
        meta.insert("vocab_size".into(), v.to_string());
    }
    for (split, ds) in [
        (Split::Train, &data.train),
        (Split::Val, &data.val),
        (Split::Test, &data.test),
    ] {
        let p = ctx.path(&format!("encoded/{}.bin", split.as_str()))?;
        ds.write(
            std::io::BufWriter::new(fs::File::create(p)?),
            &classes,
            &meta,
        )?;
        log::info!("{}: {} samples", split.as_str(), ds.len());
    }
    Ok(())
}

fn input_mode(
    ds: &Dataset,
    meta: &BTreeMap<String, String>,
    embed_dim: usize,
) -> Result<InputMode> {
    match &ds.inputs {
        Inputs::Dense { dim, .. } => Ok(InputMode::Knowledge { dim: *dim }),
        Inputs::Tokens { .. } => {
            let vocab_size = meta
                .get("vocab_size")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| {
                    Error::format("encoded dataset does not record its vocabulary size")
                })?;
            Ok(InputMode::Nlp {
                vocab_size,
                embed_dim,
            })
        }
    }
}

fn train_stage(ctx: &mut Ctx) -> Result<()> {
    ctx.require_mode("encode")?;
    let (tr, classes, meta) = ctx.dataset(Split::Train)?;
    let (va, _, _) = ctx.dataset(Split::Val)?;
    if ctx.cfg.model.seq_len != tr.seq_len() {
        return Err(Error::config(format!(
            "model.seq_len {} differs from the encoded length {}; rerun `encode`",
            ctx.cfg.model.seq_len,
            tr.seq_len()
        )));
    }
    let input = input_mode(&tr, &meta, ctx.cfg.model.embed_dim)?;
    let cnn = Cnn::new(ctx.cfg.model.cnn_config(input, classes.len(), ctx.cfg.seed))?;
    let outcome = train(cnn, &tr, Some(&va), &ctx.cfg.train)?;
    let mut ck_meta = ctx.meta();
    ck_meta.insert("mask".into(), ctx.cfg.mask.clone());
    ck_meta.insert(
        "best_epoch".into(),
        outcome.best_epoch.map_or("none".into(), |e| e.to_string()),
    );
    let ck = Checkpoint {
        model: outcome.model,
        class_names: classes.names.clone(),
        meta: ck_meta,
    };
    ck.write(std::io::BufWriter::new(fs::File::create(
        ctx.path("model.ckpt")?,
    )?))?;
    let history = outcome.history.clone();
    ctx.csv("history.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for rec in &history {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    ctx.json(
        "train.json",
        json!({ "best_epoch": outcome.best_epoch, "history": history, "classes": classes.names }),
    )
}

fn metrics_json(m: &Metrics, classes: &ClassMap) -> Value {
    let per_class: BTreeMap<&str, _> = classes
        .names
        .iter()
        .map(String::as_str)
        .zip(&m.per_class)
        .collect();
    json!({
        "accuracy": m.accuracy,
        "macro_precision": m.macro_precision,
        "macro_recall": m.macro_recall,
        "macro_f1": m.macro_f1,
        "auc": m.roc.auc,
        "loss": m.loss,
        "per_class": per_class,
        "confusion": m.confusion,
        "classes": classes.names,
    })
}

fn roc_csv(m: &Metrics) -> impl FnOnce(&mut Vec<u8>) -> Result<()> + '_ {
    move |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["threshold", "fpr", "tpr"])?;
        for i in 0..m.roc.thresholds.len() {
            w.write_record([
                m.roc.thresholds[i].to_string(),
                m.roc.fpr[i].to_string(),
                m.roc.tpr[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn load_model(ctx: &Ctx) -> Result<Checkpoint> {
    Checkpoint::read(std::io::BufReader::new(fs::File::open(
        ctx.out.join("model.ckpt"),
    )?))
}

fn eval(ctx: &mut Ctx) -> Result<()> {
    ctx.require_mode("train")?;
    let ck = load_model(ctx)?;
    let (test, classes, _) = ctx.dataset(Split::Test)?;
    let m = evaluate(&ck.model, &test)?;
    log::info!("test macro F1 {:.4}, AUC {:.4}", m.macro_f1, m.roc.auc);
    ctx.json("metrics.json", metrics_json(&m, &classes))?;
    ctx.csv("roc.csv", roc_csv(&m))?;
    let names = classes.names.clone();
    ctx.csv("confusion.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in names.iter().zip(&m.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn attribution(ctx: &mut Ctx, stem: &str, rep: &AttributionReport) -> Result<()> {
    ctx.csv(&format!("{stem}.csv"), |buf| rep.write_csv(buf))?;
    ctx.json(
        &format!("{stem}.json"),
        serde_json::to_value(rep).map_err(|e| Error::format(e.to_string()))?,
    )
}

fn explain(ctx: &mut Ctx) -> Result<()> {
    ctx.require_mode("train")?;
    let ck = load_model(ctx)?;
    let (test, classes, _) = ctx.dataset(Split::Test)?;
    if test.is_empty() {
        return Err(Error::EmptyCorpus("test split is empty".into()));
    }
    let es = ctx.cfg.explain.clone();
    let pcfg = PermutationConfig {
        repeats: es.repeats,
        seed: ctx.cfg.seed,
        max_tokens: es.max_tokens,
    };
    let idx = es.sample.min(test.len() - 1);
    let probs = crate::model::Classifier::predict_proba(&ck.model, &test, idx);
    let class = crate::model::metrics::argmax(&probs);
    match ctx.cfg.mode {
        Mode::Knowledge => {
            let layout = ctx.bundle()?.layout;
            let pc = pearson_blocks(&test, &classes, &layout, es.summary, None)?;
            for (row, group) in pc.flagged() {
                log::warn!(
                    "correlation of {row} with the {} block is undefined (one side is constant)",
                    group.as_str()
                );
            }
            ctx.csv("pearson.csv", |buf| pc.write_csv(buf))?;
            ctx.json(
                "pearson.json",
                serde_json::to_value(&pc).map_err(|e| Error::format(e.to_string()))?,
            )?;
            let imp = permutation_importance_blocks(&ck.model, &test, &layout, &pcfg)?;
            attribution(ctx, "importance", &imp)?;
            let sh = shapley_blocks(&ck.model, &test, idx, class, &layout)?;
            attribution(ctx, "shapley", &sh)?;
        }
        Mode::Nlp => {
            let vocab = NlpPipeline::load(&ctx.out.join("nlp"))?.vocab;
            let imp = permutation_importance_tokens(&ck.model, &test, &vocab, &pcfg)?;
            attribution(ctx, "importance", &imp)?;
            let (occ, table) =
                occlusion_tokens(&ck.model, &test, &vocab, &classes, es.max_tokens, es.top_k)?;
            attribution(ctx, "occlusion", &occ)?;
            ctx.csv("top_tokens.csv", |buf| table.write_csv(buf))?;
            // The sample's own tokens, most influential first by occlusion.
            let Inputs::Tokens { seq_len, ids } = &test.inputs else {
                unreachable!("nlp mode")
            };
            let own = &ids[idx * seq_len..idx * seq_len + test.true_len[idx]];
            let mut chosen: Vec<u32> = Vec::new();
            for a in occ.ranked() {
                let id = vocab.id(&a.feature);
                if own.contains(&id) && !chosen.contains(&id) && chosen.len() < es.shapley_features
                {
                    chosen.push(id);
                }
            }
            let sh = shapley_tokens(&ck.model, &test, idx, class, &chosen, &vocab)?;
            attribution(ctx, "shapley", &sh)?;
        }
    }
    log::info!(
        "explained sample `{}` (class {})",
        test.sample_ids[idx],
        classes.name(class)
    );
    Ok(())
}

fn synth(ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.cfg.synth.spec(ctx.cfg.seed)?;
    let corpus = generate_corpus(&spec)?;
    let dir = ctx
        .cfg
        .paths
        .corpus
        .clone()
        .unwrap_or_else(|| ctx.out.join("corpus"));
    fs::create_dir_all(&dir)?;
    for r in &corpus.reports {
        fs::write(
            dir.join(format!("{}.json", r.sample_id)),
            r.to_sandbox_json(),
        )?;
    }
    let mut manifest = format!("# {TOOL} {VERSION} config {}\n", ctx.hash).into_bytes();
    write_manifest(&mut manifest, &corpus.manifest)?;
    fs::write(dir.join("manifest.csv"), manifest)?;
    let spec_json = serde_json::to_value(&spec).map_err(|e| Error::format(e.to_string()))?;
    ctx.json(
        "synth.json",
        json!({ "corpus": dir, "samples": corpus.reports.len(), "spec": spec_json }),
    )?;
    log::info!(
        "wrote {} reports to {}",
        corpus.reports.len(),
        dir.display()
    );
    Ok(())
}

fn ablate(ctx: &mut Ctx) -> Result<()> {
    if ctx.cfg.mode != Mode::Knowledge {
        return Err(Error::config(
            "ablation masks feature groups of the knowledge encoders; use --mode knowledge",
        ));
    }
    ctx.require_mode("fit")?;
    let assignments = ctx.assignments()?;
    let parts = partition(&ctx.reports()?, &assignments)?;
    let classes = class_map(&assignments);
    let bundle = ctx.bundle()?;
    let mut rows = Vec::new();
    for (name, mask) in FeatureMask::ABLATION {
        let data = encode_knowledge(&bundle, &parts, mask, ctx.cfg.model.seq_len, &classes)?;
        let cfg = ctx.cfg.model.cnn_config(
            InputMode::Knowledge { dim: bundle.dim() },
            classes.len(),
            ctx.cfg.seed,
        );
        let (outcome, m) = fit_and_score(cfg, &data, &ctx.cfg.train)?;
        log::info!("{name}: macro F1 {:.4}, AUC {:.4}", m.macro_f1, m.roc.auc);
        ctx.csv(&format!("ablation/roc_{name}.csv"), roc_csv(&m))?;
        rows.push((name, m, outcome.best_epoch));
    }
    ctx.csv("ablation/comparison.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "mask",
            "accuracy",
            "macro_precision",
            "macro_recall",
            "macro_f1",
            "auc",
            "best_epoch",
        ])?;
        for (name, m, best) in &rows {
            w.write_record([
                name.to_string(),
                format!("{:.6}", m.accuracy),
                format!("{:.6}", m.macro_precision),
                format!("{:.6}", m.macro_recall),
                format!("{:.6}", m.macro_f1),
                format!("{:.6}", m.roc.auc),
                best.map_or(String::new(), |b| b.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let table: Vec<Value> = rows
        .iter()
        .map(|(name, m, best)| json!({ "mask": name, "metrics": metrics_json(m, &classes), "best_epoch": best }))
        .collect();
    ctx.json("ablation/comparison.json", json!({ "masks": table }))
}
