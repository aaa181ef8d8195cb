//! Multi-width 1-D convolutional classifier with a fully connected head.
//!
//! Each width runs a valid convolution starting at every position before the
//! sample's true length (inputs past it read as zeros), followed by ReLU and
//! a global max over time. Pooled features from all widths are concatenated,
//! dropped out, and passed through ReLU hidden layers to the class logits.
//! Gradients are computed by hand; the max-pool routes them to the argmax.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, SampleInput};
use super::{axpy, dot, log_softmax, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputMode {
    /// Precomputed per-call feature vectors.
    Knowledge { dim: usize },
    /// Token ids looked up in a learned embedding table.
    Nlp { vocab_size: usize, embed_dim: usize },
}

impl InputMode {
    pub fn row_dim(&self) -> usize {
        match self {
            InputMode::Knowledge { dim } => *dim,
            InputMode::Nlp { embed_dim, .. } => *embed_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input: InputMode,
    pub seq_len: usize,
    pub widths: Vec<usize>,
    pub channels: usize,
    pub conv_dropout: f64,
    pub hidden: Vec<usize>,
    pub head_dropout: f64,
    pub classes: usize,
    pub seed: u64,
}

impl CnnConfig {
    pub fn knowledge(dim: usize, seq_len: usize, classes: usize) -> Self {
        CnnConfig {
            input: InputMode::Knowledge { dim },
            seq_len,
            widths: vec![2, 3, 4, 5],
            channels: 128,
            conv_dropout: 0.3,
            hidden: vec![128, 64],
            head_dropout: 0.2,
            classes,
            seed: 0,
        }
    }

    pub fn nlp(vocab_size: usize, seq_len: usize, classes: usize) -> Self {
        CnnConfig {
            input: InputMode::Nlp {
                vocab_size,
                embed_dim: 96,
            },
            ..CnnConfig::knowledge(0, seq_len, classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("cnn: {m}")));
        match self.input {
            InputMode::Knowledge { dim } if dim == 0 => return bad("input dim must be positive"),
            InputMode::Nlp {
                vocab_size,
                embed_dim,
            } if vocab_size == 0 || embed_dim == 0 => {
                return bad("vocab size and embedding dim must be positive")
            }
            _ => {}
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("kernel widths must be a nonempty list of positive sizes");
        }
        if self.channels == 0 || self.hidden.contains(&0) {
            return bad("channel and hidden sizes must be positive");
        }
        if self.classes == 0 || self.seq_len == 0 {
            return bad("classes and seq_len must be positive");
        }
        for p in [self.conv_dropout, self.head_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad("dropout must lie in [0, 1)");
            }
        }
        Ok(())
    }

    fn features(&self) -> usize {
        self.widths.len() * self.channels
    }
}

/// One named parameter array inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub offset: usize,
    #[serde(skip)]
    fan_in: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn {
    config: CnnConfig,
    specs: Vec<ParamSpec>,
    params: Vec<f64>,
}

fn layout(cfg: &CnnConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, shape: Vec<usize>, fan_in: usize| {
        let len: usize = shape.iter().product();
        specs.push(ParamSpec {
            name,
            shape,
            offset,
            fan_in,
        });
        offset += len;
    };
    if let InputMode::Nlp {
        vocab_size,
        embed_dim,
    } = cfg.input
    {
        // One-hot input: fan-in of one.
        push("embedding".into(), vec![vocab_size, embed_dim], 1);
    }
    let d = cfg.input.row_dim();
    for &w in &cfg.widths {
        push(format!("conv{w}.weight"), vec![cfg.channels, w, d], w * d);
        push(format!("conv{w}.bias"), vec![cfg.channels], w * d);
    }
    let mut n_in = cfg.features();
    for (i, &h) in cfg.hidden.iter().enumerate() {
        push(format!("fc{}.weight", i + 1), vec![h, n_in], n_in);
        push(format!("fc{}.bias", i + 1), vec![h], n_in);
        n_in = h;
    }
    push("out.weight".into(), vec![cfg.classes, n_in], n_in);
    push("out.bias".into(), vec![cfg.classes], n_in);
    specs
}

/// Everything the backward pass needs from one forward pass.
struct Trace {
    len: usize,
    x: Vec<f64>,
    argmax: Vec<Option<usize>>,
    pooled: Vec<f64>,
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
    logits: Vec<f64>,
}

fn dropout_mask(n: usize, p: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng.as_deref_mut()?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..n)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

impl Cnn {
    /// Seeded uniform initialization in ±1/√fan_in.
    pub fn new(config: CnnConfig) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        let total: usize = specs.iter().map(ParamSpec::len).sum();
        let mut params = Vec::with_capacity(total);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for s in &specs {
            let bound = 1.0 / (s.fan_in as f64).sqrt();
            params.extend((0..s.len()).map(|_| rng.gen_range(-bound..bound)));
        }
        Ok(Cnn {
            config,
            specs,
            params,
        })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, name: &str) -> Option<&[f64]> {
        let s = self.specs.iter().find(|s| s.name == name)?;
        Some(&self.params[s.offset..s.offset + s.len()])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let s = self.specs.iter().find(|s| s.name == name)?;
        Some(&mut self.params[s.offset..s.offset + s.len()])
    }

    fn offset(&self, name: &str) -> usize {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .expect("layout entry")
            .offset
    }

    fn dense_layers(&self) -> Vec<Dense> {
        let mut out = Vec::new();
        let mut n_in = self.config.features();
        for (i, &h) in self.config.hidden.iter().enumerate() {
            out.push(Dense {
                w: self.offset(&format!("fc{}.weight", i + 1)),
                b: self.offset(&format!("fc{}.bias", i + 1)),
                n_in,
                n_out: h,
            });
            n_in = h;
        }
        out.push(Dense {
            w: self.offset("out.weight"),
            b: self.offset("out.bias"),
            n_in,
            n_out: self.config.classes,
        });
        out
    }

    /// Rejects datasets that do not match the input mode.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        data.validate()?;
        match (&self.config.input, &data.inputs) {
            (InputMode::Knowledge { dim }, super::Inputs::Dense { dim: d, .. }) if dim == d => {}
            (InputMode::Nlp { vocab_size, .. }, super::Inputs::Tokens { ids, .. }) => {
                if let Some(bad) = ids.iter().find(|&&id| id as usize >= *vocab_size) {
                    return Err(Error::Shape(format!(
                        "token id {bad} outside vocabulary of {vocab_size}"
                    )));
                }
            }
            (mode, _) => {
                return Err(Error::Shape(format!(
                    "dataset does not match model input {mode:?}"
                )));
            }
        }
        if let Some(&l) = data.labels.iter().find(|&&l| l >= self.config.classes) {
            return Err(Error::Shape(format!(
                "label {l} outside {} classes",
                self.config.classes
            )));
        }
        Ok(())
    }

    fn embed_rows(&self, input: SampleInput<'_>, len: usize) -> Vec<f64> {
        let d = self.config.input.row_dim();
        let max_w = *self.config.widths.iter().max().unwrap();
        let mut x = vec![0.0; (len + max_w - 1) * d];
        match input {
            SampleInput::Dense { rows, .. } => x[..len * d].copy_from_slice(&rows[..len * d]),
            SampleInput::Tokens { ids } => {
                let e = self.offset("embedding");
                for (t, &id) in ids[..len].iter().enumerate() {
                    let src = e + id as usize * d;
                    x[t * d..(t + 1) * d].copy_from_slice(&self.params[src..src + d]);
                }
            }
        }
        x
    }

    fn forward_trace(
        &self,
        input: SampleInput<'_>,
        len: usize,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Trace {
        let cfg = &self.config;
        let d = cfg.input.row_dim();
        let p = &self.params;
        let x = self.embed_rows(input, len);

        let mut pooled = Vec::with_capacity(cfg.features());
        let mut argmax = Vec::with_capacity(cfg.features());
        for &w in &cfg.widths {
            let wo = self.offset(&format!("conv{w}.weight"));
            let bo = self.offset(&format!("conv{w}.bias"));
            let span = w * d;
            for c in 0..cfg.channels {
                let wc = &p[wo + c * span..wo + (c + 1) * span];
                let mut best = f64::NEG_INFINITY;
                let mut arg = None;
                for t in 0..len {
                    let v = dot(wc, &x[t * d..t * d + span]);
                    if v > best {
                        best = v;
                        arg = Some(t);
                    }
                }
                argmax.push(arg);
                pooled.push(if arg.is_some() {
                    (best + p[bo + c]).max(0.0)
                } else {
                    0.0
                });
            }
        }

        let mut masks = Vec::new();
        let fmask = dropout_mask(pooled.len(), cfg.conv_dropout, &mut rng);
        let mut a: Vec<f64> = match &fmask {
            Some(m) => pooled.iter().zip(m).map(|(v, k)| v * k).collect(),
            None => pooled.clone(),
        };
        masks.push(fmask);
        let layers = self.dense_layers();
        let mut acts = Vec::with_capacity(layers.len());
        let mut pre_all = Vec::with_capacity(layers.len());
        let mut logits = Vec::new();
        for (j, l) in layers.iter().enumerate() {
            let pre: Vec<f64> = (0..l.n_out)
                .map(|o| p[l.b + o] + dot(&p[l.w + o * l.n_in..l.w + (o + 1) * l.n_in], &a))
                .collect();
            acts.push(std::mem::take(&mut a));
            if j + 1 == layers.len() {
                logits = pre;
                break;
            }
            let m = dropout_mask(l.n_out, cfg.head_dropout, &mut rng);
            a = pre.iter().map(|v| v.max(0.0)).collect();
            if let Some(m) = &m {
                a.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            masks.push(m);
            pre_all.push(pre);
        }
        Trace {
            len,
            x,
            argmax,
            pooled,
            acts,
            pre: pre_all,
            masks,
            logits,
        }
    }

    fn backward(&self, input: SampleInput<'_>, tr: &Trace, dlogits: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let d = cfg.input.row_dim();
        let p = &self.params;
        let layers = self.dense_layers();

        let mut g = dlogits.to_vec();
        for j in (0..layers.len()).rev() {
            let l = layers[j];
            let input_act = &tr.acts[j];
            let mut gin = vec![0.0; l.n_in];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                axpy(
                    &mut grad[l.w + o * l.n_in..l.w + (o + 1) * l.n_in],
                    go,
                    input_act,
                );
                grad[l.b + o] += go;
                axpy(&mut gin, go, &p[l.w + o * l.n_in..l.w + (o + 1) * l.n_in]);
            }
            if let Some(m) = &tr.masks[j] {
                gin.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            let gate: &[f64] = if j == 0 { &tr.pooled } else { &tr.pre[j - 1] };
            for (v, &z) in gin.iter_mut().zip(gate) {
                if z <= 0.0 {
                    *v = 0.0;
                }
            }
            g = gin;
        }

        let tokens = matches!(input, SampleInput::Tokens { .. });
        let mut dx = if tokens {
            vec![0.0; tr.x.len()]
        } else {
            Vec::new()
        };
        let mut k = 0;
        for &w in &cfg.widths {
            let wo = self.offset(&format!("conv{w}.weight"));
            let bo = self.offset(&format!("conv{w}.bias"));
            let span = w * d;
            for c in 0..cfg.channels {
                let (gf, arg) = (g[k], tr.argmax[k]);
                k += 1;
                let Some(t) = arg else { continue };
                if gf == 0.0 {
                    continue;
                }
                axpy(
                    &mut grad[wo + c * span..wo + (c + 1) * span],
                    gf,
                    &tr.x[t * d..t * d + span],
                );
                grad[bo + c] += gf;
                if tokens {
                    axpy(
                        &mut dx[t * d..t * d + span],
                        gf,
                        &p[wo + c * span..wo + (c + 1) * span],
                    );
                }
            }
        }
        if let SampleInput::Tokens { ids } = input {
            let e = self.offset("embedding");
            for (t, &id) in ids[..tr.len].iter().enumerate() {
                let dst = e + id as usize * d;
                axpy(&mut grad[dst..dst + d], 1.0, &dx[t * d..(t + 1) * d]);
            }
        }
    }

    /// Logits for one sample with dropout disabled.
    pub fn logits(&self, data: &Dataset, index: usize) -> Vec<f64> {
        self.forward_trace(data.sample(index), data.true_len[index], None)
            .logits
    }

    /// Mean cross-entropy over `batch` and its gradient for every parameter.
    ///
    /// Dropout is applied only when `rng` is given.
    pub fn loss_and_grad(
        &self,
        data: &Dataset,
        batch: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return (0.0, grad);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let input = data.sample(i);
            let tr = self.forward_trace(input, data.true_len[i], rng.as_deref_mut());
            let logp = log_softmax(&tr.logits);
            let y = data.labels[i];
            loss -= logp[y];
            let dlogits: Vec<f64> = logp
                .iter()
                .enumerate()
                .map(|(c, lp)| (lp.exp() - if c == y { 1.0 } else { 0.0 }) * scale)
                .collect();
            self.backward(input, &tr, &dlogits, &mut grad);
        }
        (loss * scale, grad)
    }

    /// Mean cross-entropy over `batch` without dropout.
    pub fn loss(&self, data: &Dataset, batch: &[usize]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let total: f64 = batch
            .iter()
            .map(|&i| -log_softmax(&self.logits(data, i))[data.labels[i]])
            .sum();
        total / batch.len() as f64
    }
}

impl Classifier for Cnn {
    fn num_classes(&self) -> usize {
        self.config.classes
    }

    fn predict_proba(&self, data: &Dataset, index: usize) -> Vec<f64> {
        log_softmax(&self.logits(data, index))
            .into_iter()
            .map(f64::exp)
            .collect()
    }
}

const MAGIC: &[u8; 8] = b"APFTCNN\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: CnnConfig,
    class_names: Vec<String>,
    meta: std::collections::BTreeMap<String, String>,
    params: Vec<ParamSpec>,
}

/// A trained model together with its class names and free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Cnn,
    pub class_names: Vec<String>,
    pub meta: std::collections::BTreeMap<String, String>,
}

impl Checkpoint {
    /// Magic, version, JSON header length and header, then every parameter
    /// array as little-endian f64 in header order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            config: self.model.config.clone(),
            class_names: self.class_names.clone(),
            meta: self.meta.clone(),
            params: self.model.specs.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.model.params.len() * 8);
        for v in &self.model.params {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("not a model checkpoint"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; n];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)
            .map_err(|e| Error::format(format!("checkpoint header: {e}")))?;
        let mut model = Cnn::new(header.config)?;
        let names: Vec<(&str, &[usize])> = model
            .specs
            .iter()
            .map(|s| (s.name.as_str(), s.shape.as_slice()))
            .collect();
        let stored: Vec<(&str, &[usize])> = header
            .params
            .iter()
            .map(|s| (s.name.as_str(), s.shape.as_slice()))
            .collect();
        if names != stored {
            return Err(Error::format(
                "checkpoint parameter layout does not match its config",
            ));
        }
        let mut bytes = vec![0u8; model.params.len() * 8];
        r.read_exact(&mut bytes)?;
        for (p, chunk) in model.params.iter_mut().zip(bytes.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(Checkpoint {
            model,
            class_names: header.class_names,
            meta: header.meta,
        })
    }
}
