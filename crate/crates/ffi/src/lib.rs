//! C ABI over the apifeat pipeline: value classification, string similarity,
//! report parsing, knowledge encoding, tokenization and model inference.
//!
//! Every fallible function returns an [`ApfStatus`]. On failure the message is
//! kept per thread and can be copied out with [`apf_last_error`]. Handles are
//! opaque pointers owned by the caller and released with the matching
//! `*_free` function; passing NULL to a free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use apifeat::encoders::{cosine_sim, EncoderBundle, FeatureMask};
use apifeat::ingest::{classify_arg_value, parse_report, ArgValue, Label, Month, Report};
use apifeat::model::{Checkpoint, Classifier, Dataset, InputMode, Inputs};
use apifeat::nlp::{NlpPipeline, PAD_ID};
use apifeat::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Schema = 4,
    Config = 5,
    Shape = 6,
    Format = 7,
    Io = 8,
    /// The output buffer is too small; the required size was still written.
    BufferTooSmall = 9,
    OutOfRange = 10,
    Panic = 11,
    Other = 12,
}

/// Type of a raw argument value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApfValueKind {
    String = 0,
    Integer = 1,
    Address = 2,
}

/// A parsed report.
pub struct ApfReport(Report);

/// Fitted knowledge encoders.
pub struct ApfBundle(EncoderBundle);

/// Fitted tokenizer and vocabulary.
pub struct ApfTokenizer(NlpPipeline);

/// A trained classifier.
pub struct ApfModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> ApfStatus {
    match e {
        Error::Parse { .. } => ApfStatus::Parse,
        Error::Schema { .. } => ApfStatus::Schema,
        Error::Config(_) => ApfStatus::Config,
        Error::Shape(_) => ApfStatus::Shape,
        Error::Format(_) => ApfStatus::Format,
        Error::Io(_) => ApfStatus::Io,
        Error::InSample { source, .. } => status_of(source),
        _ => ApfStatus::Other,
    }
}

struct Fail(ApfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: ApfStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

/// Runs `f`, records any error and converts panics into `Panic`.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> ApfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ApfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ApfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(ApfStatus::NullArgument, format!("`{name}` is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| {
        fail(
            ApfStatus::InvalidUtf8,
            format!("`{name}` is not valid UTF-8"),
        )
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(ApfStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(ApfStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(ApfStatus::NullArgument, format!("`{name}` is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(ApfStatus::NullArgument, format!("`{name}` is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Writes `s` NUL-terminated into `buf`; `needed` receives the size including the NUL.
unsafe fn copy_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    if let Some(n) = needed.as_mut() {
        *n = s.len() + 1;
    }
    if cap < s.len() + 1 {
        return fail(
            ApfStatus::BufferTooSmall,
            format!("buffer of {cap} bytes, {} needed", s.len() + 1),
        );
    }
    let out = slice_out(buf as *mut u8, cap, "buf")?;
    out[..s.len()].copy_from_slice(s.as_bytes());
    out[s.len()] = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn apf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf`.
///
/// Returns the message length including the terminating NUL. If that exceeds
/// `cap`, the message is truncated to fit. Returns 0 when there is no message.
///
/// # Safety
/// `buf` must be NULL or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn apf_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if e.is_empty() {
            return 0;
        }
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            let out = std::slice::from_raw_parts_mut(buf as *mut u8, cap);
            out[..n].copy_from_slice(&e.as_bytes()[..n]);
            out[n] = 0;
        }
        e.len() + 1
    })
}

/// Classifies one raw argument literal as string, integer or address.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `kind` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apf_classify_value(
    raw: *const c_char,
    kind: *mut ApfValueKind,
) -> ApfStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        *out_arg(kind, "kind")? = match classify_arg_value(raw) {
            ArgValue::Str(_) => ApfValueKind::String,
            ArgValue::Int(_) => ApfValueKind::Integer,
            ArgValue::VAddr(_) => ApfValueKind::Address,
        };
        Ok(())
    })
}

/// Character 3-gram cosine similarity of two strings, in [0, 1].
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apf_cosine_similarity(
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> ApfStatus {
    guard(|| {
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        *out_arg(out, "out")? = cosine_sim(a, b);
        Ok(())
    })
}

/// Parses a report JSON document of `len` bytes.
///
/// # Safety
/// `json` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apf_report_parse(
    json: *const u8,
    len: usize,
    out: *mut *mut ApfReport,
) -> ApfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let raw = slice_arg(json, len, "json")?;
        let report = parse_report(raw, "ffi", Label::new("unknown"), Month::new(1970, 1)?)?;
        *out = Box::into_raw(Box::new(ApfReport(report)));
        Ok(())
    })
}

/// Number of API calls in a report.
///
/// # Safety
/// `report` must be a live handle from `apf_report_parse`.
#[no_mangle]
pub unsafe extern "C" fn apf_report_call_count(
    report: *const ApfReport,
    out: *mut usize,
) -> ApfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(report, "report")?.0.calls.len();
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn apf_report_free(report: *mut ApfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

fn load_bundle(path: &Path) -> Result<EncoderBundle, Fail> {
    let bytes = std::fs::read(path).map_err(Error::from)?;
    let doc: serde_json::Value = serde_json::from_slice(&bytes)
        .or_else(|e| fail(ApfStatus::Format, format!("{}: {e}", path.display())))?;
    // Accepts the artifact written by the `fit` command as well as a bare bundle.
    let bundle = match doc.get("bundle") {
        Some(b) => EncoderBundle::load(b.to_string().as_bytes())?,
        None => EncoderBundle::load(bytes.as_slice())?,
    };
    Ok(bundle)
}

/// Loads fitted knowledge encoders from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apf_bundle_load(
    path: *const c_char,
    out: *mut *mut ApfBundle,
) -> ApfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let bundle = load_bundle(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(ApfBundle(bundle)));
        Ok(())
    })
}

/// Width of one encoded call.
///
/// # Safety
/// `bundle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn apf_bundle_dim(bundle: *const ApfBundle, out: *mut usize) -> ApfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(bundle, "bundle")?.0.dim();
        Ok(())
    })
}

/// Encodes the first `max_calls` calls of a report, one row of `dim` values per call.
///
/// `mask` selects feature groups (`all`, `api-only`, `params-only` or a
/// `+`-joined list such as `api+string`); NULL means `all`. `rows` receives the
/// number of rows; `out` must hold `rows * dim` values or `BufferTooSmall` is
/// returned with `rows` still set.
///
/// # Safety
/// Handles must be live; `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn apf_bundle_encode(
    bundle: *const ApfBundle,
    report: *const ApfReport,
    mask: *const c_char,
    max_calls: usize,
    out: *mut f64,
    cap: usize,
    rows: *mut usize,
) -> ApfStatus {
    guard(|| {
        let bundle = &ref_arg(bundle, "bundle")?.0;
        let report = &ref_arg(report, "report")?.0;
        let mask: FeatureMask = if mask.is_null() {
            FeatureMask::ALL
        } else {
            str_arg(mask, "mask")?.parse()?
        };
        let values = bundle.encode_report(report, mask, max_calls);
        *out_arg(rows, "rows")? = values.len() / bundle.dim();
        if values.len() > cap {
            return fail(
                ApfStatus::BufferTooSmall,
                format!("buffer of {cap} values, {} needed", values.len()),
            );
        }
        slice_out(out, cap, "out")?[..values.len()].copy_from_slice(&values);
        Ok(())
    })
}

/// # Safety
/// `bundle` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn apf_bundle_free(bundle: *mut ApfBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Loads a fitted tokenizer and vocabulary from the directory written by `fit`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apf_tokenizer_load(
    dir: *const c_char,
    out: *mut *mut ApfTokenizer,
) -> ApfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let p = NlpPipeline::load(Path::new(str_arg(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(ApfTokenizer(p)));
        Ok(())
    })
}

/// Fixed sequence length of encoded reports.
///
/// # Safety
/// `tokenizer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn apf_tokenizer_seq_len(
    tokenizer: *const ApfTokenizer,
    out: *mut usize,
) -> ApfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(tokenizer, "tokenizer")?.0.config.seq_len;
        Ok(())
    })
}

/// Vocabulary size including the padding and unknown tokens.
///
/// # Safety
/// `tokenizer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn apf_tokenizer_vocab_size(
    tokenizer: *const ApfTokenizer,
    out: *mut usize,
) -> ApfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(tokenizer, "tokenizer")?.0.vocab.len();
        Ok(())
    })
}

/// Writes `seq_len` token ids (padded with 0) into `ids` and the unpadded
/// length into `true_len`.
///
/// # Safety
/// Handles must be live; `ids` must point to `cap` writable values.
#[no_mangle]
pub unsafe extern "C" fn apf_tokenizer_encode(
    tokenizer: *const ApfTokenizer,
    report: *const ApfReport,
    ids: *mut u32,
    cap: usize,
    true_len: *mut usize,
) -> ApfStatus {
    guard(|| {
        let p = &ref_arg(tokenizer, "tokenizer")?.0;
        let seq = p.encode(&ref_arg(report, "report")?.0);
        *out_arg(true_len, "true_len")? = seq.true_length;
        if seq.ids.len() > cap {
            return fail(
                ApfStatus::BufferTooSmall,
                format!("buffer of {cap} ids, {} needed", seq.ids.len()),
            );
        }
        slice_out(ids, cap, "ids")?[..seq.ids.len()].copy_from_slice(&seq.ids);
        Ok(())
    })
}

/// # Safety
/// `tokenizer` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn apf_tokenizer_free(tokenizer: *mut ApfTokenizer) {
    if !tokenizer.is_null() {
        drop(Box::from_raw(tokenizer));
    }
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apf_model_load(path: *const c_char, out: *mut *mut ApfModel) -> ApfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let f = std::fs::File::open(str_arg(path, "path")?).map_err(Error::from)?;
        let ck = Checkpoint::read(std::io::BufReader::new(f))?;
        *out = Box::into_raw(Box::new(ApfModel(ck)));
        Ok(())
    })
}

/// Number of output classes.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn apf_model_num_classes(
    model: *const ApfModel,
    out: *mut usize,
) -> ApfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(model, "model")?.0.class_names.len();
        Ok(())
    })
}

/// Sequence length the model was built for.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn apf_model_seq_len(model: *const ApfModel, out: *mut usize) -> ApfStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(model, "model")?.0.model.config().seq_len;
        Ok(())
    })
}

/// Copies the name of class `index` into `buf`; `needed` receives its size including the NUL.
///
/// # Safety
/// `model` must be a live handle; `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn apf_model_class_name(
    model: *const ApfModel,
    index: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> ApfStatus {
    guard(|| {
        let names = &ref_arg(model, "model")?.0.class_names;
        let Some(name) = names.get(index) else {
            return fail(
                ApfStatus::OutOfRange,
                format!("class {index} of {}", names.len()),
            );
        };
        copy_str(name, buf, cap, needed)
    })
}

fn predict(
    ck: &Checkpoint,
    inputs: Inputs,
    true_len: usize,
    probs: &mut [f64],
) -> Result<(), Fail> {
    let classes = ck.class_names.len();
    if probs.len() < classes {
        return fail(
            ApfStatus::BufferTooSmall,
            format!("buffer of {} values, {classes} needed", probs.len()),
        );
    }
    let data = Dataset {
        inputs,
        true_len: vec![true_len],
        labels: vec![0],
        sample_ids: vec!["ffi".into()],
    };
    ck.model.check(&data)?;
    probs[..classes].copy_from_slice(&ck.model.predict_proba(&data, 0));
    Ok(())
}

/// Class probabilities for `n_rows` encoded calls of width `dim` (row-major).
/// Rows past the model's sequence length are ignored.
///
/// # Safety
/// `model` must be a live handle; `rows` must point to `n_rows * dim` doubles
/// and `probs` to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn apf_model_predict_dense(
    model: *const ApfModel,
    rows: *const f64,
    n_rows: usize,
    dim: usize,
    probs: *mut f64,
    cap: usize,
) -> ApfStatus {
    guard(|| {
        let ck = &ref_arg(model, "model")?.0;
        let InputMode::Knowledge { dim: want } = ck.model.config().input else {
            return fail(
                ApfStatus::Shape,
                "model takes token ids; use apf_model_predict_tokens",
            );
        };
        if dim != want {
            return fail(
                ApfStatus::Shape,
                format!("rows of width {dim}, model expects {want}"),
            );
        }
        let seq_len = ck.model.config().seq_len;
        let len = n_rows.min(seq_len);
        let mut values = vec![0.0; seq_len * dim];
        values[..len * dim].copy_from_slice(&slice_arg(rows, n_rows * dim, "rows")?[..len * dim]);
        predict(
            ck,
            Inputs::Dense {
                seq_len,
                dim,
                values,
            },
            len,
            slice_out(probs, cap, "probs")?,
        )
    })
}

/// Class probabilities for `n` token ids. Longer input is truncated and
/// shorter input padded to the model's sequence length.
///
/// # Safety
/// `model` must be a live handle; `ids` must point to `n` values and `probs`
/// to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn apf_model_predict_tokens(
    model: *const ApfModel,
    ids: *const u32,
    n: usize,
    probs: *mut f64,
    cap: usize,
) -> ApfStatus {
    guard(|| {
        let ck = &ref_arg(model, "model")?.0;
        if !matches!(ck.model.config().input, InputMode::Nlp { .. }) {
            return fail(
                ApfStatus::Shape,
                "model takes encoded calls; use apf_model_predict_dense",
            );
        }
        let seq_len = ck.model.config().seq_len;
        let src = slice_arg(ids, n, "ids")?;
        let len = src
            .iter()
            .take(seq_len)
            .take_while(|&&id| id != PAD_ID)
            .count();
        let mut padded = vec![PAD_ID; seq_len];
        padded[..n.min(seq_len)].copy_from_slice(&src[..n.min(seq_len)]);
        predict(
            ck,
            Inputs::Tokens {
                seq_len,
                ids: padded,
            },
            len,
            slice_out(probs, cap, "probs")?,
        )
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn apf_model_free(model: *mut ApfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
