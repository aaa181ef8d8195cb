use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use apifeat::encoders::{EncoderBundle, EncoderConfig, FeatureMask};
use apifeat::ingest::Report;
use apifeat::model::{
    knowledge_dataset, nlp_dataset, Checkpoint, ClassMap, Classifier, Cnn, CnnConfig,
};
use apifeat::nlp::{NlpConfig, NlpPipeline};
use apifeat::synth::{generate_corpus, planted_pairs};
use apifeat_ffi::*;

fn corpus() -> Vec<Report> {
    generate_corpus(&planted_pairs(4, 2, 0.8, 3).unwrap())
        .unwrap()
        .reports
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { apf_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_str()
        .unwrap()
        .to_string()
}

fn parse(r: &Report) -> *mut ApfReport {
    let json = r.to_sandbox_json();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { apf_report_parse(json.as_ptr(), json.len(), &mut h) },
        ApfStatus::Ok
    );
    h
}

fn small_config(mut c: CnnConfig) -> CnnConfig {
    c.channels = 4;
    c.hidden = vec![8];
    c
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(apf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn classify_and_similarity() {
    let mut kind = ApfValueKind::String;
    for (raw, want) in [
        ("0x7ffe0000", ApfValueKind::Address),
        ("-42", ApfValueKind::Integer),
        ("C:\\Windows", ApfValueKind::String),
        ("0x", ApfValueKind::String),
    ] {
        assert_eq!(
            unsafe { apf_classify_value(cstr(raw).as_ptr(), &mut kind) },
            ApfStatus::Ok
        );
        assert_eq!(kind, want, "{raw}");
    }
    let mut sim = -1.0;
    let (a, b) = (cstr("kernel32.dll"), cstr("kernel32.dll"));
    assert_eq!(
        unsafe { apf_cosine_similarity(a.as_ptr(), b.as_ptr(), &mut sim) },
        ApfStatus::Ok
    );
    assert!((sim - 1.0).abs() < 1e-12);
    let c = cstr("zz");
    unsafe { apf_cosine_similarity(a.as_ptr(), c.as_ptr(), &mut sim) };
    assert_eq!(sim, 0.0);
}

#[test]
fn null_and_bad_input_set_status_and_message() {
    let mut kind = ApfValueKind::String;
    assert_eq!(
        unsafe { apf_classify_value(ptr::null(), &mut kind) },
        ApfStatus::NullArgument
    );
    assert!(last_error().contains("raw"));

    let bad = b"[{\"api\": 1}";
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { apf_report_parse(bad.as_ptr(), bad.len(), &mut h) },
        ApfStatus::Parse
    );
    assert!(h.is_null());
    let wrong = b"[{\"name\": \"x\"}]";
    assert_eq!(
        unsafe { apf_report_parse(wrong.as_ptr(), wrong.len(), &mut h) },
        ApfStatus::Schema
    );

    let mut b = ptr::null_mut();
    let missing = cstr("/nonexistent/encoders.json");
    assert_eq!(
        unsafe { apf_bundle_load(missing.as_ptr(), &mut b) },
        ApfStatus::Io
    );
    unsafe {
        apf_report_free(ptr::null_mut());
        apf_bundle_free(ptr::null_mut());
        apf_tokenizer_free(ptr::null_mut());
        apf_model_free(ptr::null_mut());
    }
}

#[test]
fn error_message_truncates_to_buffer() {
    let mut kind = ApfValueKind::String;
    unsafe { apf_classify_value(ptr::null(), &mut kind) };
    let mut buf = [1 as c_char; 4];
    let n = unsafe { apf_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 4);
    assert_eq!(buf[3], 0);
}

#[test]
fn knowledge_encoding_and_prediction_match_the_library() {
    let reports = corpus();
    let mut cfg = EncoderConfig::default();
    cfg.skipgram.epochs = 1;
    let bundle = EncoderBundle::fit(&reports, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    // Wrapped the way the `fit` command writes it.
    let wrapped = serde_json::json!({ "tool": "apifeat", "bundle": bundle });
    std::fs::write(dir.path().join("encoders.json"), wrapped.to_string()).unwrap();
    std::fs::write(dir.path().join("bare.json"), bundle.to_json().unwrap()).unwrap();

    let classes = ClassMap::from_labels(reports.iter().map(|r| r.label.as_str()));
    let seq_len = 16;
    let model = Cnn::new(small_config(CnnConfig::knowledge(
        bundle.dim(),
        seq_len,
        classes.len(),
    )))
    .unwrap();
    let ck = Checkpoint {
        model,
        class_names: classes.names.clone(),
        meta: Default::default(),
    };
    let ck_path = dir.path().join("model.ckpt");
    ck.write(std::fs::File::create(&ck_path).unwrap()).unwrap();
    let data =
        knowledge_dataset(&bundle, &reports[..1], FeatureMask::ALL, seq_len, &classes).unwrap();
    let want = ck.model.predict_proba(&data, 0);

    for file in ["encoders.json", "bare.json"] {
        let mut b = ptr::null_mut();
        let p = cstr(dir.path().join(file).to_str().unwrap());
        assert_eq!(
            unsafe { apf_bundle_load(p.as_ptr(), &mut b) },
            ApfStatus::Ok,
            "{file}"
        );
        let mut dim = 0;
        unsafe { apf_bundle_dim(b, &mut dim) };
        assert_eq!(dim, bundle.dim());

        let r = parse(&reports[0]);
        let mut count = 0;
        unsafe { apf_report_call_count(r, &mut count) };
        assert_eq!(count, reports[0].calls.len());

        let mut rows = 0;
        let mut small = vec![0.0; 3];
        let st = unsafe {
            apf_bundle_encode(
                b,
                r,
                ptr::null(),
                seq_len,
                small.as_mut_ptr(),
                small.len(),
                &mut rows,
            )
        };
        assert_eq!(st, ApfStatus::BufferTooSmall);
        assert_eq!(rows, count.min(seq_len));
        let mut out = vec![0.0; rows * dim];
        let mask = cstr("api+string");
        let st = unsafe {
            apf_bundle_encode(
                b,
                r,
                mask.as_ptr(),
                seq_len,
                out.as_mut_ptr(),
                out.len(),
                &mut rows,
            )
        };
        assert_eq!(st, ApfStatus::Ok);
        assert_eq!(
            out,
            bundle.encode_report(&reports[0], "api+string".parse().unwrap(), seq_len)
        );
        let bogus = cstr("api+nothing");
        let st = unsafe {
            apf_bundle_encode(
                b,
                r,
                bogus.as_ptr(),
                seq_len,
                out.as_mut_ptr(),
                out.len(),
                &mut rows,
            )
        };
        assert_eq!(st, ApfStatus::Config);

        unsafe {
            apf_bundle_encode(
                b,
                r,
                ptr::null(),
                seq_len,
                out.as_mut_ptr(),
                out.len(),
                &mut rows,
            )
        };
        let mut m = ptr::null_mut();
        let cp = cstr(ck_path.to_str().unwrap());
        assert_eq!(
            unsafe { apf_model_load(cp.as_ptr(), &mut m) },
            ApfStatus::Ok
        );
        let mut k = 0;
        unsafe { apf_model_num_classes(m, &mut k) };
        assert_eq!(k, classes.len());
        let mut probs = vec![0.0; k];
        let st =
            unsafe { apf_model_predict_dense(m, out.as_ptr(), rows, dim, probs.as_mut_ptr(), k) };
        assert_eq!(st, ApfStatus::Ok);
        for (a, b) in probs.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let st = unsafe {
            apf_model_predict_dense(m, out.as_ptr(), rows, dim - 1, probs.as_mut_ptr(), k)
        };
        assert_eq!(st, ApfStatus::Shape);
        let st = unsafe { apf_model_predict_tokens(m, [2u32].as_ptr(), 1, probs.as_mut_ptr(), k) };
        assert_eq!(st, ApfStatus::Shape);

        let mut needed = 0;
        let mut name = vec![0 as c_char; 2];
        let st = unsafe { apf_model_class_name(m, 0, name.as_mut_ptr(), name.len(), &mut needed) };
        assert_eq!(st, ApfStatus::BufferTooSmall);
        name.resize(needed, 0);
        assert_eq!(
            unsafe { apf_model_class_name(m, 0, name.as_mut_ptr(), name.len(), &mut needed) },
            ApfStatus::Ok
        );
        assert_eq!(
            unsafe { CStr::from_ptr(name.as_ptr()) }.to_str().unwrap(),
            classes.names[0]
        );
        assert_eq!(
            unsafe { apf_model_class_name(m, k, name.as_mut_ptr(), name.len(), &mut needed) },
            ApfStatus::OutOfRange
        );

        unsafe {
            apf_model_free(m);
            apf_report_free(r);
            apf_bundle_free(b);
        }
    }
}

#[test]
fn token_encoding_and_prediction_match_the_library() {
    let reports = corpus();
    let cfg = NlpConfig {
        seq_len: 64,
        ..Default::default()
    };
    let pipeline = NlpPipeline::fit(&reports, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let nlp_dir = dir.path().join("nlp");
    pipeline.save(&nlp_dir).unwrap();

    let classes = ClassMap::from_labels(reports.iter().map(|r| r.label.as_str()));
    let model = Cnn::new(small_config(CnnConfig::nlp(
        pipeline.vocab.len(),
        64,
        classes.len(),
    )))
    .unwrap();
    let ck = Checkpoint {
        model,
        class_names: classes.names.clone(),
        meta: Default::default(),
    };
    let ck_path = dir.path().join("model.ckpt");
    ck.write(std::fs::File::create(&ck_path).unwrap()).unwrap();
    let data = nlp_dataset(&pipeline, &reports[1..2], &classes).unwrap();
    let want = ck.model.predict_proba(&data, 0);

    let mut t = ptr::null_mut();
    let p = cstr(nlp_dir.to_str().unwrap());
    assert_eq!(
        unsafe { apf_tokenizer_load(p.as_ptr(), &mut t) },
        ApfStatus::Ok
    );
    let (mut seq_len, mut vocab) = (0, 0);
    unsafe {
        apf_tokenizer_seq_len(t, &mut seq_len);
        apf_tokenizer_vocab_size(t, &mut vocab);
    }
    assert_eq!((seq_len, vocab), (64, pipeline.vocab.len()));

    let r = parse(&reports[1]);
    let mut ids = vec![0u32; seq_len];
    let mut true_len = 0;
    assert_eq!(
        unsafe { apf_tokenizer_encode(t, r, ids.as_mut_ptr(), ids.len(), &mut true_len) },
        ApfStatus::Ok
    );
    let seq = pipeline.encode(&reports[1]);
    assert_eq!((ids.clone(), true_len), (seq.ids, seq.true_length));
    assert_eq!(
        unsafe { apf_tokenizer_encode(t, r, ids.as_mut_ptr(), 10, &mut true_len) },
        ApfStatus::BufferTooSmall
    );

    let mut m = ptr::null_mut();
    let cp = cstr(ck_path.to_str().unwrap());
    assert_eq!(
        unsafe { apf_model_load(cp.as_ptr(), &mut m) },
        ApfStatus::Ok
    );
    let mut probs = vec![0.0; classes.len()];
    // Unpadded input gives the same answer as the padded sequence.
    let st = unsafe {
        apf_model_predict_tokens(m, ids.as_ptr(), true_len, probs.as_mut_ptr(), probs.len())
    };
    assert_eq!(st, ApfStatus::Ok);
    for (a, b) in probs.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    let big = [u32::MAX];
    let st =
        unsafe { apf_model_predict_tokens(m, big.as_ptr(), 1, probs.as_mut_ptr(), probs.len()) };
    assert_eq!(st, ApfStatus::Shape);
    unsafe {
        apf_model_free(m);
        apf_report_free(r);
        apf_tokenizer_free(t);
    }
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/apifeat.h"))
            .unwrap();
    let src =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"apifeat.h\"\nint main(void) { ApfStatus s = APF_STATUS_OK; return (int)s; }\n",
    )
    .unwrap();
    let status = match std::process::Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler found; skipping");
            return;
        }
    };
    assert!(status.success());
}
