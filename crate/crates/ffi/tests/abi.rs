//! Exercises the C entry points the way a foreign caller would: null
//! checks, status codes, error text, and full fit round trips.

use std::ffi::CStr;
use std::ptr;

use parmix_ffi::*;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(parmix_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

/// Two tight blobs at 0 and 5, thirty points each.
fn blob_values() -> Vec<f64> {
    let mut vals = Vec::new();
    for i in 0..30 {
        vals.push((i as f64) * 0.01);
        vals.push(5.0 + (i as f64) * 0.01);
    }
    vals
}

fn make_dataset(vals: &[f64]) -> *mut ParmixDataset {
    let mut data: *mut ParmixDataset = ptr::null_mut();
    let status = unsafe { parmix_dataset_new(vals.as_ptr(), vals.len(), 1, &mut data) };
    assert_eq!(status, ParmixStatus::Ok);
    assert!(!data.is_null());
    data
}

fn fit_blobs(seed: u64) -> (Vec<u64>, usize, Vec<ParmixTraceRow>) {
    let vals = blob_values();
    let data = make_dataset(&vals);
    let mut cfg: *mut ParmixConfig = ptr::null_mut();
    unsafe {
        assert_eq!(
            parmix_config_dpmm_new(0.1, 2, 12, seed, 2.5, 10.0, 0.05, &mut cfg),
            ParmixStatus::Ok
        );
        assert_eq!(
            parmix_config_set_init(cfg, ParmixInit::Kmeans, 2),
            ParmixStatus::Ok
        );
        let mut run: *mut ParmixDpmmResult = ptr::null_mut();
        assert_eq!(parmix_dpmm_fit(cfg, data, &mut run), ParmixStatus::Ok);
        let n = parmix_dpmm_num_points(run);
        assert_eq!(n, vals.len());
        let mut labels = vec![0u64; n];
        assert_eq!(
            parmix_dpmm_labels(run, labels.as_mut_ptr(), n),
            ParmixStatus::Ok
        );
        let k = parmix_dpmm_num_clusters(run);
        let mut trace = Vec::new();
        for i in 0..parmix_dpmm_trace_len(run) {
            let mut row = ParmixTraceRow::default();
            assert_eq!(parmix_dpmm_trace_row(run, i, &mut row), ParmixStatus::Ok);
            trace.push(row);
        }
        parmix_dpmm_free(run);
        parmix_config_free(cfg);
        parmix_dataset_free(data);
        (labels, k, trace)
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(parmix_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported_not_crashed() {
    let mut out: *mut ParmixDataset = ptr::null_mut();
    let status = unsafe { parmix_dataset_new(ptr::null(), 4, 1, &mut out) };
    assert_eq!(status, ParmixStatus::NullArgument);
    assert!(last_error().contains("values"));

    let vals = [1.0, 2.0];
    let status = unsafe { parmix_dataset_new(vals.as_ptr(), 2, 1, ptr::null_mut()) };
    assert_eq!(status, ParmixStatus::NullArgument);

    let mut run: *mut ParmixDpmmResult = ptr::null_mut();
    let status = unsafe { parmix_dpmm_fit(ptr::null(), ptr::null(), &mut run) };
    assert_eq!(status, ParmixStatus::NullArgument);
    assert!(run.is_null());
}

#[test]
fn bad_config_values_come_back_as_config_errors() {
    let mut cfg: *mut ParmixConfig = ptr::null_mut();
    let status =
        unsafe { parmix_config_dpmm_new(-1.0, 2, 5, 1, 0.0, 1.0, 1.0, &mut cfg) };
    assert_eq!(status, ParmixStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("alpha"), "got: {}", last_error());

    unsafe {
        assert_eq!(
            parmix_config_dpmm_new(1.0, 2, 5, 1, 0.0, 1.0, 1.0, &mut cfg),
            ParmixStatus::Ok
        );
        // rejected edits leave the config usable
        assert_eq!(
            parmix_config_set_global_every(cfg, 0),
            ParmixStatus::Config
        );
        assert_eq!(parmix_config_set_global_every(cfg, 2), ParmixStatus::Ok);
        parmix_config_free(cfg);
    }
}

#[test]
fn dpmm_fit_round_trip_separates_two_blobs() {
    let (labels, k, trace) = fit_blobs(11);
    assert_eq!(k, 2, "two far blobs should come out as two clusters");
    assert_eq!(trace.len(), 12);
    // blob membership survives: first blob all one label, second all the other
    let first = labels[0];
    assert!(labels.iter().step_by(2).all(|&l| l == first));
    let second = labels[1];
    assert_ne!(first, second);
    assert!(labels.iter().skip(1).step_by(2).all(|&l| l == second));
    for (i, row) in trace.iter().enumerate() {
        assert_eq!(row.iter, i as u64 + 1);
        assert!(row.log_joint.is_finite());
        assert!(row.gamma.is_nan(), "mixture trace has no gamma");
    }
}

#[test]
fn identical_seeds_give_identical_fits() {
    let (labels_a, k_a, trace_a) = fit_blobs(7);
    let (labels_b, k_b, trace_b) = fit_blobs(7);
    assert_eq!(labels_a, labels_b);
    assert_eq!(k_a, k_b);
    let stats = |t: &[ParmixTraceRow]| {
        t.iter()
            .map(|r| (r.iter, r.num_clusters, r.log_joint.to_bits(), r.accepted))
            .collect::<Vec<_>>()
    };
    assert_eq!(stats(&trace_a), stats(&trace_b));
}

#[test]
fn label_buffer_length_is_checked() {
    let vals = blob_values();
    let data = make_dataset(&vals);
    unsafe {
        let mut cfg: *mut ParmixConfig = ptr::null_mut();
        assert_eq!(
            parmix_config_dpmm_new(1.0, 1, 2, 3, 2.5, 10.0, 0.05, &mut cfg),
            ParmixStatus::Ok
        );
        let mut run: *mut ParmixDpmmResult = ptr::null_mut();
        assert_eq!(parmix_dpmm_fit(cfg, data, &mut run), ParmixStatus::Ok);
        let mut short = vec![0u64; 3];
        assert_eq!(
            parmix_dpmm_labels(run, short.as_mut_ptr(), short.len()),
            ParmixStatus::Config
        );
        assert!(last_error().contains("buffer"));
        parmix_dpmm_free(run);
        parmix_config_free(cfg);
        parmix_dataset_free(data);
    }
}

#[test]
fn hdp_fit_round_trip_reports_topics_and_gamma() {
    // two disjoint word blocks so even a short run finds structure
    let offsets = [0usize, 3, 6, 9, 12];
    let words = [0u32, 1, 2, 10, 11, 12, 0, 1, 2, 10, 11, 12];
    let counts = [5u32; 12];
    unsafe {
        let mut corpus: *mut ParmixCorpus = ptr::null_mut();
        assert_eq!(
            parmix_corpus_new(
                offsets.as_ptr(),
                4,
                words.as_ptr(),
                counts.as_ptr(),
                words.len(),
                20,
                &mut corpus
            ),
            ParmixStatus::Ok
        );
        assert_eq!(parmix_corpus_num_docs(corpus), 4);
        let mut cfg: *mut ParmixConfig = ptr::null_mut();
        assert_eq!(
            parmix_config_hdp_new(1.0, 0.1, 0.5, 2, 20, 42, &mut cfg),
            ParmixStatus::Ok
        );
        let mut run: *mut ParmixHdpResult = ptr::null_mut();
        assert_eq!(
            parmix_hdp_fit(cfg, corpus, ptr::null(), &mut run),
            ParmixStatus::Ok
        );
        let topics = parmix_hdp_num_topics(run);
        assert!(topics >= 1);
        assert!(parmix_hdp_gamma(run) > 0.0);
        assert_eq!(parmix_hdp_trace_len(run), 20);
        let mut row = ParmixTraceRow::default();
        assert_eq!(parmix_hdp_trace_row(run, 19, &mut row), ParmixStatus::Ok);
        assert!(row.gamma > 0.0);
        assert!(row.t_total >= topics as u64);
        assert!(row.metric.is_nan(), "no held-out corpus, no perplexity");
        // every topic's counts come back and total the corpus tokens
        let mut seen = 0u64;
        for t in 0..topics {
            let mut counts = vec![0u64; 20];
            assert_eq!(
                parmix_hdp_topic_counts(run, t, counts.as_mut_ptr(), counts.len()),
                ParmixStatus::Ok
            );
            seen += counts.iter().sum::<u64>();
        }
        assert_eq!(seen, 60);
        assert_eq!(
            parmix_hdp_topic_counts(run, topics, ptr::null_mut(), 0),
            ParmixStatus::NullArgument
        );
        parmix_hdp_free(run);
        parmix_config_free(cfg);
        parmix_corpus_free(corpus);
    }
}

#[test]
fn corpus_offsets_are_validated() {
    let offsets = [0usize, 5, 2];
    let words = [0u32, 1];
    let counts = [1u32, 1];
    let mut corpus: *mut ParmixCorpus = ptr::null_mut();
    let status = unsafe {
        parmix_corpus_new(
            offsets.as_ptr(),
            2,
            words.as_ptr(),
            counts.as_ptr(),
            words.len(),
            10,
            &mut corpus,
        )
    };
    assert_eq!(status, ParmixStatus::Config);
    assert!(corpus.is_null());
    assert!(last_error().contains("document 0"));
}

#[test]
fn f1_score_matches_over_the_boundary() {
    let a = [0i64, 0, 1, 1, 2];
    let mut out = f64::NAN;
    let status = unsafe { parmix_f1_score(a.as_ptr(), a.as_ptr(), a.len(), &mut out) };
    assert_eq!(status, ParmixStatus::Ok);
    assert_eq!(out, 1.0);

    let b = [5i64, 5, 5, 5, 5];
    let status = unsafe { parmix_f1_score(a.as_ptr(), b.as_ptr(), a.len(), &mut out) };
    assert_eq!(status, ParmixStatus::Ok);
    assert!(out < 1.0 && out > 0.0);
}

#[test]
fn generated_header_covers_the_surface() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("parmix.h");
    let text = std::fs::read_to_string(&header).expect("header generated at build time");
    for name in [
        "parmix_dataset_new",
        "parmix_corpus_new",
        "parmix_config_dpmm_new",
        "parmix_config_hdp_new",
        "parmix_dpmm_fit",
        "parmix_hdp_fit",
        "parmix_f1_score",
        "parmix_last_error",
        "typedef struct ParmixDataset ParmixDataset;",
        "PARMIX_STATUS_NULL_ARGUMENT",
    ] {
        assert!(text.contains(name), "header is missing {name}");
    }
}
