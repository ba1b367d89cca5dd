use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use nfrgen::analysis::reference::reference_dataset;
use nfrgen::eval_service::{AssignRequest, EvalService, Evaluator, SampleRequest, Task};
use nfrgen::quality_model::QualityAttribute;
use nfrgen_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = nfr_last_error_message();
    assert!(!p.is_null(), "no error message set");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Takes ownership of a library string.
fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { nfr_string_free(p) };
    s
}

#[test]
fn attribute_table_matches_core() {
    assert_eq!(nfr_attribute_count(), QualityAttribute::ALL.len());
    for (i, a) in QualityAttribute::ALL.iter().enumerate() {
        let name = unsafe { CStr::from_ptr(nfr_attribute_name(i)) }.to_str().unwrap();
        assert_eq!(name, a.canonical_name());
        let mut idx = usize::MAX;
        assert_eq!(
            unsafe { nfr_resolve_attribute(c(name).as_ptr(), &mut idx) },
            NfrStatus::Ok
        );
        assert_eq!(idx, i);
    }
    assert!(nfr_attribute_name(9).is_null());
    let mut idx = 0;
    assert_eq!(
        unsafe { nfr_resolve_attribute(c("Speed").as_ptr(), &mut idx) },
        NfrStatus::UnknownAttribute
    );
    assert!(last_error().contains("Speed"));
    assert!(!unsafe { CStr::from_ptr(nfr_version()) }.to_bytes().is_empty());
}

#[test]
fn classify_match_statuses() {
    let mut kind = NfrMatchKind::Mismatch;
    let call = |a: &str, b: &str, map: Option<&str>, out: &mut NfrMatchKind| {
        let map = map.map(c);
        unsafe {
            nfr_classify_match(
                c(a).as_ptr(),
                c(b).as_ptr(),
                map.as_ref().map_or(ptr::null(), |m| m.as_ptr()),
                out,
            )
        }
    };
    assert_eq!(call("Security", "Security", None, &mut kind), NfrStatus::Ok);
    assert_eq!(kind, NfrMatchKind::Exact);
    assert!(nfr_last_error_message().is_null());
    assert_eq!(call("Reliability", "Safety", None, &mut kind), NfrStatus::Ok);
    assert_eq!(kind, NfrMatchKind::NearMiss);
    assert_eq!(call("Usability", "Safety", None, &mut kind), NfrStatus::Ok);
    assert_eq!(kind, NfrMatchKind::Mismatch);
    assert_eq!(
        call("Usability", "Safety", Some(r#"[["Usability","Safety"]]"#), &mut kind),
        NfrStatus::Ok
    );
    assert_eq!(kind, NfrMatchKind::NearMiss);
    assert_eq!(call("Usability", "Safety", Some("{"), &mut kind), NfrStatus::Validation);
    assert_eq!(call("Usability", "Nope", None, &mut kind), NfrStatus::UnknownAttribute);
    let status = unsafe { nfr_classify_match(ptr::null(), c("Safety").as_ptr(), ptr::null(), &mut kind) };
    assert_eq!(status, NfrStatus::NullArgument);
    assert!(last_error().contains("llm_attribute"));
    let bad = [0xffu8, 0];
    let status = unsafe { nfr_classify_match(bad.as_ptr().cast(), c("Safety").as_ptr(), ptr::null(), &mut kind) };
    assert_eq!(status, NfrStatus::InvalidUtf8);
    let status =
        unsafe { nfr_classify_match(c("Safety").as_ptr(), c("Safety").as_ptr(), ptr::null(), ptr::null_mut()) };
    assert_eq!(status, NfrStatus::NullArgument);
}

#[test]
fn prompt_and_parse_round_trip() {
    let spec = c(
        r#"{"techniques": ["structured_output"], "frs": [{"id": "FR-1", "text": "The system shall export reports."}]}"#,
    );
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nfr_build_prompt(spec.as_ptr(), &mut out) }, NfrStatus::Ok);
    let prompt = take(out);
    assert!(prompt.contains("FR-1") && prompt.contains("The system shall export reports."));

    let empty = c(r#"{"techniques": [], "frs": []}"#);
    assert_ne!(unsafe { nfr_build_prompt(empty.as_ptr(), &mut out) }, NfrStatus::Ok);

    let raw = c(r#"Here you go:
```json
[{"fr_id": "FR-1", "attribute": "Performance Efficiency", "nfr": "Reports shall export within 2 s.", "justification": "Export is interactive."},
 {"fr_id": "FR-1", "attribute": "Speed", "nfr": "x", "justification": "y"}]
```"#);
    let mut json = ptr::null_mut();
    let status = unsafe { nfr_parse_response(raw.as_ptr(), c("m").as_ptr(), c(r#"["FR-1"]"#).as_ptr(), &mut json) };
    assert_eq!(status, NfrStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(v["nfrs"].as_array().unwrap().len(), 1);
    assert_eq!(v["nfrs"][0]["attribute"], "Performance Efficiency");
    assert_eq!(v["rejections"].as_array().unwrap().len(), 1);

    let status = unsafe { nfr_parse_response(c("no data").as_ptr(), c("m").as_ptr(), c("[]").as_ptr(), &mut json) };
    assert_eq!(status, NfrStatus::Parse);
    assert!(last_error().contains("no JSON array"));
}

#[test]
fn analyzer_reproduces_fixture_metrics() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/reference");
    let mut a = ptr::null_mut();
    let path = c(dir.to_str().unwrap());
    assert_eq!(
        unsafe { nfr_analyzer_open(path.as_ptr(), ptr::null(), &mut a) },
        NfrStatus::Ok
    );
    assert_eq!(unsafe { nfr_analyzer_nfr_count(a) }, reference_dataset().nfrs.len());
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nfr_analyzer_report_json(a, &mut out) }, NfrStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(report["breakdown"]["exact"], 135);
    assert_eq!(unsafe { nfr_analyzer_report_text(a, &mut out) }, NfrStatus::Ok);
    assert!(take(out).contains("4.63"));
    unsafe { nfr_analyzer_free(a) };

    let json = c(&serde_json::to_string(&reference_dataset()).unwrap());
    let mut b = ptr::null_mut();
    assert_eq!(
        unsafe { nfr_analyzer_from_json(json.as_ptr(), ptr::null(), &mut b) },
        NfrStatus::Ok
    );
    unsafe { nfr_analyzer_free(b) };

    let missing = c("/nonexistent/dataset");
    assert_ne!(
        unsafe { nfr_analyzer_open(missing.as_ptr(), ptr::null(), &mut a) },
        NfrStatus::Ok
    );
    assert_eq!(
        unsafe { nfr_analyzer_report_json(ptr::null(), &mut out) },
        NfrStatus::NullArgument
    );
    unsafe { nfr_analyzer_free(ptr::null_mut()) };
    unsafe { nfr_string_free(ptr::null_mut()) };
}

#[test]
fn store_handle_records_through_tokens() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("eval.sqlite");
    let ds = reference_dataset();
    let token = {
        let svc = EvalService::open(&path).unwrap();
        svc.import_pool(&ds.frs, &ds.nfrs).unwrap();
        for task in [Task::Scoring, Task::AttributeSelection] {
            svc.create_sample(&SampleRequest {
                task,
                target_count: 8,
                seed: 3,
                fr_ids: None,
                replace: false,
            })
            .unwrap();
        }
        let evaluators: Vec<Evaluator> = (0..8)
            .map(|i| Evaluator {
                evaluator_id: format!("E{i}"),
                display_name: format!("Evaluator {i}"),
                years_experience: 4,
                role_title: "Tester".into(),
            })
            .collect();
        let issued = svc
            .assign_evaluators(&AssignRequest {
                evaluators,
                frs_per_evaluator: 17,
                seed: 1,
            })
            .unwrap();
        issued
            .iter()
            .find(|i| i.assignment.task == Task::AttributeSelection)
            .unwrap()
            .token
            .clone()
    };

    let mut store = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { nfr_store_open(p.as_ptr(), &mut store) }, NfrStatus::Ok);
    let tok = c(&token);
    let mut out = ptr::null_mut();
    let status = unsafe { nfr_store_payload_json(store, tok.as_ptr(), c("attribute_selection").as_ptr(), &mut out) };
    assert_eq!(status, NfrStatus::Ok);
    let payload: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    let item = payload["groups"][0]["items"][0]["item_id"]
        .as_str()
        .unwrap()
        .to_string();

    let item_c = c(&item);
    let status = unsafe { nfr_store_record_selection(store, tok.as_ptr(), item_c.as_ptr(), c("Security").as_ptr()) };
    assert_eq!(status, NfrStatus::Ok);
    let status = unsafe { nfr_store_record_selection(store, tok.as_ptr(), item_c.as_ptr(), c("Speed").as_ptr()) };
    assert_ne!(status, NfrStatus::Ok);
    let status = unsafe { nfr_store_record_score(store, tok.as_ptr(), item_c.as_ptr(), 5, 5) };
    assert_eq!(status, NfrStatus::Unauthorized);
    let status =
        unsafe { nfr_store_record_selection(store, c("bad-token").as_ptr(), item_c.as_ptr(), c("Security").as_ptr()) };
    assert_eq!(status, NfrStatus::Unauthorized);
    let status = unsafe { nfr_store_payload_json(store, tok.as_ptr(), c("ranking").as_ptr(), &mut out) };
    assert_eq!(status, NfrStatus::InvalidArgument);

    assert_eq!(unsafe { nfr_store_dataset_json(store, &mut out) }, NfrStatus::Ok);
    let back: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(back["selections"].as_array().unwrap().len(), 1);
    assert_eq!(back["selections"][0]["chosen_attribute"], "Security");
    unsafe { nfr_store_free(store) };
}
