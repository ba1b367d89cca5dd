//! C ABI over `nfrgen`.
//!
//! Conventions:
//! - Every fallible function returns an [`NfrStatus`]; results come back
//!   through out-pointers.
//! - On failure the message is kept per thread and read with
//!   [`nfr_last_error_message`].
//! - Strings passed in are NUL-terminated UTF-8. Strings handed out must be
//!   released with [`nfr_string_free`].
//! - Handles are opaque; free each with its own `_free` function.
//! - Structured values cross the boundary as JSON text.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nfrgen::analysis::{self, Dataset, MatchKind, MetricsReport};
use nfrgen::eval_service::{EvalService, Task};
use nfrgen::prompting::{self, PromptSpec, ResponseContext};
use nfrgen::quality_model::{resolve_attribute, QualityAttribute, RelatednessMap};
use nfrgen::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Validation = 4,
    UnknownAttribute = 5,
    Parse = 6,
    NotFound = 7,
    Unauthorized = 8,
    Conflict = 9,
    Capacity = 10,
    Integrity = 11,
    Io = 12,
    Storage = 13,
    Transport = 14,
    Panic = 15,
}

/// Agreement between the model's attribute and the expert's choice.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfrMatchKind {
    Exact = 0,
    NearMiss = 1,
    Mismatch = 2,
}

/// Metrics computed once from a dataset.
pub struct NfrAnalyzer {
    dataset: Dataset,
    report: MetricsReport,
}

/// An open evaluation store.
pub struct NfrEvalStore {
    service: EvalService,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn status_for(e: &Error) -> NfrStatus {
    match e.code() {
        "invalid_argument" => NfrStatus::InvalidArgument,
        "validation" => NfrStatus::Validation,
        "unknown_attribute" => NfrStatus::UnknownAttribute,
        "parse" | "json" | "csv" | "format_version" => NfrStatus::Parse,
        "not_found" => NfrStatus::NotFound,
        "unauthorized" => NfrStatus::Unauthorized,
        "conflict" => NfrStatus::Conflict,
        "capacity" => NfrStatus::Capacity,
        "integrity" => NfrStatus::Integrity,
        "io" => NfrStatus::Io,
        "storage" => NfrStatus::Storage,
        _ => NfrStatus::Transport,
    }
}

struct Failure(NfrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_for(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(NfrStatus::Parse, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NfrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            NfrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            NfrStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(NfrStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NfrStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

fn out_check<T>(out: *mut T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(NfrStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(NfrStatus::Parse, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn relatedness(json: Option<&str>) -> Result<RelatednessMap, Failure> {
    Ok(match json {
        Some(j) => RelatednessMap::from_json(j)?,
        None => RelatednessMap::default(),
    })
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn nfr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn nfr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn nfr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of quality attributes.
#[no_mangle]
pub extern "C" fn nfr_attribute_count() -> usize {
    QualityAttribute::ALL.len()
}

/// Canonical attribute name for `index`, statically allocated; null when
/// out of range.
#[no_mangle]
pub extern "C" fn nfr_attribute_name(index: usize) -> *const c_char {
    const NAMES: [&str; 9] = [
        "Functional Suitability\0",
        "Performance Efficiency\0",
        "Compatibility\0",
        "Usability\0",
        "Reliability\0",
        "Security\0",
        "Maintainability\0",
        "Flexibility\0",
        "Safety\0",
    ];
    NAMES.get(index).map_or(ptr::null(), |n| n.as_ptr().cast())
}

/// Resolves an attribute name or alias to its index.
///
/// # Safety
/// `name` must be a valid C string; `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_resolve_attribute(name: *const c_char, out_index: *mut usize) -> NfrStatus {
    guard(|| {
        out_check(out_index, "out_index")?;
        *out_index = resolve_attribute(text(name, "name")?)?.index();
        Ok(())
    })
}

/// Classifies an (LLM attribute, expert attribute) pair. `relatedness_json`
/// may be null for the default map.
///
/// # Safety
/// String arguments must be valid C strings or null where allowed;
/// `out_kind` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_classify_match(
    llm_attribute: *const c_char,
    expert_attribute: *const c_char,
    relatedness_json: *const c_char,
    out_kind: *mut NfrMatchKind,
) -> NfrStatus {
    guard(|| {
        out_check(out_kind, "out_kind")?;
        let llm = resolve_attribute(text(llm_attribute, "llm_attribute")?)?;
        let expert = resolve_attribute(text(expert_attribute, "expert_attribute")?)?;
        let map = relatedness(optional_text(relatedness_json, "relatedness_json")?)?;
        *out_kind = match analysis::classify_match(llm, expert, &map) {
            MatchKind::Exact => NfrMatchKind::Exact,
            MatchKind::NearMiss => NfrMatchKind::NearMiss,
            MatchKind::Mismatch => NfrMatchKind::Mismatch,
        };
        Ok(())
    })
}

/// Renders a prompt from a JSON prompt spec
/// (`{"techniques": [...], "frs": [{"id", "text"}]}`).
///
/// # Safety
/// `spec_json` must be a valid C string; `out_prompt` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_build_prompt(spec_json: *const c_char, out_prompt: *mut *mut c_char) -> NfrStatus {
    guard(|| {
        out_check(out_prompt, "out_prompt")?;
        let spec: PromptSpec = serde_json::from_str(text(spec_json, "spec_json")?)?;
        put_string(out_prompt, prompting::build_prompt(&spec)?)
    })
}

/// Parses a raw model response into JSON `{"nfrs", "rejections", "raw"}`.
/// `fr_ids_json` is a JSON array of the FR ids in the request.
///
/// # Safety
/// String arguments must be valid C strings; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_parse_response(
    raw: *const c_char,
    model_id: *const c_char,
    fr_ids_json: *const c_char,
    out_json: *mut *mut c_char,
) -> NfrStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let ctx = ResponseContext {
            model_id: text(model_id, "model_id")?.to_string(),
            fr_ids: serde_json::from_str(text(fr_ids_json, "fr_ids_json")?)?,
        };
        let parsed = prompting::parse_llm_response(text(raw, "raw")?, &ctx)
            .map_err(|e| Failure(NfrStatus::Parse, e.to_string()))?;
        put_string(out_json, serde_json::to_string(&parsed)?)
    })
}

fn analyzer_for(dataset: Dataset, map: &RelatednessMap) -> Result<Box<NfrAnalyzer>, Failure> {
    let report = analysis::analyze(&dataset, map)?;
    Ok(Box::new(NfrAnalyzer { dataset, report }))
}

/// Loads an exported dataset directory and computes its metrics.
///
/// # Safety
/// `dataset_dir` must be a valid C string, `relatedness_json` a valid C
/// string or null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_analyzer_open(
    dataset_dir: *const c_char,
    relatedness_json: *const c_char,
    out: *mut *mut NfrAnalyzer,
) -> NfrStatus {
    guard(|| {
        out_check(out, "out")?;
        let map = relatedness(optional_text(relatedness_json, "relatedness_json")?)?;
        let dataset = Dataset::load(Path::new(text(dataset_dir, "dataset_dir")?))?;
        *out = Box::into_raw(analyzer_for(dataset, &map)?);
        Ok(())
    })
}

/// Like [`nfr_analyzer_open`] for a dataset given as JSON text.
///
/// # Safety
/// As for [`nfr_analyzer_open`].
#[no_mangle]
pub unsafe extern "C" fn nfr_analyzer_from_json(
    dataset_json: *const c_char,
    relatedness_json: *const c_char,
    out: *mut *mut NfrAnalyzer,
) -> NfrStatus {
    guard(|| {
        out_check(out, "out")?;
        let map = relatedness(optional_text(relatedness_json, "relatedness_json")?)?;
        let dataset: Dataset = serde_json::from_str(text(dataset_json, "dataset_json")?)?;
        dataset.validate()?;
        *out = Box::into_raw(analyzer_for(dataset, &map)?);
        Ok(())
    })
}

/// The metrics report as JSON.
///
/// # Safety
/// `analyzer` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_analyzer_report_json(
    analyzer: *const NfrAnalyzer,
    out_json: *mut *mut c_char,
) -> NfrStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let a = analyzer
            .as_ref()
            .ok_or(Failure(NfrStatus::NullArgument, "analyzer is null".into()))?;
        put_string(out_json, serde_json::to_string(&a.report)?)
    })
}

/// The metrics report as plain text.
///
/// # Safety
/// As for [`nfr_analyzer_report_json`].
#[no_mangle]
pub unsafe extern "C" fn nfr_analyzer_report_text(
    analyzer: *const NfrAnalyzer,
    out_text: *mut *mut c_char,
) -> NfrStatus {
    guard(|| {
        out_check(out_text, "out_text")?;
        let a = analyzer
            .as_ref()
            .ok_or(Failure(NfrStatus::NullArgument, "analyzer is null".into()))?;
        put_string(out_text, analysis::render_text(&a.report))
    })
}

/// Number of NFRs in the analyzed dataset.
///
/// # Safety
/// `analyzer` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn nfr_analyzer_nfr_count(analyzer: *const NfrAnalyzer) -> usize {
    analyzer.as_ref().map_or(0, |a| a.dataset.nfrs.len())
}

/// # Safety
/// `analyzer` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nfr_analyzer_free(analyzer: *mut NfrAnalyzer) {
    if !analyzer.is_null() {
        drop(Box::from_raw(analyzer));
    }
}

/// Opens (creating if needed) an evaluation store file.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_store_open(path: *const c_char, out: *mut *mut NfrEvalStore) -> NfrStatus {
    guard(|| {
        out_check(out, "out")?;
        let service = EvalService::open(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(NfrEvalStore { service }));
        Ok(())
    })
}

unsafe fn store_ref<'a>(store: *const NfrEvalStore) -> Result<&'a NfrEvalStore, Failure> {
    store
        .as_ref()
        .ok_or(Failure(NfrStatus::NullArgument, "store is null".into()))
}

fn task_named(name: &str) -> Result<Task, Failure> {
    Task::parse(name).ok_or_else(|| Failure(NfrStatus::InvalidArgument, format!("unknown task {name:?}")))
}

/// The evaluator's blind payload for `task` ("scoring" or
/// "attribute_selection") as JSON.
///
/// # Safety
/// `store` must be a live handle, string arguments valid C strings;
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_store_payload_json(
    store: *const NfrEvalStore,
    token: *const c_char,
    task: *const c_char,
    out_json: *mut *mut c_char,
) -> NfrStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let s = store_ref(store)?;
        let evaluator = s.service.evaluator_for_token(text(token, "token")?)?;
        let payload = s
            .service
            .evaluator_payload(&evaluator, task_named(text(task, "task")?)?)?;
        put_string(out_json, serde_json::to_string(&payload)?)
    })
}

/// Records (or replaces) a score for a scoring item.
///
/// # Safety
/// `store` must be a live handle and string arguments valid C strings.
#[no_mangle]
pub unsafe extern "C" fn nfr_store_record_score(
    store: *const NfrEvalStore,
    token: *const c_char,
    item_id: *const c_char,
    validity: u8,
    applicability: u8,
) -> NfrStatus {
    guard(|| {
        let s = store_ref(store)?;
        let evaluator = s.service.evaluator_for_token(text(token, "token")?)?;
        let nfr_id = s.service.item_for_task(text(item_id, "item_id")?, Task::Scoring)?;
        s.service.record_score(&evaluator, &nfr_id, validity, applicability)?;
        Ok(())
    })
}

/// Records (or replaces) the chosen attribute for a selection item.
///
/// # Safety
/// `store` must be a live handle and string arguments valid C strings.
#[no_mangle]
pub unsafe extern "C" fn nfr_store_record_selection(
    store: *const NfrEvalStore,
    token: *const c_char,
    item_id: *const c_char,
    attribute: *const c_char,
) -> NfrStatus {
    guard(|| {
        let s = store_ref(store)?;
        let evaluator = s.service.evaluator_for_token(text(token, "token")?)?;
        let nfr_id = s
            .service
            .item_for_task(text(item_id, "item_id")?, Task::AttributeSelection)?;
        s.service
            .record_selection(&evaluator, &nfr_id, text(attribute, "attribute")?)?;
        Ok(())
    })
}

/// The store's full dataset as JSON, ready for [`nfr_analyzer_from_json`].
///
/// # Safety
/// `store` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nfr_store_dataset_json(store: *const NfrEvalStore, out_json: *mut *mut c_char) -> NfrStatus {
    guard(|| {
        out_check(out_json, "out_json")?;
        let s = store_ref(store)?;
        put_string(out_json, serde_json::to_string(&s.service.dataset()?)?)
    })
}

/// # Safety
/// `store` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nfr_store_free(store: *mut NfrEvalStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}
