#![allow(dead_code)]

//! Randomized checks shared by the property tests and the acceptance target.
//! Each returns a one-line summary or the first counterexample.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use nfrgen::analysis::{analyze, classify_match, Dataset, ExportedEvaluator, MatchKind, ScoreDistribution};
use nfrgen::corpus::{RequirementKind, RequirementRecord};
use nfrgen::eval_service::{AssignRequest, EvalService, Evaluator, SampleRequest, ScoreRecord, SelectionRecord, Task};
use nfrgen::llm_gateway::{
    BackoffPolicy, ChatRequest, Clock, Gateway, ModelConfig, ProviderOptions, RateLimit, Transport, TransportFailure,
    VirtualClock,
};
use nfrgen::prompting::{build_prompt, nfr_id, section_text, FrRef, GeneratedNfr, PromptSpec, Technique};
use nfrgen::quality_model::{are_related, QualityAttribute, RelatednessMap, RubricDimension};
use nfrgen::Error;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn finish(
    name: &str,
    cases: u32,
    r: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>,
) -> Result<String, String> {
    r.map(|_| format!("{name}: {cases} cases"))
        .map_err(|e| format!("{name}: {e}"))
}

macro_rules! check {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($arg)+)));
        }
    };
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

/// ScoreDistribution against a brute-force recount.
pub fn distribution_oracle(cases: u32) -> Result<String, String> {
    let strategy = prop::collection::vec(1u8..=5, 1..400);
    let r = runner(cases).run(&strategy, |values| {
        let d = ScoreDistribution::from_values(RubricDimension::Validity, &values)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let n = values.len();
        check!(d.total == n, "total");
        for s in 1..=5u8 {
            let c = values.iter().filter(|v| **v == s).count();
            check!(d.count(s) == c, "count {s}");
            check!(close(d.proportion(s), c as f64 / n as f64), "proportion {s}");
        }
        let mean = values.iter().map(|v| f64::from(*v)).sum::<f64>() / n as f64;
        check!(close(d.mean, mean), "mean {} vs {mean}", d.mean);
        let mut sorted = values.clone();
        sorted.sort_unstable();
        let median = if n % 2 == 1 {
            f64::from(sorted[n / 2])
        } else {
            (f64::from(sorted[n / 2 - 1]) + f64::from(sorted[n / 2])) / 2.0
        };
        check!(close(d.median, median), "median {} vs {median}", d.median);
        Ok(())
    });
    finish("distribution oracle", cases, r)
}

pub fn frs(n: usize) -> Vec<RequirementRecord> {
    (1..=n)
        .map(|i| RequirementRecord {
            id: format!("FR-{i}"),
            text: format!("The system shall process request kind {i}."),
            kind: RequirementKind::Functional,
            source_doc: None,
            year: None,
        })
        .collect()
}

fn nfr(model: &str, fr: &str, k: usize, attribute: QualityAttribute) -> GeneratedNfr {
    GeneratedNfr {
        nfr_id: nfr_id(model, fr, k),
        fr_id: fr.to_string(),
        text: format!("Item {k} for {fr} shall complete within {} ms.", 100 * (k + 1)),
        attribute,
        subcharacteristic: None,
        justification: format!("{fr} needs this."),
        model_id: model.to_string(),
        raw_span: String::new(),
    }
}

/// Strata differ by at most one whenever a sample exists, and a capacity
/// error only when no balanced split fits.
pub fn stratification(cases: u32) -> Result<String, String> {
    let strategy = (
        prop::collection::vec(prop::collection::vec(0usize..5, 1..8), 1..9),
        0usize..60,
        any::<u64>(),
    );
    let r = runner(cases).run(&strategy, |(per_model, target, seed)| {
        let n_frs = per_model.iter().map(Vec::len).max().unwrap_or(1);
        let fr_list = frs(n_frs);
        let mut pool = Vec::new();
        let mut caps = BTreeMap::new();
        for (m, counts) in per_model.iter().enumerate() {
            let model = format!("model-{m}");
            for (f, c) in counts.iter().enumerate() {
                for k in 0..*c {
                    pool.push(nfr(&model, &fr_list[f].id, k, QualityAttribute::ALL[(m + k) % 9]));
                }
            }
            let total: usize = counts.iter().sum();
            if total > 0 {
                caps.insert(model, total);
            }
        }
        let svc = EvalService::in_memory().map_err(|e| TestCaseError::fail(e.to_string()))?;
        svc.import_pool(&fr_list, &pool)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let result = svc.create_sample(&SampleRequest {
            task: Task::Scoring,
            target_count: target,
            seed,
            fr_ids: Some(fr_list.iter().map(|f| f.id.clone()).collect()),
            replace: false,
        });
        let n = caps.len();
        let feasible = match target.checked_div(n) {
            None => target == 0,
            Some(base) => {
                caps.values().all(|c| *c >= base) && caps.values().filter(|c| **c > base).count() >= target % n
            }
        };
        match result {
            Ok(s) => {
                check!(feasible, "sample drawn where no balanced split exists");
                let quotas: Vec<usize> = caps.keys().map(|m| s.strata.get(m).copied().unwrap_or(0)).collect();
                let (lo, hi) = (
                    quotas.iter().min().copied().unwrap_or(0),
                    quotas.iter().max().copied().unwrap_or(0),
                );
                check!(hi - lo <= 1, "strata {:?}", s.strata);
                check!(quotas.iter().sum::<usize>() == target, "sum");
                check!(s.members.len() == target, "members");
                for (m, c) in &s.strata {
                    check!(*c <= caps[m], "stratum over capacity");
                }
            }
            Err(Error::Capacity { .. }) => {
                check!(!feasible, "capacity error on a feasible target {target} caps {caps:?}")
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
        Ok(())
    });
    finish("stratification max-min <= 1", cases, r)
}

/// A random but internally consistent dataset.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fr_list = frs(rng.random_range(1..6));
    let n_models = rng.random_range(1..5);
    let mut nfrs = Vec::new();
    for m in 0..n_models {
        for f in &fr_list {
            for k in 0..rng.random_range(0..4) {
                let a = QualityAttribute::ALL[rng.random_range(0..9)];
                nfrs.push(nfr(&format!("llm-{m}"), &f.id, k, a));
            }
        }
    }
    let evaluators: Vec<ExportedEvaluator> = (0..3)
        .map(|i| ExportedEvaluator {
            evaluator_id: format!("E{i}"),
            years_experience: rng.random_range(0..31),
            role_title: "Engineer".into(),
        })
        .collect();
    let mut scores = Vec::new();
    let mut selections = Vec::new();
    for n in &nfrs {
        for e in &evaluators {
            if rng.random_bool(0.3) {
                scores.push(ScoreRecord {
                    evaluator_id: e.evaluator_id.clone(),
                    nfr_id: n.nfr_id.clone(),
                    validity: rng.random_range(1..=5),
                    applicability: rng.random_range(1..=5),
                    submitted_at: rng.random_range(0..1_000_000),
                });
            }
            if rng.random_bool(0.3) {
                selections.push(SelectionRecord {
                    evaluator_id: e.evaluator_id.clone(),
                    nfr_id: n.nfr_id.clone(),
                    chosen_attribute: QualityAttribute::ALL[rng.random_range(0..9)],
                    submitted_at: rng.random_range(0..1_000_000),
                });
            }
        }
    }
    Dataset {
        frs: fr_list,
        nfrs,
        scores,
        selections,
        evaluators,
    }
}

/// Metrics do not depend on record, NFR or FR order. Per-model rows are
/// compared by model id.
pub fn permutation_invariance(cases: u32) -> Result<String, String> {
    let map = RelatednessMap::default();
    let r = runner(cases).run(&(any::<u64>(), any::<u64>()), |(seed, shuffle_seed)| {
        let ds = random_dataset(seed);
        let mut shuffled = ds.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        shuffled.frs.shuffle(&mut rng);
        shuffled.nfrs.shuffle(&mut rng);
        shuffled.scores.shuffle(&mut rng);
        shuffled.selections.shuffle(&mut rng);
        shuffled.evaluators.shuffle(&mut rng);
        let a = analyze(&ds, &map).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut b = analyze(&shuffled, &map).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut a = a;
        a.per_llm.rows.sort_by(|x, y| x.model_id.cmp(&y.model_id));
        b.per_llm.rows.sort_by(|x, y| x.model_id.cmp(&y.model_id));
        let (va, vb) = (serde_json::to_value(&a).unwrap(), serde_json::to_value(&b).unwrap());
        check!(json_close(&va, &vb), "reports differ:\n{va}\n{vb}");
        Ok(())
    });
    finish("permutation invariance", cases, r)
}

fn json_close(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
            _ => x == y,
        },
        (Array(x), Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(x, y)| json_close(x, y)),
        (Object(x), Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_close(v, w)))
        }
        _ => a == b,
    }
}

/// classify_match is symmetric, exact only on equal attributes, and a near
/// miss exactly on mapped pairs.
pub fn classify_symmetry(cases: u32) -> Result<String, String> {
    let strategy = (
        prop::collection::vec((0usize..9, 0usize..9), 0..20),
        0usize..9,
        0usize..9,
    );
    let r = runner(cases).run(&strategy, |(raw_pairs, a, b)| {
        let all = QualityAttribute::ALL;
        let pairs: BTreeSet<(QualityAttribute, QualityAttribute)> = raw_pairs
            .into_iter()
            .filter(|(x, y)| x != y)
            .map(|(x, y)| (all[x.min(y)], all[x.max(y)]))
            .collect();
        let map = RelatednessMap::from_pairs(pairs.iter().copied()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (a, b) = (all[a], all[b]);
        let ab = classify_match(a, b, &map);
        check!(ab == classify_match(b, a, &map), "asymmetric for {a:?},{b:?}");
        check!(classify_match(a, a, &map) == MatchKind::Exact, "not exact on itself");
        check!(are_related(a, a, &map).is_err(), "an attribute related to itself");
        if a != b {
            let listed = pairs.contains(&(a.min(b), a.max(b)));
            check!(
                (ab == MatchKind::NearMiss) == listed,
                "near miss {ab:?} vs listed {listed}"
            );
            check!(are_related(a, b, &map).unwrap() == listed, "are_related");
        } else {
            check!(ab == MatchKind::Exact, "exact");
        }
        Ok(())
    });
    finish("classify_match symmetry/irreflexivity", cases, r)
}

fn canonical(mut ds: Dataset) -> Dataset {
    ds.frs.sort_by(|a, b| a.id.cmp(&b.id));
    ds.nfrs.sort_by(|a, b| a.nfr_id.cmp(&b.nfr_id));
    ds.scores
        .sort_by(|a, b| (&a.evaluator_id, &a.nfr_id).cmp(&(&b.evaluator_id, &b.nfr_id)));
    ds.selections
        .sort_by(|a, b| (&a.evaluator_id, &a.nfr_id).cmp(&(&b.evaluator_id, &b.nfr_id)));
    ds.evaluators.sort_by(|a, b| a.evaluator_id.cmp(&b.evaluator_id));
    ds
}

/// Everything written to a store file reloads field-identical.
pub fn persistence_round_trip(cases: u32) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let counter = Mutex::new(0u32);
    let r = runner(cases).run(&any::<u64>(), |seed| {
        let ds = random_dataset(seed);
        let path = {
            let mut c = counter.lock().unwrap();
            *c += 1;
            dir.path().join(format!("store-{c}.sqlite"))
        };
        let fail = |e: Error| TestCaseError::fail(e.to_string());
        let before = {
            let svc = EvalService::open(&path).map_err(fail)?;
            svc.import_dataset(&ds).map_err(fail)?;
            svc.store().snapshot().map_err(fail)?
        };
        let svc = EvalService::open(&path).map_err(fail)?;
        let after = svc.store().snapshot().map_err(fail)?;
        check!(before == after, "snapshot changed across reopen");
        let back = svc.dataset().map_err(fail)?;
        check!(canonical(back) == canonical(ds), "dataset differs after reload");
        drop(svc);
        let _ = std::fs::remove_file(&path);
        Ok(())
    });
    finish("persistence round-trip", cases, r)
}

/// Same spec, same prompt; adding a technique keeps every earlier section
/// and adds its own.
pub fn prompt_determinism(cases: u32) -> Result<String, String> {
    let strategy = (
        prop::collection::btree_set(0usize..10, 0..10),
        0usize..10,
        prop::collection::vec("[A-Za-z ]{1,40}", 1..5),
    );
    let r = runner(cases).run(&strategy, |(set, extra, texts)| {
        let techniques: BTreeSet<Technique> = set.iter().map(|i| Technique::ALL[*i]).collect();
        let frs: Vec<FrRef> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| FrRef {
                id: format!("FR-{i}"),
                text: format!("The system shall {t}."),
            })
            .collect();
        let spec = PromptSpec::new(techniques.clone(), frs.clone());
        let p1 = build_prompt(&spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let p2 = build_prompt(&spec.clone()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        check!(p1 == p2, "nondeterministic prompt");
        let t = Technique::ALL[extra];
        let mut bigger = techniques.clone();
        bigger.insert(t);
        let big_spec = PromptSpec::new(bigger.clone(), frs);
        let p3 = build_prompt(&big_spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for s in &bigger {
            check!(p3.contains(&section_text(*s, &big_spec)), "section {s:?} missing");
        }
        if techniques.contains(&t) {
            check!(p3 == p1, "re-adding a technique changed the prompt");
        } else {
            check!(p3.len() > p1.len(), "prompt did not grow");
            check!(!p1.contains(&section_text(t, &spec)), "disabled section {t:?} present");
        }
        Ok(())
    });
    finish("prompt determinism/monotonicity", cases, r)
}

/// Replays a fixed failure script, then succeeds.
struct ScriptedTransport {
    script: Vec<Option<TransportFailure>>,
    calls: Mutex<usize>,
}

impl Transport for ScriptedTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportFailure> {
        let mut c = self.calls.lock().unwrap();
        let i = *c;
        *c += 1;
        match self.script.get(i).cloned().flatten() {
            Some(f) => Err(f),
            None => Ok("[]".into()),
        }
    }
}

fn failure_strategy() -> impl Strategy<Value = Option<TransportFailure>> {
    prop_oneof![
        Just(Some(TransportFailure::Timeout)),
        Just(Some(TransportFailure::Network("reset".into()))),
        Just(Some(TransportFailure::EmptyResponse)),
        Just(Some(TransportFailure::Status {
            code: 429,
            body: String::new()
        })),
        Just(Some(TransportFailure::Status {
            code: 503,
            body: String::new()
        })),
        Just(Some(TransportFailure::Status {
            code: 400,
            body: String::new()
        })),
        Just(Some(TransportFailure::Auth("bad key".into()))),
        Just(None),
    ]
}

/// attempt_count never exceeds max_retries + 1, and matches a replay of the
/// retry rules.
pub fn gateway_attempts(cases: u32) -> Result<String, String> {
    let strategy = (prop::collection::vec(failure_strategy(), 0..10), 0u32..6);
    let r = runner(cases).run(&strategy, |(script, retries)| {
        let clock = Arc::new(VirtualClock::new());
        let gw = Gateway::new(clock, BackoffPolicy::default());
        let transport = Arc::new(ScriptedTransport {
            script: script.clone(),
            calls: Mutex::new(0),
        });
        gw.register_provider("p", transport.clone(), ProviderOptions::default())
            .unwrap();
        let mut cfg = ModelConfig::new("m", "p", 0.4);
        cfg.max_retries = retries;
        let result = gw.query_model(&cfg, "prompt");
        let calls = *transport.calls.lock().unwrap();
        check!(calls as u32 <= retries + 1, "{calls} calls with {retries} retries");

        // Oracle: walk the script.
        let mut expected_calls = 0usize;
        let mut expected_ok = false;
        for i in 0..=retries as usize {
            expected_calls += 1;
            match script.get(i).cloned().flatten() {
                None => {
                    expected_ok = true;
                    break;
                }
                Some(f) if !f.is_retryable() => break,
                Some(_) => {}
            }
        }
        check!(calls == expected_calls, "calls {calls} vs oracle {expected_calls}");
        match result {
            Ok(c) => {
                check!(expected_ok, "unexpected success");
                check!(c.attempt_count as usize == calls, "attempt_count");
            }
            Err(_) => check!(!expected_ok, "unexpected failure"),
        }
        Ok(())
    });
    finish("gateway attempts <= retries+1", cases, r)
}

/// Records the virtual time of every send.
struct StampingTransport {
    clock: Arc<VirtualClock>,
    stamps: Mutex<Vec<Duration>>,
}

impl Transport for StampingTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportFailure> {
        self.stamps.lock().unwrap().push(self.clock.now());
        Ok("[]".into())
    }
}

/// No sliding window ever holds more than the configured request count, and
/// the limiter waits no longer than needed.
pub fn rate_limit_window(cases: u32) -> Result<String, String> {
    let strategy = (1u32..6, 1u64..5000, 1usize..40, 1usize..3);
    let r = runner(cases).run(&strategy, |(requests, window_ms, n, models)| {
        let clock = Arc::new(VirtualClock::new());
        let gw = Gateway::new(clock.clone(), BackoffPolicy::default());
        let transport = Arc::new(StampingTransport {
            clock: clock.clone(),
            stamps: Mutex::new(Vec::new()),
        });
        gw.register_provider("p", transport.clone(), ProviderOptions::default())
            .unwrap();
        let limit = RateLimit { requests, window_ms };
        let cfgs: Vec<ModelConfig> = (0..models)
            .map(|i| {
                let mut c = ModelConfig::new(&format!("m{i}"), "p", 0.4);
                c.rate_limit = Some(limit);
                c
            })
            .collect();
        for i in 0..n {
            gw.query_model(&cfgs[i % models], "x")
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
        }
        let stamps = transport.stamps.lock().unwrap().clone();
        check!(stamps.len() == n, "sends");
        let window = Duration::from_millis(window_ms);
        for (i, t) in stamps.iter().enumerate() {
            let inside = stamps[i..].iter().take_while(|s| **s < *t + window).count();
            check!(
                inside <= requests as usize,
                "{inside} sends in one window of {window_ms} ms (limit {requests})"
            );
        }
        let bound = window * ((n as u32 - 1) / requests);
        check!(
            *stamps.last().unwrap() <= bound,
            "limiter waited {:?} > {bound:?}",
            stamps.last()
        );
        Ok(())
    });
    finish("rate-limit window bound", cases, r)
}

/// Selection payloads never reveal the generating model or the attribute it
/// assigned, and no payload reveals the model.
pub fn blindness(runs: u32) -> Result<String, String> {
    let strategy = (
        prop::collection::btree_set("mdl[g-z]{6}", 2..6),
        2usize..8,
        1usize..4,
        0usize..4,
        any::<u64>(),
    );
    let names: Vec<String> = QualityAttribute::ALL
        .iter()
        .map(|a| a.canonical_name().to_lowercase())
        .collect();
    let r = runner(runs).run(&strategy, |(models, n_frs, per, extra, seed)| {
        let fail = |e: Error| TestCaseError::fail(e.to_string());
        let fr_list = frs(n_frs);
        let models: Vec<String> = models.into_iter().collect();
        let mut pool = Vec::new();
        for (m, model) in models.iter().enumerate() {
            for (f, fr) in fr_list.iter().enumerate() {
                for k in 0..per {
                    pool.push(nfr(model, &fr.id, k, QualityAttribute::ALL[(m + f + k) % 9]));
                }
            }
        }
        let svc = EvalService::in_memory().map_err(fail)?;
        svc.import_pool(&fr_list, &pool).map_err(fail)?;
        for task in [Task::Scoring, Task::AttributeSelection] {
            svc.create_sample(&SampleRequest {
                task,
                target_count: models.len(),
                seed,
                fr_ids: None,
                replace: false,
            })
            .map_err(fail)?;
        }
        let evaluators: Vec<Evaluator> = (0..models.len() + extra)
            .map(|i| Evaluator {
                evaluator_id: format!("E{i:02}"),
                display_name: format!("Evaluator {i}"),
                years_experience: 5,
                role_title: "Engineer".into(),
            })
            .collect();
        svc.assign_evaluators(&AssignRequest {
            evaluators: evaluators.clone(),
            frs_per_evaluator: n_frs,
            seed,
        })
        .map_err(fail)?;
        for e in &evaluators {
            let summary = match svc.summary(&e.evaluator_id) {
                Ok(s) => serde_json::to_string(&s).unwrap().to_lowercase(),
                Err(Error::NotFound(_)) => continue,
                Err(e) => return Err(fail(e)),
            };
            for task in [Task::Scoring, Task::AttributeSelection] {
                let payload = match svc.evaluator_payload(&e.evaluator_id, task) {
                    Ok(p) => p,
                    Err(Error::NotFound(_)) => continue,
                    Err(e) => return Err(fail(e)),
                };
                let text = serde_json::to_string(&payload).unwrap().to_lowercase();
                for m in &models {
                    check!(
                        !text.contains(m.as_str()) && !summary.contains(m.as_str()),
                        "model id {m} leaked: {text}"
                    );
                }
                if task == Task::AttributeSelection {
                    for n in &names {
                        check!(!text.contains(n.as_str()), "attribute {n} leaked: {text}");
                    }
                }
            }
        }
        Ok(())
    });
    finish("blind selection payloads", runs, r)
}
