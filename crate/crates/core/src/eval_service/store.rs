//! SQLite persistence. One file, WAL journal, full sync.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rusqlite::{params, Connection, OptionalExtension, Transaction};
use serde::{Deserialize, Serialize};

use super::{Assignment, EvaluationSample, Evaluator, ScoreRecord, SelectionRecord, Task};
use crate::corpus::{RequirementKind, RequirementRecord};
use crate::error::{Error, Result};
use crate::prompting::GeneratedNfr;
use crate::quality_model::QualityAttribute;

const SCHEMA_VERSION: i64 = 1;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS frs (
    fr_id TEXT PRIMARY KEY, text TEXT NOT NULL, source_doc TEXT, year INTEGER, position INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS nfrs (
    nfr_id TEXT PRIMARY KEY, fr_id TEXT NOT NULL REFERENCES frs(fr_id), model_id TEXT NOT NULL,
    attribute TEXT NOT NULL, subcharacteristic TEXT, text TEXT NOT NULL, justification TEXT NOT NULL,
    raw_span TEXT NOT NULL, position INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS samples (
    task TEXT PRIMARY KEY, sample_id TEXT NOT NULL, seed INTEGER NOT NULL, target INTEGER NOT NULL,
    members TEXT NOT NULL, strata TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS items (
    item_id TEXT PRIMARY KEY, task TEXT NOT NULL, nfr_id TEXT NOT NULL REFERENCES nfrs(nfr_id),
    UNIQUE (task, nfr_id));
CREATE TABLE IF NOT EXISTS evaluators (
    evaluator_id TEXT PRIMARY KEY, display_name TEXT NOT NULL, years_experience INTEGER NOT NULL,
    role_title TEXT NOT NULL, position INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS assignments (
    evaluator_id TEXT NOT NULL REFERENCES evaluators(evaluator_id), task TEXT NOT NULL,
    fr_ids TEXT NOT NULL, nfr_ids TEXT NOT NULL, designated_model TEXT,
    PRIMARY KEY (evaluator_id, task));
CREATE TABLE IF NOT EXISTS tokens (
    token TEXT PRIMARY KEY, evaluator_id TEXT NOT NULL UNIQUE REFERENCES evaluators(evaluator_id));
CREATE TABLE IF NOT EXISTS scores (
    evaluator_id TEXT NOT NULL, nfr_id TEXT NOT NULL REFERENCES nfrs(nfr_id),
    validity INTEGER NOT NULL CHECK (validity BETWEEN 1 AND 5),
    applicability INTEGER NOT NULL CHECK (applicability BETWEEN 1 AND 5),
    submitted_at INTEGER NOT NULL, PRIMARY KEY (evaluator_id, nfr_id));
CREATE TABLE IF NOT EXISTS selections (
    evaluator_id TEXT NOT NULL, nfr_id TEXT NOT NULL REFERENCES nfrs(nfr_id),
    chosen_attribute TEXT NOT NULL, submitted_at INTEGER NOT NULL, PRIMARY KEY (evaluator_id, nfr_id));
CREATE TABLE IF NOT EXISTS audit (
    id INTEGER PRIMARY KEY AUTOINCREMENT, at INTEGER NOT NULL, evaluator_id TEXT NOT NULL,
    task TEXT NOT NULL, nfr_id TEXT NOT NULL, previous TEXT NOT NULL, replacement TEXT NOT NULL);
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub id: i64,
    pub at: i64,
    pub evaluator_id: String,
    pub task: Task,
    pub nfr_id: String,
    /// JSON of the replaced record.
    pub previous: String,
    pub replacement: String,
}

/// Everything in the store, in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub frozen: bool,
    pub frs: Vec<RequirementRecord>,
    pub nfrs: Vec<GeneratedNfr>,
    pub samples: Vec<EvaluationSample>,
    pub evaluators: Vec<Evaluator>,
    pub assignments: Vec<Assignment>,
    pub scores: Vec<ScoreRecord>,
    pub selections: Vec<SelectionRecord>,
    pub audit: Vec<AuditEntry>,
}

pub struct Store {
    conn: Mutex<Connection>,
    path: Option<PathBuf>,
}

fn task_from_sql(s: String) -> rusqlite::Result<Task> {
    Task::parse(&s).ok_or_else(|| rusqlite::Error::InvalidColumnType(0, s, rusqlite::types::Type::Text))
}

fn attribute_from_sql(s: String) -> rusqlite::Result<QualityAttribute> {
    s.parse()
        .map_err(|_| rusqlite::Error::InvalidColumnType(0, s, rusqlite::types::Type::Text))
}

fn json_col<T: serde::de::DeserializeOwned>(s: String) -> rusqlite::Result<T> {
    serde_json::from_str(&s)
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

impl Store {
    pub fn open(path: &Path) -> Result<Self> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        Self::init(conn, Some(path.to_path_buf()))
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?, None)
    }

    fn init(conn: Connection, path: Option<PathBuf>) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        let version: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
            .optional()?;
        match version {
            None => {
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?1)",
                    [SCHEMA_VERSION.to_string()],
                )?;
            }
            Some(v) if v == SCHEMA_VERSION.to_string() => {}
            Some(v) => {
                return Err(Error::FormatVersion {
                    path: path.clone().unwrap_or_default(),
                    found: v.parse().unwrap_or(0),
                    expected: SCHEMA_VERSION as u32,
                })
            }
        }
        Ok(Store {
            conn: Mutex::new(conn),
            path,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Runs `f` in one transaction; every write path goes through here, which
    /// serializes writers.
    pub(crate) fn write<T>(&self, f: impl FnOnce(&Transaction) -> Result<T>) -> Result<T> {
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let tx = conn.transaction()?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    pub(crate) fn read<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        let conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        f(&conn)
    }

    pub fn snapshot(&self) -> Result<StoreSnapshot> {
        self.read(|c| {
            Ok(StoreSnapshot {
                frozen: is_frozen(c)?,
                frs: all_frs(c)?,
                nfrs: all_nfrs(c)?,
                samples: Task::ALL
                    .iter()
                    .filter_map(|t| get_sample(c, *t).transpose())
                    .collect::<Result<_>>()?,
                evaluators: all_evaluators(c)?,
                assignments: all_assignments(c)?,
                scores: all_scores(c)?,
                selections: all_selections(c)?,
                audit: all_audit(c)?,
            })
        })
    }
}

pub(crate) fn meta_get(c: &Connection, key: &str) -> Result<Option<String>> {
    Ok(
        c.query_row("SELECT value FROM meta WHERE key = ?1", [key], |r| r.get(0))
            .optional()?,
    )
}

pub(crate) fn meta_set(c: &Connection, key: &str, value: &str) -> Result<()> {
    c.execute(
        "INSERT INTO meta (key, value) VALUES (?1, ?2) ON CONFLICT(key) DO UPDATE SET value = excluded.value",
        params![key, value],
    )?;
    Ok(())
}

pub(crate) fn is_frozen(c: &Connection) -> Result<bool> {
    Ok(meta_get(c, "frozen")?.as_deref() == Some("true"))
}

pub(crate) fn insert_fr(c: &Connection, fr: &RequirementRecord) -> Result<()> {
    let existing: Option<String> = c
        .query_row("SELECT text FROM frs WHERE fr_id = ?1", [&fr.id], |r| r.get(0))
        .optional()?;
    match existing {
        Some(text) if text == fr.text => Ok(()),
        Some(_) => Err(Error::Integrity(format!(
            "FR {} already stored with different text",
            fr.id
        ))),
        None => {
            c.execute(
                "INSERT INTO frs (fr_id, text, source_doc, year, position)
                 VALUES (?1, ?2, ?3, ?4, (SELECT COUNT(*) FROM frs))",
                params![fr.id, fr.text, fr.source_doc, fr.year],
            )?;
            Ok(())
        }
    }
}

pub(crate) fn insert_nfr(c: &Connection, n: &GeneratedNfr) -> Result<()> {
    if let Some(existing) = get_nfr(c, &n.nfr_id)? {
        if &existing == n {
            return Ok(());
        }
        return Err(Error::Integrity(format!(
            "NFR {} already stored with different content",
            n.nfr_id
        )));
    }
    c.execute(
        "INSERT INTO nfrs (nfr_id, fr_id, model_id, attribute, subcharacteristic, text, justification, raw_span, position)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, (SELECT COUNT(*) FROM nfrs))",
        params![
            n.nfr_id,
            n.fr_id,
            n.model_id,
            n.attribute.canonical_name(),
            n.subcharacteristic,
            n.text,
            n.justification,
            n.raw_span
        ],
    )?;
    Ok(())
}

fn fr_from_row(r: &rusqlite::Row) -> rusqlite::Result<RequirementRecord> {
    Ok(RequirementRecord {
        id: r.get(0)?,
        text: r.get(1)?,
        kind: RequirementKind::Functional,
        source_doc: r.get(2)?,
        year: r.get(3)?,
    })
}

pub(crate) fn all_frs(c: &Connection) -> Result<Vec<RequirementRecord>> {
    let mut st = c.prepare("SELECT fr_id, text, source_doc, year FROM frs ORDER BY position")?;
    let rows = st.query_map([], fr_from_row)?.collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

pub(crate) fn get_fr(c: &Connection, fr_id: &str) -> Result<Option<RequirementRecord>> {
    Ok(c.query_row(
        "SELECT fr_id, text, source_doc, year FROM frs WHERE fr_id = ?1",
        [fr_id],
        fr_from_row,
    )
    .optional()?)
}

const NFR_COLUMNS: &str = "nfr_id, fr_id, model_id, attribute, subcharacteristic, text, justification, raw_span";

fn nfr_from_row(r: &rusqlite::Row) -> rusqlite::Result<GeneratedNfr> {
    Ok(GeneratedNfr {
        nfr_id: r.get(0)?,
        fr_id: r.get(1)?,
        model_id: r.get(2)?,
        attribute: attribute_from_sql(r.get(3)?)?,
        subcharacteristic: r.get(4)?,
        text: r.get(5)?,
        justification: r.get(6)?,
        raw_span: r.get(7)?,
    })
}

pub(crate) fn all_nfrs(c: &Connection) -> Result<Vec<GeneratedNfr>> {
    let mut st = c.prepare(&format!("SELECT {NFR_COLUMNS} FROM nfrs ORDER BY position"))?;
    let rows = st.query_map([], nfr_from_row)?.collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

pub(crate) fn get_nfr(c: &Connection, nfr_id: &str) -> Result<Option<GeneratedNfr>> {
    Ok(c.query_row(
        &format!("SELECT {NFR_COLUMNS} FROM nfrs WHERE nfr_id = ?1"),
        [nfr_id],
        nfr_from_row,
    )
    .optional()?)
}

pub(crate) fn put_sample(c: &Connection, s: &EvaluationSample, target: usize) -> Result<()> {
    c.execute(
        "INSERT INTO samples (task, sample_id, seed, target, members, strata) VALUES (?1, ?2, ?3, ?4, ?5, ?6)
         ON CONFLICT(task) DO UPDATE SET sample_id = excluded.sample_id, seed = excluded.seed,
           target = excluded.target, members = excluded.members, strata = excluded.strata",
        params![
            s.task.as_str(),
            s.sample_id,
            s.seed as i64,
            target as i64,
            serde_json::to_string(&s.members)?,
            serde_json::to_string(&s.strata)?
        ],
    )?;
    c.execute("DELETE FROM items WHERE task = ?1", [s.task.as_str()])?;
    for nfr_id in &s.members {
        c.execute(
            "INSERT INTO items (item_id, task, nfr_id) VALUES (?1, ?2, ?3)",
            params![super::public_item_id(&s.sample_id, nfr_id), s.task.as_str(), nfr_id],
        )?;
    }
    Ok(())
}

pub(crate) fn get_sample(c: &Connection, task: Task) -> Result<Option<EvaluationSample>> {
    Ok(c.query_row(
        "SELECT sample_id, seed, members, strata FROM samples WHERE task = ?1",
        [task.as_str()],
        |r| {
            Ok(EvaluationSample {
                sample_id: r.get(0)?,
                task,
                seed: r.get::<_, i64>(1)? as u64,
                members: json_col(r.get(2)?)?,
                strata: json_col::<BTreeMap<String, usize>>(r.get(3)?)?,
            })
        },
    )
    .optional()?)
}

pub(crate) fn item_id_for(c: &Connection, task: Task, nfr_id: &str) -> Result<Option<String>> {
    Ok(c.query_row(
        "SELECT item_id FROM items WHERE task = ?1 AND nfr_id = ?2",
        params![task.as_str(), nfr_id],
        |r| r.get(0),
    )
    .optional()?)
}

/// Resolves a public item id to (task, nfr_id).
pub(crate) fn resolve_item(c: &Connection, item_id: &str) -> Result<Option<(Task, String)>> {
    Ok(
        c.query_row("SELECT task, nfr_id FROM items WHERE item_id = ?1", [item_id], |r| {
            Ok((task_from_sql(r.get(0)?)?, r.get(1)?))
        })
        .optional()?,
    )
}

pub(crate) fn upsert_evaluator(c: &Connection, e: &Evaluator) -> Result<()> {
    c.execute(
        "INSERT INTO evaluators (evaluator_id, display_name, years_experience, role_title, position)
         VALUES (?1, ?2, ?3, ?4, (SELECT COUNT(*) FROM evaluators))
         ON CONFLICT(evaluator_id) DO UPDATE SET display_name = excluded.display_name,
           years_experience = excluded.years_experience, role_title = excluded.role_title",
        params![e.evaluator_id, e.display_name, e.years_experience, e.role_title],
    )?;
    Ok(())
}

fn evaluator_from_row(r: &rusqlite::Row) -> rusqlite::Result<Evaluator> {
    Ok(Evaluator {
        evaluator_id: r.get(0)?,
        display_name: r.get(1)?,
        years_experience: r.get(2)?,
        role_title: r.get(3)?,
    })
}

pub(crate) fn all_evaluators(c: &Connection) -> Result<Vec<Evaluator>> {
    let mut st =
        c.prepare("SELECT evaluator_id, display_name, years_experience, role_title FROM evaluators ORDER BY position")?;
    let rows = st.query_map([], evaluator_from_row)?.collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

pub(crate) fn get_evaluator(c: &Connection, evaluator_id: &str) -> Result<Option<Evaluator>> {
    Ok(c.query_row(
        "SELECT evaluator_id, display_name, years_experience, role_title FROM evaluators WHERE evaluator_id = ?1",
        [evaluator_id],
        evaluator_from_row,
    )
    .optional()?)
}

pub(crate) fn replace_assignments(c: &Connection, assignments: &[Assignment]) -> Result<()> {
    c.execute("DELETE FROM assignments", [])?;
    for a in assignments {
        c.execute(
            "INSERT INTO assignments (evaluator_id, task, fr_ids, nfr_ids, designated_model) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![
                a.evaluator_id,
                a.task.as_str(),
                serde_json::to_string(&a.fr_ids)?,
                serde_json::to_string(&a.nfr_ids)?,
                a.designated_model
            ],
        )?;
    }
    Ok(())
}

fn assignment_from_row(r: &rusqlite::Row) -> rusqlite::Result<Assignment> {
    Ok(Assignment {
        evaluator_id: r.get(0)?,
        task: task_from_sql(r.get(1)?)?,
        fr_ids: json_col(r.get(2)?)?,
        nfr_ids: json_col(r.get(3)?)?,
        designated_model: r.get(4)?,
    })
}

pub(crate) fn all_assignments(c: &Connection) -> Result<Vec<Assignment>> {
    let mut st = c.prepare(
        "SELECT a.evaluator_id, a.task, a.fr_ids, a.nfr_ids, a.designated_model FROM assignments a
         JOIN evaluators e ON e.evaluator_id = a.evaluator_id ORDER BY e.position, a.task",
    )?;
    let rows = st
        .query_map([], assignment_from_row)?
        .collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

pub(crate) fn get_assignment(c: &Connection, evaluator_id: &str, task: Task) -> Result<Option<Assignment>> {
    Ok(c.query_row(
        "SELECT evaluator_id, task, fr_ids, nfr_ids, designated_model FROM assignments
             WHERE evaluator_id = ?1 AND task = ?2",
        params![evaluator_id, task.as_str()],
        assignment_from_row,
    )
    .optional()?)
}

pub(crate) fn token_for(c: &Connection, evaluator_id: &str) -> Result<Option<String>> {
    Ok(c.query_row(
        "SELECT token FROM tokens WHERE evaluator_id = ?1",
        [evaluator_id],
        |r| r.get(0),
    )
    .optional()?)
}

pub(crate) fn put_token(c: &Connection, evaluator_id: &str, token: &str) -> Result<()> {
    c.execute(
        "INSERT INTO tokens (token, evaluator_id) VALUES (?1, ?2)",
        params![token, evaluator_id],
    )?;
    Ok(())
}

pub(crate) fn evaluator_for_token(c: &Connection, token: &str) -> Result<Option<String>> {
    Ok(
        c.query_row("SELECT evaluator_id FROM tokens WHERE token = ?1", [token], |r| {
            r.get(0)
        })
        .optional()?,
    )
}

fn score_from_row(r: &rusqlite::Row) -> rusqlite::Result<ScoreRecord> {
    Ok(ScoreRecord {
        evaluator_id: r.get(0)?,
        nfr_id: r.get(1)?,
        validity: r.get(2)?,
        applicability: r.get(3)?,
        submitted_at: r.get(4)?,
    })
}

fn selection_from_row(r: &rusqlite::Row) -> rusqlite::Result<SelectionRecord> {
    Ok(SelectionRecord {
        evaluator_id: r.get(0)?,
        nfr_id: r.get(1)?,
        chosen_attribute: attribute_from_sql(r.get(2)?)?,
        submitted_at: r.get(3)?,
    })
}

pub(crate) fn get_score(c: &Connection, evaluator_id: &str, nfr_id: &str) -> Result<Option<ScoreRecord>> {
    Ok(c.query_row(
        "SELECT evaluator_id, nfr_id, validity, applicability, submitted_at FROM scores
             WHERE evaluator_id = ?1 AND nfr_id = ?2",
        params![evaluator_id, nfr_id],
        score_from_row,
    )
    .optional()?)
}

pub(crate) fn get_selection(c: &Connection, evaluator_id: &str, nfr_id: &str) -> Result<Option<SelectionRecord>> {
    Ok(c.query_row(
        "SELECT evaluator_id, nfr_id, chosen_attribute, submitted_at FROM selections
             WHERE evaluator_id = ?1 AND nfr_id = ?2",
        params![evaluator_id, nfr_id],
        selection_from_row,
    )
    .optional()?)
}

pub(crate) fn upsert_score(c: &Connection, s: &ScoreRecord) -> Result<()> {
    c.execute(
        "INSERT INTO scores (evaluator_id, nfr_id, validity, applicability, submitted_at) VALUES (?1, ?2, ?3, ?4, ?5)
         ON CONFLICT(evaluator_id, nfr_id) DO UPDATE SET validity = excluded.validity,
           applicability = excluded.applicability, submitted_at = excluded.submitted_at",
        params![s.evaluator_id, s.nfr_id, s.validity, s.applicability, s.submitted_at],
    )?;
    Ok(())
}

pub(crate) fn upsert_selection(c: &Connection, s: &SelectionRecord) -> Result<()> {
    c.execute(
        "INSERT INTO selections (evaluator_id, nfr_id, chosen_attribute, submitted_at) VALUES (?1, ?2, ?3, ?4)
         ON CONFLICT(evaluator_id, nfr_id) DO UPDATE SET chosen_attribute = excluded.chosen_attribute,
           submitted_at = excluded.submitted_at",
        params![
            s.evaluator_id,
            s.nfr_id,
            s.chosen_attribute.canonical_name(),
            s.submitted_at
        ],
    )?;
    Ok(())
}

pub(crate) fn all_scores(c: &Connection) -> Result<Vec<ScoreRecord>> {
    let mut st =
        c.prepare("SELECT evaluator_id, nfr_id, validity, applicability, submitted_at FROM scores ORDER BY rowid")?;
    let rows = st.query_map([], score_from_row)?.collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

pub(crate) fn all_selections(c: &Connection) -> Result<Vec<SelectionRecord>> {
    let mut st =
        c.prepare("SELECT evaluator_id, nfr_id, chosen_attribute, submitted_at FROM selections ORDER BY rowid")?;
    let rows = st.query_map([], selection_from_row)?.collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}

pub(crate) fn record_count(c: &Connection) -> Result<i64> {
    Ok(c.query_row(
        "SELECT (SELECT COUNT(*) FROM scores) + (SELECT COUNT(*) FROM selections)",
        [],
        |r| r.get(0),
    )?)
}

pub(crate) fn insert_audit(
    c: &Connection,
    at: i64,
    evaluator_id: &str,
    task: Task,
    nfr_id: &str,
    previous: &str,
    replacement: &str,
) -> Result<()> {
    c.execute(
        "INSERT INTO audit (at, evaluator_id, task, nfr_id, previous, replacement) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![at, evaluator_id, task.as_str(), nfr_id, previous, replacement],
    )?;
    Ok(())
}

pub(crate) fn all_audit(c: &Connection) -> Result<Vec<AuditEntry>> {
    let mut st =
        c.prepare("SELECT id, at, evaluator_id, task, nfr_id, previous, replacement FROM audit ORDER BY id")?;
    let rows = st
        .query_map([], |r| {
            Ok(AuditEntry {
                id: r.get(0)?,
                at: r.get(1)?,
                evaluator_id: r.get(2)?,
                task: task_from_sql(r.get(3)?)?,
                nfr_id: r.get(4)?,
                previous: r.get(5)?,
                replacement: r.get(6)?,
            })
        })?
        .collect::<rusqlite::Result<_>>()?;
    Ok(rows)
}
