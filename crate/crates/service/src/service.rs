//! Study state and the operations behind the HTTP endpoints. All mutations
//! go through the single event-log writer; reads take a shared lock.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use divbench_core::annotations::{TemplateVariant, Verdict};
use divbench_core::json;
use divbench_core::{ConceptAttribute, RatingRecord};

use crate::store::{Event, EventLog, StoreError};
use crate::study::{seeded_hash, CreateStudy, StudyConfig, StudyRecord, Task};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub study_id: String,
    /// False when an idempotent replay returned an existing study.
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study_id: String,
    pub status: StudyStatus,
    pub n_tasks: usize,
    pub n_complete: usize,
    pub n_ratings: usize,
    pub config: StudyConfig,
}

/// What a rater sees: images in display order, no model names and no
/// swap flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub study_id: String,
    pub concept: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub prompt_text: String,
    pub template: TemplateVariant,
    pub set_size: usize,
    pub require_counts: bool,
    pub left_images: Vec<String>,
    pub right_images: Vec<String>,
}

/// Body of `POST /v1/tasks/{id}/rating`, in the displayed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub rater_id: String,
    #[serde(default)]
    pub count_left: Option<u32>,
    #[serde(default)]
    pub count_right: Option<u32>,
    pub verdict: Verdict,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpenReport {
    pub studies: usize,
    pub ratings: usize,
    /// Rating events dropped during replay (duplicates, unknown tasks, full tasks).
    pub dropped: usize,
    pub torn_tail: bool,
}

struct StudyState {
    record: Arc<StudyRecord>,
    /// Per task: raters who rated it.
    raters: Vec<BTreeSet<String>>,
    /// Display-frame records in arrival order.
    ratings: Vec<RatingRecord>,
}

impl StudyState {
    fn new(record: StudyRecord) -> Self {
        Self {
            raters: vec![BTreeSet::new(); record.tasks.len()],
            ratings: Vec::new(),
            record: Arc::new(record),
        }
    }

    fn is_full(&self, idx: usize) -> bool {
        self.raters[idx].len() >= self.record.config.run.raters_per_task
    }

    fn n_complete(&self) -> usize {
        (0..self.raters.len()).filter(|&i| self.is_full(i)).count()
    }
}

#[derive(Default)]
struct State {
    studies: BTreeMap<String, StudyState>,
    tasks: HashMap<String, (String, usize)>,
    idempotency: HashMap<String, String>,
}

impl State {
    fn insert_study(&mut self, record: StudyRecord) {
        for (i, t) in record.tasks.iter().enumerate() {
            self.tasks
                .insert(t.task_id.clone(), (record.study_id.clone(), i));
        }
        if let Some(k) = &record.idempotency_key {
            self.idempotency.insert(k.clone(), record.study_id.clone());
        }
        self.studies
            .insert(record.study_id.clone(), StudyState::new(record));
    }

    fn next_study_id(&self) -> String {
        (self.studies.len() + 1..)
            .map(|n| format!("study-{n:04}"))
            .find(|id| !self.studies.contains_key(id))
            .expect("unbounded range")
    }

    fn locate(&self, task_id: &str) -> Result<(&StudyState, usize), ServiceError> {
        let (sid, idx) = self
            .tasks
            .get(task_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown task {task_id:?}")))?;
        Ok((&self.studies[sid], *idx))
    }

    /// Checks that a canonical or display-frame record may be added.
    fn admit(&self, rec: &RatingRecord) -> Result<(), ServiceError> {
        let (study, idx) = self.locate(&rec.task_id)?;
        if rec.study_id != study.record.study_id {
            return Err(ServiceError::BadRequest(format!(
                "task {:?} belongs to study {:?}",
                rec.task_id, study.record.study_id
            )));
        }
        if rec.rater_id.trim().is_empty() {
            return Err(ServiceError::BadRequest("rater_id is empty".into()));
        }
        rec.validate_counts(study.record.config.counts_required())
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        if study.raters[idx].contains(&rec.rater_id) {
            return Err(ServiceError::Conflict(format!(
                "rater {:?} already rated task {:?}",
                rec.rater_id, rec.task_id
            )));
        }
        if study.is_full(idx) {
            return Err(ServiceError::Conflict(format!(
                "task {:?} is complete",
                rec.task_id
            )));
        }
        Ok(())
    }

    fn apply_rating(&mut self, rec: RatingRecord) {
        let (sid, idx) = self.tasks[&rec.task_id].clone();
        let study = self.studies.get_mut(&sid).expect("indexed study exists");
        study.raters[idx].insert(rec.rater_id.clone());
        study.ratings.push(rec);
    }
}

pub struct Service {
    state: RwLock<State>,
    log: Mutex<EventLog>,
}

impl Service {
    /// Replays the log under `dir`, dropping anything that violates the
    /// per-task invariants, and compacts it.
    pub fn open(dir: &Path) -> Result<(Self, OpenReport), ServiceError> {
        let replay = EventLog::replay(dir)?;
        let mut state = State::default();
        let mut kept = Vec::with_capacity(replay.events.len());
        let mut report = OpenReport {
            torn_tail: replay.torn_tail,
            ..Default::default()
        };
        for event in replay.events {
            match &event {
                Event::StudyCreated { study } => {
                    let clash = state.studies.contains_key(&study.study_id)
                        || study
                            .tasks
                            .iter()
                            .any(|t| state.tasks.contains_key(&t.task_id));
                    if clash {
                        continue;
                    }
                    state.insert_study(study.clone());
                    report.studies += 1;
                }
                Event::Rating { record } => {
                    if state.admit(record).is_err() {
                        report.dropped += 1;
                        continue;
                    }
                    state.apply_rating(record.clone());
                    report.ratings += 1;
                }
            }
            kept.push(event);
        }
        let log = EventLog::rewrite(dir, &kept)?;
        Ok((
            Self {
                state: RwLock::new(state),
                log: Mutex::new(log),
            },
            report,
        ))
    }

    pub fn create_study(
        &self,
        mut req: CreateStudy,
        header_key: Option<String>,
    ) -> Result<Created, ServiceError> {
        if let Some(k) = header_key {
            match &req.idempotency_key {
                Some(b) if *b != k => {
                    return Err(ServiceError::BadRequest(
                        "idempotency key in header and body differ".into(),
                    ))
                }
                _ => req.idempotency_key = Some(k),
            }
        }
        req.validate().map_err(ServiceError::BadRequest)?;
        let mut log = self.log.lock();
        let record = {
            let state = self.state.read();
            if let Some(key) = &req.idempotency_key {
                if let Some(sid) = state.idempotency.get(key) {
                    let existing = &state.studies[sid].record;
                    if existing.body_hash == req.body_hash() {
                        return Ok(Created {
                            study_id: sid.clone(),
                            created: false,
                        });
                    }
                    return Err(ServiceError::Conflict(format!(
                        "idempotency key {key:?} was used with a different body"
                    )));
                }
            }
            let study_id = match &req.study_id {
                Some(id) if state.studies.contains_key(id) => {
                    return Err(ServiceError::Conflict(format!("study {id:?} exists")))
                }
                Some(id) => id.clone(),
                None => state.next_study_id(),
            };
            let record = StudyRecord::from_request(study_id, &req);
            if let Some(t) = record
                .tasks
                .iter()
                .find(|t| state.tasks.contains_key(&t.task_id))
            {
                return Err(ServiceError::Conflict(format!(
                    "task id {:?} is already in use",
                    t.task_id
                )));
            }
            record
        };
        log.append(&Event::StudyCreated {
            study: record.clone(),
        })?;
        let study_id = record.study_id.clone();
        self.state.write().insert_study(record);
        Ok(Created {
            study_id,
            created: true,
        })
    }

    pub fn summary(&self, study_id: &str) -> Result<StudySummary, ServiceError> {
        let state = self.state.read();
        let s = study(&state, study_id)?;
        let n_complete = s.n_complete();
        Ok(StudySummary {
            study_id: study_id.to_string(),
            status: if n_complete == s.raters.len() {
                StudyStatus::Closed
            } else {
                StudyStatus::Open
            },
            n_tasks: s.raters.len(),
            n_complete,
            n_ratings: s.ratings.len(),
            config: s.record.config.clone(),
        })
    }

    /// The first task in the rater's seeded order that is incomplete and
    /// not yet rated by them.
    pub fn next_task(
        &self,
        study_id: &str,
        rater_id: &str,
    ) -> Result<Option<TaskView>, ServiceError> {
        if rater_id.trim().is_empty() {
            return Err(ServiceError::BadRequest("rater_id is required".into()));
        }
        let state = self.state.read();
        let s = study(&state, study_id)?;
        let order = rater_order(&s.record, rater_id);
        let Some(idx) = order
            .into_iter()
            .find(|&i| !s.is_full(i) && !s.raters[i].contains(rater_id))
        else {
            return Ok(None);
        };
        Ok(Some(view(&s.record, &s.record.tasks[idx], rater_id)))
    }

    /// Validates a display-frame submission, appends it durably and
    /// returns the stored record.
    pub fn submit(&self, task_id: &str, sub: Submission) -> Result<RatingRecord, ServiceError> {
        let mut log = self.log.lock();
        let rec = {
            let state = self.state.read();
            let (s, idx) = state.locate(task_id)?;
            let rec = build_record(&s.record, &s.record.tasks[idx], sub);
            state.admit(&rec)?;
            rec
        };
        log.append(&Event::Rating {
            record: rec.clone(),
        })?;
        self.state.write().apply_rating(rec.clone());
        Ok(rec)
    }

    /// Canonical-frame records in arrival order.
    pub fn export_records(&self, study_id: &str) -> Result<Vec<RatingRecord>, ServiceError> {
        let state = self.state.read();
        Ok(study(&state, study_id)?
            .ratings
            .iter()
            .map(RatingRecord::canonical)
            .collect())
    }

    /// Export as JSONL with a trailing `{"trailer":{"count":N}}` line.
    pub fn export_jsonl(&self, study_id: &str) -> Result<String, ServiceError> {
        let records = self.export_records(study_id)?;
        let mut out = String::new();
        for r in &records {
            out.push_str(&json::to_canonical_line(r).expect("records serialize"));
            out.push('\n');
        }
        out.push_str(&format!(
            "{{\"trailer\":{{\"count\":{}}}}}\n",
            records.len()
        ));
        Ok(out)
    }

    /// Adds previously exported records. Records already present for the
    /// same (task, rater) are counted as duplicates; any other violation
    /// rejects the whole batch before anything is written.
    pub fn import(
        &self,
        study_id: &str,
        records: Vec<RatingRecord>,
    ) -> Result<ImportReport, ServiceError> {
        let mut log = self.log.lock();
        let mut report = ImportReport::default();
        let mut fresh = Vec::new();
        {
            let state = self.state.read();
            let s = study(&state, study_id)?;
            let mut batch: BTreeSet<(String, String)> = BTreeSet::new();
            let mut added: HashMap<usize, usize> = HashMap::new();
            for rec in records {
                if rec.study_id != study_id {
                    return Err(ServiceError::BadRequest(format!(
                        "record for study {:?} imported into {study_id:?}",
                        rec.study_id
                    )));
                }
                let (owner, idx) = state.locate(&rec.task_id)?;
                if owner.record.study_id != study_id {
                    return Err(ServiceError::BadRequest(format!(
                        "task {:?} is not in this study",
                        rec.task_id
                    )));
                }
                if s.raters[idx].contains(&rec.rater_id)
                    || !batch.insert((rec.task_id.clone(), rec.rater_id.clone()))
                {
                    report.duplicates += 1;
                    continue;
                }
                let n = added.entry(idx).or_default();
                *n += 1;
                if s.raters[idx].len() + *n > s.record.config.run.raters_per_task {
                    return Err(ServiceError::Conflict(format!(
                        "task {:?} would exceed its rater quota",
                        rec.task_id
                    )));
                }
                state.admit(&rec)?;
                fresh.push(rec);
            }
        }
        for rec in &fresh {
            log.append(&Event::Rating {
                record: rec.clone(),
            })?;
        }
        let mut state = self.state.write();
        report.imported = fresh.len();
        for rec in fresh {
            state.apply_rating(rec);
        }
        Ok(report)
    }
}

fn study<'a>(state: &'a State, study_id: &str) -> Result<&'a StudyState, ServiceError> {
    state
        .studies
        .get(study_id)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown study {study_id:?}")))
}

/// Task indices in the rater's seeded order.
pub fn rater_order(study: &StudyRecord, rater_id: &str) -> Vec<usize> {
    let mut order: Vec<usize> = (0..study.tasks.len()).collect();
    let seed = seeded_hash(study.config.run.seed, &[&study.study_id, rater_id]);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

fn view(study: &StudyRecord, task: &Task, rater_id: &str) -> TaskView {
    let swap = study.swap_flag(&task.task_id, rater_id);
    let (l, r) = if swap {
        (&task.right, &task.left)
    } else {
        (&task.left, &task.right)
    };
    let ConceptAttribute {
        concept,
        attribute,
        prompt_text,
        ..
    } = task.pair.clone();
    TaskView {
        task_id: task.task_id.clone(),
        study_id: study.study_id.clone(),
        concept,
        attribute: (study.config.template != TemplateVariant::WithoutAspect).then_some(attribute),
        prompt_text,
        template: study.config.template,
        set_size: study.config.run.set_size,
        require_counts: study.config.counts_required(),
        left_images: l.image_urls.clone(),
        right_images: r.image_urls.clone(),
    }
}

fn build_record(study: &StudyRecord, task: &Task, sub: Submission) -> RatingRecord {
    RatingRecord {
        task_id: task.task_id.clone(),
        study_id: study.study_id.clone(),
        pair: task.pair.clone(),
        model_left: task.left.model.clone(),
        model_right: task.right.model.clone(),
        set_left: task.left.set_ref(&task.pair),
        set_right: task.right.set_ref(&task.pair),
        displayed_swap: study.swap_flag(&task.task_id, &sub.rater_id),
        rater_id: sub.rater_id,
        count_left: sub.count_left,
        count_right: sub.count_right,
        verdict: sub.verdict,
        elapsed_ms: sub.elapsed_ms,
        template: Some(study.config.template),
    }
}
