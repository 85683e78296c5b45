//! The service core: durable state plus the worker pool, independent of HTTP.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use chrono::{DateTime, Utc};
use cxr_core::backends::{BackendError, ModelBackend};
use cxr_core::detection::Detection;
use cxr_core::ingest::{has_preamble, AgeBand, MachineType, Manufacturer, Sex, StudyMetadata};
use cxr_core::metrics::{subgroup_report, Decision, Dimension, EvalConfig, MetricReport, SubgroupTable};
use cxr_core::pipeline::{
    check_feedback, content_digest, live_metrics, FeedbackError, FeedbackEvent, FindingRef, Pipeline,
    PipelineError, PredictionSet, ReviewedStudy, StudyRecord, StudyStatus, Triage, Verdict,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, Semaphore};

use crate::blob::BlobStore;
use crate::config::ServiceConfig;
use crate::journal::{Event, Journal, JournalError, LogLine};
use crate::store::{State, StudyEntry};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("blob store: {0}")]
    Blob(#[from] std::io::Error),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("empty upload")]
    Empty,
    #[error("upload of {size} bytes exceeds the {limit}-byte cap")]
    TooLarge { size: usize, limit: usize },
    #[error("missing DICOM preamble")]
    BadPreamble,
    #[error(transparent)]
    Storage(#[from] ServiceError),
}

#[derive(Debug, Error)]
pub enum FeedbackFailure {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error(transparent)]
    Rejected(#[from] FeedbackError),
    #[error(transparent)]
    Storage(#[from] ServiceError),
}

#[derive(Debug, Error)]
pub enum LookupError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("study {id} has no prediction set in state {}", .status.name())]
    NoPrediction { id: String, status: StudyStatus },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submitted {
    pub study_id: String,
    /// False when the same bytes had been submitted before.
    pub created: bool,
}

/// A verdict as posted by a client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    /// Client-generated for retry safety; assigned when absent.
    #[serde(default)]
    pub event_id: Option<String>,
    pub finding: FindingRef,
    pub verdict: Verdict,
    #[serde(default)]
    pub reviewer_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub event_id: String,
    /// True when this event id had already been recorded.
    pub duplicate: bool,
    pub study_status: StudyStatus,
}

/// A study as returned by the API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyView {
    #[serde(flatten)]
    pub record: StudyRecord,
    pub received_at: DateTime<Utc>,
    pub decision: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub last_error: Option<String>,
}

impl From<&StudyEntry> for StudyView {
    fn from(e: &StudyEntry) -> Self {
        StudyView {
            record: e.record.clone(),
            received_at: e.received_at,
            decision: e.decision(),
            last_error: e.last_error.clone(),
        }
    }
}

/// Worklist filter. Every field narrows; `None` matches all.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorklistFilter {
    pub status: Option<&'static str>,
    pub triage: Option<Triage>,
    pub age: Option<AgeBand>,
    pub sex: Option<Sex>,
    pub manufacturer: Option<Manufacturer>,
    pub machine: Option<MachineType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("unknown filter key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for filter {key}")]
    InvalidValue { key: String, value: String },
}

fn pick<T: Copy + std::fmt::Debug>(
    key: &str,
    value: &str,
    options: &[T],
    label: impl Fn(T) -> &'static str,
) -> Result<T, FilterError> {
    let v = value.trim();
    options
        .iter()
        .copied()
        .find(|o| format!("{o:?}").eq_ignore_ascii_case(v) || label(*o).eq_ignore_ascii_case(v))
        .ok_or_else(|| FilterError::InvalidValue {
            key: key.into(),
            value: value.into(),
        })
}

const STATUS_NAMES: [&str; 6] = ["Received", "Rejected", "Classified", "Detected", "AwaitingReview", "Reviewed"];

impl WorklistFilter {
    pub fn from_query(query: &HashMap<String, String>) -> Result<Self, FilterError> {
        let mut f = WorklistFilter::default();
        for (k, v) in query {
            match k.as_str() {
                "status" => f.status = Some(pick(k, v, &STATUS_NAMES, |s| s)?),
                "triage" => {
                    f.triage = Some(pick(k, v, &[Triage::Critical, Triage::Routine], |t| match t {
                        Triage::Critical => "critical",
                        Triage::Routine => "routine",
                    })?)
                }
                "age" => f.age = Some(pick(k, v, &AgeBand::ALL, AgeBand::label)?),
                "sex" | "gender" => f.sex = Some(pick(k, v, &[Sex::Male, Sex::Female, Sex::Unknown], Sex::label)?),
                "manufacturer" => {
                    f.manufacturer = Some(pick(
                        k,
                        v,
                        &[
                            Manufacturer::GEHealthcare,
                            Manufacturer::Siemens,
                            Manufacturer::Philips,
                            Manufacturer::Other,
                        ],
                        Manufacturer::label,
                    )?)
                }
                "machine" => {
                    f.machine = Some(pick(
                        k,
                        v,
                        &[MachineType::CR, MachineType::DR, MachineType::Unknown],
                        MachineType::label,
                    )?)
                }
                _ => return Err(FilterError::UnknownKey(k.clone())),
            }
        }
        Ok(f)
    }

    pub fn matches(&self, r: &StudyRecord) -> bool {
        let meta = r.metadata.as_ref();
        let on_meta = |want: bool, got: Option<bool>| !want || got.unwrap_or(false);
        self.status.is_none_or(|s| r.status.name() == s)
            && self.triage.is_none_or(|t| r.triage == t)
            && on_meta(self.age.is_some(), meta.map(|m| m.age_band() == self.age))
            && on_meta(self.sex.is_some(), meta.map(|m| Some(m.sex) == self.sex))
            && on_meta(
                self.manufacturer.is_some(),
                meta.map(|m| Some(m.manufacturer) == self.manufacturer),
            )
            && on_meta(self.machine.is_some(), meta.map(|m| Some(m.machine_type) == self.machine))
    }
}

/// One reviewed finding in the exported dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFinding {
    pub finding: FindingRef,
    pub detection: Option<Detection>,
    pub verdict: Verdict,
    pub reviewers: usize,
}

/// A reviewed study with its consensus labels, ready for retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStudy {
    pub study_id: String,
    pub image_blob: String,
    pub metadata: Option<StudyMetadata>,
    pub decision: Decision,
    pub score: f64,
    pub findings: Vec<LabeledFinding>,
}

struct Inner {
    state: State,
    journal: Journal,
}

pub struct Service {
    cfg: ServiceConfig,
    pipeline: Pipeline,
    backend: Arc<dyn ModelBackend>,
    blobs: BlobStore,
    inner: Mutex<Inner>,
    queue: mpsc::UnboundedSender<String>,
}

/// Receiving end of the work queue; hand it to [`Service::spawn_workers`].
pub struct WorkQueue(mpsc::UnboundedReceiver<String>);

impl Service {
    /// Opens the data directory, replays the log and queues every study
    /// still in Received.
    pub fn open(cfg: ServiceConfig) -> Result<(Arc<Self>, WorkQueue), ServiceError> {
        let backend = cfg.backend.build()?;
        Self::with_backend(cfg, backend)
    }

    pub fn with_backend(cfg: ServiceConfig, backend: Arc<dyn ModelBackend>) -> Result<(Arc<Self>, WorkQueue), ServiceError> {
        let pipeline = Pipeline::new(cfg.pipeline.clone())?;
        let blobs = BlobStore::open(cfg.data_dir.join("blobs"))?;
        let (journal, recovered) = Journal::open(&cfg.data_dir, |s: &State| s.last_seq)?;
        let load = |d: &str| load_prediction(&blobs, d);
        let mut state = match recovered.snapshot {
            Some(mut s) => {
                s.rehydrate(&load);
                s
            }
            None => State::default(),
        };
        for line in &recovered.events {
            state.apply(line, &load);
        }
        let pending: Vec<String> = state
            .ordered()
            .into_iter()
            .filter(|e| e.record.status == StudyStatus::Received)
            .map(|e| e.record.study_id.clone())
            .collect();
        tracing::info!(
            studies = state.studies.len(),
            replayed = recovered.events.len(),
            pending = pending.len(),
            "store opened"
        );
        let (tx, rx) = mpsc::unbounded_channel();
        for id in pending {
            tx.send(id).expect("receiver is alive");
        }
        let svc = Arc::new(Service {
            cfg,
            pipeline,
            backend,
            blobs,
            inner: Mutex::new(Inner { state, journal }),
            queue: tx,
        });
        Ok((svc, WorkQueue(rx)))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Appends, applies, and compacts when due. Caller holds the lock.
    fn commit(&self, inner: &mut Inner, event: Event, prediction: Option<&PredictionSet>) -> Result<u64, ServiceError> {
        let seq = inner.journal.append(&event)?;
        let line = LogLine { seq, event };
        inner.state.apply(&line, &|_| prediction.cloned());
        if inner.journal.pending() >= self.cfg.snapshot_every {
            let Inner { state, journal } = inner;
            journal.compact(state)?;
            tracing::info!(last_seq = seq, "event log compacted");
        }
        Ok(seq)
    }

    /// Stores the upload and queues it. Returns as soon as the submission
    /// is durable; processing happens on the worker pool.
    pub fn submit(&self, bytes: &[u8]) -> Result<Submitted, SubmitError> {
        if bytes.is_empty() {
            return Err(SubmitError::Empty);
        }
        if bytes.len() > self.cfg.max_upload_bytes {
            return Err(SubmitError::TooLarge {
                size: bytes.len(),
                limit: self.cfg.max_upload_bytes,
            });
        }
        if !has_preamble(bytes) {
            return Err(SubmitError::BadPreamble);
        }
        let study_id = content_digest(bytes);
        if self.lock().state.studies.contains_key(&study_id) {
            return Ok(Submitted { study_id, created: false });
        }
        self.blobs.put(bytes).map_err(ServiceError::from)?;
        let mut inner = self.lock();
        if inner.state.studies.contains_key(&study_id) {
            return Ok(Submitted { study_id, created: false });
        }
        let event = Event::StudySubmitted {
            study_id: study_id.clone(),
            received_at: Utc::now(),
        };
        self.commit(&mut inner, event, None)?;
        drop(inner);
        // Only fails when the workers are gone; the study is queued again
        // on the next start.
        let _ = self.queue.send(study_id.clone());
        tracing::debug!(%study_id, "study submitted");
        Ok(Submitted { study_id, created: true })
    }

    /// Runs the pipeline for one queued study, retrying transient backend
    /// failures. Blocking; call from a blocking thread.
    pub fn process(&self, study_id: &str) -> Result<(), ServiceError> {
        if self.lock().state.studies.get(study_id).map(|e| e.record.status) != Some(StudyStatus::Received) {
            return Ok(());
        }
        let bytes = self.blobs.get(study_id)?;
        let mut attempt = 0;
        let outcome = loop {
            attempt += 1;
            match self.pipeline.run(&bytes, self.backend.as_ref()) {
                Ok(o) => break o,
                Err(e) if e.is_retryable() && attempt < self.cfg.max_attempts => {
                    tracing::warn!(%study_id, attempt, error = %e, "retrying study");
                    std::thread::sleep(Duration::from_millis(20 * u64::from(attempt)));
                }
                Err(e) => {
                    tracing::error!(%study_id, attempt, error = %e, "study failed");
                    if let Some(entry) = self.lock().state.studies.get_mut(study_id) {
                        entry.last_error = Some(e.to_string());
                    }
                    return Err(e.into());
                }
            }
        };
        let mut record = outcome.record;
        record.study_id = study_id.to_string();
        if let Some(p) = &outcome.prediction {
            let digest = self.blobs.put(p.to_json().as_bytes())?;
            debug_assert_eq!(Some(&digest), record.prediction_set_ref.as_ref());
            record.prediction_set_ref = Some(digest);
        }
        let status = record.status;
        let mut inner = self.lock();
        self.commit(&mut inner, Event::StudyProcessed { record }, outcome.prediction.as_ref())?;
        tracing::debug!(%study_id, status = status.name(), "study processed");
        Ok(())
    }

    /// Drains the queue with at most `workers` concurrent pipeline runs.
    pub fn spawn_workers(self: &Arc<Self>, queue: WorkQueue) -> tokio::task::JoinHandle<()> {
        let svc = Arc::clone(self);
        let permits = Arc::new(Semaphore::new(self.cfg.workers));
        let mut rx = queue.0;
        tokio::spawn(async move {
            while let Some(id) = rx.recv().await {
                let permit = Arc::clone(&permits)
                    .acquire_owned()
                    .await
                    .expect("semaphore is never closed");
                let svc = Arc::clone(&svc);
                tokio::task::spawn_blocking(move || {
                    let _ = svc.process(&id);
                    drop(permit);
                });
            }
        })
    }

    /// Synchronously drains everything queued so far; for batch use.
    pub fn drain(&self, queue: &mut WorkQueue) {
        while let Ok(id) = queue.0.try_recv() {
            let _ = self.process(&id);
        }
    }

    /// Records one verdict. The event is durable before this returns.
    pub fn record_feedback(
        &self,
        study_id: &str,
        req: FeedbackRequest,
        reviewer_id: &str,
    ) -> Result<FeedbackAck, FeedbackFailure> {
        let mut inner = self.lock();
        let Some(entry) = inner.state.studies.get(study_id) else {
            return Err(FeedbackFailure::UnknownStudy(study_id.to_string()));
        };
        if let Some(id) = &req.event_id {
            if inner.state.event_ids.contains(id) {
                return Ok(FeedbackAck {
                    event_id: id.clone(),
                    duplicate: true,
                    study_status: entry.record.status,
                });
            }
        }
        check_feedback(&entry.record, entry.prediction.as_ref(), req.finding)?;
        let ev = FeedbackEvent {
            event_id: req.event_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string()),
            study_id: study_id.to_string(),
            finding: req.finding,
            verdict: req.verdict,
            reviewer_id: reviewer_id.to_string(),
            timestamp: Utc::now(),
        };
        let event_id = ev.event_id.clone();
        self.commit(&mut inner, Event::Feedback(ev), None)?;
        let study_status = inner.state.studies[study_id].record.status;
        Ok(FeedbackAck {
            event_id,
            duplicate: false,
            study_status,
        })
    }

    pub fn study(&self, study_id: &str) -> Option<StudyView> {
        self.lock().state.studies.get(study_id).map(StudyView::from)
    }

    pub fn worklist(&self, filter: &WorklistFilter) -> Vec<StudyView> {
        self.lock()
            .state
            .ordered()
            .into_iter()
            .filter(|e| filter.matches(&e.record))
            .map(StudyView::from)
            .collect()
    }

    pub fn prediction(&self, study_id: &str) -> Result<PredictionSet, LookupError> {
        let inner = self.lock();
        let entry = inner
            .state
            .studies
            .get(study_id)
            .ok_or_else(|| LookupError::UnknownStudy(study_id.to_string()))?;
        entry.prediction.clone().ok_or_else(|| LookupError::NoPrediction {
            id: study_id.to_string(),
            status: entry.record.status,
        })
    }

    /// Feedback events of one study in log order, superseded ones included.
    pub fn study_feedback(&self, study_id: &str) -> Option<Vec<FeedbackEvent>> {
        let inner = self.lock();
        let entry = inner.state.studies.get(study_id)?;
        Some(entry.feedback.iter().map(|(_, ev)| ev.clone()).collect())
    }

    /// Every feedback event in the store, in log order.
    pub fn feedback_log(&self) -> Vec<FeedbackEvent> {
        let inner = self.lock();
        let mut all: Vec<(u64, FeedbackEvent)> = inner
            .state
            .studies
            .values()
            .flat_map(|e| e.feedback.iter().cloned())
            .collect();
        all.sort_by_key(|(seq, _)| *seq);
        all.into_iter().map(|(_, ev)| ev).collect()
    }

    pub fn live_report(&self) -> MetricReport {
        let inner = self.lock();
        let studies: Vec<ReviewedStudy<'_>> = inner
            .state
            .ordered()
            .into_iter()
            .filter_map(|e| {
                Some(ReviewedStudy {
                    record: &e.record,
                    prediction: e.prediction.as_ref()?,
                    verdicts: &e.verdicts,
                })
            })
            .collect();
        live_metrics(&studies, &EvalConfig::default())
    }

    pub fn live_subgroup(&self, by: Dimension) -> SubgroupTable {
        self.live_report()
            .subgroups
            .into_iter()
            .find(|t| t.dimension == by)
            .unwrap_or_else(|| subgroup_report(&[], by))
    }

    /// Reviewed studies with their consensus labels.
    pub fn export(&self) -> Vec<LabeledStudy> {
        let inner = self.lock();
        inner
            .state
            .ordered()
            .into_iter()
            .filter(|e| e.record.status == StudyStatus::Reviewed)
            .filter_map(|e| {
                let p = e.prediction.as_ref()?;
                let findings = p
                    .findings()
                    .into_iter()
                    .filter_map(|f| {
                        Some(LabeledFinding {
                            finding: f,
                            detection: match f {
                                FindingRef::Classification => None,
                                FindingRef::Detection(i) => Some(p.detections[i].clone()),
                            },
                            verdict: e.verdicts.consensus(f)?,
                            reviewers: e.verdicts.reviewers(f),
                        })
                    })
                    .collect();
                Some(LabeledStudy {
                    study_id: e.record.study_id.clone(),
                    image_blob: e.record.study_id.clone(),
                    metadata: e.record.metadata.clone(),
                    decision: p.decision,
                    score: p.ensemble.abnormal(),
                    findings,
                })
            })
            .collect()
    }

    /// Count of studies per status name.
    pub fn status_counts(&self) -> HashMap<&'static str, usize> {
        let inner = self.lock();
        let mut out = HashMap::new();
        for e in inner.state.studies.values() {
            *out.entry(e.record.status.name()).or_default() += 1;
        }
        out
    }

    /// Whether any artifact beyond the upload exists for a study.
    pub fn has_prediction_blob(&self, study_id: &str) -> bool {
        let inner = self.lock();
        inner
            .state
            .studies
            .get(study_id)
            .and_then(|e| e.record.prediction_set_ref.as_deref())
            .is_some_and(|d| self.blobs.contains(d))
    }
}

fn load_prediction(blobs: &BlobStore, digest: &str) -> Option<PredictionSet> {
    match blobs.get(digest).map(|b| serde_json::from_slice(&b)) {
        Ok(Ok(p)) => Some(p),
        Ok(Err(e)) => {
            tracing::error!(%digest, error = %e, "unreadable prediction blob");
            None
        }
        Err(e) => {
            tracing::error!(%digest, error = %e, "missing prediction blob");
            None
        }
    }
}
