//! Edit sessions and their append-only journal.
//!
//! A session pairs a baseline track with the participant's edits. Every
//! accepted operation is appended to a line-delimited journal before it
//! becomes visible, so replaying the journal on startup rebuilds every
//! session, including its current track, bit-for-bit.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::MeanStd;
use crate::engine::{Edit, EditState, EngineError, SliderPanel};
use crate::stats::CorpusStats;
use crate::synth::SynthBackend;
use crate::track::{TrackError, UtteranceTrack};

pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Low,
    High,
}

impl std::str::FromStr for Confidence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Confidence::Low),
            "high" => Ok(Confidence::High),
            other => Err(format!("unknown confidence {other:?}; expected low or high")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Submitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionOp {
    Edit { edit: Edit },
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedOp {
    #[serde(flatten)]
    pub op: SessionOp,
    /// Milliseconds since session creation.
    pub wall_time_ms: u64,
}

/// Millisecond wall clock; swappable in tests.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session submitted")]
    Submitted,
    #[error("confidence must be low or high")]
    MissingConfidence,
    #[error(transparent)]
    InvalidTrack(#[from] TrackError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("journal I/O: {0}")]
    Journal(#[from] std::io::Error),
    #[error("corrupt journal at line {line}: {message}")]
    CorruptJournal { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum JournalEntry {
    Created {
        session_id: String,
        created_at_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference_audio: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        backend: Option<SynthBackend>,
        baseline: UtteranceTrack,
    },
    Op {
        session_id: String,
        #[serde(flatten)]
        op: LoggedOp,
    },
    Submitted {
        session_id: String,
        submitted_at_ms: u64,
        confidence: Confidence,
    },
}

struct Journal {
    file: File,
}

impl Journal {
    fn open(dir: &Path) -> Result<(Self, Vec<JournalEntry>), SessionError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(JOURNAL_FILE);
        let mut entries = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry = serde_json::from_str(&line)
                    .map_err(|e| SessionError::CorruptJournal { line: i + 1, message: e.to_string() })?;
                entries.push(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((Self { file }, entries))
    }

    fn append(&mut self, entry: &JournalEntry) -> Result<(), SessionError> {
        let mut line = serde_json::to_vec(entry).expect("journal entries serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Submission {
    at_ms: u64,
    seq: u64,
    confidence: Confidence,
}

#[derive(Debug, Clone)]
struct Session {
    id: String,
    reference_audio: Option<PathBuf>,
    backend: Option<SynthBackend>,
    created_at_ms: u64,
    state: EditState,
    log: Vec<LoggedOp>,
    submission: Option<Submission>,
}

impl Session {
    fn apply(&mut self, op: &LoggedOp) -> Result<(), EngineError> {
        match &op.op {
            SessionOp::Edit { edit } => self.state.apply(edit)?,
            SessionOp::Reset => self.state.reset(),
        }
        self.log.push(*op);
        Ok(())
    }

    fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            status: if self.submission.is_some() { SessionStatus::Submitted } else { SessionStatus::Open },
            confidence: self.submission.as_ref().map(|s| s.confidence),
            reference_audio: self.reference_audio.clone(),
            backend: self.backend.clone(),
            created_at_ms: self.created_at_ms,
            op_count: self.log.len(),
            baseline: self.state.baseline().clone(),
            current: self.state.render(),
            sliders: self.state.sliders(),
            op_log: self.log.clone(),
        }
    }

    fn record(&self) -> Option<ExportRecord> {
        let sub = self.submission.as_ref()?;
        let baseline = self.state.baseline().clone();
        let edited = self.state.render();
        Some(ExportRecord {
            session_id: self.id.clone(),
            confidence: sub.confidence,
            modified: edited != baseline,
            op_count: self.log.len(),
            elapsed_seconds: sub.at_ms.saturating_sub(self.created_at_ms) as f64 / 1000.0,
            baseline,
            edited,
        })
    }
}

/// Snapshot of a session as shown to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub confidence: Option<Confidence>,
    pub reference_audio: Option<PathBuf>,
    pub backend: Option<SynthBackend>,
    pub created_at_ms: u64,
    pub op_count: usize,
    pub baseline: UtteranceTrack,
    pub current: UtteranceTrack,
    pub sliders: SliderPanel,
    pub op_log: Vec<LoggedOp>,
}

/// Result of an accepted edit or reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub op_count: usize,
    pub current: UtteranceTrack,
    pub sliders: SliderPanel,
}

/// One original/edited pair of the edited-speech corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub session_id: String,
    pub confidence: Confidence,
    pub modified: bool,
    pub op_count: usize,
    pub elapsed_seconds: f64,
    pub baseline: UtteranceTrack,
    pub edited: UtteranceTrack,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub modified_only: bool,
    #[serde(default)]
    pub confidence: Option<Confidence>,
}

impl ExportFilter {
    pub fn admits(&self, record: &ExportRecord) -> bool {
        (!self.modified_only || record.modified) && self.confidence.is_none_or(|c| c == record.confidence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub count: usize,
    pub modified: usize,
    pub unmodified: usize,
    pub op_count: Option<MeanStd>,
    pub elapsed_seconds: Option<MeanStd>,
}

impl ExportSummary {
    pub fn of(records: &[ExportRecord]) -> Self {
        let ops: Vec<f64> = records.iter().map(|r| r.op_count as f64).collect();
        let secs: Vec<f64> = records.iter().map(|r| r.elapsed_seconds).collect();
        let modified = records.iter().filter(|r| r.modified).count();
        Self {
            count: records.len(),
            modified,
            unmodified: records.len() - modified,
            op_count: MeanStd::of(&ops),
            elapsed_seconds: MeanStd::of(&secs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusExport {
    pub records: Vec<ExportRecord>,
    pub summary: ExportSummary,
}

impl CorpusExport {
    pub fn from_records(records: Vec<ExportRecord>) -> Self {
        let summary = ExportSummary::of(&records);
        Self { records, summary }
    }
}

/// All sessions of one service instance.
pub struct SessionStore {
    stats: CorpusStats,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    journal: Option<Mutex<Journal>>,
    clock: Arc<dyn Clock>,
    next_seq: AtomicU64,
}

impl std::fmt::Debug for SessionStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionStore").field("journaled", &self.journal.is_some()).finish_non_exhaustive()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl SessionStore {
    /// Store without persistence.
    pub fn in_memory(stats: CorpusStats, clock: Arc<dyn Clock>) -> Self {
        Self { stats, sessions: RwLock::default(), journal: None, clock, next_seq: AtomicU64::new(0) }
    }

    /// Opens (or creates) the journal in `dir` and replays it.
    pub fn open(dir: &Path, stats: CorpusStats, clock: Arc<dyn Clock>) -> Result<Self, SessionError> {
        let (journal, entries) = Journal::open(dir)?;
        let mut store = Self::in_memory(stats, clock);
        store.replay(entries)?;
        store.journal = Some(Mutex::new(journal));
        Ok(store)
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    fn replay(&mut self, entries: Vec<JournalEntry>) -> Result<(), SessionError> {
        let sessions = self.sessions.get_mut().unwrap_or_else(|p| p.into_inner());
        for (i, entry) in entries.into_iter().enumerate() {
            let corrupt = |message: String| SessionError::CorruptJournal { line: i + 1, message };
            match entry {
                JournalEntry::Created { session_id, created_at_ms, reference_audio, backend, baseline } => {
                    baseline.validate().map_err(|e| corrupt(e.to_string()))?;
                    let state = EditState::new(baseline, &self.stats).map_err(|e| corrupt(e.to_string()))?;
                    let session = Session {
                        id: session_id.clone(),
                        reference_audio,
                        backend,
                        created_at_ms,
                        state,
                        log: Vec::new(),
                        submission: None,
                    };
                    sessions.insert(session_id, Arc::new(Mutex::new(session)));
                }
                JournalEntry::Op { session_id, op } => {
                    let session =
                        sessions.get(&session_id).ok_or_else(|| corrupt(format!("unknown session {session_id}")))?;
                    lock(session).apply(&op).map_err(|e| corrupt(e.to_string()))?;
                }
                JournalEntry::Submitted { session_id, submitted_at_ms, confidence } => {
                    let session =
                        sessions.get(&session_id).ok_or_else(|| corrupt(format!("unknown session {session_id}")))?;
                    let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
                    lock(session).submission = Some(Submission { at_ms: submitted_at_ms, seq, confidence });
                }
            }
        }
        Ok(())
    }

    fn append(&self, entry: &JournalEntry) -> Result<(), SessionError> {
        match &self.journal {
            Some(j) => lock(j).append(entry),
            None => Ok(()),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn create(
        &self,
        baseline: UtteranceTrack,
        reference_audio: Option<PathBuf>,
        backend: Option<SynthBackend>,
    ) -> Result<String, SessionError> {
        baseline.validate()?;
        let state = EditState::new(baseline.clone(), &self.stats)?;
        let id = uuid::Uuid::new_v4().to_string();
        let created_at_ms = self.clock.now_ms();
        self.append(&JournalEntry::Created {
            session_id: id.clone(),
            created_at_ms,
            reference_audio: reference_audio.clone(),
            backend: backend.clone(),
            baseline,
        })?;
        let session = Session {
            id: id.clone(),
            reference_audio,
            backend,
            created_at_ms,
            state,
            log: Vec::new(),
            submission: None,
        };
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn view(&self, id: &str) -> Result<SessionView, SessionError> {
        Ok(lock(&*self.session(id)?).view())
    }

    fn log_op(&self, id: &str, op: SessionOp) -> Result<EditOutcome, SessionError> {
        let handle = self.session(id)?;
        let mut session = lock(&handle);
        if session.submission.is_some() {
            return Err(SessionError::Submitted);
        }
        let elapsed = self.clock.now_ms().saturating_sub(session.created_at_ms);
        let wall_time_ms = elapsed.max(session.log.last().map_or(0, |o| o.wall_time_ms));
        let logged = LoggedOp { op, wall_time_ms };
        let mut next = session.clone();
        next.apply(&logged)?;
        self.append(&JournalEntry::Op { session_id: id.to_string(), op: logged })?;
        *session = next;
        Ok(EditOutcome {
            op_count: session.log.len(),
            current: session.state.render(),
            sliders: session.state.sliders(),
        })
    }

    pub fn apply_edit(&self, id: &str, edit: Edit) -> Result<EditOutcome, SessionError> {
        self.log_op(id, SessionOp::Edit { edit })
    }

    pub fn reset(&self, id: &str) -> Result<EditOutcome, SessionError> {
        self.log_op(id, SessionOp::Reset)
    }

    pub fn submit(&self, id: &str, confidence: Option<Confidence>) -> Result<ExportRecord, SessionError> {
        let handle = self.session(id)?;
        let mut session = lock(&handle);
        if session.submission.is_some() {
            return Err(SessionError::Submitted);
        }
        let confidence = confidence.ok_or(SessionError::MissingConfidence)?;
        let submitted_at_ms = self.clock.now_ms().max(session.created_at_ms);
        self.append(&JournalEntry::Submitted { session_id: id.to_string(), submitted_at_ms, confidence })?;
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
        session.submission = Some(Submission { at_ms: submitted_at_ms, seq, confidence });
        Ok(session.record().expect("just submitted"))
    }

    /// Baseline and current track, for audio rendering.
    pub fn tracks(&self, id: &str) -> Result<(UtteranceTrack, UtteranceTrack), SessionError> {
        let handle = self.session(id)?;
        let session = lock(&handle);
        Ok((session.state.baseline().clone(), session.state.render()))
    }

    pub fn reference_audio(&self, id: &str) -> Result<Option<PathBuf>, SessionError> {
        Ok(lock(&*self.session(id)?).reference_audio.clone())
    }

    pub fn backend(&self, id: &str) -> Result<Option<SynthBackend>, SessionError> {
        Ok(lock(&*self.session(id)?).backend.clone())
    }

    /// Submitted sessions in submission order.
    pub fn export(&self, filter: &ExportFilter) -> CorpusExport {
        let handles: Vec<_> = self.sessions.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
        let mut keyed: Vec<((u64, u64), ExportRecord)> = handles
            .iter()
            .filter_map(|h| {
                let s = lock(h);
                let sub = s.submission.as_ref()?;
                Some(((sub.at_ms, sub.seq), s.record()?))
            })
            .filter(|(_, r)| filter.admits(r))
            .collect();
        keyed.sort_by_key(|(k, _)| *k);
        CorpusExport::from_records(keyed.into_iter().map(|(_, r)| r).collect())
    }

    /// Rebuilds a session's current track from its baseline and op log.
    pub fn replay_current(&self, id: &str) -> Result<UtteranceTrack, SessionError> {
        let handle = self.session(id)?;
        let session = lock(&handle);
        let mut state = EditState::new(session.state.baseline().clone(), &self.stats)?;
        for op in &session.log {
            match &op.op {
                SessionOp::Edit { edit } => state.apply(edit)?,
                SessionOp::Reset => state.reset(),
            }
        }
        Ok(state.render())
    }
}
