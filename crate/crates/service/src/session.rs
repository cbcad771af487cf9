//! Sessions as folds over an append-only event log, one JSONL file each.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::rngs::OsRng;
use rand::RngCore;
use rulechat_core::dialog::{make_utterance, Answer, Reply};
use rulechat_core::pipeline::{step, AgentResponse, Components, SessionState};
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::ServiceError;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// 128 random bits from the OS, hex encoded.
pub fn new_session_id() -> String {
    let mut b = [0u8; 16];
    OsRng.fill_bytes(&mut b);
    b.iter().map(|x| format!("{x:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The agent asks follow-ups; the rule text is not shown.
    Agent,
    /// Control arm: the user reads the rule text and concludes alone.
    Reading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingUser,
    Finished,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        rule_id: String,
        question: String,
        scenario: String,
        mode: Mode,
        item_id: Option<String>,
        gold: Option<Reply>,
        at_ms: u64,
    },
    Agent { response: AgentResponse, at_ms: u64 },
    Reply { reply: Reply, at_ms: u64 },
    Conclusion { answer: Reply, correct: Option<bool>, elapsed_ms: f64, at_ms: u64 },
    Aborted { reason: String, at_ms: u64 },
}

impl Event {
    fn at_ms(&self) -> u64 {
        match self {
            Event::Created { at_ms, .. }
            | Event::Agent { at_ms, .. }
            | Event::Reply { at_ms, .. }
            | Event::Conclusion { at_ms, .. }
            | Event::Aborted { at_ms, .. } => *at_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Agent,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub text: String,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conclusion {
    pub answer: Reply,
    pub correct: Option<bool>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub rule_id: String,
    pub question: String,
    pub scenario: String,
    pub mode: Mode,
    pub item_id: Option<String>,
    pub gold: Option<Reply>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
    pub status: Status,
    pub state: Option<SessionState>,
    pub transcript: Vec<TranscriptEntry>,
    pub final_answer: Option<Answer>,
    pub conclusion: Option<Conclusion>,
    pub abort_reason: Option<String>,
    pub events: Vec<Event>,
}

impl Session {
    fn from_created(ev: &Event, catalog: &Catalog) -> Result<Self, ServiceError> {
        let Event::Created { session_id, rule_id, question, scenario, mode, item_id, gold, at_ms } = ev else {
            return Err(ServiceError::Corrupt("log does not start with a created event".into()));
        };
        let entry = catalog.entries.get(rule_id).ok_or_else(|| ServiceError::NotFound(format!("rule {rule_id}")))?;
        let state = match mode {
            Mode::Agent => {
                let mut u = make_utterance(question, &entry.rule_text, vec![], scenario)
                    .map_err(|e| ServiceError::Validation(e.to_string()))?;
                u.tree_id = rule_id.clone();
                u.source_url = entry.source_url.clone();
                Some(SessionState::new(u, entry.logic.clone()))
            }
            Mode::Reading => None,
        };
        Ok(Self {
            session_id: session_id.clone(),
            rule_id: rule_id.clone(),
            question: question.clone(),
            scenario: scenario.clone(),
            mode: *mode,
            item_id: item_id.clone(),
            gold: *gold,
            created_at_ms: *at_ms,
            updated_at_ms: *at_ms,
            status: Status::AwaitingUser,
            state,
            transcript: vec![TranscriptEntry { speaker: Speaker::User, text: question.clone(), at_ms: *at_ms }],
            final_answer: None,
            conclusion: None,
            abort_reason: None,
            events: vec![ev.clone()],
        })
    }

    /// The follow-up the user is expected to answer, if any.
    pub fn pending_followup(&self) -> Option<&str> {
        self.state.as_ref().and_then(|s| s.pending.as_deref())
    }

    fn apply_agent(&mut self, response: &AgentResponse, at_ms: u64) {
        self.transcript.push(TranscriptEntry { speaker: Speaker::Agent, text: response.answer.as_str().to_string(), at_ms });
        if response.answer.is_terminal() {
            self.final_answer = Some(response.answer.clone());
            self.status = Status::Finished;
        }
    }

    /// Applies a logged event. Agent events are recomputed with the pipeline
    /// and must match what was logged.
    fn replay(&mut self, ev: &Event, c: Components<'_>) -> Result<(), ServiceError> {
        match ev {
            Event::Created { .. } => return Err(ServiceError::Corrupt("second created event".into())),
            Event::Agent { response, at_ms } => {
                let state = self.state.as_mut().ok_or_else(|| ServiceError::Corrupt("agent event in reading session".into()))?;
                let again = step(state, c).map_err(|e| ServiceError::Corrupt(format!("replay failed: {e}")))?;
                if again != *response {
                    return Err(ServiceError::Corrupt("replayed agent response differs from the log".into()));
                }
                self.apply_agent(response, *at_ms);
            }
            Event::Reply { reply, at_ms } => {
                let state = self.state.as_mut().ok_or_else(|| ServiceError::Corrupt("reply in reading session".into()))?;
                state.record_reply(*reply).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
                self.transcript.push(TranscriptEntry { speaker: Speaker::User, text: reply.to_string(), at_ms: *at_ms });
            }
            Event::Conclusion { answer, correct, elapsed_ms, .. } => {
                self.conclusion = Some(Conclusion { answer: *answer, correct: *correct, elapsed_ms: *elapsed_ms });
                self.status = Status::Finished;
            }
            Event::Aborted { reason, .. } => {
                self.status = Status::Aborted;
                self.abort_reason = Some(reason.clone());
            }
        }
        self.updated_at_ms = self.updated_at_ms.max(ev.at_ms());
        self.events.push(ev.clone());
        Ok(())
    }
}

/// Event log directory plus the in-memory fold.
#[derive(Debug, Clone)]
pub struct SessionLog {
    dir: PathBuf,
}

impl SessionLog {
    pub fn new(data_dir: &Path) -> Result<Self, ServiceError> {
        let dir = data_dir.join("sessions");
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::Startup(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn append(&self, id: &str, ev: &Event) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(ev).map_err(|e| ServiceError::Io(e.to_string()))?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(id)).map_err(|e| ServiceError::Io(e.to_string()))?;
        f.write_all(&line).and_then(|_| f.sync_data()).map_err(|e| ServiceError::Io(e.to_string()))
    }

    /// Rebuilds every logged session.
    pub fn load_all(&self, catalog: &Catalog, c: Components<'_>) -> Result<Vec<Session>, ServiceError> {
        let mut out = Vec::new();
        let entries = std::fs::read_dir(&self.dir).map_err(|e| ServiceError::Io(e.to_string()))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "jsonl")).collect();
        paths.sort();
        for p in paths {
            match Self::load_one(&p, catalog, c) {
                Ok(s) => out.push(s),
                Err(e) => tracing::warn!("skipping {}: {e}", p.display()),
            }
        }
        Ok(out)
    }

    fn load_one(path: &Path, catalog: &Catalog, c: Components<'_>) -> Result<Session, ServiceError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ServiceError::Io(e.to_string()))?;
        let mut events = raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<Event>(l).map_err(|e| ServiceError::Corrupt(e.to_string())));
        let first = events.next().ok_or_else(|| ServiceError::Corrupt("empty log".into()))??;
        let mut s = Session::from_created(&first, catalog)?;
        for ev in events {
            s.replay(&ev?, c)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewSession {
    pub rule_id: String,
    pub question: String,
    pub scenario: String,
    pub mode: Mode,
    pub item_id: Option<String>,
    pub gold: Option<Reply>,
}

/// Live operations; every change is logged before it is applied.
impl Session {
    pub fn create(log: &SessionLog, catalog: &Catalog, c: Components<'_>, req: NewSession) -> Result<Self, ServiceError> {
        if !catalog.entries.contains_key(&req.rule_id) {
            return Err(ServiceError::NotFound(format!("rule {}", req.rule_id)));
        }
        if req.question.trim().is_empty() {
            return Err(ServiceError::Validation("question must not be empty".into()));
        }
        let mode = req.mode;
        let ev = Event::Created {
            session_id: new_session_id(),
            rule_id: req.rule_id,
            question: req.question,
            scenario: req.scenario,
            mode,
            item_id: req.item_id,
            gold: req.gold,
            at_ms: now_ms(),
        };
        let mut s = Session::from_created(&ev, catalog)?;
        log.append(&s.session_id, &ev)?;
        if mode == Mode::Agent {
            s.advance(log, c)?;
        }
        Ok(s)
    }

    fn push(&mut self, log: &SessionLog, ev: Event) -> Result<(), ServiceError> {
        log.append(&self.session_id, &ev)?;
        self.updated_at_ms = self.updated_at_ms.max(ev.at_ms());
        self.events.push(ev);
        Ok(())
    }

    fn advance(&mut self, log: &SessionLog, c: Components<'_>) -> Result<AgentResponse, ServiceError> {
        let state = self.state.as_mut().expect("agent session");
        match step(state, c) {
            Ok(response) => {
                let at_ms = now_ms();
                self.push(log, Event::Agent { response: response.clone(), at_ms })?;
                self.apply_agent(&response, at_ms);
                Ok(response)
            }
            Err(e) => {
                self.abort(log, &format!("pipeline error: {e}"))?;
                Err(ServiceError::Pipeline(e.to_string()))
            }
        }
    }

    pub fn abort(&mut self, log: &SessionLog, reason: &str) -> Result<(), ServiceError> {
        self.push(log, Event::Aborted { reason: reason.into(), at_ms: now_ms() })?;
        self.status = Status::Aborted;
        self.abort_reason = Some(reason.into());
        Ok(())
    }

    pub fn reply(&mut self, log: &SessionLog, c: Components<'_>, reply: Reply) -> Result<AgentResponse, ServiceError> {
        match self.status {
            Status::Finished => return Err(ServiceError::Conflict("session is finished".into())),
            Status::Aborted => return Err(ServiceError::Conflict("session was aborted".into())),
            Status::AwaitingUser => {}
        }
        if self.pending_followup().is_none() {
            return Err(ServiceError::Conflict("no follow-up question is pending".into()));
        }
        let at_ms = now_ms();
        self.push(log, Event::Reply { reply, at_ms })?;
        self.state.as_mut().expect("pending implies agent").record_reply(reply).expect("pending checked");
        self.transcript.push(TranscriptEntry { speaker: Speaker::User, text: reply.to_string(), at_ms });
        self.advance(log, c)
    }

    /// Records the user's own conclusion. `client_elapsed_ms`, measured by
    /// the client, is preferred over the server's clock when given.
    pub fn conclude(&mut self, log: &SessionLog, answer: Reply, client_elapsed_ms: Option<f64>) -> Result<Conclusion, ServiceError> {
        if self.conclusion.is_some() {
            return Err(ServiceError::Conflict("conclusion already submitted".into()));
        }
        if self.status == Status::Aborted {
            return Err(ServiceError::Conflict("session was aborted".into()));
        }
        let at_ms = now_ms();
        let server_ms = (at_ms.saturating_sub(self.created_at_ms) as f64).max(f64::MIN_POSITIVE);
        let elapsed_ms = match client_elapsed_ms {
            Some(ms) if ms.is_finite() && ms > 0.0 => ms,
            Some(_) => return Err(ServiceError::Validation("elapsed_ms must be positive".into())),
            None => server_ms,
        };
        let correct = self.gold.map(|g| g == answer);
        self.push(log, Event::Conclusion { answer, correct, elapsed_ms, at_ms })?;
        let c = Conclusion { answer, correct, elapsed_ms };
        self.conclusion = Some(c.clone());
        self.status = Status::Finished;
        Ok(c)
    }

    /// Aborts a session left waiting longer than `timeout`. Returns whether
    /// it expired.
    pub fn expire_if_idle(&mut self, log: &SessionLog, now: u64, timeout: Duration) -> Result<bool, ServiceError> {
        if self.status == Status::AwaitingUser && now.saturating_sub(self.updated_at_ms) > timeout.as_millis() as u64 {
            self.abort(log, "idle timeout")?;
            return Ok(true);
        }
        Ok(false)
    }
}
