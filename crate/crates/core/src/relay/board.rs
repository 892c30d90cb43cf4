use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use redb::{Database, ReadableDatabase, ReadableTable, TableDefinition};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::broadcast;

use crate::audit::Transcript;
use crate::protocol::{DrawRef, Message, Phase, Rejection, Session, SessionStatus};
use crate::specfile::SessionSetup;

const SESSIONS: TableDefinition<&str, &str> = TableDefinition::new("sessions");
/// `(session id, log index) → timestamp (u64 BE) ‖ MSGv1 wire bytes`.
const LOG: TableDefinition<(&str, u64), &[u8]> = TableDefinition::new("log");

/// Largest page `fetch_log` returns.
pub const MAX_PAGE: usize = 1000;

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} already exists with a different drawing context")]
    Conflict(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("rejected commitment: {0}")]
    Rejected(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl From<redb::Error> for RelayError {
    fn from(e: redb::Error) -> Self {
        RelayError::Storage(e.to_string())
    }
}

macro_rules! storage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for RelayError {
            fn from(e: $t) -> Self {
                RelayError::Storage(e.to_string())
            }
        }
    )*};
}
storage_from!(
    redb::DatabaseError,
    redb::TransactionError,
    redb::TableError,
    redb::StorageError,
    redb::CommitError
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: u64,
    /// Server receipt time, milliseconds since the Unix epoch. Advisory only.
    pub timestamp: u64,
    pub message: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub index: u64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub messages: Vec<LogEntry>,
    pub next_index: u64,
}

/// Phase summary recomputed from the log on every request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardStatus {
    pub session_id: String,
    pub log_length: u64,
    #[serde(flatten)]
    pub status: SessionStatus,
    pub incidents: Vec<Rejection>,
    /// Suggested per-phase timeout for clients; the relay enforces none.
    pub advisory_timeout_secs: u64,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Hex SHA-256 of the rendered DID list, e.g. of `"X#0,X#1"`.
pub fn session_id(setup: &SessionSetup) -> String {
    crate::hex(&Sha256::digest(DrawRef::of(&setup.session).render().as_bytes()))
}

struct Board {
    setup: SessionSetup,
    /// Append-only. Guarded separately from the append lock so readers
    /// never wait on a storage write.
    log: RwLock<Arc<Vec<LogEntry>>>,
    append: Mutex<HashMap<Vec<u8>, Receipt>>,
    notify: broadcast::Sender<LogEntry>,
    #[cfg(feature = "fault-injection")]
    faults: Mutex<Faults>,
}

#[cfg(feature = "fault-injection")]
#[derive(Default)]
struct Faults {
    drop: std::collections::BTreeSet<u64>,
    substitute: std::collections::BTreeMap<u64, Message>,
}

impl Board {
    fn new(setup: SessionSetup, log: Vec<LogEntry>) -> Self {
        let seen = log
            .iter()
            .map(|e| (e.message.to_wire(), Receipt { index: e.index, timestamp: e.timestamp }))
            .collect();
        Self {
            setup,
            log: RwLock::new(Arc::new(log)),
            append: Mutex::new(seen),
            notify: broadcast::channel(256).0,
            #[cfg(feature = "fault-injection")]
            faults: Mutex::new(Faults::default()),
        }
    }

    fn snapshot(&self) -> Arc<Vec<LogEntry>> {
        self.log.read().expect("log lock").clone()
    }
}

/// The untrusted message board: one append-only log per session, optionally
/// persisted in an embedded database.
pub struct Relay {
    boards: RwLock<HashMap<String, Arc<Board>>>,
    db: Option<Database>,
    timeout_secs: u64,
}

impl Relay {
    pub fn in_memory(timeout_secs: u64) -> Self {
        Self { boards: RwLock::new(HashMap::new()), db: None, timeout_secs }
    }

    /// Opens (or creates) `dir/relay.redb` and reloads every board.
    pub fn open(dir: &Path, timeout_secs: u64) -> Result<Self, RelayError> {
        std::fs::create_dir_all(dir).map_err(|e| RelayError::Storage(e.to_string()))?;
        let db = Database::create(dir.join("relay.redb"))?;
        let txn = db.begin_write()?;
        txn.open_table(SESSIONS)?;
        txn.open_table(LOG)?;
        txn.commit()?;

        let mut setups = HashMap::new();
        let mut logs: HashMap<String, Vec<LogEntry>> = HashMap::new();
        {
            let read = db.begin_read()?;
            for row in read.open_table(SESSIONS)?.iter()? {
                let (id, json) = row?;
                let setup: SessionSetup = serde_json::from_str(json.value())
                    .map_err(|e| RelayError::Storage(format!("session {}: {e}", id.value())))?;
                setups.insert(id.value().to_string(), setup);
            }
            for row in read.open_table(LOG)?.iter()? {
                let (key, record) = row?;
                let (id, index) = key.value();
                let record = record.value();
                let (ts, wire) = record.split_at(8);
                let message = Message::from_wire(wire)
                    .map_err(|e| RelayError::Storage(format!("log {id}#{index}: {e}")))?;
                let timestamp = u64::from_be_bytes(ts.try_into().expect("8 bytes"));
                logs.entry(id.to_string()).or_default().push(LogEntry { index, timestamp, message });
            }
        }
        let boards = setups
            .into_iter()
            .map(|(id, setup)| {
                let log = logs.remove(&id).unwrap_or_default();
                (id, Arc::new(Board::new(setup, log)))
            })
            .collect();
        Ok(Self { boards: RwLock::new(boards), db: Some(db), timeout_secs })
    }

    fn board(&self, id: &str) -> Result<Arc<Board>, RelayError> {
        self.boards
            .read()
            .expect("boards lock")
            .get(id)
            .cloned()
            .ok_or_else(|| RelayError::UnknownSession(id.to_string()))
    }

    /// Idempotent for an identical context.
    pub fn create_session(&self, setup: SessionSetup) -> Result<String, RelayError> {
        let id = session_id(&setup);
        let mut boards = self.boards.write().expect("boards lock");
        if let Some(b) = boards.get(&id) {
            return if b.setup == setup { Ok(id) } else { Err(RelayError::Conflict(id)) };
        }
        if let Some(db) = &self.db {
            let json = serde_json::to_string(&setup).expect("setup serializes");
            let txn = db.begin_write()?;
            txn.open_table(SESSIONS)?.insert(id.as_str(), json.as_str())?;
            txn.commit()?;
        }
        boards.insert(id.clone(), Arc::new(Board::new(setup, Vec::new())));
        Ok(id)
    }

    pub fn setup(&self, id: &str) -> Result<SessionSetup, RelayError> {
        Ok(self.board(id)?.setup.clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.boards.read().expect("boards lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Appends `msg`. Commitments must verify under the session context;
    /// reveals are stored unchecked so that bad openings remain on record.
    pub fn post_message(&self, id: &str, msg: Message) -> Result<Receipt, RelayError> {
        let board = self.board(id)?;
        let target = &board.setup.session;
        if !target.has_stakeholder(msg.sender()) {
            return Err(RelayError::Rejected(format!("{} is not a stakeholder", msg.sender())));
        }
        match &msg {
            Message::Commit(c) => {
                let expected = DrawRef::of(target);
                if c.draw_ref != expected {
                    return Err(RelayError::Rejected(format!(
                        "commitment for {} posted to {}",
                        c.draw_ref.render(),
                        expected.render()
                    )));
                }
                let key = board.setup.keys.get(&c.sender).expect("keys cover stakeholders");
                match c.verify(target, key) {
                    Ok(true) => {}
                    Ok(false) => return Err(RelayError::Rejected("signature does not verify".into())),
                    Err(e) => return Err(RelayError::Rejected(e.to_string())),
                }
            }
            Message::Reveal(r) if r.shares.len() != target.share_count() => {
                return Err(RelayError::Malformed(format!(
                    "{} shares for {} drawings",
                    r.shares.len(),
                    target.share_count()
                )));
            }
            Message::Reveal(_) => {}
        }

        let wire = msg.to_wire();
        let mut seen = board.append.lock().expect("append lock");
        if let Some(r) = seen.get(&wire) {
            return Ok(*r);
        }
        let index = board.snapshot().len() as u64;
        let receipt = Receipt { index, timestamp: now_ms() };
        if let Some(db) = &self.db {
            let mut record = receipt.timestamp.to_be_bytes().to_vec();
            record.extend_from_slice(&wire);
            let txn = db.begin_write()?;
            txn.open_table(LOG)?.insert((id, index), record.as_slice())?;
            txn.commit()?;
        }
        let entry = LogEntry { index, timestamp: receipt.timestamp, message: msg };
        {
            let mut log = board.log.write().expect("log lock");
            let mut next = Vec::clone(&log);
            next.push(entry.clone());
            *log = Arc::new(next);
        }
        seen.insert(wire, receipt);
        drop(seen);
        let _ = board.notify.send(entry);
        Ok(receipt)
    }

    /// Entries at `from` and after, at most `limit` (capped at [`MAX_PAGE`]).
    pub fn fetch_log(&self, id: &str, from: u64, limit: Option<usize>) -> Result<Page, RelayError> {
        let log = self.board(id)?.snapshot();
        let start = (from as usize).min(log.len());
        let end = start + limit.unwrap_or(MAX_PAGE).min(MAX_PAGE).min(log.len() - start);
        Ok(Page { messages: log[start..end].to_vec(), next_index: end as u64 })
    }

    pub fn subscribe(&self, id: &str) -> Result<broadcast::Receiver<LogEntry>, RelayError> {
        Ok(self.board(id)?.notify.subscribe())
    }

    pub fn export_transcript(&self, id: &str) -> Result<Transcript, RelayError> {
        let board = self.board(id)?;
        let mut t = Transcript::new(&board.setup, true);
        for e in board.snapshot().iter() {
            #[cfg(feature = "fault-injection")]
            let e = {
                let faults = board.faults.lock().expect("fault lock");
                if faults.drop.contains(&e.index) {
                    continue;
                }
                match faults.substitute.get(&e.index) {
                    Some(m) => LogEntry { message: m.clone(), ..e.clone() },
                    None => e.clone(),
                }
            };
            t.push(e.timestamp, e.message.clone());
        }
        Ok(t)
    }

    pub fn status(&self, id: &str) -> Result<BoardStatus, RelayError> {
        let board = self.board(id)?;
        let log = board.snapshot();
        let mut session =
            Session::observe(board.setup.session.clone(), board.setup.keys.clone()).expect("setup validated");
        for e in log.iter() {
            let _ = session.receive(&e.message);
        }
        Ok(BoardStatus {
            session_id: id.to_string(),
            log_length: log.len() as u64,
            status: session.status(),
            incidents: session.incidents().to_vec(),
            advisory_timeout_secs: self.timeout_secs,
        })
    }

    /// Phase the log implies, for quick checks.
    pub fn phase(&self, id: &str) -> Result<Phase, RelayError> {
        Ok(self.status(id)?.status.phase)
    }
}

#[cfg(feature = "fault-injection")]
impl Relay {
    /// Omits log entry `index` from exported transcripts.
    pub fn inject_drop(&self, id: &str, index: u64) -> Result<(), RelayError> {
        self.board(id)?.faults.lock().expect("fault lock").drop.insert(index);
        Ok(())
    }

    /// Serves `msg` in place of log entry `index` in exported transcripts.
    pub fn inject_substitute(&self, id: &str, index: u64, msg: Message) -> Result<(), RelayError> {
        self.board(id)?.faults.lock().expect("fault lock").substitute.insert(index, msg);
        Ok(())
    }
}
