//! Append-only event log and the state folded from it.
//!
//! On disk a store is a directory holding `VERSION` (the text `1`) and
//! `events.log`, a sequence of records:
//!
//! ```text
//! [u32 LE payload length][payload: JSON {"seq", "kind", "payload"}][u32 LE CRC-32 of payload]
//! ```
//!
//! A damaged final record (a torn write) is cut off on open. Damage followed
//! by further intact records is reported as [`StoreError::CorruptLog`].

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use amity_core::{ChatSession, Turn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::User;
use crate::constellation::{Constellation, Group, GroupCreated, GroupError, Membership, Message};
use crate::content::{Content, ContentError};

pub const STORE_VERSION: &str = "1";
const LOG_FILE: &str = "events.log";
const VERSION_FILE: &str = "VERSION";
/// Upper bound on one record's payload; anything larger is damage.
const MAX_RECORD_BYTES: usize = 16 << 20;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("store version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt event log at byte {offset}: {reason}")]
    CorruptLog { offset: u64, reason: String },
    #[error("{0} not found")]
    NotFound(String),
    #[error(transparent)]
    Rejected(#[from] ApplyError),
}

/// Why an event cannot be applied to the current state.
#[derive(Debug, Error, PartialEq)]
pub enum ApplyError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("user {0} already registered")]
    DuplicateUser(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("session {0} already exists")]
    DuplicateSession(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("turn timestamp {timestamp} does not advance session {session_id}")]
    StaleTurn { session_id: String, timestamp: i64 },
    #[error(transparent)]
    Content(#[from] ContentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOpened {
    pub session_id: String,
    pub email: String,
    pub at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTurn {
    pub session_id: String,
    pub turn: Turn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    UserRegistered(User),
    GroupCreated(GroupCreated),
    MemberJoined(Membership),
    MemberExited(Membership),
    MessagePosted(Message),
    SessionOpened(SessionOpened),
    SessionTurn(SessionTurn),
    ContentSeeded(Content),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Everything the log describes. Equal logs fold to equal states, and the
/// serialized form is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StoreState {
    pub users: BTreeMap<String, User>,
    pub constellation: Constellation,
    pub sessions: BTreeMap<String, ChatSession>,
    /// Most recently opened session per user.
    pub active_sessions: BTreeMap<String, String>,
    pub content: Content,
}

impl StoreState {
    /// Checks that `event` can be applied, without changing anything.
    pub fn validate(&self, event: &Event) -> Result<(), ApplyError> {
        let c = &self.constellation;
        match event {
            Event::UserRegistered(u) => {
                if self.users.contains_key(&u.email) {
                    return Err(ApplyError::DuplicateUser(u.email.clone()));
                }
            }
            Event::GroupCreated(g) => {
                self.require_user(&g.admin)?;
                c.plan_create(&g.admin, &g.name, &g.group_id, g.created_at)?;
            }
            Event::MemberJoined(m) => {
                self.require_user(&m.email)?;
                c.plan_join(&m.email, &m.group_id, m.at)?;
            }
            Event::MemberExited(m) => {
                c.plan_exit(&m.email, &m.group_id, m.at)?;
            }
            Event::MessagePosted(m) => {
                let planned = c.plan_post(&m.sender, &m.group_id, &m.body, &m.message_id, m.timestamp)?;
                if planned.seq != m.seq {
                    return Err(GroupError::OutOfOrder {
                        expected: planned.seq,
                        found: m.seq,
                    }
                    .into());
                }
            }
            Event::SessionOpened(s) => {
                self.require_user(&s.email)?;
                if self.sessions.contains_key(&s.session_id) {
                    return Err(ApplyError::DuplicateSession(s.session_id.clone()));
                }
            }
            Event::SessionTurn(t) => {
                let session = self
                    .sessions
                    .get(&t.session_id)
                    .ok_or_else(|| ApplyError::UnknownSession(t.session_id.clone()))?;
                if session.next_timestamp(t.turn.timestamp) != t.turn.timestamp {
                    return Err(ApplyError::StaleTurn {
                        session_id: t.session_id.clone(),
                        timestamp: t.turn.timestamp,
                    });
                }
            }
            Event::ContentSeeded(content) => content.validate()?,
        }
        Ok(())
    }

    fn require_user(&self, email: &str) -> Result<(), ApplyError> {
        if self.users.contains_key(email) {
            Ok(())
        } else {
            Err(ApplyError::UnknownUser(email.to_string()))
        }
    }

    /// Folds one event in. Nothing changes when it is rejected.
    pub fn apply(&mut self, event: &Event) -> Result<(), ApplyError> {
        self.validate(event)?;
        match event {
            Event::UserRegistered(u) => {
                self.users.insert(u.email.clone(), u.clone());
            }
            Event::GroupCreated(g) => {
                self.constellation.apply_created(g)?;
            }
            Event::MemberJoined(m) => self.constellation.apply_joined(m)?,
            Event::MemberExited(m) => {
                self.constellation.apply_exited(m)?;
            }
            Event::MessagePosted(m) => self.constellation.apply_posted(m)?,
            Event::SessionOpened(s) => {
                self.sessions.insert(
                    s.session_id.clone(),
                    ChatSession {
                        session_id: s.session_id.clone(),
                        email: s.email.clone(),
                        turns: Vec::new(),
                    },
                );
                self.active_sessions.insert(s.email.clone(), s.session_id.clone());
            }
            Event::SessionTurn(t) => {
                let session = self.sessions.get_mut(&t.session_id).expect("validated");
                session.push(t.turn.clone());
            }
            Event::ContentSeeded(content) => self.content = content.clone(),
        }
        Ok(())
    }

    /// Deterministic byte form, used to compare states.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("state serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOptions {
    /// `fsync` after every append. Without it an acknowledged event survives
    /// a process crash but not a power loss.
    pub sync: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { sync: true }
    }
}

/// What `open` found in the log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Recovery {
    pub events: u64,
    /// Bytes of torn tail that were cut off.
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    file: File,
    len: u64,
    last_seq: u64,
    state: StoreState,
    options: StoreOptions,
    recovery: Recovery,
}

fn encode_record(record: &EventRecord) -> Vec<u8> {
    let payload = serde_json::to_vec(record).expect("event serializes");
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

/// A record starting at `at` whose framing and checksum are intact.
fn intact_record(bytes: &[u8], at: usize) -> Option<(&[u8], usize)> {
    let rest = &bytes[at..];
    if rest.len() < 8 {
        return None;
    }
    let len = u32::from_le_bytes(rest[..4].try_into().ok()?) as usize;
    if len > MAX_RECORD_BYTES || rest.len() < len + 8 {
        return None;
    }
    let payload = &rest[4..4 + len];
    let crc = u32::from_le_bytes(rest[4 + len..8 + len].try_into().ok()?);
    (crc32fast::hash(payload) == crc).then_some((payload, len + 8))
}

fn read_version(dir: &Path) -> Result<(), StoreError> {
    let path = dir.join(VERSION_FILE);
    match fs::read_to_string(&path) {
        Ok(v) if v.trim() == STORE_VERSION => Ok(()),
        Ok(v) => Err(StoreError::VersionMismatch(format!(
            "expected {STORE_VERSION}, found {:?}",
            v.trim()
        ))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            fs::write(&path, format!("{STORE_VERSION}\n"))?;
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Store, StoreError> {
        Store::open_with(dir, StoreOptions::default())
    }

    /// Opens (creating if needed) the store in `dir` and replays its log.
    pub fn open_with(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Store, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        read_version(&dir)?;

        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(dir.join(LOG_FILE))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut state = StoreState::default();
        let mut last_seq = 0;
        let mut at = 0;
        while at < bytes.len() {
            let Some((payload, size)) = intact_record(&bytes, at) else {
                break;
            };
            let corrupt = |reason: String| StoreError::CorruptLog {
                offset: at as u64,
                reason,
            };
            let record: EventRecord = serde_json::from_slice(payload)
                .map_err(|e| corrupt(format!("undecodable record: {e}")))?;
            if record.seq != last_seq + 1 {
                return Err(corrupt(format!(
                    "expected seq {}, found {}",
                    last_seq + 1,
                    record.seq
                )));
            }
            state
                .apply(&record.event)
                .map_err(|e| corrupt(format!("event {} rejected: {e}", record.seq)))?;
            last_seq = record.seq;
            at += size;
        }

        let mut recovery = Recovery {
            events: last_seq,
            truncated_bytes: 0,
        };
        if at < bytes.len() {
            // An intact record anywhere after the damage means this is not a
            // torn write.
            if let Some(later) = (at + 1..bytes.len()).find(|&i| intact_record(&bytes, i).is_some()) {
                return Err(StoreError::CorruptLog {
                    offset: at as u64,
                    reason: format!("damaged record followed by an intact one at byte {later}"),
                });
            }
            recovery.truncated_bytes = (bytes.len() - at) as u64;
            tracing::warn!(
                offset = at,
                dropped = recovery.truncated_bytes,
                "event log has a torn tail; truncating to the last intact record"
            );
            file.set_len(at as u64)?;
            file.sync_all()?;
        }

        Ok(Store {
            dir,
            file,
            len: at as u64,
            last_seq,
            state,
            options,
            recovery,
        })
    }

    /// Validates, writes and applies one event; returns its seq. The record
    /// is on disk (and synced, if configured) before this returns.
    pub fn append(&mut self, event: Event) -> Result<u64, StoreError> {
        self.state.validate(&event)?;
        let record = EventRecord {
            seq: self.last_seq + 1,
            event,
        };
        let bytes = encode_record(&record);
        let written = self.file.write_all(&bytes).and_then(|_| {
            if self.options.sync {
                self.file.sync_data()
            } else {
                Ok(())
            }
        });
        if let Err(e) = written {
            // Best effort: do not leave a partial record behind.
            let _ = self.file.set_len(self.len);
            return Err(e.into());
        }
        self.len += bytes.len() as u64;
        self.last_seq = record.seq;
        self.state.apply(&record.event).expect("validated above");
        Ok(record.seq)
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.file.sync_all()?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    /// Seq of the latest event (0 for an empty log).
    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn recovery(&self) -> Recovery {
        self.recovery
    }

    pub fn get_user(&self, email: &str) -> Result<&User, StoreError> {
        self.state
            .users
            .get(email)
            .ok_or_else(|| StoreError::NotFound(format!("user {email}")))
    }

    pub fn get_group(&self, group_id: &str) -> Result<&Group, StoreError> {
        self.state
            .constellation
            .group(group_id)
            .ok_or_else(|| StoreError::NotFound(format!("group {group_id}")))
    }

    pub fn messages(&self, group_id: &str, since_seq: u64) -> Result<&[Message], StoreError> {
        self.state
            .constellation
            .messages(group_id, since_seq)
            .map_err(|_| StoreError::NotFound(format!("group {group_id}")))
    }

    pub fn session(&self, session_id: &str) -> Result<&ChatSession, StoreError> {
        self.state
            .sessions
            .get(session_id)
            .ok_or_else(|| StoreError::NotFound(format!("session {session_id}")))
    }
}

/// Reads every intact record of a log without applying it; stops at the
/// first damaged one.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, StoreError> {
    let bytes = fs::read(path)?;
    let mut out = Vec::new();
    let mut at = 0;
    while let Some((payload, size)) = intact_record(&bytes, at) {
        out.push(serde_json::from_slice(payload).map_err(|e| StoreError::CorruptLog {
            offset: at as u64,
            reason: e.to_string(),
        })?);
        at += size;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use amity_core::Speaker;

    fn user(email: &str) -> Event {
        Event::UserRegistered(User {
            email: email.into(),
            name: "N".into(),
            password_hash: "$argon2id$stub".into(),
            created_at: 0,
        })
    }

    fn fast() -> StoreOptions {
        StoreOptions { sync: false }
    }

    #[test]
    fn empty_dir_gives_empty_state() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("s")).unwrap();
        assert_eq!(store.last_seq(), 0);
        assert_eq!(store.state(), &StoreState::default());
        assert_eq!(fs::read_to_string(dir.path().join("s/VERSION")).unwrap().trim(), "1");
    }

    #[test]
    fn appends_then_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_with(dir.path(), fast()).unwrap();
        assert_eq!(store.append(user("a@x.io")).unwrap(), 1);
        assert_eq!(store.append(user("b@x.io")).unwrap(), 2);
        store
            .append(Event::GroupCreated(GroupCreated {
                group_id: "g1".into(),
                name: "Group".into(),
                admin: "a@x.io".into(),
                created_at: 3,
            }))
            .unwrap();
        let before = store.state().to_json();
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.last_seq(), 3);
        assert_eq!(store.state().to_json(), before);
        let kinds: Vec<u64> = read_log(store.log_path()).unwrap().iter().map(|r| r.seq).collect();
        assert_eq!(kinds, [1, 2, 3]);
    }

    #[test]
    fn rejected_events_are_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_with(dir.path(), fast()).unwrap();
        store.append(user("a@x.io")).unwrap();
        let err = store.append(user("a@x.io")).unwrap_err();
        assert!(matches!(err, StoreError::Rejected(ApplyError::DuplicateUser(_))));
        let err = store
            .append(Event::MemberJoined(Membership {
                group_id: "nope".into(),
                email: "a@x.io".into(),
                at: 0,
            }))
            .unwrap_err();
        assert!(matches!(err, StoreError::Rejected(ApplyError::Group(GroupError::GroupNotFound))));
        assert_eq!(store.last_seq(), 1);
        assert_eq!(read_log(store.log_path()).unwrap().len(), 1);
    }

    #[test]
    fn queries() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_with(dir.path(), fast()).unwrap();
        assert!(matches!(store.get_user("a@x.io"), Err(StoreError::NotFound(_))));
        store.append(user("a@x.io")).unwrap();
        store.append(user("b@x.io")).unwrap();
        store
            .append(Event::GroupCreated(GroupCreated {
                group_id: "g".into(),
                name: "G".into(),
                admin: "a@x.io".into(),
                created_at: 0,
            }))
            .unwrap();
        store
            .append(Event::MemberJoined(Membership {
                group_id: "g".into(),
                email: "b@x.io".into(),
                at: 1,
            }))
            .unwrap();
        assert_eq!(store.get_group("g").unwrap().members, ["a@x.io", "b@x.io"]);
        for (i, sender) in ["a@x.io", "b@x.io", "a@x.io"].iter().enumerate() {
            let m = store
                .state()
                .constellation
                .plan_post(sender, "g", "hello", &format!("m{i}"), 2)
                .unwrap();
            store.append(Event::MessagePosted(m)).unwrap();
        }
        assert_eq!(store.messages("g", 0).unwrap().len(), 3);
        assert!(matches!(store.messages("x", 0), Err(StoreError::NotFound(_))));
        assert!(matches!(store.session("s"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn sessions_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_with(dir.path(), fast()).unwrap();
        store.append(user("a@x.io")).unwrap();
        store
            .append(Event::SessionOpened(SessionOpened {
                session_id: "s1".into(),
                email: "a@x.io".into(),
                at: 0,
            }))
            .unwrap();
        let turn = |speaker, ts| Turn {
            speaker,
            text: "hi".into(),
            tag: None,
            confidence: None,
            timestamp: ts,
        };
        store
            .append(Event::SessionTurn(SessionTurn {
                session_id: "s1".into(),
                turn: turn(Speaker::User, 10),
            }))
            .unwrap();
        let stale = store.append(Event::SessionTurn(SessionTurn {
            session_id: "s1".into(),
            turn: turn(Speaker::Bot, 10),
        }));
        assert!(matches!(stale, Err(StoreError::Rejected(ApplyError::StaleTurn { .. }))));
        let mut bot = turn(Speaker::Bot, 11);
        bot.confidence = Some(0.123456789012345);
        store
            .append(Event::SessionTurn(SessionTurn {
                session_id: "s1".into(),
                turn: bot,
            }))
            .unwrap();
        let before = store.session("s1").unwrap().clone();
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.session("s1").unwrap(), &before);
        assert_eq!(store.state().active_sessions["a@x.io"], "s1");
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_with(dir.path(), fast()).unwrap();
        for i in 0..3 {
            store.append(user(&format!("u{i}@x.io"))).unwrap();
        }
        let full = store.state().to_json();
        let log = store.log_path();
        drop(store);
        let good = fs::read(&log).unwrap();

        let mut torn = good.clone();
        torn.extend_from_slice(b"\x40\x00\x00\x00{\"seq\":4,\"ki");
        fs::write(&log, &torn).unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.last_seq(), 3);
        assert_eq!(store.recovery().truncated_bytes, (torn.len() - good.len()) as u64);
        assert_eq!(store.state().to_json(), full);
        drop(store);
        assert_eq!(fs::read(&log).unwrap(), good);
    }

    #[test]
    fn interior_damage_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_with(dir.path(), fast()).unwrap();
        for i in 0..3 {
            store.append(user(&format!("u{i}@x.io"))).unwrap();
        }
        let log = store.log_path();
        drop(store);
        let mut bytes = fs::read(&log).unwrap();
        bytes[10] ^= 0xff;
        fs::write(&log, &bytes).unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::CorruptLog { offset: 0, .. })));
    }

    #[test]
    fn seq_gap_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("VERSION"), "1").unwrap();
        let mut bytes = encode_record(&EventRecord { seq: 1, event: user("a@x.io") });
        bytes.extend(encode_record(&EventRecord { seq: 3, event: user("b@x.io") }));
        fs::write(dir.path().join(LOG_FILE), bytes).unwrap();
        let err = Store::open(dir.path()).unwrap_err();
        assert!(matches!(err, StoreError::CorruptLog { ref reason, .. } if reason.contains("seq")));
    }

    #[test]
    fn wrong_version_refused() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("VERSION"), "2\n").unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::VersionMismatch(_))));
    }

    #[test]
    fn record_layout() {
        let bytes = encode_record(&EventRecord { seq: 1, event: user("a@x.io") });
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), len + 8);
        let payload = std::str::from_utf8(&bytes[4..4 + len]).unwrap();
        assert!(payload.starts_with(r#"{"seq":1,"kind":"UserRegistered","payload":{"#));
        let crc = u32::from_le_bytes(bytes[4 + len..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(payload.as_bytes()));
    }
}
