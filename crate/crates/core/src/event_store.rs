//! Append-only, hash-chained event log.
//!
//! Each line of `events.jsonl` is one canonical-JSON event. The hash of event
//! `n` is `SHA-256(prev_hash ++ canonical(event without hash))`, where
//! `prev_hash` is the 64 ASCII hex characters of event `n-1`'s hash (64 zeros
//! for the genesis event).

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::canonical::{self, CanonicalError};

pub const GENESIS_PREV_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub type Payload = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunInitialized,
    TaskClaimed,
    TaskCompleted,
    TaskBlocked,
    TaskUnblocked,
    FindingRecorded,
    ArtifactWritten,
    PhaseAdvanced,
    VerificationRecorded,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::RunInitialized => "run_initialized",
            EventKind::TaskClaimed => "task_claimed",
            EventKind::TaskCompleted => "task_completed",
            EventKind::TaskBlocked => "task_blocked",
            EventKind::TaskUnblocked => "task_unblocked",
            EventKind::FindingRecorded => "finding_recorded",
            EventKind::ArtifactWritten => "artifact_written",
            EventKind::PhaseAdvanced => "phase_advanced",
            EventKind::VerificationRecorded => "verification_recorded",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An event before it is sealed into the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBody {
    pub timestamp: String,
    pub actor: String,
    pub kind: EventKind,
    pub payload: Payload,
}

impl EventBody {
    pub fn new(timestamp: impl Into<String>, actor: impl Into<String>, kind: EventKind, payload: Payload) -> Self {
        Self {
            timestamp: timestamp.into(),
            actor: actor.into(),
            kind,
            payload,
        }
    }
}

/// One admitted fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub sequence: u64,
    pub timestamp: String,
    pub actor: String,
    pub kind: EventKind,
    pub payload: Payload,
    pub prev_hash: String,
    pub hash: String,
}

/// Borrowed view of an event with the `hash` field absent.
#[derive(Debug, Serialize)]
pub struct UnsealedEvent<'a> {
    pub sequence: u64,
    pub timestamp: &'a str,
    pub actor: &'a str,
    pub kind: EventKind,
    pub payload: &'a Payload,
    pub prev_hash: &'a str,
}

impl Event {
    pub fn unsealed(&self) -> UnsealedEvent<'_> {
        UnsealedEvent {
            sequence: self.sequence,
            timestamp: &self.timestamp,
            actor: &self.actor,
            kind: self.kind,
            payload: &self.payload,
            prev_hash: &self.prev_hash,
        }
    }

    pub fn body(&self) -> EventBody {
        EventBody::new(
            self.timestamp.clone(),
            self.actor.clone(),
            self.kind,
            self.payload.clone(),
        )
    }

    pub fn payload_str(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }

    /// Recomputes the hash from the event content.
    pub fn compute_hash(&self) -> Result<String, CanonicalError> {
        let bytes = canonical_bytes(&self.unsealed())?;
        Ok(chain_hash(&self.prev_hash, &bytes))
    }
}

/// Canonical encoding of an event without its hash.
pub fn canonical_bytes(event: &UnsealedEvent<'_>) -> Result<Vec<u8>, CanonicalError> {
    canonical::to_canonical_bytes(event)
}

pub fn chain_hash(prev_hash: &str, canonical_event: &[u8]) -> String {
    let mut buf = Vec::with_capacity(prev_hash.len() + canonical_event.len());
    buf.extend_from_slice(prev_hash.as_bytes());
    buf.extend_from_slice(canonical_event);
    canonical::sha256_hex(&buf)
}

/// Seals `body` as the successor of `prev_hash` at `sequence`.
pub fn seal(body: EventBody, sequence: u64, prev_hash: &str) -> Result<Event, CanonicalError> {
    let mut event = Event {
        sequence,
        timestamp: body.timestamp,
        actor: body.actor,
        kind: body.kind,
        payload: body.payload,
        prev_hash: prev_hash.to_string(),
        hash: String::new(),
    };
    event.hash = event.compute_hash()?;
    Ok(event)
}

pub fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: expected sequence {expected}, found {found}")]
    Gap { line: usize, expected: u64, found: u64 },
    #[error("event log {0} already exists")]
    AlreadyExists(PathBuf),
    #[error("event log chain is invalid at sequence {0}")]
    ChainInvalid(u64),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

impl StoreError {
    /// Sequence number of the first event the error implicates, if any.
    pub fn implicated_sequence(&self) -> Option<u64> {
        match self {
            StoreError::Parse { line, .. } | StoreError::Gap { line, .. } => Some(*line as u64 - 1),
            StoreError::ChainInvalid(seq) => Some(*seq),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses one stored line. Lines must be byte-identical to their canonical re-encoding.
fn parse_line(raw: &[u8], line: usize) -> Result<Event, StoreError> {
    let parse_err = |reason: String| StoreError::Parse { line, reason };
    let text = std::str::from_utf8(raw).map_err(|e| parse_err(format!("invalid UTF-8: {e}")))?;
    let event: Event = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    if event.actor.is_empty() {
        return Err(parse_err("empty actor".into()));
    }
    if !is_hex_digest(&event.prev_hash) || !is_hex_digest(&event.hash) {
        return Err(parse_err("hash fields must be 64 lowercase hex characters".into()));
    }
    let reencoded = canonical::to_canonical_bytes(&event).map_err(|e| parse_err(e.to_string()))?;
    if reencoded != raw {
        return Err(parse_err("record is not in canonical form".into()));
    }
    Ok(event)
}

/// Result of reading as far as possible.
#[derive(Debug, Default)]
pub struct Scan {
    /// Events parsed before the first failure.
    pub events: Vec<Event>,
    pub error: Option<StoreError>,
}

/// Parses log bytes, stopping at the first malformed line or sequence gap.
pub fn scan_bytes(bytes: &[u8]) -> Scan {
    let mut scan = Scan::default();
    if bytes.is_empty() {
        return scan;
    }
    let ends_with_newline = bytes.last() == Some(&b'\n');
    let body = if ends_with_newline {
        &bytes[..bytes.len() - 1]
    } else {
        bytes
    };
    let lines: Vec<&[u8]> = body.split(|b| *b == b'\n').collect();
    let count = lines.len();
    for (idx, raw) in lines.into_iter().enumerate() {
        let line = idx + 1;
        if !ends_with_newline && line == count {
            scan.error = Some(StoreError::Parse {
                line,
                reason: "partial trailing record (no line terminator)".into(),
            });
            break;
        }
        match parse_line(raw, line) {
            Ok(event) => {
                let expected = idx as u64;
                if event.sequence != expected {
                    scan.error = Some(StoreError::Gap {
                        line,
                        expected,
                        found: event.sequence,
                    });
                    break;
                }
                scan.events.push(event);
            }
            Err(e) => {
                scan.error = Some(e);
                break;
            }
        }
    }
    scan
}

pub fn scan(path: &Path) -> Result<Scan, StoreError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(scan_bytes(&bytes))
}

/// Reads every event in sequence order; any malformed line or gap rejects the whole read.
pub fn read_all(path: &Path) -> Result<Vec<Event>, StoreError> {
    let scan = scan(path)?;
    match scan.error {
        Some(e) => Err(e),
        None => Ok(scan.events),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_bad_sequence: Option<u64>,
    pub events_checked: u64,
}

impl ChainReport {
    pub fn broken_at(sequence: u64, events_checked: u64) -> Self {
        Self {
            valid: false,
            first_bad_sequence: Some(sequence),
            events_checked,
        }
    }
}

/// Recomputes every hash and link; reports the first divergence.
pub fn verify_chain(events: &[Event]) -> ChainReport {
    let mut prev = GENESIS_PREV_HASH.to_string();
    for (idx, event) in events.iter().enumerate() {
        let ok = event.sequence == idx as u64
            && event.prev_hash == prev
            && matches!(event.compute_hash(), Ok(h) if h == event.hash);
        if !ok {
            return ChainReport::broken_at(idx as u64, idx as u64 + 1);
        }
        prev = event.hash.clone();
    }
    ChainReport {
        valid: true,
        first_bad_sequence: None,
        events_checked: events.len() as u64,
    }
}

/// Verifies raw log bytes: parse failures and chain breaks both surface as a report.
pub fn verify_bytes(bytes: &[u8]) -> ChainReport {
    let scan = scan_bytes(bytes);
    let chain = verify_chain(&scan.events);
    match scan.error.as_ref().and_then(StoreError::implicated_sequence) {
        Some(bad) if chain.valid || chain.first_bad_sequence.is_some_and(|s| s > bad) => {
            ChainReport::broken_at(bad, bad + 1)
        }
        _ => chain,
    }
}

/// Single-writer handle on an event log file.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_sequence: u64,
    tail_hash: String,
}

impl EventLog {
    /// Creates a new, empty log. Refuses to touch an existing file.
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    StoreError::AlreadyExists(path.to_path_buf())
                } else {
                    StoreError::Io {
                        path: path.to_path_buf(),
                        source: e,
                    }
                }
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            next_sequence: 0,
            tail_hash: GENESIS_PREV_HASH.to_string(),
        })
    }

    /// Opens an existing log for appending after verifying its chain.
    pub fn open(path: &Path) -> Result<(Self, Vec<Event>), StoreError> {
        let events = read_all(path)?;
        let report = verify_chain(&events);
        if let Some(bad) = report.first_bad_sequence {
            return Err(StoreError::ChainInvalid(bad));
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        let log = Self {
            path: path.to_path_buf(),
            file,
            next_sequence: events.len() as u64,
            tail_hash: events
                .last()
                .map(|e| e.hash.clone())
                .unwrap_or_else(|| GENESIS_PREV_HASH.to_string()),
        };
        Ok((log, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.next_sequence
    }

    pub fn is_empty(&self) -> bool {
        self.next_sequence == 0
    }

    pub fn tail_hash(&self) -> &str {
        &self.tail_hash
    }

    /// Seals `body`, writes it as one line and syncs before returning.
    pub fn append(&mut self, body: EventBody) -> Result<Event, StoreError> {
        let event = seal(body, self.next_sequence, &self.tail_hash)?;
        let mut line = canonical::to_canonical_bytes(&event)?;
        line.push(b'\n');
        let path = self.path.clone();
        self.file.write_all(&line).map_err(io_err(&path))?;
        self.file.flush().map_err(io_err(&path))?;
        self.file.sync_data().map_err(io_err(&path))?;
        self.next_sequence += 1;
        self.tail_hash = event.hash.clone();
        Ok(event)
    }
}
