//! Embedded topic broker: append-only per-topic logs, at-least-once delivery
//! with acknowledgement, and replay from any offset.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex, MutexGuard};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SimTime;

#[derive(Debug, Error)]
pub enum BusError {
    #[error("topic name must be nonempty")]
    EmptyTopic,
    #[error("subscription {subscriber} on {topic} is not registered")]
    UnknownSubscription { subscriber: String, topic: String },
    #[error("offset {offset} beyond log length {len} of topic {topic}")]
    OffsetOutOfRange { topic: String, offset: u64, len: u64 },
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: String,
    pub offset: u64,
    pub key: Option<String>,
    pub payload: Vec<u8>,
    pub publish_time: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub subscriber_id: String,
    pub topic: String,
    pub next_offset: u64,
    pub pending: BTreeSet<u64>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotRecord {
    offset: u64,
    key: Option<String>,
    publish_time: SimTime,
    payload: String,
}

#[derive(Default)]
struct Inner {
    topics: BTreeMap<String, Vec<Arc<Message>>>,
    subs: BTreeMap<(String, String), Subscription>,
}

/// Cheaply cloneable handle; all clones share one broker.
#[derive(Clone, Default)]
pub struct Broker {
    inner: Arc<Mutex<Inner>>,
}

impl std::fmt::Debug for Broker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let g = self.lock();
        f.debug_struct("Broker").field("topics", &g.topics.len()).field("subscriptions", &g.subs.len()).finish()
    }
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn publish(
        &self,
        topic: &str,
        key: Option<&str>,
        payload: impl Into<Vec<u8>>,
        publish_time: SimTime,
    ) -> Result<u64, BusError> {
        if topic.is_empty() {
            return Err(BusError::EmptyTopic);
        }
        let mut g = self.lock();
        let log = g.topics.entry(topic.to_string()).or_default();
        let offset = log.len() as u64;
        log.push(Arc::new(Message {
            topic: topic.to_string(),
            offset,
            key: key.map(str::to_string),
            payload: payload.into(),
            publish_time,
        }));
        Ok(offset)
    }

    pub fn topics(&self) -> Vec<String> {
        self.lock().topics.keys().cloned().collect()
    }

    pub fn len(&self, topic: &str) -> u64 {
        self.lock().topics.get(topic).map_or(0, |l| l.len() as u64)
    }

    pub fn is_empty(&self, topic: &str) -> bool {
        self.len(topic) == 0
    }

    /// Registers (or resets) a subscription starting at `from_offset`.
    pub fn subscribe(&self, subscriber_id: &str, topic: &str, from_offset: u64) -> Result<(), BusError> {
        if topic.is_empty() {
            return Err(BusError::EmptyTopic);
        }
        let mut g = self.lock();
        let len = g.topics.get(topic).map_or(0, |l| l.len() as u64);
        if from_offset > len {
            return Err(BusError::OffsetOutOfRange { topic: topic.into(), offset: from_offset, len });
        }
        g.subs.insert(
            (subscriber_id.to_string(), topic.to_string()),
            Subscription {
                subscriber_id: subscriber_id.into(),
                topic: topic.into(),
                next_offset: from_offset,
                pending: BTreeSet::new(),
            },
        );
        Ok(())
    }

    pub fn subscription(&self, subscriber_id: &str, topic: &str) -> Option<Subscription> {
        self.lock().subs.get(&(subscriber_id.to_string(), topic.to_string())).cloned()
    }

    /// Next message for the subscriber: the lowest unacknowledged offset if
    /// any, otherwise the next new one. `Ok(None)` signals end of log.
    pub fn deliver(&self, subscriber_id: &str, topic: &str) -> Result<Option<Message>, BusError> {
        let mut g = self.lock();
        let Inner { topics, subs } = &mut *g;
        let sub = subs.get_mut(&(subscriber_id.to_string(), topic.to_string())).ok_or_else(|| {
            BusError::UnknownSubscription { subscriber: subscriber_id.into(), topic: topic.into() }
        })?;
        let log = topics.get(topic).map(Vec::as_slice).unwrap_or(&[]);
        let offset = match sub.pending.first() {
            Some(&o) => o,
            None if (sub.next_offset as usize) < log.len() => {
                let o = sub.next_offset;
                sub.next_offset += 1;
                sub.pending.insert(o);
                o
            }
            None => return Ok(None),
        };
        Ok(Some((*log[offset as usize]).clone()))
    }

    /// Acknowledges `offset`; returns `false` if it was not pending.
    pub fn ack(&self, subscriber_id: &str, topic: &str, offset: u64) -> Result<bool, BusError> {
        let mut g = self.lock();
        let sub = g.subs.get_mut(&(subscriber_id.to_string(), topic.to_string())).ok_or_else(|| {
            BusError::UnknownSubscription { subscriber: subscriber_id.into(), topic: topic.into() }
        })?;
        Ok(sub.pending.remove(&offset))
    }

    /// Messages from `from_offset` to the log end as of this call.
    pub fn replay(&self, topic: &str, from_offset: u64) -> Result<impl Iterator<Item = Message>, BusError> {
        let g = self.lock();
        let log = g.topics.get(topic).map(Vec::as_slice).unwrap_or(&[]);
        let len = log.len() as u64;
        if from_offset > len {
            return Err(BusError::OffsetOutOfRange { topic: topic.into(), offset: from_offset, len });
        }
        let tail: Vec<Arc<Message>> = log[from_offset as usize..].to_vec();
        Ok(tail.into_iter().map(|m| (*m).clone()))
    }

    /// Writes the topic log, one record per line.
    pub fn snapshot_topic<W: Write>(&self, topic: &str, mut out: W) -> Result<(), BusError> {
        for m in self.replay(topic, 0)? {
            let rec = SnapshotRecord {
                offset: m.offset,
                key: m.key,
                publish_time: m.publish_time,
                payload: B64.encode(&m.payload),
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Appends a snapshot into an empty topic. Offsets must be contiguous.
    pub fn restore_topic<R: BufRead>(&self, topic: &str, input: R) -> Result<u64, BusError> {
        if topic.is_empty() {
            return Err(BusError::EmptyTopic);
        }
        let mut msgs = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| BusError::Snapshot { line: i + 1, message };
            let rec: SnapshotRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if rec.offset != msgs.len() as u64 {
                return Err(bad(format!("expected offset {}, found {}", msgs.len(), rec.offset)));
            }
            let payload = B64.decode(rec.payload.as_bytes()).map_err(|e| bad(e.to_string()))?;
            msgs.push(Arc::new(Message {
                topic: topic.into(),
                offset: rec.offset,
                key: rec.key,
                payload,
                publish_time: rec.publish_time,
            }));
        }
        let mut g = self.lock();
        let log = g.topics.entry(topic.to_string()).or_default();
        if !log.is_empty() {
            return Err(BusError::Snapshot { line: 0, message: format!("topic {topic} is not empty") });
        }
        let n = msgs.len() as u64;
        *log = msgs;
        Ok(n)
    }
}
