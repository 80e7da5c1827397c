//! Deterministic in-process transport between entity state machines.
//!
//! A single logical clock drives everything. Envelopes are delivered in
//! `(delivered_at, seq)` order and every send, delivery and drop lands in the
//! audit log, together with whatever the entities record themselves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::Tick;

/// Default cap on deliveries per [`Network::run_until_idle`] call.
pub const DEFAULT_MAX_EVENTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub seq: u64,
    pub from: String,
    pub to: String,
    pub correlation_id: String,
    pub payload: Vec<u8>,
    pub sent_at: Tick,
    pub delivered_at: Tick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkPolicy {
    #[serde(default = "default_latency")]
    pub base_latency: u64,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_latency() -> u64 {
    1
}

impl Default for NetworkPolicy {
    fn default() -> Self {
        Self {
            base_latency: default_latency(),
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("no endpoint registered as {0:?}")]
    UnknownEndpoint(String),
    #[error("more than {0} deliveries in one run; the flow does not terminate")]
    LivelockGuard(usize),
}

/// One line of the audit trace. Field order is fixed by declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub timestamp: Tick,
    pub entity: String,
    pub event: String,
    pub correlation_id: String,
    pub outcome: String,
}

impl AuditRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit records always serialize")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditLog {
    pub records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AuditRecord> {
        self.records.iter()
    }

    pub fn extend(&mut self, other: AuditLog) {
        self.records.extend(other.records);
    }

    /// Line-delimited JSON, one record per line, newline terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&record.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<AuditLog, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(AuditLog { records })
    }
}

impl fmt::Display for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Receives envelopes taken off the queue. Implementations may send further
/// envelopes and record audit events through `net`.
pub trait Router {
    fn deliver(&mut self, envelope: Envelope, net: &mut Network);
}

impl<F: FnMut(Envelope, &mut Network)> Router for F {
    fn deliver(&mut self, envelope: Envelope, net: &mut Network) {
        self(envelope, net)
    }
}

#[derive(Debug)]
pub struct Network {
    policy: NetworkPolicy,
    clock: Tick,
    rng: ChaCha20Rng,
    next_seq: u64,
    queue: BTreeMap<(Tick, u64), Envelope>,
    endpoints: BTreeSet<String>,
    log: AuditLog,
    max_events: usize,
    sent: u64,
    delivered: u64,
    dropped: u64,
}

impl Network {
    pub fn new(policy: NetworkPolicy) -> Self {
        let rng = ChaCha20Rng::seed_from_u64(policy.seed);
        Self {
            policy,
            clock: Tick::ZERO,
            rng,
            next_seq: 0,
            queue: BTreeMap::new(),
            endpoints: BTreeSet::new(),
            log: AuditLog::default(),
            max_events: DEFAULT_MAX_EVENTS,
            sent: 0,
            delivered: 0,
            dropped: 0,
        }
    }

    pub fn with_max_events(mut self, max_events: usize) -> Self {
        self.max_events = max_events;
        self
    }

    pub fn policy(&self) -> &NetworkPolicy {
        &self.policy
    }

    pub fn register(&mut self, endpoint: impl Into<String>) {
        self.endpoints.insert(endpoint.into());
    }

    pub fn is_registered(&self, endpoint: &str) -> bool {
        self.endpoints.contains(endpoint)
    }

    pub fn now(&self) -> Tick {
        self.clock
    }

    pub fn advance_clock(&mut self, ticks: u64) {
        self.clock = self.clock + ticks;
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Counters of sent, delivered and dropped envelopes since creation.
    pub fn counters(&self) -> (u64, u64, u64) {
        (self.sent, self.delivered, self.dropped)
    }

    /// Appends an entity-level event at the current time.
    pub fn record(&mut self, entity: &str, event: &str, correlation_id: &str, outcome: impl Into<String>) {
        self.log.records.push(AuditRecord {
            timestamp: self.clock,
            entity: entity.to_owned(),
            event: event.to_owned(),
            correlation_id: correlation_id.to_owned(),
            outcome: outcome.into(),
        });
    }

    /// Queues `payload` for `to`, due after the base latency, or drops it.
    /// Returns the envelope's sequence number.
    pub fn send(&mut self, from: &str, to: &str, correlation_id: &str, payload: Vec<u8>) -> Result<u64, NetError> {
        if !self.endpoints.contains(to) {
            self.record(from, "send-failed", correlation_id, format!("unknown endpoint {to}"));
            return Err(NetError::UnknownEndpoint(to.to_owned()));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.sent += 1;
        let envelope = Envelope {
            seq,
            from: from.to_owned(),
            to: to.to_owned(),
            correlation_id: correlation_id.to_owned(),
            payload,
            sent_at: self.clock,
            delivered_at: self.clock + self.policy.base_latency,
        };
        self.record(from, "send", correlation_id, format!("seq={seq} to={to} bytes={}", envelope.payload.len()));
        if self.should_drop() {
            self.dropped += 1;
            self.record(from, "drop", correlation_id, format!("seq={seq} to={to}"));
        } else {
            self.queue.insert((envelope.delivered_at, seq), envelope);
        }
        Ok(seq)
    }

    fn should_drop(&mut self) -> bool {
        let p = self.policy.drop_probability;
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.rng.gen::<f64>() < p
        }
    }

    /// Delivers queued envelopes until the queue is empty and returns the
    /// audit records appended during this call.
    pub fn run_until_idle(&mut self, router: &mut dyn Router) -> Result<AuditLog, NetError> {
        let start = self.log.records.len();
        let mut deliveries = 0usize;
        while let Some((_, envelope)) = self.queue.pop_first() {
            deliveries += 1;
            if deliveries > self.max_events {
                self.queue.clear();
                self.record("simnet", "livelock", &envelope.correlation_id, format!("cap {}", self.max_events));
                return Err(NetError::LivelockGuard(self.max_events));
            }
            self.clock = self.clock.max(envelope.delivered_at);
            self.delivered += 1;
            self.record(
                &envelope.to,
                "deliver",
                &envelope.correlation_id,
                format!("seq={} from={}", envelope.seq, envelope.from),
            );
            router.deliver(envelope, self);
        }
        Ok(AuditLog {
            records: self.log.records[start..].to_vec(),
        })
    }

    /// Every record since the network was created.
    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    pub fn take_log(&mut self) -> AuditLog {
        std::mem::take(&mut self.log)
    }
}
