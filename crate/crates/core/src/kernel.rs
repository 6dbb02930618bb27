//! Deterministic virtual-time discrete-event engine.
//!
//! Events run in `(time, entity class, seq)` order, where `seq` is assigned
//! when the event is scheduled. At equal times pacers run before schedulers,
//! schedulers before cores and cores before gateways. Handlers emit
//! [`TraceRecord`]s stamped with the current time, so the trace is ordered by
//! execution and never goes back in time.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::label::Label;

/// Virtual time in whole ticks since the start of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn ticks(self) -> u64 {
        self.0
    }

    pub fn after(self, ticks: u64) -> SimTime {
        SimTime(self.0 + ticks)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}", self.0)
    }
}

/// Entity classes, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Pacer,
    Scheduler,
    Core,
    Gateway,
    /// A customer endpoint outside the cloud. Clients never receive events;
    /// they only appear as the subject of delivery records.
    Client,
}

impl EntityKind {
    fn prefix(self) -> &'static str {
        match self {
            EntityKind::Pacer => "pacer",
            EntityKind::Scheduler => "sched",
            EntityKind::Core => "core",
            EntityKind::Gateway => "gw",
            EntityKind::Client => "client",
        }
    }
}

/// Names an entity; text form `kind:name`, e.g. `core:shared` or `gw:A`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    pub kind: EntityKind,
    pub name: String,
}

impl EntityId {
    pub fn new(kind: EntityKind, name: impl Into<String>) -> Self {
        EntityId { kind, name: name.into() }
    }

    pub fn pacer(name: impl fmt::Display) -> Self {
        Self::new(EntityKind::Pacer, name.to_string())
    }

    pub fn scheduler(name: impl fmt::Display) -> Self {
        Self::new(EntityKind::Scheduler, name.to_string())
    }

    pub fn core(name: impl fmt::Display) -> Self {
        Self::new(EntityKind::Core, name.to_string())
    }

    pub fn gateway(name: impl fmt::Display) -> Self {
        Self::new(EntityKind::Gateway, name.to_string())
    }

    pub fn client(name: impl fmt::Display) -> Self {
        Self::new(EntityKind::Client, name.to_string())
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.prefix(), self.name)
    }
}

impl FromStr for EntityId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (prefix, name) = s.split_once(':').ok_or_else(|| format!("entity id {s:?} lacks ':'"))?;
        let kind =
            [EntityKind::Pacer, EntityKind::Scheduler, EntityKind::Core, EntityKind::Gateway, EntityKind::Client]
                .into_iter()
                .find(|k| k.prefix() == prefix)
                .ok_or_else(|| format!("unknown entity kind {prefix:?}"))?;
        if name.is_empty() {
            return Err(format!("entity id {s:?} has an empty name"));
        }
        Ok(EntityId::new(kind, name))
    }
}

impl Serialize for EntityId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TraceKind {
    JobArrive,
    SliceStart,
    SliceEnd,
    JobComplete,
    MsgSend,
    MsgRecv,
    PacerRelease,
    MonitorAllow,
    MonitorDeny,
    LabelChange,
}

/// One observable event. Serialized as a single JSON object with fields
/// `t`, `kind`, `entity`, `label` (canonical text or null) and `detail`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(rename = "t")]
    pub time: SimTime,
    pub kind: TraceKind,
    pub entity: EntityId,
    pub label: Option<Label>,
    pub detail: BTreeMap<String, String>,
}

impl TraceRecord {
    pub fn detail(&self, key: &str) -> Option<&str> {
        self.detail.get(key).map(String::as_str)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

/// Renders records as JSON Lines.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot schedule an event at {at} when the clock is at {now}")]
    PastSchedule { now: SimTime, at: SimTime },
    #[error("cannot run until {target}: the clock is already at {now}")]
    PastHorizon { now: SimTime, target: SimTime },
    #[error("entity fault at {}: {msg}", .record.entity)]
    EntityFault { msg: String, record: Box<TraceRecord> },
    #[error("monitor denied a flow in fatal mode at {} ({})", .record.entity, .record.time)]
    MonitorFatal { record: Box<TraceRecord> },
    #[error("trace sink: {0}")]
    Io(#[from] std::io::Error),
}

/// A scheduled event.
#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub target: EntityId,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> Queued<P> {
    fn key(&self) -> (SimTime, EntityKind, u64) {
        (self.0.time, self.0.target.kind, self.0.seq)
    }
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

/// Retained trace plus an optional streaming sink.
pub struct Trace {
    records: VecDeque<TraceRecord>,
    retain: Option<usize>,
    total: usize,
    sink: Option<Box<dyn Write + Send>>,
}

impl Trace {
    fn new() -> Self {
        Trace { records: VecDeque::new(), retain: None, total: 0, sink: None }
    }

    fn push(&mut self, record: TraceRecord) -> Result<(), SimError> {
        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{}", record.to_json_line())?;
        }
        self.records.push_back(record);
        self.total += 1;
        if let Some(limit) = self.retain {
            while self.records.len() > limit {
                self.records.pop_front();
            }
        }
        Ok(())
    }

    /// Records still held in memory (the newest `retain` if bounded).
    pub fn records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    /// Number of records ever emitted.
    pub fn total(&self) -> usize {
        self.total
    }
}

/// What a handler sees while processing one event.
pub struct Context<'a, P> {
    now: SimTime,
    current: &'a Event<P>,
    queue: &'a mut BinaryHeap<Reverse<Queued<P>>>,
    next_seq: &'a mut u64,
    trace: &'a mut Trace,
}

impl<P> Context<'_, P> {
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, at: SimTime, target: EntityId, payload: P) -> Result<(), SimError> {
        push_event(self.queue, self.next_seq, self.now, at, target, payload)
    }

    /// Appends a record stamped with the current time.
    pub fn emit(
        &mut self,
        kind: TraceKind,
        entity: EntityId,
        label: Option<Label>,
        detail: BTreeMap<String, String>,
    ) -> Result<TraceRecord, SimError> {
        let record = TraceRecord { time: self.now, kind, entity, label, detail };
        self.trace.push(record.clone())?;
        Ok(record)
    }

    /// The event being handled.
    pub fn event(&self) -> &Event<P> {
        self.current
    }
}

/// Reacts to events delivered by a [`Kernel`].
pub trait Handler {
    type Payload;

    fn handle(&mut self, event: &Event<Self::Payload>, cx: &mut Context<'_, Self::Payload>) -> Result<(), SimError>;
}

fn push_event<P>(
    queue: &mut BinaryHeap<Reverse<Queued<P>>>,
    next_seq: &mut u64,
    now: SimTime,
    at: SimTime,
    target: EntityId,
    payload: P,
) -> Result<(), SimError> {
    if at < now {
        return Err(SimError::PastSchedule { now, at });
    }
    let seq = *next_seq;
    *next_seq += 1;
    queue.push(Reverse(Queued(Event { time: at, seq, target, payload })));
    Ok(())
}

/// The event queue and virtual clock.
pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    trace: Trace,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel { now: SimTime::ZERO, next_seq: 0, queue: BinaryHeap::new(), trace: Trace::new() }
    }

    /// Keep at most `limit` records in memory; older ones are still streamed.
    pub fn retain_at_most(&mut self, limit: usize) {
        self.trace.retain = Some(limit);
    }

    /// Streams every record as a JSON line to `sink` as it is emitted.
    pub fn stream_to(&mut self, sink: Box<dyn Write + Send>) {
        self.trace.sink = Some(sink);
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn schedule(&mut self, at: SimTime, target: EntityId, payload: P) -> Result<(), SimError> {
        push_event(&mut self.queue, &mut self.next_seq, self.now, at, target, payload)
    }

    /// Runs every event with time `<= t_end`, then sets the clock to `t_end`.
    /// Returns the records emitted by this call.
    pub fn run_until<H>(&mut self, t_end: SimTime, handler: &mut H) -> Result<Vec<TraceRecord>, SimError>
    where
        H: Handler<Payload = P>,
    {
        if t_end < self.now {
            return Err(SimError::PastHorizon { now: self.now, target: t_end });
        }
        let first = self.trace.total;
        while self.queue.peek().is_some_and(|Reverse(q)| q.0.time <= t_end) {
            let Reverse(Queued(event)) = self.queue.pop().expect("peeked");
            debug_assert!(event.time >= self.now);
            self.now = event.time;
            let mut cx = Context {
                now: self.now,
                current: &event,
                queue: &mut self.queue,
                next_seq: &mut self.next_seq,
                trace: &mut self.trace,
            };
            handler.handle(&event, &mut cx)?;
        }
        self.now = t_end;
        if let Some(sink) = self.trace.sink.as_mut() {
            sink.flush()?;
        }
        let fresh = self.trace.total - first;
        let held = self.trace.records.len();
        Ok(self.trace.records.iter().skip(held.saturating_sub(fresh)).cloned().collect())
    }
}
