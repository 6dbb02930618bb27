//! Reference monitor: the flow check, receive-side tainting and the audit log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kernel::{EntityId, SimTime, TraceKind, TraceRecord};
use crate::label::{CapabilitySet, Label};

/// How an interaction may affect its receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// The message bits become part of the receiver's state.
    Content,
    /// The message may change when the receiver runs, never what it computes.
    TimingOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowDecision {
    pub allowed: bool,
    /// Source label after applying every held capability.
    pub effective_src_label: Label,
    /// Tags left in the effective label that the destination does not
    /// dominate. Empty when the flow is allowed.
    pub residual: Label,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorMode {
    #[default]
    RecordAndDrop,
    Fatal,
}

/// The flow rule: allowed iff the declassified source label flows to the destination.
pub fn check_send(src: &Label, caps: &CapabilitySet, dst: &Label) -> FlowDecision {
    let effective = src.declassify(caps);
    let residual = effective.excess_over(dst);
    FlowDecision { allowed: residual.is_empty(), effective_src_label: effective, residual }
}

/// Like [`check_send`], but only the listed capabilities are used.
pub fn check_send_using(src: &Label, used: &[crate::label::Capability], dst: &Label) -> FlowDecision {
    let caps: CapabilitySet = used.iter().cloned().collect();
    check_send(src, &caps, dst)
}

/// The receiver's label after accepting a message.
pub fn apply_receive(receiver: &Label, msg: &Label, channel: Channel) -> Label {
    match channel {
        Channel::Content => receiver.join(msg),
        Channel::TimingOnly => receiver.join(&msg.lift_to_timing()),
    }
}

/// Collects monitor decisions as trace records.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    mode: MonitorMode,
    log: Vec<TraceRecord>,
}

impl Monitor {
    pub fn new(mode: MonitorMode) -> Self {
        Monitor { mode, log: Vec::new() }
    }

    pub fn mode(&self) -> MonitorMode {
        self.mode
    }

    /// Checks a send and returns the decision together with its trace record.
    /// The record carries the original source label; `detail` gets the
    /// destination, the effective label and the residual tags.
    pub fn decide(
        &mut self,
        time: SimTime,
        at: EntityId,
        src: &Label,
        caps: &CapabilitySet,
        dst: &Label,
        mut detail: BTreeMap<String, String>,
    ) -> (FlowDecision, TraceRecord) {
        let decision = check_send(src, caps, dst);
        detail.insert("dst_label".into(), dst.to_string());
        detail.insert("effective".into(), decision.effective_src_label.to_string());
        detail.insert("residual".into(), decision.residual.to_string());
        let kind = if decision.allowed { TraceKind::MonitorAllow } else { TraceKind::MonitorDeny };
        let record = TraceRecord { time, kind, entity: at, label: Some(src.clone()), detail };
        self.log.push(record.clone());
        (decision, record)
    }

    pub fn audit_log(&self) -> &[TraceRecord] {
        &self.log
    }

    pub fn denials(&self) -> impl Iterator<Item = &TraceRecord> {
        self.log.iter().filter(|r| r.kind == TraceKind::MonitorDeny)
    }
}
