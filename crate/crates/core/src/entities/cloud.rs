//! Event wiring for the simulated cloud.
//!
//! Per tick the flow is: pacers release, the scheduler picks a user and sends
//! a control message to its core, the core runs one slice, gateways handle
//! arrivals and results. A slice started at `t` ends at `t + 1`; a job
//! submitted at `t` is first runnable at `t + 1`.

use std::collections::BTreeMap;

use super::{
    ComputeCore, Decision, Demand, DemandReport, EntityError, Gateway, Job, Message, Pacer, Request, Scheduler,
    SchedulerPolicy, SliceOutcome,
};
use crate::kernel::{Context, EntityId, Event, Handler, Kernel, SimError, SimTime, TraceKind, TraceRecord};
use crate::label::{Capability, CapabilitySet, Frequency, UserTag};
use crate::monitor::{Monitor, MonitorMode};

#[derive(Debug, Clone)]
pub enum Signal {
    /// A customer request reaching its gateway.
    Submit(Request),
    /// A labelled job reaching its core.
    Arrive(Job),
    SchedTick,
    /// Core demand flowing to the scheduler.
    Demand(DemandReport),
    /// Run one slice of `who`; `control` is the scheduler's message, absent
    /// on a private core that clocks itself.
    Run {
        who: UserTag,
        control: Option<Message>,
    },
    SliceEnd(SliceOutcome),
    /// A job result on its way to a pacer or gateway.
    Result(Message),
    PacerTick,
}

fn detail<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

struct CoreState {
    core: ComputeCore,
    /// Owner of a private core; such a core schedules its own slices.
    private_owner: Option<UserTag>,
    run_pending: bool,
    reports_to: Option<EntityId>,
    last_reported: Option<Demand>,
}

struct SchedState {
    id: EntityId,
    scheduler: Scheduler,
    core: EntityId,
    demand: Option<DemandReport>,
}

/// Builds a [`Cloud`].
#[derive(Debug, Clone, Default)]
pub struct CloudBuilder {
    users: Vec<UserTag>,
    grants: Vec<(UserTag, Capability)>,
    shared: Option<SchedulerPolicy>,
    pacer: Option<(Frequency, Option<u64>)>,
    mode: MonitorMode,
}

impl CloudBuilder {
    pub fn user(mut self, user: UserTag) -> Self {
        self.users.push(user);
        self
    }

    /// Gives `holder`'s gateway a capability.
    pub fn grant(mut self, holder: UserTag, cap: Capability) -> Self {
        self.grants.push((holder, cap));
        self
    }

    /// One shared core driven by a scheduler. Without this every user gets
    /// a private core.
    pub fn shared_core(mut self, policy: SchedulerPolicy) -> Self {
        self.shared = Some(policy);
        self
    }

    /// A pacer on each user's result path. `phase` defaults to one period.
    pub fn pacer(mut self, freq: Frequency, phase: Option<u64>) -> Self {
        self.pacer = Some((freq, phase));
        self
    }

    pub fn monitor_mode(mut self, mode: MonitorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn build(self) -> Result<Cloud, EntityError> {
        if self.users.is_empty() {
            return Err(EntityError::Topology("no users".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for u in &self.users {
            if !seen.insert(u) {
                return Err(EntityError::Topology(format!("user {u} listed twice")));
            }
        }

        let mut gateways: BTreeMap<UserTag, Gateway> =
            self.users.iter().map(|u| (u.clone(), Gateway::new(u.clone(), CapabilitySet::new()))).collect();
        for (holder, cap) in self.grants {
            let gw = gateways
                .get_mut(&holder)
                .ok_or_else(|| EntityError::Topology(format!("grant to unknown user {holder}")))?;
            gw.caps.insert(cap);
        }

        let mut cores = BTreeMap::new();
        let mut placement = BTreeMap::new();
        let mut scheduler = None;
        match self.shared {
            Some(policy) => {
                let mut listed: Vec<&UserTag> = policy.users().iter().collect();
                listed.sort();
                listed.dedup();
                let mut users: Vec<&UserTag> = self.users.iter().collect();
                users.sort();
                if listed != users {
                    return Err(EntityError::Topology("scheduler must list exactly the configured users".into()));
                }
                let core_id = EntityId::core("shared");
                let sched_id = EntityId::scheduler("shared");
                let reports_to = policy.wants_demand().then(|| sched_id.clone());
                cores.insert(
                    core_id.clone(),
                    CoreState {
                        core: ComputeCore::new(core_id.clone(), self.users.iter().cloned()),
                        private_owner: None,
                        run_pending: false,
                        reports_to,
                        last_reported: None,
                    },
                );
                for u in &self.users {
                    placement.insert(u.clone(), core_id.clone());
                }
                scheduler =
                    Some(SchedState { id: sched_id, scheduler: Scheduler::new(policy)?, core: core_id, demand: None });
            }
            None => {
                for u in &self.users {
                    let id = EntityId::core(u);
                    cores.insert(
                        id.clone(),
                        CoreState {
                            core: ComputeCore::new(id.clone(), [u.clone()]),
                            private_owner: Some(u.clone()),
                            run_pending: false,
                            reports_to: None,
                            last_reported: None,
                        },
                    );
                    placement.insert(u.clone(), id);
                }
            }
        }

        let mut pacers = BTreeMap::new();
        if let Some((freq, phase)) = self.pacer {
            for u in &self.users {
                let pacer = match phase {
                    Some(p) => Pacer::new(freq, p)?,
                    None => Pacer::with_default_phase(freq)?,
                };
                pacers.insert(u.clone(), pacer);
            }
        }

        Ok(Cloud { gateways, cores, placement, scheduler, pacers, monitor: Monitor::new(self.mode) })
    }
}

/// All entities of one simulated cloud.
pub struct Cloud {
    gateways: BTreeMap<UserTag, Gateway>,
    cores: BTreeMap<EntityId, CoreState>,
    placement: BTreeMap<UserTag, EntityId>,
    scheduler: Option<SchedState>,
    pacers: BTreeMap<UserTag, Pacer>,
    monitor: Monitor,
}

impl Cloud {
    pub fn builder() -> CloudBuilder {
        CloudBuilder::default()
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn gateway(&self, user: &UserTag) -> Option<&Gateway> {
        self.gateways.get(user)
    }

    pub fn scheduler_policy(&self) -> Option<&SchedulerPolicy> {
        self.scheduler.as_ref().map(|s| &s.scheduler.policy)
    }

    pub fn pacer(&self, user: &UserTag) -> Option<&Pacer> {
        self.pacers.get(user)
    }

    pub fn core_ids(&self) -> impl Iterator<Item = &EntityId> {
        self.cores.keys()
    }

    /// Every job currently held by any core.
    pub fn live_jobs(&self) -> impl Iterator<Item = &Job> {
        self.cores.values().flat_map(|c| c.core.jobs())
    }

    fn core_mut(&mut self, id: &EntityId) -> Result<&mut CoreState, String> {
        self.cores.get_mut(id).ok_or_else(|| format!("no core {id}"))
    }

    fn fault(cx: &mut Context<'_, Signal>, kind: TraceKind, entity: EntityId, err: impl std::fmt::Display) -> SimError {
        let msg = err.to_string();
        let record =
            TraceRecord { time: cx.now(), kind, entity, label: None, detail: detail([("fault", msg.clone())]) };
        SimError::EntityFault { msg, record: Box::new(record) }
    }

    /// Reports demand to the scheduler if it subscribes and the demand changed.
    fn report_demand(state: &mut CoreState, cx: &mut Context<'_, Signal>) -> Result<(), SimError> {
        let Some(target) = state.reports_to.clone() else { return Ok(()) };
        let report = state.core.demand_report();
        if state.last_reported.as_ref() == Some(&report.demand) {
            return Ok(());
        }
        state.last_reported = Some(report.demand.clone());
        cx.schedule(cx.now(), target, Signal::Demand(report))
    }

    fn on_submit(
        &mut self,
        target: &EntityId,
        request: &Request,
        cx: &mut Context<'_, Signal>,
    ) -> Result<(), SimError> {
        let owner = UserTag::new(&target.name).map_err(|e| Self::fault(cx, TraceKind::JobArrive, target.clone(), e))?;
        let gw = self
            .gateways
            .get_mut(&owner)
            .ok_or_else(|| Self::fault(cx, TraceKind::JobArrive, target.clone(), "no such gateway"))?;
        let job = gw.ingress(request.clone()).map_err(|e| Self::fault(cx, TraceKind::JobArrive, target.clone(), e))?;
        let core = self.placement[&owner].clone();
        cx.schedule(cx.now(), core, Signal::Arrive(job))
    }

    fn on_arrive(&mut self, target: &EntityId, job: &Job, cx: &mut Context<'_, Signal>) -> Result<(), SimError> {
        let now = cx.now();
        let state = self.core_mut(target).map_err(|e| Self::fault(cx, TraceKind::JobArrive, target.clone(), e))?;
        let mut job = job.clone();
        job.demand_visible = state.reports_to.is_some();
        cx.emit(
            TraceKind::JobArrive,
            target.clone(),
            Some(job.label.clone()),
            detail([
                ("job", job.id.to_string()),
                ("owner", job.owner().to_string()),
                ("work", job.work_left.to_string()),
            ]),
        )?;
        state.core.admit(job).map_err(|e| Self::fault(cx, TraceKind::JobArrive, target.clone(), e))?;
        if let Some(owner) = state.private_owner.clone() {
            if !state.run_pending {
                state.run_pending = true;
                cx.schedule(now.after(1), target.clone(), Signal::Run { who: owner, control: None })?;
            }
        }
        Self::report_demand(state, cx)
    }

    fn on_sched_tick(&mut self, cx: &mut Context<'_, Signal>) -> Result<(), SimError> {
        let now = cx.now();
        let Some(sched) = self.scheduler.as_mut() else { return Ok(()) };
        let demand = if sched.scheduler.policy.wants_demand() { sched.demand.as_ref() } else { None };
        let decision = sched
            .scheduler
            .decide(now, demand)
            .map_err(|e| Self::fault(cx, TraceKind::SliceStart, sched.id.clone(), e))?;
        if let Decision::Run { who, control } = decision {
            cx.schedule(now, sched.core.clone(), Signal::Run { who, control: Some(control) })?;
        }
        cx.schedule(now.after(1), sched.id.clone(), Signal::SchedTick)
    }

    fn on_demand(&mut self, report: &DemandReport, cx: &mut Context<'_, Signal>) -> Result<(), SimError> {
        let now = cx.now();
        let Some(sched) = self.scheduler.as_mut() else { return Ok(()) };
        let demand_text: Vec<String> = report.demand.iter().map(|(u, d)| format!("{u}={}", u8::from(*d))).collect();
        let (decision, record) = self.monitor.decide(
            now,
            sched.id.clone(),
            &report.label,
            &CapabilitySet::new(),
            &sched.scheduler.policy.label,
            detail([("src", sched.core.to_string()), ("demand", demand_text.join(","))]),
        );
        cx.emit(record.kind, record.entity.clone(), record.label.clone(), record.detail.clone())?;
        if decision.allowed {
            sched.demand = Some(report.clone());
        } else if self.monitor.mode() == MonitorMode::Fatal {
            return Err(SimError::MonitorFatal { record: Box::new(record) });
        }
        Ok(())
    }

    fn on_run(
        &mut self,
        target: &EntityId,
        who: &UserTag,
        control: Option<&Message>,
        cx: &mut Context<'_, Signal>,
    ) -> Result<(), SimError> {
        let now = cx.now();
        let state = self.core_mut(target).map_err(|e| Self::fault(cx, TraceKind::SliceStart, target.clone(), e))?;
        if let Some(control) = control {
            let changes = state
                .core
                .receive_control(control)
                .map_err(|e| Self::fault(cx, TraceKind::LabelChange, target.clone(), e))?;
            for change in changes {
                cx.emit(
                    TraceKind::LabelChange,
                    target.clone(),
                    Some(change.to),
                    detail([("job", change.job.to_string()), ("from", change.from.to_string())]),
                )?;
            }
        }
        let outcome =
            state.core.run_slice(who).map_err(|e| Self::fault(cx, TraceKind::SliceStart, target.clone(), e))?;
        match &outcome {
            SliceOutcome::Idle => {
                cx.emit(
                    TraceKind::SliceStart,
                    target.clone(),
                    None,
                    detail([("user", who.to_string()), ("idle", "true".into())]),
                )?;
            }
            SliceOutcome::Ran { job, label, work_left, .. } => {
                cx.emit(
                    TraceKind::SliceStart,
                    target.clone(),
                    Some(label.clone()),
                    detail([("user", who.to_string()), ("job", job.to_string()), ("work_left", work_left.to_string())]),
                )?;
                cx.schedule(now.after(1), target.clone(), Signal::SliceEnd(outcome.clone()))?;
            }
        }
        if let Some(owner) = state.private_owner.clone() {
            state.run_pending = state.core.has_work(&owner);
            if state.run_pending {
                cx.schedule(now.after(1), target.clone(), Signal::Run { who: owner, control: None })?;
            }
        }
        Self::report_demand(state, cx)
    }

    fn on_slice_end(
        &mut self,
        target: &EntityId,
        outcome: &SliceOutcome,
        cx: &mut Context<'_, Signal>,
    ) -> Result<(), SimError> {
        let SliceOutcome::Ran { job, label, work_left, result } = outcome else { return Ok(()) };
        cx.emit(
            TraceKind::SliceEnd,
            target.clone(),
            Some(label.clone()),
            detail([("job", job.to_string()), ("work_left", work_left.to_string())]),
        )?;
        let Some(msg) = result else { return Ok(()) };
        cx.emit(
            TraceKind::JobComplete,
            target.clone(),
            Some(label.clone()),
            detail([("job", job.to_string()), ("owner", job.owner.to_string()), ("payload", msg.payload.clone())]),
        )?;
        let next = if self.pacers.contains_key(&job.owner) {
            EntityId::pacer(&job.owner)
        } else {
            EntityId::gateway(&job.owner)
        };
        cx.emit(
            TraceKind::MsgSend,
            target.clone(),
            Some(msg.label.clone()),
            detail([
                ("job", job.to_string()),
                ("owner", job.owner.to_string()),
                ("payload", msg.payload.clone()),
                ("to", next.to_string()),
            ]),
        )?;
        cx.schedule(cx.now(), next, Signal::Result(msg.clone()))
    }

    fn on_result(&mut self, target: &EntityId, msg: &Message, cx: &mut Context<'_, Signal>) -> Result<(), SimError> {
        let owner = UserTag::new(&target.name).map_err(|e| Self::fault(cx, TraceKind::MsgRecv, target.clone(), e))?;
        match target.kind {
            crate::kernel::EntityKind::Pacer => {
                let pacer = self
                    .pacers
                    .get_mut(&owner)
                    .ok_or_else(|| Self::fault(cx, TraceKind::MsgRecv, target.clone(), "no such pacer"))?;
                pacer.enqueue(msg.clone());
                Ok(())
            }
            _ => self.egress(&owner, target, msg, cx),
        }
    }

    fn egress(
        &mut self,
        owner: &UserTag,
        target: &EntityId,
        msg: &Message,
        cx: &mut Context<'_, Signal>,
    ) -> Result<(), SimError> {
        let gw = self
            .gateways
            .get(owner)
            .ok_or_else(|| Self::fault(cx, TraceKind::MsgRecv, target.clone(), "no such gateway"))?;
        let client = EntityId::client(owner);
        let (decision, record) = self.monitor.decide(
            cx.now(),
            target.clone(),
            &msg.label,
            &gw.caps,
            &gw.clearance(),
            detail([("job", msg.id.clone()), ("dst", client.to_string()), ("caps", gw.caps.to_string())]),
        );
        cx.emit(record.kind, record.entity.clone(), record.label.clone(), record.detail.clone())?;
        if !decision.allowed {
            if self.monitor.mode() == MonitorMode::Fatal {
                return Err(SimError::MonitorFatal { record: Box::new(record) });
            }
            return Ok(());
        }
        cx.emit(
            TraceKind::MsgRecv,
            client,
            Some(msg.label.clone()),
            detail([
                ("job", msg.id.clone()),
                ("payload", msg.payload.clone()),
                ("effective", decision.effective_src_label.to_string()),
            ]),
        )?;
        Ok(())
    }

    fn on_pacer_tick(&mut self, target: &EntityId, cx: &mut Context<'_, Signal>) -> Result<(), SimError> {
        let now = cx.now();
        let owner =
            UserTag::new(&target.name).map_err(|e| Self::fault(cx, TraceKind::PacerRelease, target.clone(), e))?;
        let pacer = self
            .pacers
            .get_mut(&owner)
            .ok_or_else(|| Self::fault(cx, TraceKind::PacerRelease, target.clone(), "no such pacer"))?;
        let released = pacer.tick(now).map_err(|e| Self::fault(cx, TraceKind::PacerRelease, target.clone(), e))?;
        let period = pacer.period();
        let queued = pacer.len();
        if let Some(msg) = released {
            cx.emit(
                TraceKind::PacerRelease,
                target.clone(),
                Some(msg.label.clone()),
                detail([("job", msg.id.clone()), ("queued", queued.to_string())]),
            )?;
            cx.schedule(now, EntityId::gateway(&owner), Signal::Result(msg))?;
        }
        cx.schedule(now.after(period), target.clone(), Signal::PacerTick)
    }
}

impl Handler for Cloud {
    type Payload = Signal;

    fn handle(&mut self, event: &Event<Signal>, cx: &mut Context<'_, Signal>) -> Result<(), SimError> {
        let target = &event.target;
        match &event.payload {
            Signal::Submit(request) => self.on_submit(target, request, cx),
            Signal::Arrive(job) => self.on_arrive(target, job, cx),
            Signal::SchedTick => self.on_sched_tick(cx),
            Signal::Demand(report) => self.on_demand(report, cx),
            Signal::Run { who, control } => self.on_run(target, who, control.as_ref(), cx),
            Signal::SliceEnd(outcome) => self.on_slice_end(target, outcome, cx),
            Signal::Result(msg) => self.on_result(target, msg, cx),
            Signal::PacerTick => self.on_pacer_tick(target, cx),
        }
    }
}

/// A cloud together with its kernel.
pub struct Simulation {
    kernel: Kernel<Signal>,
    cloud: Cloud,
}

impl Simulation {
    /// Schedules the scheduler's first tick at 0 and each pacer's first tick.
    pub fn new(cloud: Cloud) -> Result<Self, SimError> {
        let mut kernel = Kernel::new();
        if let Some(s) = &cloud.scheduler {
            kernel.schedule(SimTime::ZERO, s.id.clone(), Signal::SchedTick)?;
        }
        for (user, pacer) in &cloud.pacers {
            kernel.schedule(pacer.first_tick(), EntityId::pacer(user), Signal::PacerTick)?;
        }
        Ok(Simulation { kernel, cloud })
    }

    /// Queues a customer request to reach its gateway at `at`.
    pub fn submit(&mut self, at: SimTime, request: Request) -> Result<(), SimError> {
        let gw = EntityId::gateway(&request.owner);
        self.kernel.schedule(at, gw, Signal::Submit(request))
    }

    pub fn run_until(&mut self, t_end: SimTime) -> Result<Vec<TraceRecord>, SimError> {
        self.kernel.run_until(t_end, &mut self.cloud)
    }

    pub fn cloud(&self) -> &Cloud {
        &self.cloud
    }

    pub fn kernel(&self) -> &Kernel<Signal> {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut Kernel<Signal> {
        &mut self.kernel
    }

    pub fn trace(&self) -> Vec<TraceRecord> {
        self.kernel.trace().records().cloned().collect()
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }
}
