//! Discrete-event execution of requests against a deployed composition.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    CompositionSpec, EdgeMode, InvocationRecord, Outcome, PlatformError, PlatformParams, PlatformProfile, ResponseBody,
    ResponseCode, ResponseCodePolicy, ResponseEnvelope, RuntimePool, Step, StepRecord, Trigger,
};
use crate::evidence::{LogLevel, LogLine, LogOrigin, LogStore, TRIGGER_TAG};
use crate::faults::{apply_fault, FaultEffect, FaultInjector, FaultPlan, GroundTruth, InjectedFault, InvocationContext};
use crate::model::{tags, FaultSpec, IdGenerator, RequestId, Span, TraceContext, TraceId, VirtualTime};
use crate::trace::{
    developer_root, extract_context, inject_context, instrument_call, platform_hook, report_spans, sample_decision, Collector,
    FunctionStep, OpenSpan, PlatformEvent, RequestMetadata, TracingConfig, TracingMode,
};

const SAMPLER_STREAM: u64 = 0x5341_4d50_4c45_5201;
const TAIL_STREAM: u64 = 0x5441_494c_4c41_5402;

/// What a client sends to the entry function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestPayload {
    pub records: u32,
    pub images_per_record: u32,
    #[serde(default)]
    pub metadata: RequestMetadata,
}

impl RequestPayload {
    pub fn new(records: u32, images_per_record: u32) -> Self {
        RequestPayload {
            records,
            images_per_record,
            metadata: RequestMetadata::default(),
        }
    }
}

impl Default for RequestPayload {
    fn default() -> Self {
        RequestPayload::new(1, 1)
    }
}

/// Outcome of one client request, available after it ran to quiescence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub request_id: RequestId,
    pub request_index: u64,
    pub sampled: bool,
    /// Trace that starts at the request's entry point, if one was recorded.
    pub trace_id: Option<TraceId>,
    pub entry: String,
    pub response: ResponseEnvelope,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunStats {
    /// Span batches sent by in-function reporters.
    pub flushes: u64,
    /// Span batches sent by platform components and runtimes.
    pub platform_batches: u64,
    pub events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrive { request: usize },
    Allocate { act: usize },
    InitDone { act: usize },
    PhaseDone { act: usize, gen: u64 },
    Deadline { act: usize, gen: u64 },
    DeadlineFlush { act: usize, gen: u64 },
    ChildDone { act: usize, gen: u64, child: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Phase {
    Overhead(u64),
    Work(u64),
    Raise(String),
    Kill(String),
    External(String),
    SyncCall { callee: String, index: u32 },
    TriggerAsync { callee: String, count: u32 },
    Flush(u64),
}

#[derive(Debug)]
struct Activation {
    request: usize,
    function: String,
    trigger: Trigger,
    parent: Option<usize>,
    fan_out_index: u32,
    steps: Vec<StepRecord>,
    cold: bool,
    effect: Option<FaultEffect>,
    incoming: Option<TraceContext>,
    controller: Option<OpenSpan>,
    controller_ctx: Option<TraceContext>,
    init: Option<OpenSpan>,
    invocation: Option<OpenSpan>,
    handler: Option<OpenSpan>,
    external: Option<OpenSpan>,
    finished_spans: Vec<Span>,
    env: BTreeMap<String, String>,
    phases: VecDeque<Phase>,
    current: Option<Phase>,
    gen: u64,
    deadline: VirtualTime,
    raised: Option<String>,
    outcome: Option<Outcome>,
    ledger_index: Option<usize>,
}

#[derive(Debug)]
struct RequestState {
    id: RequestId,
    index: u64,
    records: u32,
    images_per_record: u32,
    sampled: bool,
    fault: Option<FaultSpec>,
    injected: Option<InjectedFault>,
    gateway: Option<OpenSpan>,
    trace_id: Option<TraceId>,
    response: Option<ResponseEnvelope>,
}

/// A deployed composition plus all simulation state.
///
/// Single-threaded; move it between threads, do not share it.
#[derive(Debug)]
pub struct PlatformHandle {
    spec: CompositionSpec,
    profile: PlatformProfile,
    params: PlatformParams,
    tracing: TracingConfig,
    plan: FaultPlan,
    injector: FaultInjector,
    ids: IdGenerator,
    sampler_rng: ChaCha8Rng,
    tail_rng: ChaCha8Rng,
    pool: RuntimePool,
    queue: BinaryHeap<Reverse<(VirtualTime, u64, Event)>>,
    seq: u64,
    now: VirtualTime,
    next_arrival: VirtualTime,
    activations: Vec<Activation>,
    requests: Vec<RequestState>,
    ledger: Vec<InvocationRecord>,
    collector: Collector,
    logs: LogStore,
    stats: RunStats,
}

/// Validates and deploys a composition. The runtime pool starts empty, so
/// every function's first activation is cold.
pub fn deploy(
    spec: CompositionSpec,
    profile: PlatformProfile,
    tracing: TracingConfig,
    plan: FaultPlan,
) -> Result<PlatformHandle, PlatformError> {
    deploy_with(spec, profile, tracing, plan, PlatformParams::default())
}

pub fn deploy_with(
    spec: CompositionSpec,
    profile: PlatformProfile,
    tracing: TracingConfig,
    plan: FaultPlan,
    params: PlatformParams,
) -> Result<PlatformHandle, PlatformError> {
    spec.validate()?;
    tracing.validate().map_err(PlatformError::Tracing)?;
    plan.validate_for(&spec)?;
    let seed = plan.seed;
    let collector = if tracing.collector_available {
        Collector::new()
    } else {
        Collector::unavailable()
    };
    Ok(PlatformHandle {
        injector: plan.injector(),
        ids: IdGenerator::new(seed),
        sampler_rng: ChaCha8Rng::seed_from_u64(seed ^ SAMPLER_STREAM),
        tail_rng: ChaCha8Rng::seed_from_u64(seed ^ TAIL_STREAM),
        pool: RuntimePool::new(params.cold_start_ms, params.warm_ttl_ms),
        queue: BinaryHeap::new(),
        seq: 0,
        now: VirtualTime::ZERO,
        next_arrival: VirtualTime::ZERO,
        activations: Vec::new(),
        requests: Vec::new(),
        ledger: Vec::new(),
        collector,
        logs: LogStore::new(),
        stats: RunStats::default(),
        spec,
        profile,
        params,
        tracing,
        plan,
    })
}

impl PlatformHandle {
    pub fn spec(&self) -> &CompositionSpec {
        &self.spec
    }

    pub fn profile(&self) -> &PlatformProfile {
        &self.profile
    }

    pub fn tracing(&self) -> &TracingConfig {
        &self.tracing
    }

    pub fn params(&self) -> &PlatformParams {
        &self.params
    }

    pub fn fault_plan(&self) -> &FaultPlan {
        &self.plan
    }

    pub fn function_count(&self) -> usize {
        self.spec.functions.len()
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn collector(&self) -> &Collector {
        &self.collector
    }

    pub fn logs(&self) -> &LogStore {
        &self.logs
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn pool_mut(&mut self) -> &mut RuntimePool {
        &mut self.pool
    }

    /// Ledger in deterministic order: start time, then activation order.
    pub fn ledger(&self) -> &[InvocationRecord] {
        &self.ledger
    }

    /// Empties the warm pool; later activations start cold again.
    pub fn redeploy(&mut self) {
        self.pool.clear();
    }

    /// Runs one client request and everything it triggers to quiescence.
    pub fn submit_request(&mut self, payload: RequestPayload, client_sample_flag: bool) -> Result<ResponseEnvelope, PlatformError> {
        let request = self.open_request(payload, client_sample_flag);
        let arrival = self.next_arrival.max(self.now);
        self.next_arrival = arrival + self.params.request_gap_ms;
        self.schedule(arrival, Event::Arrive { request });
        self.run_to_quiescence()?;
        Ok(self.requests[request].response.clone().expect("entry activation finished"))
    }

    /// Runs a single activation of `function` outside any client request
    /// pipeline and returns its ledger entry.
    pub fn execute_invocation(
        &mut self,
        function: &str,
        trigger: Trigger,
        context: Option<TraceContext>,
    ) -> Result<InvocationRecord, PlatformError> {
        if !self.spec.functions.contains_key(function) {
            return Err(PlatformError::UnknownFunction(function.to_string()));
        }
        let request = self.open_request(RequestPayload::default(), false);
        self.requests[request].sampled = context.is_some_and(|c| c.sampled);
        let at = self.next_arrival.max(self.now);
        self.next_arrival = at + self.params.request_gap_ms;
        self.now = at;
        let act = self.start_activation(request, function, trigger, None, 0, context);
        self.run_to_quiescence()?;
        let index = self.activations[act].ledger_index.expect("activation finished");
        Ok(self.ledger[index].clone())
    }

    /// Drains the event queue and returns the ledger.
    pub fn run_to_quiescence(&mut self) -> Result<Vec<InvocationRecord>, PlatformError> {
        while let Some(Reverse((at, _, event))) = self.queue.pop() {
            self.stats.events += 1;
            if self.stats.events > self.params.max_events {
                return Err(PlatformError::EventLimit {
                    limit: self.params.max_events,
                    at,
                    last: format!("{event:?}"),
                });
            }
            // Cancelled timers must not move the clock.
            if self.is_live(&event) {
                self.now = at;
                self.dispatch(event);
            }
        }
        self.ledger.sort_by_key(|r| (r.start(), r.invocation_id));
        for (i, rec) in self.ledger.iter().enumerate() {
            self.activations[rec.invocation_id as usize].ledger_index = Some(i);
        }
        Ok(self.ledger.clone())
    }

    /// Summaries of every request submitted so far.
    pub fn requests(&self) -> Vec<RequestSummary> {
        self.requests
            .iter()
            .filter_map(|r| {
                Some(RequestSummary {
                    request_id: r.id.clone(),
                    request_index: r.index,
                    sampled: r.sampled,
                    trace_id: r.trace_id,
                    entry: self.spec.entry.clone(),
                    response: r.response.clone()?,
                    ground_truth: GroundTruth {
                        request_id: r.id.clone(),
                        injected: r.injected.clone().or_else(|| {
                            r.fault.as_ref().map(|f| InjectedFault {
                                scenario: f.scenario,
                                mechanism: f.mechanism,
                                target_function: f.target_function.clone(),
                                injection_time: None,
                            })
                        }),
                    },
                })
            })
            .collect()
    }

    fn open_request(&mut self, mut payload: RequestPayload, client_sample_flag: bool) -> usize {
        let index = self.requests.len() as u64;
        if client_sample_flag {
            payload
                .metadata
                .headers
                .insert(self.tracing.sampling.event_flag_header.clone(), "1".into());
        }
        let sampled = self.tracing.mode != TracingMode::None
            && sample_decision(&self.tracing.sampling, &payload.metadata, &mut self.sampler_rng);
        let fault = self.injector.draw(index);
        self.requests.push(RequestState {
            id: format!("req-{index:06}"),
            index,
            records: payload.records,
            images_per_record: payload.images_per_record,
            sampled,
            fault,
            injected: None,
            gateway: None,
            trace_id: None,
            response: None,
        });
        self.requests.len() - 1
    }

    fn schedule(&mut self, at: VirtualTime, event: Event) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, event)));
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Arrive { request } => self.arrive(request),
            Event::Allocate { act } => self.allocate(act),
            Event::InitDone { act } => self.init_done(act),
            Event::PhaseDone { act, .. } => self.phase_done(act),
            Event::Deadline { act, .. } => self.timeout(act),
            Event::DeadlineFlush { act, .. } => self.deadline_flush(act),
            Event::ChildDone { act, child, .. } => self.child_done(act, child),
        }
    }

    fn is_live(&self, event: &Event) -> bool {
        match *event {
            Event::PhaseDone { act, gen }
            | Event::Deadline { act, gen }
            | Event::DeadlineFlush { act, gen }
            | Event::ChildDone { act, gen, .. } => self.live(act, gen),
            _ => true,
        }
    }

    fn live(&self, act: usize, gen: u64) -> bool {
        let a = &self.activations[act];
        a.gen == gen && a.outcome.is_none()
    }

    fn log(&mut self, act: usize, level: LogLevel, origin: LogOrigin, message: String) {
        let a = &self.activations[act];
        let line = LogLine {
            time: self.now,
            level,
            message,
            request_id: self.requests[a.request].id.clone(),
            origin,
        };
        let function = a.function.clone();
        self.logs.append(&function, line);
    }

    fn report_platform(&mut self, spans: Vec<Span>) {
        if !spans.is_empty() {
            self.stats.platform_batches += 1;
            report_spans(&mut self.collector, spans);
        }
    }

    fn arrive(&mut self, request: usize) {
        let entry = self.spec.entry.clone();
        let sampled = self.requests[request].sampled;
        let gateway = platform_hook(self.tracing.mode, PlatformEvent::GatewayReceived, None, sampled, &mut self.ids, &entry, self.now);
        let parent = gateway.as_ref().map(|g| g.context);
        if let Some(g) = &gateway {
            self.requests[request].trace_id = Some(g.context.trace_id);
        }
        self.requests[request].gateway = gateway;
        self.start_activation(request, &entry, Trigger::Entry, None, 0, parent);
    }

    /// Validation and resource allocation; the controller span covers both.
    fn start_activation(
        &mut self,
        request: usize,
        function: &str,
        trigger: Trigger,
        parent: Option<usize>,
        fan_out_index: u32,
        incoming: Option<TraceContext>,
    ) -> usize {
        let id = self.activations.len();
        let now = self.now;
        let step = self.params.step_ms;
        let steps = vec![
            StepRecord {
                step: Step::Validation,
                start: now,
                end: now + step,
            },
            StepRecord {
                step: Step::ResourceAllocation,
                start: now + step,
                end: now + 2 * step,
            },
        ];

        let mut controller = None;
        if self.tracing.mode.is_platform() {
            let sampled = self.requests[request].sampled;
            controller = platform_hook(self.tracing.mode, PlatformEvent::ControllerScheduled, incoming.as_ref(), sampled, &mut self.ids, function, now);
            if let Some(c) = controller.as_mut() {
                let label = match trigger {
                    Trigger::Entry => "entry",
                    Trigger::Sync => "sync",
                    Trigger::Async => "async",
                };
                c.tag(TRIGGER_TAG, label);
                if incoming.is_none() {
                    self.requests[request].trace_id.get_or_insert(c.context.trace_id);
                }
            }
        }

        let effect = self.take_fault(request, function, trigger, parent);

        self.activations.push(Activation {
            request,
            function: function.to_string(),
            trigger,
            parent,
            fan_out_index,
            steps,
            cold: false,
            effect,
            incoming,
            controller_ctx: controller.as_ref().map(|c| c.context),
            controller,
            init: None,
            invocation: None,
            handler: None,
            external: None,
            finished_spans: Vec::new(),
            env: BTreeMap::new(),
            phases: VecDeque::new(),
            current: None,
            gen: 0,
            deadline: VirtualTime::ZERO,
            raised: None,
            outcome: None,
            ledger_index: None,
        });
        self.schedule(now + 2 * step, Event::Allocate { act: id });
        id
    }

    fn take_fault(&mut self, request: usize, function: &str, trigger: Trigger, parent: Option<usize>) -> Option<FaultEffect> {
        let spec = self.requests[request].fault.as_ref().filter(|f| f.target_function == function)?.clone();
        let caller_remaining = parent.map(|p| self.activations[p].deadline.saturating_sub(self.now));
        let ctx = InvocationContext {
            function,
            trigger,
            external_calls: &self.spec.functions[function].external_calls,
            caller_remaining,
            cold_start_ms: self.params.cold_start_ms,
        };
        // A fault that does not fit this activation stays pending for a
        // later activation of the same function.
        let effect = apply_fault(&spec, &ctx).ok()?;
        let r = &mut self.requests[request];
        r.fault = None;
        r.injected = Some(InjectedFault {
            scenario: spec.scenario,
            mechanism: spec.mechanism,
            target_function: spec.target_function,
            injection_time: Some(self.now),
        });
        Some(effect)
    }

    fn allocate(&mut self, act: usize) {
        let now = self.now;
        if let Some(c) = self.activations[act].controller.take() {
            let span = c.finish(now);
            self.report_platform(vec![span]);
        }
        let function = self.activations[act].function.clone();
        let forced = match &self.activations[act].effect {
            Some(FaultEffect::SlowColdStart { init_ms }) => Some(*init_ms),
            Some(FaultEffect::FailInit { .. }) => Some(self.params.cold_start_ms),
            _ => None,
        };
        let warm = forced.is_none() && self.pool.acquire(&function, now);
        if warm {
            self.start_body(act);
            return;
        }
        let init_ms = forced.unwrap_or(self.params.cold_start_ms);
        let a = &mut self.activations[act];
        a.cold = true;
        a.steps.push(StepRecord {
            step: Step::ColdStartInit,
            start: now,
            end: now + init_ms,
        });
        let parent = self.activation_platform_parent(act);
        let sampled = self.requests[self.activations[act].request].sampled;
        self.activations[act].init = platform_hook(self.tracing.mode, PlatformEvent::InvokerInit, parent.as_ref(), sampled, &mut self.ids, &function, now);
        self.schedule(now + init_ms, Event::InitDone { act });
    }

    /// Parent context for invoker spans: the controller span's context.
    fn activation_platform_parent(&self, act: usize) -> Option<TraceContext> {
        self.activations[act].controller_ctx
    }

    fn init_done(&mut self, act: usize) {
        let now = self.now;
        if let Some(mut init) = self.activations[act].init.take() {
            if let Some(FaultEffect::FailInit { message }) = &self.activations[act].effect {
                init.mark_error(message, "ImportError");
            }
            let span = init.finish(now);
            self.report_platform(vec![span]);
        }
        if let Some(FaultEffect::FailInit { message }) = self.activations[act].effect.clone() {
            self.log(act, LogLevel::Error, LogOrigin::Runtime, message.clone());
            self.finish(act, Outcome::Error, Some(message), false);
            return;
        }
        self.start_body(act);
    }

    fn start_body(&mut self, act: usize) {
        let now = self.now;
        let mode = self.tracing.mode;
        let (request, function, trigger) = {
            let a = &self.activations[act];
            (a.request, a.function.clone(), a.trigger)
        };
        let fspec = self.spec.functions[&function].clone();
        let sampled = self.requests[request].sampled;

        {
            let a = &mut self.activations[act];
            a.steps.push(StepRecord {
                step: Step::Invocation,
                start: now,
                end: now,
            });
            a.deadline = now + fspec.timeout_ms;
        }

        // Platform side: invocation span and context injection.
        let parent = self.activation_platform_parent(act);
        let cold = self.activations[act].cold;
        if let Some(mut inv) = platform_hook(mode, PlatformEvent::InvokerRun, parent.as_ref(), sampled, &mut self.ids, &function, now) {
            inv.tag(tags::COLD, cold.to_string());
            inject_context(&mut self.activations[act].env, &inv.context);
            self.activations[act].invocation = Some(inv);
        }

        // In-function handler span.
        let handler = match mode {
            TracingMode::None => None,
            TracingMode::DeveloperDriven => self.developer_handler(act, &function, fspec.instrumented, trigger, sampled),
            _ => extract_context(&self.activations[act].env)
                .and_then(|ctx| instrument_call(mode, FunctionStep::Handler, fspec.instrumented, &ctx, &mut self.ids, &function, now)),
        };
        if trigger == Trigger::Entry && mode == TracingMode::DeveloperDriven {
            if let Some(h) = &handler {
                self.requests[request].trace_id.get_or_insert(h.context.trace_id);
            }
        }
        self.activations[act].handler = handler;

        self.log(act, LogLevel::Info, LogOrigin::Runtime, format!("START RequestId: {}", self.requests[request].id));

        let gen = self.activations[act].gen;
        let deadline = self.activations[act].deadline;
        self.schedule(deadline, Event::Deadline { act, gen });
        if mode == TracingMode::DeveloperDriven
            && self.activations[act].handler.is_some()
            && self.tracing.deadline_flush_margin_ms < fspec.timeout_ms
        {
            self.schedule(
                deadline.saturating_sub(VirtualTime(self.tracing.deadline_flush_margin_ms)),
                Event::DeadlineFlush { act, gen },
            );
        }

        let phases = self.plan_phases(act, &fspec);
        self.activations[act].phases = phases;
        self.advance(act);
    }

    fn developer_handler(&mut self, act: usize, function: &str, instrumented: bool, trigger: Trigger, sampled: bool) -> Option<OpenSpan> {
        if !instrumented {
            return None;
        }
        let now = self.now;
        // Developer-driven context travels in the trigger payload.
        match self.activations[act].incoming {
            Some(ctx) => {
                let mut span = instrument_call(TracingMode::DeveloperDriven, FunctionStep::Handler, true, &ctx, &mut self.ids, function, now)?;
                let how = if trigger == Trigger::Async { "async_payload" } else { "sync_payload" };
                span.tag(tags::PROPAGATION, how);
                Some(span)
            }
            // No context arrived: the function starts its own trace under the
            // request's sampling decision.
            None if sampled => Some(developer_root(&mut self.ids, true, function, now)),
            None => None,
        }
    }

    fn tail_delay(&mut self) -> u64 {
        if self.tracing.tail_probability > 0.0 && self.tail_rng.gen::<f64>() < self.tracing.tail_probability {
            self.tracing.tail_delay_ms
        } else {
            0
        }
    }

    fn plan_phases(&mut self, act: usize, fspec: &super::FunctionSpec) -> VecDeque<Phase> {
        let mut phases = VecDeque::new();
        let a = &self.activations[act];
        let (records, images) = {
            let r = &self.requests[a.request];
            (r.records, r.images_per_record)
        };
        let traced = a.invocation.is_some();
        let has_handler = a.handler.is_some();
        let effect = a.effect.clone();
        let function = a.function.clone();

        if self.tracing.mode.is_platform() && traced {
            let overhead = self.tracing.platform_activation_overhead_ms + self.tail_delay();
            phases.push_back(Phase::Overhead(overhead));
        }
        if let Some(FaultEffect::KillContainer {
            after_ms_fraction_permille,
            message,
        }) = &effect
        {
            phases.push_back(Phase::Work(fspec.base_exec_ms * *after_ms_fraction_permille as u64 / 1000));
            phases.push_back(Phase::Kill(message.clone()));
            return phases;
        }
        phases.push_back(Phase::Work(fspec.base_exec_ms));
        if let Some(FaultEffect::Raise { message }) = &effect {
            phases.push_back(Phase::Raise(message.clone()));
        }
        for endpoint in &fspec.external_calls {
            phases.push_back(Phase::External(endpoint.clone()));
        }
        let edges: Vec<_> = self.spec.outgoing(&function).cloned().collect();
        for edge in edges.iter().filter(|e| e.mode == EdgeMode::Sync) {
            for index in 0..edge.fan_out.count(records, images) {
                phases.push_back(Phase::SyncCall {
                    callee: edge.callee.clone(),
                    index,
                });
            }
        }
        for edge in edges.iter().filter(|e| e.mode == EdgeMode::Async) {
            phases.push_back(Phase::TriggerAsync {
                callee: edge.callee.clone(),
                count: edge.fan_out.count(records, images),
            });
        }
        if self.tracing.mode == TracingMode::DeveloperDriven && has_handler {
            let cost = self.tracing.report_overhead_ms + self.tail_delay();
            phases.push_back(Phase::Flush(cost));
        }
        phases
    }

    /// Starts phases until one needs virtual time to pass.
    fn advance(&mut self, act: usize) {
        loop {
            let Some(phase) = self.activations[act].phases.pop_front() else {
                let raised = self.activations[act].raised.clone();
                match raised {
                    Some(msg) => self.finish(act, Outcome::Error, Some(msg), true),
                    None => {
                        let (rid, start) = {
                            let a = &self.activations[act];
                            (self.requests[a.request].id.clone(), a.steps.last().map(|s| s.start).unwrap_or_default())
                        };
                        let took = (self.now - start).millis();
                        self.log(act, LogLevel::Info, LogOrigin::Runtime, format!("END RequestId: {rid} Duration: {took} ms"));
                        self.finish(act, Outcome::Success, None, true);
                    }
                }
                return;
            };
            let now = self.now;
            let gen = self.activations[act].gen;
            match &phase {
                Phase::Overhead(ms) | Phase::Work(ms) => {
                    let ms = *ms;
                    self.activations[act].current = Some(phase);
                    self.schedule(now + ms, Event::PhaseDone { act, gen });
                    return;
                }
                Phase::Flush(ms) => {
                    let ms = *ms;
                    let a = &mut self.activations[act];
                    if let Some(h) = a.handler.take() {
                        a.finished_spans.push(h.finish(now));
                    }
                    a.current = Some(phase);
                    self.schedule(now + ms, Event::PhaseDone { act, gen });
                    return;
                }
                Phase::Raise(message) => {
                    self.raise(act, message.clone());
                }
                Phase::Kill(message) => {
                    let message = message.clone();
                    self.log(act, LogLevel::Error, LogOrigin::Platform, message.clone());
                    let a = &mut self.activations[act];
                    // The container is gone; spans still inside it are lost.
                    a.handler = None;
                    a.external = None;
                    a.finished_spans.clear();
                    if let Some(inv) = a.invocation.as_mut() {
                        inv.mark_error(&message, "ContainerKilled");
                    }
                    self.finish(act, Outcome::Error, Some(message), false);
                    return;
                }
                Phase::External(endpoint) => {
                    let endpoint = endpoint.clone();
                    let function = self.activations[act].function.clone();
                    let instrumented = self.spec.functions[&function].instrumented;
                    let parent = {
                        let a = &self.activations[act];
                        a.handler
                            .as_ref()
                            .map(|h| h.context)
                            .or_else(|| (self.tracing.mode == TracingMode::PlatformSupportedAuto).then(|| a.invocation.as_ref().map(|i| i.context)).flatten())
                    };
                    if let Some(p) = parent {
                        self.activations[act].external =
                            instrument_call(self.tracing.mode, FunctionStep::ExternalCall(&endpoint), instrumented, &p, &mut self.ids, &function, now);
                    }
                    let hangs = matches!(&self.activations[act].effect, Some(FaultEffect::HangExternalCall { endpoint: e }) if *e == endpoint);
                    self.activations[act].current = Some(phase);
                    if !hangs {
                        self.schedule(now + self.params.external_call_ms, Event::PhaseDone { act, gen });
                    }
                    return;
                }
                Phase::SyncCall { callee, index } => {
                    let (callee, index) = (callee.clone(), *index);
                    let request = self.activations[act].request;
                    let ctx = self.child_context(act);
                    self.activations[act].current = Some(phase);
                    self.start_activation(request, &callee, Trigger::Sync, Some(act), index, ctx);
                    return;
                }
                Phase::TriggerAsync { callee, count } => {
                    let (callee, count) = (callee.clone(), *count);
                    let request = self.activations[act].request;
                    let ctx = self.child_context(act);
                    for index in 0..count {
                        self.start_activation(request, &callee, Trigger::Async, Some(act), index, ctx);
                    }
                }
            }
        }
    }

    /// Context handed to an activation this one triggers, if any.
    fn child_context(&self, act: usize) -> Option<TraceContext> {
        let a = &self.activations[act];
        match self.tracing.mode {
            TracingMode::None => None,
            TracingMode::DeveloperDriven => a.handler.as_ref().map(|s| s.context),
            _ => a.handler.as_ref().or(a.invocation.as_ref()).map(|s| s.context),
        }
    }

    fn raise(&mut self, act: usize, message: String) {
        let class = crate::model::message_class(&message);
        self.log(act, LogLevel::Error, LogOrigin::Function, message.clone());
        let a = &mut self.activations[act];
        if let Some(h) = a.handler.as_mut() {
            h.mark_error(&message, &class);
        }
        // Everything after the raise is skipped except the reporter's flush.
        a.phases.retain(|p| matches!(p, Phase::Flush(_)));
        a.raised = Some(message);
    }

    fn phase_done(&mut self, act: usize) {
        let now = self.now;
        let current = self.activations[act].current.take();
        match current {
            Some(Phase::External(_)) => {
                let a = &mut self.activations[act];
                if let Some(ext) = a.external.take() {
                    a.finished_spans.push(ext.finish(now));
                }
            }
            Some(Phase::Flush(_)) => {
                let spans = std::mem::take(&mut self.activations[act].finished_spans);
                if !spans.is_empty() {
                    self.stats.flushes += 1;
                    report_spans(&mut self.collector, spans);
                }
            }
            _ => {}
        }
        self.advance(act);
    }

    fn child_done(&mut self, act: usize, child: usize) {
        let c = &self.activations[child];
        if c.outcome != Some(Outcome::Success) {
            let message = format!("DownstreamError: {} did not complete successfully", c.function);
            self.raise(act, message);
        }
        self.advance(act);
    }

    fn timeout(&mut self, act: usize) {
        let now = self.now;
        let timeout_ms = self.spec.functions[&self.activations[act].function].timeout_ms;
        let message = format!("Timeout: the action exceeded its time limit of {timeout_ms} milliseconds");
        self.log(act, LogLevel::Error, LogOrigin::Platform, message.clone());
        let platform = self.tracing.mode.is_platform();
        let a = &mut self.activations[act];
        if platform {
            for span in [a.external.take(), a.handler.take()].into_iter().flatten() {
                let mut span = span;
                span.mark_timeout(&message);
                a.finished_spans.push(span.finish(now));
            }
            if let Some(inv) = a.invocation.as_mut() {
                inv.mark_timeout(&message);
            }
        } else {
            // Without a deadline flush the in-function reporter dies with
            // the runtime.
            a.external = None;
            a.handler = None;
            a.finished_spans.clear();
        }
        self.finish(act, Outcome::Timeout, Some(message), false);
    }

    /// The in-function reporter's last chance before the deadline: close
    /// open spans as timed out and send them.
    fn deadline_flush(&mut self, act: usize) {
        let now = self.now;
        let timeout_ms = self.spec.functions[&self.activations[act].function].timeout_ms;
        let message = format!("Timeout: the action exceeded its time limit of {timeout_ms} milliseconds");
        let a = &mut self.activations[act];
        let mut batch = std::mem::take(&mut a.finished_spans);
        for span in [a.external.take(), a.handler.take()].into_iter().flatten() {
            let mut span = span;
            span.mark_timeout(&message).tag(tags::FLUSH, "deadline");
            batch.push(span.finish(now));
        }
        if !batch.is_empty() {
            self.stats.flushes += 1;
            report_spans(&mut self.collector, batch);
        }
    }

    fn finish(&mut self, act: usize, outcome: Outcome, message: Option<String>, runtime_survives: bool) {
        let now = self.now;
        let platform = self.tracing.mode.is_platform();
        let ledger_id = act as u64;
        let (request, function, parent, trigger) = {
            let a = &mut self.activations[act];
            a.outcome = Some(outcome);
            a.gen += 1;
            if let Some(step) = a.steps.iter_mut().find(|s| s.step == Step::Invocation) {
                step.end = now;
            }
            (a.request, a.function.clone(), a.parent, a.trigger)
        };

        if platform {
            let a = &mut self.activations[act];
            let mut batch = std::mem::take(&mut a.finished_spans);
            if let Some(mut h) = a.handler.take() {
                if let (Some(msg), false) = (&message, h.tags.contains_key(tags::ERROR)) {
                    h.mark_error(msg, &crate::model::message_class(msg));
                }
                batch.push(h.finish(now));
            }
            if let Some(mut inv) = a.invocation.take() {
                if let (Some(msg), false) = (&message, inv.tags.contains_key(tags::ERROR)) {
                    inv.mark_error(msg, &crate::model::message_class(msg));
                }
                batch.push(inv.finish(now));
            }
            self.report_platform(batch);
        } else {
            let a = &mut self.activations[act];
            a.handler = None;
            a.external = None;
            a.finished_spans.clear();
        }

        if runtime_survives {
            self.pool.release(&function, now);
        }

        let a = &self.activations[act];
        self.ledger.push(InvocationRecord {
            invocation_id: ledger_id,
            request_id: self.requests[request].id.clone(),
            request_index: self.requests[request].index,
            function: function.clone(),
            steps: a.steps.clone(),
            outcome,
            cold: a.cold,
            parent_invocation: parent.map(|p| p as u64),
            trigger_mode: trigger,
            fan_out_index: a.fan_out_index,
        });
        self.activations[act].ledger_index = Some(self.ledger.len() - 1);

        match (trigger, parent) {
            (Trigger::Sync, Some(p)) => {
                let gen = self.activations[p].gen;
                self.schedule(now, Event::ChildDone { act: p, gen, child: act });
            }
            (Trigger::Entry, None) if self.requests[request].response.is_none() => {
                self.respond(request, outcome, message);
            }
            _ => {}
        }
    }

    fn respond(&mut self, request: usize, outcome: Outcome, message: Option<String>) {
        let now = self.now;
        let code = match (self.profile.error_response_code_policy, outcome) {
            (ResponseCodePolicy::AlwaysSuccessCode, _) | (ResponseCodePolicy::ErrorCodeOnFailure, Outcome::Success) => ResponseCode::Success,
            (ResponseCodePolicy::ErrorCodeOnFailure, _) => ResponseCode::Error,
        };
        if let Some(mut gw) = self.requests[request].gateway.take() {
            gw.tag(tags::STATUS_CODE, code.http_status().to_string());
            let span = gw.finish(now);
            self.report_platform(vec![span]);
        }
        let r = &mut self.requests[request];
        r.response = Some(ResponseEnvelope {
            request_id: r.id.clone(),
            code,
            body: ResponseBody {
                status: outcome.content(),
                message,
            },
            time: now,
        });
    }
}
