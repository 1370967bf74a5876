//! The two tracing architectures and their shared machinery.
//!
//! Developer-driven tracing lives inside function bodies: a handler span, spans
//! around external calls, and a flush to the backend before the function
//! returns. Platform-supported tracing adds gateway, controller, init and
//! invocation spans from the platform itself and hands the active context to
//! the function through its environment.

mod collector;
mod sampler;
pub mod zipkin;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{child_context, new_root_context, tags, IdGenerator, Span, SpanId, SpanKind, TraceContext, VirtualTime};

pub use collector::{report_spans, Collector};
pub use sampler::{sample_decision, RequestMetadata, SamplerConfig, SamplerKind, DEFAULT_EVENT_FLAG_HEADER};
pub use zipkin::{export_zipkin_v2, ZipkinSpan, EPOCH_OFFSET_MICROS};

/// Environment key carrying the serialised context into an activation.
pub const TRACE_CONTEXT_ENV: &str = "TRACE_CONTEXT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TracingMode {
    None,
    DeveloperDriven,
    PlatformSupported,
    /// Platform-supported tracing that also wraps external calls made by
    /// uninstrumented code, the way patched provider SDKs do.
    PlatformSupportedAuto,
}

impl TracingMode {
    pub fn is_platform(self) -> bool {
        matches!(self, TracingMode::PlatformSupported | TracingMode::PlatformSupportedAuto)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TracingMode::None => "none",
            TracingMode::DeveloperDriven => "developer_driven",
            TracingMode::PlatformSupported => "platform_supported",
            TracingMode::PlatformSupportedAuto => "platform_supported_auto",
        }
    }

    pub fn parse(s: &str) -> Option<TracingMode> {
        match s {
            "none" => Some(TracingMode::None),
            "developer_driven" => Some(TracingMode::DeveloperDriven),
            "platform_supported" => Some(TracingMode::PlatformSupported),
            "platform_supported_auto" => Some(TracingMode::PlatformSupportedAuto),
            _ => None,
        }
    }
}

/// Tracing setup for one deployment, including the cost knobs each
/// architecture charges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TracingConfig {
    pub mode: TracingMode,
    pub sampling: SamplerConfig,
    /// Charged to function time per developer-driven flush.
    pub report_overhead_ms: u64,
    /// The in-function reporter flushes open spans this long before the
    /// function deadline.
    pub deadline_flush_margin_ms: u64,
    /// Charged to function time per traced activation in platform modes
    /// (context capture and injection by the invoker and runtime).
    pub platform_activation_overhead_ms: u64,
    /// Probability that a traced activation suffers a large reporting stall.
    pub tail_probability: f64,
    pub tail_delay_ms: u64,
    pub collector_available: bool,
}

impl Default for TracingConfig {
    fn default() -> Self {
        TracingConfig {
            mode: TracingMode::None,
            sampling: SamplerConfig::default(),
            report_overhead_ms: 5,
            deadline_flush_margin_ms: 500,
            platform_activation_overhead_ms: 7,
            tail_probability: 0.0,
            tail_delay_ms: 60_000,
            collector_available: true,
        }
    }
}

impl TracingConfig {
    pub fn with_mode(mode: TracingMode) -> Self {
        TracingConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.sampling.validate()?;
        if !(0.0..=1.0).contains(&self.tail_probability) {
            return Err(format!("tail probability {} outside [0, 1]", self.tail_probability));
        }
        Ok(())
    }
}

/// A span that has started but not finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenSpan {
    pub context: TraceContext,
    pub parent_span_id: Option<SpanId>,
    pub name: String,
    pub kind: SpanKind,
    pub start: VirtualTime,
    pub tags: BTreeMap<String, String>,
    pub component: String,
}

impl OpenSpan {
    pub fn root(ids: &mut IdGenerator, sampled: bool, name: impl Into<String>, kind: SpanKind, component: impl Into<String>, start: VirtualTime) -> Self {
        OpenSpan {
            context: new_root_context(ids, sampled),
            parent_span_id: None,
            name: name.into(),
            kind,
            start,
            tags: BTreeMap::new(),
            component: component.into(),
        }
    }

    pub fn child(parent: &TraceContext, ids: &mut IdGenerator, name: impl Into<String>, kind: SpanKind, component: impl Into<String>, start: VirtualTime) -> Self {
        OpenSpan {
            context: child_context(parent, ids),
            parent_span_id: Some(parent.span_id),
            name: name.into(),
            kind,
            start,
            tags: BTreeMap::new(),
            component: component.into(),
        }
    }

    pub fn tag(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.tags.insert(key.to_string(), value.into());
        self
    }

    pub fn mark_error(&mut self, message: &str, class: &str) -> &mut Self {
        self.tag(tags::ERROR, "true")
            .tag(tags::ERROR_MESSAGE, message)
            .tag(tags::FAULT_TYPE, class)
    }

    pub fn mark_timeout(&mut self, message: &str) -> &mut Self {
        self.mark_error(message, "Timeout").tag(tags::TIMEOUT, "true")
    }

    pub fn finish(self, end: VirtualTime) -> Span {
        debug_assert!(end >= self.start);
        Span {
            context: self.context,
            parent_span_id: self.parent_span_id,
            name: self.name,
            kind: self.kind,
            start: self.start,
            end,
            tags: self.tags,
            component: self.component,
        }
    }
}

/// Platform component events that can open a span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformEvent {
    GatewayReceived,
    ControllerScheduled,
    InvokerInit,
    InvokerRun,
}

pub const GATEWAY_COMPONENT: &str = "api-gateway";
pub const CONTROLLER_COMPONENT: &str = "controller";
pub const INVOKER_COMPONENT: &str = "invoker";

/// Opens a platform-side span, or returns `None` when the mode has no
/// platform instrumentation or the trace is not sampled.
///
/// With no `parent` a new trace is started; `sampled` then decides whether it
/// is recorded.
pub fn platform_hook(
    mode: TracingMode,
    event: PlatformEvent,
    parent: Option<&TraceContext>,
    sampled: bool,
    ids: &mut IdGenerator,
    function: &str,
    at: VirtualTime,
) -> Option<OpenSpan> {
    if !mode.is_platform() {
        return None;
    }
    let (kind, component, name) = match event {
        PlatformEvent::GatewayReceived => (SpanKind::Gateway, GATEWAY_COMPONENT, format!("POST /{function}")),
        PlatformEvent::ControllerScheduled => (SpanKind::Controller, CONTROLLER_COMPONENT, format!("schedule {function}")),
        PlatformEvent::InvokerInit => (SpanKind::Init, INVOKER_COMPONENT, format!("init {function}")),
        PlatformEvent::InvokerRun => (SpanKind::Invocation, INVOKER_COMPONENT, format!("invoke {function}")),
    };
    let mut span = match parent {
        Some(p) if !p.sampled => return None,
        Some(p) => OpenSpan::child(p, ids, name, kind, component, at),
        None if !sampled => return None,
        None => OpenSpan::root(ids, true, name, kind, component, at),
    };
    span.tag(tags::FUNCTION, function);
    Some(span)
}

/// A step inside a function body that instrumentation can wrap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FunctionStep<'a> {
    Handler,
    ExternalCall(&'a str),
}

/// Opens an in-function span. Platform steps are never reachable from here.
///
/// Needs an instrumented function, except for external calls under
/// [`TracingMode::PlatformSupportedAuto`].
pub fn instrument_call(
    mode: TracingMode,
    step: FunctionStep<'_>,
    instrumented: bool,
    parent: &TraceContext,
    ids: &mut IdGenerator,
    function: &str,
    at: VirtualTime,
) -> Option<OpenSpan> {
    if mode == TracingMode::None || !parent.sampled {
        return None;
    }
    let allowed = match step {
        FunctionStep::Handler => instrumented,
        FunctionStep::ExternalCall(_) => instrumented || mode == TracingMode::PlatformSupportedAuto,
    };
    if !allowed {
        return None;
    }
    let mut span = match step {
        FunctionStep::Handler => OpenSpan::child(parent, ids, format!("{function}.handler"), SpanKind::FunctionInternal, function, at),
        FunctionStep::ExternalCall(endpoint) => {
            let mut s = OpenSpan::child(parent, ids, format!("call {endpoint}"), SpanKind::ExternalCall, function, at);
            s.tag(tags::PEER, endpoint);
            s
        }
    };
    span.tag(tags::FUNCTION, function);
    Some(span)
}

/// Starts a function-local trace for a developer-driven handler that received
/// no context from its caller.
pub fn developer_root(ids: &mut IdGenerator, sampled: bool, function: &str, at: VirtualTime) -> OpenSpan {
    let mut span = OpenSpan::root(ids, sampled, format!("{function}.handler"), SpanKind::FunctionInternal, function, at);
    span.tag(tags::FUNCTION, function);
    span
}

/// Writes the context into an activation environment. Unsampled contexts are
/// not propagated.
pub fn inject_context(env: &mut BTreeMap<String, String>, context: &TraceContext) {
    if context.sampled {
        env.insert(
            TRACE_CONTEXT_ENV.to_string(),
            format!("{}-{}-01", context.trace_id, context.span_id),
        );
    } else {
        env.remove(TRACE_CONTEXT_ENV);
    }
}

/// Reads a context written by [`inject_context`].
pub fn extract_context(env: &BTreeMap<String, String>) -> Option<TraceContext> {
    let raw = env.get(TRACE_CONTEXT_ENV)?;
    let mut parts = raw.split('-');
    let trace_id = crate::model::TraceId::parse_hex(parts.next()?)?;
    let span_id = SpanId::parse_hex(parts.next()?)?;
    let sampled = match parts.next()? {
        "01" => true,
        "00" => false,
        _ => return None,
    };
    if parts.next().is_some() {
        return None;
    }
    Some(TraceContext { trace_id, span_id, sampled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TraceId;

    fn ctx(sampled: bool) -> TraceContext {
        TraceContext {
            trace_id: TraceId(0xabc),
            span_id: SpanId(0x12),
            sampled,
        }
    }

    #[test]
    fn inject_serialises_context() {
        let mut env = BTreeMap::new();
        inject_context(&mut env, &ctx(true));
        assert_eq!(
            env[TRACE_CONTEXT_ENV],
            "00000000000000000000000000000abc-0000000000000012-01"
        );
        assert_eq!(extract_context(&env), Some(ctx(true)));
    }

    #[test]
    fn unsampled_not_injected() {
        let mut env = BTreeMap::new();
        inject_context(&mut env, &ctx(false));
        assert!(!env.contains_key(TRACE_CONTEXT_ENV));
        assert_eq!(extract_context(&env), None);
    }

    #[test]
    fn extract_rejects_garbage() {
        let mut env = BTreeMap::new();
        env.insert(TRACE_CONTEXT_ENV.to_string(), "abc-def-01".to_string());
        assert_eq!(extract_context(&env), None);
    }

    #[test]
    fn hooks_respect_mode() {
        let mut ids = IdGenerator::new(1);
        let parent = ctx(true);
        assert!(platform_hook(TracingMode::DeveloperDriven, PlatformEvent::InvokerRun, Some(&parent), true, &mut ids, "f", VirtualTime(0)).is_none());
        let run = platform_hook(TracingMode::PlatformSupported, PlatformEvent::InvokerRun, Some(&parent), true, &mut ids, "f", VirtualTime(0)).unwrap();
        assert_eq!(run.kind, SpanKind::Invocation);
        assert_eq!(run.parent_span_id, Some(parent.span_id));
        assert!(platform_hook(TracingMode::PlatformSupported, PlatformEvent::InvokerRun, Some(&ctx(false)), true, &mut ids, "f", VirtualTime(0)).is_none());
        let root = platform_hook(TracingMode::PlatformSupported, PlatformEvent::GatewayReceived, None, true, &mut ids, "f", VirtualTime(0)).unwrap();
        assert!(root.parent_span_id.is_none());
    }

    #[test]
    fn uninstrumented_function_yields_nothing_in_developer_mode() {
        let mut ids = IdGenerator::new(1);
        let p = ctx(true);
        assert!(instrument_call(TracingMode::DeveloperDriven, FunctionStep::Handler, false, &p, &mut ids, "f", VirtualTime(0)).is_none());
        assert!(instrument_call(TracingMode::DeveloperDriven, FunctionStep::ExternalCall("api"), false, &p, &mut ids, "f", VirtualTime(0)).is_none());
    }

    #[test]
    fn auto_mode_wraps_uninstrumented_external_calls() {
        let mut ids = IdGenerator::new(1);
        let p = ctx(true);
        let span = instrument_call(TracingMode::PlatformSupportedAuto, FunctionStep::ExternalCall("api"), false, &p, &mut ids, "f", VirtualTime(0)).unwrap();
        assert_eq!(span.kind, SpanKind::ExternalCall);
        assert!(instrument_call(TracingMode::PlatformSupported, FunctionStep::ExternalCall("api"), false, &p, &mut ids, "f", VirtualTime(0)).is_none());
    }

    #[test]
    fn collector_down_drops_batch() {
        let mut ids = IdGenerator::new(4);
        let span = developer_root(&mut ids, true, "f", VirtualTime(0)).finish(VirtualTime(3));
        let mut down = Collector::unavailable();
        assert!(!report_spans(&mut down, vec![span.clone()]));
        assert_eq!(down.dropped_batches(), 1);
        assert_eq!(down.span_count(), 0);
        let mut up = Collector::new();
        assert!(report_spans(&mut up, vec![span]));
        assert_eq!(up.trace_count(), 1);
    }

    #[test]
    fn zipkin_empty_and_root() {
        let mut c = Collector::new();
        assert_eq!(export_zipkin_v2(&c), b"[]");
        let mut ids = IdGenerator::new(8);
        let span = developer_root(&mut ids, true, "f", VirtualTime(2)).finish(VirtualTime(7));
        report_spans(&mut c, vec![span]);
        let doc: serde_json::Value = serde_json::from_slice(&export_zipkin_v2(&c)).unwrap();
        let arr = doc.as_array().unwrap();
        assert_eq!(arr.len(), 1);
        let obj = arr[0].as_object().unwrap();
        assert!(!obj.contains_key("parentId"));
        assert_eq!(obj["timestamp"], EPOCH_OFFSET_MICROS + 2000);
        assert_eq!(obj["duration"], 5000);
        assert_eq!(obj["localEndpoint"]["serviceName"], "f");
    }
}
