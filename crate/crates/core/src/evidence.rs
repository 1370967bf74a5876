//! Turns a finished run into evidence records, one channel at a time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{
    message_class, tags, Channel, Content, EvidenceFlag, EvidenceRecord, Position, RequestId, Span, SpanId, SpanKind, TraceId,
    VirtualTime,
};
use crate::platform::ResponseEnvelope;
use crate::trace::Collector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    Info,
    Error,
}

/// Who wrote a log line into a function's log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogOrigin {
    Function,
    Runtime,
    Platform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub time: VirtualTime,
    pub level: LogLevel,
    pub message: String,
    pub request_id: RequestId,
    pub origin: LogOrigin,
}

impl LogLine {
    pub fn is_timeout(&self) -> bool {
        self.origin == LogOrigin::Platform && message_class(&self.message) == "Timeout"
    }
}

/// Per-function append-only logs.
#[derive(Debug, Clone, Default)]
pub struct LogStore {
    per_function: BTreeMap<String, Vec<LogLine>>,
}

impl LogStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, function: &str, line: LogLine) {
        self.per_function.entry(function.to_string()).or_default().push(line);
    }

    pub fn lines(&self, function: &str) -> &[LogLine] {
        self.per_function.get(function).map_or(&[], Vec::as_slice)
    }

    pub fn functions(&self) -> impl Iterator<Item = &str> {
        self.per_function.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.per_function.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All evidence gathered for one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub request_id: RequestId,
    pub response: Vec<EvidenceRecord>,
    pub logs: Vec<EvidenceRecord>,
    pub traces: Vec<EvidenceRecord>,
}

impl EvidenceSet {
    pub fn channel(&self, channel: Channel) -> &[EvidenceRecord] {
        match channel {
            Channel::Response => &self.response,
            Channel::Log => &self.logs,
            Channel::Trace => &self.traces,
        }
    }
}

pub const RESPONSE_CODE_SOURCE: &str = "response.code";
pub const RESPONSE_BODY_SOURCE: &str = "response.body";

fn position_of(function: &str, entry: &str) -> Position {
    if function == entry {
        Position::Upstream
    } else {
        Position::Downstream
    }
}

/// Response channel: one record for the code, one for the body.
pub fn collect_response(envelope: &ResponseEnvelope) -> Vec<EvidenceRecord> {
    let code_content = match envelope.code {
        crate::platform::ResponseCode::Success => Content::Success,
        crate::platform::ResponseCode::Error => Content::Error,
    };
    vec![
        EvidenceRecord {
            channel: Channel::Response,
            source: RESPONSE_CODE_SOURCE.into(),
            position: Position::Client,
            content: code_content,
            message: None,
            request_id: envelope.request_id.clone(),
            time: envelope.time,
            flags: vec![],
        },
        EvidenceRecord {
            channel: Channel::Response,
            source: RESPONSE_BODY_SOURCE.into(),
            position: Position::Client,
            content: envelope.body.status,
            message: envelope.body.message.clone(),
            request_id: envelope.request_id.clone(),
            time: envelope.time,
            flags: vec![],
        },
    ]
}

/// Log channel: one record per function that logged anything for the
/// request. The entry function is upstream, everything else downstream.
pub fn collect_logs(logs: &LogStore, request_id: &str, entry: &str) -> Vec<EvidenceRecord> {
    let mut out = Vec::new();
    for function in logs.functions() {
        let lines: Vec<&LogLine> = logs.lines(function).iter().filter(|l| l.request_id == request_id).collect();
        let Some(last) = lines.last() else { continue };
        let timeout = lines.iter().find(|l| l.is_timeout());
        let error = lines.iter().find(|l| l.level == LogLevel::Error);
        let (content, message) = match (timeout, error) {
            (Some(t), _) => (Content::ErrorTimeout, Some(t.message.clone())),
            (None, Some(e)) => (Content::Error, Some(e.message.clone())),
            (None, None) => (Content::Success, None),
        };
        out.push(EvidenceRecord {
            channel: Channel::Log,
            source: function.to_string(),
            position: position_of(function, entry),
            content,
            message,
            request_id: request_id.to_string(),
            time: last.time,
            flags: vec![],
        });
    }
    out.sort_by(|a, b| (a.position, &a.source).cmp(&(b.position, &b.source)));
    out
}

struct SpanIndex<'a> {
    by_id: BTreeMap<SpanId, &'a Span>,
}

impl<'a> SpanIndex<'a> {
    fn new(spans: &'a [Span]) -> Self {
        SpanIndex {
            by_id: spans.iter().map(|s| (s.context.span_id, s)).collect(),
        }
    }

    fn parent(&self, span: &Span) -> Option<&'a Span> {
        span.parent_span_id.and_then(|p| self.by_id.get(&p).copied())
    }

    fn ancestors(&self, span: &'a Span) -> impl Iterator<Item = &'a Span> + '_ {
        let mut cursor = self.parent(span);
        std::iter::from_fn(move || {
            let current = cursor?;
            cursor = self.parent(current);
            Some(current)
        })
    }
}

fn is_async_hop(span: &Span) -> bool {
    span.tag(tags::PROPAGATION) == Some("async_payload") || span.tag(TRIGGER_TAG) == Some("async")
}

/// Tag placed on controller spans naming how the activation was triggered.
pub const TRIGGER_TAG: &str = "faas.trigger";

fn function_of(span: &Span) -> &str {
    span.function().unwrap_or(&span.component)
}

fn is_function_level(kind: SpanKind) -> bool {
    matches!(kind, SpanKind::Invocation | SpanKind::FunctionInternal)
}

/// Trace channel for the request whose root trace is `trace_id`.
///
/// Emits one record per error-tagged span, cold-start latency records for
/// timed-out invocations whose synchronous callee was still initialising,
/// masking records where a successful synchronous ancestor sits above a
/// failure, and one structural coverage record.
pub fn collect_trace_evidence(collector: &Collector, trace_id: Option<TraceId>, request_id: &str, entry: &str) -> Vec<EvidenceRecord> {
    let Some(trace) = trace_id.and_then(|id| collector.trace(&id)) else {
        return Vec::new();
    };
    let index = SpanIndex::new(&trace.spans);
    let record = |span: &Span, source: String, content, message: Option<String>, flags: Vec<EvidenceFlag>| {
        let position = if matches!(span.kind, SpanKind::Gateway | SpanKind::Controller) {
            Position::Platform
        } else {
            position_of(function_of(span), entry)
        };
        EvidenceRecord {
            channel: Channel::Trace,
            source,
            position,
            content,
            message,
            request_id: request_id.to_string(),
            time: span.end,
            flags,
        }
    };

    let mut out = Vec::new();
    for span in trace.spans.iter().filter(|s| s.is_error()) {
        let mut flags = Vec::new();
        if span.tag(tags::FLUSH) == Some("deadline") {
            flags.push(EvidenceFlag::DeadlineFlush);
        }
        if std::iter::once(span)
            .chain(index.ancestors(span))
            .any(|s| s.tag(tags::PROPAGATION) == Some("async_payload"))
        {
            flags.push(EvidenceFlag::AsyncLinked);
        }
        let content = if span.is_timeout() { Content::ErrorTimeout } else { Content::Error };
        out.push(record(
            span,
            format!("{}#{}", function_of(span), span.kind.as_str()),
            content,
            span.tag(tags::ERROR_MESSAGE).map(String::from),
            flags,
        ));
    }

    // Cold starts that outlived a waiting caller's deadline.
    for timed_out in trace
        .spans
        .iter()
        .filter(|s| s.kind == SpanKind::Invocation && s.is_timeout())
    {
        for init in trace.spans.iter().filter(|s| s.kind == SpanKind::Init && s.end > timed_out.end) {
            if index.ancestors(init).any(|a| a.context.span_id == timed_out.context.span_id) {
                let callee = function_of(init);
                out.push(record(
                    init,
                    format!("{callee}#init"),
                    Content::ErrorTimeout,
                    Some(format!(
                        "ColdStart: initialization of {callee} ran {} ms past the deadline of {}",
                        (init.end - timed_out.end).millis(),
                        function_of(timed_out)
                    )),
                    vec![EvidenceFlag::ColdStartLatency],
                ));
            }
        }
    }

    // Successful synchronous ancestors above a failure.
    let mut masked = BTreeSet::new();
    for failed in trace.spans.iter().filter(|s| s.is_error() && is_function_level(s.kind)) {
        let failed_fn = function_of(failed);
        if is_async_hop(failed) {
            continue;
        }
        for ancestor in index.ancestors(failed) {
            if is_function_level(ancestor.kind) && function_of(ancestor) != failed_fn {
                if !ancestor.is_error() && masked.insert((function_of(ancestor).to_string(), failed_fn.to_string())) {
                    out.push(record(
                        ancestor,
                        format!("{}#{}", function_of(ancestor), ancestor.kind.as_str()),
                        Content::Success,
                        Some(format!("Masked: {failed_fn} failed beneath successful {}", function_of(ancestor))),
                        vec![EvidenceFlag::Masking],
                    ));
                }
                break;
            }
            if is_async_hop(ancestor) {
                break;
            }
        }
    }

    let kinds: BTreeSet<&str> = trace.spans.iter().map(|s| s.kind.as_str()).collect();
    let functions: BTreeSet<&str> = trace.spans.iter().filter_map(|s| s.function()).collect();
    let root = trace.root().unwrap_or(&trace.spans[0]);
    out.push(EvidenceRecord {
        channel: Channel::Trace,
        source: "trace".into(),
        position: Position::Platform,
        content: Content::Success,
        message: Some(format!(
            "Coverage: kinds={} functions={} spans={}",
            kinds.into_iter().collect::<Vec<_>>().join(","),
            functions.into_iter().collect::<Vec<_>>().join(","),
            trace.spans.len()
        )),
        request_id: request_id.to_string(),
        time: root.end,
        flags: vec![EvidenceFlag::Structure],
    });
    out
}

/// One evidence set per line.
pub fn to_jsonl(sets: &[EvidenceSet]) -> String {
    let mut out = String::new();
    for set in sets {
        out.push_str(&serde_json::to_string(set).expect("evidence serialises"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<EvidenceSet>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
