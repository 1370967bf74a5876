//! Domain types shared by every part of the simulator: virtual time, trace
//! identity, spans, fault specs, evidence records and verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Simulated time in whole milliseconds. Also used for durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);

    pub fn from_millis(ms: u64) -> Self {
        VirtualTime(ms)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: VirtualTime) -> VirtualTime {
        VirtualTime(self.0.saturating_sub(other.0))
    }
}

impl Add for VirtualTime {
    type Output = VirtualTime;
    fn add(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(self.0.saturating_add(rhs.0))
    }
}

impl Add<u64> for VirtualTime {
    type Output = VirtualTime;
    fn add(self, rhs: u64) -> VirtualTime {
        VirtualTime(self.0.saturating_add(rhs))
    }
}

impl Sub for VirtualTime {
    type Output = VirtualTime;
    fn sub(self, rhs: VirtualTime) -> VirtualTime {
        VirtualTime(self.0 - rhs.0)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// 128-bit trace identifier, rendered as 32 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceId(pub u128);

/// 64-bit span identifier, rendered as 16 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanId(pub u64);

impl fmt::Display for TraceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl fmt::Display for SpanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl TraceId {
    pub fn parse_hex(s: &str) -> Option<TraceId> {
        if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        u128::from_str_radix(s, 16).ok().map(TraceId)
    }
}

impl SpanId {
    pub fn parse_hex(s: &str) -> Option<SpanId> {
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        u64::from_str_radix(s, 16).ok().map(SpanId)
    }
}

macro_rules! hex_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                $ty::parse_hex(&raw)
                    .ok_or_else(|| serde::de::Error::custom(format!("invalid hex id `{raw}`")))
            }
        }
    };
}

hex_serde!(TraceId);
hex_serde!(SpanId);

/// Seeded identifier source. The only place trace and span ids come from.
#[derive(Debug, Clone)]
pub struct IdGenerator {
    rng: ChaCha8Rng,
}

impl IdGenerator {
    pub fn new(seed: u64) -> Self {
        IdGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_trace_id(&mut self) -> TraceId {
        loop {
            let hi = self.rng.next_u64() as u128;
            let lo = self.rng.next_u64() as u128;
            let id = (hi << 64) | lo;
            if id != 0 {
                return TraceId(id);
            }
        }
    }

    pub fn next_span_id(&mut self) -> SpanId {
        loop {
            let id = self.rng.next_u64();
            if id != 0 {
                return SpanId(id);
            }
        }
    }
}

/// Propagated causality identifiers for one unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceContext {
    pub trace_id: TraceId,
    pub span_id: SpanId,
    pub sampled: bool,
}

/// Starts a new trace.
pub fn new_root_context(ids: &mut IdGenerator, sampled: bool) -> TraceContext {
    TraceContext {
        trace_id: ids.next_trace_id(),
        span_id: ids.next_span_id(),
        sampled,
    }
}

/// Derives a context for a causally dependent unit of work in the same trace.
pub fn child_context(parent: &TraceContext, ids: &mut IdGenerator) -> TraceContext {
    TraceContext {
        trace_id: parent.trace_id,
        span_id: ids.next_span_id(),
        sampled: parent.sampled,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Gateway,
    Controller,
    Invoker,
    Init,
    Invocation,
    FunctionInternal,
    ExternalCall,
}

impl SpanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpanKind::Gateway => "gateway",
            SpanKind::Controller => "controller",
            SpanKind::Invoker => "invoker",
            SpanKind::Init => "init",
            SpanKind::Invocation => "invocation",
            SpanKind::FunctionInternal => "function_internal",
            SpanKind::ExternalCall => "external_call",
        }
    }

    /// Kinds emitted only by platform components.
    pub fn is_platform(self) -> bool {
        matches!(
            self,
            SpanKind::Gateway | SpanKind::Controller | SpanKind::Invoker | SpanKind::Init | SpanKind::Invocation
        )
    }
}

/// Well-known tag keys.
pub mod tags {
    pub const ERROR: &str = "error";
    pub const ERROR_MESSAGE: &str = "error.message";
    pub const FAULT_TYPE: &str = "fault.type";
    pub const TIMEOUT: &str = "timeout";
    pub const FUNCTION: &str = "faas.function";
    pub const COLD: &str = "faas.cold";
    pub const PROPAGATION: &str = "trace.propagation";
    pub const FLUSH: &str = "trace.flush";
    pub const STATUS_CODE: &str = "http.status_code";
    pub const PEER: &str = "peer.service";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub context: TraceContext,
    pub parent_span_id: Option<SpanId>,
    pub name: String,
    pub kind: SpanKind,
    pub start: VirtualTime,
    pub end: VirtualTime,
    pub tags: BTreeMap<String, String>,
    pub component: String,
}

impl Span {
    pub fn is_root(&self) -> bool {
        self.parent_span_id.is_none()
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }

    pub fn is_error(&self) -> bool {
        self.tag(tags::ERROR) == Some("true")
    }

    pub fn is_timeout(&self) -> bool {
        self.tag(tags::TIMEOUT) == Some("true")
    }

    /// The function this span belongs to, if any.
    pub fn function(&self) -> Option<&str> {
        self.tag(tags::FUNCTION)
    }

    pub fn duration(&self) -> VirtualTime {
        self.end.saturating_sub(self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceShapeError {
    #[error("trace has no spans")]
    Empty,
    #[error("span {span} belongs to trace {found}, expected {expected}")]
    ForeignSpan { span: SpanId, found: TraceId, expected: TraceId },
    #[error("trace has {0} root spans")]
    RootCount(usize),
    #[error("span {span} references unknown parent {parent}")]
    DanglingParent { span: SpanId, parent: SpanId },
    #[error("duplicate span id {0}")]
    DuplicateSpan(SpanId),
    #[error("span {0} ends before it starts")]
    NegativeDuration(SpanId),
}

/// All spans sharing one trace id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: TraceId,
    pub spans: Vec<Span>,
}

impl Trace {
    /// Checks that the spans form one rooted tree.
    pub fn validate_tree(&self) -> Result<(), TraceShapeError> {
        if self.spans.is_empty() {
            return Err(TraceShapeError::Empty);
        }
        let mut ids = BTreeSet::new();
        for span in &self.spans {
            if span.context.trace_id != self.trace_id {
                return Err(TraceShapeError::ForeignSpan {
                    span: span.context.span_id,
                    found: span.context.trace_id,
                    expected: self.trace_id,
                });
            }
            if span.end < span.start {
                return Err(TraceShapeError::NegativeDuration(span.context.span_id));
            }
            if !ids.insert(span.context.span_id) {
                return Err(TraceShapeError::DuplicateSpan(span.context.span_id));
            }
        }
        let roots = self.spans.iter().filter(|s| s.is_root()).count();
        if roots != 1 {
            return Err(TraceShapeError::RootCount(roots));
        }
        for span in &self.spans {
            if let Some(parent) = span.parent_span_id {
                if !ids.contains(&parent) {
                    return Err(TraceShapeError::DanglingParent {
                        span: span.context.span_id,
                        parent,
                    });
                }
            }
        }
        // Parent links into a set of unique ids with one root cannot cycle
        // unless some span is its own ancestor; walk to be sure.
        let parents: BTreeMap<SpanId, Option<SpanId>> = self
            .spans
            .iter()
            .map(|s| (s.context.span_id, s.parent_span_id))
            .collect();
        for span in &self.spans {
            let mut cursor = span.parent_span_id;
            let mut steps = 0usize;
            while let Some(p) = cursor {
                steps += 1;
                if steps > self.spans.len() {
                    return Err(TraceShapeError::RootCount(0));
                }
                cursor = parents[&p];
            }
        }
        Ok(())
    }

    pub fn root(&self) -> Option<&Span> {
        self.spans.iter().find(|s| s.is_root())
    }
}

/// Fault scenarios of the observability model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    F1,
    F2,
    F3,
    F4,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::F1, Scenario::F2, Scenario::F3, Scenario::F4];

    /// The mechanism each scenario is realised with.
    pub fn mechanism(self) -> Mechanism {
        match self {
            Scenario::F1 => Mechanism::UncaughtException,
            Scenario::F2 => Mechanism::ExternalApiTimeout,
            Scenario::F3 => Mechanism::ColdSyncTimeout,
            Scenario::F4 => Mechanism::AsyncDownstreamBug,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::F1 => "F1",
            Scenario::F2 => "F2",
            Scenario::F3 => "F3",
            Scenario::F4 => "F4",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    UncaughtException,
    ExternalApiTimeout,
    ColdSyncTimeout,
    AsyncDownstreamBug,
    InvalidDependency,
    ContainerKill,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::UncaughtException => "uncaught_exception",
            Mechanism::ExternalApiTimeout => "external_api_timeout",
            Mechanism::ColdSyncTimeout => "cold_sync_timeout",
            Mechanism::AsyncDownstreamBug => "async_downstream_bug",
            Mechanism::InvalidDependency => "invalid_dependency",
            Mechanism::ContainerKill => "container_kill",
        }
    }
}

/// What to inject, where, and how often.
///
/// `scenario` is `None` for the extra mechanisms (`invalid_dependency`,
/// `container_kill`) that are not part of the F1-F4 catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub scenario: Option<Scenario>,
    pub mechanism: Mechanism,
    pub target_function: String,
    pub probability: f64,
}

impl FaultSpec {
    pub fn for_scenario(scenario: Scenario, target: impl Into<String>, probability: f64) -> Self {
        FaultSpec {
            scenario: Some(scenario),
            mechanism: scenario.mechanism(),
            target_function: target.into(),
            probability,
        }
    }

    pub fn extra(mechanism: Mechanism, target: impl Into<String>, probability: f64) -> Self {
        FaultSpec {
            scenario: None,
            mechanism,
            target_function: target.into(),
            probability,
        }
    }
}

pub type RequestId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Response,
    Log,
    Trace,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Response, Channel::Log, Channel::Trace];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Response => "response",
            Channel::Log => "log",
            Channel::Trace => "trace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Upstream,
    Downstream,
    Platform,
    Client,
}

impl Position {
    pub fn as_str(self) -> &'static str {
        match self {
            Position::Upstream => "upstream",
            Position::Downstream => "downstream",
            Position::Platform => "platform",
            Position::Client => "client",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    Success,
    Error,
    ErrorTimeout,
    Absent,
}

impl Content {
    /// Does this content indicate a failure?
    pub fn is_fault(self) -> bool {
        matches!(self, Content::Error | Content::ErrorTimeout)
    }

    /// Table rendering.
    pub fn label(self) -> &'static str {
        match self {
            Content::Success => "success",
            Content::Error => "error",
            Content::ErrorTimeout => "error (TO)",
            Content::Absent => "n.a.",
        }
    }
}

/// Provenance markers on evidence records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceFlag {
    /// Span-tree coverage summary rather than an observation of a failure.
    Structure,
    /// A successful ancestor on a synchronous path hides a failed descendant.
    Masking,
    /// A cold start that ended after the synchronous caller's deadline.
    ColdStartLatency,
    /// Delivered by the in-function timeout-margin flush.
    DeadlineFlush,
    /// Reached the request's trace only through context the developer
    /// forwarded in an asynchronous trigger payload.
    AsyncLinked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub channel: Channel,
    pub source: String,
    pub position: Position,
    pub content: Content,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub request_id: RequestId,
    pub time: VirtualTime,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<EvidenceFlag>,
}

impl EvidenceRecord {
    pub fn has_flag(&self, flag: EvidenceFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// One observable element of a signature.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignatureEntry {
    pub role: String,
    pub content: Content,
    pub class: String,
}

/// Run-independent reduction of one channel's evidence.
///
/// Only fault-indicating records (error or timeout content) contribute; the
/// entries are a set, so ordering and repetition of records do not matter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceSignature {
    pub channel: Channel,
    pub entries: BTreeSet<SignatureEntry>,
    pub no_evidence: bool,
}

impl EvidenceSignature {
    /// True when every entry of `self` also appears in `other`, i.e. `other`'s
    /// fault could have produced everything observed in `self`.
    pub fn is_explained_by(&self, other: &EvidenceSignature) -> bool {
        self.channel == other.channel && self.entries.is_subset(&other.entries)
    }
}

/// Reduces a message to its error class: the text before the first `:`,
/// with digits and hex-looking tokens removed.
pub fn message_class(message: &str) -> String {
    let head = message.split(':').next().unwrap_or("");
    head.split_whitespace()
        .filter(|tok| !looks_like_id(tok))
        .map(|tok| tok.chars().filter(|c| !c.is_ascii_digit()).collect::<String>())
        .filter(|tok| !tok.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn looks_like_id(tok: &str) -> bool {
    tok.len() >= 8 && tok.chars().all(|c| c.is_ascii_hexdigit() || c == '-')
}

fn signature_role(record: &EvidenceRecord) -> String {
    match record.channel {
        Channel::Response => record.source.clone(),
        Channel::Log => record.position.as_str().to_string(),
        Channel::Trace => format!("{}/{}", record.position.as_str(), record.source_kind()),
    }
}

impl EvidenceRecord {
    /// For trace records, `source` is `function#kind`; this returns the kind.
    fn source_kind(&self) -> &str {
        self.source.rsplit_once('#').map(|(_, k)| k).unwrap_or("")
    }

    /// The component or function name without any `#kind` suffix.
    pub fn source_name(&self) -> &str {
        self.source.split_once('#').map(|(n, _)| n).unwrap_or(&self.source)
    }
}

/// Builds the signature of `records` restricted to `channel`.
pub fn signature_of(records: &[EvidenceRecord], channel: Channel) -> EvidenceSignature {
    let entries: BTreeSet<SignatureEntry> = records
        .iter()
        .filter(|r| r.channel == channel && r.content.is_fault())
        .map(|r| SignatureEntry {
            role: signature_role(r),
            content: r.content,
            class: r.message.as_deref().map(message_class).unwrap_or_default(),
        })
        .collect();
    EvidenceSignature {
        channel,
        no_evidence: entries.is_empty(),
        entries,
    }
}

/// Tri-state verdict for ambiguity: `NotApplicable` when nothing is visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    True,
    False,
    NotApplicable,
}

impl Tri {
    pub fn from_bool(b: bool) -> Tri {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Tri::True => "true",
            Tri::False => "false",
            Tri::NotApplicable => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Visible,
    Unambiguous,
    Consistent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservabilityVerdict {
    pub visible: bool,
    pub unambiguous: Tri,
    pub consistent: bool,
    /// Set when at least one property holds only under an instrumentation
    /// coverage assumption.
    pub partial: bool,
    /// Which properties are conditional.
    #[serde(default)]
    pub partial_fields: Vec<Property>,
}

impl ObservabilityVerdict {
    pub fn new(visible: bool, unambiguous: Tri, consistent: bool, partial_fields: Vec<Property>) -> Self {
        debug_assert_eq!(unambiguous == Tri::NotApplicable, !visible);
        ObservabilityVerdict {
            visible,
            unambiguous,
            consistent,
            partial: !partial_fields.is_empty(),
            partial_fields,
        }
    }

    pub fn is_partial(&self, property: Property) -> bool {
        self.partial_fields.contains(&property)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(channel: Channel, source: &str, position: Position, content: Content, msg: Option<&str>, rid: &str) -> EvidenceRecord {
        EvidenceRecord {
            channel,
            source: source.into(),
            position,
            content,
            message: msg.map(String::from),
            request_id: rid.into(),
            time: VirtualTime(10),
            flags: vec![],
        }
    }

    #[test]
    fn root_context_format() {
        let mut ids = IdGenerator::new(42);
        let ctx = new_root_context(&mut ids, true);
        let t = ctx.trace_id.to_string();
        let s = ctx.span_id.to_string();
        assert_eq!(t.len(), 32);
        assert_eq!(s.len(), 16);
        assert!(t.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert!(ctx.sampled);
    }

    #[test]
    fn same_seed_same_ids() {
        let a = new_root_context(&mut IdGenerator::new(42), true);
        let b = new_root_context(&mut IdGenerator::new(42), true);
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_distinct_trace_ids() {
        // enumerate the first 64 ids of each stream; no overlap at all
        let mut one = IdGenerator::new(1);
        let mut two = IdGenerator::new(2);
        let a: BTreeSet<TraceId> = (0..64).map(|_| one.next_trace_id()).collect();
        let b: BTreeSet<TraceId> = (0..64).map(|_| two.next_trace_id()).collect();
        assert_eq!(a.len(), 64);
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn child_keeps_trace_and_sampling() {
        let mut ids = IdGenerator::new(3);
        let parent = new_root_context(&mut ids, false);
        let child = child_context(&parent, &mut ids);
        assert_eq!(child.trace_id, parent.trace_id);
        assert_ne!(child.span_id, parent.span_id);
        assert!(!child.sampled);
    }

    #[test]
    fn chain_of_five_children() {
        let mut ids = IdGenerator::new(9);
        let root = new_root_context(&mut ids, true);
        let mut chain = vec![root];
        for _ in 0..5 {
            let next = child_context(chain.last().unwrap(), &mut ids);
            chain.push(next);
        }
        assert!(chain.iter().all(|c| c.trace_id == root.trace_id));
        let spans: BTreeSet<SpanId> = chain.iter().map(|c| c.span_id).collect();
        assert_eq!(spans.len(), 6);
    }

    #[test]
    fn hex_roundtrip_through_serde() {
        let mut ids = IdGenerator::new(5);
        let ctx = new_root_context(&mut ids, true);
        let json = serde_json::to_string(&ctx).unwrap();
        let back: TraceContext = serde_json::from_str(&json).unwrap();
        assert_eq!(ctx, back);
        assert!(serde_json::from_str::<SpanId>("\"xyz\"").is_err());
    }

    #[test]
    fn signature_ignores_request_ids_and_order() {
        let a = vec![
            record(Channel::Response, "response.code", Position::Client, Content::Error, None, "req-000001"),
            record(Channel::Response, "response.body", Position::Client, Content::ErrorTimeout, Some("Timeout: exceeded 300000 ms"), "req-000001"),
        ];
        let mut b = a.clone();
        b.reverse();
        for r in &mut b {
            r.request_id = "req-000077".into();
        }
        assert_eq!(signature_of(&a, Channel::Response), signature_of(&b, Channel::Response));
    }

    #[test]
    fn empty_signature_is_no_evidence() {
        let sig = signature_of(&[], Channel::Log);
        assert!(sig.no_evidence);
        let only_success = vec![record(Channel::Log, "f", Position::Upstream, Content::Success, None, "r")];
        assert!(signature_of(&only_success, Channel::Log).no_evidence);
    }

    #[test]
    fn message_class_strips_ids() {
        assert_eq!(message_class("Timeout: action exceeded 300000 ms"), "Timeout");
        assert_eq!(message_class("UncaughtException: boom in req-0001"), "UncaughtException");
        assert_eq!(message_class("worker 0badc0de12 crashed"), "worker crashed");
    }

    #[test]
    fn trace_tree_validation() {
        let mut ids = IdGenerator::new(1);
        let root = new_root_context(&mut ids, true);
        let child = child_context(&root, &mut ids);
        let mk = |ctx: TraceContext, parent: Option<SpanId>| Span {
            context: ctx,
            parent_span_id: parent,
            name: "x".into(),
            kind: SpanKind::FunctionInternal,
            start: VirtualTime(0),
            end: VirtualTime(1),
            tags: BTreeMap::new(),
            component: "f".into(),
        };
        let good = Trace {
            trace_id: root.trace_id,
            spans: vec![mk(root, None), mk(child, Some(root.span_id))],
        };
        assert!(good.validate_tree().is_ok());
        let orphan = Trace {
            trace_id: root.trace_id,
            spans: vec![mk(root, None), mk(child, Some(SpanId(7)))],
        };
        assert!(matches!(orphan.validate_tree(), Err(TraceShapeError::DanglingParent { .. })));
        let two_roots = Trace {
            trace_id: root.trace_id,
            spans: vec![mk(root, None), mk(child, None)],
        };
        assert_eq!(two_roots.validate_tree(), Err(TraceShapeError::RootCount(2)));
    }
}
