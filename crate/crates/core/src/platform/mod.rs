//! Virtual-time simulation of a FaaS platform: gateway, controller, invoker
//! and runtime lifecycle, executing sync/async compositions.

mod composition;
mod engine;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Content, RequestId, VirtualTime};

pub use composition::{
    CompositionFile, CompositionSpec, EdgeMode, EdgeSpec, FanOut, FunctionDefaults, FunctionEntry, FunctionSpec,
    DEFAULT_MEMORY_MB, DEFAULT_TIMEOUT_MS,
};
pub use engine::{deploy, deploy_with, PlatformHandle, RequestPayload, RequestSummary, RunStats};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlatformError {
    #[error("entry function `{0}` is not defined")]
    UnknownEntry(String),
    #[error("edge {edge} references unknown function `{missing}`")]
    UnknownEdgeEndpoint { edge: String, missing: String },
    #[error("composition has a cycle: {0}")]
    Cycle(String),
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("invalid tracing config: {0}")]
    Tracing(String),
    #[error(transparent)]
    Fault(#[from] crate::faults::FaultError),
    #[error("event limit of {limit} exceeded at {at}; last event: {last}")]
    EventLimit { limit: u64, at: VirtualTime, last: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    AwsLike,
    OpenwhiskLike,
}

impl ProfileName {
    pub const ALL: [ProfileName; 2] = [ProfileName::AwsLike, ProfileName::OpenwhiskLike];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileName::AwsLike => "aws_like",
            ProfileName::OpenwhiskLike => "openwhisk_like",
        }
    }

    pub fn parse(s: &str) -> Option<ProfileName> {
        match s {
            "aws_like" => Some(ProfileName::AwsLike),
            "openwhisk_like" => Some(ProfileName::OpenwhiskLike),
            _ => None,
        }
    }

    pub fn profile(self) -> PlatformProfile {
        match self {
            ProfileName::AwsLike => PlatformProfile::aws_like(),
            ProfileName::OpenwhiskLike => PlatformProfile::openwhisk_like(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseCodePolicy {
    AlwaysSuccessCode,
    ErrorCodeOnFailure,
}

/// How a platform shapes the client-visible response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformProfile {
    pub name: ProfileName,
    pub error_response_code_policy: ResponseCodePolicy,
    pub async_failure_surfaced_in_response: bool,
    /// Reserved; retries are not simulated.
    pub async_retries: bool,
}

impl PlatformProfile {
    pub fn aws_like() -> Self {
        PlatformProfile {
            name: ProfileName::AwsLike,
            error_response_code_policy: ResponseCodePolicy::AlwaysSuccessCode,
            async_failure_surfaced_in_response: false,
            async_retries: false,
        }
    }

    pub fn openwhisk_like() -> Self {
        PlatformProfile {
            name: ProfileName::OpenwhiskLike,
            error_response_code_policy: ResponseCodePolicy::ErrorCodeOnFailure,
            async_failure_surfaced_in_response: false,
            async_retries: false,
        }
    }
}

/// Timing knobs of the simulated platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformParams {
    pub cold_start_ms: u64,
    pub warm_ttl_ms: u64,
    /// Duration of the validation and resource-allocation steps each.
    pub step_ms: u64,
    /// Latency of a healthy external call.
    pub external_call_ms: u64,
    /// Gap between consecutive client requests.
    pub request_gap_ms: u64,
    pub max_events: u64,
}

impl Default for PlatformParams {
    fn default() -> Self {
        PlatformParams {
            cold_start_ms: 500,
            warm_ttl_ms: 600_000,
            step_ms: 1,
            external_call_ms: 40,
            request_gap_ms: 1_000,
            max_events: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Entry,
    Sync,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Validation,
    ResourceAllocation,
    ColdStartInit,
    Invocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: Step,
    pub start: VirtualTime,
    pub end: VirtualTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Error,
    Timeout,
}

impl Outcome {
    pub fn content(self) -> Content {
        match self {
            Outcome::Success => Content::Success,
            Outcome::Error => Content::Error,
            Outcome::Timeout => Content::ErrorTimeout,
        }
    }
}

/// One entry of the execution ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub invocation_id: u64,
    pub request_id: RequestId,
    pub request_index: u64,
    pub function: String,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    pub cold: bool,
    pub parent_invocation: Option<u64>,
    pub trigger_mode: Trigger,
    /// Position of this invocation among the fan-out siblings of its edge.
    pub fan_out_index: u32,
}

impl InvocationRecord {
    pub fn step(&self, step: Step) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.step == step)
    }

    pub fn start(&self) -> VirtualTime {
        self.steps.first().map(|s| s.start).unwrap_or_default()
    }

    pub fn end(&self) -> VirtualTime {
        self.steps.last().map(|s| s.end).unwrap_or_default()
    }

    /// Time spent in the function body (the invocation step).
    pub fn execution_ms(&self) -> Option<u64> {
        self.step(Step::Invocation).map(|s| (s.end - s.start).millis())
    }

    pub fn total_ms(&self) -> u64 {
        (self.end() - self.start()).millis()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseCode {
    Success,
    Error,
}

impl ResponseCode {
    pub fn http_status(self) -> u16 {
        match self {
            ResponseCode::Success => 200,
            ResponseCode::Error => 502,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseBody {
    pub status: Content,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// What the client receives for a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseEnvelope {
    pub request_id: RequestId,
    pub code: ResponseCode,
    pub body: ResponseBody,
    pub time: VirtualTime,
}

/// Warm runtimes per function, each with an expiry time.
#[derive(Debug, Clone, Default)]
pub struct RuntimePool {
    warm: BTreeMap<String, Vec<VirtualTime>>,
    pub cold_start_ms: u64,
    pub warm_ttl_ms: u64,
}

impl RuntimePool {
    pub fn new(cold_start_ms: u64, warm_ttl_ms: u64) -> Self {
        RuntimePool {
            warm: BTreeMap::new(),
            cold_start_ms,
            warm_ttl_ms,
        }
    }

    fn evict(&mut self, function: &str, now: VirtualTime) {
        if let Some(list) = self.warm.get_mut(function) {
            list.retain(|&expiry| expiry > now);
        }
    }

    pub fn warm_count(&mut self, function: &str, now: VirtualTime) -> usize {
        self.evict(function, now);
        self.warm.get(function).map_or(0, Vec::len)
    }

    /// Takes a warm runtime if one is alive at `now`.
    pub fn acquire(&mut self, function: &str, now: VirtualTime) -> bool {
        self.evict(function, now);
        self.warm.get_mut(function).and_then(Vec::pop).is_some()
    }

    /// Returns a runtime to the pool; it stays warm for the TTL.
    pub fn release(&mut self, function: &str, now: VirtualTime) {
        self.warm
            .entry(function.to_string())
            .or_default()
            .push(now + self.warm_ttl_ms);
    }

    pub fn clear(&mut self) {
        self.warm.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.warm.values().all(Vec::is_empty)
    }
}
