//! Fault catalog and injection plans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{FaultSpec, Mechanism, RequestId, Scenario, VirtualTime};
use crate::platform::{CompositionSpec, EdgeMode, Trigger};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaultError {
    #[error("fault probability {probability} for `{target}` is outside [0, 1]")]
    Probability { target: String, probability: f64 },
    #[error("probabilities of a deterministic plan sum to {0}, more than 1")]
    ProbabilitySum(f64),
    #[error("scenario {scenario} must use mechanism {expected}, got {found}")]
    ScenarioMechanism { scenario: Scenario, expected: &'static str, found: &'static str },
    #[error("fault target `{0}` is not a function of the composition")]
    UnknownTarget(String),
    #[error("{mechanism} on `{target}` needs {needs}")]
    Mismatch { mechanism: &'static str, target: String, needs: &'static str },
    #[error("fault spec needs a scenario or a mechanism")]
    Underspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Each request's fault is a pure function of (seed, request index).
    DeterministicPerRequest,
    /// Independent draws per spec from one seeded stream.
    #[default]
    Probabilistic,
}

/// One entry of the fault section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEntry {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub mechanism: Option<Mechanism>,
    pub target: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultConfig {
    #[serde(default)]
    pub mode: PlanMode,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub specs: Vec<FaultEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub specs: Vec<FaultSpec>,
    pub seed: u64,
    pub mode: PlanMode,
}

impl FaultPlan {
    pub fn empty(seed: u64) -> Self {
        FaultPlan {
            specs: Vec::new(),
            seed,
            mode: PlanMode::Probabilistic,
        }
    }

    /// A plan that injects `scenario` into every request.
    pub fn always(scenario: Scenario, target: &str, seed: u64) -> Self {
        FaultPlan {
            specs: vec![FaultSpec::for_scenario(scenario, target, 1.0)],
            seed,
            mode: PlanMode::DeterministicPerRequest,
        }
    }

    /// Checks every spec against the composition it will run on.
    pub fn validate_for(&self, spec: &CompositionSpec) -> Result<(), FaultError> {
        for fault in &self.specs {
            let Some(function) = spec.functions.get(&fault.target_function) else {
                return Err(FaultError::UnknownTarget(fault.target_function.clone()));
            };
            let incoming = |mode: EdgeMode| spec.edges.iter().any(|e| e.callee == fault.target_function && e.mode == mode);
            let mismatch = |needs| FaultError::Mismatch {
                mechanism: fault.mechanism.as_str(),
                target: fault.target_function.clone(),
                needs,
            };
            match fault.mechanism {
                Mechanism::ExternalApiTimeout if function.external_calls.is_empty() => {
                    return Err(mismatch("an external call"));
                }
                Mechanism::ColdSyncTimeout if !incoming(EdgeMode::Sync) => {
                    return Err(mismatch("an incoming synchronous edge"));
                }
                Mechanism::AsyncDownstreamBug if !incoming(EdgeMode::Async) => {
                    return Err(mismatch("an incoming asynchronous edge"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn injector(&self) -> FaultInjector {
        FaultInjector {
            plan: self.clone(),
            stream: ChaCha8Rng::seed_from_u64(self.seed),
        }
    }
}

/// Builds a plan from config, rejecting invalid probabilities.
pub fn plan_faults(config: &FaultConfig, seed: u64) -> Result<FaultPlan, FaultError> {
    let mut specs = Vec::with_capacity(config.specs.len());
    for entry in &config.specs {
        if !(0.0..=1.0).contains(&entry.probability) || entry.probability.is_nan() {
            return Err(FaultError::Probability {
                target: entry.target.clone(),
                probability: entry.probability,
            });
        }
        let spec = match (entry.scenario, entry.mechanism) {
            (Some(s), None) => FaultSpec::for_scenario(s, &entry.target, entry.probability),
            (Some(s), Some(m)) if s.mechanism() == m => FaultSpec::for_scenario(s, &entry.target, entry.probability),
            (Some(s), Some(m)) => {
                return Err(FaultError::ScenarioMechanism {
                    scenario: s,
                    expected: s.mechanism().as_str(),
                    found: m.as_str(),
                })
            }
            (None, Some(m)) => {
                let scenario = Scenario::ALL.into_iter().find(|s| s.mechanism() == m);
                FaultSpec {
                    scenario,
                    mechanism: m,
                    target_function: entry.target.clone(),
                    probability: entry.probability,
                }
            }
            (None, None) => return Err(FaultError::Underspecified),
        };
        specs.push(spec);
    }
    if config.mode == PlanMode::DeterministicPerRequest {
        let total: f64 = specs.iter().map(|s| s.probability).sum();
        if total > 1.0 + 1e-9 {
            return Err(FaultError::ProbabilitySum(total));
        }
    }
    Ok(FaultPlan {
        specs,
        seed: config.seed.unwrap_or(seed),
        mode: config.mode,
    })
}

/// Per-run draw state of a plan.
#[derive(Debug, Clone)]
pub struct FaultInjector {
    plan: FaultPlan,
    stream: ChaCha8Rng,
}

impl FaultInjector {
    /// Picks at most one fault for the request with the given index.
    pub fn draw(&mut self, request_index: u64) -> Option<FaultSpec> {
        match self.plan.mode {
            PlanMode::DeterministicPerRequest => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.plan.seed ^ request_index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for spec in &self.plan.specs {
                    acc += spec.probability;
                    if u < acc {
                        return Some(spec.clone());
                    }
                }
                None
            }
            PlanMode::Probabilistic => {
                let mut chosen = None;
                for spec in &self.plan.specs {
                    let u: f64 = self.stream.gen();
                    if chosen.is_none() && u < spec.probability {
                        chosen = Some(spec.clone());
                    }
                }
                chosen
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedFault {
    pub scenario: Option<Scenario>,
    pub mechanism: Mechanism,
    pub target_function: String,
    /// When the fault took effect; `None` if the target was never reached.
    pub injection_time: Option<VirtualTime>,
}

/// What was actually injected into one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub request_id: RequestId,
    pub injected: Option<InjectedFault>,
}

/// What the running invocation knows when a fault is applied to it.
#[derive(Debug, Clone)]
pub struct InvocationContext<'a> {
    pub function: &'a str,
    pub trigger: Trigger,
    pub external_calls: &'a [String],
    /// Time the synchronous caller has left before its own deadline.
    pub caller_remaining: Option<VirtualTime>,
    pub cold_start_ms: u64,
}

/// How a fault changes the invocation it hits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultEffect {
    /// The body raises after its own work; the runtime wrapper survives.
    Raise { message: String },
    /// The named external call never answers.
    HangExternalCall { endpoint: String },
    /// The runtime is started cold and its init takes this long.
    SlowColdStart { init_ms: u64 },
    /// Init fails with an import error.
    FailInit { message: String },
    /// The container is destroyed this far into the body's work.
    KillContainer { after_ms_fraction_permille: u32, message: String },
}

/// How far past the caller's deadline a forced cold start runs.
pub const COLD_START_OVERRUN_MS: u64 = 1_000;

pub fn apply_fault(spec: &FaultSpec, ctx: &InvocationContext<'_>) -> Result<FaultEffect, FaultError> {
    let mismatch = |needs| FaultError::Mismatch {
        mechanism: spec.mechanism.as_str(),
        target: ctx.function.to_string(),
        needs,
    };
    if spec.target_function != ctx.function {
        return Err(mismatch("to run on its target function"));
    }
    Ok(match spec.mechanism {
        Mechanism::UncaughtException => FaultEffect::Raise {
            message: format!("UncaughtException: KeyError 'sku' raised in {}", ctx.function),
        },
        Mechanism::AsyncDownstreamBug => {
            if ctx.trigger != Trigger::Async {
                return Err(mismatch("an asynchronous trigger"));
            }
            FaultEffect::Raise {
                message: format!("UncaughtException: TypeError in {}", ctx.function),
            }
        }
        Mechanism::ExternalApiTimeout => {
            let endpoint = ctx.external_calls.first().ok_or_else(|| mismatch("an external call"))?;
            FaultEffect::HangExternalCall {
                endpoint: endpoint.clone(),
            }
        }
        Mechanism::ColdSyncTimeout => {
            if ctx.trigger != Trigger::Sync {
                return Err(mismatch("a synchronous trigger"));
            }
            let remaining = ctx.caller_remaining.ok_or_else(|| mismatch("a waiting caller"))?;
            FaultEffect::SlowColdStart {
                init_ms: ctx.cold_start_ms.max(remaining.millis() + COLD_START_OVERRUN_MS),
            }
        }
        Mechanism::InvalidDependency => FaultEffect::FailInit {
            message: format!("ImportError: no module named 'imagelib_invalid' while loading {}", ctx.function),
        },
        Mechanism::ContainerKill => FaultEffect::KillContainer {
            after_ms_fraction_permille: 500,
            message: format!("ContainerKilled: container of {} was terminated", ctx.function),
        },
    })
}
