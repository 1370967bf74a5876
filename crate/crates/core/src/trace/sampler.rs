//! Head samplers. Functions can only decide locally, so two kinds exist:
//! a client-set flag and a seeded coin flip.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_EVENT_FLAG_HEADER: &str = "X-Trace-Sample";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    EventBased,
    ProbabilityBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    #[serde(default = "default_probability")]
    pub probability: f64,
    #[serde(default = "default_header")]
    pub event_flag_header: String,
}

fn default_probability() -> f64 {
    1.0
}

fn default_header() -> String {
    DEFAULT_EVENT_FLAG_HEADER.to_string()
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::probability(1.0)
    }
}

impl SamplerConfig {
    pub fn probability(p: f64) -> Self {
        SamplerConfig {
            kind: SamplerKind::ProbabilityBased,
            probability: p,
            event_flag_header: default_header(),
        }
    }

    pub fn event_based() -> Self {
        SamplerConfig {
            kind: SamplerKind::EventBased,
            probability: 0.0,
            event_flag_header: default_header(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.probability) || self.probability.is_nan() {
            return Err(format!("sampling probability {} outside [0, 1]", self.probability));
        }
        if self.kind == SamplerKind::EventBased && self.event_flag_header.is_empty() {
            return Err("event-based sampling needs a flag header".into());
        }
        Ok(())
    }
}

/// What a sampler may look at when a request arrives.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMetadata {
    pub headers: BTreeMap<String, String>,
}

impl RequestMetadata {
    pub fn with_flag(header: &str) -> Self {
        let mut headers = BTreeMap::new();
        headers.insert(header.to_string(), "1".to_string());
        RequestMetadata { headers }
    }
}

/// Decides whether a request's trace is recorded.
///
/// The probability sampler always consumes one draw so that the generator
/// stream does not depend on `p`.
pub fn sample_decision(config: &SamplerConfig, metadata: &RequestMetadata, rng: &mut ChaCha8Rng) -> bool {
    match config.kind {
        SamplerKind::EventBased => metadata.headers.contains_key(&config.event_flag_header),
        SamplerKind::ProbabilityBased => {
            let draw: f64 = rng.gen();
            draw < config.probability
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn event_flag() {
        let cfg = SamplerConfig::event_based();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_decision(&cfg, &RequestMetadata::with_flag(DEFAULT_EVENT_FLAG_HEADER), &mut rng));
        assert!(!sample_decision(&cfg, &RequestMetadata::default(), &mut rng));
    }

    #[test]
    fn certainty_and_never() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let always = SamplerConfig::probability(1.0);
        let never = SamplerConfig::probability(0.0);
        for _ in 0..1000 {
            assert!(sample_decision(&always, &RequestMetadata::default(), &mut rng));
            assert!(!sample_decision(&never, &RequestMetadata::default(), &mut rng));
        }
    }

    #[test]
    fn quarter_rate_within_binomial_interval() {
        // n=10000, p=0.25: sd = sqrt(n p (1-p)) = 43.3; 99.9% two-sided
        // z = 3.29 gives +-142.5 draws, i.e. [0.2358, 0.2642].
        let n = 10_000u32;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        let half = 3.2905 * sd / n as f64;
        assert!(0.25 - half >= 0.235 && 0.25 + half <= 0.265);

        let cfg = SamplerConfig::probability(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = (0..n)
            .filter(|_| sample_decision(&cfg, &RequestMetadata::default(), &mut rng))
            .count();
        let rate = hits as f64 / n as f64;
        assert!((0.235..=0.265).contains(&rate), "rate {rate}");
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(SamplerConfig::probability(1.5).validate().is_err());
        assert!(SamplerConfig::probability(-0.1).validate().is_err());
        assert!(SamplerConfig::probability(0.3).validate().is_ok());
    }
}
