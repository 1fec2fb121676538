//! Scenario description, input validation, and parameter derivation.
//!
//! A [`Scenario`] lists the sources sharing the transmitter (generation
//! probability, retransmission cap, channel), the simulation settings, and an
//! optional optimization objective. [`derive`] turns it into the per-source
//! quantities every other module consumes: the overall generation probability
//! `p`, the selection probabilities `p_i` under uniform tie-breaking, the
//! per-attempt success probability `gamma_i`, and the hold probability
//! `lambda_i = (1 - gamma_i)(1 - p)`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::optimize::ObjectiveSpec;
use crate::sim::SimConfig;

/// Per-source wireless channel description.
///
/// `direct` pins the per-attempt success probability; an optional transmit
/// power can be attached for energy accounting. `rayleigh` derives the
/// success probability from transmit power and coding rate via the
/// block-fading outage closed form `gamma = exp(-(e^R - 1) / P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ChannelSpec {
    Direct {
        gamma: f64,
        /// Transmit power charged per busy slot; not used for decoding.
        #[serde(rename = "P", default, skip_serializing_if = "power_is_zero")]
        power: f64,
    },
    Rayleigh {
        #[serde(rename = "P")]
        power: f64,
        /// Coding rate in nats per channel use.
        #[serde(rename = "R")]
        rate: f64,
    },
}

fn power_is_zero(p: &f64) -> bool {
    *p == 0.0
}

impl ChannelSpec {
    /// Transmit power charged while an update of this source is in service.
    pub fn tx_power(&self) -> f64 {
        match *self {
            ChannelSpec::Direct { power, .. } => power,
            ChannelSpec::Rayleigh { power, .. } => power,
        }
    }

    /// Decoding SNR threshold `k = e^R - 1` for Rayleigh channels.
    pub fn snr_threshold(&self) -> Option<f64> {
        match *self {
            ChannelSpec::Direct { .. } => None,
            ChannelSpec::Rayleigh { rate, .. } => Some(rate.exp_m1()),
        }
    }
}

/// A single status-update source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Per-slot update generation probability.
    pub q: f64,
    /// Maximum transmission time: attempts allowed per update, at least 1.
    #[serde(rename = "L")]
    pub max_tx_time: u32,
    pub channel: ChannelSpec,
}

/// Full system description consumed by the analysis, simulation, and
/// optimization engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub sources: Vec<SourceSpec>,
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
}

impl Scenario {
    /// Content hash of the canonical JSON form, used by run manifests and by
    /// [`crate::sim::merge`] to detect counters from different scenarios.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One violated scenario invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `sources[0].q`.
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid scenario: {}", format_violations(.0))]
    InvalidScenario(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{}: {}", v.field, v.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parameters of one source's age process, as seen by the analytical engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Attempts allowed per update (MTT).
    pub max_tx_time: u32,
    /// Probability that any source generates in a slot (`p`).
    pub overall_gen_prob: f64,
    /// Probability that this source generates and wins the tie-break (`p_i`).
    pub selection_prob: f64,
    /// Per-attempt delivery probability (`gamma_i`).
    pub success_prob: f64,
}

impl LinkParams {
    /// Hold probability `lambda = (1 - gamma)(1 - p)`: the attempt fails and
    /// nobody generates, so the same update stays in service.
    pub fn hold_prob(&self) -> f64 {
        (1.0 - self.success_prob) * (1.0 - self.overall_gen_prob)
    }

    /// True when the source never accumulates deliveries and its age diverges.
    pub fn is_degenerate(&self) -> bool {
        self.success_prob <= 0.0 || self.selection_prob <= 0.0
    }
}

/// Per-source derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedSource {
    pub gen_prob: f64,
    pub max_tx_time: u32,
    pub selection_prob: f64,
    pub success_prob: f64,
    pub hold_prob: f64,
    pub tx_power: f64,
    /// `k = e^R - 1` for Rayleigh channels.
    pub snr_threshold: Option<f64>,
}

/// Everything the analytical and simulation engines need, derived from a
/// validated [`Scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    /// Overall generation probability `p = 1 - prod(1 - q_i)`.
    pub overall_gen_prob: f64,
    pub sources: Vec<DerivedSource>,
}

impl DerivedParams {
    pub fn link(&self, source: usize) -> LinkParams {
        let s = &self.sources[source];
        LinkParams {
            max_tx_time: s.max_tx_time,
            overall_gen_prob: self.overall_gen_prob,
            selection_prob: s.selection_prob,
            success_prob: s.success_prob,
        }
    }
}

/// Probability that at least one source generates in a slot.
pub fn overall_ugp(gen_probs: &[f64]) -> f64 {
    1.0 - gen_probs.iter().map(|q| 1.0 - q).product::<f64>()
}

/// Per-source probability of generating and winning the uniform tie-break.
///
/// For each source the count of competing generators follows the
/// Poisson-binomial distribution of the other sources' generation
/// probabilities, built by the standard O(N^2) convolution recurrence;
/// `p_i = q_i * sum_h Pr{h others generate} / (h + 1)`.
pub fn selection_probabilities(gen_probs: &[f64]) -> Vec<f64> {
    let n = gen_probs.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if gen_probs[i] == 0.0 {
            continue;
        }
        let mut dist = vec![0.0; n];
        dist[0] = 1.0;
        let mut count = 0;
        for (j, &q) in gen_probs.iter().enumerate() {
            if j == i {
                continue;
            }
            count += 1;
            for h in (0..=count).rev() {
                let carried = if h > 0 { dist[h - 1] * q } else { 0.0 };
                dist[h] = dist[h] * (1.0 - q) + carried;
            }
        }
        out[i] = gen_probs[i]
            * dist
                .iter()
                .enumerate()
                .map(|(h, &pr)| pr / (h as f64 + 1.0))
                .sum::<f64>();
    }
    out
}

/// Per-attempt success probability of a channel spec.
///
/// Rayleigh specs evaluate the outage closed form; the fading gain is never
/// sampled anywhere in this crate.
pub fn resolve_gamma(channel: &ChannelSpec) -> f64 {
    match *channel {
        ChannelSpec::Direct { gamma, .. } => gamma,
        ChannelSpec::Rayleigh { power, rate } => (-rate.exp_m1() / power).exp(),
    }
}

/// Validate a scenario and derive all per-source parameters.
///
/// Collects every violated invariant rather than stopping at the first.
pub fn derive(scenario: &Scenario) -> Result<DerivedParams, ModelError> {
    let mut violations = Vec::new();
    if scenario.sources.is_empty() {
        violations.push(Violation {
            field: "sources".into(),
            reason: "at least one source is required".into(),
        });
    } else if !scenario.sources.iter().any(|s| s.q > 0.0) {
        violations.push(Violation {
            field: "sources".into(),
            reason: "at least one source must have q > 0".into(),
        });
    }
    for (i, src) in scenario.sources.iter().enumerate() {
        if !(0.0..=1.0).contains(&src.q) || !src.q.is_finite() {
            violations.push(Violation {
                field: format!("sources[{i}].q"),
                reason: "must lie within [0, 1]".into(),
            });
        }
        if src.max_tx_time < 1 {
            violations.push(Violation {
                field: format!("sources[{i}].L"),
                reason: "must be at least 1".into(),
            });
        }
        match src.channel {
            ChannelSpec::Direct { gamma, power } => {
                if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
                    violations.push(Violation {
                        field: format!("sources[{i}].channel.direct.gamma"),
                        reason: "must lie within [0, 1]".into(),
                    });
                }
                if power < 0.0 || !power.is_finite() {
                    violations.push(Violation {
                        field: format!("sources[{i}].channel.direct.P"),
                        reason: "must be non-negative".into(),
                    });
                }
            }
            ChannelSpec::Rayleigh { power, rate } => {
                if power <= 0.0 || !power.is_finite() {
                    violations.push(Violation {
                        field: format!("sources[{i}].channel.rayleigh.P"),
                        reason: "must be positive".into(),
                    });
                }
                if rate <= 0.0 || !rate.is_finite() {
                    violations.push(Violation {
                        field: format!("sources[{i}].channel.rayleigh.R"),
                        reason: "must be positive".into(),
                    });
                }
            }
        }
    }
    if !violations.is_empty() {
        return Err(ModelError::InvalidScenario(violations));
    }

    let gen_probs: Vec<f64> = scenario.sources.iter().map(|s| s.q).collect();
    let overall = overall_ugp(&gen_probs);
    let selection = selection_probabilities(&gen_probs);
    let sources = scenario
        .sources
        .iter()
        .zip(&selection)
        .map(|(src, &p_i)| {
            let gamma = resolve_gamma(&src.channel);
            DerivedSource {
                gen_prob: src.q,
                max_tx_time: src.max_tx_time,
                selection_prob: p_i,
                success_prob: gamma,
                hold_prob: (1.0 - gamma) * (1.0 - overall),
                tx_power: src.channel.tx_power(),
                snr_threshold: src.channel.snr_threshold(),
            }
        })
        .collect();
    Ok(DerivedParams {
        overall_gen_prob: overall,
        sources,
    })
}

/// Which sufficient condition certifies that average power rises with
/// transmit power under the Rayleigh outage model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MonotonicityCondition {
    /// Retransmission cap of at most three attempts.
    SmallMaxTxTime,
    /// Overall generation probability at least `1 / (e^2 + 1)`.
    GenerationThreshold,
    /// Success probability at least `min(1 - 1/(2(1-p)), 1/e)`.
    SuccessThreshold,
}

/// Outcome of the power-monotonicity check. `Unknown` is not a claim of
/// non-monotonicity, only that none of the sufficient conditions applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PowerMonotonicity {
    CertifiedIncreasing(MonotonicityCondition),
    Unknown,
}

/// Check the sufficient conditions under which the source's average power is
/// increasing in its transmit power (Rayleigh outage channel).
pub fn power_monotonicity_certificate(
    max_tx_time: u32,
    overall_gen_prob: f64,
    success_prob: f64,
) -> PowerMonotonicity {
    if max_tx_time <= 3 {
        return PowerMonotonicity::CertifiedIncreasing(MonotonicityCondition::SmallMaxTxTime);
    }
    let e = std::f64::consts::E;
    if overall_gen_prob >= 1.0 / (e * e + 1.0) {
        return PowerMonotonicity::CertifiedIncreasing(MonotonicityCondition::GenerationThreshold);
    }
    let gamma_threshold = (1.0 - 0.5 / (1.0 - overall_gen_prob)).min(1.0 / e);
    if success_prob >= gamma_threshold {
        return PowerMonotonicity::CertifiedIncreasing(MonotonicityCondition::SuccessThreshold);
    }
    PowerMonotonicity::Unknown
}
