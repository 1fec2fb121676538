//! Slot-level Monte Carlo simulation of the multi-source updating protocol.
//!
//! The simulator drives the full shared-channel protocol: Bernoulli
//! generation per source at slot ends, uniform selection among simultaneous
//! generators, preemption of the surviving in-service update, per-attempt
//! success draws, and forced drops at the retransmission cap. Slot internals
//! are ordered to reproduce the age-process kernel exactly:
//!
//! 1. the in-service update (if any) draws success; a delivery samples the
//!    peak AoI at its pre-reset value and a failure at the cap drops,
//! 2. every source's AoI is tallied against deliveries from earlier slots,
//! 3. the delivery takes effect, then generation/selection runs at slot end
//!    and the pick preempts whatever survived.
//!
//! Randomness is a counter-based ChaCha12 stream selected by the replication
//! index, so replications are reproducible and order-independent. Within a
//! slot the draw order is pinned: success first, then one generation draw
//! per source in index order, then (only when at least two sources
//! generated) one uniform selection draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Pmf, SourceMetrics};
use crate::model::{DerivedParams, Scenario};

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Slots simulated per replication.
    pub slots: u64,
    /// Slots discarded before tallying; when absent, the larger of 10^4 and
    /// 20x the largest analytic mean AoI is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: u32,
    /// AoI histogram cap; when absent, 10x the analytic mean per source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aoi_cap: Option<u32>,
}

fn one() -> u32 {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slots: 1_000_000,
            warmup: None,
            seed: 0,
            replications: 1,
            aoi_cap: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {reason}")]
    InvalidConfig { reason: String },
    #[error("cannot merge counters from different scenarios ({left} vs {right})")]
    Mismatch { left: String, right: String },
    #[error("source {source_index} recorded no deliveries")]
    NoDeliveries { source_index: usize },
}

/// Histogram with an explicit overflow bucket.
///
/// Values above the cap keep their exact sum so means stay unbiased while
/// memory stays bounded; the overflow bucket participates in distribution
/// distances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CappedHistogram {
    cap: u32,
    counts: Vec<u64>,
    overflow_count: u64,
    overflow_sum: u64,
}

impl CappedHistogram {
    fn new(cap: u32) -> Self {
        CappedHistogram {
            cap,
            counts: vec![0; cap as usize + 1],
            overflow_count: 0,
            overflow_sum: 0,
        }
    }

    #[inline]
    fn record(&mut self, value: u64) {
        if value <= self.cap as u64 {
            self.counts[value as usize] += 1;
        } else {
            self.overflow_count += 1;
            self.overflow_sum += value;
        }
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn count(&self, value: u32) -> u64 {
        self.counts.get(value as usize).copied().unwrap_or(0)
    }

    pub fn overflow_count(&self) -> u64 {
        self.overflow_count
    }

    /// Total number of recorded samples.
    pub fn samples(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow_count
    }

    /// Exact mean including overflowed values.
    pub fn mean(&self) -> f64 {
        let samples = self.samples();
        if samples == 0 {
            return f64::NAN;
        }
        let sum: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(v, &c)| v as u64 * c)
            .sum();
        (sum + self.overflow_sum) as f64 / samples as f64
    }

    /// Normalized PMF over ages starting at 2; the overflow bucket becomes
    /// the tail mass.
    pub fn to_pmf(&self) -> Pmf {
        let samples = self.samples() as f64;
        let probs = self.counts[2.min(self.counts.len())..]
            .iter()
            .map(|&c| c as f64 / samples)
            .collect();
        Pmf::new(2, probs, self.overflow_count as f64 / samples, 0.0)
    }

    fn merge_from(&mut self, other: &Self) {
        assert_eq!(self.cap, other.cap);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow_count += other.overflow_count;
        self.overflow_sum += other.overflow_sum;
    }
}

/// Per-source tallies of one (or several merged) replications.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceCounters {
    pub aoi: CappedHistogram,
    pub paoi: CappedHistogram,
    /// Slots in which an update of this source occupied the channel.
    pub busy_slots: u64,
    pub deliveries: u64,
    /// Updates dropped at the retransmission cap.
    pub drops: u64,
    /// Updates of this source displaced by a new pick (including its own).
    pub preemptions: u64,
    /// Busy slots attributable to delivered updates.
    pub tx_slots_delivered: u64,
    /// Deliveries by transmission-time: `tx_time_counts[k]` delivered on
    /// attempt `k + 1`.
    pub tx_time_counts: Vec<u64>,
    /// Sum of generation-slot gaps between consecutive deliveries.
    pub interval_sum: u64,
    pub interval_count: u64,
}

impl SourceCounters {
    fn new(aoi_cap: u32, paoi_cap: u32, max_tx_time: u32) -> Self {
        SourceCounters {
            aoi: CappedHistogram::new(aoi_cap),
            paoi: CappedHistogram::new(paoi_cap),
            busy_slots: 0,
            deliveries: 0,
            drops: 0,
            preemptions: 0,
            tx_slots_delivered: 0,
            tx_time_counts: vec![0; max_tx_time as usize],
            interval_sum: 0,
            interval_count: 0,
        }
    }
}

/// Tallies of a simulation run, mergeable across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimCounters {
    /// Fingerprint of the generating scenario; merges refuse to mix runs.
    pub scenario_fingerprint: String,
    /// Tallied (post-warmup) slots.
    pub slots_counted: u64,
    pub per_source: Vec<SourceCounters>,
}

/// An update occupying the channel.
#[derive(Debug, Clone, Copy)]
struct InService {
    source: usize,
    /// Slot at whose end the update was generated.
    gen_slot: u64,
    /// Completed transmission slots.
    elapsed: u32,
}

/// Warmup used when the config does not pin one: enough slots for the
/// slowest source to forget its empty start.
pub fn resolved_warmup(scenario: &Scenario, derived: &DerivedParams) -> u64 {
    if let Some(w) = scenario.sim.warmup {
        return w;
    }
    let mut warmup = 10_000u64;
    for i in 0..derived.sources.len() {
        let link = derived.link(i);
        if !link.is_degenerate() {
            if let Ok(mean) = crate::metrics::aoi_mean(&link) {
                warmup = warmup.max((20.0 * mean).ceil() as u64);
            }
        }
    }
    warmup
}

fn resolved_caps(scenario: &Scenario, derived: &DerivedParams) -> Vec<(u32, u32)> {
    const MIN_CAP: u32 = 64;
    (0..derived.sources.len())
        .map(|i| {
            if let Some(cap) = scenario.sim.aoi_cap {
                return (cap.max(MIN_CAP), cap.max(MIN_CAP));
            }
            let link = derived.link(i);
            if link.is_degenerate() {
                return (MIN_CAP, MIN_CAP);
            }
            let aoi = crate::metrics::aoi_mean(&link)
                .map(|m| m * 10.0)
                .unwrap_or(640.0);
            let paoi = crate::metrics::paoi_mean(&link)
                .map(|m| m * 10.0)
                .unwrap_or(640.0);
            (
                (aoi.ceil() as u32).max(MIN_CAP),
                (paoi.ceil() as u32).max(MIN_CAP),
            )
        })
        .collect()
}

fn validate_config(scenario: &Scenario, warmup: u64) -> Result<(), SimError> {
    let cfg = &scenario.sim;
    if cfg.slots == 0 {
        return Err(SimError::InvalidConfig {
            reason: "slots must be at least 1".into(),
        });
    }
    if warmup >= cfg.slots {
        return Err(SimError::InvalidConfig {
            reason: format!("warmup {warmup} must be below slots {}", cfg.slots),
        });
    }
    if cfg.replications == 0 {
        return Err(SimError::InvalidConfig {
            reason: "replications must be at least 1".into(),
        });
    }
    Ok(())
}

/// Simulate one replication. Identical inputs produce bit-identical counters.
pub fn run_replication(
    scenario: &Scenario,
    derived: &DerivedParams,
    rep_index: u32,
) -> Result<SimCounters, SimError> {
    let warmup = resolved_warmup(scenario, derived);
    validate_config(scenario, warmup)?;
    let caps = resolved_caps(scenario, derived);
    let n = derived.sources.len();
    let gen_probs: Vec<f64> = derived.sources.iter().map(|s| s.gen_prob).collect();
    let success_probs: Vec<f64> = derived.sources.iter().map(|s| s.success_prob).collect();
    let max_tx: Vec<u32> = derived.sources.iter().map(|s| s.max_tx_time).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(scenario.sim.seed);
    rng.set_stream(rep_index as u64);

    let mut counters = SimCounters {
        scenario_fingerprint: scenario.fingerprint(),
        slots_counted: 0,
        per_source: caps
            .iter()
            .zip(&max_tx)
            .map(|(&(a, p), &l)| SourceCounters::new(a, p, l))
            .collect(),
    };

    // Generation slot of the freshest delivered update, as visible to the
    // AoI *this* slot (deliveries apply from the next slot on).
    let mut last_gen: Vec<Option<u64>> = vec![None; n];
    // Generation slot of the last delivery, for success-interval tracking.
    let mut last_delivery_gen: Vec<Option<u64>> = vec![None; n];
    let mut in_service: Option<InService> = None;
    let mut generated: Vec<usize> = Vec::with_capacity(n);

    for t in 1..=scenario.sim.slots {
        let tally = t > warmup;
        if tally {
            counters.slots_counted += 1;
        }

        // 1. Service draw.
        let mut delivered: Option<(usize, u64)> = None;
        let mut survivor: Option<InService> = None;
        if let Some(mut update) = in_service.take() {
            let j = update.source;
            if tally {
                counters.per_source[j].busy_slots += 1;
            }
            let success = rng.random_bool(success_probs[j]);
            update.elapsed += 1;
            if success {
                if tally {
                    let c = &mut counters.per_source[j];
                    c.deliveries += 1;
                    c.tx_slots_delivered += update.elapsed as u64;
                    c.tx_time_counts[(update.elapsed - 1) as usize] += 1;
                    if let Some(gen) = last_gen[j] {
                        c.paoi.record(t - gen);
                    }
                    if let Some(prev) = last_delivery_gen[j] {
                        c.interval_sum += update.gen_slot - prev;
                        c.interval_count += 1;
                    }
                }
                last_delivery_gen[j] = Some(update.gen_slot);
                delivered = Some((j, update.gen_slot));
            } else if update.elapsed >= max_tx[j] {
                if tally {
                    counters.per_source[j].drops += 1;
                }
            } else {
                survivor = Some(update);
            }
        }

        // 2. AoI tally at the pre-reset value.
        if tally {
            for (i, gen) in last_gen.iter().enumerate() {
                if let Some(gen) = gen {
                    counters.per_source[i].aoi.record(t - gen);
                }
            }
        }

        // 3. The delivery becomes visible from the next slot.
        if let Some((j, gen)) = delivered {
            last_gen[j] = Some(gen);
        }

        // 4. Generation and uniform selection at slot end.
        generated.clear();
        for (i, &q) in gen_probs.iter().enumerate() {
            if rng.random_bool(q) {
                generated.push(i);
            }
        }
        if !generated.is_empty() {
            let pick = if generated.len() == 1 {
                generated[0]
            } else {
                generated[rng.random_range(0..generated.len())]
            };
            if let Some(old) = survivor {
                if tally {
                    counters.per_source[old.source].preemptions += 1;
                }
            }
            in_service = Some(InService {
                source: pick,
                gen_slot: t,
                elapsed: 0,
            });
        } else {
            in_service = survivor;
        }
    }
    Ok(counters)
}

/// Run every replication of the scenario (in parallel) and merge.
pub fn run_scenario(scenario: &Scenario, derived: &DerivedParams) -> Result<SimCounters, SimError> {
    use rayon::prelude::*;
    let reps: Vec<SimCounters> = (0..scenario.sim.replications)
        .into_par_iter()
        .map(|rep| run_replication(scenario, derived, rep))
        .collect::<Result<_, _>>()?;
    merge(&reps)
}

/// Element-wise sum of counters from the same scenario; associative and
/// commutative (all fields are integer tallies).
pub fn merge(counters: &[SimCounters]) -> Result<SimCounters, SimError> {
    let mut iter = counters.iter();
    let first = iter.next().ok_or_else(|| SimError::InvalidConfig {
        reason: "nothing to merge".into(),
    })?;
    let mut merged = first.clone();
    for c in iter {
        if c.scenario_fingerprint != merged.scenario_fingerprint {
            return Err(SimError::Mismatch {
                left: merged.scenario_fingerprint.clone(),
                right: c.scenario_fingerprint.clone(),
            });
        }
        merged.slots_counted += c.slots_counted;
        for (a, b) in merged.per_source.iter_mut().zip(&c.per_source) {
            a.aoi.merge_from(&b.aoi);
            a.paoi.merge_from(&b.paoi);
            a.busy_slots += b.busy_slots;
            a.deliveries += b.deliveries;
            a.drops += b.drops;
            a.preemptions += b.preemptions;
            a.tx_slots_delivered += b.tx_slots_delivered;
            for (x, y) in a.tx_time_counts.iter_mut().zip(&b.tx_time_counts) {
                *x += y;
            }
            a.interval_sum += b.interval_sum;
            a.interval_count += b.interval_count;
        }
    }
    Ok(merged)
}

/// Empirical per-source results: histogram-normalized distributions plus the
/// scalar metrics in the same shape the analytical engine produces.
#[derive(Debug, Clone)]
pub struct EmpiricalSource {
    pub metrics: SourceMetrics,
    pub aoi_pmf: Pmf,
    pub paoi_pmf: Pmf,
}

/// Turn counters into per-source empirical metrics. A source with zero
/// deliveries is reported as [`SimError::NoDeliveries`] without failing the
/// other sources.
pub fn empirical_metrics(
    counters: &SimCounters,
    derived: &DerivedParams,
) -> Vec<Result<EmpiricalSource, SimError>> {
    let slots = counters.slots_counted as f64;
    counters
        .per_source
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.deliveries == 0 || c.aoi.samples() == 0 {
                return Err(SimError::NoDeliveries { source_index: i });
            }
            let power = derived.sources[i].tx_power;
            let duty = c.busy_slots as f64 / slots;
            let energy = power * c.busy_slots as f64;
            let metrics = SourceMetrics {
                mean_aoi: c.aoi.mean(),
                mean_paoi: c.paoi.mean(),
                duty_cycle: duty,
                avg_power: energy / slots,
                ee: if energy > 0.0 {
                    c.deliveries as f64 / energy
                } else {
                    f64::NAN
                },
                mean_tx_time: c.tx_slots_delivered as f64 / c.deliveries as f64,
                mean_success_interval: if c.interval_count > 0 {
                    c.interval_sum as f64 / c.interval_count as f64
                } else {
                    f64::NAN
                },
                delivery_rate: c.deliveries as f64 / slots,
            };
            Ok(EmpiricalSource {
                metrics,
                aoi_pmf: c.aoi.to_pmf(),
                paoi_pmf: c.paoi.to_pmf(),
            })
        })
        .collect()
}

/// Total-variation distance between two distributions on the same support,
/// folding everything at or beyond the shorter horizon into a common bucket.
pub fn total_variation(a: &Pmf, b: &Pmf) -> f64 {
    let fold = a.support_end().min(b.support_end()) + 1;
    let first = a.first_index().min(b.first_index());
    let mut tv = 0.0;
    for n in first..fold {
        tv += (a.prob(n) - b.prob(n)).abs();
    }
    tv += (a.mass_from(fold) - b.mass_from(fold)).abs();
    0.5 * tv
}

/// Validation tolerances; defaults match a run of 10^7 or more tallied slots.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Relative error allowed on scalar metrics.
    pub mean_rel: f64,
    /// Total-variation distance allowed between distributions.
    pub tv: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mean_rel: 0.01,
            tv: 0.005,
        }
    }
}

/// One scalar comparison in a validation report.
#[derive(Debug, Clone, Serialize)]
pub struct MetricCheck {
    pub name: &'static str,
    pub analytic: f64,
    pub empirical: f64,
    pub rel_error: f64,
    pub pass: bool,
}

/// Validation outcome for one source.
#[derive(Debug, Clone, Serialize)]
pub struct SourceValidation {
    pub source: usize,
    pub checks: Vec<MetricCheck>,
    pub tv_aoi: f64,
    pub tv_paoi: f64,
    pub tv_pass: bool,
    pub pass: bool,
}

/// Simulation-against-theory comparison across all sources.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub tolerances: Tolerances,
    pub sources: Vec<SourceValidation>,
    pub pass: bool,
}

/// Analytic counterpart of [`EmpiricalSource`].
#[derive(Debug, Clone)]
pub struct AnalyticSource {
    pub metrics: SourceMetrics,
    pub aoi_pmf: Pmf,
    pub paoi_pmf: Pmf,
}

/// Compare analytic and empirical per-source results.
pub fn compare(
    analytic: &[AnalyticSource],
    empirical: &[EmpiricalSource],
    tolerances: Tolerances,
) -> ValidationReport {
    let sources: Vec<SourceValidation> = analytic
        .iter()
        .zip(empirical)
        .enumerate()
        .map(|(i, (a, e))| {
            let pairs: [(&'static str, f64, f64); 7] = [
                ("mean_aoi", a.metrics.mean_aoi, e.metrics.mean_aoi),
                ("mean_paoi", a.metrics.mean_paoi, e.metrics.mean_paoi),
                ("duty_cycle", a.metrics.duty_cycle, e.metrics.duty_cycle),
                ("avg_power", a.metrics.avg_power, e.metrics.avg_power),
                ("ee", a.metrics.ee, e.metrics.ee),
                (
                    "mean_tx_time",
                    a.metrics.mean_tx_time,
                    e.metrics.mean_tx_time,
                ),
                (
                    "delivery_rate",
                    a.metrics.delivery_rate,
                    e.metrics.delivery_rate,
                ),
            ];
            let checks: Vec<MetricCheck> = pairs
                .into_iter()
                .map(|(name, av, ev)| {
                    // Zero-power sources have no efficiency on either side.
                    let rel_error = if av == ev || (av.is_nan() && ev.is_nan()) {
                        0.0
                    } else {
                        (av - ev).abs() / av.abs()
                    };
                    MetricCheck {
                        name,
                        analytic: av,
                        empirical: ev,
                        rel_error,
                        pass: rel_error <= tolerances.mean_rel,
                    }
                })
                .collect();
            let tv_aoi = total_variation(&a.aoi_pmf, &e.aoi_pmf);
            let tv_paoi = total_variation(&a.paoi_pmf, &e.paoi_pmf);
            let tv_pass = tv_aoi < tolerances.tv && tv_paoi < tolerances.tv;
            let pass = tv_pass && checks.iter().all(|c| c.pass);
            SourceValidation {
                source: i,
                checks,
                tv_aoi,
                tv_paoi,
                tv_pass,
                pass,
            }
        })
        .collect();
    let pass = !sources.is_empty() && sources.iter().all(|s| s.pass);
    ValidationReport {
        tolerances,
        sources,
        pass,
    }
}
