//! Closed-form and series-based performance metrics.
//!
//! Everything here is driven by the link parameters of one source: AoI and
//! peak-AoI distributions and means, the classical-ARQ and no-retransmission
//! specializations, duty cycle, average power, transmission-time statistics,
//! per-source and overall energy efficiency, and the system-level aggregates
//! used by the sweep optimizer.
//!
//! Distributions come in two independent routes wherever the derivation
//! allows it: a direct rational-series extraction of the generating function
//! and a composition from the stationary boundary sequences. Tests hold the
//! routes to 1e-10 agreement.

use serde::Serialize;
use thiserror::Error;

use crate::mdap::{self, StationarySeries};
use crate::model::LinkParams;
use crate::series::{expand_pair, expand_until, poly_mul};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("degenerate input: {reason}")]
    Degenerate { reason: String },
}

fn degenerate(reason: impl Into<String>) -> MetricsError {
    MetricsError::Degenerate {
        reason: reason.into(),
    }
}

fn require_ergodic(link: &LinkParams) -> Result<(), MetricsError> {
    if link.is_degenerate() {
        return Err(degenerate(format!(
            "gamma={} and p_i={} admit no deliveries",
            link.success_prob, link.selection_prob
        )));
    }
    Ok(())
}

/// A probability mass function over integer ages `n >= first_index`.
///
/// `probs[k]` holds `Pr{first_index + k}`; `tail_mass` bounds the mass beyond
/// the materialized horizon and `tail_ratio` is the estimated geometric decay
/// of that tail, used to close the mean in closed form.
#[derive(Debug, Clone)]
pub struct Pmf {
    first_index: u32,
    probs: Vec<f64>,
    tail_mass: f64,
    tail_ratio: f64,
}

impl Pmf {
    pub(crate) fn new(first_index: u32, probs: Vec<f64>, tail_mass: f64, tail_ratio: f64) -> Pmf {
        Pmf {
            first_index,
            probs,
            tail_mass,
            tail_ratio,
        }
    }

    pub fn first_index(&self) -> u32 {
        self.first_index
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Last materialized index.
    pub fn support_end(&self) -> u32 {
        self.first_index + self.probs.len() as u32 - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn tail_ratio(&self) -> f64 {
        self.tail_ratio
    }

    /// Probability at `n`; zero outside the materialized range.
    pub fn prob(&self, n: u32) -> f64 {
        if n < self.first_index {
            return 0.0;
        }
        self.probs
            .get((n - self.first_index) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// Materialized mass plus the tail bound.
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    /// Mass at or above `n`, folding the tail in.
    pub fn mass_from(&self, n: u32) -> f64 {
        let from = n.max(self.first_index);
        let skip = (from - self.first_index) as usize;
        self.probs.iter().skip(skip).sum::<f64>() + self.tail_mass
    }

    /// Mean with the truncated tail summed in closed form from the estimated
    /// geometric ratio rather than discarded.
    pub fn mean(&self) -> f64 {
        let mut mean = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            mean += (self.first_index as f64 + k as f64) * p;
        }
        if self.tail_mass > 0.0 {
            let next = self.support_end() as f64 + 1.0;
            let r = self.tail_ratio;
            mean += self.tail_mass * next;
            if r > 0.0 && r < 1.0 {
                mean += self.tail_mass * r / (1.0 - r);
            }
        }
        mean
    }
}

fn pmf_from_expansion(exp: crate::series::Expansion) -> Result<Pmf, MetricsError> {
    let mut probs: Vec<f64> = exp.coeffs.into_iter().skip(2).collect();
    mdap::clamp_coefficients(&mut probs)
        .map_err(|e| degenerate(format!("series round-off: {e}")))?;
    Ok(Pmf::new(2, probs, exp.tail_mass, exp.tail_ratio))
}

/// AoI distribution from the rational series of its generating function.
pub fn aoi_pmf(link: &LinkParams, eps: f64) -> Result<Pmf, MetricsError> {
    require_ergodic(link)?;
    let num = poly_mul(
        &[0.0, 0.0, link.success_prob * link.selection_prob],
        &mdap::one_minus_hold_pow(link),
    );
    let den = mdap::base_denominator(link);
    pmf_from_expansion(expand_until(num, den, eps, 0))
}

/// AoI distribution composed from the stationary boundary sequences:
/// `phi_n = g_n + sum_{k=0}^{min(L, n-1)-1} lambda^k y_{n-k}`.
///
/// Independent route from [`aoi_pmf`]; the two must agree to 1e-10.
pub fn aoi_pmf_via_stationary(series: &StationarySeries) -> Pmf {
    let lambda = series.hold_prob();
    let l = series.max_tx_time();
    let horizon = series.horizon();
    let mut probs = Vec::with_capacity((horizon - 1) as usize);
    for n in 2..=horizon {
        let mut phi = series.g(n).expect("within horizon");
        let window = l.min(n - 1);
        for k in 0..window {
            phi += lambda.powi(k as i32) * series.y(n - k).expect("within horizon");
        }
        probs.push(phi);
    }
    Pmf::new(2, probs, series.tail_mass_bound(), series.tail_ratio())
}

/// Average AoI in closed form.
pub fn aoi_mean(link: &LinkParams) -> Result<f64, MetricsError> {
    Ok(success_interval_mean(link)? + 1.0)
}

/// Peak-AoI distribution via the primary route `psi_n = (phi_n - g_n) / rho`.
pub fn paoi_pmf(link: &LinkParams, eps: f64) -> Result<Pmf, MetricsError> {
    require_ergodic(link)?;
    let rho = duty_cycle(link)?;
    let lambda = link.hold_prob();
    let gamma = link.success_prob;
    let p_i = link.selection_prob;
    let window = mdap::one_minus_hold_pow(link);
    let den = mdap::base_denominator(link);

    let num_phi = poly_mul(&[0.0, 0.0, gamma * p_i], &window);
    let l = link.max_tx_time as usize;
    let mut inner = vec![0.0; l + 1];
    inner[0] = 1.0 - p_i;
    inner[1] -= lambda;
    inner[l] += p_i * lambda.powi(l as i32);
    let num_g = poly_mul(&poly_mul(&[0.0, 0.0, gamma * p_i], &window), &inner);
    let den_g = poly_mul(&[1.0, -lambda], &den);

    let part_eps = 0.5 * eps * rho;
    let (phi, g) = expand_pair((num_phi, den), (num_g, den_g), part_eps, part_eps);

    let mut probs: Vec<f64> = phi
        .coeffs
        .iter()
        .zip(&g.coeffs)
        .skip(2)
        .map(|(phi_k, g_k)| (phi_k - g_k) / rho)
        .collect();
    mdap::clamp_coefficients(&mut probs)
        .map_err(|e| degenerate(format!("series round-off: {e}")))?;
    let tail = ((phi.tail_mass - g.tail_mass) / rho).max(0.0);
    Ok(Pmf::new(2, probs, tail, phi.tail_ratio.max(g.tail_ratio)))
}

/// Peak-AoI distribution via the secondary route: direct extraction of its
/// generating function's coefficients.
pub fn paoi_pmf_via_transform(link: &LinkParams, eps: f64) -> Result<Pmf, MetricsError> {
    require_ergodic(link)?;
    let lambda = link.hold_prob();
    let l = link.max_tx_time as i32;
    let window_sum_inv = (1.0 - lambda) / (1.0 - lambda.powi(l));
    let window = mdap::one_minus_hold_pow(link);
    let scale = link.success_prob * link.selection_prob * window_sum_inv;
    let num = poly_mul(&poly_mul(&[0.0, 0.0, scale], &window), &window);
    let den = poly_mul(&[1.0, -lambda], &mdap::base_denominator(link));
    pmf_from_expansion(expand_until(num, den, eps, 0))
}

/// Average peak AoI in closed form.
pub fn paoi_mean(link: &LinkParams) -> Result<f64, MetricsError> {
    let interval = success_interval_mean(link)?;
    Ok(interval + tx_time_stats(link)?.mean)
}

/// Classical-ARQ (unbounded retransmission) limit.
#[derive(Debug, Clone)]
pub struct CarqMetrics {
    pub aoi_mean: f64,
    pub paoi_mean: f64,
    pub aoi_pmf: Pmf,
    pub paoi_pmf: Pmf,
}

/// Metrics under unbounded retransmission.
pub fn carq_metrics(
    overall_gen_prob: f64,
    selection_prob: f64,
    success_prob: f64,
    eps: f64,
) -> Result<CarqMetrics, MetricsError> {
    if success_prob <= 0.0 || selection_prob <= 0.0 {
        return Err(degenerate("gamma and p_i must be positive"));
    }
    let lambda = (1.0 - success_prob) * (1.0 - overall_gen_prob);
    let gp = success_prob * selection_prob;
    let aoi_mean = (1.0 - lambda) / gp + 1.0;
    let paoi_mean = (1.0 - lambda) / gp + 1.0 / (1.0 - lambda);
    // With w = 1/z the AoI transform clears to
    // gamma p_i w^2 / (1 - (1 - gamma p_i + lambda) w + lambda w^2).
    let den = vec![1.0, -(1.0 - gp + lambda), lambda];
    let aoi_pmf = pmf_from_expansion(expand_until(vec![0.0, 0.0, gp], den.clone(), eps, 0))?;
    let paoi_den = poly_mul(&[1.0, -lambda], &den);
    let paoi_pmf = pmf_from_expansion(expand_until(
        vec![0.0, 0.0, gp * (1.0 - lambda)],
        paoi_den,
        eps,
        0,
    ))?;
    Ok(CarqMetrics {
        aoi_mean,
        paoi_mean,
        aoi_pmf,
        paoi_pmf,
    })
}

/// No-retransmission limit: AoI and peak AoI coincide.
#[derive(Debug, Clone)]
pub struct NarqMetrics {
    pub mean: f64,
    pub pmf: Pmf,
}

/// Metrics without retransmission: a geometric law with parameter
/// `gamma p_i`, serving for both AoI and peak AoI.
pub fn narq_metrics(
    selection_prob: f64,
    success_prob: f64,
    eps: f64,
) -> Result<NarqMetrics, MetricsError> {
    if success_prob <= 0.0 || selection_prob <= 0.0 {
        return Err(degenerate("gamma and p_i must be positive"));
    }
    let gp = success_prob * selection_prob;
    let miss = 1.0 - gp;
    let mut probs = Vec::new();
    let mut term = gp;
    let mut tail = miss;
    probs.push(term);
    while tail >= eps && miss > 0.0 {
        term *= miss;
        tail *= miss;
        probs.push(term);
    }
    Ok(NarqMetrics {
        mean: 1.0 / gp + 1.0,
        pmf: Pmf::new(2, probs, tail, miss),
    })
}

/// Long-run fraction of slots in which an update of this source occupies the
/// channel: `rho = p_i (1 - lambda^L) / (1 - lambda)`.
pub fn duty_cycle(link: &LinkParams) -> Result<f64, MetricsError> {
    let lambda = link.hold_prob();
    if lambda >= 1.0 {
        return Err(degenerate("lambda = 1: the channel never resolves a slot"));
    }
    Ok(link.selection_prob * (1.0 - lambda.powi(link.max_tx_time as i32)) / (1.0 - lambda))
}

/// Average per-slot energy spent on this source.
pub fn avg_power(link: &LinkParams, tx_power: f64) -> Result<f64, MetricsError> {
    Ok(tx_power * duty_cycle(link)?)
}

/// Distribution of the per-delivered-update transmission time on `1..=L`.
#[derive(Debug, Clone)]
pub struct TxTimeStats {
    /// `probs[k] = Pr{T = k + 1}`.
    pub probs: Vec<f64>,
    pub mean: f64,
}

/// Transmission-time statistics of successfully delivered updates:
/// `Pr{T = n} = lambda^(n-1) (1 - lambda) / (1 - lambda^L)`.
pub fn tx_time_stats(link: &LinkParams) -> Result<TxTimeStats, MetricsError> {
    let lambda = link.hold_prob();
    if lambda >= 1.0 {
        return Err(degenerate("lambda = 1: the channel never resolves a slot"));
    }
    let l = link.max_tx_time;
    let norm = (1.0 - lambda) / (1.0 - lambda.powi(l as i32));
    let probs = (0..l).map(|k| norm * lambda.powi(k as i32)).collect();
    let mean =
        1.0 / (1.0 - lambda) - l as f64 * lambda.powi(l as i32) / (1.0 - lambda.powi(l as i32));
    Ok(TxTimeStats { probs, mean })
}

/// Mean interval between generations of consecutive delivered updates:
/// `E[X] = (1 - lambda) / (gamma p_i (1 - lambda^L))`.
pub fn success_interval_mean(link: &LinkParams) -> Result<f64, MetricsError> {
    require_ergodic(link)?;
    let lambda = link.hold_prob();
    Ok((1.0 - lambda)
        / (link.success_prob * link.selection_prob * (1.0 - lambda.powi(link.max_tx_time as i32))))
}

/// Deliveries per unit energy: `eta = gamma / P`.
pub fn ee_source(success_prob: f64, tx_power: f64) -> Result<f64, MetricsError> {
    if tx_power <= 0.0 {
        return Err(degenerate(
            "energy efficiency needs positive transmit power",
        ));
    }
    Ok(success_prob / tx_power)
}

/// Scalar per-source performance summary.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SourceMetrics {
    pub mean_aoi: f64,
    pub mean_paoi: f64,
    pub duty_cycle: f64,
    pub avg_power: f64,
    /// Deliveries per unit energy; NaN when the source has no transmit power.
    pub ee: f64,
    pub mean_tx_time: f64,
    pub mean_success_interval: f64,
    /// Deliveries per slot, `gamma * rho`.
    pub delivery_rate: f64,
}

/// All per-source metrics from the closed forms. Errors on degenerate links.
pub fn source_metrics(link: &LinkParams, tx_power: f64) -> Result<SourceMetrics, MetricsError> {
    require_ergodic(link)?;
    Ok(source_metrics_unchecked(link, tx_power))
}

/// Lenient variant for sweeps: degenerate links produce infinite ages and a
/// NaN efficiency instead of an error, so grid points stay representable.
pub(crate) fn source_metrics_unchecked(link: &LinkParams, tx_power: f64) -> SourceMetrics {
    let lambda = link.hold_prob();
    let l = link.max_tx_time as i32;
    let window = 1.0 - lambda.powi(l);
    let duty = link.selection_prob * window / (1.0 - lambda);
    let interval = (1.0 - lambda) / (link.success_prob * link.selection_prob * window);
    let tx_mean = 1.0 / (1.0 - lambda) - l as f64 * lambda.powi(l) / window;
    SourceMetrics {
        mean_aoi: interval + 1.0,
        mean_paoi: interval + tx_mean,
        duty_cycle: duty,
        avg_power: tx_power * duty,
        ee: if tx_power > 0.0 {
            link.success_prob / tx_power
        } else {
            f64::NAN
        },
        mean_tx_time: tx_mean,
        mean_success_interval: interval,
        delivery_rate: link.success_prob * duty,
    }
}

/// Min-max bounds used to normalize the weighted-sum objective. Bounds come
/// from the grid under study so that reported values are reproducible.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormalizationContext {
    pub aoi_min: f64,
    pub aoi_max: f64,
    pub power_min: f64,
    pub power_max: f64,
}

impl NormalizationContext {
    fn norm(value: f64, min: f64, max: f64) -> f64 {
        if max > min {
            (value - min) / (max - min)
        } else {
            0.0
        }
    }

    pub fn normalize_aoi(&self, value: f64) -> f64 {
        Self::norm(value, self.aoi_min, self.aoi_max)
    }

    pub fn normalize_power(&self, value: f64) -> f64 {
        Self::norm(value, self.power_min, self.power_max)
    }
}

/// System-level aggregates across sources.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SystemMetrics {
    /// Arithmetic mean of the per-source average AoIs.
    pub source_avg_aoi: f64,
    /// Total average transmit power.
    pub total_power: f64,
    /// Normalized weighted sum of timeliness and power; present only when a
    /// normalization context is supplied.
    pub weighted_sum: Option<f64>,
    /// Overall energy efficiency: total delivery rate over total power.
    pub overall_ee: f64,
    /// Harmonic mean of the per-source `mean_aoi - 1` values.
    pub harmonic_timeliness: f64,
}

/// Aggregate per-source metrics. Sources with infinite mean AoI must be
/// excluded by the caller; they would silently poison every aggregate.
pub fn system_metrics(
    per_source: &[SourceMetrics],
    weight_aoi: f64,
    norm: Option<&NormalizationContext>,
) -> Result<SystemMetrics, MetricsError> {
    if per_source.is_empty() {
        return Err(degenerate("no sources to aggregate"));
    }
    if per_source.iter().any(|m| !m.mean_aoi.is_finite()) {
        return Err(degenerate(
            "a source has infinite mean AoI; exclude degenerate sources upstream",
        ));
    }
    let n = per_source.len() as f64;
    let source_avg_aoi = per_source.iter().map(|m| m.mean_aoi).sum::<f64>() / n;
    let total_power: f64 = per_source.iter().map(|m| m.avg_power).sum();
    let total_rate: f64 = per_source.iter().map(|m| m.delivery_rate).sum();
    let inv_ages: f64 = per_source.iter().map(|m| 1.0 / (m.mean_aoi - 1.0)).sum();
    let weighted_sum = norm.map(|ctx| {
        weight_aoi * ctx.normalize_aoi(source_avg_aoi)
            + (1.0 - weight_aoi) * ctx.normalize_power(total_power)
    });
    Ok(SystemMetrics {
        source_avg_aoi,
        total_power,
        weighted_sum,
        overall_ee: total_rate / total_power,
        harmonic_timeliness: n / inv_ages,
    })
}
