//! Exhaustive grid sweeps and optimization of retransmission caps,
//! generation probabilities, and transmit powers.
//!
//! A [`GridSpec`] names the swept dimensions; everything else stays at the
//! template scenario's values. Rows are enumerated in lexicographic grid
//! order (last dimension fastest) so tables are deterministic and tie-breaks
//! resolve to the lexicographically smallest assignment. Points with a zero
//! generation probability or zero transmit power are evaluated and flagged
//! degenerate rather than rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, NormalizationContext, SourceMetrics};
use crate::model::{self, ChannelSpec, Scenario};

/// Optimization objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Minimize the normalized weighted sum of mean timeliness and power.
    #[default]
    #[serde(rename = "ws")]
    WeightedSum,
    /// Maximize the overall energy efficiency.
    #[serde(rename = "ee")]
    EnergyEfficiency,
}

/// Objective settings carried by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    #[serde(default)]
    pub kind: ObjectiveKind,
    #[serde(default = "default_weight")]
    pub weight_aoi: f64,
}

fn default_weight() -> f64 {
    0.5
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            kind: ObjectiveKind::WeightedSum,
            weight_aoi: default_weight(),
        }
    }
}

/// Which per-source parameter a grid dimension sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    #[serde(rename = "L")]
    MaxTxTime,
    #[serde(rename = "q")]
    GenProb,
    #[serde(rename = "P")]
    TxPower,
}

impl ParamKind {
    fn letter(self) -> char {
        match self {
            ParamKind::MaxTxTime => 'L',
            ParamKind::GenProb => 'q',
            ParamKind::TxPower => 'P',
        }
    }
}

/// One swept dimension: a parameter of one source over an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDimension {
    pub param: ParamKind,
    /// 1-based source index, matching the output column labels.
    pub source: usize,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridDimension {
    /// Column label, e.g. `L1` or `q2`.
    pub fn label(&self) -> String {
        format!("{}{}", self.param.letter(), self.source)
    }

    fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let v = self.min + k as f64 * self.step;
            if v > self.max + 1e-9 * self.step.abs() {
                break;
            }
            out.push(if self.param == ParamKind::MaxTxTime {
                v.round()
            } else {
                v
            });
            k += 1;
        }
        out
    }
}

/// The full sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dimensions: Vec<GridDimension>,
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("empty grid: {reason}")]
    EmptyGrid { reason: String },
    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },
}

fn validate_grid(template: &Scenario, grid: &GridSpec) -> Result<Vec<Vec<f64>>, OptimizeError> {
    if grid.dimensions.is_empty() {
        return Err(OptimizeError::EmptyGrid {
            reason: "no dimensions".into(),
        });
    }
    let n = template.sources.len();
    let mut axes = Vec::with_capacity(grid.dimensions.len());
    for dim in &grid.dimensions {
        if dim.source == 0 || dim.source > n {
            return Err(OptimizeError::InvalidGrid {
                reason: format!("{}: source index out of range (1..={n})", dim.label()),
            });
        }
        if dim.step <= 0.0 || dim.step.is_nan() || dim.min > dim.max {
            return Err(OptimizeError::InvalidGrid {
                reason: format!("{}: need step > 0 and min <= max", dim.label()),
            });
        }
        let bounds_ok = match dim.param {
            ParamKind::MaxTxTime => dim.min >= 1.0,
            ParamKind::GenProb => dim.min >= 0.0 && dim.max <= 1.0,
            ParamKind::TxPower => dim.min >= 0.0,
        };
        if !bounds_ok {
            return Err(OptimizeError::InvalidGrid {
                reason: format!("{}: values outside the parameter's domain", dim.label()),
            });
        }
        let values = dim.values();
        if values.is_empty() {
            return Err(OptimizeError::EmptyGrid {
                reason: format!("{}: no values in range", dim.label()),
            });
        }
        axes.push(values);
    }
    Ok(axes)
}

fn apply_assignment(template: &Scenario, dims: &[GridDimension], values: &[f64]) -> Scenario {
    let mut scenario = template.clone();
    for (dim, &value) in dims.iter().zip(values) {
        let src = &mut scenario.sources[dim.source - 1];
        match dim.param {
            ParamKind::MaxTxTime => src.max_tx_time = value.round() as u32,
            ParamKind::GenProb => src.q = value,
            ParamKind::TxPower => match &mut src.channel {
                ChannelSpec::Direct { power, .. } => *power = value,
                ChannelSpec::Rayleigh { power, .. } => *power = value,
            },
        }
    }
    scenario
}

/// One evaluated grid point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    /// Swept values, aligned with the grid's dimensions.
    pub assignment: Vec<f64>,
    pub per_source: Vec<SourceMetrics>,
    /// Arithmetic mean of per-source mean AoIs; infinite when any source is
    /// degenerate at this point.
    pub source_avg_aoi: f64,
    pub total_power: f64,
    /// Overall energy efficiency; NaN when no source consumes power.
    pub overall_ee: f64,
    pub harmonic_timeliness: f64,
    /// 1-based indices of sources with no deliveries at this point.
    pub degenerate_sources: Vec<usize>,
}

/// A full sweep: deterministic rows plus the normalization bounds recorded
/// over this grid.
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub dimensions: Vec<GridDimension>,
    pub rows: Vec<SweepRow>,
    pub normalization: NormalizationContext,
}

impl SweepTable {
    /// Weighted-sum objective of every row under this table's normalization.
    /// Degenerate rows map to infinity.
    pub fn ws_values(&self, weight_aoi: f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                if row.source_avg_aoi.is_finite() {
                    weight_aoi * self.normalization.normalize_aoi(row.source_avg_aoi)
                        + (1.0 - weight_aoi) * self.normalization.normalize_power(row.total_power)
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

/// Evaluate the closed-form metrics at one scenario point, tolerating
/// degenerate sources (zero generation probability, success probability, or
/// transmit power).
fn evaluate_point(scenario: &Scenario) -> (Vec<SourceMetrics>, Vec<usize>) {
    let gen_probs: Vec<f64> = scenario.sources.iter().map(|s| s.q).collect();
    let overall = model::overall_ugp(&gen_probs);
    let selection = model::selection_probabilities(&gen_probs);
    let mut per_source = Vec::with_capacity(scenario.sources.len());
    let mut degenerate = Vec::new();
    for (i, src) in scenario.sources.iter().enumerate() {
        let gamma = model::resolve_gamma(&src.channel);
        let link = model::LinkParams {
            max_tx_time: src.max_tx_time,
            overall_gen_prob: overall,
            selection_prob: selection[i],
            success_prob: gamma,
        };
        if link.is_degenerate() {
            degenerate.push(i + 1);
        }
        per_source.push(metrics::source_metrics_unchecked(
            &link,
            src.channel.tx_power(),
        ));
    }
    (per_source, degenerate)
}

/// Evaluate every grid point. Rows arrive in lexicographic grid order with
/// the last dimension varying fastest.
pub fn sweep(template: &Scenario, grid: &GridSpec) -> Result<SweepTable, OptimizeError> {
    let axes = validate_grid(template, grid)?;
    let total: usize = axes.iter().map(Vec::len).product();
    let mut rows = Vec::with_capacity(total);
    let mut index = vec![0usize; axes.len()];
    loop {
        let assignment: Vec<f64> = index.iter().zip(&axes).map(|(&k, axis)| axis[k]).collect();
        let scenario = apply_assignment(template, &grid.dimensions, &assignment);
        let (per_source, degenerate) = evaluate_point(&scenario);
        let n = per_source.len() as f64;
        let finite = degenerate.is_empty();
        let source_avg_aoi = if finite {
            per_source.iter().map(|m| m.mean_aoi).sum::<f64>() / n
        } else {
            f64::INFINITY
        };
        let total_power: f64 = per_source.iter().map(|m| m.avg_power).sum();
        let total_rate: f64 = per_source
            .iter()
            .map(|m| {
                let rate = m.delivery_rate;
                if rate.is_finite() {
                    rate
                } else {
                    0.0
                }
            })
            .sum();
        let inv_ages: f64 = per_source
            .iter()
            .map(|m| {
                if m.mean_aoi.is_finite() {
                    1.0 / (m.mean_aoi - 1.0)
                } else {
                    0.0
                }
            })
            .sum();
        rows.push(SweepRow {
            assignment,
            per_source,
            source_avg_aoi,
            total_power,
            overall_ee: total_rate / total_power,
            harmonic_timeliness: n / inv_ages,
            degenerate_sources: degenerate,
        });
        // Odometer increment, last dimension fastest.
        let mut d = axes.len();
        loop {
            if d == 0 {
                let normalization = normalization_bounds(&rows);
                return Ok(SweepTable {
                    dimensions: grid.dimensions.clone(),
                    rows,
                    normalization,
                });
            }
            d -= 1;
            index[d] += 1;
            if index[d] < axes[d].len() {
                break;
            }
            index[d] = 0;
        }
    }
}

fn normalization_bounds(rows: &[SweepRow]) -> NormalizationContext {
    let mut ctx = NormalizationContext {
        aoi_min: f64::INFINITY,
        aoi_max: f64::NEG_INFINITY,
        power_min: f64::INFINITY,
        power_max: f64::NEG_INFINITY,
    };
    for row in rows {
        if row.source_avg_aoi.is_finite() {
            ctx.aoi_min = ctx.aoi_min.min(row.source_avg_aoi);
            ctx.aoi_max = ctx.aoi_max.max(row.source_avg_aoi);
        }
        if row.total_power.is_finite() {
            ctx.power_min = ctx.power_min.min(row.total_power);
            ctx.power_max = ctx.power_max.max(row.total_power);
        }
    }
    ctx
}

/// A named reference point evaluated on the same grid and normalization.
#[derive(Debug, Clone, Serialize)]
pub struct Baseline {
    pub assignment: BTreeMap<String, f64>,
    pub value: f64,
}

/// Outcome of a grid optimization.
#[derive(Debug, Clone, Serialize)]
pub struct OptResult {
    pub objective: ObjectiveKind,
    pub argopt: BTreeMap<String, f64>,
    pub value: f64,
    pub baselines: BTreeMap<String, Baseline>,
    /// 1-based indices of sources whose optimum landed on a degenerate or
    /// dominated edge of the grid (energy-efficiency objective only).
    pub degenerate_sources: Vec<usize>,
    #[serde(skip)]
    pub table: SweepTable,
}

fn labelled(dims: &[GridDimension], assignment: &[f64]) -> BTreeMap<String, f64> {
    dims.iter()
        .zip(assignment)
        .map(|(d, &v)| (d.label(), v))
        .collect()
}

/// Argmin/argmax over row indices, first improvement wins; with rows in
/// lexicographic order this yields the lexicographically smallest tie.
fn best_row<'a>(
    scores: impl Iterator<Item = &'a f64>,
    candidates: Option<&[usize]>,
    minimize: bool,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let scores: Vec<f64> = scores.copied().collect();
    let indices: Box<dyn Iterator<Item = usize>> = match candidates {
        Some(c) => Box::new(c.iter().copied()),
        None => Box::new(0..scores.len()),
    };
    for i in indices {
        let s = scores[i];
        if s.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => {
                if minimize {
                    s < b
                } else {
                    s > b
                }
            }
        };
        if better {
            best = Some((i, s));
        }
    }
    best
}

/// Rows whose swept dimensions of `kind` are pinned to `pin(values)`.
fn subset_where(table: &SweepTable, predicate: impl Fn(&[f64]) -> bool) -> Vec<usize> {
    table
        .rows
        .iter()
        .enumerate()
        .filter(|(_, row)| predicate(&row.assignment))
        .map(|(i, _)| i)
        .collect()
}

fn dim_positions(dims: &[GridDimension], kind: ParamKind) -> Vec<usize> {
    dims.iter()
        .enumerate()
        .filter(|(_, d)| d.param == kind)
        .map(|(i, _)| i)
        .collect()
}

/// Nearest grid value to the midpoint of a dimension's range.
fn midpoint_value(dim: &GridDimension) -> f64 {
    let mid = 0.5 * (dim.min + dim.max);
    let values = dim.values();
    *values
        .iter()
        .min_by(|a, b| {
            (*a - mid)
                .abs()
                .partial_cmp(&(*b - mid).abs())
                .expect("finite grid values")
        })
        .expect("non-empty dimension")
}

/// Standard baselines over the swept dimensions, all drawn from the grid so
/// the optimum dominates them by construction:
///
/// - `source_agnostic`: equal values across sources for every parameter kind
///   swept on two or more sources (only when such a kind exists),
/// - `narq` / `near_carq`: swept caps pinned to the grid minimum / maximum,
/// - `median` / `min` / `max`: swept generation probabilities and powers
///   pinned to the mid/min/max of their ranges.
///
/// Remaining free dimensions are optimized within each baseline subset.
fn baselines(table: &SweepTable, scores: &[f64], minimize: bool) -> BTreeMap<String, Baseline> {
    let dims = &table.dimensions;
    let mut out = BTreeMap::new();
    let mut add = |name: &str, indices: Vec<usize>| {
        if indices.is_empty() {
            return;
        }
        if let Some((row, value)) = best_row(scores.iter(), Some(&indices), minimize) {
            out.insert(
                name.to_string(),
                Baseline {
                    assignment: labelled(dims, &table.rows[row].assignment),
                    value,
                },
            );
        }
    };

    // Equal-across-sources restriction, per parameter kind swept >= twice.
    let shared: Vec<ParamKind> = [ParamKind::MaxTxTime, ParamKind::GenProb, ParamKind::TxPower]
        .into_iter()
        .filter(|&k| dim_positions(dims, k).len() >= 2)
        .collect();
    if !shared.is_empty() {
        let indices = subset_where(table, |assignment| {
            shared.iter().all(|&k| {
                let pos = dim_positions(dims, k);
                pos.windows(2).all(|w| assignment[w[0]] == assignment[w[1]])
            })
        });
        add("source_agnostic", indices);
    }

    let cap_dims = dim_positions(dims, ParamKind::MaxTxTime);
    if !cap_dims.is_empty() {
        let lows: Vec<f64> = cap_dims.iter().map(|&i| dims[i].values()[0]).collect();
        let highs: Vec<f64> = cap_dims
            .iter()
            .map(|&i| *dims[i].values().last().expect("non-empty"))
            .collect();
        add(
            "narq",
            subset_where(table, |a| {
                cap_dims.iter().zip(&lows).all(|(&i, &v)| a[i] == v)
            }),
        );
        add(
            "near_carq",
            subset_where(table, |a| {
                cap_dims.iter().zip(&highs).all(|(&i, &v)| a[i] == v)
            }),
        );
    }

    for kind in [ParamKind::GenProb, ParamKind::TxPower] {
        let pos = dim_positions(dims, kind);
        if pos.is_empty() {
            continue;
        }
        let prefix = match kind {
            ParamKind::GenProb => "q",
            ParamKind::TxPower => "p",
            ParamKind::MaxTxTime => unreachable!(),
        };
        let mids: Vec<f64> = pos.iter().map(|&i| midpoint_value(&dims[i])).collect();
        let mins: Vec<f64> = pos.iter().map(|&i| dims[i].values()[0]).collect();
        let maxs: Vec<f64> = pos
            .iter()
            .map(|&i| *dims[i].values().last().expect("non-empty"))
            .collect();
        add(
            &format!("{prefix}_median"),
            subset_where(table, |a| pos.iter().zip(&mids).all(|(&i, &v)| a[i] == v)),
        );
        add(
            &format!("{prefix}_min"),
            subset_where(table, |a| pos.iter().zip(&mins).all(|(&i, &v)| a[i] == v)),
        );
        add(
            &format!("{prefix}_max"),
            subset_where(table, |a| pos.iter().zip(&maxs).all(|(&i, &v)| a[i] == v)),
        );
    }
    out
}

/// Minimize the normalized weighted sum over the grid.
pub fn optimize_ws(
    template: &Scenario,
    grid: &GridSpec,
    weight_aoi: f64,
) -> Result<OptResult, OptimizeError> {
    let table = sweep(template, grid)?;
    let scores = table.ws_values(weight_aoi);
    let (row, value) =
        best_row(scores.iter(), None, true).ok_or_else(|| OptimizeError::EmptyGrid {
            reason: "no evaluable rows".into(),
        })?;
    let baselines = baselines(&table, &scores, true);
    Ok(OptResult {
        objective: ObjectiveKind::WeightedSum,
        argopt: labelled(&table.dimensions, &table.rows[row].assignment),
        value,
        baselines,
        degenerate_sources: Vec::new(),
        table,
    })
}

/// Maximize the overall energy efficiency over the grid.
///
/// The result flags sources whose optimum sits at a degenerate edge: a zero
/// generation probability or transmit power, or any swept dimension pinned
/// at the grid minimum while the source's own energy efficiency is dominated
/// by another source's. Such optima silence the flagged source entirely.
pub fn optimize_ee(template: &Scenario, grid: &GridSpec) -> Result<OptResult, OptimizeError> {
    let table = sweep(template, grid)?;
    let scores: Vec<f64> = table.rows.iter().map(|r| r.overall_ee).collect();
    let (row, value) =
        best_row(scores.iter(), None, false).ok_or_else(|| OptimizeError::EmptyGrid {
            reason: "no evaluable rows".into(),
        })?;
    let best = &table.rows[row];

    let max_ee = best
        .per_source
        .iter()
        .map(|m| if m.ee.is_nan() { 0.0 } else { m.ee })
        .fold(f64::NEG_INFINITY, f64::max);
    let mut flagged = Vec::new();
    for (pos, dim) in table.dimensions.iter().enumerate() {
        let v = best.assignment[pos];
        let at_zero = v == 0.0 && matches!(dim.param, ParamKind::GenProb | ParamKind::TxPower);
        let ee = best.per_source[dim.source - 1].ee;
        let dominated = ee.is_nan() || ee < max_ee - 1e-15;
        let at_min = v == dim.values()[0];
        if (at_zero || (at_min && dominated)) && !flagged.contains(&dim.source) {
            flagged.push(dim.source);
        }
    }
    flagged.sort_unstable();

    let baselines = baselines(&table, &scores, false);
    Ok(OptResult {
        objective: ObjectiveKind::EnergyEfficiency,
        argopt: labelled(&table.dimensions, &best.assignment),
        value,
        baselines,
        degenerate_sources: flagged,
        table,
    })
}
