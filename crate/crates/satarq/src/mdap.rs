//! The per-source multi-dimensional age process.
//!
//! For each source the pair (AoI, age of its update in transmission) is a
//! discrete-time Markov chain. This module provides its exact transition
//! kernel, the stationary distribution obtained by expanding the closed-form
//! generating functions of the boundary sequences `y_n = pi_(n,1)` and
//! `g_n = pi_(n,0)`, and an independent truncated-matrix oracle that solves
//! the balance equations numerically.
//!
//! With `w = 1/z` both generating functions are ratios of polynomials of
//! degree at most `L + 2`, with common denominator factor
//!
//! ```text
//! D(w) = (1 - w)(1 - lambda w) + gamma p_i w (1 - lambda^L w^L),
//! ```
//!
//! so the sequences fall out of power-series long division ([`crate::series`])
//! and the complete distribution follows from the product form
//! `pi_(n,m) = lambda^(m-1) y_(n-m+1)`.

use thiserror::Error;

use crate::model::LinkParams;
use crate::series::{expand_pair, poly_add, poly_mul, Expansion};

/// Coefficients below this magnitude may round negative; anything more
/// negative indicates a bug rather than round-off.
const NEGATIVE_CLAMP: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum MdapError {
    #[error("invalid MDAP state (n={aoi}, m={tx_age}) for L={max_tx_time}")]
    InvalidState {
        aoi: u32,
        tx_age: u32,
        max_tx_time: u32,
    },
    #[error("degenerate source (gamma={success_prob}, p_i={selection_prob}): the age process has no stationary distribution")]
    Degenerate {
        success_prob: f64,
        selection_prob: f64,
    },
    #[error("stationary solve did not reach residual {target:e} within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        target: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("n={aoi} lies beyond the materialized horizon {horizon}")]
    BeyondHorizon { aoi: u32, horizon: u32 },
    #[error("series coefficient {index} is {value:e}, below the round-off clamp")]
    Numeric { index: usize, value: f64 },
}

/// One state of the age process: AoI `n >= 2` and the in-service update's
/// elapsed transmission time `m` (0 when no update of this source is in
/// service), with `m <= L` and `n > m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MdapState {
    pub aoi: u32,
    pub tx_age: u32,
}

impl MdapState {
    pub fn new(aoi: u32, tx_age: u32, max_tx_time: u32) -> Result<Self, MdapError> {
        let state = MdapState { aoi, tx_age };
        if state.is_valid(max_tx_time) {
            Ok(state)
        } else {
            Err(MdapError::InvalidState {
                aoi,
                tx_age,
                max_tx_time,
            })
        }
    }

    pub fn is_valid(&self, max_tx_time: u32) -> bool {
        self.aoi >= 2 && self.tx_age <= max_tx_time && self.aoi > self.tx_age
    }
}

/// All successors of `state` with their one-slot transition probabilities.
///
/// Rows with probability zero are omitted; the remaining probabilities sum
/// to one. Three regimes: idle (`m = 0`, only the generation outcome
/// matters), in service below the cap (success resets the age to `m + 1`,
/// failure preempts, holds, or hands the slot over), and at the cap
/// (`m = L`, failure forces a drop).
pub fn transition(state: MdapState, link: &LinkParams) -> Result<Vec<(MdapState, f64)>, MdapError> {
    let l = link.max_tx_time;
    if !state.is_valid(l) {
        return Err(MdapError::InvalidState {
            aoi: state.aoi,
            tx_age: state.tx_age,
            max_tx_time: l,
        });
    }
    let n = state.aoi;
    let m = state.tx_age;
    let p = link.overall_gen_prob;
    let p_i = link.selection_prob;
    let gamma = link.success_prob;

    let mut out = Vec::with_capacity(5);
    let mut push = |aoi: u32, tx_age: u32, prob: f64| {
        if prob > 0.0 {
            out.push((MdapState { aoi, tx_age }, prob));
        }
    };
    if m == 0 {
        push(n + 1, 1, p_i);
        push(n + 1, 0, 1.0 - p_i);
    } else if m < l {
        push(m + 1, 1, gamma * p_i);
        push(m + 1, 0, gamma * (1.0 - p_i));
        push(n + 1, 1, (1.0 - gamma) * p_i);
        push(n + 1, 0, (1.0 - gamma) * (p - p_i));
        push(n + 1, m + 1, (1.0 - gamma) * (1.0 - p));
    } else {
        push(l + 1, 1, gamma * p_i);
        push(l + 1, 0, gamma * (1.0 - p_i));
        push(n + 1, 1, (1.0 - gamma) * p_i);
        push(n + 1, 0, (1.0 - gamma) * (1.0 - p_i));
    }
    Ok(out)
}

/// Stationary boundary sequences of the age process.
///
/// `y(n) = pi_(n,1)` and `g(n) = pi_(n,0)` for `n` from 2 up to the
/// materialized horizon; the complete distribution is recovered through
/// [`StationarySeries::pi`]. `tail_mass_bound` bounds the regularized
/// stationary mass beyond the horizon.
#[derive(Debug, Clone)]
pub struct StationarySeries {
    max_tx_time: u32,
    hold_prob: f64,
    y: Vec<f64>,
    g: Vec<f64>,
    tail_mass_bound: f64,
    tail_ratio: f64,
}

impl StationarySeries {
    pub fn max_tx_time(&self) -> u32 {
        self.max_tx_time
    }

    pub fn hold_prob(&self) -> f64 {
        self.hold_prob
    }

    /// Largest AoI value materialized in the sequences.
    pub fn horizon(&self) -> u32 {
        self.y.len() as u32 + 1
    }

    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    /// Estimated geometric decay ratio of the tail.
    pub fn tail_ratio(&self) -> f64 {
        self.tail_ratio
    }

    /// `pi_(n,1)`, the probability of AoI `n` with a first-slot update in service.
    pub fn y(&self, n: u32) -> Result<f64, MdapError> {
        self.lookup(&self.y, n)
    }

    /// `pi_(n,0)`, the probability of AoI `n` with no update in service.
    pub fn g(&self, n: u32) -> Result<f64, MdapError> {
        self.lookup(&self.g, n)
    }

    fn lookup(&self, seq: &[f64], n: u32) -> Result<f64, MdapError> {
        if n > self.horizon() {
            return Err(MdapError::BeyondHorizon {
                aoi: n,
                horizon: self.horizon(),
            });
        }
        Ok(if n < 2 { 0.0 } else { seq[(n - 2) as usize] })
    }

    /// Full stationary probability of state `(n, m)` via the product form.
    pub fn pi(&self, n: u32, m: u32) -> Result<f64, MdapError> {
        let state = MdapState::new(n, m, self.max_tx_time)?;
        if state.tx_age == 0 {
            self.g(n)
        } else {
            Ok(self.hold_prob.powi((m - 1) as i32) * self.y(n - m + 1)?)
        }
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g
    }
}

fn require_ergodic(link: &LinkParams) -> Result<(), MdapError> {
    if link.is_degenerate() {
        return Err(MdapError::Degenerate {
            success_prob: link.success_prob,
            selection_prob: link.selection_prob,
        });
    }
    Ok(())
}

/// The polynomial `1 - lambda^L w^L`.
pub(crate) fn one_minus_hold_pow(link: &LinkParams) -> Vec<f64> {
    let l = link.max_tx_time as usize;
    let mut poly = vec![0.0; l + 1];
    poly[0] = 1.0;
    poly[l] -= link.hold_prob().powi(l as i32);
    poly
}

/// Common denominator factor `D(w)` shared by every generating function here.
pub(crate) fn base_denominator(link: &LinkParams) -> Vec<f64> {
    let lambda = link.hold_prob();
    let gp = link.success_prob * link.selection_prob;
    poly_add(
        &poly_mul(&[1.0, -1.0], &[1.0, -lambda]),
        &poly_mul(&[0.0, gp], &one_minus_hold_pow(link)),
    )
}

/// Clamp tiny negative round-off to zero; report anything worse.
pub(crate) fn clamp_coefficients(coeffs: &mut [f64]) -> Result<(), MdapError> {
    for (i, c) in coeffs.iter_mut().enumerate() {
        if *c < 0.0 {
            if *c < -NEGATIVE_CLAMP {
                return Err(MdapError::Numeric {
                    index: i,
                    value: *c,
                });
            }
            *c = 0.0;
        }
    }
    Ok(())
}

/// Expand both boundary sequences until the regularized tail mass falls
/// below `eps`.
///
/// `y` and `g` are extracted independently from their generating functions;
/// the recorded bound weights the `y` tail by the window sum
/// `(1 - lambda^L)/(1 - lambda)` so that it bounds the full stationary mass
/// beyond the horizon.
pub fn stationary_series(link: &LinkParams, eps: f64) -> Result<StationarySeries, MdapError> {
    require_ergodic(link)?;
    let lambda = link.hold_prob();
    let l = link.max_tx_time;
    let gamma = link.success_prob;
    let p_i = link.selection_prob;
    let window = one_minus_hold_pow(link);
    let den = base_denominator(link);

    // Y(w) = gamma p_i^2 w^2 (1 - lambda^L w^L) / D(w)
    let num_y = poly_mul(&[0.0, 0.0, gamma * p_i * p_i], &window);
    // G(w) = gamma p_i w^2 (1 - lambda^L w^L)(1 - p_i - lambda w + p_i lambda^L w^L)
    //        / ((1 - lambda w) D(w))
    let mut inner = vec![0.0; l as usize + 1];
    inner[0] = 1.0 - p_i;
    inner[1] -= lambda;
    inner[l as usize] += p_i * lambda.powi(l as i32);
    let num_g = poly_mul(&poly_mul(&[0.0, 0.0, gamma * p_i], &window), &inner);
    let den_g = poly_mul(&[1.0, -lambda], &den);

    // Split eps between the two sequences, weighting y by the window sum.
    let window_sum = if lambda > 0.0 {
        (1.0 - lambda.powi(l as i32)) / (1.0 - lambda)
    } else {
        1.0
    };
    let (y_exp, g_exp) = expand_pair(
        (num_y, den.clone()),
        (num_g, den_g),
        0.5 * eps / window_sum,
        0.5 * eps,
    );
    build_series(link, y_exp, g_exp, window_sum)
}

fn build_series(
    link: &LinkParams,
    y_exp: Expansion,
    g_exp: Expansion,
    window_sum: f64,
) -> Result<StationarySeries, MdapError> {
    // Both sequences start at w^2 and share a horizon.
    let mut y: Vec<f64> = y_exp.coeffs.into_iter().skip(2).collect();
    let mut g: Vec<f64> = g_exp.coeffs.into_iter().skip(2).collect();
    clamp_coefficients(&mut y)?;
    clamp_coefficients(&mut g)?;
    Ok(StationarySeries {
        max_tx_time: link.max_tx_time,
        hold_prob: link.hold_prob(),
        y,
        g,
        tail_mass_bound: window_sum * y_exp.tail_mass + g_exp.tail_mass,
        tail_ratio: y_exp.tail_ratio.max(g_exp.tail_ratio),
    })
}

/// Iteration budget for the truncated-matrix solve.
const ORACLE_MAX_ITERATIONS: usize = 500_000;
/// Residual target for the stationary vector (L1 norm of `x P - x`).
const ORACLE_RESIDUAL: f64 = 1e-12;

/// Independent ground truth: solve the balance equations on the state space
/// truncated at `n <= n_max`.
///
/// Transitions that would leave the truncated space are redirected to the
/// `n = n_max` boundary row, so the chain stays stochastic and the truncated
/// tail stays observable: it accumulates in that row and is reported as the
/// series' `tail_mass_bound`. Because no transition probability depends on
/// `n`, entries strictly below `n_max` are unaffected by the fold.
pub fn stationary_oracle(link: &LinkParams, n_max: u32) -> Result<StationarySeries, MdapError> {
    let full = oracle_distribution(link, n_max)?;
    let mut y = Vec::with_capacity((n_max - 1) as usize);
    let mut g = Vec::with_capacity((n_max - 1) as usize);
    for n in 2..=n_max {
        g.push(full.prob(n, 0));
        y.push(full.prob(n, 1));
    }
    clamp_coefficients(&mut y)?;
    clamp_coefficients(&mut g)?;
    let boundary: f64 = (0..=link.max_tx_time.min(n_max - 1))
        .map(|m| full.prob(n_max, m))
        .sum();
    Ok(StationarySeries {
        max_tx_time: link.max_tx_time,
        hold_prob: link.hold_prob(),
        y,
        g,
        tail_mass_bound: boundary,
        tail_ratio: f64::NAN,
    })
}

/// Dense stationary vector over the truncated state space.
pub(crate) struct OracleDistribution {
    n_max: u32,
    max_tx_time: u32,
    row_start: Vec<usize>,
    probs: Vec<f64>,
}

impl OracleDistribution {
    fn index(&self, n: u32, m: u32) -> usize {
        self.row_start[(n - 2) as usize] + m as usize
    }

    pub(crate) fn prob(&self, n: u32, m: u32) -> f64 {
        debug_assert!(n >= 2 && n <= self.n_max && m <= self.max_tx_time && n > m);
        self.probs[self.index(n, m)]
    }

    pub(crate) fn states(&self) -> impl Iterator<Item = MdapState> + '_ {
        (2..=self.n_max).flat_map(move |n| {
            (0..=self.max_tx_time.min(n - 1)).map(move |m| MdapState { aoi: n, tx_age: m })
        })
    }
}

pub(crate) fn oracle_distribution(
    link: &LinkParams,
    n_max: u32,
) -> Result<OracleDistribution, MdapError> {
    require_ergodic(link)?;
    assert!(
        n_max >= link.max_tx_time + 10,
        "n_max must exceed the retransmission cap by a margin"
    );
    let l = link.max_tx_time;
    let mut row_start = Vec::with_capacity((n_max - 1) as usize);
    let mut total = 0usize;
    for n in 2..=n_max {
        row_start.push(total);
        total += l.min(n - 1) as usize + 1;
    }
    let shape = OracleDistribution {
        n_max,
        max_tx_time: l,
        row_start,
        probs: Vec::new(),
    };

    // Sparse kernel rows; targets capped at the boundary row.
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(total);
    for state in shape.states() {
        let mut row = Vec::with_capacity(5);
        for (target, prob) in transition(state, link)? {
            let n = target.aoi.min(n_max);
            row.push((shape.index(n, target.tx_age), prob));
        }
        rows.push(row);
    }

    let mut current = vec![1.0 / total as f64; total];
    let mut next = vec![0.0; total];
    for iteration in 0..ORACLE_MAX_ITERATIONS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in rows.iter().enumerate() {
            let mass = current[i];
            if mass == 0.0 {
                continue;
            }
            for &(j, prob) in row {
                next[j] += mass * prob;
            }
        }
        let residual: f64 = current.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut current, &mut next);
        if residual < ORACLE_RESIDUAL {
            // Normalize away accumulated round-off drift.
            let total_mass: f64 = current.iter().sum();
            current.iter_mut().for_each(|x| *x /= total_mass);
            return Ok(OracleDistribution {
                probs: current,
                ..shape
            });
        }
        if iteration == ORACLE_MAX_ITERATIONS - 1 {
            return Err(MdapError::NoConvergence {
                target: ORACLE_RESIDUAL,
                residual,
                iterations: ORACLE_MAX_ITERATIONS,
            });
        }
    }
    unreachable!("loop either returns or errors on the final iteration")
}
