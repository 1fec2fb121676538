//! Coefficient extraction for rational generating functions.
//!
//! Every distribution in this crate is the coefficient sequence of a rational
//! function in `w = 1/z`. After clearing denominators, numerator and
//! denominator are polynomials in `w` of low degree, so the coefficients obey
//! a constant-coefficient linear recurrence (power-series long division):
//!
//! ```text
//! c[n] = num[n] - sum_{k=1..deg(den)} den[k] * c[n-k],   den[0] = 1.
//! ```
//!
//! The sequences of interest are non-negative and eventually decay
//! geometrically (the dominant pole is real and simple), which makes the
//! ratio of consecutive terms a usable tail estimator: once the last few
//! ratios have stabilised below one, the remaining mass is bounded by the
//! closed-form geometric sum.

/// Multiply two polynomials given as coefficient slices (index = power of w).
pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Add two polynomials of possibly different lengths.
pub(crate) fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &ai) in a.iter().enumerate() {
        out[i] += ai;
    }
    for (i, &bi) in b.iter().enumerate() {
        out[i] += bi;
    }
    out
}

/// Streaming power-series expansion of `num(w) / den(w)` with `den[0] != 0`.
pub(crate) struct RationalSeries {
    num: Vec<f64>,
    den: Vec<f64>,
    coeffs: Vec<f64>,
}

impl RationalSeries {
    pub(crate) fn new(num: Vec<f64>, den: Vec<f64>) -> Self {
        assert!(
            den.first().is_some_and(|&d| d != 0.0),
            "denominator must have a non-zero constant term"
        );
        let d0 = den[0];
        let num = num.iter().map(|c| c / d0).collect();
        let den = den.iter().map(|c| c / d0).collect();
        RationalSeries {
            num,
            den,
            coeffs: Vec::new(),
        }
    }

    /// Compute and return the next coefficient.
    pub(crate) fn next_coeff(&mut self) -> f64 {
        let n = self.coeffs.len();
        let mut c = if n < self.num.len() { self.num[n] } else { 0.0 };
        let kmax = (self.den.len() - 1).min(n);
        for k in 1..=kmax {
            c -= self.den[k] * self.coeffs[n - k];
        }
        self.coeffs.push(c);
        c
    }

    pub(crate) fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// Result of an adaptive expansion: coefficients from w^0 up to the horizon,
/// the geometric bound on the mass left beyond it, and the estimated ratio.
pub(crate) struct Expansion {
    pub coeffs: Vec<f64>,
    pub tail_mass: f64,
    pub tail_ratio: f64,
}

/// Number of trailing ratios that must agree before the tail estimate is trusted.
const RATIO_WINDOW: usize = 8;

/// Hard cap on materialised coefficients (memory guard for near-critical inputs).
const MAX_LEN: usize = 1 << 24;

/// Expand `num/den` until the geometric tail estimate drops below `eps`,
/// materialising at least `min_len` coefficients.
///
/// The estimator uses the maximum of the last [`RATIO_WINDOW`] consecutive
/// term ratios and requires them to have stabilised (relative spread below
/// 1e-3) before bounding the tail by `last * r / (1 - r)`.
pub(crate) fn expand_until(num: Vec<f64>, den: Vec<f64>, eps: f64, min_len: usize) -> Expansion {
    let start = num.len().max(den.len()) + RATIO_WINDOW;
    let mut series = RationalSeries::new(num, den);
    let mut len = min_len.max(start).min(MAX_LEN);
    while series.coeffs.len() < len {
        series.next_coeff();
    }
    loop {
        if let Some((ratio, tail)) = tail_estimate(series.coeffs()) {
            if tail < eps || series.coeffs.len() >= MAX_LEN {
                return Expansion {
                    coeffs: series.coeffs,
                    tail_mass: tail,
                    tail_ratio: ratio,
                };
            }
        } else if series.coeffs.len() >= MAX_LEN {
            // No stable estimate at the cap; report the last term as the bound.
            let last = series.coeffs.last().copied().unwrap_or(0.0).abs();
            return Expansion {
                coeffs: series.coeffs,
                tail_mass: last,
                tail_ratio: 1.0,
            };
        }
        // Grow geometrically so adaptive extension stays O(final length).
        len = (len + len / 2 + RATIO_WINDOW).min(MAX_LEN);
        while series.coeffs.len() < len {
            series.next_coeff();
        }
    }
}

/// Expand two series to a common horizon: each runs adaptively to its own
/// tail target, then the shorter one's recurrence is continued (never
/// zero-padded) up to the longer length. Padding with zeros would corrupt
/// differences of the two sequences near the horizon.
pub(crate) fn expand_pair(
    a: (Vec<f64>, Vec<f64>),
    b: (Vec<f64>, Vec<f64>),
    eps_a: f64,
    eps_b: f64,
) -> (Expansion, Expansion) {
    let first = expand_until(a.0.clone(), a.1.clone(), eps_a, 0);
    let second = expand_until(b.0.clone(), b.1.clone(), eps_b, 0);
    let len = first.coeffs.len().max(second.coeffs.len());
    let first = if first.coeffs.len() < len {
        expand_until(a.0, a.1, eps_a, len)
    } else {
        first
    };
    let second = if second.coeffs.len() < len {
        expand_until(b.0, b.1, eps_b, len)
    } else {
        second
    };
    (first, second)
}

/// Geometric tail estimate from the trailing coefficients, if they have
/// stabilised. Returns `(ratio, tail_mass_bound)`.
fn tail_estimate(coeffs: &[f64]) -> Option<(f64, f64)> {
    let n = coeffs.len();
    if n < RATIO_WINDOW + 1 {
        return None;
    }
    let window = &coeffs[n - RATIO_WINDOW - 1..];
    // A terminating series has an exactly-zero tail.
    if window[1..].iter().all(|&c| c.abs() < 1e-300) {
        return Some((0.0, 0.0));
    }
    let mut rmin = f64::INFINITY;
    let mut rmax = 0.0_f64;
    for pair in window.windows(2) {
        let (prev, cur) = (pair[0].abs(), pair[1].abs());
        if prev < 1e-300 {
            return None;
        }
        let r = cur / prev;
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    if rmax >= 1.0 || rmax.is_nan() || (rmax - rmin) / rmax > 1e-3 {
        return None;
    }
    let last = coeffs[n - 1].abs();
    Some((rmax, last * rmax / (1.0 - rmax)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_series_coefficients() {
        // 1 / (1 - r w) = sum r^n w^n
        let r = 0.7;
        let mut s = RationalSeries::new(vec![1.0], vec![1.0, -r]);
        for n in 0..30 {
            let c = s.next_coeff();
            assert!((c - r.powi(n)).abs() < 1e-14);
        }
    }

    #[test]
    fn polynomial_quotient_terminates() {
        // (1 - w^3) / (1 - w) = 1 + w + w^2
        let exp = expand_until(vec![1.0, 0.0, 0.0, -1.0], vec![1.0, -1.0], 1e-12, 4);
        assert_eq!(&exp.coeffs[..3], &[1.0, 1.0, 1.0]);
        assert!(exp.coeffs[3..].iter().all(|&c| c.abs() < 1e-15));
        assert_eq!(exp.tail_mass, 0.0);
    }

    #[test]
    fn tail_bound_covers_remaining_mass() {
        // Geometric with ratio 0.9: total mass 10.
        let exp = expand_until(vec![1.0], vec![1.0, -0.9], 1e-8, 16);
        let partial: f64 = exp.coeffs.iter().sum();
        let remaining = 10.0 - partial;
        assert!(exp.tail_mass < 1e-8);
        assert!(remaining <= exp.tail_mass * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn poly_helpers() {
        let prod = poly_mul(&[1.0, -1.0], &[1.0, -0.5]);
        assert_eq!(prod, vec![1.0, -1.5, 0.5]);
        let sum = poly_add(&[1.0], &[0.0, 2.0, 3.0]);
        assert_eq!(sum, vec![1.0, 2.0, 3.0]);
    }
}
