//! Common view of one-dimensional measures on `[0, 1]` through their
//! distribution functions, plus the distances built on it.
//!
//! Grid measures have piecewise-linear CDFs, empirical measures have step
//! CDFs. On the open interval between two consecutive breakpoints of
//! either measure, the difference of two CDFs is therefore linear, so
//! suprema and integrals of `|F - G|` are computed exactly from the
//! one-sided limits at the merged breakpoints.

/// A finite positive measure on `[0, 1]`, seen through its CDF.
pub trait Measure1d {
    /// `μ([0, x])`.
    fn cdf(&self, x: f64) -> f64;
    /// `μ([0, x))`.
    fn cdf_left(&self, x: f64) -> f64;
    fn total_mass(&self) -> f64;
    /// `μ([x, 1])`.
    fn mass_from(&self, x: f64) -> f64 {
        self.total_mass() - self.cdf_left(x)
    }
    /// Sorted points outside of which the CDF is affine on each gap.
    fn breakpoints(&self) -> Vec<f64>;
}

fn merged_breakpoints(a: &dyn Measure1d, b: &dyn Measure1d) -> Vec<f64> {
    let mut pts = a.breakpoints();
    pts.extend(b.breakpoints());
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Supremum distance between the two CDFs.
pub fn kolmogorov_distance(a: &dyn Measure1d, b: &dyn Measure1d) -> f64 {
    merged_breakpoints(a, b)
        .into_iter()
        .map(|x| {
            let right = (a.cdf(x) - b.cdf(x)).abs();
            let left = (a.cdf_left(x) - b.cdf_left(x)).abs();
            right.max(left)
        })
        .fold(0.0, f64::max)
}

/// `∫_0^1 |F_a - F_b| dx`, the Wasserstein-1 distance on the line.
pub fn wasserstein1(a: &dyn Measure1d, b: &dyn Measure1d) -> f64 {
    let pts = merged_breakpoints(a, b);
    pts.windows(2)
        .map(|w| {
            let (l, r) = (w[0], w[1]);
            let d0 = a.cdf(l) - b.cdf(l);
            let d1 = a.cdf_left(r) - b.cdf_left(r);
            abs_linear_integral(d0, d1, r - l)
        })
        .sum()
}

/// Integral over an interval of length `len` of `|g|`, `g` affine with end
/// values `d0`, `d1`.
pub(crate) fn abs_linear_integral(d0: f64, d1: f64, len: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * (d0.abs() + d1.abs()) * len
    } else {
        let (a, b) = (d0.abs(), d1.abs());
        0.5 * (a * a + b * b) / (a + b) * len
    }
}

/// Result of a tail-class membership check.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TailCheck {
    pub ok: bool,
    /// Largest `tail(x) / (M x^α)` over both tails.
    pub worst_ratio: f64,
    /// Where the worst ratio occurs (the `x` of `M x^α`).
    pub worst_x: f64,
}

/// Whether `μ((0, x)) <= M x^α` and `μ((1 - x, 1)) <= M x^α` for all `x`.
///
/// Checked at the measure's breakpoints using the one-sided limits that
/// make the check exact: between breakpoints the tails are affine or
/// constant while `M x^α` is concave and increasing.
pub fn tail_class_member(mu: &dyn Measure1d, m_const: f64, alpha: f64) -> TailCheck {
    let mut worst = TailCheck {
        ok: true,
        worst_ratio: 0.0,
        worst_x: f64::NAN,
    };
    let mut consider = |tail: f64, x: f64| {
        if tail <= 0.0 {
            return;
        }
        let ratio = tail / (m_const * x.powf(alpha));
        if ratio > worst.worst_ratio || worst.worst_x.is_nan() {
            worst.worst_ratio = ratio;
            worst.worst_x = x;
        }
    };
    for b in mu.breakpoints() {
        if b > 0.0 {
            consider(mu.cdf(b), b);
        }
        if b < 1.0 {
            consider(mu.mass_from(b), 1.0 - b);
        }
    }
    worst.ok = worst.worst_ratio <= 1.0;
    worst
}
