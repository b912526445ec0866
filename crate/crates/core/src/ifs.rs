//! The two interval homeomorphisms and the constants derived from them.
//!
//! `f0` is the broken line through `(0, 0)`, `(x0, y0)`, `(1, 1)` lying
//! below the diagonal; `f1(x) = 1 - f0(1 - x)` is its mirror image.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::field::ProbField;

static CLAMPED: AtomicU64 = AtomicU64::new(0);

/// Number of map evaluations whose rounded result left `(0, 1)` and had to
/// be pulled back inside. Process-wide.
pub fn clamp_count() -> u64 {
    CLAMPED.load(Ordering::Relaxed)
}

#[inline]
fn clamp_interior(v: f64) -> f64 {
    if v <= 0.0 {
        CLAMPED.fetch_add(1, Ordering::Relaxed);
        f64::MIN_POSITIVE
    } else if v >= 1.0 {
        CLAMPED.fetch_add(1, Ordering::Relaxed);
        1.0 - f64::EPSILON / 2.0
    } else {
        v
    }
}

/// Which of the two maps is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Zero,
    One,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Zero, Branch::One];

    pub fn index(self) -> u8 {
        match self {
            Branch::Zero => 0,
            Branch::One => 1,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Branch::Zero),
            1 => Some(Branch::One),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Branch::Zero => Branch::One,
            Branch::One => Branch::Zero,
        }
    }
}

/// Breakpoint `(x0, y0)` of `f0`. The slopes are always recomputed from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    x0: f64,
    y0: f64,
}

impl SystemParams {
    /// Build the system, rejecting breakpoints outside
    /// `1/2 < x0 < 1`, `1/2 <= y0 < x0`.
    pub fn new(x0: f64, y0: f64) -> Result<Self> {
        if let Some(reason) = region_violation(x0, y0) {
            return Err(Error::OutOfRegion(reason));
        }
        Ok(Self { x0, y0 })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    /// Lower slope `y0 / x0 < 1`.
    pub fn a0(&self) -> f64 {
        self.y0 / self.x0
    }

    /// Upper slope `(1 - y0) / (1 - x0) > 1`.
    pub fn a1(&self) -> f64 {
        (1.0 - self.y0) / (1.0 - self.x0)
    }

    #[inline]
    fn f0_raw(&self, x: f64) -> f64 {
        // Written so that both pieces return y0 exactly at x = x0.
        if x <= self.x0 {
            self.y0 * (x / self.x0)
        } else {
            1.0 - (1.0 - self.y0) * ((1.0 - x) / (1.0 - self.x0))
        }
    }

    #[inline]
    fn f0_inv_raw(&self, y: f64) -> f64 {
        if y <= self.y0 {
            self.x0 * (y / self.y0)
        } else {
            1.0 - (1.0 - self.x0) * ((1.0 - y) / (1.0 - self.y0))
        }
    }

    /// `f_branch(x)` for `x` already known to be in `(0, 1)`.
    #[inline]
    pub fn image(&self, branch: Branch, x: f64) -> f64 {
        let v = match branch {
            Branch::Zero => self.f0_raw(x),
            Branch::One => 1.0 - self.f0_raw(1.0 - x),
        };
        clamp_interior(v)
    }

    /// Apply `f0` or `f1` to a point of `(0, 1)`.
    pub fn apply(&self, branch: Branch, x: f64) -> Result<f64> {
        check_open_unit("x", x)?;
        Ok(self.image(branch, x))
    }

    /// Unique preimage of `y` under the chosen map.
    pub fn invert(&self, branch: Branch, y: f64) -> Result<f64> {
        check_open_unit("y", y)?;
        let v = match branch {
            Branch::Zero => self.f0_inv_raw(y),
            Branch::One => 1.0 - self.f0_inv_raw(1.0 - y),
        };
        Ok(clamp_interior(v))
    }

    /// Image on the closed interval, without clamping.
    #[inline]
    pub(crate) fn image_closed(&self, branch: Branch, x: f64) -> f64 {
        match branch {
            Branch::Zero => self.f0_raw(x),
            Branch::One => 1.0 - self.f0_raw(1.0 - x),
        }
    }

    /// Slope of the chosen map at `x`. At a kink the slope of the piece
    /// containing `x` under the lower-branch convention is returned.
    #[inline]
    pub fn slope(&self, branch: Branch, x: f64) -> f64 {
        let lower = match branch {
            Branch::Zero => x <= self.x0,
            // f1(x) = 1 - f0(1 - x): slope a0 where 1 - x <= x0
            Branch::One => 1.0 - x <= self.x0,
        };
        if lower {
            self.a0()
        } else {
            self.a1()
        }
    }

    /// The kink of the chosen map: `x0` for `f0`, `1 - x0` for `f1`.
    pub fn kink(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Zero => self.x0,
            Branch::One => 1.0 - self.x0,
        }
    }

    /// `f(y) - f(x)` for `x <= y`, computed from the slopes so that tiny
    /// gaps do not vanish in the subtraction of two nearby images.
    #[inline]
    pub fn image_gap(&self, branch: Branch, x: f64, y: f64) -> f64 {
        let k = self.kink(branch);
        let (sl, sr) = match branch {
            Branch::Zero => (self.a0(), self.a1()),
            Branch::One => (self.a1(), self.a0()),
        };
        let gap = y - x;
        if y <= k {
            sl * gap
        } else if x > k {
            sr * gap
        } else {
            sl * (k - x) + sr * (y - k)
        }
    }

    /// `f(x + gap) - f(x)` for `gap >= 0`, from the slopes alone. Unlike
    /// [`image_gap`](Self::image_gap) this never forms `x + gap` unless the
    /// pair straddles the kink, so gaps below one ulp of `x` survive.
    #[inline]
    pub fn gap_image(&self, branch: Branch, x: f64, gap: f64) -> f64 {
        let k = self.kink(branch);
        let (sl, sr) = match branch {
            Branch::Zero => (self.a0(), self.a1()),
            Branch::One => (self.a1(), self.a0()),
        };
        if x >= k {
            sr * gap
        } else if gap <= k - x {
            sl * gap
        } else {
            sl * (k - x) + sr * (gap - (k - x))
        }
    }

    /// Average log-slopes at the endpoints, in nats per step:
    /// `Λ0 = p0(0) ln a0 + p1(0) ln a1`, `Λ1 = p0(1) ln a1 + p1(1) ln a0`.
    pub fn lyapunov_exponents(&self, field: &ProbField) -> Result<(f64, f64)> {
        let (la0, la1) = (self.a0().ln(), self.a1().ln());
        let lambda0 = field.eval_p0(0.0)? * la0 + field.eval_p1(0.0)? * la1;
        let lambda1 = field.eval_p0(1.0)? * la1 + field.eval_p1(1.0)? * la0;
        Ok((lambda0, lambda1))
    }

    /// Attracting fixed point of `f0 ∘ f1` on `[1 - x0, y0]`.
    ///
    /// On that interval `f1` uses its `a0` piece and lands in
    /// `[1 - y0, x0]`, where `f0` again has slope `a0`, so the composition
    /// is `x ↦ a0 - a0² + a0² x` with fixed point `y0 / (x0 + y0)`. The
    /// closed form is cross-checked against plain iteration.
    pub fn attractive_fixed_point(&self) -> Result<f64> {
        let c = self.y0 / (self.x0 + self.y0);
        let compose = |x: f64| self.image(Branch::Zero, self.image(Branch::One, x));
        let residual = (compose(c) - c).abs();

        let mut z = 0.5 * ((1.0 - self.x0) + self.y0);
        for _ in 0..100_000 {
            let next = compose(z);
            let done = (next - z).abs() < 1e-16;
            z = next;
            if done {
                break;
            }
        }
        if residual > 1e-12 || (z - c).abs() > 1e-9 {
            return Err(Error::Consistency(format!(
                "closed-form fixed point {c} (residual {residual:e}) disagrees with iteration limit {z}"
            )));
        }
        if !(c > 1.0 - self.x0 && c < self.y0) {
            return Err(Error::Consistency(format!(
                "fixed point {c} lies outside ({}, {})",
                1.0 - self.x0,
                self.y0
            )));
        }
        Ok(c)
    }

    /// Coupling radius: `0.99 · min(B1, B2, B3)` with
    /// `B1 = (1 - y0)(a1 - a0) / a1²`, `B2 = (x0 - f1(y0)) / (a0 a1)`,
    /// `B3 = x0 - y0`.
    pub fn admissible_eta1(&self) -> Result<f64> {
        let (a0, a1) = (self.a0(), self.a1());
        let b1 = (1.0 - self.y0) * (a1 - a0) / (a1 * a1);
        let f1_y0 = self.image_closed(Branch::One, self.y0);
        let b2 = (self.x0 - f1_y0) / (a0 * a1);
        let b3 = self.x0 - self.y0;
        if !(b1 > 0.0 && b2 > 0.0 && b3 > 0.0) {
            return Err(Error::Infeasible(format!(
                "eta1 bounds not all positive: B1 = {b1}, B2 = {b2}, B3 = {b3}"
            )));
        }
        let eta = 0.99 * b1.min(b2).min(b3);

        let binding = 1.0 - self.y0;
        let lhs4 = a0 * binding - a1 * (binding - a1 * eta);
        let lhs5 = self.image_closed(Branch::One, self.y0 + a1 * eta);
        if !(lhs4 < 0.0 && lhs5 < self.x0 && eta < b3) {
            return Err(Error::Infeasible(format!(
                "eta1 = {eta} fails re-verification (lhs4 = {lhs4}, f1(y0 + a1 eta1) = {lhs5})"
            )));
        }
        Ok(eta)
    }

    /// Evaluate all four standing assumptions. Failures are reported, not
    /// raised.
    pub fn validate_assumptions(&self, field: &ProbField) -> AssumptionReport {
        AssumptionReport::evaluate(self.x0, self.y0, field)
    }
}

fn region_violation(x0: f64, y0: f64) -> Option<String> {
    if !(x0 > 0.5) {
        Some(format!("x0 = {x0} must exceed 1/2"))
    } else if !(x0 < 1.0) {
        Some(format!("x0 = {x0} must be below 1"))
    } else if !(y0 >= 0.5) {
        Some(format!("y0 = {y0} must be at least 1/2"))
    } else if !(y0 < x0) {
        Some(format!("y0 = {y0} must be below x0 = {x0}"))
    } else {
        None
    }
}

/// Pass/fail per standing assumption:
/// A1 breakpoint region, A2 Dini continuity, A3 probabilities inside
/// `(0, 1)`, A4 positive endpoint exponents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub a1_ok: bool,
    pub a2_ok: bool,
    pub a3_ok: bool,
    pub a4_ok: bool,
    pub lambda0: f64,
    pub lambda1: f64,
    pub detail: Vec<String>,
}

impl AssumptionReport {
    /// Evaluate from raw breakpoint coordinates, so that an out-of-region
    /// system can still be reported on.
    pub fn evaluate(x0: f64, y0: f64, field: &ProbField) -> Self {
        let mut detail = Vec::new();

        let a1_ok = match region_violation(x0, y0) {
            None => true,
            Some(reason) => {
                detail.push(format!("A1: {reason}"));
                false
            }
        };

        let fr = field.validate();
        let a2_ok = fr.dini && fr.lipschitz_ok;
        if !a2_ok {
            detail.push("A2: declared modulus of continuity is not valid".to_string());
        }
        let a3_ok = fr.bounded_away && fr.delta_ok;
        if !a3_ok {
            detail.push(format!("A3: {}", fr.diagnostics.join("; ")));
        }

        // slopes straight from the coordinates; meaningful whenever both are positive
        let a0 = y0 / x0;
        let a1 = (1.0 - y0) / (1.0 - x0);
        let (p00, p01) = (field.p0_unchecked(0.0), field.p0_unchecked(1.0));
        let lambda0 = p00 * a0.ln() + (1.0 - p00) * a1.ln();
        let lambda1 = p01 * a1.ln() + (1.0 - p01) * a0.ln();
        let a4_ok = lambda0 > 0.0 && lambda1 > 0.0;
        if !a4_ok {
            detail.push(format!(
                "A4: endpoint exponents Λ0 = {lambda0}, Λ1 = {lambda1} must both be positive"
            ));
        }

        Self {
            a1_ok,
            a2_ok,
            a3_ok,
            a4_ok,
            lambda0,
            lambda1,
            detail,
        }
    }

    pub fn all_ok(&self) -> bool {
        self.a1_ok && self.a2_ok && self.a3_ok && self.a4_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e1() -> SystemParams {
        SystemParams::new(0.75, 0.5).unwrap()
    }

    #[test]
    fn slopes() {
        let p = e1();
        assert!((p.a0() - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.a1() - 2.0).abs() < 1e-15);
        let q = SystemParams::new(0.6, 0.5).unwrap();
        assert!((q.a0() - 5.0 / 6.0).abs() < 1e-15);
        assert!((q.a1() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn region_is_enforced() {
        let e = SystemParams::new(0.5, 0.4).unwrap_err();
        assert!(matches!(e, Error::OutOfRegion(ref m) if m.contains("x0")));
        assert!(SystemParams::new(0.75, 0.8).is_err());
        assert!(SystemParams::new(0.75, 0.49).is_err());
        assert!(SystemParams::new(1.0, 0.5).is_err());
        assert!(SystemParams::new(0.75, 0.75).is_err());
        assert!(SystemParams::new(f64::NAN, 0.5).is_err());
        assert!(SystemParams::new(0.6, 0.5).is_ok());
    }

    #[test]
    fn map_examples() {
        let p = e1();
        assert_eq!(p.apply(Branch::Zero, 0.75).unwrap(), 0.5);
        assert!((p.apply(Branch::Zero, 0.9).unwrap() - 0.8).abs() < 1e-15);
        assert!((p.apply(Branch::One, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((p.apply(Branch::Zero, 0.3).unwrap() - 0.2).abs() < 1e-15);
        assert!((p.apply(Branch::One, 0.3).unwrap() - 8.0 / 15.0).abs() < 1e-15);
        assert!(p.apply(Branch::Zero, 0.0).is_err());
        assert!(p.apply(Branch::One, 1.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let p = e1();
        assert!((p.invert(Branch::Zero, 0.2).unwrap() - 0.3).abs() < 1e-15);
        assert!((p.invert(Branch::One, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(p.invert(Branch::Zero, p.y0()).unwrap(), p.x0());
        assert!(p.invert(Branch::Zero, 1.0).is_err());
    }

    #[test]
    fn kink_continuity() {
        for &(x0, y0) in &[(0.75, 0.5), (0.6, 0.5), (0.9, 0.55), (0.51, 0.5)] {
            let p = SystemParams::new(x0, y0).unwrap();
            assert_eq!(p.f0_raw(x0), y0);
            let upper = 1.0 - (1.0 - y0) * ((1.0 - x0) / (1.0 - x0));
            assert_eq!(upper, y0);
        }
    }

    #[test]
    fn lyapunov_examples() {
        let p = e1();
        let half = ProbField::constant(0.5).unwrap();
        let (l0, l1) = p.lyapunov_exponents(&half).unwrap();
        let want = 0.5 * (4.0f64 / 3.0).ln();
        assert!((l0 - want).abs() < 1e-15 && (l1 - want).abs() < 1e-15);
        assert!((want - 0.143841).abs() < 1e-6);

        let one = ProbField::constant(1.0).unwrap();
        let (l0, _) = p.lyapunov_exponents(&one).unwrap();
        assert!((l0 - (2.0f64 / 3.0).ln()).abs() < 1e-15 && l0 < 0.0);
    }

    #[test]
    fn lyapunov_vanishes_when_slopes_reciprocal() {
        // a0 a1 = 1  <=>  y0(1 - y0) = x0(1 - x0), impossible inside the
        // region, so check the formula on raw coordinates via the report.
        let half = ProbField::constant(0.5).unwrap();
        let r = AssumptionReport::evaluate(0.25, 0.75, &half);
        assert!(r.lambda0.abs() < 1e-15);
    }

    #[test]
    fn fixed_point_examples() {
        let c = e1().attractive_fixed_point().unwrap();
        assert!((c - 0.4).abs() < 1e-12);
        let c2 = SystemParams::new(0.6, 0.5).unwrap().attractive_fixed_point().unwrap();
        assert!((c2 - 0.5 / 1.1).abs() < 1e-12);
        let p = e1();
        let r = p.image(Branch::Zero, p.image(Branch::One, c)) - c;
        assert!(r.abs() <= 1e-12);
    }

    #[test]
    fn fixed_point_attracts_random_starts() {
        let p = e1();
        let c = p.attractive_fixed_point().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let mut z = rng.random_range(1.0 - p.x0()..=p.y0());
            let mut steps = 0;
            while (z - c).abs() > 1e-12 {
                z = p.image(Branch::Zero, p.image(Branch::One, z));
                steps += 1;
                assert!(steps <= 200);
            }
        }
    }

    /// Independent check of the three eta1 inequalities on a dense grid.
    fn eta1_oracle(p: &SystemParams, eta: f64) -> bool {
        let (a0, a1) = (p.a0(), p.a1());
        let lo = 1.0 - p.y0();
        let ok4 = (0..=10_000).all(|k| {
            let y = lo + (1.0 - lo) * k as f64 / 10_000.0;
            a0 * y - a1 * (y - a1 * eta) < 0.0
        });
        let ok5 = p.apply(Branch::One, p.y0() + a1 * eta).unwrap() < p.x0();
        ok4 && ok5 && eta < p.x0() - p.y0()
    }

    #[test]
    fn eta1_examples() {
        let p = e1();
        let eta = p.admissible_eta1().unwrap();
        assert!((eta - 0.061875).abs() < 1e-15);
        assert!(eta1_oracle(&p, eta));
        let binding = 1.0 - p.y0();
        assert!(p.a0() * binding - p.a1() * (binding - p.a1() * eta) < 0.0);

        let q = SystemParams::new(0.6, 0.5).unwrap();
        let eta = q.admissible_eta1().unwrap();
        // B1 = 0.5 * (1.25 - 5/6) / 1.5625, B2 = (0.6 - 7/12) / (25/24), B3 = 0.1
        let b1: f64 = 0.5 * (1.25 - 5.0 / 6.0) / 1.5625;
        let b2 = (0.6 - 7.0 / 12.0) / (25.0 / 24.0);
        assert!((eta - 0.99 * b1.min(b2).min(0.1)).abs() < 1e-15);
        assert!(eta1_oracle(&q, eta));
    }

    #[test]
    fn assumption_reports() {
        let p = e1();
        let r = p.validate_assumptions(&ProbField::constant(0.5).unwrap());
        assert!(r.all_ok(), "{r:?}");
        assert!((r.lambda0 - 0.143841).abs() < 1e-6);

        let r = p.validate_assumptions(&ProbField::constant(0.95).unwrap());
        assert!(r.a1_ok && r.a3_ok && !r.a4_ok);
        let want = 0.95 * (2.0f64 / 3.0).ln() + 0.05 * 2.0f64.ln();
        assert!((r.lambda0 - want).abs() < 1e-15 && r.lambda0 < 0.0);

        let r = p.validate_assumptions(&ProbField::constant(0.0).unwrap());
        assert!(!r.a3_ok);

        let r = AssumptionReport::evaluate(0.75, 0.8, &ProbField::constant(0.5).unwrap());
        assert!(!r.a1_ok && r.detail[0].starts_with("A1"));
    }

    #[test]
    fn map_properties_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(x0, y0) in &[(0.75, 0.5), (0.6, 0.5), (0.9, 0.7)] {
            let p = SystemParams::new(x0, y0).unwrap();
            for _ in 0..100_000 {
                let x: f64 = rng.random_range(1e-9..1.0 - 1e-9);
                for b in Branch::BOTH {
                    let y = p.apply(b, x).unwrap();
                    let back = p.invert(b, y).unwrap();
                    assert!((back - x).abs() <= 2.0 * f64::EPSILON * x.max(1.0 - x).max(0.5));
                    assert!(y > 0.0 && y < 1.0);
                }
                let direct = p.apply(Branch::One, x).unwrap();
                let mirrored = 1.0 - p.apply(Branch::Zero, 1.0 - x).unwrap();
                assert!((direct - mirrored).abs() <= f64::EPSILON);
            }
        }
    }

    #[test]
    fn graphs_lie_on_either_side_of_diagonal() {
        let p = e1();
        for k in 1..1000 {
            let x = k as f64 / 1000.0;
            assert!(p.apply(Branch::Zero, x).unwrap() < x);
            assert!(p.apply(Branch::One, x).unwrap() > x);
            let x2 = x + 1e-4;
            for b in Branch::BOTH {
                assert!(p.apply(b, x2).unwrap() > p.apply(b, x).unwrap());
            }
        }
    }

    #[test]
    fn gap_matches_difference() {
        let p = e1();
        for &(x, y) in &[(0.1, 0.2), (0.7, 0.8), (0.2, 0.3), (0.74, 0.76), (0.3, 0.9)] {
            for b in Branch::BOTH {
                let direct = p.image(b, y) - p.image(b, x);
                assert!((p.image_gap(b, x, y) - direct).abs() < 1e-15, "{b:?} {x} {y}");
            }
        }
    }
}
