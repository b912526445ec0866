//! Place-dependent probability pairs `(p0, p1)` with `p1 = 1 - p0`.
//!
//! Every supported family is Lipschitz, which makes the Dini condition on
//! the modulus of continuity decidable: a Lipschitz modulus `L t` sums
//! geometrically along `C t^n`. Extrema over intervals are computed in
//! closed form by inspecting a finite candidate set (endpoints, interior
//! knots), never by sampling.

use serde::{Deserialize, Serialize};

use crate::error::{check_closed_unit, Error, Result};
use crate::ifs::Branch;

/// Functional form of `p0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldFamily {
    Constant {
        p: f64,
    },
    /// `p0(x) = v0 + (v1 - v0) x`.
    Affine {
        v0: f64,
        v1: f64,
    },
    /// Linear interpolation through `(x, p0(x))` knots covering `[0, 1]`.
    PiecewiseLinear {
        breakpoints: Vec<(f64, f64)>,
    },
    /// `p0(x) = low + (high - low) / (1 + exp(-steepness (x - center)))`.
    Logistic {
        center: f64,
        steepness: f64,
        low: f64,
        high: f64,
    },
}

impl FieldFamily {
    fn check_shape(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidField(format!("{name} is not finite")))
            }
        };
        let prob = |v: f64, name: &str| {
            finite(v, name)?;
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidField(format!("{name} = {v} is not in [0, 1]")))
            }
        };
        match self {
            FieldFamily::Constant { p } => prob(*p, "p"),
            FieldFamily::Affine { v0, v1 } => {
                prob(*v0, "v0")?;
                prob(*v1, "v1")
            }
            FieldFamily::PiecewiseLinear { breakpoints } => {
                if breakpoints.len() < 2 {
                    return Err(Error::InvalidField(
                        "piecewise_linear needs at least two breakpoints".into(),
                    ));
                }
                for &(x, v) in breakpoints {
                    finite(x, "breakpoint x")?;
                    prob(v, "breakpoint value")?;
                }
                if breakpoints[0].0 != 0.0 || breakpoints[breakpoints.len() - 1].0 != 1.0 {
                    return Err(Error::InvalidField(
                        "piecewise_linear breakpoints must start at 0 and end at 1".into(),
                    ));
                }
                if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidField(
                        "piecewise_linear breakpoints must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            FieldFamily::Logistic {
                center,
                steepness,
                low,
                high,
            } => {
                finite(*center, "center")?;
                finite(*steepness, "steepness")?;
                prob(*low, "low")?;
                prob(*high, "high")
            }
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            FieldFamily::Constant { p } => *p,
            FieldFamily::Affine { v0, v1 } => v0 + (v1 - v0) * x,
            FieldFamily::PiecewiseLinear { breakpoints } => {
                // index of the first knot strictly right of x, clamped to a valid segment
                let i = breakpoints
                    .partition_point(|&(bx, _)| bx <= x)
                    .clamp(1, breakpoints.len() - 1);
                let (xa, va) = breakpoints[i - 1];
                let (xb, vb) = breakpoints[i];
                if x <= xa {
                    va
                } else if x >= xb {
                    vb
                } else {
                    va + (vb - va) * ((x - xa) / (xb - xa))
                }
            }
            FieldFamily::Logistic {
                center,
                steepness,
                low,
                high,
            } => low + (high - low) / (1.0 + (-steepness * (x - center)).exp()),
        }
    }

    /// Points of `[lo, hi]` where `p0` can attain an extremum.
    fn candidates(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo, hi];
        if let FieldFamily::PiecewiseLinear { breakpoints } = self {
            pts.extend(
                breakpoints
                    .iter()
                    .map(|&(x, _)| x)
                    .filter(|&x| x > lo && x < hi),
            );
        }
        pts
    }

    /// Exact Lipschitz constant (upper bound for the logistic family).
    fn lipschitz(&self) -> f64 {
        match self {
            FieldFamily::Constant { .. } => 0.0,
            FieldFamily::Affine { v0, v1 } => (v1 - v0).abs(),
            FieldFamily::PiecewiseLinear { breakpoints } => breakpoints
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
            FieldFamily::Logistic {
                steepness,
                low,
                high,
                ..
            } => steepness.abs() * (high - low).abs() / 4.0,
        }
    }
}

/// A probability field: `p0` from a family, `p1 = 1 - p0`, plus the
/// optionally declared floor `delta` and Lipschitz constant.
///
/// Declared values are what the rest of the library trusts; `validate`
/// checks them against the closed-form extrema.
///
/// Serialized flat: the family's keys next to optional `delta` and
/// `lipschitz`, e.g. `{ family = "affine", v0 = 0.4, v1 = 0.6 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub struct ProbField {
    family: FieldFamily,
    declared_delta: Option<f64>,
    declared_lipschitz: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldSpec {
    #[serde(flatten)]
    family: FieldFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lipschitz: Option<f64>,
}

impl TryFrom<FieldSpec> for ProbField {
    type Error = Error;

    fn try_from(spec: FieldSpec) -> Result<Self> {
        let mut field = ProbField::new(spec.family)?;
        field.declared_delta = spec.delta;
        field.declared_lipschitz = spec.lipschitz;
        Ok(field)
    }
}

impl From<ProbField> for FieldSpec {
    fn from(f: ProbField) -> Self {
        Self {
            family: f.family,
            delta: f.declared_delta,
            lipschitz: f.declared_lipschitz,
        }
    }
}

/// Outcome of [`ProbField::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldReport {
    /// `0 < p_i < 1` on `[0, 1]`.
    pub bounded_away: bool,
    /// The declared floor does not exceed the true one.
    pub delta_ok: bool,
    /// The declared Lipschitz constant dominates the family's.
    pub lipschitz_ok: bool,
    /// Lipschitz moduli are always Dini; recorded for completeness.
    pub dini: bool,
    pub min_p0: f64,
    pub max_p0: f64,
    pub lipschitz: f64,
    pub diagnostics: Vec<String>,
}

impl FieldReport {
    pub fn passed(&self) -> bool {
        self.bounded_away && self.delta_ok && self.lipschitz_ok && self.dini
    }
}

impl ProbField {
    pub fn new(family: FieldFamily) -> Result<Self> {
        family.check_shape()?;
        Ok(Self {
            family,
            declared_delta: None,
            declared_lipschitz: None,
        })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(FieldFamily::Constant { p })
    }

    pub fn affine(v0: f64, v1: f64) -> Result<Self> {
        Self::new(FieldFamily::Affine { v0, v1 })
    }

    pub fn piecewise_linear(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(FieldFamily::PiecewiseLinear { breakpoints })
    }

    pub fn logistic(center: f64, steepness: f64, low: f64, high: f64) -> Result<Self> {
        Self::new(FieldFamily::Logistic {
            center,
            steepness,
            low,
            high,
        })
    }

    /// Attach a declared floor `delta <= p0 <= 1 - delta`.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.declared_delta = Some(delta);
        self
    }

    /// Attach a declared Lipschitz constant for `p0`.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.declared_lipschitz = Some(lipschitz);
        self
    }

    pub fn family(&self) -> &FieldFamily {
        &self.family
    }

    pub fn declared_delta(&self) -> Option<f64> {
        self.declared_delta
    }

    pub fn declared_lipschitz(&self) -> Option<f64> {
        self.declared_lipschitz
    }

    /// The floor in use: declared if present, otherwise exact.
    pub fn delta(&self) -> f64 {
        self.declared_delta.unwrap_or_else(|| {
            let (lo, hi) = self.p0_range(0.0, 1.0);
            lo.min(1.0 - hi)
        })
    }

    /// The Lipschitz constant in use: declared if present, otherwise the
    /// family's exact value.
    pub fn lipschitz(&self) -> f64 {
        self.declared_lipschitz
            .unwrap_or_else(|| self.family.lipschitz())
    }

    pub fn eval_p0(&self, x: f64) -> Result<f64> {
        check_closed_unit("x", x)?;
        Ok(self.family.eval(x))
    }

    pub fn eval_p1(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.eval_p0(x)?)
    }

    pub fn eval(&self, branch: Branch, x: f64) -> Result<f64> {
        match branch {
            Branch::Zero => self.eval_p0(x),
            Branch::One => self.eval_p1(x),
        }
    }

    /// `p0(x)` without the domain check, for hot loops on states already
    /// known to lie in `(0, 1)`.
    #[inline]
    pub(crate) fn p0_unchecked(&self, x: f64) -> f64 {
        self.family.eval(x)
    }

    /// `(inf, sup)` of `p0` over `[lo, hi]`.
    fn p0_range(&self, lo: f64, hi: f64) -> (f64, f64) {
        self.family
            .candidates(lo, hi)
            .into_iter()
            .map(|x| self.family.eval(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            })
    }

    fn check_interval(lo: f64, hi: f64) -> Result<()> {
        check_closed_unit("lo", lo)?;
        check_closed_unit("hi", hi)?;
        if lo > hi {
            return Err(Error::Parameter(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Exact supremum of `p_i` over `[lo, hi]`.
    pub fn interval_sup(&self, branch: Branch, lo: f64, hi: f64) -> Result<f64> {
        Self::check_interval(lo, hi)?;
        let (inf0, sup0) = self.p0_range(lo, hi);
        Ok(match branch {
            Branch::Zero => sup0,
            Branch::One => 1.0 - inf0,
        })
    }

    /// Exact infimum of `p_i` over `[lo, hi]`.
    pub fn interval_inf(&self, branch: Branch, lo: f64, hi: f64) -> Result<f64> {
        Self::check_interval(lo, hi)?;
        let (inf0, sup0) = self.p0_range(lo, hi);
        Ok(match branch {
            Branch::Zero => inf0,
            Branch::One => 1.0 - sup0,
        })
    }

    /// Upper bound on the modulus of continuity: `min(L t, 1)`.
    pub fn modulus_bound(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (self.lipschitz() * t).min(1.0)
    }

    pub fn validate(&self) -> FieldReport {
        let (min_p0, max_p0) = self.p0_range(0.0, 1.0);
        let exact_lip = self.family.lipschitz();
        let mut diagnostics = Vec::new();

        let bounded_away = min_p0 > 0.0 && max_p0 < 1.0;
        if !bounded_away {
            diagnostics.push(format!(
                "p0 ranges over [{min_p0}, {max_p0}]; both p0 and p1 must stay strictly inside (0, 1)"
            ));
        }

        let exact_floor = min_p0.min(1.0 - max_p0);
        let delta_ok = match self.declared_delta {
            Some(d) if !(d > 0.0) => {
                diagnostics.push(format!("declared delta = {d} must be positive"));
                false
            }
            Some(d) if d > exact_floor => {
                diagnostics.push(format!(
                    "declared delta = {d} exceeds the attained floor {exact_floor}"
                ));
                false
            }
            _ => true,
        };

        let lipschitz_ok = match self.declared_lipschitz {
            Some(l) if !(l >= exact_lip) => {
                diagnostics.push(format!(
                    "declared lipschitz = {l} is below the family bound {exact_lip}"
                ));
                false
            }
            _ => true,
        };

        FieldReport {
            bounded_away,
            delta_ok,
            lipschitz_ok,
            dini: self.lipschitz().is_finite(),
            min_p0,
            max_p0,
            lipschitz: exact_lip,
            diagnostics,
        }
    }
}
