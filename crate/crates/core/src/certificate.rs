//! Constants `(ε, α, p, M)` for which the tail class
//! `{μ : μ((0, x)) <= M x^α, μ((1 - x, 1)) <= M x^α}` is invariant under
//! the transition operator, together with the coupling radius `η1`, the
//! attracting point `c` and the endpoint exponents.
//!
//! The search is deterministic: `ε` runs down a fixed geometric grid and,
//! for each `ε`, `α` minimizes the larger of the two endpoint expressions
//!
//! ```text
//! g_0(α) = sup_{[0,ε]} p0 · a0^{-α} + sup_{[0,ε]} p1 · a1^{-α}
//! g_1(α) = sup_{[1-ε,1]} p0 · a1^{-α} + sup_{[1-ε,1]} p1 · a0^{-α}
//! ```
//!
//! by golden-section search. Each `g_i` is a positive combination of
//! exponentials in `α`, hence convex, and so is their maximum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ProbField;
use crate::ifs::{Branch, SystemParams};
use crate::measure::tail_class_member;
use crate::simulate::RngSpec;
use crate::transfer::{GridMeasure, UlamOperator};

/// Number of `ε` candidates tried.
pub const EPSILON_GRID_LEN: usize = 64;
/// Ratio between successive `ε` candidates.
pub const EPSILON_GRID_RATIO: f64 = 0.8;
/// Strict inequalities must hold by at least this much.
pub const STRICT_MARGIN: f64 = 1e-12;

const ALPHA_LO: f64 = 1e-9;
const ALPHA_HI: f64 = 1.0 - 1e-9;
const GOLDEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub epsilon: f64,
    pub alpha: f64,
    pub p: f64,
    pub m_const: f64,
    pub eta1: f64,
    pub c: f64,
    pub lambda0: f64,
    pub lambda1: f64,
}

/// Sup-weights of the two endpoint expressions for a given `ε`.
#[derive(Debug, Clone, Copy)]
struct EndpointSups {
    left: (f64, f64),
    right: (f64, f64),
}

impl EndpointSups {
    fn new(field: &ProbField, epsilon: f64) -> Result<Self> {
        Ok(Self {
            left: (
                field.interval_sup(Branch::Zero, 0.0, epsilon)?,
                field.interval_sup(Branch::One, 0.0, epsilon)?,
            ),
            right: (
                field.interval_sup(Branch::Zero, 1.0 - epsilon, 1.0)?,
                field.interval_sup(Branch::One, 1.0 - epsilon, 1.0)?,
            ),
        })
    }

    /// `(g_0(α), g_1(α))`.
    fn eval(&self, params: &SystemParams, alpha: f64) -> (f64, f64) {
        let d0 = params.a0().powf(-alpha);
        let d1 = params.a1().powf(-alpha);
        (
            self.left.0 * d0 + self.left.1 * d1,
            self.right.0 * d1 + self.right.1 * d0,
        )
    }

    fn worst(&self, params: &SystemParams, alpha: f64) -> f64 {
        let (l, r) = self.eval(params, alpha);
        l.max(r)
    }
}

/// Minimize a unimodal function on `[lo, hi]`.
fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// The `ε` candidates, largest first.
pub fn epsilon_grid(params: &SystemParams) -> Vec<f64> {
    let top = 0.99 * (1.0 - params.x0());
    (0..EPSILON_GRID_LEN)
        .map(|k| top * EPSILON_GRID_RATIO.powi(k as i32))
        .collect()
}

/// Search for a certificate. Fails with [`Error::NoCertificate`] when no
/// `ε` on the grid admits an `α` with both endpoint expressions below one.
pub fn find_certificate(params: &SystemParams, field: &ProbField) -> Result<Certificate> {
    let mut best_g = f64::INFINITY;
    for epsilon in epsilon_grid(params) {
        let sups = EndpointSups::new(field, epsilon)?;
        let alpha = golden_section(ALPHA_LO, ALPHA_HI, GOLDEN_TOL, |a| sups.worst(params, a));
        let g = sups.worst(params, alpha);
        best_g = best_g.min(g);
        if g < 1.0 - 2.0 * STRICT_MARGIN {
            let (lambda0, lambda1) = params.lyapunov_exponents(field)?;
            return Ok(Certificate {
                epsilon,
                alpha,
                p: 0.5 * (g + 1.0),
                m_const: (params.a0() * epsilon).powf(-alpha),
                eta1: params.admissible_eta1()?,
                c: params.attractive_fixed_point()?,
                lambda0,
                lambda1,
            });
        }
    }
    Err(Error::NoCertificate { best_g })
}

/// One verified inequality: `holds` iff `slack` clears the threshold the
/// check requires.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateCheck {
    pub name: &'static str,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub checks: Vec<CertificateCheck>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&CertificateCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Re-verify every certificate condition from scratch with exact interval
/// suprema.
pub fn check_certificate(cert: &Certificate, params: &SystemParams, field: &ProbField) -> CertificateReport {
    let mut checks = Vec::new();
    let mut strict = |name: &'static str, slack: f64| {
        checks.push(CertificateCheck {
            name,
            slack,
            holds: slack >= STRICT_MARGIN,
        });
    };

    let x0 = params.x0();
    strict("epsilon_positive", cert.epsilon);
    strict("epsilon_below_1_minus_x0", (1.0 - x0) - cert.epsilon);
    strict("alpha_in_unit_interval", cert.alpha.min(1.0 - cert.alpha));
    strict("p_in_unit_interval", cert.p.min(1.0 - cert.p));

    let eps_ok = cert.epsilon > 0.0 && cert.epsilon <= 1.0;
    let (g_left, g_right) = if eps_ok {
        match EndpointSups::new(field, cert.epsilon) {
            Ok(s) => s.eval(params, cert.alpha),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        }
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    strict("tail_contraction_left", cert.p - g_left);
    strict("tail_contraction_right", cert.p - g_right);

    strict("eta1_positive", cert.eta1);
    let (a0, a1) = (params.a0(), params.a1());
    let binding = 1.0 - params.y0();
    strict(
        "eta1_slope_condition",
        -(a0 * binding - a1 * (binding - a1 * cert.eta1)),
    );
    let reach = params.y0() + a1 * cert.eta1;
    let f1_reach = if reach < 1.0 {
        params.image_closed(Branch::One, reach)
    } else {
        1.0
    };
    strict("eta1_image_below_x0", x0 - f1_reach);
    strict("eta1_below_kink_gap", (x0 - params.y0()) - cert.eta1);

    strict("c_above_1_minus_x0", cert.c - (1.0 - x0));
    strict("c_below_y0", params.y0() - cert.c);

    let m_floor = (a0 * cert.epsilon).powf(-cert.alpha);
    let m_slack = cert.m_const - m_floor;
    checks.push(CertificateCheck {
        name: "m_dominates_floor",
        slack: m_slack,
        holds: m_slack >= 0.0,
    });
    let c_residual = (params.image_closed(Branch::Zero, params.image_closed(Branch::One, cert.c)) - cert.c).abs();
    checks.push(CertificateCheck {
        name: "c_fixed_point_residual",
        slack: 1e-12 - c_residual,
        holds: c_residual <= 1e-12,
    });
    let lambda_err = match params.lyapunov_exponents(field) {
        Ok((l0, l1)) => (l0 - cert.lambda0).abs().max((l1 - cert.lambda1).abs()),
        Err(_) => f64::INFINITY,
    };
    checks.push(CertificateCheck {
        name: "lambda_consistent",
        slack: 1e-12 - lambda_err,
        holds: lambda_err <= 1e-12,
    });
    CertificateReport { checks }
}

/// Largest `h` in `(0, 1/2)` with `M h^α < 1/8`, scaled by 0.99: the
/// central-interval half-width used by the occupation argument.
pub fn central_margin(cert: &Certificate) -> f64 {
    let h = (1.0 / (8.0 * cert.m_const)).powf(1.0 / cert.alpha);
    (0.99 * h).min(0.49)
}

/// Outcome of [`class_invariance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub trials: usize,
    /// Random draws discarded because they were not in the class.
    pub rejected: usize,
    /// Pushed measures whose tail ratio exceeded `1 + tol`.
    pub violations: usize,
    pub worst_input_ratio: f64,
    pub worst_output_ratio: f64,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.trials > 0
    }
}

/// Draw `trials` random measures of the class `(M, α)` on the operator's
/// grid and check that one step of the operator keeps each of them in the
/// class, allowing a ratio of `1 + tol`.
///
/// Candidates are mixtures of one to four components, each a point mass or
/// a uniform law on a random subinterval; candidates outside the class are
/// redrawn, at most `100 * trials` times in total.
pub fn class_invariance(
    cert: &Certificate,
    op: &UlamOperator,
    trials: usize,
    tol: f64,
    spec: &RngSpec,
) -> Result<InvarianceReport> {
    let grid = op.grid().clone();
    let mut rng = spec.rng();
    let mut report = InvarianceReport {
        trials: 0,
        rejected: 0,
        violations: 0,
        worst_input_ratio: 0.0,
        worst_output_ratio: 0.0,
    };
    while report.trials < trials {
        if report.rejected > 100 * trials {
            return Err(Error::Parameter(format!(
                "could not draw {trials} measures in the class (M = {}, α = {})",
                cert.m_const, cert.alpha
            )));
        }
        let parts = rng.random_range(1..=4);
        let mut mass = vec![0.0; grid.n_bins()];
        for _ in 0..parts {
            let w: f64 = rng.random_range(0.1..1.0);
            let comp = if rng.random_bool(0.5) {
                GridMeasure::point_mass(grid.clone(), rng.random_range(0.0..1.0))
            } else {
                let a: f64 = rng.random_range(0.0..1.0);
                let b: f64 = rng.random_range(0.0..1.0);
                let (lo, hi) = (a.min(b), a.max(b));
                GridMeasure::from_density(grid.clone(), |x| if x >= lo && x <= hi { 1.0 } else { 0.0 })
                    .unwrap_or_else(|_| GridMeasure::point_mass(grid.clone(), lo))
            };
            for (m, c) in mass.iter_mut().zip(comp.masses()) {
                *m += w * c;
            }
        }
        let mu = GridMeasure::from_masses(grid.clone(), mass)?.normalized();
        let before = tail_class_member(&mu, cert.m_const, cert.alpha);
        if !before.ok {
            report.rejected += 1;
            continue;
        }
        let after = tail_class_member(&op.push(&mu)?, cert.m_const, cert.alpha);
        report.trials += 1;
        report.worst_input_ratio = report.worst_input_ratio.max(before.worst_ratio);
        report.worst_output_ratio = report.worst_output_ratio.max(after.worst_ratio);
        if after.worst_ratio > 1.0 + tol {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::empirical_measure;
    use crate::transfer::{Grid, GridMeasure};

    fn e1() -> (SystemParams, ProbField) {
        (SystemParams::new(0.75, 0.5).unwrap(), ProbField::constant(0.5).unwrap())
    }

    /// The hand-built certificate with ε = 0.2, α = 0.5.
    fn manual(params: &SystemParams) -> Certificate {
        let g = 0.5 * (1.5f64.sqrt() + 0.5f64.sqrt());
        Certificate {
            epsilon: 0.2,
            alpha: 0.5,
            p: 0.5 * (g + 1.0),
            m_const: (params.a0() * 0.2).powf(-0.5),
            eta1: params.admissible_eta1().unwrap(),
            c: 0.4,
            lambda0: 0.5 * (4.0f64 / 3.0).ln(),
            lambda1: 0.5 * (4.0f64 / 3.0).ln(),
        }
    }

    #[test]
    fn manual_certificate_values() {
        let (p, f) = e1();
        let cert = manual(&p);
        let g = 0.5 * (1.5f64.sqrt() + 0.5f64.sqrt());
        assert!((g - 0.965926).abs() < 1e-6);
        assert!((cert.p - 0.982963).abs() < 1e-6);
        assert!((cert.m_const - 2.738613).abs() < 1e-6);
        let r = check_certificate(&cert, &p, &f);
        assert!(r.passed(), "{r:?}");
        let slack = r.get("tail_contraction_left").unwrap().slack;
        assert!((slack - 0.017037).abs() < 1e-6);
    }

    #[test]
    fn boundary_certificates_fail() {
        let (p, f) = e1();
        let g = 0.5 * (1.5f64.sqrt() + 0.5f64.sqrt());
        let mut cert = manual(&p);
        cert.p = g;
        let r = check_certificate(&cert, &p, &f);
        assert!(!r.get("tail_contraction_left").unwrap().holds);
        assert!(!r.passed());

        let mut cert = manual(&p);
        cert.m_const = 1.0;
        let r = check_certificate(&cert, &p, &f);
        assert!(!r.get("m_dominates_floor").unwrap().holds);

        let mut cert = manual(&p);
        cert.epsilon = 0.3;
        assert!(!check_certificate(&cert, &p, &f).passed());
    }

    #[test]
    fn found_certificate_checks_out() {
        let (p, f) = e1();
        let cert = find_certificate(&p, &f).unwrap();
        assert!(check_certificate(&cert, &p, &f).passed());
        assert!(cert.epsilon < 0.25 && cert.alpha > 0.0 && cert.alpha < 1.0);
        // constant field: optimal α solves 3^α = ln 2 / ln 1.5
        let alpha_star = ((2f64.ln() / 1.5f64.ln()).ln()) / 3f64.ln();
        assert!((cert.alpha - alpha_star).abs() < 1e-6);
        assert_eq!(find_certificate(&p, &f).unwrap(), cert);

        for (x0, y0, field) in [
            (0.6, 0.5, ProbField::affine(0.4, 0.6).unwrap()),
            (0.8, 0.6, ProbField::piecewise_linear(vec![(0.0, 0.3), (0.5, 0.7), (1.0, 0.3)]).unwrap()),
            (0.7, 0.55, ProbField::logistic(0.5, 10.0, 0.35, 0.65).unwrap()),
        ] {
            let q = SystemParams::new(x0, y0).unwrap();
            assert!(q.validate_assumptions(&field).all_ok());
            let cert = find_certificate(&q, &field).unwrap();
            assert!(check_certificate(&cert, &q, &field).passed());
        }
    }

    #[test]
    fn no_certificate_when_the_left_endpoint_attracts() {
        let (p, _) = e1();
        let f = ProbField::constant(1.0).unwrap();
        let err = find_certificate(&p, &f).unwrap_err();
        let Error::NoCertificate { best_g } = err else { panic!("{err:?}") };
        assert!(best_g > 1.0);
        // grid scan oracle: a0^{-α} > 1 for every α in (0, 1)
        assert!((1..1000).all(|k| p.a0().powf(-(k as f64) / 1000.0) > 1.0));
    }

    #[test]
    fn exponent_grows_with_weight_on_expanding_branch() {
        let (p, _) = e1();
        let mut last = f64::NEG_INFINITY;
        for k in 1..20 {
            // weight on f1 at 0 (slope a1 there) increases as p0 decreases
            let f = ProbField::constant(1.0 - k as f64 / 20.0).unwrap();
            let (l0, _) = p.lyapunov_exponents(&f).unwrap();
            assert!(l0 > last);
            last = l0;
        }
    }

    #[test]
    fn tail_membership_examples() {
        let delta = |x: f64| empirical_measure(vec![x]).unwrap();
        let r = tail_class_member(&delta(0.5), 2.74, 0.5);
        assert!(r.ok);
        assert!((r.worst_ratio - 1.0 / (2.74 * 0.5f64.sqrt())).abs() < 1e-12);
        let r = tail_class_member(&delta(0.01), 2.74, 0.5);
        assert!(!r.ok);
        assert!((r.worst_x - 0.01).abs() < 1e-15);

        let (p, _) = e1();
        let g = Grid::new(512, &p).unwrap();
        let u = GridMeasure::uniform(g);
        assert!(tail_class_member(&u, 1.0, 0.9).ok);
        assert!(tail_class_member(&u, 1.0, 0.3).ok);
    }

    #[test]
    fn central_margin_meets_its_bound() {
        let (p, f) = e1();
        let cert = find_certificate(&p, &f).unwrap();
        let h = central_margin(&cert);
        assert!(h > 0.0 && h < 0.5);
        assert!(cert.m_const * h.powf(cert.alpha) < 0.125);
    }

    #[test]
    fn one_step_keeps_the_class() {
        let (p, f) = e1();
        let cert = find_certificate(&p, &f).unwrap();
        let g = Grid::new(1024, &p).unwrap();
        let op = UlamOperator::new(g, &p, &f).unwrap();
        let r = class_invariance(&cert, &op, 40, 1e-9, &RngSpec::new(3)).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.worst_input_ratio <= 1.0);
    }

    #[test]
    fn attracting_endpoint_breaks_the_class() {
        let (p, f) = e1();
        let cert = find_certificate(&p, &f).unwrap();
        let heavy = ProbField::constant(0.95).unwrap();
        let g = Grid::new(1024, &p).unwrap();
        let op = UlamOperator::new(g, &p, &heavy).unwrap();
        let r = class_invariance(&cert, &op, 40, 1e-9, &RngSpec::new(3)).unwrap();
        assert!(!r.passed(), "{r:?}");
    }
}
