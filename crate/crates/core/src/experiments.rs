//! Named experiments that turn the results about the chain into pass/fail
//! reports with effect sizes.
//!
//! Every experiment takes a [`Setup`] (system, field, seed) and its own
//! configuration struct, whose defaults are the budgets used by the `all`
//! command. Tolerances and horizons are engineering choices and are echoed
//! in the report. Random streams are derived from the seed and a fixed
//! label per experiment, so a report is reproduced bitwise from
//! `(config_echo, seed)`.
//!
//! ```
//! use amz_core::experiments::{exp_stability, Setup, StabilityConfig};
//!
//! let setup = Setup::e1(7)?;
//! let cfg = StabilityConfig { grid_n: 512, ..Default::default() };
//! let report = exp_stability(&setup, &cfg)?;
//! assert!(report.passed);
//! assert!(report.metrics["kolmogorov_at_horizon"] < 0.01);
//! # Ok::<(), amz_core::Error>(())
//! ```

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{central_margin, check_certificate, find_certificate, Certificate};
use crate::error::{check_open_unit, Error, Result};
use crate::field::ProbField;
use crate::ifs::{Branch, SystemParams};
use crate::measure::{kolmogorov_distance, tail_class_member};
use crate::simulate::{
    birkhoff_averages, ensemble, estimate_escape, run_chain, run_coupled, trajectory, Driver, EmpiricalMeasure, RngSpec,
    Side,
};
use crate::transfer::{apply_dual, integrate, power_iterate, Grid, GridFunction, GridMeasure, PowerOptions, UlamOperator};

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.575_829_303_548_901;

/// Distances are reported at these steps by the stability experiment.
pub const STABILITY_REPORT_STEPS: [usize; 8] = [1, 2, 5, 10, 20, 50, 100, 200];

/// The system, field and seed shared by all experiments of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setup {
    pub params: SystemParams,
    pub field: ProbField,
    pub seed: u64,
}

impl Setup {
    pub fn new(params: SystemParams, field: ProbField, seed: u64) -> Self {
        Self { params, field, seed }
    }

    /// `(x0, y0) = (0.75, 0.5)` with `p0 = 1/2`.
    pub fn e1(seed: u64) -> Result<Self> {
        Ok(Self::new(SystemParams::new(0.75, 0.5)?, ProbField::constant(0.5)?, seed))
    }

    fn rng(&self, label: &str) -> RngSpec {
        RngSpec::new(self.seed).labeled(label)
    }

    /// Whether `p0(x) = p1(1 - x)` at 1001 evenly spaced points, in which
    /// case the stationary law is symmetric about 1/2.
    pub fn is_symmetric(&self) -> bool {
        (0..=1000).all(|i| {
            let x = i as f64 / 1000.0;
            (self.field.p0_unchecked(x) - (1.0 - self.field.p0_unchecked(1.0 - x))).abs() <= 1e-12
        })
    }

    fn echo<C: Serialize>(&self, cfg: &C) -> serde_json::Value {
        serde_json::json!({
            "system": self.params,
            "field": self.field,
            "seed": self.seed,
            "experiment": cfg,
        })
    }
}

/// A table of numbers written next to a report as CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Suggests a logarithmic y axis when plotted.
    pub log_y: bool,
}

impl Series {
    fn new(name: &str, columns: &[&str], log_y: bool) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            log_y,
        }
    }

    /// CSV with a header row; `comment` lines are prefixed with `#`.
    pub fn write_csv(&self, mut w: impl Write, comment: Option<&str>) -> io::Result<()> {
        crate::transfer::write_comment(&mut w, comment)?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub config_echo: serde_json::Value,
    pub seed: u64,
    /// Side files written for `series`, filled in by whoever writes them.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
    #[serde(skip)]
    pub series: Vec<Series>,
}

impl ExperimentReport {
    fn new(name: &str, setup: &Setup, echo: serde_json::Value) -> Self {
        Self {
            name: name.into(),
            passed: false,
            metrics: BTreeMap::new(),
            config_echo: echo,
            seed: setup.seed,
            files: Vec::new(),
            series: Vec::new(),
        }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    fn flag(&mut self, key: &str, value: bool) {
        self.metric(key, if value { 1.0 } else { 0.0 });
    }
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

impl LinearFit {
    /// Upper end of the two-sided 99% interval for the slope.
    pub fn slope_upper99(&self) -> f64 {
        self.slope + Z99 * self.slope_stderr
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 paired points, got {n} and {}", ys.len())));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::DegenerateFit("abscissae coincide or ordinates are not finite".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr: (sse / (nf - 2.0) / sxx).sqrt(),
    })
}

/// Nearest-rank quantile of an unsorted sample.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    let k = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    *values.select_nth_unstable_by(k, f64::total_cmp).1
}

fn certificate_or_report(setup: &Setup, report: &mut ExperimentReport) -> Option<Certificate> {
    match find_certificate(&setup.params, &setup.field) {
        Ok(cert) if check_certificate(&cert, &setup.params, &setup.field).passed() => Some(cert),
        Ok(_) => {
            report.flag("certificate_found", false);
            None
        }
        Err(Error::NoCertificate { best_g }) => {
            report.flag("certificate_found", false);
            report.metric("certificate_best_g", best_g);
            None
        }
        Err(_) => {
            report.flag("certificate_found", false);
            None
        }
    }
}

fn stationary_measure(setup: &Setup, grid_n: usize, opts: &PowerOptions) -> Result<(UlamOperator, GridMeasure)> {
    let grid = Grid::new(grid_n, &setup.params)?;
    let op = UlamOperator::new(grid.clone(), &setup.params, &setup.field)?;
    let res = power_iterate(&op, &GridMeasure::uniform(grid), opts)?;
    if !res.converged {
        return Err(Error::Consistency(format!(
            "power iteration did not converge in {} steps (residual {:e})",
            res.iters, res.residual
        )));
    }
    Ok((op, res.measure))
}

// ---------------------------------------------------------------- escape

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeConfig {
    pub starts: Vec<f64>,
    pub steps: Vec<u64>,
    pub samples: u64,
    pub sides: Vec<Side>,
    /// Added to every estimate before comparing; nonzero only to check
    /// that the harness can fail.
    pub p_hat_offset: f64,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        Self {
            starts: vec![0.02, 0.05, 0.1],
            steps: vec![10, 50, 100, 200],
            samples: 100_000,
            sides: vec![Side::Left, Side::Right],
            p_hat_offset: 0.0,
        }
    }
}

/// Probability of staying within `ε` of an endpoint for `n` steps against
/// the bound `min(1, (ε/x)^α p^n)` plus three standard errors.
pub fn exp_escape_bound(setup: &Setup, cfg: &EscapeConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("escape", setup, setup.echo(cfg));
    let Some(cert) = certificate_or_report(setup, &mut report) else {
        return Ok(report);
    };
    let spec = setup.rng("escape");
    let mut series = Series::new("escape", &["side", "x", "n", "p_hat", "stderr", "bound"], true);
    let mut worst = f64::INFINITY;
    let mut violations = 0usize;
    let mut cell = 0u64;
    for &side in &cfg.sides {
        for &x in &cfg.starts {
            if !(x > 0.0 && x < cert.epsilon) {
                return Err(Error::Parameter(format!("start {x} must lie in (0, ε = {})", cert.epsilon)));
            }
            let start = match side {
                Side::Left => x,
                Side::Right => 1.0 - x,
            };
            for &n in &cfg.steps {
                let est = estimate_escape(
                    start,
                    cert.epsilon,
                    n,
                    cfg.samples,
                    side,
                    &setup.params,
                    &setup.field,
                    &spec.substream(cell),
                )?;
                cell += 1;
                let bound = ((cert.epsilon / x).powf(cert.alpha) * cert.p.powi(n as i32)).min(1.0);
                let p_hat = est.p_hat + cfg.p_hat_offset;
                let slack = bound + 3.0 * est.stderr - p_hat;
                worst = worst.min(slack);
                if slack < 0.0 {
                    violations += 1;
                }
                let s = match side {
                    Side::Left => 0.0,
                    Side::Right => 1.0,
                };
                series.rows.push(vec![s, x, n as f64, p_hat, est.stderr, bound]);
            }
        }
    }
    report.metric("worst_slack", worst);
    report.metric("violations", violations as f64);
    report.metric("cells", cell as f64);
    report.metric("epsilon", cert.epsilon);
    report.metric("alpha", cert.alpha);
    report.metric("p", cert.p);
    report.series.push(series);
    report.passed = violations == 0 && cell > 0;
    Ok(report)
}

// ---------------------------------------------------------------- prop1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prop1Config {
    pub pairs: u64,
    pub word_length: usize,
    /// Where pairs are drawn; `None` means `[1 - x0, x0]`.
    pub range: Option<[f64; 2]>,
    pub exhaustive_pair: [f64; 2],
    pub exhaustive_length: u32,
    pub tol: f64,
}

impl Default for Prop1Config {
    fn default() -> Self {
        Self {
            pairs: 10_000,
            word_length: 200,
            range: None,
            exhaustive_pair: [0.40, 0.45],
            exhaustive_length: 12,
            tol: 1e-12,
        }
    }
}

/// Pathwise bound `|f^n_ω(x) - f^n_ω(y)| <= a1 |x - y|` for close pairs in
/// the middle interval: random words plus every word of a short length.
pub fn exp_prop1(setup: &Setup, cfg: &Prop1Config) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("prop1", setup, setup.echo(cfg));
    let p = &setup.params;
    let a1 = p.a1();
    let eta1 = p.admissible_eta1()?;
    let [lo, hi] = cfg.range.unwrap_or([1.0 - p.x0(), p.x0()]);
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::Parameter(format!("pair range [{lo}, {hi}] must lie inside (0, 1)")));
    }

    // Each pair: (max ratio to the bound, order preserved).
    let results = ensemble(&setup.rng("prop1"), cfg.pairs, |_, rng| {
        use rand::Rng;
        let x: f64 = rng.random_range(lo..hi);
        let gap = rng.random_range(0.0..1.0) * eta1.min(hi - lo);
        let (x, y) = if x + gap <= hi { (x, x + gap) } else { (x - gap, x) };
        let bound = a1 * (y - x);
        let mut worst: f64 = 0.0;
        let mut ordered = true;
        run_coupled(x, y, cfg.word_length, Driver::X, p, &setup.field, rng, |_, xs, ys, g, _| {
            ordered &= xs <= ys && g >= 0.0;
            if bound > 0.0 {
                worst = worst.max((g.abs() - cfg.tol) / bound);
            }
        });
        (worst, ordered)
    });
    let max_ratio = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let violations = results.iter().filter(|r| r.0 > 1.0).count();
    let disordered = results.iter().filter(|r| !r.1).count();

    let [ex, ey] = cfg.exhaustive_pair;
    let ex_bound = a1 * (ey - ex).abs();
    let ex_max = exhaustive_deviation(p, ex, ey, cfg.exhaustive_length);

    report.metric("eta1", eta1);
    report.metric("max_ratio_random", max_ratio);
    report.metric("violations_random", violations as f64);
    report.metric("order_violations", disordered as f64);
    report.metric("exhaustive_max_deviation", ex_max);
    report.metric("exhaustive_bound", ex_bound);
    report.metric("exhaustive_words", 2f64.powi(cfg.exhaustive_length as i32));
    report.passed = violations == 0 && disordered == 0 && ex_max <= ex_bound + cfg.tol;
    Ok(report)
}

/// Largest `|f^n_ω(x) - f^n_ω(y)|` over all words `ω` of length `len` and
/// all prefixes `n <= len`.
pub fn exhaustive_deviation(params: &SystemParams, x: f64, y: f64, len: u32) -> f64 {
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    fn walk(params: &SystemParams, x: f64, gap: f64, depth: u32) -> f64 {
        if depth == 0 {
            return gap;
        }
        Branch::BOTH
            .iter()
            .map(|&b| {
                let g = params.gap_image(b, x, gap);
                g.max(walk(params, params.image(b, x), g, depth - 1))
            })
            .fold(gap, f64::max)
    }
    walk(params, x, y - x, len)
}

// ---------------------------------------------------------------- prop2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prop2Config {
    pub x: f64,
    pub y: f64,
    pub pairs: u64,
    pub n_min: usize,
    pub n_max: usize,
    pub ratio: f64,
    pub quantile: f64,
    pub driver: Driver,
}

impl Default for Prop2Config {
    fn default() -> Self {
        Self {
            x: 0.40,
            y: 0.42,
            pairs: 10_000,
            n_min: 10,
            n_max: 100,
            ratio: 0.01,
            quantile: 0.99,
            driver: Driver::X,
        }
    }
}

/// Geometric decay of `D_n = E|X^x_n - X^y_n|` under coupling, and of a
/// high quantile of `|X^x_n - X^y_n|`.
pub fn exp_prop2_decay(setup: &Setup, cfg: &Prop2Config) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("prop2", setup, setup.echo(cfg));
    check_open_unit("x", cfg.x)?;
    check_open_unit("y", cfg.y)?;
    if !(cfg.n_min + 2 <= cfg.n_max) {
        return Err(Error::Parameter(format!(
            "fit range [{}, {}] needs at least three points",
            cfg.n_min, cfg.n_max
        )));
    }
    let n_max = cfg.n_max;
    let gaps: Vec<Vec<f64>> = ensemble(&setup.rng("prop2"), cfg.pairs, |_, rng| {
        let mut g = Vec::with_capacity(n_max + 1);
        g.push((cfg.y - cfg.x).abs());
        run_coupled(cfg.x, cfg.y, n_max, cfg.driver, &setup.params, &setup.field, rng, |_, _, _, gap, _| {
            g.push(gap.abs())
        });
        g
    });

    let mut series = Series::new("prop2", &["n", "mean_gap", "quantile_gap"], true);
    let mut d = Vec::with_capacity(n_max + 1);
    let mut qs = Vec::with_capacity(n_max + 1);
    let mut column = vec![0.0; gaps.len()];
    for n in 0..=n_max {
        for (c, g) in column.iter_mut().zip(&gaps) {
            *c = g[n];
        }
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        let q = quantile(&mut column, cfg.quantile);
        d.push(mean);
        qs.push(q);
        series.rows.push(vec![n as f64, mean, q]);
    }
    report.series.push(series);
    if d[0] == 0.0 {
        report.metric("d0", 0.0);
        report.passed = d.iter().all(|&v| v == 0.0);
        return Ok(report);
    }

    let ns: Vec<f64> = (cfg.n_min..=n_max).map(|n| n as f64).collect();
    let logs = |v: &[f64]| -> Result<Vec<f64>> {
        v[cfg.n_min..=n_max]
            .iter()
            .map(|&x| {
                if x > 0.0 {
                    Ok(x.ln())
                } else {
                    Err(Error::DegenerateFit("deviation underflowed inside the fit range; use a smaller range".into()))
                }
            })
            .collect()
    };
    let fit = linear_fit(&ns, &logs(&d)?)?;
    let qfit = linear_fit(&ns, &logs(&qs)?)?;
    let ratio = d[n_max] / d[0];
    report.metric("d0", d[0]);
    report.metric("d_n_max", d[n_max]);
    report.metric("ratio", ratio);
    report.metric("slope", fit.slope);
    report.metric("slope_upper99", fit.slope_upper99());
    report.metric("q_hat", fit.slope.exp());
    report.metric("quantile_slope", qfit.slope);
    report.metric("quantile_slope_upper99", qfit.slope_upper99());
    report.metric("quantile_rate", qfit.slope.exp());
    report.passed = fit.slope_upper99() < 0.0 && ratio < cfg.ratio && qfit.slope_upper99() < 0.0;
    Ok(report)
}

// ---------------------------------------------------------------- reach

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachConfig {
    pub rho: f64,
    pub xi: f64,
    /// Number of start points evenly spaced on `[ξ, 1 - ξ]`.
    pub points: usize,
    pub steps: Vec<u64>,
    pub runs: u64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            rho: 0.05,
            xi: 0.05,
            points: 19,
            steps: vec![50, 100, 200],
            runs: 10_000,
        }
    }
}

/// Uniform positive probability of being near the attracting point `c`
/// after `n` steps, from every start in `[ξ, 1 - ξ]`.
pub fn exp_reach_c(setup: &Setup, cfg: &ReachConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("reach", setup, setup.echo(cfg));
    if !(cfg.xi > 0.0 && cfg.xi < 0.5 && cfg.rho > 0.0 && cfg.points >= 1 && !cfg.steps.is_empty()) {
        return Err(Error::Parameter("reach needs 0 < ξ < 1/2, ρ > 0, points >= 1 and some steps".into()));
    }
    let Some(cert) = certificate_or_report(setup, &mut report) else {
        return Ok(report);
    };
    let c = setup.params.attractive_fixed_point()?;
    let h = central_margin(&cert);
    let mut steps = cfg.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let horizon = *steps.last().unwrap();
    let starts: Vec<f64> = if cfg.points == 1 {
        vec![0.5]
    } else {
        (0..cfg.points)
            .map(|i| cfg.xi + (1.0 - 2.0 * cfg.xi) * i as f64 / (cfg.points - 1) as f64)
            .collect()
    };
    let spec = setup.rng("reach");
    let mut series = Series::new("reach", &["x", "n", "p_near_c", "p_central"], false);
    let mut floor = vec![f64::INFINITY; steps.len()];
    let mut central_floor = vec![f64::INFINITY; steps.len()];
    for (i, &x) in starts.iter().enumerate() {
        // Per run: for each tested n, (near c, inside (h, 1 - h)).
        let hits = ensemble(&spec.substream(i as u64), cfg.runs, |_, rng| {
            let mut out = vec![(false, false); steps.len()];
            let mut j = 0;
            let _ = run_chain(x, horizon, &setup.params, &setup.field, rng, |k, z, _| {
                if j < steps.len() && k == steps[j] {
                    out[j] = ((z - c).abs() < cfg.rho, z > h && z < 1.0 - h);
                    j += 1;
                }
            });
            out
        });
        for j in 0..steps.len() {
            let near = hits.iter().filter(|h| h[j].0).count() as u64;
            let central = hits.iter().filter(|h| h[j].1).count() as u64;
            let pn = crate::simulate::Proportion::from_count(near, cfg.runs);
            let pc = crate::simulate::Proportion::from_count(central, cfg.runs);
            floor[j] = floor[j].min(pn.p_hat - 3.0 * pn.stderr);
            central_floor[j] = central_floor[j].min(pc.p_hat - 3.0 * pc.stderr);
            series.rows.push(vec![x, steps[j] as f64, pn.p_hat, pc.p_hat]);
        }
    }
    // Smallest tested n from which every tested floor is positive.
    let m = (0..steps.len()).rev().take_while(|&j| floor[j] > 0.0).last().map(|j| steps[j]);
    for (j, n) in steps.iter().enumerate() {
        report.metric(format!("floor_n{n}"), floor[j]);
        report.metric(format!("central_floor_n{n}"), central_floor[j]);
    }
    report.metric("c", c);
    report.metric("h", h);
    report.metric("m", m.map_or(f64::NAN, |m| m as f64));
    report.series.push(series);
    report.passed = m.is_some();
    Ok(report)
}

// ---------------------------------------------------------------- stationary

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub grid_n: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub cesaro: bool,
    pub starts: [f64; 2],
    pub mc_steps: u64,
    pub mc_start: f64,
    pub mc_tol: f64,
    /// Allowed distance of the mean from 1/2 when the system is symmetric.
    pub mean_tol: f64,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            grid_n: 4096,
            tol: 1e-6,
            max_iter: 100_000,
            cesaro: false,
            starts: [0.05, 0.95],
            mc_steps: 1_000_000,
            mc_start: 0.5,
            mc_tol: 0.01,
            mean_tol: 2e-3,
        }
    }
}

/// Power iteration from two distant starts: convergence, agreement,
/// membership in the tail class, and agreement with a long trajectory.
pub fn exp_stationary(setup: &Setup, cfg: &StationaryConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("stationary", setup, setup.echo(cfg));
    for &x in &cfg.starts {
        check_open_unit("start", x)?;
    }
    check_open_unit("mc_start", cfg.mc_start)?;
    let Some(cert) = certificate_or_report(setup, &mut report) else {
        return Ok(report);
    };
    let grid = Grid::new(cfg.grid_n, &setup.params)?;
    let op = UlamOperator::new(grid.clone(), &setup.params, &setup.field)?;
    let opts = PowerOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        cesaro: cfg.cesaro,
    };
    let runs: Vec<_> = cfg
        .starts
        .par_iter()
        .map(|&s| power_iterate(&op, &GridMeasure::point_mass(grid.clone(), s), &opts))
        .collect::<Result<_>>()?;
    let (a, b) = (&runs[0], &runs[1]);
    let agreement = a.measure.kolmogorov_to(&b.measure)?;
    let tail = tail_class_member(&a.measure, cert.m_const, cert.alpha);

    let tr = trajectory(cfg.mc_start, cfg.mc_steps as usize, &setup.params, &setup.field, &mut setup.rng("stationary").rng())?;
    let emp = EmpiricalMeasure::new(tr.states[1..].to_vec())?;
    let mc = kolmogorov_distance(&a.measure, &emp);
    let mean = a.measure.mean();

    report.flag("converged_0", a.converged);
    report.flag("converged_1", b.converged);
    report.metric("iters_0", a.iters as f64);
    report.metric("iters_1", b.iters as f64);
    report.metric("residual_0", a.residual);
    report.metric("residual_1", b.residual);
    report.metric("agreement_kolmogorov", agreement);
    report.metric("agreement_wasserstein", a.measure.wasserstein_to(&b.measure)?);
    report.metric("tail_worst_ratio", tail.worst_ratio);
    report.metric("ulam_vs_mc_kolmogorov", mc);
    report.metric("mean_ulam", mean);
    report.metric("mean_mc", emp.mean());
    let mut ok = a.converged && b.converged && agreement < 2.0 * cfg.tol && tail.ok && mc < cfg.mc_tol;
    if setup.is_symmetric() {
        report.metric("mean_offset", (mean - 0.5).abs());
        ok &= (mean - 0.5).abs() < cfg.mean_tol;
    }
    let mut s = Series::new("stationary", &["bin_lo", "bin_hi", "mass"], false);
    for (k, m) in a.measure.masses().iter().enumerate() {
        let (l, r) = grid.bin(k);
        s.rows.push(vec![l, r, *m]);
    }
    report.series.push(s);
    report.passed = ok;
    Ok(report)
}

// ---------------------------------------------------------------- stability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub grid_n: usize,
    pub starts: [f64; 2],
    pub horizon: usize,
    pub tol: f64,
    /// Allowed increase between consecutive distances after the peak.
    pub monotone_slack: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            grid_n: 4096,
            starts: [0.05, 0.95],
            horizon: 200,
            tol: 0.01,
            monotone_slack: 1e-9,
        }
    }
}

/// Distance between `P^n ν1` and `P^n ν2` on the grid operator.
pub fn exp_stability(setup: &Setup, cfg: &StabilityConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("stability", setup, setup.echo(cfg));
    for &x in &cfg.starts {
        check_open_unit("start", x)?;
    }
    let grid = Grid::new(cfg.grid_n, &setup.params)?;
    let op = UlamOperator::new(grid.clone(), &setup.params, &setup.field)?;
    let mut m1 = GridMeasure::point_mass(grid.clone(), cfg.starts[0]);
    let mut m2 = GridMeasure::point_mass(grid, cfg.starts[1]);
    let mut dk = vec![m1.kolmogorov_to(&m2)?];
    let mut dw = vec![m1.wasserstein_to(&m2)?];
    for _ in 0..cfg.horizon {
        m1 = op.push(&m1)?;
        m2 = op.push(&m2)?;
        dk.push(m1.kolmogorov_to(&m2)?);
        dw.push(m1.wasserstein_to(&m2)?);
    }
    let peak = dk
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > dk[best] { i } else { best });
    let monotone = dk[peak..].windows(2).all(|w| w[1] <= w[0] + cfg.monotone_slack);
    let mut s = Series::new("stability", &["n", "kolmogorov", "wasserstein"], true);
    for n in 0..=cfg.horizon {
        s.rows.push(vec![n as f64, dk[n], dw[n]]);
    }
    for n in STABILITY_REPORT_STEPS.into_iter().filter(|&n| n <= cfg.horizon) {
        report.metric(format!("kolmogorov_n{n}"), dk[n]);
        report.metric(format!("wasserstein_n{n}"), dw[n]);
    }
    report.metric("kolmogorov_at_horizon", dk[cfg.horizon]);
    report.metric("wasserstein_at_horizon", dw[cfg.horizon]);
    report.metric("peak_step", peak as f64);
    report.flag("monotone_after_peak", monotone);
    report.series.push(s);
    report.passed = dk[cfg.horizon] < cfg.tol && monotone;
    Ok(report)
}

// ---------------------------------------------------------------- slln

/// Test functions available to the SLLN experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Identity,
    Square,
    /// Ramp from 1 to 0 across `(c - w, c + w)`, a Lipschitz stand-in for
    /// the indicator of `(0, c)`.
    SmoothedIndicator,
    One,
}

impl TestFunction {
    fn eval(self, x: f64, c: f64, w: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Square => x * x,
            Self::SmoothedIndicator => ((c + w - x) / (2.0 * w)).clamp(0.0, 1.0),
            Self::One => 1.0,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Identity => "x",
            Self::Square => "x2",
            Self::SmoothedIndicator => "ind_c",
            Self::One => "one",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SllnConfig {
    pub starts: Vec<f64>,
    pub functions: Vec<TestFunction>,
    pub steps: u64,
    pub tol: f64,
    /// Number of seeds, `seed, seed + 1, ...`.
    pub seeds: u64,
    pub grid_n: usize,
    pub power_tol: f64,
    pub ramp_width: f64,
    /// Allowed distance of the pooled average of `x` from 1/2 when the
    /// system is symmetric.
    pub mean_tol: f64,
}

impl Default for SllnConfig {
    fn default() -> Self {
        Self {
            starts: vec![0.1, 0.5, 0.9],
            functions: vec![TestFunction::Identity, TestFunction::Square, TestFunction::SmoothedIndicator],
            steps: 1_000_000,
            tol: 0.005,
            seeds: 2,
            grid_n: 4096,
            power_tol: 1e-6,
            ramp_width: 0.02,
            mean_tol: 2e-3,
        }
    }
}

/// Birkhoff averages from several starts and seeds against the integral
/// over the grid fixed point.
pub fn exp_slln(setup: &Setup, cfg: &SllnConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("slln", setup, setup.echo(cfg));
    if cfg.starts.is_empty() || cfg.functions.is_empty() || cfg.seeds == 0 || cfg.steps == 0 {
        return Err(Error::Parameter("slln needs starts, functions, seeds and steps".into()));
    }
    let opts = PowerOptions {
        tol: cfg.power_tol,
        ..Default::default()
    };
    let (op, mu) = stationary_measure(setup, cfg.grid_n, &opts)?;
    let c = setup.params.attractive_fixed_point()?;
    let w = cfg.ramp_width;
    let exact: Vec<f64> = cfg
        .functions
        .iter()
        .map(|&f| integrate(&GridFunction::from_fn(op.grid().clone(), |x| f.eval(x, c, w))?, &mu))
        .collect::<Result<_>>()?;

    let runs: Vec<(u64, f64)> = (0..cfg.seeds)
        .flat_map(|s| cfg.starts.iter().map(move |&x| (s, x)))
        .collect();
    let closures: Vec<Box<dyn Fn(f64) -> f64 + Sync>> = cfg
        .functions
        .iter()
        .map(|&f| Box::new(move |x: f64| f.eval(x, c, w)) as Box<dyn Fn(f64) -> f64 + Sync>)
        .collect();
    let phis: Vec<&(dyn Fn(f64) -> f64 + Sync)> = closures.iter().map(|b| b.as_ref()).collect();
    let averages: Vec<Vec<f64>> = runs
        .par_iter()
        .enumerate()
        .map(|(i, &(s, x))| {
            let spec = RngSpec::new(setup.seed.wrapping_add(s)).labeled("slln").substream(i as u64);
            birkhoff_averages(x, cfg.steps, &phis, &setup.params, &setup.field, &mut spec.rng())
        })
        .collect::<Result<_>>()?;

    let mut worst: f64 = 0.0;
    let mut s = Series::new("slln", &["seed_offset", "start", "function", "average", "integral"], false);
    for ((seed_off, x), avg) in runs.iter().zip(&averages) {
        for (j, f) in cfg.functions.iter().enumerate() {
            let err = (avg[j] - exact[j]).abs();
            worst = worst.max(err);
            report.metric(format!("error[{}, x={x}, seed+{seed_off}]", f.label()), err);
            s.rows.push(vec![*seed_off as f64, *x, j as f64, avg[j], exact[j]]);
        }
    }
    for (j, f) in cfg.functions.iter().enumerate() {
        report.metric(format!("integral[{}]", f.label()), exact[j]);
    }
    report.metric("worst_error", worst);
    let mut ok = worst < cfg.tol;
    if setup.is_symmetric() {
        if let Some(j) = cfg.functions.iter().position(|&f| f == TestFunction::Identity) {
            let pooled = averages.iter().map(|a| a[j]).sum::<f64>() / averages.len() as f64;
            report.metric("pooled_mean", pooled);
            report.metric("pooled_mean_offset", (pooled - 0.5).abs());
            ok &= (pooled - 0.5).abs() < cfg.mean_tol;
        }
    }
    report.series.push(s);
    report.passed = ok;
    Ok(report)
}

// ---------------------------------------------------------------- equicontinuity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquicontinuityConfig {
    pub grid_n: usize,
    pub horizon: usize,
    pub distances: Vec<f64>,
    /// Probe points are spread over `(c - w, c + w)`.
    pub probe_halfwidth: f64,
    pub probes: usize,
    /// The envelope `bound(d) = bound_factor * d` the modulus must stay
    /// under at every step.
    pub bound_factor: f64,
    pub slack: f64,
}

impl Default for EquicontinuityConfig {
    fn default() -> Self {
        Self {
            grid_n: 4096,
            horizon: 100,
            distances: vec![1e-1, 1e-2, 1e-3],
            probe_halfwidth: 0.05,
            probes: 101,
            bound_factor: 2.0,
            slack: 1e-12,
        }
    }
}

/// Modulus of continuity of `U^n φ` near `c` for `φ(x) = x`.
pub fn exp_equicontinuity(setup: &Setup, cfg: &EquicontinuityConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("equicontinuity", setup, setup.echo(cfg));
    if cfg.distances.is_empty() || cfg.probes < 1 || !(cfg.probe_halfwidth > 0.0) {
        return Err(Error::Parameter("equicontinuity needs distances, probes and a positive half-width".into()));
    }
    let c = setup.params.attractive_fixed_point()?;
    let mut ds = cfg.distances.clone();
    ds.sort_by(|a, b| b.total_cmp(a));
    let grid = Grid::new(cfg.grid_n, &setup.params)?;
    let mut phi = GridFunction::from_fn(grid, |x| x)?;
    let probes: Vec<f64> = (0..cfg.probes)
        .map(|i| {
            let t = if cfg.probes == 1 { 0.5 } else { i as f64 / (cfg.probes - 1) as f64 };
            c - cfg.probe_halfwidth + 2.0 * cfg.probe_halfwidth * t
        })
        .collect();
    let modulus = |phi: &GridFunction, d: f64| {
        probes
            .iter()
            .filter(|&&x| x > 0.0 && x + d < 1.0)
            .map(|&x| (phi.eval(x + d) - phi.eval(x)).abs())
            .fold(0.0, f64::max)
    };
    let mut columns = vec!["n".to_string()];
    columns.extend(ds.iter().map(|d| format!("d={d}")));
    let mut s = Series {
        name: "equicontinuity".into(),
        columns,
        rows: Vec::new(),
        log_y: true,
    };
    let mut sup = vec![0.0f64; ds.len()];
    let mut ordered = true;
    let mut bounded = true;
    for n in 0..=cfg.horizon {
        if n > 0 {
            phi = apply_dual(&phi, &setup.params, &setup.field);
        }
        let row: Vec<f64> = ds.iter().map(|&d| modulus(&phi, d)).collect();
        ordered &= row.windows(2).all(|w| w[1] <= w[0] + cfg.slack);
        for (j, (&m, &d)) in row.iter().zip(&ds).enumerate() {
            sup[j] = sup[j].max(m);
            bounded &= m <= cfg.bound_factor * d + cfg.slack;
            if n == 0 {
                report.metric(format!("modulus_n0[d={d}]"), m);
            }
        }
        let mut r = vec![n as f64];
        r.extend(row);
        s.rows.push(r);
    }
    for (&d, &m) in ds.iter().zip(&sup) {
        report.metric(format!("sup_modulus[d={d}]"), m);
        report.metric(format!("sup_modulus_over_d[d={d}]"), m / d);
    }
    report.flag("nonincreasing_in_d", ordered);
    report.flag("within_bound", bounded);
    report.series.push(s);
    report.passed = ordered && bounded;
    Ok(report)
}

// ---------------------------------------------------------------- all

/// Per-experiment configurations of a full run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsConfig {
    pub escape: EscapeConfig,
    pub prop1: Prop1Config,
    pub prop2: Prop2Config,
    pub reach: ReachConfig,
    pub stationary: StationaryConfig,
    pub stability: StabilityConfig,
    pub slln: SllnConfig,
    pub equicontinuity: EquicontinuityConfig,
}

/// Names accepted by [`run_named`], in the order `all` runs them.
pub const EXPERIMENT_NAMES: [&str; 8] = [
    "stationary",
    "stability",
    "slln",
    "prop1",
    "prop2",
    "escape",
    "reach",
    "equicontinuity",
];

pub fn run_named(name: &str, setup: &Setup, cfg: &ExperimentsConfig) -> Result<ExperimentReport> {
    match name {
        "stationary" => exp_stationary(setup, &cfg.stationary),
        "stability" => exp_stability(setup, &cfg.stability),
        "slln" => exp_slln(setup, &cfg.slln),
        "prop1" => exp_prop1(setup, &cfg.prop1),
        "prop2" => exp_prop2_decay(setup, &cfg.prop2),
        "escape" => exp_escape_bound(setup, &cfg.escape),
        "reach" => exp_reach_c(setup, &cfg.reach),
        "equicontinuity" => exp_equicontinuity(setup, &cfg.equicontinuity),
        other => Err(Error::Parameter(format!("unknown experiment {other:?}"))),
    }
}
