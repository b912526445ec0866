//! Ulam discretization of the transition operator `P` and its predual `U`.
//!
//! Measures are piecewise-constant densities on a grid whose edges include
//! both kinks `1 - x0` and `x0`, so each bin lies on a single linear piece
//! of both maps. The image of a uniform density on a bin is then again a
//! uniform density on an interval, and the pushforward is computed by exact
//! overlap lengths. Only the probabilities are approximated (by their value
//! at the bin midpoint), which keeps the discrete operator exactly
//! mass-preserving.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ProbField;
use crate::ifs::{Branch, SystemParams};
use crate::measure::{abs_linear_integral, Measure1d};

/// Minimum number of uniform cells accepted by [`Grid::new`].
pub const MIN_GRID: usize = 8;

/// Strictly increasing edges from 0 to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    edges: Vec<f64>,
}

impl Grid {
    /// Uniform grid with `n` cells, refined by the two kinks of `params`.
    /// A uniform edge within one ulp of a kink is replaced by the kink.
    pub fn new(n: usize, params: &SystemParams) -> Result<Arc<Self>> {
        if n < MIN_GRID {
            return Err(Error::GridSize { n, min: MIN_GRID });
        }
        let mut edges: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        for kink in [1.0 - params.x0(), params.x0()] {
            let i = edges.partition_point(|&e| e < kink);
            let ulp = f64::EPSILON * kink;
            if (edges[i] - kink).abs() <= ulp {
                edges[i] = kink;
            } else if i > 0 && (kink - edges[i - 1]).abs() <= ulp {
                edges[i - 1] = kink;
            } else {
                edges.insert(i, kink);
            }
        }
        Ok(Arc::new(Self { edges }))
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bin(&self, k: usize) -> (f64, f64) {
        (self.edges[k], self.edges[k + 1])
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    /// Index of the bin containing `x` (half-open bins, last bin closed).
    pub fn locate(&self, x: f64) -> usize {
        let i = self.edges.partition_point(|&e| e <= x);
        i.saturating_sub(1).min(self.n_bins() - 1)
    }

    /// Whether both kinks of `params` are grid edges.
    pub fn is_aligned(&self, params: &SystemParams) -> bool {
        [1.0 - params.x0(), params.x0()]
            .iter()
            .all(|k| self.edges.binary_search_by(|e| e.total_cmp(k)).is_ok())
    }

    fn same(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
        Arc::ptr_eq(a, b) || a.edges == b.edges
    }
}

fn check_same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Grid::same(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "grids with {} and {} bins differ",
            a.n_bins(),
            b.n_bins()
        )))
    }
}

/// Piecewise-constant measure: `mass[k]` spread uniformly over bin `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Arc<Grid>,
    mass: Vec<f64>,
    cum: Vec<f64>,
    suffix: Vec<f64>,
}

impl GridMeasure {
    pub fn from_masses(grid: Arc<Grid>, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.n_bins() {
            return Err(Error::GridMismatch(format!(
                "{} masses for {} bins",
                mass.len(),
                grid.n_bins()
            )));
        }
        if let Some(m) = mass.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::Parameter(format!("bin mass {m} is not a nonnegative number")));
        }
        Ok(Self::from_parts(grid, mass))
    }

    fn from_parts(grid: Arc<Grid>, mass: Vec<f64>) -> Self {
        let n = mass.len();
        let mut cum = vec![0.0; n + 1];
        for k in 0..n {
            cum[k + 1] = cum[k] + mass[k];
        }
        let mut suffix = vec![0.0; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] + mass[k];
        }
        Self {
            grid,
            mass,
            cum,
            suffix,
        }
    }

    /// Lebesgue measure on `[0, 1]`.
    pub fn uniform(grid: Arc<Grid>) -> Self {
        let mass = (0..grid.n_bins())
            .map(|k| {
                let (l, r) = grid.bin(k);
                r - l
            })
            .collect();
        Self::from_parts(grid, mass).normalized()
    }

    /// Unit mass in the bin containing `x`.
    pub fn point_mass(grid: Arc<Grid>, x: f64) -> Self {
        let mut mass = vec![0.0; grid.n_bins()];
        mass[grid.locate(x)] = 1.0;
        Self::from_parts(grid, mass)
    }

    /// Probability measure with bin masses proportional to `density` at
    /// bin midpoints times bin widths.
    pub fn from_density(grid: Arc<Grid>, density: impl Fn(f64) -> f64) -> Result<Self> {
        let mass = (0..grid.n_bins())
            .map(|k| {
                let (l, r) = grid.bin(k);
                density(0.5 * (l + r)) * (r - l)
            })
            .collect();
        let m = Self::from_masses(grid, mass)?;
        if !(m.total_mass() > 0.0) {
            return Err(Error::Parameter("density has zero total mass".into()));
        }
        Ok(m.normalized())
    }

    pub fn normalized(self) -> Self {
        let t = self.total_mass();
        let mass = self.mass.iter().map(|m| m / t).collect();
        Self::from_parts(self.grid, mass)
    }

    /// `w * self + (1 - w) * other` on a shared grid.
    pub fn mix(&self, other: &GridMeasure, w: f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect();
        Ok(Self::from_parts(self.grid.clone(), mass))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mean(&self) -> f64 {
        (0..self.mass.len())
            .map(|k| self.mass[k] * self.grid.midpoint(k))
            .sum()
    }

    /// Kolmogorov distance to a measure on the same grid; both CDFs are
    /// affine between edges so the edges suffice.
    pub fn kolmogorov_to(&self, other: &GridMeasure) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .cum
            .iter()
            .zip(&other.cum)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Wasserstein-1 distance to a measure on the same grid.
    pub fn wasserstein_to(&self, other: &GridMeasure) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        let e = self.grid.edges();
        Ok((0..self.mass.len())
            .map(|k| {
                let d0 = self.cum[k] - other.cum[k];
                let d1 = self.cum[k + 1] - other.cum[k + 1];
                abs_linear_integral(d0, d1, e[k + 1] - e[k])
            })
            .sum())
    }

    /// CSV with columns `bin_lo,bin_hi,mass`, optionally preceded by `#`
    /// comment lines.
    pub fn write_csv(&self, mut w: impl Write, comment: Option<&str>) -> io::Result<()> {
        write_comment(&mut w, comment)?;
        writeln!(w, "bin_lo,bin_hi,mass")?;
        for (k, m) in self.mass.iter().enumerate() {
            let (l, r) = self.grid.bin(k);
            writeln!(w, "{l},{r},{m}")?;
        }
        Ok(())
    }
}

pub(crate) fn write_comment(w: &mut impl Write, comment: Option<&str>) -> io::Result<()> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

impl Measure1d for GridMeasure {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return self.cum[self.mass.len()];
        }
        let k = self.grid.locate(x);
        let (l, r) = self.grid.bin(k);
        self.cum[k] + self.mass[k] * ((x - l) / (r - l))
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    fn total_mass(&self) -> f64 {
        self.cum[self.mass.len()]
    }

    fn mass_from(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.suffix[0];
        }
        if x >= 1.0 {
            return 0.0;
        }
        let k = self.grid.locate(x);
        let (l, r) = self.grid.bin(k);
        self.suffix[k + 1] + self.mass[k] * ((r - x) / (r - l))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.grid.edges.clone()
    }
}

/// Continuous function given by its values at the grid edges, evaluated by
/// linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.edges().len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} edges",
                values.len(),
                grid.edges().len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("function values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f` at the edges.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.edges().iter().map(|&x| f(x)).collect();
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let k = self.grid.locate(x);
        let (l, r) = self.grid.bin(k);
        let t = (x - l) / (r - l);
        self.values[k] + (self.values[k + 1] - self.values[k]) * t
    }

    /// CSV with columns `x,value`.
    pub fn write_csv(&self, mut w: impl Write, comment: Option<&str>) -> io::Result<()> {
        write_comment(&mut w, comment)?;
        writeln!(w, "x,value")?;
        for (x, v) in self.grid.edges().iter().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }
}

/// Sparse matrix of the discretized `P`: row `j` lists where the mass of
/// bin `j` goes, with weights summing to one.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    grid: Arc<Grid>,
    row_start: Vec<usize>,
    dest: Vec<u32>,
    weight: Vec<f64>,
}

impl UlamOperator {
    pub fn new(grid: Arc<Grid>, params: &SystemParams, field: &ProbField) -> Result<Self> {
        if !grid.is_aligned(params) {
            return Err(Error::GridMismatch(
                "grid edges do not contain both kinks of the system".into(),
            ));
        }
        let n = grid.n_bins();
        let edges = grid.edges();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut dest = Vec::new();
        let mut weight = Vec::new();
        for j in 0..n {
            row_start.push(dest.len());
            let (l, r) = grid.bin(j);
            let p0 = field.p0_unchecked(0.5 * (l + r));
            for (branch, p) in [(Branch::Zero, p0), (Branch::One, 1.0 - p0)] {
                if p == 0.0 {
                    continue;
                }
                let lo = params.image_closed(branch, l).clamp(0.0, 1.0);
                let hi = params.image_closed(branch, r).clamp(0.0, 1.0);
                let len = hi - lo;
                let first = grid.locate(lo);
                let mut spent = 0.0f64;
                let mut k = first;
                loop {
                    let last = k + 1 >= n || edges[k + 1] >= hi;
                    let frac = if last {
                        (1.0 - spent).max(0.0)
                    } else {
                        (edges[k + 1] - lo.max(edges[k])) / len
                    };
                    spent += frac;
                    if frac > 0.0 {
                        dest.push(k as u32);
                        weight.push(p * frac);
                    }
                    if last {
                        break;
                    }
                    k += 1;
                }
            }
        }
        row_start.push(dest.len());
        Ok(Self {
            grid,
            row_start,
            dest,
            weight,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// One step of the chain in distribution: `μ ↦ Pμ`.
    pub fn push(&self, mu: &GridMeasure) -> Result<GridMeasure> {
        check_same_grid(&self.grid, &mu.grid)?;
        let mut out = vec![0.0; self.grid.n_bins()];
        for (j, &m) in mu.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for e in self.row_start[j]..self.row_start[j + 1] {
                out[self.dest[e] as usize] += m * self.weight[e];
            }
        }
        Ok(GridMeasure::from_parts(self.grid.clone(), out))
    }
}

/// `Pμ` for a single application; builds the operator on the fly.
pub fn push_measure(mu: &GridMeasure, params: &SystemParams, field: &ProbField) -> Result<GridMeasure> {
    UlamOperator::new(mu.grid.clone(), params, field)?.push(mu)
}

/// `Uφ(x) = p0(x) φ(f0(x)) + p1(x) φ(f1(x))` at every edge.
pub fn apply_dual(phi: &GridFunction, params: &SystemParams, field: &ProbField) -> GridFunction {
    let values = phi
        .grid
        .edges()
        .par_iter()
        .map(|&x| {
            let p0 = field.p0_unchecked(x);
            p0 * phi.eval(params.image_closed(Branch::Zero, x))
                + (1.0 - p0) * phi.eval(params.image_closed(Branch::One, x))
        })
        .collect();
    GridFunction {
        grid: phi.grid.clone(),
        values,
    }
}

/// Midpoint rule `Σ mass_k φ(mid_k)`.
pub fn integrate(phi: &GridFunction, mu: &GridMeasure) -> Result<f64> {
    check_same_grid(&phi.grid, &mu.grid)?;
    Ok(mu
        .mass
        .iter()
        .enumerate()
        .map(|(k, m)| m * 0.5 * (phi.values[k] + phi.values[k + 1]))
        .sum())
}

/// Stopping rule and averaging mode for [`power_iterate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterate the Cesàro averages `(μ + Pμ + … + P^{n-1}μ) / n` instead
    /// of `P^n μ`.
    pub cesaro: bool,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100_000,
            cesaro: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub measure: GridMeasure,
    pub iters: usize,
    /// Kolmogorov distance between the last two iterates.
    pub residual: f64,
    /// Wasserstein-1 distance between the last two iterates.
    pub wasserstein_residual: f64,
    pub converged: bool,
}

/// Window over which the contraction rate of the residuals is estimated.
const RATE_WINDOW: usize = 20;

/// Iterate `P` until the iterates have settled to within `tol` of their
/// limit in Kolmogorov distance.
///
/// Two conditions must hold: the successive residual `r_n` is below `tol`,
/// and so is the a-posteriori bound `r_n ρ / (1 - ρ)`, where `ρ` is the
/// geometric mean residual ratio over the last [`RATE_WINDOW`] steps. The
/// second condition matters when the operator contracts slowly: a small
/// step does not by itself mean the iterate is close to the fixed point.
/// Non-convergence is reported through `converged`, with the last iterate
/// returned.
pub fn power_iterate(op: &UlamOperator, mu0: &GridMeasure, opts: &PowerOptions) -> Result<PowerResult> {
    check_same_grid(&op.grid, &mu0.grid)?;
    let mut current = mu0.clone();
    let mut sum = mu0.mass.clone();
    let mut avg = mu0.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut wres = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = op.push(&current)?;
        let (prev, new) = if opts.cesaro {
            for (s, m) in sum.iter_mut().zip(&next.mass) {
                *s += m;
            }
            let n = (it + 1) as f64;
            let new_avg = GridMeasure::from_parts(op.grid.clone(), sum.iter().map(|s| s / n).collect());
            let prev = std::mem::replace(&mut avg, new_avg);
            (prev, avg.clone())
        } else {
            (current.clone(), next.clone())
        };
        let residual = prev.kolmogorov_to(&new)?;
        wres = prev.wasserstein_to(&new)?;
        history.push(residual);
        current = next;
        if residual == 0.0 || (residual < opts.tol && error_bound(&history) < opts.tol) {
            return Ok(PowerResult {
                measure: new,
                iters: it,
                residual,
                wasserstein_residual: wres,
                converged: true,
            });
        }
    }
    Ok(PowerResult {
        measure: if opts.cesaro { avg } else { current },
        iters: opts.max_iter,
        residual: history.last().copied().unwrap_or(f64::INFINITY),
        wasserstein_residual: wres,
        converged: false,
    })
}

/// `r_n ρ / (1 - ρ)` from the residual history; infinite until the window
/// is filled or when the residuals are not shrinking.
fn error_bound(history: &[f64]) -> f64 {
    let n = history.len();
    if n <= RATE_WINDOW {
        return f64::INFINITY;
    }
    let (last, first) = (history[n - 1], history[n - 1 - RATE_WINDOW]);
    if !(first > 0.0) {
        return 0.0;
    }
    let rho = (last / first).powf(1.0 / RATE_WINDOW as f64);
    if rho >= 1.0 {
        f64::INFINITY
    } else {
        last * rho / (1.0 - rho)
    }
}
