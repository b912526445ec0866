//! Seeded Monte Carlo for the chain: single trajectories, coupled pairs
//! driven by one shared branch sequence, hitting times and the escape
//! probabilities near the endpoints.
//!
//! Every random draw comes from ChaCha8 keyed by `(seed, stream)`. A
//! replicate `i` of an ensemble uses stream `mix(stream, i)`, so results do
//! not depend on how rayon schedules the replicates; per-replicate values
//! are collected in index order and reduced sequentially.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::field::ProbField;
use crate::ifs::{Branch, SystemParams};
use crate::measure::Measure1d;
use crate::transfer::write_comment;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// ChaCha8 keyed by `seed`, positioned on `stream`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Child stream `index`: `splitmix64(stream ^ splitmix64(index))`.
    pub fn substream(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index)),
        }
    }

    /// Child stream for a named purpose.
    pub fn labeled(&self, label: &str) -> Self {
        let h = label
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        self.substream(h)
    }
}

/// Run `f` for replicates `0..n`, each with its own stream, and return the
/// results in replicate order.
pub fn ensemble<T, F>(spec: &RngSpec, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(i, &mut spec.substream(i).rng()))
        .collect()
}

#[inline]
fn choose(field: &ProbField, x: f64, rng: &mut impl Rng) -> Branch {
    let u: f64 = rng.random();
    if u < field.p0_unchecked(x) {
        Branch::Zero
    } else {
        Branch::One
    }
}

/// One transition: draw `u` in `[0, 1)`, take branch 0 iff `u < p0(x)`.
pub fn step(
    x: f64,
    params: &SystemParams,
    field: &ProbField,
    rng: &mut impl Rng,
) -> Result<(f64, Branch)> {
    check_open_unit("x", x)?;
    let b = choose(field, x, rng);
    Ok((params.image(b, x), b))
}

/// Advance `n` steps from `x`, calling `visit(k, x_k, branch_k)` for
/// `k = 1..=n`.
pub fn run_chain(
    x: f64,
    n: u64,
    params: &SystemParams,
    field: &ProbField,
    rng: &mut impl Rng,
    mut visit: impl FnMut(u64, f64, Branch),
) -> Result<()> {
    check_open_unit("x", x)?;
    let mut z = x;
    for k in 1..=n {
        let b = choose(field, z, rng);
        z = params.image(b, z);
        visit(k, z, b);
    }
    Ok(())
}

/// A realization `x_0, …, x_n` with its branch word.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: f64,
    pub states: Vec<f64>,
    pub branches: Vec<Branch>,
    /// `slope_products[k] = a_{ω_k} ⋯ a_{ω_1}`, with `slope_products[0] = 1`.
    pub slope_products: Vec<f64>,
}

impl Trajectory {
    /// CSV with columns `step,state,branch`; the branch cell of step 0 is
    /// empty.
    pub fn write_csv(&self, mut w: impl Write, comment: Option<&str>) -> io::Result<()> {
        write_comment(&mut w, comment)?;
        writeln!(w, "step,state,branch")?;
        writeln!(w, "0,{},", self.states[0])?;
        for (k, (s, b)) in self.states[1..].iter().zip(&self.branches).enumerate() {
            writeln!(w, "{},{},{}", k + 1, s, b.index())?;
        }
        Ok(())
    }
}

pub fn trajectory(
    x: f64,
    n: usize,
    params: &SystemParams,
    field: &ProbField,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(n + 1);
    let mut branches = Vec::with_capacity(n);
    let mut slope_products = Vec::with_capacity(n + 1);
    states.push(x);
    slope_products.push(1.0);
    let (a0, a1) = (params.a0(), params.a1());
    run_chain(x, n as u64, params, field, rng, |_, z, b| {
        states.push(z);
        branches.push(b);
        let a = if b == Branch::Zero { a0 } else { a1 };
        let last = *slope_products.last().unwrap();
        slope_products.push(last * a);
    })?;
    Ok(Trajectory {
        start: x,
        states,
        branches,
        slope_products,
    })
}

/// Time averages `(φ(x_1) + … + φ(x_n)) / n` for several test functions
/// along one trajectory.
pub fn birkhoff_averages(
    x: f64,
    n: u64,
    phis: &[&(dyn Fn(f64) -> f64 + Sync)],
    params: &SystemParams,
    field: &ProbField,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Parameter("Birkhoff average needs n >= 1".into()));
    }
    let mut sums = vec![0.0; phis.len()];
    run_chain(x, n, params, field, rng, |_, z, _| {
        for (s, phi) in sums.iter_mut().zip(phis) {
            *s += phi(z);
        }
    })?;
    Ok(sums.into_iter().map(|s| s / n as f64).collect())
}

/// Whose state sets the branch probabilities of a coupled pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    #[default]
    X,
    Y,
}

/// Two trajectories advanced by one shared branch word.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub x_states: Vec<f64>,
    pub y_states: Vec<f64>,
    /// `y_k - x_k` tracked through the map slopes so that it stays
    /// accurate after the two states agree to the last bit.
    pub gaps: Vec<f64>,
    pub branches: Vec<Branch>,
    pub driver: Driver,
}

/// Advance `x` and `y` together for `n` steps with a shared branch word,
/// calling `visit(k, x_k, y_k, gap_k, ω_k)` where `gap_k = y_k - x_k`.
/// Returns the final `(x, y, gap)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_coupled(
    x: f64,
    y: f64,
    n: usize,
    driver: Driver,
    params: &SystemParams,
    field: &ProbField,
    rng: &mut impl Rng,
    mut visit: impl FnMut(usize, f64, f64, f64, Branch),
) -> (f64, f64, f64) {
    let (mut xs, mut ys, mut gap) = (x, y, y - x);
    for k in 1..=n {
        let d = match driver {
            Driver::X => xs,
            Driver::Y => ys,
        };
        let b = choose(field, d, rng);
        gap = if gap >= 0.0 {
            params.gap_image(b, xs, gap)
        } else {
            -params.gap_image(b, xs + gap, -gap)
        };
        xs = params.image(b, xs);
        ys = params.image(b, ys);
        visit(k, xs, ys, gap, b);
    }
    (xs, ys, gap)
}

pub fn coupled_trajectory(
    x: f64,
    y: f64,
    n: usize,
    driver: Driver,
    params: &SystemParams,
    field: &ProbField,
    rng: &mut impl Rng,
) -> Result<CoupledPair> {
    check_open_unit("x", x)?;
    check_open_unit("y", y)?;
    let mut pair = CoupledPair {
        x_states: vec![x],
        y_states: vec![y],
        gaps: vec![y - x],
        branches: Vec::with_capacity(n),
        driver,
    };
    run_coupled(x, y, n, driver, params, field, rng, |_, xs, ys, gap, b| {
        pair.x_states.push(xs);
        pair.y_states.push(ys);
        pair.gaps.push(gap);
        pair.branches.push(b);
    });
    Ok(pair)
}

/// Number of steps until the first visit to an interval, or a timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HittingTime {
    /// `None` when the cap was reached first.
    pub steps: Option<u64>,
    pub cap: u64,
}

impl HittingTime {
    pub fn timed_out(&self) -> bool {
        self.steps.is_none()
    }
}

/// Least `n >= 1` with `x_n` in `(lo, hi)`, searched up to `cap` steps.
pub fn first_hit(
    x: f64,
    lo: f64,
    hi: f64,
    cap: u64,
    params: &SystemParams,
    field: &ProbField,
    rng: &mut impl Rng,
) -> Result<HittingTime> {
    check_open_unit("x", x)?;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::Parameter(format!("target ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
    }
    if cap == 0 {
        return Err(Error::Parameter("cap must be at least 1".into()));
    }
    let mut z = x;
    for k in 1..=cap {
        let b = choose(field, z, rng);
        z = params.image(b, z);
        if z > lo && z < hi {
            return Ok(HittingTime { steps: Some(k), cap });
        }
    }
    Ok(HittingTime { steps: None, cap })
}

/// Which endpoint an escape estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// A Monte Carlo proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub p_hat: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl Proportion {
    pub fn from_count(hits: u64, samples: u64) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            p_hat: p,
            stderr: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }
}

/// Probability that steps `1..=n` all stay below `epsilon` (left side) or
/// above `1 - epsilon` (right side), starting from `x`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_escape(
    x: f64,
    epsilon: f64,
    n: u64,
    samples: u64,
    side: Side,
    params: &SystemParams,
    field: &ProbField,
    spec: &RngSpec,
) -> Result<Proportion> {
    check_open_unit("x", x)?;
    let inside = |z: f64| match side {
        Side::Left => z < epsilon,
        Side::Right => z > 1.0 - epsilon,
    };
    if !inside(x) {
        return Err(Error::Parameter(format!(
            "start {x} must lie strictly inside the {side:?} boundary layer of width {epsilon}"
        )));
    }
    if samples == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let stayed = ensemble(spec, samples, |_, rng| {
        let mut z = x;
        for _ in 0..n {
            let b = choose(field, z, rng);
            z = params.image(b, z);
            if !inside(z) {
                return false;
            }
        }
        true
    });
    let hits = stayed.iter().filter(|&&s| s).count() as u64;
    Ok(Proportion::from_count(hits, samples))
}

/// Empirical distribution of a sample, stored sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    sorted: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        samples.sort_by(f64::total_cmp);
        Self::from_sorted(samples)
    }

    pub fn from_sorted(sorted: Vec<f64>) -> Result<Self> {
        if sorted.is_empty() {
            return Err(Error::EmptyInput);
        }
        for &s in &sorted {
            check_open_unit("sample", s)?;
        }
        debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        Ok(Self { sorted })
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

pub fn empirical_measure(samples: Vec<f64>) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(samples)
}

impl Measure1d for EmpiricalMeasure {
    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s < x) as f64 / self.sorted.len() as f64
    }

    fn total_mass(&self) -> f64 {
        1.0
    }

    fn mass_from(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        (n - self.sorted.partition_point(|&s| s < x)) as f64 / n as f64
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = self.sorted.clone();
        pts.dedup();
        pts
    }
}
