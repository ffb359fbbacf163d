//! Bowen-ball masses and local pressures of a reference measure.
//!
//! For a point `x`, radius `r` and length `n` the local quantities are
//! `-(1/n) max_{|w|=n} { log mu(B_w(x, r)) - S_w(x) }` (lower) and the same
//! with `min` (upper). Lower and upper local pressures are read off as the
//! negated regression slope of those extremes against `n`, which removes
//! the `log(2r)`-type constant that would otherwise bias a single horizon
//! by `O(1/n)`.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Diagnostic, Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::kernel::{birkhoff_slice, orbit_into, orbits_within};
use crate::pressure::{caratheodory_pressure, PressureEstimate, Schedule};
use crate::sets::{balls_are_arcs, SampleCloud};
use crate::stats::{linear_fit, sig12};
use crate::systems::{MetricMode, SemigroupSystem};
use crate::words::{Symbol, Word};

pub const MIN_SAMPLE_BUDGET: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    /// Lebesgue measure on the circle (or the unit interval).
    LebesgueCircle,
    /// Uniform measure on finitely many atoms.
    EmpiricalOrbit { points: Vec<f64> },
    /// Digits of the base-`weights.len()` expansion drawn independently
    /// with the given probabilities.
    BernoulliCylinder { weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureModel {
    pub kind: MeasureKind,
    /// Monte-Carlo samples per Lebesgue ball.
    pub sample_budget: usize,
}

impl MeasureModel {
    pub fn new(kind: MeasureKind, sample_budget: usize) -> Result<Self> {
        if sample_budget < MIN_SAMPLE_BUDGET {
            return Err(invalid(format!("sample budget must be >= {MIN_SAMPLE_BUDGET}")));
        }
        match &kind {
            MeasureKind::LebesgueCircle => {}
            MeasureKind::EmpiricalOrbit { points } => {
                if points.is_empty() || points.iter().any(|p| !(0.0..1.0).contains(p)) {
                    return Err(invalid("empirical atoms must be nonempty and in [0, 1)"));
                }
            }
            MeasureKind::BernoulliCylinder { weights } => {
                let total: f64 = weights.iter().sum();
                if weights.len() < 2 || weights.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
                    return Err(invalid("cylinder weights must be >= 0, at least two, and sum to 1"));
                }
            }
        }
        Ok(Self { kind, sample_budget })
    }

    pub fn lebesgue(sample_budget: usize) -> Result<Self> {
        Self::new(MeasureKind::LebesgueCircle, sample_budget)
    }
}

/// `mu(B_w(x, r))` with its standard error (zero for exact models).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallMass {
    pub mass: f64,
    pub stderr: f64,
}

impl BallMass {
    pub fn is_zero(&self) -> bool {
        self.mass <= 0.0
    }
}

/// Mass of the closed Bowen ball `B_w(x, r)`. `seed` and `stream` fix the
/// Monte-Carlo draw.
pub fn bowen_ball_mass(
    measure: &MeasureModel,
    system: &SemigroupSystem,
    w: &Word,
    x: f64,
    r: f64,
    seed: u64,
    stream: u64,
) -> Result<BallMass> {
    if !(r > 0.0 && r < 0.5) {
        return Err(invalid(format!("radius must lie in (0, 1/2), got {r}")));
    }
    let mut base = Vec::new();
    orbit_into(system, w.symbols(), x, &mut base);
    let mut buf = Vec::with_capacity(base.len());
    let mut inside = |y: f64| -> bool {
        orbit_into(system, w.symbols(), y, &mut buf);
        orbits_within(system, &base, &buf, r, true)
    };
    match &measure.kind {
        MeasureKind::EmpiricalOrbit { points } => {
            let hits = points.iter().filter(|&&p| inside(p)).count();
            Ok(BallMass {
                mass: hits as f64 / points.len() as f64,
                stderr: 0.0,
            })
        }
        MeasureKind::BernoulliCylinder { weights } => {
            if !balls_are_arcs(system, r) {
                return Err(invalid("exact cylinder masses need balls that are arcs"));
            }
            let (lo, hi) = arc_ends(system, x, r, &mut inside);
            let cdf = |y: f64| bernoulli_cdf(weights, y);
            let mass = match system.metric() {
                MetricMode::Circle if lo < 0.0 => cdf(hi) + 1.0 - cdf(lo + 1.0),
                MetricMode::Circle if hi > 1.0 => cdf(1.0) - cdf(lo) + cdf(hi - 1.0),
                _ => cdf(hi.min(1.0)) - cdf(lo.max(0.0)),
            };
            Ok(BallMass {
                mass: mass.max(0.0),
                stderr: 0.0,
            })
        }
        MeasureKind::LebesgueCircle => Ok(lebesgue_mass(system, x, r, w.len(), measure.sample_budget, seed, stream, &mut inside)),
    }
}

/// Ends of the arc `B_w(x, r)` (unwrapped) by bisection on each side.
fn arc_ends(system: &SemigroupSystem, x: f64, r: f64, inside: &mut impl FnMut(f64) -> bool) -> (f64, f64) {
    let wrap = |y: f64| y.rem_euclid(1.0);
    let bounded = system.metric() == MetricMode::Interval;
    let mut side = |dir: f64| {
        let limit = if bounded {
            if dir > 0.0 {
                (1.0 - x).min(r)
            } else {
                x.min(r)
            }
        } else {
            r
        };
        let (mut a, mut b) = (0.0, limit);
        if inside(wrap(x + dir * b)) {
            return x + dir * b;
        }
        for _ in 0..64 {
            let mid = 0.5 * (a + b);
            if inside(wrap(x + dir * mid)) {
                a = mid;
            } else {
                b = mid;
            }
        }
        x + dir * a
    };
    let hi = side(1.0);
    let lo = side(-1.0);
    (lo, hi)
}

/// `mu([0, y))` for i.i.d. base-k digits with the given weights.
fn bernoulli_cdf(weights: &[f64], y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 1.0;
    }
    let k = weights.len() as f64;
    let mut total = 0.0;
    let mut scale = 1.0;
    let mut rest = y;
    for _ in 0..64 {
        rest *= k;
        let d = (rest.floor() as usize).min(weights.len() - 1);
        rest -= d as f64;
        total += scale * weights[..d].iter().sum::<f64>();
        scale *= weights[d];
        if scale < 1e-18 {
            break;
        }
    }
    total
}

/// Stratified estimate over geometric shells `r 2^-(k+1) < |y - x| <= r 2^-k`
/// on both sides of `x`. Inside radius `r / A^n` (A the largest factor) the
/// ball is counted exactly when both core ends belong to it.
#[allow(clippy::too_many_arguments)]
fn lebesgue_mass(
    system: &SemigroupSystem,
    x: f64,
    r: f64,
    n: usize,
    budget: usize,
    seed: u64,
    stream: u64,
    inside: &mut impl FnMut(f64) -> bool,
) -> BallMass {
    let bounded = system.metric() == MetricMode::Interval;
    let core = r / system.max_factor().max(1.0).powi(n as i32);
    let mut shells: Vec<(f64, f64)> = Vec::new();
    let mut outer = r;
    while outer > core {
        let inner = (0.5 * outer).max(core);
        shells.push((inner, outer));
        outer = inner;
    }
    let core_in = inside((x + core).rem_euclid(1.0)) && inside((x - core).rem_euclid(1.0));
    if !core_in {
        shells.push((0.0, core));
    }
    let per = (budget / (2 * shells.len().max(1))).max(16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut mass = 0.0;
    let mut var = 0.0;
    for dir in [1.0f64, -1.0] {
        if core_in {
            mass += if bounded { clip_len(x, dir, 0.0, core) } else { core };
        }
        for &(a, b) in &shells {
            let len = if bounded { clip_len(x, dir, a, b) } else { b - a };
            if len <= 0.0 {
                continue;
            }
            let hi = a + len;
            let mut hits = 0usize;
            for _ in 0..per {
                let u = rng.gen_range(a..hi);
                if inside((x + dir * u).rem_euclid(1.0)) {
                    hits += 1;
                }
            }
            let p = hits as f64 / per as f64;
            mass += len * p;
            var += len * len * p * (1.0 - p) / per as f64;
        }
    }
    BallMass {
        mass,
        stderr: var.sqrt(),
    }
}

/// Length of `{x + dir u : a < u <= b} ∩ [0, 1]`.
fn clip_len(x: f64, dir: f64, a: f64, b: f64) -> f64 {
    let room = if dir > 0.0 { 1.0 - x } else { x };
    (b.min(room) - a).max(0.0)
}

/// Local extremes at one `(n, r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCell {
    pub n: usize,
    pub r: f64,
    /// `-(1/n) max_w {log mu(B_w) - S_w}`.
    pub lower: f64,
    /// `-(1/n) min_w {log mu(B_w) - S_w}`.
    pub upper: f64,
    pub max_word: String,
    pub min_word: String,
    /// `max_w` and `min_w` of `log mu(B_w) - S_w` themselves.
    pub max_value: f64,
    pub min_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusFit {
    pub r: f64,
    /// Horizons used (truncated at the first zero-mass ball).
    pub horizons: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalPressureReport {
    pub x: f64,
    pub cells: Vec<LocalCell>,
    pub fits: Vec<RadiusFit>,
    /// Lower local pressure at the smallest usable radius.
    pub p_lower: f64,
    /// Upper local pressure at the smallest usable radius.
    pub p_upper: f64,
    /// Values at the largest horizon, smallest radius.
    pub lower_at_horizon: f64,
    pub upper_at_horizon: f64,
    /// Estimates at the two smallest radii differ by more than 0.05.
    pub radius_inconsistent: bool,
    pub flags: Vec<Diagnostic>,
}

impl LocalPressureReport {
    /// `x,n,r,extreme,word,value` rows, `value` being the local quantity.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,n,r,extreme,word,value")?;
        for c in &self.cells {
            writeln!(out, "{},{},{},max_word,{},{}", sig12(self.x), c.n, sig12(c.r), c.max_word, sig12(c.lower))?;
            writeln!(out, "{},{},{},min_word,{},{}", sig12(self.x), c.n, sig12(c.r), c.min_word, sig12(c.upper))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    /// Ascending, at least two.
    pub horizons: Vec<usize>,
    /// Descending.
    pub radii: Vec<f64>,
    pub word_budget: u64,
    pub seed: u64,
    pub exec: Exec,
}

impl LocalOptions {
    pub fn new(horizons: Vec<usize>, radii: Vec<f64>) -> Self {
        Self {
            horizons,
            radii,
            word_budget: 1 << 14,
            seed: 0,
            exec: Exec::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn stream_id(point: u64, n: usize, r_index: usize, word: u64) -> u64 {
    let mut h = point.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= (n as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= (r_index as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^ word.wrapping_mul(0x27D4_EB2F_1656_67C5)
}

/// Local pressures at `x` for the system's potential.
pub fn local_pressure(measure: &MeasureModel, system: &SemigroupSystem, x: f64, opts: &LocalOptions) -> Result<LocalPressureReport> {
    local_pressure_at(measure, system, x, opts, 0)
}

fn local_pressure_at(
    measure: &MeasureModel,
    system: &SemigroupSystem,
    x: f64,
    opts: &LocalOptions,
    point_id: u64,
) -> Result<LocalPressureReport> {
    if opts.horizons.len() < 2 || opts.horizons.windows(2).any(|p| p[0] >= p[1]) || opts.horizons[0] == 0 {
        return Err(invalid("need at least two ascending positive horizons"));
    }
    if opts.radii.is_empty() || opts.radii.windows(2).any(|p| p[0] <= p[1]) {
        return Err(invalid("radii must be nonempty and descending"));
    }
    let alphabet = system.alphabet();
    let mut cells = Vec::new();
    let mut fits = Vec::new();
    let mut flags = Vec::new();
    for (ri, &r) in opts.radii.iter().enumerate() {
        let mut used = Vec::new();
        for &n in &opts.horizons {
            let count = alphabet.word_count(n).filter(|&c| c <= opts.word_budget as u128).ok_or(Error::BudgetExceeded {
                requested: alphabet.word_count(n).unwrap_or(u128::MAX),
                budget: opts.word_budget,
            })?;
            let values = map_indexed(opts.exec, count as usize, |j| -> Result<(f64, Word)> {
                let w = Word::from_index(alphabet, n, j as u128);
                let mass = bowen_ball_mass(measure, system, &w, x, r, opts.seed, stream_id(point_id, n, ri, j as u64))?;
                let s = birkhoff_slice(system, w.symbols(), x);
                Ok((if mass.is_zero() { f64::NEG_INFINITY } else { mass.mass.ln() - s }, w))
            });
            let values: Vec<(f64, Word)> = values.into_iter().collect::<Result<_>>()?;
            if values.iter().any(|(v, _)| *v == f64::NEG_INFINITY) {
                if !flags.contains(&Diagnostic::ZeroMass) {
                    flags.push(Diagnostic::ZeroMass);
                }
                break;
            }
            let (max_v, max_w) = values.iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
            let (min_v, min_w) = values.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
            cells.push(LocalCell {
                n,
                r,
                lower: -max_v / n as f64,
                upper: -min_v / n as f64,
                max_word: max_w.to_string(),
                min_word: min_w.to_string(),
                max_value: *max_v,
                min_value: *min_v,
            });
            used.push(n);
        }
        if used.len() >= 2 {
            let at: Vec<&LocalCell> = cells.iter().filter(|c| c.r == r).collect();
            let xs: Vec<f64> = at.iter().map(|c| c.n as f64).collect();
            let lo: Vec<f64> = at.iter().map(|c| c.max_value).collect();
            let hi: Vec<f64> = at.iter().map(|c| c.min_value).collect();
            let fl = linear_fit(&xs, &lo).ok_or_else(|| Error::Numerical("local slope".into()))?;
            let fu = linear_fit(&xs, &hi).ok_or_else(|| Error::Numerical("local slope".into()))?;
            fits.push(RadiusFit {
                r,
                horizons: used,
                lower: -fl.slope,
                upper: -fu.slope,
            });
        }
    }
    let last = fits.last().ok_or_else(|| Error::Numerical("no radius has two usable horizons".into()))?;
    let radius_inconsistent = fits.len() >= 2 && {
        let prev = &fits[fits.len() - 2];
        (last.lower - prev.lower).abs() > 0.05 || (last.upper - prev.upper).abs() > 0.05
    };
    if radius_inconsistent {
        flags.push(Diagnostic::Nonmonotone);
    }
    let final_cell = cells.iter().filter(|c| c.r == last.r).last().expect("fit has cells");
    Ok(LocalPressureReport {
        x,
        p_lower: last.lower,
        p_upper: last.upper,
        lower_at_horizon: final_cell.lower,
        upper_at_horizon: final_cell.upper,
        radius_inconsistent,
        fits,
        cells,
        flags,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub points: Vec<f64>,
    pub inf_lower: f64,
    pub sup_upper: f64,
    pub pressure: f64,
    pub tol: f64,
    pub pass: bool,
    pub reports: Vec<LocalPressureReport>,
    pub estimate: PressureEstimate,
}

/// Checks `inf_x P_lower(x) - tol <= P <= sup_x P_upper(x) + tol` with `P`
/// the center-of-ball pressure of the cloud and `x` running over
/// `n_points` evenly spaced cloud points.
pub fn sandwich_check(
    measure: &MeasureModel,
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    schedule: &Schedule,
    local: &LocalOptions,
    n_points: usize,
    tol: f64,
) -> Result<SandwichReport> {
    if n_points == 0 {
        return Err(invalid("need at least one sample point"));
    }
    let step = (cloud.len() / n_points).max(1);
    let points: Vec<f64> = (0..cloud.len()).step_by(step).take(n_points).map(|p| cloud.sorted_point(p)).collect();
    let reports: Vec<LocalPressureReport> = points
        .iter()
        .enumerate()
        .map(|(i, &x)| local_pressure_at(measure, system, x, local, i as u64))
        .collect::<Result<_>>()?;
    let inf_lower = reports.iter().map(|r| r.p_lower).fold(f64::INFINITY, f64::min);
    let sup_upper = reports.iter().map(|r| r.p_upper).fold(f64::NEG_INFINITY, f64::max);
    let estimate = caratheodory_pressure(system, cloud, schedule)?;
    let pressure = estimate.value;
    Ok(SandwichReport {
        pass: inf_lower - tol <= pressure && pressure <= sup_upper + tol,
        points,
        inf_lower,
        sup_upper,
        pressure,
        tol,
        reports,
        estimate,
    })
}

#[doc(hidden)]
pub fn symbol_word(system: &SemigroupSystem, symbols: &[Symbol]) -> Result<Word> {
    Word::new(system.alphabet(), symbols.to_vec())
}
