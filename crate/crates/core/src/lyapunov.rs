//! Lyapunov averages along words, finite-horizon envelopes over all words,
//! and the tempered contraction margin.
//!
//! Everything here uses the geometric potential `log a_i` regardless of the
//! potentials attached to the system.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::systems::{MapKind, SemigroupSystem};
use crate::words::{sample_word, Symbol, Word};

/// Default cap `M_cap` on how negative the tempered margin may be for the
/// `in_B` surrogate.
pub const DEFAULT_M_CAP: f64 = 1.0;

/// Default number of tree nodes visited exhaustively.
pub const DEFAULT_WORD_BUDGET: u64 = 1 << 20;

/// `lambda_w(x) = S_w(log a)(x) / |w|`.
pub fn lyapunov_word(system: &SemigroupSystem, w: &Word, x: f64) -> f64 {
    let mut y = x;
    let mut s = 0.0;
    for &i in w.symbols() {
        s += system.log_factor(i, y);
        y = system.step(i, y);
    }
    s / w.len() as f64
}

/// Extremes over words of one length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub n: usize,
    /// `min_w lambda_w(x)`.
    pub min: f64,
    /// `max_w lambda_w(x)`.
    pub max: f64,
    /// `min_w (S_w - max_{k <= n} S_{w|k})` of the log-factor sums, the
    /// epsilon-free part of the tempered margin.
    pub min_drop: f64,
    pub words: u64,
    pub exhaustive: bool,
}

impl LengthStats {
    fn new(n: usize) -> Self {
        Self {
            n,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            min_drop: f64::INFINITY,
            words: 0,
            exhaustive: true,
        }
    }

    fn record(&mut self, sum: f64, peak: f64) {
        let lam = sum / self.n as f64;
        self.min = self.min.min(lam);
        self.max = self.max.max(lam);
        self.min_drop = self.min_drop.min(sum - peak);
        self.words += 1;
    }
}

/// Per-length statistics for `n = 1..=n_max`. Lengths whose subtree fits in
/// `word_budget` are exhausted depth-first; longer ones use `word_budget`
/// seeded random words (a sample can only narrow the true envelope).
pub fn length_stats(system: &SemigroupSystem, x: f64, n_max: usize, word_budget: u64, seed: u64) -> Result<Vec<LengthStats>> {
    if n_max == 0 {
        return Err(invalid("horizon must be >= 1"));
    }
    if word_budget == 0 {
        return Err(invalid("word budget must be >= 1"));
    }
    let alphabet = system.alphabet();
    let mut stats: Vec<LengthStats> = (1..=n_max).map(LengthStats::new).collect();
    let mut visited: u128 = 0;
    let mut depth = 0;
    while depth < n_max {
        let next = alphabet.word_count(depth + 1).unwrap_or(u128::MAX);
        if visited.saturating_add(next) > word_budget as u128 {
            break;
        }
        visited += next;
        depth += 1;
    }
    if depth > 0 {
        walk(system, x, depth, &mut stats);
    }
    if depth < n_max {
        for j in 0..word_budget {
            let w = sample_word(alphabet, n_max, seed, j);
            let (mut y, mut sum, mut peak) = (x, 0.0f64, 0.0f64);
            for (k, &i) in w.symbols().iter().enumerate() {
                sum += system.log_factor(i, y);
                y = system.step(i, y);
                peak = peak.max(sum);
                if k >= depth {
                    stats[k].record(sum, peak);
                    stats[k].exhaustive = false;
                }
            }
        }
    }
    Ok(stats)
}

fn walk(system: &SemigroupSystem, x: f64, depth: usize, stats: &mut [LengthStats]) {
    // explicit stack of (depth, point, sum, running max)
    let m = system.m() as Symbol;
    let mut stack = vec![(0usize, x, 0.0f64, 0.0f64)];
    while let Some((d, y, sum, peak)) = stack.pop() {
        if d == depth {
            continue;
        }
        for i in (0..m).rev() {
            let s = sum + system.log_factor(i, y);
            let p = peak.max(s);
            stats[d].record(s, p);
            stack.push((d + 1, system.step(i, y), s, p));
        }
    }
}

/// Per-length `(min, max)` of `lambda_w(x)` over `|w| = n <= n_max`.
pub fn lyapunov_envelope(
    system: &SemigroupSystem,
    x: f64,
    n_max: usize,
    word_budget: u64,
    seed: u64,
) -> Result<Vec<(usize, f64, f64)>> {
    Ok(length_stats(system, x, n_max, word_budget, seed)?
        .into_iter()
        .map(|s| (s.n, s.min, s.max))
        .collect())
}

/// Finite-horizon tempered contraction margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperedMargin {
    pub eps: f64,
    /// `min_{|w| = n} min_k (S_w - S_{w|k} + n eps)` for `n = 1..=n_max`.
    pub per_length: Vec<f64>,
    /// Minimum over all lengths.
    pub margin: f64,
}

impl TemperedMargin {
    fn from_stats(stats: &[LengthStats], eps: f64) -> Self {
        let per_length: Vec<f64> = stats.iter().map(|s| s.min_drop + s.n as f64 * eps).collect();
        let margin = per_length.iter().copied().fold(f64::INFINITY, f64::min);
        Self { eps, per_length, margin }
    }
}

/// Minimum over words `w` with `|w| <= n_max` and every prefix `w'` of `w`
/// (the empty one included) of `S_w(log a)(x) - S_{w'}(log a)(x) + |w| eps`.
pub fn tempered_margin(system: &SemigroupSystem, x: f64, eps: f64, n_max: usize) -> Result<TemperedMargin> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let stats = length_stats(system, x, n_max, DEFAULT_WORD_BUDGET, 0)?;
    Ok(TemperedMargin::from_stats(&stats, eps))
}

/// Analytic membership known for built-in families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub in_a_positive: Option<bool>,
    pub in_b: Option<bool>,
    pub basis: String,
}

/// All factors `>= 1` puts every point in `B`. Constant slopes `> 1` give
/// every point positive exponents; a Manneville-Pomeau generator fixes 0
/// with factor 1, so 0 is the only excluded point.
pub fn certificate(system: &SemigroupSystem, x: f64) -> Certificate {
    let maps = system.maps();
    let all_ge_one = maps.iter().all(|m| m.inf_factor() >= 1.0);
    let constant_expanding = |m: &crate::systems::ConformalMap| m.has_constant_factor() && m.inf_factor() > 1.0;
    let any_pomeau = maps.iter().any(|m| matches!(m.kind(), MapKind::MannevillePomeau { .. }));
    let pomeau_or_expanding = maps
        .iter()
        .all(|m| constant_expanding(m) || matches!(m.kind(), MapKind::MannevillePomeau { .. }));
    let (in_a_positive, basis) = if maps.iter().all(constant_expanding) {
        (Some(true), "constant expanding slopes")
    } else if pomeau_or_expanding && any_pomeau {
        (Some(x != 0.0), "indifferent fixed point at 0 only")
    } else if maps.iter().all(|m| m.has_constant_factor()) && maps.iter().any(|m| m.inf_factor() <= 1.0) {
        (Some(false), "a generator with unit slope")
    } else {
        (None, "no analytic certificate")
    };
    Certificate {
        in_a_positive,
        in_b: all_ge_one.then_some(true),
        basis: basis.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub n_max: usize,
    /// Threshold on the lower envelope.
    pub tau: f64,
    /// Scale used for the tempered margin; defaults to `tau`.
    pub eps: Option<f64>,
    pub m_cap: f64,
    pub word_budget: u64,
    pub seed: u64,
}

impl ClassifyOptions {
    pub fn new(n_max: usize, tau: f64) -> Self {
        Self {
            n_max,
            tau,
            eps: None,
            m_cap: DEFAULT_M_CAP,
            word_budget: DEFAULT_WORD_BUDGET,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub x: f64,
    pub n_max: usize,
    pub tau: f64,
    pub per_length: Vec<LengthStats>,
    pub margin: TemperedMargin,
    /// Lower envelope at the horizon exceeds `tau`.
    pub in_a_positive: bool,
    /// Envelope `[min, max]` at the horizon when `in_a_positive`.
    pub a_interval: Option<(f64, f64)>,
    /// Margin at the horizon is at least `-m_cap`.
    pub in_b: bool,
    pub margin_nondecreasing: bool,
    pub certificate: Certificate,
}

/// Finite-horizon surrogates for membership of `x` in `A((0, inf))` and
/// `B`, with the horizon recorded.
pub fn classify_point(system: &SemigroupSystem, x: f64, n_max: usize, tau: f64) -> Result<LyapunovReport> {
    classify_point_with(system, x, &ClassifyOptions::new(n_max, tau))
}

pub fn classify_point_with(system: &SemigroupSystem, x: f64, opts: &ClassifyOptions) -> Result<LyapunovReport> {
    if !(opts.tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    let stats = length_stats(system, x, opts.n_max, opts.word_budget, opts.seed)?;
    let margin = TemperedMargin::from_stats(&stats, opts.eps.unwrap_or(opts.tau));
    let last = stats.last().expect("n_max >= 1");
    let in_a_positive = last.min > opts.tau;
    let at_horizon = *margin.per_length.last().expect("n_max >= 1");
    let margin_nondecreasing = margin.per_length.windows(2).all(|p| p[1] >= p[0] - 1e-12);
    Ok(LyapunovReport {
        x,
        n_max: opts.n_max,
        tau: opts.tau,
        in_a_positive,
        a_interval: in_a_positive.then_some((last.min, last.max)),
        in_b: at_horizon >= -opts.m_cap,
        margin_nondecreasing,
        certificate: certificate(system, x),
        per_length: stats,
        margin,
    })
}
