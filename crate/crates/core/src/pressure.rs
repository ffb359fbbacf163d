//! Word-averaged partition sums and the pressures built from them.
//!
//! The potential is whatever the [`SemigroupSystem`] carries. For a word
//! `w` of length `n` and scale `eps`:
//!
//! * `Q_w` is a spanning sum `sum_{x in E} exp(S_w(x))` over a greedy
//!   spanning set `E` (an upper bound for the infimum),
//! * `P_w` is the same sum over a greedy maximal separated set (a lower
//!   bound for the supremum).
//!
//! Averages over all `m^n` words (or a seeded Monte-Carlo sample) are
//! regressed in log scale against `n`; the slope at the smallest resolved
//! scale is the pressure estimate.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Diagnostic, Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::sets::{
    arc_cover, check_eps, greedy_spanning_positions, is_resolved, maximal_separated_in_order, maximal_separated_positions,
    min_weight_cover, separation_order, Balls,
    SampleCloud, WordOrbits,
};
use crate::stats::{increments, linear_fit, log_sum_exp, mean_stderr, sig12};
use crate::systems::{Potential, SemigroupSystem};
use crate::words::{sample_word, Symbol, Word};

pub const DEFAULT_RESOLUTION_FACTOR: f64 = 4.0;

/// Grid size used to estimate the potential's modulus of continuity.
const MODULUS_GRID: usize = 1 << 14;

fn default_budget() -> u64 {
    1 << 14
}
fn default_mc() -> usize {
    512
}
fn default_resolution_factor() -> f64 {
    DEFAULT_RESOLUTION_FACTOR
}
fn default_consistency() -> f64 {
    0.05
}
fn default_extension() -> usize {
    2
}
fn default_alpha_tol() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}

/// Word lengths, scales and sampling controls shared by every estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Ascending, all >= 2.
    pub word_lengths: Vec<usize>,
    /// Descending, all > 0. Also used as the Bowen-ball radius `delta`.
    pub epsilons: Vec<f64>,
    /// Largest `m^n` averaged exhaustively.
    #[serde(default = "default_budget")]
    pub word_budget: u64,
    /// Words sampled per length above the budget.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
    /// A cell is resolved when `h * factor <= eps * max_a^(-n)`.
    #[serde(default = "default_resolution_factor")]
    pub resolution_factor: f64,
    /// Allowed slope difference between the two smallest scales.
    #[serde(default = "default_consistency")]
    pub consistency_tol: f64,
    /// Extra word length `L` allowed in center-of-ball covers.
    #[serde(default = "default_extension")]
    pub extension: usize,
    #[serde(default = "default_alpha_tol")]
    pub alpha_tol: f64,
    /// Check `P_w(eps) <= exp(n * modulus) * Q_w(eps / 2)` for every word.
    #[serde(default = "default_true")]
    pub check_sandwich: bool,
}

impl Schedule {
    pub fn new(word_lengths: Vec<usize>, epsilons: Vec<f64>) -> Self {
        Self {
            word_lengths,
            epsilons,
            word_budget: default_budget(),
            mc_samples: default_mc(),
            seed: 0,
            exec: Exec::default(),
            resolution_factor: DEFAULT_RESOLUTION_FACTOR,
            consistency_tol: default_consistency(),
            extension: default_extension(),
            alpha_tol: default_alpha_tol(),
            check_sandwich: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_budget(mut self, word_budget: u64, mc_samples: usize) -> Self {
        self.word_budget = word_budget;
        self.mc_samples = mc_samples;
        self
    }

    pub fn with_extension(mut self, extension: usize) -> Self {
        self.extension = extension;
        self
    }

    pub fn without_sandwich(mut self) -> Self {
        self.check_sandwich = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_lengths.is_empty() || self.epsilons.is_empty() {
            return Err(invalid("schedule needs word lengths and scales"));
        }
        if self.word_lengths.iter().any(|&n| n < 2) {
            return Err(invalid("word lengths must be >= 2"));
        }
        if self.word_lengths.windows(2).any(|p| p[0] >= p[1]) {
            return Err(invalid("word lengths must be strictly ascending"));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(invalid("scales must be positive"));
        }
        if self.epsilons.windows(2).any(|p| p[0] <= p[1]) {
            return Err(invalid("scales must be strictly descending"));
        }
        if self.mc_samples == 0 {
            return Err(invalid("mc_samples must be >= 1"));
        }
        if !(self.resolution_factor > 0.0) {
            return Err(invalid("resolution factor must be positive"));
        }
        Ok(())
    }

    fn needs_three(&self) -> Result<()> {
        self.validate()?;
        if self.word_lengths.len() < 3 {
            return Err(invalid("pressure estimates need at least 3 word lengths"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Spanning,
    Separated,
    Caratheodory,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Spanning => "spanning",
            Variant::Separated => "separated",
            Variant::Caratheodory => "caratheodory",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    Exhaustive,
    MonteCarlo,
}

/// Partition sum of one word at one scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WordSum {
    pub log_sum: f64,
    /// Number of points in the chosen set.
    pub size: usize,
    pub resolved: bool,
}

/// Spanning sum `Q_w`: the smaller of the greedy-spanning and the maximal
/// separated sum (both sets span the cloud).
pub fn partition_sum_spanning(system: &SemigroupSystem, cloud: &SampleCloud, w: &Word, eps: f64) -> Result<WordSum> {
    check_eps(eps)?;
    let orbits = WordOrbits::new(system, cloud, w.symbols());
    let balls = orbits.balls(eps, false);
    let order = separation_order(orbits.sums());
    let (q, _, size) = spanning_and_separated(&balls, orbits.sums(), &order);
    Ok(WordSum {
        log_sum: q,
        size,
        resolved: is_resolved(system, cloud, w.len(), eps, DEFAULT_RESOLUTION_FACTOR),
    })
}

/// Separated sum `P_w` over a greedy maximal separated set.
pub fn partition_sum_separated(system: &SemigroupSystem, cloud: &SampleCloud, w: &Word, eps: f64) -> Result<WordSum> {
    check_eps(eps)?;
    let orbits = WordOrbits::new(system, cloud, w.symbols());
    let sep = maximal_separated_positions(&orbits.balls(eps, false), orbits.sums());
    Ok(WordSum {
        log_sum: sum_over(&sep, orbits.sums()),
        size: sep.len(),
        resolved: is_resolved(system, cloud, w.len(), eps, DEFAULT_RESOLUTION_FACTOR),
    })
}

fn sum_over(positions: &[usize], sums: &[f64]) -> f64 {
    let vals: Vec<f64> = positions.iter().map(|&p| sums[p]).collect();
    log_sum_exp(&vals)
}

/// `(log Q_w, log P_w, |spanning set used|)`.
/// Least spanning sum found by covering: the exact interval cover for arc
/// balls, greedy set cover otherwise. Returns `(log sum, set size)`.
fn cover_sum(balls: &Balls, sums: &[f64]) -> (f64, usize) {
    match arc_cover(&[balls], &[sums.to_vec()]) {
        Some(found) => found,
        None => {
            let span = greedy_spanning_positions(balls, sums);
            (sum_over(&span, sums), span.len())
        }
    }
}

/// `(log Q_w, log P_w, |spanning set|)`. A maximal separated set also
/// spans, so `Q_w` is the smaller of the cover sum and `P_w`.
fn spanning_and_separated(balls: &Balls, sums: &[f64], order: &[usize]) -> (f64, f64, usize) {
    let sep = maximal_separated_in_order(balls, order);
    let p = sum_over(&sep, sums);
    let (c, size) = cover_sum(balls, sums);
    if c < p {
        (c, p, size)
    } else {
        (p, p, sep.len())
    }
}

/// `log` of a word average with its standard error (in log units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogAverage {
    pub log_avg: f64,
    pub stderr: f64,
}

fn log_average(logs: &[f64], mode: AveragingMode) -> LogAverage {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_avg = log_sum_exp(logs) - (logs.len() as f64).ln();
    let stderr = match mode {
        AveragingMode::Exhaustive => 0.0,
        AveragingMode::MonteCarlo => {
            let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let (mean, se) = mean_stderr(&scaled);
            se / mean
        }
    };
    LogAverage { log_avg, stderr }
}

/// Averaged spanning and separated sums at one `(n, eps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCell {
    pub n: usize,
    pub eps: f64,
    pub n_words: u64,
    pub mode: AveragingMode,
    pub spanning: LogAverage,
    pub separated: LogAverage,
    pub resolved: bool,
    /// Words failing `Q_w <= P_w <= exp(n * modulus) * Q_w(eps / 2)`.
    pub sandwich_violations: u64,
}

impl PartitionCell {
    pub fn get(&self, variant: Variant) -> LogAverage {
        match variant {
            Variant::Separated => self.separated,
            _ => self.spanning,
        }
    }
}

/// All cells of a schedule, ordered by word length then scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTable {
    pub cells: Vec<PartitionCell>,
}

impl PartitionTable {
    pub fn cell(&self, n: usize, eps: f64) -> Option<&PartitionCell> {
        self.cells.iter().find(|c| c.n == n && c.eps == eps)
    }

    pub fn sandwich_violations(&self) -> u64 {
        self.cells.iter().map(|c| c.sandwich_violations).sum()
    }
}

/// Words averaged at length `n`: all of them, or a seeded sample.
pub(crate) fn words_for(system: &SemigroupSystem, n: usize, schedule: &Schedule) -> (AveragingMode, Vec<Word>) {
    let alphabet = system.alphabet();
    match alphabet.word_count(n) {
        Some(count) if count <= schedule.word_budget as u128 => (
            AveragingMode::Exhaustive,
            (0..count).map(|i| Word::from_index(alphabet, n, i)).collect(),
        ),
        _ => {
            let seed = length_seed(schedule.seed, n);
            let words = (0..schedule.mc_samples)
                .map(|j| sample_word(alphabet, n, seed, j as u64))
                .collect();
            (AveragingMode::MonteCarlo, words)
        }
    }
}

fn length_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct WordCells {
    log_q: Vec<f64>,
    log_p: Vec<f64>,
    sandwich_ok: Vec<bool>,
}

fn word_cells(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    word: &[Symbol],
    epsilons: &[f64],
    moduli: Option<&[f64]>,
) -> WordCells {
    let orbits = WordOrbits::new(system, cloud, word);
    let order = separation_order(orbits.sums());
    let n = word.len() as f64;
    let mut out = WordCells {
        log_q: Vec::with_capacity(epsilons.len()),
        log_p: Vec::with_capacity(epsilons.len()),
        sandwich_ok: Vec::with_capacity(epsilons.len()),
    };
    for (k, &eps) in epsilons.iter().enumerate() {
        let (q, p, _) = spanning_and_separated(&orbits.balls(eps, false), orbits.sums(), &order);
        let mut ok = q <= p;
        if let Some(moduli) = moduli {
            let (q_half, _) = cover_sum(&orbits.balls(0.5 * eps, false), orbits.sums());
            let bound = q_half + n * moduli[k];
            ok &= p <= bound + 1e-9 * bound.abs().max(1.0);
        }
        out.log_q.push(q);
        out.log_p.push(p);
        out.sandwich_ok.push(ok);
    }
    out
}

/// Averaged spanning and separated sums for every `(n, eps)` of the schedule.
pub fn partition_table(system: &SemigroupSystem, cloud: &SampleCloud, schedule: &Schedule) -> Result<PartitionTable> {
    schedule.validate()?;
    let moduli: Option<Vec<f64>> = schedule.check_sandwich.then(|| {
        schedule
            .epsilons
            .iter()
            .map(|&e| system.potential_modulus(0.5 * e, MODULUS_GRID))
            .collect()
    });
    let mut cells = Vec::new();
    for &n in &schedule.word_lengths {
        let (mode, words) = words_for(system, n, schedule);
        let per_word = map_indexed(schedule.exec, words.len(), |j| {
            word_cells(system, cloud, words[j].symbols(), &schedule.epsilons, moduli.as_deref())
        });
        for (k, &eps) in schedule.epsilons.iter().enumerate() {
            let q: Vec<f64> = per_word.iter().map(|c| c.log_q[k]).collect();
            let p: Vec<f64> = per_word.iter().map(|c| c.log_p[k]).collect();
            cells.push(PartitionCell {
                n,
                eps,
                n_words: words.len() as u64,
                mode,
                spanning: log_average(&q, mode),
                separated: log_average(&p, mode),
                resolved: is_resolved(system, cloud, n, eps, schedule.resolution_factor),
                sandwich_violations: per_word.iter().filter(|c| !c.sandwich_ok[k]).count() as u64,
            });
        }
    }
    Ok(PartitionTable { cells })
}

/// Word average of `Q_w` or `P_w` at a single `(n, eps)`.
pub fn averaged_partition(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    n: usize,
    eps: f64,
    schedule: &Schedule,
    variant: Variant,
) -> Result<PartitionCell> {
    if n == 0 {
        return Err(invalid("word length must be >= 1"));
    }
    check_eps(eps)?;
    let single = Schedule {
        word_lengths: vec![n.max(2)],
        epsilons: vec![eps],
        check_sandwich: false,
        ..schedule.clone()
    };
    if variant == Variant::Caratheodory {
        return Err(invalid("averaged partition sums are spanning or separated"));
    }
    let (mode, words) = words_for(system, n, &single);
    let per_word = map_indexed(single.exec, words.len(), |j| {
        word_cells(system, cloud, words[j].symbols(), &single.epsilons, None)
    });
    let q: Vec<f64> = per_word.iter().map(|c| c.log_q[0]).collect();
    let p: Vec<f64> = per_word.iter().map(|c| c.log_p[0]).collect();
    Ok(PartitionCell {
        n,
        eps,
        n_words: words.len() as u64,
        mode,
        spanning: log_average(&q, mode),
        separated: log_average(&p, mode),
        resolved: is_resolved(system, cloud, n, eps, single.resolution_factor),
        sandwich_violations: per_word.iter().filter(|c| !c.sandwich_ok[0]).count() as u64,
    })
}

/// One CSV row of an estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub variant: Variant,
    pub n: usize,
    pub eps: f64,
    pub n_words: u64,
    pub log_avg_sum: f64,
    pub stderr: f64,
    pub resolved: bool,
}

/// Regression of `log(average sum)` on `n` at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub eps: f64,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Smallest and largest successive increment in `n`.
    pub liminf: f64,
    pub limsup: f64,
    pub resolved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub variant: Variant,
    /// Slope at the smallest resolved scale, in nats.
    pub value: f64,
    pub eps_used: f64,
    pub per_cell: Vec<CellRow>,
    pub fits: Vec<ScaleFit>,
    pub mode: AveragingMode,
    pub flags: Vec<Diagnostic>,
    /// Center-of-ball estimates only: the `alpha` at which the averaged
    /// cover sum at the largest word length equals 1.
    pub crossing: Option<f64>,
}

impl PressureEstimate {
    pub(crate) fn from_rows(variant: Variant, rows: Vec<CellRow>, epsilons: &[f64], consistency_tol: f64) -> Result<Self> {
        let mut fits = Vec::new();
        for &eps in epsilons {
            let at: Vec<&CellRow> = rows.iter().filter(|r| r.eps == eps).collect();
            let xs: Vec<f64> = at.iter().map(|r| r.n as f64).collect();
            let ys: Vec<f64> = at.iter().map(|r| r.log_avg_sum).collect();
            let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::Numerical(format!("cannot fit slope at eps {eps}")))?;
            let inc = increments(&xs, &ys);
            fits.push(ScaleFit {
                eps,
                slope: fit.slope,
                intercept: fit.intercept,
                residual: fit.residual,
                liminf: inc.iter().copied().fold(f64::INFINITY, f64::min),
                limsup: inc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                resolved: at.iter().all(|r| r.resolved),
            });
        }
        Ok(Self::from_fits(variant, rows, fits, consistency_tol))
    }

    fn from_fits(variant: Variant, per_cell: Vec<CellRow>, fits: Vec<ScaleFit>, consistency_tol: f64) -> Self {
        let mut flags = Vec::new();
        let resolved: Vec<&ScaleFit> = fits.iter().filter(|f| f.resolved).collect();
        let used = match resolved.last() {
            Some(f) => *f,
            None => {
                flags.push(Diagnostic::Unresolved);
                fits.last().expect("at least one scale")
            }
        };
        if resolved.len() >= 2 {
            let a = resolved[resolved.len() - 1].slope;
            let b = resolved[resolved.len() - 2].slope;
            if (a - b).abs() > consistency_tol {
                flags.push(Diagnostic::Nonmonotone);
            }
        }
        let mode = AveragingMode::Exhaustive;
        let (value, eps_used) = (used.slope, used.eps);
        Self {
            variant,
            value,
            eps_used,
            per_cell,
            fits,
            mode,
            flags,
            crossing: None,
        }
    }

    fn with_mode(mut self, mode: AveragingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn fit_at(&self, eps: f64) -> Option<&ScaleFit> {
        self.fits.iter().find(|f| f.eps == eps)
    }

    pub fn has_flag(&self, flag: Diagnostic) -> bool {
        self.flags.contains(&flag)
    }

    /// Per-cell CSV: `variant,N,epsilon,n_words,log_avg_sum,stderr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "variant,N,epsilon,n_words,log_avg_sum,stderr")?;
        for r in &self.per_cell {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.variant,
                r.n,
                sig12(r.eps),
                r.n_words,
                sig12(r.log_avg_sum),
                sig12(r.stderr)
            )?;
        }
        Ok(())
    }
}

/// Builds the estimate for one variant from an already computed table.
pub fn estimate_from_table(table: &PartitionTable, schedule: &Schedule, variant: Variant) -> Result<PressureEstimate> {
    if variant == Variant::Caratheodory {
        return Err(invalid("center-of-ball estimates are not built from partition tables"));
    }
    let rows: Vec<CellRow> = table
        .cells
        .iter()
        .map(|c| {
            let v = c.get(variant);
            CellRow {
                variant,
                n: c.n,
                eps: c.eps,
                n_words: c.n_words,
                log_avg_sum: v.log_avg,
                stderr: v.stderr,
                resolved: c.resolved,
            }
        })
        .collect();
    let mode = if table.cells.iter().any(|c| c.mode == AveragingMode::MonteCarlo) {
        AveragingMode::MonteCarlo
    } else {
        AveragingMode::Exhaustive
    };
    let mut est = PressureEstimate::from_rows(variant, rows, &schedule.epsilons, schedule.consistency_tol)?.with_mode(mode);
    if table.sandwich_violations() > 0 {
        est.flags.push(Diagnostic::SandwichViolated);
    }
    Ok(est)
}

/// Capacity pressure of the system's potential on the cloud.
pub fn capacity_pressure(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    schedule: &Schedule,
    variant: Variant,
) -> Result<PressureEstimate> {
    schedule.needs_three()?;
    let table = partition_table(system, cloud, schedule)?;
    estimate_from_table(&table, schedule, variant)
}

/// Topological entropy: capacity pressure of the zero potential.
pub fn entropy(system: &SemigroupSystem, cloud: &SampleCloud, schedule: &Schedule) -> Result<PressureEstimate> {
    capacity_pressure(&system.with_potential(Potential::Zero), cloud, schedule, Variant::Spanning)
}

/// `log M'_w(alpha)` for every scale and trial `alpha`, indexed `[delta][alpha]`.
fn cover_sums_for_word(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    word: &[Symbol],
    deltas: &[f64],
    extension: usize,
    alphas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let alphabet = system.alphabet();
    let mut extended: Vec<Vec<Symbol>> = Vec::new();
    for len in 0..=extension {
        let count = alphabet.word_count(len).unwrap_or(u128::MAX);
        for i in 0..count {
            let mut w = word.to_vec();
            if len > 0 {
                w.extend_from_slice(Word::from_index(alphabet, len, i).symbols());
            }
            extended.push(w);
        }
    }
    let orbits: Vec<WordOrbits> = extended.iter().map(|w| WordOrbits::new(system, cloud, w)).collect();
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let families: Vec<Balls> = orbits.iter().map(|o| o.balls(delta, true)).collect();
        let refs: Vec<&Balls> = families.iter().collect();
        let mut row = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let weights: Vec<Vec<f64>> = orbits
                .iter()
                .map(|o| {
                    let len = o.word().len() as f64;
                    o.sums().iter().map(|s| s - alpha * len).collect()
                })
                .collect();
            row.push(min_weight_cover(&refs, &weights)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Averaged `log M'(n, delta, alpha)`, indexed `[n][delta][alpha]`.
fn averaged_cover_sums(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    schedule: &Schedule,
    alphas: &[f64],
) -> Result<(Vec<Vec<Vec<f64>>>, AveragingMode, Vec<u64>)> {
    let mut table = Vec::new();
    let mut mode = AveragingMode::Exhaustive;
    let mut counts = Vec::new();
    for &n in &schedule.word_lengths {
        let (m, words) = words_for(system, n, schedule);
        if m == AveragingMode::MonteCarlo {
            mode = m;
        }
        counts.push(words.len() as u64);
        let per_word = map_indexed(schedule.exec, words.len(), |j| {
            cover_sums_for_word(system, cloud, words[j].symbols(), &schedule.epsilons, schedule.extension, alphas)
        });
        let per_word: Vec<Vec<Vec<f64>>> = per_word.into_iter().collect::<Result<_>>()?;
        let k = (words.len() as f64).ln();
        let at_n: Vec<Vec<f64>> = (0..schedule.epsilons.len())
            .map(|d| {
                (0..alphas.len())
                    .map(|a| {
                        let logs: Vec<f64> = per_word.iter().map(|w| w[d][a]).collect();
                        log_sum_exp(&logs) - k
                    })
                    .collect()
            })
            .collect();
        table.push(at_n);
    }
    Ok((table, mode, counts))
}

/// First downward zero crossing of `ys` over the ascending grid `xs`,
/// linearly interpolated.
fn zero_crossing(xs: &[f64], ys: &[f64]) -> Option<(usize, f64)> {
    (0..xs.len().saturating_sub(1)).find_map(|k| {
        let (a, b) = (ys[k], ys[k + 1]);
        if a >= 0.0 && b <= 0.0 {
            let t = if a == b { 0.0 } else { a / (a - b) };
            Some((k, xs[k] + t * (xs[k + 1] - xs[k])))
        } else {
            None
        }
    })
}

/// Pressure from center-of-ball covers. For each trial `alpha` the cloud is
/// covered greedily by closed Bowen balls `B_{wu}(x, delta)` with
/// `|u| <= extension`, weighted by `exp(-alpha |wu| + S_{wu}(x))`. The
/// estimate is the `alpha` at which the averaged cover sum stops growing
/// or decaying in `n` (regression slope zero), located by successively
/// refined grids.
pub fn caratheodory_pressure(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    schedule: &Schedule,
) -> Result<PressureEstimate> {
    schedule.needs_three()?;
    let xs: Vec<f64> = schedule.word_lengths.iter().map(|&n| n as f64).collect();
    let nd = schedule.epsilons.len();
    let slopes_at = |table: &Vec<Vec<Vec<f64>>>, d: usize, a: usize| -> Result<f64> {
        let ys: Vec<f64> = table.iter().map(|at_n| at_n[d][a]).collect();
        linear_fit(&xs, &ys)
            .map(|f| f.slope)
            .ok_or_else(|| Error::Numerical("cannot fit cover-sum slope".into()))
    };

    // The slope in n is close to P - alpha, so alpha = 0 gives a first guess.
    let (first, _, _) = averaged_cover_sums(system, cloud, schedule, &[0.0])?;
    let mut center = slopes_at(&first, nd - 1, 0)?;
    let mut step = 0.1;
    let mut roots: Vec<Option<f64>> = vec![None; nd];
    let mut last;
    let mut moves = 0;
    loop {
        let alphas: Vec<f64> = (-4..=4).map(|k| center + k as f64 * step).collect();
        let (table, mode, counts) = averaged_cover_sums(system, cloud, schedule, &alphas)?;
        let mut found_smallest = false;
        for d in 0..nd {
            let s: Vec<f64> = (0..alphas.len()).map(|a| slopes_at(&table, d, a)).collect::<Result<_>>()?;
            if let Some((_, root)) = zero_crossing(&alphas, &s) {
                roots[d] = Some(root);
                if d == nd - 1 {
                    found_smallest = true;
                    center = root;
                }
            } else if d == nd - 1 {
                center = if s[0] < 0.0 { alphas[0] } else { alphas[alphas.len() - 1] };
            }
        }
        if !found_smallest {
            moves += 1;
            if moves > 12 {
                return Err(Error::Numerical("cover-sum slope never changes sign".into()));
            }
            continue;
        }
        last = Some((alphas, table, mode, counts));
        if step <= schedule.alpha_tol {
            break;
        }
        step /= 8.0;
    }
    let (alphas, table, mode, counts) = last.expect("loop exits after a successful round");

    let n_max = *schedule.word_lengths.last().expect("validated");
    let longest = n_max + schedule.extension;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (d, &delta) in schedule.epsilons.iter().enumerate() {
        let Some(alpha) = roots[d] else {
            continue;
        };
        let resolved = is_resolved(system, cloud, longest, delta, schedule.resolution_factor);
        let ys: Vec<f64> = (0..xs.len())
            .map(|i| interpolate(&alphas, &table[i][d], alpha))
            .collect();
        let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::Numerical("cannot fit cover sums".into()))?;
        let inc = increments(&xs, &ys);
        for (i, &n) in schedule.word_lengths.iter().enumerate() {
            rows.push(CellRow {
                variant: Variant::Caratheodory,
                n,
                eps: delta,
                n_words: counts[i],
                log_avg_sum: ys[i],
                stderr: 0.0,
                resolved,
            });
        }
        fits.push(ScaleFit {
            eps: delta,
            slope: alpha,
            intercept: fit.intercept,
            residual: fit.residual,
            liminf: alpha + inc.iter().copied().fold(f64::INFINITY, f64::min),
            limsup: alpha + inc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            resolved,
        });
    }
    let mut est = PressureEstimate::from_fits(Variant::Caratheodory, rows, fits, schedule.consistency_tol).with_mode(mode);
    let top = table.len() - 1;
    let at_top: Vec<f64> = table[top][nd - 1].clone();
    est.crossing = zero_crossing(&alphas, &at_top).map(|(_, a)| a);
    Ok(est)
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs
        .windows(2)
        .position(|p| p[0] <= x && x <= p[1])
        .unwrap_or(if x < xs[0] { 0 } else { xs.len() - 2 });
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + t * (ys[k + 1] - ys[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{discretize, RegionSpec};
    use crate::systems::{ConformalMap, MetricMode};
    use std::f64::consts::LN_2;

    fn unit_cloud(h: f64) -> SampleCloud {
        discretize(&RegionSpec::Interval { a: 0.0, b: 1.0 }, h).unwrap()
    }

    #[test]
    fn doubling_counts_match_closed_form() {
        let sys = SemigroupSystem::linear(&[2]).unwrap();
        let cloud = unit_cloud(1.0 / 8192.0);
        let a = sys.alphabet();
        for n in 2..=6 {
            for eps in [0.1, 0.05] {
                let w = Word::new(a, vec![0; n]).unwrap();
                let q = partition_sum_spanning(&sys, &cloud, &w, eps).unwrap();
                let p = partition_sum_separated(&sys, &cloud, &w, eps).unwrap();
                let oracle = 2f64.powi(n as i32 - 1) / eps;
                assert!(q.resolved);
                assert!((q.size as f64) < 4.0 * oracle && (q.size as f64) > oracle / 4.0);
                assert!((p.size as f64) < 4.0 * oracle && (p.size as f64) > oracle / 4.0);
                assert!(q.log_sum <= p.log_sum);
                assert!((q.log_sum - (q.size as f64).ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singleton_cloud_sum() {
        let sys = SemigroupSystem::linear(&[3]).unwrap().with_geometric_scaling(1.0);
        let cloud = discretize(&RegionSpec::PointList { points: vec![0.2] }, 0.01).unwrap();
        let w = Word::new(sys.alphabet(), vec![0, 0]).unwrap();
        let q = partition_sum_spanning(&sys, &cloud, &w, 0.1).unwrap();
        assert!((q.log_sum + 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_generators_match_single_map() {
        let single = SemigroupSystem::linear(&[2]).unwrap();
        let double = SemigroupSystem::linear(&[2, 2]).unwrap();
        let cloud = unit_cloud(1.0 / 2048.0);
        let sched = Schedule::new(vec![2, 3, 4], vec![0.1, 0.05]);
        let a = partition_table(&single, &cloud, &sched).unwrap();
        let b = partition_table(&double, &cloud, &sched).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert!((x.spanning.log_avg - y.spanning.log_avg).abs() < 1e-9);
            assert!((x.separated.log_avg - y.separated.log_avg).abs() < 1e-9);
        }
    }

    #[test]
    fn two_slope_average_matches_product_formula() {
        let sys = SemigroupSystem::linear(&[2, 4]).unwrap();
        let cloud = unit_cloud(1.0 / 20000.0);
        for t in [0.0, 0.5, 1.0] {
            let s = sys.with_geometric_scaling(t);
            let sched = Schedule::new(vec![2, 3, 4], vec![0.1]).without_sandwich();
            let est = capacity_pressure(&s, &cloud, &sched, Variant::Spanning).unwrap();
            let exact = ((2f64.powf(1.0 - t) + 4f64.powf(1.0 - t)) / 2.0).ln();
            assert!((est.value - exact).abs() < 0.05, "t {t}: {} vs {exact}", est.value);
        }
    }

    #[test]
    fn constant_shift_moves_slope_exactly() {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap();
        let cloud = unit_cloud(1.0 / 8000.0);
        let sched = Schedule::new(vec![2, 3, 4], vec![0.1]);
        let base = capacity_pressure(&sys, &cloud, &sched, Variant::Separated).unwrap();
        let shifted = capacity_pressure(&sys.with_constant_shifts(&[0.7, 0.7]).unwrap(), &cloud, &sched, Variant::Separated).unwrap();
        assert!((shifted.value - base.value - 0.7).abs() < 1e-9);
    }

    #[test]
    fn sandwich_holds_per_cell() {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap().with_geometric_scaling(0.5);
        let cloud = unit_cloud(1.0 / 6000.0);
        let sched = Schedule::new(vec![2, 3, 4], vec![0.1, 0.05]);
        let table = partition_table(&sys, &cloud, &sched).unwrap();
        assert_eq!(table.sandwich_violations(), 0);
        for c in &table.cells {
            assert!(c.spanning.log_avg <= c.separated.log_avg);
        }
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let sys = SemigroupSystem::linear(&[2, 3, 4]).unwrap();
        let cloud = unit_cloud(1.0 / 2000.0);
        let sched = Schedule::new(vec![2, 3, 4], vec![0.1]).with_budget(8, 16).with_seed(5);
        let a = capacity_pressure(&sys, &cloud, &sched, Variant::Spanning).unwrap();
        let b = capacity_pressure(&sys, &cloud, &sched.clone().with_exec(Exec::Sequential), Variant::Spanning).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mode, AveragingMode::MonteCarlo);
        assert!(a.per_cell.iter().any(|r| r.n_words == 16 && r.stderr > 0.0));
    }

    #[test]
    fn unresolved_flag_for_coarse_cloud() {
        let sys = SemigroupSystem::linear(&[2]).unwrap();
        let cloud = unit_cloud(1.0 / 64.0);
        let est = entropy(&sys, &cloud, &Schedule::new(vec![2, 3, 4], vec![0.1])).unwrap();
        assert!(est.has_flag(Diagnostic::Unresolved));
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(vec![1, 2, 3], vec![0.1]).validate().is_err());
        assert!(Schedule::new(vec![3, 2, 4], vec![0.1]).validate().is_err());
        assert!(Schedule::new(vec![2, 3, 4], vec![0.05, 0.1]).validate().is_err());
        let sys = SemigroupSystem::linear(&[2]).unwrap();
        let cloud = unit_cloud(0.01);
        assert!(capacity_pressure(&sys, &cloud, &Schedule::new(vec![2, 3], vec![0.1]), Variant::Spanning).is_err());
    }

    #[test]
    fn caratheodory_doubling_entropy() {
        let sys = SemigroupSystem::linear(&[2]).unwrap();
        let cloud = unit_cloud(1.0 / 16384.0);
        let sched = Schedule::new(vec![3, 4, 5, 6], vec![0.1, 0.05]);
        let est = caratheodory_pressure(&sys, &cloud, &sched).unwrap();
        assert!((est.value - LN_2).abs() < 0.1, "{}", est.value);
        let shifted = caratheodory_pressure(&sys.with_constant_shifts(&[0.3]).unwrap(), &cloud, &sched).unwrap();
        assert!((shifted.value - est.value - 0.3).abs() < 0.02);
    }

    #[test]
    fn caratheodory_union_dominates_parts() {
        let sys = SemigroupSystem::uniform(
            vec![ConformalMap::linear(2), ConformalMap::linear(3)],
            Potential::Zero,
            MetricMode::Circle,
        )
        .unwrap();
        let left = discretize(&RegionSpec::Interval { a: 0.0, b: 0.5 }, 1.0 / 8000.0).unwrap();
        let right = discretize(&RegionSpec::Interval { a: 0.5, b: 1.0 }, 1.0 / 8000.0).unwrap();
        let both = left.union(&right).unwrap();
        let sched = Schedule::new(vec![2, 3, 4], vec![0.1]).with_extension(1);
        let pl = caratheodory_pressure(&sys, &left, &sched).unwrap().value;
        let pr = caratheodory_pressure(&sys, &right, &sched).unwrap().value;
        let pu = caratheodory_pressure(&sys, &both, &sched).unwrap().value;
        assert!(pu >= pl.max(pr) - 0.05, "{pu} vs {pl}, {pr}");
    }

    #[test]
    fn csv_header_and_rows() {
        let sys = SemigroupSystem::linear(&[2]).unwrap();
        let cloud = unit_cloud(1.0 / 4096.0);
        let est = entropy(&sys, &cloud, &Schedule::new(vec![2, 3, 4], vec![0.1])).unwrap();
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "variant,N,epsilon,n_words,log_avg_sum,stderr");
        assert_eq!(lines.count(), 3);
    }
}
