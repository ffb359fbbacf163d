//! The skew product `F(omega, x) = (sigma omega, f_{omega_0}(x))` over the
//! full shift with potential `g = c + phi`.
//!
//! Two-sided sequences live in finite windows. At scale `eps` the symbolic
//! distance `d'(omega, omega') = 2^-k` is at least `eps` iff the sequences
//! differ at some `|j| <= K`, `K = floor(log2(1/eps))`, so `n`-step
//! separation of the symbolic part is decided by the window `[-K, n + K]`.
//! Every class of that window fixes the fiber word `omega_0 .. omega_{n-1}`
//! and leaves `2K + 1` free symbols (`K + 1` one-sided), which makes
//! product partition sums `m^(2K+1) e^(nc)` times the fiber word sums.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pressure::{estimate_from_table, partition_table, CellRow, PartitionTable, PressureEstimate, Schedule, Variant};
use crate::sets::SampleCloud;
use crate::stats::sig12;
use crate::systems::{Potential, SemigroupSystem};
use crate::words::Symbol;

/// A finite piece of a two-sided sequence; `symbols[origin]` is `omega_0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaWindow {
    pub symbols: Vec<Symbol>,
    pub origin: usize,
}

impl OmegaWindow {
    pub fn new(symbols: Vec<Symbol>, origin: usize) -> Self {
        Self { symbols, origin }
    }

    /// First and last covered indices.
    pub fn span(&self) -> (i64, i64) {
        let start = -(self.origin as i64);
        (start, start + self.symbols.len() as i64 - 1)
    }

    pub fn get(&self, j: i64) -> Option<Symbol> {
        let pos = self.origin as i64 + j;
        (pos >= 0).then(|| self.symbols.get(pos as usize).copied()).flatten()
    }

    fn require(&self, j: i64) -> Result<Symbol> {
        self.get(j).ok_or_else(|| {
            let (start, end) = self.span();
            Error::WindowExhausted { start, end, index: j }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewPoint {
    pub window: OmegaWindow,
    pub x: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewPotential {
    pub c: f64,
    pub phi: Potential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SkewMode {
    #[default]
    TwoSided,
    /// Base `Sigma_m^+`: no symbols to the left of the origin.
    OneSided,
}

/// One application of `F`. The window keeps its buffer and moves its
/// origin right by one.
pub fn skew_apply(system: &SemigroupSystem, p: &SkewPoint) -> Result<SkewPoint> {
    let i = p.window.require(0)?;
    if i as usize >= system.m() {
        return Err(Error::SymbolOutOfRange { symbol: i as usize, m: system.m() });
    }
    Ok(SkewPoint {
        window: OmegaWindow::new(p.window.symbols.clone(), p.window.origin + 1),
        x: system.step(i, p.x),
    })
}

/// `S_n g(p) = n c + sum_k phi_{omega_k}(x_k)`.
pub fn skew_birkhoff(system: &SemigroupSystem, g: &SkewPotential, p: &SkewPoint, n: usize) -> Result<f64> {
    let fiber = system.with_potential(g.phi);
    let mut q = p.clone();
    let mut s = 0.0;
    for _ in 0..n {
        let i = q.window.require(0)?;
        s += g.c + fiber.phi(i, q.x);
        q = skew_apply(&fiber, &q)?;
    }
    Ok(s)
}

/// `d'` on windows sharing an origin; positions outside either window are
/// taken as equal.
pub fn symbolic_distance(a: &OmegaWindow, b: &OmegaWindow, mode: SkewMode) -> f64 {
    let (sa, ea) = a.span();
    let (sb, eb) = b.span();
    let lo = sa.max(sb);
    let hi = ea.min(eb);
    let mut best: Option<i64> = None;
    for j in lo..=hi {
        if mode == SkewMode::OneSided && j < 0 {
            continue;
        }
        if a.get(j) != b.get(j) {
            best = Some(best.map_or(j.abs(), |b| b.min(j.abs())));
        }
    }
    best.map_or(0.0, |k| 0.5f64.powi(k as i32))
}

/// `max_{0<=k<=n} max(d'(F^k a), d(F^k a))` over the `n + 1` orbit points.
pub fn skew_bowen_distance(system: &SemigroupSystem, a: &SkewPoint, b: &SkewPoint, n: usize, mode: SkewMode) -> Result<f64> {
    let (mut p, mut q) = (a.clone(), b.clone());
    let mut d: f64 = 0.0;
    for k in 0..=n {
        d = d.max(symbolic_distance(&p.window, &q.window, mode)).max(system.distance(p.x, q.x));
        if k < n {
            p = skew_apply(system, &p)?;
            q = skew_apply(system, &q)?;
        }
    }
    Ok(d)
}

/// `K = floor(log2(1/eps))`.
pub fn window_radius(eps: f64) -> usize {
    ((1.0 / eps).log2() + 1e-12).floor().max(0.0) as usize
}

/// Free symbols per window class: `2K + 1` two-sided, `K + 1` one-sided.
pub fn free_symbols(eps: f64, mode: SkewMode) -> usize {
    let k = window_radius(eps);
    match mode {
        SkewMode::TwoSided => 2 * k + 1,
        SkewMode::OneSided => k + 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewCell {
    pub n: usize,
    pub eps: f64,
    /// `log` of the symbolic multiplicity `m^(free symbols)`.
    pub log_multiplicity: f64,
    /// `log P` of the product (separated sums).
    pub log_skew_separated: f64,
    /// `log Q` of the product (spanning sums).
    pub log_skew_spanning: f64,
    /// `n c + n log m + log P_fiber`.
    pub log_lower_bound: f64,
    /// `log K + n c + n log m + log Q_fiber`.
    pub log_upper_bound: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewTable {
    pub mode: SkewMode,
    pub cells: Vec<SkewCell>,
}

impl SkewTable {
    pub fn sandwich_holds(&self) -> bool {
        self.cells.iter().all(|c| c.lower_ok && c.upper_ok)
    }
}

fn check_scales(schedule: &Schedule) -> Result<()> {
    schedule.validate()?;
    if schedule.epsilons.iter().any(|&e| e >= 0.5) {
        return Err(invalid("skew scales must be below 1/2"));
    }
    Ok(())
}

fn skew_cells(table: &PartitionTable, m: usize, c: f64, mode: SkewMode) -> Vec<SkewCell> {
    let log_m = (m as f64).ln();
    table
        .cells
        .iter()
        .map(|cell| {
            let n = cell.n as f64;
            let log_mult = free_symbols(cell.eps, mode) as f64 * log_m;
            let base = n * c + n * log_m;
            let p = log_mult + base + cell.separated.log_avg;
            let q = log_mult + base + cell.spanning.log_avg;
            let lower = base + cell.separated.log_avg;
            let upper = log_mult + base + cell.spanning.log_avg;
            SkewCell {
                n: cell.n,
                eps: cell.eps,
                log_multiplicity: log_mult,
                log_skew_separated: p,
                log_skew_spanning: q,
                log_lower_bound: lower,
                log_upper_bound: upper,
                lower_ok: p >= lower,
                upper_ok: q <= upper,
            }
        })
        .collect()
}

fn skew_estimate(table: &PartitionTable, cells: &[SkewCell], schedule: &Schedule) -> Result<PressureEstimate> {
    let rows: Vec<CellRow> = table
        .cells
        .iter()
        .zip(cells)
        .map(|(t, s)| CellRow {
            variant: Variant::Separated,
            n: s.n,
            eps: s.eps,
            n_words: t.n_words,
            log_avg_sum: s.log_skew_separated,
            stderr: t.separated.stderr,
            resolved: t.resolved,
        })
        .collect();
    PressureEstimate::from_rows(Variant::Separated, rows, &schedule.epsilons, schedule.consistency_tol)
}

/// Per-cell product sums and their bounds.
pub fn skew_table(system: &SemigroupSystem, g: &SkewPotential, cloud: &SampleCloud, schedule: &Schedule, mode: SkewMode) -> Result<SkewTable> {
    check_scales(schedule)?;
    let table = partition_table(&system.with_potential(g.phi), cloud, schedule)?;
    Ok(SkewTable {
        mode,
        cells: skew_cells(&table, system.m(), g.c, mode),
    })
}

/// Upper capacity pressure of `F` on `Sigma_m x Z` with potential `g`.
pub fn skew_capacity_pressure(system: &SemigroupSystem, g: &SkewPotential, cloud: &SampleCloud, schedule: &Schedule) -> Result<PressureEstimate> {
    skew_capacity_pressure_with(system, g, cloud, schedule, SkewMode::TwoSided)
}

pub fn skew_capacity_pressure_with(
    system: &SemigroupSystem,
    g: &SkewPotential,
    cloud: &SampleCloud,
    schedule: &Schedule,
    mode: SkewMode,
) -> Result<PressureEstimate> {
    check_scales(schedule)?;
    let table = partition_table(&system.with_potential(g.phi), cloud, schedule)?;
    let cells = skew_cells(&table, system.m(), g.c, mode);
    skew_estimate(&table, &cells, schedule)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewIdentity {
    /// Product pressure from separated sums.
    pub left: f64,
    /// `log m + fiber pressure (spanning) + c`.
    pub right: f64,
    pub fiber: f64,
    pub c: f64,
    pub tol: f64,
    pub pass: bool,
    pub sandwich_holds: bool,
    pub table: SkewTable,
    pub left_estimate: PressureEstimate,
    pub fiber_estimate: PressureEstimate,
}

impl SkewIdentity {
    /// `N,epsilon,log_multiplicity,log_skew_separated,log_lower_bound,log_skew_spanning,log_upper_bound`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "N,epsilon,log_multiplicity,log_skew_separated,log_lower_bound,log_skew_spanning,log_upper_bound")?;
        for c in &self.table.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.n,
                sig12(c.eps),
                sig12(c.log_multiplicity),
                sig12(c.log_skew_separated),
                sig12(c.log_lower_bound),
                sig12(c.log_skew_spanning),
                sig12(c.log_upper_bound)
            )?;
        }
        Ok(())
    }
}

/// Compares the product pressure with `log m + fiber pressure + c`.
pub fn verify_skew_identity(
    system: &SemigroupSystem,
    phi: Potential,
    c: f64,
    cloud: &SampleCloud,
    schedule: &Schedule,
    tol: f64,
    mode: SkewMode,
) -> Result<SkewIdentity> {
    check_scales(schedule)?;
    schedule.validate()?;
    let fiber_sys = system.with_potential(phi);
    let table = partition_table(&fiber_sys, cloud, schedule)?;
    let cells = skew_cells(&table, system.m(), c, mode);
    let left_estimate = skew_estimate(&table, &cells, schedule)?;
    let fiber_estimate = estimate_from_table(&table, schedule, Variant::Spanning)?;
    let left = left_estimate.value;
    let right = (system.m() as f64).ln() + fiber_estimate.value + c;
    let table = SkewTable { mode, cells };
    Ok(SkewIdentity {
        pass: (left - right).abs() <= tol,
        sandwich_holds: table.sandwich_holds(),
        left,
        right,
        fiber: fiber_estimate.value,
        c,
        tol,
        table,
        left_estimate,
        fiber_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{birkhoff_sum, orbit_segment};
    use crate::sets::{discretize, RegionSpec};
    use crate::systems::{ConformalMap, MetricMode};
    use crate::words::{Alphabet, Word};
    use proptest::prelude::*;

    fn cloud(h: f64) -> SampleCloud {
        discretize(&RegionSpec::Interval { a: 0.0, b: 1.0 }, h).unwrap()
    }

    #[test]
    fn apply_moves_origin_and_fiber() {
        let sys = SemigroupSystem::linear(&[2, 4]).unwrap();
        let p = SkewPoint {
            window: OmegaWindow::new(vec![1, 0, 1, 1], 1),
            x: 0.1,
        };
        let q = skew_apply(&sys, &p).unwrap();
        assert_eq!(q.x, sys.apply_generator(0, 0.1).unwrap());
        assert_eq!(q.window.get(0), Some(1));
        assert_eq!(q.window.get(-2), Some(1));
        let end = OmegaWindow::new(vec![0], 1);
        let err = skew_apply(&sys, &SkewPoint { window: end, x: 0.2 }).unwrap_err();
        assert_eq!(err, Error::WindowExhausted { start: -1, end: -1, index: 0 });
    }

    proptest! {
        #[test]
        fn iterates_match_kernel(symbols in proptest::collection::vec(0u8..2, 1..=10), x in 0.0f64..1.0, c in -1.0f64..1.0) {
            let maps = vec![ConformalMap::linear(2), ConformalMap::linear(3)];
            let sys = SemigroupSystem::uniform(maps, Potential::ScaledLogFactor(-0.5), MetricMode::Circle).unwrap();
            let n = symbols.len();
            let mut p = SkewPoint { window: OmegaWindow::new(symbols.clone(), 0), x };
            for _ in 0..n {
                p = skew_apply(&sys, &p).unwrap();
            }
            let w = Word::new(Alphabet::new(2).unwrap(), symbols.clone()).unwrap();
            prop_assert_eq!(p.x, orbit_segment(&sys, &w, x).last());
            let g = SkewPotential { c, phi: Potential::ScaledLogFactor(-0.5) };
            let start = SkewPoint { window: OmegaWindow::new(symbols, 0), x };
            let s = skew_birkhoff(&sys, &g, &start, n).unwrap();
            prop_assert!((s - (n as f64 * c + birkhoff_sum(&sys, &w, x))).abs() < 1e-12);
        }
    }

    #[test]
    fn window_radius_and_multiplicity() {
        assert_eq!(window_radius(0.125), 3);
        assert_eq!(window_radius(0.1), 3);
        assert_eq!(free_symbols(0.0625, SkewMode::TwoSided), 9);
        assert_eq!(free_symbols(0.0625, SkewMode::OneSided), 5);
        let a = OmegaWindow::new(vec![0, 0, 0, 0, 0], 2);
        let b = OmegaWindow::new(vec![0, 1, 0, 0, 0], 2);
        assert_eq!(symbolic_distance(&a, &b, SkewMode::TwoSided), 0.5);
        assert_eq!(symbolic_distance(&a, &b, SkewMode::OneSided), 0.0);
    }

    /// Brute-force greedy separated sums on explicit product points agree with
    /// the class decomposition.
    #[test]
    fn product_greedy_matches_decomposition() {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap().with_potential(Potential::ScaledLogFactor(-0.3));
        let g = SkewPotential { c: 0.2, phi: Potential::ScaledLogFactor(-0.3) };
        let (n, eps) = (2usize, 0.25);
        let k = window_radius(eps);
        let len = n + 2 * k + 1;
        let xs: Vec<f64> = (0..24).map(|i| (i as f64 + 0.37) / 24.0).collect();
        let greedy = |pts: &[SkewPoint]| -> f64 {
            let mut chosen: Vec<&SkewPoint> = Vec::new();
            let mut total = 0.0;
            for p in pts {
                if chosen.iter().all(|q| skew_bowen_distance(&sys, p, q, n, SkewMode::TwoSided).unwrap() >= eps) {
                    chosen.push(p);
                    total += skew_birkhoff(&sys, &g, p, n).unwrap().exp();
                }
            }
            total
        };
        let mut product = Vec::new();
        for code in 0..(1usize << len) {
            let symbols: Vec<Symbol> = (0..len).map(|b| ((code >> b) & 1) as Symbol).collect();
            for &x in &xs {
                product.push(SkewPoint { window: OmegaWindow::new(symbols.clone(), k), x });
            }
        }
        let brute = greedy(&product);
        let mut fiber = 0.0;
        for code in 0..(1usize << n) {
            let mut symbols = vec![0; len];
            for b in 0..n {
                symbols[k + b] = ((code >> b) & 1) as Symbol;
            }
            let pts: Vec<SkewPoint> = xs.iter().map(|&x| SkewPoint { window: OmegaWindow::new(symbols.clone(), k), x }).collect();
            fiber += greedy(&pts) * (-(n as f64) * g.c).exp();
        }
        let decomposed = (1u64 << (2 * k + 1)) as f64 * (n as f64 * g.c).exp() * fiber;
        assert!((brute / decomposed - 1.0).abs() < 1e-9, "{brute} vs {decomposed}");
    }

    #[test]
    fn doubling_pair_and_shift() {
        let sys = SemigroupSystem::linear(&[2, 2]).unwrap();
        let cl = cloud(1.0 / 8192.0);
        let sched = Schedule::new(vec![3, 4, 5, 6], vec![0.125, 0.0625]);
        let g = SkewPotential { c: 0.0, phi: Potential::Zero };
        let a = skew_capacity_pressure(&sys, &g, &cl, &sched).unwrap();
        assert!((a.value - 4f64.ln()).abs() < 0.1, "{}", a.value);
        let b = skew_capacity_pressure(&sys, &SkewPotential { c: 0.7, ..g }, &cl, &sched).unwrap();
        assert!((b.value - a.value - 0.7).abs() < 0.02);
        let one = skew_capacity_pressure_with(&sys, &g, &cl, &sched, SkewMode::OneSided).unwrap();
        assert!((one.value - a.value).abs() < 1e-9);
    }

    #[test]
    fn identity_on_two_slopes() {
        let sys = SemigroupSystem::linear(&[2, 3]).unwrap();
        let cl = cloud(1.0 / 16384.0);
        let sched = Schedule::new(vec![2, 3, 4, 5], vec![0.125, 0.0625]);
        for (phi, fiber) in [(Potential::Zero, 2.5f64.ln()), (Potential::ScaledLogFactor(-1.0), 0.0)] {
            let id = verify_skew_identity(&sys, phi, 0.0, &cl, &sched, 0.1, SkewMode::TwoSided).unwrap();
            assert!(id.pass && id.sandwich_holds, "{} {}", id.left, id.right);
            assert!((id.left - (2f64.ln() + fiber)).abs() < 0.1, "{}", id.left);
            let mut buf = Vec::new();
            id.write_csv(&mut buf).unwrap();
            assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 8);
        }
        let bad = Schedule::new(vec![2, 3, 4], vec![0.5]);
        assert!(skew_capacity_pressure(&sys, &SkewPotential { c: 0.0, phi: Potential::Zero }, &cl, &bad).is_err());
    }
}
