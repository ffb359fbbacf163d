//! The ten acceptance criteria, each a self-contained desk-scale run that
//! reports the numbers it compared.

use std::f64::consts::LN_2;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bowen::{bowen_root, pressure_at_t, pressure_slope_check, with_dimension_oracles, BowenOptions};
use crate::error::{Diagnostic, Result};
use crate::exec::Exec;
use crate::localmeasure::{sandwich_check, LocalOptions, MeasureModel};
use crate::lyapunov::{lyapunov_envelope, lyapunov_word, tempered_margin};
use crate::pressure::{capacity_pressure, caratheodory_pressure, entropy, Schedule, Variant};
use crate::sets::{discretize, RegionSpec, SampleCloud};
use crate::skew::{verify_skew_identity, SkewMode};
use crate::systems::{potential_sup_distance, ConformalMap, MetricMode, Potential, SemigroupSystem};
use crate::words::enumerate_words;

pub const CRITERIA: usize = 10;

/// One comparison inside a criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn near(label: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self {
            label: label.into(),
            value,
            target,
            tol,
            pass: (value - target).abs() <= tol,
        }
    }

    /// A yes/no condition; `value` is 1 when it holds.
    fn holds(label: impl Into<String>, ok: bool) -> Self {
        Self {
            label: label.into(),
            value: if ok { 1.0 } else { 0.0 },
            target: 1.0,
            tol: 0.0,
            pass: ok,
        }
    }

    fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            value,
            target: bound,
            tol: 0.0,
            pass: value <= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: usize,
    pub title: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Set when the run aborted.
    pub error: Option<String>,
    pub seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {status} {} ({:.1}s)", self.id, self.title, self.seconds)?;
        if let Some(e) = &self.error {
            write!(f, ": error: {e}")?;
        }
        let failed: Vec<&Check> = self.checks.iter().filter(|c| !c.pass).collect();
        for c in failed {
            write!(f, "; {} = {:.6} (target {:.6}, tol {})", c.label, c.value, c.target, c.tol)?;
        }
        Ok(())
    }
}

fn unit(h: f64) -> Result<SampleCloud> {
    discretize(&RegionSpec::Interval { a: 0.0, b: 1.0 }, h)
}

fn cantor() -> Result<SampleCloud> {
    discretize(
        &RegionSpec::CantorSymbolic {
            branches: 3,
            allowed: vec![0, 2],
            depth: 10,
        },
        1e-9,
    )
}

fn two_slopes() -> Result<(SemigroupSystem, SampleCloud, Schedule)> {
    Ok((
        SemigroupSystem::linear(&[2, 4])?,
        unit(1.0 / 24576.0)?,
        Schedule::new(vec![2, 3, 4], vec![0.1, 0.05]),
    ))
}

fn pomeau() -> Result<SemigroupSystem> {
    SemigroupSystem::uniform(
        vec![ConformalMap::manneville_pomeau(0.3), ConformalMap::manneville_pomeau(0.6)],
        Potential::Zero,
        MetricMode::Interval,
    )
}

/// Closed-form pressure of the doubling map.
pub fn criterion_1(exec: Exec) -> Result<Vec<Check>> {
    let sys = SemigroupSystem::linear(&[2])?;
    let cloud = unit(1.0 / 32768.0)?;
    let sched = Schedule::new(vec![4, 5, 6, 7, 8], vec![0.1, 0.05]).with_exec(exec);
    let mut checks = Vec::new();
    for t in [0.0, 0.5, 1.0] {
        let p = pressure_at_t(&sys, &cloud, t, &sched)?;
        checks.push(Check::near(format!("P({t})"), p.value, (1.0 - t) * LN_2, 0.05));
    }
    Ok(checks)
}

/// Bowen root and box dimension on the full interval.
pub fn criterion_2(exec: Exec) -> Result<Vec<Check>> {
    let sys = SemigroupSystem::linear(&[2])?;
    let cloud = unit(1.0 / 20000.0)?;
    let sched = Schedule::new(vec![3, 4, 5, 6, 7], vec![0.1, 0.05]).with_exec(exec);
    let r = with_dimension_oracles(bowen_root(&sys, &cloud, &sched, &BowenOptions::default())?, &sys, &cloud);
    Ok(vec![
        Check::near("t*", r.t_star, 1.0, 0.02),
        Check::near("box dimension", r.dim_box.unwrap_or(f64::NAN), 1.0, 0.05),
    ])
}

/// Triadic Cantor repeller.
pub fn criterion_3(exec: Exec) -> Result<Vec<Check>> {
    let sys = SemigroupSystem::linear(&[3])?.with_metric(MetricMode::Interval);
    let cloud = cantor()?;
    let sched = Schedule::new(vec![2, 3, 4, 5, 6], vec![0.1]).with_exec(exec);
    let h = entropy(&sys, &cloud, &sched)?;
    let r = with_dimension_oracles(bowen_root(&sys, &cloud, &sched, &BowenOptions::default())?, &sys, &cloud);
    let moran = r.dim_moran.unwrap_or(f64::NAN);
    let exact = 2f64.ln() / 3f64.ln();
    Ok(vec![
        Check::near("entropy", h.value, LN_2, 0.05),
        Check::near("t*", r.t_star, exact, 0.02),
        Check::near("t* vs Moran", r.t_star, moran, 0.03),
        Check::near("box vs Moran", r.dim_box.unwrap_or(f64::NAN), moran, 0.03),
    ])
}

/// Closed form for the slopes-{2, 4} pair.
pub fn criterion_4(exec: Exec) -> Result<Vec<Check>> {
    let (sys, cloud, sched) = two_slopes()?;
    let sched = sched.with_exec(exec);
    let mut checks = Vec::new();
    for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let p = pressure_at_t(&sys, &cloud, t, &sched)?;
        let exact = ((2f64.powf(1.0 - t) + 4f64.powf(1.0 - t)) / 2.0).ln();
        checks.push(Check::near(format!("P({t})"), p.value, exact, 0.05));
    }
    let r = bowen_root(&sys, &cloud, &sched, &BowenOptions::default())?;
    checks.push(Check::near("t*", r.t_star, 1.0, 0.02));
    Ok(checks)
}

/// Skew-product identity and the per-cell bounds.
pub fn criterion_5(exec: Exec) -> Result<Vec<Check>> {
    let sys = SemigroupSystem::linear(&[2, 3])?;
    let cloud = unit(1.0 / 16384.0)?;
    let sched = Schedule::new(vec![2, 3, 4, 5], vec![0.125, 0.0625]).with_exec(exec);
    let mut checks = Vec::new();
    for (name, phi) in [("0", Potential::Zero), ("-log a", Potential::ScaledLogFactor(-1.0))] {
        for c in [0.0, 0.7] {
            let id = verify_skew_identity(&sys, phi, c, &cloud, &sched, 0.1, SkewMode::TwoSided)?;
            checks.push(Check::near(format!("skew - (log m + fiber + c), phi={name}, c={c}"), id.left - id.right, 0.0, 0.1));
            checks.push(Check::holds(format!("per-cell bounds, phi={name}, c={c}"), id.sandwich_holds));
        }
    }
    Ok(checks)
}

/// Lipschitz dependence on constant perturbations.
pub fn criterion_6(exec: Exec) -> Result<Vec<Check>> {
    let base = SemigroupSystem::linear(&[2, 3])?.with_potential(Potential::ScaledLogFactor(-0.5));
    let cloud = unit(1.0 / 4096.0)?;
    let sched = Schedule::new(vec![2, 3, 4], vec![0.1]).with_exec(exec);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checks = Vec::new();
    for k in 0..20 {
        let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi = base.with_constant_shifts(&a)?;
        let psi = base.with_constant_shifts(&b)?;
        let gap = potential_sup_distance(&phi, &psi, 64)?;
        let pa = capacity_pressure(&phi, &cloud, &sched, Variant::Spanning)?.value;
        let pb = capacity_pressure(&psi, &cloud, &sched, Variant::Spanning)?.value;
        checks.push(Check::at_most(format!("pair {k}: |dP| - |phi - psi|"), (pa - pb).abs() - gap, 0.02));
    }
    Ok(checks)
}

/// Monotone traces and the slope bounds for the slopes-{2, 4} pair.
pub fn criterion_7(exec: Exec) -> Result<Vec<Check>> {
    let (sys, cloud, sched) = two_slopes()?;
    let sched = sched.with_exec(exec);
    let ts: Vec<f64> = (0..=8).map(|k| 0.25 * k as f64).collect();
    let trace: Vec<f64> = ts.iter().map(|&t| pressure_at_t(&sys, &cloud, t, &sched).map(|p| p.value)).collect::<Result<_>>()?;
    let mut checks = vec![Check::holds("trace strictly decreasing", trace.windows(2).all(|w| w[1] < w[0]))];
    for t in [0.0, 0.5, 1.0, 1.5] {
        let c = pressure_slope_check(&sys, &cloud, &sched, t, 0.5, 0.02)?;
        checks.push(Check::holds(
            format!("P({}) = {:.4} in [{:.4}, {:.4}] +- 0.02", t + 0.5, c.p_next, c.lower, c.upper),
            c.pass,
        ));
    }
    Ok(checks)
}

/// Manneville-Pomeau pair.
pub fn criterion_8(exec: Exec) -> Result<Vec<Check>> {
    let mp = pomeau()?;
    let mut zero_ok = true;
    for n in 1..=10 {
        for w in enumerate_words(mp.alphabet(), n, 1 << 12)? {
            zero_ok &= lyapunov_word(&mp, &w, 0.0) == 0.0;
        }
    }
    let env = lyapunov_envelope(&mp, 0.5, 10, 1 << 12, 0)?;
    let env_min = env.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let mut margin_min = f64::INFINITY;
    for x in [0.0, 0.25, 0.5, 0.75] {
        let m = tempered_margin(&mp, x, 0.01, 10)?;
        margin_min = m.per_length.iter().copied().fold(margin_min, f64::min);
    }
    let sched = Schedule::new(vec![2, 3, 4], vec![0.1]).with_exec(exec);
    let root = bowen_root(&mp, &unit(0.01)?, &sched, &BowenOptions::default());
    let warned = matches!(&root, Err(e) if e.diagnostic() == Some(Diagnostic::WarnNonexpanding));
    Ok(vec![
        Check::holds("lambda_w(0) = 0 for |w| <= 10", zero_ok),
        Check::holds(format!("envelope at 0.5 positive (min {env_min:.4})"), env_min > 0.0),
        Check::holds(format!("tempered margin >= 0 (min {margin_min:.4})"), margin_min >= 0.0),
        Check::holds("bowen_root raises WARN_NONEXPANDING", warned),
    ])
}

/// Local pressures sandwiching the global one.
pub fn criterion_9(exec: Exec) -> Result<Vec<Check>> {
    let lebesgue = MeasureModel::lebesgue(2000)?;
    let doubling = SemigroupSystem::linear(&[2])?;
    let cloud = unit(1.0 / 16384.0)?;
    let sched = Schedule::new(vec![3, 4, 5, 6], vec![0.1, 0.05]).with_exec(exec);
    let mut local = LocalOptions::new(vec![4, 6, 8, 10], vec![0.2, 0.1]).with_seed(9);
    local.exec = exec;
    let d = sandwich_check(&lebesgue, &doubling, &cloud, &sched, &local, 3, 0.1)?;
    let (pair, pair_cloud) = (SemigroupSystem::linear(&[2, 4])?, unit(1.0 / 8192.0)?);
    let pair_sched = Schedule::new(vec![2, 3, 4], vec![0.1, 0.05]).with_exec(exec);
    let mut pair_local = LocalOptions::new(vec![3, 5, 7], vec![0.1, 0.05]).with_seed(9);
    pair_local.exec = exec;
    let p = sandwich_check(&lebesgue, &pair, &pair_cloud, &pair_sched, &pair_local, 3, 0.1)?;
    Ok(vec![
        Check::near("doubling inf lower local", d.inf_lower, LN_2, 0.1),
        Check::near("doubling global", d.pressure, LN_2, 0.1),
        Check::near("doubling sup upper local", d.sup_upper, LN_2, 0.1),
        Check::holds(
            format!("{{2,4}}: {:.4} - 0.1 <= {:.4} <= {:.4} + 0.1", p.inf_lower, p.pressure, p.sup_upper),
            p.pass,
        ),
    ])
}

/// Exact invariances and determinism.
pub fn criterion_10(exec: Exec) -> Result<Vec<Check>> {
    let phi = Potential::ScaledLogFactor(-0.5);
    let single = SemigroupSystem::linear(&[2])?.with_potential(phi);
    let double = SemigroupSystem::linear(&[2, 2])?.with_potential(phi);
    let cloud = unit(1.0 / 8192.0)?;
    let sched = Schedule::new(vec![3, 4, 5, 6], vec![0.1, 0.05]).with_exec(exec);
    let mut checks = Vec::new();
    for variant in [Variant::Spanning, Variant::Separated] {
        let a = capacity_pressure(&single, &cloud, &sched, variant)?.value;
        let b = capacity_pressure(&double, &cloud, &sched, variant)?.value;
        checks.push(Check::near(format!("duplicate generators, {variant}"), b, a, 1e-9));
    }
    let shifted = single.with_constant_shifts(&[0.7])?;
    for variant in [Variant::Spanning, Variant::Separated] {
        let a = capacity_pressure(&single, &cloud, &sched, variant)?.value;
        let b = capacity_pressure(&shifted, &cloud, &sched, variant)?.value;
        checks.push(Check::near(format!("shift 0.7, {variant}"), b - a, 0.7, 0.02));
    }
    let coarse = unit(1.0 / 2048.0)?;
    let small = Schedule::new(vec![2, 3, 4], vec![0.1]).with_exec(exec);
    let a = caratheodory_pressure(&single, &coarse, &small)?.value;
    let b = caratheodory_pressure(&shifted, &coarse, &small)?.value;
    checks.push(Check::near("shift 0.7, caratheodory", b - a, 0.7, 0.02));
    // Monte-Carlo averaging, rerun and across execution modes
    let pair = SemigroupSystem::linear(&[2, 3, 4])?;
    let mc = Schedule::new(vec![4, 5, 6], vec![0.1]).with_budget(64, 48).with_seed(10);
    let first = capacity_pressure(&pair, &coarse, &mc.clone().with_exec(exec), Variant::Spanning)?;
    let again = capacity_pressure(&pair, &coarse, &mc.clone().with_exec(exec), Variant::Spanning)?;
    let seq = capacity_pressure(&pair, &coarse, &mc.with_exec(Exec::Sequential), Variant::Spanning)?;
    checks.push(Check::holds("rerun bit-identical", first == again));
    checks.push(Check::holds("sequential equals parallel", first == seq));
    Ok(checks)
}

pub fn title(id: usize) -> &'static str {
    match id {
        1 => "closed-form pressure, doubling map",
        2 => "Bowen root and box dimension, full interval",
        3 => "Cantor repeller entropy and dimension",
        4 => "two-generator closed form",
        5 => "skew-product identity",
        6 => "Lipschitz dependence on the potential",
        7 => "monotonicity and slope bounds",
        8 => "Manneville-Pomeau diagnostics",
        9 => "local pressure sandwich",
        10 => "exact invariances and determinism",
        _ => "unknown",
    }
}

/// Runs one criterion; aborts become failed reports.
pub fn run_criterion(id: usize, exec: Exec) -> CriterionReport {
    let start = std::time::Instant::now();
    let out = match id {
        1 => criterion_1(exec),
        2 => criterion_2(exec),
        3 => criterion_3(exec),
        4 => criterion_4(exec),
        5 => criterion_5(exec),
        6 => criterion_6(exec),
        7 => criterion_7(exec),
        8 => criterion_8(exec),
        9 => criterion_9(exec),
        10 => criterion_10(exec),
        _ => Err(crate::error::invalid(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (checks, error) = match out {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    CriterionReport {
        id,
        title: title(id).to_string(),
        pass: error.is_none() && !checks.is_empty() && checks.iter().all(|c| c.pass),
        checks,
        error,
        seconds,
    }
}

pub fn run_all(exec: Exec) -> Vec<CriterionReport> {
    (1..=CRITERIA).map(|id| run_criterion(id, exec)).collect()
}
