//! Roots of Bowen's equation `P(-t log a) = 0`, the bracket and slope
//! bounds coming from the Lyapunov range of the cloud, and independent
//! dimension oracles (box counting, Moran equation).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Diagnostic, Error, Result};
use crate::pressure::{capacity_pressure, PressureEstimate, Schedule, Variant};
use crate::sets::{RegionSpec, SampleCloud};
use crate::stats::{linear_fit, sig12};
use crate::systems::{MapKind, SemigroupSystem};
use crate::words::Symbol;

/// Pressure of `-t log a` on the cloud.
pub fn pressure_at_t(system: &SemigroupSystem, cloud: &SampleCloud, t: f64, schedule: &Schedule) -> Result<PressureEstimate> {
    pressure_at_t_with(system, cloud, t, schedule, Variant::Spanning)
}

pub fn pressure_at_t_with(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    t: f64,
    schedule: &Schedule,
    variant: Variant,
) -> Result<PressureEstimate> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("t must be >= 0, got {t}")));
    }
    capacity_pressure(&system.with_geometric_scaling(t), cloud, schedule, variant)
}

/// `alpha = min_i min_x log a_i(x)` and `beta = max_i max_x log a_i(x)` over
/// the cloud.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovBounds {
    pub alpha: f64,
    pub beta: f64,
    /// `alpha <= 0`: outside the expanding regime.
    pub nonexpanding: bool,
}

pub fn lyapunov_bounds_on_cloud(system: &SemigroupSystem, cloud: &SampleCloud) -> LyapunovBounds {
    let mut alpha = f64::INFINITY;
    let mut beta = f64::NEG_INFINITY;
    for i in 0..system.m() as Symbol {
        for &x in cloud.points() {
            let l = system.log_factor(i, x);
            alpha = alpha.min(l);
            beta = beta.max(l);
        }
    }
    LyapunovBounds {
        alpha,
        beta,
        nonexpanding: alpha <= 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowenOptions {
    /// Stop once the sign-change bracket is this narrow.
    pub t_tol: f64,
    /// Reported check on `|P(t*)|`.
    pub p_tol: f64,
    /// Allowed increase between consecutive trace points.
    pub mono_tol: f64,
    pub variant: Variant,
}

impl Default for BowenOptions {
    fn default() -> Self {
        Self {
            t_tol: 0.01,
            p_tol: 0.02,
            mono_tol: 0.02,
            variant: Variant::Spanning,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BowenResult {
    pub t_star: f64,
    /// Half-width of the final sign-change bracket.
    pub t_err: f64,
    /// `(h / beta, h / alpha)`.
    pub bracket: (f64, f64),
    /// `(t, P(t))` sorted by `t`.
    pub pressure_trace: Vec<(f64, f64)>,
    pub entropy: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Interpolated pressure at `t_star`.
    pub p_at_root: f64,
    pub p_within_tol: bool,
    pub dim_box: Option<f64>,
    pub dim_moran: Option<f64>,
    pub flags: Vec<Diagnostic>,
}

impl BowenResult {
    /// `t,pressure` CSV of the trace.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,pressure")?;
        for (t, p) in &self.pressure_trace {
            writeln!(out, "{},{}", sig12(*t), sig12(*p))?;
        }
        Ok(())
    }
}

/// Solves `P(-t log a) = 0` by bisection inside
/// `[h/beta - 10 t_tol, h/alpha + 10 t_tol]`, stopping when the sign-change
/// bracket is narrower than `t_tol`; the root is interpolated linearly
/// inside the final bracket. Only this root form of the dimension is
/// computed; the sup/inf forms over exponents are not distinguishable from it
/// at finite precision.
pub fn bowen_root(system: &SemigroupSystem, cloud: &SampleCloud, schedule: &Schedule, opts: &BowenOptions) -> Result<BowenResult> {
    if !(opts.t_tol > 0.0) {
        return Err(invalid("t_tol must be positive"));
    }
    let bounds = lyapunov_bounds_on_cloud(system, cloud);
    if bounds.nonexpanding {
        return Err(Error::NonExpanding { alpha: bounds.alpha });
    }
    let mut flags = Vec::new();
    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut eval = |t: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let est = pressure_at_t_with(system, cloud, t, schedule, opts.variant)?;
        for f in &est.flags {
            if !flags.contains(f) {
                flags.push(*f);
            }
        }
        trace.push((t, est.value));
        Ok(est.value)
    };
    let h = eval(0.0, &mut trace)?;
    let bracket = (h / bounds.beta, h / bounds.alpha);
    let slack = 10.0 * opts.t_tol;
    let (mut lo, mut hi) = ((bracket.0 - slack).max(0.0), bracket.1 + slack);
    let mut p_lo = if lo == 0.0 { h } else { eval(lo, &mut trace)? };
    let mut p_hi = eval(hi, &mut trace)?;
    if !(p_lo >= 0.0 && p_hi <= 0.0) {
        return Err(Error::Numerical(format!(
            "no sign change of the pressure on [{lo}, {hi}]: P = {p_lo}, {p_hi}"
        )));
    }
    while hi - lo > opts.t_tol {
        let mid = 0.5 * (lo + hi);
        let p = eval(mid, &mut trace)?;
        if p > 0.0 {
            (lo, p_lo) = (mid, p);
        } else {
            (hi, p_hi) = (mid, p);
        }
    }
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    trace.dedup_by(|a, b| a.0 == b.0);
    if let Some(w) = trace.windows(2).find(|w| w[1].1 >= w[0].1 + opts.mono_tol) {
        return Err(Error::NonMonotone(format!(
            "P({}) = {} but P({}) = {}",
            w[0].0, w[0].1, w[1].0, w[1].1
        )));
    }
    let t_star = if p_lo == p_hi { 0.5 * (lo + hi) } else { lo + (hi - lo) * p_lo / (p_lo - p_hi) };
    let p_at_root = p_lo + (p_hi - p_lo) * (t_star - lo) / (hi - lo);
    Ok(BowenResult {
        t_star,
        t_err: 0.5 * (hi - lo),
        bracket,
        pressure_trace: trace,
        entropy: h,
        alpha: bounds.alpha,
        beta: bounds.beta,
        p_at_root,
        p_within_tol: p_at_root.abs() <= opts.p_tol,
        dim_box: None,
        dim_moran: None,
        flags,
    })
}

/// Attaches the box-counting proxy and, for symbolic Cantor clouds of a
/// single linear map, the Moran value.
pub fn with_dimension_oracles(mut result: BowenResult, system: &SemigroupSystem, cloud: &SampleCloud) -> BowenResult {
    result.dim_box = box_counting_dimension(cloud, &default_box_scales(cloud)).ok().map(|b| b.value);
    if let RegionSpec::CantorSymbolic { branches, allowed, .. } = cloud.source() {
        let single_linear = system.m() == 1
            && matches!(system.maps()[0].kind(), MapKind::LinearMod1 { slope } if *slope as usize == *branches);
        if single_linear {
            let ratios = vec![1.0 / *branches as f64; allowed.len()];
            result.dim_moran = moran_dimension(&ratios).ok();
        }
    }
    result
}

/// `t* = h / alpha` for sets of constant exponent `alpha`.
pub fn dimension_equal_exponent(h: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::NonExpanding { alpha });
    }
    Ok(h / alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub t: f64,
    pub h_step: f64,
    pub p_t: f64,
    pub p_next: f64,
    /// `P(t) - beta h`.
    pub lower: f64,
    /// `P(t) - alpha h`.
    pub upper: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Checks `P(t) - beta h - tol <= P(t + h) <= P(t) - alpha h + tol`.
pub fn pressure_slope_check(
    system: &SemigroupSystem,
    cloud: &SampleCloud,
    schedule: &Schedule,
    t: f64,
    h_step: f64,
    tol: f64,
) -> Result<SlopeCheck> {
    if !(h_step >= 0.0) {
        return Err(invalid("h_step must be >= 0"));
    }
    let bounds = lyapunov_bounds_on_cloud(system, cloud);
    let p_t = pressure_at_t(system, cloud, t, schedule)?.value;
    let p_next = if h_step == 0.0 {
        p_t
    } else {
        pressure_at_t(system, cloud, t + h_step, schedule)?.value
    };
    let lower = p_t - bounds.beta * h_step;
    let upper = p_t - bounds.alpha * h_step;
    Ok(SlopeCheck {
        t,
        h_step,
        p_t,
        p_next,
        lower,
        upper,
        tol,
        pass: lower - tol <= p_next && p_next <= upper + tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDimension {
    pub value: f64,
    pub residual: f64,
    /// `(r, N(r))`.
    pub counts: Vec<(f64, usize)>,
    /// Always `"PROXY"`: box counting stands in for Hausdorff dimension.
    pub label: String,
}

/// Slope of `log N(r)` against `log(1/r)`, where `N(r)` counts occupied
/// boxes `[k r, (k+1) r)`.
pub fn box_counting_dimension(cloud: &SampleCloud, scales: &[f64]) -> Result<BoxDimension> {
    if scales.len() < 3 {
        return Err(invalid("box counting needs at least 3 scales"));
    }
    if scales.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(invalid("box scales must lie in (0, 1)"));
    }
    let counts: Vec<(f64, usize)> = scales
        .iter()
        .map(|&r| {
            let mut boxes: Vec<i64> = cloud.points().iter().map(|&x| (x / r).floor() as i64).collect();
            boxes.sort_unstable();
            boxes.dedup();
            (r, boxes.len())
        })
        .collect();
    let xs: Vec<f64> = counts.iter().map(|(r, _)| -r.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|(_, c)| (*c as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| invalid("box scales must differ"))?;
    Ok(BoxDimension {
        value: fit.slope,
        residual: fit.residual,
        counts,
        label: "PROXY".into(),
    })
}

/// Scales adapted to the cloud: powers of the branch count for symbolic
/// Cantor clouds, dyadic otherwise, stopping well above the resolution.
pub fn default_box_scales(cloud: &SampleCloud) -> Vec<f64> {
    let (base, floor) = match cloud.source() {
        RegionSpec::CantorSymbolic { branches, .. } => (*branches as f64, 2.0 * cloud.resolution()),
        _ => (2.0, 16.0 * cloud.resolution()),
    };
    let mut scales = Vec::new();
    let mut r = 1.0 / base;
    while r >= floor && scales.len() < 30 {
        scales.push(r);
        r /= base;
    }
    scales
}

/// Solves `sum_i r_i^s = 1` to 1e-12 by bisection.
pub fn moran_dimension(ratios: &[f64]) -> Result<f64> {
    if ratios.is_empty() || ratios.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(invalid("contraction ratios must lie in (0, 1)"));
    }
    let f = |s: f64| ratios.iter().map(|r| r.powf(s)).sum::<f64>() - 1.0;
    if ratios.len() == 1 {
        return Ok(0.0);
    }
    let r_max = ratios.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, (ratios.len() as f64).ln() / -r_max.ln() + 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
