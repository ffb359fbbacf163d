//! One runner per subcommand. Runners return their artifacts; `main` does
//! all writing.

use std::fmt::Write as _;

use sgp_core::acceptance::{run_criterion, CRITERIA};
use sgp_core::bowen::{bowen_root, box_counting_dimension, default_box_scales, moran_dimension, pressure_at_t_with, with_dimension_oracles};
use sgp_core::localmeasure::{local_pressure, sandwich_check, LocalOptions};
use sgp_core::lyapunov::{classify_point_with, length_stats, ClassifyOptions, DEFAULT_WORD_BUDGET};
use sgp_core::pressure::{capacity_pressure, caratheodory_pressure, entropy, PressureEstimate, Schedule, Variant};
use sgp_core::sets::RegionSpec;
use sgp_core::skew::{verify_skew_identity, SkewMode};
use sgp_core::stats::sig12;
use sgp_core::{Diagnostic, Error, Exec, SemigroupSystem};

use crate::config::{ExperimentConfig, SchemaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Pressure,
    Entropy,
    BowenRoot,
    Lyapunov,
    Classify,
    LocalPressure,
    SkewCheck,
    Dimension,
    Acceptance,
}

#[derive(Default)]
pub struct Outcome {
    pub summary: Vec<String>,
    /// Extra lines shown with `--verbose`.
    pub details: Vec<String>,
    pub files: Vec<(String, Vec<u8>)>,
    pub flags: Vec<Diagnostic>,
    /// Acceptance criteria that failed.
    pub failed: Vec<usize>,
}

impl Outcome {
    fn flag_all(&mut self, flags: &[Diagnostic]) {
        for f in flags {
            if !self.flags.contains(f) {
                self.flags.push(*f);
            }
        }
    }
}

pub enum Failure {
    Schema(SchemaError),
    Core(Error),
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::Schema(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Run = Result<Outcome, Failure>;

fn csv(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    buf
}

/// Whether some word length would be averaged by sampling.
fn samples_words(sys: &SemigroupSystem, schedule: &Schedule) -> bool {
    schedule
        .word_lengths
        .iter()
        .any(|&n| sys.alphabet().word_count(n).is_none_or(|c| c > schedule.word_budget as u128))
}

fn estimate_details(est: &PressureEstimate, out: &mut Outcome) {
    for f in &est.fits {
        out.details.push(format!(
            "eps {}: slope {:.6}, residual {:.2e}, increments [{:.4}, {:.4}]{}",
            sig12(f.eps),
            f.slope,
            f.residual,
            f.liminf,
            f.limsup,
            if f.resolved { "" } else { " (unresolved)" }
        ));
    }
    if let Some(c) = est.crossing {
        out.details.push(format!("crossing at the largest N: {c:.6}"));
    }
}

pub fn run(cmd: Command, cfg: Option<&ExperimentConfig>) -> Run {
    if cmd == Command::Acceptance {
        return acceptance(cfg);
    }
    let cfg = cfg.ok_or_else(|| SchemaError::at("", "--config is required for this command"))?;
    match cmd {
        Command::Pressure => pressure(cfg),
        Command::Entropy => entropy_cmd(cfg),
        Command::BowenRoot => bowen(cfg),
        Command::Lyapunov => lyapunov(cfg),
        Command::Classify => classify(cfg),
        Command::LocalPressure => local(cfg),
        Command::SkewCheck => skew(cfg),
        Command::Dimension => dimension(cfg),
        Command::Acceptance => unreachable!(),
    }
}

fn checked_schedule(cfg: &ExperimentConfig, sys: &SemigroupSystem) -> Result<Schedule, Failure> {
    let schedule = cfg.schedule()?;
    if samples_words(sys, &schedule) {
        cfg.require_seed("Monte-Carlo word averaging")?;
    }
    Ok(schedule)
}

fn pressure(cfg: &ExperimentConfig) -> Run {
    let sys = cfg.system()?;
    let cloud = cfg.cloud()?;
    let schedule = checked_schedule(cfg, &sys)?;
    let variant = cfg.params.variant.unwrap_or(Variant::Spanning);
    let mut out = Outcome::default();
    match &cfg.params.t_grid {
        None => {
            let est = match variant {
                Variant::Caratheodory => caratheodory_pressure(&sys, &cloud, &schedule)?,
                v => capacity_pressure(&sys, &cloud, &schedule, v)?,
            };
            out.summary.push(format!("P = {:.3} ± {:.2} ({variant}, eps = {})", est.value, schedule.consistency_tol, sig12(est.eps_used)));
            estimate_details(&est, &mut out);
            out.flag_all(&est.flags);
            out.files.push(("pressure.csv".into(), csv(|b| est.write_csv(b))));
        }
        Some(ts) => {
            let mut trace = String::from("t,pressure\n");
            for &t in ts {
                let est = pressure_at_t_with(&sys, &cloud, t, &schedule, variant)?;
                out.summary.push(format!("P({t}) = {:.3} ± {:.2}", est.value, schedule.consistency_tol));
                writeln!(trace, "{},{}", sig12(t), sig12(est.value)).expect("string");
                out.flag_all(&est.flags);
            }
            out.files.push(("pressure_trace.csv".into(), trace.into_bytes()));
        }
    }
    Ok(out)
}

fn entropy_cmd(cfg: &ExperimentConfig) -> Run {
    let sys = cfg.system()?;
    let cloud = cfg.cloud()?;
    let schedule = checked_schedule(cfg, &sys)?;
    let est = entropy(&sys, &cloud, &schedule)?;
    let mut out = Outcome::default();
    out.summary.push(format!("h = {:.3} ± {:.2}", est.value, schedule.consistency_tol));
    estimate_details(&est, &mut out);
    out.flag_all(&est.flags);
    out.files.push(("entropy.csv".into(), csv(|b| est.write_csv(b))));
    Ok(out)
}

fn bowen(cfg: &ExperimentConfig) -> Run {
    let sys = cfg.system()?;
    let cloud = cfg.cloud()?;
    let schedule = checked_schedule(cfg, &sys)?;
    let opts = cfg.bowen_options();
    let r = with_dimension_oracles(bowen_root(&sys, &cloud, &schedule, &opts)?, &sys, &cloud);
    let mut out = Outcome::default();
    out.summary.push(format!("t* = {:.2} ± {:.2}", r.t_star, 2.0 * opts.t_tol));
    out.summary.push(format!("h = {:.3}, alpha = {:.4}, beta = {:.4}", r.entropy, r.alpha, r.beta));
    if let Some(d) = r.dim_box {
        out.summary.push(format!("box dimension = {d:.3} (PROXY)"));
    }
    if let Some(d) = r.dim_moran {
        out.summary.push(format!("Moran dimension = {d:.4}"));
    }
    out.details.push(format!(
        "root {:.6}, half-bracket {:.2e}, P(root) = {:.4} (within p_tol: {})",
        r.t_star, r.t_err, r.p_at_root, r.p_within_tol
    ));
    out.flag_all(&r.flags);
    out.files.push(("bowen_trace.csv".into(), csv(|b| r.write_trace_csv(b))));
    Ok(out)
}

fn lyapunov(cfg: &ExperimentConfig) -> Run {
    let sys = cfg.system()?;
    let points = cfg.points()?;
    let n_max = cfg.params.n_max.unwrap_or(10);
    let exhaustive = sys.alphabet().word_count(n_max).is_some_and(|c| c <= DEFAULT_WORD_BUDGET as u128);
    let seed = if exhaustive { cfg.seed.unwrap_or(0) } else { cfg.require_seed("sampled words")? };
    let mut out = Outcome::default();
    let mut table = String::from("x,n,min,max,words,exhaustive\n");
    for &x in &points {
        let stats = length_stats(&sys, x, n_max, DEFAULT_WORD_BUDGET, seed)?;
        for s in &stats {
            writeln!(table, "{},{},{},{},{},{}", sig12(x), s.n, sig12(s.min), sig12(s.max), s.words, s.exhaustive).expect("string");
        }
        let last = stats.last().expect("n_max >= 1");
        out.summary.push(format!("x = {x}: lambda in [{:.4}, {:.4}] at n = {}", last.min, last.max, last.n));
    }
    out.files.push(("lyapunov.csv".into(), table.into_bytes()));
    Ok(out)
}

fn classify(cfg: &ExperimentConfig) -> Run {
    let sys = cfg.system()?;
    let points = cfg.points()?;
    let mut opts = ClassifyOptions::new(cfg.params.n_max.unwrap_or(10), cfg.params.tau.unwrap_or(0.01));
    opts.eps = cfg.params.tempered_eps;
    if sys.alphabet().word_count(opts.n_max).is_none_or(|c| c > opts.word_budget as u128) {
        opts.seed = cfg.require_seed("sampled words")?;
    }
    let mut out = Outcome::default();
    let mut table = String::from("x,n_max,tau,min_exponent,max_exponent,in_a_positive,margin,in_b,margin_nondecreasing,certified_a,certified_b\n");
    let opt = |b: Option<bool>| b.map_or("unknown".to_string(), |v| v.to_string());
    for &x in &points {
        let r = classify_point_with(&sys, x, &opts)?;
        let last = r.per_length.last().expect("n_max >= 1");
        writeln!(
            table,
            "{},{},{},{},{},{},{},{},{},{},{}",
            sig12(x),
            r.n_max,
            sig12(r.tau),
            sig12(last.min),
            sig12(last.max),
            r.in_a_positive,
            sig12(r.margin.margin),
            r.in_b,
            r.margin_nondecreasing,
            opt(r.certificate.in_a_positive),
            opt(r.certificate.in_b)
        )
        .expect("string");
        out.summary.push(format!(
            "x = {x}: A(0,inf) {} (certificate {}), B {} (certificate {}), horizon {}",
            r.in_a_positive,
            opt(r.certificate.in_a_positive),
            r.in_b,
            opt(r.certificate.in_b),
            r.n_max
        ));
        out.details.push(format!("x = {x}: {}", r.certificate.basis));
    }
    out.files.push(("classify.csv".into(), table.into_bytes()));
    Ok(out)
}

fn local(cfg: &ExperimentConfig) -> Run {
    let sys = cfg.system()?;
    let measure = cfg.measure()?;
    let mut opts = LocalOptions::new(
        cfg.params.horizons.clone().unwrap_or_else(|| vec![4, 6, 8, 10]),
        cfg.params.radii.clone().unwrap_or_else(|| vec![0.1, 0.05]),
    );
    opts.seed = cfg.require_seed("Monte-Carlo ball masses")?;
    opts.word_budget = cfg.schedule.word_budget;
    opts.exec = Exec::Parallel;
    let mut out = Outcome::default();
    let mut table = Vec::new();
    if let Some(k) = cfg.params.sandwich_points {
        let cloud = cfg.cloud()?;
        let schedule = checked_schedule(cfg, &sys)?;
        let s = sandwich_check(&measure, &sys, &cloud, &schedule, &opts, k, cfg.params.tol.unwrap_or(0.1))?;
        for (i, r) in s.reports.iter().enumerate() {
            let mut part = csv(|b| r.write_csv(b));
            if i > 0 {
                part = part.splitn(2, |&c| c == b'\n').nth(1).unwrap_or_default().to_vec();
            }
            table.extend(part);
            out.summary.push(format!("x = {}: P_lower = {:.3}, P_upper = {:.3}", sig12(r.x), r.p_lower, r.p_upper));
            out.flag_all(&r.flags);
        }
        out.summary.push(format!(
            "sandwich: inf P_lower = {:.3} <= P = {:.3} <= sup P_upper = {:.3} (tol {}): {}",
            s.inf_lower,
            s.pressure,
            s.sup_upper,
            s.tol,
            if s.pass { "pass" } else { "fail" }
        ));
        out.flag_all(&s.estimate.flags);
    } else {
        for (i, &x) in cfg.points()?.iter().enumerate() {
            let r = local_pressure(&measure, &sys, x, &opts)?;
            let mut part = csv(|b| r.write_csv(b));
            if i > 0 {
                part = part.splitn(2, |&c| c == b'\n').nth(1).unwrap_or_default().to_vec();
            }
            table.extend(part);
            out.summary.push(format!("x = {x}: P_lower = {:.3}, P_upper = {:.3}", r.p_lower, r.p_upper));
            out.details.push(format!("x = {x}: at the largest horizon {:.4}, {:.4}", r.lower_at_horizon, r.upper_at_horizon));
            out.flag_all(&r.flags);
        }
    }
    out.files.push(("local_pressure.csv".into(), table));
    Ok(out)
}

fn skew(cfg: &ExperimentConfig) -> Run {
    let sys = cfg.system()?;
    let cloud = cfg.cloud()?;
    let schedule = checked_schedule(cfg, &sys)?;
    let tol = cfg.params.tol.unwrap_or(0.1);
    let mode = cfg.params.skew_mode.unwrap_or(SkewMode::TwoSided);
    let mut out = Outcome::default();
    if cfg.system.shifts.is_some() {
        return Err(SchemaError::at("system.shifts", "skew-check takes the constant from params.c").into());
    }
    for (k, &c) in cfg.params.c.clone().unwrap_or_else(|| vec![0.0]).iter().enumerate() {
        let id = verify_skew_identity(&sys, cfg.system.potential, c, &cloud, &schedule, tol, mode)?;
        out.summary.push(format!(
            "c = {c}: skew = {:.3}, log m + fiber + c = {:.3}, |diff| = {:.3} (tol {tol}): {}; per-cell bounds {}",
            id.left,
            id.right,
            (id.left - id.right).abs(),
            if id.pass { "pass" } else { "fail" },
            if id.sandwich_holds { "hold" } else { "FAIL" }
        ));
        if !id.sandwich_holds {
            out.flag_all(&[Diagnostic::SandwichViolated]);
        }
        out.flag_all(&id.left_estimate.flags);
        out.flag_all(&id.fiber_estimate.flags);
        out.files.push((format!("skew_{k}.csv"), csv(|b| id.write_csv(b))));
    }
    Ok(out)
}

fn dimension(cfg: &ExperimentConfig) -> Run {
    let cloud = cfg.cloud()?;
    let scales = cfg.params.box_scales.clone().unwrap_or_else(|| default_box_scales(&cloud));
    let d = box_counting_dimension(&cloud, &scales)?;
    let mut out = Outcome::default();
    out.summary.push(format!("box dimension = {:.3} (PROXY, residual {:.2e})", d.value, d.residual));
    if let RegionSpec::CantorSymbolic { branches, allowed, .. } = &cfg.region {
        let m = moran_dimension(&vec![1.0 / *branches as f64; allowed.len()])?;
        out.summary.push(format!("Moran dimension = {m:.4}"));
    }
    let mut table = String::from("r,count\n");
    for (r, n) in &d.counts {
        writeln!(table, "{},{}", sig12(*r), n).expect("string");
    }
    out.files.push(("dimension.csv".into(), table.into_bytes()));
    Ok(out)
}

fn acceptance(cfg: Option<&ExperimentConfig>) -> Run {
    let ids = cfg.and_then(|c| c.params.criteria.clone()).unwrap_or_else(|| (1..=CRITERIA).collect());
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA) {
        return Err(SchemaError::at("params.criteria", format!("no criterion {bad}")).into());
    }
    let mut out = Outcome::default();
    let mut table = String::from("criterion,title,pass\n");
    for id in ids {
        let r = run_criterion(id, Exec::Parallel);
        writeln!(table, "{},\"{}\",{}", r.id, r.title, r.pass).expect("string");
        out.summary.push(r.to_string());
        for c in &r.checks {
            out.details.push(format!("criterion {id}: {} = {:.6} (target {:.6}, tol {})", c.label, c.value, c.target, c.tol));
        }
        if !r.pass {
            out.failed.push(id);
        }
    }
    out.files.push(("acceptance.csv".into(), table.into_bytes()));
    Ok(out)
}
