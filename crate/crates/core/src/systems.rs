//! Conformal circle/interval maps, their conformal factors, and the
//! potential families evaluated along orbits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::words::{Alphabet, Symbol};

/// Base metric on `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// `min(|x - y|, 1 - |x - y|)`; mod-1 maps are continuous here.
    #[default]
    Circle,
    /// `|x - y|`.
    Interval,
}

impl MetricMode {
    #[inline]
    pub fn distance(self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs();
        match self {
            MetricMode::Circle => d.min(1.0 - d),
            MetricMode::Interval => d,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    /// `x -> k x mod 1`, integer `k >= 2`.
    LinearMod1 { slope: u32 },
    /// `x -> x + x^(1+s) mod 1`, `0 < s < 1`; indifferent fixed point at 0.
    MannevillePomeau { s: f64 },
    /// Full-branch piecewise linear map. Branch `j` has slope `slopes[j]` and
    /// width `1 / slopes[j]`; the widths must sum to one.
    PiecewiseLinearFull { slopes: Vec<f64> },
}

/// A validated map with its precomputed branch structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapKind", into = "MapKind")]
pub struct ConformalMap {
    kind: MapKind,
    /// Right endpoints of the branches of a piecewise map.
    cuts: Vec<f64>,
}

impl TryFrom<MapKind> for ConformalMap {
    type Error = Error;

    fn try_from(kind: MapKind) -> Result<Self> {
        ConformalMap::new(kind)
    }
}

impl From<ConformalMap> for MapKind {
    fn from(map: ConformalMap) -> Self {
        map.kind
    }
}

impl ConformalMap {
    pub fn new(kind: MapKind) -> Result<Self> {
        let mut cuts = Vec::new();
        match &kind {
            MapKind::LinearMod1 { slope } => {
                if *slope < 2 {
                    return Err(invalid(format!("linear_mod1 slope must be >= 2, got {slope}")));
                }
            }
            MapKind::MannevillePomeau { s } => {
                if !(*s > 0.0 && *s < 1.0) {
                    return Err(invalid(format!("manneville_pomeau needs 0 < s < 1, got {s}")));
                }
            }
            MapKind::PiecewiseLinearFull { slopes } => {
                if slopes.is_empty() || slopes.iter().any(|s| !(s.is_finite() && *s >= 1.0)) {
                    return Err(invalid("piecewise_linear_full slopes must be finite and >= 1"));
                }
                let mut acc = 0.0;
                for s in slopes {
                    acc += 1.0 / s;
                    cuts.push(acc);
                }
                if (acc - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!(
                        "piecewise_linear_full branch widths sum to {acc}, expected 1"
                    )));
                }
                *cuts.last_mut().unwrap() = 1.0;
            }
        }
        Ok(Self { kind, cuts })
    }

    pub fn linear(slope: u32) -> Self {
        Self::new(MapKind::LinearMod1 { slope }).expect("slope >= 2")
    }

    pub fn manneville_pomeau(s: f64) -> Self {
        Self::new(MapKind::MannevillePomeau { s }).expect("0 < s < 1")
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    /// Branch containing `x`. Branches are right-closed, `(c_j, c_{j+1}]`,
    /// with `0` assigned to the first branch.
    fn branch(&self, x: f64) -> usize {
        let j = self.cuts.partition_point(|&c| c < x);
        j.min(self.cuts.len() - 1)
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        let y = match &self.kind {
            MapKind::LinearMod1 { slope } => *slope as f64 * x,
            MapKind::MannevillePomeau { s } => x + x.powf(1.0 + s),
            MapKind::PiecewiseLinearFull { slopes } => {
                let j = self.branch(x);
                let left = if j == 0 { 0.0 } else { self.cuts[j - 1] };
                slopes[j] * (x - left)
            }
        };
        let r = y - y.floor();
        // y.floor() can leave r == 1.0 after rounding for y just below an integer
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    }

    /// Conformal factor `a(x) = |f'(x)|`.
    #[inline]
    pub fn factor(&self, x: f64) -> f64 {
        match &self.kind {
            MapKind::LinearMod1 { slope } => *slope as f64,
            MapKind::MannevillePomeau { s } => 1.0 + (1.0 + s) * x.powf(*s),
            MapKind::PiecewiseLinearFull { slopes } => slopes[self.branch(x)],
        }
    }

    /// `sup_x a(x)` over `[0, 1)`.
    pub fn sup_factor(&self) -> f64 {
        match &self.kind {
            MapKind::LinearMod1 { slope } => *slope as f64,
            MapKind::MannevillePomeau { s } => 2.0 + s,
            MapKind::PiecewiseLinearFull { slopes } => slopes.iter().copied().fold(0.0, f64::max),
        }
    }

    /// `inf_x a(x)` over `[0, 1)`.
    pub fn inf_factor(&self) -> f64 {
        match &self.kind {
            MapKind::LinearMod1 { slope } => *slope as f64,
            MapKind::MannevillePomeau { .. } => 1.0,
            MapKind::PiecewiseLinearFull { slopes } => {
                slopes.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// True when `a` is constant, so `log a` is known exactly everywhere.
    pub fn has_constant_factor(&self) -> bool {
        match &self.kind {
            MapKind::LinearMod1 { .. } => true,
            MapKind::MannevillePomeau { .. } => false,
            MapKind::PiecewiseLinearFull { slopes } => slopes.windows(2).all(|p| p[0] == p[1]),
        }
    }
}

/// A potential `phi_i` attached to one generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Potential {
    #[default]
    Zero,
    Constant(f64),
    /// `c * log a_i(x)`; `-t log a` is `ScaledLogFactor(-t)`.
    ScaledLogFactor(f64),
}

impl Potential {
    #[inline]
    pub fn eval(&self, map: &ConformalMap, x: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Constant(v) => v,
            Potential::ScaledLogFactor(c) => {
                if c == 0.0 {
                    0.0
                } else {
                    c * map.factor(x).ln()
                }
            }
        }
    }

    /// Adds a constant, keeping the kind when possible.
    pub fn shifted(&self, c: f64) -> Option<Potential> {
        match *self {
            Potential::Zero => Some(Potential::Constant(c)),
            Potential::Constant(v) => Some(Potential::Constant(v + c)),
            Potential::ScaledLogFactor(_) if c == 0.0 => Some(*self),
            Potential::ScaledLogFactor(_) => None,
        }
    }
}

/// The tuple `(G, Phi)`: `m` maps, one potential per map, and the metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupSystem {
    alphabet: Alphabet,
    maps: Vec<ConformalMap>,
    potentials: Vec<Potential>,
    /// Constant added to every potential evaluation.
    #[serde(default)]
    offsets: Vec<f64>,
    metric: MetricMode,
}

impl SemigroupSystem {
    pub fn new(maps: Vec<ConformalMap>, potentials: Vec<Potential>, metric: MetricMode) -> Result<Self> {
        let alphabet = Alphabet::new(maps.len())?;
        if potentials.len() != maps.len() {
            return Err(invalid(format!(
                "{} maps but {} potentials",
                maps.len(),
                potentials.len()
            )));
        }
        let offsets = vec![0.0; maps.len()];
        Ok(Self {
            alphabet,
            maps,
            potentials,
            offsets,
            metric,
        })
    }

    /// All generators share one potential kind.
    pub fn uniform(maps: Vec<ConformalMap>, potential: Potential, metric: MetricMode) -> Result<Self> {
        let potentials = vec![potential; maps.len()];
        Self::new(maps, potentials, metric)
    }

    /// Constant-slope maps `x -> k_i x mod 1` on the circle with zero potential.
    pub fn linear(slopes: &[u32]) -> Result<Self> {
        let maps = slopes
            .iter()
            .map(|&k| ConformalMap::new(MapKind::LinearMod1 { slope: k }))
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(maps, Potential::Zero, MetricMode::Circle)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn m(&self) -> usize {
        self.alphabet.size()
    }

    pub fn maps(&self) -> &[ConformalMap] {
        &self.maps
    }

    pub fn potentials(&self) -> &[Potential] {
        &self.potentials
    }

    pub fn metric(&self) -> MetricMode {
        self.metric
    }

    pub fn with_metric(&self, metric: MetricMode) -> Self {
        Self {
            metric,
            ..self.clone()
        }
    }

    pub fn with_potentials(&self, potentials: Vec<Potential>) -> Result<Self> {
        if potentials.len() != self.m() {
            return Err(invalid("potential count must equal map count"));
        }
        Ok(Self {
            potentials,
            offsets: vec![0.0; self.m()],
            ..self.clone()
        })
    }

    /// Same potential kind on every generator.
    pub fn with_potential(&self, potential: Potential) -> Self {
        Self {
            potentials: vec![potential; self.m()],
            offsets: vec![0.0; self.m()],
            ..self.clone()
        }
    }

    /// `Phi + c`: adds `shifts[i]` to `phi_i`.
    pub fn with_constant_shifts(&self, shifts: &[f64]) -> Result<Self> {
        if shifts.len() != self.m() {
            return Err(invalid("one shift per generator required"));
        }
        let offsets = self.offsets.iter().zip(shifts).map(|(a, b)| a + b).collect();
        Ok(Self {
            offsets,
            ..self.clone()
        })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// The geometric family `Phi = {log a_i}`.
    pub fn with_log_factor(&self) -> Self {
        self.with_potential(Potential::ScaledLogFactor(1.0))
    }

    /// `-t Phi` with `Phi` the geometric family.
    pub fn with_geometric_scaling(&self, t: f64) -> Self {
        self.with_potential(Potential::ScaledLogFactor(-t))
    }

    fn check_symbol(&self, i: Symbol) -> Result<()> {
        if self.alphabet.contains(i) {
            Ok(())
        } else {
            Err(Error::SymbolOutOfRange {
                symbol: i as usize,
                m: self.m(),
            })
        }
    }

    /// `f_i(x)`.
    pub fn apply_generator(&self, i: Symbol, x: f64) -> Result<f64> {
        self.check_symbol(i)?;
        Ok(self.maps[i as usize].apply(x))
    }

    /// `a_i(x)`.
    pub fn factor(&self, i: Symbol, x: f64) -> Result<f64> {
        self.check_symbol(i)?;
        Ok(self.maps[i as usize].factor(x))
    }

    /// `phi_i(x)`.
    pub fn potential_value(&self, i: Symbol, x: f64) -> Result<f64> {
        self.check_symbol(i)?;
        Ok(self.phi(i, x))
    }

    #[inline]
    pub(crate) fn step(&self, i: Symbol, x: f64) -> f64 {
        self.maps[i as usize].apply(x)
    }

    #[inline]
    pub(crate) fn phi(&self, i: Symbol, x: f64) -> f64 {
        let i = i as usize;
        self.potentials[i].eval(&self.maps[i], x) + self.offsets[i]
    }

    #[inline]
    pub(crate) fn log_factor(&self, i: Symbol, x: f64) -> f64 {
        self.maps[i as usize].factor(x).ln()
    }

    #[inline]
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        self.metric.distance(x, y)
    }

    /// `max_i sup_x a_i(x)`.
    pub fn max_factor(&self) -> f64 {
        self.maps.iter().map(|m| m.sup_factor()).fold(0.0, f64::max)
    }

    /// `max_i sup_x |phi_i(x)|` estimated on a grid of `grid` points.
    pub fn potential_sup_norm(&self, grid: usize) -> f64 {
        let zero = self.with_potential(Potential::Zero);
        potential_sup_distance(self, &zero, grid).unwrap_or(f64::NAN)
    }

    /// Modulus of continuity `sup{|phi_i(x) - phi_i(y)| : d(x,y) <= r}`
    /// estimated on a grid (exact zero for constant potentials).
    pub fn potential_modulus(&self, r: f64, grid: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, (pot, map)) in self.potentials.iter().zip(&self.maps).enumerate() {
            let constant = match pot {
                Potential::Zero | Potential::Constant(_) => true,
                Potential::ScaledLogFactor(c) => *c == 0.0 || map.has_constant_factor(),
            };
            if constant {
                continue;
            }
            let steps = grid.max(2);
            let h = 1.0 / steps as f64;
            let reach = (r / h).ceil() as usize;
            let vals: Vec<f64> = (0..steps).map(|k| self.phi(i as Symbol, k as f64 * h)).collect();
            for a in 0..steps {
                for off in 1..=reach.min(steps - 1) {
                    let b = (a + off) % steps;
                    if self.metric == MetricMode::Interval && a + off >= steps {
                        break;
                    }
                    worst = worst.max((vals[a] - vals[b]).abs());
                }
            }
        }
        worst
    }
}

/// `max_i sup_x |phi_i(x) - psi_i(x)|` over a uniform grid of `grid` points.
/// Both systems must have the same maps; constant-vs-constant pairs are exact.
pub fn potential_sup_distance(phi: &SemigroupSystem, psi: &SemigroupSystem, grid: usize) -> Result<f64> {
    if phi.m() != psi.m() {
        return Err(invalid("systems have different alphabets"));
    }
    if phi.maps != psi.maps {
        return Err(invalid("potential distance needs identical maps"));
    }
    let steps = grid.max(1);
    let mut worst: f64 = 0.0;
    for i in 0..phi.m() {
        let s = i as Symbol;
        for k in 0..steps {
            let x = k as f64 / steps as f64;
            worst = worst.max((phi.phi(s, x) - psi.phi(s, x)).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mp(s: f64) -> SemigroupSystem {
        SemigroupSystem::uniform(vec![ConformalMap::manneville_pomeau(s)], Potential::Zero, MetricMode::Circle)
            .unwrap()
    }

    #[test]
    fn apply_examples() {
        let d = SemigroupSystem::linear(&[2]).unwrap();
        assert!((d.apply_generator(0, 0.3).unwrap() - 0.6).abs() < 1e-15);
        let t = SemigroupSystem::linear(&[3]).unwrap();
        assert_eq!(t.apply_generator(0, 0.5).unwrap(), 0.5);
        assert_eq!(mp(0.5).apply_generator(0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            d.apply_generator(1, 0.1),
            Err(Error::SymbolOutOfRange { symbol: 1, m: 1 })
        ));
    }

    #[test]
    fn factor_examples() {
        let t = SemigroupSystem::linear(&[3]).unwrap();
        for x in [0.0, 0.2, 0.9] {
            assert_eq!(t.factor(0, x).unwrap(), 3.0);
        }
        assert_eq!(mp(0.4).factor(0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn factor_matches_finite_difference() {
        let maps = vec![
            ConformalMap::linear(2),
            ConformalMap::linear(5),
            ConformalMap::manneville_pomeau(0.3),
            ConformalMap::manneville_pomeau(0.8),
            ConformalMap::new(MapKind::PiecewiseLinearFull {
                slopes: vec![2.0, 4.0, 4.0],
            })
            .unwrap(),
        ];
        let sys = SemigroupSystem::uniform(maps, Potential::Zero, MetricMode::Circle).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-8;
        let mut checked = 0;
        while checked < 500 {
            let i = rng.gen_range(0..sys.m()) as Symbol;
            let x: f64 = rng.gen_range(0.0..1.0 - 2.0 * h);
            let fx = sys.apply_generator(i, x).unwrap();
            let fxh = sys.apply_generator(i, x + h).unwrap();
            let fd = sys.distance(fx, fxh) / h;
            // skip increments straddling a branch point or mod-1 wrap of the map
            let map = &sys.maps()[i as usize];
            let smooth = match map.kind() {
                MapKind::PiecewiseLinearFull { .. } => map.factor(x) == map.factor(x + h),
                _ => true,
            };
            if !smooth {
                continue;
            }
            let a = sys.factor(i, x).unwrap();
            assert!((fd - a).abs() < 1e-6 * a.max(1.0) + 1e-6, "map {i} x {x}: fd {fd} a {a}");
            checked += 1;
        }
    }

    #[test]
    fn factors_positive_and_finite() {
        let maps = vec![
            ConformalMap::linear(2),
            ConformalMap::linear(3),
            ConformalMap::manneville_pomeau(0.5),
            ConformalMap::new(MapKind::PiecewiseLinearFull { slopes: vec![1.5, 3.0] }).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for map in &maps {
            for _ in 0..10_000 {
                let x: f64 = rng.gen_range(0.0..1.0);
                let a = map.factor(x);
                assert!(a > 0.0 && a.is_finite());
                let y = map.apply(x);
                assert!((0.0..1.0).contains(&y));
            }
        }
    }

    #[test]
    fn manneville_pomeau_factor_at_least_one() {
        for s in [0.1, 0.5, 0.9] {
            let map = ConformalMap::manneville_pomeau(s);
            for k in 0..=10_000 {
                let x = k as f64 / 10_001.0;
                assert!(map.factor(x) >= 1.0);
            }
        }
    }

    #[test]
    fn piecewise_branch_cuts_go_right_closed() {
        let map = ConformalMap::new(MapKind::PiecewiseLinearFull { slopes: vec![2.0, 4.0, 4.0] }).unwrap();
        // 0.5 closes the first branch
        assert_eq!(map.factor(0.5), 2.0);
        assert_eq!(map.apply(0.5), 0.0);
        assert_eq!(map.factor(0.5 + 1e-12), 4.0);
        assert!((map.apply(0.6) - 0.4).abs() < 1e-12);
        assert!(ConformalMap::new(MapKind::PiecewiseLinearFull { slopes: vec![2.0, 3.0] }).is_err());
    }

    #[test]
    fn potential_values() {
        let d = SemigroupSystem::linear(&[2]).unwrap();
        assert_eq!(d.potential_value(0, 0.4).unwrap(), 0.0);
        let g = d.with_potential(Potential::ScaledLogFactor(-1.0));
        assert!((g.potential_value(0, 0.4).unwrap() + 2f64.ln()).abs() < 1e-15);
        let m = mp(0.5).with_log_factor();
        assert_eq!(m.potential_value(0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sup_distances() {
        let d = SemigroupSystem::linear(&[2, 2]).unwrap();
        let c = d.with_potential(Potential::Constant(0.3));
        assert!((potential_sup_distance(&d, &c, 257).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(potential_sup_distance(&c, &c, 257).unwrap(), 0.0);

        let one = SemigroupSystem::linear(&[2]).unwrap();
        let a = one.with_potential(Potential::ScaledLogFactor(-1.0));
        let b = one.with_potential(Potential::ScaledLogFactor(-1.1));
        let want = 0.1 * 2f64.ln();
        assert!((potential_sup_distance(&a, &b, 257).unwrap() - want).abs() < 1e-12);
    }
}
