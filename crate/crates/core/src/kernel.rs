//! Orbit segments along words, Birkhoff sums, and the Bowen metric `d_w`.
//!
//! For `w = i_1 ... i_n` the orbit segment of `x` is the `n + 1` points
//! `x, f_{i_1} x, f_{i_2} f_{i_1} x, ..., f_{i_n} ... f_{i_1} x`; these are
//! exactly the images `f_{w'} x` over all suffixes `w'` of the reversed word
//! (the empty suffix included), which is what the Bowen metric maximizes over.

use crate::systems::SemigroupSystem;
use crate::words::{Symbol, Word};

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSegment {
    points: Vec<f64>,
}

impl OrbitSegment {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn last(&self) -> f64 {
        *self.points.last().expect("orbit segments are nonempty")
    }
}

pub fn orbit_segment(system: &SemigroupSystem, w: &Word, x: f64) -> OrbitSegment {
    let mut points = Vec::with_capacity(w.len() + 1);
    orbit_into(system, w.symbols(), x, &mut points);
    OrbitSegment { points }
}

/// Clears `out` and writes the `|w| + 1` orbit points of `x` into it.
#[inline]
pub fn orbit_into(system: &SemigroupSystem, w: &[Symbol], x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(x);
    let mut y = x;
    for &s in w {
        y = system.step(s, y);
        out.push(y);
    }
}

/// `S_w Phi(x) = phi_{i_1}(x) + phi_{i_2}(f_{i_1} x) + ... `; the final
/// orbit point carries no weight.
pub fn birkhoff_sum(system: &SemigroupSystem, w: &Word, x: f64) -> f64 {
    birkhoff_slice(system, w.symbols(), x)
}

#[inline]
pub fn birkhoff_slice(system: &SemigroupSystem, w: &[Symbol], x: f64) -> f64 {
    let mut y = x;
    let mut sum = 0.0;
    for &s in w {
        sum += system.phi(s, y);
        y = system.step(s, y);
    }
    sum
}

/// Birkhoff sum from a precomputed orbit (`orbit.len() == w.len() + 1`).
#[inline]
pub fn birkhoff_on_orbit(system: &SemigroupSystem, w: &[Symbol], orbit: &[f64]) -> f64 {
    w.iter().zip(orbit).map(|(&s, &y)| system.phi(s, y)).sum()
}

/// `d_w(x, y) = max_k d(orbit_k(x), orbit_k(y))` over all `|w| + 1` points.
pub fn bowen_distance(system: &SemigroupSystem, w: &Word, x: f64, y: f64) -> f64 {
    let mut a = x;
    let mut b = y;
    let mut dist = system.distance(a, b);
    for &s in w.symbols() {
        a = system.step(s, a);
        b = system.step(s, b);
        dist = dist.max(system.distance(a, b));
    }
    dist
}

/// `y` in the closed Bowen ball `B_w(x, delta)`.
pub fn in_bowen_ball(system: &SemigroupSystem, w: &Word, x: f64, delta: f64, y: f64) -> bool {
    let mut a = x;
    let mut b = y;
    if system.distance(a, b) > delta {
        return false;
    }
    for &s in w.symbols() {
        a = system.step(s, a);
        b = system.step(s, b);
        if system.distance(a, b) > delta {
            return false;
        }
    }
    true
}

/// Bowen distance between two precomputed orbits of equal length.
#[inline]
pub fn orbit_distance(system: &SemigroupSystem, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| system.distance(p, q))
        .fold(0.0, f64::max)
}

/// `orbit_distance(a, b) < eps` with early exit. The final coordinate is
/// tested first since it is the most expanded one.
#[inline]
pub(crate) fn orbits_within(system: &SemigroupSystem, a: &[f64], b: &[f64], eps: f64, closed: bool) -> bool {
    let inside = |d: f64| if closed { d <= eps } else { d < eps };
    let n = a.len();
    if !inside(system.distance(a[n - 1], b[n - 1])) {
        return false;
    }
    a[..n - 1]
        .iter()
        .zip(&b[..n - 1])
        .all(|(&p, &q)| inside(system.distance(p, q)))
}
