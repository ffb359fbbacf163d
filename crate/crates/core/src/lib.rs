//! Numerical thermodynamic formalism for free semigroup actions generated by
//! finitely many conformal maps of the circle (or unit interval).
//!
//! The crate estimates word-averaged topological pressure and entropy from
//! spanning/separated partition sums, solves Bowen's equation
//! `P_Z(G, -t log a) = 0` for a dimension estimate, computes Lyapunov
//! envelopes along words, local (measure-theoretic) pressures, and the
//! pressure of the associated skew product over the full shift.
//!
//! Orbits are always read left to right: for a word `w = i_1 i_2 ... i_n`
//! the orbit of `x` is `x, f_{i_1}(x), f_{i_2}(f_{i_1}(x)), ...`.

pub mod acceptance;
pub mod bowen;
pub mod error;
pub mod exec;
pub mod kernel;
pub mod localmeasure;
pub mod lyapunov;
pub mod pressure;
pub mod sets;
pub mod skew;
pub mod stats;
pub mod systems;
pub mod words;

pub use error::{Diagnostic, Error, Result};
pub use exec::Exec;
pub use systems::{ConformalMap, MapKind, MetricMode, Potential, SemigroupSystem};
pub use words::{Alphabet, Symbol, Word};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
