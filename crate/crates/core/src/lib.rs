//! Nonequilibrium thermometry with an N-level probe weakly coupled to a thermal bath.
//!
//! The crate covers the full pipeline from the thermal model to estimation:
//!
//! - [`spectrum`]: energy levels, thermal ratios, transition rates, the population
//!   generator `A_β` and its spectral guarantees.
//! - [`dynamics`]: population and coherence propagation, the closed-form qubit
//!   solution and the generalized amplitude damping channel.
//! - [`qfi`]: β-derivatives of the evolved state, symmetric logarithmic derivatives
//!   and the quantum Fisher information, including its split into a diagonal part
//!   and a coherence gain.
//! - [`metrology`]: QFI time traces, optimal measurement time and initial state,
//!   region classification and a Monte Carlo Cramér–Rao harness.
//! - [`cli`]: configuration and the subcommands of the `thermometry` binary.
//!
//! Units follow `ħ = 1`; energies and rates are dimensionless.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod metrology;
pub mod qfi;
pub mod spectrum;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Largest entry modulus of a complex matrix.
pub(crate) trait MaxAbs {
    fn max_abs(&self) -> f64;
}

impl MaxAbs for nalgebra::DMatrix<C64> {
    fn max_abs(&self) -> f64 {
        self.iter()
            .map(|z| z.norm())
            .fold(0.0, |m, x| if x.is_nan() || x > m { x } else { m })
    }
}
