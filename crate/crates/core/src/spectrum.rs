//! Thermal model of the probe: levels, bath, transition rates and the population
//! generator `A_β`.
//!
//! Levels are indexed from zero in code. `Γ[i][j]` is the rate of the jump
//! `j → i`; downward jumps (`i < j`) run at `γ(n_ij + 1)` and upward jumps at
//! `γ n_ji`, with `n` the Bose occupation of the gap. The generator has
//! `a_ij = Γ_ij` off the diagonal and `a_jj = -Σ_k Γ_kj`, so every column sums
//! to zero and the Gibbs distribution spans its kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::C64;

/// Relative tolerance (against the spectral norm) under which an eigenvalue of
/// `A_β` counts as zero.
pub const NULL_EIGENVALUE_RTOL: f64 = 1e-8;

/// Strictly increasing energy levels `ε_1 < … < ε_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    energies: Vec<f64>,
}

impl Spectrum {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.len() < 2 {
            return domain(format!(
                "a spectrum needs at least two levels, got {}",
                energies.len()
            ));
        }
        if let Some(e) = energies.iter().find(|e| !e.is_finite()) {
            return domain(format!("energy {e} is not finite"));
        }
        if let Some(w) = energies.windows(2).find(|w| w[0] >= w[1]) {
            return domain(format!(
                "energies must be strictly increasing, found {} followed by {}",
                w[0], w[1]
            ));
        }
        Ok(Self { energies })
    }

    /// Two-level spectrum `{0, ω12}`.
    pub fn qubit(omega12: f64) -> Result<Self> {
        Self::new(vec![0.0, omega12])
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `ω_ij = ε_j - ε_i`, positive for `i < j`.
    pub fn gap(&self, i: usize, j: usize) -> f64 {
        self.energies[j] - self.energies[i]
    }

    /// Gap between the two lowest levels.
    pub fn omega12(&self) -> f64 {
        self.gap(0, 1)
    }

    /// Same level spacing, every energy moved by `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        Self::new(self.energies.iter().map(|e| e + offset).collect())
    }
}

/// Thermal reservoir: inverse temperature `β` and coupling rate `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bath {
    beta: f64,
    gamma: f64,
}

impl Bath {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return domain(format!("beta must be positive and finite, got {beta}"));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return domain(format!("gamma must be positive and finite, got {gamma}"));
        }
        Ok(Self { beta, gamma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(beta, self.gamma)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.beta, gamma)
    }
}

/// Bose occupation `n = 1 / (e^{βω} - 1)` of a gap `ω` at inverse temperature `β`.
pub fn thermal_ratio(beta: f64, omega: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return domain(format!("beta must be positive, got {beta}"));
    }
    if !(omega.is_finite() && omega > 0.0) {
        return domain(format!("gap must be positive, got {omega}"));
    }
    Ok(occupation(beta * omega))
}

fn occupation(x: f64) -> f64 {
    1.0 / x.exp_m1()
}

/// `∂_β n = -ω n (n + 1)`.
fn occupation_beta_derivative(beta: f64, omega: f64) -> f64 {
    let n = occupation(beta * omega);
    -omega * n * (n + 1.0)
}

/// Gibbs populations `π_k = e^{-βε_k} / Z_β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalDistribution {
    pub pi: DVector<f64>,
    /// `ln Z_β`, kept in log form so that large `β ε` cannot overflow.
    pub log_partition: f64,
}

impl ThermalDistribution {
    pub fn partition(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn mean_energy(&self, spectrum: &Spectrum) -> f64 {
        self.pi
            .iter()
            .zip(spectrum.energies())
            .map(|(p, e)| p * e)
            .sum()
    }
}

pub fn thermal_distribution(spectrum: &Spectrum, beta: f64) -> Result<ThermalDistribution> {
    if !(beta.is_finite() && beta > 0.0) {
        return domain(format!("beta must be positive, got {beta}"));
    }
    let e0 = spectrum.energies()[0];
    let weights = DVector::from_iterator(
        spectrum.dim(),
        spectrum.energies().iter().map(|e| (-beta * (e - e0)).exp()),
    );
    let z_shifted = weights.sum();
    Ok(ThermalDistribution {
        pi: weights / z_shifted,
        log_partition: z_shifted.ln() - beta * e0,
    })
}

/// Jump rates `Γ_ij` (from `j` to `i`) with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    gamma_rates: DMatrix<f64>,
}

impl RateMatrix {
    pub fn dim(&self) -> usize {
        self.gamma_rates.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma_rates[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.gamma_rates
    }
}

pub fn rate_matrix(spectrum: &Spectrum, bath: &Bath) -> RateMatrix {
    let n = spectrum.dim();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let occ = occupation(bath.beta() * spectrum.gap(i, j));
            g[(i, j)] = bath.gamma() * (occ + 1.0);
            g[(j, i)] = bath.gamma() * occ;
        }
    }
    RateMatrix { gamma_rates: g }
}

/// Elementwise `∂_β Γ_ij` at fixed `γ` and spectrum.
pub fn rate_matrix_beta_derivative(spectrum: &Spectrum, bath: &Bath) -> DMatrix<f64> {
    let n = spectrum.dim();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dn = occupation_beta_derivative(bath.beta(), spectrum.gap(i, j));
            d[(i, j)] = bath.gamma() * dn;
            d[(j, i)] = bath.gamma() * dn;
        }
    }
    d
}

/// Population generator `A_β`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    a: DMatrix<f64>,
}

pub fn transition_matrix(rates: &RateMatrix) -> TransitionMatrix {
    TransitionMatrix {
        a: generator_from_rates(rates.as_matrix()),
    }
}

/// Builds `a_ij = Γ_ij`, `a_jj = -Σ_k Γ_kj` from any zero-diagonal rate array.
pub(crate) fn generator_from_rates(rates: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = rates.clone();
    for j in 0..a.ncols() {
        a[(j, j)] = 0.0;
        let out: f64 = a.column(j).iter().sum();
        a[(j, j)] = -out;
    }
    a
}

impl TransitionMatrix {
    /// Wraps an arbitrary square matrix without enforcing the generator
    /// invariants; used to feed corrupted models to the validators.
    pub fn from_raw(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() < 2 {
            return domain(format!(
                "transition matrix must be square with N >= 2, got {}x{}",
                a.nrows(),
                a.ncols()
            ));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return domain("transition matrix has non-finite entries");
        }
        Ok(Self { a })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn spectral_norm(&self) -> f64 {
        self.a.clone().svd(false, false).singular_values.max()
    }

    /// Largest `|Σ_i a_ij|` over the columns.
    pub fn max_column_sum(&self) -> f64 {
        self.a
            .column_iter()
            .map(|c| c.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Positive off-diagonal entries and zero column sums (relative to the
    /// largest entry).
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.a[(i, j)] <= 0.0 {
                    return Err(Error::ModelIntegrity {
                        check: "positive-off-diagonal",
                        detail: format!("a[{i}][{j}] = {} is not positive", self.a[(i, j)]),
                    });
                }
            }
        }
        let scale = self.a.amax().max(f64::MIN_POSITIVE);
        let worst = self.max_column_sum();
        if worst > 1e-12 * scale {
            return Err(Error::ModelIntegrity {
                check: "column-sum",
                detail: format!("a column sums to {worst:e}"),
            });
        }
        Ok(())
    }

    /// Log-weights `ln w_k` such that `a_ij w_j = a_ji w_i` holds along the
    /// chain of neighbouring levels. `None` if a neighbouring rate vanishes.
    pub(crate) fn balance_log_weights(&self) -> Option<DVector<f64>> {
        let n = self.dim();
        let mut lw = DVector::zeros(n);
        for k in 0..n - 1 {
            let up = self.a[(k + 1, k)];
            let down = self.a[(k, k + 1)];
            if !(up > 0.0 && down > 0.0) {
                return None;
            }
            lw[k + 1] = lw[k] + up.ln() - down.ln();
        }
        Some(lw)
    }
}

/// Null vector of `A_β`, normalized to a probability vector.
///
/// The kernel is read off the right singular vector of the smallest singular
/// value. Fails with [`Error::NoStationaryState`] when no eigenvalue lies
/// within `1e-8 ‖A‖` of zero.
pub fn stationary_distribution(a: &TransitionMatrix) -> Result<DVector<f64>> {
    let svd = a.matrix().clone().svd(false, true);
    let norm = svd.singular_values.max();
    let tolerance = NULL_EIGENVALUE_RTOL * norm;
    let smallest = a
        .matrix()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    if smallest > tolerance {
        return Err(Error::NoStationaryState {
            smallest,
            tolerance,
        });
    }
    let v_t = svd.v_t.expect("right singular vectors requested");
    let k = svd.singular_values.imin();
    let v: DVector<f64> = v_t.row(k).transpose();
    let total = v.sum();
    if total == 0.0 {
        return Err(Error::NoStationaryState {
            smallest,
            tolerance,
        });
    }
    let pi = v / total;
    if let Some(bad) = pi.iter().find(|p| **p < -1e-10) {
        return Err(Error::ModelIntegrity {
            check: "stationary-sign",
            detail: format!("null vector has a negative component {bad:e}"),
        });
    }
    Ok(pi)
}

/// Gershgorin disc built from the `j`-th column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GershgorinDisc {
    pub center: f64,
    pub radius: f64,
}

impl GershgorinDisc {
    pub fn contains(&self, z: C64, slack: f64) -> bool {
        (z - C64::new(self.center, 0.0)).norm() <= self.radius + slack
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Eigenvalues sorted by decreasing real part.
    pub eigenvalues: Vec<C64>,
    pub norm: f64,
    pub null_tolerance: f64,
    pub null_count: usize,
    pub negative_count: usize,
    pub discs: Vec<GershgorinDisc>,
}

impl SpectralReport {
    /// Eigenvalues, counts and discs, without judging them.
    pub fn compute(a: &TransitionMatrix) -> Self {
        let m = a.matrix();
        let norm = a.spectral_norm();
        let null_tolerance = NULL_EIGENVALUE_RTOL * norm;
        let mut eigenvalues: Vec<C64> = m.complex_eigenvalues().iter().copied().collect();
        eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re));
        let null_count = eigenvalues
            .iter()
            .filter(|z| z.norm() <= null_tolerance)
            .count();
        let negative_count = eigenvalues
            .iter()
            .filter(|z| z.norm() > null_tolerance && z.re < 0.0)
            .count();
        let discs = (0..a.dim())
            .map(|j| GershgorinDisc {
                center: m[(j, j)],
                radius: (0..a.dim())
                    .filter(|&i| i != j)
                    .map(|i| m[(i, j)].abs())
                    .sum(),
            })
            .collect();
        Self {
            eigenvalues,
            norm,
            null_tolerance,
            null_count,
            negative_count,
            discs,
        }
    }

    pub fn verify(&self) -> Result<()> {
        let n = self.eigenvalues.len();
        if self.null_count != 1 {
            return Err(Error::ModelIntegrity {
                check: "null-eigenvalue-count",
                detail: format!(
                    "expected exactly one eigenvalue within {:e} of zero, found {}",
                    self.null_tolerance, self.null_count
                ),
            });
        }
        if self.negative_count != n - 1 {
            return Err(Error::ModelIntegrity {
                check: "negative-eigenvalue-count",
                detail: format!(
                    "expected {} eigenvalues with negative real part, found {}",
                    n - 1,
                    self.negative_count
                ),
            });
        }
        Ok(())
    }

    pub fn in_gershgorin_union(&self, z: C64, slack: f64) -> bool {
        self.discs.iter().any(|d| d.contains(z, slack))
    }

    pub fn trace(&self) -> f64 {
        self.discs.iter().map(|d| d.center).sum()
    }
}

/// Full eigenvalue report; errors if the single-null / N-1-negative structure
/// is violated.
pub fn spectral_report(a: &TransitionMatrix) -> Result<SpectralReport> {
    let report = SpectralReport::compute(a);
    report.verify()?;
    Ok(report)
}

/// Largest relative violation of `a_ij π_j = a_ji π_i` over `i ≠ j`.
pub fn detailed_balance_residual(a: &TransitionMatrix, pi: &DVector<f64>) -> f64 {
    let m = a.matrix();
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let lhs = m[(i, j)] * pi[j];
            let rhs = m[(j, i)] * pi[i];
            let scale = lhs.abs().max(rhs.abs());
            if scale > 0.0 {
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
    }
    worst
}
