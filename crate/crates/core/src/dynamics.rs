//! Time evolution of the probe under thermalization.
//!
//! Populations and coherences decouple in the energy basis: populations follow
//! `ṗ = A_β p`, each coherence decays at its own rate `c_ij` while rotating at
//! `ω_ij`. The qubit case has a closed form, and the generalized amplitude
//! damping (GAD) channel provides the discrete-time comparison model.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{domain, Error, Result};
use crate::spectrum::{
    generator_from_rates, rate_matrix, rate_matrix_beta_derivative, thermal_distribution,
    transition_matrix, Bath, RateMatrix, Spectrum, TransitionMatrix,
};
use crate::{MaxAbs, C64};

/// Absolute tolerance on Hermiticity, trace and positivity of states.
pub const STATE_TOL: f64 = 1e-12;

/// Above this eigenvector-matrix condition number the population propagator
/// switches to scaling and squaring.
pub const EIGENVECTOR_CONDITION_LIMIT: f64 = 1e12;

/// Qubit initial state `(a, r, φ)`: excited population `a`, coherence fraction
/// `r` and coherence phase `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitInit {
    a: f64,
    r: f64,
    phi: f64,
}

impl QubitInit {
    pub fn new(a: f64, r: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return domain(format!("a must lie in [0, 1], got {a}"));
        }
        if !(0.0..=1.0).contains(&r) {
            return domain(format!("r must lie in [0, 1], got {r}"));
        }
        if !phi.is_finite() {
            return domain(format!("phi must be finite, got {phi}"));
        }
        // no coherence is possible on the poles
        let r = if a == 0.0 || a == 1.0 { 0.0 } else { r };
        Ok(Self {
            a,
            r,
            phi: phi.rem_euclid(TAU),
        })
    }

    pub fn diagonal(a: f64) -> Result<Self> {
        Self::new(a, 0.0, 0.0)
    }

    /// Bloch-angle form `a = sin²(θ/2)`.
    pub fn from_theta(theta: f64, r: f64, phi: f64) -> Result<Self> {
        if !(0.0..=TAU).contains(&theta) {
            return domain(format!("theta must lie in [0, 2π], got {theta}"));
        }
        let s = (theta / 2.0).sin();
        Self::new((s * s).clamp(0.0, 1.0), r, phi)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// `θ = 2 arcsin √a ∈ [0, π]`.
    pub fn theta(&self) -> f64 {
        2.0 * self.a.sqrt().asin()
    }

    /// `ρ12(0) = √((1-a)a) r e^{iφ}`.
    pub fn rho12(&self) -> C64 {
        C64::from_polar(((1.0 - self.a) * self.a).sqrt() * self.r, self.phi)
    }

    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::new(a, self.r, self.phi)
    }

    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(self.a, r, self.phi)
    }

    pub fn with_phi(&self, phi: f64) -> Result<Self> {
        Self::new(self.a, self.r, phi)
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        let c = self.rho12();
        DensityMatrix {
            m: DMatrix::from_row_slice(
                2,
                2,
                &[C64::new(1.0 - self.a, 0.0), c, c.conj(), C64::new(self.a, 0.0)],
            ),
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix in the energy basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() < 1 {
            return domain(format!(
                "density matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        let herm = (&m - m.adjoint()).max_abs();
        if herm > STATE_TOL {
            return domain(format!("density matrix is not Hermitian (defect {herm:e})"));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return domain(format!("density matrix trace is {tr}, expected 1"));
        }
        let rho = Self { m };
        let min_eig = rho.eigenvalues().min();
        if min_eig < -STATE_TOL {
            return domain(format!(
                "density matrix is not positive semidefinite (eigenvalue {min_eig:e})"
            ));
        }
        Ok(rho)
    }

    /// Diagonal state with the given populations.
    pub fn from_populations(p: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&p.map(|x| C64::new(x, 0.0))))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn populations(&self) -> DVector<f64> {
        self.m.diagonal().map(|z| z.re)
    }

    /// `ρ_d`: the diagonal part, itself a valid state.
    pub fn diagonal_part(&self) -> DensityMatrix {
        DensityMatrix {
            m: DMatrix::from_diagonal(&self.m.diagonal()),
        }
    }

    /// `ρ_coh = ρ - ρ_d`, a hollow Hermitian matrix.
    pub fn coherent_part(&self) -> DMatrix<C64> {
        let mut c = self.m.clone();
        c.fill_diagonal(C64::new(0.0, 0.0));
        c
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.hermitian_part()).eigenvalues
    }

    pub(crate) fn hermitian_part(&self) -> DMatrix<C64> {
        (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0)
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpMethod {
    /// Diagonalization of the detailed-balance symmetrized generator.
    Eigendecomposition,
    /// Padé scaling and squaring on the raw generator.
    ScalingAndSquaring,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagated {
    pub populations: DVector<f64>,
    pub method: ExpMethod,
}

/// Precomputed `e^{A t}` for repeated use over a time grid.
#[derive(Debug, Clone)]
pub struct PopulationPropagator {
    a: DMatrix<f64>,
    eigen: Option<SymmetrizedEigen>,
}

#[derive(Debug, Clone)]
struct SymmetrizedEigen {
    scale: DVector<f64>,
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl PopulationPropagator {
    pub fn new(a: &TransitionMatrix) -> Self {
        Self {
            a: a.matrix().clone(),
            eigen: symmetrize(a),
        }
    }

    pub fn method(&self) -> ExpMethod {
        if self.eigen.is_some() {
            ExpMethod::Eigendecomposition
        } else {
            ExpMethod::ScalingAndSquaring
        }
    }

    /// `e^{A t}`.
    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        match &self.eigen {
            Some(e) => {
                let mut v = e.vectors.clone();
                for (k, mut col) in v.column_iter_mut().enumerate() {
                    col *= (e.values[k] * t).exp();
                }
                let mut m = v * e.vectors.transpose();
                let n = m.nrows();
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] *= e.scale[i] / e.scale[j];
                    }
                }
                m
            }
            None => (&self.a * t).exp(),
        }
    }

    pub fn apply(&self, p0: &DVector<f64>, t: f64) -> DVector<f64> {
        self.matrix(t) * p0
    }
}

/// Detailed balance makes `D^{-1} A D` symmetric with `D = diag(√w)`. Returns
/// `None` when the weights do not symmetrize `A` or the similarity transform
/// is too ill-conditioned.
fn symmetrize(a: &TransitionMatrix) -> Option<SymmetrizedEigen> {
    let lw = a.balance_log_weights()?;
    let spread = lw.max() - lw.min();
    if spread / 2.0 > EIGENVECTOR_CONDITION_LIMIT.ln() {
        return None;
    }
    let centre = (lw.max() + lw.min()) / 2.0;
    let scale = lw.map(|l| ((l - centre) / 2.0).exp());
    let m = a.matrix();
    let n = a.dim();
    let s = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * scale[j] / scale[i]);
    let asym = (&s - s.transpose()).amax();
    if asym > 1e-10 * s.amax() {
        return None;
    }
    let sym = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    Some(SymmetrizedEigen {
        scale,
        vectors: eig.eigenvectors,
        values: eig.eigenvalues,
    })
}

fn check_probability_vector(p: &DVector<f64>, n: usize) -> Result<()> {
    if p.len() != n {
        return domain(format!("expected {n} populations, got {}", p.len()));
    }
    if p.iter().any(|x| !x.is_finite() || *x < -STATE_TOL) {
        return domain("populations must be finite and non-negative");
    }
    if (p.sum() - 1.0).abs() > 1e-10 {
        return domain(format!("populations sum to {}, expected 1", p.sum()));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return domain(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(())
}

/// `p(t) = e^{A t} p(0)`.
pub fn propagate_populations(a: &TransitionMatrix, p0: &DVector<f64>, t: f64) -> Result<Propagated> {
    check_probability_vector(p0, a.dim())?;
    check_time(t)?;
    let prop = PopulationPropagator::new(a);
    Ok(Propagated {
        populations: prop.apply(p0, t),
        method: prop.method(),
    })
}

/// `c_ij = ½ Σ_k (Γ_ki + Γ_kj)`.
pub fn coherence_decay_rate(rates: &RateMatrix, i: usize, j: usize) -> Result<f64> {
    let n = rates.dim();
    if i == j {
        return domain(format!("coherence decay rate needs i != j, got {i} = {j}"));
    }
    if i >= n || j >= n {
        return domain(format!("level index out of range for N = {n}"));
    }
    Ok(0.5 * (0..n).map(|k| rates.get(k, i) + rates.get(k, j)).sum::<f64>())
}

/// `ρ_ij(t) = e^{-c t} e^{i ω t} ρ_ij(0)`.
pub fn propagate_coherence(c: f64, omega: f64, rho_ij0: C64, t: f64) -> C64 {
    debug_assert!(c > 0.0 && t >= 0.0);
    rho_ij0 * C64::from_polar((-c * t).exp(), omega * t)
}

/// Closed-form parameters of a thermalizing qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitModel {
    pub omega12: f64,
    pub gamma: f64,
    /// Thermal excited population `π2`.
    pub pi2: f64,
    /// Relaxation eigenvalue `λ = γ / (π2 - π1) < 0`.
    pub lambda: f64,
}

impl QubitModel {
    pub fn new(spectrum: &Spectrum, bath: &Bath) -> Result<Self> {
        if spectrum.dim() != 2 {
            return domain(format!("qubit operation needs N = 2, got N = {}", spectrum.dim()));
        }
        let omega12 = spectrum.omega12();
        let x = bath.beta() * omega12;
        Ok(Self {
            omega12,
            gamma: bath.gamma(),
            pi2: 1.0 / (1.0 + x.exp()),
            // π1 - π2 = tanh(βω/2)
            lambda: -bath.gamma() / (0.5 * x).tanh(),
        })
    }

    /// `ρ22(t) = π2 - e^{λt}(π2 - a)`.
    pub fn excited_population(&self, a: f64, t: f64) -> f64 {
        self.pi2 - (self.lambda * t).exp() * (self.pi2 - a)
    }

    /// `ρ12(t) = e^{λt/2} e^{iω12 t} ρ12(0)`.
    pub fn coherence(&self, rho12_0: C64, t: f64) -> C64 {
        propagate_coherence(-0.5 * self.lambda, self.omega12, rho12_0, t)
    }

    /// `∂_β π2 = -(1 - π2) π2 ω12`.
    pub fn d_pi2(&self) -> f64 {
        -(1.0 - self.pi2) * self.pi2 * self.omega12
    }

    /// `F_∞ = ω12² π2 (1 - π2)`.
    pub fn thermal_variance(&self) -> f64 {
        self.omega12 * self.omega12 * self.pi2 * (1.0 - self.pi2)
    }

    /// Time after which every transient is below `e^{-20}`.
    pub fn settle_time(&self) -> f64 {
        20.0 / self.lambda.abs()
    }
}

/// Qubit state at time `t` from the closed-form solution.
pub fn qubit_state(init: &QubitInit, spectrum: &Spectrum, bath: &Bath, t: f64) -> Result<DensityMatrix> {
    check_time(t)?;
    let model = QubitModel::new(spectrum, bath)?;
    let rho22 = model.excited_population(init.a(), t);
    let c = model.coherence(init.rho12(), t);
    DensityMatrix::new(DMatrix::from_row_slice(
        2,
        2,
        &[C64::new(1.0 - rho22, 0.0), c, c.conj(), C64::new(rho22, 0.0)],
    ))
}

/// N-level state at time `t`: populations through `A_β`, coherences through
/// their individual decay rates.
pub fn evolve_state(spectrum: &Spectrum, bath: &Bath, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    check_time(t)?;
    let n = spectrum.dim();
    if rho0.dim() != n {
        return domain(format!("state has dimension {}, spectrum has {n}", rho0.dim()));
    }
    let rates = rate_matrix(spectrum, bath);
    let a = transition_matrix(&rates);
    let p = PopulationPropagator::new(&a).apply(&rho0.populations(), t);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(p[i], 0.0);
        for j in (i + 1)..n {
            let c = coherence_decay_rate(&rates, i, j)?;
            let z = propagate_coherence(c, spectrum.gap(i, j), rho0.get(i, j), t);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    DensityMatrix::new(m)
}

/// Analytic `∂_β ρ(t)` at fixed initial state for an N-level probe.
///
/// The population block uses the Fréchet derivative of the exponential,
/// read off the upper-right block of `exp([[A, ∂A], [0, A]] t)`.
pub fn state_beta_derivative(
    spectrum: &Spectrum,
    bath: &Bath,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<DMatrix<C64>> {
    check_time(t)?;
    let n = spectrum.dim();
    if rho0.dim() != n {
        return domain(format!("state has dimension {}, spectrum has {n}", rho0.dim()));
    }
    let rates = rate_matrix(spectrum, bath);
    let a = transition_matrix(&rates);
    let d_rates = rate_matrix_beta_derivative(spectrum, bath);
    let da = generator_from_rates(&d_rates);

    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a.matrix());
    block.view_mut((n, n), (n, n)).copy_from(a.matrix());
    block.view_mut((0, n), (n, n)).copy_from(&da);
    let exp = (block * t).exp();
    let dp = exp.view((0, n), (n, n)) * rho0.populations();

    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = C64::new(dp[i], 0.0);
        for j in (i + 1)..n {
            let c = coherence_decay_rate(&rates, i, j)?;
            let dc = 0.5 * (0..n).map(|k| d_rates[(k, i)] + d_rates[(k, j)]).sum::<f64>();
            let z = propagate_coherence(c, spectrum.gap(i, j), rho0.get(i, j), t) * (-t * dc);
            d[(i, j)] = z;
            d[(j, i)] = z.conj();
        }
    }
    Ok(d)
}

/// `β = ln(1 + 1/n12) / ω12`.
pub fn beta_from_n12(n12: f64, omega12: f64) -> Result<f64> {
    if !(n12.is_finite() && n12 > 0.0) {
        return domain(format!("n12 must be positive, got {n12}"));
    }
    if !(omega12.is_finite() && omega12 > 0.0) {
        return domain(format!("omega12 must be positive, got {omega12}"));
    }
    Ok((1.0 / n12).ln_1p() / omega12)
}

/// `n12 = 1 / (e^{β ω12} - 1)`.
pub fn n12_from_beta(beta: f64, omega12: f64) -> Result<f64> {
    crate::spectrum::thermal_ratio(beta, omega12)
}

/// Coupling rate matched to a GAD channel of dimensionless duration `τ̃`:
/// `γ = τ̃ ω12 / 2`.
pub fn gamma_from_tau_tilde(tau_tilde: f64, omega12: f64) -> Result<f64> {
    if !(tau_tilde.is_finite() && tau_tilde > 0.0) {
        return domain(format!("tau_tilde must be positive, got {tau_tilde}"));
    }
    Ok(tau_tilde * omega12 / 2.0)
}

/// Generalized amplitude damping channel with ground-state weight `p1` and
/// damping probability `p2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GadChannel {
    pub p1: f64,
    pub p2: f64,
    pub tau_tilde: f64,
    pub n12: f64,
}

/// `p1 = n12 / (2 n12 - 1)`, `p2 = 1 - e^{-(1 + n12) τ̃}`.
pub fn gad_params(n12: f64, tau_tilde: f64) -> Result<GadChannel> {
    if !(n12.is_finite() && n12 > 0.5) {
        return domain(format!("n12 must exceed 1/2 for p1 to be a probability, got {n12}"));
    }
    if !(tau_tilde.is_finite() && tau_tilde >= 0.0) {
        return domain(format!("tau_tilde must be non-negative, got {tau_tilde}"));
    }
    let ch = GadChannel {
        p1: n12 / (2.0 * n12 - 1.0),
        p2: -(-(1.0 + n12) * tau_tilde).exp_m1(),
        tau_tilde,
        n12,
    };
    ch.check_completeness()?;
    Ok(ch)
}

impl GadChannel {
    pub fn kraus(&self) -> [DMatrix<C64>; 4] {
        let (p1, p2) = (self.p1, self.p2);
        let k = |s: f64, e: [f64; 4]| {
            DMatrix::from_row_slice(2, 2, &e.map(|x| C64::new(s * x, 0.0)))
        };
        let keep = (1.0 - p2).sqrt();
        [
            k(p1.sqrt(), [1.0, 0.0, 0.0, keep]),
            k(p1.sqrt(), [0.0, p2.sqrt(), 0.0, 0.0]),
            k((1.0 - p1).sqrt(), [keep, 0.0, 0.0, 1.0]),
            k((1.0 - p1).sqrt(), [0.0, 0.0, p2.sqrt(), 0.0]),
        ]
    }

    /// `max |Σ K†K - 1|`.
    pub fn completeness_defect(&self) -> f64 {
        let sum = self
            .kraus()
            .iter()
            .fold(DMatrix::<C64>::zeros(2, 2), |acc, k| acc + k.adjoint() * k);
        (sum - DMatrix::<C64>::identity(2, 2)).max_abs()
    }

    fn check_completeness(&self) -> Result<()> {
        let defect = self.completeness_defect();
        if !(defect <= 1e-12) {
            return Err(Error::KrausCompleteness(defect));
        }
        Ok(())
    }

    /// Invariant populations `[p1, 1 - p1]`.
    pub fn fixed_point(&self) -> [f64; 2] {
        [self.p1, 1.0 - self.p1]
    }

    /// Ground population `(n + 1)/(2n + 1)` of the textbook channel, for comparison.
    pub fn textbook_ground_population(&self) -> f64 {
        (self.n12 + 1.0) / (2.0 * self.n12 + 1.0)
    }

    /// `p1 - (n + 1)/(2n + 1)`.
    pub fn stationary_discrepancy(&self) -> f64 {
        self.p1 - self.textbook_ground_population()
    }
}

/// `ρ' = Σ_k K_k ρ K_k†`.
pub fn gad_apply(ch: &GadChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != 2 {
        return domain(format!("GAD acts on qubits, got dimension {}", rho.dim()));
    }
    ch.check_completeness()?;
    let out = ch
        .kraus()
        .iter()
        .fold(DMatrix::<C64>::zeros(2, 2), |acc, k| acc + k * rho.matrix() * k.adjoint());
    DensityMatrix::new(out)
}

/// GAD populations next to master-equation populations for a probe starting
/// in the ground state.
///
/// The master equation runs with `β = ln(1 + 1/n12)/ω12`, `γ = τ̃ω12/2` for an
/// elapsed time `1/ω12`, the interval over which a jump of rate `Γ12`
/// accumulates the channel probability `p1 p2 ≈ Γ12/ω12`.
#[derive(Debug, Clone, PartialEq)]
pub struct GadComparison {
    pub n12: f64,
    pub tau_tilde: f64,
    pub omega12: f64,
    pub beta: f64,
    pub gamma: f64,
    pub elapsed_time: f64,
    pub gad: [f64; 2],
    pub master: [f64; 2],
    /// `|gad_k - master_k| / master_k`.
    pub relative_difference: [f64; 2],
}

impl GadComparison {
    pub fn max_relative_difference(&self) -> f64 {
        self.relative_difference[0].max(self.relative_difference[1])
    }
}

pub fn compare_gad_with_master_equation(n12: f64, omega12: f64, tau_tilde: f64) -> Result<GadComparison> {
    let ch = gad_params(n12, tau_tilde)?;
    let beta = beta_from_n12(n12, omega12)?;
    let gamma = gamma_from_tau_tilde(tau_tilde, omega12)?;
    let spectrum = Spectrum::qubit(omega12)?;
    let bath = Bath::new(beta, gamma)?;
    let ground = DensityMatrix::from_populations(&DVector::from_vec(vec![1.0, 0.0]))?;
    let g = gad_apply(&ch, &ground)?.populations();
    let elapsed_time = 1.0 / omega12;
    let a = transition_matrix(&rate_matrix(&spectrum, &bath));
    let m = propagate_populations(&a, &ground.populations(), elapsed_time)?.populations;
    let rel = |k: usize| (g[k] - m[k]).abs() / m[k].abs();
    Ok(GadComparison {
        n12,
        tau_tilde,
        omega12,
        beta,
        gamma,
        elapsed_time,
        gad: [g[0], g[1]],
        master: [m[0], m[1]],
        relative_difference: [rel(0), rel(1)],
    })
}

/// Thermal state `e^{-βH}/Z` as a density matrix.
pub fn thermal_state(spectrum: &Spectrum, beta: f64) -> Result<DensityMatrix> {
    DensityMatrix::from_populations(&thermal_distribution(spectrum, beta)?.pi)
}
