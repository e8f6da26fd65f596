//! Time-dependent correlation functions on both sides of the correspondence:
//! classical rho( prod_j Theta(xi_j)(S_{t_j} phi) ) by importance-weighted
//! Monte Carlo over a Gibbs ensemble, and quantum
//! rho_tau( prod_j Psi_tau^{t_j} Theta_tau(xi_j) ) by exact traces on the
//! truncated Fock space, plus the tau-sweeps, local-limit sweeps, and tail
//! tables that probe the large-tau limits.

use crate::classical::{mass, ratio_estimate, theta_observable, Ensemble, Estimate};
use crate::error::{Error, Result};
use crate::flow::{evolve_to_times, FlowParams};
use crate::fock::{
    build_hamiltonians, lift_operator, number_weight, suggest_n_max, two_body_from_potential,
    FockBasis, FockOperator, HamiltonianEig,
};
use crate::observable::Observable;
use crate::potential::{MollifierBase, Potential};
use crate::spectral::{Grid, Spectrum};
use num_complex::Complex64;

/// One factor of a correlation function: observe `xi` at time `t`.
#[derive(Debug, Clone)]
pub struct CorrelationTerm {
    pub xi: Observable,
    pub t: f64,
}

/// Optional multiplicative weight f(N) appended to the product.
pub type NumberWeightFn<'a> = &'a dyn Fn(f64) -> f64;

/// Classical correlation: importance-weighted mean of
/// prod_j Theta(xi_j)(S_{t_j} phi), with one trajectory per sample shared
/// across the requested times.
pub fn classical_correlation(
    terms: &[CorrelationTerm],
    ensemble: &Ensemble,
    spectrum: &Spectrum,
    params: &FlowParams,
    weight_fn: Option<NumberWeightFn>,
) -> Result<Estimate> {
    if terms.is_empty() {
        return Err(Error::InvalidParameter("need at least one correlation factor".into()));
    }
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let times: Vec<f64> = terms.iter().map(|term| term.t).collect();
    let mut values = Vec::with_capacity(ensemble.len());
    for sample in &ensemble.samples {
        let fields = evolve_to_times(sample, &times, &ensemble.potential, spectrum, params)?;
        let mut prod = Complex64::new(1.0, 0.0);
        for (term, field) in terms.iter().zip(&fields) {
            prod *= theta_observable(&term.xi, field)?;
        }
        if let Some(f) = weight_fn {
            prod *= f(mass(sample));
        }
        values.push(prod);
    }
    Ok(ratio_estimate(&values, &ensemble.weights))
}

/// Quantum correlation: exact normalized trace of the ordered product of
/// Heisenberg-evolved lifts (times an optional f(N_tau) weight) against
/// e^{-H - nu N_tau}.
pub fn quantum_correlation(
    terms: &[CorrelationTerm],
    tau: f64,
    basis: &FockBasis,
    h_eig: &HamiltonianEig,
    nu: f64,
    weight_fn: Option<NumberWeightFn>,
) -> Result<Complex64> {
    if terms.is_empty() {
        return Err(Error::InvalidParameter("need at least one correlation factor".into()));
    }
    let mut product: Option<FockOperator> = None;
    for term in terms {
        let lifted = lift_operator(&term.xi, tau, basis)?;
        let moved = h_eig.heisenberg_evolve(&lifted, term.t, tau);
        product = Some(match product {
            None => moved,
            Some(acc) => acc.mul(&moved),
        });
    }
    let mut op = product.unwrap();
    if let Some(f) = weight_fn {
        op = op.mul(&number_weight(f, tau, basis));
    }
    Ok(h_eig.expectation(&op, nu, tau, basis))
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub param: f64,
    pub value: Complex64,
    pub stderr: f64,
    pub reference: Complex64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// True when the gap fails to decrease somewhere beyond `skip` rows
    /// by more than the combined statistical allowance.
    pub fn non_decreasing_tail(&self, skip: usize) -> bool {
        self.rows
            .windows(2)
            .skip(skip)
            .any(|w| w[1].gap > w[0].gap + 3.0 * (w[0].stderr + w[1].stderr))
    }
}

/// Quantum-vs-classical gap over a tau schedule at fixed grid and potential.
/// For each tau the Fock cutoff is sized from the free-tail bound at
/// tolerance `tail_tol`, enlarged by `n_max_slack` to absorb the interaction.
#[allow(clippy::too_many_arguments)]
pub fn tau_sweep(
    terms: &[CorrelationTerm],
    grid: &Grid,
    potential: &Potential,
    taus: &[f64],
    classical_ref: Estimate,
    tail_tol: f64,
    n_max_slack: f64,
    weight_fn: Option<NumberWeightFn>,
) -> Result<SweepReport> {
    let spectrum = Spectrum::of_grid(grid);
    let two_body =
        if potential.is_zero() { None } else { Some(two_body_from_potential(potential, grid)) };
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let (n_free, _) = suggest_n_max(&spectrum.lambdas, 0.0, tau, tail_tol);
        let n_max = ((n_free as f64) * n_max_slack).ceil() as usize;
        let basis = FockBasis::new(grid.n_modes(), n_max)?;
        let (_, _, h_full) =
            build_hamiltonians(&spectrum.lambdas, two_body.as_ref(), tau, &basis)?;
        let eig = HamiltonianEig::new(&h_full, &basis)?;
        let value = quantum_correlation(terms, tau, &basis, &eig, 0.0, weight_fn)?;
        rows.push(SweepRow {
            param: tau,
            value,
            stderr: 0.0,
            reference: classical_ref.value,
            gap: (value - classical_ref.value).norm(),
        });
    }
    Ok(SweepReport { rows })
}

/// One row of the local-limit experiment with the coupled schedule
/// eps_tau = tau^{-eps_exponent}.
#[derive(Debug, Clone, Copy)]
pub struct LocalLimitRow {
    pub tau: f64,
    pub eps: f64,
    /// quantum correlation with the mollified kernel at (tau, eps)
    pub quantum: Complex64,
    /// classical correlation with the mollified kernel at eps
    pub classical_mollified: Complex64,
    pub classical_mollified_err: f64,
    /// classical correlation with the local delta kernel (the target)
    pub classical_local: Complex64,
    pub classical_local_err: f64,
    /// |quantum - classical_mollified|: the tau-limit gap at fixed eps
    pub gap_quantum: f64,
    /// |classical_mollified - classical_local|: the eps-limit gap
    pub gap_mollifier: f64,
    /// |quantum - classical_local|: the coupled-limit gap
    pub gap_total: f64,
}

/// Coupled tau -> infinity, eps -> 0 sweep toward the local-NLS correlation.
#[allow(clippy::too_many_arguments)]
pub fn local_limit_sweep(
    terms: &[CorrelationTerm],
    grid: &Grid,
    taus: &[f64],
    eps_exponent: f64,
    base: MollifierBase,
    sampler: &crate::classical::FreeFieldSampler,
    n_samples: usize,
    params: &FlowParams,
    tail_tol: f64,
    n_max_slack: f64,
) -> Result<Vec<LocalLimitRow>> {
    let spectrum = Spectrum::of_grid(grid);
    let local = Potential::local_delta(grid);
    let local_ens = Ensemble::build(sampler, local, n_samples);
    let local_est = classical_correlation(terms, &local_ens, &spectrum, params, None)?;
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let eps = tau.powf(-eps_exponent).min(1.0);
        let pot = Potential::mollified(grid, eps, base)?;
        let moll_ens = Ensemble::build(sampler, pot.clone(), n_samples);
        let moll_est = classical_correlation(terms, &moll_ens, &spectrum, params, None)?;
        let (n_free, _) = suggest_n_max(&spectrum.lambdas, 0.0, tau, tail_tol);
        let n_max = ((n_free as f64) * n_max_slack).ceil() as usize;
        let basis = FockBasis::new(grid.n_modes(), n_max)?;
        let two_body = two_body_from_potential(&pot, grid);
        let (_, _, h_full) =
            build_hamiltonians(&spectrum.lambdas, Some(&two_body), tau, &basis)?;
        let eig = HamiltonianEig::new(&h_full, &basis)?;
        let quantum = quantum_correlation(terms, tau, &basis, &eig, 0.0, None)?;
        rows.push(LocalLimitRow {
            tau,
            eps,
            quantum,
            classical_mollified: moll_est.value,
            classical_mollified_err: moll_est.stderr,
            classical_local: local_est.value,
            classical_local_err: local_est.stderr,
            gap_quantum: (quantum - moll_est.value).norm(),
            gap_mollifier: (moll_est.value - local_est.value).norm(),
            gap_total: (quantum - local_est.value).norm(),
        });
    }
    Ok(rows)
}

/// Smooth step that vanishes on [0, kc], rises over a relative width, and
/// saturates at 1: the tail weight G of the large-particle-number bounds.
pub fn smooth_tail_step(kc: f64, rel_width: f64) -> impl Fn(f64) -> f64 {
    let width = kc * rel_width;
    move |x: f64| {
        if x <= kc {
            0.0
        } else if x >= kc + width {
            1.0
        } else {
            let s = (x - kc) / width;
            s * s * (3.0 - 2.0 * s)
        }
    }
}

/// One row of the tail-bound table at threshold kc.
#[derive(Debug, Clone, Copy)]
pub struct TailRow {
    pub kc: f64,
    pub classical: f64,
    pub classical_err: f64,
    pub quantum: f64,
}

/// Measured |rho( prod Psi^t Theta(xi) G(N) )| on both sides along a kc
/// schedule; the bounds predict decay at least like 1/kc.
#[allow(clippy::too_many_arguments)]
pub fn tail_bound_check(
    terms: &[CorrelationTerm],
    kcs: &[f64],
    rel_width: f64,
    ensemble: &Ensemble,
    spectrum: &Spectrum,
    params: &FlowParams,
    tau: f64,
    basis: &FockBasis,
    h_eig: &HamiltonianEig,
) -> Result<Vec<TailRow>> {
    let mut rows = Vec::with_capacity(kcs.len());
    for &kc in kcs {
        let g = smooth_tail_step(kc, rel_width);
        let classical = classical_correlation(terms, ensemble, spectrum, params, Some(&g))?;
        let quantum = quantum_correlation(terms, tau, basis, h_eig, 0.0, Some(&g))?;
        rows.push(TailRow {
            kc,
            classical: classical.value.norm(),
            classical_err: classical.stderr,
            quantum: quantum.norm(),
        });
    }
    Ok(rows)
}

/// The adjoint-reversed term list: reversed order, adjoint kernels, same times.
pub fn conjugated_terms(terms: &[CorrelationTerm]) -> Vec<CorrelationTerm> {
    terms
        .iter()
        .rev()
        .map(|term| CorrelationTerm { xi: term.xi.adjoint(), t: term.t })
        .collect()
}
