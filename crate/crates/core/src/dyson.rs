//! Schwinger-Dyson expansion of time-evolved lifted observables.
//!
//! The evolved lift is expanded into static lifts of coefficient kernels
//! built from nested once-contracted brackets of the free-evolved two-body
//! kernel with the free-evolved observable,
//!
//! ```text
//! terms[j] = i^j p (p+1) .. (p+j-1)
//!            ∫_{0<=s_j<=..<=s_1<=t} [W_{s_j}, [ .. [W_{s_1}, xi_t]_1 .. ]_1]_1 ds,
//! ```
//!
//! with the simplex integrals evaluated by tensorized Gauss-Legendre
//! quadrature. The same coefficients feed the quantum check (against exact
//! Heisenberg evolution on a truncated Fock space) and the classical check
//! (against the NLS flow on Gibbs samples): one construction, two consumers.

use crate::classical::{mass, theta_observable, Ensemble};
use crate::error::{Error, Result};
use crate::flow::{evolve, FlowParams};
use crate::observable::Observable;
use crate::spectral::Spectrum;
use num_complex::Complex64;

/// Convergence radius for the expansion at particle-density cutoff `kc` and
/// interaction strength `w_norm`, from the term bound (2 e kc w |t|)^j with
/// a safety factor of one half.
pub fn convergence_radius(kc: f64, w_norm: f64) -> f64 {
    if kc <= 0.0 || w_norm <= 0.0 {
        return f64::INFINITY;
    }
    0.5 / (2.0 * std::f64::consts::E * kc * w_norm)
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=(n + 1) / 2 {
        // Newton iteration from the Chebyshev guess on [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            pp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        out.push((x, w));
        if i != n + 1 - i {
            out.push((-x, w));
        }
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out.into_iter().map(|(x, w)| ((x + 1.0) / 2.0, w / 2.0)).collect()
}

/// One expansion kernel per order; `terms[j]` acts on `base.particles + j`
/// particles. The unevolved observable and the time are kept for checks.
#[derive(Debug, Clone)]
pub struct DysonSeries {
    pub base: Observable,
    pub t: f64,
    pub terms: Vec<Observable>,
    pub quadrature_order: usize,
}

/// Single expansion step: the bracket [W_{s_w}, xi_{s_xi}]_1 of free-evolved
/// kernels, the integrand from which the series is nested.
pub fn dyson_step(
    xi: &Observable,
    two_body: &Observable,
    s_w: f64,
    s_xi: f64,
    spectrum: &[f64],
) -> Result<Observable> {
    let w_s = two_body.free_evolved(spectrum, s_w)?;
    let xi_s = xi.free_evolved(spectrum, s_xi)?;
    w_s.bracket(&xi_s, 1)
}

/// Build the coefficient kernels for orders 0..=j_max.
///
/// `kc` is the particle-density cutoff the expansion is used under and
/// `w_norm` the interaction norm; |t| must stay below the reported
/// convergence radius, otherwise the series is refused and direct evolution
/// should be used instead.
#[allow(clippy::too_many_arguments)]
pub fn dyson_coefficients(
    xi: &Observable,
    two_body: &Observable,
    t: f64,
    j_max: usize,
    quadrature_order: usize,
    spectrum: &[f64],
    kc: f64,
    w_norm: f64,
) -> Result<DysonSeries> {
    let t0 = convergence_radius(kc, w_norm);
    if t.abs() >= t0 {
        return Err(Error::OutsideConvergenceRadius { t, t0 });
    }
    if quadrature_order < 2 {
        return Err(Error::InvalidParameter("quadrature order must be >= 2".into()));
    }
    let p = xi.particles;
    let xi_t = xi.free_evolved(spectrum, t)?;
    let mut terms: Vec<Observable> = Vec::with_capacity(j_max + 1);
    terms.push(xi_t.clone());
    for j in 1..=j_max {
        terms.push(Observable {
            particles: p + j,
            modes: xi.modes,
            kernel: crate::linalg::CMatrix::zeros(
                Observable::dim(xi.modes, p + j),
                Observable::dim(xi.modes, p + j),
            ),
        });
    }
    if j_max > 0 && two_body.kernel.max_abs() > 0.0 {
        let nodes = gauss_legendre_unit(quadrature_order);
        descend(1, j_max, t, 1.0, &xi_t, two_body, spectrum, &nodes, &mut terms)?;
        // prefactors i^j p (p+1) ... (p+j-1)
        let mut rising = 1.0;
        for (j, term) in terms.iter_mut().enumerate().skip(1) {
            rising *= (p + j - 1) as f64;
            let phase = Complex64::i().powu(j as u32);
            *term = term.scale(phase * rising);
        }
    }
    Ok(DysonSeries { base: xi.clone(), t, terms, quadrature_order })
}

#[allow(clippy::too_many_arguments)]
fn descend(
    level: usize,
    j_max: usize,
    s_prev: f64,
    weight_prev: f64,
    g_prev: &Observable,
    two_body: &Observable,
    spectrum: &[f64],
    nodes: &[(f64, f64)],
    terms: &mut [Observable],
) -> Result<()> {
    for &(x, glw) in nodes {
        let s = s_prev * x;
        let weight = weight_prev * glw * s_prev; // Jacobian ds = s_prev dx
        let w_s = two_body.free_evolved(spectrum, s)?;
        let g = w_s.bracket(g_prev, 1)?;
        terms[level] = terms[level].add(&g.scale(Complex64::new(weight, 0.0)))?;
        if level < j_max {
            descend(level + 1, j_max, s, weight, &g, two_body, spectrum, nodes, terms)?;
        }
    }
    Ok(())
}

/// Per-order truncation errors of the quantum expansion:
/// errs[L] = || (Psi_tau^t Theta(xi) - sum_{j<=L} Theta(terms[j])) restricted
/// to sectors <= n_cut ||.
pub fn dyson_quantum_errors(
    series: &DysonSeries,
    tau: f64,
    basis: &crate::fock::FockBasis,
    h_eig: &crate::fock::HamiltonianEig,
    n_cut: usize,
) -> Result<Vec<f64>> {
    let exact = h_eig.heisenberg_evolve(
        &crate::fock::lift_operator(&series.base, tau, basis)?,
        series.t,
        tau,
    );
    let mut partial = crate::fock::FockOperator::zero();
    let mut errs = Vec::with_capacity(series.terms.len());
    for term in &series.terms {
        partial = partial.add(&crate::fock::lift_operator(term, tau, basis)?);
        let diff = exact.sub(&partial);
        errs.push(diff.norm_up_to_sector(n_cut.min(basis.n_max())));
    }
    Ok(errs)
}

/// Error statistics of the classical expansion against the NLS flow on
/// samples restricted to mass <= kc.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalCheck {
    pub samples_used: usize,
    pub max_err: f64,
    pub mean_err: f64,
}

pub fn dyson_classical_check(
    series: &DysonSeries,
    ensemble: &Ensemble,
    kc: f64,
    spectrum: &Spectrum,
    params: &FlowParams,
) -> Result<ClassicalCheck> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut used = 0usize;
    let mut max_err = 0.0f64;
    let mut sum_err = 0.0f64;
    for sample in &ensemble.samples {
        if mass(sample) > kc {
            continue;
        }
        used += 1;
        let moved = evolve(sample, series.t, &ensemble.potential, spectrum, params)?;
        let direct = theta_observable(&series.base, &moved)?;
        let mut expansion = Complex64::new(0.0, 0.0);
        for term in &series.terms {
            expansion += theta_observable(term, sample)?;
        }
        let err = (direct - expansion).norm();
        max_err = max_err.max(err);
        sum_err += err;
    }
    if used == 0 {
        return Err(Error::EmptyEnsemble);
    }
    Ok(ClassicalCheck { samples_used: used, max_err, mean_err: sum_err / used as f64 })
}
