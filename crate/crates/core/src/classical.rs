//! The classical side: free Gaussian field sampling, lifted observables
//! Theta(xi), and Gibbs-state expectations by self-normalized importance
//! sampling with weights exp(-W).

use crate::error::{Error, Result};
use crate::linalg::{tuple_to_index, KahanSum};
use crate::observable::Observable;
use crate::potential::{interaction_energy, Potential};
use crate::rng::Stream;
use crate::spectral::{Field, Grid, Spectrum};
use num_complex::Complex64;

/// Samples the free field mu^nu: independent mode coefficients
/// omega_k / sqrt(lambda_k + nu) with omega_k standard complex Gaussian.
#[derive(Debug, Clone)]
pub struct FreeFieldSampler {
    grid: Grid,
    spectrum: Spectrum,
    seed: u64,
    nu: f64,
    zero_noise: bool,
}

impl FreeFieldSampler {
    pub fn new(grid: Grid, seed: u64) -> Self {
        let spectrum = Spectrum::of_grid(&grid);
        FreeFieldSampler { grid, spectrum, seed, nu: 0.0, zero_noise: false }
    }

    /// Sample mu^nu (covariance (h + nu)^{-1}) instead of mu.
    pub fn with_shift(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    /// Test hook: forces omega == 0, producing the zero field.
    pub fn with_zero_noise(mut self) -> Self {
        self.zero_noise = true;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Sample `index` is reproducible on its own: each (sample, mode) pair
    /// owns a counter-derived stream.
    pub fn sample(&self, index: u64) -> Field {
        let m = self.grid.n_modes();
        let mut coeffs = Vec::with_capacity(m);
        for slot in 0..m {
            if self.zero_noise {
                coeffs.push(Complex64::new(0.0, 0.0));
                continue;
            }
            let mut stream = Stream::derive(self.seed, &[index, slot as u64]);
            let omega = stream.next_complex_gaussian();
            let lam = self.spectrum.lambdas[slot] + self.nu;
            coeffs.push(omega / lam.sqrt());
        }
        Field::from_coeffs(coeffs)
    }
}

/// Mass N(phi) = ∫ |phi|^2 = sum_k |c_k|^2.
pub fn mass(field: &Field) -> f64 {
    field.l2_norm_sq()
}

/// Theta(xi) = < phi^{⊗p}, xi phi^{⊗p} >.
pub fn theta_observable(xi: &Observable, field: &Field) -> Result<Complex64> {
    if xi.modes != field.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "observable on {} modes, field has {}",
            xi.modes,
            field.n_modes()
        )));
    }
    let p = xi.particles;
    let dim = Observable::dim(xi.modes, p);
    // v = phi^{⊗p} over ordered tuples
    let mut v = vec![Complex64::new(1.0, 0.0); 1];
    for _ in 0..p {
        let mut next = Vec::with_capacity(v.len() * xi.modes);
        for a in &v {
            for c in &field.coeffs {
                next.push(a * c);
            }
        }
        v = next;
    }
    debug_assert_eq!(v.len(), dim);
    let xv = xi.kernel.matvec(&v);
    let mut acc = KahanSum::new();
    for (a, b) in v.iter().zip(&xv) {
        acc.add(a.conj() * b);
    }
    Ok(acc.value())
}

/// Seeded collection of free-field samples with interaction weights e^{-W}.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub samples: Vec<Field>,
    pub weights: Vec<f64>,
    pub potential: Potential,
    pub seed: u64,
    grid: Grid,
}

impl Ensemble {
    pub fn build(sampler: &FreeFieldSampler, potential: Potential, n_samples: usize) -> Self {
        let mut samples = Vec::with_capacity(n_samples);
        let mut weights = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let f = sampler.sample(i as u64);
            let w = (-interaction_energy(&f, &potential)).exp();
            samples.push(f);
            weights.push(w);
        }
        Ensemble {
            samples,
            weights,
            potential,
            seed: sampler.seed,
            grid: sampler.grid.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

/// A self-normalized estimate with a jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub stderr: f64,
}

/// rho(X) ~= sum_i X(phi_i) w_i / sum_i w_i with block-jackknife error bars.
pub fn gibbs_expectation(
    ensemble: &Ensemble,
    mut x: impl FnMut(&Field) -> Complex64,
) -> Result<Estimate> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let values: Vec<Complex64> = ensemble.samples.iter().map(&mut x).collect();
    Ok(ratio_estimate(&values, &ensemble.weights))
}

/// rho(X f(N)) with the same estimator; `f` must be bounded on the sampled range.
pub fn weighted_expectation(
    ensemble: &Ensemble,
    mut x: impl FnMut(&Field) -> Complex64,
    f: impl Fn(f64) -> f64,
) -> Result<Estimate> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let values: Vec<Complex64> =
        ensemble.samples.iter().map(|phi| x(phi) * f(mass(phi))).collect();
    Ok(ratio_estimate(&values, &ensemble.weights))
}

/// Self-normalized ratio estimator with block-jackknife standard error.
pub fn ratio_estimate(values: &[Complex64], weights: &[f64]) -> Estimate {
    assert_eq!(values.len(), weights.len());
    let n = values.len();
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for (v, w) in values.iter().zip(weights) {
        num.add(v * w);
        den.add(Complex64::new(*w, 0.0));
    }
    let total_num = num.value();
    let total_den = den.value().re;
    let value = total_num / total_den;
    if n < 2 {
        return Estimate { value, stderr: f64::INFINITY };
    }
    let n_blocks = n.min(200);
    let mut block_num = vec![Complex64::new(0.0, 0.0); n_blocks];
    let mut block_den = vec![0.0f64; n_blocks];
    for (i, (v, w)) in values.iter().zip(weights).enumerate() {
        let b = i % n_blocks;
        block_num[b] += v * w;
        block_den[b] += w;
    }
    // delete-one-block pseudovalues
    let mut mean = Complex64::new(0.0, 0.0);
    let mut pseudo = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let pv = (total_num - block_num[b]) / (total_den - block_den[b]);
        mean += pv;
        pseudo.push(pv);
    }
    mean /= n_blocks as f64;
    let var: f64 = pseudo.iter().map(|pv| (pv - mean).norm_sqr()).sum::<f64>()
        * (n_blocks as f64 - 1.0)
        / n_blocks as f64;
    Estimate { value, stderr: var.sqrt() }
}

/// Gaussian pairing oracle for free-field moments under mu^nu:
/// E[ conj(c_{k_1}) .. conj(c_{k_p}) c_{l_1} .. c_{l_p} ] as a sum over all
/// pairings of conjugated with unconjugated factors, each pair (k, l)
/// contributing delta_{k,l} / (lambda_k + nu).
///
/// An unbalanced factor count returns exactly zero: the measure is invariant
/// under the global phase rotation phi -> e^{i a} phi, which kills any moment
/// with unequal numbers of conjugated and unconjugated factors.
pub fn wick_moment(
    conjugated_modes: &[i64],
    unconjugated_modes: &[i64],
    spectrum: &Spectrum,
    nu: f64,
) -> Complex64 {
    if conjugated_modes.len() != unconjugated_modes.len() {
        return Complex64::new(0.0, 0.0);
    }
    let p = conjugated_modes.len();
    if p == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let cov = |k: i64, l: i64| -> f64 {
        if k == l {
            1.0 / (spectrum.lambda_of_mode(k) + nu)
        } else {
            0.0
        }
    };
    // sum over permutations matching conjugated factor i with unconjugated sigma(i)
    let mut total = 0.0;
    let mut perm: Vec<usize> = (0..p).collect();
    loop {
        let mut prod = 1.0;
        for (i, &j) in perm.iter().enumerate() {
            prod *= cov(conjugated_modes[i], unconjugated_modes[j]);
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Complex64::new(total, 0.0)
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Monomial in field coefficients, as an observable functional for tests and
/// Wick comparisons: prod conj(c_{k_i}) prod c_{l_j}.
pub fn coefficient_monomial(field: &Field, grid: &Grid, conj: &[i64], unconj: &[i64]) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for &k in conj {
        acc *= field.coeff_of_mode(grid, k).conj();
    }
    for &l in unconj {
        acc *= field.coeff_of_mode(grid, l);
    }
    acc
}

/// Tuple-indexed kernel entry helper shared with the quantum side.
pub fn kernel_entry(xi: &Observable, row_tuple: &[usize], col_tuple: &[usize]) -> Complex64 {
    let r = tuple_to_index(row_tuple, xi.modes);
    let c = tuple_to_index(col_tuple, xi.modes);
    xi.kernel.get(r, c)
}
