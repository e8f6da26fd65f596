//! Torus geometry and Fourier conventions.
//!
//! Everything lives on the unit torus with the orthonormal basis
//! u_k(x) = exp(2 pi i k x), inner product <f,g> = ∫_0^1 conj(f) g.
//! Fields are band-limited to modes |k| <= K and stored as spectral
//! coefficients; the physical grid of P >= 4K+2 points makes quadratures of
//! quartic products of band-limited fields exact.

use crate::error::{Error, Result};
use crate::linalg::KahanSum;
use num_complex::Complex64;
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Spectral truncation, physical grid, and chemical potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    k_max: usize,
    p_phys: usize,
    kappa: f64,
}

impl Grid {
    /// `K`: largest retained mode index, `P`: physical sample count
    /// (even, `P >= 4K+2`), `kappa`: chemical potential (> 0).
    pub fn new(k_max: usize, p_phys: usize, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "chemical potential kappa must be positive and finite, got {kappa}"
            )));
        }
        if p_phys == 0 || p_phys % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "physical sample count P must be even and positive, got {p_phys}"
            )));
        }
        if p_phys < 4 * k_max + 2 {
            return Err(Error::InvalidParameter(format!(
                "P = {p_phys} < 4K+2 = {} aliases cubic products; raise P",
                4 * k_max + 2
            )));
        }
        Ok(Grid { k_max, p_phys, kappa })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn p_phys(&self) -> usize {
        self.p_phys
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Number of retained modes, M = 2K + 1.
    pub fn n_modes(&self) -> usize {
        2 * self.k_max + 1
    }

    /// Mode index k for storage slot `idx` (slots run k = -K..K ascending).
    pub fn mode_of_slot(&self, idx: usize) -> i64 {
        idx as i64 - self.k_max as i64
    }

    pub fn slot_of_mode(&self, k: i64) -> usize {
        (k + self.k_max as i64) as usize
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> {
        let k = self.k_max as i64;
        -k..=k
    }

    /// Physical grid point x_j = j / P.
    pub fn grid_point(&self, j: usize) -> f64 {
        j as f64 / self.p_phys as f64
    }

    /// Discarded spectral weight sum_{|k| > K} 1/lambda_k, reported so users
    /// can size the truncation.
    pub fn truncated_tail(&self) -> f64 {
        let mut sum = 0.0;
        let mut k = self.k_max as f64 + 1.0;
        loop {
            let term = 2.0 / (4.0 * PI * PI * k * k + self.kappa);
            sum += term;
            if term < 1e-18 {
                break;
            }
            k += 1.0;
        }
        sum
    }
}

/// One-body spectrum lambda_k = 4 pi^2 k^2 + kappa on the retained modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub lambdas: Vec<f64>,
    k_max: usize,
}

impl Spectrum {
    pub fn of_grid(grid: &Grid) -> Self {
        let lambdas = grid
            .modes()
            .map(|k| {
                let kf = k as f64;
                4.0 * PI * PI * kf * kf + grid.kappa()
            })
            .collect();
        Spectrum { lambdas, k_max: grid.k_max() }
    }

    pub fn lambda_of_mode(&self, k: i64) -> f64 {
        self.lambdas[(k + self.k_max as i64) as usize]
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn min_lambda(&self) -> f64 {
        self.lambdas.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Band-limited complex field on the torus, stored spectrally.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub coeffs: Vec<Complex64>,
}

impl Field {
    pub fn zero(grid: &Grid) -> Self {
        Field { coeffs: vec![Complex64::new(0.0, 0.0); grid.n_modes()] }
    }

    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Self {
        Field { coeffs }
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff_of_mode(&self, grid: &Grid, k: i64) -> Complex64 {
        self.coeffs[grid.slot_of_mode(k)]
    }

    pub fn set_mode(&mut self, grid: &Grid, k: i64, v: Complex64) {
        self.coeffs[grid.slot_of_mode(k)] = v;
    }

    /// sum_k |c_k|^2 = ∫ |phi|^2 by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// L^2 distance to another field on the same grid.
    pub fn l2_distance(&self, other: &Field) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Evaluate the band-limited field on the physical grid.
pub fn to_physical(field: &Field, grid: &Grid) -> Result<Vec<Complex64>> {
    if field.n_modes() != grid.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} modes, grid expects {}",
            field.n_modes(),
            grid.n_modes()
        )));
    }
    let p = grid.p_phys();
    let mut out = vec![Complex64::new(0.0, 0.0); p];
    for (j, slot) in out.iter_mut().enumerate() {
        let x = grid.grid_point(j);
        let mut acc = KahanSum::new();
        for (idx, c) in field.coeffs.iter().enumerate() {
            let k = grid.mode_of_slot(idx) as f64;
            let ph = TWO_PI * k * x;
            acc.add(c * Complex64::new(ph.cos(), ph.sin()));
        }
        *slot = acc.value();
    }
    Ok(out)
}

/// Project physical samples back onto the retained band:
/// c_k = (1/P) sum_j f(x_j) exp(-2 pi i k x_j).
pub fn to_spectral(values: &[Complex64], grid: &Grid) -> Result<Field> {
    if values.len() != grid.p_phys() {
        return Err(Error::DimensionMismatch(format!(
            "got {} samples, grid has P = {}",
            values.len(),
            grid.p_phys()
        )));
    }
    let p = grid.p_phys() as f64;
    let mut coeffs = Vec::with_capacity(grid.n_modes());
    for k in grid.modes() {
        let mut acc = KahanSum::new();
        for (j, v) in values.iter().enumerate() {
            let ph = -TWO_PI * k as f64 * grid.grid_point(j);
            acc.add(v * Complex64::new(ph.cos(), ph.sin()));
        }
        coeffs.push(acc.value() / p);
    }
    Ok(Field { coeffs })
}

/// Pointwise product in Fourier space: (w * rho)^(q) = w_hat(q) rho_hat(q).
/// Both arrays are indexed over the same symmetric mode range.
pub fn convolve(kernel_hat: &[Complex64], density_hat: &[Complex64]) -> Result<Vec<Complex64>> {
    if kernel_hat.len() != density_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel has {} modes, density has {}",
            kernel_hat.len(),
            density_hat.len()
        )));
    }
    Ok(kernel_hat.iter().zip(density_hat).map(|(w, r)| w * r).collect())
}

/// Spectral autocorrelation of |phi|^2: rho_hat(q) = sum_k conj(c_k) c_{k+q}
/// for q in -2K..2K (length 4K+1, slot q + 2K), written into `out`.
pub fn density_autocorrelation_into(coeffs: &[Complex64], out: &mut [Complex64]) {
    let m = coeffs.len();
    let k_max = (m - 1) / 2;
    debug_assert_eq!(out.len(), 4 * k_max + 1);
    for (qslot, slot) in out.iter_mut().enumerate() {
        let q = qslot as i64 - 2 * k_max as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..m {
            let b = a as i64 + q;
            if b >= 0 && (b as usize) < m {
                acc += coeffs[a].conj() * coeffs[b as usize];
            }
        }
        *slot = acc;
    }
}

pub fn density_autocorrelation(field: &Field) -> Vec<Complex64> {
    let m = field.n_modes();
    let k_max = (m - 1) / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); 4 * k_max + 1];
    density_autocorrelation_into(&field.coeffs, &mut out);
    out
}
