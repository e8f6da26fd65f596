//! Two-body interaction potentials: bounded nonlocal kernels, mollified
//! approximations to the delta interaction, and the local delta itself.
//!
//! A potential is carried as real Fourier coefficients w_hat(q) over the
//! range |q| <= 2K reachable by densities of band-limited fields. For the
//! local delta every coefficient is 1; mollified kernels are sampled on the
//! physical grid, renormalized to unit discrete integral, and transformed.

use crate::error::{Error, Result};
use crate::linalg::KahanSum;
use crate::spectral::{density_autocorrelation, Field, Grid, TWO_PI};
use num_complex::Complex64;

/// Which interaction the potential represents.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// Bounded translation-invariant kernel given by its Fourier coefficients.
    Nonlocal,
    /// (1/eps) w([x]/eps) for a compactly supported unit-mass base kernel.
    Mollified { eps: f64, base: MollifierBase },
    /// w = delta: local cubic nonlinearity, w_hat identically 1.
    LocalDelta,
    /// No interaction (free field).
    Zero,
}

/// Base kernels for the mollifier family. Both are continuous, nonnegative,
/// compactly supported, even, and have unit integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MollifierBase {
    /// (1 + cos(2 pi y)) on [-1/2, 1/2].
    RaisedCosine,
    /// max(0, 1 - |y|) on [-1, 1].
    Triangle,
}

impl MollifierBase {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            MollifierBase::RaisedCosine => {
                if y.abs() <= 0.5 {
                    1.0 + (TWO_PI * y).cos()
                } else {
                    0.0
                }
            }
            MollifierBase::Triangle => (1.0 - y.abs()).max(0.0),
        }
    }

    /// Half-width of the support.
    pub fn half_width(&self) -> f64 {
        match self {
            MollifierBase::RaisedCosine => 0.5,
            MollifierBase::Triangle => 1.0,
        }
    }
}

/// A validated two-body potential on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub kind: PotentialKind,
    /// w_hat(q) for q = -2K..2K (slot q + 2K). Real because w is real and even.
    w_hat: Vec<f64>,
    k_max: usize,
}

impl Potential {
    /// Free field: w = 0.
    pub fn zero(grid: &Grid) -> Self {
        Potential {
            kind: PotentialKind::Zero,
            w_hat: vec![0.0; 4 * grid.k_max() + 1],
            k_max: grid.k_max(),
        }
    }

    /// Local delta interaction: w_hat(q) = 1 on the reachable band.
    pub fn local_delta(grid: &Grid) -> Self {
        Potential {
            kind: PotentialKind::LocalDelta,
            w_hat: vec![1.0; 4 * grid.k_max() + 1],
            k_max: grid.k_max(),
        }
    }

    /// Nonlocal kernel from coefficients w_hat(q), q = 0..=2K (even extension).
    /// Rejects kernels that are negative somewhere on the physical grid.
    pub fn nonlocal(grid: &Grid, half_hat: &[f64]) -> Result<Self> {
        if half_hat.len() != 2 * grid.k_max() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "nonlocal kernel needs w_hat for q = 0..=2K ({} values), got {}",
                2 * grid.k_max() + 1,
                half_hat.len()
            )));
        }
        let q_max = 2 * grid.k_max();
        let mut w_hat = vec![0.0; 4 * grid.k_max() + 1];
        for q in 0..=q_max {
            w_hat[q_max + q] = half_hat[q];
            w_hat[q_max - q] = half_hat[q];
        }
        let pot = Potential { kind: PotentialKind::Nonlocal, w_hat, k_max: grid.k_max() };
        let min = pot.min_on_grid(grid);
        let scale = pot.w_hat.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if min < -1e-12 * scale {
            return Err(Error::InvalidParameter(format!(
                "nonlocal kernel is negative on the grid (min {min:.3e}); w must be >= 0"
            )));
        }
        Ok(pot)
    }

    /// Nonlocal kernel from nonnegative physical samples on the grid.
    /// The discrete delta (P at x = 0) reproduces w_hat identically 1.
    pub fn nonlocal_from_samples(grid: &Grid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.p_phys() {
            return Err(Error::DimensionMismatch(format!(
                "need {} samples, got {}",
                grid.p_phys(),
                samples.len()
            )));
        }
        if samples.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "kernel samples must be finite and nonnegative".into(),
            ));
        }
        let p = grid.p_phys();
        let q_max = 2 * grid.k_max();
        let mut w_hat = vec![0.0; 4 * grid.k_max() + 1];
        for q in 0..=q_max {
            let mut acc = KahanSum::new();
            for (j, s) in samples.iter().enumerate() {
                let ph = -TWO_PI * q as f64 * grid.grid_point(j);
                acc.add(Complex64::new(*s, 0.0) * Complex64::new(ph.cos(), ph.sin()));
            }
            let c = acc.value() / p as f64;
            w_hat[q_max + q] = c.re;
            w_hat[q_max - q] = c.re;
        }
        Ok(Potential { kind: PotentialKind::Nonlocal, w_hat, k_max: grid.k_max() })
    }

    /// Mollified kernel w^eps(x) = (1/eps) w([x]/eps), sampled on the grid,
    /// renormalized to exact unit discrete integral, then transformed.
    pub fn mollified(grid: &Grid, eps: f64, base: MollifierBase) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1], got {eps}")));
        }
        let p = grid.p_phys();
        // Resolution guard: the kernel support must cover at least 4 cells.
        let support_cells = 2.0 * eps * base.half_width() * p as f64;
        if support_cells < 4.0 {
            return Err(Error::UnderResolved { support_cells, needed: 4.0 });
        }
        let mut samples = vec![0.0; p];
        for (j, s) in samples.iter_mut().enumerate() {
            // [x] in [-1/2, 1/2)
            let x = grid.grid_point(j);
            let xc = if x >= 0.5 { x - 1.0 } else { x };
            *s = base.eval(xc / eps) / eps;
        }
        let mean: f64 = samples.iter().sum::<f64>() / p as f64;
        if mean <= 0.0 {
            return Err(Error::UnderResolved { support_cells, needed: 4.0 });
        }
        for s in samples.iter_mut() {
            *s /= mean; // discrete integral (1/P) sum = 1 exactly
        }
        let q_max = 2 * grid.k_max();
        let mut w_hat = vec![0.0; 4 * grid.k_max() + 1];
        for q in 0..=q_max {
            let mut acc = KahanSum::new();
            for (j, s) in samples.iter().enumerate() {
                let ph = -TWO_PI * q as f64 * grid.grid_point(j);
                acc.add(Complex64::new(*s, 0.0) * Complex64::new(ph.cos(), ph.sin()));
            }
            let c = acc.value() / p as f64;
            // even real kernel sampled symmetrically: imaginary part is roundoff
            w_hat[q_max + q] = c.re;
            w_hat[q_max - q] = c.re;
        }
        Ok(Potential { kind: PotentialKind::Mollified { eps, base }, w_hat, k_max: grid.k_max() })
    }

    /// w_hat(q); defined for |q| <= 2K.
    pub fn hat(&self, q: i64) -> f64 {
        let q_max = 2 * self.k_max as i64;
        if q.abs() > q_max {
            0.0
        } else {
            self.w_hat[(q + q_max) as usize]
        }
    }

    pub fn hat_slice(&self) -> &[f64] {
        &self.w_hat
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero)
    }

    /// Largest |w_hat| — used by the Dyson convergence-radius bookkeeping as a
    /// stand-in for ||w||_infinity on the truncated band.
    pub fn hat_max(&self) -> f64 {
        self.w_hat.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Kernel value at a point (band-limited reconstruction).
    pub fn value_at(&self, x: f64) -> f64 {
        let q_max = 2 * self.k_max as i64;
        let mut acc = self.hat(0);
        for q in 1..=q_max {
            acc += 2.0 * self.hat(q) * (TWO_PI * q as f64 * x).cos();
        }
        acc
    }

    fn min_on_grid(&self, grid: &Grid) -> f64 {
        (0..grid.p_phys())
            .map(|j| self.value_at(grid.grid_point(j)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Classical interaction W(phi) = 1/2 ∫∫ |phi(x)|^2 w(x-y) |phi(y)|^2 dx dy,
/// evaluated spectrally: 1/2 sum_q w_hat(q) |rho_hat(q)|^2. Nonnegative for
/// kernels that are nonnegative on the grid.
pub fn interaction_energy(field: &Field, potential: &Potential) -> f64 {
    if potential.is_zero() {
        return 0.0;
    }
    let rho_hat = density_autocorrelation(field);
    debug_assert_eq!(rho_hat.len(), potential.w_hat.len());
    let mut acc = 0.0;
    for (w, r) in potential.w_hat.iter().zip(&rho_hat) {
        acc += w * r.norm_sqr();
    }
    (0.5 * acc).max(0.0)
}
