//! Bounded p-particle observables on the truncated mode basis.
//!
//! An observable is a dense matrix acting on the M^p-dimensional ordered
//! tensor basis of p-particle wave functions; physically meaningful kernels
//! are symmetric (P+ xi P+ = xi). The star products xi •_r eta contract r
//! particle slots between two kernels and are the algebra underlying both
//! lifted-operator products and the Schwinger-Dyson expansion.

use crate::error::{Error, Result};
use crate::linalg::{index_to_tuple, symmetrizer, CMatrix};
use crate::rng::Stream;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    /// Particle number p.
    pub particles: usize,
    /// Mode count M of the one-body space.
    pub modes: usize,
    /// Dense kernel on the ordered tensor basis, M^p x M^p.
    pub kernel: CMatrix,
}

impl Observable {
    pub fn dim(modes: usize, particles: usize) -> usize {
        modes.pow(particles as u32)
    }

    pub fn from_matrix(particles: usize, modes: usize, kernel: CMatrix) -> Result<Self> {
        let d = Self::dim(modes, particles);
        if kernel.rows != d || kernel.cols != d {
            return Err(Error::DimensionMismatch(format!(
                "kernel is {}x{}, expected {d}x{d} for p={particles}, M={modes}",
                kernel.rows, kernel.cols
            )));
        }
        Ok(Observable { particles, modes, kernel })
    }

    /// Identity 1^{(p)}.
    pub fn identity(particles: usize, modes: usize) -> Self {
        Observable { particles, modes, kernel: CMatrix::identity(Self::dim(modes, particles)) }
    }

    /// One-particle rank-one kernel f g* (maps g-component to f).
    pub fn rank_one(modes: usize, f: &[Complex64], g: &[Complex64]) -> Result<Self> {
        if f.len() != modes || g.len() != modes {
            return Err(Error::DimensionMismatch("rank_one vectors must have M entries".into()));
        }
        let kernel = CMatrix::from_fn(modes, modes, |r, c| f[r] * g[c].conj());
        Ok(Observable { particles: 1, modes, kernel })
    }

    /// One-particle projector onto mode slot `slot` (u_k u_k^*).
    pub fn mode_projector(modes: usize, slot: usize) -> Self {
        let mut kernel = CMatrix::zeros(modes, modes);
        kernel.set(slot, slot, Complex64::new(1.0, 0.0));
        Observable { particles: 1, modes, kernel }
    }

    /// Diagonal kernel with the given weights on ordered tuples.
    pub fn diagonal(particles: usize, modes: usize, weights: &[Complex64]) -> Result<Self> {
        let d = Self::dim(modes, particles);
        if weights.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "diagonal needs {d} weights, got {}",
                weights.len()
            )));
        }
        let mut kernel = CMatrix::zeros(d, d);
        for (i, w) in weights.iter().enumerate() {
            kernel.set(i, i, *w);
        }
        Ok(Observable { particles, modes, kernel })
    }

    /// Random Hermitian symmetric kernel, normalized to unit operator norm.
    pub fn random_hermitian(particles: usize, modes: usize, stream: &mut Stream) -> Result<Self> {
        let d = Self::dim(modes, particles);
        let raw = crate::linalg::random_hermitian(d, stream);
        let obs = Observable { particles, modes, kernel: raw };
        let sym = obs.symmetrized()?;
        let n = sym.kernel.operator_norm();
        if n == 0.0 {
            return Ok(sym);
        }
        Ok(Observable {
            particles,
            modes,
            kernel: sym.kernel.scale(Complex64::new(1.0 / n, 0.0)),
        })
    }

    /// P+ xi P+.
    pub fn symmetrized(&self) -> Result<Self> {
        if self.particles <= 1 {
            return Ok(self.clone());
        }
        let s = symmetrizer(self.modes, self.particles)?;
        Ok(Observable {
            particles: self.particles,
            modes: self.modes,
            kernel: s.mul(&self.kernel).mul(&s),
        })
    }

    pub fn is_symmetric_kernel(&self, tol: f64) -> bool {
        match self.symmetrized() {
            Ok(s) => s.kernel.sub(&self.kernel).max_abs() <= tol,
            Err(_) => false,
        }
    }

    pub fn adjoint(&self) -> Self {
        Observable { particles: self.particles, modes: self.modes, kernel: self.kernel.adjoint() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Observable { particles: self.particles, modes: self.modes, kernel: self.kernel.scale(s) }
    }

    pub fn add(&self, other: &Observable) -> Result<Self> {
        if self.particles != other.particles || self.modes != other.modes {
            return Err(Error::DimensionMismatch("observable addition shape".into()));
        }
        Ok(Observable {
            particles: self.particles,
            modes: self.modes,
            kernel: self.kernel.add(&other.kernel),
        })
    }

    pub fn sub(&self, other: &Observable) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Operator norm (largest singular value, power iteration).
    pub fn op_norm(&self) -> f64 {
        self.kernel.operator_norm()
    }

    /// Free evolution xi_t = exp(i t sum_j h_j) xi exp(-i t sum_j h_j):
    /// entry (row, col) picks up the phase exp(i t (Lambda_row - Lambda_col))
    /// where Lambda is the sum of one-body eigenvalues over the tuple.
    pub fn free_evolved(&self, lambdas: &[f64], t: f64) -> Result<Self> {
        if lambdas.len() != self.modes {
            return Err(Error::DimensionMismatch(format!(
                "spectrum has {} modes, observable expects {}",
                lambdas.len(),
                self.modes
            )));
        }
        let d = self.kernel.rows;
        let tuple_energy: Vec<f64> = (0..d)
            .map(|idx| {
                index_to_tuple(idx, self.modes, self.particles)
                    .iter()
                    .map(|&m| lambdas[m])
                    .sum()
            })
            .collect();
        let mut kernel = self.kernel.clone();
        for r in 0..d {
            for c in 0..d {
                let ph = t * (tuple_energy[r] - tuple_energy[c]);
                let v = kernel.get(r, c);
                kernel.set(r, c, v * Complex64::new(ph.cos(), ph.sin()));
            }
        }
        Ok(Observable { particles: self.particles, modes: self.modes, kernel })
    }

    /// Star product xi •_r eta = P+ (xi ⊗ 1^{(q-r)}) (1^{(p-r)} ⊗ eta) P+
    /// acting on p + q - r particles.
    pub fn star(&self, eta: &Observable, r: usize) -> Result<Observable> {
        if self.modes != eta.modes {
            return Err(Error::DimensionMismatch("star product needs one mode set".into()));
        }
        let (p, q) = (self.particles, eta.particles);
        if r > p.min(q) {
            return Err(Error::InvalidParameter(format!(
                "contraction order r = {r} exceeds min(p, q) = {}",
                p.min(q)
            )));
        }
        let total = p + q - r;
        let m = self.modes;
        let id_right = CMatrix::identity(Observable::dim(m, q - r));
        let id_left = CMatrix::identity(Observable::dim(m, p - r));
        let a = self.kernel.kron(&id_right); // xi ⊗ 1^{(q-r)}
        let b = id_left.kron(&eta.kernel); // 1^{(p-r)} ⊗ eta
        let s = symmetrizer(m, total)?;
        let kernel = s.mul(&a).mul(&b).mul(&s);
        Ok(Observable { particles: total, modes: m, kernel })
    }

    /// [xi, eta]_r = xi •_r eta - eta •_r xi.
    pub fn bracket(&self, eta: &Observable, r: usize) -> Result<Observable> {
        self.star(eta, r)?.sub(&eta.star(self, r)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_contraction_is_identity() {
        let one = Observable::identity(1, 3);
        let out = one.star(&one, 1).unwrap();
        assert_eq!(out.particles, 1);
        assert!(out.kernel.sub(&CMatrix::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn star_zero_contraction_is_symmetrized_tensor() {
        // 1 •_0 1 on one particle each = P+ (1 ⊗ 1) P+ = P+ on two particles.
        let one = Observable::identity(1, 2);
        let out = one.star(&one, 0).unwrap();
        let s = symmetrizer(2, 2).unwrap();
        assert!(out.kernel.sub(&s).max_abs() < 1e-14);
    }

    #[test]
    fn bracket_antisymmetry() {
        let mut stream = Stream::derive(5, &[1]);
        let xi = Observable::random_hermitian(2, 2, &mut stream).unwrap();
        let self_bracket = xi.bracket(&xi, 1).unwrap();
        assert!(self_bracket.kernel.max_abs() < 1e-13);
        let eta = Observable::random_hermitian(1, 2, &mut stream).unwrap();
        let ab = xi.bracket(&eta, 1).unwrap();
        let ba = eta.bracket(&xi, 1).unwrap();
        assert!(ab.kernel.add(&ba.kernel).max_abs() < 1e-13);
    }

    #[test]
    fn star_rejects_bad_contraction() {
        let a = Observable::identity(1, 2);
        let b = Observable::identity(2, 2);
        assert!(a.star(&b, 2).is_err());
    }

    #[test]
    fn free_evolution_preserves_norm_and_fixes_diagonal() {
        let lambdas = [1.0, 3.0];
        let mut stream = Stream::derive(6, &[2]);
        let xi = Observable::random_hermitian(2, 2, &mut stream).unwrap();
        let moved = xi.free_evolved(&lambdas, 0.7).unwrap();
        assert!((moved.op_norm() - xi.op_norm()).abs() < 1e-9);
        let at_zero = xi.free_evolved(&lambdas, 0.0).unwrap();
        assert!(at_zero.kernel.sub(&xi.kernel).max_abs() == 0.0);
        let diag = Observable::diagonal(
            1,
            2,
            &[Complex64::new(2.0, 0.0), Complex64::new(-1.0, 0.0)],
        )
        .unwrap();
        let moved_diag = diag.free_evolved(&lambdas, 1.3).unwrap();
        assert!(moved_diag.kernel.sub(&diag.kernel).max_abs() < 1e-14);
    }

    #[test]
    fn symmetrized_is_idempotent() {
        let mut stream = Stream::derive(7, &[3]);
        let xi = Observable::random_hermitian(2, 3, &mut stream).unwrap();
        assert!(xi.is_symmetric_kernel(1e-12));
        let again = xi.symmetrized().unwrap();
        assert!(again.kernel.sub(&xi.kernel).max_abs() < 1e-12);
    }
}
