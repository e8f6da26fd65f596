//! Dense complex linear algebra sized for desk-scale exact diagonalization:
//! a small matrix type, a cyclic Jacobi eigensolver for Hermitian matrices,
//! power-iteration operator norms, and tensor-space helpers (tuple indexing,
//! Kronecker products, symmetrizers).

use crate::error::{Error, Result};
use crate::rng::Stream;
use num_complex::Complex64;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Compensated (Kahan) summation of complex terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: Complex64,
    comp: Complex64,
}

impl KahanSum {
    pub fn new() -> Self {
        KahanSum { sum: C_ZERO, comp: C_ZERO }
    }

    #[inline]
    pub fn add(&mut self, term: Complex64) {
        let y = term - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> Complex64 {
        self.sum
    }
}

/// Dense complex matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![C_ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C_ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matrix product shape");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == C_ZERO {
                    continue;
                }
                let row_out = &mut out.data[r * other.cols..(r + 1) * other.cols];
                let row_b = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in row_out.iter_mut().zip(row_b.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matvec shape");
        let mut out = vec![C_ZERO; self.rows];
        for r in 0..self.rows {
            let mut acc = C_ZERO;
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (a, x) in row.iter().zip(v.iter()) {
                acc += a * x;
            }
            out[r] = acc;
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        assert_eq!(self.rows, self.cols);
        let mut acc = KahanSum::new();
        for i in 0..self.rows {
            acc.add(self.data[i * self.cols + i]);
        }
        acc.value()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for r in 0..self.rows {
            for c in r..self.cols {
                if (self.get(r, c) - self.get(c, r).conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Kronecker product: (self ⊗ other).
    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = CMatrix::zeros(rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                if a == C_ZERO {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.set(r1 * other.rows + r2, c1 * other.cols + c2, a * other.get(r2, c2));
                    }
                }
            }
        }
        out
    }

    /// Largest singular value via power iteration on A†A.
    ///
    /// Deterministic start vector; relative tolerance 1e-10 on the Rayleigh
    /// quotient, which is all the norm-bound checks require.
    pub fn operator_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut stream = Stream::derive(0x5EED_0A11, &[self.rows as u64, self.cols as u64]);
        let mut v: Vec<Complex64> =
            (0..self.cols).map(|_| stream.next_complex_gaussian()).collect();
        let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= nrm;
        }
        let adj = self.adjoint();
        let mut prev = 0.0;
        for _ in 0..20_000 {
            let w = self.matvec(&v);
            let mut u = adj.matvec(&w);
            let lam = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if lam == 0.0 {
                return 0.0;
            }
            for x in u.iter_mut() {
                *x /= lam;
            }
            v = u;
            let sigma = lam.sqrt();
            if (sigma - prev).abs() <= 1e-10 * sigma.max(1e-300) {
                return sigma;
            }
            prev = sigma;
        }
        prev
    }
}

/// Eigendecomposition A = U diag(vals) U† of a Hermitian matrix, eigenvalues
/// ascending. Cyclic complex Jacobi; plenty for the sector sizes we build.
pub fn hermitian_eig(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = a.rows;
    if n != a.cols {
        return Err(Error::DimensionMismatch("hermitian_eig needs a square matrix".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let mut m = a.clone();
    let mut u = CMatrix::identity(n);
    let scale = m.max_abs().max(1e-300);
    let tol = 1e-15 * scale;

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m.get(p, q).norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                let abs_apq = apq.norm();
                if abs_apq <= tol * 1e-2 {
                    continue;
                }
                let app = m.get(p, p).re;
                let aqq = m.get(q, q).re;
                // Phase that makes the off-diagonal entry real positive.
                let phase = apq / abs_apq;
                let theta = (aqq - app) / (2.0 * abs_apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns: col_p' = c*col_p - s*conj(phase)... applied as the
                // unitary J with J[p][p]=c, J[p][q]=s*phase, J[q][p]=-s*conj(phase), J[q][q]=c.
                let jp = Complex64::new(c, 0.0);
                let jpq = phase * s;
                let jqp = -phase.conj() * s;
                // M <- J† M J ; U <- U J.
                for r in 0..n {
                    let mrp = m.get(r, p);
                    let mrq = m.get(r, q);
                    m.set(r, p, mrp * jp + mrq * jqp);
                    m.set(r, q, mrp * jpq + mrq * jp);
                }
                for cidx in 0..n {
                    let mpc = m.get(p, cidx);
                    let mqc = m.get(q, cidx);
                    m.set(p, cidx, jp.conj() * mpc + jqp.conj() * mqc);
                    m.set(q, cidx, jpq.conj() * mpc + jp.conj() * mqc);
                }
                for r in 0..n {
                    let urp = u.get(r, p);
                    let urq = u.get(r, q);
                    u.set(r, p, urp * jp + urq * jqp);
                    u.set(r, q, urp * jpq + urq * jp);
                }
            }
        }
    }

    let mut vals: Vec<(f64, usize)> = (0..n).map(|i| (m.get(i, i).re, i)).collect();
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let eigvals: Vec<f64> = vals.iter().map(|(v, _)| *v).collect();
    let mut vecs = CMatrix::zeros(n, n);
    for (new_col, &(_, old_col)) in vals.iter().enumerate() {
        for r in 0..n {
            vecs.set(r, new_col, u.get(r, old_col));
        }
    }
    Ok((eigvals, vecs))
}

/// exp(i phase_scale * A) acting through conjugation helpers comes from the
/// eigendecomposition; this gives U diag(f(vals)) U†.
pub fn hermitian_function(u: &CMatrix, vals: &[f64], f: impl Fn(f64) -> Complex64) -> CMatrix {
    let n = u.rows;
    let mut scaled = CMatrix::zeros(n, n);
    // scaled = U diag(f) : column j of U times f(vals[j])
    for r in 0..n {
        for c in 0..n {
            scaled.set(r, c, u.get(r, c) * f(vals[c]));
        }
    }
    scaled.mul(&u.adjoint())
}

// ---------------------------------------------------------------------------
// Tensor helpers for p-particle mode spaces.
// ---------------------------------------------------------------------------

/// Encode an ordered mode tuple as a flat index in base `m_modes`.
#[inline]
pub fn tuple_to_index(tuple: &[usize], m_modes: usize) -> usize {
    tuple.iter().fold(0, |acc, &t| acc * m_modes + t)
}

/// Decode a flat index into an ordered mode tuple of length `p`.
pub fn index_to_tuple(mut idx: usize, m_modes: usize, p: usize) -> Vec<usize> {
    let mut out = vec![0usize; p];
    for slot in (0..p).rev() {
        out[slot] = idx % m_modes;
        idx /= m_modes;
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut base: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap_permute(&mut base, n, &mut out);
    out
}

fn heap_permute(arr: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(arr.clone());
        return;
    }
    for i in 0..k {
        heap_permute(arr, k - 1, out);
        if k % 2 == 0 {
            arr.swap(i, k - 1);
        } else {
            arr.swap(0, k - 1);
        }
    }
}

const SYMMETRIZER_DIM_LIMIT: usize = 20_000;

/// Orthogonal projection onto the symmetric subspace of (C^M)^{⊗ p},
/// as a dense M^p x M^p matrix.
pub fn symmetrizer(m_modes: usize, p: usize) -> Result<CMatrix> {
    let dim = m_modes.checked_pow(p as u32).ok_or(Error::TooLarge {
        requested: usize::MAX,
        limit: SYMMETRIZER_DIM_LIMIT,
    })?;
    if dim > SYMMETRIZER_DIM_LIMIT {
        return Err(Error::TooLarge { requested: dim, limit: SYMMETRIZER_DIM_LIMIT });
    }
    let perms = permutations(p);
    let weight = 1.0 / perms.len() as f64;
    let mut s = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let tuple = index_to_tuple(col, m_modes, p);
        for perm in &perms {
            let permuted: Vec<usize> = (0..p).map(|slot| tuple[perm[slot]]).collect();
            let row = tuple_to_index(&permuted, m_modes);
            s.add_to(row, col, Complex64::new(weight, 0.0));
        }
    }
    Ok(s)
}

/// Random Hermitian matrix with entries O(1), for tests and property suites.
pub fn random_hermitian(n: usize, stream: &mut Stream) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for r in 0..n {
        for c in r..n {
            if r == c {
                m.set(r, c, Complex64::new(stream.next_gaussian(), 0.0));
            } else {
                let z = 0.5 * stream.next_complex_gaussian();
                m.set(r, c, z);
                m.set(c, r, z.conj());
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_reconstructs_random_hermitian() {
        let mut stream = Stream::derive(42, &[1]);
        for n in [1usize, 2, 3, 7, 20] {
            let a = random_hermitian(n, &mut stream);
            let (vals, u) = hermitian_eig(&a).unwrap();
            // U diag U† == A
            let recon = hermitian_function(&u, &vals, |x| Complex64::new(x, 0.0));
            let err = recon.sub(&a).max_abs();
            assert!(err < 1e-11 * a.max_abs().max(1.0), "n={n} err={err}");
            // U unitary
            let gram = u.adjoint().mul(&u);
            let id_err = gram.sub(&CMatrix::identity(n)).max_abs();
            assert!(id_err < 1e-11, "n={n} unitary defect {id_err}");
            // ascending
            for w in vals.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
    }

    #[test]
    fn operator_norm_matches_eigenvalue_on_hermitian() {
        let mut stream = Stream::derive(4242, &[2]);
        let a = random_hermitian(12, &mut stream);
        let (vals, _) = hermitian_eig(&a).unwrap();
        let lam = vals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let nrm = a.operator_norm();
        assert!((nrm - lam).abs() < 1e-8 * lam, "norm {nrm} vs eig {lam}");
    }

    #[test]
    fn symmetrizer_is_projection() {
        let s = symmetrizer(2, 3).unwrap();
        let s2 = s.mul(&s);
        assert!(s2.sub(&s).max_abs() < 1e-13);
        assert!(s.is_hermitian(1e-13));
        // dim of symmetric subspace = C(n+M-1, M-1) = C(4,1)= 4
        let tr = s.trace();
        assert!((tr.re - 4.0).abs() < 1e-12);
    }

    #[test]
    fn tuple_roundtrip() {
        for idx in 0..27 {
            let t = index_to_tuple(idx, 3, 3);
            assert_eq!(tuple_to_index(&t, 3), idx);
        }
    }

    #[test]
    fn kahan_handles_cancellation() {
        let mut acc = KahanSum::new();
        for _ in 0..1_000_000 {
            acc.add(Complex64::new(0.1, 0.0));
        }
        assert!((acc.value().re - 100_000.0).abs() < 1e-9);
    }
}
