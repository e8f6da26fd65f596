//! Exact finite realization of the bosonic Fock space over M truncated modes
//! with a total-particle cutoff N_max.
//!
//! Operators are stored as dense blocks between occupation-number sectors.
//! Lifts Theta_tau(xi) of p-particle kernels are sector-diagonal and built
//! from occupation combinatorics; Hamiltonians, grand canonical states,
//! Heisenberg evolution, Green functions, and partition ratios all reduce to
//! per-sector Hermitian eigenproblems.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, index_to_tuple, CMatrix, KahanSum};
use crate::observable::Observable;
use crate::potential::Potential;
use crate::spectral::Grid;
use num_complex::Complex64;
use std::collections::{BTreeMap, HashMap};

const STATE_BUDGET: usize = 200_000;

/// Occupation-number basis of the truncated Fock space: every occupation
/// vector (n_1, ..., n_M) with total n <= N_max, grouped by total particle
/// number and ordered lexicographically within each sector.
#[derive(Debug, Clone)]
pub struct FockBasis {
    m_modes: usize,
    n_max: usize,
    sectors: Vec<Vec<Vec<u32>>>,
    index: HashMap<Vec<u32>, (usize, usize)>,
}

fn enumerate_occupations(m: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if m == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in 0..=total {
        prefix.push(first);
        enumerate_occupations(m - 1, total - first, prefix, out);
        prefix.pop();
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

impl FockBasis {
    pub fn new(m_modes: usize, n_max: usize) -> Result<Self> {
        if m_modes == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        let mut total_dim = 0usize;
        for n in 0..=n_max {
            total_dim += binomial(n + m_modes - 1, m_modes - 1);
            if total_dim > STATE_BUDGET {
                return Err(Error::TooLarge { requested: total_dim, limit: STATE_BUDGET });
            }
        }
        let mut sectors = Vec::with_capacity(n_max + 1);
        let mut index = HashMap::with_capacity(total_dim);
        for n in 0..=n_max {
            let mut occs = Vec::new();
            enumerate_occupations(m_modes, n as u32, &mut Vec::new(), &mut occs);
            for (pos, occ) in occs.iter().enumerate() {
                index.insert(occ.clone(), (n, pos));
            }
            sectors.push(occs);
        }
        Ok(FockBasis { m_modes, n_max, sectors, index })
    }

    pub fn m_modes(&self) -> usize {
        self.m_modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn sector(&self, n: usize) -> &[Vec<u32>] {
        &self.sectors[n]
    }

    pub fn sector_dim(&self, n: usize) -> usize {
        self.sectors[n].len()
    }

    pub fn total_dim(&self) -> usize {
        self.sectors.iter().map(|s| s.len()).sum()
    }

    pub fn lookup(&self, occ: &[u32]) -> Option<(usize, usize)> {
        self.index.get(occ).copied()
    }
}

/// Block operator over occupation sectors. Missing blocks are zero.
#[derive(Debug, Clone)]
pub struct FockOperator {
    pub blocks: BTreeMap<(usize, usize), CMatrix>,
    /// Structure flag set by constructors that guarantee Hermiticity.
    pub hermitian: bool,
}

impl FockOperator {
    pub fn zero() -> Self {
        FockOperator { blocks: BTreeMap::new(), hermitian: true }
    }

    pub fn identity(basis: &FockBasis) -> Self {
        let mut blocks = BTreeMap::new();
        for n in 0..=basis.n_max() {
            blocks.insert((n, n), CMatrix::identity(basis.sector_dim(n)));
        }
        FockOperator { blocks, hermitian: true }
    }

    /// Diagonal operator with value f(n, occ) on each occupation state.
    pub fn from_diagonal(
        basis: &FockBasis,
        mut f: impl FnMut(usize, &[u32]) -> Complex64,
    ) -> Self {
        let mut blocks = BTreeMap::new();
        let mut hermitian = true;
        for n in 0..=basis.n_max() {
            let dim = basis.sector_dim(n);
            let mut m = CMatrix::zeros(dim, dim);
            for (i, occ) in basis.sector(n).iter().enumerate() {
                let v = f(n, occ);
                if v.im != 0.0 {
                    hermitian = false;
                }
                m.set(i, i, v);
            }
            blocks.insert((n, n), m);
        }
        FockOperator { blocks, hermitian }
    }

    pub fn block(&self, row_sector: usize, col_sector: usize) -> Option<&CMatrix> {
        self.blocks.get(&(row_sector, col_sector))
    }

    pub fn is_sector_diagonal(&self) -> bool {
        self.blocks.keys().all(|(r, c)| r == c)
    }

    pub fn add(&self, other: &FockOperator) -> FockOperator {
        let mut blocks = self.blocks.clone();
        for (key, m) in &other.blocks {
            blocks
                .entry(*key)
                .and_modify(|existing| *existing = existing.add(m))
                .or_insert_with(|| m.clone());
        }
        FockOperator { blocks, hermitian: self.hermitian && other.hermitian }
    }

    pub fn scale(&self, s: Complex64) -> FockOperator {
        FockOperator {
            blocks: self.blocks.iter().map(|(k, m)| (*k, m.scale(s))).collect(),
            hermitian: self.hermitian && s.im == 0.0,
        }
    }

    pub fn sub(&self, other: &FockOperator) -> FockOperator {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &FockOperator) -> FockOperator {
        let mut blocks: BTreeMap<(usize, usize), CMatrix> = BTreeMap::new();
        for (&(r, k), a) in &self.blocks {
            for (&(k2, c), b) in &other.blocks {
                if k != k2 {
                    continue;
                }
                let prod = a.mul(b);
                blocks
                    .entry((r, c))
                    .and_modify(|existing| *existing = existing.add(&prod))
                    .or_insert(prod);
            }
        }
        FockOperator { blocks, hermitian: false }
    }

    pub fn adjoint(&self) -> FockOperator {
        FockOperator {
            blocks: self.blocks.iter().map(|(&(r, c), m)| ((c, r), m.adjoint())).collect(),
            hermitian: self.hermitian,
        }
    }

    /// Largest entrywise deviation from another operator.
    pub fn max_abs_diff(&self, other: &FockOperator) -> f64 {
        let mut keys: Vec<(usize, usize)> = self.blocks.keys().cloned().collect();
        for k in other.blocks.keys() {
            if !keys.contains(k) {
                keys.push(*k);
            }
        }
        let mut worst = 0.0f64;
        for key in keys {
            let d = match (self.blocks.get(&key), other.blocks.get(&key)) {
                (Some(a), Some(b)) => a.sub(b).max_abs(),
                (Some(a), None) => a.max_abs(),
                (None, Some(b)) => b.max_abs(),
                (None, None) => 0.0,
            };
            worst = worst.max(d);
        }
        worst
    }

    /// Operator norm of the restriction to sector n (zero if absent).
    pub fn sector_norm(&self, n: usize) -> f64 {
        self.block(n, n).map(|m| m.operator_norm()).unwrap_or(0.0)
    }

    /// Operator norm of the restriction to sectors <= n_cut (sector-diagonal
    /// operators only).
    pub fn norm_up_to_sector(&self, n_cut: usize) -> f64 {
        (0..=n_cut).map(|n| self.sector_norm(n)).fold(0.0, f64::max)
    }

    pub fn check_hermitian(&self, tol: f64) -> bool {
        let adj = self.adjoint();
        self.max_abs_diff(&adj) <= tol
    }
}

/// One stored matrix element of a block operator, for debug dumps.
#[derive(Debug, Clone)]
pub struct OperatorEntry {
    pub row_sector: usize,
    pub col_sector: usize,
    pub row_occupation: Vec<u32>,
    pub col_occupation: Vec<u32>,
    pub value: Complex64,
}

/// Every nonzero matrix element with its occupation labels, in deterministic
/// block/row/column order.
pub fn dump_operator(op: &FockOperator, basis: &FockBasis) -> Vec<OperatorEntry> {
    let mut out = Vec::new();
    for (&(rs, cs), block) in &op.blocks {
        for r in 0..block.rows {
            for c in 0..block.cols {
                let v = block.get(r, c);
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                out.push(OperatorEntry {
                    row_sector: rs,
                    col_sector: cs,
                    row_occupation: basis.sector(rs)[r].clone(),
                    col_occupation: basis.sector(cs)[c].clone(),
                    value: v,
                });
            }
        }
    }
    out
}

/// b*(f) for a one-body vector f: maps sector n to n+1 by occupation rules.
pub fn creation(f: &[Complex64], basis: &FockBasis) -> FockOperator {
    let mut blocks = BTreeMap::new();
    for n in 0..basis.n_max() {
        let cols = basis.sector(n);
        let rows_dim = basis.sector_dim(n + 1);
        let mut m = CMatrix::zeros(rows_dim, cols.len());
        for (cidx, occ) in cols.iter().enumerate() {
            for (mode, fm) in f.iter().enumerate() {
                if *fm == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut raised = occ.clone();
                raised[mode] += 1;
                let (sec, ridx) = basis.lookup(&raised).expect("raised state in basis");
                debug_assert_eq!(sec, n + 1);
                let amp = ((occ[mode] + 1) as f64).sqrt();
                m.add_to(ridx, cidx, fm * amp);
            }
        }
        blocks.insert((n + 1, n), m);
    }
    FockOperator { blocks, hermitian: false }
}

/// b(f) = (b*(f))†: maps sector n+1 to n; antilinear in f.
pub fn annihilation(f: &[Complex64], basis: &FockBasis) -> FockOperator {
    creation(f, basis).adjoint()
}

/// Lift Theta_tau(xi) of a p-particle kernel, sector-diagonal with
/// occupation-basis matrix elements
/// `(1/tau^p) sum_{k,l} xi_{k,l} sqrt(prod m!/(m-mult(k))!) sqrt(prod n!/(n-mult(l))!)`
/// over ordered mode p-tuples k, l with matching intermediate occupations.
/// Sectors with fewer than p particles vanish; p > N_max yields the zero
/// operator.
pub fn lift_operator(xi: &Observable, tau: f64, basis: &FockBasis) -> Result<FockOperator> {
    if xi.modes != basis.m_modes() {
        return Err(Error::DimensionMismatch(format!(
            "observable on {} modes, basis has {}",
            xi.modes,
            basis.m_modes()
        )));
    }
    let p = xi.particles;
    let m = basis.m_modes();
    let tuple_count = Observable::dim(m, p);
    let tau_pow = tau.powi(p as i32);
    // Pre-decode tuples and their multiplicity vectors.
    let mults: Vec<Vec<u32>> = (0..tuple_count)
        .map(|idx| {
            let mut mult = vec![0u32; m];
            for &mode in &index_to_tuple(idx, m, p) {
                mult[mode] += 1;
            }
            mult
        })
        .collect();

    let mut blocks = BTreeMap::new();
    for n in p..=basis.n_max() {
        let occs = basis.sector(n);
        let dim = occs.len();
        let mut block = CMatrix::zeros(dim, dim);
        for (cidx, ket) in occs.iter().enumerate() {
            for (l_flat, mu) in mults.iter().enumerate() {
                // falling-factorial amplitude for removing mu from ket
                let mut ok = true;
                let mut amp_sq = 1.0f64;
                for (nk, mk) in ket.iter().zip(mu) {
                    if mk > nk {
                        ok = false;
                        break;
                    }
                    for step in 0..*mk {
                        amp_sq *= (nk - step) as f64;
                    }
                }
                if !ok {
                    continue;
                }
                let b_amp = amp_sq.sqrt();
                // intermediate occupation
                let mut inter = ket.clone();
                for (i, mk) in inter.iter_mut().zip(mu) {
                    *i -= mk;
                }
                for (k_flat, nu) in mults.iter().enumerate() {
                    let entry = xi.kernel.get(k_flat, l_flat);
                    if entry == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut bra = inter.clone();
                    let mut amp_sq2 = 1.0f64;
                    for (b, nk) in bra.iter_mut().zip(nu) {
                        for step in 0..*nk {
                            amp_sq2 *= (*b + 1 + step) as f64;
                        }
                        *b += nk;
                    }
                    let a_amp = amp_sq2.sqrt();
                    let (sec, ridx) = basis.lookup(&bra).expect("bra state in basis");
                    debug_assert_eq!(sec, n);
                    block.add_to(ridx, cidx, entry * (a_amp * b_amp / tau_pow));
                }
            }
        }
        blocks.insert((n, n), block);
    }
    let hermitian = xi.kernel.is_hermitian(1e-12);
    Ok(FockOperator { blocks, hermitian })
}

/// Rescaled number operator N_tau = Theta_tau(1^{(1)}): diagonal n/tau.
pub fn number_operator(tau: f64, basis: &FockBasis) -> FockOperator {
    FockOperator::from_diagonal(basis, |n, _| Complex64::new(n as f64 / tau, 0.0))
}

/// Diagonal weight f(N_tau): value f(n/tau) on sector n.
pub fn number_weight(f: impl Fn(f64) -> f64, tau: f64, basis: &FockBasis) -> FockOperator {
    FockOperator::from_diagonal(basis, |n, _| Complex64::new(f(n as f64 / tau), 0.0))
}

/// Momentum-conserving two-particle kernel of the interaction:
/// W_{(k1 k2),(l1 l2)} = w_hat(k1 - l1) delta_{k1+k2, l1+l2} on the grid's
/// symmetric mode set.
pub fn two_body_from_potential(potential: &Potential, grid: &Grid) -> Observable {
    let m = grid.n_modes();
    let dim = m * m;
    let mut kernel = CMatrix::zeros(dim, dim);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    if a + b != c + d {
                        continue;
                    }
                    let q = a as i64 - c as i64;
                    kernel.set(a * m + b, c * m + d, Complex64::new(potential.hat(q), 0.0));
                }
            }
        }
    }
    Observable { particles: 2, modes: m, kernel }
}

/// Free, interaction, and full Hamiltonians on the truncated Fock space:
/// H_free = Theta_tau(h) (diagonal sum lambda_k n_k / tau),
/// W_op = (1/2) Theta_tau(W), H_full = H_free + W_op.
pub fn build_hamiltonians(
    lambdas: &[f64],
    two_body: Option<&Observable>,
    tau: f64,
    basis: &FockBasis,
) -> Result<(FockOperator, FockOperator, FockOperator)> {
    if lambdas.len() != basis.m_modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenvalues for {} modes",
            lambdas.len(),
            basis.m_modes()
        )));
    }
    let h_free = FockOperator::from_diagonal(basis, |_, occ| {
        let e: f64 = occ.iter().zip(lambdas).map(|(n, l)| *n as f64 * l).sum();
        Complex64::new(e / tau, 0.0)
    });
    let w_op = match two_body {
        Some(w2) => lift_operator(w2, tau, basis)?.scale(Complex64::new(0.5, 0.0)),
        None => FockOperator::zero(),
    };
    let h_full = h_free.add(&w_op);
    Ok((h_free, w_op, h_full))
}

/// Per-sector spectral data: diagonal blocks keep only their entries, dense
/// blocks carry the full eigendecomposition.
#[derive(Debug, Clone)]
enum SectorEig {
    /// Block was diagonal in the occupation basis; values in basis order.
    Diagonal(Vec<f64>),
    /// Ascending eigenvalues with the unitary of eigenvectors.
    Dense(Vec<f64>, CMatrix),
}

impl SectorEig {
    fn values(&self) -> &[f64] {
        match self {
            SectorEig::Diagonal(v) => v,
            SectorEig::Dense(v, _) => v,
        }
    }
}

/// Cached per-sector eigendecomposition of a Hermitian sector-diagonal
/// operator; the workhorse behind traces and Heisenberg evolution. Diagonal
/// sectors (every free Hamiltonian) bypass the dense machinery.
#[derive(Debug, Clone)]
pub struct HamiltonianEig {
    sectors: Vec<SectorEig>,
}

fn block_is_diagonal(block: &CMatrix) -> bool {
    for r in 0..block.rows {
        for c in 0..block.cols {
            if r != c && block.get(r, c) != Complex64::new(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

impl HamiltonianEig {
    pub fn new(op: &FockOperator, basis: &FockBasis) -> Result<Self> {
        if !op.is_sector_diagonal() {
            return Err(Error::InvalidParameter(
                "eigendecomposition requires a sector-diagonal operator".into(),
            ));
        }
        let mut sectors = Vec::with_capacity(basis.n_max() + 1);
        for n in 0..=basis.n_max() {
            let dim = basis.sector_dim(n);
            match op.block(n, n) {
                Some(block) => {
                    if !block.is_hermitian(1e-10 * block.max_abs().max(1.0)) {
                        return Err(Error::InvalidParameter(format!(
                            "sector {n} block is not Hermitian"
                        )));
                    }
                    if block_is_diagonal(block) {
                        sectors.push(SectorEig::Diagonal(
                            (0..dim).map(|i| block.get(i, i).re).collect(),
                        ));
                    } else {
                        let (vals, u) = hermitian_eig(block)?;
                        sectors.push(SectorEig::Dense(vals, u));
                    }
                }
                None => sectors.push(SectorEig::Diagonal(vec![0.0; dim])),
            }
        }
        Ok(HamiltonianEig { sectors })
    }

    /// Ground energy of H + nu N_tau over the truncated space.
    fn min_shifted_energy(&self, nu: f64, tau: f64) -> f64 {
        let mut min = f64::INFINITY;
        for (n, sec) in self.sectors.iter().enumerate() {
            let shift = nu * n as f64 / tau;
            for v in sec.values() {
                min = min.min(v + shift);
            }
        }
        min
    }

    /// Per-eigenstate traces against e^{-(H + nu N_tau - e0)} accumulated
    /// into (numerator, denominator).
    fn weighted_trace(
        &self,
        a: &FockOperator,
        nu: f64,
        tau: f64,
        basis: &FockBasis,
        e0: f64,
    ) -> (Complex64, f64) {
        let mut num = KahanSum::new();
        let mut den = KahanSum::new();
        for n in (0..=basis.n_max()).rev() {
            let shift = nu * n as f64 / tau;
            match &self.sectors[n] {
                SectorEig::Diagonal(vals) => {
                    let block = a.block(n, n);
                    for (i, e) in vals.iter().enumerate() {
                        let w = (-(e + shift - e0)).exp();
                        den.add(Complex64::new(w, 0.0));
                        if let Some(b) = block {
                            num.add(b.get(i, i) * w);
                        }
                    }
                }
                SectorEig::Dense(vals, u) => {
                    let weights: Vec<f64> =
                        vals.iter().map(|e| (-(e + shift - e0)).exp()).collect();
                    for w in &weights {
                        den.add(Complex64::new(*w, 0.0));
                    }
                    if let Some(block) = a.block(n, n) {
                        // diag of U† A U
                        let au = block.mul(u);
                        for (i, w) in weights.iter().enumerate() {
                            let mut diag = Complex64::new(0.0, 0.0);
                            for r in 0..u.rows {
                                diag += u.get(r, i).conj() * au.get(r, i);
                            }
                            num.add(diag * *w);
                        }
                    }
                }
            }
        }
        (num.value(), den.value().re)
    }

    /// tr(A e^{-(H + nu N_tau)}) / tr(e^{-(H + nu N_tau)}).
    pub fn expectation(
        &self,
        a: &FockOperator,
        nu: f64,
        tau: f64,
        basis: &FockBasis,
    ) -> Complex64 {
        let e0 = self.min_shifted_energy(nu, tau);
        let (num, den) = self.weighted_trace(a, nu, tau, basis, e0);
        num / den
    }

    /// tr(A e^{-(H + nu N_tau)}) without normalization and without an energy
    /// shift (used by deformed states whose normalization is a different
    /// trace).
    pub fn raw_trace(&self, a: &FockOperator, nu: f64, tau: f64, basis: &FockBasis) -> Complex64 {
        self.weighted_trace(a, nu, tau, basis, 0.0).0
    }

    /// Heisenberg evolution Psi_tau^t A = e^{i t tau H} A e^{-i t tau H},
    /// applied blockwise, preserving sector structure. Diagonal sectors turn
    /// into pure phase scalings of block entries.
    pub fn heisenberg_evolve(&self, a: &FockOperator, t: f64, tau: f64) -> FockOperator {
        let mut dense_cache: BTreeMap<usize, CMatrix> = BTreeMap::new();
        let mut dense_phase = |n: usize| -> CMatrix {
            dense_cache
                .entry(n)
                .or_insert_with(|| match &self.sectors[n] {
                    SectorEig::Diagonal(vals) => {
                        let dim = vals.len();
                        let mut m = CMatrix::zeros(dim, dim);
                        for (i, e) in vals.iter().enumerate() {
                            let ph = t * tau * e;
                            m.set(i, i, Complex64::new(ph.cos(), ph.sin()));
                        }
                        m
                    }
                    SectorEig::Dense(vals, u) => {
                        // U diag(e^{i t tau e}) U†
                        let mut scaled = u.clone();
                        for c in 0..u.cols {
                            let ph = t * tau * vals[c];
                            let z = Complex64::new(ph.cos(), ph.sin());
                            for r in 0..u.rows {
                                let v = scaled.get(r, c);
                                scaled.set(r, c, v * z);
                            }
                        }
                        scaled.mul(&u.adjoint())
                    }
                })
                .clone()
        };
        let mut blocks = BTreeMap::new();
        for (&(r, c), m) in &a.blocks {
            let both_diag = matches!(&self.sectors[r], SectorEig::Diagonal(_))
                && matches!(&self.sectors[c], SectorEig::Diagonal(_));
            let evolved = if both_diag {
                let er = match &self.sectors[r] {
                    SectorEig::Diagonal(v) => v,
                    _ => unreachable!(),
                };
                let ec = match &self.sectors[c] {
                    SectorEig::Diagonal(v) => v,
                    _ => unreachable!(),
                };
                let mut out = m.clone();
                for i in 0..out.rows {
                    for j in 0..out.cols {
                        let ph = t * tau * (er[i] - ec[j]);
                        let v = out.get(i, j);
                        out.set(i, j, v * Complex64::new(ph.cos(), ph.sin()));
                    }
                }
                out
            } else {
                let pr = dense_phase(r);
                let pc = dense_phase(c);
                pr.mul(m).mul(&pc.adjoint())
            };
            blocks.insert((r, c), evolved);
        }
        FockOperator { blocks, hermitian: a.hermitian }
    }
}

/// Quantum Green function G_tau^nu(k) = 1 / (tau (e^{(lambda_k + nu)/tau} - 1)).
pub fn quantum_green_function(lambdas: &[f64], nu: f64, tau: f64) -> Vec<f64> {
    lambdas
        .iter()
        .map(|l| 1.0 / (tau * (((l + nu) / tau).exp() - 1.0)))
        .collect()
}

/// Finite-tau partition ratio
/// tr(e^{-H_{tau,0} - nu N_tau}) / tr(e^{-H_{tau,0}})
/// = prod_k (1 - e^{-lambda_k/tau}) / (1 - e^{-(lambda_k+nu)/tau}).
pub fn partition_ratio(lambdas: &[f64], nu: f64, tau: f64) -> f64 {
    lambdas
        .iter()
        .map(|l| {
            let a = 1.0 - (-l / tau).exp();
            let b = 1.0 - (-(l + nu) / tau).exp();
            a / b
        })
        .product()
}

/// tau -> infinity limit of the partition ratio: prod_k lambda_k / (lambda_k + nu).
pub fn partition_ratio_limit(lambdas: &[f64], nu: f64) -> f64 {
    lambdas.iter().map(|l| l / (l + nu)).product()
}

/// The same quotient evaluated as explicit traces over the truncated basis.
pub fn partition_ratio_trace(lambdas: &[f64], nu: f64, tau: f64, basis: &FockBasis) -> f64 {
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for n in (0..=basis.n_max()).rev() {
        for occ in basis.sector(n) {
            let e: f64 = occ.iter().zip(lambdas).map(|(nk, l)| *nk as f64 * l).sum();
            den.add(Complex64::new((-e / tau).exp(), 0.0));
            num.add(Complex64::new((-(e + nu * n as f64) / tau).exp(), 0.0));
        }
    }
    num.value().re / den.value().re
}

/// Chernoff bound on the free grand-canonical tail P(N > n_cut): reports
/// inf_z z^{-(n_cut+1)} prod_k (1 - r_k) / (1 - z r_k) with
/// r_k = e^{-(lambda_k + nu)/tau}.
pub fn free_tail_bound(lambdas: &[f64], nu: f64, tau: f64, n_cut: usize) -> f64 {
    let ratios: Vec<f64> = lambdas.iter().map(|l| (-(l + nu) / tau).exp()).collect();
    let r_max = ratios.iter().cloned().fold(0.0, f64::max);
    if r_max >= 1.0 {
        return 1.0;
    }
    let z_hi = 1.0 / r_max;
    let mut best = f64::INFINITY;
    let steps = 400;
    for i in 1..steps {
        let z = 1.0 + (z_hi - 1.0) * i as f64 / steps as f64;
        if z * r_max >= 1.0 {
            break;
        }
        let mut logv = -((n_cut + 1) as f64) * z.ln();
        for r in &ratios {
            logv += (1.0 - r).ln() - (1.0 - z * r).ln();
        }
        best = best.min(logv.exp());
    }
    best.min(1.0)
}

/// Smallest cutoff whose free-tail bound is below `tol`, with the bound.
pub fn suggest_n_max(lambdas: &[f64], nu: f64, tau: f64, tol: f64) -> (usize, f64) {
    let mut n = 4usize;
    loop {
        let bound = free_tail_bound(lambdas, nu, tau, n);
        if bound <= tol || n > 4_000_000 {
            return (n, bound);
        }
        n = (n as f64 * 1.3).ceil() as usize + 1;
    }
}

/// Deformed quantum state rho~_{tau,z}^nu(A)
/// = tr(A e^{-H_0 - z W - nu N_tau}) / tr(e^{-H_0 - nu N_tau}).
/// `z` is real and nonnegative here (z = 0: free state, z = 1: interacting
/// numerator against the free normalization).
pub struct DeformedState<'a> {
    eig: HamiltonianEig,
    free_den: f64,
    nu: f64,
    tau: f64,
    basis: &'a FockBasis,
}

impl<'a> DeformedState<'a> {
    pub fn new(
        h_free: &FockOperator,
        w_op: &FockOperator,
        z: f64,
        nu: f64,
        tau: f64,
        basis: &'a FockBasis,
    ) -> Result<Self> {
        if z < 0.0 {
            return Err(Error::InvalidParameter("deformation z must be >= 0".into()));
        }
        let op = h_free.add(&w_op.scale(Complex64::new(z, 0.0)));
        let eig = HamiltonianEig::new(&op, basis)?;
        // denominator: free diagonal trace with the nu shift
        let mut den = KahanSum::new();
        for n in (0..=basis.n_max()).rev() {
            if let Some(block) = h_free.block(n, n) {
                for i in 0..block.rows {
                    let e = block.get(i, i).re + nu * n as f64 / tau;
                    den.add(Complex64::new((-e).exp(), 0.0));
                }
            }
        }
        Ok(DeformedState { eig, free_den: den.value().re, nu, tau, basis })
    }

    pub fn expect(&self, a: &FockOperator) -> Complex64 {
        self.eig.raw_trace(a, self.nu, self.tau, self.basis) / self.free_den
    }
}

/// Reference constructions used to cross-check the lift and the operator
/// algebra. These deliberately take different computational routes from
/// `lift_operator` (operator products of creation/annihilation matrices, and
/// explicit first-quantized symmetrization) and exist for verification.
pub mod oracle {
    use super::*;
    use crate::linalg::symmetrizer;

    /// Theta_tau(xi) as the normal-ordered sum
    /// (1/tau^p) sum_{k,l} xi_{k,l} b*_{k_1}..b*_{k_p} b_{l_1}..b_{l_p}
    /// with every factor an explicit matrix product.
    pub fn normal_ordered_lift(
        xi: &Observable,
        tau: f64,
        basis: &FockBasis,
    ) -> Result<FockOperator> {
        let m = basis.m_modes();
        if xi.modes != m {
            return Err(Error::DimensionMismatch("mode mismatch".into()));
        }
        let p = xi.particles;
        let creators: Vec<FockOperator> = (0..m)
            .map(|mode| {
                let mut f = vec![Complex64::new(0.0, 0.0); m];
                f[mode] = Complex64::new(1.0, 0.0);
                creation(&f, basis)
            })
            .collect();
        let annihilators: Vec<FockOperator> = creators.iter().map(|c| c.adjoint()).collect();
        let tuple_count = Observable::dim(m, p);
        let mut total = FockOperator::zero();
        for k_flat in 0..tuple_count {
            let k_tuple = index_to_tuple(k_flat, m, p);
            let mut create_prod = creators[k_tuple[0]].clone();
            for mode in &k_tuple[1..] {
                create_prod = create_prod.mul(&creators[*mode]);
            }
            for l_flat in 0..tuple_count {
                let entry = xi.kernel.get(k_flat, l_flat);
                if entry == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let l_tuple = index_to_tuple(l_flat, m, p);
                let mut op = create_prod.clone();
                for mode in &l_tuple {
                    op = op.mul(&annihilators[*mode]);
                }
                total = total.add(&op.scale(entry / tau.powi(p as i32)));
            }
        }
        Ok(total)
    }

    /// Sector-n block of Theta_tau(xi) from the first-quantized formula
    /// (p!/tau^p) C(n,p) P+ (xi ⊗ 1^{(n-p)}) P+ written on the full ordered
    /// tensor space and compressed to the occupation basis.
    pub fn first_quantized_sector(
        xi: &Observable,
        tau: f64,
        n: usize,
        basis: &FockBasis,
    ) -> Result<CMatrix> {
        let m = basis.m_modes();
        let p = xi.particles;
        let occs = basis.sector(n);
        let dim = occs.len();
        if n < p {
            return Ok(CMatrix::zeros(dim, dim));
        }
        let full_dim = m.checked_pow(n as u32).ok_or(Error::TooLarge {
            requested: usize::MAX,
            limit: STATE_BUDGET,
        })?;
        if full_dim > 20_000 {
            return Err(Error::TooLarge { requested: full_dim, limit: 20_000 });
        }
        // Embedding E: columns are normalized symmetric occupation states.
        let mut embed = CMatrix::zeros(full_dim, dim);
        for idx in 0..full_dim {
            let tuple = index_to_tuple(idx, m, n);
            let mut occ = vec![0u32; m];
            for &mode in &tuple {
                occ[mode] += 1;
            }
            let (_, col) = basis.lookup(&occ).expect("occupation in sector");
            // amplitude sqrt(occ! / n!)
            let mut log_amp = 0.0f64;
            for nk in &occ {
                for j in 1..=*nk {
                    log_amp += (j as f64).ln();
                }
            }
            for j in 1..=n {
                log_amp -= (j as f64).ln();
            }
            embed.set(idx, col, Complex64::new((0.5 * log_amp).exp(), 0.0));
        }
        let id_rest = CMatrix::identity(Observable::dim(m, n - p));
        let a_full = xi.kernel.kron(&id_rest);
        let s = symmetrizer(m, n)?;
        let sandwiched = s.mul(&a_full).mul(&s);
        let compressed = embed.adjoint().mul(&sandwiched).mul(&embed);
        // prefactor p! C(n,p) / tau^p
        let mut pref = 1.0f64;
        for j in 1..=p {
            pref *= j as f64;
        }
        pref *= binomial(n, p) as f64;
        pref /= tau.powi(p as i32);
        Ok(compressed.scale(Complex64::new(pref, 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn basis_dimensions() {
        let b = FockBasis::new(1, 3).unwrap();
        assert_eq!((0..=3).map(|n| b.sector_dim(n)).collect::<Vec<_>>(), vec![1, 1, 1, 1]);
        assert_eq!(b.total_dim(), 4);
        let b = FockBasis::new(3, 2).unwrap();
        assert_eq!((0..=2).map(|n| b.sector_dim(n)).collect::<Vec<_>>(), vec![1, 3, 6]);
        assert_eq!(b.total_dim(), 10);
        let b = FockBasis::new(2, 0).unwrap();
        assert_eq!(b.total_dim(), 1);
        assert!(FockBasis::new(40, 30).is_err());
    }

    fn unit_vector(m: usize, mode: usize) -> Vec<Complex64> {
        let mut f = vec![Complex64::new(0.0, 0.0); m];
        f[mode] = Complex64::new(1.0, 0.0);
        f
    }

    #[test]
    fn creation_on_vacuum_and_sqrt_rule() {
        let b = FockBasis::new(2, 3).unwrap();
        let bstar = creation(&unit_vector(2, 0), &b);
        // vacuum -> |1,0>
        let blk = bstar.block(1, 0).unwrap();
        let (sec, pos) = b.lookup(&[1, 0]).unwrap();
        assert_eq!(sec, 1);
        assert!((blk.get(pos, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // <2,0| b*(u0) |1,0> = sqrt(2)
        let blk2 = bstar.block(2, 1).unwrap();
        let (_, row) = b.lookup(&[2, 0]).unwrap();
        let (_, col) = b.lookup(&[1, 0]).unwrap();
        assert!((blk2.get(row, col) - Complex64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ccr_below_cutoff() {
        let b = FockBasis::new(2, 4).unwrap();
        for (j, k) in [(0usize, 0usize), (0, 1), (1, 1)] {
            let bj = annihilation(&unit_vector(2, j), &b);
            let bk_star = creation(&unit_vector(2, k), &b);
            let comm = bj.mul(&bk_star).sub(&bk_star.mul(&bj));
            for n in 0..b.n_max() {
                let dim = b.sector_dim(n);
                let expect =
                    if j == k { CMatrix::identity(dim) } else { CMatrix::zeros(dim, dim) };
                let got =
                    comm.block(n, n).cloned().unwrap_or_else(|| CMatrix::zeros(dim, dim));
                assert!(
                    got.sub(&expect).max_abs() < 1e-13,
                    "CCR fails on sector {n} for modes ({j},{k})"
                );
            }
        }
    }

    #[test]
    fn lift_of_identity_is_number_operator() {
        let b = FockBasis::new(2, 3).unwrap();
        let tau = 2.5;
        let one = Observable::identity(1, 2);
        let lifted = lift_operator(&one, tau, &b).unwrap();
        let n_op = number_operator(tau, &b);
        assert!(lifted.max_abs_diff(&n_op) < 1e-14);
    }

    #[test]
    fn lift_of_projector_on_sector_one() {
        let b = FockBasis::new(2, 2).unwrap();
        let tau = 4.0;
        let proj = Observable::mode_projector(2, 0);
        let lifted = lift_operator(&proj, tau, &b).unwrap();
        let blk = lifted.block(1, 1).unwrap();
        let (_, pos0) = b.lookup(&[1, 0]).unwrap();
        let (_, pos1) = b.lookup(&[0, 1]).unwrap();
        assert!((blk.get(pos0, pos0).re - 1.0 / tau).abs() < 1e-15);
        assert!(blk.get(pos1, pos1).norm() < 1e-15);
    }

    #[test]
    fn lift_above_cutoff_is_zero() {
        let b = FockBasis::new(2, 1).unwrap();
        let xi = Observable::identity(2, 2);
        let lifted = lift_operator(&xi, 1.0, &b).unwrap();
        assert!(lifted.max_abs_diff(&FockOperator::zero()) == 0.0);
    }

    #[test]
    fn lift_matches_normal_ordered_oracle_and_first_quantized() {
        let b = FockBasis::new(2, 3).unwrap();
        let tau = 1.7;
        let mut stream = Stream::derive(1001, &[0]);
        for p in [1usize, 2] {
            let xi = Observable::random_hermitian(p, 2, &mut stream).unwrap();
            let lifted = lift_operator(&xi, tau, &b).unwrap();
            let oracle_op = oracle::normal_ordered_lift(&xi, tau, &b).unwrap();
            assert!(
                lifted.max_abs_diff(&oracle_op) < 1e-12,
                "p={p}: lift vs normal-ordered differ"
            );
            for n in 0..=b.n_max() {
                let fq = oracle::first_quantized_sector(&xi, tau, n, &b).unwrap();
                let got = lifted
                    .block(n, n)
                    .cloned()
                    .unwrap_or_else(|| CMatrix::zeros(b.sector_dim(n), b.sector_dim(n)));
                assert!(
                    got.sub(&fq).max_abs() < 1e-12,
                    "p={p}, sector {n}: lift vs first-quantized differ by {}",
                    got.sub(&fq).max_abs()
                );
            }
        }
    }

    #[test]
    fn sector_norm_bound() {
        let b = FockBasis::new(2, 4).unwrap();
        let tau = 2.0;
        let mut stream = Stream::derive(1002, &[0]);
        for p in [1usize, 2] {
            for _ in 0..10 {
                let xi = Observable::random_hermitian(p, 2, &mut stream).unwrap();
                let lifted = lift_operator(&xi, tau, &b).unwrap();
                let norm_xi = xi.op_norm();
                for n in 0..=b.n_max() {
                    let bound = (n as f64 / tau).powi(p as i32) * norm_xi;
                    let got = lifted.sector_norm(n);
                    assert!(
                        got <= bound * (1.0 + 1e-9) + 1e-12,
                        "p={p} n={n}: {got} > {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn single_mode_hamiltonian_values() {
        let g = Grid::new(0, 8, 1.0).unwrap();
        let pot = Potential::local_delta(&g);
        let w2 = two_body_from_potential(&pot, &g);
        let b = FockBasis::new(1, 5).unwrap();
        let tau = 2.0;
        let lambdas = [1.0];
        let (h_free, w_op, h_full) = build_hamiltonians(&lambdas, Some(&w2), tau, &b).unwrap();
        for n in 0..=5usize {
            let hf = h_free.block(n, n).unwrap().get(0, 0).re;
            assert!((hf - n as f64 / tau).abs() < 1e-14);
            let hw = w_op.block(n, n).map(|m| m.get(0, 0).re).unwrap_or(0.0);
            let expect = n as f64 * (n as f64 - 1.0) / (2.0 * tau * tau);
            assert!((hw - expect).abs() < 1e-13, "n={n}: {hw} vs {expect}");
        }
        // [H, N] = 0 exactly: both sector-diagonal
        let n_op = number_operator(tau, &b);
        let comm = h_full.mul(&n_op).sub(&n_op.mul(&h_full));
        assert!(comm.max_abs_diff(&FockOperator::zero()) < 1e-14);
        // vacuum expectation of H_full is zero
        assert!(h_full.block(0, 0).unwrap().get(0, 0).norm() < 1e-15);
    }

    #[test]
    fn grand_canonical_identity_and_free_number() {
        let b = FockBasis::new(1, 60).unwrap();
        let tau = 1.0;
        let (_, _, h_full) = build_hamiltonians(&[1.0], None, tau, &b).unwrap();
        let eig = HamiltonianEig::new(&h_full, &b).unwrap();
        let one = FockOperator::identity(&b);
        let id_exp = eig.expectation(&one, 0.0, tau, &b);
        assert!((id_exp - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        let n_op = number_operator(tau, &b);
        let got = eig.expectation(&n_op, 0.0, tau, &b).re;
        let expect = 1.0 / (1f64.exp() - 1.0);
        assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
    }

    #[test]
    fn green_function_values_and_limits() {
        let g = quantum_green_function(&[1.0], 0.0, 1.0);
        assert!((g[0] - 1.0 / (1f64.exp() - 1.0)).abs() < 1e-15);
        // tau -> infinity: G -> 1/(lambda + nu)
        let lam = 3.0;
        let nu = 0.5;
        let g_inf = quantum_green_function(&[lam], nu, 1e8)[0];
        assert!((g_inf - 1.0 / (lam + nu)).abs() < 1e-7);
        // monotone decreasing in nu
        let g1 = quantum_green_function(&[lam], 0.1, 4.0)[0];
        let g2 = quantum_green_function(&[lam], 0.9, 4.0)[0];
        assert!(g2 < g1);
    }

    #[test]
    fn free_two_point_is_green_function() {
        let b = FockBasis::new(2, 40).unwrap();
        let tau = 2.0;
        let nu = 0.7;
        let lambdas = [1.0, 1.8];
        let (h_free, w_op, _) = build_hamiltonians(&lambdas, None, tau, &b).unwrap();
        let state = DeformedState::new(&h_free, &w_op, 0.0, nu, tau, &b).unwrap();
        let g = quantum_green_function(&lambdas, nu, tau);
        for mode in 0..2usize {
            // phi*_tau(u_k) phi_tau(u_k) = b*_k b_k / tau
            let f = unit_vector(2, mode);
            let op = creation(&f, &b)
                .mul(&annihilation(&f, &b))
                .scale(Complex64::new(1.0 / tau, 0.0));
            let got = state.expect(&op);
            assert!(
                (got.re - g[mode]).abs() < 1e-10 && got.im.abs() < 1e-12,
                "mode {mode}: {got} vs {}",
                g[mode]
            );
        }
    }

    #[test]
    fn partition_ratio_examples() {
        // single mode lambda = 1, nu = 1, tau = 1
        let r = partition_ratio(&[1.0], 1.0, 1.0);
        let expect = (1.0 - (-1f64).exp()) / (1.0 - (-2f64).exp());
        assert!((r - expect).abs() < 1e-15);
        assert!((expect - 0.731059).abs() < 1e-6);
        // limit
        assert!((partition_ratio_limit(&[1.0], 1.0) - 0.5).abs() < 1e-15);
        // nu -> 0 gives 1
        assert!((partition_ratio(&[1.0, 4.0], 0.0, 2.0) - 1.0).abs() < 1e-15);
        // trace cross-check, two modes
        let lambdas = [1.0, 2.5];
        let b = FockBasis::new(2, 80).unwrap();
        let trace = partition_ratio_trace(&lambdas, 0.8, 1.0, &b);
        let product = partition_ratio(&lambdas, 0.8, 1.0);
        assert!((trace - product).abs() < 1e-12, "{trace} vs {product}");
    }

    #[test]
    fn heisenberg_fixes_number_operator() {
        let g = Grid::new(0, 8, 1.0).unwrap();
        let pot = Potential::local_delta(&g);
        let w2 = two_body_from_potential(&pot, &g);
        let b = FockBasis::new(1, 30).unwrap();
        let tau = 3.0;
        let (_, _, h_full) = build_hamiltonians(&[1.0], Some(&w2), tau, &b).unwrap();
        let eig = HamiltonianEig::new(&h_full, &b).unwrap();
        let n_op = number_operator(tau, &b);
        let moved = eig.heisenberg_evolve(&n_op, 0.8, tau);
        assert!(moved.max_abs_diff(&n_op) < 1e-12);
        let frozen = eig.heisenberg_evolve(&n_op, 0.0, tau);
        assert!(frozen.max_abs_diff(&n_op) < 1e-15);
    }

    #[test]
    fn heisenberg_trace_invariance_nondiagonal() {
        // two abstract modes, interacting, random Hermitian observable
        let lambdas = [1.0, 1.6];
        let b = FockBasis::new(2, 8).unwrap();
        let tau = 2.0;
        let mut w2_kernel = CMatrix::zeros(4, 4);
        // momentum-like coupling on modes {0,1}: conserve a+b
        for (a, bb, c, d, v) in [
            (0usize, 0usize, 0usize, 0usize, 1.0),
            (1, 1, 1, 1, 1.0),
            (0, 1, 0, 1, 1.0),
            (1, 0, 1, 0, 1.0),
            (0, 1, 1, 0, 0.4),
            (1, 0, 0, 1, 0.4),
        ] {
            w2_kernel.set(a * 2 + bb, c * 2 + d, Complex64::new(v, 0.0));
        }
        let w2 = Observable::from_matrix(2, 2, w2_kernel).unwrap();
        let (_, _, h_full) = build_hamiltonians(&lambdas, Some(&w2), tau, &b).unwrap();
        assert!(h_full.check_hermitian(1e-12));
        let eig = HamiltonianEig::new(&h_full, &b).unwrap();
        let mut stream = Stream::derive(77, &[5]);
        let xi = Observable::random_hermitian(1, 2, &mut stream).unwrap();
        let lifted = lift_operator(&xi, tau, &b).unwrap();
        for t in [0.3, 1.7] {
            let moved = eig.heisenberg_evolve(&lifted, t, tau);
            let a = eig.expectation(&moved, 0.0, tau, &b);
            let b_val = eig.expectation(&lifted, 0.0, tau, &b);
            assert!((a - b_val).norm() < 1e-12, "t={t}: {a} vs {b_val}");
            // norm isometry per sector and structure preservation
            for n in 0..=b.n_max() {
                assert!((moved.sector_norm(n) - lifted.sector_norm(n)).abs() < 1e-9);
            }
            assert!(moved.is_sector_diagonal());
        }
    }

    #[test]
    fn free_evolved_kernel_matches_free_heisenberg() {
        let lambdas = [1.0, 2.2];
        let b = FockBasis::new(2, 4).unwrap();
        let tau = 1.3;
        let (h_free, _, _) = build_hamiltonians(&lambdas, None, tau, &b).unwrap();
        let eig = HamiltonianEig::new(&h_free, &b).unwrap();
        let mut stream = Stream::derive(88, &[1]);
        for p in [1usize, 2] {
            let xi = Observable::random_hermitian(p, 2, &mut stream).unwrap();
            let t = 0.9;
            let lhs = lift_operator(&xi.free_evolved(&lambdas, t).unwrap(), tau, &b).unwrap();
            let rhs = eig.heisenberg_evolve(&lift_operator(&xi, tau, &b).unwrap(), t, tau);
            assert!(
                lhs.max_abs_diff(&rhs) < 1e-12,
                "p={p}: free evolution mismatch {}",
                lhs.max_abs_diff(&rhs)
            );
        }
    }

    #[test]
    fn quantum_lemma_product_identities() {
        // Theta(xi) Theta(eta) = sum_r C(p,r) C(q,r) r!/tau^r Theta(xi •_r eta)
        // and the commutator analogue starting at r = 1.
        let b = FockBasis::new(2, 3).unwrap();
        let tau = 1.9;
        let mut stream = Stream::derive(99, &[2]);
        for (p, q) in [(1usize, 1usize), (1, 2), (2, 1), (2, 2)] {
            let xi = Observable::random_hermitian(p, 2, &mut stream).unwrap();
            let eta = Observable::random_hermitian(q, 2, &mut stream).unwrap();
            let lift_xi = lift_operator(&xi, tau, &b).unwrap();
            let lift_eta = lift_operator(&eta, tau, &b).unwrap();
            let lhs = lift_xi.mul(&lift_eta);
            let mut rhs = FockOperator::zero();
            for r in 0..=p.min(q) {
                let star = xi.star(&eta, r).unwrap();
                // C(p,r) C(q,r) r! = prod_{j<r} (p-j)(q-j)/(j+1)
                let mut coef = 1.0;
                for j in 0..r {
                    coef *= (p - j) as f64 * (q - j) as f64 / ((j + 1) as f64);
                }
                coef /= tau.powi(r as i32);
                rhs = rhs
                    .add(&lift_operator(&star, tau, &b).unwrap().scale(Complex64::new(coef, 0.0)));
            }
            let diff = lhs.max_abs_diff(&rhs);
            assert!(diff < 1e-12, "(p,q)=({p},{q}): product identity off by {diff}");

            let comm = lift_xi.mul(&lift_eta).sub(&lift_eta.mul(&lift_xi));
            let mut rhs2 = FockOperator::zero();
            for r in 1..=p.min(q) {
                let br = xi.bracket(&eta, r).unwrap();
                // C(p,r) C(q,r) r! = prod_{j<r} (p-j)(q-j)/(j+1)
                let mut coef = 1.0;
                for j in 0..r {
                    coef *= (p - j) as f64 * (q - j) as f64 / ((j + 1) as f64);
                }
                coef /= tau.powi(r as i32);
                rhs2 = rhs2
                    .add(&lift_operator(&br, tau, &b).unwrap().scale(Complex64::new(coef, 0.0)));
            }
            let diff2 = comm.max_abs_diff(&rhs2);
            assert!(diff2 < 1e-12, "(p,q)=({p},{q}): commutator identity off by {diff2}");
        }
    }

    #[test]
    fn number_weight_reductions() {
        let b = FockBasis::new(2, 3).unwrap();
        let tau = 2.0;
        let id = number_weight(|_| 1.0, tau, &b);
        assert!(id.max_abs_diff(&FockOperator::identity(&b)) < 1e-15);
        let n_w = number_weight(|x| x, tau, &b);
        assert!(n_w.max_abs_diff(&number_operator(tau, &b)) < 1e-15);
    }

    #[test]
    fn quantum_wick_four_point() {
        let b = FockBasis::new(2, 50).unwrap();
        let tau = 1.5;
        let nu = 0.4;
        let lambdas = [1.0, 2.0];
        let (h_free, w_op, _) = build_hamiltonians(&lambdas, None, tau, &b).unwrap();
        let state = DeformedState::new(&h_free, &w_op, 0.0, nu, tau, &b).unwrap();
        let g = quantum_green_function(&lambdas, nu, tau);
        let f0 = unit_vector(2, 0);
        let f1 = unit_vector(2, 1);
        // normal-ordered four-point: rho(b*_0 b*_1 b_0 b_1)/tau^2 = G(0) G(1)
        let op = creation(&f0, &b)
            .mul(&creation(&f1, &b))
            .mul(&annihilation(&f0, &b))
            .mul(&annihilation(&f1, &b))
            .scale(Complex64::new(1.0 / (tau * tau), 0.0));
        let got = state.expect(&op);
        let expect = g[0] * g[1];
        assert!((got.re - expect).abs() < 1e-10, "{got} vs {expect}");
        // same mode: rho(b*_0 b*_0 b_0 b_0)/tau^2 = 2 G(0)^2
        let op2 = creation(&f0, &b)
            .mul(&creation(&f0, &b))
            .mul(&annihilation(&f0, &b))
            .mul(&annihilation(&f0, &b))
            .scale(Complex64::new(1.0 / (tau * tau), 0.0));
        let got2 = state.expect(&op2);
        let expect2 = 2.0 * g[0] * g[0];
        assert!((got2.re - expect2).abs() < 1e-10, "{got2} vs {expect2}");
    }

    #[test]
    fn tail_bound_monotone_and_honored() {
        let lambdas = [1.0, 4.0];
        let b1 = free_tail_bound(&lambdas, 0.0, 2.0, 20);
        let b2 = free_tail_bound(&lambdas, 0.0, 2.0, 40);
        assert!(b2 < b1);
        let (n_max, bound) = suggest_n_max(&lambdas, 0.0, 2.0, 1e-12);
        assert!(bound <= 1e-12);
        // the suggested cutoff really does carry that little weight
        let basis = FockBasis::new(2, n_max + 10).unwrap();
        let mut tail = 0.0;
        let mut total = 0.0;
        for n in 0..=basis.n_max() {
            for occ in basis.sector(n) {
                let e: f64 = occ.iter().zip(&lambdas).map(|(nk, l)| *nk as f64 * l).sum();
                let w = (-e / 2.0).exp();
                total += w;
                if n > n_max {
                    tail += w;
                }
            }
        }
        assert!(tail / total <= bound * 1.01, "measured {} bound {}", tail / total, bound);
    }
}
