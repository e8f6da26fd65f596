//! Time evolution for the spectrally truncated cubic NLS,
//!
//! ```text
//! i du/dt = (-Delta + kappa) u + (w * |u|^2) u       (nonlocal)
//! i du/dt = (-Delta + kappa) u + |u|^2 u             (local delta)
//! ```
//!
//! restricted to modes |k| <= K. The integrator is Strang splitting. The
//! linear half is exact diagonal phases. The nonlinear half-kick is the
//! unitary generated by the band-limited multiplication operator
//! A(V) = P_K M_V P_K with V = w * |u|^2 frozen at the substep midpoint
//! (a fixed-point iteration). A(V) is Hermitian Toeplitz in the mode basis,
//! so each kick is exactly unitary: mass is conserved to roundoff and the
//! composed step is time-symmetric, which makes evolve(evolve(u,t),-t) = u
//! hold to the fixed-point tolerance rather than to O(dt^2).

use crate::error::{Error, Result};
use crate::observable::Observable;
use crate::potential::{interaction_energy, Potential};
use crate::spectral::{density_autocorrelation_into, Field, Spectrum};
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct FlowParams {
    /// Target step size; the actual step divides t exactly.
    pub dt: f64,
    /// Relative fixed-point tolerance for the midpoint potential.
    pub fp_tol: f64,
    pub fp_max_iters: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { dt: 1e-3, fp_tol: 1e-14, fp_max_iters: 30 }
    }
}

impl FlowParams {
    pub fn with_dt(dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 || dt > 0.1 {
            return Err(Error::InvalidParameter(format!(
                "dt must lie in (0, 0.1], got {dt}"
            )));
        }
        Ok(FlowParams { dt, ..Default::default() })
    }
}

/// V_hat(q) = w_hat(q) rho_hat(q) of the density of `coeffs`.
fn symbol_into(v_hat: &mut [Complex64], coeffs: &[Complex64], potential: &Potential) {
    density_autocorrelation_into(coeffs, v_hat);
    let q_max = potential.k_max() as i64 * 2;
    for (qslot, v) in v_hat.iter_mut().enumerate() {
        let q = qslot as i64 - q_max;
        *v *= potential.hat(q);
    }
}

/// Scratch buffers reused across every kick of a trajectory.
struct KickWorkspace {
    v_hat: Vec<Complex64>,
    mid: Vec<Complex64>,
    next: Vec<Complex64>,
    term: Vec<Complex64>,
    av: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl KickWorkspace {
    fn new(m_modes: usize) -> Self {
        let k_max = (m_modes - 1) / 2;
        let zero = Complex64::new(0.0, 0.0);
        KickWorkspace {
            v_hat: vec![zero; 4 * k_max + 1],
            mid: vec![zero; m_modes],
            next: vec![zero; m_modes],
            term: vec![zero; m_modes],
            av: vec![zero; m_modes],
            acc: vec![zero; m_modes],
        }
    }

    /// (A v)[k] = sum_l V_hat(k - l) v[l]: band-limited multiplication by V.
    fn toeplitz_apply(v_hat: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
        let m = v.len();
        let q_max = ((v_hat.len() - 1) / 2) as i64;
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            let lo = (k as i64 - q_max).max(0) as usize;
            let hi = ((k as i64 + q_max) as usize).min(m - 1);
            for (l, x) in v.iter().enumerate().take(hi + 1).skip(lo) {
                acc += v_hat[(k as i64 - l as i64 + q_max) as usize] * x;
            }
            *o = acc;
        }
    }

    /// next = exp(-i h A(V)) v by Taylor series with scaling; ||h A|| is
    /// controlled by the l1 norm of the symbol, so a handful of terms
    /// reaches roundoff.
    fn exp_kick(&mut self, h: f64, v: &[Complex64]) {
        let symbol_l1: f64 = self.v_hat.iter().map(|z| z.norm()).sum();
        let scaled = h.abs() * symbol_l1;
        let splits = if scaled > 0.7 { (scaled / 0.7).log2().ceil() as u32 } else { 0 };
        let n_sub = 1usize << splits;
        let h_sub = h / n_sub as f64;
        let norm0: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        self.next.copy_from_slice(v);
        for _ in 0..n_sub {
            self.term.copy_from_slice(&self.next);
            self.acc.copy_from_slice(&self.next);
            for j in 1..=40 {
                Self::toeplitz_apply(&self.v_hat, &self.term, &mut self.av);
                let factor = Complex64::new(0.0, -h_sub) / j as f64;
                let mut tmax = 0.0f64;
                for ((t, a), o) in self.term.iter_mut().zip(&self.av).zip(&mut self.acc) {
                    *t = a * factor;
                    *o += *t;
                    tmax = tmax.max(t.norm());
                }
                if tmax <= 1e-18 * norm0.max(1e-300) {
                    break;
                }
            }
            self.next.copy_from_slice(&self.acc);
        }
    }

    /// One nonlinear half-kick over time h with the potential frozen at the
    /// substep midpoint (self-consistent to fp_tol); `coeffs` is updated in
    /// place.
    fn half_kick(
        &mut self,
        coeffs: &mut [Complex64],
        h: f64,
        potential: &Potential,
        params: &FlowParams,
    ) -> Result<()> {
        if potential.is_zero() || h == 0.0 {
            return Ok(());
        }
        let norm0: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return Ok(());
        }
        self.mid.copy_from_slice(coeffs);
        for _ in 0..params.fp_max_iters {
            symbol_into(&mut self.v_hat, &self.mid, potential);
            self.exp_kick(h, coeffs);
            let mut diff = 0.0f64;
            for ((m, c), n) in self.mid.iter_mut().zip(coeffs.iter()).zip(&self.next) {
                let new_mid = 0.5 * (c + n);
                diff += (new_mid - *m).norm_sqr();
                *m = new_mid;
            }
            if diff.sqrt() <= 0.5 * params.fp_tol * norm0 {
                coeffs.copy_from_slice(&self.next);
                return Ok(());
            }
        }
        Err(Error::NoConvergence(format!(
            "midpoint potential iteration did not reach {} in {} iterations; reduce dt",
            params.fp_tol, params.fp_max_iters
        )))
    }
}

fn drift(coeffs: &mut [Complex64], h: f64, spectrum: &Spectrum) {
    for (c, lam) in coeffs.iter_mut().zip(&spectrum.lambdas) {
        let ph = -h * lam;
        *c *= Complex64::new(ph.cos(), ph.sin());
    }
}

/// Flow map S_t: evolve `field` by time `t` (either sign).
pub fn evolve(
    field: &Field,
    t: f64,
    potential: &Potential,
    spectrum: &Spectrum,
    params: &FlowParams,
) -> Result<Field> {
    if !field.is_finite() {
        return Err(Error::NonFinite("initial field".into()));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    let n_steps = (t.abs() / params.dt).ceil().max(1.0) as usize;
    let h = t / n_steps as f64;
    let mut coeffs = field.coeffs.clone();
    let mut ws = KickWorkspace::new(coeffs.len());
    for _ in 0..n_steps {
        ws.half_kick(&mut coeffs, 0.5 * h, potential, params)?;
        drift(&mut coeffs, h, spectrum);
        ws.half_kick(&mut coeffs, 0.5 * h, potential, params)?;
    }
    let out = Field { coeffs };
    if !out.is_finite() {
        return Err(Error::NonFinite("field after evolution".into()));
    }
    Ok(out)
}

/// Conserved energy of the truncated system:
/// sum_k lambda_k |c_k|^2 + W(u).
pub fn hamiltonian_energy(field: &Field, potential: &Potential, spectrum: &Spectrum) -> f64 {
    let linear: f64 = field
        .coeffs
        .iter()
        .zip(&spectrum.lambdas)
        .map(|(c, lam)| lam * c.norm_sqr())
        .sum();
    linear + interaction_energy(field, potential)
}

/// Theta(xi) evaluated on S_t(field).
pub fn flow_observable(
    xi: &Observable,
    field: &Field,
    t: f64,
    potential: &Potential,
    spectrum: &Spectrum,
    params: &FlowParams,
) -> Result<Complex64> {
    let moved = evolve(field, t, potential, spectrum, params)?;
    crate::classical::theta_observable(xi, &moved)
}

/// Evolve to each requested time, reusing the trajectory: times are grouped
/// by sign and visited in order of increasing magnitude, so each sample is
/// integrated once per branch. Returns fields in the order of `times`.
pub fn evolve_to_times(
    field: &Field,
    times: &[f64],
    potential: &Potential,
    spectrum: &Spectrum,
    params: &FlowParams,
) -> Result<Vec<Field>> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].abs().partial_cmp(&times[b].abs()).unwrap());
    let mut out: Vec<Option<Field>> = vec![None; times.len()];
    let mut pos_state = field.clone();
    let mut pos_t = 0.0;
    let mut neg_state = field.clone();
    let mut neg_t = 0.0;
    for idx in order {
        let t = times[idx];
        if t >= 0.0 {
            if t > pos_t {
                pos_state = evolve(&pos_state, t - pos_t, potential, spectrum, params)?;
                pos_t = t;
            }
            out[idx] = Some(if t == 0.0 { field.clone() } else { pos_state.clone() });
        } else {
            if t < neg_t {
                neg_state = evolve(&neg_state, t - neg_t, potential, spectrum, params)?;
                neg_t = t;
            }
            out[idx] = Some(neg_state.clone());
        }
    }
    Ok(out.into_iter().map(|f| f.unwrap()).collect())
}

/// Mass and energy records along a trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryReport {
    pub times: Vec<f64>,
    pub masses: Vec<f64>,
    pub energies: Vec<f64>,
    pub fields: Vec<Field>,
}

impl TrajectoryReport {
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.masses[0];
        self.masses
            .iter()
            .map(|m| (m - m0).abs() / m0.max(1e-300))
            .fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .map(|e| (e - e0).abs() / e0.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// Evolve to t_final recording `n_records` evenly spaced checkpoints.
pub fn trajectory(
    field: &Field,
    t_final: f64,
    n_records: usize,
    potential: &Potential,
    spectrum: &Spectrum,
    params: &FlowParams,
) -> Result<TrajectoryReport> {
    let n = n_records.max(1);
    let mut times = Vec::with_capacity(n + 1);
    let mut masses = Vec::with_capacity(n + 1);
    let mut energies = Vec::with_capacity(n + 1);
    let mut fields = Vec::with_capacity(n + 1);
    let mut state = field.clone();
    times.push(0.0);
    masses.push(state.l2_norm_sq());
    energies.push(hamiltonian_energy(&state, potential, spectrum));
    fields.push(state.clone());
    for i in 1..=n {
        let target = t_final * i as f64 / n as f64;
        let prev = t_final * (i - 1) as f64 / n as f64;
        state = evolve(&state, target - prev, potential, spectrum, params)?;
        times.push(target);
        masses.push(state.l2_norm_sq());
        energies.push(hamiltonian_energy(&state, potential, spectrum));
        fields.push(state.clone());
    }
    Ok(TrajectoryReport { times, masses, energies, fields })
}

/// One row of the mollifier-stability experiment.
#[derive(Debug, Clone, Copy)]
pub struct MollifierRow {
    pub eps: f64,
    pub sup_err: f64,
}

#[derive(Debug, Clone)]
pub struct MollifierReport {
    pub rows: Vec<MollifierRow>,
    /// Least-squares slope of log(err) against log(eps).
    pub loglog_slope: f64,
}

/// sup_{|t| <= t_max} ||u^eps - u||_{L^2} along a decreasing eps schedule,
/// with the local-delta flow as the reference. The sup is taken over
/// `n_checkpoints` times per sign.
#[allow(clippy::too_many_arguments)]
pub fn mollifier_convergence(
    phi0: &Field,
    eps_schedule: &[f64],
    t_max: f64,
    n_checkpoints: usize,
    base: crate::potential::MollifierBase,
    grid: &crate::spectral::Grid,
    spectrum: &Spectrum,
    params: &FlowParams,
) -> Result<MollifierReport> {
    for pair in eps_schedule.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::InvalidParameter(
                "eps schedule must be strictly decreasing".into(),
            ));
        }
    }
    let local = Potential::local_delta(grid);
    let mut check_times = Vec::new();
    for i in 1..=n_checkpoints.max(1) {
        let t = t_max * i as f64 / n_checkpoints.max(1) as f64;
        check_times.push(t);
        check_times.push(-t);
    }
    let reference = evolve_to_times(phi0, &check_times, &local, spectrum, params)?;
    let mut rows = Vec::with_capacity(eps_schedule.len());
    for &eps in eps_schedule {
        let pot = Potential::mollified(grid, eps, base)?;
        let moved = evolve_to_times(phi0, &check_times, &pot, spectrum, params)?;
        let sup = reference
            .iter()
            .zip(&moved)
            .map(|(a, b)| a.l2_distance(b))
            .fold(0.0, f64::max);
        rows.push(MollifierRow { eps, sup_err: sup });
    }
    let slope = loglog_slope(&rows);
    Ok(MollifierReport { rows, loglog_slope: slope })
}

fn loglog_slope(rows: &[MollifierRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_err > 0.0)
        .map(|r| (r.eps.ln(), r.sup_err.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::FreeFieldSampler;
    use crate::potential::MollifierBase;
    use crate::spectral::Grid;

    fn setup(k: usize, p: usize) -> (Grid, Spectrum) {
        let g = Grid::new(k, p, 1.0).unwrap();
        let s = Spectrum::of_grid(&g);
        (g, s)
    }

    #[test]
    fn zero_time_is_identity() {
        let (g, s) = setup(2, 12);
        let sampler = FreeFieldSampler::new(g.clone(), 1);
        let f = sampler.sample(0);
        let out =
            evolve(&f, 0.0, &Potential::local_delta(&g), &s, &FlowParams::default()).unwrap();
        assert_eq!(out.coeffs, f.coeffs);
    }

    #[test]
    fn plane_wave_matches_closed_form_local_and_nonlocal() {
        let (g, s) = setup(2, 16);
        let c = Complex64::new(0.8, -0.3);
        let k = 1i64;
        let mut f0 = Field::zero(&g);
        f0.set_mode(&g, k, c);
        let params = FlowParams::with_dt(1e-4).unwrap();
        let t = 1.0;
        // local: phase lambda_k + |c|^2
        let local = Potential::local_delta(&g);
        let out = evolve(&f0, t, &local, &s, &params).unwrap();
        let phase = -(s.lambda_of_mode(k) + c.norm_sqr()) * t;
        let expect = c * Complex64::new(phase.cos(), phase.sin());
        let err = (out.coeff_of_mode(&g, k) - expect).norm();
        assert!(err < 1e-8, "local plane wave error {err}");
        // nonlocal: phase uses w_hat(0) |c|^2
        let pot = Potential::mollified(&g, 0.5, MollifierBase::RaisedCosine).unwrap();
        let out = evolve(&f0, t, &pot, &s, &params).unwrap();
        let phase = -(s.lambda_of_mode(k) + pot.hat(0) * c.norm_sqr()) * t;
        let expect = c * Complex64::new(phase.cos(), phase.sin());
        let err = (out.coeff_of_mode(&g, k) - expect).norm();
        assert!(err < 1e-8, "nonlocal plane wave error {err}");
    }

    #[test]
    fn mass_is_conserved_to_roundoff() {
        let (g, s) = setup(3, 16);
        let sampler = FreeFieldSampler::new(g.clone(), 21);
        let params = FlowParams::with_dt(2e-3).unwrap();
        let pot = Potential::local_delta(&g);
        for i in 0..20 {
            let f = sampler.sample(i);
            let m0 = f.l2_norm_sq();
            let out = evolve(&f, 2.5, &pot, &s, &params).unwrap();
            let drift = (out.l2_norm_sq() - m0).abs() / m0;
            assert!(drift < 1e-12, "sample {i}: mass drift {drift}");
        }
    }

    #[test]
    fn mass_conserved_over_long_horizon() {
        let (g, s) = setup(2, 12);
        let sampler = FreeFieldSampler::new(g.clone(), 27);
        let f = sampler.sample(0);
        let m0 = f.l2_norm_sq();
        let params = FlowParams::with_dt(5e-3).unwrap();
        let out = evolve(&f, 10.0, &Potential::local_delta(&g), &s, &params).unwrap();
        let drift = (out.l2_norm_sq() - m0).abs() / m0;
        assert!(drift < 1e-11, "t = 10 mass drift {drift}");
    }

    #[test]
    fn reversibility() {
        let (g, s) = setup(3, 16);
        let sampler = FreeFieldSampler::new(g.clone(), 22);
        let params = FlowParams::with_dt(1e-3).unwrap();
        let pot = Potential::local_delta(&g);
        let f = sampler.sample(3);
        let fwd = evolve(&f, 1.0, &pot, &s, &params).unwrap();
        let back = evolve(&fwd, -1.0, &pot, &s, &params).unwrap();
        let err = back.l2_distance(&f) / f.l2_norm_sq().sqrt();
        assert!(err < 1e-8, "reversibility error {err}");
    }

    #[test]
    fn energy_drift_scales_like_dt_squared() {
        let (g, s) = setup(3, 16);
        let sampler = FreeFieldSampler::new(g.clone(), 23);
        let f = sampler.sample(1);
        let pot = Potential::local_delta(&g);
        let drift_at = |dt: f64| {
            let params = FlowParams::with_dt(dt).unwrap();
            trajectory(&f, 1.0, 10, &pot, &s, &params).unwrap().max_energy_drift()
        };
        let d1 = drift_at(2e-3);
        let d2 = drift_at(1e-3);
        let ratio = d1 / d2;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "energy drift ratio {ratio} (drifts {d1}, {d2})"
        );
    }

    #[test]
    fn flow_observable_conserves_mass_observable() {
        let (g, s) = setup(2, 12);
        let sampler = FreeFieldSampler::new(g.clone(), 24);
        let f = sampler.sample(0);
        let pot = Potential::local_delta(&g);
        let params = FlowParams::with_dt(1e-3).unwrap();
        let one = Observable::identity(1, g.n_modes());
        let at0 = flow_observable(&one, &f, 0.0, &pot, &s, &params).unwrap();
        let at1 = flow_observable(&one, &f, 1.0, &pot, &s, &params).unwrap();
        assert!((at0 - at1).norm() < 1e-10, "{at0} vs {at1}");
        assert!(
            (at0 - crate::classical::theta_observable(&one, &f).unwrap()).norm() < 1e-14
        );
    }

    #[test]
    fn diagonal_observable_constant_on_plane_wave() {
        let (g, s) = setup(1, 8);
        let mut f = Field::zero(&g);
        f.set_mode(&g, 1, Complex64::new(0.7, 0.1));
        let pot = Potential::local_delta(&g);
        let params = FlowParams::with_dt(1e-3).unwrap();
        let mut weights = vec![Complex64::new(0.0, 0.0); g.n_modes()];
        weights[g.slot_of_mode(1)] = Complex64::new(3.0, 0.0);
        let diag = Observable::diagonal(1, g.n_modes(), &weights).unwrap();
        let v0 = flow_observable(&diag, &f, 0.0, &pot, &s, &params).unwrap();
        let v1 = flow_observable(&diag, &f, 0.7, &pot, &s, &params).unwrap();
        assert!((v0 - v1).norm() < 1e-10);
    }

    #[test]
    fn mollifier_error_vanishes_for_identical_flows() {
        let (g, s) = setup(2, 16);
        let sampler = FreeFieldSampler::new(g.clone(), 25);
        let f = sampler.sample(0);
        let params = FlowParams::with_dt(5e-3).unwrap();
        let pot = Potential::mollified(&g, 0.5, MollifierBase::RaisedCosine).unwrap();
        let times = [0.5, -0.5];
        let a = evolve_to_times(&f, &times, &pot, &s, &params).unwrap();
        let b = evolve_to_times(&f, &times, &pot, &s, &params).unwrap();
        assert_eq!(a[0].coeffs, b[0].coeffs);
        assert_eq!(a[1].coeffs, b[1].coeffs);
    }

    #[test]
    fn plane_wave_mollified_equals_local_after_renormalization() {
        // w_hat(0) = 1 exactly, so the plane-wave phases agree: sup error ~ 0.
        let (g, s) = setup(2, 32);
        let mut f = Field::zero(&g);
        f.set_mode(&g, 1, Complex64::new(1.0, 0.0));
        let params = FlowParams::with_dt(1e-3).unwrap();
        let report = mollifier_convergence(
            &f,
            &[0.5, 0.25],
            1.0,
            2,
            MollifierBase::RaisedCosine,
            &g,
            &s,
            &params,
        )
        .unwrap();
        for row in &report.rows {
            assert!(row.sup_err < 1e-9, "eps {} err {}", row.eps, row.sup_err);
        }
    }

    #[test]
    fn mollifier_errors_decrease_with_slope() {
        let (g, s) = setup(8, 64);
        let sampler = FreeFieldSampler::new(g.clone(), 26);
        let f = sampler.sample(2);
        let params = FlowParams::with_dt(5e-3).unwrap();
        let report = mollifier_convergence(
            &f,
            &[0.5, 0.25, 0.125],
            0.5,
            2,
            MollifierBase::RaisedCosine,
            &g,
            &s,
            &params,
        )
        .unwrap();
        for pair in report.rows.windows(2) {
            assert!(
                pair[1].sup_err <= pair[0].sup_err * 1.05,
                "errors not decreasing: {:?}",
                report.rows
            );
        }
        assert!(report.loglog_slope >= 0.1, "slope {}", report.loglog_slope);
    }
}
