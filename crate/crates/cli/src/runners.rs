//! One function per experiment. Each returns whether the run passed its
//! tolerances; setup problems surface as errors.

use crate::config::{Config, ConfigError, ConfigResult};
use crate::output::{fmt_f64, CsvTable, RunDir};
use nls_gibbs::classical::{
    ratio_estimate, theta_observable, Ensemble, Estimate, FreeFieldSampler,
};
use nls_gibbs::correlate::{
    classical_correlation, local_limit_sweep, quantum_correlation, tail_bound_check, tau_sweep,
    CorrelationTerm,
};
use nls_gibbs::dyson::{dyson_coefficients, dyson_quantum_errors};
use nls_gibbs::flow::{evolve, mollifier_convergence, trajectory, FlowParams};
use nls_gibbs::fock::{
    build_hamiltonians, suggest_n_max, two_body_from_potential, FockBasis, HamiltonianEig,
};
use nls_gibbs::observable::Observable;
use nls_gibbs::potential::Potential;
use nls_gibbs::spectral::{Field, Grid, Spectrum};
use nls_gibbs::xsb::{
    h_dot_sigma, slobodeckij_norm, strichartz_ratio, xsb_norm, SpacetimeField,
};
use nls_gibbs::rng::Stream;
use num_complex::Complex64;

fn lib_err(e: nls_gibbs::Error) -> ConfigError {
    ConfigError(format!("{e}"))
}

fn flow_params(cfg: &Config) -> ConfigResult<FlowParams> {
    let dt = cfg.f64_or("flow.dt", 1e-3)?;
    FlowParams::with_dt(dt).map_err(lib_err)
}

fn build_terms(cfg: &Config, grid: &Grid) -> ConfigResult<Vec<CorrelationTerm>> {
    let times = cfg.f64_list("times")?;
    let names: Vec<&str> = cfg.require("observables")?.split(',').map(|s| s.trim()).collect();
    if times.len() != names.len() {
        return Err(ConfigError(format!(
            "{} observables for {} times",
            names.len(),
            times.len()
        )));
    }
    let seed = cfg.seed()?;
    names
        .iter()
        .zip(&times)
        .map(|(name, &t)| Ok(CorrelationTerm { xi: cfg.observable(name, grid, seed)?, t }))
        .collect()
}

fn build_ensemble(cfg: &Config, grid: &Grid, potential: &Potential) -> ConfigResult<Ensemble> {
    let n = cfg.usize("ensemble.size")?;
    let sampler = FreeFieldSampler::new(grid.clone(), cfg.seed()?);
    Ok(Ensemble::build(&sampler, potential.clone(), n))
}

fn quantum_engine(
    cfg: &Config,
    grid: &Grid,
    potential: &Potential,
    tau: f64,
) -> ConfigResult<(FockBasis, HamiltonianEig)> {
    let spectrum = Spectrum::of_grid(grid);
    let tail_tol = cfg.f64_or("fock.tail_tol", 1e-9)?;
    let slack = cfg.f64_or("fock.n_max_slack", 1.3)?;
    let (n_free, _) = suggest_n_max(&spectrum.lambdas, 0.0, tau, tail_tol);
    let n_max = ((n_free as f64) * slack).ceil() as usize;
    let basis = FockBasis::new(grid.n_modes(), n_max).map_err(lib_err)?;
    let two_body =
        if potential.is_zero() { None } else { Some(two_body_from_potential(potential, grid)) };
    let (_, _, h_full) =
        build_hamiltonians(&spectrum.lambdas, two_body.as_ref(), tau, &basis).map_err(lib_err)?;
    let eig = HamiltonianEig::new(&h_full, &basis).map_err(lib_err)?;
    Ok((basis, eig))
}

// --------------------------------------------------------------------------

pub fn run_sample(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let potential = cfg.potential(&grid)?;
    let ensemble = build_ensemble(cfg, &grid, &potential)?;
    let mut header = vec!["sample".to_string(), "weight".to_string()];
    for k in grid.modes() {
        header.push(format!("re_c_{k}"));
        header.push(format!("im_c_{k}"));
    }
    let mut table =
        CsvTable::new(&header.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    for (i, (sample, weight)) in ensemble.samples.iter().zip(&ensemble.weights).enumerate() {
        let mut row = vec![i.to_string(), fmt_f64(*weight)];
        for c in &sample.coeffs {
            row.push(fmt_f64(c.re));
            row.push(fmt_f64(c.im));
        }
        table.push(row);
    }
    out.write_csv("ensemble.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    println!(
        "sampled {} fields; discarded spectral tail sum 1/lambda = {:.3e}",
        ensemble.len(),
        grid.truncated_tail()
    );
    Ok(true)
}

pub fn run_evolve(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let spectrum = Spectrum::of_grid(&grid);
    let potential = cfg.potential(&grid)?;
    let params = flow_params(cfg)?;
    let initial = match cfg.get("initial").unwrap_or("sample:0") {
        spec if spec.starts_with("sample:") => {
            let idx: u64 = spec["sample:".len()..]
                .parse()
                .map_err(|e| ConfigError(format!("initial: bad sample index ({e})")))?;
            FreeFieldSampler::new(grid.clone(), cfg.seed()?).sample(idx)
        }
        spec if spec.starts_with("plane:") => {
            let parts: Vec<&str> = spec["plane:".len()..].split(':').collect();
            if parts.len() != 3 {
                return Err(ConfigError("initial: expected plane:<k>:<re>:<im>".into()));
            }
            let k: i64 = parts[0].parse().map_err(|e| ConfigError(format!("initial: {e}")))?;
            let re: f64 = parts[1].parse().map_err(|e| ConfigError(format!("initial: {e}")))?;
            let im: f64 = parts[2].parse().map_err(|e| ConfigError(format!("initial: {e}")))?;
            let mut f = Field::zero(&grid);
            f.set_mode(&grid, k, Complex64::new(re, im));
            f
        }
        other => return Err(ConfigError(format!("initial: unknown form `{other}`"))),
    };
    let t_final = cfg.f64_or("evolve.t", 1.0)?;
    let records = cfg.usize_or("evolve.records", 10)?;
    let record_fields = cfg.bool_or("evolve.record_fields", false)?;
    let report =
        trajectory(&initial, t_final, records, &potential, &spectrum, &params).map_err(lib_err)?;
    let mut header = vec!["time".to_string(), "mass".to_string(), "energy".to_string()];
    if record_fields {
        for k in grid.modes() {
            header.push(format!("re_c_{k}"));
            header.push(format!("im_c_{k}"));
        }
    }
    let mut table = CsvTable::new(&header.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    for i in 0..report.times.len() {
        let mut row = vec![
            fmt_f64(report.times[i]),
            fmt_f64(report.masses[i]),
            fmt_f64(report.energies[i]),
        ];
        if record_fields {
            for c in &report.fields[i].coeffs {
                row.push(fmt_f64(c.re));
                row.push(fmt_f64(c.im));
            }
        }
        table.push(row);
    }
    out.write_csv("trajectory.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    let drift = report.max_mass_drift();
    let tol = cfg.f64_or("tolerance.mass_drift", 1e-10)?;
    println!("mass drift {drift:.3e} (tolerance {tol:.1e}); energy drift {:.3e}", report.max_energy_drift());
    Ok(drift <= tol)
}

pub fn run_correlate_classical(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let spectrum = Spectrum::of_grid(&grid);
    let potential = cfg.potential(&grid)?;
    let ensemble = build_ensemble(cfg, &grid, &potential)?;
    let params = flow_params(cfg)?;
    let mut passed = true;
    if cfg.bool_or("invariance.check", false)? {
        // m = 1 correlation of one observable at every listed time, with
        // pairwise equality gates, plus the exact quantum counterpart
        let name = cfg.require("observables")?;
        if name.contains(',') {
            return Err(ConfigError(
                "invariance.check uses a single observable across all times".into(),
            ));
        }
        let xi = cfg.observable(name.trim(), &grid, cfg.seed()?)?;
        let times = cfg.f64_list("times")?;
        let mut per_time: Vec<Vec<Complex64>> = Vec::new();
        for &t in &times {
            let mut vals = Vec::with_capacity(ensemble.len());
            for sample in &ensemble.samples {
                let moved = evolve(sample, t, &potential, &spectrum, &params).map_err(lib_err)?;
                vals.push(theta_observable(&xi, &moved).map_err(lib_err)?);
            }
            per_time.push(vals);
        }
        let mut table =
            CsvTable::new(&["time", "value_re", "value_im", "stderr", "diff_from_t0", "diff_stderr"]);
        let base = ratio_estimate(&per_time[0], &ensemble.weights);
        for (ti, vals) in times.iter().zip(&per_time) {
            let est = ratio_estimate(vals, &ensemble.weights);
            let diffs: Vec<Complex64> =
                vals.iter().zip(&per_time[0]).map(|(a, b)| a - b).collect();
            let diff_est = ratio_estimate(&diffs, &ensemble.weights);
            if diff_est.value.norm() > 3.0 * diff_est.stderr {
                passed = false;
            }
            table.push(vec![
                fmt_f64(*ti),
                fmt_f64(est.value.re),
                fmt_f64(est.value.im),
                fmt_f64(est.stderr),
                fmt_f64(diff_est.value.norm()),
                fmt_f64(diff_est.stderr),
            ]);
        }
        let _ = base;
        out.write_csv("invariance.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
        // quantum single-factor exactness on the same observable
        let tau = cfg.f64_or("invariance.tau", 1.0)?;
        let n_max = cfg.usize_or("invariance.n_max", 20)?;
        let basis = FockBasis::new(grid.n_modes(), n_max).map_err(lib_err)?;
        let two_body = two_body_from_potential(&potential, &grid);
        let (_, _, h_full) =
            build_hamiltonians(&spectrum.lambdas, Some(&two_body), tau, &basis)
                .map_err(lib_err)?;
        let eig = HamiltonianEig::new(&h_full, &basis).map_err(lib_err)?;
        let q_at = |t: f64| -> ConfigResult<Complex64> {
            quantum_correlation(
                &[CorrelationTerm { xi: xi.clone(), t }],
                tau,
                &basis,
                &eig,
                0.0,
                None,
            )
            .map_err(lib_err)
        };
        let q0 = q_at(0.0)?;
        for &t in &times[1..] {
            if (q_at(t)? - q0).norm() > 1e-12 {
                passed = false;
            }
        }
        println!("invariance: classical pairwise within 3 sigma: {passed}");
    } else {
        let terms = build_terms(cfg, &grid)?;
        let est = classical_correlation(&terms, &ensemble, &spectrum, &params, None)
            .map_err(lib_err)?;
        let mut table = CsvTable::new(&["value_re", "value_im", "stderr"]);
        table.push(vec![fmt_f64(est.value.re), fmt_f64(est.value.im), fmt_f64(est.stderr)]);
        out.write_csv("correlation.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
        println!("classical correlation {} +- {:.3e}", est.value, est.stderr);
    }
    Ok(passed)
}

pub fn run_correlate_quantum(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let potential = cfg.potential(&grid)?;
    let terms = build_terms(cfg, &grid)?;
    let tau = cfg.f64("quantum.tau")?;
    let (basis, eig) = quantum_engine(cfg, &grid, &potential, tau)?;
    let value = quantum_correlation(&terms, tau, &basis, &eig, 0.0, None).map_err(lib_err)?;
    let mut table = CsvTable::new(&["tau", "value_re", "value_im"]);
    table.push(vec![fmt_f64(tau), fmt_f64(value.re), fmt_f64(value.im)]);
    out.write_csv("correlation.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    println!("quantum correlation at tau {tau}: {value}");
    if cfg.bool_or("quantum.dump_operator", false)? {
        // debug dump of the first lifted observable
        let lifted =
            nls_gibbs::fock::lift_operator(&terms[0].xi, tau, &basis).map_err(lib_err)?;
        let mut dump = CsvTable::new(&[
            "row_sector",
            "col_sector",
            "row_occupation",
            "col_occupation",
            "re",
            "im",
        ]);
        for e in nls_gibbs::fock::dump_operator(&lifted, &basis) {
            let occ = |v: &[u32]| {
                v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
            };
            dump.push(vec![
                e.row_sector.to_string(),
                e.col_sector.to_string(),
                occ(&e.row_occupation),
                occ(&e.col_occupation),
                fmt_f64(e.value.re),
                fmt_f64(e.value.im),
            ]);
        }
        out.write_csv("operator.csv", &dump).map_err(|e| ConfigError(e.to_string()))?;
    }
    let mut passed = true;
    if cfg.bool_or("invariance.check", false)? {
        let xi = terms[0].xi.clone();
        let q_at = |t: f64| -> ConfigResult<Complex64> {
            quantum_correlation(
                &[CorrelationTerm { xi: xi.clone(), t }],
                tau,
                &basis,
                &eig,
                0.0,
                None,
            )
            .map_err(lib_err)
        };
        let q0 = q_at(0.0)?;
        for &t in &cfg.f64_list("times")?[1..] {
            if (q_at(t)? - q0).norm() > 1e-12 {
                passed = false;
            }
        }
    }
    Ok(passed)
}

pub fn run_tau_sweep(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let spectrum = Spectrum::of_grid(&grid);
    let potential = cfg.potential(&grid)?;
    let terms = build_terms(cfg, &grid)?;
    let taus = cfg.f64_list("tau.schedule")?;
    let params = flow_params(cfg)?;
    let classical = match cfg.get("classical.reference").unwrap_or("monte-carlo") {
        "closed-form" => {
            if !potential.is_zero() || terms.len() != 1 {
                return Err(ConfigError(
                    "classical.reference = closed-form needs a free potential and m = 1".into(),
                ));
            }
            // free Gaussian two-point: rho(Theta(xi)) = sum_k xi_kk / lambda_k
            let xi = &terms[0].xi;
            let mut value = Complex64::new(0.0, 0.0);
            for (slot, lam) in spectrum.lambdas.iter().enumerate() {
                value += xi.kernel.get(slot, slot) / lam;
            }
            Estimate { value, stderr: 0.0 }
        }
        "monte-carlo" => {
            let ensemble = build_ensemble(cfg, &grid, &potential)?;
            classical_correlation(&terms, &ensemble, &spectrum, &params, None).map_err(lib_err)?
        }
        other => {
            return Err(ConfigError(format!("classical.reference: unknown mode `{other}`")))
        }
    };
    let tail_tol = cfg.f64_or("fock.tail_tol", 1e-9)?;
    let slack = cfg.f64_or("fock.n_max_slack", 1.3)?;
    let report = tau_sweep(&terms, &grid, &potential, &taus, classical, tail_tol, slack, None)
        .map_err(lib_err)?;
    let mut table = CsvTable::new(&[
        "parameter",
        "value_re",
        "value_im",
        "stderr",
        "classical_ref_re",
        "classical_ref_im",
        "gap",
    ]);
    for row in &report.rows {
        table.push(vec![
            fmt_f64(row.param),
            fmt_f64(row.value.re),
            fmt_f64(row.value.im),
            fmt_f64(classical.stderr),
            fmt_f64(row.reference.re),
            fmt_f64(row.reference.im),
            fmt_f64(row.gap),
        ]);
    }
    out.write_csv("sweep.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    for row in &report.rows {
        println!("tau {:8.1}  value {:.8}  gap {:.3e}", row.param, row.value.re, row.gap);
    }
    let passed = match cfg.get("sweep.check").unwrap_or("shrinking") {
        "halving" => report.rows.windows(2).all(|w| {
            let r = w[1].gap / w[0].gap;
            (0.45..=0.55).contains(&r)
        }),
        "shrinking" => {
            let tail_ok = !report.non_decreasing_tail(1);
            let tau_max = taus.last().copied().unwrap_or(1.0);
            let allowance = 3.0 * (classical.stderr + 1.0 / (2.0 * tau_max));
            tail_ok && report.rows.last().map(|r| r.gap <= allowance).unwrap_or(false)
        }
        "none" => true,
        other => return Err(ConfigError(format!("sweep.check: unknown mode `{other}`"))),
    };
    Ok(passed)
}

pub fn run_local_limit(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let terms = build_terms(cfg, &grid)?;
    let taus = cfg.f64_list("tau.schedule")?;
    let exponent = cfg.f64_or("eps.exponent", 0.25)?;
    let base = cfg.mollifier_base()?;
    let sampler = FreeFieldSampler::new(grid.clone(), cfg.seed()?);
    let n_samples = cfg.usize("ensemble.size")?;
    let params = flow_params(cfg)?;
    let tail_tol = cfg.f64_or("fock.tail_tol", 1e-9)?;
    let slack = cfg.f64_or("fock.n_max_slack", 1.3)?;
    let rows = local_limit_sweep(
        &terms, &grid, &taus, exponent, base, &sampler, n_samples, &params, tail_tol, slack,
    )
    .map_err(lib_err)?;
    let mut table = CsvTable::new(&[
        "tau",
        "eps",
        "quantum_re",
        "quantum_im",
        "classical_mollified_re",
        "classical_mollified_im",
        "classical_mollified_err",
        "classical_local_re",
        "classical_local_im",
        "classical_local_err",
        "gap_quantum",
        "gap_mollifier",
        "gap_total",
    ]);
    for r in &rows {
        table.push(vec![
            fmt_f64(r.tau),
            fmt_f64(r.eps),
            fmt_f64(r.quantum.re),
            fmt_f64(r.quantum.im),
            fmt_f64(r.classical_mollified.re),
            fmt_f64(r.classical_mollified.im),
            fmt_f64(r.classical_mollified_err),
            fmt_f64(r.classical_local.re),
            fmt_f64(r.classical_local.im),
            fmt_f64(r.classical_local_err),
            fmt_f64(r.gap_quantum),
            fmt_f64(r.gap_mollifier),
            fmt_f64(r.gap_total),
        ]);
        println!(
            "tau {:6.1} eps {:.4}  gap_q {:.3e}  gap_m {:.3e}  gap_total {:.3e}",
            r.tau, r.eps, r.gap_quantum, r.gap_mollifier, r.gap_total
        );
    }
    out.write_csv("local_limit.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    // triangle consistency and a shrinking coupled gap within error bars
    let mut passed = true;
    for r in &rows {
        if r.gap_total > r.gap_quantum + r.gap_mollifier + 1e-12 {
            passed = false;
        }
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        let allowance =
            3.0 * (first.classical_mollified_err + last.classical_mollified_err
                + first.classical_local_err);
        if last.gap_total > first.gap_total + allowance {
            passed = false;
        }
    }
    Ok(passed)
}

pub fn run_mollifier_sweep(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let spectrum = Spectrum::of_grid(&grid);
    let eps = cfg.f64_list("eps.schedule")?;
    let t_max = cfg.f64_or("mollifier.t_max", 1.0)?;
    let checkpoints = cfg.usize_or("mollifier.checkpoints", 4)?;
    let base = cfg.mollifier_base()?;
    let params = flow_params(cfg)?;
    let phi0 = FreeFieldSampler::new(grid.clone(), cfg.seed()?).sample(0);
    let report = mollifier_convergence(
        &phi0, &eps, t_max, checkpoints, base, &grid, &spectrum, &params,
    )
    .map_err(lib_err)?;
    let mut table = CsvTable::new(&["eps", "sup_err"]);
    for row in &report.rows {
        table.push(vec![fmt_f64(row.eps), fmt_f64(row.sup_err)]);
        println!("eps {:.5}  sup error {:.6e}", row.eps, row.sup_err);
    }
    out.write_csv("mollifier.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    println!("log-log slope {:.3}", report.loglog_slope);
    let slope_min = cfg.f64_or("tolerance.slope_min", 0.1)?;
    let decreasing =
        report.rows.windows(2).all(|w| w[1].sup_err <= w[0].sup_err * 1.05);
    Ok(decreasing && report.loglog_slope >= slope_min)
}

pub fn run_dyson_check(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let spectrum = Spectrum::of_grid(&grid);
    let potential = cfg.potential(&grid)?;
    let w2 = two_body_from_potential(&potential, &grid);
    let w_norm = w2.op_norm();
    let kc = cfg.f64_or("dyson.kc", 0.2)?;
    let tau = cfg.f64_or("dyson.tau", 100.0)?;
    let t = cfg.f64_or("dyson.t", 0.25)?;
    let orders = cfg.usize_or("dyson.orders", 3)?;
    let quad = cfg.usize_or("dyson.quadrature", 8)?;
    let mut stream = Stream::derive(cfg.seed()?, &[0xd50]);
    let xi =
        Observable::random_hermitian(1, grid.n_modes(), &mut stream).map_err(lib_err)?;
    let series = dyson_coefficients(&xi, &w2, t, orders, quad, &spectrum.lambdas, kc, w_norm)
        .map_err(lib_err)?;
    let n_max = (kc * tau).round() as usize;
    let basis = FockBasis::new(grid.n_modes(), n_max).map_err(lib_err)?;
    let (_, _, h_full) =
        build_hamiltonians(&spectrum.lambdas, Some(&w2), tau, &basis).map_err(lib_err)?;
    let eig = HamiltonianEig::new(&h_full, &basis).map_err(lib_err)?;
    let errs = dyson_quantum_errors(&series, tau, &basis, &eig, n_max).map_err(lib_err)?;
    let mut table = CsvTable::new(&["order", "error"]);
    for (l, e) in errs.iter().enumerate() {
        table.push(vec![l.to_string(), fmt_f64(*e)]);
        println!("order {l}: truncation error {e:.6e}");
    }
    out.write_csv("dyson_errors.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    let budget = 2.0 * std::f64::consts::E * kc * w_norm * t.abs();
    let floor = errs.last().copied().unwrap_or(0.0) * 4.0;
    let ratios: Vec<f64> =
        errs.windows(2).filter(|w| w[1] > floor).map(|w| w[1] / w[0]).collect();
    let mut passed = errs.len() >= 2 && errs[1] < errs[0];
    if !ratios.is_empty() {
        let geo = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
        println!("geometric decay ratio {geo:.4} (budget {budget:.4})");
        passed = passed && geo <= budget * 1.2;
    }
    // classical first-order derivative against the bracket
    let params = flow_params(cfg)?;
    let fd_samples = cfg.usize_or("dyson.fd_samples", 3)?;
    let h_obs = Observable::diagonal(
        1,
        grid.n_modes(),
        &spectrum.lambdas.iter().map(|l| Complex64::new(*l, 0.0)).collect::<Vec<_>>(),
    )
    .map_err(lib_err)?;
    let bracket_h = h_obs.bracket(&xi, 1).map_err(lib_err)?;
    let bracket_w = w2.bracket(&xi, 1).map_err(lib_err)?;
    let sampler = FreeFieldSampler::new(grid.clone(), cfg.seed()?);
    let mut worst_rel = 0.0f64;
    for i in 0..fd_samples as u64 {
        let phi = sampler.sample(i);
        let h_fd = 5e-4;
        let at = |t: f64| -> ConfigResult<Complex64> {
            let moved = evolve(&phi, t, &potential, &spectrum, &params).map_err(lib_err)?;
            theta_observable(&xi, &moved).map_err(lib_err)
        };
        let fd = (8.0 * (at(h_fd)? - at(-h_fd)?) - (at(2.0 * h_fd)? - at(-2.0 * h_fd)?))
            / (12.0 * h_fd);
        let analytic = Complex64::i()
            * (theta_observable(&bracket_h, &phi).map_err(lib_err)?
                + theta_observable(&bracket_w, &phi).map_err(lib_err)?);
        let rel = (fd - analytic).norm() / analytic.norm().max(1e-12);
        worst_rel = worst_rel.max(rel);
    }
    println!("first-order derivative check: worst relative error {worst_rel:.3e}");
    Ok(passed && worst_rel <= cfg.f64_or("tolerance.fd_rel", 1e-5)?)
}

pub fn run_partition_ratio(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    use nls_gibbs::fock::{partition_ratio, partition_ratio_limit, partition_ratio_trace};
    let grid = cfg.grid()?;
    let spectrum = Spectrum::of_grid(&grid);
    let nu = cfg.f64("nu")?;
    if nu <= 0.0 {
        return Err(ConfigError("nu must be positive for the partition ratio".into()));
    }
    let taus = cfg.f64_list("tau.schedule")?;
    let limit = partition_ratio_limit(&spectrum.lambdas, nu);
    let mut table = CsvTable::new(&["tau", "product", "limit", "gap"]);
    for &tau in &taus {
        let v = partition_ratio(&spectrum.lambdas, nu, tau);
        table.push(vec![fmt_f64(tau), fmt_f64(v), fmt_f64(limit), fmt_f64((v - limit).abs())]);
        println!("tau {tau:8.1}  product {v:.10}  gap {:.3e}", (v - limit).abs());
    }
    out.write_csv("partition_ratio.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    // exact-trace cross-check at a small tau
    let check_tau = cfg.f64_or("partition.check_tau", 1.0)?;
    let tail_tol = cfg.f64_or("fock.tail_tol", 1e-12)?;
    let (n_max, bound) = suggest_n_max(&spectrum.lambdas, 0.0, check_tau, tail_tol);
    let basis =
        FockBasis::new(grid.n_modes(), (n_max as f64 * 1.2) as usize).map_err(lib_err)?;
    let trace = partition_ratio_trace(&spectrum.lambdas, nu, check_tau, &basis);
    let product = partition_ratio(&spectrum.lambdas, nu, check_tau);
    let diff = (trace - product).abs();
    println!(
        "trace quotient at tau {check_tau}: {trace:.12} vs product {product:.12} \
         (diff {diff:.3e}, truncation bound {bound:.3e})"
    );
    let mut check = CsvTable::new(&["check_tau", "product", "trace", "diff", "tail_bound"]);
    check.push(vec![
        fmt_f64(check_tau),
        fmt_f64(product),
        fmt_f64(trace),
        fmt_f64(diff),
        fmt_f64(bound),
    ]);
    out.write_csv("partition_check.csv", &check).map_err(|e| ConfigError(e.to_string()))?;
    Ok(diff <= cfg.f64_or("tolerance.match", 1e-9)?)
}

pub fn run_tail_bound(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let spectrum = Spectrum::of_grid(&grid);
    let potential = cfg.potential(&grid)?;
    let terms = build_terms(cfg, &grid)?;
    let ensemble = build_ensemble(cfg, &grid, &potential)?;
    let params = flow_params(cfg)?;
    let kcs = cfg.f64_list("kc.schedule")?;
    let rel_width = cfg.f64_or("kc.rel_width", 0.5)?;
    let tau = cfg.f64_or("tail.tau", 8.0)?;
    let n_max = cfg.usize_or("tail.n_max", 120)?;
    let basis = FockBasis::new(grid.n_modes(), n_max).map_err(lib_err)?;
    let two_body = two_body_from_potential(&potential, &grid);
    let (_, _, h_full) =
        build_hamiltonians(&spectrum.lambdas, Some(&two_body), tau, &basis).map_err(lib_err)?;
    let eig = HamiltonianEig::new(&h_full, &basis).map_err(lib_err)?;
    let rows = tail_bound_check(
        &terms, &kcs, rel_width, &ensemble, &spectrum, &params, tau, &basis, &eig,
    )
    .map_err(lib_err)?;
    let mut table = CsvTable::new(&["kc", "classical", "classical_err", "quantum"]);
    for r in &rows {
        table.push(vec![
            fmt_f64(r.kc),
            fmt_f64(r.classical),
            fmt_f64(r.classical_err),
            fmt_f64(r.quantum),
        ]);
        println!(
            "kc {:6.2}  classical {:.6e} +- {:.1e}  quantum {:.6e}",
            r.kc, r.classical, r.classical_err, r.quantum
        );
    }
    out.write_csv("tails.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    let mut passed = true;
    for w in rows.windows(2) {
        if w[1].classical > 0.6 * w[0].classical + 3.0 * w[1].classical_err {
            passed = false;
        }
        if w[1].quantum > 0.6 * w[0].quantum {
            passed = false;
        }
    }
    Ok(passed)
}

pub fn run_xsb(cfg: &Config, out: &mut RunDir) -> ConfigResult<bool> {
    let grid = cfg.grid()?;
    let window = cfg.f64_or("xsb.window", 4.0)?;
    let q = cfg.usize_or("xsb.q", 64)?;
    let n_fields = cfg.usize_or("xsb.fields", 100)?;
    let sigma = cfg.f64_or("xsb.sigma", 0.5)?;
    let b = cfg.f64_or("xsb.b", 0.55)?;
    let mut stream = Stream::derive(cfg.seed()?, &[0x005b]);
    let mut table = CsvTable::new(&["field", "norm", "value"]);
    let mut passed = true;
    let mut max_str_q = 0.0f64;
    let mut max_str_2q = 0.0f64;
    for field_id in 0..n_fields {
        let coeffs: Vec<(i64, i64, Complex64)> = (0..6)
            .map(|_| {
                let k_range = 2 * grid.k_max() as u64 + 1;
                let k = (stream.next_u64() % k_range) as i64 - grid.k_max() as i64;
                let j = ((stream.next_u64() % (q as u64 / 4)) as i64) - q as i64 / 8;
                (k, j, stream.next_complex_gaussian())
            })
            .collect();
        let build = |qq: usize| {
            SpacetimeField::from_fn(&grid, qq, window, |x, t| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, j, c) in &coeffs {
                    let ph =
                        2.0 * std::f64::consts::PI * (*k as f64 * x + *j as f64 / window * t);
                    acc += c * Complex64::new(ph.cos(), ph.sin());
                }
                acc
            })
        };
        let f = build(q).map_err(lib_err)?;
        let l2 = f.l2_norm();
        let plain = xsb_norm(&f, 0.0, 0.0).map_err(lib_err)?;
        if (plain - l2).abs() > 1e-10 * l2 {
            passed = false;
        }
        let weighted = xsb_norm(&f, sigma, b).map_err(lib_err)?;
        let l4 = f.l4_norm();
        let strichartz = strichartz_ratio(&f).map_err(lib_err)?;
        let f2 = build(2 * q).map_err(lib_err)?;
        max_str_q = max_str_q.max(strichartz);
        max_str_2q = max_str_2q.max(strichartz_ratio(&f2).map_err(lib_err)?);
        let weighted_name = format!("xsb_{sigma}_{b}");
        for (name, value) in [
            ("l2_spacetime", l2),
            ("xsb_0_0", plain),
            (weighted_name.as_str(), weighted),
            ("l4_spacetime", l4),
            ("strichartz_ratio", strichartz),
        ] {
            table.push(vec![field_id.to_string(), name.to_string(), fmt_f64(value)]);
        }
    }
    if (max_str_q - max_str_2q).abs() > 0.1 * max_str_q {
        passed = false;
    }
    // Slobodeckij envelope over single modes
    let mut ratios = Vec::new();
    for k in 1..=grid.k_max() as i64 {
        let mut f = Field::zero(&grid);
        f.set_mode(&grid, k, Complex64::new(1.0, 0.0));
        let ratio = slobodeckij_norm(&f, &grid, sigma).map_err(lib_err)?
            / h_dot_sigma(&f, &grid, sigma);
        table.push(vec![format!("mode_{k}"), "slobodeckij_ratio".to_string(), fmt_f64(ratio)]);
        ratios.push(ratio);
    }
    if ratios.len() >= 2 {
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
        if hi / lo > 2.5 {
            passed = false;
        }
    }
    out.write_csv("norms.csv", &table).map_err(|e| ConfigError(e.to_string()))?;
    println!(
        "Strichartz envelope {max_str_q:.4} (Q) vs {max_str_2q:.4} (2Q); fields: {n_fields}"
    );
    Ok(passed)
}

