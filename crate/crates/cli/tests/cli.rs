//! End-to-end runs of the binary: preset behavior, exit codes, closed-form
//! agreement of the free sweep, and byte-identical manifest round trips.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlsgibbs"))
}

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("nlsgibbs-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn list_presets_contains_required_names() {
    let out = bin().arg("list-presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "free-convergence",
        "interacting-tau-sweep",
        "invariance",
        "dyson-order",
        "mollifier-rate",
        "partition-ratio",
        "tail-bound",
        "xsb-envelope",
    ] {
        assert!(text.contains(name), "missing preset {name} in:\n{text}");
    }
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tmp_dir("noseed");
    let out = bin()
        .args(["partition-ratio", "--out"])
        .arg(&dir)
        .args(["--set", "grid.k_max=0", "--set", "grid.p=8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn free_convergence_matches_closed_form_gap() {
    let dir = tmp_dir("free");
    let out = bin()
        .args(["tau-sweep", "--preset", "free-convergence", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let tau_col = header.iter().position(|h| *h == "parameter").unwrap();
    let gap_col = header.iter().position(|h| *h == "gap").unwrap();
    let lambda = 1.0f64;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let tau: f64 = fields[tau_col].parse().unwrap();
        let gap: f64 = fields[gap_col].parse().unwrap();
        let closed = (1.0 / lambda - 1.0 / (tau * ((lambda / tau).exp() - 1.0))).abs();
        assert!(
            (gap - closed).abs() < 1e-12,
            "tau {tau}: gap {gap} vs closed form {closed}"
        );
        // leading behavior lambda / (2 tau)
        let leading = lambda / (2.0 * tau);
        assert!((gap - leading).abs() < 0.6 * leading, "tau {tau}: {gap} vs {leading}");
    }
}

fn read_all_csv(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().map(|e| e == "csv").unwrap_or(false) {
            out.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            ));
        }
    }
    out.sort();
    out
}

#[test]
fn manifest_round_trip_reproduces_bytes() {
    let dir1 = tmp_dir("run1");
    let status = bin()
        .args(["partition-ratio", "--preset", "partition-ratio", "--out"])
        .arg(&dir1)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    // re-run from the emitted manifest into a fresh directory
    let dir2 = tmp_dir("run2");
    let status = bin()
        .args(["partition-ratio", "--config"])
        .arg(dir1.join("manifest.json"))
        .arg("--out")
        .arg(&dir2)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let a = read_all_csv(&dir1);
    let b = read_all_csv(&dir2);
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "{name_a} differs between runs");
    }
    // and from the resolved flat config as well
    let dir3 = tmp_dir("run3");
    let status = bin()
        .args(["partition-ratio", "--config"])
        .arg(dir1.join("resolved.cfg"))
        .arg("--out")
        .arg(&dir3)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(a, read_all_csv(&dir3));
}

#[test]
fn evolve_plane_wave_passes_mass_gate() {
    let dir = tmp_dir("evolve");
    let out = bin()
        .args(["evolve", "--out"])
        .arg(&dir)
        .args([
            "--set",
            "seed=5",
            "--set",
            "grid.k_max=2",
            "--set",
            "grid.p=12",
            "--set",
            "grid.kappa=1.0",
            "--set",
            "potential.kind=local",
            "--set",
            "initial=plane:1:0.8:0.1",
            "--set",
            "evolve.t=0.5",
            "--set",
            "flow.dt=1e-3",
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(csv.lines().count() > 2);
}

#[test]
fn tail_bound_preset_passes() {
    let dir = tmp_dir("tails");
    let status = bin()
        .args(["tail-bound", "--preset", "tail-bound", "--out"])
        .arg(&dir)
        .args(["--set", "ensemble.size=20000"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn remaining_presets_pass_within_budget() {
    // (experiment, preset); each must pass well inside the five-minute cap
    for (exp, preset) in [
        ("tau-sweep", "interacting-tau-sweep"),
        ("correlate-classical", "invariance"),
        ("dyson-check", "dyson-order"),
        ("mollifier-sweep", "mollifier-rate"),
        ("xsb", "xsb-envelope"),
    ] {
        let dir = tmp_dir(preset);
        let start = std::time::Instant::now();
        let out = bin()
            .args([exp, "--preset", preset, "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{preset}: stdout {} stderr {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(elapsed < 300.0, "{preset} took {elapsed:.0}s");
    }
}
