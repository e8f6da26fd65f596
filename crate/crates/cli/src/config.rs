//! Flat key/value run configuration.
//!
//! The on-disk format is one `key = value` pair per line with `#` comments;
//! dots group related keys into sections by convention only. A run manifest
//! (JSON) embeds the same map and is accepted anywhere a config file is, so
//! re-running from a manifest reproduces the run.

use nls_gibbs::observable::Observable;
use nls_gibbs::potential::{MollifierBase, Potential};
use nls_gibbs::rng::Stream;
use nls_gibbs::spectral::Grid;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, Default)]
pub struct Config {
    pub entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse_text(text: &str) -> ConfigResult<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { entries })
    }

    /// Load a flat config file or a JSON run manifest.
    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().map(|e| e == "json").unwrap_or(false) {
            let manifest: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| ConfigError(format!("bad manifest {}: {e}", path.display())))?;
            let map = manifest
                .get("config")
                .and_then(|v| v.as_object())
                .ok_or_else(|| {
                    ConfigError(format!("{}: manifest has no `config` object", path.display()))
                })?;
            let mut entries = BTreeMap::new();
            for (k, v) in map {
                let s = v.as_str().ok_or_else(|| {
                    ConfigError(format!("manifest config value for `{k}` is not a string"))
                })?;
                entries.insert(k.clone(), s.to_string());
            }
            Ok(Config { entries })
        } else {
            Self::parse_text(&text)
        }
    }

    pub fn merge_overrides(&mut self, overrides: &[(String, String)]) {
        for (k, v) in overrides {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn set_default(&mut self, key: &str, value: &str) {
        self.entries.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> ConfigResult<&str> {
        self.get(key).ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> ConfigResult<f64> {
        self.require(key)?
            .parse()
            .map_err(|e| ConfigError(format!("key `{key}`: not a number ({e})")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> ConfigResult<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.f64(key),
        }
    }

    pub fn usize(&self, key: &str) -> ConfigResult<usize> {
        self.require(key)?
            .parse()
            .map_err(|e| ConfigError(format!("key `{key}`: not an integer ({e})")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> ConfigResult<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.usize(key),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> ConfigResult<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => Err(ConfigError(format!("key `{key}`: expected bool, got `{other}`"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> ConfigResult<Vec<f64>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| ConfigError(format!("key `{key}`: bad entry `{s}` ({e})")))
            })
            .collect()
    }

    /// The mandatory master seed; deliberately has no wall-clock fallback.
    pub fn seed(&self) -> ConfigResult<u64> {
        self.require("seed")?
            .parse()
            .map_err(|e| ConfigError(format!("key `seed`: not a 64-bit integer ({e})")))
    }

    pub fn grid(&self) -> ConfigResult<Grid> {
        let k = self.usize("grid.k_max")?;
        let p = self.usize("grid.p")?;
        let kappa = self.f64("grid.kappa")?;
        Grid::new(k, p, kappa).map_err(|e| ConfigError(format!("grid: {e}")))
    }

    pub fn potential(&self, grid: &Grid) -> ConfigResult<Potential> {
        match self.get("potential.kind").unwrap_or("local") {
            "zero" => Ok(Potential::zero(grid)),
            "local" => Ok(Potential::local_delta(grid)),
            "mollified" => {
                let eps = self.f64("potential.eps")?;
                let base = self.mollifier_base()?;
                Potential::mollified(grid, eps, base)
                    .map_err(|e| ConfigError(format!("potential: {e}")))
            }
            "nonlocal-gaussian" => {
                let width = self.f64_or("potential.width", 2.0)?;
                let amp = self.f64_or("potential.amp", 1.0)?;
                let half: Vec<f64> = (0..=2 * grid.k_max())
                    .map(|q| amp * (-((q as f64 / width).powi(2))).exp())
                    .collect();
                Potential::nonlocal(grid, &half)
                    .map_err(|e| ConfigError(format!("potential: {e}")))
            }
            other => Err(ConfigError(format!("potential.kind: unknown variant `{other}`"))),
        }
    }

    pub fn mollifier_base(&self) -> ConfigResult<MollifierBase> {
        match self.get("potential.base").unwrap_or("raised-cosine") {
            "raised-cosine" => Ok(MollifierBase::RaisedCosine),
            "triangle" => Ok(MollifierBase::Triangle),
            other => Err(ConfigError(format!("potential.base: unknown base `{other}`"))),
        }
    }

    /// One-particle observables named in configs: `identity`,
    /// `projector:<mode k>`, or `random:<id>` (seeded off the master seed).
    pub fn observable(&self, spec: &str, grid: &Grid, seed: u64) -> ConfigResult<Observable> {
        let m = grid.n_modes();
        if spec == "identity" {
            return Ok(Observable::identity(1, m));
        }
        if let Some(mode) = spec.strip_prefix("projector:") {
            let k: i64 = mode
                .parse()
                .map_err(|e| ConfigError(format!("observable `{spec}`: bad mode ({e})")))?;
            if k.unsigned_abs() as usize > grid.k_max() {
                return Err(ConfigError(format!("observable `{spec}`: |k| > K")));
            }
            return Ok(Observable::mode_projector(m, grid.slot_of_mode(k)));
        }
        if let Some(id) = spec.strip_prefix("random:") {
            let id: u64 = id
                .parse()
                .map_err(|e| ConfigError(format!("observable `{spec}`: bad id ({e})")))?;
            let mut stream = Stream::derive(seed, &[0x0b5e, id]);
            return Observable::random_hermitian(1, m, &mut stream)
                .map_err(|e| ConfigError(format!("observable `{spec}`: {e}")));
        }
        Err(ConfigError(format!(
            "observable `{spec}`: expected identity, projector:<k>, or random:<id>"
        )))
    }

    /// Stable hash of the resolved configuration (FNV-1a over sorted pairs).
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in &self.entries {
            for byte in k.bytes().chain(*b"=").chain(v.bytes()).chain(*b"\n") {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    pub fn to_flat_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_getters() {
        let cfg = Config::parse_text(
            "# comment\nseed = 7\ngrid.k_max = 1\ngrid.p = 8\ngrid.kappa = 1.0\nxs = 1,2.5,3\n",
        )
        .unwrap();
        assert_eq!(cfg.seed().unwrap(), 7);
        assert_eq!(cfg.f64_list("xs").unwrap(), vec![1.0, 2.5, 3.0]);
        let grid = cfg.grid().unwrap();
        assert_eq!(grid.n_modes(), 3);
        assert!(cfg.require("nope").is_err());
        assert!(Config::parse_text("key without equals\n").is_err());
    }

    #[test]
    fn hash_is_order_insensitive_and_value_sensitive() {
        let a = Config::parse_text("a = 1\nb = 2\n").unwrap();
        let b = Config::parse_text("b = 2\na = 1\n").unwrap();
        let c = Config::parse_text("a = 1\nb = 3\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
