//! Run configuration: defaults, optional key=value config file, flag
//! overrides, and the provenance hash stamped on every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use recwalk_core::item_model::{FitOptions, NeighborhoodSize};

/// Environment variable that overrides the default output directory.
pub const OUTDIR_ENV: &str = "RECWALK_OUTDIR";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub outdir: PathBuf,
    pub seed: u64,
    pub min_user_deg: usize,
    pub min_item_deg: usize,
    pub c: NeighborhoodSize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub fit_tol: f64,
    pub max_sweeps: usize,
    pub alpha: f64,
    pub k: usize,
    pub eta: f64,
    pub walk_tol: f64,
    pub n: usize,
    pub threads: usize,
    pub giant_component: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            outdir: std::env::var_os(OUTDIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
            seed: 42,
            min_user_deg: 1,
            min_item_deg: 1,
            c: NeighborhoodSize::Percent(10.0),
            gamma1: 1.0,
            gamma2: 0.1,
            fit_tol: 1e-6,
            max_sweeps: 1000,
            alpha: 0.005,
            k: 7,
            eta: 0.9,
            walk_tol: 1e-8,
            n: 10,
            threads: std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1),
            giant_component: false,
        }
    }
}

/// A usage/config problem; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

pub fn parse_neighborhood(s: &str) -> Result<NeighborhoodSize, ConfigError> {
    if let Some(pct) = s.strip_suffix('%') {
        let p: f64 = pct
            .parse()
            .map_err(|_| ConfigError(format!("bad percent {s:?}")))?;
        if !(p > 0.0 && p <= 100.0) {
            return Err(ConfigError(format!("percent {p} outside (0, 100]")));
        }
        Ok(NeighborhoodSize::Percent(p))
    } else {
        let c: usize = s
            .parse()
            .map_err(|_| ConfigError(format!("bad neighborhood size {s:?}")))?;
        if c == 0 {
            return Err(ConfigError("neighborhood size must be >= 1".into()));
        }
        Ok(NeighborhoodSize::Count(c))
    }
}

impl RunConfig {
    /// Applies `key=value` lines from a config file. Unknown keys are
    /// rejected so typos fail loudly.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key=value", line_no + 1)))?;
            self.apply_kv(key.trim(), value.trim())
                .map_err(|e| ConfigError(format!("line {}: {}", line_no + 1, e.0)))?;
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |what: &str| ConfigError(format!("bad {what} value {value:?}"));
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "outdir" => self.outdir = PathBuf::from(value),
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "min-user-deg" => self.min_user_deg = value.parse().map_err(|_| bad("min-user-deg"))?,
            "min-item-deg" => self.min_item_deg = value.parse().map_err(|_| bad("min-item-deg"))?,
            "c" => self.c = parse_neighborhood(value)?,
            "gamma1" => self.gamma1 = value.parse().map_err(|_| bad("gamma1"))?,
            "gamma2" => self.gamma2 = value.parse().map_err(|_| bad("gamma2"))?,
            "fit-tol" => self.fit_tol = value.parse().map_err(|_| bad("fit-tol"))?,
            "max-sweeps" => self.max_sweeps = value.parse().map_err(|_| bad("max-sweeps"))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "k" => self.k = value.parse().map_err(|_| bad("k"))?,
            "eta" => self.eta = value.parse().map_err(|_| bad("eta"))?,
            "walk-tol" => self.walk_tol = value.parse().map_err(|_| bad("walk-tol"))?,
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "threads" => self.threads = value.parse().map_err(|_| bad("threads"))?,
            "giant-component" => {
                self.giant_component = value.parse().map_err(|_| bad("giant-component"))?
            }
            other => return Err(ConfigError(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(ConfigError(format!("eta {} outside (0, 1)", self.eta)));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(ConfigError("regularization weights must be >= 0".into()));
        }
        if self.n == 0 {
            return Err(ConfigError("cutoff n must be >= 1".into()));
        }
        if self.threads == 0 {
            return Err(ConfigError("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.fit_tol,
            max_sweeps: self.max_sweeps,
        }
    }

    /// Canonical key=value rendering; the provenance hash is computed over
    /// this string so any parameter change shows up in every artifact.
    pub fn canonical(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert(
            "dataset",
            self.dataset
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv.insert("seed", self.seed.to_string());
        kv.insert("min-user-deg", self.min_user_deg.to_string());
        kv.insert("min-item-deg", self.min_item_deg.to_string());
        let c = match self.c {
            NeighborhoodSize::Count(c) => c.to_string(),
            NeighborhoodSize::Percent(p) => format!("{p}%"),
        };
        kv.insert("c", c);
        kv.insert("gamma1", self.gamma1.to_string());
        kv.insert("gamma2", self.gamma2.to_string());
        kv.insert("fit-tol", self.fit_tol.to_string());
        kv.insert("max-sweeps", self.max_sweeps.to_string());
        kv.insert("alpha", self.alpha.to_string());
        kv.insert("k", self.k.to_string());
        kv.insert("eta", self.eta.to_string());
        kv.insert("walk-tol", self.walk_tol.to_string());
        kv.insert("n", self.n.to_string());
        kv.insert("giant-component", self.giant_component.to_string());
        kv.iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }

    /// Provenance header stamped at the top of every text artifact.
    pub fn provenance(&self) -> String {
        format!(
            "# recwalk {} config={:016x} seed={}\n",
            env!("CARGO_PKG_VERSION"),
            self.hash(),
            self.seed
        )
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_then_flag_precedence() {
        let mut cfg = RunConfig::default();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "alpha=0.25\nk=12\n# comment\n\nseed=7").unwrap();
        cfg.apply_file(f.path()).unwrap();
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.k, 12);
        assert_eq!(cfg.seed, 7);
        // flags come later and override
        cfg.apply_kv("alpha", "0.5").unwrap();
        assert_eq!(cfg.alpha, 0.5);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_kv("alfa", "0.1").is_err());
    }

    #[test]
    fn neighborhood_forms() {
        assert!(matches!(
            parse_neighborhood("25").unwrap(),
            NeighborhoodSize::Count(25)
        ));
        assert!(matches!(
            parse_neighborhood("2.5%").unwrap(),
            NeighborhoodSize::Percent(p) if p == 2.5
        ));
        assert!(parse_neighborhood("0").is_err());
        assert!(parse_neighborhood("120%").is_err());
    }

    #[test]
    fn hash_tracks_config_changes() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.apply_kv("k", "9").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut cfg = RunConfig::default();
        cfg.apply_kv("alpha", "1.2").unwrap();
        assert!(cfg.validate().is_err());
    }
}
