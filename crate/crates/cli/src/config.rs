//! Experiment configuration (JSON) and the named preset.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bayesbt_core::Method;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Where the LTI system comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    Files {
        a: PathBuf,
        b: PathBuf,
        c: PathBuf,
    },
    Synthetic {
        d: usize,
        d_out: usize,
        spread: f64,
        seed: u64,
    },
}

/// How the rank-deficient prior is produced. Generator seeds default to one
/// derived from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorKind {
    IncompatibleEmpirical {
        samples: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    LyapunovCompatible {
        rank: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    FromFile {
        path: PathBuf,
    },
}

/// Equidistant measurement times `step, 2·step, …, end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub step: f64,
    pub end: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { step: 0.1, end: 8.0 }
    }
}

/// A method name as written in configs: `OLR`, `LisBT` or `PdBT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodName(pub Method);

impl TryFrom<String> for MethodName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match Method::from_str(&s)? {
            Method::Exact => Err("`Exact` is always computed and cannot be requested as a method".into()),
            m => Ok(MethodName(m)),
        }
    }
}

impl From<MethodName> for String {
    fn from(m: MethodName) -> Self {
        m.0.to_string()
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSource,
    pub prior: PriorKind,
    #[serde(default)]
    pub times: TimeGrid,
    /// Diagonal of the per-time noise covariance (variances).
    pub noise_diag: Vec<f64>,
    #[serde(default)]
    pub ranks: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub methods: Vec<MethodName>,
    /// Fixed initial state (Matrix Market column) used for every replicate
    /// instead of prior draws.
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

pub const PRESET_ISS1R: &str = "paper-iss1r";

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let SystemSource::Files { a, b, c } = &mut self.system {
            fix(a);
            fix(b);
            fix(c);
        }
        if let PriorKind::FromFile { path } = &mut self.prior {
            fix(path);
        }
        if let Some(t) = &mut self.truth {
            fix(t);
        }
    }

    /// Benchmark protocol: system files `A.mtx`, `B.mtx`, `C.mtx` from
    /// `system_dir`, empirical prior from 90 samples, times 0.1…8,
    /// `Γ_ε = diag(0.0025², 0.0005², 0.0005²)`, 100 replicates.
    pub fn preset(name: &str, system_dir: &Path) -> CliResult<Self> {
        if name != PRESET_ISS1R {
            return Err(CliError::Config(format!(
                "unknown preset `{name}` (available: {PRESET_ISS1R})"
            )));
        }
        Ok(Self {
            system: SystemSource::Files {
                a: system_dir.join("A.mtx"),
                b: system_dir.join("B.mtx"),
                c: system_dir.join("C.mtx"),
            },
            prior: PriorKind::IncompatibleEmpirical {
                samples: 90,
                seed: None,
            },
            times: TimeGrid::default(),
            noise_diag: vec![0.0025f64.powi(2), 0.0005f64.powi(2), 0.0005f64.powi(2)],
            ranks: vec![1, 2, 5, 10, 15, 20, 30, 40, 50, 60, 70, 80, 89],
            replicates: 100,
            seed: 0,
            methods: vec![
                MethodName(Method::Olr),
                MethodName(Method::LisBt),
                MethodName(Method::PdBt),
            ],
            truth: None,
        })
    }

    /// Checks that do not need the system.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.noise_diag.is_empty() || self.noise_diag.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("noise_diag must be non-empty with strictly positive entries".into());
        }
        let t = self.times;
        if !(t.step > 0.0 && t.step.is_finite() && t.end >= t.step && t.end.is_finite()) {
            return bad(format!("invalid time grid step={} end={}", t.step, t.end));
        }
        if !self.methods.is_empty() && self.ranks.is_empty() {
            return bad("ranks must be non-empty when methods are requested".into());
        }
        match &self.system {
            SystemSource::Synthetic { d, d_out, .. } if *d_out != self.noise_diag.len() => {
                return bad(format!(
                    "noise_diag has {} entries but the system has {d_out} outputs (d = {d})",
                    self.noise_diag.len()
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Requested methods in canonical order without duplicates.
    pub fn method_list(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.methods.iter().map(|m| m.0).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Requested ranks, ascending, without duplicates.
    pub fn rank_list(&self) -> Vec<usize> {
        let mut r = self.ranks.clone();
        r.sort_unstable();
        r.dedup();
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
        "system": {"kind": "synthetic", "d": 8, "d_out": 2, "spread": 5.0, "seed": 1},
        "prior": {"kind": "incompatible_empirical", "samples": 6},
        "times": {"step": 0.1, "end": 2.0},
        "noise_diag": [0.01, 0.02],
        "ranks": [3, 1, 2, 1],
        "replicates": 4,
        "seed": 7,
        "methods": ["PdBT", "OLR", "lis-bt"]
    }"#;

    #[test]
    fn parses_and_normalizes() {
        let cfg = ExperimentConfig::from_json(TOY).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.method_list(), vec![Method::Olr, Method::LisBt, Method::PdBt]);
        assert_eq!(cfg.rank_list(), vec![1, 2, 3]);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invalid_configs() {
        let with = |from: &str, to: &str| ExperimentConfig::from_json(&TOY.replace(from, to));
        assert!(with("\"replicates\": 4", "\"replicates\": 0")
            .unwrap()
            .validate()
            .is_err());
        assert!(with("[0.01, 0.02]", "[0.01, 0.0]").unwrap().validate().is_err());
        assert!(with("[0.01, 0.02]", "[0.01]").unwrap().validate().is_err());
        assert!(with("\"OLR\"", "\"Exact\"").is_err());
        assert!(with("\"OLR\"", "\"BT\"").is_err());
        assert!(with("\"seed\": 7", "\"seed\": 7, \"extra\": 1").is_err());
        let err = with("\"replicates\": 4", "\"replicates\": 0")
            .unwrap()
            .validate()
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn preset_parameters() {
        let cfg = ExperimentConfig::preset(PRESET_ISS1R, Path::new("/data")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.replicates, 100);
        assert_eq!(cfg.noise_diag, vec![6.25e-6, 2.5e-7, 2.5e-7]);
        assert_eq!(cfg.times, TimeGrid { step: 0.1, end: 8.0 });
        assert!(ExperimentConfig::preset("nope", Path::new(".")).is_err());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let mut cfg = ExperimentConfig::preset(PRESET_ISS1R, Path::new("sys")).unwrap();
        cfg.resolve_paths(Path::new("/cfg"));
        match cfg.system {
            SystemSource::Files { a, .. } => assert_eq!(a, PathBuf::from("/cfg/sys/A.mtx")),
            _ => unreachable!(),
        }
    }
}
