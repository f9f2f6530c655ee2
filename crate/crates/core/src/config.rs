//! Experiment configuration shared by the CLI and the bindings.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsde_solver::{BsdeProblem, GeneratorSpec, GridSpec, Terminal};
use crate::error::{Error, Result};
use crate::levy_measures::LevyModel;
use crate::rates::BsdeRateConfig;

fn default_levels() -> Vec<u64> {
    vec![2, 4, 8, 16, 32, 64]
}
fn default_paths() -> u64 {
    10_000
}
fn one() -> f64 {
    1.0
}
fn default_eps_ref() -> f64 {
    1e-4
}
fn default_k_n() -> Vec<u64> {
    vec![1_000, 1_000_000]
}
fn default_n_max() -> u64 {
    10_000
}
fn default_steps() -> usize {
    64
}
fn default_nodes() -> usize {
    513
}
fn default_degree() -> usize {
    3
}
fn default_n_ref() -> u64 {
    256
}
fn default_tail() -> f64 {
    1e-6
}
fn default_per_octave() -> usize {
    4
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Time steps `K`.
    #[serde(rename = "K", default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Polynomial degree of the regression solver.
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_n_ref")]
    pub n_ref: u64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_tail")]
    pub tail_prob: f64,
    #[serde(default = "default_per_octave")]
    pub per_octave: usize,
    #[serde(default = "yes")]
    pub refine_check: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

/// One experiment, read from a single JSON document. Unknown keys are errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: LevyModel,
    #[serde(default = "default_levels")]
    pub levels: Vec<u64>,
    #[serde(default = "default_paths")]
    pub paths: u64,
    #[serde(rename = "T", default = "one")]
    pub horizon: f64,
    /// Exponent of the rate bound; defaults to `min(β* + 1/4, (β* + 2)/2)`.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_eps_ref")]
    pub eps_ref: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not part of the hash.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub terminal: Option<Terminal>,
    /// Grid sizes of the random-walk experiment.
    #[serde(default = "default_k_n")]
    pub k_n: Vec<u64>,
    /// Range of the boundary checks.
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    /// Exponent below `β*` for the divergence check.
    #[serde(default)]
    pub beta_below: Option<f64>,
}

/// The operation a config is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    Analyze,
    RateProcess,
    RateBsde,
    RateGap,
    Wasserstein,
    Boundary,
    Appendix,
}

impl ExperimentConfig {
    pub fn new(model: LevyModel) -> Self {
        ExperimentConfig {
            model,
            levels: default_levels(),
            paths: default_paths(),
            horizon: 1.0,
            beta: None,
            eps_ref: default_eps_ref(),
            solver: SolverSettings::default(),
            seed: 0,
            out: None,
            generator: None,
            terminal: None,
            k_n: default_k_n(),
            n_max: default_n_max(),
            beta_below: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact serialization with `out` cleared.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { out: None, ..self.clone() };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| {
            let b = self.model.bg_index();
            (b + 0.25).min(0.5 * (b + 2.0))
        })
    }

    pub fn generator(&self) -> GeneratorSpec {
        self.generator.clone().unwrap_or(GeneratorSpec::Zero)
    }

    pub fn terminal(&self) -> Terminal {
        self.terminal.clone().unwrap_or(Terminal::AbsCapped { cap: 2.0 })
    }

    pub fn problem(&self) -> BsdeProblem {
        let eps = 1.0 / self.levels.first().copied().unwrap_or(1).max(1) as f64;
        BsdeProblem::new(self.model, eps, self.generator(), self.terminal(), self.horizon)
    }

    pub fn bsde_rate_config(&self) -> BsdeRateConfig {
        let s = &self.solver;
        BsdeRateConfig {
            steps: s.steps,
            grid: GridSpec { nodes: s.nodes, center: s.x0, half_width: None, tail_prob: s.tail_prob },
            n_ref: s.n_ref,
            x0: s.x0,
            per_octave: s.per_octave,
            refine_check: s.refine_check,
        }
    }

    /// Checks the preconditions of `op` that can be checked without running it.
    pub fn validate(&self, op: Operation) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("T must be positive, got {}", self.horizon));
        }
        let needs_levels = matches!(op, Operation::RateProcess | Operation::RateBsde | Operation::RateGap);
        if (needs_levels || matches!(op, Operation::Analyze | Operation::Wasserstein))
            && (self.levels.is_empty() || self.levels[0] == 0 || self.levels.windows(2).any(|w| w[0] >= w[1])) {
                return bad("levels must be positive and strictly increasing".into());
            }
        if needs_levels {
            if self.levels.len() < 3 {
                return bad("rate experiments need at least 3 levels".into());
            }
            let b = self.beta();
            let bs = self.model.bg_index();
            if !(b > bs && b < 2.0) {
                return bad(format!("beta = {b} must lie in ({bs}, 2)"));
            }
        }
        if matches!(op, Operation::RateProcess | Operation::Wasserstein) {
            let n_max = *self.levels.last().unwrap();
            if !(self.eps_ref > 0.0 && self.eps_ref < 1.0 / n_max as f64) {
                return bad(format!("eps_ref = {} must lie in (0, 1/{n_max})", self.eps_ref));
            }
        }
        if op != Operation::Boundary && op != Operation::Analyze && self.paths < 2 {
            return bad("paths must be at least 2".into());
        }
        if matches!(op, Operation::RateBsde | Operation::RateGap) {
            let s = &self.solver;
            if s.nodes < 5 || s.nodes.is_multiple_of(2) {
                return bad(format!("nodes must be odd and >= 5, got {}", s.nodes));
            }
            if s.steps == 0 {
                return bad("K must be positive".into());
            }
            if s.n_ref <= *self.levels.last().unwrap() {
                return bad(format!("n_ref = {} must exceed the finest level", s.n_ref));
            }
            self.problem().validate()?;
            if op == Operation::RateGap
                && !matches!(self.generator, Some(GeneratorSpec::TimeDiscretized { .. } | GeneratorSpec::Integral { .. }))
            {
                return bad("rate-gap needs an integral or time-discretized generator".into());
            }
        }
        if op == Operation::Boundary && self.n_max < 2 {
            return bad(format!("n_max must be >= 2, got {}", self.n_max));
        }
        if op == Operation::Appendix {
            if self.paths < 10_000 {
                return bad(format!("appendix needs at least 10^4 paths, got {}", self.paths));
            }
            if self.k_n.is_empty() || self.k_n.contains(&0) {
                return bad("k_n must be a nonempty list of positive integers".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = ExperimentConfig::from_json(r#"{"model": {"kind": "cgmy", "C": 1, "G": 5, "M": 5, "Y": 0.5}}"#).unwrap();
        assert_eq!(c.levels, vec![2, 4, 8, 16, 32, 64]);
        assert_eq!(c.paths, 10_000);
        assert_eq!(c.eps_ref, 1e-4);
        assert_eq!(c.solver.steps, 64);
        assert_eq!(c.solver.nodes, 513);
        assert_eq!(c.beta(), 0.75);
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back.hash(), c.hash());
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"model": {"kind": "merton", "intensity": 1, "mean": 0, "stdev": 1}, "pahts": 5}"#);
        assert!(matches!(e, Err(Error::Config(_))));
        let e = ExperimentConfig::from_json(r#"{"model": {"kind": "merton", "intensity": 1, "mean": 0, "stdev": 1, "x": 1}}"#);
        assert!(e.is_err());
        let e = ExperimentConfig::from_json(r#"{"model": {"kind": "atomic", "rule": "harmonic"}, "solver": {"k": 3}}"#);
        assert!(e.is_err());
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let mut a = ExperimentConfig::new(LevyModel::harmonic());
        let h = a.hash();
        assert_eq!(h.len(), 64);
        a.out = Some("/tmp/x".into());
        assert_eq!(a.hash(), h);
        a.seed = 1;
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn validation_per_operation() {
        let mut c = ExperimentConfig::new(LevyModel::cgmy(1.0, 5.0, 5.0, 0.5));
        assert!(c.validate(Operation::RateProcess).is_ok());
        c.beta = Some(0.4);
        assert!(c.validate(Operation::RateProcess).is_err());
        c.beta = None;
        c.eps_ref = 0.1;
        assert!(c.validate(Operation::RateProcess).is_err());
        assert!(c.validate(Operation::Boundary).is_ok());
        c.levels = vec![2, 4, 8, 16, 32];
        assert!(c.validate(Operation::RateBsde).is_ok());
        assert!(c.validate(Operation::RateGap).is_err());
        c.solver.nodes = 512;
        assert!(c.validate(Operation::RateBsde).is_err());
        c.paths = 100;
        assert!(c.validate(Operation::Appendix).is_err());
        c.horizon = -1.0;
        assert!(c.validate(Operation::Boundary).is_err());
    }
}
