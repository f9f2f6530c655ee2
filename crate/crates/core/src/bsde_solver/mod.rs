//! Backward solvers for BSDEs driven by a compensated compound-Poisson level:
//! a lattice dynamic-programming solver, a regression (LSMC) solver and
//! Monte Carlo oracles.

mod generator;
mod grid;
pub mod lattice;
mod lsmc;
mod terminal;

pub use generator::{
    generator_gap_cn, CustomGenerator, GeneratorSpec, IntegralScope, JumpIntegrand, PhiSpec, HOLDER_LEVELS,
};
pub use grid::{solve_markovian_grid, PICARD_MAX_ITER, PICARD_TOL, terminal_half_width, Diagnostics, GridSpec, Solution};
pub use lsmc::{solve_lsmc, LsmcResult};
pub use terminal::Terminal;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::levy_measures::LevyModel;
use crate::path_sim::Simulator;
use crate::rng::{par_map_paths, tag};
use crate::stats::Estimate;

/// `Y_t = g(X^ε_T) + ∫_t^T f(s, Y_s, U_s) ds − ∫∫ U_s(z) μ̃^ε(ds, dz)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeProblem {
    pub model: LevyModel,
    /// Truncation radius `ε = 1/n` of the driving level.
    pub eps: f64,
    pub generator: GeneratorSpec,
    pub terminal: Terminal,
    pub horizon: f64,
}

impl BsdeProblem {
    pub fn new(model: LevyModel, eps: f64, generator: GeneratorSpec, terminal: Terminal, horizon: f64) -> Self {
        BsdeProblem { model, eps, generator, terminal, horizon }
    }

    pub fn at_level(&self, eps: f64) -> Self {
        BsdeProblem { eps, ..self.clone() }
    }

    pub fn with_generator(self, generator: GeneratorSpec) -> Self {
        BsdeProblem { generator, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("level radius must be positive, got {}", self.eps)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !self.terminal.lipschitz().is_finite() || self.terminal.lipschitz() < 0.0 {
            return Err(Error::Config("terminal Lipschitz constant must be finite".into()));
        }
        self.generator.validate(&self.model)
    }
}

/// Monte Carlo estimate of `E[g(x + X^ε_T)]`, the exact solution `Y_0` of the
/// zero-generator problem started at `x`.
pub fn closed_form_zero_generator(problem: &BsdeProblem, x: f64, samples: u64, seed: u64) -> Result<Estimate> {
    if !matches!(problem.generator, GeneratorSpec::Zero) {
        return domain("the martingale oracle needs the zero generator");
    }
    problem.validate()?;
    if let Terminal::Constant { value } = problem.terminal {
        return Ok(Estimate { mean: value, se: 0.0, samples: samples as usize });
    }
    let sim = Simulator::new(&problem.model, problem.eps, problem.horizon)?;
    let g = &problem.terminal;
    let ys = par_map_paths(samples, seed, tag("zero-generator-oracle"), |_, rng| g.eval(x + sim.simulate(rng).terminal()));
    Ok(Estimate::from_samples(&ys))
}
