use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{GeneratorSpec, IntegralScope, JumpIntegrand};
use super::lattice::{compound_poisson, jump_law, project_measure, LatticeLaw};
use super::BsdeProblem;
use crate::error::{Error, Result};
use crate::levy_measures::LevyModel;

pub const PICARD_TOL: f64 = 1e-10;
pub const PICARD_MAX_ITER: usize = 50;
const KERNEL_TRIM: f64 = 1e-14;
const TAIL_WARNING: f64 = 1e-4;

fn default_nodes() -> usize {
    513
}

fn default_tail() -> f64 {
    1e-6
}

/// Uniform space grid `[center − q, center + q]` with an odd number of nodes.
/// When `half_width` is absent, `q` is the two-sided `tail_prob` quantile of
/// the jump part of `X^ε_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub center: f64,
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default = "default_tail")]
    pub tail_prob: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nodes: default_nodes(), center: 0.0, half_width: None, tail_prob: default_tail() }
    }
}

/// Two-sided `tail_prob` quantile radius of `Σ_{t_j <= T} J_j` for the level `eps`.
pub fn terminal_half_width(model: &LevyModel, eps: f64, horizon: f64, tail_prob: f64) -> Result<f64> {
    let lam = model.tail_mass(eps)?;
    if lam <= 0.0 {
        return Ok(1.0);
    }
    let sd = (horizon * model.second_moment_beyond(eps)?).sqrt();
    let h = sd / 100.0;
    let jump = jump_law(model, eps, h)?;
    let (law, _) = compound_poisson(&jump, lam * horizon, 0.0);
    let lo = law.quantile(0.5 * tail_prob);
    let hi = law.quantile(1.0 - 0.5 * tail_prob);
    Ok((-lo).max(hi).max(sd) + h)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    /// Picard iterations used at each step, indexed like the time grid.
    pub picard_iterations: Vec<usize>,
    pub half_width: f64,
    pub kernel_width: usize,
    /// Probability mass cut from the one-step kernel tails.
    pub kernel_trimmed_mass: f64,
    /// Mass of the terminal jump sum outside the space grid.
    pub grid_tail_mass: f64,
    pub warnings: Vec<String>,
}

/// Backward solution `u(t_i, x)` on a grid that moves with the compensator
/// drift: node `j` at time `t_i` sits at `ξ_j + drift · t_i`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub h: f64,
    pub drift: f64,
    /// `values[i][j] = u(t_i, ξ_j + drift · t_i)`.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

/// Linear extension of grid values beyond both ends.
fn extended(u: &[f64], idx: i64) -> f64 {
    let n = u.len() as i64;
    if idx < 0 {
        u[0] + (u[1] - u[0]) * idx as f64
    } else if idx >= n {
        u[n as usize - 1] + (u[n as usize - 1] - u[n as usize - 2]) * (idx - n + 1) as f64
    } else {
        u[idx as usize]
    }
}

impl Solution {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.xi[j] + self.drift * self.times[i]
    }

    /// `u(t_i, x)` by linear interpolation, extended linearly off the grid.
    pub fn value(&self, i: usize, x: f64) -> f64 {
        let u = &self.values[i];
        let pos = (x - self.drift * self.times[i] - self.xi[0]) / self.h;
        let k = (pos.floor() as i64).clamp(0, u.len() as i64 - 2) as usize;
        let w = pos - k as f64;
        u[k] + w * (u[k + 1] - u[k])
    }

    /// `U(t_i, x, z) = u(t_i, x + z) − u(t_i, x)`.
    pub fn jump_increment(&self, i: usize, x: f64, z: f64) -> f64 {
        self.value(i, x + z) - self.value(i, x)
    }

    /// Largest finite-difference slope of `u(t_i, ·)` per time layer.
    pub fn lipschitz_profile(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|u| u.windows(2).map(|w| (w[1] - w[0]).abs() / self.h).fold(0.0, f64::max))
            .collect()
    }

    /// Rows `t,x,u`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,x,u")?;
        for (i, row) in self.values.iter().enumerate() {
            for (j, u) in row.iter().enumerate() {
                writeln!(w, "{},{},{}", self.times[i], self.node(i, j), u)?;
            }
        }
        Ok(())
    }
}

/// One E-step: `E[u(ξ + S)]` for each node, `S` distributed as `kernel`.
fn expectation(next: &[f64], kernel: &LatticeLaw) -> Vec<f64> {
    let n = next.len();
    let len = kernel.weights.len();
    let padded: Vec<f64> = (0..n + len - 1).map(|p| extended(next, kernel.offset + p as i64)).collect();
    (0..n)
        .into_par_iter()
        .map(|j| kernel.weights.iter().zip(&padded[j..j + len]).map(|(w, u)| w * u).sum())
        .collect()
}

/// Quadrature of the measure the generator integrates `U` against.
struct Integrand {
    index: Vec<i64>,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl Integrand {
    fn build(problem: &BsdeProblem, h: f64) -> Result<Option<Self>> {
        if !problem.generator.uses_jump_integrand() {
            return Ok(None);
        }
        let law = match problem.generator.integrand_weight() {
            Some((beta_bar, IntegralScope::Full)) => project_measure(&problem.model, 0.0, h, Some(beta_bar))?,
            Some((beta_bar, IntegralScope::Level)) => project_measure(&problem.model, problem.eps, h, Some(beta_bar))?,
            None => project_measure(&problem.model, problem.eps, h, None)?,
        };
        let mut out = Integrand { index: vec![], offsets: vec![], weights: vec![] };
        for (k, &w) in law.weights.iter().enumerate() {
            if w > 0.0 {
                let m = law.offset + k as i64;
                out.index.push(m);
                out.offsets.push(m as f64 * h);
                out.weights.push(w);
            }
        }
        Ok(Some(out))
    }
}

/// Backward Euler in time with exact conditional expectations on the
/// lattice and Picard iteration for the implicit generator term.
pub fn solve_markovian_grid(problem: &BsdeProblem, steps: usize, grid: &GridSpec) -> Result<Solution> {
    problem.validate()?;
    if steps == 0 {
        return Err(Error::Config("need at least one time step".into()));
    }
    if grid.nodes < 3 || grid.nodes.is_multiple_of(2) {
        return Err(Error::Config(format!("space grid needs an odd node count >= 3, got {}", grid.nodes)));
    }
    let BsdeProblem { model, eps, generator, terminal, horizon } = problem;
    let (eps, horizon) = (*eps, *horizon);
    let lam = model.tail_mass(eps)?;
    let dt = horizon / steps as f64;
    let lf = generator.lipschitz(model, eps)?;
    let margin = dt * lf * (1.0 + lam.sqrt());
    if margin >= 0.5 {
        return Err(Error::Config(format!(
            "Picard contraction needs Δt·L_f·(1+√Λ) < 1/2, got {margin:.4}; increase the number of steps"
        )));
    }
    let q = match grid.half_width {
        Some(q) if q > 0.0 => q,
        Some(q) => return Err(Error::Config(format!("grid half-width must be positive, got {q}"))),
        None => terminal_half_width(model, eps, horizon, grid.tail_prob)?,
    };
    let nodes = grid.nodes;
    let h = 2.0 * q / (nodes - 1) as f64;
    let xi: Vec<f64> = (0..nodes).map(|j| grid.center - q + j as f64 * h).collect();
    let drift = if lam > 0.0 { -model.compensator_mean(eps)? } else { 0.0 };
    let times: Vec<f64> = (0..=steps).map(|i| if i == steps { horizon } else { i as f64 * dt }).collect();

    let mut diag = Diagnostics { half_width: q, ..Default::default() };
    let (kernel, trimmed) = if lam > 0.0 {
        let jump = jump_law(model, eps, h)?;
        let (terminal_law, _) = compound_poisson(&jump, lam * horizon, 0.0);
        diag.grid_tail_mass = terminal_law.mass_outside(q);
        compound_poisson(&jump, lam * dt, KERNEL_TRIM)
    } else {
        (LatticeLaw::point(h), 0.0)
    };
    diag.kernel_width = kernel.weights.len();
    diag.kernel_trimmed_mass = trimmed;
    if diag.grid_tail_mass > TAIL_WARNING {
        diag.warnings.push(format!(
            "terminal mass {:.3e} lies outside the space grid (half-width {q})",
            diag.grid_tail_mass
        ));
    }
    let integrand = Integrand::build(problem, h)?;

    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = (0..nodes).map(|j| terminal.eval(xi[j] + drift * horizon)).collect();
    diag.picard_iterations = vec![0; steps + 1];
    for i in (0..steps).rev() {
        let e = expectation(&values[i + 1], &kernel);
        let (t0, t1) = (times[i], times[i + 1]);
        let (y, iters) = if let Some((mul, add)) = generator.affine_flow(t1 - t0) {
            (e.iter().map(|v| mul * v + add).collect(), 1)
        } else if generator.is_source_only() {
            let s = generator.step_integral(t0, t1, horizon, 0.0, &JumpIntegrand::empty());
            (e.iter().map(|v| v + s).collect(), 1)
        } else {
            picard(generator, t0, t1, horizon, &e, integrand.as_ref())?
        };
        values[i] = y;
        diag.picard_iterations[i] = iters;
    }
    Ok(Solution { times, xi, h, drift, values, diagnostics: diag })
}

fn picard(
    generator: &GeneratorSpec,
    t0: f64,
    t1: f64,
    horizon: f64,
    e: &[f64],
    integrand: Option<&Integrand>,
) -> Result<(Vec<f64>, usize)> {
    let mut y = e.to_vec();
    for it in 1..=PICARD_MAX_ITER {
        let next: Vec<f64> = (0..y.len())
            .into_par_iter()
            .map(|j| {
                let source = match integrand {
                    Some(q) => {
                        let vals: Vec<f64> = q.index.iter().map(|&m| extended(&y, j as i64 + m) - y[j]).collect();
                        let u = JumpIntegrand { offsets: &q.offsets, weights: &q.weights, values: &vals, rest_mass: 0.0 };
                        generator.step_integral(t0, t1, horizon, y[j], &u)
                    }
                    None => generator.step_integral(t0, t1, horizon, y[j], &JumpIntegrand::empty()),
                };
                e[j] + source
            })
            .collect();
        let diff = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        y = next;
        if diff < PICARD_TOL {
            return Ok((y, it));
        }
    }
    Err(Error::Solver(format!(
        "Picard iteration did not reach {PICARD_TOL:e} in {PICARD_MAX_ITER} iterations at t = {t0}"
    )))
}
