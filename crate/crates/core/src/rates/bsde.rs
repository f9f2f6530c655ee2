//! Strong error of the BSDE solutions across levels, on coupled paths.

use serde::{Deserialize, Serialize};

use super::{check_beta, check_levels, fit_rms_slope, process::reference_bias_bound, RateReport};
use crate::bsde_solver::{
    generator_gap_cn, solve_markovian_grid, terminal_half_width, BsdeProblem, GeneratorSpec, GridSpec, IntegralScope,
    Solution,
};
use crate::error::{Error, Result};
use crate::levy_measures::{LevyModel, SIDES};
use crate::path_sim::{JumpPath, Simulator};
use crate::rng::{par_map_paths, tag};
use crate::stats::Estimate;

fn default_steps() -> usize {
    64
}

fn default_n_ref() -> u64 {
    256
}

fn default_per_octave() -> usize {
    4
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeRateConfig {
    /// Time steps `K` of the grid solver.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_n_ref")]
    pub n_ref: u64,
    #[serde(default)]
    pub x0: f64,
    /// Cells per factor two in the `ν` quadrature of the `U` error.
    #[serde(default = "default_per_octave")]
    pub per_octave: usize,
    /// Re-solve reference and finest level with `2K` steps and report the
    /// change in the finest `Y` error.
    #[serde(default = "yes")]
    pub refine_check: bool,
}

impl Default for BsdeRateConfig {
    fn default() -> Self {
        BsdeRateConfig {
            steps: default_steps(),
            grid: GridSpec::default(),
            n_ref: default_n_ref(),
            x0: 0.0,
            per_octave: default_per_octave(),
            refine_check: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BsdeRateReport {
    pub y: RateReport,
    pub u: RateReport,
    /// `|Y error(K) − Y error(2K)|` at the finest level.
    pub grid_refinement_delta: Option<f64>,
    pub half_width: f64,
}

/// Nodes and weights for `∫_{|z| >= lo} φ(z) ν(dz)`: atoms as they are,
/// densities by one-point rules (mass at the mean) on cells that are
/// geometric in `|z|` and never straddle any radius in `breaks`.
pub fn nu_quadrature(model: &LevyModel, lo: f64, breaks: &[f64], per_octave: usize) -> Result<Vec<(f64, f64)>> {
    if let LevyModel::Atomic { rule } = model {
        let last = rule.last_at_least(lo).unwrap_or(0);
        return Ok((rule.first_index()..=last).map(|i| (rule.atom(i), 1.0)).collect());
    }
    const Z_MAX: f64 = 32.0;
    let ratio = 2f64.powf(1.0 / per_octave.max(1) as f64);
    let mut edges = vec![lo];
    while *edges.last().unwrap() < Z_MAX {
        let next = edges.last().unwrap() * ratio;
        edges.push(next);
    }
    edges.extend(breaks.iter().copied().filter(|&b| b > lo && b < Z_MAX));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * *b);
    edges.push(f64::INFINITY);
    let mut out = vec![];
    for side in SIDES {
        let sign = if side == crate::levy_measures::Side::Positive { 1.0 } else { -1.0 };
        for w in edges.windows(2) {
            let m0 = model.side_moment(side, 0.0, w[0], w[1]).value().unwrap_or(0.0);
            if m0 > 0.0 {
                let m1 = model.side_moment(side, 1.0, w[0], w[1]).value().unwrap_or(0.0);
                out.push((sign * (m1 / m0).clamp(w[0], w[1]), m0));
            }
        }
    }
    Ok(out)
}

/// Values of the level `eps` thinned from `path` at `times`, shifted by `x0`.
fn level_values(path: &JumpPath, eps: f64, drift: f64, times: &[f64], x0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    let mut k = 0;
    for &t in times {
        while k < path.jumps.len() && path.jumps[k].t <= t {
            if path.jumps[k].size.abs() >= eps {
                acc += path.jumps[k].size;
            }
            k += 1;
        }
        out.push(x0 + acc + drift * t);
    }
    out
}

struct Experiment<'a> {
    levels: &'a [u64],
    cfg: &'a BsdeRateConfig,
    paths: u64,
    seed: u64,
    level_problems: Vec<BsdeProblem>,
    reference: BsdeProblem,
}

struct Outcome {
    y_squares: Vec<Vec<f64>>,
    u_squares: Vec<Vec<f64>>,
    delta: Option<f64>,
    half_width: f64,
    warnings: Vec<String>,
}

fn y_squares(
    sim: &Simulator,
    reference: &Solution,
    levels: &[(f64, f64, &Solution)],
    x0: f64,
    paths: u64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let per_path: Vec<Vec<f64>> = par_map_paths(paths, seed, tag("bsde-rate"), |_, rng| {
        let path = sim.simulate(rng);
        let xr = level_values(&path, path.eps, path.drift, &reference.times, x0);
        levels
            .iter()
            .map(|&(eps, drift, sol)| {
                let xn = level_values(&path, eps, drift, &sol.times, x0);
                (0..xn.len())
                    .map(|i| (sol.value(i, xn[i]) - reference.value(i, xr[i])).abs())
                    .fold(0.0, f64::max)
                    .powi(2)
            })
            .collect()
    });
    (0..levels.len()).map(|l| per_path.iter().map(|p| p[l]).collect()).collect()
}

fn run(exp: &Experiment) -> Result<Outcome> {
    let cfg = exp.cfg;
    let model = exp.reference.model;
    let horizon = exp.reference.horizon;
    let eps_ref = exp.reference.eps;
    let half_width = match cfg.grid.half_width {
        Some(q) => q,
        None => terminal_half_width(&model, eps_ref, horizon, cfg.grid.tail_prob)?,
    };
    let grid = GridSpec { half_width: Some(half_width), center: cfg.x0, ..cfg.grid };
    let ref_sol = solve_markovian_grid(&exp.reference, cfg.steps, &grid)?;
    let sols = exp.level_problems.iter().map(|p| solve_markovian_grid(p, cfg.steps, &grid)).collect::<Result<Vec<_>>>()?;
    let mut warnings: Vec<String> = ref_sol.diagnostics.warnings.iter().map(|w| format!("n_ref: {w}")).collect();
    for (n, s) in exp.levels.iter().zip(&sols) {
        warnings.extend(s.diagnostics.warnings.iter().map(|w| format!("n={n}: {w}")));
    }

    let radii: Vec<f64> = exp.levels.iter().map(|&n| 1.0 / n as f64).collect();
    let drifts = radii.iter().map(|&e| Ok(-model.compensator_mean(e)?)).collect::<Result<Vec<f64>>>()?;
    let sim = Simulator::new(&model, eps_ref, horizon)?;
    let level_refs: Vec<(f64, f64, &Solution)> =
        radii.iter().zip(&drifts).zip(&sols).map(|((&e, &d), s)| (e, d, s)).collect();
    let y_sq = y_squares(&sim, &ref_sol, &level_refs, cfg.x0, exp.paths, exp.seed);

    let quad = nu_quadrature(&model, eps_ref, &radii, cfg.per_octave)?;
    let k = cfg.steps;
    let times = ref_sol.times.clone();
    let per_path: Vec<Vec<f64>> = par_map_paths(exp.paths, exp.seed, tag("bsde-rate"), |_, rng| {
        let path = sim.simulate(rng);
        let xr = level_values(&path, eps_ref, path.drift, &times, cfg.x0);
        let mut uref = vec![0.0; k * quad.len()];
        for i in 0..k {
            let base = ref_sol.value(i, xr[i]);
            for (q, &(z, _)) in quad.iter().enumerate() {
                uref[i * quad.len() + q] = ref_sol.value(i, xr[i] + z) - base;
            }
        }
        level_refs
            .iter()
            .map(|&(eps, drift, sol)| {
                let xn = level_values(&path, eps, drift, &times, cfg.x0);
                let mut acc = 0.0;
                for i in 0..k {
                    let dt = times[i + 1] - times[i];
                    let base = sol.value(i, xn[i]);
                    let mut s = 0.0;
                    for (q, &(z, w)) in quad.iter().enumerate() {
                        let un = if z.abs() >= eps { sol.value(i, xn[i] + z) - base } else { 0.0 };
                        s += w * (un - uref[i * quad.len() + q]).powi(2);
                    }
                    acc += dt * s;
                }
                acc
            })
            .collect()
    });
    let u_sq = (0..exp.levels.len()).map(|l| per_path.iter().map(|p| p[l]).collect()).collect();

    let delta = if cfg.refine_check {
        let ref2 = solve_markovian_grid(&exp.reference, 2 * cfg.steps, &grid)?;
        let last = exp.level_problems.len() - 1;
        let fine2 = solve_markovian_grid(&exp.level_problems[last], 2 * cfg.steps, &grid)?;
        let (e, d) = (radii[last], drifts[last]);
        let coarse = Estimate::from_samples(&y_sq[last]).root().mean;
        let fine = y_squares(&sim, &ref2, &[(e, d, &fine2)], cfg.x0, exp.paths, exp.seed);
        Some((Estimate::from_samples(&fine[0]).root().mean - coarse).abs())
    } else {
        None
    };
    Ok(Outcome { y_squares: y_sq, u_squares: u_sq, delta, half_width, warnings })
}

fn check_common(levels: &[u64], cfg: &BsdeRateConfig, paths: u64) -> Result<()> {
    check_levels(levels)?;
    if cfg.n_ref <= *levels.last().unwrap() {
        return Err(Error::Config(format!("n_ref = {} must exceed the finest level", cfg.n_ref)));
    }
    if paths < 2 {
        return Err(Error::Config("need at least 2 paths".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn reports(
    quantity: &str,
    template: &BsdeProblem,
    levels: &[u64],
    cfg: &BsdeRateConfig,
    paths: u64,
    beta: f64,
    seed: u64,
    out: Outcome,
) -> Result<BsdeRateReport> {
    let model = &template.model;
    let eps_ref = 1.0 / cfg.n_ref as f64;
    let bias = reference_bias_bound(model, eps_ref, template.horizon)?;
    let (yfit, yerr) = fit_rms_slope(levels, &out.y_squares, seed)?;
    let (ufit, uerr) = fit_rms_slope(levels, &out.u_squares, seed ^ 1)?;
    let mut y = RateReport::assemble(
        &format!("{quantity}-y"),
        model,
        template.horizon,
        levels,
        yerr,
        paths,
        yfit,
        beta,
        eps_ref,
        bias,
        false,
    )?;
    let mut u = RateReport::assemble(
        &format!("{quantity}-u"),
        model,
        template.horizon,
        levels,
        uerr,
        paths,
        ufit,
        beta,
        eps_ref,
        bias,
        false,
    )?;
    y.warnings = out.warnings.clone();
    u.warnings = out.warnings;
    if let Some(d) = out.delta {
        y.warnings.push(format!("grid refinement delta (K vs 2K) at n={}: {d:e}", levels.last().unwrap()));
    }
    Ok(BsdeRateReport { y, u, grid_refinement_delta: out.delta, half_width: out.half_width })
}

/// Solves `template` at every level `1/n` and at `1/n_ref`, then estimates
/// the `L²` sup error of `Y` over the solver grid and the `U` error
/// `E ∫∫ |Ū^n − U^ref|² ν(dz) dt` on paths coupled by thinning.
pub fn run_bsde_rate(
    template: &BsdeProblem,
    levels: &[u64],
    cfg: &BsdeRateConfig,
    paths: u64,
    beta: f64,
    seed: u64,
) -> Result<BsdeRateReport> {
    template.validate()?;
    check_common(levels, cfg, paths)?;
    check_beta(&template.model, beta)?;
    let exp = Experiment {
        levels,
        cfg,
        paths,
        seed,
        level_problems: levels.iter().map(|&n| template.at_level(1.0 / n as f64)).collect(),
        reference: template.at_level(1.0 / cfg.n_ref as f64),
    };
    let out = run(&exp)?;
    reports("bsde", template, levels, cfg, paths, beta, seed, out)
}

/// Generator-gap experiment. The template's generator is the limit `f`
/// (an integral generator, or a time-discretized one whose `inner` is the
/// limit); level `n` uses `f^n`: the integral restricted to `|z| >= 1/n`,
/// or `inner` frozen on `n` time cells. The reference solves `f` at `n_ref`.
pub fn run_generator_gap_rate(
    template: &BsdeProblem,
    levels: &[u64],
    cfg: &BsdeRateConfig,
    paths: u64,
    beta: f64,
    seed: u64,
) -> Result<BsdeRateReport> {
    template.validate()?;
    check_common(levels, cfg, paths)?;
    check_beta(&template.model, beta)?;
    let (limit, level_gen): (GeneratorSpec, Box<dyn Fn(u64) -> GeneratorSpec>) = match &template.generator {
        GeneratorSpec::TimeDiscretized { inner, alpha, .. } => {
            let (inner, alpha) = ((**inner).clone(), *alpha);
            (
                inner.clone(),
                Box::new(move |n| GeneratorSpec::TimeDiscretized {
                    inner: Box::new(inner.clone()),
                    steps: n as usize,
                    alpha,
                }),
            )
        }
        GeneratorSpec::Integral { phi, beta_bar, .. } => {
            let (phi, beta_bar) = (*phi, *beta_bar);
            (
                GeneratorSpec::Integral { phi, beta_bar, scope: IntegralScope::Full },
                Box::new(move |_| GeneratorSpec::Integral { phi, beta_bar, scope: IntegralScope::Level }),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "generator gap needs an integral or time-discretized generator, got {}",
                other.name()
            )))
        }
    };
    let level_problems: Vec<BsdeProblem> =
        levels.iter().map(|&n| template.at_level(1.0 / n as f64).with_generator(level_gen(n))).collect();
    let gaps = levels
        .iter()
        .zip(&level_problems)
        .map(|(&n, p)| generator_gap_cn(&p.model, &p.generator, n, p.horizon))
        .collect::<Result<Vec<f64>>>()?;
    let exp = Experiment {
        levels,
        cfg,
        paths,
        seed,
        level_problems,
        reference: template.at_level(1.0 / cfg.n_ref as f64).with_generator(limit),
    };
    let out = run(&exp)?;
    let mut rep = reports("gap", template, levels, cfg, paths, beta, seed, out)?;
    for r in [&mut rep.y, &mut rep.u] {
        r.bound_curve.iter_mut().zip(&gaps).for_each(|(b, g)| *b += g);
        r.gap_terms = gaps.clone();
    }
    Ok(rep)
}
