//! Strong error of the compound-Poisson levels against a fine reference.

use serde::Serialize;

use super::{check_beta, check_levels, removed_m2, fit_rms_slope, RateReport};
use crate::error::{Error, Result};
use crate::levy_measures::LevyModel;
use crate::path_sim::{distances_to_levels, Simulator};
use crate::rng::{par_map_paths, tag};
use crate::stats::Estimate;

/// Allowed ratio of the reference bias to the finest-level error.
pub const BIAS_FRACTION: f64 = 0.05;

/// `2 √(T m₂(ε_ref))`: Doob's bound on the sup distance between the
/// reference level and the untruncated process.
pub fn reference_bias_bound(model: &LevyModel, eps_ref: f64, horizon: f64) -> Result<f64> {
    Ok(2.0 * (horizon * removed_m2(model, eps_ref)?).sqrt())
}

/// Analytic lower bound on the error at level `n` against the reference:
/// the terminal `L²` distance `√(T (m₂(1/n) − m₂(ε_ref)))`.
fn finest_error_floor(model: &LevyModel, n: u64, eps_ref: f64, horizon: f64) -> Result<f64> {
    let diff = removed_m2(model, 1.0 / n as f64)? - removed_m2(model, eps_ref)?;
    Ok((horizon * diff.max(0.0)).sqrt())
}

/// Largest `ε_ref` (up to a factor `2^{1/8}`) meeting the bias precondition
/// for a finest level `n_max`.
pub fn required_eps_ref(model: &LevyModel, n_max: u64, horizon: f64) -> Result<f64> {
    let ok = |e: f64| -> Result<bool> {
        Ok(reference_bias_bound(model, e, horizon)? <= BIAS_FRACTION * finest_error_floor(model, n_max, e, horizon)?)
    };
    let mut e = 0.5 / n_max as f64;
    let step = 2f64.powf(-0.125);
    while !ok(e)? {
        e *= step;
        if e < 1e-15 {
            return Err(Error::Config("no reference level meets the bias precondition".into()));
        }
    }
    Ok(e)
}

/// Checks `0 < eps_ref < 1/n_max` and the bias precondition; returns the
/// bias bound.
pub(crate) fn check_reference(model: &LevyModel, n_max: u64, eps_ref: f64, horizon: f64) -> Result<f64> {
    if !(eps_ref > 0.0 && eps_ref < 1.0 / n_max as f64) {
        return Err(Error::Config(format!("eps_ref = {eps_ref} must lie in (0, 1/{n_max})")));
    }
    let bias = reference_bias_bound(model, eps_ref, horizon)?;
    let allowed = BIAS_FRACTION * finest_error_floor(model, n_max, eps_ref, horizon)?;
    if bias > allowed {
        return Err(Error::ReferenceBias { eps_ref, bias, allowed, required: required_eps_ref(model, n_max, horizon)? });
    }
    Ok(bias)
}

/// Process rate experiment with per-level terminal errors kept alongside.
#[derive(Debug, Clone, Serialize)]
pub struct ProcessRateReport {
    pub report: RateReport,
    /// `√E|X^ref_T − X^n_T|²` per level.
    pub terminal_errors: Vec<Estimate>,
    /// Mean number of reference jumps per path.
    pub mean_jumps: f64,
}

/// Estimates `√E[sup_t |X^ref_t − X^n_t|²]` at each level `n` on paths of
/// the level `eps_ref`, thinned to `1/n`, and fits the log-log slope.
pub fn run_process_rate(
    model: &LevyModel,
    levels: &[u64],
    eps_ref: f64,
    paths: u64,
    horizon: f64,
    beta: f64,
    seed: u64,
) -> Result<ProcessRateReport> {
    model.validate()?;
    check_levels(levels)?;
    check_beta(model, beta)?;
    if paths < 2 {
        return Err(Error::Config("need at least 2 paths".into()));
    }
    let bias = check_reference(model, *levels.last().unwrap(), eps_ref, horizon)?;
    let sim = Simulator::new(model, eps_ref, horizon)?;
    let radii: Vec<f64> = levels.iter().map(|&n| 1.0 / n as f64).collect();
    let drifts = radii.iter().map(|&e| Ok(-model.compensator_mean(e)?)).collect::<Result<Vec<f64>>>()?;
    let per_path: Vec<(Vec<f64>, Vec<f64>, usize)> = par_map_paths(paths, seed, tag("process-rate"), |_, rng| {
        let path = sim.simulate(rng);
        let d = distances_to_levels(&path, &radii, &drifts);
        let sups = d.iter().map(|p| p.0 * p.0).collect();
        let ends = d.iter().map(|p| p.1 * p.1).collect();
        (sups, ends, path.len())
    });
    let transpose = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>, usize)) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..levels.len()).map(|l| per_path.iter().map(|p| pick(p)[l]).collect()).collect()
    };
    let squares = transpose(&|p| &p.0);
    let ends = transpose(&|p| &p.1);
    let (fit, errors) = fit_rms_slope(levels, &squares, seed)?;
    let report = RateReport::assemble("process", model, horizon, levels, errors, paths, fit, beta, eps_ref, bias, true)?;
    let terminal_errors = ends.iter().map(|s| Estimate::from_samples(s).root()).collect();
    let mean_jumps = per_path.iter().map(|p| p.2 as f64).sum::<f64>() / paths as f64;
    Ok(ProcessRateReport { report, terminal_errors, mean_jumps })
}
