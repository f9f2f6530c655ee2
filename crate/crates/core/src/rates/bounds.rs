//! Wasserstein lower bounds, divergence at `β < β*`, the boundary
//! examples at `β = β*`, and the random-walk gap.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use super::process::check_reference;
use crate::error::{Error, Result};
use crate::levy_measures::{AtomRule, LevyModel};
use crate::path_sim::{sup_distance_to_level, Simulator};
use crate::rng::{par_map_paths, tag};
use crate::stats::Estimate;

/// Theoretical lower bound against the coupled upper estimate at one level.
#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub model: LevyModel,
    pub n: u64,
    /// `m₂(1/(2n))`.
    pub m2_half: f64,
    /// `√P(τ <= T)`, `τ` the first jump time of a nonzero size.
    pub c_t: f64,
    pub lower: f64,
    /// `√E[sup |X^ref − X^n|²]` on coupled paths.
    pub coupled_upper: Estimate,
    pub reference_bias_bound: f64,
    pub ok: bool,
}

/// `c_T √m₂(1/(2n))` next to the empirical coupled `L²` sup distance.
pub fn wasserstein_bounds(
    model: &LevyModel,
    n: u64,
    eps_ref: f64,
    paths: u64,
    horizon: f64,
    seed: u64,
) -> Result<LowerBoundReport> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Config("level n must be >= 1".into()));
    }
    let m2_half = model.partial_moment(2.0, 0.5 / n as f64)?.value().unwrap_or(f64::INFINITY);
    let c_t = match model.total_mass().value() {
        Some(mass) => (-(-mass * horizon).exp_m1()).sqrt(),
        None => 1.0,
    };
    let lower = c_t * m2_half.sqrt();
    let bias = check_reference(model, n, eps_ref, horizon)?;
    let sim = Simulator::new(model, eps_ref, horizon)?;
    let eps = 1.0 / n as f64;
    let drift = -model.compensator_mean(eps)?;
    let squares = par_map_paths(paths, seed, tag("lower-bound"), |_, rng| {
        sup_distance_to_level(&sim.simulate(rng), eps, drift).powi(2)
    });
    let coupled_upper = Estimate::from_samples(&squares).root();
    Ok(LowerBoundReport {
        model: *model,
        n,
        m2_half,
        c_t,
        lower,
        coupled_upper,
        reference_bias_bound: bias,
        ok: lower <= coupled_upper.mean + 3.0 * coupled_upper.se,
    })
}

/// `n,lower,upper,c_T,m2_half` rows.
pub fn write_lower_bound_csv<W: Write>(
    w: &mut W,
    reports: &[LowerBoundReport],
    config_hash: &str,
    seed: u64,
) -> std::io::Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "# seed={seed}")?;
    if let Some(r) = reports.first() {
        writeln!(w, "# model={} paths={}", r.model.name(), r.coupled_upper.samples)?;
    }
    writeln!(w, "n,lower,upper,upper_se,c_T,m2_half")?;
    for r in reports {
        writeln!(w, "{},{},{},{},{},{}", r.n, r.lower, r.coupled_upper.mean, r.coupled_upper.se, r.c_t, r.m2_half)?;
    }
    Ok(())
}

/// `n^{2-β} m₂(1/(2n))` over a range of levels for `β < β*`.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceRecord {
    pub model: LevyModel,
    pub beta: f64,
    pub levels: Vec<u64>,
    pub values: Vec<f64>,
    pub running_max: Vec<f64>,
    /// The running maximum still increases over the last quarter of the
    /// levels. This is a finite-range proxy for an infinite `limsup`, which
    /// no finite computation can certify.
    pub growing: bool,
}

pub fn check_optimality_divergence(model: &LevyModel, beta_below: f64, levels: &[u64]) -> Result<DivergenceRecord> {
    model.validate()?;
    if !(beta_below < model.bg_index()) {
        return Err(Error::Config(format!("beta = {beta_below} must lie below beta_star = {}", model.bg_index())));
    }
    if levels.len() < 4 || levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("need at least 4 strictly increasing positive levels".into()));
    }
    let values = levels
        .iter()
        .map(|&n| {
            let m2 = model.partial_moment(2.0, 0.5 / n as f64)?.value().unwrap_or(f64::INFINITY);
            Ok((n as f64).powf(2.0 - beta_below) * m2)
        })
        .collect::<Result<Vec<f64>>>()?;
    let running_max: Vec<f64> = values
        .iter()
        .scan(f64::NEG_INFINITY, |m, &v| {
            *m = m.max(v);
            Some(*m)
        })
        .collect();
    let q = levels.len() - levels.len().div_ceil(4) - 1;
    let growing = running_max[levels.len() - 1] > running_max[q];
    Ok(DivergenceRecord { model: *model, beta: beta_below, levels: levels.to_vec(), values, running_max, growing })
}

/// One analytic bracket `lo(n) <= value(n) <= hi(n)` checked for every
/// `2 <= n <= n_max`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryExample {
    pub name: String,
    pub checked: u64,
    /// `(n, value, lo, hi)` where the bracket fails.
    pub failures: Vec<(u64, f64, f64, f64)>,
    /// Whether the example counts towards the overall verdict.
    pub counted: bool,
}

impl BoundaryExample {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub n_max: u64,
    pub tolerance: f64,
    pub examples: Vec<BoundaryExample>,
}

impl BoundaryReport {
    pub fn passed(&self) -> bool {
        self.examples.iter().filter(|e| e.counted).all(|e| e.passed())
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, config_hash: &str, seed: u64) -> std::io::Result<()> {
        writeln!(w, "# config_hash={config_hash}")?;
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "# n_max={} tolerance={}", self.n_max, self.tolerance)?;
        writeln!(w, "example,counted,checked,failures,first_failure_n,first_failure_value,lo,hi")?;
        for e in &self.examples {
            let f = e.failures.first().map_or(",,,".to_string(), |(n, v, lo, hi)| format!("{n},{v},{lo},{hi}"));
            writeln!(w, "{},{},{},{},{f}", e.name, e.counted, e.checked, e.failures.len())?;
        }
        Ok(())
    }
}

pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

fn bracket(name: &str, n_max: u64, counted: bool, f: impl Fn(u64) -> Result<(f64, f64, f64)>) -> Result<BoundaryExample> {
    let mut failures = vec![];
    for n in 2..=n_max {
        let (v, lo, hi) = f(n)?;
        if !(v >= lo - BOUNDARY_TOLERANCE && v <= hi + BOUNDARY_TOLERANCE) {
            failures.push((n, v, lo, hi));
        }
    }
    Ok(BoundaryExample { name: name.into(), checked: n_max - 1, failures, counted })
}

/// The two atomic examples at `β = β*`: `1/n <= m₂(1/n) <= 1/(n−1)` for the
/// harmonic atoms and `ln n/n <= m₂(1/n) <= 2 ln n/n` for the log-harmonic
/// atoms. The index sum `Σ_{i>=n} ln i/i²` is reported against the second
/// bracket as well, for comparison only.
pub fn check_bg_boundary_examples(n_max: u64) -> Result<BoundaryReport> {
    if n_max < 2 {
        return Err(Error::Config(format!("n_max must be >= 2, got {n_max}")));
    }
    let m2 = |model: LevyModel, n: u64| -> Result<f64> {
        Ok(model.partial_moment(2.0, 1.0 / n as f64)?.value().unwrap_or(f64::INFINITY))
    };
    let log_bracket = |n: u64| {
        let l = (n as f64).ln() / n as f64;
        (l, 2.0 * l)
    };
    let examples = vec![
        bracket("atomic-harmonic", n_max, true, |n| {
            Ok((m2(LevyModel::harmonic(), n)?, 1.0 / n as f64, 1.0 / (n - 1) as f64))
        })?,
        bracket("atomic-logharmonic", n_max, true, |n| {
            let (lo, hi) = log_bracket(n);
            Ok((m2(LevyModel::log_harmonic(), n)?, lo, hi))
        })?,
        bracket("logharmonic-index-sum", n_max, false, |n| {
            let (lo, hi) = log_bracket(n);
            Ok((AtomRule::LogHarmonic.tail_sum(2.0, n).value().unwrap_or(f64::INFINITY), lo, hi))
        })?,
    ];
    Ok(BoundaryReport { n_max, tolerance: BOUNDARY_TOLERANCE, examples })
}

#[derive(Debug, Clone, Serialize)]
pub struct AppendixReport {
    pub horizon: f64,
    pub k_n: u64,
    pub estimate: Estimate,
    /// `(1 − e^{−T})/2`.
    pub bound: f64,
    pub passed: bool,
}

impl AppendixReport {
    pub fn write_csv<W: Write>(reports: &[AppendixReport], w: &mut W, config_hash: &str, seed: u64) -> std::io::Result<()> {
        writeln!(w, "# config_hash={config_hash}")?;
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "T,k_n,estimate,se,bound,passed")?;
        for r in reports {
            writeln!(w, "{},{},{},{},{},{}", r.horizon, r.k_n, r.estimate.mean, r.estimate.se, r.bound, r.passed)?;
        }
        Ok(())
    }
}

/// `sup_t |N_t − S(t)|` for jump times `taus` (sorted) where `S` counts, at
/// each grid point `i/k`, whether the cell `((i−1)/k, i/k]` holds a jump.
/// The difference only rises at jumps, so the sup is attained right after one.
fn walk_gap(taus: &[f64], k: u64, horizon: f64) -> f64 {
    let kf = k as f64;
    let last_cell = (kf * horizon).floor() as u64;
    let mut best = 0i64;
    let mut counted = 0i64;
    let mut prev_cell = 0u64;
    for (j, &t) in taus.iter().enumerate() {
        let cell = ((t * kf).ceil() as u64).max(1);
        // cells strictly before this one are completed and were counted at their right ends
        if j > 0 && prev_cell < cell && prev_cell <= last_cell {
            counted += 1;
        }
        prev_cell = cell;
        let counted_now = if (cell as f64) / kf == t && cell <= last_cell { counted + 1 } else { counted };
        best = best.max(j as i64 + 1 - counted_now);
    }
    best as f64
}

/// Monte Carlo estimate of `E[sup_{t<=T} |N_t − S(t)|]` for a rate-one
/// Poisson process `N` and its Bernoulli partial-sum walk on the grid
/// `ℤ/k_n`.
pub fn appendix_random_walk_gap(horizon: f64, k_n: u64, paths: u64, seed: u64) -> Result<AppendixReport> {
    if paths < 10_000 {
        return Err(Error::Config(format!("need at least 10^4 paths, got {paths}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) || k_n == 0 {
        return Err(Error::Config("need T > 0 and k_n >= 1".into()));
    }
    let pois = Poisson::new(horizon).map_err(|e| Error::Config(e.to_string()))?;
    let gaps = par_map_paths(paths, seed, tag("appendix") ^ k_n, |_, rng| {
        let count = pois.sample(rng) as usize;
        let mut taus: Vec<f64> = (0..count).map(|_| horizon * (1.0 - rng.random::<f64>())).collect();
        taus.sort_by(f64::total_cmp);
        walk_gap(&taus, k_n, horizon)
    });
    let estimate = Estimate::from_samples(&gaps);
    let bound = -0.5 * (-horizon).exp_m1();
    Ok(AppendixReport {
        horizon,
        k_n,
        estimate,
        bound,
        passed: estimate.mean >= bound - 3.0 * estimate.se,
    })
}

#[cfg(test)]
pub(super) fn walk_gap_for_tests(taus: &[f64], k: u64, horizon: f64) -> f64 {
    walk_gap(taus, k, horizon)
}
