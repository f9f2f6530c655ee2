//! Convergence experiments: coupled-level error estimates, slope fits
//! against the theoretical exponent, lower bounds and boundary cases.

mod bounds;
mod bsde;
mod process;
mod slope;

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_measures::LevyModel;
use crate::stats::Estimate;

pub use bounds::{
    appendix_random_walk_gap, check_bg_boundary_examples, check_optimality_divergence, wasserstein_bounds,
    write_lower_bound_csv, AppendixReport, BoundaryExample, BoundaryReport, DivergenceRecord, LowerBoundReport,
};
pub use bsde::{nu_quadrature, run_bsde_rate, run_generator_gap_rate, BsdeRateConfig, BsdeRateReport};
pub use process::{reference_bias_bound, required_eps_ref, run_process_rate, ProcessRateReport};
pub use slope::{fit_loglog_slope, fit_rms_slope, SlopeFit, BOOTSTRAP_RESAMPLES, PATH_BOOTSTRAP_RESAMPLES};

/// Per-level errors of one experiment against the `n^{-(1-β/2)}` law.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub quantity: String,
    pub model: LevyModel,
    pub horizon: f64,
    pub levels: Vec<u64>,
    pub errors: Vec<Estimate>,
    pub paths: u64,
    pub fit: SlopeFit,
    pub beta: f64,
    /// `-(1 - β/2)` for the `β` used in the bound.
    pub theory_slope: f64,
    /// `-(1 - β*/2)`, the exponent the bound approaches as `β ↓ β*`.
    pub asymptotic_slope: f64,
    /// `C_β √T n^{-(1-β/2)}`, plus the gap `c_n` for generator experiments.
    pub bound_curve: Vec<f64>,
    pub reference_bias_bound: f64,
    pub eps_ref: f64,
    /// Whether `error <= bound + 3 SE + bias` is part of the experiment.
    pub bound_checked: bool,
    pub bound_ok: Vec<bool>,
    /// Generator gap `c_n` per level (generator experiments only).
    pub gap_terms: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RateReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        quantity: &str,
        model: &LevyModel,
        horizon: f64,
        levels: &[u64],
        errors: Vec<Estimate>,
        paths: u64,
        fit: SlopeFit,
        beta: f64,
        eps_ref: f64,
        reference_bias_bound: f64,
        bound_checked: bool,
    ) -> Result<Self> {
        let cb = model.c_beta(beta)?;
        let theory_slope = -(1.0 - beta / 2.0);
        let bound_curve: Vec<f64> =
            levels.iter().map(|&n| cb * horizon.sqrt() * (n as f64).powf(theory_slope)).collect();
        let bound_ok = errors
            .iter()
            .zip(&bound_curve)
            .map(|(e, b)| !bound_checked || e.mean <= b + 3.0 * e.se + reference_bias_bound)
            .collect();
        Ok(RateReport {
            quantity: quantity.into(),
            model: *model,
            horizon,
            levels: levels.to_vec(),
            errors,
            paths,
            fit,
            beta,
            theory_slope,
            asymptotic_slope: -(1.0 - model.bg_index() / 2.0),
            bound_curve,
            reference_bias_bound,
            eps_ref,
            bound_checked,
            bound_ok,
            gap_terms: vec![],
            warnings: vec![],
        })
    }

    /// All bound checks hold.
    pub fn passed(&self) -> bool {
        self.bound_ok.iter().all(|&b| b)
    }

    /// For generator experiments, which term of the two-term bound is larger
    /// at each level: `"process"` or `"gap"`.
    pub fn dominant_terms(&self) -> Vec<&'static str> {
        self.gap_terms
            .iter()
            .zip(&self.bound_curve)
            .map(|(g, b)| if 2.0 * g > *b { "gap" } else { "process" })
            .collect()
    }

    /// `n,error,se,bound,theory_slope` rows under `#` comments carrying the
    /// config hash, seed and fit.
    pub fn write_csv<W: Write>(&self, w: &mut W, config_hash: &str, seed: u64) -> std::io::Result<()> {
        writeln!(w, "# config_hash={config_hash}")?;
        writeln!(w, "# seed={seed}")?;
        writeln!(w, "# quantity={} model={} paths={} eps_ref={}", self.quantity, self.model.name(), self.paths, self.eps_ref)?;
        writeln!(
            w,
            "# fitted_slope={} ci_low={} ci_high={} beta={} asymptotic_slope={} reference_bias_bound={}",
            self.fit.slope, self.fit.ci.0, self.fit.ci.1, self.beta, self.asymptotic_slope, self.reference_bias_bound
        )?;
        for warning in &self.warnings {
            writeln!(w, "# warning: {warning}")?;
        }
        writeln!(w, "n,error,se,bound,theory_slope")?;
        for (i, n) in self.levels.iter().enumerate() {
            writeln!(w, "{n},{},{},{},{}", self.errors[i].mean, self.errors[i].se, self.bound_curve[i], self.theory_slope)?;
        }
        Ok(())
    }
}

pub(crate) fn check_levels(levels: &[u64]) -> Result<()> {
    if levels.len() < 3 {
        return Err(Error::Config(format!("need at least 3 levels, got {}", levels.len())));
    }
    if levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("levels must be positive and strictly increasing".into()));
    }
    Ok(())
}

pub(crate) fn check_beta(model: &LevyModel, beta: f64) -> Result<()> {
    let bs = model.bg_index();
    if !(beta > bs && beta < 2.0) {
        return Err(Error::Config(format!("beta = {beta} must lie in (beta_star, 2) = ({bs}, 2)")));
    }
    Ok(())
}

/// Squared second moment removed by thinning `{|x| < eps}`: the partial
/// moment taken just inside the radius so an atom at `eps` is kept.
pub(crate) fn removed_m2(model: &LevyModel, eps: f64) -> Result<f64> {
    Ok(model.partial_moment(2.0, eps * (1.0 - 1e-12))?.value().unwrap_or(f64::INFINITY))
}

#[cfg(test)]
mod tests;
