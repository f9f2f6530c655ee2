//! Weighted log-log regression with bootstrap intervals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{domain, Result};
use crate::rng::{path_stream, tag};
use crate::stats;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const PATH_BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% bootstrap interval for the slope.
    pub ci: (f64, f64),
}

/// Weights `1/Var(log₂ e)` by the delta method, or `None` when some
/// standard error vanishes (plain least squares is used then).
fn log_weights(errors: &[f64], ses: &[f64]) -> Option<Vec<f64>> {
    let ln2 = std::f64::consts::LN_2;
    let w: Vec<f64> = errors.iter().zip(ses).map(|(e, s)| (e * ln2 / s).powi(2)).collect();
    w.iter().all(|w| w.is_finite() && *w > 0.0).then_some(w)
}

fn wls(x: &[f64], y: &[f64], w: Option<&[f64]>) -> (f64, f64) {
    let wt = |i: usize| w.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..x.len()).map(wt).sum();
    let mx = (0..x.len()).map(|i| wt(i) * x[i]).sum::<f64>() / sw;
    let my = (0..x.len()).map(|i| wt(i) * y[i]).sum::<f64>() / sw;
    let sxy: f64 = (0..x.len()).map(|i| wt(i) * (x[i] - mx) * (y[i] - my)).sum();
    let sxx: f64 = (0..x.len()).map(|i| wt(i) * (x[i] - mx) * (x[i] - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn check(levels: &[u64], errors: &[f64], ses: &[f64]) -> Result<()> {
    if levels.len() < 3 {
        return domain(format!("slope fit needs at least 3 levels, got {}", levels.len()));
    }
    if errors.len() != levels.len() || ses.len() != levels.len() {
        return domain("levels, errors and standard errors differ in length");
    }
    if !errors.iter().all(|e| *e > 0.0 && e.is_finite()) {
        return domain("errors must be positive and finite");
    }
    if !ses.iter().all(|s| *s >= 0.0) {
        return domain("standard errors must be nonnegative");
    }
    Ok(())
}

fn interval(mut slopes: Vec<f64>) -> (f64, f64) {
    slopes.sort_by(f64::total_cmp);
    (stats::quantile(&slopes, 0.025), stats::quantile(&slopes, 0.975))
}

/// Slope and intercept of `log₂ error` against `log₂ n`, with a parametric
/// bootstrap interval drawn from the per-level standard errors.
pub fn fit_loglog_slope(levels: &[u64], errors: &[f64], ses: &[f64]) -> Result<SlopeFit> {
    check(levels, errors, ses)?;
    let x: Vec<f64> = levels.iter().map(|&n| (n as f64).log2()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let w = log_weights(errors, ses);
    let (slope, intercept) = wls(&x, &y, w.as_deref());
    if ses.iter().all(|s| *s == 0.0) {
        return Ok(SlopeFit { slope, intercept, ci: (slope, slope) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tag("slope-bootstrap"));
    let slopes = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let yb: Vec<f64> = errors
                .iter()
                .zip(ses)
                .map(|(e, s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (e + s * z).max(e * 1e-3).log2()
                })
                .collect();
            wls(&x, &yb, w.as_deref()).0
        })
        .collect();
    Ok(SlopeFit { slope, intercept, ci: interval(slopes) })
}

/// Slope fit of root-mean-square errors computed from per-path squared
/// errors (`squares[level][path]`), with the interval from resampling paths.
/// Levels share paths, so the resampling keeps their coupling.
pub fn fit_rms_slope(levels: &[u64], squares: &[Vec<f64>], seed: u64) -> Result<(SlopeFit, Vec<stats::Estimate>)> {
    let est: Vec<stats::Estimate> = squares.iter().map(|s| stats::Estimate::from_samples(s).root()).collect();
    let errors: Vec<f64> = est.iter().map(|e| e.mean).collect();
    let ses: Vec<f64> = est.iter().map(|e| e.se).collect();
    check(levels, &errors, &ses)?;
    let mut fit = fit_loglog_slope(levels, &errors, &ses)?;
    let x: Vec<f64> = levels.iter().map(|&n| (n as f64).log2()).collect();
    let w = log_weights(&errors, &ses);
    let paths = squares[0].len();
    let mut rng = path_stream(seed, tag("path-bootstrap"), 0);
    let slopes = (0..PATH_BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let idx: Vec<usize> = (0..paths).map(|_| rand::Rng::random_range(&mut rng, 0..paths)).collect();
            let yb: Vec<f64> = squares
                .iter()
                .zip(&errors)
                .map(|(s, e)| {
                    let m = stats::pairwise_sum(&idx.iter().map(|&i| s[i]).collect::<Vec<_>>()) / paths as f64;
                    m.sqrt().max(e * 1e-3).log2()
                })
                .collect();
            wls(&x, &yb, w.as_deref()).0
        })
        .collect();
    fit.ci = interval(slopes);
    Ok((fit, est))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_inputs_are_exact() {
        let f = fit_loglog_slope(&[1, 2, 4], &[1.0, 0.5, 0.25], &[0.0; 3]).unwrap();
        assert_eq!(f.slope, -1.0);
        assert_eq!(f.intercept, 0.0);
        let f = fit_loglog_slope(&[2, 4, 8], &[1.0, 1.0, 1.0], &[0.1; 3]).unwrap();
        assert_eq!(f.slope, 0.0);
        let levels = [2u64, 4, 8, 16, 32, 64];
        let e: Vec<f64> = levels.iter().map(|&n| 3.0 * (n as f64).powf(-0.625)).collect();
        let s: Vec<f64> = e.iter().map(|v| 0.02 * v).collect();
        let f = fit_loglog_slope(&levels, &e, &s).unwrap();
        assert!((f.slope + 0.625).abs() < 1e-14);
        assert!((f.intercept - 3f64.log2()).abs() < 1e-14);
        assert!(f.ci.0 < f.slope && f.slope < f.ci.1);
    }

    #[test]
    fn noisy_synthetic_slope() {
        let levels: Vec<u64> = (2..=64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e: Vec<f64> = levels
            .iter()
            .map(|&n| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (n as f64).powf(-0.75) * (1.0 + 0.01 * z)
            })
            .collect();
        let s: Vec<f64> = e.iter().map(|v| 0.01 * v).collect();
        let f = fit_loglog_slope(&levels, &e, &s).unwrap();
        assert!((f.slope + 0.75).abs() < 0.03, "{}", f.slope);
        assert!(f.ci.0 <= -0.75 + 0.03 && f.ci.1 >= -0.75 - 0.03);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_loglog_slope(&[1, 2], &[1.0, 0.5], &[0.0; 2]).is_err());
        assert!(fit_loglog_slope(&[1, 2, 4], &[1.0, 0.0, 0.5], &[0.0; 3]).is_err());
    }

    #[test]
    fn path_bootstrap_interval_covers() {
        let levels = [2u64, 4, 8, 16];
        let mut rng = path_stream(1, 2, 3);
        let squares: Vec<Vec<f64>> = levels
            .iter()
            .map(|&n| {
                (0..4000)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * z / n as f64
                    })
                    .collect()
            })
            .collect();
        let (fit, est) = fit_rms_slope(&levels, &squares, 9).unwrap();
        assert_eq!(est.len(), 4);
        assert!(fit.ci.0 < -0.5 + 0.05 && fit.ci.1 > -0.5 - 0.05, "{fit:?}");
        assert!(fit.ci.0 <= fit.slope && fit.slope <= fit.ci.1);
    }
}
