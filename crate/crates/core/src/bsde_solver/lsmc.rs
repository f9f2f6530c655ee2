use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::generator::JumpIntegrand;
use super::lattice::project_measure;
use super::BsdeProblem;
use crate::error::{Error, Result};
use crate::path_sim::Simulator;
use crate::rng::{par_map_paths, tag};
use crate::stats::Estimate;

#[derive(Debug, Clone, Serialize)]
pub struct LsmcResult {
    pub y0: f64,
    /// Standard error of the pathwise estimator of `Y_0`.
    pub se: f64,
    pub paths: u64,
    /// Regression coefficients per step on the standardized state
    /// `(x − shift)/scale`, with `(shift, scale)` in `standardization`.
    pub coefficients: Vec<Vec<f64>>,
    pub standardization: Vec<(f64, f64)>,
    pub degrees: Vec<usize>,
    pub residual_rms: Vec<f64>,
    pub fallbacks: Vec<String>,
}

struct Fit {
    coef: Vec<f64>,
    degree: usize,
    shift: f64,
    scale: f64,
}

impl Fit {
    fn eval(&self, x: f64) -> f64 {
        let z = (x - self.shift) / self.scale;
        self.coef.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }
}

/// Least squares on monomials of the standardized state via the normal
/// equations; lowers the degree until the Cholesky factor is well conditioned.
fn regress(xs: &[f64], ys: &[f64], max_degree: usize) -> (Fit, Option<String>) {
    let n = xs.len() as f64;
    let shift = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - shift).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let zs: Vec<f64> = xs.iter().map(|x| (x - shift) / scale).collect();
    let distinct = {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s.len()
    };
    let mut degree = max_degree.min(distinct.saturating_sub(1));
    let mut note = (degree < max_degree).then(|| format!("degree {max_degree} -> {degree}: {distinct} distinct states"));
    loop {
        let p = degree + 1;
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        for (z, y) in zs.iter().zip(ys) {
            let mut pw = vec![1.0; 2 * p - 1];
            for k in 1..pw.len() {
                pw[k] = pw[k - 1] * z;
            }
            for r in 0..p {
                b[r] += pw[r] * y;
                for c in 0..p {
                    a[(r, c)] += pw[r + c];
                }
            }
        }
        let diag: Vec<f64> = (0..p).map(|k| a[(k, k)]).collect();
        if let Some(ch) = a.clone().cholesky() {
            let l = ch.l();
            let well = (0..p).all(|k| l[(k, k)] * l[(k, k)] > 1e-10 * diag[k]);
            if well {
                let coef = ch.solve(&b);
                return (Fit { coef: coef.iter().copied().collect(), degree, shift, scale }, note);
            }
        }
        if degree == 0 {
            let mean = ys.iter().sum::<f64>() / n;
            return (Fit { coef: vec![mean], degree: 0, shift, scale }, note);
        }
        note = Some(format!("rank-deficient at degree {degree}, lowered to {}", degree - 1));
        degree -= 1;
    }
}

/// Regression solver: simulates `paths` trajectories of the level, then
/// regresses `Y_{t_{i+1}}` on polynomials of `X_{t_i}` backwards in time.
pub fn solve_lsmc(problem: &BsdeProblem, paths: u64, degree: usize, steps: usize, x0: f64, seed: u64) -> Result<LsmcResult> {
    problem.validate()?;
    if paths < 1000 {
        return Err(Error::Config(format!("regression solver needs at least 1000 paths, got {paths}")));
    }
    if degree > 6 {
        return Err(Error::Config(format!("basis degree must be <= 6, got {degree}")));
    }
    if steps == 0 {
        return Err(Error::Config("need at least one time step".into()));
    }
    let BsdeProblem { model, eps, generator, terminal, horizon } = problem;
    let dt = horizon / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|i| if i == steps { *horizon } else { i as f64 * dt }).collect();
    let sim = Simulator::new(model, *eps, *horizon)?;
    let states: Vec<Vec<f64>> = par_map_paths(paths, seed, tag("lsmc"), |_, rng| {
        sim.simulate(rng).values_on(&times).into_iter().map(|v| x0 + v).collect()
    });
    let np = paths as usize;
    let mut y: Vec<f64> = states.iter().map(|s| terminal.eval(s[steps])).collect();
    // pathwise estimator: terminal value plus the driver accumulated along the path
    let mut pathwise = y.clone();

    let integrand = if generator.uses_jump_integrand() {
        let sd = (horizon * model.second_moment_beyond(*eps)?).sqrt().max(1e-3);
        let law = match generator.integrand_weight() {
            Some((bb, super::IntegralScope::Full)) => project_measure(model, 0.0, sd / 20.0, Some(bb))?,
            Some((bb, super::IntegralScope::Level)) => project_measure(model, *eps, sd / 20.0, Some(bb))?,
            None => project_measure(model, *eps, sd / 20.0, None)?,
        };
        // drop the lightest nodes, up to a relative mass of 1e-9
        let mut nodes: Vec<(f64, f64)> = law.iter().filter(|(_, w)| *w > 0.0).collect();
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        nodes.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut dropped = 0.0;
        let cut = nodes.iter().take_while(|n| {
            dropped += n.1;
            dropped <= 1e-9 * total
        });
        let skip = cut.count();
        let (offsets, weights): (Vec<f64>, Vec<f64>) = nodes[skip..].iter().copied().unzip();
        Some((offsets, weights))
    } else {
        None
    };

    let mut result = LsmcResult {
        y0: 0.0,
        se: 0.0,
        paths,
        coefficients: vec![vec![]; steps],
        standardization: vec![(0.0, 1.0); steps],
        degrees: vec![0; steps],
        residual_rms: vec![0.0; steps],
        fallbacks: vec![],
    };
    for i in (0..steps).rev() {
        let xs: Vec<f64> = states.iter().map(|s| s[i]).collect();
        let (fit, note) = regress(&xs, &y, degree);
        if let Some(n) = note {
            result.fallbacks.push(format!("step {i}: {n}"));
        }
        let cont: Vec<f64> = xs.iter().map(|&x| fit.eval(x)).collect();
        result.residual_rms[i] = (cont.iter().zip(&y).map(|(c, v)| (c - v).powi(2)).sum::<f64>() / np as f64).sqrt();
        let (t0, t1) = (times[i], times[i + 1]);
        let next: Vec<f64> = if let Some((mul, add)) = generator.affine_flow(t1 - t0) {
            pathwise.iter_mut().for_each(|p| *p = mul * *p + add);
            cont.iter().map(|c| mul * c + add).collect()
        } else if generator.is_source_only() {
            let s = generator.step_integral(t0, t1, *horizon, 0.0, &JumpIntegrand::empty());
            pathwise.iter_mut().for_each(|p| *p += s);
            cont.iter().map(|c| c + s).collect()
        } else {
            let mut out = Vec::with_capacity(np);
            for (k, (&x, &c)) in xs.iter().zip(&cont).enumerate() {
                let vals: Vec<f64>;
                let u = match &integrand {
                    Some((off, w)) => {
                        vals = off.iter().map(|z| fit.eval(x + z) - c).collect();
                        JumpIntegrand { offsets: off, weights: w, values: &vals, rest_mass: 0.0 }
                    }
                    None => JumpIntegrand::empty(),
                };
                let mut yk = c;
                let mut converged = false;
                for _ in 0..super::grid::PICARD_MAX_ITER {
                    let nv = c + generator.step_integral(t0, t1, *horizon, yk, &u);
                    let d = (nv - yk).abs();
                    yk = nv;
                    if d < super::grid::PICARD_TOL {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Solver(format!("Picard iteration failed on path {k} at t = {t0}")));
                }
                pathwise[k] += yk - c;
                out.push(yk);
            }
            out
        };
        result.coefficients[i] = fit.coef.clone();
        result.standardization[i] = (fit.shift, fit.scale);
        result.degrees[i] = fit.degree;
        y = next;
    }
    result.y0 = y.iter().sum::<f64>() / np as f64;
    result.se = Estimate::from_samples(&pathwise).se;
    Ok(result)
}
