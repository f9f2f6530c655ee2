//! Exact simulation of compensated compound-Poisson levels on one shared
//! Poisson random measure, and exact sup distances between coupled levels.

use std::io::{Read, Write};

use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::levy_measures::{LevyModel, RestrictedLaw};
use crate::rng::{par_map_paths, tag, PathRng};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub t: f64,
    pub size: f64,
}

/// `X^ε_t = Σ_{t_j <= t} J_j + drift · t` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub model: LevyModel,
    pub horizon: f64,
    pub eps: f64,
    /// `-∫_{|x|>=ε} x ν(dx)`.
    pub drift: f64,
    pub jumps: Vec<Jump>,
}

impl JumpPath {
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    /// Path value at `t`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return domain(format!("time {t} outside [0, {}]", self.horizon));
        }
        Ok(self.value_at(t))
    }

    pub(crate) fn value_at(&self, t: f64) -> f64 {
        let k = self.jumps.partition_point(|j| j.t <= t);
        self.jumps[..k].iter().map(|j| j.size).sum::<f64>() + self.drift * t
    }

    /// Path values at an increasing list of times, in one sweep.
    pub fn values_on(&self, times: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        let mut k = 0;
        for &t in times {
            while k < self.jumps.len() && self.jumps[k].t <= t {
                acc += self.jumps[k].size;
                k += 1;
            }
            out.push(acc + self.drift * t);
        }
        out
    }

    pub fn terminal(&self) -> f64 {
        self.value_at(self.horizon)
    }
}

/// Path of the level `ε_ref` simulated exactly: Poisson arrival times,
/// sizes from the restricted law.
pub fn simulate_reference(model: &LevyModel, eps_ref: f64, horizon: f64, rng: &mut PathRng) -> Result<JumpPath> {
    let sim = Simulator::new(model, eps_ref, horizon)?;
    Ok(sim.simulate(rng))
}

/// Reusable simulator: validation, tail mass and sampling table are resolved
/// once, then paths are drawn in the inner loop.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: LevyModel,
    eps: f64,
    horizon: f64,
    drift: f64,
    rate: f64,
    law: Option<std::sync::Arc<RestrictedLaw>>,
}

impl Simulator {
    pub fn new(model: &LevyModel, eps: f64, horizon: f64) -> Result<Self> {
        model.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        let rate = model.tail_mass(eps)?;
        let (law, drift) = if rate > 0.0 {
            (Some(RestrictedLaw::get(model, eps)?), -model.compensator_mean(eps)?)
        } else {
            (None, 0.0)
        };
        Ok(Simulator { model: *model, eps, horizon, drift, rate, law })
    }

    /// Jump intensity `Λ(ε)`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn simulate(&self, rng: &mut PathRng) -> JumpPath {
        let mut path = JumpPath { model: self.model, horizon: self.horizon, eps: self.eps, drift: self.drift, jumps: vec![] };
        let Some(law) = &self.law else {
            return path;
        };
        // arrival times from exponential gaps: same law as sorted uniforms
        // given a Poisson count, without the sort
        let mut t = 0.0;
        loop {
            let gap: f64 = Exp1.sample(rng);
            t += gap / self.rate;
            if t > self.horizon {
                break;
            }
            path.jumps.push(Jump { t, size: law.sample(rng) });
        }
        path
    }
}

/// Keeps the jumps with `|J| >= eps` and recompensates.
pub fn thin_to_level(path: &JumpPath, eps: f64) -> Result<JumpPath> {
    if !(eps >= path.eps) {
        return domain(format!("cannot thin level {} to finer radius {eps}", path.eps));
    }
    if eps == path.eps {
        return Ok(path.clone());
    }
    let drift = -path.model.compensator_mean(eps)?;
    Ok(JumpPath {
        model: path.model,
        horizon: path.horizon,
        eps,
        drift,
        jumps: path.jumps.iter().copied().filter(|j| j.size.abs() >= eps).collect(),
    })
}

/// A reference path together with its thinned coarse levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub reference: JumpPath,
    pub levels: Vec<JumpPath>,
}

impl CoupledPaths {
    pub fn from_reference(reference: JumpPath, radii: &[f64]) -> Result<Self> {
        let levels = radii.iter().map(|&e| thin_to_level(&reference, e)).collect::<Result<_>>()?;
        Ok(CoupledPaths { reference, levels })
    }
}

/// `sup_{t∈[0,T]} |X^ref_t − X^coarse_t|`, exactly.
///
/// The difference only moves at removed-jump epochs and is linear in between,
/// so it suffices to look at both one-sided limits at those epochs and at the
/// endpoints.
pub fn sup_distance(reference: &JumpPath, coarse: &JumpPath) -> Result<f64> {
    if reference.horizon != coarse.horizon {
        return Err(Error::Contract("paths have different horizons".into()));
    }
    let mut k = 0;
    let mut removed = Vec::with_capacity(reference.jumps.len().saturating_sub(coarse.jumps.len()));
    for j in &reference.jumps {
        if k < coarse.jumps.len() && coarse.jumps[k] == *j {
            k += 1;
        } else {
            removed.push(*j);
        }
    }
    if k != coarse.jumps.len() {
        return Err(Error::Contract(format!(
            "coarse jump at t={} is not a reference jump",
            coarse.jumps[k].t
        )));
    }
    Ok(sweep(removed.iter().copied(), reference.drift - coarse.drift, reference.horizon))
}

/// Sup distance to the level `eps` implied by thinning `reference`, without
/// materializing the coarse path.
pub fn sup_distance_to_level(reference: &JumpPath, eps: f64, coarse_drift: f64) -> f64 {
    let removed = reference.jumps.iter().copied().filter(|j| j.size.abs() < eps);
    sweep(removed, reference.drift - coarse_drift, reference.horizon)
}

/// Sup and terminal distances to several levels in one pass over the
/// reference jumps: `(sup_t |X^ref_t − X^ε_t|, X^ref_T − X^ε_T)` per radius.
pub fn distances_to_levels(reference: &JumpPath, radii: &[f64], coarse_drifts: &[f64]) -> Vec<(f64, f64)> {
    let slopes: Vec<f64> = coarse_drifts.iter().map(|d| reference.drift - d).collect();
    let mut acc = vec![0.0f64; radii.len()];
    let mut best = vec![0.0f64; radii.len()];
    for j in &reference.jumps {
        let a = j.size.abs();
        for l in 0..radii.len() {
            // a kept jump leaves the difference continuous, so evaluating at
            // its epoch is harmless
            let m = if a < radii[l] { j.size } else { 0.0 };
            let left = acc[l] + slopes[l] * j.t;
            acc[l] += m;
            best[l] = best[l].max(left.abs()).max((left + m).abs());
        }
    }
    (0..radii.len())
        .map(|l| {
            let end = acc[l] + slopes[l] * reference.horizon;
            (best[l].max(end.abs()), end)
        })
        .collect()
}

fn sweep(removed: impl Iterator<Item = Jump>, slope: f64, horizon: f64) -> f64 {
    let mut acc = 0.0f64;
    let mut best = 0.0f64;
    for j in removed {
        let left = acc + slope * j.t;
        acc += j.size;
        let right = acc + slope * j.t;
        best = best.max(left.abs()).max(right.abs());
    }
    best.max((acc + slope * horizon).abs())
}

/// Chi-square test of independence between the first jump time and the
/// absolute first jump size, plus their Spearman correlation.
#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    pub paths: u64,
    /// Paths with at least one jump in `[0, T]`.
    pub observed: usize,
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
    pub rank_correlation: f64,
    pub table: Vec<Vec<u64>>,
}

pub fn first_jump_independence_test(
    model: &LevyModel,
    eps: f64,
    horizon: f64,
    paths: u64,
    seed: u64,
) -> Result<IndependenceReport> {
    let sim = Simulator::new(model, eps, horizon)?;
    if sim.rate() <= 0.0 {
        return domain(format!("no jumps of size >= {eps}"));
    }
    let firsts: Vec<Option<Jump>> =
        par_map_paths(paths, seed, tag("first-jump"), |_, rng| sim.simulate(rng).jumps.first().copied());
    let (taus, sizes): (Vec<f64>, Vec<f64>) = firsts.into_iter().flatten().map(|j| (j.t, j.size.abs())).unzip();
    let cuts = |xs: &[f64]| -> Vec<f64> {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        [0.2, 0.4, 0.6, 0.8].iter().map(|&q| stats::quantile(&s, q)).collect()
    };
    let (ct, cs) = (cuts(&taus), cuts(&sizes));
    let bin = |x: f64, c: &[f64]| c.partition_point(|&b| b < x);
    let mut table = vec![vec![0u64; 5]; 5];
    for (&t, &s) in taus.iter().zip(&sizes) {
        table[bin(t, &ct)][bin(s, &cs)] += 1;
    }
    let (chi_square, df, p_value) = stats::chi_square_independence(&table);
    Ok(IndependenceReport {
        paths,
        observed: taus.len(),
        chi_square,
        df,
        p_value,
        rank_correlation: stats::spearman(&taus, &sizes),
        table,
    })
}

const MAGIC: &[u8; 4] = b"LBSP";
const VERSION: u32 = 1;

/// Appends one path as a block: `"LBSP"`, version `u32`, record count `u64`,
/// then `(t, J)` pairs of little-endian `f64`.
pub fn write_lbsp<W: Write>(w: &mut W, path: &JumpPath) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(path.jumps.len() as u64).to_le_bytes())?;
    for j in &path.jumps {
        w.write_all(&j.t.to_le_bytes())?;
        w.write_all(&j.size.to_le_bytes())?;
    }
    Ok(())
}

/// Reads every block of a dump written by [`write_lbsp`].
pub fn read_lbsp<R: Read>(r: &mut R) -> Result<Vec<Vec<Jump>>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string()));
    let mut blocks = Vec::new();
    let mut rest = &bytes[..];
    while !rest.is_empty() {
        if rest.len() < 16 || &rest[..4] != MAGIC {
            return Err(bad("bad LBSP header"));
        }
        let version = u32::from_le_bytes(rest[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad("unsupported LBSP version"));
        }
        let count = u64::from_le_bytes(rest[8..16].try_into().unwrap()) as usize;
        rest = &rest[16..];
        if rest.len() < count * 16 {
            return Err(bad("truncated LBSP block"));
        }
        let f = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        blocks.push(rest[..count * 16].chunks_exact(16).map(|c| Jump { t: f(&c[..8]), size: f(&c[8..]) }).collect());
        rest = &rest[count * 16..];
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_stream;
    use crate::stats::Estimate;

    fn path(jumps: &[(f64, f64)], drift: f64, eps: f64) -> JumpPath {
        JumpPath {
            model: LevyModel::stable_like(1.0, 1.0, 0.5, 1.0, 1.0),
            horizon: 1.0,
            eps,
            drift,
            jumps: jumps.iter().map(|&(t, size)| Jump { t, size }).collect(),
        }
    }

    #[test]
    fn evaluate_direct_formula() {
        let p = path(&[(0.5, 1.0)], -0.2, 0.1);
        assert!((p.evaluate(0.4).unwrap() + 0.08).abs() < 1e-15);
        assert!((p.evaluate(0.6).unwrap() - 0.88).abs() < 1e-15);
        assert_eq!(p.evaluate(0.0).unwrap(), 0.0);
        assert!(p.evaluate(1.5).is_err());
        assert!(p.evaluate(-0.1).is_err());
        assert_eq!(path(&[], 0.0, 0.1).evaluate(0.7).unwrap(), 0.0);
        assert_eq!(p.values_on(&[0.0, 0.4, 0.5, 1.0]), vec![0.0, p.value_at(0.4), p.value_at(0.5), p.value_at(1.0)]);
    }

    #[test]
    fn empty_support_gives_zero_path() {
        let mut rng = path_stream(0, 0, 0);
        let p = simulate_reference(&LevyModel::harmonic(), 2.0, 1.0, &mut rng).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.drift, 0.0);
        assert_eq!(p.terminal(), 0.0);
    }

    #[test]
    fn thinning_keeps_large_jumps_only() {
        let p = path(&[(0.2, 0.005), (0.7, 0.5)], 0.0, 0.001);
        let q = thin_to_level(&p, 0.1).unwrap();
        assert_eq!(q.jumps, vec![Jump { t: 0.7, size: 0.5 }]);
        assert_eq!(thin_to_level(&p, 0.001).unwrap(), p);
        assert!(thin_to_level(&p, 0.0005).is_err());
    }

    #[test]
    fn sup_distance_cases() {
        let r = path(&[(0.5, 0.05)], 0.0, 0.01);
        assert_eq!(sup_distance(&r, &r).unwrap(), 0.0);
        let c = path(&[], 0.0, 0.1);
        assert!((sup_distance(&r, &c).unwrap() - 0.05).abs() < 1e-15);
        let alien = path(&[(0.3, 1.0)], 0.0, 0.1);
        assert!(matches!(sup_distance(&r, &alien), Err(Error::Contract(_))));
        // drift gap only: sup is at the horizon
        let d = path(&[], -0.3, 0.1);
        assert!((sup_distance(&path(&[], 0.0, 0.01), &d).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sup_distance_matches_fine_grid() {
        let m = LevyModel::cgmy(1.0, 5.0, 5.0, 0.5);
        for i in 0..20 {
            let mut rng = path_stream(3, 0, i);
            let r = simulate_reference(&m, 1e-3, 1.0, &mut rng).unwrap();
            let c = thin_to_level(&r, 0.05).unwrap();
            let exact = sup_distance(&r, &c).unwrap();
            assert_eq!(exact, sup_distance_to_level(&r, 0.05, c.drift));
            // grid evaluation with both one-sided limits at every jump of the reference
            let mut grid: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
            for j in &r.jumps {
                grid.push(j.t);
                grid.push(j.t - 1e-13);
            }
            grid.sort_by(f64::total_cmp);
            let brute = r.values_on(&grid).iter().zip(c.values_on(&grid)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!((exact - brute).abs() < 1e-9, "{exact} vs {brute}");
        }
    }

    #[test]
    fn fused_distances_match_thinned_paths() {
        let m = LevyModel::harmonic();
        let radii = [0.5, 0.1, 1.0 / 32.0];
        for i in 0..10 {
            let mut rng = path_stream(4, 0, i);
            let r = simulate_reference(&m, 1e-3, 1.0, &mut rng).unwrap();
            let coarse: Vec<JumpPath> = radii.iter().map(|&e| thin_to_level(&r, e).unwrap()).collect();
            let drifts: Vec<f64> = coarse.iter().map(|c| c.drift).collect();
            for (c, (sup, end)) in coarse.iter().zip(distances_to_levels(&r, &radii, &drifts)) {
                assert!((sup - sup_distance(&r, c).unwrap()).abs() < 1e-12);
                assert!((end - (r.terminal() - c.terminal())).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn merton_jump_count_mean() {
        let m = LevyModel::merton(1.0, 0.0, 1.0);
        let sim = Simulator::new(&m, 1e-12, 1.0).unwrap();
        let counts: Vec<f64> = par_map_paths(100_000, 5, 0, |_, rng| sim.simulate(rng).len() as f64);
        let e = Estimate::from_samples(&counts);
        assert!((e.mean - sim.rate()).abs() <= 3.0 * e.se, "{e:?}");
        assert!((sim.rate() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn cgmy_jump_counts_match_tail_mass() {
        let m = LevyModel::cgmy(1.0, 5.0, 5.0, 0.5);
        let sim = Simulator::new(&m, 0.01, 1.0).unwrap();
        let counts: Vec<f64> = par_map_paths(20_000, 6, 0, |_, rng| sim.simulate(rng).len() as f64);
        let e = Estimate::from_samples(&counts);
        assert!((e.mean - m.tail_mass(0.01).unwrap()).abs() <= 3.0 * e.se, "{e:?}");

        let sim = Simulator::new(&m, 1e-4, 1.0).unwrap();
        let kept: Vec<f64> =
            par_map_paths(10_000, 7, 0, |_, rng| thin_to_level(&sim.simulate(rng), 0.125).unwrap().len() as f64);
        let e = Estimate::from_samples(&kept);
        assert!((e.mean - m.tail_mass(0.125).unwrap()).abs() <= 3.0 * e.se, "{e:?}");
    }

    #[test]
    fn coupling_identity_across_levels() {
        let m = LevyModel::cgmy(1.0, 5.0, 5.0, 0.5);
        let radii = [0.5, 0.25, 0.1, 0.01, 1e-3];
        for i in 0..10 {
            let mut rng = path_stream(8, 0, i);
            let cp = CoupledPaths::from_reference(simulate_reference(&m, 1e-3, 1.0, &mut rng).unwrap(), &radii).unwrap();
            assert_eq!(cp.levels[4], cp.reference);
            for a in 0..radii.len() {
                for b in 0..a {
                    assert_eq!(thin_to_level(&cp.levels[a], radii[b]).unwrap(), cp.levels[b]);
                }
            }
        }
    }

    #[test]
    fn martingale_and_variance_checks() {
        for (m, eps) in [(LevyModel::cgmy(1.0, 5.0, 5.0, 0.5), 0.01), (LevyModel::merton(2.0, 0.3, 0.5), 1e-9)] {
            let sim = Simulator::new(&m, eps, 1.0).unwrap();
            let xs: Vec<f64> = par_map_paths(100_000, 9, 0, |_, rng| sim.simulate(rng).terminal());
            let e = Estimate::from_samples(&xs);
            assert!(e.mean.abs() <= 4.0 * e.se, "{m:?} mean {e:?}");
            let v = m.second_moment_beyond(eps).unwrap();
            let sq: Vec<f64> = xs.iter().map(|x| (x - e.mean).powi(2)).collect();
            let ev = Estimate::from_samples(&sq);
            assert!((ev.mean - v).abs() <= 4.0 * ev.se, "{m:?} var {ev:?} vs {v}");
        }
    }

    #[test]
    fn independence_degenerate_and_cgmy() {
        let r = first_jump_independence_test(&LevyModel::harmonic(), 0.6, 1.0, 10_000, 1).unwrap();
        assert_eq!(r.rank_correlation, 0.0);
        assert_eq!(r.chi_square, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = first_jump_independence_test(&LevyModel::cgmy(1.0, 5.0, 5.0, 0.5), 0.1, 1.0, 20_000, 2).unwrap();
        assert!(r.p_value > 0.001, "{r:?}");
        assert_eq!(r.df, 16);
        let r = first_jump_independence_test(&LevyModel::merton(1.0, 0.0, 1.0), 1e-9, 1.0, 20_000, 3).unwrap();
        assert!(r.rank_correlation.abs() <= 4.0 / (r.observed as f64).sqrt(), "{r:?}");
    }

    #[test]
    fn lbsp_round_trip() {
        let a = path(&[(0.1, -0.3), (0.9, 2.5)], 0.0, 0.1);
        let b = path(&[], 0.0, 0.1);
        let mut buf = Vec::new();
        write_lbsp(&mut buf, &a).unwrap();
        write_lbsp(&mut buf, &b).unwrap();
        assert_eq!(&buf[..4], b"LBSP");
        assert_eq!(buf.len(), 16 + 32 + 16);
        let blocks = read_lbsp(&mut buf.as_slice()).unwrap();
        assert_eq!(blocks, vec![a.jumps.clone(), vec![]]);
        assert!(read_lbsp(&mut &buf[..20]).is_err());
    }
}
