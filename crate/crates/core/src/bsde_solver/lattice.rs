//! Jump laws projected onto a uniform lattice and their compound-Poisson
//! transition kernels.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{domain, Result};
use crate::levy_measures::{LevyModel, Side, SIDES};

/// Weights at the lattice points `(offset + k)·h`, `k = 0..weights.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLaw {
    pub h: f64,
    pub offset: i64,
    pub weights: Vec<f64>,
}

impl LatticeLaw {
    pub fn point(h: f64) -> Self {
        LatticeLaw { h, offset: 0, weights: vec![1.0] }
    }

    pub fn mass(&self) -> f64 {
        crate::stats::pairwise_sum(&self.weights)
    }

    pub fn moment(&self, q: i32) -> f64 {
        self.iter().map(|(z, w)| w * z.powi(q)).sum()
    }

    /// `(position, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(k, &w)| ((self.offset + k as i64) as f64 * self.h, w))
    }

    fn normalize(&mut self) {
        let m = self.mass();
        if m > 0.0 {
            for w in &mut self.weights {
                *w /= m;
            }
        }
    }

    /// Drops tails of cumulative mass below `tol` at each end; returns the
    /// dropped mass.
    pub fn trim(&mut self, tol: f64) -> f64 {
        let total = self.mass();
        let mut lo = 0;
        let mut acc = 0.0;
        while lo < self.weights.len() && acc + self.weights[lo] <= tol * total {
            acc += self.weights[lo];
            lo += 1;
        }
        let mut hi = self.weights.len();
        let mut acc_hi = 0.0;
        while hi > lo + 1 && acc_hi + self.weights[hi - 1] <= tol * total {
            acc_hi += self.weights[hi - 1];
            hi -= 1;
        }
        self.weights = self.weights[lo..hi].to_vec();
        self.offset += lo as i64;
        acc + acc_hi
    }

    /// Mass strictly outside `[-r, r]`.
    pub fn mass_outside(&self, r: f64) -> f64 {
        self.iter().filter(|(z, _)| z.abs() > r * (1.0 + 1e-12)).map(|(_, w)| w).sum()
    }

    /// Smallest lattice position whose cumulative mass reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let total = self.mass();
        let mut acc = 0.0;
        for (z, w) in self.iter() {
            acc += w;
            if acc >= p * total {
                return z;
            }
        }
        (self.offset + self.weights.len() as i64 - 1) as f64 * self.h
    }
}

/// `∫ w(r) ν` and `∫ r w(r) ν` over `{a <= r <= b}` on one side, where
/// `w(r) = min(1, r^p)` or `w ≡ 1` when `power` is `None`.
fn cell_moments(model: &LevyModel, side: Side, power: Option<f64>, a: f64, b: f64) -> (f64, f64) {
    let m = |q: f64, lo: f64, hi: f64| model.side_moment(side, q, lo, hi).value().unwrap_or(0.0);
    match power {
        None => (m(0.0, a, b), m(1.0, a, b)),
        Some(p) => {
            let mut w0 = 0.0;
            let mut w1 = 0.0;
            if a < 1.0 {
                let hi = b.min(1.0);
                w0 += m(p, a, hi);
                w1 += m(p + 1.0, a, hi);
            }
            if b > 1.0 {
                let lo = a.max(1.0);
                w0 += m(0.0, lo, b);
                w1 += m(1.0, lo, b);
            }
            (w0, w1)
        }
    }
}

fn weight_fn(power: Option<f64>) -> impl Fn(f64) -> f64 {
    move |r: f64| match power {
        None => 1.0,
        Some(p) => r.powf(p).min(1.0),
    }
}

/// Hat-function projection of `w(z) ν(dz)` restricted to `{|z| >= lo}` onto
/// the lattice `hℤ`: a mass at `z` goes to the two neighbouring nodes with
/// linear weights, which preserves total mass and first moment.
pub fn project_measure(model: &LevyModel, lo: f64, h: f64, power: Option<f64>) -> Result<LatticeLaw> {
    if !(h > 0.0) || !(lo >= 0.0) {
        return domain("lattice spacing must be positive and radius nonnegative");
    }
    let mut pos: Vec<f64> = vec![];
    let mut neg: Vec<f64> = vec![];
    let add = |v: &mut Vec<f64>, k: usize, w: f64| {
        if v.len() <= k {
            v.resize(k + 1, 0.0);
        }
        v[k] += w;
    };
    match model {
        LevyModel::Atomic { rule } => {
            let wf = weight_fn(power);
            let first = rule.first_index();
            // atoms at or above max(lo, h) one by one, the rest through tail sums
            let cut = lo.max(h);
            let last = rule.last_at_least(cut);
            if let Some(last) = last {
                for i in first..=last {
                    let z = rule.atom(i);
                    let m = (z / h).floor();
                    let f = z / h - m;
                    let w = wf(z);
                    add(&mut pos, m as usize, w * (1.0 - f));
                    add(&mut pos, m as usize + 1, w * f);
                }
            }
            if lo < h {
                let start = last.map_or(first, |l| l + 1);
                let p = power.unwrap_or(0.0);
                let (w0, w1) = if lo == 0.0 {
                    match (rule.tail_sum(p, start).value(), rule.tail_sum(p + 1.0, start).value()) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return domain("projected atomic measure diverges at the origin"),
                    }
                } else {
                    match rule.last_at_least(lo) {
                        Some(end) if end >= start => (rule.range_sum(p, start, end), rule.range_sum(p + 1.0, start, end)),
                        _ => (0.0, 0.0),
                    }
                };
                add(&mut pos, 0, w0 - w1 / h);
                add(&mut pos, 1, w1 / h);
            }
        }
        _ => {
            for side in SIDES {
                let (total, _) = cell_moments(model, side, power, lo, f64::INFINITY);
                if total <= 0.0 {
                    continue;
                }
                let mut rmax = lo.max(h) * 2.0;
                while model.side_moment(side, 0.0, rmax, f64::INFINITY).value().unwrap_or(0.0) > 1e-17 * total {
                    rmax *= 2.0;
                }
                let v = if side == Side::Positive { &mut pos } else { &mut neg };
                let m0 = (lo / h).floor() as usize;
                let m1 = (rmax / h).ceil() as usize;
                for m in m0..m1 {
                    let a = (m as f64 * h).max(lo);
                    let b = (m + 1) as f64 * h;
                    if b <= a {
                        continue;
                    }
                    let (w0, w1) = cell_moments(model, side, power, a, b);
                    let mf = m as f64;
                    add(v, m, (mf + 1.0) * w0 - w1 / h);
                    add(v, m + 1, w1 / h - mf * w0);
                }
            }
        }
    }
    let n_neg = neg.len();
    let mut weights = Vec::with_capacity(n_neg + pos.len());
    weights.extend(neg.iter().rev());
    // node 0 is shared by both half-lines
    let offset = if n_neg > 0 {
        if let Some(p0) = pos.first() {
            weights[n_neg - 1] += p0;
        }
        weights.extend(pos.iter().skip(1));
        -(n_neg as i64 - 1)
    } else {
        weights.extend(pos.iter());
        0
    };
    for w in &mut weights {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let mut law = LatticeLaw { h, offset, weights };
    law.trim(0.0);
    if law.weights.is_empty() {
        law = LatticeLaw { h, offset: 0, weights: vec![0.0] };
    }
    Ok(law)
}

/// Normalized lattice law of one jump of size `>= eps`.
pub fn jump_law(model: &LevyModel, eps: f64, h: f64) -> Result<LatticeLaw> {
    let mut law = project_measure(model, eps, h, None)?;
    law.normalize();
    Ok(law)
}

/// Law of the sum of a Poisson(`mean_count`) number of i.i.d. `jump` draws,
/// computed exactly through the characteristic function on a periodic
/// lattice wide enough that wrap-around mass is negligible, then trimmed at
/// `trim_tol` per tail and renormalized. Returns the law and the trimmed mass.
pub fn compound_poisson(jump: &LatticeLaw, mean_count: f64, trim_tol: f64) -> (LatticeLaw, f64) {
    let h = jump.h;
    if mean_count <= 0.0 || jump.mass() <= 0.0 {
        return (LatticeLaw::point(h), 0.0);
    }
    let span = jump.weights.len() as f64;
    let m1 = jump.moment(1) / h;
    let m2 = jump.moment(2) / (h * h);
    let mean = mean_count * m1;
    let sd = (mean_count * m2).sqrt();
    // number of jumps beyond which the Poisson tail is negligible
    let kmax = mean_count + 12.0 * mean_count.sqrt() + 40.0;
    let reach = (kmax * span).min(2.0 * span + 80.0 * sd + 64.0);
    let len = ((reach + 2.0 * span + 64.0) as usize).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (k, &w) in jump.weights.iter().enumerate() {
        let idx = (jump.offset + k as i64).rem_euclid(len as i64) as usize;
        buf[idx].re += w;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in &mut buf {
        *c = ((*c - 1.0) * mean_count).exp();
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let lo = mean.round() as i64 - len as i64 / 2;
    let mut weights = vec![0.0; len];
    for (s, w) in weights.iter_mut().enumerate() {
        let pos = lo + s as i64;
        let idx = pos.rem_euclid(len as i64) as usize;
        *w = (buf[idx].re / len as f64).max(0.0);
    }
    let mut law = LatticeLaw { h, offset: lo, weights };
    let dropped = law.trim(trim_tol);
    law.normalize();
    (law, dropped)
}
