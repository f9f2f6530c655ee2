//! Lévy measures of scalar pure-jump martingales: tail masses, partial
//! moments, Blumenthal–Getoor indices, the constant `C_β` and exact sampling
//! of the measure restricted to `{|x| >= ε}`.

mod integrals;
mod sampling;

pub use integrals::{gaussian_power, normal_cdf, normal_pdf, normal_sf, tempered_power};
pub use sampling::{sample_restricted, RestrictedLaw, TABLE_NODES};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use integrals::{index_tail_sum, LogTerm};

/// Value of a possibly divergent integral. Divergence is carried as a tag and
/// never as a floating-point infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Divergent,
}

impl Moment {
    pub fn value(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, Moment::Divergent)
    }

    fn add(self, other: Moment) -> Moment {
        match (self, other) {
            (Moment::Finite(a), Moment::Finite(b)) => Moment::Finite(a + b),
            _ => Moment::Divergent,
        }
    }

    fn scale(self, c: f64) -> Moment {
        match self {
            Moment::Finite(v) => Moment::Finite(c * v),
            // a zero density integrates to zero no matter the exponent
            Moment::Divergent if c == 0.0 => Moment::Finite(0.0),
            Moment::Divergent => Moment::Divergent,
        }
    }
}

impl std::fmt::Display for Moment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Moment::Finite(v) => write!(f, "{v}"),
            Moment::Divergent => write!(f, "divergent"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Positive,
    Negative,
}

pub const SIDES: [Side; 2] = [Side::Positive, Side::Negative];

/// Atom placement rules for purely atomic Lévy measures with unit weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomRule {
    /// `x_i = 1/i`, `i >= 1`.
    Harmonic,
    /// `x_i = sqrt(ln i)/i`, `i >= 2`.
    LogHarmonic,
}

impl AtomRule {
    pub fn first_index(self) -> u64 {
        match self {
            AtomRule::Harmonic => 1,
            AtomRule::LogHarmonic => 2,
        }
    }

    pub fn atom(self, i: u64) -> f64 {
        let x = i as f64;
        match self {
            AtomRule::Harmonic => 1.0 / x,
            AtomRule::LogHarmonic => x.ln().sqrt() / x,
        }
    }

    fn power(self, q: f64, i: u64) -> f64 {
        match (self, q) {
            (_, q) if q == 0.0 => 1.0,
            (AtomRule::Harmonic, q) if q == 2.0 => {
                let x = i as f64;
                1.0 / (x * x)
            }
            (AtomRule::LogHarmonic, q) if q == 2.0 => {
                let x = i as f64;
                x.ln() / (x * x)
            }
            _ => self.atom(i).powf(q),
        }
    }

    fn log_terms(self, q: f64) -> [LogTerm; 1] {
        match self {
            AtomRule::Harmonic => [LogTerm { coef: 1.0, k: 0.0, a: q }],
            AtomRule::LogHarmonic => [LogTerm { coef: 1.0, k: q / 2.0, a: q }],
        }
    }

    /// Smallest index whose atom is `<= v`. Atoms decrease strictly in `i`.
    pub fn first_at_most(self, v: f64) -> u64 {
        let i0 = self.first_index();
        if self.atom(i0) <= v {
            return i0;
        }
        let mut hi = i0.max(2);
        while self.atom(hi) > v {
            hi = hi.checked_mul(2).expect("atom index overflow");
        }
        let mut lo = hi / 2; // atom(lo) > v
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.atom(mid) <= v {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Largest index whose atom is `>= v`, if any.
    pub fn last_at_least(self, v: f64) -> Option<u64> {
        let i0 = self.first_index();
        if self.atom(i0) < v {
            return None;
        }
        // first index with atom < v, minus one
        let mut hi = i0.max(2);
        while self.atom(hi) >= v {
            hi = hi.checked_mul(2).expect("atom index overflow");
        }
        let mut lo = hi / 2;
        if lo < i0 {
            lo = i0;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.atom(mid) < v {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(lo)
    }

    /// `Σ_{i >= i0} x_i^q`, finite iff `q > 1`.
    pub fn tail_sum(self, q: f64, i0: u64) -> Moment {
        if q <= 1.0 {
            return Moment::Divergent;
        }
        let i0 = i0.max(self.first_index());
        Moment::Finite(index_tail_sum(&self.log_terms(q), |i| self.power(q, i), i0))
    }

    /// `Σ_{i0 <= i <= i1} x_i^q`.
    pub fn range_sum(self, q: f64, i0: u64, i1: u64) -> f64 {
        if i1 < i0 {
            return 0.0;
        }
        if i1 - i0 > 4_000_000 && q > 1.0 {
            let a = self.tail_sum(q, i0).value().unwrap_or(0.0);
            let b = self.tail_sum(q, i1 + 1).value().unwrap_or(0.0);
            return a - b;
        }
        let terms: Vec<f64> = (i0..=i1).map(|i| self.power(q, i)).collect();
        crate::stats::pairwise_sum(&terms)
    }
}

/// Analytic description of a scalar Lévy measure `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LevyModel {
    /// `C e^{-M x} x^{-1-Y}` on `x > 0`, `C e^{-G|x|} |x|^{-1-Y}` on `x < 0`.
    Cgmy {
        #[serde(rename = "C")]
        c: f64,
        #[serde(rename = "G")]
        g: f64,
        #[serde(rename = "M")]
        m: f64,
        #[serde(rename = "Y")]
        y: f64,
    },
    /// Compound Poisson with `N(mean, stdev²)` jumps at rate `intensity`.
    Merton { intensity: f64, mean: f64, stdev: f64 },
    /// `c± |x|^{-1-α} e^{-λ± |x|}` on each half-line.
    StableLike { c_pos: f64, c_neg: f64, alpha: f64, lambda_pos: f64, lambda_neg: f64 },
    /// Unit atoms placed by `rule`.
    Atomic { rule: AtomRule },
}

/// One half-line of a measure, in terms of `r = |x|`.
#[derive(Debug, Clone, Copy)]
enum HalfLine {
    Empty,
    Tempered { scale: f64, alpha: f64, lambda: f64 },
    Gaussian { intensity: f64, mean: f64, stdev: f64 },
    Atoms(AtomRule),
}

impl LevyModel {
    pub fn cgmy(c: f64, g: f64, m: f64, y: f64) -> Self {
        LevyModel::Cgmy { c, g, m, y }
    }

    pub fn merton(intensity: f64, mean: f64, stdev: f64) -> Self {
        LevyModel::Merton { intensity, mean, stdev }
    }

    pub fn stable_like(c_pos: f64, c_neg: f64, alpha: f64, lambda_pos: f64, lambda_neg: f64) -> Self {
        LevyModel::StableLike { c_pos, c_neg, alpha, lambda_pos, lambda_neg }
    }

    pub fn harmonic() -> Self {
        LevyModel::Atomic { rule: AtomRule::Harmonic }
    }

    pub fn log_harmonic() -> Self {
        LevyModel::Atomic { rule: AtomRule::LogHarmonic }
    }

    /// Small-jump asymptotic of the Meixner measure: `δα/(π x²)` near zero
    /// with exponential tails of rates `(π ∓ β)/α`.
    pub fn meixner_like(alpha: f64, beta: f64, delta: f64) -> Self {
        let pi = std::f64::consts::PI;
        Self::stable_like(delta * alpha / pi, delta * alpha / pi, 1.0, (pi - beta) / alpha, (pi + beta) / alpha)
    }

    /// Small-jump asymptotic of the generalized hyperbolic measure:
    /// `δ/(π x²)` near zero, tails tempered at `α ∓ γ`.
    pub fn gh_like(alpha: f64, gamma: f64, delta: f64) -> Self {
        let c = delta / std::f64::consts::PI;
        Self::stable_like(c, c, 1.0, alpha - gamma, alpha + gamma)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LevyModel::Cgmy { .. } => "cgmy",
            LevyModel::Merton { .. } => "merton",
            LevyModel::StableLike { .. } => "stable-like",
            LevyModel::Atomic { rule: AtomRule::Harmonic } => "atomic-harmonic",
            LevyModel::Atomic { rule: AtomRule::LogHarmonic } => "atomic-logharmonic",
        }
    }

    /// Checks parameter admissibility, including square integrability of the
    /// large jumps (a nonzero half-line density needs exponential tempering).
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("{}: {msg}", self.name())));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            LevyModel::Cgmy { c, g, m, y } => {
                if !finite(&[c, g, m, y]) || c <= 0.0 || g <= 0.0 || m <= 0.0 {
                    return bad("requires C > 0, G > 0, M > 0");
                }
                if y >= 2.0 {
                    return bad("requires Y < 2");
                }
            }
            LevyModel::Merton { intensity, mean, stdev } => {
                if !finite(&[intensity, mean, stdev]) || intensity <= 0.0 || stdev <= 0.0 {
                    return bad("requires intensity > 0 and stdev > 0");
                }
            }
            LevyModel::StableLike { c_pos, c_neg, alpha, lambda_pos, lambda_neg } => {
                if !finite(&[c_pos, c_neg, alpha, lambda_pos, lambda_neg]) {
                    return bad("parameters must be finite");
                }
                if c_pos < 0.0 || c_neg < 0.0 || lambda_pos < 0.0 || lambda_neg < 0.0 {
                    return bad("scales and tempering rates must be nonnegative");
                }
                if !(0.0..2.0).contains(&alpha) {
                    return bad("requires alpha in [0, 2)");
                }
                if (c_pos > 0.0 && lambda_pos == 0.0) || (c_neg > 0.0 && lambda_neg == 0.0) {
                    return bad("untempered half-line is not square integrable");
                }
            }
            LevyModel::Atomic { .. } => {}
        }
        Ok(())
    }

    fn half(&self, side: Side) -> HalfLine {
        match (*self, side) {
            (LevyModel::Cgmy { c, m, y, .. }, Side::Positive) => HalfLine::Tempered { scale: c, alpha: y, lambda: m },
            (LevyModel::Cgmy { c, g, y, .. }, Side::Negative) => HalfLine::Tempered { scale: c, alpha: y, lambda: g },
            (LevyModel::Merton { intensity, mean, stdev }, Side::Positive) => {
                HalfLine::Gaussian { intensity, mean, stdev }
            }
            (LevyModel::Merton { intensity, mean, stdev }, Side::Negative) => {
                HalfLine::Gaussian { intensity, mean: -mean, stdev }
            }
            (LevyModel::StableLike { c_pos, alpha, lambda_pos, .. }, Side::Positive) => {
                HalfLine::Tempered { scale: c_pos, alpha, lambda: lambda_pos }
            }
            (LevyModel::StableLike { c_neg, alpha, lambda_neg, .. }, Side::Negative) => {
                HalfLine::Tempered { scale: c_neg, alpha, lambda: lambda_neg }
            }
            (LevyModel::Atomic { rule }, Side::Positive) => HalfLine::Atoms(rule),
            (LevyModel::Atomic { .. }, Side::Negative) => HalfLine::Empty,
        }
    }

    /// `∫ |x|^q ν(dx)` over `{lo <= |x| <= hi}` on one half-line.
    pub fn side_moment(&self, side: Side, q: f64, lo: f64, hi: f64) -> Moment {
        if !(lo <= hi) {
            return Moment::Finite(0.0);
        }
        match self.half(side) {
            HalfLine::Empty => Moment::Finite(0.0),
            HalfLine::Tempered { scale, alpha, lambda } => {
                if scale == 0.0 {
                    return Moment::Finite(0.0);
                }
                tempered_power(q - alpha, lambda, lo, hi).scale(scale)
            }
            HalfLine::Gaussian { intensity, mean, stdev } => {
                Moment::Finite(intensity * gaussian_power(q, mean, stdev, lo, hi))
            }
            HalfLine::Atoms(rule) => {
                let first = if hi.is_infinite() { rule.first_index() } else { rule.first_at_most(hi) };
                if lo == 0.0 {
                    return rule.tail_sum(q, first);
                }
                match rule.last_at_least(lo) {
                    Some(last) => Moment::Finite(rule.range_sum(q, first, last)),
                    None => Moment::Finite(0.0),
                }
            }
        }
    }

    fn both_sides(&self, q: f64, lo: f64, hi: f64) -> Moment {
        self.side_moment(Side::Positive, q, lo, hi).add(self.side_moment(Side::Negative, q, lo, hi))
    }

    /// `Λ(ε) = ν({|x| >= ε})`.
    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        check_radius(eps)?;
        self.both_sides(0.0, eps, f64::INFINITY)
            .value()
            .ok_or_else(|| Error::Domain(format!("{}: tail mass diverges", self.name())))
    }

    /// `Λ(ε)` split into the positive and negative half-lines.
    pub fn side_tail_masses(&self, eps: f64) -> Result<(f64, f64)> {
        check_radius(eps)?;
        let pos = self.side_moment(Side::Positive, 0.0, eps, f64::INFINITY).value();
        let neg = self.side_moment(Side::Negative, 0.0, eps, f64::INFINITY).value();
        match (pos, neg) {
            (Some(p), Some(n)) => Ok((p, n)),
            _ => domain("tail mass diverges"),
        }
    }

    /// `m_p(ε) = ∫_{|x| <= ε} |x|^p ν(dx)`; divergence is reported as a tag.
    pub fn partial_moment(&self, p: f64, eps: f64) -> Result<Moment> {
        check_radius(eps)?;
        if !(p >= 0.0) {
            return domain(format!("moment exponent must be >= 0, got {p}"));
        }
        Ok(self.both_sides(p, 0.0, eps))
    }

    /// `∫_{|x| >= ε} x² ν(dx)`, the variance rate of the truncated process.
    pub fn second_moment_beyond(&self, eps: f64) -> Result<f64> {
        check_radius(eps)?;
        self.both_sides(2.0, eps, f64::INFINITY)
            .value()
            .ok_or_else(|| Error::Domain("model is not square integrable".into()))
    }

    /// `ν(ℝ)`; `Divergent` for infinite-activity measures.
    pub fn total_mass(&self) -> Moment {
        self.both_sides(0.0, 0.0, f64::INFINITY)
    }

    /// Analytic Blumenthal–Getoor index.
    pub fn bg_index(&self) -> f64 {
        match *self {
            LevyModel::Cgmy { y, .. } => y.max(0.0),
            LevyModel::Merton { .. } => 0.0,
            LevyModel::StableLike { alpha, .. } => alpha,
            LevyModel::Atomic { .. } => 1.0,
        }
    }

    /// `C_β = 2 (∫ |x|^β ν(dx))^{1/2}` for `β ∈ (β*, 2)`.
    pub fn c_beta(&self, beta: f64) -> Result<f64> {
        let bg = self.bg_index();
        if !(beta > bg && beta < 2.0) {
            return domain(format!("beta must lie in ({bg}, 2), got {beta}"));
        }
        match self.both_sides(beta, 0.0, f64::INFINITY) {
            Moment::Finite(v) => Ok(2.0 * v.sqrt()),
            Moment::Divergent => domain(format!("∫|x|^{beta} ν(dx) diverges")),
        }
    }

    /// `∫_{|x| >= ε} x ν(dx)`, so that `-t` times it compensates the jumps.
    pub fn compensator_mean(&self, eps: f64) -> Result<f64> {
        check_radius(eps)?;
        let pos = self.side_moment(Side::Positive, 1.0, eps, f64::INFINITY);
        let neg = self.side_moment(Side::Negative, 1.0, eps, f64::INFINITY);
        match (pos, neg) {
            (Moment::Finite(p), Moment::Finite(n)) => Ok(p - n),
            _ => domain("first moment beyond ε diverges"),
        }
    }

    /// Numerical check of `∫_{|x| >= 1} x² ν(dx) < ∞`.
    pub fn is_square_integrable(&self) -> bool {
        matches!(self.both_sides(2.0, 1.0, f64::INFINITY), Moment::Finite(v) if v.is_finite())
    }

    /// Finite total mass (compound Poisson without truncation).
    pub fn is_finite_activity(&self) -> bool {
        !self.total_mass().is_divergent()
    }
}

fn check_radius(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        domain(format!("truncation radius must be positive and finite, got {eps}"))
    }
}
