//! Exact sampling from `ν` restricted to `{|x| >= ε}` and normalized.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, RwLock};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{normal_cdf, normal_sf, tempered_power, AtomRule, LevyModel, Side, SIDES};
use crate::error::{domain, Result};

/// Log-spaced nodes per half-line in the inverse-CDF tables.
pub const TABLE_NODES: usize = 4096;

/// Inverse CDF of one half-line of a tempered power-law density, in `r = |x|`.
#[derive(Debug)]
pub struct HalfTable {
    log_r: Vec<f64>,
    cdf: Vec<f64>,
}

impl HalfTable {
    fn build(alpha: f64, lambda: f64, eps: f64) -> Self {
        let s = -alpha;
        let mass = |a: f64, b: f64| tempered_power(s, lambda, a, b).value().unwrap_or(0.0);
        let total = mass(eps, f64::INFINITY);
        // cut where the neglected tail is below 1e-15 of the total
        let mut rmax = eps * 2.0;
        while mass(rmax, f64::INFINITY) > 1e-15 * total {
            rmax *= 2.0;
        }
        let (l0, l1) = (eps.ln(), rmax.ln());
        let step = (l1 - l0) / (TABLE_NODES - 1) as f64;
        let log_r: Vec<f64> = (0..TABLE_NODES).map(|k| l0 + step * k as f64).collect();
        let mut cdf = Vec::with_capacity(TABLE_NODES);
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in log_r.windows(2) {
            let a = if cdf.len() == 1 { eps } else { w[0].exp() };
            acc += mass(a, w[1].exp());
            cdf.push(acc);
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        HalfTable { log_r, cdf }
    }

    fn invert(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (self.log_r[k - 1] + w * (self.log_r[k] - self.log_r[k - 1])).exp()
    }
}

/// Normalized law of a jump of size at least `ε`.
#[derive(Debug)]
pub enum RestrictedLaw {
    /// Equal-weight atoms with indices `first..=last`.
    Atoms { rule: AtomRule, first: u64, last: u64 },
    /// `N(mean, stdev²)` conditioned on `|x| >= eps`.
    Gaussian { mean: f64, stdev: f64, eps: f64, p_pos: f64, p_neg: f64 },
    Tables { p_pos: f64, pos: Option<HalfTable>, neg: Option<HalfTable> },
}

type CacheKey = (String, u64);

static CACHE: LazyLock<RwLock<HashMap<CacheKey, Arc<RestrictedLaw>>>> = LazyLock::new(Default::default);

impl RestrictedLaw {
    /// Cached law for `(model, eps)`. `eps = 0` is accepted for finite-activity
    /// models only.
    pub fn get(model: &LevyModel, eps: f64) -> Result<Arc<RestrictedLaw>> {
        let key = (format!("{model:?}"), eps.to_bits());
        if let Some(law) = CACHE.read().expect("sampling cache poisoned").get(&key) {
            return Ok(law.clone());
        }
        let law = Arc::new(Self::build(model, eps)?);
        let mut cache = CACHE.write().expect("sampling cache poisoned");
        Ok(cache.entry(key).or_insert(law).clone())
    }

    fn build(model: &LevyModel, eps: f64) -> Result<RestrictedLaw> {
        model.validate()?;
        if !(eps >= 0.0 && eps.is_finite()) {
            return domain(format!("truncation radius must be >= 0, got {eps}"));
        }
        match *model {
            LevyModel::Atomic { rule } => {
                if eps == 0.0 {
                    return domain("infinitely many atoms above radius 0");
                }
                match rule.last_at_least(eps) {
                    Some(last) => Ok(RestrictedLaw::Atoms { rule, first: rule.first_index(), last }),
                    None => domain(format!("no mass above radius {eps}")),
                }
            }
            LevyModel::Merton { mean, stdev, .. } => {
                let p_pos = if eps == 0.0 { normal_sf(-mean / stdev) } else { normal_sf((eps - mean) / stdev) };
                let p_neg = normal_cdf((-eps - mean) / stdev);
                if p_pos + p_neg <= 0.0 {
                    return domain(format!("no mass above radius {eps}"));
                }
                Ok(RestrictedLaw::Gaussian { mean, stdev, eps, p_pos, p_neg })
            }
            LevyModel::Cgmy { .. } | LevyModel::StableLike { .. } => {
                if eps == 0.0 {
                    return domain("infinite activity: radius must be positive");
                }
                let (m_pos, m_neg) = model.side_tail_masses(eps)?;
                if m_pos + m_neg <= 0.0 {
                    return domain(format!("no mass above radius {eps}"));
                }
                let table = |side: Side, m: f64| -> Option<HalfTable> {
                    if m <= 0.0 {
                        return None;
                    }
                    match model.half(side) {
                        super::HalfLine::Tempered { alpha, lambda, .. } => Some(HalfTable::build(alpha, lambda, eps)),
                        _ => None,
                    }
                };
                Ok(RestrictedLaw::Tables {
                    p_pos: m_pos / (m_pos + m_neg),
                    pos: table(SIDES[0], m_pos),
                    neg: table(SIDES[1], m_neg),
                })
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RestrictedLaw::Atoms { rule, first, last } => rule.atom(rng.random_range(*first..=*last)),
            RestrictedLaw::Gaussian { mean, stdev, eps, p_pos, p_neg } => {
                if p_pos + p_neg >= 0.25 {
                    loop {
                        let z: f64 = StandardNormal.sample(rng);
                        let x = mean + stdev * z;
                        if x.abs() >= *eps {
                            return x;
                        }
                    }
                }
                let positive = rng.random::<f64>() * (p_pos + p_neg) < *p_pos;
                let (m, p) = if positive { (*mean, *p_pos) } else { (-*mean, *p_neg) };
                // upper tail of N(m, σ²) above eps by inversion of the survival function
                let u = 1.0 - rng.random::<f64>();
                let z = -Normal::standard().inverse_cdf(u * p);
                let r = (m + stdev * z).max(*eps);
                if positive {
                    r
                } else {
                    -r
                }
            }
            RestrictedLaw::Tables { p_pos, pos, neg } => {
                let positive = rng.random::<f64>() < *p_pos;
                let u = rng.random::<f64>();
                match (positive, pos, neg) {
                    (true, Some(t), _) => t.invert(u),
                    (false, _, Some(t)) => -t.invert(u),
                    (_, Some(t), None) => t.invert(u),
                    (_, None, Some(t)) => -t.invert(u),
                    (_, None, None) => unreachable!("empty restricted law"),
                }
            }
        }
    }
}

/// One draw from `ν|_{|x|>=ε} / Λ(ε)`.
pub fn sample_restricted<R: Rng + ?Sized>(model: &LevyModel, eps: f64, rng: &mut R) -> Result<f64> {
    Ok(RestrictedLaw::get(model, eps)?.sample(rng))
}
