//! Order-independent reductions and small statistical helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pairwise summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, samples: 0 };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { mean, se: (var / n as f64).sqrt(), samples: n }
    }

    /// `sqrt` of a mean-square estimate, with the delta-method standard error.
    pub fn root(self) -> Self {
        let r = self.mean.max(0.0).sqrt();
        let se = if r > 0.0 { self.se / (2.0 * r) } else { self.se.sqrt() };
        Self { mean: r, se, samples: self.samples }
    }
}

/// Pearson chi-square test of independence on a contingency table.
/// Empty rows and columns are dropped before counting degrees of freedom.
pub fn chi_square_independence(table: &[Vec<u64>]) -> (f64, usize, f64) {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let ncols = table.first().map_or(0, |r| r.len());
    let col_tot: Vec<u64> = (0..ncols).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let live: Vec<usize> = (0..ncols).filter(|&j| col_tot[j] > 0).collect();
    let total: u64 = col_tot.iter().sum();
    if rows.len() < 2 || live.len() < 2 || total == 0 {
        return (0.0, 0, 1.0);
    }
    let mut stat = 0.0;
    for r in &rows {
        let rt: u64 = r.iter().sum();
        for &j in &live {
            let expected = rt as f64 * col_tot[j] as f64 / total as f64;
            let d = r[j] as f64 - expected;
            stat += d * d / expected;
        }
    }
    let df = (rows.len() - 1) * (live.len() - 1);
    let p = 1.0 - ChiSquared::new(df as f64).map(|c| c.cdf(stat)).unwrap_or(0.0);
    (stat, df, p)
}

/// Average ranks (1-based), ties sharing the mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; zero when either sample is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Sample quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_has_zero_se() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn chi_square_on_product_table_is_zero() {
        let t = vec![vec![10, 20], vec![30, 60]];
        let (s, df, p) = chi_square_independence(&t);
        assert!(s.abs() < 1e-12);
        assert_eq!(df, 1);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_detects_dependence() {
        let t = vec![vec![100, 0], vec![0, 100]];
        let (_, _, p) = chi_square_independence(&t);
        assert!(p < 1e-10);
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]) - 1.0).abs() < 1e-12);
    }
}
