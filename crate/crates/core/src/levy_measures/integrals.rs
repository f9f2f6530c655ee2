//! Closed-form-plus-quadrature integrals behind the Lévy-measure operations.

use statrs::function::erf::erfc;

use super::Moment;
use crate::quad;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// `(b^r - a^r) / r`, continuous at `r = 0`, with `a = 0` allowed for `r > 0`.
fn power_difference(r: f64, a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return b.powf(r) / r;
    }
    let l = (b / a).ln();
    if r == 0.0 {
        l
    } else {
        a.powf(r) * (r * l).exp_m1() / r
    }
}

/// `∫_a^b x^{s-1} e^{-λx} dx` for `0 <= a < b <= ∞`, `λ >= 0`.
///
/// Below `min(b, 1/(2λ))` the exponential is expanded in a power series and
/// integrated termwise, which handles the `x^{s-1}` singularity exactly; the
/// remainder is integrated in the log variable where the integrand is smooth.
pub fn tempered_power(s: f64, lambda: f64, a: f64, b: f64) -> Moment {
    if !(a < b) {
        return Moment::Finite(0.0);
    }
    if a == 0.0 && s <= 0.0 {
        return Moment::Divergent;
    }
    if b.is_infinite() && lambda == 0.0 {
        if s >= 0.0 {
            return Moment::Divergent;
        }
        return Moment::Finite(-a.powf(s) / s);
    }
    if lambda == 0.0 {
        return Moment::Finite(power_difference(s, a, b));
    }
    let x0 = b.min(0.5 / lambda);
    let mut total = 0.0;
    if a < x0 {
        let mut coef = 1.0;
        for k in 0..200 {
            let term = coef * power_difference(s + k as f64, a, x0);
            total += term;
            if k >= 2 && term.abs() <= 1e-17 * total.abs() {
                break;
            }
            coef *= -lambda / (k + 1) as f64;
        }
    }
    let lo = a.max(x0);
    if lo < b {
        let log_f = |x: f64| (s - 1.0) * x.ln() - lambda * x;
        let hi = if b.is_finite() {
            b
        } else {
            // the integrand (in x) peaks at (s-1)/λ when s > 1
            let peak = lo.max((s - 1.0) / lambda);
            let ref_level = log_f(peak);
            let mut x = peak.max(lo) + 1.0 / lambda;
            while log_f(x) > ref_level - 80.0 {
                x *= 1.5;
            }
            x
        };
        let q = quad::integrate(
            |u: f64| (s * u - lambda * u.exp()).exp(),
            lo.ln(),
            hi.ln(),
            1e-300,
            1e-14,
        );
        total += q.value;
    }
    Moment::Finite(total)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// `P(a <= Z <= b)` for a standard normal, without cancellation in the tails.
fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// `∫_lo^hi x^q φ_{μ,σ}(x) dx` over `0 <= lo < hi <= ∞` (positive half-line).
pub fn gaussian_power(q: f64, mean: f64, stdev: f64, lo: f64, hi: f64) -> f64 {
    if !(lo < hi) {
        return 0.0;
    }
    let za = (lo - mean) / stdev;
    let zb = if hi.is_finite() { (hi - mean) / stdev } else { f64::INFINITY };
    if q == 0.0 {
        return normal_interval(za, zb);
    }
    if q == 1.0 {
        let pb = if zb.is_finite() { normal_pdf(zb) } else { 0.0 };
        return mean * normal_interval(za, zb) + stdev * (normal_pdf(za) - pb);
    }
    let cap = mean.abs() + 40.0 * stdev;
    let hi = hi.min(cap);
    if lo >= hi {
        return 0.0;
    }
    let f = |x: f64| x.powf(q) * normal_pdf((x - mean) / stdev) / stdev;
    // split at the mode so the bisection starts on the bulk
    let mut pts = vec![lo];
    if mean > lo && mean < hi {
        pts.push(mean);
    }
    pts.push(hi);
    pts.windows(2)
        .map(|w| quad::integrate(f, w[0], w[1], 1e-300, 1e-14).value)
        .sum()
}

/// Terms `c · u^k · e^{-a u}` with `u = ln i`, used to write an atom's
/// contribution `|x_i|^q w_i` as a smooth function of the index.
#[derive(Debug, Clone, Copy)]
pub struct LogTerm {
    pub coef: f64,
    pub k: f64,
    pub a: f64,
}

impl LogTerm {
    fn eval(&self, u: f64) -> f64 {
        let pow = if self.k == 0.0 { 1.0 } else { u.powf(self.k) };
        self.coef * pow * (-self.a * u).exp()
    }
}

fn differentiate(terms: &[LogTerm]) -> Vec<LogTerm> {
    let mut out = Vec::with_capacity(terms.len() * 2);
    for t in terms {
        if t.k != 0.0 {
            out.push(LogTerm { coef: t.coef * t.k, k: t.k - 1.0, a: t.a + 1.0 });
        }
        out.push(LogTerm { coef: -t.coef * t.a, k: t.k, a: t.a + 1.0 });
    }
    out
}

fn eval_all(terms: &[LogTerm], u: f64) -> f64 {
    terms.iter().map(|t| t.eval(u)).sum()
}

/// `Σ_{i >= i0} h(i)` where `h(i) = Σ terms(ln i)`, summing explicitly up to
/// an Euler–Maclaurin cut and closing the tail with the integral plus three
/// Bernoulli corrections. Requires every `a > 1` (convergent series).
pub fn index_tail_sum(terms: &[LogTerm], term_value: impl Fn(u64) -> f64, i0: u64) -> f64 {
    const CUT: u64 = 2000;
    let n = i0.max(CUT);
    let head: Vec<f64> = (i0..n).map(&term_value).collect();
    let head = crate::stats::pairwise_sum(&head);
    let l = (n as f64).ln();
    let mut integral = 0.0;
    for t in terms {
        let b = t.a - 1.0;
        let part = if t.k == 0.0 {
            (-b * l).exp() / b
        } else {
            tempered_power(t.k + 1.0, b, l, f64::INFINITY).value().unwrap_or(f64::NAN)
        };
        integral += t.coef * part;
    }
    let d1 = differentiate(terms);
    let d3 = differentiate(&differentiate(&d1));
    let d5 = differentiate(&differentiate(&d3));
    let tail = integral + 0.5 * eval_all(terms, l) - eval_all(&d1, l) / 12.0 + eval_all(&d3, l) / 720.0
        - eval_all(&d5, l) / 30240.0;
    head + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_power_law_closed_forms() {
        // ∫_1^∞ x^{-1.5} dx = 2
        assert!((tempered_power(-0.5, 0.0, 1.0, f64::INFINITY).value().unwrap() - 2.0).abs() < 1e-14);
        assert!(tempered_power(0.0, 0.0, 0.0, 1.0).is_divergent());
        assert!(tempered_power(-0.5, 1.0, 0.0, 1.0).is_divergent());
    }

    #[test]
    fn exponential_integral_matches_gamma() {
        // ∫_0^∞ x^{s-1} e^{-λx} = Γ(s) λ^{-s}; Γ(2.5) = 1.329340388179137
        let v = tempered_power(2.5, 2.0, 0.0, f64::INFINITY).value().unwrap();
        assert!((v - 1.329_340_388_179_137 * 2f64.powf(-2.5)).abs() < 1e-13);
        // ∫_1^∞ e^{-x} dx = e^{-1}
        let v = tempered_power(1.0, 1.0, 1.0, f64::INFINITY).value().unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn gaussian_moments() {
        let m0 = gaussian_power(0.0, 0.0, 1.0, 0.0, f64::INFINITY);
        assert!((m0 - 0.5).abs() < 1e-15);
        let m2 = gaussian_power(2.0, 0.0, 1.0, 0.0, f64::INFINITY);
        assert!((m2 - 0.5).abs() < 1e-13);
        let m1 = gaussian_power(1.0, 0.0, 1.0, 0.0, f64::INFINITY);
        assert!((m1 - 1.0 / SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn basel_tail_via_euler_maclaurin() {
        let terms = [LogTerm { coef: 1.0, k: 0.0, a: 2.0 }];
        let s = index_tail_sum(&terms, |i| 1.0 / (i as f64 * i as f64), 1);
        assert!((s - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        let s = index_tail_sum(&terms, |i| 1.0 / (i as f64 * i as f64), 5000);
        // ψ'(5000) = 1/5000 + 1/(2·5000²) + 1/(6·5000³) - ...
        let expect = 1.0 / 5000.0 + 0.5 / 5000f64.powi(2) + 1.0 / (6.0 * 5000f64.powi(3));
        assert!((s - expect).abs() < 1e-18);
    }
}
