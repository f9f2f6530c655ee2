use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::levy_measures::{LevyModel, SIDES};

/// Dyadic levels kept in the Takagi–Landsberg source term.
pub const HOLDER_LEVELS: u32 = 48;

/// `Φ(t, y, z)` of the integral generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiSpec {
    /// `c0 + cy·y + cz·z`.
    Affine { c0: f64, cy: f64, cz: f64 },
    /// `scale · tanh(y + z)`.
    Tanh { scale: f64 },
}

impl PhiSpec {
    pub fn eval(&self, y: f64, z: f64) -> f64 {
        match *self {
            PhiSpec::Affine { c0, cy, cz } => c0 + cy * y + cz * z,
            PhiSpec::Tanh { scale } => scale * (y + z).tanh(),
        }
    }

    /// Lipschitz constants in `y` and in `z`.
    pub fn lipschitz(&self) -> (f64, f64) {
        match *self {
            PhiSpec::Affine { cy, cz, .. } => (cy.abs(), cz.abs()),
            PhiSpec::Tanh { scale } => (scale.abs(), scale.abs()),
        }
    }
}

/// Which jumps the integral generator integrates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegralScope {
    /// The full measure `ν` (the limit generator `f`).
    Full,
    /// `ν` restricted to the problem's level, `{|z| >= ε}` (the generator `f^n`).
    #[default]
    Level,
}

/// `U(z) = u(t, x + z) − u(t, x)` sampled at quadrature offsets.
#[derive(Debug, Clone, Copy)]
pub struct JumpIntegrand<'a> {
    pub offsets: &'a [f64],
    /// Quadrature weights of the measure the generator integrates against.
    pub weights: &'a [f64],
    pub values: &'a [f64],
    /// Mass of that measure at offsets too small to resolve, where `U ≈ 0`.
    pub rest_mass: f64,
}

impl JumpIntegrand<'_> {
    pub fn empty() -> JumpIntegrand<'static> {
        JumpIntegrand { offsets: &[], weights: &[], values: &[], rest_mass: 0.0 }
    }

    /// `∫ φ(U(z)) m(dz)`.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let s: f64 = self.weights.iter().zip(self.values).map(|(w, &u)| w * phi(u)).sum();
        s + self.rest_mass * phi(0.0)
    }

    /// `(∫ U² m(dz))^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.integrate(|u| u * u).sqrt()
    }
}

type CustomFn = dyn Fn(f64, f64, &JumpIntegrand) -> f64 + Send + Sync;

/// User generator `f(t, y, U)` with a declared Lipschitz constant.
#[derive(Clone)]
pub struct CustomGenerator {
    pub f: Arc<CustomFn>,
    pub lipschitz: f64,
}

impl fmt::Debug for CustomGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomGenerator(L={})", self.lipschitz)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Zero,
    /// `a·y + b`.
    Linear { a: f64, b: f64 },
    /// `∫ Φ(t, y, U(z)) δ(z) ν(dz)` with `δ(z) = min(1, |z|^β̄)`.
    Integral {
        phi: PhiSpec,
        beta_bar: f64,
        #[serde(default)]
        scope: IntegralScope,
    },
    /// `inner` with time frozen at `t_i = iT/steps` on `[t_i, t_{i+1})`.
    TimeDiscretized {
        inner: Box<GeneratorSpec>,
        steps: usize,
        /// Declared Hölder exponent of `inner` in time; defaults to the
        /// exponent of a Hölder source, else 1.
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// `A · Σ_k 2^{-kα} tri(2^k t/T)`, an `α`-Hölder function of time only.
    HolderSource { amplitude: f64, alpha: f64 },
    #[serde(skip)]
    Custom(CustomGenerator),
}

/// Distance to the nearest integer.
fn tri(x: f64) -> f64 {
    let f = x - x.floor();
    f.min(1.0 - f)
}

/// `∫_0^x tri`.
fn tri_antiderivative(x: f64) -> f64 {
    let n = x.floor();
    let f = x - n;
    let part = if f <= 0.5 { 0.5 * f * f } else { 0.25 - 0.5 * (1.0 - f) * (1.0 - f) };
    0.25 * n + part
}

impl GeneratorSpec {
    pub fn custom(f: impl Fn(f64, f64, &JumpIntegrand) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Self {
        GeneratorSpec::Custom(CustomGenerator { f: Arc::new(f), lipschitz })
    }

    pub fn time_discretized(inner: GeneratorSpec, steps: usize) -> Self {
        GeneratorSpec::TimeDiscretized { inner: Box::new(inner), steps, alpha: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::Zero => "zero",
            GeneratorSpec::Linear { .. } => "linear",
            GeneratorSpec::Integral { .. } => "integral",
            GeneratorSpec::TimeDiscretized { .. } => "time-discretized",
            GeneratorSpec::HolderSource { .. } => "holder-source",
            GeneratorSpec::Custom(_) => "custom",
        }
    }

    pub fn validate(&self, model: &LevyModel) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            GeneratorSpec::Zero | GeneratorSpec::Linear { .. } => Ok(()),
            GeneratorSpec::Integral { beta_bar, .. } => {
                if !(*beta_bar > model.bg_index()) {
                    return bad(format!("beta_bar must exceed the BG index {}", model.bg_index()));
                }
                Ok(())
            }
            GeneratorSpec::TimeDiscretized { inner, steps, alpha } => {
                if *steps == 0 {
                    return bad("time-discretized generator needs steps >= 1".into());
                }
                if let Some(a) = alpha {
                    if !(*a > 0.0 && *a <= 1.0) {
                        return bad(format!("Hölder exponent must be in (0, 1], got {a}"));
                    }
                }
                inner.validate(model)
            }
            GeneratorSpec::HolderSource { alpha, .. } => {
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return bad(format!("Hölder exponent must be in (0, 1], got {alpha}"));
                }
                Ok(())
            }
            GeneratorSpec::Custom(c) => {
                if !(c.lipschitz >= 0.0) {
                    return bad("declared Lipschitz constant must be >= 0".into());
                }
                Ok(())
            }
        }
    }

    /// `∫ δ ν` and `∫ δ² ν` over the generator's integration domain (upper
    /// bounds where an atom sits at `|z| = 1`).
    fn delta_masses(model: &LevyModel, beta_bar: f64, scope: IntegralScope, eps: f64) -> Result<(f64, f64)> {
        let near = |p: f64| -> Result<f64> {
            let v = match scope {
                IntegralScope::Full => model.partial_moment(p, 1.0)?.value(),
                IntegralScope::Level => SIDES
                    .iter()
                    .map(|&s| model.side_moment(s, p, eps.min(1.0), 1.0).value())
                    .sum::<Option<f64>>(),
            };
            v.ok_or_else(|| Error::Domain(format!("∫|z|^{p} ν(dz) diverges near 0")))
        };
        let far = model.tail_mass(1.0)?;
        Ok((near(beta_bar)? + far, near(2.0 * beta_bar)? + far))
    }

    /// Lipschitz constant `L_f` in `(y, U)` with `U` measured in `L²(ν^ε)`.
    pub fn lipschitz(&self, model: &LevyModel, eps: f64) -> Result<f64> {
        Ok(match self {
            GeneratorSpec::Zero | GeneratorSpec::HolderSource { .. } => 0.0,
            GeneratorSpec::Linear { a, .. } => a.abs(),
            GeneratorSpec::Integral { phi, beta_bar, scope } => {
                let (ly, lz) = phi.lipschitz();
                let (m1, m2) = Self::delta_masses(model, *beta_bar, *scope, eps)?;
                ly * m1 + lz * m2.sqrt()
            }
            GeneratorSpec::TimeDiscretized { inner, .. } => inner.lipschitz(model, eps)?,
            GeneratorSpec::Custom(c) => c.lipschitz,
        })
    }

    /// Hölder exponent in time used for `c_n` of a time-discretized generator.
    pub fn holder_exponent(&self) -> f64 {
        match self {
            GeneratorSpec::HolderSource { alpha, .. } => *alpha,
            GeneratorSpec::TimeDiscretized { inner, alpha, .. } => alpha.unwrap_or_else(|| inner.holder_exponent()),
            _ => 1.0,
        }
    }

    /// True when `f` does not depend on `(y, U)`.
    pub fn is_source_only(&self) -> bool {
        match self {
            GeneratorSpec::Zero | GeneratorSpec::HolderSource { .. } => true,
            GeneratorSpec::TimeDiscretized { inner, .. } => inner.is_source_only(),
            _ => false,
        }
    }

    /// True when `f` reads `U`.
    pub fn uses_jump_integrand(&self) -> bool {
        match self {
            GeneratorSpec::Integral { .. } | GeneratorSpec::Custom(_) => true,
            GeneratorSpec::TimeDiscretized { inner, .. } => inner.uses_jump_integrand(),
            _ => false,
        }
    }

    /// Integral weights for `U`: `Some((β̄, scope))` for `δ ν`, `None` for `ν^ε`.
    pub(crate) fn integrand_weight(&self) -> Option<(f64, IntegralScope)> {
        match self {
            GeneratorSpec::Integral { beta_bar, scope, .. } => Some((*beta_bar, *scope)),
            GeneratorSpec::TimeDiscretized { inner, .. } => inner.integrand_weight(),
            _ => None,
        }
    }

    /// `f(t, y, U)` at one instant.
    pub fn eval(&self, t: f64, horizon: f64, y: f64, u: &JumpIntegrand) -> f64 {
        match self {
            GeneratorSpec::Zero => 0.0,
            GeneratorSpec::Linear { a, b } => a * y + b,
            GeneratorSpec::Integral { phi, .. } => u.integrate(|z| phi.eval(y, z)),
            GeneratorSpec::TimeDiscretized { inner, steps, .. } => {
                let dt = horizon / *steps as f64;
                let i = ((t / dt).floor() as usize).min(steps - 1);
                inner.eval(i as f64 * dt, horizon, y, u)
            }
            GeneratorSpec::HolderSource { amplitude, alpha } => {
                let x = t / horizon;
                amplitude * (0..=HOLDER_LEVELS).map(|k| 2f64.powf(-(k as f64) * alpha) * tri(x * 2f64.powi(k as i32))).sum::<f64>()
            }
            GeneratorSpec::Custom(c) => (c.f)(t, y, u),
        }
    }

    /// `∫_{t0}^{t1} f(s, y, U) ds` with `(y, U)` frozen. Exact in time for
    /// every built-in kind.
    pub fn step_integral(&self, t0: f64, t1: f64, horizon: f64, y: f64, u: &JumpIntegrand) -> f64 {
        match self {
            GeneratorSpec::HolderSource { amplitude, alpha } => {
                let mut s = 0.0;
                for k in 0..=HOLDER_LEVELS {
                    let p = 2f64.powi(k as i32);
                    let part = tri_antiderivative(p * t1 / horizon) - tri_antiderivative(p * t0 / horizon);
                    s += 2f64.powf(-(k as f64) * alpha) * part * horizon / p;
                }
                amplitude * s
            }
            GeneratorSpec::TimeDiscretized { inner, steps, .. } => {
                let dt = horizon / *steps as f64;
                let mut s = 0.0;
                let mut a = t0;
                while a < t1 {
                    let i = ((a / dt).floor() as usize).min(steps - 1);
                    // the frozen cell containing a; guard against a landing on its right edge
                    let i = if (i + 1) as f64 * dt <= a && i + 1 < *steps { i + 1 } else { i };
                    let b = (((i + 1) as f64) * dt).min(t1);
                    let b = if i + 1 == *steps { t1 } else { b };
                    s += (b - a) * inner.eval(i as f64 * dt, horizon, y, u);
                    a = b;
                }
                s
            }
            GeneratorSpec::Zero => 0.0,
            _ => (t1 - t0) * self.eval(t0, horizon, y, u),
        }
    }

    /// Exact flow of a linear generator over a step of length `dt`:
    /// `y = e^{a dt} · E + (b/a)(e^{a dt} − 1)`.
    pub fn affine_flow(&self, dt: f64) -> Option<(f64, f64)> {
        match self {
            GeneratorSpec::Linear { a, b } => {
                let m = (a * dt).exp();
                let add = if *a == 0.0 { b * dt } else { b * (a * dt).exp_m1() / a };
                Some((m, add))
            }
            _ => None,
        }
    }
}

/// Generator-gap constant `c_n` for the integral and time-discretized kinds.
pub fn generator_gap_cn(model: &LevyModel, spec: &GeneratorSpec, n: u64, horizon: f64) -> Result<f64> {
    match spec {
        GeneratorSpec::Integral { beta_bar, .. } => {
            if n == 0 {
                return domain("level n must be >= 1");
            }
            let eps = 1.0 / n as f64;
            let m1 = model.partial_moment(*beta_bar, eps)?;
            let m2 = model.partial_moment(2.0 * beta_bar, eps)?;
            match (m1.value(), m2.value()) {
                (Some(a), Some(b)) => Ok(a.max(b.sqrt())),
                _ => domain(format!("beta_bar = {beta_bar} does not exceed the BG index")),
            }
        }
        GeneratorSpec::TimeDiscretized { steps, .. } => Ok((horizon / *steps as f64).powf(spec.holder_exponent())),
        other => domain(format!("c_n is undefined for the {} generator", other.name())),
    }
}
