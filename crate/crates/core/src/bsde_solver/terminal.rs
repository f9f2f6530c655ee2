use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Lipschitz terminal function `g`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Terminal {
    Constant { value: f64 },
    Identity,
    /// `min(|x|, cap)`.
    AbsCapped { cap: f64 },
    /// `max(x - strike, 0)`.
    Call { strike: f64 },
    #[serde(skip)]
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, lipschitz: f64 },
}

impl Terminal {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Self {
        Terminal::Custom { f: Arc::new(f), lipschitz }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Terminal::Constant { value } => *value,
            Terminal::Identity => x,
            Terminal::AbsCapped { cap } => x.abs().min(*cap),
            Terminal::Call { strike } => (x - strike).max(0.0),
            Terminal::Custom { f, .. } => f(x),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Terminal::Constant { .. } => 0.0,
            Terminal::Identity | Terminal::AbsCapped { .. } | Terminal::Call { .. } => 1.0,
            Terminal::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// Spot check of the declared Lipschitz constant on `pairs` points of `[-r, r]`.
    pub fn check_lipschitz(&self, r: f64, pairs: usize) -> bool {
        let l = self.lipschitz();
        let pts: Vec<f64> = (0..pairs).map(|k| -r + 2.0 * r * ((k as f64 * 0.618_033_988_75) % 1.0)).collect();
        pts.windows(2).all(|w| {
            let d = (self.eval(w[0]) - self.eval(w[1])).abs();
            d <= l * (w[0] - w[1]).abs() * (1.0 + 1e-12) + 1e-15
        })
    }
}

impl fmt::Debug for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Constant { value } => write!(f, "Constant({value})"),
            Terminal::Identity => write!(f, "Identity"),
            Terminal::AbsCapped { cap } => write!(f, "AbsCapped({cap})"),
            Terminal::Call { strike } => write!(f, "Call({strike})"),
            Terminal::Custom { lipschitz, .. } => write!(f, "Custom(L={lipschitz})"),
        }
    }
}
