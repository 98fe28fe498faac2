//! Normalized branch charts.
//!
//! A chart is an increasing C^{1+} diffeomorphism `h` of `[0, 1]` with
//! `h(0) = 0` and `h(1) = 1`. Each branch of a [`LorenzMap`](crate::LorenzMap)
//! is a power law composed with a chart in the rescaled distance to `c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Chart {
    /// `h(u) = u`.
    #[default]
    Affine,
    /// `h(u) = u + kappa u (1 - u)` with `|kappa| < 1`.
    Quadratic { kappa: f64 },
}

impl Chart {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Chart::Affine => Ok(()),
            Chart::Quadratic { kappa } => {
                if kappa.is_finite() && kappa.abs() < 1.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter {
                        name: "kappa",
                        value: kappa,
                        reason: "chart needs |kappa| < 1",
                    })
                }
            }
        }
    }

    pub fn is_affine(&self) -> bool {
        match *self {
            Chart::Affine => true,
            Chart::Quadratic { kappa } => kappa == 0.0,
        }
    }

    fn kappa(&self) -> f64 {
        match *self {
            Chart::Affine => 0.0,
            Chart::Quadratic { kappa } => kappa,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let k = self.kappa();
        u + k * u * (1.0 - u)
    }

    pub fn deriv(&self, u: f64) -> f64 {
        1.0 + self.kappa() * (1.0 - 2.0 * u)
    }

    /// `(h(a) - h(b)) / (a - b)`, equal to `h'(a)` when `a = b`.
    pub fn secant(&self, a: f64, b: f64) -> f64 {
        1.0 + self.kappa() * (1.0 - a - b)
    }

    /// `ln h(u)` for `u > 0`, exact down to subnormal `u`.
    pub fn ln_eval(&self, u: f64) -> f64 {
        u.ln() + self.secant(u, 0.0).ln()
    }

    /// `ln h(exp(ln_u))` for `ln_u` far below the double range.
    pub fn ln_eval_from_ln(&self, ln_u: f64) -> f64 {
        ln_u + self.secant(ln_u.exp(), 0.0).ln()
    }

    pub fn inverse(&self, y: f64) -> f64 {
        let k = self.kappa();
        if k == 0.0 {
            return y;
        }
        // root of k u^2 - (1 + k) u + y = 0 in [0, 1], cancellation-free form
        let b = 1.0 + k;
        let disc = (b * b - 4.0 * k * y).max(0.0);
        2.0 * y / (b + disc.sqrt())
    }

    /// `ln` of the chart's inverse at `exp(ln_y)`.
    pub fn ln_inverse_from_ln(&self, ln_y: f64) -> f64 {
        let y = ln_y.exp();
        let u = self.inverse(y);
        ln_y - self.secant(u, 0.0).ln()
    }

    /// Lipschitz constant of `ln h'` on `[0, 1]`.
    pub fn ln_deriv_lipschitz(&self) -> f64 {
        let k = self.kappa().abs();
        2.0 * k / (1.0 - k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_inverse_round_trips() {
        let h = Chart::Quadratic { kappa: -0.3 };
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert!((h.inverse(h.eval(u)) - u).abs() < 1e-15);
        }
        assert_eq!(h.eval(0.0), 0.0);
        assert_eq!(h.eval(1.0), 1.0);
    }

    #[test]
    fn secant_matches_difference() {
        let h = Chart::Quadratic { kappa: 0.4 };
        let (a, b) = (0.71, 0.23);
        let direct = (h.eval(a) - h.eval(b)) / (a - b);
        assert!((h.secant(a, b) - direct).abs() < 1e-14);
    }

    #[test]
    fn log_forms_survive_underflow() {
        let h = Chart::Quadratic { kappa: 0.5 };
        let ln_u = -2000.0;
        assert!((h.ln_eval_from_ln(ln_u) - (ln_u + 1.5f64.ln())).abs() < 1e-12);
        assert!((h.ln_inverse_from_ln(ln_u) - (ln_u - 1.5f64.ln())).abs() < 1e-12);
    }
}
