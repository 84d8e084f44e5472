//! Term-by-term Borel transform of formal series into germs at `p = 0`.
//!
//! Convention: `B(x^{-s}) = p^{s-1} / Gamma(s)`, the standard inverse Laplace
//! transform, so that `L(B(x^{-s})) = x^{-s}`.

use crate::error::{Error, Result};
use crate::scalar::{is_nonpositive_integer, C64};
use crate::series::FormalSeries;
use crate::special::rgamma;

/// Default fraction of the estimated radius inside which germs are evaluated.
pub const SAFETY_FRACTION: f64 = 0.5;

/// `p^{leading_exponent} sum_j taylor[j] p^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BorelGerm {
    pub leading_exponent: C64,
    /// `taylor[j][c]`.
    pub taylor: Vec<Vec<C64>>,
    /// Estimated radius of convergence (`inf` when the coefficients terminate).
    pub radius: f64,
}

/// Value of a germ with the bound on the neglected tail.
#[derive(Clone, Debug, PartialEq)]
pub struct GermValue {
    pub value: Vec<C64>,
    pub error_bound: f64,
}

fn coeff_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Ratio test over the last quarter of the coefficients, root test as fallback.
pub fn estimate_radius(taylor: &[Vec<C64>]) -> f64 {
    let norms: Vec<f64> = taylor.iter().map(|v| coeff_norm(v)).collect();
    let last = match norms.iter().rposition(|&a| a > 0.0) {
        None => return f64::INFINITY,
        Some(i) => i,
    };
    if last + 1 < norms.len() && norms.len() >= 4 && norms[norms.len() - norms.len() / 4..].iter().all(|&a| a == 0.0) {
        return f64::INFINITY;
    }
    let start = norms.len() - (norms.len() / 4).max(2).min(norms.len() - 1);
    let ratios: Vec<f64> = (start..norms.len() - 1)
        .filter(|&j| norms[j] > 0.0 && norms[j + 1] > 0.0)
        .map(|j| norms[j] / norms[j + 1])
        .collect();
    if !ratios.is_empty() {
        let log_mean = ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64;
        return log_mean.exp();
    }
    let j = last.max(1);
    norms[last].powf(-1.0 / j as f64)
}

/// Borel transform of a formal series.
///
/// Errors when a non-zero coefficient sits at a power `s` that is a non-positive
/// integer (`x^0`: its Borel image is a Dirac mass, not a function).
pub fn borel_transform(series: &FormalSeries<C64>) -> Result<BorelGerm> {
    let s0 = series.leading_offset + series.first_power as f64;
    let mut taylor = Vec::with_capacity(series.coeffs.len());
    let mut skip = 0;
    for (i, c) in series.coeffs.iter().enumerate() {
        let s = s0 + i as f64;
        if is_nonpositive_integer(s) {
            if c.iter().any(|z| z.norm() != 0.0) {
                return Err(Error::DiracTerm { power: format!("{s}") });
            }
            if taylor.is_empty() {
                skip += 1;
                continue;
            }
        }
        let r = rgamma(s);
        taylor.push(c.iter().map(|z| z * r).collect());
    }
    if taylor.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    let radius = estimate_radius(&taylor);
    Ok(BorelGerm { leading_exponent: s0 + skip as f64 - 1.0, taylor, radius })
}

impl BorelGerm {
    pub fn dim(&self) -> usize {
        self.taylor[0].len()
    }

    /// Evaluates the truncated germ with the default safety fraction.
    pub fn eval(&self, p: C64) -> Result<GermValue> {
        self.eval_with(p, SAFETY_FRACTION)
    }

    /// Evaluates the truncated germ; `|p|` must stay below `safety * radius`.
    pub fn eval_with(&self, p: C64, safety: f64) -> Result<GermValue> {
        let modulus = p.norm();
        if !(modulus < safety * self.radius) {
            return Err(Error::OutsideDisk { modulus, radius: self.radius });
        }
        let n = self.dim();
        let lead = if modulus == 0.0 {
            if self.leading_exponent == C64::new(0.0, 0.0) {
                C64::new(1.0, 0.0)
            } else if self.leading_exponent.re > 0.0 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(f64::INFINITY, 0.0)
            }
        } else {
            p.powc(self.leading_exponent)
        };
        let mut value = vec![C64::new(0.0, 0.0); n];
        let mut pj = C64::new(1.0, 0.0);
        let mut last_term = 0.0;
        for t in &self.taylor {
            for (v, c) in value.iter_mut().zip(t) {
                *v += c * pj;
            }
            last_term = coeff_norm(t) * pj.norm();
            pj *= p;
        }
        for v in &mut value {
            *v *= lead;
        }
        let q = modulus / self.radius;
        let error_bound = if self.radius.is_infinite() { 0.0 } else { last_term * lead.norm() * q / (1.0 - q) };
        Ok(GermValue { value, error_bound })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::factorial;
    use std::f64::consts::PI;

    fn scalar_series(offset: f64, first_power: usize, coeffs: &[f64]) -> FormalSeries<C64> {
        FormalSeries {
            leading_offset: C64::new(offset, 0.0),
            first_power,
            coeffs: coeffs.iter().map(|c| vec![C64::new(*c, 0.0)]).collect(),
            trusted_order: coeffs.len(),
        }
    }

    #[test]
    fn inverse_x_is_constant_one() {
        let g = borel_transform(&scalar_series(0.0, 1, &[1.0])).unwrap();
        assert_eq!(g.leading_exponent, C64::new(0.0, 0.0));
        assert_eq!(g.taylor[0][0], C64::new(1.0, 0.0));
        assert_eq!(g.eval(C64::new(0.0, 0.0)).unwrap().value[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn factorial_series_gives_geometric_germ() {
        let c: Vec<f64> = (0..30).map(factorial).collect();
        let g = borel_transform(&scalar_series(0.0, 1, &c)).unwrap();
        for t in &g.taylor {
            assert!((t[0].re - 1.0).abs() < 1e-12);
        }
        assert!((g.radius - 1.0).abs() < 1e-10);
        let v = g.eval(C64::new(0.25, 0.0)).unwrap();
        let err = (v.value[0] - 4.0 / 3.0).norm();
        assert!(err <= v.error_bound * (1.0 + 1e-9) + 1e-15, "{err} vs {}", v.error_bound);
    }

    #[test]
    fn half_power() {
        let g = borel_transform(&scalar_series(0.5, 0, &[1.0])).unwrap();
        assert!((g.leading_exponent.re + 0.5).abs() < 1e-15);
        let v = g.eval(C64::new(0.09, 0.0)).unwrap().value[0];
        assert!((v.re - 1.0 / (0.3 * PI.sqrt())).abs() < 1e-13);
    }

    #[test]
    fn dirac_term_rejected() {
        assert!(matches!(borel_transform(&scalar_series(0.0, 0, &[1.0])), Err(Error::DiracTerm { .. })));
    }

    #[test]
    fn outside_disk() {
        let c: Vec<f64> = (0..20).map(factorial).collect();
        let g = borel_transform(&scalar_series(0.0, 1, &c)).unwrap();
        assert!(matches!(g.eval(C64::new(0.6, 0.0)), Err(Error::OutsideDisk { .. })));
    }
}
