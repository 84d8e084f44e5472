//! Shipped example systems with closed-form oracles.
//!
//! * `exa1`: `f' = -f - f/(2x) + 1/x - 1/(2x^2)`, general solution
//!   `1/x + C x^{-1/2} e^{-x}`; Borel data `Y_0 = 1`, `Y_1 = p^{-1/2}/Gamma(1/2)`,
//!   vanishing Stokes constant.
//! * `eqpert`: the same equation with forcing `(1 + eps)/x`. It is linear, so
//!   `Y_0 = 1 + eps (1 - p)^{-1/2}` solves its convolution equation; the branch
//!   point at `p = 1` has exponent `beta - 1 = -1/2`.
//! * `quad`: `y' = -y - y/(2x) + x^-2 + y^2`, a nonlinear case without closed form.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::C64;
use crate::special::rgamma;
use crate::system::{load_system, SystemSpec};

const EXA1_JSON: &str = include_str!("../../../cases/exa1.json");
const EQPERT_JSON: &str = include_str!("../../../cases/eqpert.json");
const QUAD_JSON: &str = include_str!("../../../cases/quad.json");

/// Names accepted by [`case`].
pub const CASE_NAMES: [&str; 3] = ["exa1", "eqpert", "quad"];

/// Closed-form knowledge attached to a shipped system.
#[derive(Clone, Debug, PartialEq)]
pub enum Oracle {
    /// Exact solution family and exact Borel data.
    Exa1,
    /// Exact `Y_0`, `Y_1` (linear equation); no closed-form solution family.
    Eqpert {
        eps: f64,
    },
    None,
}

#[derive(Clone, Debug)]
pub struct OracleCase {
    pub name: String,
    pub spec: SystemSpec,
    pub oracle: Oracle,
    /// Known misprints in the classical statement of the example.
    pub errata: Vec<&'static str>,
}

const EXA1_ERRATA: &str = "the inverse Laplace transform of 1/x is the constant 1 (not p), and the \
    level-one Borel function is p^{-1/2}/Gamma(1/2) supported on p > 0 (not (p-1)^{-1/2} H(1-p))";
const EQPERT_ERRATA: &str = "only the exponent -1/2 of the singularity at p = 1 is convention independent; \
    under B(x^-n) = p^{n-1}/Gamma(n) the Borel transform of the formal solution is 1 + eps (1-p)^{-1/2}";

/// Loads a shipped case by name (`eqpert` with its default `eps = 0.1`).
pub fn case(name: &str) -> Result<OracleCase> {
    let c = match name {
        "exa1" => OracleCase {
            name: name.into(),
            spec: load_system(EXA1_JSON)?,
            oracle: Oracle::Exa1,
            errata: vec![EXA1_ERRATA],
        },
        "eqpert" => {
            let spec = load_system(EQPERT_JSON)?;
            let eps = spec.f0[&1][0].re - 1.0;
            OracleCase { name: name.into(), spec, oracle: Oracle::Eqpert { eps }, errata: vec![EQPERT_ERRATA] }
        }
        "quad" => OracleCase { name: name.into(), spec: load_system(QUAD_JSON)?, oracle: Oracle::None, errata: vec![] },
        _ => return Err(Error::UnknownCase(name.into())),
    };
    c.self_check()?;
    Ok(c)
}

/// The perturbed example with forcing `(1 + eps)/x`.
pub fn eqpert(eps: f64) -> Result<OracleCase> {
    let mut c = case("eqpert")?;
    c.spec.f0.insert(1, vec![C64::new(1.0 + eps, 0.0)]);
    c.oracle = Oracle::Eqpert { eps };
    c.self_check()?;
    Ok(c)
}

impl OracleCase {
    /// Checks the closed forms against the equation at sample points.
    pub fn self_check(&self) -> Result<()> {
        match self.oracle {
            Oracle::Exa1 => {
                for &x in &[1.0, 2.5, 7.0] {
                    for &cc in &[0.0, 0.7] {
                        let res = self.ode_residual(cc, C64::new(x, 0.0))?;
                        if res > 1e-12 {
                            return Err(Error::Fit(format!("{}: oracle residual {res:e} at x = {x}", self.name)));
                        }
                    }
                }
                Ok(())
            }
            Oracle::Eqpert { eps } => {
                // convolution equation (1 - p) Y = F0 - beta int_0^p Y at sample points
                for &p in &[C64::new(0.3, 0.2), C64::new(1.7, -0.4), C64::new(0.5, 0.0)] {
                    let y = self.oracle_y0(p)?;
                    let int = p + 2.0 * eps * (1.0 - (1.0 - p).sqrt());
                    let lhs = (1.0 - p) * y + 0.5 * int;
                    let rhs = 1.0 + eps - 0.5 * p;
                    if (lhs - rhs).norm() > 1e-13 {
                        return Err(Error::Fit(format!("{}: Borel oracle fails at p = {p}", self.name)));
                    }
                }
                Ok(())
            }
            Oracle::None => Ok(()),
        }
    }

    /// Exact solution `y(x)` with trans-series constant `c`.
    pub fn oracle_eval(&self, c: f64, x: C64) -> Result<C64> {
        match self.oracle {
            Oracle::Exa1 => {
                if x.norm() == 0.0 {
                    return Err(Error::InvalidArgument("x = 0".into()));
                }
                Ok(1.0 / x + c * x.powf(-0.5) * (-x).exp())
            }
            _ => Err(Error::InvalidArgument(format!("case {} has no closed-form solution family", self.name))),
        }
    }

    /// `|y' - rhs(x, y)|` of the exact solution, derivative taken analytically.
    fn ode_residual(&self, c: f64, x: C64) -> Result<f64> {
        let y = self.oracle_eval(c, x)?;
        let dy = -1.0 / (x * x) + c * (-0.5 * x.powf(-1.5) - x.powf(-0.5)) * (-x).exp();
        let rhs = -y - y / (2.0 * x) + 1.0 / x - 1.0 / (2.0 * x * x);
        Ok((dy - rhs).norm())
    }

    /// Exact `Y_0(p)` (principal branch, cut along `p > 1`).
    pub fn oracle_y0(&self, p: C64) -> Result<C64> {
        match self.oracle {
            Oracle::Exa1 => Ok(C64::new(1.0, 0.0)),
            Oracle::Eqpert { eps } => Ok(1.0 + eps / (1.0 - p).sqrt()),
            Oracle::None => Err(self.no_borel()),
        }
    }

    /// Exact branch `Y_0^+` (`sigma = 1`) or `Y_0^-` (`sigma = -1`) at real `t > 0`.
    pub fn oracle_y0_branch(&self, t: f64, sigma: f64) -> Result<C64> {
        self.oracle_y0(C64::new(t, sigma * 1e-300))
    }

    /// Exact `Y_1(p) = p^{beta-1}/Gamma(beta)` (both examples are linear).
    pub fn oracle_y1(&self, p: C64) -> Result<C64> {
        match self.oracle {
            Oracle::Exa1 | Oracle::Eqpert { .. } => Ok(p.powf(-0.5) * rgamma(C64::new(0.5, 0.0))),
            Oracle::None => Err(self.no_borel()),
        }
    }

    /// Exact `Y_k` for `k >= 2` (zero for linear equations).
    pub fn oracle_yk(&self, k: usize, p: C64) -> Result<C64> {
        match k {
            0 => self.oracle_y0(p),
            1 => self.oracle_y1(p),
            _ if self.spec.is_linear() && !matches!(self.oracle, Oracle::None) => Ok(C64::new(0.0, 0.0)),
            _ => Err(self.no_borel()),
        }
    }

    /// Exact `S_beta` in `Y_0^- = Y_0^+ + S_beta Y_1(. - 1)`.
    pub fn oracle_s_beta(&self) -> Result<C64> {
        match self.oracle {
            Oracle::Exa1 => Ok(C64::new(0.0, 0.0)),
            Oracle::Eqpert { eps } => Ok(C64::new(0.0, -2.0 * eps * PI.sqrt())),
            Oracle::None => Err(self.no_borel()),
        }
    }

    /// Exponent of the singularity of `Y_0` at `p = 1`.
    pub fn oracle_singular_exponent(&self) -> Option<f64> {
        match self.oracle {
            Oracle::Eqpert { .. } => Some(self.spec.beta().re - 1.0),
            _ => None,
        }
    }

    fn no_borel(&self) -> Error {
        Error::InvalidArgument(format!("case {} has no closed-form Borel data", self.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_load_and_self_check() {
        for name in CASE_NAMES {
            case(name).unwrap();
        }
        assert!(matches!(case("nope"), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn exa1_closed_form() {
        let c = case("exa1").unwrap();
        assert_eq!(c.oracle_eval(0.0, C64::new(2.0, 0.0)).unwrap(), C64::new(0.5, 0.0));
        let v = c.oracle_eval(1.0, C64::new(1.0, 0.0)).unwrap();
        assert!((v.re - (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(c.oracle_s_beta().unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn eqpert_branches_differ_by_stokes_jump() {
        let c = eqpert(0.2).unwrap();
        let s = c.oracle_s_beta().unwrap();
        for &t in &[1.2, 1.7, 2.4] {
            let jump = c.oracle_y0_branch(t, -1.0).unwrap() - c.oracle_y0_branch(t, 1.0).unwrap();
            let y1 = c.oracle_y1(C64::new(t - 1.0, 0.0)).unwrap();
            assert!((jump - s * y1).norm() < 1e-14);
        }
        assert_eq!(c.oracle_singular_exponent(), Some(-0.5));
    }
}
