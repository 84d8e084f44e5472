//! Special functions: complex Gamma via the Lanczos approximation.

use std::f64::consts::PI;

use crate::scalar::{is_nonpositive_integer, C64};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function of a complex argument (relative accuracy ~1e-15).
///
/// Returns a non-finite value at the poles `0, -1, -2, ...`.
pub fn gamma(z: C64) -> C64 {
    if is_nonpositive_integer(z) {
        return C64::new(f64::INFINITY, 0.0);
    }
    if z.im == 0.0 && z.re.fract() == 0.0 && z.re <= 171.0 {
        return C64::new(factorial(z.re as usize - 1), 0.0);
    }
    if z.re < 0.5 {
        // reflection: Gamma(z) Gamma(1 - z) = pi / sin(pi z)
        return C64::new(PI, 0.0) / ((z * PI).sin() * gamma(C64::new(1.0, 0.0) - z));
    }
    let z = z - 1.0;
    let mut x = C64::new(LANCZOS_COEF[0], 0.0);
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

/// `1 / Gamma(z)`, entire: exactly zero at the poles of Gamma.
pub fn rgamma(z: C64) -> C64 {
    if is_nonpositive_integer(z) {
        C64::new(0.0, 0.0)
    } else {
        C64::new(1.0, 0.0) / gamma(z)
    }
}

/// Real Gamma function.
pub fn gamma_real(x: f64) -> f64 {
    gamma(C64::new(x, 0.0)).re
}

/// `t^e` for real `t > 0` and complex exponent `e`, using the real logarithm.
pub fn rpow(t: f64, e: C64) -> C64 {
    if e.im == 0.0 {
        C64::new(t.powf(e.re), 0.0)
    } else {
        (e * t.ln()).exp()
    }
}

/// `n!` as a double (exact up to 22!).
pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Binomial coefficient as a double.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_at_integers_is_factorial() {
        for n in 1..15 {
            let g = gamma(C64::new(n as f64, 0.0));
            let f = factorial(n - 1);
            assert!(((g.re - f) / f).abs() < 1e-13, "n = {n}: {g} vs {f}");
            assert!(g.im.abs() < 1e-13 * f);
        }
    }

    #[test]
    fn gamma_half_integers() {
        let g = gamma(C64::new(0.5, 0.0));
        assert!((g.re - PI.sqrt()).abs() < 1e-14);
        let g = gamma(C64::new(-0.5, 0.0));
        assert!((g.re + 2.0 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn gamma_recurrence_complex() {
        let z = C64::new(0.3, 1.7);
        let lhs = gamma(z + 1.0);
        let rhs = z * gamma(z);
        assert!((lhs - rhs).norm() < 1e-13 * lhs.norm());
    }

    #[test]
    fn reciprocal_gamma_vanishes_at_poles() {
        assert_eq!(rgamma(C64::new(0.0, 0.0)), C64::new(0.0, 0.0));
        assert_eq!(rgamma(C64::new(-3.0, 0.0)), C64::new(0.0, 0.0));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(4, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }
}
