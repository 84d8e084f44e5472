//! Gauss rules and product integration against algebraic end-point factors.
//!
//! Node/weight generation is delegated to `gauss-quad`; this module caches the
//! rules and implements the splitting logic that keeps every integral either
//! exactly weighted (singular anchor at an end point, Gauss–Jacobi) or
//! comfortably analytic (anchor at least one interval length away, Gauss–Legendre).

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, OnceLock, RwLock};

use gauss_quad::{FiniteAboveNegOneF64, GaussJacobi, GaussLegendre};

use crate::scalar::C64;
use crate::special::rpow;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug)]
pub struct Rule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

type RuleKey = (usize, u64, u64);

fn cache() -> &'static RwLock<HashMap<RuleKey, Arc<Rule>>> {
    static CACHE: OnceLock<RwLock<HashMap<RuleKey, Arc<Rule>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Gauss rule for the weight `(1 + x)^a (1 - x)^b` on `[-1, 1]` with `n` nodes.
///
/// For `a != b` an even node count is used: the upstream Golub–Welsch path pins
/// the middle node of odd rules to `0`, which is only correct for symmetric weights.
pub fn jacobi(n: usize, a: f64, b: f64) -> Arc<Rule> {
    assert!(a > -1.0 && b > -1.0, "Jacobi exponents must exceed -1 (got {a}, {b})");
    let n = if a != b { n + n % 2 } else { n.max(1) };
    let key = (n, a.to_bits(), b.to_bits());
    if let Some(r) = cache().read().expect("rule cache").get(&key) {
        return r.clone();
    }
    let deg = NonZeroUsize::new(n).expect("positive degree");
    let pairs: Vec<(f64, f64)> = if a == 0.0 && b == 0.0 {
        GaussLegendre::new(deg).as_node_weight_pairs().to_vec()
    } else {
        let alpha = FiniteAboveNegOneF64::try_from(b).expect("exponent above -1");
        let beta = FiniteAboveNegOneF64::try_from(a).expect("exponent above -1");
        GaussJacobi::new(deg, alpha, beta).as_node_weight_pairs().to_vec()
    };
    let mut pairs = pairs;
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let rule = Arc::new(Rule { x: pairs.iter().map(|p| p.0).collect(), w: pairs.iter().map(|p| p.1).collect() });
    cache().write().expect("rule cache").insert(key, rule.clone());
    rule
}

/// Gauss–Legendre rule with `n` nodes.
pub fn legendre(n: usize) -> Arc<Rule> {
    jacobi(n, 0.0, 0.0)
}

/// Algebraic factor `(s - at)^exponent` (left anchor, `at <= u`) or
/// `(at - s)^exponent` (right anchor, `at >= v`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub at: f64,
    pub exponent: C64,
}

/// `int_u^v f(s) prod_left (s - a)^e prod_right (a - s)^e ds` with `n`-point rules.
///
/// `f` must be smooth on `[u, v]`. Anchors that sit on an end point are absorbed
/// into a Gauss–Jacobi weight (complex exponents get a geometric end-point
/// refinement instead); anchors closer than one interval length trigger
/// geometric subdivision.
pub fn integrate<F: Fn(f64) -> C64>(u: f64, v: f64, left: &[Anchor], right: &[Anchor], n: usize, f: &F) -> C64 {
    if v <= u {
        return C64::new(0.0, 0.0);
    }
    let len = v - u;
    let tiny = 1e-12 * len;
    let near_l = left.iter().map(|a| u - a.at).filter(|&d| d > tiny && d < len).fold(f64::INFINITY, f64::min);
    let near_r = right.iter().map(|a| a.at - v).filter(|&d| d > tiny && d < len).fold(f64::INFINITY, f64::min);
    if near_l.is_finite() || near_r.is_finite() {
        let s = if near_l <= near_r { u + near_l } else { v - near_r };
        let s = if near_l.is_finite() && near_r.is_finite() && near_l + near_r < len { 0.5 * (u + v) } else { s };
        return integrate(u, s, left, right, n, f) + integrate(s, v, left, right, n, f);
    }
    // complex exponents at an end point: log-periodic oscillation defeats the Jacobi
    // weight, so peel off a tiny end piece (moment formula) and subdivide the rest
    let eta = len * 2f64.powi(-30);
    let complex_exact = |anchors: &[Anchor], at_end: f64, sign: f64| {
        anchors.iter().position(|an| sign * (at_end - an.at) <= tiny && an.exponent.im != 0.0)
    };
    if let Some(i) = complex_exact(left, u, 1.0) {
        let e = left[i].exponent;
        let others: Vec<Anchor> = left.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| *a).collect();
        let piece = end_piece(u + 0.5 * eta, &others, right, f) * rpow(eta, e + 1.0) / (e + 1.0);
        return piece + integrate(u + eta, v, left, right, n, f);
    }
    if let Some(i) = complex_exact(right, v, -1.0) {
        let e = right[i].exponent;
        let others: Vec<Anchor> = right.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| *a).collect();
        let piece = end_piece(v - 0.5 * eta, left, &others, f) * rpow(eta, e + 1.0) / (e + 1.0);
        return piece + integrate(u, v - eta, left, right, n, f);
    }
    let mut a = 0.0;
    let mut b = 0.0;
    let mut far_l = Vec::new();
    let mut far_r = Vec::new();
    for an in left {
        if u - an.at <= tiny {
            a += an.exponent.re;
        } else {
            far_l.push(*an);
        }
    }
    for an in right {
        if an.at - v <= tiny {
            b += an.exponent.re;
        } else {
            far_r.push(*an);
        }
    }
    let rule = jacobi(n, a, b);
    let h = 0.5 * len;
    let mut sum = C64::new(0.0, 0.0);
    for (x, w) in rule.x.iter().zip(&rule.w) {
        let s = u + h * (1.0 + x);
        let mut val = f(s);
        for an in &far_l {
            val *= rpow(s - an.at, an.exponent);
        }
        for an in &far_r {
            val *= rpow(an.at - s, an.exponent);
        }
        sum += val * *w;
    }
    sum * h.powf(1.0 + a + b)
}

fn end_piece<F: Fn(f64) -> C64>(s: f64, left: &[Anchor], right: &[Anchor], f: &F) -> C64 {
    let mut val = f(s);
    for an in left {
        val *= rpow((s - an.at).max(0.0), an.exponent);
    }
    for an in right {
        val *= rpow((an.at - s).max(0.0), an.exponent);
    }
    val
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma_real;

    fn beta_fn(a: f64, b: f64) -> f64 {
        gamma_real(a) * gamma_real(b) / gamma_real(a + b)
    }

    #[test]
    fn jacobi_rules_integrate_beta_functions() {
        for &(a, b) in &[(-0.5, 0.0), (0.3, -0.7), (-0.5, -0.5), (0.25, 0.75)] {
            for n in [3, 4, 8, 9] {
                let rule = jacobi(n, a, b);
                // int_{-1}^{1} (1+x)^a (1-x)^b (1+x)^2 dx = 2^{a+b+3} B(a+3, b+1)
                let got: f64 = rule.x.iter().zip(&rule.w).map(|(x, w)| w * (1.0 + x).powi(2)).sum();
                let exact = 2f64.powf(a + b + 3.0) * beta_fn(a + 3.0, b + 1.0);
                assert!((got - exact).abs() < 1e-13 * exact, "a={a} b={b} n={n}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 s^{-1/2} (1 - s)^{-1/2} ds = pi
        let one = |_s: f64| C64::new(1.0, 0.0);
        let l = [Anchor { at: 0.0, exponent: C64::new(-0.5, 0.0) }];
        let r = [Anchor { at: 1.0, exponent: C64::new(-0.5, 0.0) }];
        let got = integrate(0.0, 1.0, &l, &r, 8, &one);
        assert!((got.re - std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn nearby_singularity_is_subdivided() {
        // int_{1e-9}^{1} s^{-1/2} ds = 2 (1 - sqrt(1e-9))
        let one = |_s: f64| C64::new(1.0, 0.0);
        let l = [Anchor { at: 0.0, exponent: C64::new(-0.5, 0.0) }];
        let got = integrate(1e-9, 1.0, &l, &[], 10, &one);
        let exact = 2.0 * (1.0 - 1e-9f64.sqrt());
        assert!((got.re - exact).abs() < 1e-13, "{got}");
    }

    #[test]
    fn complex_exponent() {
        // int_0^1 s^{-1/2 + i} ds = 1 / (1/2 + i)
        let one = |_s: f64| C64::new(1.0, 0.0);
        let e = C64::new(-0.5, 1.0);
        let l = [Anchor { at: 0.0, exponent: e }];
        let got = integrate(0.0, 1.0, &l, &[], 16, &one);
        let exact = C64::new(1.0, 0.0) / (e + 1.0);
        assert!((got - exact).norm() < 1e-10, "{got} vs {exact}");
    }
}
