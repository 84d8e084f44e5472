//! Stokes data, balanced averages and the resurgence identities on `p > 0`.
//!
//! Conventions (`tau_k f = f(. - k)`, `H` the Heaviside factor):
//!
//! ```text
//! Y_0^-      = Y_0^+ + S_beta Y_1^+ o tau_1                     on (1, 2)
//! Y_m^-      = Y_m^+ + sum_{k>=1} C(m+k, m) S_beta^k (Y_{m+k}^+ H) o tau_k
//! Y_m^{-^j+} = Y_m^+ + sum_{k=1}^{j} C(m+k, m) S_beta^k (Y_{m+k}^+ H) o tau_k
//! Y_m^ba     = Y_m^+ + sum_{k>=1} 2^-k C(m+k, m) S_beta^k (Y_{m+k}^+ H) o tau_k
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::branch::{BranchGrid, BranchLabel, StokesBranches};
use crate::error::{Error, Result};
use crate::grid::{convolve, Grid1, Mesh};
use crate::scalar::C64;
use crate::special::{binomial, gamma, rpow};

/// `S` from `S_beta`: `S = 2 sin(pi (1 - beta)) S_beta / i`, or `2 pi S_beta / i` for `beta = 1`.
pub fn stokes_s_from_s_beta(beta: C64, s_beta: C64) -> C64 {
    let i = C64::new(0.0, 1.0);
    if beta == C64::new(1.0, 0.0) {
        2.0 * PI * s_beta / i
    } else {
        2.0 * (PI * (1.0 - beta)).sin() * s_beta / i
    }
}

/// Weighted sup norm on the nodes inside `(a, b)`: `max |f| min(1, d)^{1 - Re beta}`,
/// with `d` the distance to the nearest integer (bounded for the branch singularities).
pub fn scaled_norm(comps: &[Grid1], a: f64, b: f64, beta: C64) -> f64 {
    let mesh = &comps[0].mesh;
    let w = 1.0 - beta.re;
    let mut out = 0.0f64;
    for (i, &t) in mesh.nodes().iter().enumerate() {
        if t <= a || t >= b {
            continue;
        }
        let d = mesh.node_integer_distance(i).min(1.0);
        for g in comps {
            out = out.max(g.value(i).norm() * d.powf(w));
        }
    }
    out
}

fn diff_norm(a: &BranchGrid, b: &BranchGrid, lo: f64, hi: f64, beta: C64) -> f64 {
    let d = a.axpby(C64::new(1.0, 0.0), b, C64::new(-1.0, 0.0), BranchLabel::Plus);
    scaled_norm(&d.comps, lo, hi, beta)
}

impl BranchGrid {
    /// `(self H) o tau_k` (integer shift to the right).
    pub fn shifted(&self, k: usize) -> BranchGrid {
        BranchGrid { comps: self.comps.iter().map(|g| g.shifted(k)).collect(), ..self.clone() }
    }

    pub fn scale(&self, a: C64) -> BranchGrid {
        BranchGrid { comps: self.comps.iter().map(|g| g.scale(a)).collect(), ..self.clone() }
    }
}

/// Settings of the two Stokes-constant estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesFitParams {
    /// Window in `p` for the jump ratio.
    pub jump_window: (f64, f64),
    /// Window in `p` (right of 1) for the singular fit.
    pub fit_window: (f64, f64),
    /// Degree of the polynomial amplitudes in the singular fit.
    pub fit_degree: usize,
    /// Relative disagreement above which the report is flagged.
    pub tolerance: f64,
}

impl Default for StokesFitParams {
    fn default() -> Self {
        StokesFitParams { jump_window: (1.1, 1.9), fit_window: (1.02, 1.3), fit_degree: 6, tolerance: 1e-2 }
    }
}

/// One estimator of `S_beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub s_beta: [f64; 2],
    /// Largest deviation of the pointwise ratio from its mean (jump), or the
    /// relative residual of the model (fit).
    pub spread: f64,
    pub window: (f64, f64),
}

/// Stokes data of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesReport {
    pub beta: [f64; 2],
    /// Jump estimate (the primary value).
    pub s_beta: [f64; 2],
    pub s: [f64; 2],
    pub jump: Estimate,
    pub fit: Estimate,
    /// Fitted exponent of the singularity of `Y_0^+` at `p = 1`.
    pub fitted_exponent: f64,
    /// `|S_jump - S_fit| / max(|S_jump|, floor)`.
    pub disagreement: f64,
    /// `true` when the estimators disagree beyond the configured tolerance.
    pub flagged: bool,
    pub identities: Vec<IdentityResidual>,
}

impl StokesReport {
    pub fn s_beta(&self) -> C64 {
        C64::new(self.s_beta[0], self.s_beta[1])
    }
}

/// Residual of one identity on one interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub identity: String,
    pub interval: (f64, f64),
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityResidual {
    fn new(identity: impl Into<String>, interval: (f64, f64), residual: f64, tolerance: f64) -> Self {
        IdentityResidual { identity: identity.into(), interval, residual, tolerance, pass: residual < tolerance }
    }
}

fn c2(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// Jump estimator: mean of `(Y_0^- - Y_0^+)(p) / Y_1^+(p - 1)` over the window.
pub fn jump_estimate(
    plus0: &BranchGrid,
    minus0: &BranchGrid,
    plus1: &BranchGrid,
    window: (f64, f64),
) -> Result<Estimate> {
    let mesh = plus0.mesh().clone();
    let off = mesh.shift_offset(1);
    // component where Y_1 is largest
    let r = (0..plus1.comps.len())
        .max_by(|a, b| plus1.comps[*a].max_abs().total_cmp(&plus1.comps[*b].max_abs()))
        .unwrap_or(0);
    let mut ratios = Vec::new();
    for (i, &t) in mesh.nodes().iter().enumerate() {
        if t <= window.0 || t >= window.1 || i < off {
            continue;
        }
        let y1 = plus1.comps[r].value(i - off);
        if y1.norm() == 0.0 {
            continue;
        }
        ratios.push((minus0.comps[r].value(i) - plus0.comps[r].value(i)) / y1);
    }
    if ratios.is_empty() {
        return Err(Error::Fit(format!("no nodes in the jump window {window:?}")));
    }
    let mean: C64 = ratios.iter().sum::<C64>() / ratios.len() as f64;
    let spread = ratios.iter().map(|z| (z - mean).norm()).fold(0.0, f64::max);
    Ok(Estimate { s_beta: c2(mean), spread, window })
}

/// Basis of the right-side singular model at `d = p - 1 > 0` (plus branch):
/// `e^{-i pi e} d^e A(d) + R(d)`, or `(ln d - i pi) A(d) + R(d)` for integer `e`.
fn singular_basis(d: f64, e: C64, degree: usize) -> Vec<C64> {
    let s = if e.im == 0.0 && e.re == e.re.round() {
        C64::new(d.ln(), -PI) * d.powi(e.re as i32)
    } else {
        rpow(d, e) * (C64::new(0.0, -PI) * e).exp()
    };
    let mut out: Vec<C64> = (0..=degree).map(|m| s * d.powi(m as i32)).collect();
    out.extend((0..=degree).map(|m| C64::new(d.powi(m as i32), 0.0)));
    out
}

/// Least-squares fit of the singular model; returns `(A(0), relative residual)`.
fn fit_singular(samples: &[(f64, C64)], e: C64, degree: usize) -> Result<(C64, f64)> {
    let nb = 2 * (degree + 1);
    if samples.len() < nb + 2 {
        return Err(Error::Fit("too few samples in the fit window".into()));
    }
    let dmax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let scale: Vec<f64> = singular_basis(dmax, e, degree).iter().map(|z| z.norm().max(1e-300)).collect();
    let mut a = DMatrix::<C64>::zeros(samples.len(), nb);
    let mut rhs = DVector::<C64>::zeros(samples.len());
    for (row, (d, v)) in samples.iter().enumerate() {
        for (col, b) in singular_basis(*d, e, degree).into_iter().enumerate() {
            a[(row, col)] = b / scale[col];
        }
        rhs[row] = *v;
    }
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&rhs, 1e-14 * svd.singular_values.max()).map_err(|e| Error::Fit(e.to_string()))?;
    let res = (&a * &coef - &rhs).norm() / rhs.norm().max(1e-300);
    Ok((coef[0] / scale[0], res))
}

/// Fits the exponent of the singular model by minimizing the residual over `Re e`.
pub fn fit_exponent(samples: &[(f64, C64)], im: f64, degree: usize) -> Result<f64> {
    let res = |e: f64| fit_singular(samples, C64::new(e, im), degree).map(|r| r.1).unwrap_or(f64::INFINITY);
    // coarse scan, then golden-section refinement around the best point
    let grid: Vec<f64> = (1..99).map(|i| -0.98 + 0.02 * i as f64 - 0.02).filter(|e| e.abs() > 1e-9).collect();
    let best = grid.iter().copied().min_by(|a, b| res(*a).total_cmp(&res(*b))).expect("nonempty scan");
    let (mut lo, mut hi) = (best - 0.02, best + 0.02);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (res(x1), res(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = res(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = res(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Both estimators of `S_beta`, the derived `S` and the fitted exponent.
pub fn estimate_stokes_constant(
    beta: C64,
    plus0: &BranchGrid,
    minus0: &BranchGrid,
    plus1: &BranchGrid,
    params: &StokesFitParams,
) -> Result<StokesReport> {
    let jump = jump_estimate(plus0, minus0, plus1, params.jump_window)?;
    let mesh = plus0.mesh().clone();
    let (lo, hi) = params.fit_window;
    if !(lo > 1.0 && hi > lo && hi < 2.0) {
        return Err(Error::InvalidArgument(format!("fit window {:?} must lie inside (1, 2)", params.fit_window)));
    }
    let c1 = mesh.cell_of(1.0 + 1e-15);
    if mesh.cell_of(lo) < c1 + 2 {
        return Err(Error::InvalidArgument(format!("fit window starts within two cells of p = 1 ({lo})")));
    }
    let r = (0..plus0.comps.len())
        .max_by(|a, b| plus1.comps[*a].max_abs().total_cmp(&plus1.comps[*b].max_abs()))
        .unwrap_or(0);
    let samples: Vec<(f64, C64)> = mesh
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, t)| **t > lo && **t < hi)
        .map(|(i, t)| (t - 1.0, plus0.comps[r].value(i)))
        .collect();
    let e_theory = beta - 1.0;
    let fitted_exponent = fit_exponent(&samples, e_theory.im, params.fit_degree)?;
    let (amp, res) = fit_singular(&samples, e_theory, params.fit_degree)?;
    let s_fit = if beta == C64::new(1.0, 0.0) {
        C64::new(0.0, 2.0 * PI) * amp
    } else {
        C64::new(0.0, 2.0) * (PI * e_theory).sin() * gamma(beta) * amp
    };
    let s_jump = C64::new(jump.s_beta[0], jump.s_beta[1]);
    let disagreement = (s_jump - s_fit).norm() / s_jump.norm().max(1e-6);
    Ok(StokesReport {
        beta: c2(beta),
        s_beta: jump.s_beta,
        s: c2(stokes_s_from_s_beta(beta, s_jump)),
        fit: Estimate { s_beta: c2(s_fit), spread: res, window: params.fit_window },
        jump,
        fitted_exponent,
        disagreement,
        flagged: disagreement > params.tolerance,
        identities: Vec::new(),
    })
}

fn require_levels(plus: &[BranchGrid], needed: usize) -> Result<()> {
    if plus.len() <= needed {
        return Err(Error::MissingLevels { required: (plus.len()..=needed).collect() });
    }
    Ok(())
}

/// Largest shift that still reaches into the mesh.
fn max_shift(mesh: &Mesh) -> usize {
    mesh.units.saturating_sub(1)
}

fn weighted_continuation(
    plus: &[BranchGrid],
    s_beta: C64,
    m: usize,
    kmax_shift: usize,
    weight: impl Fn(usize) -> f64,
    label: BranchLabel,
) -> Result<BranchGrid> {
    let ks = kmax_shift.min(max_shift(plus[0].mesh()));
    require_levels(plus, m + ks)?;
    let mut out = plus[m].clone();
    for k in 1..=ks {
        let c = binomial(m + k, m) * weight(k) * s_beta.powu(k as u32);
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        out = out.axpby(C64::new(1.0, 0.0), &plus[m + k].shifted(k), c, label);
    }
    out.label = label;
    Ok(out)
}

/// `Y_m^ba` from the plus branches of levels `m..`.
pub fn balanced_average(plus: &[BranchGrid], s_beta: C64, m: usize) -> Result<BranchGrid> {
    balanced_average_upto(plus, s_beta, m, usize::MAX)
}

/// `Y_m^ba` restricted to the first `shifts` shifted terms: exact on `[0, shifts + 1]`.
pub fn balanced_average_upto(plus: &[BranchGrid], s_beta: C64, m: usize, shifts: usize) -> Result<BranchGrid> {
    weighted_continuation(plus, s_beta, m, shifts, |k| 0.5f64.powi(k as i32), BranchLabel::Balanced)
}

/// `Y_m^{-^j+}`: crossing once through `(j, j + 1)` from below.
pub fn continue_multi_crossing(plus: &[BranchGrid], s_beta: C64, m: usize, j: usize) -> Result<BranchGrid> {
    weighted_continuation(plus, s_beta, m, j, |_| 1.0, BranchLabel::MinusPowPlus(j))
}

/// `Y_m^-` rebuilt from the plus branches.
pub fn reconstruct_minus(plus: &[BranchGrid], s_beta: C64, m: usize) -> Result<BranchGrid> {
    weighted_continuation(plus, s_beta, m, usize::MAX, |_| 1.0, BranchLabel::Minus)
}

/// Residuals of the resurgence identities against independently solved branches.
///
/// Checks run on `(0, units - 1)`: the last unit of the mesh only has one-sided
/// data near its right end and is excluded.
pub fn check_resurgence(
    branches: &StokesBranches,
    beta: C64,
    s_beta: C64,
    tolerance: f64,
) -> Result<Vec<IdentityResidual>> {
    let plus = &branches.plus;
    let minus = &branches.minus;
    let mesh = branches.mesh().clone();
    let top = mesh.units.saturating_sub(1);
    if top < 2 {
        return Err(Error::InvalidArgument("identity checks need pmax > 2".into()));
    }
    let kmax = branches.kmax();
    let one = C64::new(1.0, 0.0);
    let mut out = Vec::new();
    // S^k Y_k o tau_k = Y_0^- - Y_0^{-^{k-1}+} on (k, k + 1)
    for k in 1..top.min(kmax + 1) {
        let prev = continue_multi_crossing(plus, s_beta, 0, k - 1)?;
        let diff = minus[0].axpby(one, &prev, -one, BranchLabel::Plus);
        let lhs = plus[k].scale(s_beta.powu(k as u32)).shifted(k);
        let iv = (k as f64, k as f64 + 1.0);
        out.push(IdentityResidual::new(
            format!("stokes_level_{k}"),
            iv,
            diff_norm(&diff, &lhs, iv.0, iv.1, beta),
            tolerance,
        ));
    }
    // Y_0^- = Y_0^+ + sum S^k Y_k^+ o tau_k
    let iv = (0.0, top as f64);
    let rebuilt = weighted_continuation(plus, s_beta, 0, top - 1, |_| 1.0, BranchLabel::Minus)?;
    out.push(IdentityResidual::new("minus_from_plus", iv, diff_norm(&rebuilt, &minus[0], iv.0, iv.1, beta), tolerance));
    // Y_0^{-^j+} = Y_0^- on (j, j + 1)
    for j in 1..top {
        let cont = continue_multi_crossing(plus, s_beta, 0, j)?;
        let iv = (j as f64, j as f64 + 1.0);
        out.push(IdentityResidual::new(
            format!("crossing_{j}"),
            iv,
            diff_norm(&cont, &minus[0], iv.0, iv.1, beta),
            tolerance,
        ));
    }
    // higher levels: Y_m^- with binomial weights
    for m in 1..=kmax {
        if m + top > kmax + 1 {
            break;
        }
        let rebuilt = weighted_continuation(plus, s_beta, m, top - 1, |_| 1.0, BranchLabel::Minus)?;
        out.push(IdentityResidual::new(
            format!("level_{m}_minus_from_plus"),
            iv,
            diff_norm(&rebuilt, &minus[m], iv.0, iv.1, beta),
            tolerance,
        ));
    }
    Ok(out)
}

/// `S_beta^k Y_k^+`: the level family of `Y_0` that enters every continuation.
pub fn stokes_family(plus: &[BranchGrid], s_beta: C64) -> Vec<BranchGrid> {
    plus.iter().enumerate().map(|(k, b)| b.scale(s_beta.powu(k as u32))).collect()
}

/// Balanced average of a level family `f_k`: `sum_k 2^-k (f_k H) o tau_k`.
pub fn family_balanced(f: &[BranchGrid]) -> BranchGrid {
    family_sum(f, |k| 0.5f64.powi(k as i32), f.len())
}

fn family_sum(f: &[BranchGrid], weight: impl Fn(usize) -> f64, kmax: usize) -> BranchGrid {
    let mut out = f[0].clone();
    for (k, fk) in f.iter().enumerate().skip(1).take(kmax) {
        out = out.axpby(C64::new(1.0, 0.0), &fk.shifted(k), C64::new(weight(k), 0.0), BranchLabel::Balanced);
    }
    out
}

fn conv_branch(a: &BranchGrid, b: &BranchGrid) -> Result<BranchGrid> {
    let comps = a.comps.iter().zip(&b.comps).map(|(x, y)| convolve(x, y)).collect::<Result<Vec<_>>>()?;
    Ok(BranchGrid { comps, ..a.clone() })
}

/// Levels of `f * g`: `(f * g)_k = sum_m f_m * g_{k-m}` (componentwise).
pub fn convolve_families(f: &[BranchGrid], g: &[BranchGrid]) -> Result<Vec<BranchGrid>> {
    let kk = f.len().min(g.len());
    (0..kk)
        .map(|k| {
            let mut acc: Option<BranchGrid> = None;
            for m in 0..=k {
                let t = conv_branch(&f[m], &g[k - m])?;
                acc = Some(match acc {
                    None => t,
                    Some(a) => a.axpby(C64::new(1.0, 0.0), &t, C64::new(1.0, 0.0), BranchLabel::Plus),
                });
            }
            Ok(acc.expect("k >= 0"))
        })
        .collect()
}

/// Commutation of the balanced average with convolution, and the non-commutation
/// of the single-crossing continuation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionCheck {
    /// `|(f*g)^ba - f^ba * g^ba|` on `(0, hi)`.
    pub ba_residual: f64,
    pub ba_interval: (f64, f64),
    /// `|(f*g)^{-+} - f^{-+} * g^{-+}|` on `(2, hi)`.
    pub naive_discrepancy: f64,
    /// `|(f_1 * g_1) o tau_2|` on the same interval (the predicted discrepancy).
    pub predicted_discrepancy: f64,
    /// `|(f*g)^{-+} - f^{-+} * g^{-+} + (f_1 * g_1) o tau_2|` on the same interval.
    pub witness_residual: f64,
    pub witness_interval: (f64, f64),
}

/// Compares `(f*g)^ba` (level rule) with `f^ba * g^ba` on `(0, hi)`.
pub fn check_ba_convolution(f: &[BranchGrid], g: &[BranchGrid], hi: f64, beta: C64) -> Result<ConvolutionCheck> {
    let units = f[0].mesh().units;
    let kk = f.len().min(g.len()).min(units);
    let (f, g) = (&f[..kk], &g[..kk]);
    let h = convolve_families(f, g)?;
    let lhs = family_balanced(&h);
    let rhs = conv_branch(&family_balanced(f), &family_balanced(g))?;
    let ba_residual = diff_norm(&lhs, &rhs, 0.0, hi, beta);
    // single crossing through (1, 2): f^{-+} = f_0 + f_1 o tau_1
    let once = |fam: &[BranchGrid]| family_sum(fam, |_| 1.0, 1);
    let naive_lhs = once(&h);
    let naive_rhs = conv_branch(&once(f), &once(g))?;
    let lo = 2.0f64.min(hi);
    let naive_discrepancy = diff_norm(&naive_lhs, &naive_rhs, lo, hi, beta);
    let predicted = if kk > 1 { conv_branch(&f[1], &g[1])?.shifted(2) } else { f[0].scale(C64::new(0.0, 0.0)) };
    let predicted_discrepancy = scaled_norm(&predicted.comps, lo, hi, beta);
    let gap = naive_lhs.axpby(C64::new(1.0, 0.0), &naive_rhs, C64::new(-1.0, 0.0), BranchLabel::Plus);
    let witness_residual = diff_norm(&gap, &predicted.scale(C64::new(-1.0, 0.0)), lo, hi, beta);
    Ok(ConvolutionCheck {
        ba_residual,
        ba_interval: (0.0, hi),
        naive_discrepancy,
        predicted_discrepancy,
        witness_residual,
        witness_interval: (lo, hi),
    })
}

/// Largest imaginary part in the weighted norm of [`scaled_norm`] (reality check).
pub fn max_imaginary(b: &BranchGrid, a: f64, hi: f64, beta: C64) -> f64 {
    let im: Vec<Grid1> = b
        .comps
        .iter()
        .map(|g| {
            Grid1::from_values(&g.mesh, g.exps().to_vec(), g.values().iter().map(|z| C64::new(z.im, 0.0)).collect())
        })
        .collect();
    scaled_norm(&im, a, hi, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branch::{solve_stokes_branches, StokesParams};
    use crate::cases::eqpert;
    use crate::volterra::SolverParams;

    #[test]
    fn s_from_s_beta_inverts_the_relation() {
        let beta = C64::new(0.5, 0.0);
        let sb = C64::new(0.0, -0.3);
        let s = stokes_s_from_s_beta(beta, sb);
        let back = C64::new(0.0, 1.0) * s / (2.0 * (PI * (1.0 - beta)).sin());
        assert!((back - sb).norm() < 1e-15);
    }

    #[test]
    fn injected_jump_is_recovered() {
        let c = eqpert(0.1).unwrap();
        let br = solve_stokes_branches(&c.spec, 1, 2.5, &SolverParams::default(), &StokesParams::default()).unwrap();
        let inj = C64::new(0.25, -0.5);
        let minus = br.plus[0].axpby(C64::new(1.0, 0.0), &br.plus[1].shifted(1), inj, BranchLabel::Minus);
        let est = jump_estimate(&br.plus[0], &minus, &br.plus[1], (1.1, 1.9)).unwrap();
        assert!((C64::new(est.s_beta[0], est.s_beta[1]) - inj).norm() < 1e-12);
    }

    #[test]
    fn perturbed_example_stokes_constant() {
        let c = eqpert(0.1).unwrap();
        let br = solve_stokes_branches(&c.spec, 2, 2.5, &SolverParams::default(), &StokesParams::default()).unwrap();
        let rep = estimate_stokes_constant(
            c.spec.beta(),
            &br.plus[0],
            &br.minus[0],
            &br.plus[1],
            &StokesFitParams::default(),
        )
        .unwrap();
        let exact = c.oracle_s_beta().unwrap();
        assert!((rep.s_beta() - exact).norm() < 1e-8, "{rep:?}");
        assert!((C64::new(rep.fit.s_beta[0], rep.fit.s_beta[1]) - exact).norm() < 5e-5, "{rep:?}");
        assert!((rep.fitted_exponent + 0.5).abs() < 1e-4, "{rep:?}");
        let ids = check_resurgence(&br, c.spec.beta(), rep.s_beta(), 1e-6).unwrap();
        assert!(ids.iter().all(|r| r.pass), "{ids:?}");
        let ba = balanced_average(&br.plus, rep.s_beta(), 0).unwrap();
        let half = br.plus[0].axpby(C64::new(0.5, 0.0), &br.minus[0], C64::new(0.5, 0.0), BranchLabel::Plus);
        assert!(diff_norm(&ba, &half, 1.0, 2.0, c.spec.beta()) < 1e-8);
        assert!(max_imaginary(&ba, 0.0, 2.5, c.spec.beta()) < 1e-8);
    }

    #[test]
    fn balanced_average_commutes_with_convolution() {
        let c = eqpert(0.1).unwrap();
        let br = solve_stokes_branches(&c.spec, 3, 3.5, &SolverParams::default(), &StokesParams::default()).unwrap();
        let s = c.oracle_s_beta().unwrap();
        let fam = stokes_family(&br.plus, s);
        let chk = check_ba_convolution(&fam, &fam, 2.5, c.spec.beta()).unwrap();
        assert!(chk.ba_residual < 1e-8, "{chk:?}");
        assert!(chk.witness_residual < 1e-8, "{chk:?}");
        // (f_1 * f_1)(p) = S^2 for the example, so the discrepancy approaches |S|^2 sqrt(1/2) near p = 2.5
        let expect = s.norm_sqr() * 0.5f64.sqrt();
        assert!((chk.predicted_discrepancy - expect).abs() < 5e-3 * expect, "{chk:?}");
        assert!((chk.naive_discrepancy - expect).abs() < 5e-3 * expect, "{chk:?}");
    }
}
