//! Laplace transforms of Borel-plane levels, trans-series summation, the direct
//! ODE oracle and extraction of the trans-series constant.
//!
//! Along a ray `p = omega tau` the transform is
//! `L Y(x) = omega int_0^inf e^{-x omega tau} Y(omega tau) d tau`; the summed solution is
//! `y(x) = sum_k C^k e^{-k x} L Y_k(x)`. On the Stokes line the balanced averages
//! `Y_k^ba` are transformed instead of a single ray.

use ode_solvers::{DVector, Dopri5, OutputType, System};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branch::{solve_ray_branches, solve_stokes_branches, BranchGrid, BranchLabel, StokesParams};
use crate::error::{Error, Result};
use crate::resurgence::{balanced_average_upto, estimate_stokes_constant, StokesFitParams};
use crate::scalar::C64;
use crate::special::binomial;
use crate::system::SystemSpec;
use crate::volterra::SolverParams;

/// Numerical settings of the Laplace quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    /// Gauss points per cell on top of the interpolation order.
    pub extra_points: usize,
    /// Added to the observed exponential growth rate of the grid.
    pub growth_margin: f64,
}

impl Default for LaplaceParams {
    fn default() -> Self {
        LaplaceParams { extra_points: 8, growth_margin: 0.25 }
    }
}

/// Transform value with the bound on the neglected `int_cutoff^inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceValue {
    pub value: Vec<C64>,
    pub tail_bound: f64,
}

/// Levels prepared for summation in one direction.
#[derive(Clone, Debug)]
pub struct LevelSet {
    pub phi: f64,
    pub omega: C64,
    pub levels: Vec<BranchGrid>,
    /// Balanced averages lack the shifted terms of levels beyond `kmax`: for level
    /// `m` the first missing term is `weight (Y_{m+k} H) o tau_k`, stored as `(k, weight)`.
    pub omitted: Vec<Option<(usize, f64)>>,
    /// Half-plane bound `b`: transforms need `Re(x omega) > b`.
    pub growth: f64,
}

fn unit_maxima(b: &BranchGrid, cutoff: f64) -> Vec<f64> {
    let mesh = b.mesh();
    let units = cutoff.ceil() as usize;
    let mut out = vec![0.0f64; units];
    for (i, &t) in mesh.nodes().iter().enumerate() {
        // stay away from the integer singularities, which say nothing about growth
        if t >= cutoff || mesh.node_integer_distance(i) < 0.25 {
            continue;
        }
        let u = (t as usize).min(units - 1);
        for g in &b.comps {
            out[u] = out[u].max(g.value(i).norm());
        }
    }
    out
}

/// Exponential growth rate of a grid, from the ratios of successive unit maxima.
pub fn observed_growth(b: &BranchGrid, cutoff: f64) -> f64 {
    let m = unit_maxima(b, cutoff);
    m.windows(2).filter(|w| w[0] > 0.0 && w[1] > 0.0).map(|w| (w[1] / w[0]).ln()).fold(0.0f64, f64::max)
}

impl LevelSet {
    fn build(
        phi: f64,
        omega: C64,
        levels: Vec<BranchGrid>,
        omitted: Vec<Option<(usize, f64)>>,
        params: &LaplaceParams,
    ) -> LevelSet {
        let growth =
            levels.iter().map(|b| observed_growth(b, b.mesh().pmax())).fold(0.0f64, f64::max) + params.growth_margin;
        LevelSet { phi, omega, levels, omitted, growth }
    }

    /// Levels solved along the ray `arg p = phi`.
    pub fn ray(levels: Vec<BranchGrid>, params: &LaplaceParams) -> Result<LevelSet> {
        let first = levels.first().ok_or(Error::MissingLevels { required: vec![0] })?;
        if first.label != BranchLabel::Ray {
            return Err(Error::InvalidArgument(format!("expected ray levels, found {}", first.label)));
        }
        let phi = first.phi;
        let omitted = vec![None; levels.len()];
        Ok(Self::build(phi, C64::from_polar(1.0, phi), levels, omitted, params))
    }

    /// Real-axis branches (`+`, `-`, or any fixed continuation) used as they are.
    pub fn real_axis(levels: Vec<BranchGrid>, params: &LaplaceParams) -> Result<LevelSet> {
        if levels.is_empty() {
            return Err(Error::MissingLevels { required: vec![0] });
        }
        let omitted = vec![None; levels.len()];
        Ok(Self::build(0.0, C64::new(1.0, 0.0), levels, omitted, params))
    }

    /// Balanced averages of the `+` branches on the Stokes line.
    pub fn balanced(plus: &[BranchGrid], s_beta: C64, params: &LaplaceParams) -> Result<LevelSet> {
        let kmax = plus.len() - 1;
        let units = plus[0].mesh().units;
        let mut levels = Vec::with_capacity(plus.len());
        let mut omitted = Vec::with_capacity(plus.len());
        for m in 0..=kmax {
            // shifts beyond kmax - m are unavailable
            let shifts = (kmax - m).min(units.saturating_sub(1));
            levels.push(balanced_average_upto(plus, s_beta, m, shifts)?);
            let k = shifts + 1;
            omitted.push(
                (k < units && s_beta != C64::new(0.0, 0.0))
                    .then(|| (k, 0.5f64.powi(k as i32) * binomial(m + k, m) * s_beta.norm().powi(k as i32))),
            );
        }
        Ok(Self::build(0.0, C64::new(1.0, 0.0), levels, omitted, params))
    }
}

/// `L Y(x)` over `[0, pmax]` along `omega`, with the tail bound
/// `M e^{-Re(x omega) pmax} / (Re(x omega) - b)` (`M` the maximum over the last unit).
pub fn laplace_grid(b: &BranchGrid, omega: C64, x: C64, growth: f64, params: &LaplaceParams) -> Result<LaplaceValue> {
    let cutoff = b.mesh().pmax();
    let z = x * omega;
    if z.re <= growth {
        return Err(Error::OutsideHalfPlane { x: format!("{x}"), bound: growth });
    }
    let value = b.comps.iter().map(|g| omega * g.integral_weighted(params.extra_points, |s| (-z * s).exp())).collect();
    let m = unit_maxima(b, cutoff).last().copied().unwrap_or(0.0);
    let tail_bound = m * (-z.re * cutoff).exp() / (z.re - growth);
    Ok(LaplaceValue { value, tail_bound })
}

/// `L_phi Y(x)` of a branch grid over the whole mesh (`omega = e^{i phi}` on rays, 1 otherwise).
pub fn laplace_ray(b: &BranchGrid, x: C64, params: &LaplaceParams) -> Result<LaplaceValue> {
    let omega = if b.label == BranchLabel::Ray { C64::from_polar(1.0, b.phi) } else { C64::new(1.0, 0.0) };
    let growth = observed_growth(b, b.mesh().pmax()) + params.growth_margin;
    laplace_grid(b, omega, x, growth, params)
}

/// Summed trans-series value with its error budget.
#[derive(Clone, Debug, PartialEq)]
pub struct TransseriesValue {
    pub value: Vec<C64>,
    /// Geometric bound on the levels beyond `kmax`.
    pub level_tail: f64,
    /// Sum of the weighted Laplace truncation bounds.
    pub laplace_tail: f64,
    /// `L Y_k(x)` per level.
    pub terms: Vec<Vec<C64>>,
}

fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Laplace transforms of every level at `x`. For balanced averages the tail bound
/// also carries an estimate of the first missing shifted term,
/// `weight e^{-k Re x} max_j |L Y_j(x)|`.
pub fn level_transforms(set: &LevelSet, x: C64, params: &LaplaceParams) -> Result<Vec<LaplaceValue>> {
    let mut t =
        set.levels.iter().map(|b| laplace_grid(b, set.omega, x, set.growth, params)).collect::<Result<Vec<_>>>()?;
    let scale = t.iter().skip(1).map(|lv| vnorm(&lv.value)).fold(0.0, f64::max);
    for (lv, om) in t.iter_mut().zip(&set.omitted) {
        if let Some((k, w)) = om {
            lv.tail_bound += w * (-(*k as f64) * x.re).exp() * scale;
        }
    }
    Ok(t)
}

/// Geometric tail of `sum_{k > K} z^k a_k` from the observed level ratios.
fn geometric_tail(norms: &[f64], z: f64, tol: f64) -> Result<f64> {
    let kk = norms.len() - 1;
    if z == 0.0 {
        return Ok(0.0);
    }
    if kk == 0 {
        return Err(Error::MissingLevels { required: vec![1] });
    }
    let rho = norms[1..]
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(if kk == 1 { 1.0 } else { 0.0 }, f64::max);
    let q = rho * z;
    if q >= 1.0 {
        return Err(Error::TailTooLarge { x: String::new(), bound: f64::INFINITY, tol });
    }
    Ok(norms[kk] * z.powi(kk as i32) * q / (1.0 - q))
}

/// `y(x) = sum_k C^k e^{-k x} L Y_k(x)` with a geometric bound on the omitted levels.
pub fn sum_transseries(set: &LevelSet, c: C64, x: C64, tol: f64, params: &LaplaceParams) -> Result<TransseriesValue> {
    let t = level_transforms(set, x, params)?;
    let w = c * (-x).exp();
    let n = t[0].value.len();
    let mut value = vec![C64::new(0.0, 0.0); n];
    let mut laplace_tail = 0.0;
    let mut wk = C64::new(1.0, 0.0);
    for lv in &t {
        for (o, v) in value.iter_mut().zip(&lv.value) {
            *o += wk * v;
        }
        laplace_tail += wk.norm() * lv.tail_bound;
        wk *= w;
        if w == C64::new(0.0, 0.0) {
            break;
        }
    }
    let norms: Vec<f64> = t.iter().map(|lv| vnorm(&lv.value)).collect();
    let level_tail = geometric_tail(&norms, w.norm(), tol).map_err(|e| match e {
        Error::TailTooLarge { bound, tol, .. } => Error::TailTooLarge { x: format!("{x}"), bound, tol },
        e => e,
    })?;
    if level_tail + laplace_tail > tol * vnorm(&value).max(1e-300) {
        return Err(Error::TailTooLarge { x: format!("{x}"), bound: level_tail + laplace_tail, tol });
    }
    Ok(TransseriesValue { value, level_tail, laplace_tail, terms: t.into_iter().map(|lv| lv.value).collect() })
}

/// Accuracy settings of the direct ODE integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeParams {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeParams {
    fn default() -> Self {
        OdeParams { rtol: 1e-13, atol: 1e-15 }
    }
}

/// Samples of a solution along a straight path in the `x` plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub xs: Vec<[f64; 2]>,
    /// `ys[i][r] = [re, im]` of component `r` at `xs[i]`.
    pub ys: Vec<Vec<[f64; 2]>>,
}

impl Trajectory {
    pub fn x(&self, i: usize) -> C64 {
        C64::new(self.xs[i][0], self.xs[i][1])
    }

    pub fn y(&self, i: usize) -> Vec<C64> {
        self.ys[i].iter().map(|v| C64::new(v[0], v[1])).collect()
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// The ODE along `x = x0 + s (x1 - x0)`, complex state split into real pairs.
struct PathSystem<'a> {
    spec: &'a SystemSpec,
    x0: C64,
    dx: C64,
}

impl System<f64, DVector<f64>> for PathSystem<'_> {
    fn system(&self, s: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let n = self.spec.n;
        let yc: Vec<C64> = (0..n).map(|r| C64::new(y[2 * r], y[2 * r + 1])).collect();
        let f = self.spec.rhs(self.x0 + s * self.dx, &yc);
        for r in 0..n {
            let d = f[r] * self.dx;
            dy[2 * r] = d.re;
            dy[2 * r + 1] = d.im;
        }
    }
}

/// Integrates the system with adaptive Dormand–Prince 5(4) from `x0` to `x1` along
/// the straight segment; returns `samples + 1` equally spaced points.
pub fn ode_oracle(
    spec: &SystemSpec,
    x0: C64,
    y0: &[C64],
    x1: C64,
    samples: usize,
    params: &OdeParams,
) -> Result<Trajectory> {
    if y0.len() != spec.n || samples == 0 {
        return Err(Error::InvalidArgument("initial data must have n components and samples > 0".into()));
    }
    if x0.norm() == 0.0 || x1.norm() == 0.0 {
        return Err(Error::InvalidArgument("the path must avoid x = 0".into()));
    }
    // the segment must not pass through the singular point x = 0
    let d = x1 - x0;
    let s_min = (-(x0.conj() * d).re / d.norm_sqr()).clamp(0.0, 1.0);
    if (x0 + s_min * d).norm() < 1e-8 * x0.norm().max(x1.norm()) {
        return Err(Error::InvalidArgument("the path passes through x = 0".into()));
    }
    let mut y: DVector<f64> = DVector::from_iterator(2 * spec.n, y0.iter().flat_map(|z| [z.re, z.im]));
    let mut out = Trajectory { xs: Vec::new(), ys: Vec::new() };
    let mut push = |m: usize, y: &DVector<f64>| {
        let x = x0 + (m as f64 / samples as f64) * d;
        out.xs.push([x.re, x.im]);
        out.ys.push((0..spec.n).map(|r| [y[2 * r], y[2 * r + 1]]).collect());
    };
    push(0, &y);
    // one integration per sample interval: step end points land exactly on the samples
    for m in 0..samples {
        let (s0, s1) = (m as f64 / samples as f64, (m + 1) as f64 / samples as f64);
        let sys = PathSystem { spec, x0, dx: d };
        let mut solver = Dopri5::from_param(
            sys,
            s0,
            s1,
            s1 - s0,
            y.clone(),
            params.rtol,
            params.atol,
            0.9,
            0.04,
            0.2,
            10.0,
            s1 - s0,
            0.0,
            100_000,
            1000,
            OutputType::Sparse,
        );
        solver.integrate().map_err(|e| Error::Ode(e.to_string()))?;
        y = solver.y_out().last().cloned().ok_or_else(|| Error::Ode("integrator produced no steps".into()))?;
        push(m + 1, &y);
    }
    Ok(out)
}

/// Fitted trans-series constant on a window of the trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub c: [f64; 2],
    /// Largest deviation of the per-point constants from their mean.
    pub spread: f64,
    /// Largest residual of the first component after the fit.
    pub residual: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

impl ConstantFit {
    pub fn c(&self) -> C64 {
        C64::new(self.c[0], self.c[1])
    }
}

/// Solves `sum_k C^k e^{-k x} L Y_k(x) = y(x)` (first component) for `C` at every
/// trajectory point with `Re x` in `window` and averages; fails when the per-point
/// constants spread beyond `tol` (the trajectory is not in the family).
pub fn extract_c(
    set: &LevelSet,
    traj: &Trajectory,
    window: (f64, f64),
    tol: f64,
    params: &LaplaceParams,
) -> Result<ConstantFit> {
    let pts: Vec<usize> = (0..traj.len()).filter(|&i| traj.xs[i][0] >= window.0 && traj.xs[i][0] <= window.1).collect();
    if pts.is_empty() {
        return Err(Error::Fit(format!("no trajectory samples in the window {window:?}")));
    }
    let fits: Vec<(C64, f64)> = pts
        .par_iter()
        .map(|&i| {
            let x = traj.x(i);
            let y = traj.y(i)[0];
            let t: Vec<C64> = level_transforms(set, x, params)?.into_iter().map(|lv| lv.value[0]).collect();
            if t.len() < 2 || t[1] == C64::new(0.0, 0.0) {
                return Err(Error::MissingLevels { required: vec![1] });
            }
            let e = (-x).exp();
            let f = |c: C64| {
                let (mut v, mut dv, mut w) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0));
                for (k, a) in t.iter().enumerate() {
                    v += w * a;
                    if k > 0 {
                        dv += k as f64 * w / c * a;
                    }
                    w *= c * e;
                }
                (v - y, dv)
            };
            let mut c = (y - t[0]) / (e * t[1]);
            for _ in 0..50 {
                let (v, _) = f(c);
                // derivative without the 1/c singularity at c = 0
                let mut dv = C64::new(0.0, 0.0);
                let mut w = e;
                for (k, a) in t.iter().enumerate().skip(1) {
                    dv += k as f64 * w * a;
                    w *= c * e;
                }
                let step = v / dv;
                c -= step;
                if step.norm() <= 1e-15 * c.norm().max(1.0) {
                    break;
                }
            }
            Ok((c, f(c).0.norm() / y.norm().max(1e-300)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean: C64 = fits.iter().map(|f| f.0).sum::<C64>() / fits.len() as f64;
    let spread = fits.iter().map(|f| (f.0 - mean).norm()).fold(0.0, f64::max);
    let residual = fits.iter().map(|f| f.1).fold(0.0, f64::max);
    if spread > tol * mean.norm().max(1.0) {
        return Err(Error::Fit(format!("constant varies by {spread:e} over the window (tolerance {tol:e})")));
    }
    Ok(ConstantFit { c: [mean.re, mean.im], spread, residual, window, samples: fits.len() })
}

/// One row of the `C(phi)` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRow {
    pub phi: f64,
    pub c: [f64; 2],
    pub spread: f64,
}

/// `C(phi)` across the Stokes line against the independent `S_beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesJumpReport {
    pub rows: Vec<JumpRow>,
    pub s_beta: [f64; 2],
    /// `C(phi_max) - C(phi_min)` (expected `S_beta`).
    pub full_step: [f64; 2],
    /// `C(0) - C(phi_min)` (expected `S_beta / 2`), when `0` is among the angles.
    pub half_step: Option<[f64; 2]>,
    pub full_step_rel_err: f64,
    pub half_step_rel_err: Option<f64>,
}

/// Settings shared by the resummation pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResumConfig {
    pub kmax: usize,
    pub pmax: f64,
    pub solver: SolverParams,
    pub stokes: StokesParams,
    pub fit: StokesFitParams,
    pub laplace: LaplaceParams,
    /// Trajectory window for the constant fit.
    pub window: (f64, f64),
    pub fit_tol: f64,
}

impl Default for ResumConfig {
    fn default() -> Self {
        ResumConfig {
            kmax: 3,
            pmax: 6.0,
            solver: SolverParams::default(),
            stokes: StokesParams::default(),
            fit: StokesFitParams::default(),
            laplace: LaplaceParams::default(),
            window: (4.0, 8.0),
            fit_tol: 1e-3,
        }
    }
}

/// Window `[x_lo, 2 x_lo]` for the constant fit. `x_lo >= x_min` is the first point
/// of a `0.5`-spaced grid with `Re(x omega) >= b + 1/2` at which the level-2
/// contribution `|c|^2 e^{-2x} |L Y_2(x)|` drops below a tenth of `fit_tol`.
pub fn fit_window(set: &LevelSet, c: C64, x_min: f64, fit_tol: f64, params: &LaplaceParams) -> Result<(f64, f64)> {
    let start = x_min.max(((set.growth + 0.5) / set.omega.re * 2.0).ceil() / 2.0);
    for i in 0..128 {
        let x = start + 0.5 * i as f64;
        let level2 = match set.levels.get(2) {
            None => 0.0,
            Some(b) => {
                let v = laplace_grid(b, set.omega, C64::new(x, 0.0), set.growth, params)?;
                c.norm_sqr() * (-2.0 * x).exp() * (vnorm(&v.value) + v.tail_bound)
            }
        };
        if level2 < 0.1 * fit_tol {
            return Ok((x, 2.0 * x));
        }
    }
    Err(Error::InvalidArgument(format!(
        "no fit window below x = {} keeps the level-2 term under {fit_tol:e}",
        start + 64.0
    )))
}

/// Window `[x_lo, 2 x_lo]` for resummation checks at tolerance `tol`: the fit window
/// of [`fit_window`], moved right in steps of `0.5` until the total truncation
/// bound at `x_lo` (omitted levels and the Laplace tail beyond `pmax`) is below
/// a tenth of `tol`.
pub fn resum_window(
    set: &LevelSet,
    c: C64,
    x_min: f64,
    tol: f64,
    fit_tol: f64,
    params: &LaplaceParams,
) -> Result<(f64, f64)> {
    let (start, _) = fit_window(set, c, x_min, fit_tol, params)?;
    for i in 0..128 {
        let x = start + 0.5 * i as f64;
        match sum_transseries(set, c, C64::new(x, 0.0), 0.1 * tol, params) {
            Ok(_) => return Ok((x, 2.0 * x)),
            Err(Error::TailTooLarge { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidArgument(format!(
        "no window below x = {} keeps the truncation bound under {tol:e}",
        start + 64.0
    )))
}

/// Levels for direction `phi`: a ray solve off the Stokes line, balanced averages on it.
/// Returns the level set and the `S_beta` estimate used (if any).
pub fn levels_for_direction(spec: &SystemSpec, phi: f64, cfg: &ResumConfig) -> Result<(LevelSet, Option<C64>)> {
    if phi == 0.0 {
        let br = solve_stokes_branches(spec, cfg.kmax, cfg.pmax, &cfg.solver, &cfg.stokes)?;
        let rep = estimate_stokes_constant(spec.beta(), &br.plus[0], &br.minus[0], &br.plus[1], &cfg.fit)?;
        let s = rep.s_beta();
        Ok((LevelSet::balanced(&br.plus, s, &cfg.laplace)?, Some(s)))
    } else {
        let levels = solve_ray_branches(spec, phi, cfg.kmax, cfg.pmax, &cfg.solver)?;
        Ok((LevelSet::ray(levels, &cfg.laplace)?, None))
    }
}

/// `C(phi)` for each angle from one trajectory, compared with `S_beta`.
pub fn stokes_jump(
    spec: &SystemSpec,
    traj: &Trajectory,
    phis: &[f64],
    s_beta: C64,
    cfg: &ResumConfig,
) -> Result<StokesJumpReport> {
    let sets = phis.iter().map(|&phi| levels_for_direction(spec, phi, cfg).map(|r| r.0)).collect::<Result<Vec<_>>>()?;
    stokes_jump_from_sets(&sets, traj, s_beta, cfg)
}

/// [`stokes_jump`] on level sets prepared by the caller (one per angle).
pub fn stokes_jump_from_sets(
    sets: &[LevelSet],
    traj: &Trajectory,
    s_beta: C64,
    cfg: &ResumConfig,
) -> Result<StokesJumpReport> {
    if sets.len() < 2 {
        return Err(Error::InvalidArgument("need at least two angles".into()));
    }
    let mut order: Vec<&LevelSet> = sets.iter().collect();
    order.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    let mut rows = Vec::new();
    for set in order {
        let fit = extract_c(set, traj, cfg.window, cfg.fit_tol, &cfg.laplace)?;
        rows.push(JumpRow { phi: set.phi, c: fit.c, spread: fit.spread });
    }
    let c = |r: &JumpRow| C64::new(r.c[0], r.c[1]);
    let lo = c(&rows[0]);
    let full = c(rows.last().expect("two rows")) - lo;
    let rel = |d: C64, e: C64| (d - e).norm() / e.norm().max(1e-300);
    let half = rows.iter().find(|r| r.phi == 0.0).map(|r| c(r) - lo);
    Ok(StokesJumpReport {
        s_beta: [s_beta.re, s_beta.im],
        full_step: [full.re, full.im],
        half_step: half.map(|h| [h.re, h.im]),
        full_step_rel_err: rel(full, s_beta),
        half_step_rel_err: half.map(|h| rel(h, 0.5 * s_beta)),
        rows,
    })
}

/// Resummed values against an oracle at real sample points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResummationReport {
    pub phi: f64,
    pub c: [f64; 2],
    pub xs: Vec<f64>,
    /// `resummed[i][r] = [re, im]`.
    pub resummed: Vec<Vec<[f64; 2]>>,
    pub oracle: Vec<Vec<[f64; 2]>>,
    pub rel_err: Vec<f64>,
    pub max_rel_err: f64,
    pub max_tail_bound: f64,
}

/// Sums the trans-series at each `x` and compares with `oracle(x)`.
pub fn resummation_report<O>(
    set: &LevelSet,
    c: C64,
    xs: &[f64],
    tol: f64,
    params: &LaplaceParams,
    oracle: O,
) -> Result<ResummationReport>
where
    O: Fn(f64) -> Result<Vec<C64>> + Sync,
{
    let rows = xs
        .par_iter()
        .map(|&x| {
            let v = sum_transseries(set, c, C64::new(x, 0.0), tol, params)?;
            let o = oracle(x)?;
            let err = v.value.iter().zip(&o).map(|(a, b)| (a - b).norm() / b.norm().max(1e-300)).fold(0.0, f64::max);
            Ok((v, o, err))
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = |v: &[C64]| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>();
    Ok(ResummationReport {
        phi: set.phi,
        c: [c.re, c.im],
        xs: xs.to_vec(),
        resummed: rows.iter().map(|r| pairs(&r.0.value)).collect(),
        oracle: rows.iter().map(|r| pairs(&r.1)).collect(),
        rel_err: rows.iter().map(|r| r.2).collect(),
        max_rel_err: rows.iter().map(|r| r.2).fold(0.0, f64::max),
        max_tail_bound: rows.iter().map(|r| r.0.level_tail + r.0.laplace_tail).fold(0.0, f64::max),
    })
}

/// Central-difference residual `|y' - rhs(x, y)| / |y|` of the summed solution at real `x`.
pub fn transseries_ode_residual(
    spec: &SystemSpec,
    set: &LevelSet,
    c: C64,
    x: f64,
    h: f64,
    params: &LaplaceParams,
) -> Result<f64> {
    let at = |x: f64| sum_transseries(set, c, C64::new(x, 0.0), 1.0, params).map(|v| v.value);
    let (ym2, ym, y0, yp, yp2) = (at(x - 2.0 * h)?, at(x - h)?, at(x)?, at(x + h)?, at(x + 2.0 * h)?);
    let f = spec.rhs(C64::new(x, 0.0), &y0);
    let mut out = 0.0f64;
    for r in 0..spec.n {
        let d = (ym2[r] - 8.0 * ym[r] + 8.0 * yp[r] - yp2[r]) / (12.0 * h);
        out = out.max((d - f[r]).norm() / y0[r].norm().max(1e-300));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branch::{BranchStats, Singularity};
    use crate::cases::{case, eqpert};
    use crate::grid::{Grid1, Mesh, MeshParams};

    fn grid_branch(pmax: f64, exps: Vec<Option<C64>>, f: impl Fn(f64) -> C64) -> BranchGrid {
        let mesh = Mesh::new(MeshParams { q: 12, ..MeshParams::default() }, pmax).unwrap();
        BranchGrid {
            phi: 0.0,
            level: 0,
            label: BranchLabel::Plus,
            comps: vec![Grid1::from_fn(&mesh, exps, f)],
            singularities: Vec::<Singularity>::new(),
            stats: BranchStats::default(),
        }
    }

    #[test]
    fn transforms_of_monomials() {
        let p = LaplaceParams::default();
        let one = grid_branch(12.0, vec![None; 13], |_| C64::new(1.0, 0.0));
        let lin = grid_branch(12.0, vec![None; 13], |s| C64::new(s, 0.0));
        for &x in &[2.0, 5.0, 10.0] {
            let v = laplace_ray(&one, C64::new(x, 0.0), &p).unwrap();
            assert!((v.value[0].re - 1.0 / x).abs() < 1e-12 + v.tail_bound, "{x}: {v:?}");
            let v = laplace_ray(&lin, C64::new(x, 0.0), &p).unwrap();
            assert!((v.value[0].re - 1.0 / (x * x)).abs() < 1e-12 + v.tail_bound);
        }
        assert!(matches!(laplace_ray(&one, C64::new(0.1, 0.0), &p), Err(Error::OutsideHalfPlane { .. })));
    }

    #[test]
    fn transform_of_shifted_singular_power() {
        let p = LaplaceParams::default();
        let mut exps = vec![None; 13];
        exps[1] = Some(C64::new(-0.5, 0.0));
        let g = 1.0 / std::f64::consts::PI.sqrt();
        let b =
            grid_branch(
                12.0,
                exps,
                |s| if s > 1.0 { C64::new(g * (s - 1.0).powf(-0.5), 0.0) } else { C64::new(0.0, 0.0) },
            );
        for &x in &[2.0, 5.0, 10.0] {
            let v = laplace_ray(&b, C64::new(x, 0.0), &p).unwrap();
            let exact = x.powf(-0.5) * (-x).exp();
            assert!((v.value[0].re - exact).abs() < 1e-10 * exact + v.tail_bound, "{x} {v:?} {exact}");
        }
    }

    #[test]
    fn shift_rule() {
        let c = eqpert(0.1).unwrap();
        let lv = solve_ray_branches(&c.spec, 0.2, 1, 4.0, &SolverParams::default()).unwrap();
        let p = LaplaceParams::default();
        let real = solve_stokes_branches(&c.spec, 1, 4.0, &SolverParams::default(), &StokesParams::default()).unwrap();
        let y1 = &real.plus[1];
        let x = C64::new(6.0, 0.0);
        let direct = laplace_ray(y1, x, &p).unwrap();
        let shifted = laplace_ray(&y1.shifted(1), x, &p).unwrap();
        let expect = direct.value[0] * (-x).exp();
        assert!((shifted.value[0] - expect).norm() < 1e-12 + shifted.tail_bound + direct.tail_bound);
        // ray and real-axis transforms of the entire level one agree
        let ray = laplace_ray(&lv[1], x, &p).unwrap();
        assert!((ray.value[0] - direct.value[0]).norm() < 1e-9);
    }

    #[test]
    fn exa1_resummation_matches_closed_form() {
        let c = case("exa1").unwrap();
        let cfg = ResumConfig { kmax: 2, pmax: 5.0, ..ResumConfig::default() };
        let levels = solve_ray_branches(&c.spec, 0.3, cfg.kmax, cfg.pmax, &cfg.solver).unwrap();
        let set = LevelSet::ray(levels, &cfg.laplace).unwrap();
        for &cc in &[0.0, 1.0, 0.7] {
            let rep = resummation_report(&set, C64::new(cc, 0.0), &[5.0, 7.0, 10.0], 1e-6, &cfg.laplace, |x| {
                Ok(vec![c.oracle_eval(cc, C64::new(x, 0.0))?])
            })
            .unwrap();
            assert!(rep.max_rel_err < 1e-8, "{rep:?}");
        }
    }

    #[test]
    fn ode_oracle_reproduces_exa1() {
        let c = case("exa1").unwrap();
        let x0 = C64::new(2.0, 0.0);
        let y0 = c.oracle_eval(0.7, x0).unwrap();
        let tr = ode_oracle(&c.spec, x0, &[y0], C64::new(6.0, 1.0), 8, &OdeParams::default()).unwrap();
        assert_eq!(tr.len(), 9);
        for i in 0..tr.len() {
            let exact = c.oracle_eval(0.7, tr.x(i)).unwrap();
            assert!((tr.y(i)[0] - exact).norm() < 1e-11 * exact.norm(), "{i} {} {exact}", tr.y(i)[0]);
        }
    }

    #[test]
    fn extract_c_on_constructed_trajectory() {
        let c = case("exa1").unwrap();
        let cfg = ResumConfig { kmax: 2, pmax: 5.0, ..ResumConfig::default() };
        let levels = solve_ray_branches(&c.spec, -0.3, cfg.kmax, cfg.pmax, &cfg.solver).unwrap();
        let set = LevelSet::ray(levels, &cfg.laplace).unwrap();
        let x0 = C64::new(4.0, 0.0);
        let tr =
            ode_oracle(&c.spec, x0, &[c.oracle_eval(0.7, x0).unwrap()], C64::new(8.0, 0.0), 16, &OdeParams::default())
                .unwrap();
        let fit = extract_c(&set, &tr, (4.0, 8.0), 1e-4, &cfg.laplace).unwrap();
        assert!((fit.c() - C64::new(0.7, 0.0)).norm() < 1e-5, "{fit:?}");
    }

    #[test]
    fn geometric_tail_requires_decay() {
        assert_eq!(geometric_tail(&[1.0, 1.0, 0.0], 0.1, 1e-6).unwrap(), 0.0);
        assert!(geometric_tail(&[1.0, 1.0, 2.0, 4.0], 0.6, 1e-6).is_err());
        let t = geometric_tail(&[1.0, 1.0, 0.5], 0.1, 1e-6).unwrap();
        assert!((t - 0.5 * 0.01 * 0.05 / 0.95).abs() < 1e-15);
    }
}
