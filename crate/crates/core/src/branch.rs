//! Branches `Y_k^+` / `Y_k^-` on the Stokes line `p > 0`.
//!
//! The branches are limits of the ray solutions `Y_k(tau e^{i delta})` as
//! `delta -> +0` (plus) or `delta -> -0` (minus). Rays with `delta_j = delta_0 2^-j`
//! are solved independently and, at each node, the values are extrapolated to
//! `delta = 0` by Neville's scheme. Extrapolation is trusted only where the
//! singularity at the nearest integer lies far enough from the smallest rays used;
//! the remaining nodes (within about `1e-3` of an integer) are filled from a
//! two-sided least-squares fit of the local singular model
//!
//! ```text
//! Y(p) = (j - p)^e A(p) + R(p),   e = (k + j) beta - 1,
//! ```
//!
//! with polynomial `A`, `R`, continued across `p = j` above (plus) or below
//! (minus) the axis; an integer exponent uses `(j - p)^e ln(j - p)`. Left of
//! `p = 1` both branches are the same germ, so at `j = 1` they are fitted
//! together with shared `A` and `R`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1, Mesh};
use crate::scalar::{is_nonpositive_integer, C64};
use crate::special::rpow;
use crate::system::SystemSpec;
use crate::volterra::{solve_ray, SolverParams};

/// Which continuation of `Y_k` a grid holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLabel {
    /// Straight ray `arg p = phi != 0` (values stored against `tau = |p|`).
    Ray,
    Plus,
    Minus,
    /// Crossing `p > 0` once through `(j, j + 1)` from below, then staying above.
    MinusPowPlus(usize),
    Balanced,
}

impl std::fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BranchLabel::Ray => write!(f, "ray"),
            BranchLabel::Plus => write!(f, "plus"),
            BranchLabel::Minus => write!(f, "minus"),
            BranchLabel::MinusPowPlus(j) => write!(f, "minus^{j}plus"),
            BranchLabel::Balanced => write!(f, "ba"),
        }
    }
}

/// Known singular point of a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub location: f64,
    /// Exponents `e` of the `(p - location)^e` terms that may be present.
    pub exponents: Vec<[f64; 2]>,
    /// `true` when some exponent is an integer and comes with a logarithm.
    pub log: bool,
}

/// Quality indicators of a branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    /// Worst midpoint residual of the underlying ray solves.
    pub ray_residual: f64,
    /// Largest spread between the two best extrapolants at resolved nodes.
    pub extrapolation_spread: f64,
    /// Number of nodes filled from the local singular model.
    pub filled_nodes: usize,
    /// Worst relative residual of the local fits on their windows.
    pub fill_residual: f64,
}

/// Vector function sampled on a mesh along `arg p = phi`.
#[derive(Clone, Debug)]
pub struct BranchGrid {
    pub phi: f64,
    pub level: usize,
    pub label: BranchLabel,
    /// One grid per component.
    pub comps: Vec<Grid1>,
    pub singularities: Vec<Singularity>,
    pub stats: BranchStats,
}

impl BranchGrid {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.comps[0].mesh
    }

    /// Pointwise linear combination `a self + b other` (metadata of `self`).
    pub fn axpby(&self, a: C64, other: &BranchGrid, b: C64, label: BranchLabel) -> BranchGrid {
        BranchGrid {
            comps: self.comps.iter().zip(&other.comps).map(|(x, y)| x.axpby(a, y, b)).collect(),
            label,
            ..self.clone()
        }
    }

    /// Component values at node `i`.
    pub fn node(&self, i: usize) -> Vec<C64> {
        self.comps.iter().map(|g| g.value(i)).collect()
    }
}

/// Parameters of the `delta -> 0` extrapolation and the local fill.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesParams {
    /// Largest ray angle.
    pub delta0: f64,
    /// Number of rays per side (`delta_j = delta0 2^-j`).
    pub rays: usize,
    /// Number of rays entering each extrapolation.
    pub extrapolation_points: usize,
    /// Largest admissible `delta / rho`, with `rho` the distance in angle to the
    /// nearest singularity.
    pub rho_fraction: f64,
    /// Degree of the polynomial coefficients of the local model.
    pub fill_degree: usize,
    /// Half-width of the fit window around an integer.
    pub fill_window: f64,
}

impl Default for StokesParams {
    fn default() -> Self {
        StokesParams {
            delta0: 0.04,
            rays: 14,
            extrapolation_points: 6,
            rho_fraction: 0.15,
            fill_degree: 4,
            fill_window: 0.02,
        }
    }
}

impl StokesParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0 && self.delta0 < 0.5) {
            return Err(Error::InvalidArgument("delta0 must lie in (0, 0.5)".into()));
        }
        if self.extrapolation_points < 2 || self.extrapolation_points > self.rays {
            return Err(Error::InvalidArgument("need 2 <= extrapolation_points <= rays".into()));
        }
        if !(self.rho_fraction > 0.0 && self.rho_fraction < 1.0) || !(self.fill_window > 0.0 && self.fill_window < 0.5)
        {
            return Err(Error::InvalidArgument("rho_fraction and fill_window must lie in (0, 1) and (0, 0.5)".into()));
        }
        Ok(())
    }

    fn delta(&self, j: usize) -> f64 {
        self.delta0 * 0.5f64.powi(j as i32)
    }
}

/// Plus and minus branches of all levels `0..=kmax`.
#[derive(Clone, Debug)]
pub struct StokesBranches {
    pub plus: Vec<BranchGrid>,
    pub minus: Vec<BranchGrid>,
}

impl StokesBranches {
    pub fn kmax(&self) -> usize {
        self.plus.len() - 1
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.plus[0].mesh()
    }
}

/// Solves all levels on a single ray `arg p = phi` and wraps them as branch grids.
pub fn solve_ray_branches(
    spec: &SystemSpec,
    phi: f64,
    kmax: usize,
    pmax: f64,
    params: &SolverParams,
) -> Result<Vec<BranchGrid>> {
    let mesh = Mesh::new(params.mesh, pmax)?;
    let sol = solve_ray(spec, phi, kmax, &mesh, params, C64::new(1.0, 0.0))?;
    Ok(sol
        .levels
        .into_iter()
        .zip(&sol.stats)
        .enumerate()
        .map(|(k, (comps, st))| BranchGrid {
            phi,
            level: k,
            label: BranchLabel::Ray,
            comps,
            singularities: origin_singularity(spec, k).into_iter().collect(),
            stats: BranchStats { ray_residual: st.midpoint_residual, ..BranchStats::default() },
        })
        .collect())
}

fn origin_singularity(spec: &SystemSpec, k: usize) -> Option<Singularity> {
    (k > 0).then(|| {
        let e = spec.beta() * k as f64 - 1.0;
        Singularity { location: 0.0, exponents: vec![[e.re, e.im]], log: false }
    })
}

/// Exponents (modulo integers) of the singularity of `Y_k^+` at the integer `j`:
/// it stems from `Y_{k+j}(p - j)` and `Y_{k+m}^+(p - m)` near their own
/// singularities, all of which carry `(k + j) beta - 1`.
pub fn local_exponents(spec: &SystemSpec, k: usize, j: usize) -> Vec<C64> {
    vec![spec.beta() * (k + j) as f64 - 1.0]
}

fn is_integer(e: C64) -> bool {
    e.im == 0.0 && e.re == e.re.round()
}

/// Solves the plus and minus branches of levels `0..=kmax` on `[0, pmax]`.
pub fn solve_stokes_branches(
    spec: &SystemSpec,
    kmax: usize,
    pmax: f64,
    params: &SolverParams,
    stokes: &StokesParams,
) -> Result<StokesBranches> {
    stokes.validate()?;
    if stokes.delta0 >= spec.eigen_ray_gap() {
        return Err(Error::InvalidArgument("delta0 reaches another eigenvalue ray".into()));
    }
    // cells touching an integer must resolve the nearest ray's distance to it
    let delta_min = stokes.delta(stokes.rays - 1);
    if params.mesh.h_min > 2.0 * delta_min {
        return Err(Error::InvalidArgument(format!(
            "h_min = {} exceeds twice the smallest ray angle {delta_min:e}",
            params.mesh.h_min
        )));
    }
    let mesh = Mesh::new(params.mesh, pmax)?;
    let jobs: Vec<(f64, usize)> = [1.0, -1.0].iter().flat_map(|s| (0..stokes.rays).map(move |j| (*s, j))).collect();
    let sols = jobs
        .par_iter()
        .map(|(s, j)| solve_ray(spec, s * stokes.delta(*j), kmax, &mesh, params, C64::new(1.0, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    let (plus_rays, minus_rays) = sols.split_at(stokes.rays);
    let ray_residual = sols.iter().flat_map(|s| s.stats.iter().map(|st| st.midpoint_residual)).fold(0.0, f64::max);

    let label = |sigma: f64| if sigma > 0.0 { BranchLabel::Plus } else { BranchLabel::Minus };
    let mut plus = Vec::with_capacity(kmax + 1);
    let mut minus = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let mut stats = [BranchStats { ray_residual, ..BranchStats::default() }; 2];
        let mut singularities: Vec<Singularity> = origin_singularity(spec, k).into_iter().collect();
        let mut exps = vec![None; mesh.units + 1];
        if k > 0 {
            exps[0] = Some(spec.beta() * k as f64 - 1.0);
        }
        for j in 1..=mesh.units {
            let e = local_exponents(spec, k, j);
            exps[j] = e.iter().copied().filter(|e| !is_integer(*e)).min_by(|a, b| a.re.total_cmp(&b.re));
            singularities.push(Singularity {
                location: j as f64,
                exponents: e.iter().map(|z| [z.re, z.im]).collect(),
                log: e.iter().any(|z| is_integer(*z)),
            });
        }
        let mut comps = [Vec::with_capacity(spec.n), Vec::with_capacity(spec.n)];
        for r in 0..spec.n {
            let mut vs = [
                extrapolate(&mesh, plus_rays, k, r, 1.0, stokes, spec, &mut stats[0]),
                extrapolate(&mesh, minus_rays, k, r, -1.0, stokes, spec, &mut stats[1]),
            ];
            fill_near_integers(&mesh, &mut vs, spec, k, stokes, &mut stats)
                .map_err(|e| Error::Fit(format!("level {k}, component {r}: {e}")))?;
            for (c, v) in comps.iter_mut().zip(vs) {
                c.push(Grid1::from_values(&mesh, exps.clone(), v));
            }
        }
        for ((out, c), (st, sigma)) in
            [&mut plus, &mut minus].into_iter().zip(comps).zip(stats.into_iter().zip([1.0, -1.0]))
        {
            out.push(BranchGrid {
                phi: 0.0,
                level: k,
                label: label(sigma),
                comps: c,
                singularities: singularities.clone(),
                stats: st,
            });
        }
    }
    Ok(StokesBranches { plus, minus })
}

/// Angular distance from `t` to the nearest singular direction.
fn rho(t: f64, units: usize, gap: f64) -> f64 {
    (1..=units + 1).map(|j| (t / j as f64).ln().abs()).fold(gap, f64::min)
}

/// Neville-extrapolated node values; unresolved nodes are set to NaN.
#[allow(clippy::too_many_arguments)]
fn extrapolate(
    mesh: &Arc<Mesh>,
    rays: &[crate::volterra::RaySolution],
    k: usize,
    r: usize,
    sigma: f64,
    stokes: &StokesParams,
    spec: &SystemSpec,
    stats: &mut BranchStats,
) -> Vec<C64> {
    let gap = spec.eigen_ray_gap();
    let np = stokes.extrapolation_points;
    let mut spread = 0.0f64;
    let out = mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let limit = stokes.rho_fraction * rho(t, mesh.units, gap);
            let Some(start) = (0..stokes.rays).find(|&j| stokes.delta(j) <= limit) else {
                return C64::new(f64::NAN, 0.0);
            };
            if start + np > stokes.rays {
                return C64::new(f64::NAN, 0.0);
            }
            let xs: Vec<f64> = (start..start + np).map(|j| sigma * stokes.delta(j)).collect();
            let ys: Vec<C64> = (start..start + np).map(|j| rays[j].levels[k][r].value(i)).collect();
            let (best, prev) = neville_at_zero(&xs, &ys);
            spread = spread.max((best - prev).norm() / best.norm().max(1e-300));
            best
        })
        .collect();
    stats.extrapolation_spread = stats.extrapolation_spread.max(spread);
    out
}

/// Value at 0 of the interpolating polynomial, and the value using one point fewer.
fn neville_at_zero(xs: &[f64], ys: &[C64]) -> (C64, C64) {
    let n = xs.len();
    let mut p = ys.to_vec();
    let mut prev = p[n - 1];
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (p[i] * xs[i + m] - p[i + 1] * xs[i]) / (xs[i + m] - xs[i]);
        }
        if m == n - 2 {
            prev = p[0];
        }
    }
    (p[0], prev)
}

/// Basis functions of the local model at signed offset `d = p - j`.
fn local_basis(d: f64, exps: &[C64], degree: usize, sigma: f64) -> Vec<C64> {
    let mut out = Vec::new();
    for e in exps {
        let s = if is_integer(*e) {
            // (j - p)^e ln(j - p), continued across j on the chosen side
            let pw = (-d).powi(e.re as i32);
            let lg = if d < 0.0 { C64::new((-d).ln(), 0.0) } else { C64::new(d.ln(), -sigma * PI) };
            lg * pw
        } else if d < 0.0 {
            rpow(-d, *e)
        } else {
            rpow(d, *e) * (C64::new(0.0, -sigma * PI) * e).exp()
        };
        if is_nonpositive_integer(*e) && !is_integer(*e) {
            continue;
        }
        for m in 0..=degree {
            out.push(s * d.powi(m as i32));
        }
    }
    for m in 0..=degree {
        out.push(C64::new(d.powi(m as i32), 0.0));
    }
    out
}

/// Replaces unresolved nodes next to each integer by a least-squares fit of
/// the local singular model to resolved nodes nearby. Both branches coincide
/// left of `p = 1` and so share the germ there: that fit is done jointly.
fn fill_near_integers(
    mesh: &Arc<Mesh>,
    vs: &mut [Vec<C64>; 2],
    spec: &SystemSpec,
    k: usize,
    stokes: &StokesParams,
    stats: &mut [BranchStats; 2],
) -> std::result::Result<(), String> {
    const SIGMAS: [f64; 2] = [1.0, -1.0];
    for j in 1..=mesh.units {
        let groups: Vec<Vec<usize>> = if j == 1 { vec![vec![0, 1]] } else { vec![vec![0], vec![1]] };
        for group in groups {
            let data: Vec<(&[C64], f64)> = group.iter().map(|&b| (vs[b].as_slice(), SIGMAS[b])).collect();
            let Some((coef, scale, res)) = fit_local(mesh, &data, spec, k, j, stokes)? else {
                continue;
            };
            let exps = local_exponents(spec, k, j);
            for &b in &group {
                let v = &mut vs[b];
                let targets: Vec<usize> =
                    (0..v.len()).filter(|&i| v[i].re.is_nan() && mesh.node_integer_offset(i).0 == j).collect();
                for &i in &targets {
                    let d = mesh.node_integer_offset(i).1;
                    let basis = local_basis(d, &exps, stokes.fill_degree, SIGMAS[b]);
                    v[i] = basis.iter().zip(coef.iter()).zip(&scale).map(|((b, c), s)| b * c / s).sum();
                }
                stats[b].filled_nodes += targets.len();
                stats[b].fill_residual = stats[b].fill_residual.max(res);
            }
        }
    }
    for v in vs.iter() {
        if let Some(i) = v.iter().position(|z| z.re.is_nan()) {
            return Err(format!("node {i} could not be resolved"));
        }
    }
    Ok(())
}

/// Fits the local model at integer `j` to the resolved nodes of the given
/// branches; `None` when no node near `j` needs filling.
fn fit_local(
    mesh: &Arc<Mesh>,
    data: &[(&[C64], f64)],
    spec: &SystemSpec,
    k: usize,
    j: usize,
    stokes: &StokesParams,
) -> std::result::Result<Option<(DVector<C64>, Vec<f64>, f64)>, String> {
    let near = |i: usize| mesh.node_integer_offset(i).0 == j;
    if !data.iter().any(|(v, _)| (0..v.len()).any(|i| v[i].re.is_nan() && near(i))) {
        return Ok(None);
    }
    let exps = local_exponents(spec, k, j);
    let nb = local_basis(0.5, &exps, stokes.fill_degree, 1.0).len();
    let mut window = stokes.fill_window;
    let samples = loop {
        let s: Vec<(usize, usize)> = data
            .iter()
            .enumerate()
            .flat_map(|(b, (v, _))| {
                (0..v.len())
                    .filter(move |&i| near(i) && mesh.node_integer_offset(i).1.abs() <= window && !v[i].re.is_nan())
                    .map(move |i| (b, i))
            })
            .collect();
        if s.len() >= 3 * nb * data.len() || window >= 0.25 {
            break s;
        }
        window *= 2.0;
    };
    if samples.len() < nb {
        return Err(format!("only {} resolved samples near p = {j}", samples.len()));
    }
    // columns scaled to unit size at the window edge for conditioning
    let scale: Vec<f64> =
        local_basis(window, &exps, stokes.fill_degree, 1.0).iter().map(|z| z.norm().max(1e-300)).collect();
    let mut a = DMatrix::<C64>::zeros(samples.len(), nb);
    let mut rhs = DVector::<C64>::zeros(samples.len());
    // rows weighted by the leading singular size so that all samples count alike
    let lead = exps.iter().map(|e| e.re).fold(0.0, f64::min);
    for (row, &(b, i)) in samples.iter().enumerate() {
        let (v, sigma) = data[b];
        let d = mesh.node_integer_offset(i).1;
        let w = d.abs().powf(-lead);
        for (col, x) in local_basis(d, &exps, stokes.fill_degree, sigma).into_iter().enumerate() {
            a[(row, col)] = x * w / scale[col];
        }
        rhs[row] = v[i] * w;
    }
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&rhs, 1e-13 * svd.singular_values.max()).map_err(|e| e.to_string())?;
    let res = (&a * &coef - &rhs).norm() / rhs.norm().max(1e-300);
    Ok(Some((coef, scale, res)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{case, eqpert};

    #[test]
    fn neville_reproduces_polynomials() {
        let xs = [0.4, 0.2, 0.1, 0.05];
        let ys: Vec<C64> = xs.iter().map(|x| C64::new(3.0 - 2.0 * x + x * x * x, *x)).collect();
        let (v, _) = neville_at_zero(&xs, &ys);
        assert!((v - C64::new(3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn worked_example_branches_coincide() {
        let c = case("exa1").unwrap();
        // the last unit is only fitted from the left near its end: stay below 2.5
        let br = solve_stokes_branches(&c.spec, 1, 2.5, &SolverParams::default(), &StokesParams::default()).unwrap();
        let m = br.mesh().clone();
        for b in [&br.plus[0], &br.minus[0]] {
            let err = (0..m.nnodes())
                .filter(|&i| m.nodes()[i] <= 2.5)
                .map(|i| (b.comps[0].value(i) - 1.0).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "{err:e}");
        }
    }

    #[test]
    fn perturbed_branches_match_closed_form() {
        let c = eqpert(0.1).unwrap();
        let br = solve_stokes_branches(&c.spec, 1, 2.5, &SolverParams::default(), &StokesParams::default()).unwrap();
        let m = br.mesh().clone();
        for (sigma, b) in [(1.0, &br.plus[0]), (-1.0, &br.minus[0])] {
            let mut worst = 0.0f64;
            for (i, &t) in m.nodes().iter().enumerate().filter(|(_, t)| **t <= 2.5) {
                let exact = c.oracle_y0_branch(t, sigma).unwrap();
                let d = m.node_integer_distance(i).min(1.0);
                worst = worst.max((b.comps[0].value(i) - exact).norm() * d.sqrt());
            }
            assert!(worst < 1e-9, "sigma {sigma}: {worst:e} {:?}", b.stats);
        }
    }
}
