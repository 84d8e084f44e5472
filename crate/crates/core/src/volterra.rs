//! Volterra marching for the Borel-plane equations on a ray `p = tau e^{i phi}`.
//!
//! Level 0 solves `(Lambda - p) Y = F0 - B int_0^p Y + N(Y)`, level `k >= 1` the
//! linear equation `(Lambda - p - k) Y_k + B int_0^p Y_k - sum_j D_j * (Y_k)_j = R_k`.
//! Functions are stored in the ray variable `tau`; a convolution along the ray is
//! `omega int_0^tau f(s) g(tau - s) ds` with `omega = e^{i phi}`.
//!
//! Each cell is solved by block collocation at its Gauss nodes: the diagonal part
//! and the exact integral weights are inverted directly, while convolution terms
//! touching the current cell are resolved by a damped fixed-point iteration.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_weights, conv_at, conv_exps, ConvPart, Grid1, Mesh, MeshParams};
use crate::scalar::C64;
use crate::special::{rgamma, rpow};
use crate::system::{MultiIndex, SystemSpec};

/// Numerical parameters of a ray solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub mesh: MeshParams,
    /// Relative tolerance of the inner fixed-point iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor of the fixed-point update (1 = undamped).
    pub damping: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        // near-singular solutions on rays close to the Stokes line need more nodes per
        // cell; h_min matches the smallest ray angle used for the Stokes-line branches
        SolverParams {
            mesh: MeshParams { q: 12, h_min: 5e-6, ..MeshParams::default() },
            tol: 1e-14,
            max_iter: 200,
            damping: 1.0,
        }
    }
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Borel-plane kernels on one ray.
#[derive(Clone, Debug)]
pub struct KernelSet {
    pub omega: C64,
    /// One entry per multi-index `l` present in the Taylor table.
    pub terms: Vec<KernelTerm>,
    /// `D_j` per `j`, per component; empty until built from `Y_0`.
    pub d: Vec<Vec<Grid1>>,
}

/// `G_l` (as a grid per component, `None` when identically zero) and `g_{0,l}`.
#[derive(Clone, Debug)]
pub struct KernelTerm {
    pub l: MultiIndex,
    pub g: Vec<Option<Grid1>>,
    pub g0: Vec<C64>,
}

impl KernelSet {
    /// `G_l(p) = sum_{m >= 1} g_{m,l} p^{m-1} / Gamma(m)` sampled on the ray.
    pub fn new(spec: &SystemSpec, mesh: &Arc<Mesh>, omega: C64) -> KernelSet {
        let mut by_l: HashMap<MultiIndex, (Vec<Vec<(usize, C64)>>, Vec<C64>)> = HashMap::new();
        for ((m, l), v) in &spec.g {
            let e = by_l.entry(l.clone()).or_insert_with(|| (vec![Vec::new(); spec.n], vec![zero(); spec.n]));
            for (r, c) in v.iter().enumerate() {
                if *c == zero() {
                    continue;
                }
                if *m == 0 {
                    e.1[r] = *c;
                } else {
                    e.0[r].push((*m, *c));
                }
            }
        }
        let mut keys: Vec<MultiIndex> = by_l.keys().cloned().collect();
        keys.sort();
        let terms = keys
            .into_iter()
            .map(|l| {
                let (poly, g0) = by_l.remove(&l).expect("key present");
                let g = poly
                    .into_iter()
                    .map(|cs| {
                        (!cs.is_empty()).then(|| {
                            Grid1::from_fn(mesh, vec![], |tau| {
                                let p = omega * tau;
                                cs.iter()
                                    .map(|(m, c)| c * p.powi(*m as i32 - 1) * rgamma(C64::new(*m as f64, 0.0)))
                                    .sum()
                            })
                        })
                    })
                    .collect();
                KernelTerm { l, g, g0 }
            })
            .collect();
        KernelSet { omega, terms, d: Vec::new() }
    }

    /// `G_l(0) = 0` for `|l| = 1` and `D_j(0) = 0` (checked on the first node).
    pub fn check_invariants(&self) -> bool {
        let tiny = |g: &Grid1| g.value(0).norm() <= 1e-6 * (1.0 + g.max_abs());
        let g_ok = self.terms.iter().filter(|t| SystemSpec::degree(&t.l) == 1).all(|t| t.g.iter().flatten().all(tiny));
        g_ok && self.d.iter().flatten().all(tiny)
    }
}

/// `omega (f * g)` on the whole ray, in parallel over nodes.
pub fn ray_convolve(f: &Grid1, g: &Grid1, omega: C64) -> Grid1 {
    let mesh = &f.mesh;
    let q = mesh.q();
    let values: Vec<C64> = (0..mesh.nnodes())
        .into_par_iter()
        .map(|i| omega * conv_at(f, g, mesh.nodes()[i], i / q, ConvPart::All))
        .collect();
    Grid1::from_values(mesh, conv_exps(f, g), values)
}

/// Graded series with grid coefficients: `series[s]` multiplies `xi^s` (`None` = 0).
type GradedGrid = Vec<Option<Grid1>>;

fn graded_mul(a: &GradedGrid, b: &GradedGrid, kk: usize, omega: C64) -> GradedGrid {
    let mut out: GradedGrid = vec![None; kk + 1];
    for (s, o) in out.iter_mut().enumerate() {
        for i in 0..=s {
            if let (Some(x), Some(y)) = (&a[i], &b[s - i]) {
                let t = ray_convolve(x, y, omega);
                *o = Some(match o.take() {
                    Some(acc) => acc.axpby(C64::new(1.0, 0.0), &t, C64::new(1.0, 0.0)),
                    None => t,
                });
            }
        }
    }
    out
}

/// `[N(sum_{m < k} xi^m Y_m)]_{xi^k}` per component (the right-hand side `R_k`);
/// with `k = 0` this is `N(Y_0)` itself.
pub fn graded_nonlinearity(kernels: &KernelSet, levels: &[Vec<Grid1>], k: usize, n: usize) -> Vec<Option<Grid1>> {
    let omega = kernels.omega;
    let mut out: Vec<Option<Grid1>> = vec![None; n];
    let mut powers: Vec<Vec<GradedGrid>> = vec![Vec::new(); n];
    for term in &kernels.terms {
        let mut prod: Option<GradedGrid> = None;
        for (i, &e) in term.l.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if powers[i].is_empty() {
                let base: GradedGrid = (0..=k)
                    .map(|m| if m < k || k == 0 { levels.get(m).map(|lv| lv[i].clone()) } else { None })
                    .collect();
                powers[i].push(base);
            }
            while powers[i].len() < e {
                let next = graded_mul(powers[i].last().expect("seeded"), &powers[i][0], k, omega);
                powers[i].push(next);
            }
            let pw = &powers[i][e - 1];
            prod = Some(match prod {
                None => pw.clone(),
                Some(p) => graded_mul(&p, pw, k, omega),
            });
        }
        let Some(pk) = prod.and_then(|p| p[k].clone()) else { continue };
        for r in 0..n {
            let mut acc: Option<Grid1> = None;
            if let Some(g) = &term.g[r] {
                acc = Some(ray_convolve(g, &pk, omega));
            }
            if term.g0[r] != zero() {
                let t = pk.scale(term.g0[r]);
                acc = Some(match acc {
                    Some(a) => a.axpby(C64::new(1.0, 0.0), &t, C64::new(1.0, 0.0)),
                    None => t,
                });
            }
            if let Some(a) = acc {
                out[r] = Some(match out[r].take() {
                    Some(o) => o.axpby(C64::new(1.0, 0.0), &a, C64::new(1.0, 0.0)),
                    None => a,
                });
            }
        }
    }
    out
}

/// `D_j = sum_l l_j (G_l + g_{0,l} delta) * Y_0^{*(l - e_j)}` per `j`, per component.
pub fn build_d_kernels(kernels: &mut KernelSet, y0: &[Grid1]) {
    let n = y0.len();
    let omega = kernels.omega;
    let mesh = y0[0].mesh.clone();
    let mut powers: HashMap<MultiIndex, Grid1> = HashMap::new();
    let mut power = |m: &MultiIndex| -> Option<Grid1> {
        if SystemSpec::degree(m) == 0 {
            return None;
        }
        if let Some(g) = powers.get(m) {
            return Some(g.clone());
        }
        let mut acc: Option<Grid1> = None;
        for (i, &e) in m.iter().enumerate() {
            for _ in 0..e {
                acc = Some(match acc {
                    None => y0[i].clone(),
                    Some(a) => ray_convolve(&a, &y0[i], omega),
                });
            }
        }
        let g = acc.expect("nonzero degree");
        powers.insert(m.clone(), g.clone());
        Some(g)
    };
    let mut d = vec![vec![Grid1::zeros(&mesh, vec![]); n]; n];
    for term in &kernels.terms {
        for j in 0..n {
            if term.l[j] == 0 {
                continue;
            }
            let mut m = term.l.clone();
            m[j] -= 1;
            let lj = C64::new(term.l[j] as f64, 0.0);
            let q = power(&m);
            for r in 0..n {
                let contrib = match (&q, &term.g[r]) {
                    (None, Some(g)) => Some(g.clone()),
                    (Some(qm), g) => {
                        let mut acc = g.as_ref().map(|g| ray_convolve(g, qm, omega));
                        if term.g0[r] != zero() {
                            let t = qm.scale(term.g0[r]);
                            acc = Some(match acc {
                                Some(a) => a.axpby(C64::new(1.0, 0.0), &t, C64::new(1.0, 0.0)),
                                None => t,
                            });
                        }
                        acc
                    }
                    (None, None) => None,
                };
                if let Some(cn) = contrib {
                    d[j][r] = d[j][r].axpby(C64::new(1.0, 0.0), &cn, lj);
                }
            }
        }
    }
    kernels.d = d;
}

/// Solution statistics of one level on one ray.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub max_iterations: usize,
    /// Max relative equation residual at cell midpoints (off the collocation nodes).
    pub midpoint_residual: f64,
}

/// All levels solved on one ray.
#[derive(Clone, Debug)]
pub struct RaySolution {
    pub phi: f64,
    pub omega: C64,
    pub mesh: Arc<Mesh>,
    /// `levels[k][r]`.
    pub levels: Vec<Vec<Grid1>>,
    pub stats: Vec<LevelStats>,
    pub kernels: KernelSet,
}

/// Product nodes `P = P_parent * Y_comp` needed by `N(Y_0)`, in dependency order.
struct ProductPlan {
    /// `(parent, comp)`; a `None` parent means `P = Y_comp`.
    nodes: Vec<(Option<usize>, usize)>,
    /// Product node index for each kernel term.
    term_node: Vec<usize>,
}

impl ProductPlan {
    fn new(kernels: &KernelSet) -> Self {
        let mut nodes: Vec<(Option<usize>, usize)> = Vec::new();
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut term_node = Vec::new();
        for t in &kernels.terms {
            let seq: Vec<usize> = t.l.iter().enumerate().flat_map(|(i, &e)| std::iter::repeat(i).take(e)).collect();
            let mut parent = None;
            for len in 1..=seq.len() {
                let key = seq[..len].to_vec();
                let id = *index.entry(key).or_insert_with(|| {
                    nodes.push((parent, seq[len - 1]));
                    nodes.len() - 1
                });
                parent = Some(id);
            }
            term_node.push(parent.expect("|l| >= 1"));
        }
        ProductPlan { nodes, term_node }
    }
}

struct LevelProblem<'a> {
    spec: &'a SystemSpec,
    mesh: &'a Arc<Mesh>,
    omega: C64,
    k: usize,
    params: &'a SolverParams,
    /// Explicit forcing per component (F0 for level 0, R_k otherwise).
    rhs: Vec<Option<Grid1>>,
    kernels: &'a KernelSet,
    /// Leading coefficient of level 1 (component 0).
    norm: C64,
}

type WeightCache = HashMap<(usize, bool), Arc<(Vec<Vec<C64>>, Vec<C64>)>>;

impl LevelProblem<'_> {
    fn exps(&self) -> Vec<Option<C64>> {
        if self.k == 0 {
            vec![]
        } else {
            vec![Some(self.spec.beta() * self.k as f64 - 1.0)]
        }
    }

    fn check_collisions(&self, taus: &[f64]) -> Result<()> {
        for t in taus {
            for r in 0..self.spec.n {
                if self.k == 1 && r == 0 {
                    continue;
                }
                let diag = (self.spec.lambda[r] - self.k as f64) - self.omega * t;
                if diag.norm() < 1e-12 {
                    return Err(Error::EigenRayCollision { p: format!("{}", self.omega * t) });
                }
            }
        }
        Ok(())
    }

    fn solve(&self) -> Result<(Vec<Grid1>, LevelStats)> {
        let n = self.spec.n;
        let mesh = self.mesh;
        let q = mesh.q();
        let omega = self.omega;
        let exps = self.exps();
        let mut y: Vec<Grid1> = (0..n).map(|_| Grid1::zeros(mesh, exps.clone())).collect();
        let nonlinear = self.k == 0 && !self.kernels.terms.is_empty();
        let coupled = self.k > 0 && !self.kernels.d.is_empty();
        let plan = ProductPlan::new(self.kernels);
        // level 0 carries no factors, so neither do its convolution powers
        let mut prods: Vec<Option<Grid1>> =
            plan.nodes.iter().map(|(parent, _)| parent.map(|_| Grid1::zeros(mesh, vec![]))).collect();
        let mut integral = vec![zero(); n];
        let mut cache: WeightCache = HashMap::new();
        let mut stats = LevelStats::default();

        for c in 0..mesh.ncells() {
            let has_factor = c < mesh.cells_per_unit() && !exps.is_empty();
            let w = cache
                .entry((mesh.pattern_cell(c), has_factor))
                .or_insert_with(|| Arc::new(cell_weights(mesh, &exps, c)))
                .clone();
            let taus: Vec<f64> = mesh.nodes()[c * q..(c + 1) * q].to_vec();
            self.check_collisions(&taus)?;
            let conv = |f: &Grid1, g: &Grid1, part: ConvPart| -> Vec<C64> {
                taus.par_iter().map(|t| omega * conv_at(f, g, *t, c, part)).collect()
            };
            // parts of the convolutions that only involve earlier cells
            let mut prod_settled: Vec<Vec<C64>> = vec![Vec::new(); plan.nodes.len()];
            let mut term_settled: Vec<Vec<Vec<C64>>> = Vec::new();
            let mut d_settled: Vec<Vec<Vec<C64>>> = Vec::new();
            if nonlinear {
                for (id, (parent, comp)) in plan.nodes.iter().enumerate() {
                    if let Some(pa) = parent {
                        prod_settled[id] = conv(product_grid(&prods, &y, &plan, *pa), &y[*comp], ConvPart::Settled(c));
                    }
                }
                for (ti, t) in self.kernels.terms.iter().enumerate() {
                    let pg = product_grid(&prods, &y, &plan, plan.term_node[ti]);
                    term_settled.push(
                        t.g.iter()
                            .map(|g| g.as_ref().map_or_else(Vec::new, |g| conv(g, pg, ConvPart::Settled(c))))
                            .collect(),
                    );
                }
            }
            if coupled {
                for j in 0..n {
                    d_settled.push((0..n).map(|r| conv(&self.kernels.d[j][r], &y[j], ConvPart::Settled(c))).collect());
                }
            }

            // initial guess: continue the last value
            if c > 0 {
                for yr in y.iter_mut() {
                    let last = yr.value(c * q - 1);
                    for m in 0..q {
                        yr.set(c * q + m, last);
                    }
                }
            }
            let mut iterations = 0;
            loop {
                iterations += 1;
                let mut forcing: Vec<Vec<C64>> = (0..n)
                    .map(|r| {
                        (0..q)
                            .map(|m| {
                                self.rhs[r].as_ref().map_or(zero(), |g| g.value(c * q + m))
                                    - omega * self.spec.b_diag[r] * integral[r]
                            })
                            .collect()
                    })
                    .collect();
                if nonlinear {
                    for (id, (parent, comp)) in plan.nodes.iter().enumerate() {
                        if let Some(pa) = parent {
                            let vals = conv(product_grid(&prods, &y, &plan, *pa), &y[*comp], ConvPart::Touching(c));
                            let g = prods[id].as_mut().expect("product grid");
                            for m in 0..q {
                                g.set(c * q + m, prod_settled[id][m] + vals[m]);
                            }
                        }
                    }
                    for (ti, t) in self.kernels.terms.iter().enumerate() {
                        let pg = product_grid(&prods, &y, &plan, plan.term_node[ti]);
                        for r in 0..n {
                            if let Some(g) = &t.g[r] {
                                let vals = conv(g, pg, ConvPart::Touching(c));
                                for m in 0..q {
                                    forcing[r][m] += term_settled[ti][r][m] + vals[m];
                                }
                            }
                            if t.g0[r] != zero() {
                                for m in 0..q {
                                    forcing[r][m] += t.g0[r] * pg.value(c * q + m);
                                }
                            }
                        }
                    }
                }
                if coupled {
                    for j in 0..n {
                        for r in 0..n {
                            let vals = conv(&self.kernels.d[j][r], &y[j], ConvPart::Touching(c));
                            for m in 0..q {
                                forcing[r][m] += d_settled[j][r][m] + vals[m];
                            }
                        }
                    }
                }
                let mut change = 0.0f64;
                let mut scale = 0.0f64;
                for r in 0..n {
                    let sol = self.solve_block(r, c, &taus, &w.0, &forcing[r])?;
                    for m in 0..q {
                        let old = y[r].value(c * q + m);
                        let new = old + (sol[m] - old) * self.params.damping;
                        change = change.max((new - old).norm());
                        scale = scale.max(new.norm());
                        y[r].set(c * q + m, new);
                    }
                }
                if !change.is_finite() {
                    return Err(Error::NonConvergence { p: format!("{}", omega * taus[0]) });
                }
                if !(nonlinear || coupled) || change <= self.params.tol * (1.0 + scale) {
                    break;
                }
                if iterations >= self.params.max_iter {
                    return Err(Error::NonConvergence { p: format!("{}", omega * taus[0]) });
                }
            }
            stats.max_iterations = stats.max_iterations.max(iterations);
            for r in 0..n {
                integral[r] += (0..q).map(|m| w.1[m] * y[r].value(c * q + m)).sum::<C64>();
            }
        }
        let nonlin: Vec<Grid1> = if nonlinear {
            self.kernels
                .terms
                .iter()
                .enumerate()
                .map(|(ti, _)| product_grid(&prods, &y, &plan, plan.term_node[ti]).clone())
                .collect()
        } else {
            Vec::new()
        };
        stats.midpoint_residual = self.midpoint_residual(&y, &nonlin);
        Ok((y, stats))
    }

    /// Collocation block of component `r` in cell `c`; level 1 component 0 in the
    /// first cell carries the normalization as an extra equation.
    fn solve_block(&self, r: usize, c: usize, taus: &[f64], w: &[Vec<C64>], forcing: &[C64]) -> Result<Vec<C64>> {
        let q = taus.len();
        let omega = self.omega;
        let b = self.spec.b_diag[r];
        let extra = self.k == 1 && r == 0 && c == 0;
        let rows = q + usize::from(extra);
        let mut a = DMatrix::<C64>::zeros(rows, q);
        let mut rhs = DVector::<C64>::zeros(rows);
        for i in 0..q {
            for m in 0..q {
                a[(i, m)] = omega * b * w[i][m];
            }
            a[(i, i)] += (self.spec.lambda[r] - self.k as f64) - omega * taus[i];
            rhs[i] = forcing[i];
        }
        if !extra {
            let x = a.lu().solve(&rhs).ok_or_else(|| Error::EigenRayCollision { p: format!("{}", omega * taus[0]) })?;
            return Ok(x.iter().copied().collect());
        }
        // y = tau^{beta - 1} P(tau) with P(0) = omega^{beta - 1} norm / Gamma(beta); solve for
        // the node values of P with rows scaled by tau^-beta so that all entries are O(1)
        let beta = self.spec.beta();
        let f: Vec<C64> = taus.iter().map(|t| rpow(*t, beta - 1.0)).collect();
        for i in 0..q {
            let row = rpow(taus[i], -beta);
            for m in 0..q {
                a[(i, m)] *= f[m] * row;
            }
            rhs[i] *= row;
        }
        let mut lw = [0.0; 24];
        self.mesh.lagrange_weights(c, 0.0, &mut lw[..q]);
        for m in 0..q {
            a[(q, m)] = C64::new(lw[m], 0.0);
        }
        rhs[q] = omega.powc(beta - 1.0) * self.norm * rgamma(beta);
        // the collocation rows are consistent but rank deficient: the normalization
        // replaces the equation at the first node
        for m in 0..q {
            a[(0, m)] = a[(q, m)];
        }
        rhs[0] = rhs[q];
        let a = a.rows(0, q).into_owned();
        let rhs = rhs.rows(0, q).into_owned();
        let x = a.lu().solve(&rhs).ok_or_else(|| Error::NonConvergence { p: "normalization row".into() })?;
        Ok(x.iter().zip(&f).map(|(p, f)| p * f).collect())
    }

    /// Max relative equation residual at cell midpoints: the residual divided by
    /// the sum of the magnitudes of the individual terms.
    fn midpoint_residual(&self, y: &[Grid1], nonlin: &[Grid1]) -> f64 {
        let n = self.spec.n;
        let mesh = self.mesh;
        let omega = self.omega;
        let starts: Vec<Vec<C64>> = y
            .iter()
            .map(|g| {
                let mut acc = zero();
                (0..mesh.ncells())
                    .map(|c| {
                        let s = acc;
                        let (a, b) = mesh.cell_bounds(c);
                        acc += g.integrate_piece(c, a, b);
                        s
                    })
                    .collect()
            })
            .collect();
        (0..mesh.ncells())
            .into_par_iter()
            .map(|c| {
                let (a, b) = mesh.cell_bounds(c);
                let t = 0.5 * (a + b);
                let mut worst = 0.0f64;
                for r in 0..n {
                    let int = starts[r][c] + y[r].integrate_piece(c, a, t);
                    let mut terms = vec![
                        ((self.spec.lambda[r] - self.k as f64) - omega * t) * y[r].eval_in_cell(c, t),
                        omega * self.spec.b_diag[r] * int,
                    ];
                    if let Some(g) = &self.rhs[r] {
                        terms.push(-g.eval_in_cell(c, t));
                    }
                    for (term, p) in self.kernels.terms.iter().zip(nonlin) {
                        if let Some(g) = &term.g[r] {
                            terms.push(-omega * conv_at(g, p, t, c, ConvPart::All));
                        }
                        terms.push(-term.g0[r] * p.eval_in_cell(c, t));
                    }
                    if self.k > 0 {
                        for j in 0..self.kernels.d.len() {
                            terms.push(-omega * conv_at(&self.kernels.d[j][r], &y[j], t, c, ConvPart::All));
                        }
                    }
                    let res: C64 = terms.iter().sum();
                    let size: f64 = terms.iter().map(|z| z.norm()).sum();
                    if size > 0.0 {
                        worst = worst.max(res.norm() / size);
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

fn product_grid<'b>(prods: &'b [Option<Grid1>], y: &'b [Grid1], plan: &ProductPlan, id: usize) -> &'b Grid1 {
    match plan.nodes[id] {
        (None, comp) => &y[comp],
        (Some(_), _) => prods[id].as_ref().expect("product grid"),
    }
}

/// Solves levels `0..=kmax` on the ray `arg p = phi` (`phi != 0`, away from
/// the other eigenvalue rays), level 1 normalized to `norm`.
pub fn solve_ray(
    spec: &SystemSpec,
    phi: f64,
    kmax: usize,
    mesh: &Arc<Mesh>,
    params: &SolverParams,
    norm: C64,
) -> Result<RaySolution> {
    if phi == 0.0 {
        return Err(Error::InvalidArgument("phi = 0 is the Stokes line: use the branch solver".into()));
    }
    let gap = spec.eigen_ray_gap();
    if phi.abs() >= gap {
        return Err(Error::InvalidArgument(format!("ray arg p = {phi} meets another eigenvalue ray")));
    }
    let omega = C64::from_polar(1.0, phi);
    let mut kernels = KernelSet::new(spec, mesh, omega);
    let n = spec.n;
    let f0: Vec<Option<Grid1>> = (0..n)
        .map(|r| {
            let cs: Vec<(usize, C64)> = spec.f0.iter().map(|(m, v)| (*m, v[r])).filter(|(_, c)| *c != zero()).collect();
            (!cs.is_empty()).then(|| {
                Grid1::from_fn(mesh, vec![], |tau| {
                    let p = omega * tau;
                    cs.iter().map(|(m, c)| c * p.powi(*m as i32 - 1) * rgamma(C64::new(*m as f64, 0.0))).sum()
                })
            })
        })
        .collect();
    let problem0 = LevelProblem { spec, mesh, omega, k: 0, params, rhs: f0, kernels: &kernels, norm };
    let (y0, s0) = problem0.solve()?;
    let mut levels = vec![y0];
    let mut stats = vec![s0];
    if kmax >= 1 {
        build_d_kernels(&mut kernels, &levels[0]);
        if kernels.d.iter().flatten().all(|g| g.max_abs() == 0.0) {
            kernels.d.clear();
        }
    }
    for k in 1..=kmax {
        let rhs = if k >= 2 { graded_nonlinearity(&kernels, &levels, k, n) } else { vec![None; n] };
        let problem = LevelProblem { spec, mesh, omega, k, params, rhs, kernels: &kernels, norm };
        let (yk, sk) = problem.solve()?;
        levels.push(yk);
        stats.push(sk);
    }
    Ok(RaySolution { phi, omega, mesh: mesh.clone(), levels, stats, kernels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{case, eqpert};

    #[test]
    fn worked_example_on_a_ray() {
        let c = case("exa1").unwrap();
        let m = Mesh::new(SolverParams::default().mesh, 3.0).unwrap();
        let sol = solve_ray(&c.spec, 0.3, 2, &m, &SolverParams::default(), C64::new(1.0, 0.0)).unwrap();
        let omega = sol.omega;
        let mut e0 = 0.0f64;
        let mut e1 = 0.0f64;
        for (i, t) in m.nodes().iter().enumerate() {
            e0 = e0.max((sol.levels[0][0].value(i) - 1.0).norm());
            let exact = c.oracle_y1(omega * t).unwrap();
            let e = (sol.levels[1][0].value(i) - exact).norm() / exact.norm();
            e1 = e1.max(e);
        }
        assert!(e0 < 1e-12, "Y0 error {e0:e}");
        assert!(e1 < 1e-10, "Y1 error {e1:e}");
        assert!(sol.levels[2][0].max_abs() < 1e-14);
        assert!(sol.stats.iter().all(|s| s.midpoint_residual < 1e-10), "{:?}", sol.stats);
    }

    #[test]
    fn perturbed_example_on_small_ray() {
        let c = eqpert(0.1).unwrap();
        let m = Mesh::new(SolverParams::default().mesh, 2.0).unwrap();
        for phi in [0.05, -1e-4] {
            let sol = solve_ray(&c.spec, phi, 0, &m, &SolverParams::default(), C64::new(1.0, 0.0)).unwrap();
            let mut err = 0.0f64;
            for (i, t) in m.nodes().iter().enumerate() {
                let exact = c.oracle_y0(sol.omega * t).unwrap();
                let e = (sol.levels[0][0].value(i) - exact).norm() / exact.norm();

                err = err.max(e);
            }
            assert!(err < 1e-11, "phi = {phi}: {err:e}");
        }
    }

    #[test]
    fn nonlinear_levels_match_borel_germs() {
        let c = case("quad").unwrap();
        let params = SolverParams {
            mesh: MeshParams { h_min: 1e-5, ..SolverParams::default().mesh },
            ..SolverParams::default()
        };
        let m = Mesh::new(params.mesh, 1.0).unwrap();
        let sol = solve_ray(&c.spec, 0.4, 2, &m, &params, C64::new(1.0, 0.0)).unwrap();
        let ts = crate::series::compute_transseries(&c.spec, 2, 30).unwrap();
        for k in 0..=2 {
            let germ = crate::borel::borel_transform(&ts.levels[k]).unwrap();
            let mut err = 0.0f64;
            for (i, t) in m.nodes().iter().enumerate() {
                if *t > 0.2 {
                    break;
                }
                let exact = germ.eval(sol.omega * t).unwrap().value[0];
                err = err.max((sol.levels[k][0].value(i) - exact).norm() / exact.norm().max(1e-3));
            }
            assert!(err < 1e-9, "level {k}: {err:e}");
            assert!(sol.stats[k].midpoint_residual < 1e-9, "{:?}", sol.stats[k]);
        }
    }
}
