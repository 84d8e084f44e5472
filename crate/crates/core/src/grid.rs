//! Piecewise-polynomial functions on a graded mesh along `[0, pmax]`.
//!
//! The mesh repeats one pattern on every unit interval `[j, j+1]`, geometrically
//! graded towards both integer end points, so that integer shifts map nodes onto
//! nodes exactly. Each cell carries `q` Gauss–Legendre nodes (none at a cell end),
//! and cells inside the graded zone of an integer may carry an algebraic factor
//! `|p - j|^e`: the function is then `|p - j|^e P(p)` with `P` a polynomial.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, legendre, Anchor};
use crate::scalar::C64;
use crate::special::rpow;

/// Mesh grading parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Gauss–Legendre nodes per cell.
    pub q: usize,
    /// Largest cell length.
    pub h_max: f64,
    /// Length of the cells touching an integer.
    pub h_min: f64,
    /// Ratio between consecutive cells in the graded zones.
    pub grading: f64,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams { q: 8, h_max: 0.125, h_min: 1e-7, grading: 2.0 }
    }
}

impl MeshParams {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 || self.q > 24 {
            return Err(Error::InvalidArgument("nodes per cell must lie in 2..=24".into()));
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_max && self.h_max <= 0.5) {
            return Err(Error::InvalidArgument("need 0 < h_min < h_max <= 0.5".into()));
        }
        if !(self.grading > 1.0) {
            return Err(Error::InvalidArgument("grading ratio must exceed 1".into()));
        }
        Ok(())
    }
}

/// Which integer a cell is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Zone {
    /// Graded towards the integer at the left end of its unit.
    Left,
    /// Graded towards the integer at the right end of its unit.
    Right,
    Free,
}

/// Periodic graded mesh on `[0, units]`.
#[derive(Debug)]
pub struct Mesh {
    pub params: MeshParams,
    pub units: usize,
    pat_dl: Vec<f64>,
    pat_zone: Vec<Zone>,
    ref_x: Vec<f64>,
    bary: Vec<f64>,
    node_dl: Vec<f64>,
    node_dr: Vec<f64>,
    breaks: Vec<f64>,
    nodes: Vec<f64>,
}

impl Mesh {
    /// Mesh covering `[0, ceil(pmax)]`.
    pub fn new(params: MeshParams, pmax: f64) -> Result<Arc<Mesh>> {
        params.validate()?;
        if !(pmax > 0.0 && pmax <= 1000.0) {
            return Err(Error::InvalidArgument(format!("pmax = {pmax} outside (0, 1000]")));
        }
        let units = pmax.ceil() as usize;
        let r = params.grading;
        let mut graded = vec![0.0, params.h_min];
        let mut b = params.h_min;
        while b * r - b <= params.h_max && b * r <= 0.25 {
            b *= r;
            graded.push(b);
        }
        let edge = b;
        let m = ((1.0 - 2.0 * edge) / params.h_max).ceil().max(1.0) as usize;
        let mut pat_dl = graded.clone();
        let mut pat_dr: Vec<f64> = graded.iter().map(|d| 1.0 - d).collect();
        let mut pat_zone = vec![Zone::Left; graded.len() - 1];
        for i in 1..m {
            let d = edge + (1.0 - 2.0 * edge) * i as f64 / m as f64;
            pat_dl.push(d);
            pat_dr.push(1.0 - d);
        }
        pat_zone.extend(std::iter::repeat(Zone::Free).take(m));
        for d in graded.iter().rev() {
            pat_dl.push(1.0 - d);
            pat_dr.push(*d);
        }
        pat_zone.extend(std::iter::repeat(Zone::Right).take(graded.len() - 1));

        let q = params.q;
        let rule = legendre(q);
        let ref_x: Vec<f64> = rule.x.iter().map(|x| 0.5 * (1.0 + x)).collect();
        let bary: Vec<f64> = (0..q)
            .map(|m| {
                let prod: f64 = (0..q).filter(|&k| k != m).map(|k| ref_x[m] - ref_x[k]).product();
                1.0 / prod
            })
            .collect();
        let cpu = pat_zone.len();
        let mut node_dl = Vec::with_capacity(cpu * q);
        let mut node_dr = Vec::with_capacity(cpu * q);
        for c in 0..cpu {
            for x in &ref_x {
                node_dl.push(pat_dl[c] + (pat_dl[c + 1] - pat_dl[c]) * x);
                node_dr.push(pat_dr[c + 1] + (pat_dr[c] - pat_dr[c + 1]) * (1.0 - x));
            }
        }
        let mut breaks = Vec::with_capacity(units * cpu + 1);
        let mut nodes = Vec::with_capacity(units * cpu * q);
        for u in 0..units {
            for c in 0..cpu {
                breaks.push(u as f64 + pat_dl[c]);
            }
            for i in 0..cpu * q {
                let z = pat_zone[i / q];
                nodes.push(if z == Zone::Right { (u + 1) as f64 - node_dr[i] } else { u as f64 + node_dl[i] });
            }
        }
        breaks.push(units as f64);
        Ok(Arc::new(Mesh { params, units, pat_dl, pat_zone, ref_x, bary, node_dl, node_dr, breaks, nodes }))
    }

    pub fn q(&self) -> usize {
        self.params.q
    }

    pub fn cells_per_unit(&self) -> usize {
        self.pat_zone.len()
    }

    pub fn ncells(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn nnodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_per_unit(&self) -> usize {
        self.cells_per_unit() * self.q()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pmax(&self) -> f64 {
        self.units as f64
    }

    pub fn cell_bounds(&self, c: usize) -> (f64, f64) {
        (self.breaks[c], self.breaks[c + 1])
    }

    /// Pattern index of a global cell.
    pub fn pattern_cell(&self, c: usize) -> usize {
        c % self.cells_per_unit()
    }

    /// Integer anchor and zone of a cell.
    pub fn cell_zone(&self, c: usize) -> (Zone, usize) {
        let u = c / self.cells_per_unit();
        match self.pat_zone[self.pattern_cell(c)] {
            Zone::Left => (Zone::Left, u),
            Zone::Right => (Zone::Right, u + 1),
            // the smooth middle of the first unit still feels p^e at the origin
            Zone::Free if u == 0 => (Zone::Left, 0),
            Zone::Free => (Zone::Free, u),
        }
    }

    /// Exact distance from node `i` to the integer its cell is attached to.
    pub fn node_anchor_distance(&self, i: usize) -> f64 {
        let pi = i % self.nodes_per_unit();
        match self.pat_zone[pi / self.q()] {
            Zone::Right => self.node_dr[pi],
            _ => self.node_dl[pi],
        }
    }

    /// Distance from node `i` to the nearest integer (exact near integers).
    pub fn node_integer_distance(&self, i: usize) -> f64 {
        let pi = i % self.nodes_per_unit();
        self.node_dl[pi].min(self.node_dr[pi])
    }

    /// Nearest integer to node `i` and the signed exact offset `p - j`.
    pub fn node_integer_offset(&self, i: usize) -> (usize, f64) {
        let pi = i % self.nodes_per_unit();
        let u = i / self.nodes_per_unit();
        if self.node_dl[pi] <= self.node_dr[pi] {
            (u, self.node_dl[pi])
        } else {
            (u + 1, -self.node_dr[pi])
        }
    }

    /// Unit index of node `i`.
    pub fn node_unit(&self, i: usize) -> usize {
        i / self.nodes_per_unit()
    }

    /// Cell containing `s` (clamped to the mesh).
    pub fn cell_of(&self, s: f64) -> usize {
        if s <= 0.0 {
            return 0;
        }
        if s >= self.pmax() {
            return self.ncells() - 1;
        }
        let u = (s.floor() as usize).min(self.units - 1);
        let local = s - u as f64;
        let k = self.pat_dl.partition_point(|&b| b <= local).clamp(1, self.cells_per_unit());
        u * self.cells_per_unit() + k - 1
    }

    /// Barycentric Lagrange weights of the cell nodes at `s` inside cell `c`.
    pub fn lagrange_weights(&self, c: usize, s: f64, out: &mut [f64]) {
        let (a, b) = self.cell_bounds(c);
        let x = (s - a) / (b - a);
        let q = self.q();
        let mut denom = 0.0;
        for m in 0..q {
            let d = x - self.ref_x[m];
            if d == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[m] = 1.0;
                return;
            }
            out[m] = self.bary[m] / d;
            denom += out[m];
        }
        for o in out.iter_mut().take(q) {
            *o /= denom;
        }
    }

    /// Integer shift as a node-index offset.
    pub fn shift_offset(&self, k: usize) -> usize {
        k * self.nodes_per_unit()
    }
}

/// Scalar function on a mesh: node values plus the algebraic factor exponents.
#[derive(Clone, Debug)]
pub struct Grid1 {
    pub mesh: Arc<Mesh>,
    values: Vec<C64>,
    smooth: Vec<C64>,
    /// Exponent `e` of `|p - j|^e` used in the graded cells around integer `j`.
    exps: Vec<Option<C64>>,
}

impl Grid1 {
    pub fn zeros(mesh: &Arc<Mesh>, exps: Vec<Option<C64>>) -> Self {
        let n = mesh.nnodes();
        let mut exps = exps;
        exps.resize(mesh.units + 1, None);
        Grid1 { mesh: mesh.clone(), values: vec![C64::new(0.0, 0.0); n], smooth: vec![C64::new(0.0, 0.0); n], exps }
    }

    /// Samples `f(p)` at the nodes.
    pub fn from_fn<F: Fn(f64) -> C64>(mesh: &Arc<Mesh>, exps: Vec<Option<C64>>, f: F) -> Self {
        let mut g = Grid1::zeros(mesh, exps);
        for i in 0..mesh.nnodes() {
            g.set(i, f(mesh.nodes[i]));
        }
        g
    }

    /// Builds a grid from node values.
    pub fn from_values(mesh: &Arc<Mesh>, exps: Vec<Option<C64>>, values: Vec<C64>) -> Self {
        let mut g = Grid1::zeros(mesh, exps);
        for (i, v) in values.into_iter().enumerate() {
            g.set(i, v);
        }
        g
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> C64 {
        self.values[i]
    }

    pub fn exps(&self) -> &[Option<C64>] {
        &self.exps
    }

    pub fn exponent_at(&self, j: usize) -> Option<C64> {
        self.exps.get(j).copied().flatten()
    }

    fn cell_exponent(&self, c: usize) -> Option<(Zone, usize, C64)> {
        let (zone, a) = self.mesh.cell_zone(c);
        if zone == Zone::Free {
            return None;
        }
        self.exps[a].map(|e| (zone, a, e))
    }

    fn node_factor(&self, i: usize) -> C64 {
        match self.cell_exponent(i / self.mesh.q()) {
            Some((Zone::Left, a, e)) if a == 0 => rpow(self.mesh.nodes[i], e),
            Some((_, _, e)) => rpow(self.mesh.node_anchor_distance(i), e),
            None => C64::new(1.0, 0.0),
        }
    }

    pub fn set(&mut self, i: usize, v: C64) {
        self.values[i] = v;
        self.smooth[i] = v / self.node_factor(i);
    }

    /// Polynomial part `P` of cell `c` evaluated at `s`.
    pub fn smooth_in_cell(&self, c: usize, s: f64) -> C64 {
        let q = self.mesh.q();
        let mut w = [0.0; 24];
        self.mesh.lagrange_weights(c, s, &mut w[..q]);
        let base = c * q;
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..q {
            acc += self.smooth[base + m] * w[m];
        }
        acc
    }

    /// Full value at an arbitrary point of `[0, pmax]` (inside cell `c` if given).
    pub fn eval(&self, s: f64) -> C64 {
        let c = self.mesh.cell_of(s);
        self.eval_in_cell(c, s)
    }

    pub fn eval_in_cell(&self, c: usize, s: f64) -> C64 {
        let p = self.smooth_in_cell(c, s);
        match self.cell_exponent(c) {
            Some((Zone::Left, a, e)) => p * rpow((s - a as f64).max(0.0), e),
            Some((_, a, e)) => p * rpow((a as f64 - s).max(0.0), e),
            None => p,
        }
    }

    /// Anchors of cell `c` as seen by an integral in the variable `s` (`reflect = None`)
    /// or in `s` with argument `tau - s` (`reflect = Some(tau)`).
    fn anchors(&self, c: usize, reflect: Option<f64>, left: &mut Vec<Anchor>, right: &mut Vec<Anchor>) {
        if let Some((zone, a, e)) = self.cell_exponent(c) {
            let a = a as f64;
            match (zone, reflect) {
                (Zone::Left, None) => left.push(Anchor { at: a, exponent: e }),
                (_, None) => right.push(Anchor { at: a, exponent: e }),
                (Zone::Left, Some(t)) => right.push(Anchor { at: t - a, exponent: e }),
                (_, Some(t)) => left.push(Anchor { at: t - a, exponent: e }),
            }
        }
    }

    /// `int_u^v` over a piece of cell `c`.
    pub fn integrate_piece(&self, c: usize, u: f64, v: f64) -> C64 {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        self.anchors(c, None, &mut l, &mut r);
        integrate(u, v, &l, &r, self.mesh.q() + 4, &|s| self.smooth_in_cell(c, s))
    }

    /// `int_0^{p_i}` at every node.
    pub fn cumulative_integral(&self) -> Vec<C64> {
        let q = self.mesh.q();
        let mut out = Vec::with_capacity(self.values.len());
        let mut acc = C64::new(0.0, 0.0);
        for c in 0..self.mesh.ncells() {
            let (a, b) = self.mesh.cell_bounds(c);
            for m in 0..q {
                out.push(acc + self.integrate_piece(c, a, self.mesh.nodes[c * q + m]));
            }
            acc += self.integrate_piece(c, a, b);
        }
        out
    }

    /// `int_0^{pmax} w(s) f(s) ds` for a smooth weight `w`; `extra` Gauss points are
    /// added per cell on top of the interpolation order.
    pub fn integral_weighted<W: Fn(f64) -> C64 + Sync>(&self, extra: usize, w: W) -> C64 {
        (0..self.mesh.ncells())
            .map(|c| {
                let (a, b) = self.mesh.cell_bounds(c);
                let (mut l, mut r) = (Vec::new(), Vec::new());
                self.anchors(c, None, &mut l, &mut r);
                integrate(a, b, &l, &r, self.mesh.q() + 4 + extra, &|s| w(s) * self.smooth_in_cell(c, s))
            })
            .sum()
    }

    /// `int_0^{pmax}`.
    pub fn integral(&self) -> C64 {
        (0..self.mesh.ncells())
            .map(|c| {
                let (a, b) = self.mesh.cell_bounds(c);
                self.integrate_piece(c, a, b)
            })
            .sum()
    }

    /// Pointwise linear combination `a self + b other` (exponents: most singular wins).
    pub fn axpby(&self, a: C64, other: &Grid1, b: C64) -> Grid1 {
        let exps = merge_exps(&self.exps, &other.exps);
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Grid1::from_values(&self.mesh, exps, values)
    }

    pub fn scale(&self, a: C64) -> Grid1 {
        Grid1::from_values(&self.mesh, self.exps.clone(), self.values.iter().map(|x| a * x).collect())
    }

    /// `(H f)(p - k)`: shift right by an integer, zero on `[0, k)`.
    pub fn shifted(&self, k: usize) -> Grid1 {
        let off = self.mesh.shift_offset(k);
        let n = self.values.len();
        let mut exps = vec![None; self.mesh.units + 1];
        for j in 0..=self.mesh.units {
            if j >= k {
                exps[j] = self.exps[j - k];
            }
        }
        let values = (0..n).map(|i| if i >= off { self.values[i - off] } else { C64::new(0.0, 0.0) }).collect();
        Grid1::from_values(&self.mesh, exps, values)
    }

    /// Same values with a different factor model.
    pub fn with_exps(&self, exps: Vec<Option<C64>>) -> Grid1 {
        Grid1::from_values(&self.mesh, exps, self.values.clone())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Integration weights of cell `c` for a function with factor exponents `exps`.
///
/// Returns `(partial, full)` with `partial[i][m] = int_{a_c}^{p_i} phi_m` and
/// `full[m] = int_{a_c}^{b_c} phi_m`, where `phi_m` is the cell function equal to
/// one at node `m` and zero at the other nodes (factor times Lagrange polynomial).
pub fn cell_weights(mesh: &Arc<Mesh>, exps: &[Option<C64>], c: usize) -> (Vec<Vec<C64>>, Vec<C64>) {
    let q = mesh.q();
    let mut probe = Grid1::zeros(mesh, exps.to_vec());
    let (a, b) = mesh.cell_bounds(c);
    let mut partial = vec![vec![C64::new(0.0, 0.0); q]; q];
    let mut full = vec![C64::new(0.0, 0.0); q];
    for m in 0..q {
        if m > 0 {
            probe.set(c * q + m - 1, C64::new(0.0, 0.0));
        }
        probe.set(c * q + m, C64::new(1.0, 0.0));
        for (i, row) in partial.iter_mut().enumerate() {
            row[m] = probe.integrate_piece(c, a, mesh.nodes()[c * q + i]);
        }
        full[m] = probe.integrate_piece(c, a, b);
    }
    (partial, full)
}

/// Most singular (smallest real part) exponent per anchor.
pub fn merge_exps(a: &[Option<C64>], b: &[Option<C64>]) -> Vec<Option<C64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(if x.re <= y.re { *x } else { *y }),
            (Some(x), None) | (None, Some(x)) => Some(*x),
            (None, None) => None,
        })
        .collect()
}

/// Which sub-intervals of a convolution integral to include.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvPart {
    All,
    /// Only pieces where neither factor lives in the given cell.
    Settled(usize),
    /// Only pieces where at least one factor lives in the given cell.
    Touching(usize),
}

/// `int_0^tau f(s) g(tau - s) ds` for `tau` inside cell `ctau` (both grids on one mesh).
pub fn conv_at(f: &Grid1, g: &Grid1, tau: f64, ctau: usize, part: ConvPart) -> C64 {
    let mesh = &f.mesh;
    let breaks = mesh.breaks();
    let nb = breaks.partition_point(|&b| b < tau);
    // f-breaks ascending: breaks[1..nb]; g-breaks in s: tau - breaks[k], k = nb-1 down to 1
    let mut i_f = 1;
    let mut i_g = nb - 1;
    let mut cf = 0;
    let mut cg = ctau;
    let mut cur = 0.0;
    let npts = mesh.q() + 2;
    let tol = 1e-14 * tau.max(1.0);
    let mut sum = C64::new(0.0, 0.0);
    let (mut l, mut r) = (Vec::with_capacity(2), Vec::with_capacity(2));
    loop {
        let nf = if i_f < nb { breaks[i_f] } else { f64::INFINITY };
        let ng = if i_g >= 1 { tau - breaks[i_g] } else { f64::INFINITY };
        let next = nf.min(ng).min(tau);
        let include = match part {
            ConvPart::All => true,
            ConvPart::Settled(c) => cf != c && cg != c,
            ConvPart::Touching(c) => cf == c || cg == c,
        };
        if include && next - cur > 0.0 {
            l.clear();
            r.clear();
            f.anchors(cf, None, &mut l, &mut r);
            g.anchors(cg, Some(tau), &mut l, &mut r);
            sum += integrate(cur, next, &l, &r, npts, &|s| f.smooth_in_cell(cf, s) * g.smooth_in_cell(cg, tau - s));
        }
        if next >= tau {
            break;
        }
        if nf <= next + tol {
            i_f += 1;
            cf += 1;
        }
        if ng <= next + tol {
            i_g -= 1;
            cg -= 1;
        }
        cur = next;
    }
    sum
}

/// Full convolution `f * g` on the common mesh (real-line variable, no ray factor).
pub fn convolve(f: &Grid1, g: &Grid1) -> Result<Grid1> {
    use rayon::prelude::*;
    check_integrable(f)?;
    check_integrable(g)?;
    let mesh = &f.mesh;
    let q = mesh.q();
    let values: Vec<C64> =
        (0..mesh.nnodes()).into_par_iter().map(|i| conv_at(f, g, mesh.nodes()[i], i / q, ConvPart::All)).collect();
    Ok(Grid1::from_values(mesh, conv_exps(f, g), values))
}

/// Factor exponents of `f * g`: at 0 they add plus one; elsewhere the most singular wins.
pub fn conv_exps(f: &Grid1, g: &Grid1) -> Vec<Option<C64>> {
    let mut exps = merge_exps(&f.exps, &g.exps);
    exps[0] = match (f.exps[0], g.exps[0]) {
        (None, None) => None,
        (a, b) => {
            let e = a.unwrap_or(C64::new(0.0, 0.0)) + b.unwrap_or(C64::new(0.0, 0.0)) + 1.0;
            (e != C64::new(0.0, 0.0)).then_some(e)
        }
    };
    exps
}

pub fn check_integrable(f: &Grid1) -> Result<()> {
    for (j, e) in f.exps.iter().enumerate() {
        if let Some(e) = e {
            if e.re <= -1.0 {
                return Err(Error::NonIntegrable { location: j as f64, exponent: format!("{e}") });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(pmax: f64) -> Arc<Mesh> {
        Mesh::new(MeshParams::default(), pmax).unwrap()
    }

    #[test]
    fn mesh_is_periodic_and_avoids_integers() {
        let m = mesh(3.0);
        let npu = m.nodes_per_unit();
        for i in 0..npu {
            assert!((m.nodes()[i + npu] - m.nodes()[i] - 1.0).abs() < 1e-15);
        }
        assert!(m.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(m.nodes().iter().all(|p| p.fract() != 0.0));
        assert!(m.node_integer_distance(0) < 1e-7);
    }

    #[test]
    fn cell_lookup() {
        let m = mesh(2.0);
        for c in 0..m.ncells() {
            let (a, b) = m.cell_bounds(c);
            assert_eq!(m.cell_of(0.5 * (a + b)), c);
        }
    }

    #[test]
    fn interpolation_reproduces_factor_times_polynomial() {
        let m = mesh(2.0);
        let e = C64::new(-0.5, 0.0);
        let f = |p: f64| C64::new(p.powf(-0.5) * (1.0 + p * p), 0.0);
        let g = Grid1::from_fn(&m, vec![Some(e)], f);
        for &s in &[1e-9, 3e-6, 0.01, 0.05] {
            assert!((g.eval(s) - f(s)).norm() < 1e-12 * f(s).norm(), "s = {s}");
        }
    }

    #[test]
    fn integrals_of_singular_functions() {
        let m = mesh(2.0);
        let g = Grid1::from_fn(&m, vec![Some(C64::new(-0.5, 0.0))], |p| C64::new(p.powf(-0.5), 0.0));
        assert!((g.integral().re - 2.0 * 2f64.sqrt()).abs() < 1e-13);
        let cum = g.cumulative_integral();
        for (i, p) in m.nodes().iter().enumerate().step_by(37) {
            assert!((cum[i].re - 2.0 * p.sqrt()).abs() < 1e-13, "{p}");
        }
    }

    #[test]
    fn monomial_convolution() {
        let m = mesh(3.0);
        let p = Grid1::from_fn(&m, vec![], |s| C64::new(s, 0.0));
        let pp = convolve(&p, &p).unwrap();
        for (i, s) in m.nodes().iter().enumerate().step_by(11) {
            let exact = s * s * s / 6.0;
            assert!((pp.value(i).re - exact).abs() <= 1e-13 * exact.max(1e-300) + 1e-300, "{s}");
        }
    }

    #[test]
    fn half_power_convolution_is_pi() {
        let m = mesh(2.0);
        let e = Some(C64::new(-0.5, 0.0));
        let f = Grid1::from_fn(&m, vec![e], |s| C64::new(s.powf(-0.5), 0.0));
        let ff = convolve(&f, &f).unwrap();
        for i in (0..m.nnodes()).step_by(13) {
            assert!((ff.value(i).re - std::f64::consts::PI).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_identity() {
        let m = mesh(4.0);
        let h = Grid1::from_fn(&m, vec![], |s| C64::new(if s > 1.0 { 1.0 } else { 0.0 }, 0.0));
        let hh = convolve(&h, &h).unwrap();
        for (i, s) in m.nodes().iter().enumerate() {
            let exact = if *s > 2.0 { s - 2.0 } else { 0.0 };
            assert!((hh.value(i).re - exact).abs() < 1e-13 * (1.0 + exact), "{s}");
        }
    }

    #[test]
    fn shifted_grid_matches_node_values() {
        let m = mesh(3.0);
        let f = Grid1::from_fn(&m, vec![], |s| C64::new(s.sin(), 0.0));
        let g = f.shifted(1);
        for (i, s) in m.nodes().iter().enumerate() {
            let exact = if *s > 1.0 { (s - 1.0).sin() } else { 0.0 };
            assert!((g.value(i).re - exact).abs() < 1e-14);
        }
    }
}
