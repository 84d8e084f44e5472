//! Formal trans-series `y ~ sum_k C^k e^{-kx} y_k(x)` of the normalized system.
//!
//! Level `k` is stored as `x^{-k beta} sum_j a_{k,j} x^{-j}`; level 0 starts at `x^-1`.
//! The recursion uses the graded form of the nonlinearity: with
//! `Y = sum_k xi^k y_k`, the `xi^k` coefficient of `g(x, Y)` collects both the
//! linearized term `(dg/dy) y_k` and the forcing built from lower levels, so a single
//! graded product routine serves every level.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, C64};
use crate::system::SystemSpec;

/// One formal power series `x^{-r} sum_i coeffs[i] x^{-(first_power + i)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormalSeries<T> {
    /// Leading offset `r` (`0` for level 0, `k beta` for level `k`).
    pub leading_offset: T,
    /// Integer power of the first stored coefficient.
    pub first_power: usize,
    /// `coeffs[i][c]`: component `c` of the coefficient of `x^{-(r + first_power + i)}`.
    pub coeffs: Vec<Vec<T>>,
    /// Number of leading coefficients that are exact consequences of the (truncated) input.
    pub trusted_order: usize,
}

impl<T: Scalar> FormalSeries<T> {
    pub fn dim(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }

    /// Partial sum at `x` using the first `terms` coefficients.
    pub fn partial_sum(&self, x: C64, terms: usize) -> Vec<C64> {
        let r = self.leading_offset.to_c64();
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        for (i, c) in self.coeffs.iter().take(terms).enumerate() {
            let w = x.powc(-(r + (self.first_power + i) as f64));
            for (o, ci) in out.iter_mut().zip(c) {
                *o += w * ci.to_c64();
            }
        }
        out
    }

    /// Converts the coefficients to double precision.
    pub fn to_c64(&self) -> FormalSeries<C64> {
        FormalSeries {
            leading_offset: self.leading_offset.to_c64(),
            first_power: self.first_power,
            coeffs: self.coeffs.iter().map(|c| c.iter().map(Scalar::to_c64).collect()).collect(),
            trusted_order: self.trusted_order,
        }
    }
}

/// How the free constant of level 1 was fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization<T> {
    /// Component whose leading coefficient is prescribed (always 0).
    pub component: usize,
    /// Prescribed value of that coefficient (1 for the standard normalization).
    pub value: T,
}

/// Levels `y_0 .. y_kmax` of a trans-series.
#[derive(Clone, Debug, PartialEq)]
pub struct TransSeries<T> {
    pub levels: Vec<FormalSeries<T>>,
    pub normalization: Normalization<T>,
    pub beta: T,
}

impl<T: Scalar> TransSeries<T> {
    pub fn kmax(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn order(&self) -> usize {
        self.levels[0].coeffs.len()
    }

    /// `a_{k,j}` in the uniform level layout (`j` counts powers beyond `x^{-k beta}`).
    pub fn coeff(&self, k: usize, j: usize) -> Option<&Vec<T>> {
        let s = &self.levels[k];
        j.checked_sub(s.first_power).and_then(|i| s.coeffs.get(i))
    }

    pub fn to_c64(&self) -> TransSeries<C64> {
        TransSeries {
            levels: self.levels.iter().map(FormalSeries::to_c64).collect(),
            normalization: Normalization {
                component: self.normalization.component,
                value: self.normalization.value.to_c64(),
            },
            beta: self.beta.to_c64(),
        }
    }
}

/// System data converted to the scalar field `T`.
#[derive(Clone, Debug)]
pub struct SystemIn<T> {
    pub n: usize,
    pub lambda: Vec<T>,
    pub b: Vec<T>,
    pub f0: BTreeMap<usize, Vec<T>>,
    pub g: Vec<(usize, Vec<usize>, Vec<T>)>,
}

impl<T: Scalar> SystemIn<T> {
    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let conv = |v: &[C64]| -> Result<Vec<T>> {
            v.iter()
                .map(|z| T::from_c64(*z).ok_or_else(|| Error::InvalidArgument("non-finite coefficient".into())))
                .collect()
        };
        Ok(SystemIn {
            n: spec.n,
            lambda: conv(&spec.lambda)?,
            b: conv(&spec.b_diag)?,
            f0: spec.f0.iter().map(|(m, v)| Ok((*m, conv(v)?))).collect::<Result<_>>()?,
            g: spec.g.iter().map(|((m, l), v)| Ok((*m, l.clone(), conv(v)?))).collect::<Result<_>>()?,
        })
    }
}

/// Dense graded series: `a[k][j]` multiplies `xi^k x^{-k beta - j}`.
type Graded<T> = Vec<Vec<T>>;

fn zeros<T: Scalar>(kk: usize, jj: usize) -> Graded<T> {
    vec![vec![T::zero(); jj + 1]; kk + 1]
}

fn mul_graded<T: Scalar>(a: &Graded<T>, b: &Graded<T>, kk: usize, jj: usize) -> Graded<T> {
    let mut out: Graded<T> = zeros(kk, jj);
    for k1 in 0..=kk {
        for j1 in 0..=jj {
            let x = &a[k1][j1];
            if x.is_zero() {
                continue;
            }
            for k2 in 0..=kk - k1 {
                for j2 in 0..=jj - j1 {
                    let y = &b[k2][j2];
                    if !y.is_zero() {
                        out[k1 + k2][j1 + j2] = out[k1 + k2][j1 + j2].clone() + x.clone() * y.clone();
                    }
                }
            }
        }
    }
    out
}

/// `g(x, Y)` for graded `Y` (one graded series per component), truncated to `(kk, jj)`.
fn eval_g<T: Scalar>(sys: &SystemIn<T>, y: &[Graded<T>], kk: usize, jj: usize) -> Vec<Graded<T>> {
    let n = sys.n;
    let mut out: Vec<Graded<T>> = vec![zeros(kk, jj); n];
    let mut powers: Vec<Vec<Graded<T>>> = (0..n)
        .map(|_| {
            let mut one = zeros(kk, jj);
            one[0][0] = T::one();
            vec![one]
        })
        .collect();
    for (m, l, coeff) in &sys.g {
        if *m > jj {
            continue;
        }
        let mut prod = zeros(kk, jj);
        prod[0][0] = T::one();
        for (i, &e) in l.iter().enumerate() {
            while powers[i].len() <= e {
                let next = mul_graded(powers[i].last().expect("seeded"), &y[i], kk, jj);
                powers[i].push(next);
            }
            if e > 0 {
                prod = mul_graded(&prod, &powers[i][e], kk, jj);
            }
        }
        for (c, out_c) in out.iter_mut().enumerate() {
            if coeff[c].is_zero() {
                continue;
            }
            for k in 0..=kk {
                for j in *m..=jj {
                    let t = &prod[k][j - m];
                    if !t.is_zero() {
                        out_c[k][j] = out_c[k][j].clone() + coeff[c].clone() * t.clone();
                    }
                }
            }
        }
    }
    out
}

/// Dense level arrays `[k][j][component]` -> per-component graded series.
fn to_graded<T: Scalar>(dense: &[Vec<Vec<T>>], n: usize, kk: usize, jj: usize) -> Vec<Graded<T>> {
    (0..n)
        .map(|c| {
            let mut g = zeros(kk, jj);
            for (k, level) in dense.iter().enumerate().take(kk + 1) {
                for (j, v) in level.iter().enumerate().take(jj + 1) {
                    g[k][j] = v[c].clone();
                }
            }
            g
        })
        .collect()
}

/// Coefficients `c_1 .. c_N` of `y_0` in the field `T`.
pub fn compute_y0_series_in<T: Scalar>(sys: &SystemIn<T>, order: usize) -> Vec<Vec<T>> {
    let n = sys.n;
    let mut c = vec![vec![T::zero(); n]; order + 1];
    for j in 1..=order {
        let gj = eval_g(sys, &to_graded(&[c.clone()], n, 0, j), 0, j);
        for i in 0..n {
            let mut rhs = sys.f0.get(&j).map_or_else(T::zero, |v| v[i].clone());
            rhs = rhs + gj[i][0][j].clone();
            if j > 1 {
                rhs = rhs + (T::from_int(j as i64 - 1) - sys.b[i].clone()) * c[j - 1][i].clone();
            }
            c[j][i] = rhs / sys.lambda[i].clone();
        }
    }
    c
}

/// Levels `0..=kmax` with `order + 1` coefficients each (level 0: `c_0 = 0, c_1..c_N`),
/// level 1 normalized so that its leading first-component coefficient equals `norm`.
pub fn compute_levels_in<T: Scalar>(sys: &SystemIn<T>, kmax: usize, order: usize, norm: T) -> Result<Vec<Vec<Vec<T>>>> {
    let n = sys.n;
    let beta = sys.b[0].clone();
    let mut dense = vec![compute_y0_series_in(sys, order)];
    for k in 1..=kmax {
        let kt = T::from_int(k as i64);
        for i in 0..n {
            if i > 0 || k > 1 {
                if (sys.lambda[i].clone() - kt.clone()).is_zero() {
                    return Err(Error::Resonance { k, component: i });
                }
            }
        }
        // level 1, component 0 lags one order behind (solvability), hence the extra step
        let steps = if k == 1 { order + 1 } else { order };
        dense.push(vec![vec![T::zero(); n]; order + 2]);
        if k == 1 {
            dense[1][0][0] = norm.clone();
        }
        let shift = kt.clone() * beta.clone();
        let first = if k == 1 { 1 } else { 0 };
        for j in first..=steps {
            let g = eval_g(sys, &to_graded(&dense, n, k, j), k, j);
            for i in 0..n {
                let e = g[i][k][j].clone();
                let prev = if j > 0 { dense[k][j - 1][i].clone() } else { T::zero() };
                let drift = shift.clone() + T::from_int(j as i64 - 1) - sys.b[i].clone();
                if k == 1 && i == 0 {
                    // 0 = e + (j - 1) a_{j-1}: fixes the previous coefficient
                    if j >= 2 {
                        dense[1][j - 1][0] = -e / T::from_int(j as i64 - 1);
                    }
                } else if j <= order {
                    let rhs = e + if j > 0 { drift * prev } else { T::zero() };
                    dense[k][j][i] = rhs / (sys.lambda[i].clone() - kt.clone());
                }
            }
        }
        dense[k].truncate(order + 1);
    }
    Ok(dense)
}

fn levels_to_series<T: Scalar>(dense: Vec<Vec<Vec<T>>>, beta: &T, order: usize, norm: T) -> TransSeries<T> {
    let levels = dense
        .into_iter()
        .enumerate()
        .map(|(k, mut lv)| {
            if k == 0 {
                lv.remove(0);
                FormalSeries { leading_offset: T::zero(), first_power: 1, coeffs: lv, trusted_order: order }
            } else {
                FormalSeries {
                    leading_offset: T::from_int(k as i64) * beta.clone(),
                    first_power: 0,
                    coeffs: lv,
                    trusted_order: order + 1,
                }
            }
        })
        .collect();
    TransSeries { levels, normalization: Normalization { component: 0, value: norm }, beta: beta.clone() }
}

/// `y_0 = sum_{j=1}^N c_j x^-j` in double precision.
pub fn compute_y0_series(spec: &SystemSpec, order: usize) -> Result<FormalSeries<C64>> {
    if order < 1 {
        return Err(Error::InvalidArgument("series order must be at least 1".into()));
    }
    let sys = SystemIn::<C64>::from_spec(spec)?;
    let mut c = compute_y0_series_in(&sys, order);
    c.remove(0);
    Ok(FormalSeries { leading_offset: C64::new(0.0, 0.0), first_power: 1, coeffs: c, trusted_order: order })
}

/// Trans-series levels `0..=kmax` to order `N` in the field `T`, normalized with `C = norm`.
pub fn compute_transseries_in<T: Scalar>(
    spec: &SystemSpec,
    kmax: usize,
    order: usize,
    norm: T,
) -> Result<TransSeries<T>> {
    if kmax < 1 || order < 1 {
        return Err(Error::InvalidArgument("kmax and order must be at least 1".into()));
    }
    let sys = SystemIn::<T>::from_spec(spec)?;
    let dense = compute_levels_in(&sys, kmax, order, norm.clone())?;
    Ok(levels_to_series(dense, &sys.b[0], order, norm))
}

/// Double-precision trans-series with the standard normalization.
pub fn compute_transseries(spec: &SystemSpec, kmax: usize, order: usize) -> Result<TransSeries<C64>> {
    compute_transseries_in(spec, kmax, order, C64::new(1.0, 0.0))
}

/// Residuals of the trans-series equations, evaluated by direct substitution.
///
/// Every level is expanded as a sparse bivariate series in `(xi, x^-1)` and
/// plugged into `y' - f0 + Lambda y + B y / x - g(x, y)`; the returned map holds
/// the coefficient of `xi^k x^{-k beta - j}` for every `k <= kmax`, `j <= N`.
/// Independent of the recursion above: it uses its own sparse multiplication and
/// never solves for anything.
pub fn transseries_residuals<T: Scalar>(
    spec: &SystemSpec,
    ts: &TransSeries<T>,
) -> Result<BTreeMap<(usize, usize), Vec<T>>> {
    let sys = SystemIn::<T>::from_spec(spec)?;
    let n = sys.n;
    let kmax = ts.kmax();
    let nmax = ts.levels[1..].iter().map(|s| s.coeffs.len() - 1).chain([ts.levels[0].coeffs.len()]).min().unwrap_or(0);
    type Sparse<T> = BTreeMap<(usize, usize), T>;
    let mul = |a: &Sparse<T>, b: &Sparse<T>| -> Sparse<T> {
        let mut out: Sparse<T> = BTreeMap::new();
        for ((k1, j1), x) in a {
            for ((k2, j2), y) in b {
                let key = (k1 + k2, j1 + j2);
                if key.0 > kmax || key.1 > nmax {
                    continue;
                }
                let e = out.entry(key).or_insert_with(T::zero);
                *e = e.clone() + x.clone() * y.clone();
            }
        }
        out
    };
    let comps: Vec<Sparse<T>> = (0..n)
        .map(|c| {
            let mut s = BTreeMap::new();
            for (k, lv) in ts.levels.iter().enumerate() {
                for (i, v) in lv.coeffs.iter().enumerate() {
                    let j = lv.first_power + i;
                    if j <= nmax && !v[c].is_zero() {
                        s.insert((k, j), v[c].clone());
                    }
                }
            }
            s
        })
        .collect();
    let mut g: Vec<Sparse<T>> = vec![BTreeMap::new(); n];
    for (m, l, coeff) in &sys.g {
        let mut prod: Sparse<T> = BTreeMap::from([((0, 0), T::one())]);
        for (i, &e) in l.iter().enumerate() {
            for _ in 0..e {
                prod = mul(&prod, &comps[i]);
            }
        }
        for (c, gc) in g.iter_mut().enumerate() {
            for ((k, j), v) in &prod {
                if j + m <= nmax {
                    let e = gc.entry((*k, j + m)).or_insert_with(T::zero);
                    *e = e.clone() + coeff[c].clone() * v.clone();
                }
            }
        }
    }
    let beta = sys.b[0].clone();
    let get = |c: usize, k: usize, j: usize| comps[c].get(&(k, j)).cloned().unwrap_or_else(T::zero);
    let mut out = BTreeMap::new();
    for k in 0..=kmax {
        let kt = T::from_int(k as i64);
        for j in 0..=nmax {
            let mut res = Vec::with_capacity(n);
            for c in 0..n {
                let a = get(c, k, j);
                let a_prev = if j > 0 { get(c, k, j - 1) } else { T::zero() };
                // d/dx (xi^k x^{-k beta - j}) = xi^k (-k x^{-k beta - j} - (k beta + j) x^{-k beta - j - 1})
                let dy = -(kt.clone() * a.clone())
                    - (kt.clone() * beta.clone() + T::from_int(j as i64 - 1)) * a_prev.clone();
                let f = if k == 0 { sys.f0.get(&j).map_or_else(T::zero, |v| v[c].clone()) } else { T::zero() };
                let gv = g[c].get(&(k, j)).cloned().unwrap_or_else(T::zero);
                res.push(dy - f + sys.lambda[c].clone() * a + sys.b[c].clone() * a_prev - gv);
            }
            out.insert((k, j), res);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ExactComplex;
    use crate::system::Truncation;

    fn scalar_spec(beta: f64, f0: &[(usize, f64)], g: &[(usize, usize, f64)]) -> SystemSpec {
        SystemSpec {
            n: 1,
            lambda: vec![C64::new(1.0, 0.0)],
            b_diag: vec![C64::new(beta, 0.0)],
            f0: f0.iter().map(|(m, v)| (*m, vec![C64::new(*v, 0.0)])).collect(),
            g: g.iter().map(|(m, l, v)| ((*m, vec![*l]), vec![C64::new(*v, 0.0)])).collect(),
            truncation: Truncation { max_m: 4, max_l: 4 },
            allow_order_one_forcing: true,
        }
    }

    #[test]
    fn worked_example_y0_is_one_over_x() {
        let spec = scalar_spec(0.5, &[(1, 1.0), (2, -0.5)], &[]);
        let s = compute_y0_series(&spec, 10).unwrap();
        assert_eq!(s.coeffs[0][0], C64::new(1.0, 0.0));
        assert!(s.coeffs[1..].iter().all(|c| c[0] == C64::new(0.0, 0.0)));
    }

    #[test]
    fn factorial_series_for_linear_test_system() {
        // y' + y = 1/x: beta = 0 is outside the admissible range, test-only.
        let spec = scalar_spec(0.0, &[(1, 1.0)], &[]);
        let s = compute_y0_series(&spec, 12).unwrap();
        for (i, c) in s.coeffs.iter().enumerate() {
            let k = i + 1;
            let expected = crate::special::factorial(k - 1);
            assert_eq!(c[0].re, expected, "c_{k}");
        }
        let ts = compute_transseries(&spec, 3, 6).unwrap();
        assert_eq!(ts.levels[1].coeffs[0][0], C64::new(1.0, 0.0));
        assert!(ts.levels[1].coeffs[1..].iter().all(|c| c[0].norm() == 0.0));
        assert!(ts.levels[2..].iter().all(|l| l.coeffs.iter().all(|c| c[0].norm() == 0.0)));
    }

    #[test]
    fn zero_system_gives_zero_series() {
        let spec = scalar_spec(0.5, &[], &[]);
        let s = compute_y0_series(&spec, 6).unwrap();
        assert!(s.coeffs.iter().all(|c| c[0].norm() == 0.0));
    }

    #[test]
    fn worked_example_level_one() {
        let spec = scalar_spec(0.5, &[(1, 1.0), (2, -0.5)], &[]);
        let ts = compute_transseries(&spec, 3, 8).unwrap();
        assert_eq!(ts.levels[1].leading_offset, C64::new(0.5, 0.0));
        assert_eq!(ts.levels[1].coeffs[0][0], C64::new(1.0, 0.0));
        assert!(ts.levels[1].coeffs[1..].iter().all(|c| c[0].norm() == 0.0));
    }

    #[test]
    fn quadratic_level_two_matches_hand_substitution() {
        // y' = -y - (beta/x) y + x^-2 + y^2. Matching e^{-2x} terms by hand:
        //   y_0 = x^-2 + ..., y_1 = x^-beta (1 - 2 x^-1 + ...),
        //   y_2 = x^{-2 beta} (-1 + (beta + 4) x^-1 + ...).
        let beta = 0.375;
        let spec = scalar_spec(beta, &[(2, 1.0)], &[(0, 2, 1.0)]);
        let ts = compute_transseries(&spec, 2, 6).unwrap();
        assert_eq!(ts.levels[1].coeffs[1][0].re, -2.0);
        assert_eq!(ts.levels[2].coeffs[0][0].re, -1.0);
        assert!((ts.levels[2].coeffs[1][0].re - (beta + 4.0)).abs() < 1e-14);
    }

    #[test]
    fn exact_residuals_vanish() {
        let spec = scalar_spec(0.5, &[(2, 1.0)], &[(0, 2, 1.0), (2, 1, -0.25)]);
        let ts = compute_transseries_in::<ExactComplex>(&spec, 3, 8, crate::scalar::exact_ratio(1, 1)).unwrap();
        let res = transseries_residuals(&spec, &ts).unwrap();
        assert!(res.values().flatten().all(num_traits::Zero::is_zero));
    }

    #[test]
    fn resonance_guarded() {
        let mut spec = scalar_spec(0.5, &[(2, 1.0)], &[]);
        spec.n = 2;
        spec.lambda.push(C64::new(2.0, 0.0));
        spec.b_diag.push(C64::new(0.5, 0.0));
        spec.f0 = [(2, vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])].into();
        assert!(matches!(compute_transseries(&spec, 2, 4), Err(Error::Resonance { k: 2, component: 1 })));
    }
}
