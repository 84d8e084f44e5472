//! Randomized checks of the algebraic invariants: convolution symmetry and
//! bilinearity, Borel linearity, the config round trip and the homogeneity of
//! the trans-series levels in the free constant.

use std::collections::BTreeMap;

use num_traits::One;
use proptest::collection::vec;
use proptest::prelude::*;
use resurgence::borel::borel_transform;
use resurgence::grid::{convolve, Grid1, Mesh, MeshParams};
use resurgence::scalar::exact_ratio;
use resurgence::series::{compute_transseries_in, FormalSeries};
use resurgence::system::Truncation;
use resurgence::{load_system, validate_system, ExactComplex, SystemSpec, C64};

fn cplx() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn max_dev(a: &Grid1, b: &Grid1) -> (f64, f64) {
    let n = a.mesh.nnodes();
    let dev = (0..n).map(|i| (a.value(i) - b.value(i)).norm()).fold(0.0, f64::max);
    let size = (0..n).map(|i| a.value(i).norm()).fold(1.0, f64::max);
    (dev, size)
}

/// `p^e (c0 + c1 p + c2 cos(2p))` with the factor declared at the origin.
fn sample(mesh: &std::sync::Arc<Mesh>, e: f64, c: &[C64]) -> Grid1 {
    let exps = if e == 0.0 { vec![] } else { vec![Some(C64::new(e, 0.0))] };
    let (c0, c1, c2) = (c[0], c[1], c[2]);
    Grid1::from_fn(mesh, exps, move |s| s.powf(e) * (c0 + c1 * s + c2 * (2.0 * s).cos()))
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(-0.5), Just(0.25), -0.7..0.7f64]
}

/// Valid systems of dimension 1..=3 with a few forcing and nonlinear entries.
fn valid_spec() -> impl Strategy<Value = SystemSpec> {
    (1usize..=3).prop_flat_map(|n| {
        let comps = move || vec(cplx(), n);
        (
            vec(0.05..0.95f64, n - 1),
            vec(0.5..3.0f64, n - 1),
            (0.05..1.0f64, -1.0..1.0f64),
            vec(cplx(), n - 1),
            vec((2usize..6, comps()), 0..3),
            vec((0usize..3, vec(0usize..3, n), comps()), 0..4),
        )
            .prop_map(move |(turns, mods, (b0re, b0im), b_rest, f0, g)| {
                let mut turns = turns;
                turns.sort_by(f64::total_cmp);
                let mut lambda = vec![C64::new(1.0, 0.0)];
                lambda.extend(turns.iter().zip(&mods).map(|(t, m)| C64::from_polar(*m, std::f64::consts::TAU * t)));
                let mut b_diag = vec![C64::new(b0re, b0im)];
                b_diag.extend(b_rest);
                let mut gt = BTreeMap::new();
                for (m, l, v) in g {
                    let deg: usize = l.iter().sum();
                    // |l| = 1 entries must sit at m >= 2
                    let m = if deg == 1 { m + 2 } else { m };
                    if deg > 0 {
                        gt.insert((m, l), v);
                    }
                }
                let truncation = Truncation {
                    max_m: gt.keys().map(|(m, _)| *m).max().unwrap_or(0),
                    max_l: gt.keys().map(|(_, l)| l.iter().sum()).max().unwrap_or(0),
                };
                SystemSpec {
                    n,
                    lambda,
                    b_diag,
                    f0: f0.into_iter().collect(),
                    g: gt,
                    truncation,
                    allow_order_one_forcing: false,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn convolution_is_commutative(e1 in exponent(), e2 in exponent(), a in vec(cplx(), 3), b in vec(cplx(), 3)) {
        let mesh = Mesh::new(MeshParams::default(), 2.5).unwrap();
        let f = sample(&mesh, e1, &a);
        let g = sample(&mesh, e2, &b);
        let (dev, size) = max_dev(&convolve(&f, &g).unwrap(), &convolve(&g, &f).unwrap());
        // both orders integrate the same singular product with different node sets
        prop_assert!(dev <= 1e-11 * size, "{dev:e} vs {size:e}");
    }

    #[test]
    fn convolution_is_bilinear(e in exponent(), a in vec(cplx(), 3), b in vec(cplx(), 3), c in vec(cplx(), 3), x in cplx(), y in cplx()) {
        let mesh = Mesh::new(MeshParams::default(), 2.5).unwrap();
        let f = sample(&mesh, e, &a);
        let g = sample(&mesh, 0.0, &b);
        let h = sample(&mesh, 0.0, &c);
        let lhs = convolve(&f, &g.axpby(x, &h, y)).unwrap();
        let rhs = convolve(&f, &g).unwrap().axpby(x, &convolve(&f, &h).unwrap(), y);
        let (dev, size) = max_dev(&lhs, &rhs);
        prop_assert!(dev <= 1e-12 * size, "{dev:e} vs {size:e}");
    }

    #[test]
    fn borel_transform_is_linear(
        offset in prop_oneof![Just(0.0), Just(0.5), Just(0.25), Just(-0.5)],
        first in 1usize..3,
        s1 in vec(cplx(), 10),
        s2 in vec(cplx(), 10),
        a in cplx(),
        b in cplx(),
    ) {
        let series = |c: Vec<C64>| FormalSeries {
            leading_offset: C64::new(offset, 0.0),
            first_power: first,
            trusted_order: c.len(),
            coeffs: c.into_iter().map(|z| vec![z]).collect(),
        };
        let mix: Vec<C64> = s1.iter().zip(&s2).map(|(x, y)| a * x + b * y).collect();
        let (g1, g2) = (borel_transform(&series(s1)).unwrap(), borel_transform(&series(s2)).unwrap());
        let gm = borel_transform(&series(mix)).unwrap();
        prop_assert_eq!(gm.leading_exponent, g1.leading_exponent);
        for j in 0..gm.taylor.len() {
            let expect = a * g1.taylor[j][0] + b * g2.taylor[j][0];
            let scale = (a.norm() * g1.taylor[j][0].norm() + b.norm() * g2.taylor[j][0].norm()).max(1e-300);
            prop_assert!((gm.taylor[j][0] - expect).norm() <= 1e-14 * scale);
        }
    }

    #[test]
    fn config_round_trip(spec in valid_spec()) {
        prop_assert_eq!(validate_system(&spec), Vec::<String>::new());
        let back = load_system(&spec.to_json()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn levels_scale_with_the_constant(
        b8 in 1i64..=8,
        f2 in -3i64..=3,
        q in -2i64..=2,
        lin in -2i64..=2,
        (num, den) in (-5i64..=5, 1i64..=4),
    ) {
        // y' = -y - (b/8) y/x + f2 x^-2 + q y^2 + lin x^-2 y, exactly representable
        let text = format!(
            r#"{{"n": 1, "lambda": [[1, 0]], "b_diag": [[{}, 0]], "f0_coeffs": {{"2": [[{f2}, 0]]}},
                "g_table": [{{"m": 0, "l": [2], "coeff": [[{q}, 0]]}}, {{"m": 2, "l": [1], "coeff": [[{lin}, 0]]}}],
                "truncation": {{"max_m": 2, "max_l": 2}}}}"#,
            b8 as f64 / 8.0
        );
        let spec = load_system(&text).unwrap();
        let c = exact_ratio(num, den);
        let base = compute_transseries_in::<ExactComplex>(&spec, 3, 5, ExactComplex::one()).unwrap();
        let scaled = compute_transseries_in::<ExactComplex>(&spec, 3, 5, c.clone()).unwrap();
        let mut ck = ExactComplex::one();
        for (a, b) in base.levels.iter().zip(&scaled.levels) {
            for (ra, rb) in a.coeffs.iter().zip(&b.coeffs) {
                for (x, y) in ra.iter().zip(rb) {
                    prop_assert_eq!(x.clone() * ck.clone(), y.clone());
                }
            }
            ck = ck * c.clone();
        }
    }
}
