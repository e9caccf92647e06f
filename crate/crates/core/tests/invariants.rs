use nalgebra::DMatrix;
use proptest::prelude::*;
use xxz_core::checks::{hamiltonian_relations, monodromy_symmetry_residuals};
use xxz_core::curve::reduce_mod_lattice;
use xxz_core::laurent::{LambdaPoly, LaurentPoly};
use xxz_core::phasespace::{bracket_matrix, sample_leaf, Casimirs, Coordinates, ModelParams, OrderingMode};
use xxz_core::quadrature::{integrate, QuadOptions};
use xxz_core::roots::poly_roots;
use xxz_core::theta::Theta;
use xxz_core::C64;

fn cplx(range: f64) -> impl Strategy<Value = C64> {
    (-range..range, -range..range).prop_map(|(a, b)| C64::new(a, b))
}

fn model(n: usize) -> impl Strategy<Value = (ModelParams, Vec<C64>, u64)> {
    (prop::collection::vec(cplx(0.2), n), cplx(0.2), prop::collection::vec(cplx(0.5), n), any::<u64>()).prop_map(
        move |(a, xi, om, seed)| {
            let a: Vec<C64> = a.iter().map(|v| v.exp()).collect();
            let params = ModelParams::new(xi.exp(), a, OrderingMode::Reversed).unwrap();
            let leaf: Vec<C64> = om.iter().map(|w| w + 2.5).collect();
            (params, leaf, seed)
        },
    )
}

fn period_matrix() -> impl Strategy<Value = DMatrix<C64>> {
    (cplx(0.5), cplx(0.5), cplx(0.5), 0.6f64..1.5, 0.6f64..1.5, -0.3f64..0.3).prop_map(|(a, b, d, y1, y2, y12)| {
        DMatrix::from_row_slice(2, 2, &[C64::new(a.re, y1), C64::new(b.re, y12), C64::new(b.re, y12), C64::new(d.re, y2)])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn casimirs_are_central((params, leaf, seed) in model(2)) {
        let _ = params;
        let x = sample_leaf(&leaf, seed);
        let b = bracket_matrix(&Casimirs, &Coordinates, &x).unwrap();
        let scale = x.coords().iter().map(|c| c.norm()).fold(1.0, f64::max).powi(3);
        prop_assert!(b.iter().all(|v| v.norm() < 1e-11 * scale));
    }

    #[test]
    fn transfer_symmetries((params, leaf, seed) in model(3), zr in 0.6f64..1.6, zp in 0.1f64..1.4) {
        let x = sample_leaf(&leaf, seed);
        let r = monodromy_symmetry_residuals(&x, &params, C64::from_polar(zr, zp)).unwrap();
        prop_assert!(r.iter().all(|v| *v < 1e-9), "{r:?}");
    }

    #[test]
    fn hamiltonian_sum_rules((params, leaf, seed) in model(2)) {
        let x = sample_leaf(&leaf, seed);
        let (sum, top) = hamiltonian_relations(&x, &params).unwrap();
        prop_assert!(sum < 1e-10 && top < 1e-10, "{sum} {top}");
    }

    #[test]
    fn laurent_product_evaluates(p in prop::collection::vec(cplx(1.0), 1..5), q in prop::collection::vec(cplx(1.0), 1..5), lo in -3i32..3, z in cplx(1.0)) {
        prop_assume!(z.norm() > 0.3);
        let a = LaurentPoly::from_coeffs(lo, p);
        let b = LaurentPoly::from_coeffs(-lo, q);
        let lhs = (&a * &b).eval(z).unwrap();
        let rhs = a.eval(z).unwrap() * b.eval(z).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-11 * (1.0 + rhs.norm()));
    }

    #[test]
    fn roots_reproduce_polynomial(r in prop::collection::vec(cplx(2.0), 1..6)) {
        let p = r.iter().fold(LambdaPoly::constant(C64::new(1.0, 0.0)), |acc, x| &acc * &LambdaPoly::new(vec![-x, C64::new(1.0, 0.0)]));
        let found = poly_roots(&p).unwrap();
        prop_assert_eq!(found.len(), r.len());
        for f in &found {
            let scale: f64 = p.coeffs().iter().enumerate().map(|(i, c)| c.norm() * f.norm().powi(i as i32)).sum();
            prop_assert!(p.eval(*f).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn theta_even_and_automorphic(b in period_matrix(), z in prop::collection::vec(cplx(1.5), 2), n0 in -1i32..=1, n1 in -1i32..=1) {
        let th = Theta::new(b).unwrap();
        let v = th.value(&z);
        let m: Vec<C64> = z.iter().map(|x| -x).collect();
        prop_assert!((v - th.value(&m)).norm() < 1e-12 * v.norm().max(1e-300) + 1e-300);
        prop_assert!(th.automorphy_residual(&z, &[n0 as f64, n1 as f64]) < 1e-10);
    }

    #[test]
    fn lattice_reduction_is_invariant(b in period_matrix(), v in prop::collection::vec(cplx(1.0), 2), n in prop::collection::vec(-3i32..3, 4)) {
        let shift: Vec<C64> = (0..2).map(|i| {
            let bn: C64 = (0..2).map(|j| b[(i, j)] * n[2 + j] as f64).sum();
            v[i] + n[i] as f64 + bn
        }).collect();
        let r1 = reduce_mod_lattice(&v, &b);
        let r2 = reduce_mod_lattice(&shift, &b);
        let d: Vec<C64> = r1.iter().zip(&r2).map(|(a, c)| a - c).collect();
        let back = reduce_mod_lattice(&d, &b);
        prop_assert!(back.iter().all(|x| x.norm() < 1e-12));
    }

    #[test]
    fn quadrature_integrates_polynomials(c in prop::collection::vec(cplx(1.0), 1..8), a in -2.0f64..0.0, len in 0.1f64..3.0) {
        let b = a + len;
        let f = |s: f64| Ok(vec![c.iter().rev().fold(C64::new(0.0, 0.0), |acc, k| acc * s + k)]);
        let v = integrate(f, a, b, &QuadOptions::default()).unwrap()[0];
        let exact: C64 = c.iter().enumerate().map(|(i, k)| k * (b.powi(i as i32 + 1) - a.powi(i as i32 + 1)) / (i as f64 + 1.0)).sum();
        prop_assert!((v - exact).norm() < 1e-11 * (1.0 + exact.norm()));
    }
}
