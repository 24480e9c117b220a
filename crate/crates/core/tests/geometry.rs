use hopf_energy::fields::Bump;
use hopf_energy::inequality::{check_sigma2_inequality, sigma2_minors, MatrixSample};
use hopf_energy::shape::{
    covariant_derivative_with, shape_matrix_in_frame, sigma, sigma_of_matrix, DerivativeMethod, FD_STEP,
};
use hopf_energy::sphere::adapted_frame_with_order;
use hopf_energy::{adapted_frame, apply_complex_structure, eval_field, project_tangent, FieldSpec, SpherePoint};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn point(k: usize) -> impl Strategy<Value = SpherePoint> {
    prop::collection::vec(-1.0f64..1.0, 2 * k + 2)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|v| SpherePoint::from_ambient(v).unwrap())
}

fn ambient(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2 * k + 2)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn perturbed(k: usize, scale: f64) -> FieldSpec {
    let n = 3 * (2 * k + 2);
    let c: Vec<f64> = (0..n).map(|i| scale * ((i * 7 % 5) as f64 - 2.0)).collect();
    FieldSpec::perturbed(k, c, Bump::quartic(2.5)).unwrap()
}

/// Orthogonal matrix from Gram–Schmidt on a seeded matrix.
fn orthogonal(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let m = DMatrix::from_fn(n, n, |_, _| next());
    let q = m.qr().q();
    (0..n).map(|i| (0..n).map(|j| q[(i, j)]).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent(x in point(2), w in ambient(2)) {
        let p = project_tangent(&x, &w).unwrap();
        prop_assert!(dot(p.vec(), x.coords()).abs() < 1e-13);
        let pp = project_tangent(&x, p.vec()).unwrap();
        for (a, b) in p.vec().iter().zip(pp.vec()) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn complex_structure_is_an_isometry(w in ambient(3)) {
        let jw = apply_complex_structure(&w, 3).unwrap();
        prop_assert!((dot(&jw, &jw) - dot(&w, &w)).abs() < 1e-12);
        prop_assert!(dot(&jw, &w).abs() < 1e-12);
        let jjw = apply_complex_structure(&jw, 3).unwrap();
        for (a, b) in jjw.iter().zip(&w) {
            prop_assert_eq!(*a, -b);
        }
    }

    #[test]
    fn hopf_is_unit_and_tangent(x in point(1)) {
        let v = eval_field(&FieldSpec::hopf(1), &x).unwrap();
        prop_assert!((v.norm() - 1.0).abs() < 1e-14);
        prop_assert!(dot(v.vec(), x.coords()).abs() < 1e-14);
    }

    #[test]
    fn frames_are_orthonormal_and_normal_to_field(x in point(2)) {
        let f = perturbed(2, 0.05);
        let v = eval_field(&f, &x).unwrap();
        let fr = adapted_frame(&x, &v).unwrap();
        prop_assert!(fr.orthonormality_defect() < 1e-13);
        for leg in &fr.legs {
            prop_assert!(dot(leg.vec(), v.vec()).abs() < 1e-13);
        }
    }

    #[test]
    fn sigma_does_not_depend_on_frame(x in point(1), rot in 0usize..4) {
        let f = perturbed(1, 0.1);
        let v = eval_field(&f, &x).unwrap();
        let m = FD_STEP;
        let default = shape_matrix_in_frame(&f, adapted_frame(&x, &v).unwrap(), DerivativeMethod::FiniteDifference { step: m }).unwrap();
        let order: Vec<usize> = (0..4).map(|i| (i + rot) % 4).rev().collect();
        let other = match adapted_frame_with_order(&x, &v, &order) {
            Ok(fr) => fr,
            Err(_) => return Ok(()),
        };
        let sm = shape_matrix_in_frame(&f, other, DerivativeMethod::FiniteDifference { step: m }).unwrap();
        let (a, b) = (sigma(&default).sigma, sigma(&sm).sigma);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-9, "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn finite_difference_matches_analytic_for_linear_fields(x in point(2), w in ambient(2), seed in 0u64..1000) {
        let f = FieldSpec::rotated_hopf(orthogonal(6, seed)).unwrap();
        let y = project_tangent(&x, &w).unwrap();
        let a = covariant_derivative_with(&f, &x, &y, DerivativeMethod::Analytic).unwrap();
        let d = covariant_derivative_with(&f, &x, &y, DerivativeMethod::FiniteDifference { step: FD_STEP }).unwrap();
        let scale = y.norm().max(1.0);
        for (p, q) in a.vec().iter().zip(d.vec()) {
            prop_assert!((p - q).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn sigma_are_characteristic_coefficients(entries in prop::collection::vec(-2.0f64..2.0, 16), t in -1.5f64..1.5) {
        let h = DMatrix::from_row_slice(4, 4, &entries);
        let s = sigma_of_matrix(&h);
        let det = (DMatrix::identity(4, 4) + &h * t).determinant();
        let poly = 1.0 + s.iter().enumerate().map(|(i, c)| c * t.powi(i as i32 + 1)).sum::<f64>();
        prop_assert!((det - poly).abs() < 1e-10 * (1.0 + det.abs()));
    }

    #[test]
    fn sigma2_two_ways_agree(entries in prop::collection::vec(-5.0f64..5.0, 36)) {
        let m = MatrixSample::new(6, entries.clone(), false).unwrap();
        let h = DMatrix::from_row_slice(6, 6, &entries);
        let s2 = sigma_of_matrix(&h)[1];
        prop_assert!((sigma2_minors(&m) - s2).abs() < 1e-11 * (1.0 + m.frobenius_sq()));
    }
}

#[test]
fn rotated_hopf_sigma_matches_hopf() {
    let x = SpherePoint::from_ambient(vec![0.3, -0.2, 0.7, 0.1, -0.5, 0.4]).unwrap();
    for seed in [1, 2, 3] {
        let f = FieldSpec::rotated_hopf(orthogonal(6, seed)).unwrap();
        let v = eval_field(&f, &x).unwrap();
        let fr = adapted_frame(&x, &v).unwrap();
        let s = sigma(&shape_matrix_in_frame(&f, fr, DerivativeMethod::Analytic).unwrap()).sigma;
        let expect = [0.0, 2.0, 0.0, 1.0];
        for (a, b) in s.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{s:?}");
        }
    }
}

#[test]
fn finite_difference_error_is_second_order() {
    let f = FieldSpec::rotated_hopf(orthogonal(4, 9)).unwrap();
    let x = SpherePoint::from_ambient(vec![0.4, -0.1, 0.8, 0.3]).unwrap();
    let y = project_tangent(&x, &[0.2, 0.9, -0.3, 0.5]).unwrap();
    let exact = covariant_derivative_with(&f, &x, &y, DerivativeMethod::Analytic).unwrap();
    let err = |h: f64| {
        let d = covariant_derivative_with(&f, &x, &y, DerivativeMethod::FiniteDifference { step: h }).unwrap();
        d.vec().iter().zip(exact.vec()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let (e1, e2) = (err(4e-2), err(2e-2));
    let order = (e1 / e2).log2();
    assert!(order >= 1.9, "observed order {order} ({e1:e}, {e2:e})");
}

#[test]
fn sigma2_margin_vanishes_quadratically_near_skew() {
    let skew = [0.0, 1.3, -0.4, 0.7, -1.3, 0.0, 0.9, -0.2, 0.4, -0.9, 0.0, 1.1, -0.7, 0.2, -1.1, 0.0];
    let dir = [0.5, 0.2, -0.3, 0.1, 0.4, -0.6, 0.2, 0.3, -0.1, 0.7, 0.2, -0.4, 0.3, 0.1, 0.6, -0.1];
    let margin = |eps: f64| {
        let e: Vec<f64> = skew.iter().zip(&dir).map(|(s, d)| s + eps * d).collect();
        check_sigma2_inequality(&MatrixSample::new(4, e, true).unwrap()).unwrap().offdiag
    };
    assert!(margin(0.0).abs() < 1e-12);
    let (m1, m2) = (margin(1e-2), margin(5e-3));
    assert!(m1 > 0.0 && m2 > 0.0);
    let ratio = m1 / m2;
    assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
}
