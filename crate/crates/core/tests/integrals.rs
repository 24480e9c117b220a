use std::f64::consts::PI;

use hopf_energy::fields::{boundary_mismatch, Bump};
use hopf_energy::phi::{volume_transport, volume_transport_numeric};
use hopf_energy::quadrature::{cap_volume, QuadratureRule};
use hopf_energy::shape::{energy_floor, energy_with, DerivativeMethod, FD_STEP};
use hopf_energy::{build_quadrature, energy, moment_identities, DomainSpec, Error, FieldSpec};

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Area of the unit sphere `S^m`.
fn sphere_area(m: usize) -> f64 {
    // |S^m| = 2π/(m-1) |S^{m-2}|, with |S^0| = 2 and |S^1| = 2π
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 1.0) * sphere_area(m - 2),
    }
}

#[test]
fn cap_volumes_match_one_dimensional_integrals() {
    for k in [1, 2, 3] {
        for rho in [0.3, 1.0, 2.0, PI] {
            let area = sphere_area(2 * k);
            let reference = area * simpson(|r| r.sin().powi(2 * k as i32), 0.0, rho, 2000);
            assert!((cap_volume(k, rho) - reference).abs() < 1e-10 * reference, "k={k} rho={rho}");
            let rule = build_quadrature(&DomainSpec::cap(k, rho).unwrap(), 16, 4).unwrap();
            assert!((rule.volume() - reference).abs() < 1e-10 * reference);
        }
    }
    let s3 = build_quadrature(&DomainSpec::full_sphere(1), 16, 4).unwrap();
    assert!((s3.volume() - 2.0 * PI * PI).abs() < 1e-12);
}

#[test]
fn quadrature_integrates_zonal_polynomials() {
    // ∫_K x_0² over the cap around e_0: the integrand is cos²ρ
    let k = 1;
    let rho = 1.2;
    let reference = sphere_area(2) * simpson(|r| r.cos().powi(2) * r.sin().powi(2), 0.0, rho, 4000);
    let rule = build_quadrature(&DomainSpec::cap(k, rho).unwrap(), 12, 6).unwrap();
    let q: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.coords()[0].powi(2)).sum();
    assert!((q - reference).abs() < 1e-12 * reference);
    // a non-zonal monomial: ∫ x_1² x_2² is determined by symmetry on the full sphere
    let full = build_quadrature(&DomainSpec::full_sphere(1), 20, 6).unwrap();
    let q: f64 = full.nodes.iter().zip(&full.weights).map(|(x, w)| w * (x.coords()[1] * x.coords()[2]).powi(2)).sum();
    // ∫_{S^3} x_i² x_j² = |S^3| / (n(n+2)) for i ≠ j, n = 4
    assert!((q - 2.0 * PI * PI / 24.0).abs() < 1e-12);
}

#[test]
fn energy_error_falls_with_resolution() {
    let mut c = vec![0.0; 12];
    c[4] = 0.3;
    c[9] = -0.2;
    let f = FieldSpec::perturbed(1, c, Bump::quartic(1.0)).unwrap();
    let d = DomainSpec::cap(1, 1.0).unwrap();
    let e = |nr, na| {
        let rule = build_quadrature(&d, nr, na).unwrap();
        energy(&f, &rule, 1).unwrap().energy
    };
    let reference = e(48, 24);
    let coarse = (e(6, 3) - reference).abs();
    let fine = (e(12, 6) - reference).abs();
    assert!(fine < coarse / 4.0, "coarse {coarse:e} fine {fine:e}");
}

#[test]
fn rule_json_round_trip_is_bit_exact() {
    let rule = build_quadrature(&DomainSpec::cap(2, 0.8).unwrap(), 5, 3).unwrap();
    let back = QuadratureRule::from_json(&rule.to_json().unwrap()).unwrap();
    assert_eq!(rule, back);
    let path = std::env::temp_dir().join(format!("hopf-rule-{}.json", std::process::id()));
    rule.write_json(&path).unwrap();
    assert_eq!(QuadratureRule::read_json(&path).unwrap(), rule);
    std::fs::remove_file(path).ok();
    let tampered = rule.to_json().unwrap().replacen("\"version\"", "\"extra\": 1, \"version\"", 1);
    assert!(QuadratureRule::from_json(&tampered).is_err());
}

#[test]
fn invalid_resolutions_and_domains() {
    let d = DomainSpec::cap(1, 1.0).unwrap();
    assert!(matches!(build_quadrature(&d, 0, 4), Err(Error::InvalidResolution(_))));
    assert!(matches!(build_quadrature(&d, 4, 0), Err(Error::InvalidResolution(_))));
    assert!(DomainSpec::cap(1, 0.0).is_err());
    assert!(DomainSpec::cap(1, 4.0).is_err());
    assert!(DomainSpec::parse(1, "cap:rho=abc").is_err());
}

#[test]
fn both_hopf_orientations_attain_the_bound() {
    let rule = build_quadrature(&DomainSpec::cap(2, 1.0).unwrap(), 10, 5).unwrap();
    for f in [FieldSpec::hopf(2), FieldSpec::opposite_hopf(2)] {
        let r = energy(&f, &rule, 2).unwrap();
        assert!(r.gap.abs() < 1e-10 * r.vol_k, "{r:?}");
        assert!((r.bound - 4.5 * r.vol_k).abs() < 1e-12 * r.vol_k);
        let m = moment_identities(&f, &rule, &[0.01, 0.03, 0.05, 0.07, 0.09]).unwrap();
        assert!(m.max_residual() < 1e-9 * m.vol_k);
    }
}

#[test]
fn perturbed_fields_stay_above_floor_and_pinned() {
    let d = DomainSpec::cap(1, 1.0).unwrap();
    let rule = build_quadrature(&d, 12, 6).unwrap();
    let c: Vec<f64> = (0..12).map(|i| 0.1 * (i as f64 - 6.0)).collect();
    let f = FieldSpec::perturbed(1, c, Bump::quartic(1.0)).unwrap();
    let r = energy(&f, &rule, 1).unwrap();
    assert!(r.energy >= energy_floor(1, r.vol_k));
    assert!(boundary_mismatch(&f, &rule).unwrap() < 1e-12);
    let fd = energy_with(&f, &rule, 1, DerivativeMethod::FiniteDifference { step: FD_STEP }).unwrap();
    assert_eq!(r, fd);
    let loose = FieldSpec::perturbed(1, vec![0.2; 12], Bump::constant(1.0)).unwrap();
    assert!(boundary_mismatch(&loose, &rule).unwrap() > 1e-3);
}

#[test]
fn transport_formula_matches_numeric_jacobian() {
    let d = DomainSpec::cap(1, 1.0).unwrap();
    let rule = build_quadrature(&d, 8, 4).unwrap();
    let c: Vec<f64> = (0..12).map(|i| 0.03 * ((i % 4) as f64 - 1.5)).collect();
    let f = FieldSpec::perturbed(1, c, Bump::quartic(1.0)).unwrap();
    for t in [0.01, 0.1] {
        let a = volume_transport(&f, &rule, t).unwrap();
        let b = volume_transport_numeric(&f, &rule, t).unwrap();
        assert!((a - b).abs() < 1e-8 * a, "t={t}: {a} vs {b}");
    }
    let h = FieldSpec::hopf(1);
    let t: f64 = 0.1;
    let v = volume_transport(&h, &rule, t).unwrap();
    assert!((v - (1.0 + t * t).sqrt() * (1.0 + t * t) * rule.volume()).abs() < 1e-12 * v);
}

#[test]
fn moment_fit_agrees_with_direct_for_non_hopf_fields() {
    let d = DomainSpec::cap(1, 1.5).unwrap();
    let rule = build_quadrature(&d, 10, 6).unwrap();
    let c: Vec<f64> = (0..12).map(|i| 0.05 * (i as f64).sin()).collect();
    let f = FieldSpec::perturbed(1, c, Bump::quartic(1.5)).unwrap();
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.01).collect();
    let m = moment_identities(&f, &rule, &grid).unwrap();
    for d in &m.direct_vs_fit {
        assert!(d.abs() < 1e-8 * m.vol_k);
    }
    assert!((m.fit_constant - m.vol_k).abs() < 1e-8 * m.vol_k);
}
