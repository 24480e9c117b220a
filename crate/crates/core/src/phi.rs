//! The displacement map `φ_t(x) = x + t v(x)` onto the sphere of radius
//! `√(1+t²)`, its Jacobian determinant, and the volume of `φ_t(K)`.
//!
//! In the frames `{e_1, …, e_2k, v}` at `x` and `{e_1, …, e_2k, u}` at
//! `φ_t(x)`, with `u = (v - t x)/√(1+t²)`, the differential is block
//! triangular and `det dφ_t = √(1+t²) det(I + t h) = √(1+t²)(1 + Σ σ_i t^i)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{eval_field, FieldSpec};
use crate::quadrature::{DomainSpec, QuadratureRule};
use crate::shape::{eta, sigma, sigma_at_nodes, shape_matrix_with, DerivativeMethod, SigmaVector, FD_STEP};
use crate::sphere::{adapted_frame, dot, geodesic_into, norm, SpherePoint};
use crate::sum::{compensated_sum, par_map_ordered, try_weighted_sum};

/// Probe grid for the positivity of `det dφ_t`.
pub const DEFAULT_PROBE_GRID: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

/// Default grid for the moment fit.
pub fn default_t_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.01).collect()
}

fn check_t(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!("t must be finite and non-negative, got {t}")));
    }
    Ok(())
}

pub fn phi_t(spec: &FieldSpec, x: &SpherePoint, t: f64) -> Result<Vec<f64>> {
    check_t(t)?;
    let v = eval_field(spec, x)?;
    Ok(x.coords().iter().zip(v.vec()).map(|(a, b)| a + t * b).collect())
}

/// `u(x) = (v(x) - t x) / √(1+t²)`, tangent to the image sphere at `φ_t(x)`.
pub fn u_field(spec: &FieldSpec, x: &SpherePoint, t: f64) -> Result<Vec<f64>> {
    check_t(t)?;
    let v = eval_field(spec, x)?;
    let s = (1.0 + t * t).sqrt();
    Ok(x.coords().iter().zip(v.vec()).map(|(a, b)| (b - t * a) / s).collect())
}

/// `√(1+t²)(1 + Σ_i σ_i t^i)`.
pub fn jacobian_det_formula(sv: &SigmaVector, t: f64) -> f64 {
    det_formula(&sv.sigma, t)
}

fn det_formula(sigma: &[f64], t: f64) -> f64 {
    (1.0 + t * t).sqrt() * (1.0 + polynomial_tail(sigma, t))
}

/// `Σ_{i>=1} c_i t^i` by Horner's rule.
fn polynomial_tail(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| (acc + ci) * t)
}

/// Matrix of `<dφ_t(a), b>` for source legs `a ∈ {e_1, …, e_2k, v}` (rows) and
/// image legs `b ∈ {e_1, …, e_2k, u}` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianProbe {
    pub t: f64,
    pub matrix: DMatrix<f64>,
    pub det: f64,
}

impl JacobianProbe {
    /// `max_i |<dφ_t(e_i), u>|`; zero in exact arithmetic.
    pub fn leg_normal_defect(&self) -> f64 {
        let m = self.matrix.nrows() - 1;
        (0..m).map(|i| self.matrix[(i, m)].abs()).fold(0.0, f64::max)
    }

    /// `<dφ_t(v), u>`; equals `√(1+t²)` in exact arithmetic.
    pub fn field_entry(&self) -> f64 {
        let m = self.matrix.nrows() - 1;
        self.matrix[(m, m)]
    }
}

/// Central-difference Jacobian of `φ_t` along geodesics, in adapted frames.
pub fn jacobian_matrix_numeric(spec: &FieldSpec, x: &SpherePoint, t: f64, step: f64) -> Result<JacobianProbe> {
    check_t(t)?;
    if !(step.is_finite() && step >= 1e-12) {
        return Err(Error::StepUnderflow { step });
    }
    let n = x.dim();
    let v = eval_field(spec, x)?;
    let frame = adapted_frame(x, &v)?;
    let u = u_field(spec, x, t)?;
    let mut src: Vec<&[f64]> = frame.legs.iter().map(|l| l.vec()).collect();
    src.push(v.vec());
    let mut img: Vec<&[f64]> = frame.legs.iter().map(|l| l.vec()).collect();
    img.push(&u);

    let m = src.len();
    let mut matrix = DMatrix::zeros(m, m);
    let mut p = vec![0.0; n];
    let mut vp = vec![0.0; n];
    let mut vm = vec![0.0; n];
    let mut d = vec![0.0; n];
    for (a, dir) in src.iter().enumerate() {
        geodesic_into(x.coords(), dir, step, &mut p);
        spec.eval_into(&p, &mut vp)?;
        let plus: Vec<f64> = p.iter().zip(&vp).map(|(y, w)| y + t * w).collect();
        geodesic_into(x.coords(), dir, -step, &mut p);
        spec.eval_into(&p, &mut vm)?;
        for ((di, pl), (y, w)) in d.iter_mut().zip(&plus).zip(p.iter().zip(&vm)) {
            *di = (pl - (y + t * w)) / (2.0 * step);
        }
        for (b, leg) in img.iter().enumerate() {
            matrix[(a, b)] = dot(&d, leg);
        }
    }
    let det = matrix.determinant();
    Ok(JacobianProbe { t, matrix, det })
}

/// Numeric `det dφ_t` at `x`; fails if it is not positive.
pub fn jacobian_det_numeric(spec: &FieldSpec, x: &SpherePoint, t: f64) -> Result<f64> {
    let probe = jacobian_matrix_numeric(spec, x, t, FD_STEP)?;
    if !(probe.det > 0.0) {
        return Err(Error::NonPositiveJacobian { det: probe.det, t });
    }
    Ok(probe.det)
}

/// `vol φ_t(K) = ∫_K √(1+t²)(1 + Σ σ_i(x) t^i)`.
pub fn volume_transport(spec: &FieldSpec, rule: &QuadratureRule, t: f64) -> Result<f64> {
    check_t(t)?;
    let sig = sigma_at_nodes(spec, rule, DerivativeMethod::Auto)?;
    Ok(transport_from_sigma(&sig, &rule.weights, t))
}

fn transport_from_sigma(sig: &[Vec<f64>], weights: &[f64], t: f64) -> f64 {
    compensated_sum(sig.iter().zip(weights).map(|(s, w)| w * det_formula(s, t)))
}

/// `∫_K det dφ_t` with the determinant taken from finite differences.
pub fn volume_transport_numeric(spec: &FieldSpec, rule: &QuadratureRule, t: f64) -> Result<f64> {
    check_t(t)?;
    try_weighted_sum(&rule.weights, |i| jacobian_det_numeric(spec, &rule.nodes[i], t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub k: usize,
    pub vol_k: f64,
    pub nodes: usize,
    pub derivative: String,
    pub t: Vec<f64>,
    pub vol_formula: Vec<f64>,
    pub vol_eta: Vec<f64>,
    pub eta: Vec<f64>,
    /// `∫_K σ_i` by quadrature.
    pub moments_direct: Vec<f64>,
    /// `∫_K σ_i` recovered from the polynomial fit of `vol φ_t(K) / √(1+t²)`.
    pub moments_fit: Vec<f64>,
    /// Fitted constant term; estimates `vol(K)`.
    pub fit_constant: f64,
    pub fit_condition: f64,
    pub residual_direct: Vec<f64>,
    pub residual_fit: Vec<f64>,
    pub direct_vs_fit: Vec<f64>,
}

impl TransportReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_direct
            .iter()
            .chain(&self.residual_fit)
            .map(|r| r.abs())
            .fold(0.0, f64::max)
    }
}

/// Checks `∫_K σ_i = η_i vol(K)` directly and through a least-squares fit of
/// the transported volume over `t_grid`.
pub fn moment_identities(spec: &FieldSpec, rule: &QuadratureRule, t_grid: &[f64]) -> Result<TransportReport> {
    let k = rule.k;
    if spec.k() != k {
        return Err(Error::InvalidInput(format!("field k = {} but rule k = {k}", spec.k())));
    }
    let unknowns = 2 * k + 1;
    if t_grid.len() < unknowns {
        return Err(Error::IllConditioned(format!(
            "need at least {unknowns} t values, got {}",
            t_grid.len()
        )));
    }
    for &t in t_grid {
        check_t(t)?;
    }
    let mut distinct: Vec<f64> = t_grid.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < unknowns {
        return Err(Error::IllConditioned(format!("only {} distinct t values", distinct.len())));
    }

    let method = DerivativeMethod::Auto;
    let sig = sigma_at_nodes(spec, rule, method)?;
    let vol = rule.volume();
    let et = eta(k);
    let moments_direct: Vec<f64> = (0..2 * k)
        .map(|i| compensated_sum(sig.iter().zip(&rule.weights).map(|(s, w)| w * s[i])))
        .collect();

    let vol_formula: Vec<f64> = t_grid.iter().map(|&t| transport_from_sigma(&sig, &rule.weights, t)).collect();
    let vol_eta: Vec<f64> = t_grid.iter().map(|&t| det_formula(&et, t) * vol).collect();

    let tau = distinct.last().copied().unwrap_or(1.0);
    if tau <= 0.0 {
        return Err(Error::IllConditioned("t grid is identically zero".into()));
    }
    let rows = t_grid.len();
    let a = DMatrix::from_fn(rows, unknowns, |r, c| (t_grid[r] / tau).powi(c as i32));
    let y = DMatrix::from_fn(rows, 1, |r, _| vol_formula[r] / (1.0 + t_grid[r] * t_grid[r]).sqrt());
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-14) {
        return Err(Error::IllConditioned(format!("Vandermonde system is singular (σ_min = {smin:e})")));
    }
    let beta = svd
        .solve(&y, smax * 1e-15)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let fit_constant = beta[(0, 0)];
    let moments_fit: Vec<f64> = (1..unknowns).map(|i| beta[(i, 0)] / tau.powi(i as i32)).collect();

    let residual_direct: Vec<f64> = moments_direct.iter().zip(&et).map(|(m, e)| m - e * vol).collect();
    let residual_fit: Vec<f64> = moments_fit.iter().zip(&et).map(|(m, e)| m - e * vol).collect();
    let direct_vs_fit = moments_direct.iter().zip(&moments_fit).map(|(a, b)| a - b).collect();

    Ok(TransportReport {
        k,
        vol_k: vol,
        nodes: rule.len(),
        derivative: method.label(spec).to_string(),
        t: t_grid.to_vec(),
        vol_formula,
        vol_eta,
        eta: et,
        moments_direct,
        moments_fit,
        fit_constant,
        fit_condition: smax / smin,
        residual_direct,
        residual_fit,
        direct_vs_fit,
    })
}

/// Relative tolerance for numeric vs formula determinants.
pub const JACOBIAN_DET_TOL: f64 = 1e-5;
/// Absolute tolerance for the two entry identities of the Jacobian matrix.
pub const JACOBIAN_ENTRY_TOL: f64 = 1e-6;

/// `count` uniform random points of `domain`, by rejection from the sphere.
pub fn random_points(domain: &DomainSpec, count: usize, seed: u64) -> Result<Vec<SpherePoint>> {
    domain.validate()?;
    let n = 2 * domain.k() + 2;
    let center = domain.center();
    let radius = domain.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let budget = 1_000_000usize.saturating_mul(count.max(1));
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > budget {
            return Err(Error::InvalidDomain(format!("rejection sampling failed for {}", domain.label())));
        }
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = norm(&g);
        if r < 1e-12 {
            continue;
        }
        let p = SpherePoint::from_ambient(g)?;
        if p.distance(&center) <= radius {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianRow {
    pub t: f64,
    pub points: usize,
    pub min_det: f64,
    /// `max |det_numeric - det_formula| / |det_formula|`
    pub max_rel_det_error: f64,
    /// `max |<dφ_t(e_i), u>|`
    pub max_leg_normal: f64,
    /// `max |<dφ_t(v), u> - √(1+t²)|`
    pub max_field_entry_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianCheck {
    pub k: usize,
    pub seed: u64,
    pub rows: Vec<JacobianRow>,
    pub passed: bool,
}

/// Compares the numeric Jacobian of `φ_t` with the formula at random points.
pub fn jacobian_check(
    spec: &FieldSpec,
    domain: &DomainSpec,
    points: usize,
    t_values: &[f64],
    seed: u64,
) -> Result<JacobianCheck> {
    if spec.k() != domain.k() {
        return Err(Error::InvalidInput(format!("field k = {} but domain k = {}", spec.k(), domain.k())));
    }
    for &t in t_values {
        check_t(t)?;
    }
    let pts = random_points(domain, points, seed)?;
    let sigmas: Vec<Result<SigmaVector>> = par_map_ordered(pts.len(), |i| {
        shape_matrix_with(spec, &pts[i], DerivativeMethod::Auto).map(|sm| sigma(&sm))
    });
    let sigmas: Vec<SigmaVector> = sigmas.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let probes: Vec<Result<JacobianProbe>> =
            par_map_ordered(pts.len(), |i| jacobian_matrix_numeric(spec, &pts[i], t, FD_STEP));
        let s = (1.0 + t * t).sqrt();
        let mut row = JacobianRow {
            t,
            points: pts.len(),
            min_det: f64::INFINITY,
            max_rel_det_error: 0.0,
            max_leg_normal: 0.0,
            max_field_entry_error: 0.0,
            passed: false,
        };
        for (p, sv) in probes.into_iter().zip(&sigmas) {
            let p = p?;
            let f = jacobian_det_formula(sv, t);
            row.min_det = row.min_det.min(p.det);
            row.max_rel_det_error = row.max_rel_det_error.max((p.det - f).abs() / f.abs());
            row.max_leg_normal = row.max_leg_normal.max(p.leg_normal_defect());
            row.max_field_entry_error = row.max_field_entry_error.max((p.field_entry() - s).abs());
        }
        row.passed = row.max_rel_det_error < JACOBIAN_DET_TOL
            && row.max_leg_normal < JACOBIAN_ENTRY_TOL
            && row.max_field_entry_error < JACOBIAN_ENTRY_TOL;
        rows.push(row);
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(JacobianCheck { k: domain.k(), seed, rows, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoProbe {
    pub t: Vec<f64>,
    pub min_det: Vec<f64>,
    /// Largest probed `t` up to which every node had a positive determinant.
    pub largest_positive_t: Option<f64>,
}

/// Minimum numeric `det dφ_t` over the rule for increasing `t`, stopping at
/// the first probe value where some node fails.
pub fn diffeomorphism_probe(spec: &FieldSpec, rule: &QuadratureRule, grid: &[f64]) -> Result<DiffeoProbe> {
    let mut ts: Vec<f64> = grid.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut out = DiffeoProbe { t: Vec::new(), min_det: Vec::new(), largest_positive_t: None };
    for t in ts {
        check_t(t)?;
        let dets: Vec<Result<f64>> = par_map_ordered(rule.len(), |i| {
            jacobian_matrix_numeric(spec, &rule.nodes[i], t, FD_STEP).map(|p| p.det)
        });
        let mut m = f64::INFINITY;
        for d in dets {
            m = m.min(d?);
        }
        out.t.push(t);
        out.min_det.push(m);
        if m > 0.0 {
            out.largest_positive_t = Some(t);
        } else {
            break;
        }
    }
    Ok(out)
}

/// `min |φ_t(x) - φ_t(y)| / |x - y|` over pairs of (at most `max_points`,
/// evenly strided) nodes. A positive value witnesses injectivity on the sample.
pub fn injectivity_probe(spec: &FieldSpec, rule: &QuadratureRule, t: f64, max_points: usize) -> Result<f64> {
    check_t(t)?;
    let stride = (rule.len() / max_points.max(1)).max(1);
    let pts: Vec<&SpherePoint> = rule.nodes.iter().step_by(stride).take(max_points).collect();
    let imgs: Vec<Vec<f64>> = pts.iter().map(|x| phi_t(spec, x, t)).collect::<Result<_>>()?;
    let ratios: Vec<f64> = par_map_ordered(pts.len(), |i| {
        let mut m = f64::INFINITY;
        for j in (i + 1)..pts.len() {
            let dx: Vec<f64> = pts[i].coords().iter().zip(pts[j].coords()).map(|(a, b)| a - b).collect();
            let dy: Vec<f64> = imgs[i].iter().zip(&imgs[j]).map(|(a, b)| a - b).collect();
            let nx = norm(&dx);
            if nx > 0.0 {
                m = m.min(norm(&dy) / nx);
            }
        }
        m
    });
    Ok(ratios.into_iter().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{build_quadrature, DomainSpec};

    fn p(c: &[f64]) -> SpherePoint {
        SpherePoint::from_ambient(c.to_vec()).unwrap()
    }

    #[test]
    fn phi_examples() {
        let h = FieldSpec::hopf(1);
        let x = p(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(phi_t(&h, &x, 1.0).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(phi_t(&h, &x, 0.0).unwrap(), x.coords().to_vec());
        assert_eq!(u_field(&h, &x, 0.0).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        assert!(phi_t(&h, &x, -0.1).is_err());
    }

    #[test]
    fn determinant_formula_for_hopf() {
        let s1 = SigmaVector { sigma: eta(1) };
        let s2 = SigmaVector { sigma: eta(2) };
        for t in [0.0, 0.01, 0.3, 1.7] {
            let a = jacobian_det_formula(&s1, t);
            let b = jacobian_det_formula(&s2, t);
            assert!((a - (1.0 + t * t).powf(1.5)).abs() < 1e-14 * a);
            assert!((b - (1.0 + t * t).powf(2.5)).abs() < 1e-13 * b);
        }
        assert_eq!(jacobian_det_formula(&SigmaVector { sigma: vec![3.0, -2.0] }, 0.0), 1.0);
    }

    #[test]
    fn numeric_determinant_at_zero_time() {
        let x = p(&[0.1, 0.2, 0.3, 0.4]);
        let d = jacobian_det_numeric(&FieldSpec::hopf(1), &x, 0.0).unwrap();
        assert!((d - 1.0).abs() < 1e-7);
    }

    #[test]
    fn transport_at_zero_is_volume() {
        let rule = build_quadrature(&DomainSpec::cap(1, 1.0).unwrap(), 8, 4).unwrap();
        let v = volume_transport(&FieldSpec::hopf(1), &rule, 0.0).unwrap();
        assert!((v - rule.volume()).abs() < 1e-13);
    }

    #[test]
    fn moment_grid_validation() {
        let rule = build_quadrature(&DomainSpec::cap(1, 1.0).unwrap(), 4, 4).unwrap();
        let h = FieldSpec::hopf(1);
        assert!(matches!(moment_identities(&h, &rule, &[0.01, 0.02]), Err(Error::IllConditioned(_))));
        assert!(matches!(
            moment_identities(&h, &rule, &[0.05, 0.05, 0.05, 0.05]),
            Err(Error::IllConditioned(_))
        ));
        assert!(matches!(moment_identities(&h, &rule, &[0.0, 0.0, 0.0]), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn large_t_breaks_positivity_for_perturbed_fields() {
        use crate::fields::Bump;
        let rule = build_quadrature(&DomainSpec::cap(1, 1.0).unwrap(), 6, 4).unwrap();
        let c: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let f = FieldSpec::perturbed(1, c, Bump::quartic(1.0)).unwrap();
        let probe = diffeomorphism_probe(&f, &rule, &[0.01, 0.1, 1.0, 10.0]).unwrap();
        assert_eq!(probe.largest_positive_t.is_some(), probe.min_det[0] > 0.0);
        let hopf = diffeomorphism_probe(&FieldSpec::hopf(1), &rule, &DEFAULT_PROBE_GRID).unwrap();
        assert_eq!(hopf.largest_positive_t, Some(0.1));
    }

    #[test]
    fn injectivity_on_small_t() {
        let rule = build_quadrature(&DomainSpec::cap(1, 1.0).unwrap(), 4, 4).unwrap();
        let r = injectivity_probe(&FieldSpec::hopf(1), &rule, 0.1, 200).unwrap();
        // |φ(x) - φ(y)|² = |x-y|² + t²|J(x-y)|² for the linear Hopf field
        assert!((r - (1.0f64 + 0.01).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn random_points_respect_domain() {
        let d = DomainSpec::cap(1, 0.5).unwrap();
        let pts = random_points(&d, 50, 3).unwrap();
        assert_eq!(pts.len(), 50);
        assert!(pts.iter().all(|p| p.distance(&d.center()) <= 0.5));
        assert_eq!(pts, random_points(&d, 50, 3).unwrap());
    }

    #[test]
    fn jacobian_check_on_perturbed_field() {
        use crate::fields::Bump;
        let d = DomainSpec::cap(1, 1.0).unwrap();
        let c: Vec<f64> = (0..12).map(|i| 0.05 * (i as f64 - 5.5)).collect();
        let f = FieldSpec::perturbed(1, c, Bump::quartic(1.0)).unwrap();
        let r = jacobian_check(&f, &d, 20, &[0.01, 0.1], 1).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(jacobian_check(&FieldSpec::hopf(2), &d, 1, &[0.1], 1).is_err());
    }
}
