//! Unit vector fields: the Hopf field `H(x) = Jx`, its isometric images, and
//! perturbation families that are pinned to `H` on the boundary of a cap.
//!
//! Fields are evaluated through their homogeneous extension `v(x / |x|)`, so an
//! ambient (not necessarily unit) argument is accepted internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::sphere::{self, dot, j_into, norm, project_in_place, SpherePoint, TangentVector};

/// Below this norm the perturbed field cannot be normalized.
pub const NORMALIZATION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpProfile {
    /// `ψ(ρ) = (1 - (ρ/ρ₀)²)²` inside the cap, zero outside.
    Quartic,
    /// `ψ ≡ 1`; does not vanish on the boundary.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    #[serde(rename = "type")]
    pub profile: BumpProfile,
    pub rho0: f64,
    /// Cap center; the first ambient basis vector when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<SpherePoint>,
}

impl Bump {
    pub fn quartic(rho0: f64) -> Self {
        Bump { profile: BumpProfile::Quartic, rho0, center: None }
    }

    pub fn constant(rho0: f64) -> Self {
        Bump { profile: BumpProfile::Constant, rho0, center: None }
    }

    /// Profile as a function of the geodesic radius.
    pub fn profile_at_radius(&self, rho: f64) -> f64 {
        match self.profile {
            BumpProfile::Constant => 1.0,
            BumpProfile::Quartic => {
                if rho >= self.rho0 {
                    0.0
                } else {
                    let s = rho / self.rho0;
                    let a = 1.0 - s * s;
                    a * a
                }
            }
        }
    }

    /// `ψ` at a unit ambient point.
    fn value(&self, x: &[f64]) -> f64 {
        if self.profile == BumpProfile::Constant {
            return 1.0;
        }
        let cos = match &self.center {
            Some(c) => dot(x, c.coords()),
            None => x[0],
        };
        let perp2 = (dot(x, x) - cos * cos).max(0.0);
        self.profile_at_radius(perp2.sqrt().atan2(cos))
    }
}

/// A tangent vector field used as a perturbation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// `P_x(e_m)`
    Constant { index: usize },
    /// `P_x(J P_x(e_m))`
    JRotated { index: usize },
    /// `x_m P_x(e_{m+1})`, indices mod `2k+2`
    Linear { index: usize },
}

impl Generator {
    fn index(&self) -> usize {
        match *self {
            Generator::Constant { index } | Generator::JRotated { index } | Generator::Linear { index } => index,
        }
    }

    /// Writes the generator at the unit point `x` into `out` (tangent at `x`).
    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        match *self {
            Generator::Constant { index } => {
                out[index] = 1.0;
                project_in_place(x, out);
            }
            Generator::JRotated { index } => {
                let mut p = vec![0.0; n];
                p[index] = 1.0;
                project_in_place(x, &mut p);
                j_into(&p, out);
                project_in_place(x, out);
            }
            Generator::Linear { index } => {
                out[(index + 1) % n] = 1.0;
                project_in_place(x, out);
                let s = x[index];
                out.iter_mut().for_each(|o| *o *= s);
            }
        }
    }
}

/// The first `count` generators of the default family for `S^{2k+1}`:
/// all constant fields, then their `J`-rotations, then the linear fields.
pub fn default_generators(k: usize, count: usize) -> Result<Vec<Generator>> {
    let n = 2 * k + 2;
    if count > 3 * n {
        return Err(Error::InvalidInput(format!("at most {} default generators exist for k = {k}", 3 * n)));
    }
    let all = (0..n)
        .map(|index| Generator::Constant { index })
        .chain((0..n).map(|index| Generator::JRotated { index }))
        .chain((0..n).map(|index| Generator::Linear { index }));
    Ok(all.take(count).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Hopf {
        k: usize,
    },
    /// Pushforward `Q J Qᵀ x` of the Hopf field by an orthogonal `Q`.
    RotatedHopf {
        k: usize,
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
    /// `normalize(P_x(H(x) + ψ(x) Σ_m c_m W_m(x)))`.
    Perturbed {
        k: usize,
        generators: Vec<Generator>,
        coefficients: Vec<f64>,
        bump: Bump,
    },
}

impl FieldSpec {
    pub fn hopf(k: usize) -> Self {
        FieldSpec::Hopf { k }
    }

    pub fn rotated_hopf(q: Vec<Vec<f64>>) -> Result<Self> {
        let n = q.len();
        let k = sphere::check_dim(n)?;
        let f = FieldSpec::RotatedHopf { k, q };
        f.validate()?;
        Ok(f)
    }

    /// The Hopf field of the opposite orientation, `-Jx`, realized as the
    /// pushforward by complex conjugation.
    pub fn opposite_hopf(k: usize) -> Self {
        let n = 2 * k + 2;
        let q = (0..n)
            .map(|i| (0..n).map(|j| if i != j { 0.0 } else if i % 2 == 0 { 1.0 } else { -1.0 }).collect())
            .collect();
        FieldSpec::RotatedHopf { k, q }
    }

    /// Perturbation of `H` by the first `coefficients.len()` default generators.
    pub fn perturbed(k: usize, coefficients: Vec<f64>, bump: Bump) -> Result<Self> {
        let generators = default_generators(k, coefficients.len())?;
        let f = FieldSpec::Perturbed { k, generators, coefficients, bump };
        f.validate()?;
        Ok(f)
    }

    pub fn k(&self) -> usize {
        match self {
            FieldSpec::Hopf { k } | FieldSpec::RotatedHopf { k, .. } | FieldSpec::Perturbed { k, .. } => *k,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.k() + 2
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::BadDimension(2));
        }
        let n = self.dim();
        match self {
            FieldSpec::Hopf { .. } => {}
            FieldSpec::RotatedHopf { q, .. } => {
                if q.len() != n || q.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch { expected: n, got: q.len() });
                }
                for i in 0..n {
                    for j in 0..n {
                        let g: f64 = (0..n).map(|m| q[m][i] * q[m][j]).sum();
                        let t = if i == j { 1.0 } else { 0.0 };
                        if (g - t).abs() > 1e-10 {
                            return Err(Error::InvalidInput("Q is not orthogonal".into()));
                        }
                    }
                }
            }
            FieldSpec::Perturbed { generators, coefficients, bump, .. } => {
                if generators.len() != coefficients.len() {
                    return Err(Error::InvalidInput(format!(
                        "{} generators but {} coefficients",
                        generators.len(),
                        coefficients.len()
                    )));
                }
                if let Some(g) = generators.iter().find(|g| g.index() >= n) {
                    return Err(Error::InvalidInput(format!("generator index {} out of range", g.index())));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput("non-finite coefficient".into()));
                }
                if !(bump.rho0.is_finite() && bump.rho0 > 0.0) {
                    return Err(Error::InvalidInput(format!("bump radius must be positive, got {}", bump.rho0)));
                }
                if let Some(c) = &bump.center {
                    if c.dim() != n {
                        return Err(Error::DimensionMismatch { expected: n, got: c.dim() });
                    }
                }
            }
        }
        Ok(())
    }

    /// `A` with `v(x) = A x`, for the Hopf field and its rotations.
    pub fn linear_operator(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.dim();
        match self {
            FieldSpec::Hopf { .. } => {
                let mut a = vec![vec![0.0; n]; n];
                for p in 0..n / 2 {
                    a[2 * p][2 * p + 1] = -1.0;
                    a[2 * p + 1][2 * p] = 1.0;
                }
                Some(a)
            }
            FieldSpec::RotatedHopf { q, .. } => {
                // Q J Qᵀ
                let mut jqt = vec![vec![0.0; n]; n];
                for (c, col) in (0..n).map(|c| (c, (0..n).map(|r| q[c][r]).collect::<Vec<_>>())) {
                    let mut out = vec![0.0; n];
                    j_into(&col, &mut out);
                    for r in 0..n {
                        jqt[r][c] = out[r];
                    }
                }
                let mut a = vec![vec![0.0; n]; n];
                for (i, row) in a.iter_mut().enumerate() {
                    for (j, e) in row.iter_mut().enumerate() {
                        *e = (0..n).map(|m| q[i][m] * jqt[m][j]).sum();
                    }
                }
                Some(a)
            }
            FieldSpec::Perturbed { .. } => None,
        }
    }

    /// Evaluates the homogeneous extension at an ambient point into `out`.
    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        let r = norm(x);
        let xu: Vec<f64> = if (r - 1.0).abs() <= 4.0 * f64::EPSILON {
            x.to_vec()
        } else {
            x.iter().map(|e| e / r).collect()
        };
        match self {
            FieldSpec::Hopf { .. } => {
                j_into(&xu, out);
            }
            FieldSpec::RotatedHopf { .. } => {
                let a = self.linear_operator().expect("rotated hopf is linear");
                for (o, row) in out.iter_mut().zip(&a) {
                    *o = dot(row, &xu);
                }
            }
            FieldSpec::Perturbed { generators, coefficients, bump, .. } => {
                j_into(&xu, out);
                let psi = bump.value(&xu);
                if psi != 0.0 && coefficients.iter().any(|c| *c != 0.0) {
                    let mut g = vec![0.0; n];
                    for (gen, &c) in generators.iter().zip(coefficients) {
                        if c == 0.0 {
                            continue;
                        }
                        gen.eval_into(&xu, &mut g);
                        for (o, gi) in out.iter_mut().zip(&g) {
                            *o += c * psi * gi;
                        }
                    }
                } else {
                    return Ok(());
                }
                project_in_place(&xu, out);
                let m = norm(out);
                if !(m >= NORMALIZATION_FLOOR) {
                    return Err(Error::Normalization { norm: m });
                }
                out.iter_mut().for_each(|o| *o /= m);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: FieldSpec = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }
}

/// `H(x) = J x`.
pub fn eval_hopf(x: &SpherePoint) -> TangentVector {
    let mut out = vec![0.0; x.dim()];
    j_into(x.coords(), &mut out);
    TangentVector::new_unchecked(x.clone(), out)
}

pub fn eval_field(spec: &FieldSpec, x: &SpherePoint) -> Result<TangentVector> {
    let mut out = vec![0.0; x.dim()];
    spec.eval_into(x.coords(), &mut out)?;
    Ok(TangentVector::new_unchecked(x.clone(), out))
}

/// `max_{x ∈ ∂K} |v(x) - H(x)|` over the rule's boundary samples.
pub fn boundary_mismatch(spec: &FieldSpec, rule: &QuadratureRule) -> Result<f64> {
    if rule.boundary_nodes.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    let mut worst = 0.0f64;
    for b in &rule.boundary_nodes {
        let v = eval_field(spec, b)?;
        let h = eval_hopf(b);
        let d: f64 = v.vec().iter().zip(h.vec()).map(|(a, b)| (a - b) * (a - b)).sum();
        worst = worst.max(d.sqrt());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{build_quadrature, DomainSpec};

    fn p(c: &[f64]) -> SpherePoint {
        SpherePoint::from_ambient(c.to_vec()).unwrap()
    }

    #[test]
    fn hopf_examples() {
        assert_eq!(eval_hopf(&p(&[1.0, 0.0, 0.0, 0.0])).vec(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(eval_hopf(&p(&[0.0, 0.0, 1.0, 0.0])).vec(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_perturbation_and_identity_rotation_reduce_to_hopf() {
        let x = p(&[0.3, -0.4, 0.5, 0.2]);
        let h = eval_hopf(&x);
        let f = FieldSpec::perturbed(1, vec![0.0; 12], Bump::quartic(1.0)).unwrap();
        assert_eq!(eval_field(&f, &x).unwrap().vec(), h.vec());
        let id: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (i == j) as u8 as f64).collect()).collect();
        let r = FieldSpec::rotated_hopf(id).unwrap();
        assert_eq!(eval_field(&r, &x).unwrap().vec(), h.vec());
    }

    #[test]
    fn opposite_orientation_is_minus_j() {
        let x = p(&[0.3, -0.4, 0.5, 0.2, 0.1, 0.7]);
        let v = eval_field(&FieldSpec::opposite_hopf(2), &x).unwrap();
        for (a, b) in v.vec().iter().zip(eval_hopf(&x).vec()) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    #[test]
    fn perturbed_field_is_unit_and_tangent() {
        let c: Vec<f64> = (0..12).map(|i| 0.05 * ((i as f64) - 5.5)).collect();
        let f = FieldSpec::perturbed(1, c, Bump::quartic(1.5)).unwrap();
        let x = p(&[0.9, 0.1, -0.3, 0.2]);
        let v = eval_field(&f, &x).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-14);
        assert!(dot(v.vec(), x.coords()).abs() < 1e-14);
        assert!(v.vec().iter().zip(eval_hopf(&x).vec()).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn bump_vanishes_with_zero_slope_at_boundary() {
        let b = Bump::quartic(0.8);
        assert_eq!(b.profile_at_radius(0.8), 0.0);
        assert_eq!(b.profile_at_radius(0.0), 1.0);
        let h = 1e-6;
        let slope = (b.profile_at_radius(0.8) - b.profile_at_radius(0.8 - h)) / h;
        assert!(slope.abs() < 1e-5);
    }

    #[test]
    fn boundary_mismatch_examples() {
        let d = DomainSpec::cap(1, 1.0).unwrap();
        let rule = build_quadrature(&d, 4, 6).unwrap();
        assert_eq!(boundary_mismatch(&FieldSpec::hopf(1), &rule).unwrap(), 0.0);

        let c = vec![0.1; 12];
        let compliant = FieldSpec::perturbed(1, c.clone(), Bump::quartic(1.0)).unwrap();
        assert!(boundary_mismatch(&compliant, &rule).unwrap() < 1e-10);

        let leaky = FieldSpec::perturbed(1, c, Bump::constant(1.0)).unwrap();
        let m = boundary_mismatch(&leaky, &rule).unwrap();
        // hand evaluation at the first boundary node
        let b = &rule.boundary_nodes[0];
        let v = eval_field(&leaky, b).unwrap();
        let h = eval_hopf(b);
        let d0 = norm(&v.vec().iter().zip(h.vec()).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(d0 > 0.0 && m >= d0);

        let full = build_quadrature(&DomainSpec::full_sphere(1), 4, 4).unwrap();
        assert_eq!(boundary_mismatch(&FieldSpec::hopf(1), &full), Err(Error::EmptyBoundary));
    }

    #[test]
    fn normalization_failure_is_reported() {
        // at x = e_0 with J x = e_1, a coefficient of -1 on P_x(e_1) cancels H exactly
        let f = FieldSpec::Perturbed {
            k: 1,
            generators: vec![Generator::Constant { index: 1 }],
            coefficients: vec![-1.0],
            bump: Bump::constant(1.0),
        };
        let x = p(&[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(eval_field(&f, &x), Err(Error::Normalization { .. })));
    }

    #[test]
    fn spec_json_shape() {
        let f = FieldSpec::perturbed(1, vec![0.5, 0.0], Bump::quartic(1.0)).unwrap();
        let j = f.to_json().unwrap();
        assert!(j.contains("\"kind\": \"perturbed\""));
        assert!(j.contains("\"type\": \"quartic\""));
        assert_eq!(FieldSpec::from_json(&j).unwrap(), f);
        let r = FieldSpec::opposite_hopf(1).to_json().unwrap();
        assert!(r.contains("\"Q\""));
        assert!(FieldSpec::from_json(r#"{"kind":"hopf","k":1,"junk":2}"#).is_err());
        assert!(FieldSpec::from_json(r#"{"kind":"rotated_hopf","k":1,"Q":[[1,1,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}"#).is_err());
    }

    #[test]
    fn default_generator_counts() {
        assert_eq!(default_generators(1, 12).unwrap().len(), 12);
        assert!(default_generators(1, 13).is_err());
        assert_eq!(default_generators(2, 18).unwrap().len(), 18);
    }
}
