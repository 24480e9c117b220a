//! Covariant derivatives, shape matrices and the energy functional.
//!
//! The sphere's Levi-Civita connection is the tangential part of the ambient
//! derivative: `∇_Y v = P_x(D_Y ṽ)` where `ṽ` is the homogeneous extension of
//! `v`. For the (rotated) Hopf field `v = A x` this is `P_x(A Y)`; all other
//! fields are differentiated by central differences along geodesics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSpec;
use crate::quadrature::QuadratureRule;
use crate::sphere::{self, adapted_frame, dot, geodesic_into, norm, project_in_place, AdaptedFrame, SpherePoint, TangentVector};
use crate::sum::{par_map_ordered, try_weighted_sum};

/// Default geodesic step for finite-difference derivatives.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DerivativeMethod {
    /// Analytic for linear (Hopf-type) fields, finite differences otherwise.
    Auto,
    Analytic,
    FiniteDifference { step: f64 },
}

impl DerivativeMethod {
    fn resolve(self, spec: &FieldSpec) -> Result<Resolved> {
        match self {
            DerivativeMethod::Auto => Ok(match spec.linear_operator() {
                Some(a) => Resolved::Analytic(a),
                None => Resolved::Fd(FD_STEP),
            }),
            DerivativeMethod::Analytic => spec
                .linear_operator()
                .map(Resolved::Analytic)
                .ok_or_else(|| Error::InvalidInput("no analytic derivative for perturbed fields".into())),
            DerivativeMethod::FiniteDifference { step } => {
                if !(step.is_finite() && step >= 1e-12) {
                    return Err(Error::StepUnderflow { step });
                }
                Ok(Resolved::Fd(step))
            }
        }
    }

    pub fn label(&self, spec: &FieldSpec) -> &'static str {
        match self.resolve(spec) {
            Ok(Resolved::Analytic(_)) => "analytic",
            _ => "finite_difference",
        }
    }
}

enum Resolved {
    Analytic(Vec<Vec<f64>>),
    Fd(f64),
}

impl Resolved {
    /// `∇_y v` at the unit point `x`, written into `out`.
    fn derivative_into(&self, spec: &FieldSpec, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Resolved::Analytic(a) => {
                for (o, row) in out.iter_mut().zip(a) {
                    *o = dot(row, y);
                }
            }
            Resolved::Fd(h) => {
                let ny = norm(y);
                if ny == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return Ok(());
                }
                let n = x.len();
                let dir: Vec<f64> = y.iter().map(|e| e / ny).collect();
                let mut p = vec![0.0; n];
                let mut vp = vec![0.0; n];
                let mut vm = vec![0.0; n];
                geodesic_into(x, &dir, *h, &mut p);
                if p == x {
                    return Err(Error::StepUnderflow { step: *h });
                }
                spec.eval_into(&p, &mut vp)?;
                geodesic_into(x, &dir, -*h, &mut p);
                spec.eval_into(&p, &mut vm)?;
                let s = ny / (2.0 * h);
                for ((o, a), b) in out.iter_mut().zip(&vp).zip(&vm) {
                    *o = (a - b) * s;
                }
            }
        }
        project_in_place(x, out);
        Ok(())
    }
}

pub fn covariant_derivative(spec: &FieldSpec, x: &SpherePoint, y: &TangentVector) -> Result<TangentVector> {
    covariant_derivative_with(spec, x, y, DerivativeMethod::Auto)
}

pub fn covariant_derivative_with(
    spec: &FieldSpec,
    x: &SpherePoint,
    y: &TangentVector,
    method: DerivativeMethod,
) -> Result<TangentVector> {
    check_k(spec, x)?;
    if y.vec().len() != x.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.vec().len() });
    }
    let inner = dot(y.vec(), x.coords());
    if inner.abs() > sphere::TANGENT_TOL * y.norm().max(1.0) {
        return Err(Error::NotTangent { inner });
    }
    let r = method.resolve(spec)?;
    let mut out = vec![0.0; x.dim()];
    r.derivative_into(spec, x.coords(), y.vec(), &mut out)?;
    Ok(TangentVector::new_unchecked(x.clone(), out))
}

fn check_k(spec: &FieldSpec, x: &SpherePoint) -> Result<()> {
    if spec.dim() != x.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: x.dim() });
    }
    Ok(())
}

/// `h_ij = <∇_{e_i} v, e_j>` and `accel_i = <∇_v v, e_i>` in an adapted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrix {
    pub h: DMatrix<f64>,
    pub accel: Vec<f64>,
    pub frame: AdaptedFrame,
}

impl ShapeMatrix {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
}

pub fn shape_matrix(spec: &FieldSpec, x: &SpherePoint) -> Result<ShapeMatrix> {
    shape_matrix_with(spec, x, DerivativeMethod::Auto)
}

pub fn shape_matrix_with(spec: &FieldSpec, x: &SpherePoint, method: DerivativeMethod) -> Result<ShapeMatrix> {
    check_k(spec, x)?;
    let v = crate::fields::eval_field(spec, x)?;
    let frame = adapted_frame(x, &v)?;
    shape_matrix_in_frame(spec, frame, method)
}

/// Shape matrix in a caller-supplied adapted frame.
pub fn shape_matrix_in_frame(spec: &FieldSpec, frame: AdaptedFrame, method: DerivativeMethod) -> Result<ShapeMatrix> {
    let r = method.resolve(spec)?;
    let x = frame.base.coords();
    let n = x.len();
    let m = frame.legs.len();
    let mut h = DMatrix::zeros(m, m);
    let mut d = vec![0.0; n];
    for (i, ei) in frame.legs.iter().enumerate() {
        r.derivative_into(spec, x, ei.vec(), &mut d)?;
        for (j, ej) in frame.legs.iter().enumerate() {
            h[(i, j)] = dot(&d, ej.vec());
        }
    }
    r.derivative_into(spec, x, frame.field.vec(), &mut d)?;
    let accel = frame.legs.iter().map(|e| dot(&d, e.vec())).collect();
    Ok(ShapeMatrix { h, accel, frame })
}

/// Elementary symmetric functions `σ_1, …, σ_n` of a shape matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaVector {
    pub sigma: Vec<f64>,
}

impl SigmaVector {
    pub fn get(&self, i: usize) -> f64 {
        self.sigma[i - 1]
    }
}

/// Coefficients of `det(I + t h) = 1 + Σ_i σ_i t^i`, via Newton's identities on
/// the power traces `p_j = tr(h^j)`:
/// `i σ_i = Σ_{j=1}^{i} (-1)^{j-1} σ_{i-j} p_j`.
pub fn sigma_of_matrix(h: &DMatrix<f64>) -> Vec<f64> {
    let n = h.nrows();
    let mut traces = Vec::with_capacity(n);
    let mut pow = h.clone();
    for j in 0..n {
        if j > 0 {
            pow = &pow * h;
        }
        traces.push(pow.trace());
    }
    let mut e = vec![1.0; n + 1];
    for i in 1..=n {
        let mut acc = 0.0;
        for j in 1..=i {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * e[i - j] * traces[j - 1];
        }
        e[i] = acc / i as f64;
    }
    e.remove(0);
    e
}

pub fn sigma(sm: &ShapeMatrix) -> SigmaVector {
    SigmaVector { sigma: sigma_of_matrix(&sm.h) }
}

/// `div v = σ_1`; the `v`-component of `∇_v v` vanishes for unit fields.
pub fn divergence(spec: &FieldSpec, x: &SpherePoint) -> Result<f64> {
    Ok(shape_matrix(spec, x)?.h.trace())
}

/// `|∇v|² = Σ_ij h_ij² + Σ_i accel_i²`.
pub fn energy_density(spec: &FieldSpec, x: &SpherePoint) -> Result<f64> {
    Ok(density_of(&shape_matrix(spec, x)?))
}

pub fn density_of(sm: &ShapeMatrix) -> f64 {
    sm.h.iter().map(|e| e * e).sum::<f64>() + sm.accel.iter().map(|e| e * e).sum::<f64>()
}

/// `η_i(k)`: `C(k, i/2)` for even `i`, zero for odd `i`, `i = 1..2k`.
pub fn eta(k: usize) -> Vec<f64> {
    (1..=2 * k)
        .map(|i| if i % 2 == 0 { binomial(k, i / 2) } else { 0.0 })
        .collect()
}

fn binomial(n: usize, r: usize) -> f64 {
    let mut acc = 1.0;
    for j in 0..r {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// `((2k+1)/2 + k) vol`.
pub fn energy_lower_bound(k: usize, vol: f64) -> f64 {
    ((2 * k + 1) as f64 / 2.0 + k as f64) * vol
}

/// `(2k+1)/2 vol`, the energy of a parallel field if one existed.
pub fn energy_floor(k: usize, vol: f64) -> f64 {
    (2 * k + 1) as f64 / 2.0 * vol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub k: usize,
    pub vol_k: f64,
    pub dirichlet: f64,
    pub energy: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular: Option<usize>,
    pub derivative: String,
}

impl EnergyReport {
    pub fn from_parts(k: usize, vol_k: f64, dirichlet: f64, rule: &QuadratureRule, derivative: &str) -> Self {
        let energy = energy_floor(k, vol_k) + 0.5 * dirichlet;
        let bound = energy_lower_bound(k, vol_k);
        EnergyReport {
            k,
            vol_k,
            dirichlet,
            energy,
            bound,
            gap: energy - bound,
            nodes: rule.len(),
            radial: rule.resolution.map(|r| r.radial),
            angular: rule.resolution.map(|r| r.angular),
            derivative: derivative.to_string(),
        }
    }
}

/// `E(v) = (2k+1)/2 vol(K) + 1/2 ∫_K |∇v|²` over the rule.
pub fn energy(spec: &FieldSpec, rule: &QuadratureRule, k: usize) -> Result<EnergyReport> {
    energy_with(spec, rule, k, DerivativeMethod::Auto)
}

pub fn energy_with(spec: &FieldSpec, rule: &QuadratureRule, k: usize, method: DerivativeMethod) -> Result<EnergyReport> {
    if rule.k != k || spec.k() != k {
        return Err(Error::InvalidInput(format!(
            "k mismatch: requested {k}, rule {}, field {}",
            rule.k,
            spec.k()
        )));
    }
    method.resolve(spec)?;
    let dirichlet = try_weighted_sum(&rule.weights, |i| {
        shape_matrix_with(spec, &rule.nodes[i], method).map(|sm| density_of(&sm))
    })?;
    Ok(EnergyReport::from_parts(k, rule.volume(), dirichlet, rule, method.label(spec)))
}

/// Symmetric functions at every node of the rule, in node order.
pub fn sigma_at_nodes(spec: &FieldSpec, rule: &QuadratureRule, method: DerivativeMethod) -> Result<Vec<Vec<f64>>> {
    method.resolve(spec)?;
    par_map_ordered(rule.len(), |i| shape_matrix_with(spec, &rule.nodes[i], method).map(|sm| sigma(&sm).sigma))
        .into_iter()
        .collect()
}
