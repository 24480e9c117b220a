//! Points and tangent vectors of the unit sphere `S^{2k+1} ⊂ R^{2k+2}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|x| = 1` for [`SpherePoint`].
pub const UNIT_TOL: f64 = 1e-12;
/// Tolerance on `<v, x> = 0` for [`TangentVector`].
pub const TANGENT_TOL: f64 = 1e-10;
/// Candidates whose residual falls below this are dropped during Gram–Schmidt.
pub const FRAME_DROP_TOL: f64 = 1e-6;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a -= s * b`
#[inline]
pub(crate) fn sub_scaled(a: &mut [f64], s: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x -= s * y;
    }
}

/// Removes the `x` component of `w` in place.
#[inline]
pub(crate) fn project_in_place(x: &[f64], w: &mut [f64]) {
    let s = dot(w, x);
    sub_scaled(w, s, x);
}

/// Writes `J w` into `out`, where `J` is multiplication by `i` on `C^{k+1}`:
/// `(w1, w2, w3, w4, ...) ↦ (-w2, w1, -w4, w3, ...)`.
#[inline]
pub(crate) fn j_into(w: &[f64], out: &mut [f64]) {
    for p in 0..w.len() / 2 {
        out[2 * p] = -w[2 * p + 1];
        out[2 * p + 1] = w[2 * p];
    }
}

/// Point on the geodesic leaving `x` with unit initial velocity `dir`.
#[inline]
pub(crate) fn geodesic_into(x: &[f64], dir: &[f64], s: f64, out: &mut [f64]) {
    let (sn, cs) = s.sin_cos();
    for ((o, a), b) in out.iter_mut().zip(x).zip(dir) {
        *o = a * cs + b * sn;
    }
}

pub(crate) fn check_dim(len: usize) -> Result<usize> {
    if len < 4 || len % 2 != 0 {
        return Err(Error::BadDimension(len));
    }
    Ok(len / 2 - 1)
}

/// A point of `S^{2k+1}` in ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    /// Validates `|coords| = 1` and an ambient dimension `2k+2`, `k >= 1`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_dim(coords.len())?;
        let n = norm(&coords);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit { norm: n });
        }
        Ok(Self { coords })
    }

    /// Radially projects a nonzero ambient vector onto the sphere.
    pub fn from_ambient(mut coords: Vec<f64>) -> Result<Self> {
        check_dim(coords.len())?;
        let n = norm(&coords);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotUnit { norm: n });
        }
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(Self { coords })
    }

    /// The ambient basis vector `e_index` of `R^{2k+2}`.
    pub fn basis(k: usize, index: usize) -> Result<Self> {
        let n = 2 * k + 2;
        if k == 0 {
            return Err(Error::BadDimension(n));
        }
        if index >= n {
            return Err(Error::InvalidInput(format!("basis index {index} out of range for dimension {n}")));
        }
        let mut c = vec![0.0; n];
        c[index] = 1.0;
        Ok(Self { coords: c })
    }

    pub(crate) fn from_unit_unchecked(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn k(&self) -> usize {
        self.coords.len() / 2 - 1
    }

    /// Geodesic distance to `other`, accurate near 0 and π.
    pub fn distance(&self, other: &SpherePoint) -> f64 {
        let c = dot(&self.coords, &other.coords);
        let mut perp = other.coords.clone();
        sub_scaled(&mut perp, c, &self.coords);
        norm(&perp).atan2(c)
    }
}

impl TryFrom<Vec<f64>> for SpherePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SpherePoint::new(v)
    }
}

impl From<SpherePoint> for Vec<f64> {
    fn from(p: SpherePoint) -> Self {
        p.coords
    }
}

/// An ambient vector orthogonal to its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: SpherePoint,
    vec: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: SpherePoint, vec: Vec<f64>) -> Result<Self> {
        if vec.len() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: vec.len() });
        }
        let inner = dot(&vec, base.coords());
        if inner.abs() > TANGENT_TOL * norm(&vec).max(1.0) {
            return Err(Error::NotTangent { inner });
        }
        Ok(Self { base, vec })
    }

    pub(crate) fn new_unchecked(base: SpherePoint, vec: Vec<f64>) -> Self {
        Self { base, vec }
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.vec
    }

    pub fn norm(&self) -> f64 {
        norm(&self.vec)
    }
}

/// Tangential part `w - <w, x> x` of an ambient vector.
pub fn project_tangent(x: &SpherePoint, w: &[f64]) -> Result<TangentVector> {
    if w.len() != x.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: w.len() });
    }
    let mut v = w.to_vec();
    project_in_place(x.coords(), &mut v);
    Ok(TangentVector::new_unchecked(x.clone(), v))
}

/// The complex structure `J` of `C^{k+1} ≅ R^{2k+2}`.
pub fn apply_complex_structure(w: &[f64], k: usize) -> Result<Vec<f64>> {
    if w.len() % 2 != 0 {
        return Err(Error::BadDimension(w.len()));
    }
    if w.len() != 2 * k + 2 {
        return Err(Error::DimensionMismatch { expected: 2 * k + 2, got: w.len() });
    }
    let mut out = vec![0.0; w.len()];
    j_into(w, &mut out);
    Ok(out)
}

/// Orthonormal frame `{e_1, …, e_2k, v}` of `T_x S^{2k+1}` whose last leg is the field.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFrame {
    pub base: SpherePoint,
    pub legs: Vec<TangentVector>,
    pub field: TangentVector,
}

impl AdaptedFrame {
    /// Max deviation of the Gram matrix of `{e_1, …, e_2k, v}` from the identity,
    /// together with the max `|<leg, x>|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut all: Vec<&[f64]> = self.legs.iter().map(|l| l.vec()).collect();
        all.push(self.field.vec());
        let mut worst = 0.0f64;
        for (i, a) in all.iter().enumerate() {
            worst = worst.max(dot(a, self.base.coords()).abs());
            for (j, b) in all.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }
}

/// Completes `{x, v}` to an orthonormal basis by Gram–Schmidt on the ambient basis.
///
/// Candidates are visited in order of decreasing residual norm after removing
/// their `x` and `v` components.
pub fn adapted_frame(x: &SpherePoint, v: &TangentVector) -> Result<AdaptedFrame> {
    let n = x.dim();
    let xc = x.coords();
    let vc = v.vec();
    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|m| (m, (1.0 - xc[m] * xc[m] - vc[m] * vc[m]).max(0.0)))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let order: Vec<usize> = order.into_iter().map(|(m, _)| m).collect();
    adapted_frame_with_order(x, v, &order)
}

/// [`adapted_frame`] with an explicit candidate order.
pub fn adapted_frame_with_order(x: &SpherePoint, v: &TangentVector, order: &[usize]) -> Result<AdaptedFrame> {
    let n = x.dim();
    if v.vec().len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.vec().len() });
    }
    let vn = v.norm();
    if (vn - 1.0).abs() > 1e-8 {
        return Err(Error::NotUnitField { norm: vn });
    }
    let inner = dot(v.vec(), x.coords());
    if inner.abs() > 1e-8 {
        return Err(Error::NotTangent { inner });
    }
    let needed = n - 2;
    let mut legs: Vec<Vec<f64>> = Vec::with_capacity(needed);
    for &m in order {
        if legs.len() == needed {
            break;
        }
        if m >= n {
            return Err(Error::InvalidInput(format!("candidate index {m} out of range")));
        }
        let mut c = vec![0.0; n];
        c[m] = 1.0;
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            project_in_place(x.coords(), &mut c);
            let s = dot(&c, v.vec());
            sub_scaled(&mut c, s, v.vec());
            for l in &legs {
                let s = dot(&c, l);
                sub_scaled(&mut c, s, l);
            }
        }
        let r = norm(&c);
        if r < FRAME_DROP_TOL {
            continue;
        }
        c.iter_mut().for_each(|e| *e /= r);
        legs.push(c);
    }
    if legs.len() < needed {
        return Err(Error::DegenerateFrame { found: legs.len(), needed });
    }
    Ok(AdaptedFrame {
        base: x.clone(),
        legs: legs.into_iter().map(|l| TangentVector::new_unchecked(x.clone(), l)).collect(),
        field: v.clone(),
    })
}

/// Orthonormal basis of `T_x S^{2k+1}` that does not depend on any field.
pub(crate) fn tangent_basis(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()).then(a.cmp(&b)));
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for m in order {
        if out.len() == n - 1 {
            break;
        }
        let mut c = vec![0.0; n];
        c[m] = 1.0;
        for _ in 0..2 {
            project_in_place(x, &mut c);
            for l in &out {
                let s = dot(&c, l);
                sub_scaled(&mut c, s, l);
            }
        }
        let r = norm(&c);
        if r < FRAME_DROP_TOL {
            continue;
        }
        c.iter_mut().for_each(|e| *e /= r);
        out.push(c);
    }
    out
}
