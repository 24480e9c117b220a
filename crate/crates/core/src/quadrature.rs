//! Geodesic-cap domains and product quadrature rules over them.
//!
//! A point of the cap of radius `ρ₀` about `c` is written in geodesic polar
//! coordinates as `x = c cos ρ + ω sin ρ` with `ω` a unit vector of `c^⊥`, so
//! that `dvol = sin^{2k}(ρ) dρ dω`. The radial integral uses Gauss–Legendre on
//! `[0, ρ₀]`; the direction sphere `S^{2k}` uses nested polar angles with a
//! uniform azimuthal rule.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{self, SpherePoint};
use crate::sum::compensated_sum;

/// Current on-disk version of [`QuadratureRule`] files.
pub const RULE_FORMAT_VERSION: u32 = 1;

/// The integration domain `K ⊂ S^{2k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    FullSphere { k: usize },
    GeodesicCap { k: usize, center: SpherePoint, radius: f64 },
}

impl DomainSpec {
    pub fn full_sphere(k: usize) -> Self {
        DomainSpec::FullSphere { k }
    }

    /// Cap of geodesic radius `radius` about the first ambient basis vector.
    pub fn cap(k: usize, radius: f64) -> Result<Self> {
        let center = SpherePoint::basis(k, 0)?;
        let d = DomainSpec::GeodesicCap { k, center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn cap_at(center: SpherePoint, radius: f64) -> Result<Self> {
        let d = DomainSpec::GeodesicCap { k: center.k(), center, radius };
        d.validate()?;
        Ok(d)
    }

    /// Parses `full` or `cap:rho=R`.
    pub fn parse(k: usize, s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            let d = DomainSpec::full_sphere(k);
            d.validate()?;
            return Ok(d);
        }
        let rest = s
            .strip_prefix("cap:rho=")
            .ok_or_else(|| Error::InvalidDomain(format!("expected `full` or `cap:rho=R`, got `{s}`")))?;
        let radius: f64 = rest
            .parse()
            .map_err(|_| Error::InvalidDomain(format!("bad cap radius `{rest}`")))?;
        DomainSpec::cap(k, radius)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::FullSphere { k } => {
                if *k == 0 {
                    return Err(Error::BadDimension(2));
                }
            }
            DomainSpec::GeodesicCap { k, center, radius } => {
                if *k == 0 {
                    return Err(Error::BadDimension(2));
                }
                if center.k() != *k {
                    return Err(Error::DimensionMismatch { expected: 2 * k + 2, got: center.dim() });
                }
                if !(radius.is_finite() && *radius > 0.0 && *radius <= PI) {
                    return Err(Error::InvalidDomain(format!("cap radius must lie in (0, π], got {radius}")));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        match self {
            DomainSpec::FullSphere { k } | DomainSpec::GeodesicCap { k, .. } => *k,
        }
    }

    pub fn center(&self) -> SpherePoint {
        match self {
            DomainSpec::FullSphere { k } => SpherePoint::basis(*k, 0).expect("k >= 1"),
            DomainSpec::GeodesicCap { center, .. } => center.clone(),
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            DomainSpec::FullSphere { .. } => PI,
            DomainSpec::GeodesicCap { radius, .. } => *radius,
        }
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self, DomainSpec::GeodesicCap { .. })
    }

    /// Closed-form volume.
    pub fn exact_volume(&self) -> f64 {
        cap_volume(self.k(), self.radius())
    }

    pub fn label(&self) -> String {
        match self {
            DomainSpec::FullSphere { .. } => "full".to_string(),
            DomainSpec::GeodesicCap { radius, .. } => format!("cap:rho={radius}"),
        }
    }
}

/// Area of the unit sphere `S^{2k} ⊂ R^{2k+1}`: `2 π^k 4^k k! / (2k)!`.
pub fn even_sphere_area(k: usize) -> f64 {
    let mut a = 2.0;
    for j in 1..=k {
        // ratio of consecutive terms of 4^j j! / (2j)! is 4j / ((2j)(2j-1)) = 2 / (2j-1)
        a *= PI * 2.0 / (2 * j - 1) as f64;
    }
    a
}

/// `∫_0^ρ sin^n(s) ds` by the standard reduction formula.
pub fn sin_power_integral(n: usize, rho: f64) -> f64 {
    match n {
        0 => rho,
        1 => 1.0 - rho.cos(),
        _ => {
            let nf = n as f64;
            -rho.sin().powi(n as i32 - 1) * rho.cos() / nf + (nf - 1.0) / nf * sin_power_integral(n - 2, rho)
        }
    }
}

/// Volume of the geodesic cap of radius `rho` in `S^{2k+1}`.
pub fn cap_volume(k: usize, rho: f64) -> f64 {
    even_sphere_area(k) * sin_power_integral(2 * k, rho)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes in `[0, π]` and weights for `∫_0^π f(θ) sin^p(θ) dθ`.
fn polar_rule(p: usize, n: usize) -> Vec<(f64, f64)> {
    if p % 2 == 1 {
        // u = cos θ turns the weight into the polynomial (1 - u²)^{(p-1)/2}
        let (x, w) = gauss_legendre(n);
        x.iter()
            .zip(&w)
            .map(|(&u, &wi)| (u.acos(), wi * (1.0 - u * u).powi(((p - 1) / 2) as i32)))
            .collect()
    } else {
        // Gauss–Chebyshev in u, i.e. the midpoint rule in θ
        let h = PI / n as f64;
        (0..n)
            .map(|j| {
                let th = (j as f64 + 0.5) * h;
                (th, h * th.sin().powi(p as i32))
            })
            .collect()
    }
}

/// Product rule on the unit sphere `S^m ⊂ R^{m+1}`.
fn direction_rule(m: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    if m == 1 {
        let count = 2 * n;
        let h = 2.0 * PI / count as f64;
        return (0..count)
            .map(|j| {
                let (s, c) = (j as f64 * h).sin_cos();
                (vec![c, s], h)
            })
            .collect();
    }
    let sub = direction_rule(m - 1, n);
    let mut out = Vec::with_capacity(n * sub.len());
    for (th, wt) in polar_rule(m - 1, n) {
        let (s, c) = th.sin_cos();
        for (omega, wo) in &sub {
            let mut v = Vec::with_capacity(m + 1);
            v.push(c);
            v.extend(omega.iter().map(|o| s * o));
            out.push((v, wt * wo));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub radial: usize,
    pub angular: usize,
}

impl Resolution {
    /// Default resolution for a given `k`; the angular count is per polar angle.
    pub fn default_for(k: usize) -> Self {
        match k {
            1 => Resolution { radial: 64, angular: 32 },
            2 => Resolution { radial: 16, angular: 8 },
            _ => Resolution { radial: 8, angular: 4 },
        }
    }
}

/// Nodes, positive weights summing to `vol(K)`, and samples of `∂K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    pub version: u32,
    pub k: usize,
    pub domain: DomainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    pub nodes: Vec<SpherePoint>,
    pub weights: Vec<f64>,
    pub boundary_nodes: Vec<SpherePoint>,
}

/// Builds the product rule for `domain`.
pub fn build_quadrature(domain: &DomainSpec, radial_points: usize, angular_points: usize) -> Result<QuadratureRule> {
    domain.validate()?;
    if radial_points < 2 || angular_points < 2 {
        return Err(Error::InvalidResolution(format!(
            "radial and angular points must be >= 2, got {radial_points}, {angular_points}"
        )));
    }
    let k = domain.k();
    let n = 2 * k + 2;
    let rho0 = domain.radius();
    let center = domain.center();
    let c = center.coords();

    // orthonormal basis of c^⊥
    let complement: Vec<Vec<f64>> = sphere::tangent_basis(c);
    let dirs = direction_rule(2 * k, angular_points);
    let embed = |omega: &[f64], out: &mut Vec<f64>| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (o, b) in omega.iter().zip(&complement) {
            for (dst, bi) in out.iter_mut().zip(b) {
                *dst += o * bi;
            }
        }
    };
    let ambient_dirs: Vec<(Vec<f64>, f64)> = dirs
        .iter()
        .map(|(omega, w)| {
            let mut a = vec![0.0; n];
            embed(omega, &mut a);
            (a, *w)
        })
        .collect();

    let (gx, gw) = gauss_legendre(radial_points);
    let mut nodes = Vec::with_capacity(radial_points * ambient_dirs.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (&u, &wu) in gx.iter().zip(&gw) {
        let rho = 0.5 * rho0 * (u + 1.0);
        let wr = 0.5 * rho0 * wu * rho.sin().powi(2 * k as i32);
        let (s, co) = rho.sin_cos();
        for (a, wa) in &ambient_dirs {
            let mut x: Vec<f64> = c.iter().zip(a).map(|(ci, ai)| ci * co + ai * s).collect();
            let r = sphere::norm(&x);
            x.iter_mut().for_each(|e| *e /= r);
            nodes.push(SpherePoint::from_unit_unchecked(x));
            weights.push(wr * wa);
        }
    }

    let boundary_nodes = if domain.has_boundary() {
        let (s, co) = rho0.sin_cos();
        ambient_dirs
            .iter()
            .map(|(a, _)| {
                let mut x: Vec<f64> = c.iter().zip(a).map(|(ci, ai)| ci * co + ai * s).collect();
                let r = sphere::norm(&x);
                x.iter_mut().for_each(|e| *e /= r);
                SpherePoint::from_unit_unchecked(x)
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(QuadratureRule {
        version: RULE_FORMAT_VERSION,
        k,
        domain: domain.clone(),
        resolution: Some(Resolution { radial: radial_points, angular: angular_points }),
        nodes,
        weights,
        boundary_nodes,
    })
}

impl QuadratureRule {
    pub fn volume(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != RULE_FORMAT_VERSION {
            return Err(Error::Serde(format!("unsupported rule version {}", self.version)));
        }
        self.domain.validate()?;
        if self.domain.k() != self.k {
            return Err(Error::InvalidInput(format!("rule k = {} but domain k = {}", self.k, self.domain.k())));
        }
        if self.nodes.len() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} nodes but {} weights",
                self.nodes.len(),
                self.weights.len()
            )));
        }
        let dim = 2 * self.k + 2;
        for p in self.nodes.iter().chain(&self.boundary_nodes) {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!("quadrature weight {w} is not positive")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rule: QuadratureRule = serde_json::from_str(s)?;
        rule.validate()?;
        Ok(rule)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
