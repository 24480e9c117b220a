//! Penalized minimization of the energy over boundary-pinned perturbations of
//! the Hopf field.
//!
//! The objective is
//! `E(v_c) + (λ / vol K) ∫_K (div v_c)² + μ (max_{∂K} |v_c - H|)²`.
//! Divergence-free unit perturbations have no closed form, so the solenoidal
//! constraint is a penalty and every report carries the measured residual.
//!
//! A [`Problem`] fixes an orthonormal tangent basis at each node (independent
//! of the field) and caches `H`, the bump and every generator at the
//! geodesic stencil points, so an objective evaluation only forms linear
//! combinations and normalizes. `|∇v|²` and `div v` are basis independent, so
//! this agrees with the adapted-frame computation in [`crate::shape`].

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{default_generators, Bump, BumpProfile, FieldSpec, Generator, NORMALIZATION_FLOOR};
use crate::inequality::sample_seed;
use crate::quadrature::{build_quadrature, DomainSpec, QuadratureRule};
use crate::shape::{energy_floor, energy_lower_bound, EnergyReport, FD_STEP};
use crate::sphere::{dot, geodesic_into, j_into, tangent_basis};
use crate::sum::{compensated_sum, par_map_ordered};

/// A run is feasible when `∫(div v)² < FEASIBLE_DIV * vol(K)` …
pub const FEASIBLE_DIV: f64 = 1e-4;
/// … and the boundary mismatch is below this.
pub const FEASIBLE_BOUNDARY: f64 = 1e-6;
/// Allowed shortfall below the bound, relative to `vol(K)`.
pub const BOUND_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScheme {
    Central,
    Forward,
}

/// Linear change of variables applied to the gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    /// Inverse of the finite-difference Hessian of the objective at `c = 0`,
    /// with eigenvalues below `1e-6 * max` replaced by the largest one.
    HessianAtZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepPolicy {
    /// Trial step of the first iteration.
    pub initial: f64,
    /// Sufficient-decrease fraction.
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Start each line search from the Barzilai–Borwein step.
    pub barzilai_borwein: bool,
    pub max_step: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { initial: 1.0, armijo: 1e-4, shrink: 0.5, max_backtracks: 50, barzilai_borwein: true, max_step: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub domain: DomainSpec,
    pub radial: usize,
    pub angular: usize,
    pub generators: usize,
    pub bump: BumpProfile,
    /// `λ`; the divergence penalty is `λ / vol(K) ∫ (div v)²`.
    pub penalty_div: f64,
    /// `μ`
    pub penalty_boundary: f64,
    pub max_iters: usize,
    pub step: StepPolicy,
    /// Stop when an accepted step is shorter than this.
    pub tol: f64,
    /// Stop when the gradient norm is below this.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the objective by less than
    /// `ftol * max(1, |objective|)`.
    pub ftol: f64,
    pub gradient: GradientScheme,
    /// Coefficient step for the finite-difference gradient.
    pub gradient_step: f64,
    pub preconditioner: Preconditioner,
    /// Geodesic step for spatial derivatives.
    pub fd_step: f64,
    pub seed: u64,
    /// Random starts are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Extra stages that multiply `λ` and warm-start from the previous stage.
    pub continuation: Vec<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            domain: DomainSpec::cap(1, 1.0).expect("valid cap"),
            radial: 12,
            angular: 8,
            generators: 12,
            bump: BumpProfile::Quartic,
            penalty_div: 100.0,
            penalty_boundary: 1e4,
            max_iters: 400,
            step: StepPolicy::default(),
            tol: 1e-9,
            grad_tol: 1e-7,
            ftol: 1e-13,
            gradient: GradientScheme::Central,
            gradient_step: 1e-4,
            preconditioner: Preconditioner::HessianAtZero,
            fd_step: FD_STEP,
            seed: 0,
            init_scale: 0.1,
            continuation: Vec::new(),
        }
    }
}

impl OptimizerConfig {
    pub fn for_domain(domain: DomainSpec) -> Self {
        let k = domain.k();
        OptimizerConfig { domain, generators: 3 * (2 * k + 2), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.penalty_div >= 0.0 && self.penalty_div.is_finite()) {
            return bad("penalty_div must be finite and >= 0");
        }
        if !(self.penalty_boundary >= 0.0 && self.penalty_boundary.is_finite()) {
            return bad("penalty_boundary must be finite and >= 0");
        }
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1");
        }
        if self.generators == 0 {
            return bad("at least one generator is required");
        }
        if !(self.gradient_step > 0.0 && self.fd_step >= 1e-12 && self.tol >= 0.0 && self.grad_tol >= 0.0 && self.ftol >= 0.0) {
            return bad("steps and tolerances must be positive");
        }
        let s = &self.step;
        if !(s.initial > 0.0 && s.armijo > 0.0 && s.armijo < 1.0 && s.shrink > 0.0 && s.shrink < 1.0 && s.max_step > 0.0) {
            return bad("invalid step policy");
        }
        if self.continuation.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return bad("continuation factors must be finite and >= 0");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and >= 0");
        }
        Ok(())
    }

    pub fn bump(&self) -> Bump {
        Bump { profile: self.bump, rho0: self.domain.radius(), center: Some(self.domain.center()) }
    }
}

/// Objective value and its parts at one coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub energy: f64,
    pub dirichlet: f64,
    /// `∫_K (div v)²`
    pub div_residual: f64,
    pub boundary_mismatch: f64,
}

/// Cached values at a set of sample points.
struct PointCache {
    n: usize,
    g: usize,
    hopf: Vec<f64>,
    psi: Vec<f64>,
    gens: Vec<f64>,
}

impl PointCache {
    fn build(points: &[Vec<f64>], bump: &Bump, generators: &[Generator]) -> Self {
        let n = points.first().map_or(0, |p| p.len());
        let g = generators.len();
        let per: Vec<(Vec<f64>, f64, Vec<f64>)> = par_map_ordered(points.len(), |i| {
            let y = &points[i];
            let mut h = vec![0.0; n];
            j_into(y, &mut h);
            let psi = bump.profile_at_radius(radius_from(bump, y));
            let mut w = vec![0.0; g * n];
            for (m, gen) in generators.iter().enumerate() {
                gen.eval_into(y, &mut w[m * n..(m + 1) * n]);
            }
            (h, psi, w)
        });
        let mut hopf = Vec::with_capacity(points.len() * n);
        let mut psi = Vec::with_capacity(points.len());
        let mut gens = Vec::with_capacity(points.len() * g * n);
        for (h, p, w) in per {
            hopf.extend(h);
            psi.push(p);
            gens.extend(w);
        }
        PointCache { n, g, hopf, psi, gens }
    }

    /// Unit field value at cached point `p` for coefficients `c`.
    #[inline]
    fn field(&self, p: usize, c: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        out.copy_from_slice(&self.hopf[p * n..(p + 1) * n]);
        let psi = self.psi[p];
        if psi != 0.0 {
            let base = p * self.g * n;
            for (m, cm) in c.iter().enumerate() {
                let s = cm * psi;
                if s == 0.0 {
                    continue;
                }
                let w = &self.gens[base + m * n..base + (m + 1) * n];
                for (o, wi) in out.iter_mut().zip(w) {
                    *o += s * wi;
                }
            }
            let r = dot(out, out).sqrt();
            if !(r >= NORMALIZATION_FLOOR) {
                return Err(Error::Normalization { norm: r });
            }
            out.iter_mut().for_each(|o| *o /= r);
        }
        Ok(())
    }
}

fn radius_from(bump: &Bump, y: &[f64]) -> f64 {
    let cos = match &bump.center {
        Some(c) => dot(y, c.coords()),
        None => y[0],
    };
    let perp2 = (dot(y, y) - cos * cos).max(0.0);
    perp2.sqrt().atan2(cos)
}

const HESSIAN_STEP: f64 = 1e-3;
const PRECOND_FLOOR: f64 = 1e-6;

/// A prepared optimization problem for one domain and generator family.
pub struct Problem {
    cfg: OptimizerConfig,
    rule: QuadratureRule,
    generators: Vec<Generator>,
    vol: f64,
    n: usize,
    /// Node coordinates and fixed tangent bases, flattened.
    nodes: Vec<Vec<f64>>,
    bases: Vec<Vec<Vec<f64>>>,
    stencil: PointCache,
    boundary: Option<PointCache>,
    precond: OnceLock<Result<DMatrix<f64>>>,
}

impl Problem {
    pub fn new(cfg: &OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.domain.k();
        let rule = build_quadrature(&cfg.domain, cfg.radial, cfg.angular)?;
        let generators = default_generators(k, cfg.generators)?;
        let bump = cfg.bump();
        let n = 2 * k + 2;
        let h = cfg.fd_step;
        let nodes: Vec<Vec<f64>> = rule.nodes.iter().map(|p| p.coords().to_vec()).collect();
        let bases: Vec<Vec<Vec<f64>>> = nodes.iter().map(|x| tangent_basis(x)).collect();
        let mut points = Vec::with_capacity(nodes.len() * 2 * (n - 1));
        for (x, basis) in nodes.iter().zip(&bases) {
            for b in basis {
                for s in [h, -h] {
                    let mut p = vec![0.0; n];
                    geodesic_into(x, b, s, &mut p);
                    points.push(p);
                }
            }
        }
        let stencil = PointCache::build(&points, &bump, &generators);
        let boundary = if rule.boundary_nodes.is_empty() {
            None
        } else {
            let pts: Vec<Vec<f64>> = rule.boundary_nodes.iter().map(|p| p.coords().to_vec()).collect();
            Some(PointCache::build(&pts, &bump, &generators))
        };
        Ok(Problem { cfg: cfg.clone(), vol: rule.volume(), rule, generators, n, nodes, bases, stencil, boundary, precond: OnceLock::new() })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn volume(&self) -> f64 {
        self.vol
    }

    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn k(&self) -> usize {
        self.rule.k
    }

    pub fn bound(&self) -> f64 {
        energy_lower_bound(self.k(), self.vol)
    }

    /// The field `v_c` as a [`FieldSpec`].
    pub fn field_spec(&self, c: &[f64]) -> FieldSpec {
        FieldSpec::Perturbed {
            k: self.k(),
            generators: self.generators.clone(),
            coefficients: c.to_vec(),
            bump: self.cfg.bump(),
        }
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: c.len() });
        }
        Ok(())
    }

    /// Objective with an explicit divergence penalty `λ`.
    pub fn evaluate_with(&self, c: &[f64], penalty_div: f64) -> Result<Evaluation> {
        self.check_len(c)?;
        let n = self.n;
        let per_node = 2 * (n - 1);
        let inv2h = 1.0 / (2.0 * self.cfg.fd_step);
        let vals: Vec<Result<(f64, f64)>> = par_map_ordered(self.nodes.len(), |i| {
            let x = &self.nodes[i];
            let mut vp = vec![0.0; n];
            let mut vm = vec![0.0; n];
            let mut d = vec![0.0; n];
            let (mut dens, mut div) = (0.0, 0.0);
            for (a, b) in self.bases[i].iter().enumerate() {
                let p = i * per_node + 2 * a;
                self.stencil.field(p, c, &mut vp)?;
                self.stencil.field(p + 1, c, &mut vm)?;
                for ((di, a), b) in d.iter_mut().zip(&vp).zip(&vm) {
                    *di = (a - b) * inv2h;
                }
                let s = dot(&d, x);
                for (di, xi) in d.iter_mut().zip(x) {
                    *di -= s * xi;
                }
                dens += dot(&d, &d);
                div += dot(&d, b);
            }
            Ok((dens, div * div))
        });
        let mut dens = Vec::with_capacity(vals.len());
        let mut divs = Vec::with_capacity(vals.len());
        for (v, w) in vals.into_iter().zip(&self.rule.weights) {
            let (a, b) = v?;
            dens.push(w * a);
            divs.push(w * b);
        }
        let dirichlet = compensated_sum(dens);
        let div_residual = compensated_sum(divs);
        let boundary_mismatch = match &self.boundary {
            None => 0.0,
            Some(bc) => {
                let mut worst = 0.0f64;
                let mut v = vec![0.0; n];
                for p in 0..bc.psi.len() {
                    bc.field(p, c, &mut v)?;
                    let h = &bc.hopf[p * n..(p + 1) * n];
                    let d2: f64 = v.iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum();
                    worst = worst.max(d2.sqrt());
                }
                worst
            }
        };
        let energy = energy_floor(self.k(), self.vol) + 0.5 * dirichlet;
        let objective = energy
            + penalty_div / self.vol * div_residual
            + self.cfg.penalty_boundary * boundary_mismatch * boundary_mismatch;
        Ok(Evaluation { objective, energy, dirichlet, div_residual, boundary_mismatch })
    }

    pub fn evaluate(&self, c: &[f64]) -> Result<Evaluation> {
        self.evaluate_with(c, self.cfg.penalty_div)
    }

    /// Finite-difference gradient of the objective; components run in parallel.
    pub fn gradient_with(&self, c: &[f64], penalty_div: f64, f0: Option<f64>) -> Result<Vec<f64>> {
        self.check_len(c)?;
        let d = self.cfg.gradient_step;
        let f0 = match (self.cfg.gradient, f0) {
            (GradientScheme::Forward, None) => Some(self.evaluate_with(c, penalty_div)?.objective),
            (_, f) => f,
        };
        let parts: Vec<Result<f64>> = (0..c.len())
            .into_par_iter()
            .map(|m| {
                let mut cp = c.to_vec();
                cp[m] += d;
                let fp = self.evaluate_with(&cp, penalty_div)?.objective;
                match self.cfg.gradient {
                    GradientScheme::Central => {
                        cp[m] = c[m] - d;
                        let fm = self.evaluate_with(&cp, penalty_div)?.objective;
                        Ok((fp - fm) / (2.0 * d))
                    }
                    GradientScheme::Forward => Ok((fp - f0.expect("computed above")) / d),
                }
            })
            .collect();
        parts.into_iter().collect()
    }

    pub fn gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.gradient_with(c, self.cfg.penalty_div, None)
    }

    /// Central second differences of the objective at `c`.
    pub fn hessian(&self, c: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(c)?;
        let g = self.dim();
        let d = HESSIAN_STEP;
        let f0 = self.evaluate(c)?.objective;
        let pairs: Vec<(usize, usize)> = (0..g).flat_map(|i| (i..g).map(move |j| (i, j))).collect();
        let f_at = |shifts: &[(usize, f64)]| -> Result<f64> {
            let mut cp = c.to_vec();
            for &(m, s) in shifts {
                cp[m] += s;
            }
            Ok(self.evaluate(&cp)?.objective)
        };
        let vals: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                if i == j {
                    Ok((f_at(&[(i, d)])? - 2.0 * f0 + f_at(&[(i, -d)])?) / (d * d))
                } else {
                    let pp = f_at(&[(i, d), (j, d)])?;
                    let pm = f_at(&[(i, d), (j, -d)])?;
                    let mp = f_at(&[(i, -d), (j, d)])?;
                    let mm = f_at(&[(i, -d), (j, -d)])?;
                    Ok((pp - pm - mp + mm) / (4.0 * d * d))
                }
            })
            .collect();
        let mut h = DMatrix::zeros(g, g);
        for (&(i, j), v) in pairs.iter().zip(vals) {
            let v = v?;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
        Ok(h)
    }

    /// The step preconditioner, computed once per problem. `None` means identity.
    pub fn preconditioner(&self) -> Result<Option<&DMatrix<f64>>> {
        if self.cfg.preconditioner == Preconditioner::None {
            return Ok(None);
        }
        let p = self.precond.get_or_init(|| {
            let h = self.hessian(&vec![0.0; self.dim()])?;
            let eig = h.symmetric_eigen();
            let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            if !(top > 0.0 && top.is_finite()) {
                return Err(Error::IllConditioned("objective Hessian at c = 0 has no positive eigenvalue".into()));
            }
            let inv = eig.eigenvalues.map(|l| if l > PRECOND_FLOOR * top { 1.0 / l } else { 1.0 / top });
            Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
        });
        match p {
            Ok(m) => Ok(Some(m)),
            Err(e) => Err(e.clone()),
        }
    }

    pub fn energy_report(&self, eval: &Evaluation) -> EnergyReport {
        EnergyReport::from_parts(self.k(), self.vol, eval.dirichlet, &self.rule, "finite_difference")
    }

    /// Deterministic random start number `run`.
    pub fn random_start(&self, run: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(self.cfg.seed, self.dim(), run));
        (0..self.dim())
            .map(|_| self.cfg.init_scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect()
    }
}

/// Objective at `c` for a freshly prepared problem.
pub fn penalized_objective(c: &[f64], cfg: &OptimizerConfig) -> Result<f64> {
    Ok(Problem::new(cfg)?.evaluate(c)?.objective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub stage: usize,
    pub objective: f64,
    pub energy: f64,
    pub div_residual: f64,
    pub boundary_mismatch: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
    /// Armijo check on the accepted step: actual decrease / predicted decrease.
    pub decrease_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub penalty_div: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub seed: u64,
    pub initial_coefficients: Vec<f64>,
    pub final_coefficients: Vec<f64>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub stages: Vec<StageSummary>,
    pub final_energy: EnergyReport,
    pub final_objective: f64,
    pub div_residual: f64,
    pub boundary_mismatch: f64,
    pub grad_norm: f64,
    pub gap_to_bound: f64,
    pub converged: bool,
    pub line_search_failed: bool,
    /// `∫(div v)² < 1e-4 vol(K)` and boundary mismatch `< 1e-6`.
    pub feasible: bool,
    /// `E ≥ bound - 1e-3 vol(K)`.
    pub bound_respected: bool,
}

impl OptimizationReport {
    /// A converged feasible run that ends below the bound.
    pub fn violates_bound(&self) -> bool {
        self.converged && self.feasible && !self.bound_respected
    }
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Gradient descent with backtracking (Armijo) line search on a prepared problem.
pub fn minimize_problem(problem: &Problem, c0: &[f64]) -> Result<OptimizationReport> {
    problem.check_len(c0)?;
    let cfg = problem.config();
    let precond = problem.preconditioner()?;
    let mut lambdas = vec![cfg.penalty_div];
    lambdas.extend(cfg.continuation.iter().map(|f| f * cfg.penalty_div));

    let mut c = c0.to_vec();
    let mut trajectory = Vec::new();
    let mut stages = Vec::new();
    let mut iter_total = 0;
    let mut last_eval = problem.evaluate_with(&c, lambdas[0])?;
    let mut grad_norm = f64::NAN;
    let mut any_ls_failure = false;
    let mut converged = false;

    for (stage, &lambda) in lambdas.iter().enumerate() {
        let mut eval = problem.evaluate_with(&c, lambda)?;
        let mut g = problem.gradient_with(&c, lambda, Some(eval.objective))?;
        let mut gn = norm2(&g);
        let mut alpha = cfg.step.initial;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut stage_converged = false;
        let mut ls_failed = false;
        let mut iters = 0;
        trajectory.push(point(iter_total, stage, &eval, gn, 0.0, None));

        while iters < cfg.max_iters {
            if gn < cfg.grad_tol {
                stage_converged = true;
                break;
            }
            let dir: Vec<f64> = match precond {
                Some(p) => (p * DVector::from_column_slice(&g)).iter().map(|x| -x).collect(),
                None => g.iter().map(|x| -x).collect(),
            };
            let slope = dot(&g, &dir);
            if precond.is_some() {
                alpha = 1.0;
            } else if cfg.step.barzilai_borwein {
                if let Some((s, y)) = &prev {
                    let sy = dot(s, y);
                    if sy > 0.0 {
                        alpha = (dot(s, s) / sy).min(cfg.step.max_step);
                    } else {
                        alpha = (alpha * 2.0).min(cfg.step.max_step);
                    }
                }
            }
            let mut accepted = None;
            for _ in 0..=cfg.step.max_backtracks {
                let trial: Vec<f64> = c.iter().zip(&dir).map(|(ci, di)| ci + alpha * di).collect();
                if let Ok(e) = problem.evaluate_with(&trial, lambda) {
                    let predicted = -alpha * slope;
                    if e.objective <= eval.objective - cfg.step.armijo * predicted {
                        accepted = Some((trial, e, (eval.objective - e.objective) / predicted));
                        break;
                    }
                }
                alpha *= cfg.step.shrink;
            }
            let Some((trial, e, ratio)) = accepted else {
                ls_failed = true;
                break;
            };
            iters += 1;
            iter_total += 1;
            let step_norm = alpha * norm2(&dir);
            let stalled = eval.objective - e.objective <= cfg.ftol * e.objective.abs().max(1.0);
            let g_new = problem.gradient_with(&trial, lambda, Some(e.objective))?;
            let s: Vec<f64> = trial.iter().zip(&c).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            prev = Some((s, y));
            c = trial;
            eval = e;
            g = g_new;
            gn = norm2(&g);
            trajectory.push(point(iter_total, stage, &eval, gn, step_norm, Some(ratio)));
            if step_norm < cfg.tol || stalled {
                stage_converged = true;
                break;
            }
        }
        if ls_failed && gn < cfg.grad_tol.max(1e-6) {
            // line search stalled at the noise floor of the FD gradient
            stage_converged = true;
        }
        any_ls_failure |= ls_failed;
        stages.push(StageSummary {
            penalty_div: lambda,
            iterations: iters,
            converged: stage_converged,
            line_search_failed: ls_failed,
            objective: eval.objective,
        });
        converged = stage_converged;
        grad_norm = gn;
        last_eval = eval;
    }

    let vol = problem.volume();
    let final_energy = problem.energy_report(&last_eval);
    let gap = final_energy.gap;
    Ok(OptimizationReport {
        seed: cfg.seed,
        initial_coefficients: c0.to_vec(),
        final_coefficients: c,
        trajectory,
        stages,
        final_objective: last_eval.objective,
        div_residual: last_eval.div_residual,
        boundary_mismatch: last_eval.boundary_mismatch,
        grad_norm,
        gap_to_bound: gap,
        converged,
        line_search_failed: any_ls_failure,
        feasible: last_eval.div_residual < FEASIBLE_DIV * vol && last_eval.boundary_mismatch < FEASIBLE_BOUNDARY,
        bound_respected: gap >= -BOUND_TOL * vol,
        final_energy,
    })
}

fn point(iter: usize, stage: usize, e: &Evaluation, gn: f64, step: f64, ratio: Option<f64>) -> TrajectoryPoint {
    TrajectoryPoint {
        iter,
        stage,
        objective: e.objective,
        energy: e.energy,
        div_residual: e.div_residual,
        boundary_mismatch: e.boundary_mismatch,
        grad_norm: gn,
        step_norm: step,
        decrease_ratio: ratio,
    }
}

pub fn minimize(cfg: &OptimizerConfig, c0: &[f64]) -> Result<OptimizationReport> {
    minimize_problem(&Problem::new(cfg)?, c0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub config: OptimizerConfig,
    pub vol_k: f64,
    pub bound: f64,
    pub hopf_objective: f64,
    pub hopf_gradient_norm: f64,
    pub runs: Vec<OptimizationReport>,
    pub converged_runs: usize,
    pub feasible_runs: usize,
    pub violations: usize,
    pub min_feasible_energy: Option<f64>,
}

/// Runs `runs` minimizations from deterministic random starts.
pub fn probe(cfg: &OptimizerConfig, runs: u64) -> Result<ProbeReport> {
    let problem = Problem::new(cfg)?;
    let zero = vec![0.0; problem.dim()];
    let hopf = problem.evaluate(&zero)?;
    let hopf_gradient_norm = norm2(&problem.gradient(&zero)?);
    let reports: Vec<OptimizationReport> = (0..runs)
        .map(|r| minimize_problem(&problem, &problem.random_start(r)))
        .collect::<Result<_>>()?;
    let converged_runs = reports.iter().filter(|r| r.converged).count();
    let feasible_runs = reports.iter().filter(|r| r.converged && r.feasible).count();
    let violations = reports.iter().filter(|r| r.violates_bound()).count();
    let min_feasible_energy = reports
        .iter()
        .filter(|r| r.converged && r.feasible)
        .map(|r| r.final_energy.energy)
        .reduce(f64::min);
    Ok(ProbeReport {
        config: cfg.clone(),
        vol_k: problem.volume(),
        bound: problem.bound(),
        hopf_objective: hopf.objective,
        hopf_gradient_norm,
        runs: reports,
        converged_runs,
        feasible_runs,
        violations,
        min_feasible_energy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub domain: String,
    pub rho0: f64,
    pub vol: f64,
    pub vol_exact: f64,
    pub bound: f64,
    pub min_energy: Option<f64>,
    pub div_residual: Option<f64>,
    pub boundary_mismatch: Option<f64>,
    pub gap: Option<f64>,
    pub converged: bool,
    pub feasible: bool,
    pub violation: bool,
    pub error: Option<String>,
}

/// One row per domain; failures are recorded and the sweep continues.
pub fn sweep(domains: &[DomainSpec], template: &OptimizerConfig, runs_per_domain: u64) -> Vec<SweepRow> {
    domains
        .iter()
        .map(|d| {
            let cfg = OptimizerConfig { domain: d.clone(), ..template.clone() };
            let vol_exact = d.exact_volume();
            let mut row = SweepRow {
                domain: d.label(),
                rho0: d.radius(),
                vol: f64::NAN,
                vol_exact,
                bound: energy_lower_bound(d.k(), vol_exact),
                min_energy: None,
                div_residual: None,
                boundary_mismatch: None,
                gap: None,
                converged: false,
                feasible: false,
                violation: false,
                error: None,
            };
            match probe(&cfg, runs_per_domain) {
                Err(e) => row.error = Some(e.to_string()),
                Ok(p) => {
                    row.vol = p.vol_k;
                    row.bound = p.bound;
                    row.violation = p.violations > 0;
                    // best run, preferring converged feasible ones
                    let rank = |r: &OptimizationReport| (!(r.converged && r.feasible), !r.converged, r.final_energy.energy);
                    let best = p
                        .runs
                        .iter()
                        .min_by(|a, b| rank(a).partial_cmp(&rank(b)).unwrap_or(std::cmp::Ordering::Equal));
                    match best {
                        Some(r) => {
                            row.min_energy = Some(r.final_energy.energy);
                            row.div_residual = Some(r.div_residual);
                            row.boundary_mismatch = Some(r.boundary_mismatch);
                            row.gap = Some(r.gap_to_bound);
                            row.converged = r.converged;
                            row.feasible = r.feasible;
                        }
                        None => row.error = Some("no runs requested".into()),
                    }
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{energy_with, DerivativeMethod};

    fn small() -> OptimizerConfig {
        OptimizerConfig { radial: 6, angular: 4, ..OptimizerConfig::default() }
    }

    #[test]
    fn hopf_point_attains_bound() {
        let p = Problem::new(&small()).unwrap();
        let e = p.evaluate(&vec![0.0; 12]).unwrap();
        assert!(e.div_residual < 1e-16);
        assert_eq!(e.boundary_mismatch, 0.0);
        assert!((e.objective - p.bound()).abs() < 1e-6 * p.volume());
    }

    #[test]
    fn penalties_off_give_plain_energy() {
        let cfg = OptimizerConfig { penalty_div: 0.0, penalty_boundary: 0.0, ..small() };
        let p = Problem::new(&cfg).unwrap();
        let c = p.random_start(3);
        let e = p.evaluate(&c).unwrap();
        assert_eq!(e.objective, e.energy);
        assert!(e.energy >= energy_floor(1, p.volume()));
    }

    #[test]
    fn cached_evaluation_matches_adapted_frame_energy() {
        let p = Problem::new(&small()).unwrap();
        let c = p.random_start(1);
        let e = p.evaluate(&c).unwrap();
        let spec = p.field_spec(&c);
        let r = energy_with(&spec, p.rule(), 1, DerivativeMethod::FiniteDifference { step: FD_STEP }).unwrap();
        assert!((r.dirichlet - e.dirichlet).abs() < 1e-7 * r.dirichlet, "{} vs {}", r.dirichlet, e.dirichlet);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig { penalty_div: -1.0, ..small() }.validate().is_err());
        assert!(OptimizerConfig { max_iters: 0, ..small() }.validate().is_err());
        assert!(OptimizerConfig { generators: 13, ..small() }.validate().is_ok());
        assert!(Problem::new(&OptimizerConfig { generators: 13, ..small() }).is_err());
    }

    #[test]
    fn zero_start_is_stationary() {
        let r = minimize(&small(), &vec![0.0; 12]).unwrap();
        assert!(r.converged);
        assert!(r.final_coefficients.iter().all(|c| c.abs() < 1e-4));
        assert!(r.gap_to_bound.abs() < 1e-6);
    }
}
