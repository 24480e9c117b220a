//! Energy of solenoidal unit vector fields on domains of odd-dimensional spheres.
//!
//! The crate evaluates the energy functional
//! `E(v) = (n/2) vol(K) + 1/2 ∫_K |∇v|²` of unit vector fields on geodesic
//! caps `K ⊂ S^{2k+1}`, compares it with the Hopf value
//! `((2k+1)/2 + k) vol(K)`, and provides the supporting machinery:
//!
//! - [`sphere`]: points, tangent projections, the complex structure `J`, adapted frames
//! - [`quadrature`]: geodesic-cap domains and product quadrature rules over them
//! - [`fields`]: the Hopf field and boundary-pinned perturbation families
//! - [`shape`]: covariant derivatives, shape matrices, symmetric functions, energy
//! - [`phi`]: the displacement map `x ↦ x + t v(x)`, Jacobians and volume transport
//! - [`inequality`]: randomized checks of the algebraic identities behind the bound
//! - [`optimizer`]: penalized gradient descent over perturbation families

pub mod error;
pub mod fields;
pub mod inequality;
pub mod optimizer;
pub mod phi;
pub mod quadrature;
pub mod report;
pub mod shape;
pub mod sphere;
pub mod sum;

pub use error::{Error, Result};
pub use fields::{eval_field, eval_hopf, BumpProfile, FieldSpec, Generator};
pub use quadrature::{build_quadrature, DomainSpec, QuadratureRule};
pub use shape::{
    energy, energy_density, energy_lower_bound, eta, shape_matrix, sigma, EnergyReport,
    ShapeMatrix, SigmaVector,
};
pub use sphere::{adapted_frame, apply_complex_structure, project_tangent, AdaptedFrame, SpherePoint, TangentVector};
pub use optimizer::{minimize, penalized_objective, probe, sweep, OptimizerConfig, Problem};
pub use phi::{jacobian_det_formula, jacobian_det_numeric, moment_identities, phi_t, u_field, volume_transport};
pub use inequality::{run_lab, LabConfig};

/// Version string embedded in every serialized report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
