//! Galerkin-reduced model of a dissipative elastic satellite orbiting a fixed
//! point mass.
//!
//! The crate evaluates the energies and forces of the reduced model,
//! integrates its equations of motion, finds and certifies relative
//! equilibria (synchronous, uniformly rotating rigid states), and classifies
//! trajectories as escaping, impacting, or captured into synchronous
//! rotation.
//!
//! ```
//! use tidelock::body::build_ellipsoid_body;
//!
//! let body = build_ellipsoid_body([1.0, 1.0, 1.0], 1.0, 1, 6).unwrap();
//! assert_eq!(body.dof(), 12);
//! assert!((body.mass() - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
//! ```

pub mod body;
pub mod classifier;
pub mod dissipation;
pub mod dynamics;
pub mod energetics;
pub mod equilibria;
pub mod error;
pub mod quadrature;

pub use body::{build_ellipsoid_body, DeformationState, ReferenceBody};
pub use dissipation::ViscosityParams;
pub use dynamics::{integrate, IntegratorSettings, Method, Termination, Trajectory};
pub use energetics::{EnergyBreakdown, MaterialParams};
pub use error::{Error, Result};
