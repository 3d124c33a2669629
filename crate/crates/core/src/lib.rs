//! PDE-constrained total variation on 2-D images.
//!
//! The regularizer `PV_B(u)` measures the mass of `B u`, where
//! `B u = Σ_{h≤d} B^h (H^h u)` mixes the partial derivatives of orders
//! `1..=d` through per-order coefficient matrices. With `B = ∇` it is plain
//! total variation.
//!
//! * [`grid`]: images, jet fields, finite differences and their transposes.
//! * [`operator`]: coefficient blocks, adjoints, operator metric and families.
//! * [`regularizer`]: the seminorm, dual certificates and dual-ball projections.
//! * [`solver`]: primal-dual denoising with duality-gap stopping.
//! * [`trainer`]: finite training grounds, grid search and error bounds for
//!   learning `(α, B)` from a clean/noisy pair.
//!
//! ```
//! use pvb::{denoise, Image, NormChoice, OperatorSpec, SolverParams};
//!
//! let noisy = Image::from_fn(8, 8, |x, y| if (x + y) % 3 == 0 { 1.0 } else { 0.0 }).unwrap();
//! let spec = OperatorSpec::first_order(1.0, -0.2, 0.5, 1.0).unwrap();
//! let result = denoise(&noisy, 0.1, &spec, NormChoice::L2, &SolverParams::default()).unwrap();
//! assert!(result.converged);
//! assert!(result.pv_value < pvb::pv(&spec, &noisy, NormChoice::L2));
//! ```

pub mod error;
pub mod grid;
pub mod operator;
pub mod regularizer;
pub mod solver;
pub mod trainer;

pub use error::{Error, Result};
pub use grid::{channel_count, hessian_adjoint, hessian_stack, Image, JetField, MAX_ORDER};
pub use operator::{FamilyKind, OperatorFamily, OperatorSpec};
pub use regularizer::{
    dual_ball_project, dual_certificate, kernel_project_gradient, optimal_certificate_field, pv,
    NormChoice,
};
pub use solver::{
    denoise, duality_gap, fidelity_prox, operator_norm, DenoiseProblem, DenoiseResult,
    SolverParams, StepRule,
};
pub use trainer::{
    assess, build_ground, error_bound, grid_search, landscape, run_workflow, sobolev_norm,
    AssessmentRecord, FiniteGround, TrainingPair,
};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/regularizer.md")]
    mod regularizer {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
