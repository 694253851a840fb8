//! Governing-equation solvers and their vector–Jacobian products.

mod diffusion;

pub use diffusion::{
    diffusion_vjp, diffusion_vjp_with, flux_through, solve_diffusion, DiffusionProblem, DiffusionSolution, BOTTOM_VALUE,
    TOP_VALUE,
};

mod reaction;

pub use reaction::{
    reaction_residual, solve_reaction_diffusion, ContinuationSchedule, NewtonRecord, ReactionDiffusionProblem,
    ReactionDiffusionSolution,
};

mod helmholtz;

pub use helmholtz::{
    omega_for_wavelength, solve_helmholtz, FdfdLayout, FdfdSolver, HelmholtzProblem, Stencil, MIN_RESOLUTION, PML_REFLECTION,
};

mod fidelity;

pub use fidelity::{HighFidelity, LowFidelity};
