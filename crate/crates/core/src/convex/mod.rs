//! Generic solvers shared by every problem: a cutting ellipsoid method and a
//! log-barrier Newton method.

pub mod barrier;
pub mod ellipsoid;
pub mod gradients;

pub use barrier::{
    barrier_maximize, phase_one, Affine, AffineHermitian, BarrierParams, BarrierProblem, BarrierSolution, ConcaveFn,
    Lmi, LmiKind, PhaseOne,
};
pub use ellipsoid::{ellipsoid_solve, Cut, EllipsoidOutcome, EllipsoidParams, EllipsoidState, Termination};
