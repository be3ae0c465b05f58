//! Learning nonseparable Hamiltonians from short trajectory observations.
//!
//! The core pipeline: an augmented-phase-space symplectic integrator
//! ([`integrator`]) is unrolled through a differentiable tape ([`tape`],
//! [`unroll`]) around a small MLP energy surrogate ([`mlp`]), trained on
//! short ground-truth rollouts of analytic benchmark systems ([`systems`],
//! [`training`]) and evaluated on long prediction horizons ([`evaluation`]).
//! 2D point-vortex dynamics with a learned pairwise kernel live in
//! [`vortex`].

pub mod evaluation;
pub mod integrator;
pub mod io;
pub mod mlp;
pub mod provider;
pub mod state;
pub mod systems;
pub mod tape;
pub mod testing;
pub mod training;
pub mod unroll;
pub mod vortex;

pub use provider::{HamiltonianProvider, IntegratorConfig, Trajectory, TrajectorySet};
pub use state::{AugmentedState, PhaseState, StateError};
pub use systems::AnalyticSystem;
