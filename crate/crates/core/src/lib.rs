//! Extended Pfaffian point-process numerics for one-dimensional annihilating
//! and coalescing Brownian motions, together with a Monte Carlo particle
//! simulator that serves as an independent check of the closed forms.

pub mod intensities;
pub mod kernels;
pub mod quadrature;
pub mod simulator;
pub mod skewalg;
pub mod stats;

pub use intensities::{Convention, SpinSign};
pub use kernels::{DeltaWeight, ModelKind, SpaceTimePoint};
