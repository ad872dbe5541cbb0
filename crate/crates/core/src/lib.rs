//! Core library of the ECR lab: a deterministic event-driven ocean-logistics
//! simulator, three cooperative multi-agent Q-learning policy levels, and an
//! operations-research baseline ladder built on an integral time-expanded
//! min-cost-flow solver.
//!
//! The world model: ports hold empty containers, vessels sail fixed cyclic
//! routes, transportation orders consume empties at the origin and return
//! them (after a lag) at the destination. The only optimized cost is the
//! shortage of empties when orders arrive. Policies decide, at every vessel
//! arrival, which fraction of empties to load or discharge.

pub mod baselines;
pub mod engine;
pub mod features;
pub mod flowopt;
pub mod harness;
pub mod learner;
pub mod ordergen;
pub mod rewards;
pub mod scalar;
pub mod scenario;

pub use scalar::Real;

/// Concrete scalar used by the binaries and the acceptance suite. The math
/// core (features, rewards, Q-networks) is generic over [`Real`]; everything
/// that matters for reproducibility is pinned to `f64` here.
pub type Scalar = f64;

/// State vector at the crate's default precision.
pub type StateVec = features::StateVector<Scalar>;

/// Q-network at the crate's default precision.
pub type QNet = learner::QNetwork<Scalar>;
