//! Event-driven Monte Carlo for three coupled interacting particle systems
//! on the one-dimensional integer lattice: a contact process variant with
//! spontaneous blocking, the contact process with inherited sterility, and
//! the classical contact process. All three are driven by one keyed Poisson
//! arrival log, so processes with different rules or starting configurations
//! can be compared pathwise. On top of the dynamics sit reachability checks
//! for active infection paths, a renewal-time decomposition of the rightmost
//! occupied site, and Monte Carlo estimators for survival, front speed and
//! fluctuation statistics.

pub mod dynamics;
pub mod paths;
mod engine;
pub mod events;
pub mod lattice;
pub mod rng;

pub use dynamics::{
    coupled_order_violations, evolve, evolve_coupled, evolve_front, extinction_time,
    pair_order_violations, truncated_evolve_is, truncated_evolve_spont, verify_trajectory,
    Delta, DynError, Extinction, FrontPath, FrontSummary, ProcessKind, Trajectory,
};
pub use events::{ArrivalSource, EventError, EventLog, ObjectKey, RestrictedView, StreamKind};
pub use lattice::{make_initial, BoundaryPolicy, Configuration, InitialSpec, SiteState};
