//! Multi-core platform simulator and decision stack for frequency /
//! core-allocation scheduling.
//!
//! The crate bundles a deterministic, seedable platform model
//! ([`platform`]), learned one-step dynamics models ([`envmodel`]),
//! dueling double deep Q-network agents ([`agents`]), the hierarchical
//! two-agent orchestrator with planning and a fail-safe thermal layer
//! ([`hier`]), Linux-style baseline governors and a table-based scheduler
//! ([`governors`]), workload feature extraction tooling ([`features`]),
//! cross-platform transfer utilities ([`transfer`]) and the experiment
//! driver ([`driver`]).
//!
//! See the `examples/` directory for one runnable program per major
//! capability.

pub mod agents;
pub mod driver;
pub mod envmodel;
pub mod features;
pub mod governors;
pub mod hier;
pub(crate) mod net;
pub mod platform;
pub mod transfer;
