//! Desk-scale simulator for agent-driven emergency response.
//!
//! The crate is organised by architectural layer:
//!
//! * data layer: [`scenario`] (ingestion, imputation, splits, synthetic packs)
//! * network layer: [`netsim`] (edge/central topology, slicing, failures)
//! * agent layer: [`assess`], [`alloc`], [`ppo`], [`predict`], glued together by
//!   [`engine`] with [`bus`] and [`kgraph`] as shared infrastructure
//! * reporting: [`metrics`]
//!
//! Everything is deterministic given a seed.

pub mod alloc;
pub mod assess;
pub mod bus;
pub mod engine;
pub mod geo;
pub mod kgraph;
pub mod metrics;
pub mod netsim;
pub mod nn;
pub mod optim;
pub mod ppo;
pub mod predict;
pub mod rng;
pub mod scenario;
pub mod time;

pub use time::SimTime;
