//! Network infrastructure layer: a flow-level discrete-event model of an
//! edge/central topology with latency, bandwidth, priority slices, failure
//! injection and reroute-on-detection.
//!
//! Messages are store-and-forward: on each hop the whole message is
//! serialized onto the link (sharing bandwidth with concurrent flows), then
//! propagates for the link latency. Routing is recomputed hop by hop from the
//! router's *known* link state, which learns about a failure only after the
//! configured detection interval.

mod sim;
mod topology;

use thiserror::Error;

pub use sim::{FailureTarget, NetConfig, NetSim, NetStats, RecoveryEvent, SliceStats, Transmission};
pub use topology::{
    route, route_with, LinkSpec, NodeRole, NodeSpec, Route, SliceSpec, Topology, BEST_EFFORT, MISSION_CRITICAL,
    TELEMETRY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("no link between {0} and {1}")]
    UnknownLink(String, String),
    #[error("unknown slice {0}")]
    UnknownSlice(String),
    #[error("no route from {src} to {dst}")]
    Unroutable { src: String, dst: String },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("time {requested} is before simulation clock {now}")]
    TimeTravel { requested: u64, now: u64 },
}
