//! Orthodromic routing for satellite constellations.
//!
//! Satellites are addressed by their position on the unit sphere. Each one
//! floods its link state `r` hops, builds a shortest-path tree over what it
//! learned, and forwards a packet one hop toward whichever tree node lies
//! closest to the destination along the great circle.
//!
//! The core is generic over [`Scalar`] (`f32` or `f64`), defaulting to `f64`.
//! The sweep harness runs in `f64`.

pub mod constellation;
pub mod error;
pub mod experiments;
pub mod lsdb;
pub mod routing;
pub mod scalar;
pub mod spf;
pub mod sphere;

pub use constellation::{
    ConstellationGraph, Edge, Isl, LinkState, Motion, NodeId, OrbitalState, Satellite,
    TopologyFile, WalkerParams,
};
pub use error::{Error, Result};
pub use experiments::{
    min_radius_for_loss, read_csv, run_sweep, write_csv, ExperimentConfig, ResultRow,
};
pub use lsdb::{
    age_out, handle_lsu, local_view, originate_lsu, run_flood_convergence, Adjacency, FloodSim,
    ForwardDecision, LinkStateDatabase, LinkStateUpdate,
};
pub use routing::{
    check_monotone, route_packet, route_with_oracle_views, Hop, Outcome, RouteTrace, Violation,
};
pub use scalar::Scalar;
pub use spf::{
    build_forwarding_table, lookup_comparator_tree, lookup_linear, refresh_positions, spf_bounded,
    ForwardingRow, ForwardingTable, LinkView, LocalView, SpfTree,
};
pub use sphere::{angle, dist_key, mu_hat, DistKey, NodeAddress, UnitVector};

pub type UnitVector32 = UnitVector<f32>;
pub type UnitVector64 = UnitVector<f64>;
pub type NodeAddress32 = NodeAddress<f32>;
pub type NodeAddress64 = NodeAddress<f64>;
pub type ConstellationGraph32 = ConstellationGraph<f32>;
pub type ConstellationGraph64 = ConstellationGraph<f64>;
pub type ForwardingTable32 = ForwardingTable<f32>;
pub type ForwardingTable64 = ForwardingTable<f64>;
pub type RouteTrace32 = RouteTrace<f32>;
pub type RouteTrace64 = RouteTrace<f64>;
