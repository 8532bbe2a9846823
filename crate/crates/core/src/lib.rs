//! Cost-aware multipath routing for long-haul inter-datacenter links, with a packet-level
//! discrete-event simulator to evaluate it against ECMP and a capacity-weighted hash.

pub mod analysis;
pub mod baselines;
pub mod control_plane;
pub mod data_plane;
pub mod engine;
pub mod experiment;
pub mod hash;
pub mod model;
pub mod scenario;
pub mod traffic;

pub use baselines::PolicyKind;
pub use control_plane::{CandidatePath, ProvisionConfig, Score8, SwitchTables};
pub use data_plane::{CongestionWeights, FusionWeights, SwitchConfig, SwitchState};
pub use engine::{simulate, SimConfig, SimResult, Simulator};
pub use model::{DcId, Flow, FiveTuple, Link, LinkId, Node, NodeId, NodeRole, SimTime, Topology, TopologyBuilder};
