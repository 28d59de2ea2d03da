//! Solver library for integral transshipments on dynamic networks.
//!
//! A dynamic network carries integer arc capacities (flow units per time
//! step) and integer transit times. Given integer balances and a time
//! horizon, the solver decides feasibility through submodular minimization
//! of the violation function, refines a chain of tight terminal sets with
//! parametric searches, and extracts an integral flow over time as a
//! collection of temporally repeated path flows. Everything is cross-checked
//! against a brute-force time-expanded oracle.

pub mod driver;
pub mod generator;
pub mod lexmax;
pub mod model;
pub mod outflow;
pub mod parametric;
pub mod pipeline;
pub mod sfm;
pub mod static_flow;
pub mod time_expanded;

/// Scalar used for capacities, balances, costs and flow values.
///
/// All arithmetic in the library is exact integer arithmetic; instance
/// validation rejects inputs whose derived quantities could overflow.
pub type Value = i64;

/// Time steps and transit times share the flow scalar.
pub type Time = i64;

/// Sentinel for unbounded capacity. Never used in arithmetic directly;
/// flow computations replace it with a finite surrogate that provably
/// does not constrain any optimum (see [`model::TransshipmentInstance::capacity_surrogate`]).
pub const U_INF: Value = Value::MAX / 4;

pub use model::{
    DynamicNetwork, NodeId, Role, Terminal, TerminalId, TerminalSet, TransshipmentInstance,
};

/// Errors surfaced by the library API.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The exact submodular minimizer only handles small ground sets.
    #[error("instance too large for exact SFM: ground set has {got} elements, cap is {cap}")]
    SfmTooLarge { got: usize, cap: usize },
    /// The time expansion would exceed the configured size cap.
    #[error("time expansion too large: {nodes} nodes exceed cap {cap}")]
    ExpansionTooLarge { nodes: usize, cap: usize },
    /// Asked to solve an infeasible instance.
    #[error("instance is infeasible; violated terminal set: {witness}")]
    Infeasible { witness: String },
    /// An internal invariant failed; indicates a bug, never expected on valid input.
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("malformed instance: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
