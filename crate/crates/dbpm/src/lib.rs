//! Simulator for the distributed block proximal method.
//!
//! A network of agents cooperatively minimizes a sum of strongly convex
//! stochastic objectives. Each agent repeatedly mixes its neighbors'
//! estimates through a doubly stochastic gossip matrix and applies a
//! stochastic proximal step to one randomly drawn block of the decision
//! vector, with constant local stepsizes and random wake-ups modeling
//! asynchrony. With strongly convex costs the expected suboptimality decays
//! geometrically down to a floor proportional to the stepsizes; the
//! diagnostics in this crate measure exactly that behavior.
//!
//! Modules mirror the moving parts: [`blocks`] for the block partition,
//! [`graph`] for topologies and gossip weights, [`prox`] for Bregman
//! divergences and the block proximal step, [`objectives`] and [`dataset`]
//! for the per-agent costs and the synthetic classification data, [`engine`]
//! for the method itself in its message and compact forms, [`diagnostics`]
//! for traces and convergence measurements, and [`experiment`] for config
//! driven reproduction runs and stepsize sweeps.

pub mod blocks;
pub mod dataset;
pub mod diagnostics;
pub mod engine;
pub mod experiment;
pub mod graph;
pub mod objectives;
pub mod prox;
pub mod rng;
pub mod vecmath;

pub use blocks::{BlockError, BlockPartition};
pub use dataset::{gen_two_cluster_dataset, Dataset, DatasetError};
pub use diagnostics::{
    best_cost_series, consensus_errors, contraction_factor, fit_rate, lyapunov, network_average,
    solve_reference, DiagnosticsError, RateFit, ReferenceSolution, Trace, TraceMeta, TraceRow,
    TraceSink,
};
pub use engine::{AlgoConfig, EngineError, NetworkState, Simulation, UpdateForm};
pub use graph::{
    gen_connected_er, metropolis_weights, validate_weights, Adjacency, GraphError,
    WeightViolation, WeightedDigraph,
};
pub use objectives::{ObjectiveError, ObjectiveKind, StochasticObjective, TrainingSample};
pub use prox::{prox_step, BlockConstraint, DistanceGenerator, ProxError};
