//! The distributed block proximal method.
//!
//! `N` agents hold local estimates of a shared decision vector. Each round,
//! every agent flips an independent wake-up coin; an awake agent draws one
//! block, mixes its in-neighbors' estimates with its gossip weights, samples
//! a subgradient of its private objective at the mixed point, and applies a
//! proximal step to the drawn block only. All other blocks keep the agent's
//! previous values (not the mixed ones), and idle agents change nothing.
//!
//! Two equivalent formulations are implemented. The *message* form keeps per
//! -agent copies of neighbor estimates, refreshed by explicit block
//! broadcasts, exactly as a networked deployment would. The *compact* form
//! reads neighbor estimates directly from the shared snapshot. Because every
//! broadcast is applied before it is read, the copies always equal the true
//! estimates, and the two forms produce bit-identical trajectories under
//! shared random streams; the test suite asserts this.
//!
//! Rounds are synchronous: all agents read the time-`t` snapshot, and
//! asynchrony is modeled entirely by the wake-up coins. Random streams are
//! per agent and per purpose (wake-up, block draw, data draw, initial point)
//! and advance only on use, so changing the wake probability shifts which
//! round consumes a draw but never which stream it comes from.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{BlockError, BlockPartition};
use crate::diagnostics::{self, Trace, TraceMeta, TraceRow, TraceSink};
use crate::graph::WeightedDigraph;
use crate::objectives::{ObjectiveError, StochasticObjective};
use crate::prox::{prox_step, BlockConstraint, DistanceGenerator, ProxError};
use crate::rng;
use crate::vecmath::axpy;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Which formulation of the update to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateForm {
    /// Neighbor estimates read straight from the shared snapshot.
    Compact,
    /// Local copies refreshed by explicit block broadcasts.
    Message,
}

/// Static run parameters shared by all agents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgoConfig {
    /// Per-agent constant stepsizes, all positive.
    pub stepsizes: Vec<f64>,
    /// Per-agent wake probabilities in [0, 1]. Zero freezes an agent and is
    /// only useful in tests; the convergence theory assumes (0, 1].
    pub wake_probs: Vec<f64>,
    /// Per-agent block-draw distributions; each row is strictly positive and
    /// sums to one.
    pub block_probs: Vec<Vec<f64>>,
    pub partition: BlockPartition,
    /// Number of rounds executed by [`Simulation::run`].
    pub horizon: usize,
    pub master_seed: u64,
    pub form: UpdateForm,
}

impl AlgoConfig {
    /// Uniform block draws and identical stepsize/wake probability for every
    /// agent.
    pub fn uniform(
        n_agents: usize,
        partition: BlockPartition,
        stepsize: f64,
        wake_prob: f64,
        horizon: usize,
        master_seed: u64,
    ) -> Self {
        let num_blocks = partition.num_blocks();
        Self {
            stepsizes: vec![stepsize; n_agents],
            wake_probs: vec![wake_prob; n_agents],
            block_probs: vec![vec![1.0 / num_blocks as f64; num_blocks]; n_agents],
            partition,
            horizon,
            master_seed,
            form: UpdateForm::Compact,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.stepsizes.len()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let n = self.stepsizes.len();
        if n == 0 {
            return Err(EngineError::Config("need at least one agent".into()));
        }
        if self.wake_probs.len() != n || self.block_probs.len() != n {
            return Err(EngineError::Config(
                "stepsizes, wake_probs and block_probs must have one entry per agent".into(),
            ));
        }
        for (i, &a) in self.stepsizes.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(EngineError::Config(format!("stepsize[{i}] = {a} not positive")));
            }
        }
        for (i, &p) in self.wake_probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(EngineError::Config(format!(
                    "wake_probs[{i}] = {p} outside [0, 1]"
                )));
            }
        }
        let num_blocks = self.partition.num_blocks();
        for (i, row) in self.block_probs.iter().enumerate() {
            if row.len() != num_blocks {
                return Err(EngineError::Config(format!(
                    "block_probs[{i}] has {} entries for {num_blocks} blocks",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p > 0.0)) {
                return Err(EngineError::Config(format!(
                    "block_probs[{i}] must be strictly positive"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(EngineError::Config(format!(
                    "block_probs[{i}] sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn min_stepsize(&self) -> f64 {
        self.stepsizes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_stepsize(&self) -> f64 {
        self.stepsizes.iter().copied().fold(0.0, f64::max)
    }

    /// Probability that agent `i` is awake and draws `block` in a round.
    pub fn update_prob(&self, i: usize, block: usize) -> f64 {
        self.wake_probs[i] * self.block_probs[i][block]
    }

    /// Smallest per-agent per-block update probability.
    pub fn min_update_prob(&self) -> f64 {
        (0..self.n_agents())
            .flat_map(|i| (0..self.partition.num_blocks()).map(move |l| self.update_prob(i, l)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether every stepsize satisfies the `a_i <= Q/m` regime under which
    /// the linear-rate guarantee holds.
    pub fn theorem_regime(&self, strong_convexity: f64, quadratic_growth: f64) -> bool {
        self.max_stepsize() <= quadratic_growth / strong_convexity
    }
}

/// One block broadcast: the updated block id and its new values.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub block: usize,
    pub values: Vec<f64>,
}

/// Message-form bookkeeping: per-receiver copies of neighbor estimates and
/// the broadcasts emitted in the previous round.
#[derive(Debug, Clone)]
struct MessageMemory {
    /// `copies[i][j]` is agent i's local copy of agent j's estimate, present
    /// only when j is an in-neighbor of i.
    copies: Vec<Vec<Option<Vec<f64>>>>,
    /// `pending[j]` is agent j's broadcast from the previous round, applied
    /// by receivers at the start of the next one.
    pending: Vec<Option<Broadcast>>,
}

#[derive(Debug, Clone)]
struct AgentStreams {
    wake: ChaCha8Rng,
    block: ChaCha8Rng,
    data: ChaCha8Rng,
}

/// All mutable state of a run.
#[derive(Debug, Clone)]
pub struct NetworkState {
    iter: usize,
    estimates: Vec<Vec<f64>>,
    message: Option<MessageMemory>,
    streams: Vec<AgentStreams>,
}

impl NetworkState {
    pub fn iter(&self) -> usize {
        self.iter
    }

    pub fn n_agents(&self) -> usize {
        self.estimates.len()
    }

    pub fn estimates(&self) -> &[Vec<f64>] {
        &self.estimates
    }

    pub fn estimate(&self, agent: usize) -> &[f64] {
        &self.estimates[agent]
    }

    /// Agent `i`'s copy of agent `j`'s estimate (message form only).
    pub fn copy_of(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.message
            .as_ref()
            .and_then(|m| m.copies[i][j].as_deref())
    }
}

/// An immutable problem instance bundling the configuration, the gossip
/// graph, the per-agent objectives, and the per-block feasible sets.
pub struct Simulation<'a> {
    config: &'a AlgoConfig,
    graph: &'a WeightedDigraph,
    objectives: &'a [StochasticObjective],
    constraints: &'a [BlockConstraint],
    generator: DistanceGenerator,
}

/// Seed channels used by the engine, one per draw purpose.
pub(crate) mod channel {
    pub const INIT: u64 = 1;
    pub const WAKE: u64 = 2;
    pub const BLOCK: u64 = 3;
    pub const DATA: u64 = 4;
}

impl<'a> Simulation<'a> {
    pub fn new(
        config: &'a AlgoConfig,
        graph: &'a WeightedDigraph,
        objectives: &'a [StochasticObjective],
        constraints: &'a [BlockConstraint],
        generator: DistanceGenerator,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let n = graph.n_agents();
        if config.n_agents() != n {
            return Err(EngineError::Config(format!(
                "config built for {} agents, graph has {n}",
                config.n_agents()
            )));
        }
        if objectives.len() != n {
            return Err(EngineError::Config(format!(
                "{} objectives for {n} agents",
                objectives.len()
            )));
        }
        let dim = config.partition.total_dim();
        if let Some(o) = objectives.iter().find(|o| o.dim() != dim) {
            return Err(EngineError::Config(format!(
                "objective dimension {} does not match partition dimension {dim}",
                o.dim()
            )));
        }
        if constraints.len() != config.partition.num_blocks() {
            return Err(EngineError::Config(format!(
                "{} constraints for {} blocks",
                constraints.len(),
                config.partition.num_blocks()
            )));
        }
        Ok(Self {
            config,
            graph,
            objectives,
            constraints,
            generator,
        })
    }

    pub fn config(&self) -> &AlgoConfig {
        self.config
    }

    pub fn graph(&self) -> &WeightedDigraph {
        self.graph
    }

    pub fn objectives(&self) -> &[StochasticObjective] {
        self.objectives
    }

    pub fn constraints(&self) -> &[BlockConstraint] {
        self.constraints
    }

    pub fn generator(&self) -> &DistanceGenerator {
        &self.generator
    }

    /// Smallest strong-convexity modulus across the agents.
    pub fn strong_convexity(&self) -> f64 {
        self.objectives
            .iter()
            .map(StochasticObjective::strong_convexity)
            .fold(f64::INFINITY, f64::min)
    }

    /// Projects a full vector onto the product constraint set, block by
    /// block.
    pub fn project_full(&self, x: &[f64]) -> Result<Vec<f64>, EngineError> {
        let partition = &self.config.partition;
        let mut out = x.to_vec();
        for block in 0..partition.num_blocks() {
            let projected = self.constraints[block].project(partition.get_block(x, block)?)?;
            partition.set_block(&mut out, block, &projected)?;
        }
        Ok(out)
    }

    fn agent_streams(&self) -> Vec<AgentStreams> {
        (0..self.config.n_agents())
            .map(|i| AgentStreams {
                wake: rng::stream(self.config.master_seed, channel::WAKE, i as u64),
                block: rng::stream(self.config.master_seed, channel::BLOCK, i as u64),
                data: rng::stream(self.config.master_seed, channel::DATA, i as u64),
            })
            .collect()
    }

    /// Draws each agent's start uniformly from the ball of radius
    /// `init_radius` and projects it onto the feasible set. In message form
    /// the initial estimates are shared with every neighbor.
    pub fn init_state(&self, init_radius: f64) -> Result<NetworkState, EngineError> {
        if !(init_radius >= 0.0) {
            return Err(EngineError::Config(format!(
                "init radius {init_radius} must be nonnegative"
            )));
        }
        let dim = self.config.partition.total_dim();
        let estimates: Vec<Vec<f64>> = (0..self.config.n_agents())
            .map(|i| {
                let mut stream = rng::stream(self.config.master_seed, channel::INIT, i as u64);
                self.project_full(&rng::uniform_ball(&mut stream, dim, init_radius))
            })
            .collect::<Result<_, _>>()?;
        self.state_from_estimates(estimates)
    }

    /// Wraps explicit starting estimates into a run state; used by tests and
    /// interactive callers that pin the initial condition.
    pub fn state_from_estimates(
        &self,
        estimates: Vec<Vec<f64>>,
    ) -> Result<NetworkState, EngineError> {
        let n = self.config.n_agents();
        let dim = self.config.partition.total_dim();
        if estimates.len() != n || estimates.iter().any(|x| x.len() != dim) {
            return Err(EngineError::Config(
                "initial estimates must be one full-dimension vector per agent".into(),
            ));
        }
        let message = match self.config.form {
            UpdateForm::Compact => None,
            UpdateForm::Message => {
                let copies = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                (self.graph.weight(i, j) > 0.0).then(|| estimates[j].clone())
                            })
                            .collect()
                    })
                    .collect();
                Some(MessageMemory {
                    copies,
                    pending: vec![None; n],
                })
            }
        };
        Ok(NetworkState {
            iter: 0,
            estimates,
            message,
            streams: self.agent_streams(),
        })
    }

    /// Weighted mix of the given per-agent vectors using row `i` of the
    /// gossip matrix. Skips zero weights and accumulates in ascending agent
    /// order so both update forms perform identical arithmetic.
    fn mix_row<'v>(&self, i: usize, vector_of: impl Fn(usize) -> &'v [f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.config.partition.total_dim()];
        for j in 0..self.config.n_agents() {
            let w = self.graph.weight(i, j);
            if w > 0.0 {
                axpy(&mut y, w, vector_of(j));
            }
        }
        y
    }

    /// Advances the state by one round and returns the number of awake
    /// agents.
    pub fn step(&self, state: &mut NetworkState) -> Result<usize, EngineError> {
        match self.config.form {
            UpdateForm::Compact => self.step_compact(state),
            UpdateForm::Message => self.step_message(state),
        }
    }

    /// One round of the compact form: awake agents mix the time-t snapshot
    /// directly.
    fn step_compact(&self, state: &mut NetworkState) -> Result<usize, EngineError> {
        let snapshot = state.estimates.clone();
        let mut awake_count = 0;
        for i in 0..self.config.n_agents() {
            if !rng::bernoulli(&mut state.streams[i].wake, self.config.wake_probs[i]) {
                continue;
            }
            awake_count += 1;
            let block = rng::categorical(&mut state.streams[i].block, &self.config.block_probs[i]);
            let mixed = self.mix_row(i, |j| snapshot[j].as_slice());
            let (subgrad, _) =
                self.objectives[i].sample_subgradient(&mixed, &mut state.streams[i].data)?;
            self.apply_block_prox(state, i, block, &mixed, &subgrad)?;
        }
        state.iter += 1;
        Ok(awake_count)
    }

    /// One round of the message form: apply last round's broadcasts to the
    /// local copies, mix the copies, update, then queue this round's
    /// broadcasts.
    fn step_message(&self, state: &mut NetworkState) -> Result<usize, EngineError> {
        let n = self.config.n_agents();
        {
            let memory = state
                .message
                .as_mut()
                .ok_or_else(|| EngineError::Config("state lacks message-form memory".into()))?;
            // Copy refresh happens for every agent, awake or not.
            for i in 0..n {
                for j in 0..n {
                    if self.graph.weight(i, j) > 0.0 {
                        if let Some(broadcast) = &memory.pending[j] {
                            let copy = memory.copies[i][j]
                                .as_mut()
                                .expect("in-neighbor copies exist from initialization");
                            self.config.partition.set_block(
                                copy,
                                broadcast.block,
                                &broadcast.values,
                            )?;
                        }
                    }
                }
            }
        }
        #[cfg(debug_assertions)]
        self.assert_copies_synchronized(state);

        let mut new_pending: Vec<Option<Broadcast>> = vec![None; n];
        let mut awake_count = 0;
        for i in 0..n {
            if !rng::bernoulli(&mut state.streams[i].wake, self.config.wake_probs[i]) {
                continue;
            }
            awake_count += 1;
            let block = rng::categorical(&mut state.streams[i].block, &self.config.block_probs[i]);
            let mixed = {
                let memory = state.message.as_ref().expect("checked above");
                self.mix_row(i, |j| {
                    memory.copies[i][j]
                        .as_deref()
                        .expect("positive weight implies a copy")
                })
            };
            let (subgrad, _) =
                self.objectives[i].sample_subgradient(&mixed, &mut state.streams[i].data)?;
            let updated = self.apply_block_prox(state, i, block, &mixed, &subgrad)?;
            new_pending[i] = Some(Broadcast {
                block,
                values: updated,
            });
        }
        state.message.as_mut().expect("checked above").pending = new_pending;
        state.iter += 1;
        Ok(awake_count)
    }

    /// Proximal update of one block of agent `i`: the drawn block moves from
    /// its mixed value, every other block keeps the agent's previous value.
    /// Returns the new block values.
    fn apply_block_prox(
        &self,
        state: &mut NetworkState,
        i: usize,
        block: usize,
        mixed: &[f64],
        subgrad: &[f64],
    ) -> Result<Vec<f64>, EngineError> {
        let partition = &self.config.partition;
        let updated = prox_step(
            &self.generator,
            &self.constraints[block],
            partition.get_block(mixed, block)?,
            partition.get_block(subgrad, block)?,
            self.config.stepsizes[i],
        )?;
        partition.set_block(&mut state.estimates[i], block, &updated)?;
        Ok(updated)
    }

    /// Message-form invariant: after the copy refresh, every local copy
    /// equals the sender's true estimate bit for bit.
    #[cfg(debug_assertions)]
    fn assert_copies_synchronized(&self, state: &NetworkState) {
        let memory = state.message.as_ref().expect("message form");
        for i in 0..self.config.n_agents() {
            for j in 0..self.config.n_agents() {
                if let Some(copy) = &memory.copies[i][j] {
                    debug_assert_eq!(
                        copy, &state.estimates[j],
                        "copy of {j} at {i} diverged at iter {}",
                        state.iter
                    );
                }
            }
        }
    }

    /// Runs `horizon` rounds from a fresh state, recording one trace row per
    /// round (plus the initial one). `x_star`, when known, fills in the
    /// weighted-distance column; `f_star` is carried into the metadata.
    pub fn run(
        &self,
        init_radius: f64,
        x_star: Option<&[f64]>,
        f_star: Option<f64>,
        sink: &mut dyn TraceSink,
    ) -> Result<Trace, EngineError> {
        let state = self.init_state(init_radius)?;
        self.run_from(state, x_star, f_star, sink)
    }

    /// Like [`Simulation::run`] but starting from a caller-built state.
    pub fn run_from(
        &self,
        mut state: NetworkState,
        x_star: Option<&[f64]>,
        f_star: Option<f64>,
        sink: &mut dyn TraceSink,
    ) -> Result<Trace, EngineError> {
        let mut rows = Vec::with_capacity(self.config.horizon + 1);
        let mut best = f64::INFINITY;
        let first = self.observe(&state, &mut best, 0, x_star)?;
        sink.record(&first);
        rows.push(first);
        for _ in 0..self.config.horizon {
            let awake = self.step(&mut state)?;
            let row = self.observe(&state, &mut best, awake, x_star)?;
            sink.record(&row);
            rows.push(row);
        }
        Ok(Trace {
            meta: self.trace_meta(f_star),
            rows,
        })
    }

    /// Builds the trace row for the current state. `awake` is the number of
    /// agents that acted in the round that produced this state (zero for the
    /// initial row).
    fn observe(
        &self,
        state: &NetworkState,
        best: &mut f64,
        awake: usize,
        x_star: Option<&[f64]>,
    ) -> Result<TraceRow, EngineError> {
        let average = diagnostics::network_average(state);
        let cost = crate::objectives::total_value(self.objectives, &average)?;
        *best = best.min(cost);
        let consensus = diagnostics::consensus_errors(state);
        let cons_max = consensus.iter().copied().fold(0.0, f64::max);
        let cons_mean = consensus.iter().sum::<f64>() / consensus.len() as f64;
        let lyapunov = match x_star {
            Some(reference) => Some(
                diagnostics::lyapunov(state, reference, self.config, &self.generator)
                    .map_err(|e| EngineError::Config(e.to_string()))?,
            ),
            None => None,
        };
        Ok(TraceRow {
            t: state.iter,
            cost_at_average: cost,
            best_cost: *best,
            consensus,
            cons_max,
            cons_mean,
            lyapunov,
            awake,
        })
    }

    fn trace_meta(&self, f_star: Option<f64>) -> TraceMeta {
        let q = self.generator.quadratic_growth;
        let m = self.strong_convexity();
        let contraction = if self.config.theorem_regime(m, q) {
            diagnostics::contraction_factor(m, self.config.min_stepsize(), self.config.min_update_prob(), q)
                .ok()
        } else {
            None
        };
        TraceMeta {
            config_hash: diagnostics::config_hash(self.config),
            master_seed: self.config.master_seed,
            n_agents: self.config.n_agents(),
            total_dim: self.config.partition.total_dim(),
            num_blocks: self.config.partition.num_blocks(),
            horizon: self.config.horizon,
            form: self.config.form,
            min_stepsize: self.config.min_stepsize(),
            max_stepsize: self.config.max_stepsize(),
            min_update_prob: self.config.min_update_prob(),
            contraction,
            f_star,
        }
    }
}
