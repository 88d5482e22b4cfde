//! Observable convergence diagnostics.
//!
//! Everything measurable about a run lives here: the network average and its
//! cost, consensus errors, the probability-weighted distance to a reference
//! optimum (the Lyapunov function of the constant-stepsize analysis), the
//! geometric contraction factor, running-best cost series, an empirical
//! decay-to-floor fitter, and a centralized reference solver that certifies
//! the optimal cost used by error curves.
//!
//! Expectations are always estimated by averaging runs over seeds; single
//! traces are realizations, and the seed-averaged helpers report standard
//! errors so checks can state how far a sample mean may drift.

use std::io::Write;

use serde::Serialize;

use crate::engine::{AlgoConfig, EngineError, NetworkState, Simulation, UpdateForm};
use crate::graph::WeightedDigraph;
use crate::objectives::{ObjectiveKind, StochasticObjective};
use crate::prox::{BlockConstraint, DistanceGenerator};
use crate::rng;
use crate::vecmath::{axpy, dist, norm_sq};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("stepsize {stepsize} exceeds the regime limit Q/m = {limit}")]
    RegimeViolation { stepsize: f64, limit: f64 },
    #[error("series has {0} entries; need at least 50")]
    SeriesTooShort(usize),
    #[error("series is degenerate: not positive, or never above twice its floor")]
    DegenerateSeries,
    #[error("floor window {0} outside (0, 1]")]
    BadFloorWindow(f64),
    #[error("reference solve needs deterministic subgradients")]
    NotDeterministic,
    #[error("agent {agent} never updates block {block}; weighted distance undefined")]
    ZeroUpdateProbability { agent: usize, block: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One recorded round.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// Global cost evaluated at the network average.
    pub cost_at_average: f64,
    /// Running minimum of `cost_at_average`.
    pub best_cost: f64,
    /// Per-agent distance to the network average.
    pub consensus: Vec<f64>,
    pub cons_max: f64,
    pub cons_mean: f64,
    /// Probability-weighted Bregman distance to the reference optimum, when
    /// one is known.
    pub lyapunov: Option<f64>,
    /// Agents that acted in the round producing this state (0 for t = 0).
    pub awake: usize,
}

/// Run-level metadata attached to every trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMeta {
    /// FNV-1a hash of the serialized algorithm configuration.
    pub config_hash: String,
    pub master_seed: u64,
    pub n_agents: usize,
    pub total_dim: usize,
    pub num_blocks: usize,
    pub horizon: usize,
    pub form: UpdateForm,
    pub min_stepsize: f64,
    pub max_stepsize: f64,
    /// Smallest wake-times-block probability across agents and blocks.
    pub min_update_prob: f64,
    /// Geometric factor `1 - m a_m pi_m / Q` when the stepsize regime holds.
    pub contraction: Option<f64>,
    pub f_star: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Cost error series `f(average) - f_star`.
    pub fn error_series(&self, f_star: f64) -> Vec<f64> {
        self.rows.iter().map(|r| r.cost_at_average - f_star).collect()
    }

    pub fn cost_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cost_at_average).collect()
    }

    pub fn best_cost_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.best_cost).collect()
    }

    pub fn cons_max_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.cons_max).collect()
    }

    /// Writes the trace in its canonical CSV form. The weighted-distance
    /// column is left empty when no reference optimum was supplied.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,f_avg,f_best,cons_max,cons_mean,V,awake")?;
        for row in &self.rows {
            let v = row.lyapunov.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.t, row.cost_at_average, row.best_cost, row.cons_max, row.cons_mean, v, row.awake
            )?;
        }
        Ok(())
    }
}

/// Streaming consumer of trace rows; [`Simulation::run`] feeds every row to
/// one of these as it is produced.
pub trait TraceSink {
    fn record(&mut self, row: &TraceRow);
}

/// Discards every row; the returned [`Trace`] still holds them all.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _row: &TraceRow) {}
}

impl<F: FnMut(&TraceRow)> TraceSink for F {
    fn record(&mut self, row: &TraceRow) {
        self(row)
    }
}

/// FNV-1a hash of the serialized configuration, as fixed-width hex.
pub fn config_hash(cfg: &AlgoConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in json.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Coordinate-wise mean of the agents' estimates.
pub fn network_average(state: &NetworkState) -> Vec<f64> {
    let estimates = state.estimates();
    let mut average = vec![0.0; estimates[0].len()];
    for x in estimates {
        axpy(&mut average, 1.0 / estimates.len() as f64, x);
    }
    average
}

/// Per-agent distance to the network average.
pub fn consensus_errors(state: &NetworkState) -> Vec<f64> {
    let average = network_average(state);
    state.estimates().iter().map(|x| dist(x, &average)).collect()
}

/// Probability-weighted Bregman distance from the estimates to `x_star`:
/// the sum over agents and blocks of `D(x_block, x_star_block) / p_update`.
pub fn lyapunov(
    state: &NetworkState,
    x_star: &[f64],
    cfg: &AlgoConfig,
    dg: &DistanceGenerator,
) -> Result<f64, DiagnosticsError> {
    let partition = &cfg.partition;
    if x_star.len() != partition.total_dim() {
        return Err(DiagnosticsError::Dimension(format!(
            "reference has length {}, expected {}",
            x_star.len(),
            partition.total_dim()
        )));
    }
    let mut total = 0.0;
    for (agent, x) in state.estimates().iter().enumerate() {
        for block in 0..partition.num_blocks() {
            let prob = cfg.update_prob(agent, block);
            if !(prob > 0.0) {
                return Err(DiagnosticsError::ZeroUpdateProbability { agent, block });
            }
            let div = dg
                .bregman_div(
                    partition.get_block(x, block).expect("validated dims"),
                    partition.get_block(x_star, block).expect("validated dims"),
                )
                .expect("equal block lengths");
            total += div / prob;
        }
    }
    Ok(total)
}

/// Geometric contraction factor `1 - m a_m pi_m / Q` of the weighted
/// distance recursion.
///
/// Requires the constant-stepsize regime `a_m <= Q/m`; the boundary value is
/// allowed and yields the degenerate factor 0.
pub fn contraction_factor(
    strong_convexity: f64,
    min_stepsize: f64,
    min_update_prob: f64,
    quadratic_growth: f64,
) -> Result<f64, DiagnosticsError> {
    debug_assert!(strong_convexity > 0.0 && min_stepsize > 0.0 && quadratic_growth > 0.0);
    debug_assert!((0.0..=1.0).contains(&min_update_prob));
    let limit = quadratic_growth / strong_convexity;
    if min_stepsize > limit {
        return Err(DiagnosticsError::RegimeViolation {
            stepsize: min_stepsize,
            limit,
        });
    }
    Ok(1.0 - strong_convexity * min_stepsize * min_update_prob / quadratic_growth)
}

/// Running minimum of a cost series.
pub fn best_cost_series(series: &[f64]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    series
        .iter()
        .map(|&v| {
            best = best.min(v);
            best
        })
        .collect()
}

/// Entry-wise mean across equally long series.
pub fn mean_series(series: &[Vec<f64>]) -> Vec<f64> {
    let len = series.first().map_or(0, Vec::len);
    assert!(series.iter().all(|s| s.len() == len), "ragged series");
    let mut mean = vec![0.0; len];
    for s in series {
        axpy(&mut mean, 1.0 / series.len() as f64, s);
    }
    mean
}

/// Median of a sample (mean of the two middle order statistics for even
/// sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Result of fitting geometric-decay-to-a-floor to an error series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Least-squares slope of the log error over the pre-floor segment
    /// (negative for decaying series), per iteration.
    pub slope: f64,
    /// Steady-state error level.
    pub floor: f64,
    /// Coefficient of determination of the log-linear fit.
    pub pre_floor_r2: f64,
}

/// Fits `error(t) ~ exp(slope * t) + floor` to a positive series.
///
/// The floor is the median of the trailing `floor_window` fraction. The
/// slope comes from a least-squares line through `ln(error - 0.9 * floor)`
/// over the leading segment where the error still exceeds twice the floor;
/// subtracting only 0.9 of the floor keeps the logarithm away from zero.
pub fn fit_rate(series: &[f64], floor_window: f64) -> Result<RateFit, DiagnosticsError> {
    if series.len() < 50 {
        return Err(DiagnosticsError::SeriesTooShort(series.len()));
    }
    if !(floor_window > 0.0 && floor_window <= 1.0) {
        return Err(DiagnosticsError::BadFloorWindow(floor_window));
    }
    if series.iter().any(|&e| !e.is_finite() || e <= 0.0) {
        return Err(DiagnosticsError::DegenerateSeries);
    }
    let tail_len = ((series.len() as f64 * floor_window).ceil() as usize).clamp(1, series.len());
    let floor = median(&series[series.len() - tail_len..]);
    let cutoff = 2.0 * floor;
    let segment_end = series
        .iter()
        .position(|&e| e <= cutoff)
        .unwrap_or(series.len());
    if segment_end < 2 {
        return Err(DiagnosticsError::DegenerateSeries);
    }
    let logs: Vec<f64> = series[..segment_end]
        .iter()
        .map(|&e| (e - 0.9 * floor).ln())
        .collect();
    let n = logs.len() as f64;
    let t_mean = (segment_end as f64 - 1.0) / 2.0;
    let y_mean = logs.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_t = 0.0;
    for (t, y) in logs.iter().enumerate() {
        let dt = t as f64 - t_mean;
        cov += dt * (y - y_mean);
        var_t += dt * dt;
    }
    let slope = cov / var_t;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, y) in logs.iter().enumerate() {
        let fitted = y_mean + slope * (t as f64 - t_mean);
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - y_mean) * (y - y_mean);
    }
    let pre_floor_r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Ok(RateFit {
        slope,
        floor,
        pre_floor_r2,
    })
}

/// Output of [`solve_reference`].
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// True when doubling the iteration budget moved the best cost by less
    /// than 1e-8.
    pub certified: bool,
    /// Best-cost change between the single and doubled budget.
    pub certification_gap: f64,
}

fn is_sampling_deterministic(obj: &StochasticObjective) -> bool {
    match obj.kind() {
        ObjectiveKind::Quadratic { noise_std, .. } => *noise_std == 0.0,
        ObjectiveKind::HingeRidge { samples, .. } => samples.len() == 1,
    }
}

fn project_product(
    partition: &crate::blocks::BlockPartition,
    constraints: &[BlockConstraint],
    x: &[f64],
) -> Vec<f64> {
    let mut out = x.to_vec();
    for block in 0..partition.num_blocks() {
        let projected = constraints[block]
            .project(partition.get_block(x, block).expect("validated dims"))
            .expect("matching block dims");
        partition
            .set_block(&mut out, block, &projected)
            .expect("matching block dims");
    }
    out
}

/// Centralized solve of the summed objective, providing the reference
/// optimum for error curves.
///
/// Noise-free quadratics over a free set use the exact curvature-weighted
/// average of the targets. Everything else runs a projected subgradient
/// method with stepsize `2 / (m_total (k + 2))` and best-iterate tracking,
/// started from a seeded point in the unit ball. The method always runs
/// twice the requested budget; the reported gap between the single and
/// doubled budgets certifies (or flags) the accuracy of `f_star`.
pub fn solve_reference(
    objectives: &[StochasticObjective],
    partition: &crate::blocks::BlockPartition,
    constraints: &[BlockConstraint],
    iterations: usize,
    seed: u64,
) -> Result<ReferenceSolution, DiagnosticsError> {
    if objectives.is_empty() {
        return Err(DiagnosticsError::Dimension("no objectives".into()));
    }
    let dim = partition.total_dim();
    if objectives.iter().any(|o| o.dim() != dim) || constraints.len() != partition.num_blocks() {
        return Err(DiagnosticsError::Dimension(
            "objectives, partition and constraints disagree".into(),
        ));
    }
    if objectives
        .iter()
        .any(|o| matches!(o.kind(), ObjectiveKind::Quadratic { noise_std, .. } if *noise_std > 0.0))
    {
        return Err(DiagnosticsError::NotDeterministic);
    }

    let all_free = constraints.iter().all(|c| matches!(c, BlockConstraint::Free));
    let all_quadratic = objectives
        .iter()
        .all(|o| matches!(o.kind(), ObjectiveKind::Quadratic { .. }));
    if all_quadratic && all_free {
        // curvature-weighted average of the targets, exact
        let mut weighted = vec![0.0; dim];
        let mut total_curvature = 0.0;
        for o in objectives {
            let ObjectiveKind::Quadratic {
                target, curvature, ..
            } = o.kind()
            else {
                unreachable!()
            };
            axpy(&mut weighted, *curvature, target);
            total_curvature += curvature;
        }
        let x_star: Vec<f64> = weighted.iter().map(|w| w / total_curvature).collect();
        let f_star = crate::objectives::total_value(objectives, &x_star).expect("dims checked");
        return Ok(ReferenceSolution {
            x_star,
            f_star,
            certified: true,
            certification_gap: 0.0,
        });
    }

    let m_total: f64 = objectives.iter().map(|o| o.strong_convexity()).sum();
    let mut start_stream = rng::stream(seed, channel::REFERENCE_INIT, 0);
    let mut x = project_product(
        partition,
        constraints,
        &rng::uniform_ball(&mut start_stream, dim, 1.0),
    );
    let mut best_f = crate::objectives::total_value(objectives, &x).expect("dims checked");
    let mut best_x = x.clone();
    let mut f_at_single_budget = best_f;
    for k in 0..(2 * iterations) {
        let step = 2.0 / (m_total * (k as f64 + 2.0));
        let grad = crate::objectives::total_subgradient(objectives, &x).expect("dims checked");
        axpy(&mut x, -step, &grad);
        x = project_product(partition, constraints, &x);
        let f = crate::objectives::total_value(objectives, &x).expect("dims checked");
        if f < best_f {
            best_f = f;
            best_x = x.clone();
        }
        if k + 1 == iterations {
            f_at_single_budget = best_f;
        }
    }
    let certification_gap = f_at_single_budget - best_f;
    Ok(ReferenceSolution {
        x_star: best_x,
        f_star: best_f,
        certified: certification_gap < 1e-8,
        certification_gap,
    })
}

/// Seed-averaged check of the one-round recursion of the weighted distance.
///
/// For each seed and round the recursion residual is
/// `V(t+1) - c V(t) + sum_i a_i (f_i(y_i(t)) - f_i(x_star)) - a_M^2 G2 / (2 sigma)`
/// with `G2` estimated as the summed per-agent maximum of the squared
/// subgradient norms observed at the mixed points. The residual has
/// nonpositive expectation; callers compare the per-round sample mean
/// against its standard error.
#[derive(Debug, Clone)]
pub struct RecursionCheck {
    /// Per-round sample mean of the residual.
    pub mean_residual: Vec<f64>,
    /// Per-round standard error of the residual mean.
    pub std_err: Vec<f64>,
    pub contraction: f64,
    pub noise_term: f64,
    pub estimated_sq_bound: f64,
}

pub fn lyapunov_recursion_check(
    cfg: &AlgoConfig,
    graph: &WeightedDigraph,
    objectives: &[StochasticObjective],
    constraints: &[BlockConstraint],
    dg: DistanceGenerator,
    init_radius: f64,
    x_star: &[f64],
    seeds: &[u64],
) -> Result<RecursionCheck, DiagnosticsError> {
    if objectives.iter().any(|o| !is_sampling_deterministic(o)) {
        return Err(DiagnosticsError::NotDeterministic);
    }
    assert!(!seeds.is_empty());
    let horizon = cfg.horizon;
    let n = graph.n_agents();
    let f_at_star: Vec<f64> = objectives
        .iter()
        .map(|o| o.full_value(x_star).expect("dims match"))
        .collect();

    // per seed: V(0..=horizon) and the stepped cost gaps D(0..horizon)
    let mut distance_runs = Vec::with_capacity(seeds.len());
    let mut gap_runs = Vec::with_capacity(seeds.len());
    let mut max_sq_per_agent = vec![0.0f64; n];
    for &seed in seeds {
        let mut seeded = cfg.clone();
        seeded.master_seed = seed;
        let sim = Simulation::new(&seeded, graph, objectives, constraints, dg)?;
        let mut state = sim.init_state(init_radius)?;
        let mut distances = Vec::with_capacity(horizon + 1);
        let mut gaps = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            distances.push(lyapunov(&state, x_star, cfg, &dg)?);
            // mixed points recomputed here, independently of the engine
            let mut gap = 0.0;
            for i in 0..n {
                let mut mixed = vec![0.0; x_star.len()];
                for j in 0..n {
                    let w = graph.weight(i, j);
                    if w > 0.0 {
                        axpy(&mut mixed, w, state.estimate(j));
                    }
                }
                let f_mixed = objectives[i].full_value(&mixed).expect("dims match");
                gap += cfg.stepsizes[i] * (f_mixed - f_at_star[i]);
                let g = objectives[i].full_subgradient(&mixed).expect("dims match");
                max_sq_per_agent[i] = max_sq_per_agent[i].max(norm_sq(&g));
            }
            gaps.push(gap);
            sim.step(&mut state)?;
        }
        distances.push(lyapunov(&state, x_star, cfg, &dg)?);
        distance_runs.push(distances);
        gap_runs.push(gaps);
    }

    let strong_convexity = objectives
        .iter()
        .map(StochasticObjective::strong_convexity)
        .fold(f64::INFINITY, f64::min);
    let contraction = contraction_factor(
        strong_convexity,
        cfg.min_stepsize(),
        cfg.min_update_prob(),
        dg.quadratic_growth,
    )?;
    let estimated_sq_bound: f64 = max_sq_per_agent.iter().sum();
    let noise_term =
        cfg.max_stepsize() * cfg.max_stepsize() * estimated_sq_bound / (2.0 * dg.strong_convexity);

    let mut mean_residual = Vec::with_capacity(horizon);
    let mut std_err = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let residuals: Vec<f64> = distance_runs
            .iter()
            .zip(&gap_runs)
            .map(|(v, d)| v[t + 1] - contraction * v[t] + d[t] - noise_term)
            .collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let var = residuals
            .iter()
            .map(|z| (z - mean) * (z - mean))
            .sum::<f64>()
            / (residuals.len() as f64 - 1.0).max(1.0);
        mean_residual.push(mean);
        std_err.push((var / residuals.len() as f64).sqrt());
    }
    Ok(RecursionCheck {
        mean_residual,
        std_err,
        contraction,
        noise_term,
        estimated_sq_bound,
    })
}

pub(crate) mod channel {
    pub const REFERENCE_INIT: u64 = 31;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockPartition;
    use approx::assert_abs_diff_eq;

    fn state_with(estimates: Vec<Vec<f64>>, cfg: &AlgoConfig) -> NetworkState {
        let n = estimates.len();
        let dim = estimates[0].len();
        let weights = vec![1.0 / n as f64; n * n];
        let graph = WeightedDigraph::from_weights(n, weights).unwrap();
        let objectives: Vec<StochasticObjective> = (0..n)
            .map(|_| StochasticObjective::quadratic(vec![0.0; dim], 1.0, 0.0, 10.0).unwrap())
            .collect();
        let constraints = vec![BlockConstraint::Free; cfg.partition.num_blocks()];
        let sim = Simulation::new(cfg, &graph, &objectives, &constraints, DistanceGenerator::euclidean())
            .unwrap();
        let state = sim.state_from_estimates(estimates).unwrap();
        state
    }

    #[test]
    fn network_average_cases() {
        let cfg = AlgoConfig::uniform(2, BlockPartition::trivial(1), 0.1, 1.0, 1, 0);
        let state = state_with(vec![vec![0.0], vec![2.0]], &cfg);
        assert_eq!(network_average(&state), vec![1.0]);

        let cfg3 = AlgoConfig::uniform(3, BlockPartition::trivial(2), 0.1, 1.0, 1, 0);
        let same = state_with(vec![vec![0.5, -1.0]; 3], &cfg3);
        assert_eq!(network_average(&same), vec![0.5, -1.0]);
    }

    #[test]
    fn network_average_matches_naive_loop() {
        let mut stream = rng::stream(14, 60, 0);
        let estimates: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..4).map(|_| rng::standard_normal(&mut stream)).collect())
            .collect();
        let cfg = AlgoConfig::uniform(7, BlockPartition::trivial(4), 0.1, 1.0, 1, 0);
        let state = state_with(estimates.clone(), &cfg);
        let fast = network_average(&state);
        for k in 0..4 {
            let mut acc = 0.0;
            for e in &estimates {
                acc += e[k];
            }
            assert_abs_diff_eq!(fast[k], acc / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn lyapunov_values() {
        // single agent, single block, full update probability
        let cfg = AlgoConfig::uniform(1, BlockPartition::trivial(1), 0.1, 1.0, 1, 0);
        let state = state_with(vec![vec![2.0]], &cfg);
        let dg = DistanceGenerator::euclidean();
        assert_abs_diff_eq!(
            lyapunov(&state, &[0.0], &cfg, &dg).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        // distance zero at the reference
        assert_eq!(lyapunov(&state, &[2.0], &cfg, &dg).unwrap(), 0.0);

        // two blocks at probability 1/2 each, unit block distances:
        // each block contributes (1/2 * 1) / 0.5 = 1
        let cfg2 = AlgoConfig::uniform(1, BlockPartition::equal(2, 2).unwrap(), 0.1, 1.0, 1, 0);
        let state2 = state_with(vec![vec![1.0, 1.0]], &cfg2);
        assert_abs_diff_eq!(
            lyapunov(&state2, &[0.0, 0.0], &cfg2, &dg).unwrap(),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn contraction_factor_formula_and_regime() {
        assert_abs_diff_eq!(
            contraction_factor(1.0, 0.1, 0.5, 1.0).unwrap(),
            0.95,
            epsilon = 1e-15
        );
        // boundary stepsize allowed, degenerate factor 0
        assert_eq!(contraction_factor(1.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            contraction_factor(2.0, 1.0, 1.0, 1.0),
            Err(DiagnosticsError::RegimeViolation { .. })
        ));
    }

    #[test]
    fn contraction_factor_is_monotone() {
        let base = contraction_factor(1.0, 0.2, 0.5, 1.0).unwrap();
        for scale in [1.1, 1.5, 2.0] {
            assert!(contraction_factor(1.0 * scale, 0.2, 0.5, 1.0).unwrap() < base);
            assert!(contraction_factor(1.0, 0.2 * scale, 0.5, 1.0).unwrap() < base);
            assert!(contraction_factor(1.0, 0.2, (0.5 * scale).min(1.0), 1.0).unwrap() < base);
        }
    }

    #[test]
    fn best_cost_series_is_running_min() {
        assert_eq!(best_cost_series(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 1.0]);
        assert_eq!(best_cost_series(&[2.0, 2.0, 2.0]), vec![2.0; 3]);
        let empty: Vec<f64> = vec![];
        assert_eq!(best_cost_series(&empty), empty);
    }

    #[test]
    fn seed_mean_of_best_costs_matches_naive() {
        let runs = vec![
            vec![5.0, 3.0, 4.0, 1.0],
            vec![4.0, 4.5, 2.0, 2.0],
            vec![6.0, 2.0, 2.5, 0.5],
        ];
        let mean = mean_series(&runs);
        let best = best_cost_series(&mean);
        // naive: average first, then running min
        for t in 0..4 {
            let mut avg = 0.0;
            for r in &runs {
                avg += r[t] / 3.0;
            }
            let naive_best = (0..=t)
                .map(|s| {
                    let mut a = 0.0;
                    for r in &runs {
                        a += r[s] / 3.0;
                    }
                    a
                })
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(mean[t], avg, epsilon = 1e-15);
            assert_abs_diff_eq!(best[t], naive_best, epsilon = 1e-15);
        }
    }

    #[test]
    fn fit_rate_recovers_synthetic_decay_with_floor() {
        let series: Vec<f64> = (0..=200).map(|t| 0.5f64.powi(t) + 0.01).collect();
        let fit = fit_rate(&series, 0.2).unwrap();
        assert!(
            (fit.slope - 0.5f64.ln()).abs() < 0.05 * 0.5f64.ln().abs(),
            "slope {}",
            fit.slope
        );
        assert!((fit.floor - 0.01).abs() < 0.001, "floor {}", fit.floor);
        assert!(fit.pre_floor_r2 > 0.99);
    }

    #[test]
    fn fit_rate_recovers_pure_geometric_decay() {
        let series: Vec<f64> = (0..=200).map(|t| 0.9f64.powi(t)).collect();
        let fit = fit_rate(&series, 0.2).unwrap();
        assert!(
            (fit.slope - 0.9f64.ln()).abs() < 0.05 * 0.9f64.ln().abs(),
            "slope {}",
            fit.slope
        );
    }

    #[test]
    fn fit_rate_rejects_constant_and_short_series() {
        let constant = vec![1.0; 100];
        assert!(matches!(
            fit_rate(&constant, 0.2),
            Err(DiagnosticsError::DegenerateSeries)
        ));
        assert!(matches!(
            fit_rate(&[1.0; 10], 0.2),
            Err(DiagnosticsError::SeriesTooShort(10))
        ));
        let with_zero: Vec<f64> = (0..100).map(|t| if t == 50 { 0.0 } else { 1.0 }).collect();
        assert!(matches!(
            fit_rate(&with_zero, 0.2),
            Err(DiagnosticsError::DegenerateSeries)
        ));
    }

    #[test]
    fn reference_solution_for_symmetric_quadratics() {
        let objectives = vec![
            StochasticObjective::quadratic(vec![0.0], 1.0, 0.0, 10.0).unwrap(),
            StochasticObjective::quadratic(vec![2.0], 1.0, 0.0, 10.0).unwrap(),
        ];
        let partition = BlockPartition::trivial(1);
        let constraints = [BlockConstraint::Free];
        let sol = solve_reference(&objectives, &partition, &constraints, 10, 0).unwrap();
        assert_abs_diff_eq!(sol.x_star[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.f_star, 1.0, epsilon = 1e-15);
        assert!(sol.certified);
    }

    #[test]
    fn reference_solve_rejects_noisy_objectives() {
        let objectives = vec![StochasticObjective::quadratic(vec![0.0], 1.0, 0.5, 10.0).unwrap()];
        let partition = BlockPartition::trivial(1);
        assert!(matches!(
            solve_reference(&objectives, &partition, &[BlockConstraint::Free], 10, 0),
            Err(DiagnosticsError::NotDeterministic)
        ));
    }

    #[test]
    fn reference_solve_on_hinge_is_nonnegative_and_certifiable() {
        let ds = crate::dataset::gen_two_cluster_dataset(2, 8, 1, 10.0, 3).unwrap();
        let objectives = ds.hinge_objectives(10.0, 100.0).unwrap();
        let partition = BlockPartition::trivial(3);
        let sol =
            solve_reference(&objectives, &partition, &[BlockConstraint::Free], 20_000, 1).unwrap();
        assert!(sol.f_star >= 0.0);
        assert!(sol.certification_gap >= 0.0);
        // doubled budget never hurts the best value
        let sol_more =
            solve_reference(&objectives, &partition, &[BlockConstraint::Free], 40_000, 1).unwrap();
        assert!(sol_more.f_star <= sol.f_star + 1e-12);
    }

    #[test]
    fn quadratic_reference_with_constraints_uses_projected_path() {
        // optimum of (x-2)^2/2 over [0, 1] sits at the boundary
        let objectives =
            vec![StochasticObjective::quadratic(vec![2.0], 1.0, 0.0, 10.0).unwrap()];
        let partition = BlockPartition::trivial(1);
        let constraints = [BlockConstraint::boxed(vec![0.0], vec![1.0]).unwrap()];
        let sol = solve_reference(&objectives, &partition, &constraints, 5_000, 0).unwrap();
        assert_abs_diff_eq!(sol.x_star[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.f_star, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn trace_csv_schema() {
        let meta = TraceMeta {
            config_hash: "0".repeat(16),
            master_seed: 0,
            n_agents: 1,
            total_dim: 1,
            num_blocks: 1,
            horizon: 1,
            form: UpdateForm::Compact,
            min_stepsize: 0.1,
            max_stepsize: 0.1,
            min_update_prob: 1.0,
            contraction: Some(0.9),
            f_star: None,
        };
        let trace = Trace {
            meta,
            rows: vec![TraceRow {
                t: 0,
                cost_at_average: 2.5,
                best_cost: 2.5,
                consensus: vec![0.0],
                cons_max: 0.0,
                cons_mean: 0.0,
                lyapunov: None,
                awake: 0,
            }],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,f_avg,f_best,cons_max,cons_mean,V,awake\n0,2.5,2.5,0,0,,0\n");
    }
}
