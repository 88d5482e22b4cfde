//! Browser bindings for the block proximal simulator.
//!
//! Three operations back the demo page: [`network_json`] builds the gossip
//! topology for display, [`simulate`] runs one configuration and returns its
//! error and consensus curves, and [`sweep_blocks`] compares the cost-error
//! decay across block counts on a fixed problem instance. Everything speaks
//! JSON strings so the page needs no generated glue types; failures come
//! back as `{"error": "..."}` objects rather than exceptions.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::wasm_bindgen;

use dbpm::diagnostics::{fit_rate, mean_series, RateFit};
use dbpm::experiment::{run_single, ConstraintKind, ExperimentConfig, ProblemKind, SeedInstance, StepsizeMode};
use dbpm::objectives::ObjectiveKind;
use dbpm::prox::DistanceGenerator;
use dbpm::{gen_connected_er, metropolis_weights, validate_weights, BlockPartition, ReferenceSolution};

/// Hard caps keeping a single call responsive in the browser.
const MAX_AGENTS: usize = 128;
const MAX_DIM: usize = 256;
const MAX_HORIZON: usize = 100_000;
const MAX_CURVE_POINTS: usize = 1500;

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DemoRequest {
    problem: String,
    n_agents: usize,
    dim: usize,
    block_count: usize,
    stepsize: f64,
    p_on: f64,
    horizon: usize,
    seed: u64,
    er_p: f64,
    separation: f64,
    noise_std: f64,
    lambda: f64,
    samples_per_agent: usize,
}

impl Default for DemoRequest {
    fn default() -> Self {
        Self {
            problem: "quadratic".into(),
            n_agents: 10,
            dim: 10,
            block_count: 5,
            stepsize: 0.05,
            p_on: 0.95,
            horizon: 3000,
            seed: 0,
            er_p: 0.5,
            separation: 1.0,
            noise_std: 0.1,
            lambda: 1.0,
            samples_per_agent: 10,
        }
    }
}

impl DemoRequest {
    fn parse(json: &str) -> Result<Self, String> {
        let request: Self = serde_json::from_str(json).map_err(|e| e.to_string())?;
        if request.n_agents == 0 || request.n_agents > MAX_AGENTS {
            return Err(format!("n_agents must be in 1..={MAX_AGENTS}"));
        }
        if request.dim == 0 || request.dim > MAX_DIM {
            return Err(format!("dim must be in 1..={MAX_DIM}"));
        }
        if request.horizon == 0 || request.horizon > MAX_HORIZON {
            return Err(format!("horizon must be in 1..={MAX_HORIZON}"));
        }
        Ok(request)
    }

    fn experiment(&self, blocks: Vec<usize>) -> Result<ExperimentConfig, String> {
        let problem = match self.problem.as_str() {
            "quadratic" => ProblemKind::Quadratic,
            "hinge_ridge" => ProblemKind::HingeRidge,
            other => return Err(format!("unknown problem kind: {other}")),
        };
        // samples must split evenly between agents and the two clusters
        let per_agent = self.samples_per_agent.max(1);
        let total = match per_agent * self.n_agents {
            t if t % 2 == 0 => t,
            t => t + self.n_agents,
        };
        let cfg = ExperimentConfig {
            problem,
            n_agents: self.n_agents,
            dim: self.dim,
            total_samples: total,
            lambda: self.lambda,
            er_p: self.er_p,
            blocks,
            stepsize_mode: StepsizeMode::Fixed,
            stepsize: self.stepsize,
            p_on: self.p_on,
            horizon: self.horizon,
            seeds: vec![self.seed],
            separation: self.separation,
            noise_std: self.noise_std,
            constraint: ConstraintKind::Free,
            // the page waits on this synchronously, keep the solve modest
            fstar_iterations: 30_000,
            ..ExperimentConfig::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

/// Exact optimum for noisy quadratics (zero-mean gradient noise leaves the
/// cost untouched), reference solve for everything else.
fn demo_reference(
    cfg: &ExperimentConfig,
    instance: &SeedInstance,
) -> Result<ReferenceSolution, String> {
    let all_quadratic = instance
        .objectives
        .iter()
        .all(|o| matches!(o.kind(), ObjectiveKind::Quadratic { .. }));
    if all_quadratic {
        let dim = cfg.total_dim();
        let mut x_star = vec![0.0; dim];
        let mut total_curvature = 0.0;
        for obj in &instance.objectives {
            let ObjectiveKind::Quadratic {
                target, curvature, ..
            } = obj.kind()
            else {
                unreachable!()
            };
            for (x, t) in x_star.iter_mut().zip(target) {
                *x += curvature * t;
            }
            total_curvature += curvature;
        }
        x_star.iter_mut().for_each(|x| *x /= total_curvature);
        let f_star =
            dbpm::objectives::total_value(&instance.objectives, &x_star).map_err(|e| e.to_string())?;
        return Ok(ReferenceSolution {
            x_star,
            f_star,
            certified: true,
            certification_gap: 0.0,
        });
    }
    cfg.solve_reference_for(instance, &BlockPartition::trivial(cfg.total_dim()))
        .map_err(|e| e.to_string())
}

/// Thins a series to at most [`MAX_CURVE_POINTS`] samples, keeping the last
/// point.
fn decimate(series: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let stride = series.len().div_ceil(MAX_CURVE_POINTS).max(1);
    let mut ts = Vec::new();
    let mut values = Vec::new();
    for (t, &v) in series.iter().enumerate() {
        if t % stride == 0 || t == series.len() - 1 {
            ts.push(t);
            values.push(v);
        }
    }
    (ts, values)
}

fn error_json(message: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": message.to_string() }).to_string()
}

#[derive(Serialize)]
struct CurvePayload {
    block_count: usize,
    t: Vec<usize>,
    cost_error: Vec<f64>,
    fit: Option<RateFit>,
}

#[derive(Serialize)]
struct SimulatePayload {
    f_star: f64,
    f_star_certified: bool,
    contraction: Option<f64>,
    t: Vec<usize>,
    cost_error: Vec<f64>,
    cons_max: Vec<f64>,
    weighted_distance: Vec<Option<f64>>,
    fit: Option<RateFit>,
}

/// Runs one configuration and returns its cost-error curve (relative to the
/// certified reference), the max consensus error, and the weighted distance
/// to the optimum, decimated for plotting.
#[wasm_bindgen]
pub fn simulate(config_json: &str) -> String {
    let request = match DemoRequest::parse(config_json) {
        Ok(r) => r,
        Err(e) => return error_json(e),
    };
    let block_count = request.block_count.clamp(1, request.dim);
    let cfg = match request.experiment(vec![block_count]) {
        Ok(c) => c,
        Err(e) => return error_json(e),
    };
    let run = || -> Result<SimulatePayload, String> {
        let instance = cfg.build_instance(cfg.seeds[0]).map_err(|e| e.to_string())?;
        let reference = demo_reference(&cfg, &instance)?;
        let trace = run_single(&cfg, &instance, block_count, &reference).map_err(|e| e.to_string())?;
        let errors = trace.error_series(reference.f_star);
        let (t, cost_error) = decimate(&errors);
        let cons_max = t.iter().map(|&k| trace.rows[k].cons_max).collect();
        let weighted_distance = t.iter().map(|&k| trace.rows[k].lyapunov).collect();
        Ok(SimulatePayload {
            f_star: reference.f_star,
            f_star_certified: reference.certified,
            contraction: trace.meta.contraction,
            t,
            cost_error,
            cons_max,
            weighted_distance,
            fit: fit_rate(&errors, 0.2).ok(),
        })
    };
    match run() {
        Ok(payload) => serde_json::to_string(&payload).unwrap_or_else(error_json),
        Err(e) => error_json(e),
    }
}

/// Runs the same problem instance once per block count and returns one
/// cost-error curve each, for the decay-versus-block-count comparison.
#[wasm_bindgen]
pub fn sweep_blocks(config_json: &str, blocks_csv: &str) -> String {
    let request = match DemoRequest::parse(config_json) {
        Ok(r) => r,
        Err(e) => return error_json(e),
    };
    let blocks: Result<Vec<usize>, _> = blocks_csv
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect();
    let mut blocks = match blocks {
        Ok(b) if !b.is_empty() => b,
        _ => return error_json("blocks must be a comma-separated list of positive integers"),
    };
    for b in &mut blocks {
        *b = (*b).clamp(1, request.dim);
    }
    blocks.dedup();
    let cfg = match request.experiment(blocks.clone()) {
        Ok(c) => c,
        Err(e) => return error_json(e),
    };
    let run = || -> Result<Vec<CurvePayload>, String> {
        let instance = cfg.build_instance(cfg.seeds[0]).map_err(|e| e.to_string())?;
        let reference = demo_reference(&cfg, &instance)?;
        blocks
            .iter()
            .map(|&block_count| {
                let trace = run_single(&cfg, &instance, block_count, &reference)
                    .map_err(|e| e.to_string())?;
                let errors = trace.error_series(reference.f_star);
                let (t, cost_error) = decimate(&errors);
                Ok(CurvePayload {
                    block_count,
                    t,
                    cost_error,
                    fit: fit_rate(&errors, 0.2).ok(),
                })
            })
            .collect()
    };
    match run() {
        Ok(curves) => serde_json::to_string(&curves).unwrap_or_else(error_json),
        Err(e) => error_json(e),
    }
}

/// Builds the connected gossip graph with Metropolis-Hastings weights and
/// returns its edges for display.
#[wasm_bindgen]
pub fn network_json(n_agents: usize, er_p: f64, seed: u64) -> String {
    if n_agents == 0 || n_agents > MAX_AGENTS {
        return error_json(format!("n_agents must be in 1..={MAX_AGENTS}"));
    }
    let run = || -> Result<String, String> {
        let adjacency = gen_connected_er(n_agents, er_p, seed).map_err(|e| e.to_string())?;
        let graph = metropolis_weights(&adjacency).map_err(|e| e.to_string())?;
        let mut edges = Vec::new();
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                let w = graph.weight(i, j);
                if w > 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        let self_weights: Vec<f64> = (0..n_agents).map(|i| graph.weight(i, i)).collect();
        let violations = validate_weights(&graph);
        Ok(serde_json::json!({
            "n": n_agents,
            "edges": edges,
            "self_weights": self_weights,
            "eta": graph.eta(),
            "valid": violations.is_empty(),
            "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        })
        .to_string())
    };
    run().unwrap_or_else(error_json)
}
