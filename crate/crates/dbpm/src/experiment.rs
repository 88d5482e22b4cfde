//! Config-driven experiment runs.
//!
//! An [`ExperimentConfig`] describes one problem family (two-cluster hinge
//! classification or synthetic quadratics), the network, the stepsize law,
//! and the run grid (block counts times seeds). [`run_experiment`] executes
//! the grid, writing one trace CSV and one metadata JSON per run, a per-block
//! summary of the fitted decay, and per-block seed-averaged error curves with
//! both block-count normalizations. [`sweep_stepsize`] reruns a fixed-step
//! config under scaled stepsizes to expose how the error floor tracks them.
//!
//! All fields default to the 48-agent classification setup (50 features, 480
//! points, unit regularization, edge probability 0.5, wake probability 0.95,
//! Gaussian stepsizes with mean 0.005 and std 1e-4, block counts 1/2/5/10/25),
//! so an empty config reproduces that experiment end to end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{BlockError, BlockPartition};
use crate::dataset::{gen_two_cluster_dataset, Dataset, DatasetError};
use crate::diagnostics::{
    self, fit_rate, mean_series, DiagnosticsError, NullSink, RateFit, ReferenceSolution, Trace,
};
use crate::engine::{AlgoConfig, EngineError, Simulation, UpdateForm};
use crate::graph::{gen_connected_er, metropolis_weights, GraphError, WeightedDigraph};
use crate::objectives::{ObjectiveError, StochasticObjective};
use crate::prox::{BlockConstraint, DistanceGenerator};
use crate::rng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    HingeRidge,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeMode {
    /// Every agent uses `stepsize`.
    Fixed,
    /// Per-agent draws from a normal law, redrawn until positive and inside
    /// the `Q/m` regime.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Free,
    /// Per-block origin-centered balls of radius `ball_radius`.
    Ball,
}

/// Flat experiment description; see the module docs for the defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub n_agents: usize,
    /// Raw feature dimension; the classifier gets one extra offset
    /// coordinate, quadratics use it as the full dimension.
    pub dim: usize,
    pub total_samples: usize,
    /// Global regularization weight, split evenly across agents.
    pub lambda: f64,
    /// Edge probability of the random communication graph.
    pub er_p: f64,
    /// Block counts to run.
    pub blocks: Vec<usize>,
    pub stepsize_mode: StepsizeMode,
    pub stepsize: f64,
    pub stepsize_mean: f64,
    pub stepsize_std: f64,
    /// Per-round wake probability, shared by all agents.
    pub p_on: f64,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub form: UpdateForm,
    /// Distance between each cluster center and the origin.
    pub separation: f64,
    /// Radius of the ball the initial estimates are drawn from.
    pub init_radius: f64,
    /// Curvature of the quadratic problem (its strong-convexity modulus).
    pub curvature: f64,
    /// Gradient noise level of the quadratic problem.
    pub noise_std: f64,
    /// Quadratic targets are drawn uniformly from a ball of this radius.
    pub target_scale: f64,
    pub constraint: ConstraintKind,
    /// Constraint radius in ball mode; always the radius over which
    /// subgradient norm bounds are tracked.
    pub ball_radius: f64,
    /// Budget for the centralized reference solve (it runs twice this).
    pub fstar_iterations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::HingeRidge,
            n_agents: 48,
            dim: 50,
            total_samples: 480,
            lambda: 1.0,
            er_p: 0.5,
            blocks: vec![1, 2, 5, 10, 25],
            stepsize_mode: StepsizeMode::Gaussian,
            stepsize: 0.005,
            stepsize_mean: 0.005,
            stepsize_std: 1e-4,
            p_on: 0.95,
            horizon: 20_000,
            seeds: vec![0, 1, 2],
            output_dir: PathBuf::from("out"),
            form: UpdateForm::Compact,
            separation: 1.0,
            init_radius: 1.0,
            curvature: 1.0,
            noise_std: 0.0,
            target_scale: 1.0,
            constraint: ConstraintKind::Free,
            ball_radius: 100.0,
            fstar_iterations: 200_000,
        }
    }
}

/// Seed channels used when deriving per-seed sub-seeds.
mod channel {
    pub const DATASET: u64 = 41;
    pub const GRAPH: u64 = 42;
    pub const STEPSIZES: u64 = 43;
    pub const RUN: u64 = 44;
    pub const TARGETS: u64 = 45;
    pub const REFERENCE: u64 = 46;
}

/// Everything derived from one experiment seed that is shared across block
/// counts: data, objectives, graph, stepsizes, and the run master seed.
pub struct SeedInstance {
    pub seed: u64,
    pub run_master_seed: u64,
    pub dataset: Option<Dataset>,
    pub objectives: Vec<StochasticObjective>,
    pub graph: WeightedDigraph,
    pub stepsizes: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |msg: String| Err(ExperimentError::Config(msg));
        if self.n_agents == 0 {
            return fail("n_agents must be at least 1".into());
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if !(self.lambda > 0.0) {
            return fail(format!("lambda = {} must be positive", self.lambda));
        }
        if !(self.er_p > 0.0 && self.er_p <= 1.0) {
            return fail(format!("er_p = {} outside (0, 1]", self.er_p));
        }
        if !(self.p_on > 0.0 && self.p_on <= 1.0) {
            return fail(format!("p_on = {} outside (0, 1]", self.p_on));
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("need at least one seed".into());
        }
        if self.blocks.is_empty() {
            return fail("need at least one block count".into());
        }
        let dim = self.total_dim();
        for &b in &self.blocks {
            if b == 0 || b > dim {
                return fail(format!("block count {b} outside 1..={dim}"));
            }
        }
        match self.stepsize_mode {
            StepsizeMode::Fixed => {
                if !(self.stepsize > 0.0) {
                    return fail(format!("stepsize = {} must be positive", self.stepsize));
                }
            }
            StepsizeMode::Gaussian => {
                if !(self.stepsize_mean > 0.0) || self.stepsize_std < 0.0 {
                    return fail(format!(
                        "gaussian stepsizes need positive mean (got {}) and nonnegative std (got {})",
                        self.stepsize_mean, self.stepsize_std
                    ));
                }
            }
        }
        if matches!(self.problem, ProblemKind::HingeRidge) {
            if self.total_samples == 0
                || self.total_samples % self.n_agents != 0
                || self.total_samples % 2 != 0
            {
                return fail(format!(
                    "total_samples = {} must be positive and divisible by n_agents and 2",
                    self.total_samples
                ));
            }
        }
        if matches!(self.problem, ProblemKind::Quadratic) && self.noise_std < 0.0 {
            return fail(format!("noise_std = {} must be nonnegative", self.noise_std));
        }
        if !(self.curvature > 0.0) {
            return fail(format!("curvature = {} must be positive", self.curvature));
        }
        if !(self.ball_radius > 0.0) {
            return fail(format!("ball_radius = {} must be positive", self.ball_radius));
        }
        if self.init_radius < 0.0 {
            return fail(format!("init_radius = {} must be nonnegative", self.init_radius));
        }
        if self.fstar_iterations == 0 {
            return fail("fstar_iterations must be at least 1".into());
        }
        Ok(())
    }

    /// Decision-vector dimension: features plus offset for the classifier,
    /// `dim` as given for quadratics.
    pub fn total_dim(&self) -> usize {
        match self.problem {
            ProblemKind::HingeRidge => self.dim + 1,
            ProblemKind::Quadratic => self.dim,
        }
    }

    /// Common strong-convexity modulus of the per-agent objectives.
    pub fn strong_convexity(&self) -> f64 {
        match self.problem {
            ProblemKind::HingeRidge => self.lambda / self.n_agents as f64,
            ProblemKind::Quadratic => self.curvature,
        }
    }

    /// Largest stepsize the linear-rate regime allows.
    pub fn stepsize_limit(&self) -> f64 {
        DistanceGenerator::euclidean().quadratic_growth / self.strong_convexity()
    }

    pub fn constraints_for(&self, partition: &BlockPartition) -> Vec<BlockConstraint> {
        (0..partition.num_blocks())
            .map(|block| match self.constraint {
                ConstraintKind::Free => BlockConstraint::Free,
                ConstraintKind::Ball => BlockConstraint::ball(
                    vec![0.0; partition.size(block)],
                    self.ball_radius,
                )
                .expect("positive radius validated"),
            })
            .collect()
    }

    fn draw_stepsizes(&self, seed: u64) -> Vec<f64> {
        match self.stepsize_mode {
            StepsizeMode::Fixed => vec![self.stepsize; self.n_agents],
            StepsizeMode::Gaussian => {
                let limit = self.stepsize_limit();
                let mut stream = rng::stream(seed, channel::STEPSIZES, 0);
                (0..self.n_agents)
                    .map(|_| loop {
                        let draw =
                            self.stepsize_mean + self.stepsize_std * rng::standard_normal(&mut stream);
                        if draw > 0.0 && draw <= limit {
                            break draw;
                        }
                    })
                    .collect()
            }
        }
    }

    /// Builds the per-seed problem: dataset or targets, objectives, the
    /// connected weighted graph, and the stepsize draw.
    pub fn build_instance(&self, seed: u64) -> Result<SeedInstance, ExperimentError> {
        let (dataset, objectives) = match self.problem {
            ProblemKind::HingeRidge => {
                let dataset = gen_two_cluster_dataset(
                    self.dim,
                    self.total_samples,
                    self.n_agents,
                    self.separation,
                    rng::mix_seed(seed, channel::DATASET, 0),
                )?;
                let objectives = dataset.hinge_objectives(self.lambda, self.ball_radius)?;
                (Some(dataset), objectives)
            }
            ProblemKind::Quadratic => {
                let objectives = (0..self.n_agents)
                    .map(|i| {
                        let mut stream = rng::stream(seed, channel::TARGETS, i as u64);
                        let target = rng::uniform_ball(&mut stream, self.dim, self.target_scale);
                        StochasticObjective::quadratic(
                            target,
                            self.curvature,
                            self.noise_std,
                            self.ball_radius,
                        )
                    })
                    .collect::<Result<_, _>>()?;
                (None, objectives)
            }
        };
        let adjacency = gen_connected_er(
            self.n_agents,
            self.er_p,
            rng::mix_seed(seed, channel::GRAPH, 0),
        )?;
        let graph = metropolis_weights(&adjacency)?;
        Ok(SeedInstance {
            seed,
            run_master_seed: rng::mix_seed(seed, channel::RUN, 0),
            dataset,
            objectives,
            graph,
            stepsizes: self.draw_stepsizes(seed),
        })
    }

    /// Run parameters for one block count, using the instance's stepsizes
    /// and master seed.
    pub fn algo_config(
        &self,
        instance: &SeedInstance,
        block_count: usize,
    ) -> Result<AlgoConfig, ExperimentError> {
        let partition = BlockPartition::equal(self.total_dim(), block_count)?;
        let num_blocks = partition.num_blocks();
        Ok(AlgoConfig {
            stepsizes: instance.stepsizes.clone(),
            wake_probs: vec![self.p_on; self.n_agents],
            block_probs: vec![vec![1.0 / num_blocks as f64; num_blocks]; self.n_agents],
            partition,
            horizon: self.horizon,
            master_seed: instance.run_master_seed,
            form: self.form,
        })
    }

    /// Reference optimum for one instance. With free constraints it does not
    /// depend on the partition, so one solve per seed serves every block
    /// count.
    pub fn solve_reference_for(
        &self,
        instance: &SeedInstance,
        partition: &BlockPartition,
    ) -> Result<ReferenceSolution, ExperimentError> {
        let constraints = self.constraints_for(partition);
        Ok(diagnostics::solve_reference(
            &instance.objectives,
            partition,
            &constraints,
            self.fstar_iterations,
            rng::mix_seed(instance.seed, channel::REFERENCE, 0),
        )?)
    }
}

/// Runs one `(instance, block count)` pair and returns its trace.
pub fn run_single(
    cfg: &ExperimentConfig,
    instance: &SeedInstance,
    block_count: usize,
    reference: &ReferenceSolution,
) -> Result<Trace, ExperimentError> {
    let algo = cfg.algo_config(instance, block_count)?;
    let constraints = cfg.constraints_for(&algo.partition);
    let sim = Simulation::new(
        &algo,
        &instance.graph,
        &instance.objectives,
        &constraints,
        DistanceGenerator::euclidean(),
    )?;
    Ok(sim.run(
        cfg.init_radius,
        Some(&reference.x_star),
        Some(reference.f_star),
        &mut NullSink,
    )?)
}

/// Files produced for one `(block count, seed)` run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub block_count: usize,
    pub seed: u64,
    pub trace_path: PathBuf,
    pub meta_path: PathBuf,
}

/// Fitted decay of the seed-averaged error curve for one block count.
#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub block_count: usize,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    pub outputs: Vec<RunOutput>,
    pub per_block: Vec<BlockSummary>,
    pub summary_path: PathBuf,
    pub normalized_paths: Vec<PathBuf>,
    /// Reference cost per seed, in seed order.
    pub f_stars: Vec<f64>,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    experiment: &'a ExperimentConfig,
    seed: u64,
    block_count: usize,
    f_star: f64,
    f_star_certified: bool,
    f_star_certification_gap: f64,
    trace: &'a crate::diagnostics::TraceMeta,
}

/// Executes the full grid of the config and writes every artifact into
/// `cfg.output_dir`. Identical configs and seeds produce byte-identical
/// files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut outputs = Vec::new();
    // error curves per block count, one inner vec per seed
    let mut error_runs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cfg.blocks.len()];
    let mut f_stars = Vec::new();

    for &seed in &cfg.seeds {
        let instance = cfg.build_instance(seed)?;
        if let Some(dataset) = &instance.dataset {
            let mut buf = Vec::new();
            dataset.save_csv(&mut buf)?;
            fs::write(cfg.output_dir.join(format!("dataset_seed{seed}.csv")), buf)?;
        }
        let mut edge_list = Vec::new();
        instance.graph.write_edge_list(&mut edge_list)?;
        fs::write(cfg.output_dir.join(format!("graph_seed{seed}.txt")), edge_list)?;
        // free constraints share one reference across block counts
        let shared_reference = match cfg.constraint {
            ConstraintKind::Free => Some(cfg.solve_reference_for(
                &instance,
                &BlockPartition::trivial(cfg.total_dim()),
            )?),
            ConstraintKind::Ball => None,
        };
        if let Some(reference) = &shared_reference {
            f_stars.push(reference.f_star);
        }
        for (b_index, &block_count) in cfg.blocks.iter().enumerate() {
            let reference = match &shared_reference {
                Some(r) => r.clone(),
                None => cfg.solve_reference_for(
                    &instance,
                    &BlockPartition::equal(cfg.total_dim(), block_count)?,
                )?,
            };
            let trace = run_single(cfg, &instance, block_count, &reference)?;
            error_runs[b_index].push(trace.error_series(reference.f_star));

            let stem = format!("trace_B{block_count}_seed{seed}");
            let trace_path = cfg.output_dir.join(format!("{stem}.csv"));
            let meta_path = cfg.output_dir.join(format!("{stem}.meta.json"));
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            fs::write(&trace_path, buf)?;
            let metadata = RunMetadata {
                experiment: cfg,
                seed,
                block_count,
                f_star: reference.f_star,
                f_star_certified: reference.certified,
                f_star_certification_gap: reference.certification_gap,
                trace: &trace.meta,
            };
            fs::write(
                &meta_path,
                serde_json::to_string_pretty(&metadata).expect("metadata serializes"),
            )?;
            outputs.push(RunOutput {
                block_count,
                seed,
                trace_path,
                meta_path,
            });
        }
    }

    let mut per_block = Vec::new();
    let mut normalized_paths = Vec::new();
    for (b_index, &block_count) in cfg.blocks.iter().enumerate() {
        let mean_errors = mean_series(&error_runs[b_index]);
        per_block.push(BlockSummary {
            block_count,
            fit: fit_rate(&mean_errors, 0.2).ok(),
        });
        // both readings of "normalized by the block count": iteration axis
        // divided by B, and error divided by B
        let mut text = String::from("t,err,t_norm,err_norm\n");
        for (t, err) in mean_errors.iter().enumerate() {
            let _ = writeln!(
                text,
                "{t},{err},{},{}",
                t as f64 / block_count as f64,
                err / block_count as f64
            );
        }
        let path = cfg.output_dir.join(format!("normalized_B{block_count}.csv"));
        fs::write(&path, text)?;
        normalized_paths.push(path);
    }

    let summary_path = cfg.output_dir.join("summary.csv");
    let mut text = String::from("B,floor,slope,pre_floor_r2\n");
    for summary in &per_block {
        match &summary.fit {
            Some(fit) => {
                let _ = writeln!(
                    text,
                    "{},{},{},{}",
                    summary.block_count, fit.floor, fit.slope, fit.pre_floor_r2
                );
            }
            None => {
                let _ = writeln!(text, "{},nan,nan,nan", summary.block_count);
            }
        }
    }
    fs::write(&summary_path, text)?;

    Ok(ExperimentSummary {
        outputs,
        per_block,
        summary_path,
        normalized_paths,
        f_stars,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub factor: f64,
    pub floor: f64,
    pub slope: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub summary_path: PathBuf,
    /// Whether the floors are nondecreasing in the stepsize factor.
    pub monotone: bool,
}

/// Reruns a fixed-stepsize, single-block-count config with the stepsize
/// scaled by each factor and summarizes the fitted floors and slopes.
///
/// Factors that push the scaled stepsize past the `Q/m` regime limit fail
/// with the regime violation rather than running without a guarantee.
pub fn sweep_stepsize(
    cfg: &ExperimentConfig,
    factors: &[f64],
) -> Result<SweepSummary, ExperimentError> {
    cfg.validate()?;
    if cfg.stepsize_mode != StepsizeMode::Fixed {
        return Err(ExperimentError::Config(
            "stepsize sweep needs stepsize_mode = \"fixed\"".into(),
        ));
    }
    if cfg.blocks.len() != 1 {
        return Err(ExperimentError::Config(
            "stepsize sweep needs exactly one block count".into(),
        ));
    }
    if factors.is_empty() || factors.iter().any(|&f| !(f > 0.0)) {
        return Err(ExperimentError::Config(
            "factors must be a nonempty list of positive numbers".into(),
        ));
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let mut rows = Vec::new();
    for &factor in factors {
        let mut scaled = cfg.clone();
        scaled.stepsize = cfg.stepsize * factor;
        scaled.output_dir = cfg.output_dir.join(format!("factor_{factor}"));
        // surface the regime violation before spending a run on it
        diagnostics::contraction_factor(
            cfg.strong_convexity(),
            scaled.stepsize,
            cfg.p_on / cfg.blocks[0] as f64,
            DistanceGenerator::euclidean().quadratic_growth,
        )?;
        let summary = run_experiment(&scaled)?;
        let fit = summary.per_block[0]
            .fit
            .as_ref()
            .ok_or(DiagnosticsError::DegenerateSeries)?;
        rows.push(SweepRow {
            factor,
            floor: fit.floor,
            slope: fit.slope,
        });
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.factor.total_cmp(&b.factor));
    let monotone = sorted.windows(2).all(|w| w[0].floor <= w[1].floor);

    let summary_path = cfg.output_dir.join("sweep_summary.csv");
    let mut text = String::from("factor,floor,slope\n");
    for row in &rows {
        let _ = writeln!(text, "{},{},{}", row.factor, row.floor, row.slope);
    }
    fs::write(&summary_path, text)?;
    Ok(SweepSummary {
        rows,
        summary_path,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_quadratic_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemKind::Quadratic,
            n_agents: 3,
            dim: 4,
            blocks: vec![2],
            stepsize_mode: StepsizeMode::Fixed,
            stepsize: 0.05,
            p_on: 0.9,
            horizon: 60,
            seeds: vec![0, 1],
            output_dir: dir.to_path_buf(),
            er_p: 0.8,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_parse_from_empty_json() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg.n_agents, 48);
        assert_eq!(cfg.dim, 50);
        assert_eq!(cfg.total_samples, 480);
        assert_eq!(cfg.blocks, vec![1, 2, 5, 10, 25]);
        assert_eq!(cfg.stepsize_mode, StepsizeMode::Gaussian);
        assert_eq!(cfg.total_dim(), 51);
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        assert!(matches!(
            ExperimentConfig::from_json("{\"not_a_field\": 1}"),
            Err(ExperimentError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json("{\"lambda\": -1.0}"),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn gaussian_stepsizes_land_in_regime() {
        let cfg = ExperimentConfig::default();
        let instance = cfg.build_instance(0).unwrap();
        let limit = cfg.stepsize_limit();
        assert_eq!(instance.stepsizes.len(), 48);
        for &a in &instance.stepsizes {
            assert!(a > 0.0 && a <= limit);
            // draws stay near the mean
            assert!((a - 0.005).abs() < 0.001, "stepsize {a}");
        }
    }

    #[test]
    fn instance_is_deterministic_per_seed() {
        let cfg = ExperimentConfig {
            n_agents: 6,
            dim: 4,
            total_samples: 12,
            ..ExperimentConfig::default()
        };
        let a = cfg.build_instance(3).unwrap();
        let b = cfg.build_instance(3).unwrap();
        assert_eq!(a.stepsizes, b.stepsizes);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.run_master_seed, b.run_master_seed);
        let c = cfg.build_instance(4).unwrap();
        assert_ne!(a.run_master_seed, c.run_master_seed);
    }

    #[test]
    fn run_experiment_writes_the_advertised_files() {
        let dir = std::env::temp_dir().join(format!("dbpm_exp_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let cfg = tiny_quadratic_config(&dir);
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.outputs.len(), 2);
        assert!(dir.join("graph_seed0.txt").exists());
        for output in &summary.outputs {
            let text = fs::read_to_string(&output.trace_path).unwrap();
            assert!(text.starts_with("t,f_avg,f_best,cons_max,cons_mean,V,awake\n"));
            assert_eq!(text.lines().count(), cfg.horizon + 2);
            let meta: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(&output.meta_path).unwrap()).unwrap();
            assert_eq!(meta["block_count"], 2);
            assert!(meta["f_star"].is_number());
            assert!(meta["trace"]["contraction"].is_number());
        }
        assert!(summary.summary_path.exists());
        assert_eq!(summary.normalized_paths.len(), 1);
        let normalized = fs::read_to_string(&summary.normalized_paths[0]).unwrap();
        assert!(normalized.starts_with("t,err,t_norm,err_norm\n"));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn identical_configs_produce_byte_identical_outputs() {
        let dir_a = std::env::temp_dir().join(format!("dbpm_det_a_{}", std::process::id()));
        let dir_b = std::env::temp_dir().join(format!("dbpm_det_b_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
        let mut cfg_a = tiny_quadratic_config(&dir_a);
        cfg_a.horizon = 40;
        let mut cfg_b = cfg_a.clone();
        cfg_b.output_dir = dir_b.clone();
        let summary_a = run_experiment(&cfg_a).unwrap();
        let summary_b = run_experiment(&cfg_b).unwrap();
        for (a, b) in summary_a.outputs.iter().zip(&summary_b.outputs) {
            assert_eq!(
                fs::read(&a.trace_path).unwrap(),
                fs::read(&b.trace_path).unwrap()
            );
        }
        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
    }

    #[test]
    fn horizon_one_trace_has_two_rows() {
        let dir = std::env::temp_dir().join(format!("dbpm_h1_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let mut cfg = tiny_quadratic_config(&dir);
        cfg.horizon = 1;
        cfg.seeds = vec![0];
        let summary = run_experiment(&cfg).unwrap();
        let text = fs::read_to_string(&summary.outputs[0].trace_path).unwrap();
        assert_eq!(text.lines().count(), 3); // header + t=0 + t=1
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn sweep_requires_fixed_mode_and_single_block() {
        let dir = std::env::temp_dir().join(format!("dbpm_sw_cfg_{}", std::process::id()));
        let mut cfg = tiny_quadratic_config(&dir);
        cfg.stepsize_mode = StepsizeMode::Gaussian;
        assert!(matches!(
            sweep_stepsize(&cfg, &[1.0]),
            Err(ExperimentError::Config(_))
        ));
        cfg.stepsize_mode = StepsizeMode::Fixed;
        cfg.blocks = vec![1, 2];
        assert!(matches!(
            sweep_stepsize(&cfg, &[1.0]),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn sweep_surfaces_regime_violations() {
        let dir = std::env::temp_dir().join(format!("dbpm_sw_reg_{}", std::process::id()));
        let mut cfg = tiny_quadratic_config(&dir);
        // curvature 1 puts the regime limit at 1; factor 40 blows past it
        cfg.stepsize = 0.05;
        assert!(matches!(
            sweep_stepsize(&cfg, &[40.0]),
            Err(ExperimentError::Diagnostics(
                DiagnosticsError::RegimeViolation { .. }
            ))
        ));
    }
}
