//! Declarative experiment configurations, the master-seed schedule, and the
//! end-to-end reconstruction experiments with plot-ready output files.
//!
//! Every output file embeds the exact configuration it was produced from, and
//! identical configurations produce byte-identical files regardless of the
//! parallel schedule: all randomness flows through counter-derived streams
//! and results are assembled in a fixed order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_pinch_magnitudes, CouplingKind, IsolatedKind, Trajectory};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::measurement::MeasurementMatrix;
use crate::metrics::{contingency, mcc, Contingency};
use crate::recovery::{basis_pursuit, threshold_support, RecoveryConfig};
use crate::scalar::Real;
use crate::sysid::{
    linear_coefficient_truth, linear_features, mse, sparse_regression, DEFAULT_REGRESSION_SWEEPS,
};
use crate::topology::{critical_measurement_search, DEFAULT_MCC_TARGET};
use crate::{NetworkSystem64, Trajectory64};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Which branch of the edge probability `p = ln(N)/N * (1 -/+ epsilon)` a
/// scenario lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeSign {
    /// `p = ln(N)/N * (1 - epsilon)`
    Supercritical,
    /// `p = ln(N)/N * (1 + epsilon)`
    Connected,
}

/// One edge-probability scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimePoint {
    pub epsilon: f64,
    pub sign: RegimeSign,
}

impl RegimePoint {
    pub fn edge_prob(&self, n: usize) -> Result<f64> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon {} outside (0, 1)",
                self.epsilon
            )));
        }
        let base = (n as f64).ln() / n as f64;
        let p = match self.sign {
            RegimeSign::Supercritical => base * (1.0 - self.epsilon),
            RegimeSign::Connected => base * (1.0 + self.epsilon),
        };
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("edge probability {p} outside [0, 1]")));
        }
        Ok(p)
    }
}

/// Inclusive measurement grid `start, start+step, ..., <= stop`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PGrid {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl PGrid {
    pub fn expand(&self, n: usize) -> Result<Vec<usize>> {
        if self.start == 0 || self.step == 0 || self.start > self.stop {
            return Err(Error::Config(format!(
                "bad measurement grid {self:?}: need 1 <= start <= stop and step >= 1"
            )));
        }
        if self.stop >= n {
            return Err(Error::Config(format!(
                "grid stop {} must stay below N = {n}",
                self.stop
            )));
        }
        Ok((self.start..=self.stop).step_by(self.step).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Exp1,
    Exp2,
    Exp3,
    Custom,
}

/// Named size presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Desk-scale run that exercises the full pipeline quickly.
    Smoke,
    /// Full-size reproduction settings.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!(
                "unknown profile {other:?}; expected smoke or paper"
            ))),
        }
    }
}

/// Versioned experiment description. Unknown keys are rejected on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub n: usize,
    pub regimes: Vec<RegimePoint>,
    pub dynamics: IsolatedKind,
    pub coupling: CouplingKind,
    /// Pinch magnitudes are sampled uniformly from `[lo, hi)`.
    pub pinch_range: [f64; 2],
    /// Measurement grid for transition scans (exp1/exp2/custom).
    pub p_grid: Option<PGrid>,
    /// Fixed measurement count (exp3).
    pub p_fixed: Option<usize>,
    /// Support thresholds, evaluated on the same recovered vectors.
    pub taus: Vec<f64>,
    pub horizon: usize,
    pub master_seed: u64,
    /// Capacity constant for the Gaussian budget formula, echoed in reports.
    pub c1: f64,
    /// Scenario repetitions; scores are averaged before thresholding.
    pub repeats: usize,
    pub mcc_target: f64,
    /// Coefficient threshold of the sparse-regression stage (exp3).
    pub regression_threshold: f64,
    /// Iteration budget per recovery problem inside experiment pipelines.
    /// Transition scans only need failing instances to score badly, not to
    /// converge, so this sits far below the library default.
    #[serde(default = "default_solver_iterations")]
    pub solver_max_iterations: usize,
}

fn default_solver_iterations() -> usize {
    5000
}

impl ExperimentConfig {
    pub fn exp1(profile: Profile) -> Self {
        let (n, grid) = match profile {
            Profile::Smoke => (
                200,
                PGrid {
                    start: 2,
                    stop: 60,
                    step: 2,
                },
            ),
            Profile::Paper => (
                1000,
                PGrid {
                    start: 10,
                    stop: 160,
                    step: 10,
                },
            ),
        };
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            experiment: ExperimentKind::Exp1,
            n,
            regimes: vec![
                RegimePoint {
                    epsilon: 0.5,
                    sign: RegimeSign::Supercritical,
                },
                RegimePoint {
                    epsilon: 0.2,
                    sign: RegimeSign::Supercritical,
                },
            ],
            dynamics: IsolatedKind::Logistic,
            coupling: CouplingKind::Diffusive {
                sign: crate::dynamics::DiffusionSign::SelfMinusNeighbor,
            },
            pinch_range: [0.5, 1.0],
            p_grid: Some(grid),
            p_fixed: None,
            taus: vec![1e-9],
            horizon: 1,
            master_seed: 20240 + 1,
            c1: 1.0,
            repeats: 1,
            mcc_target: DEFAULT_MCC_TARGET,
            regression_threshold: 0.05,
            solver_max_iterations: default_solver_iterations(),
        }
    }

    pub fn exp2(profile: Profile) -> Self {
        let (n, grid, repeats) = match profile {
            Profile::Smoke => (
                200,
                PGrid {
                    start: 4,
                    stop: 100,
                    step: 4,
                },
                3,
            ),
            Profile::Paper => (
                1000,
                PGrid {
                    start: 10,
                    stop: 400,
                    step: 10,
                },
                1,
            ),
        };
        let mut regimes = Vec::new();
        for sign in [RegimeSign::Supercritical, RegimeSign::Connected] {
            for epsilon in [0.25, 0.5, 0.75] {
                regimes.push(RegimePoint { epsilon, sign });
            }
        }
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            experiment: ExperimentKind::Exp2,
            n,
            regimes,
            dynamics: IsolatedKind::Logistic,
            coupling: CouplingKind::Diffusive {
                sign: crate::dynamics::DiffusionSign::SelfMinusNeighbor,
            },
            pinch_range: [0.5, 1.0],
            p_grid: Some(grid),
            p_fixed: None,
            taus: vec![1e-9, 1e-10],
            horizon: 1,
            master_seed: 20240 + 2,
            c1: 1.0,
            repeats,
            mcc_target: DEFAULT_MCC_TARGET,
            regression_threshold: 0.05,
            solver_max_iterations: default_solver_iterations(),
        }
    }

    pub fn exp3(profile: Profile) -> Self {
        let _ = profile; // exp3 is desk-scale in both profiles
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            experiment: ExperimentKind::Exp3,
            n: 100,
            regimes: vec![RegimePoint {
                epsilon: 0.65,
                sign: RegimeSign::Supercritical,
            }],
            dynamics: IsolatedKind::Linear,
            coupling: CouplingKind::Diffusive {
                sign: crate::dynamics::DiffusionSign::NeighborMinusSelf,
            },
            pinch_range: [0.5, 1.0],
            p_grid: None,
            p_fixed: Some(60),
            taus: vec![1e-9],
            horizon: 7,
            master_seed: 20240 + 3,
            c1: 1.0,
            repeats: 1,
            mcc_target: DEFAULT_MCC_TARGET,
            regression_threshold: 0.05,
            solver_max_iterations: default_solver_iterations(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n < 2 {
            return Err(Error::Config("n must be >= 2".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("need at least one regime point".into()));
        }
        for r in &self.regimes {
            r.edge_prob(self.n)?;
        }
        if self.taus.is_empty() || self.taus.iter().any(|&t| t < 0.0) {
            return Err(Error::Config("taus must be nonempty and >= 0".into()));
        }
        let [lo, hi] = self.pinch_range;
        if !(lo < hi && lo > 0.0) {
            return Err(Error::Config(format!(
                "pinch range [{lo}, {hi}) must satisfy 0 < lo < hi"
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if let Some(g) = self.p_grid {
            g.expand(self.n)?;
        }
        if let Some(p) = self.p_fixed {
            if p == 0 || p >= self.n {
                return Err(Error::Config(format!(
                    "p_fixed {p} must satisfy 1 <= P < N"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.mcc_target) {
            return Err(Error::Config("mcc_target must lie in [0, 1]".into()));
        }
        if self.c1 <= 0.0 {
            return Err(Error::Config("c1 must be > 0".into()));
        }
        if self.regression_threshold < 0.0 {
            return Err(Error::Config("regression_threshold must be >= 0".into()));
        }
        if self.solver_max_iterations == 0 {
            return Err(Error::Config("solver_max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Seed schedule
// ---------------------------------------------------------------------------

/// Randomness purposes, each with its own counter-derived stream.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Graph = 0,
    Dynamics = 1,
    Pinch = 2,
    Matrix = 3,
}

/// Expands one master seed into independent streams via the cipher's stream
/// counter, so any (purpose, index) pair is reproducible in isolation.
#[derive(Clone, Copy, Debug)]
pub struct SeedSchedule {
    master: u64,
}

impl SeedSchedule {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn rng(&self, stream: Stream, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(((stream as u64) << 56) ^ index);
        rng
    }

    pub fn seed(&self, stream: Stream, index: u64) -> u64 {
        self.rng(stream, index).gen()
    }
}

// ---------------------------------------------------------------------------
// Pipeline pieces
// ---------------------------------------------------------------------------

struct Scenario {
    system: NetworkSystem64,
    trajs: Vec<Trajectory64>,
}

fn build_scenario(
    cfg: &ExperimentConfig,
    schedule: &SeedSchedule,
    scenario_id: u64,
    edge_prob: f64,
    horizon: usize,
) -> Result<Scenario> {
    let truth = Graph::erdos_renyi(cfg.n, edge_prob, schedule.seed(Stream::Graph, scenario_id))?;
    let mut dyn_rng = schedule.rng(Stream::Dynamics, scenario_id);
    let system = NetworkSystem64::sample(truth, cfg.dynamics, cfg.coupling, &mut dyn_rng);
    let mut pinch_rng = schedule.rng(Stream::Pinch, scenario_id);
    let eps = sample_pinch_magnitudes(cfg.n, cfg.pinch_range[0], cfg.pinch_range[1], &mut pinch_rng);
    let trajs = system.simulate_pinched_family(&eps, horizon)?;
    Ok(Scenario { system, trajs })
}

/// Recovers every one-step state through a fresh Gaussian matrix of `p` rows
/// and scores the concatenated supports against the exact ones, once per
/// threshold. Recoveries run in parallel; scores are accumulated in q order.
fn state_support_mcc(
    scenario: &Scenario,
    p: usize,
    matrix_seed: u64,
    taus: &[f64],
    rcfg: &RecoveryConfig<f64>,
) -> Result<Vec<f64>> {
    let n = scenario.trajs.len();
    let m = MeasurementMatrix::<f64>::gaussian(p, n, matrix_seed)?;
    let recovered: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|qi| {
            let y = m.measure(&scenario.trajs[qi].state(1).values)?;
            Ok(basis_pursuit(&m, &y, rcfg)?.x_hat)
        })
        .collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut counts = Contingency::default();
        for qi in 0..n {
            let truth = scenario.trajs[qi].state(1).support(0.0);
            let pred = threshold_support(&recovered[qi], tau);
            counts.add(contingency(&truth, &pred, n));
        }
        scores.push(mcc(counts));
    }
    Ok(scores)
}

fn scenario_index(regime_idx: usize, repeat: usize) -> u64 {
    (regime_idx as u64) << 20 | repeat as u64
}

fn matrix_index(regime_idx: usize, repeat: usize, p: usize) -> u64 {
    (regime_idx as u64) << 40 | (repeat as u64) << 20 | p as u64
}

// ---------------------------------------------------------------------------
// Transition scan (first experiment and the pc-search command)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct TransitionCurve {
    pub epsilon: f64,
    pub sign: RegimeSign,
    pub edge_prob: f64,
    pub tau: f64,
    /// `(P, MCC)` averaged over repeats.
    pub curve: Vec<(usize, f64)>,
    pub p_c: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Exp1Output {
    pub config: ExperimentConfig,
    pub scenarios: Vec<TransitionCurve>,
}

/// Scans the measurement grid for each regime point and locates the critical
/// measurement count at the first configured threshold.
pub fn run_experiment_1(cfg: &ExperimentConfig) -> Result<Exp1Output> {
    cfg.validate()?;
    let grid = cfg
        .p_grid
        .ok_or_else(|| Error::Config("transition scans need p_grid".into()))?
        .expand(cfg.n)?;
    let tau = cfg.taus[0];
    let schedule = SeedSchedule::new(cfg.master_seed);
    let mut rcfg = RecoveryConfig::<f64>::default().with_support_threshold(tau);
    rcfg.max_iterations = cfg.solver_max_iterations;

    let mut scenarios = Vec::new();
    for (ri, regime) in cfg.regimes.iter().enumerate() {
        let edge_prob = regime.edge_prob(cfg.n)?;
        let mut sums = vec![0.0; grid.len()];
        for repeat in 0..cfg.repeats {
            let scenario = build_scenario(
                cfg,
                &schedule,
                scenario_index(ri, repeat),
                edge_prob,
                1,
            )?;
            for (gi, &p) in grid.iter().enumerate() {
                let mseed = schedule.seed(Stream::Matrix, matrix_index(ri, repeat, p));
                let scores = state_support_mcc(&scenario, p, mseed, &[tau], &rcfg)?;
                sums[gi] += scores[0];
            }
        }
        let averaged: BTreeMap<usize, f64> = grid
            .iter()
            .zip(&sums)
            .map(|(&p, &s)| (p, s / cfg.repeats as f64))
            .collect();
        let search = critical_measurement_search(&grid, cfg.mcc_target, |p| Ok(averaged[&p]))?;
        scenarios.push(TransitionCurve {
            epsilon: regime.epsilon,
            sign: regime.sign,
            edge_prob,
            tau,
            curve: search.curve,
            p_c: search.p_c,
        });
    }
    Ok(Exp1Output {
        config: cfg.clone(),
        scenarios,
    })
}

// ---------------------------------------------------------------------------
// Density sweep (second experiment)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct DensitySweepRow {
    pub sign: RegimeSign,
    pub epsilon: f64,
    pub edge_prob: f64,
    pub tau: f64,
    pub p_c: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Exp2Output {
    pub config: ExperimentConfig,
    pub rows: Vec<DensitySweepRow>,
    /// Within each regime branch, the critical count never decreases with
    /// graph density.
    pub monotone_in_density: bool,
    /// At every regime point, the tighter threshold needs at least as many
    /// measurements as the looser one.
    pub tighter_tau_needs_more: bool,
}

/// Sweeps regime points and, per point, scans the grid upward until every
/// configured threshold has crossed the target (the scan stops early once
/// all thresholds succeeded; later grid points cannot change the smallest
/// crossing).
pub fn run_experiment_2(cfg: &ExperimentConfig) -> Result<Exp2Output> {
    cfg.validate()?;
    let grid = cfg
        .p_grid
        .ok_or_else(|| Error::Config("density sweeps need p_grid".into()))?
        .expand(cfg.n)?;
    let schedule = SeedSchedule::new(cfg.master_seed);
    let mut rcfg = RecoveryConfig::<f64>::default();
    rcfg.max_iterations = cfg.solver_max_iterations;

    let mut rows = Vec::new();
    for (ri, regime) in cfg.regimes.iter().enumerate() {
        let edge_prob = regime.edge_prob(cfg.n)?;
        let scenarios: Vec<Scenario> = (0..cfg.repeats)
            .map(|repeat| {
                build_scenario(cfg, &schedule, scenario_index(ri, repeat), edge_prob, 1)
            })
            .collect::<Result<_>>()?;
        let mut p_c: Vec<Option<usize>> = vec![None; cfg.taus.len()];
        for &p in &grid {
            let mut sums = vec![0.0; cfg.taus.len()];
            for (repeat, scenario) in scenarios.iter().enumerate() {
                let mseed = schedule.seed(Stream::Matrix, matrix_index(ri, repeat, p));
                let scores = state_support_mcc(scenario, p, mseed, &cfg.taus, &rcfg)?;
                for (k, s) in scores.iter().enumerate() {
                    sums[k] += s;
                }
            }
            for (k, sum) in sums.iter().enumerate() {
                if p_c[k].is_none() && sum / cfg.repeats as f64 > cfg.mcc_target {
                    p_c[k] = Some(p);
                }
            }
            if p_c.iter().all(Option::is_some) {
                break;
            }
        }
        for (k, &tau) in cfg.taus.iter().enumerate() {
            rows.push(DensitySweepRow {
                sign: regime.sign,
                epsilon: regime.epsilon,
                edge_prob,
                tau,
                p_c: p_c[k],
            });
        }
    }

    let monotone_in_density = density_monotonicity(&rows);
    let tighter_tau_needs_more = tau_robustness(&rows);
    Ok(Exp2Output {
        config: cfg.clone(),
        rows,
        monotone_in_density,
        tighter_tau_needs_more,
    })
}

/// Checks, per (branch, threshold), that sorting by edge probability leaves
/// the critical counts nondecreasing. Missing values count as infinite.
fn density_monotonicity(rows: &[DensitySweepRow]) -> bool {
    let mut groups: BTreeMap<(u8, u64), Vec<(f64, Option<usize>)>> = BTreeMap::new();
    for row in rows {
        let sign = match row.sign {
            RegimeSign::Supercritical => 0u8,
            RegimeSign::Connected => 1u8,
        };
        groups
            .entry((sign, row.tau.to_bits()))
            .or_default()
            .push((row.edge_prob, row.p_c));
    }
    for list in groups.values_mut() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        let vals: Vec<usize> = list
            .iter()
            .map(|&(_, pc)| pc.unwrap_or(usize::MAX))
            .collect();
        if !vals.windows(2).all(|w| w[0] <= w[1]) {
            return false;
        }
    }
    true
}

/// Checks `p_c(tau_tight) >= p_c(tau_loose)` at every regime point, for every
/// pair with `tau_tight < tau_loose`.
fn tau_robustness(rows: &[DensitySweepRow]) -> bool {
    let mut by_point: BTreeMap<(u8, u64), Vec<(f64, Option<usize>)>> = BTreeMap::new();
    for row in rows {
        let sign = match row.sign {
            RegimeSign::Supercritical => 0u8,
            RegimeSign::Connected => 1u8,
        };
        by_point
            .entry((sign, row.epsilon.to_bits()))
            .or_default()
            .push((row.tau, row.p_c));
    }
    for list in by_point.values() {
        for (tau_a, pc_a) in list {
            for (tau_b, pc_b) in list {
                if tau_a < tau_b {
                    let a = pc_a.map_or(u64::MAX, |v| v as u64);
                    let b = pc_b.map_or(u64::MAX, |v| v as u64);
                    if a < b {
                        return false;
                    }
                }
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Full reconstruction over time (third experiment)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct Exp3Output {
    pub config: ExperimentConfig,
    pub measurements: usize,
    /// `(T, cumulative MCC over t <= T)`.
    pub mcc_curve: Vec<(usize, f64)>,
    /// `(T, coefficient MSE of the model fitted from states up to T)`.
    pub mse_curve: Vec<(usize, f64)>,
    /// Identified coefficient matrices per horizon, row-major `N x (N+1)`.
    pub coefficients: Vec<Vec<Vec<f64>>>,
    /// True coefficient matrix over the same library.
    pub coefficient_truth: Vec<Vec<f64>>,
}

/// Recovers whole trajectories through one fixed Gaussian matrix, scores the
/// cumulative support agreement per horizon, and identifies the governing
/// linear model from the recovered states.
pub fn run_experiment_3(cfg: &ExperimentConfig) -> Result<Exp3Output> {
    cfg.validate()?;
    let p = cfg
        .p_fixed
        .ok_or_else(|| Error::Config("full reconstruction needs p_fixed".into()))?;
    let regime = cfg.regimes[0];
    let edge_prob = regime.edge_prob(cfg.n)?;
    let tau = cfg.taus[0];
    let schedule = SeedSchedule::new(cfg.master_seed);
    let mut rcfg = RecoveryConfig::<f64>::default().with_support_threshold(tau);
    rcfg.max_iterations = cfg.solver_max_iterations;
    let t_max = cfg.horizon;

    let scenario = build_scenario(cfg, &schedule, scenario_index(0, 0), edge_prob, t_max)?;
    let n = cfg.n;
    let m = MeasurementMatrix::<f64>::gaussian(p, n, schedule.seed(Stream::Matrix, 0))?;

    // Recover every (q, t) record in parallel, ordered q-major.
    let jobs: Vec<(usize, usize)> = (1..=n)
        .flat_map(|q| (1..=t_max).map(move |t| (q, t)))
        .collect();
    let recovered: Vec<DVector<f64>> = jobs
        .par_iter()
        .map(|&(q, t)| {
            let y = m.measure(&scenario.trajs[q - 1].state(t).values)?;
            Ok(basis_pursuit(&m, &y, &rcfg)?.x_hat)
        })
        .collect::<Result<_>>()?;
    let mut rec_map: BTreeMap<(usize, usize), DVector<f64>> = BTreeMap::new();
    for (k, &(q, t)) in jobs.iter().enumerate() {
        rec_map.insert((q, t), recovered[k].clone());
    }

    // Reconstructed trajectories: the pinch state is the experimenter's own
    // input, later states come from recovery.
    let rec_trajs: Vec<Trajectory<f64>> = (1..=n)
        .map(|q| {
            let mut states = vec![scenario.trajs[q - 1].state(0).clone()];
            for t in 1..=t_max {
                states.push(crate::dynamics::StateVector {
                    values: rec_map[&(q, t)].clone(),
                    pinch_index: Some(q),
                    time: t,
                });
            }
            Trajectory {
                states,
                pinch_index: q,
                pinch_magnitude: scenario.trajs[q - 1].pinch_magnitude,
            }
        })
        .collect();

    let truth_coeffs = linear_coefficient_truth(&scenario.system)?;
    let truth_flat: Vec<f64> = truth_coeffs.iter().copied().collect();

    let mut mcc_curve = Vec::new();
    let mut mse_curve = Vec::new();
    let mut coefficients = Vec::new();
    let mut counts = Contingency::default();
    for horizon in 1..=t_max {
        // Cumulative support agreement accumulates one time slice per step.
        for q in 1..=n {
            let truth = scenario.trajs[q - 1].state(horizon).support(0.0);
            let pred = threshold_support(&rec_map[&(q, horizon)], tau);
            counts.add(contingency(&truth, &pred, n));
        }
        mcc_curve.push((horizon, mcc(counts)));

        let (features, targets) = linear_features(&rec_trajs, horizon)?;
        let fit = sparse_regression(
            &features,
            &targets,
            cfg.regression_threshold,
            DEFAULT_REGRESSION_SWEEPS,
        )?;
        let est_flat: Vec<f64> = fit.coefficients.iter().copied().collect();
        mse_curve.push((horizon, mse(&truth_flat, &est_flat)?));
        coefficients.push(matrix_rows(&fit.coefficients));
    }

    Ok(Exp3Output {
        config: cfg.clone(),
        measurements: p,
        mcc_curve,
        mse_curve,
        coefficients,
        coefficient_truth: matrix_rows(&truth_coeffs),
    })
}

fn matrix_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| m[(i, j)].to_f64().unwrap_or(f64::NAN))
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

fn fmt_opt(p: Option<usize>) -> String {
    p.map_or_else(|| "not_found".to_string(), |v| v.to_string())
}

/// Writes per-scenario `(P, MCC)` CSVs and a summary JSON; returns the paths.
pub fn write_experiment_1(out: &Exp1Output, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let echo = out.config.echo();
    for (idx, sc) in out.scenarios.iter().enumerate() {
        let mut csv = String::new();
        let _ = writeln!(csv, "# config: {echo}");
        let _ = writeln!(
            csv,
            "# scenario {idx}: sign={:?} epsilon={} edge_prob={} tau={} p_c={}",
            sc.sign,
            sc.epsilon,
            sc.edge_prob,
            sc.tau,
            fmt_opt(sc.p_c)
        );
        let _ = writeln!(csv, "P,mcc");
        for (p, m) in &sc.curve {
            let _ = writeln!(csv, "{p},{m}");
        }
        write_file(dir, &format!("exp1_curve_s{idx}.csv"), &csv, &mut written)?;
    }
    let json = serde_json::to_string_pretty(out).expect("output serializes");
    write_file(dir, "exp1_summary.json", &json, &mut written)?;
    Ok(written)
}

/// Writes the `(regime, tau, P_c)` table and a summary JSON; returns the
/// paths.
pub fn write_experiment_2(out: &Exp2Output, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut csv = String::new();
    let _ = writeln!(csv, "# config: {}", out.config.echo());
    let _ = writeln!(
        csv,
        "# monotone_in_density={} tighter_tau_needs_more={}",
        out.monotone_in_density, out.tighter_tau_needs_more
    );
    let _ = writeln!(csv, "sign,epsilon,edge_prob,tau,p_c");
    for r in &out.rows {
        let sign = match r.sign {
            RegimeSign::Supercritical => "supercritical",
            RegimeSign::Connected => "connected",
        };
        let _ = writeln!(
            csv,
            "{sign},{},{},{},{}",
            r.epsilon,
            r.edge_prob,
            r.tau,
            fmt_opt(r.p_c)
        );
    }
    write_file(dir, "exp2_pc.csv", &csv, &mut written)?;
    let json = serde_json::to_string_pretty(out).expect("output serializes");
    write_file(dir, "exp2_summary.json", &json, &mut written)?;
    Ok(written)
}

/// Writes the cumulative-MCC curve, the MSE table, per-horizon coefficient
/// heatmap CSVs, and a summary JSON; returns the paths.
pub fn write_experiment_3(out: &Exp3Output, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let echo = out.config.echo();

    let mut csv = String::new();
    let _ = writeln!(csv, "# config: {echo}");
    let _ = writeln!(csv, "T,cumulative_mcc");
    for (t, m) in &out.mcc_curve {
        let _ = writeln!(csv, "{t},{m}");
    }
    write_file(dir, "exp3_cumulative_mcc.csv", &csv, &mut written)?;

    let mut csv = String::new();
    let _ = writeln!(csv, "# config: {echo}");
    let _ = writeln!(csv, "T,coefficient_mse");
    for (t, m) in &out.mse_curve {
        let _ = writeln!(csv, "{t},{m}");
    }
    write_file(dir, "exp3_mse.csv", &csv, &mut written)?;

    let write_matrix = |rows: &Vec<Vec<f64>>, name: &str, written: &mut Vec<PathBuf>| {
        let mut csv = String::new();
        let _ = writeln!(csv, "# config: {echo}");
        for row in rows {
            let line = row
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(csv, "{line}");
        }
        write_file(dir, name, &csv, written)
    };
    for (k, rows) in out.coefficients.iter().enumerate() {
        write_matrix(rows, &format!("exp3_coefficients_T{}.csv", k + 1), &mut written)?;
    }
    write_matrix(&out.coefficient_truth, "exp3_coefficients_truth.csv", &mut written)?;

    let json = serde_json::to_string_pretty(out).expect("output serializes");
    write_file(dir, "exp3_summary.json", &json, &mut written)?;
    Ok(written)
}

/// Runs the configured experiment and writes its outputs under `dir`.
pub fn run_and_write(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    match cfg.experiment {
        ExperimentKind::Exp1 | ExperimentKind::Custom => {
            write_experiment_1(&run_experiment_1(cfg)?, dir)
        }
        ExperimentKind::Exp2 => write_experiment_2(&run_experiment_2(cfg)?, dir),
        ExperimentKind::Exp3 => write_experiment_3(&run_experiment_3(cfg)?, dir),
    }
}

// ---------------------------------------------------------------------------
// Full-support reconstruction helpers shared with the CLI
// ---------------------------------------------------------------------------

/// One-shot topology reconstruction at a fixed measurement count; used by the
/// `topology` pipeline path and the tests.
pub fn reconstruct_at(
    scenario_truth: &Graph,
    trajs: &[Trajectory64],
    p: usize,
    matrix_seed: u64,
    tau: f64,
) -> Result<(Graph, f64)> {
    let n = trajs.len();
    let m = MeasurementMatrix::<f64>::gaussian(p, n, matrix_seed)?;
    let rcfg = RecoveryConfig::<f64>::default().with_support_threshold(tau);
    let supports: Vec<BTreeSet<usize>> = (0..n)
        .into_par_iter()
        .map(|qi| {
            let y = m.measure(&trajs[qi].state(1).values)?;
            Ok(basis_pursuit(&m, &y, &rcfg)?.support)
        })
        .collect::<Result<_>>()?;
    let rebuilt = crate::topology::reconstruct_topology(&supports)?;
    let score = crate::topology::adjacency_mcc(scenario_truth, &rebuilt)?;
    Ok((rebuilt, score))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_exp1_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::exp1(Profile::Smoke);
        cfg.n = 40;
        cfg.regimes = vec![RegimePoint {
            epsilon: 0.5,
            sign: RegimeSign::Supercritical,
        }];
        cfg.p_grid = Some(PGrid {
            start: 4,
            stop: 24,
            step: 4,
        });
        cfg
    }

    #[test]
    fn config_roundtrip_and_unknown_key_rejection() {
        let cfg = ExperimentConfig::exp1(Profile::Smoke);
        let json = cfg.to_json();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);

        let mut broken: serde_json::Value = serde_json::from_str(&json).unwrap();
        broken["surprise"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json(&broken.to_string()).is_err());

        broken = serde_json::from_str(&json).unwrap();
        broken["schema_version"] = serde_json::json!(99);
        assert!(ExperimentConfig::from_json(&broken.to_string()).is_err());
    }

    #[test]
    fn regime_edge_probabilities() {
        let n = 1000;
        let base = (n as f64).ln() / n as f64;
        let sup = RegimePoint {
            epsilon: 0.5,
            sign: RegimeSign::Supercritical,
        };
        let con = RegimePoint {
            epsilon: 0.5,
            sign: RegimeSign::Connected,
        };
        approx::assert_relative_eq!(sup.edge_prob(n).unwrap(), base * 0.5);
        approx::assert_relative_eq!(con.edge_prob(n).unwrap(), base * 1.5);
        assert!(RegimePoint {
            epsilon: 1.5,
            sign: RegimeSign::Connected
        }
        .edge_prob(n)
        .is_err());
    }

    #[test]
    fn seed_streams_are_independent_and_reproducible() {
        let s = SeedSchedule::new(42);
        assert_eq!(s.seed(Stream::Graph, 0), s.seed(Stream::Graph, 0));
        assert_ne!(s.seed(Stream::Graph, 0), s.seed(Stream::Graph, 1));
        assert_ne!(s.seed(Stream::Graph, 0), s.seed(Stream::Matrix, 0));
        assert_ne!(
            SeedSchedule::new(1).seed(Stream::Pinch, 7),
            SeedSchedule::new(2).seed(Stream::Pinch, 7)
        );
    }

    #[test]
    fn grid_expansion_respects_bounds() {
        let g = PGrid {
            start: 2,
            stop: 10,
            step: 4,
        };
        assert_eq!(g.expand(20).unwrap(), vec![2, 6, 10]);
        assert!(g.expand(10).is_err());
        assert!(PGrid {
            start: 0,
            stop: 10,
            step: 1
        }
        .expand(20)
        .is_err());
    }

    #[test]
    fn tiny_transition_scan_finds_the_plateau() {
        let cfg = tiny_exp1_config();
        let out = run_experiment_1(&cfg).unwrap();
        let sc = &out.scenarios[0];
        let p_c = sc.p_c.expect("transition should occur within the grid");
        // Every grid point at or beyond the transition scores exactly 1.
        for &(p, m) in sc.curve.iter().filter(|&&(p, _)| p >= p_c) {
            assert_eq!(m, 1.0, "P={p}");
        }
    }

    #[test]
    fn outputs_are_deterministic_across_runs_and_pools() {
        let cfg = tiny_exp1_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let files_a = run_and_write(&cfg, dir_a.path()).unwrap();

        // Second run inside a single-thread pool: same bytes.
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let files_b = pool.install(|| run_and_write(&cfg, dir_b.path()).unwrap());
        assert_eq!(files_a.len(), files_b.len());
        for (a, b) in files_a.iter().zip(&files_b) {
            assert_eq!(a.file_name(), b.file_name());
            assert_eq!(
                std::fs::read(a).unwrap(),
                std::fs::read(b).unwrap(),
                "{a:?} differs"
            );
        }
    }

    #[test]
    fn monotonicity_and_robustness_checks() {
        let rows = vec![
            DensitySweepRow {
                sign: RegimeSign::Supercritical,
                epsilon: 0.75,
                edge_prob: 0.01,
                tau: 1e-9,
                p_c: Some(10),
            },
            DensitySweepRow {
                sign: RegimeSign::Supercritical,
                epsilon: 0.25,
                edge_prob: 0.03,
                tau: 1e-9,
                p_c: Some(20),
            },
        ];
        assert!(density_monotonicity(&rows));
        let mut bad = rows.clone();
        bad[1].p_c = Some(5);
        assert!(!density_monotonicity(&bad));

        let pair = vec![
            DensitySweepRow {
                sign: RegimeSign::Connected,
                epsilon: 0.5,
                edge_prob: 0.02,
                tau: 1e-9,
                p_c: Some(12),
            },
            DensitySweepRow {
                sign: RegimeSign::Connected,
                epsilon: 0.5,
                edge_prob: 0.02,
                tau: 1e-10,
                p_c: Some(16),
            },
        ];
        assert!(tau_robustness(&pair));
        let mut bad = pair.clone();
        bad[1].p_c = Some(8);
        assert!(!tau_robustness(&bad));
    }
}
