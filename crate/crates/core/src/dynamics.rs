//! Discrete-time evolution of the networked system
//! `x_i(t+1) = f_i(x_i(t)) + sum_j A[i][j] h_ij(x_i(t), x_j(t))`
//! from pinched initial conditions (a single nonzero pulse at one vertex).
//!
//! The built-in families keep the zero vector a resting state: every isolated
//! map satisfies `f_i(0) = 0`, and every coupling term satisfies
//! `h_ij(0, 0) = 0` with `h_ij(0, v) != 0` for small `v != 0` (the latter is
//! enforced by requiring a strictly positive weight on every edge).

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::{real, Real};

/// Rates used by the reference experiments for both map families.
pub const RATE_CHOICES: [f64; 4] = [1.2, 2.6, 3.0, 3.8];

/// Built-in isolated (per-node) map families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IsolatedKind {
    /// `f(x) = r * x * (1 - x)`
    Logistic,
    /// `f(x) = r * x`
    Linear,
}

/// Orientation of the diffusive coupling difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionSign {
    /// `h(x_i, x_j) = a * (x_i - x_j)`
    SelfMinusNeighbor,
    /// `h(x_i, x_j) = a * (x_j - x_i)`
    NeighborMinusSelf,
}

/// Built-in coupling families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CouplingKind {
    Diffusive { sign: DiffusionSign },
    /// `h(x_i, x_j) = a * sin(x_j - x_i)`
    Sine,
}

/// User-supplied isolated map. Implementors declare that `eval(0) = 0`.
pub trait IsolatedMap<T: Real>: Send + Sync {
    fn eval(&self, x: T) -> T;
}

/// User-supplied coupling term. Implementors declare that `eval(0, 0) = 0`
/// and `eval(0, v) != 0` for small nonzero `v`.
pub trait CouplingMap<T: Real>: Send + Sync {
    fn eval(&self, x_self: T, x_neighbor: T) -> T;
}

#[derive(Clone)]
enum Isolated<T: Real> {
    Builtin { kind: IsolatedKind, rates: Vec<T> },
    Custom(Vec<Arc<dyn IsolatedMap<T>>>),
}

#[derive(Clone)]
enum Coupling<T: Real> {
    Builtin {
        kind: CouplingKind,
        /// Dense weight matrix; only entries on edges are ever read.
        weights: DMatrix<T>,
        symmetric: bool,
    },
    Custom(Arc<dyn CouplingMap<T>>),
}

/// A length-N state with optional provenance (which vertex was pinched, at
/// what time step).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T: Real> {
    pub values: DVector<T>,
    pub pinch_index: Option<usize>,
    pub time: usize,
}

impl<T: Real> StateVector<T> {
    /// 1-based support `{ i : |values[i]| > tau }`; `tau = 0` gives the exact
    /// support.
    pub fn support(&self, tau: T) -> BTreeSet<usize> {
        support_of(&self.values, tau)
    }
}

/// 1-based support of a vector under a strict threshold.
pub fn support_of<T: Real>(values: &DVector<T>, tau: T) -> BTreeSet<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > tau)
        .map(|(i, _)| i + 1)
        .collect()
}

/// States of one pinched run, indexed `t = 0..=horizon`.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub states: Vec<StateVector<T>>,
    pub pinch_index: usize,
    pub pinch_magnitude: T,
}

impl<T: Real> Trajectory<T> {
    /// State at time `t` (0 is the pinched initial condition).
    pub fn state(&self, t: usize) -> &StateVector<T> {
        &self.states[t]
    }

    /// Number of evolution steps taken (`states.len() - 1`).
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

/// Graph plus per-node isolated maps and per-edge coupling terms.
#[derive(Clone)]
pub struct NetworkSystem<T: Real> {
    graph: Graph,
    isolated: Isolated<T>,
    coupling: Coupling<T>,
}

impl<T: Real> NetworkSystem<T> {
    /// Builds a system from built-in families. `rates` has one entry per node;
    /// `weights[(i-1, j-1)]` is the coupling weight on edge `(i <- j)` and must
    /// be strictly positive wherever an edge exists.
    pub fn builtin(
        graph: Graph,
        isolated: IsolatedKind,
        rates: Vec<T>,
        coupling: CouplingKind,
        weights: DMatrix<T>,
        symmetric_weights: bool,
    ) -> Result<Self> {
        let n = graph.n();
        if rates.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} rates for a graph on {n} vertices",
                rates.len()
            )));
        }
        if weights.nrows() != n || weights.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} weight matrix for a graph on {n} vertices",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 1..=n {
            for &j in graph.in_neighbors(i) {
                if weights[(i - 1, j as usize - 1)] <= T::zero() {
                    return Err(Error::InvalidParameter(format!(
                        "coupling weight on edge ({i} <- {j}) must be > 0"
                    )));
                }
            }
        }
        Ok(Self {
            graph,
            isolated: Isolated::Builtin {
                kind: isolated,
                rates,
            },
            coupling: Coupling::Builtin {
                kind: coupling,
                weights,
                symmetric: symmetric_weights,
            },
        })
    }

    /// Builds a system from user-supplied maps. The maps self-declare the
    /// resting-state contract; [`NetworkSystem::validate`] spot-checks it.
    pub fn custom(
        graph: Graph,
        isolated: Vec<Arc<dyn IsolatedMap<T>>>,
        coupling: Arc<dyn CouplingMap<T>>,
    ) -> Result<Self> {
        if isolated.len() != graph.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} isolated maps for a graph on {} vertices",
                isolated.len(),
                graph.n()
            )));
        }
        Ok(Self {
            graph,
            isolated: Isolated::Custom(isolated),
            coupling: Coupling::Custom(coupling),
        })
    }

    /// Samples a system the way the reference experiments do: rates drawn
    /// uniformly from [`RATE_CHOICES`], a symmetric weight matrix with
    /// upper-triangular entries uniform in `[0, 1)` (exact zeros resampled so
    /// every edge weight is strictly positive).
    pub fn sample<R: Rng>(
        graph: Graph,
        isolated: IsolatedKind,
        coupling: CouplingKind,
        rng: &mut R,
    ) -> Self {
        let n = graph.n();
        let rates: Vec<T> = (0..n)
            .map(|_| real(RATE_CHOICES[rng.gen_range(0..RATE_CHOICES.len())]))
            .collect();
        let mut weights = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let mut w: f64 = rng.gen();
                while w == 0.0 {
                    w = rng.gen();
                }
                weights[(i, j)] = real(w);
                weights[(j, i)] = real(w);
            }
        }
        Self::builtin(graph, isolated, rates, coupling, weights, true)
            .expect("sampled weights are positive on all edges")
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Built-in parameters, when the system uses built-in families:
    /// `(isolated kind, rates, coupling kind, weights, symmetric flag)`.
    pub fn builtin_params(&self) -> Option<(IsolatedKind, &[T], CouplingKind, &DMatrix<T>, bool)> {
        match (&self.isolated, &self.coupling) {
            (
                Isolated::Builtin { kind, rates },
                Coupling::Builtin {
                    kind: ckind,
                    weights,
                    symmetric,
                },
            ) => Some((*kind, rates, *ckind, weights, *symmetric)),
            _ => None,
        }
    }

    fn eval_isolated(&self, i: usize, x: T) -> T {
        match &self.isolated {
            Isolated::Builtin { kind, rates } => {
                let r = rates[i - 1];
                match kind {
                    IsolatedKind::Logistic => r * x * (T::one() - x),
                    IsolatedKind::Linear => r * x,
                }
            }
            Isolated::Custom(maps) => maps[i - 1].eval(x),
        }
    }

    fn eval_coupling(&self, i: usize, j: usize, xi: T, xj: T) -> T {
        match &self.coupling {
            Coupling::Builtin { kind, weights, .. } => {
                let a = weights[(i - 1, j - 1)];
                match kind {
                    CouplingKind::Diffusive {
                        sign: DiffusionSign::SelfMinusNeighbor,
                    } => a * (xi - xj),
                    CouplingKind::Diffusive {
                        sign: DiffusionSign::NeighborMinusSelf,
                    } => a * (xj - xi),
                    CouplingKind::Sine => a * (xj - xi).sin(),
                }
            }
            Coupling::Custom(map) => map.eval(xi, xj),
        }
    }

    /// One evolution step.
    pub fn step(&self, x: &StateVector<T>) -> StateVector<T> {
        let n = self.n();
        assert_eq!(x.values.len(), n, "state length must match graph size");
        let mut next = DVector::zeros(n);
        for i in 1..=n {
            let xi = x.values[i - 1];
            let mut acc = self.eval_isolated(i, xi);
            for &j in self.graph.in_neighbors(i) {
                let j = j as usize;
                acc += self.eval_coupling(i, j, xi, x.values[j - 1]);
            }
            next[i - 1] = acc;
        }
        StateVector {
            values: next,
            pinch_index: x.pinch_index,
            time: x.time + 1,
        }
    }

    /// Evolves the pinched initial condition at `q` for `horizon` steps.
    pub fn simulate_pinched(&self, q: usize, eps: T, horizon: usize) -> Result<Trajectory<T>> {
        let mut states = Vec::with_capacity(horizon + 1);
        states.push(pinch_initial(self.n(), q, eps)?);
        for t in 0..horizon {
            let next = self.step(&states[t]);
            states.push(next);
        }
        Ok(Trajectory {
            states,
            pinch_index: q,
            pinch_magnitude: eps,
        })
    }

    /// Evolves every pinch index `q = 1..=N` for `horizon` steps. Runs per-q
    /// simulations in parallel; the output order is by `q` regardless of
    /// scheduling.
    pub fn simulate_pinched_family(&self, eps: &[T], horizon: usize) -> Result<Vec<Trajectory<T>>> {
        if eps.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} pinch magnitudes for {} vertices",
                eps.len(),
                self.n()
            )));
        }
        for (idx, &e) in eps.iter().enumerate() {
            if e == T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "pinch magnitude for vertex {} must be nonzero",
                    idx + 1
                )));
            }
        }
        (1..=self.n())
            .into_par_iter()
            .map(|q| self.simulate_pinched(q, eps[q - 1], horizon))
            .collect()
    }

    /// Spot-checks the resting-state contract: `f_i(0) = 0` for every node and,
    /// on every edge, `h_ij(0, 0) = 0` with `h_ij(0, v) != 0` at sampled small
    /// `v`. Intended for user-supplied maps; built-in families satisfy it by
    /// construction.
    pub fn validate(&self) -> Result<()> {
        let tol = real::<T>(1e-12);
        for i in 1..=self.n() {
            let f0 = self.eval_isolated(i, T::zero());
            if f0.abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "isolated map of node {i} has f(0) = {f0:?}, expected 0"
                )));
            }
        }
        let probes = [1e-3, -1e-3, 1e-6, -1e-6];
        for i in 1..=self.n() {
            for &j in self.graph.in_neighbors(i) {
                let j = j as usize;
                let h00 = self.eval_coupling(i, j, T::zero(), T::zero());
                if h00.abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "coupling on edge ({i} <- {j}) has h(0, 0) = {h00:?}, expected 0"
                    )));
                }
                for &v in &probes {
                    let hv = self.eval_coupling(i, j, T::zero(), real(v));
                    if hv == T::zero() {
                        return Err(Error::InvalidParameter(format!(
                            "coupling on edge ({i} <- {j}) vanishes at h(0, {v})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The pinched initial condition: `eps` at position `q`, zero elsewhere.
pub fn pinch_initial<T: Real>(n: usize, q: usize, eps: T) -> Result<StateVector<T>> {
    if q == 0 || q > n {
        return Err(Error::InvalidParameter(format!(
            "pinch vertex {q} out of range 1..={n}"
        )));
    }
    if eps == T::zero() {
        return Err(Error::InvalidParameter(
            "pinch magnitude must be nonzero".into(),
        ));
    }
    let mut values = DVector::zeros(n);
    values[q - 1] = eps;
    Ok(StateVector {
        values,
        pinch_index: Some(q),
        time: 0,
    })
}

/// Samples one pinch magnitude per vertex, uniform in `[lo, hi)`.
pub fn sample_pinch_magnitudes<T: Real, R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<T> {
    (0..n).map(|_| real(rng.gen_range(lo..hi))).collect()
}
