//! Second stage of the pipeline: identify each node's local update rule from
//! (recovered or exact) pinched trajectories.
//!
//! Per node `i`, a dictionary of basis functions is evaluated along every
//! pinched trajectory to form a stacked matrix with one row per `(q, t)`
//! pair; the node's coefficients are the least-squares solution against the
//! stacked next-step values. A full-column-rank check guards
//! identifiability. For unknown dynamics, a sequentially thresholded
//! least-squares pass over the linear polynomial library produces a sparse
//! coefficient matrix.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{CouplingKind, DiffusionSign, IsolatedKind, NetworkSystem, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Relative singular-value factor in the numerical rank rule
/// `tol = cols * sigma_max * RANK_TOL_FACTOR`.
const RANK_TOL_FACTOR: f64 = 1e-12;

/// One basis function of a node's dictionary, evaluated on the full state.
/// `j` indices are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisTerm {
    /// Constant 1.
    Constant,
    /// `x_j`
    Linear { j: usize },
    /// `x_i * x_j` where `i` is the owning node.
    CrossProduct { j: usize },
    /// `x_i^2` of the owning node.
    Square,
    /// `sin(x_j - x_i)` against the owning node.
    SineDiff { j: usize },
}

impl BasisTerm {
    /// Evaluates the term for the node that owns the dictionary row.
    pub fn eval<T: Real>(&self, node: usize, state: &DVector<T>) -> T {
        let xi = state[node - 1];
        match *self {
            BasisTerm::Constant => T::one(),
            BasisTerm::Linear { j } => state[j - 1],
            BasisTerm::CrossProduct { j } => xi * state[j - 1],
            BasisTerm::Square => xi * xi,
            BasisTerm::SineDiff { j } => (state[j - 1] - xi).sin(),
        }
    }

    /// Human-readable name with concrete indices, e.g. `x3`, `x3*x7`,
    /// `sin(x7-x3)`.
    pub fn name(&self, node: usize) -> String {
        match *self {
            BasisTerm::Constant => "1".to_string(),
            BasisTerm::Linear { j } => format!("x{j}"),
            BasisTerm::CrossProduct { j } => format!("x{node}*x{j}"),
            BasisTerm::Square => format!("x{node}^2"),
            BasisTerm::SineDiff { j } => format!("sin(x{j}-x{node})"),
        }
    }
}

/// Per-node basis descriptors.
#[derive(Clone, Debug)]
pub struct Dictionary {
    per_node: Vec<Vec<BasisTerm>>,
}

impl Dictionary {
    /// Requires at least one term per node.
    pub fn new(per_node: Vec<Vec<BasisTerm>>) -> Result<Self> {
        if per_node.is_empty() || per_node.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidParameter(
                "every node needs at least one basis term".into(),
            ));
        }
        Ok(Self { per_node })
    }

    pub fn n(&self) -> usize {
        self.per_node.len()
    }

    pub fn terms(&self, node: usize) -> &[BasisTerm] {
        &self.per_node[node - 1]
    }

    /// Number of terms of `node`.
    pub fn terms_of(&self, node: usize) -> usize {
        self.per_node[node - 1].len()
    }

    /// Largest per-node term count; also the horizon needed for
    /// identifiability.
    pub fn max_terms(&self) -> usize {
        self.per_node.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// The linear polynomial library `{1, x_1, ..., x_N}` for every node.
    pub fn linear_library(n: usize) -> Self {
        let terms: Vec<BasisTerm> = std::iter::once(BasisTerm::Constant)
            .chain((1..=n).map(|j| BasisTerm::Linear { j }))
            .collect();
        Self {
            per_node: vec![terms; n],
        }
    }

    /// The minimal dictionary that spans a built-in system exactly, together
    /// with the true coefficient vectors.
    ///
    /// For every node the expansion of the update rule is collected term by
    /// term: the isolated map contributes `x_i` (and `x_i^2` for the logistic
    /// family), each diffusive edge folds into the `x_i` and `x_j` linear
    /// terms, and each sine edge contributes `sin(x_j - x_i)`.
    pub fn exact_for<T: Real>(system: &NetworkSystem<T>) -> Result<(Self, Vec<DVector<T>>)> {
        let Some((iso, rates, coupling, weights, _)) = system.builtin_params() else {
            return Err(Error::InvalidParameter(
                "exact dictionaries exist only for built-in map families".into(),
            ));
        };
        let n = system.n();
        let mut per_node = Vec::with_capacity(n);
        let mut coeffs = Vec::with_capacity(n);
        for i in 1..=n {
            let r = rates[i - 1];
            let mut terms = vec![BasisTerm::Linear { j: i }];
            let mut c = vec![r];
            if iso == IsolatedKind::Logistic {
                terms.push(BasisTerm::Square);
                c.push(-r);
            }
            for &j in system.graph().in_neighbors(i) {
                let j = j as usize;
                let a = weights[(i - 1, j - 1)];
                match coupling {
                    CouplingKind::Diffusive { sign } => {
                        let (self_c, other_c) = match sign {
                            DiffusionSign::SelfMinusNeighbor => (a, -a),
                            DiffusionSign::NeighborMinusSelf => (-a, a),
                        };
                        c[0] += self_c;
                        terms.push(BasisTerm::Linear { j });
                        c.push(other_c);
                    }
                    CouplingKind::Sine => {
                        terms.push(BasisTerm::SineDiff { j });
                        c.push(a);
                    }
                }
            }
            per_node.push(terms);
            coeffs.push(DVector::from_vec(c));
        }
        Ok((Self { per_node }, coeffs))
    }
}

/// Stacked basis evaluations for one node: one row per `(q, t)` pair, q-major
/// with `t = 0..horizon-1`.
#[derive(Clone, Debug)]
pub struct DictionaryMatrix<T: Real> {
    pub node: usize,
    pub matrix: DMatrix<T>,
    /// `(q, t)` of each row.
    pub row_index: Vec<(usize, usize)>,
}

impl<T: Real> DictionaryMatrix<T> {
    /// Numerical rank under the `cols * sigma_max * 1e-12` rule.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.matrix)
    }
}

fn numerical_rank<T: Real>(m: &DMatrix<T>) -> usize {
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(T::zero(), |a, b| a.max(b));
    if smax == T::zero() {
        return 0;
    }
    let tol = smax * real::<T>(RANK_TOL_FACTOR) * real::<T>(m.ncols() as f64);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Evaluates the dictionary of `node` across the pinched trajectories over
/// `t = 0..horizon-1`. Every trajectory must carry at least `horizon` states.
pub fn build_dictionary_matrix<T: Real>(
    dict: &Dictionary,
    node: usize,
    trajs: &[Trajectory<T>],
    horizon: usize,
) -> Result<DictionaryMatrix<T>> {
    if node == 0 || node > dict.n() {
        return Err(Error::InvalidParameter(format!(
            "node {node} out of range 1..={}",
            dict.n()
        )));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    for traj in trajs {
        if traj.states.len() < horizon {
            return Err(Error::InvalidParameter(format!(
                "trajectory of pinch {} has {} states, need at least {horizon}",
                traj.pinch_index,
                traj.states.len()
            )));
        }
    }
    let terms = dict.terms(node);
    let rows = trajs.len() * horizon;
    let mut matrix = DMatrix::zeros(rows, terms.len());
    let mut row_index = Vec::with_capacity(rows);
    let mut row = 0;
    for traj in trajs {
        for t in 0..horizon {
            let state = &traj.state(t).values;
            for (k, term) in terms.iter().enumerate() {
                matrix[(row, k)] = term.eval(node, state);
            }
            row_index.push((traj.pinch_index, t));
            row += 1;
        }
    }
    Ok(DictionaryMatrix {
        node,
        matrix,
        row_index,
    })
}

/// Next-step values of `node` stacked in the same `(q, t)` order as
/// [`build_dictionary_matrix`]: entry for `(q, t)` holds `x_i^q(t+1)`.
pub fn stack_targets<T: Real>(
    node: usize,
    trajs: &[Trajectory<T>],
    horizon: usize,
) -> Result<DVector<T>> {
    for traj in trajs {
        if traj.states.len() < horizon + 1 {
            return Err(Error::InvalidParameter(format!(
                "trajectory of pinch {} has {} states, need at least {}",
                traj.pinch_index,
                traj.states.len(),
                horizon + 1
            )));
        }
    }
    let mut out = Vec::with_capacity(trajs.len() * horizon);
    for traj in trajs {
        for t in 0..horizon {
            out.push(traj.state(t + 1).values[node - 1]);
        }
    }
    Ok(DVector::from_vec(out))
}

/// Unique least-squares coefficients of the stacked system. Errors when the
/// dictionary matrix lacks full column rank, because the coefficients are
/// then not identifiable from the supplied trajectories.
pub fn fit_coefficients<T: Real>(
    psi: &DictionaryMatrix<T>,
    targets: &DVector<T>,
) -> Result<DVector<T>> {
    if targets.len() != psi.matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} stacked rows",
            targets.len(),
            psi.matrix.nrows()
        )));
    }
    let cols = psi.matrix.ncols();
    let rank = psi.rank();
    if rank < cols {
        return Err(Error::RankDeficient {
            node: psi.node,
            rank,
            cols,
        });
    }
    let svd = psi.matrix.clone().svd(true, true);
    svd.solve(targets, real(1e-13))
        .map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Result of the sequentially thresholded least-squares pass.
#[derive(Clone, Debug)]
pub struct SparseRegressionResult<T: Real> {
    /// One coefficient row per node over the feature columns.
    pub coefficients: DMatrix<T>,
    /// Per node: whether the active set reached a fixed point within the
    /// sweep budget.
    pub converged: Vec<bool>,
    /// Per node: final residual norm `|features c - target|`.
    pub residuals: Vec<T>,
}

/// Default number of threshold-and-refit sweeps.
pub const DEFAULT_REGRESSION_SWEEPS: usize = 20;

/// Sequentially thresholded least squares, one pass per target column:
/// fit, zero out coefficients below `threshold`, refit on the surviving
/// columns, and repeat until the active set stops changing.
pub fn sparse_regression<T: Real>(
    features: &DMatrix<T>,
    targets: &DMatrix<T>,
    threshold: T,
    max_sweeps: usize,
) -> Result<SparseRegressionResult<T>> {
    if features.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows vs {} target rows",
            features.nrows(),
            targets.nrows()
        )));
    }
    if threshold < T::zero() {
        return Err(Error::InvalidParameter("threshold must be >= 0".into()));
    }
    let n_feat = features.ncols();
    let n_nodes = targets.ncols();

    let fits: Vec<(DVector<T>, bool, T)> = (0..n_nodes)
        .into_par_iter()
        .map(|col| {
            let y = targets.column(col).into_owned();
            stlsq_single(features, &y, threshold, max_sweeps)
        })
        .collect();

    let mut coefficients = DMatrix::zeros(n_nodes, n_feat);
    let mut converged = Vec::with_capacity(n_nodes);
    let mut residuals = Vec::with_capacity(n_nodes);
    for (row, (c, ok, res)) in fits.into_iter().enumerate() {
        coefficients.row_mut(row).copy_from(&c.transpose());
        converged.push(ok);
        residuals.push(res);
    }
    Ok(SparseRegressionResult {
        coefficients,
        converged,
        residuals,
    })
}

fn stlsq_single<T: Real>(
    features: &DMatrix<T>,
    y: &DVector<T>,
    threshold: T,
    max_sweeps: usize,
) -> (DVector<T>, bool, T) {
    let n_feat = features.ncols();
    let lstsq = |cols: &[usize]| -> DVector<T> {
        let sub = features.select_columns(cols.iter());
        let svd = sub.svd(true, true);
        svd.solve(y, real(1e-13))
            .unwrap_or_else(|_| DVector::zeros(cols.len()))
    };

    let mut active: Vec<usize> = (0..n_feat).collect();
    let mut coef = lstsq(&active);
    let mut converged = false;
    for _ in 0..max_sweeps {
        let survivors: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|(k, _)| coef[*k].abs() >= threshold)
            .map(|(_, &j)| j)
            .collect();
        if survivors == active {
            converged = true;
            break;
        }
        active = survivors;
        if active.is_empty() {
            coef = DVector::zeros(0);
            converged = true;
            break;
        }
        coef = lstsq(&active);
    }

    let mut full = DVector::zeros(n_feat);
    for (k, &j) in active.iter().enumerate() {
        full[j] = coef[k];
    }
    let residual = (features * &full - y).norm();
    (full, converged, residual)
}

/// Feature/target matrices of the linear library over pinched trajectories:
/// one row per `(q, t')` with `t' = 0..up_to-1` (q-major), feature columns
/// `[1, x_1, ..., x_N]`, one target column per node holding the next-step
/// state.
pub fn linear_features<T: Real>(
    trajs: &[Trajectory<T>],
    up_to: usize,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if up_to == 0 {
        return Err(Error::InvalidParameter("need at least one step".into()));
    }
    let n = trajs.len();
    for traj in trajs {
        if traj.states.len() < up_to + 1 {
            return Err(Error::InvalidParameter(format!(
                "trajectory of pinch {} has {} states, need at least {}",
                traj.pinch_index,
                traj.states.len(),
                up_to + 1
            )));
        }
        if traj.state(0).values.len() != n {
            return Err(Error::DimensionMismatch(
                "trajectory width does not match trajectory count".into(),
            ));
        }
    }
    let rows = n * up_to;
    let mut features = DMatrix::zeros(rows, n + 1);
    let mut targets = DMatrix::zeros(rows, n);
    let mut row = 0;
    for traj in trajs {
        for t in 0..up_to {
            features[(row, 0)] = T::one();
            let state = &traj.state(t).values;
            let next = &traj.state(t + 1).values;
            for j in 0..n {
                features[(row, j + 1)] = state[j];
                targets[(row, j)] = next[j];
            }
            row += 1;
        }
    }
    Ok((features, targets))
}

/// True coefficient rows of a linear-diffusive system over the linear
/// library `[1, x_1, ..., x_N]`, for scoring identified models.
pub fn linear_coefficient_truth<T: Real>(system: &NetworkSystem<T>) -> Result<DMatrix<T>> {
    let Some((iso, rates, coupling, weights, _)) = system.builtin_params() else {
        return Err(Error::InvalidParameter(
            "coefficient truth requires built-in map families".into(),
        ));
    };
    if iso != IsolatedKind::Linear {
        return Err(Error::InvalidParameter(
            "linear coefficient truth requires the linear isolated family".into(),
        ));
    }
    let CouplingKind::Diffusive { sign } = coupling else {
        return Err(Error::InvalidParameter(
            "linear coefficient truth requires diffusive coupling".into(),
        ));
    };
    let n = system.n();
    let mut w = DMatrix::zeros(n, n + 1);
    for i in 1..=n {
        w[(i - 1, i)] = rates[i - 1];
        for &j in system.graph().in_neighbors(i) {
            let j = j as usize;
            let a = weights[(i - 1, j - 1)];
            match sign {
                DiffusionSign::SelfMinusNeighbor => {
                    w[(i - 1, i)] += a;
                    w[(i - 1, j)] -= a;
                }
                DiffusionSign::NeighborMinusSelf => {
                    w[(i - 1, i)] -= a;
                    w[(i - 1, j)] += a;
                }
            }
        }
    }
    Ok(w)
}

/// Mean squared error `(1/n) sum (a_i - b_i)^2`.
pub fn mse<T: Real>(truth: &[T], estimate: &[T]) -> Result<T> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true values vs {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter(
            "mse needs at least one sample".into(),
        ));
    }
    let sum = truth
        .iter()
        .zip(estimate)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(sum / real(truth.len() as f64))
}
