//! Assembly of the reconstructed adjacency matrix from per-pinch recovered
//! supports, plus the search for the critical measurement count.
//!
//! The support of the one-step state of a pinch at `q`, with `q` itself
//! removed, is exactly the first-level set `L1(q)`; stacking those level sets
//! as columns rebuilds the adjacency matrix.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{adjacency_from_level_sets, Graph};
use crate::metrics::{contingency, mcc, Contingency};
use crate::recovery::{RecoveryResult, RecoveryStatus};
use crate::scalar::Real;

/// MCC level above which a reconstruction counts as successful.
pub const DEFAULT_MCC_TARGET: f64 = 0.99;

/// Rebuilds the graph from one recovered support per pinch vertex: drops `q`
/// from `supports[q-1]` (whether or not the pinched vertex kept exciting
/// itself) and reads the remainder as the level set of `q`.
pub fn reconstruct_topology(supports: &[BTreeSet<usize>]) -> Result<Graph> {
    let sets: Vec<BTreeSet<usize>> = supports
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let q = idx + 1;
            s.iter().copied().filter(|&i| i != q).collect()
        })
        .collect();
    adjacency_from_level_sets(&sets)
}

/// MCC of the predicted adjacency against the truth, over the off-diagonal
/// entries (self-loops are structurally absent). Degenerate tables score 0.
pub fn adjacency_mcc(truth: &Graph, predicted: &Graph) -> Result<f64> {
    if truth.n() != predicted.n() {
        return Err(Error::DimensionMismatch(format!(
            "graphs on {} and {} vertices",
            truth.n(),
            predicted.n()
        )));
    }
    let n = truth.n();
    let mut counts = Contingency::default();
    for q in 1..=n {
        let t = truth.level_set(q)?;
        let p = predicted.level_set(q)?;
        // Universe [n] minus the diagonal slot.
        let mut c = contingency(&t, &p, n);
        c.tn -= 1;
        counts.add(c);
    }
    Ok(mcc(counts))
}

/// Result of scanning a measurement grid for the reconstruction transition.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalSearchResult {
    /// Smallest grid value whose score exceeded the target; `None` when the
    /// whole grid failed.
    pub p_c: Option<usize>,
    /// `(P, MCC)` for every grid point evaluated.
    pub curve: Vec<(usize, f64)>,
    pub target: f64,
}

/// Evaluates `score(P)` over an increasing grid of measurement counts and
/// returns the smallest `P` whose score exceeds `target`, together with the
/// whole curve. Absence of a transition is reported, not an error.
pub fn critical_measurement_search<F>(
    grid: &[usize],
    target: f64,
    mut score: F,
) -> Result<CriticalSearchResult>
where
    F: FnMut(usize) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty measurement grid".into()));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter(
            "measurement grid must be strictly increasing".into(),
        ));
    }
    let mut curve = Vec::with_capacity(grid.len());
    for &p in grid {
        curve.push((p, score(p)?));
    }
    let p_c = curve.iter().find(|(_, m)| *m > target).map(|&(p, _)| p);
    Ok(CriticalSearchResult {
        p_c,
        curve,
        target,
    })
}

/// Aggregate solver diagnostics over a batch of recovery problems.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct SolverSummary {
    pub problems: usize,
    pub converged: usize,
    pub max_iterations: usize,
    pub infeasible: usize,
    pub non_unique: usize,
    pub total_iterations: usize,
    pub max_residual: f64,
}

impl SolverSummary {
    pub fn from_results<T: Real>(results: &[RecoveryResult<T>]) -> Self {
        let mut s = Self {
            problems: results.len(),
            ..Self::default()
        };
        for r in results {
            match r.status {
                RecoveryStatus::Converged => s.converged += 1,
                RecoveryStatus::MaxIterations => s.max_iterations += 1,
                RecoveryStatus::Infeasible => s.infeasible += 1,
                RecoveryStatus::NonUnique => s.non_unique += 1,
            }
            s.total_iterations += r.iterations;
            s.max_residual = s.max_residual.max(r.residual.to_f64().unwrap_or(f64::NAN));
        }
        s
    }
}

/// Everything the `topology` command reports for one reconstruction.
#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionReport {
    /// Reconstructed adjacency as 1-based directed edges.
    pub edges: Vec<(usize, usize)>,
    pub n: usize,
    pub per_q_supports: Vec<Vec<usize>>,
    /// Off-diagonal adjacency MCC against the supplied truth, when available.
    pub mcc_vs_truth: Option<f64>,
    pub measurements_used: usize,
    pub tau_used: f64,
    pub solver: SolverSummary,
}

impl ReconstructionReport {
    pub fn new<T: Real>(
        adjacency_hat: &Graph,
        supports: &[BTreeSet<usize>],
        truth: Option<&Graph>,
        measurements_used: usize,
        tau_used: f64,
        results: &[RecoveryResult<T>],
    ) -> Result<Self> {
        let mcc_vs_truth = match truth {
            Some(g) => Some(adjacency_mcc(g, adjacency_hat)?),
            None => None,
        };
        Ok(Self {
            edges: adjacency_hat.edges(),
            n: adjacency_hat.n(),
            per_q_supports: supports
                .iter()
                .map(|s| s.iter().copied().collect())
                .collect(),
            mcc_vs_truth,
            measurements_used,
            tau_used,
            solver: SolverSummary::from_results(results),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        sample_pinch_magnitudes, CouplingKind, DiffusionSign, IsolatedKind, NetworkSystem,
    };
    use crate::measurement::MeasurementMatrix;
    use crate::recovery::{basis_pursuit, l0_oracle, threshold_support, RecoveryConfig};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn reconstruct_drops_the_pinch_vertex() {
        // q=1 kept exciting itself, q=2 did not; both map to the same edge.
        let supports = vec![s(&[1, 2]), s(&[2])];
        let g = reconstruct_topology(&supports).unwrap();
        assert!(g.has_edge(2, 1));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn isolated_supports_give_the_empty_graph() {
        let supports: Vec<_> = (1..=5).map(|q| s(&[q])).collect();
        let g = reconstruct_topology(&supports).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn exact_supports_from_simulation_rebuild_the_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n = 3 + trial % 10;
            let g = Graph::erdos_renyi_directed(n, 0.35, 40 + trial as u64).unwrap();
            let sys: NetworkSystem<f64> = NetworkSystem::sample(
                g.clone(),
                IsolatedKind::Logistic,
                CouplingKind::Diffusive {
                    sign: DiffusionSign::SelfMinusNeighbor,
                },
                &mut rng,
            );
            let eps = sample_pinch_magnitudes(n, 0.5, 1.0, &mut rng);
            let trajs = sys.simulate_pinched_family(&eps, 1).unwrap();
            let supports: Vec<_> = trajs.iter().map(|t| t.state(1).support(0.0)).collect();
            let rebuilt = reconstruct_topology(&supports).unwrap();
            assert_eq!(rebuilt, g, "trial {trial}");
            assert_eq!(adjacency_mcc(&g, &rebuilt).unwrap(), 1.0);
        }
    }

    #[test]
    fn adjacency_mcc_reference_points() {
        let g = Graph::from_edges(4, &[(2, 1), (3, 2)]).unwrap();
        assert_eq!(adjacency_mcc(&g, &g).unwrap(), 1.0);
        // Complement of the off-diagonal entries: total disagreement.
        let mut flipped = Vec::new();
        for i in 1..=4 {
            for j in 1..=4 {
                if i != j && !g.has_edge(i, j) {
                    flipped.push((i, j));
                }
            }
        }
        let complement = Graph::from_edges(4, &flipped).unwrap();
        assert_eq!(adjacency_mcc(&g, &complement).unwrap(), -1.0);
        let sizes = Graph::from_edges(3, &[(2, 1)]).unwrap();
        assert!(adjacency_mcc(&g, &sizes).is_err());
    }

    #[test]
    fn search_reports_transition_and_absence() {
        let grid = vec![2, 4, 6, 8];
        let r = critical_measurement_search(&grid, DEFAULT_MCC_TARGET, |p| {
            Ok(if p >= 6 { 1.0 } else { 0.3 })
        })
        .unwrap();
        assert_eq!(r.p_c, Some(6));
        assert_eq!(r.curve.len(), 4);

        let none = critical_measurement_search(&grid, 0.99, |_| Ok(0.5)).unwrap();
        assert_eq!(none.p_c, None);

        assert!(critical_measurement_search(&[4, 2], 0.99, |_| Ok(0.0)).is_err());
        assert!(critical_measurement_search(&[], 0.99, |_| Ok(0.0)).is_err());
    }

    /// Bounded-degree random graphs, the exhaustive sparse oracle, and a
    /// verified full-spark matrix: every one-step state comes back uniquely
    /// and the graph is rebuilt exactly.
    #[test]
    fn oracle_route_reconstructs_small_graphs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = RecoveryConfig::<f64>::default();
        let mut done = 0;
        let mut attempt = 0;
        while done < 5 {
            attempt += 1;
            let n = 8 + (attempt % 5);
            let g = Graph::erdos_renyi_directed(n, 1.2 / n as f64, 900 + attempt as u64).unwrap();
            let delta = g.max_out_degree();
            if delta > 3 || delta == 0 {
                continue;
            }
            let p = 2 * delta + 2;
            let m = MeasurementMatrix::<f64>::gaussian(p, n, 77 + attempt as u64).unwrap();
            assert!(m.is_full_spark().unwrap());
            let sys: NetworkSystem<f64> = NetworkSystem::sample(
                g.clone(),
                IsolatedKind::Logistic,
                CouplingKind::Sine,
                &mut rng,
            );
            let eps = sample_pinch_magnitudes(n, 0.5, 1.0, &mut rng);
            let trajs = sys.simulate_pinched_family(&eps, 1).unwrap();
            let mut supports = Vec::new();
            for q in 1..=n {
                let truth = &trajs[q - 1].state(1).values;
                let y = m.measure(truth).unwrap();
                let r = l0_oracle(&m, &y, delta + 1, &cfg).unwrap();
                assert!(r.is_unique(), "attempt {attempt}, q {q}");
                assert!((&r.x_hat - truth).amax() <= 1e-8);
                supports.push(r.support.clone());
            }
            assert_eq!(reconstruct_topology(&supports).unwrap(), g);
            done += 1;
        }
    }

    /// A tight frame of N = P+1 unit vectors has pairwise inner products
    /// -1/P, so the isometry constant over size-s subsets is (s-1)/P. With
    /// P = 8, N = 9 that gives delta_4 = 0.375 < sqrt(2)-1, certifying l1
    /// recovery for graphs with max out-degree 1.
    #[test]
    fn certified_isometry_route_reconstructs_a_ring() {
        let p = 8usize;
        let n = 9usize;
        // Gram = (1 + 1/P) I - (1/P) J factorized through its eigensystem.
        let one_p = 1.0 / p as f64;
        let gram = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -one_p });
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut phi = DMatrix::zeros(p, n);
        let mut row = 0;
        for k in 0..n {
            let lambda = eig.eigenvalues[k];
            if lambda > 1e-9 {
                let col = eig.eigenvectors.column(k);
                for j in 0..n {
                    phi[(row, j)] = lambda.sqrt() * col[j];
                }
                row += 1;
            }
        }
        assert_eq!(row, p);
        let m = MeasurementMatrix::from_matrix(phi).unwrap();
        let delta4 = m.rip_constant(4).unwrap();
        approx::assert_relative_eq!(delta4, 3.0 / p as f64, epsilon = 1e-10);
        assert!(delta4 < 2f64.sqrt() - 1.0);

        // Directed ring: every vertex has out-degree exactly 1.
        let edges: Vec<_> = (1..=n).map(|q| (q % n + 1, q)).collect();
        let g = Graph::from_edges(n, &edges).unwrap();
        assert_eq!(g.max_out_degree(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys: NetworkSystem<f64> = NetworkSystem::sample(
            g.clone(),
            IsolatedKind::Linear,
            CouplingKind::Diffusive {
                sign: DiffusionSign::NeighborMinusSelf,
            },
            &mut rng,
        );
        let eps = sample_pinch_magnitudes(n, 0.5, 1.0, &mut rng);
        let trajs = sys.simulate_pinched_family(&eps, 1).unwrap();
        let cfg = RecoveryConfig::<f64>::default();
        let mut supports = Vec::new();
        for q in 1..=n {
            let truth = &trajs[q - 1].state(1).values;
            let y = m.measure(truth).unwrap();
            let r = basis_pursuit(&m, &y, &cfg).unwrap();
            assert!((&r.x_hat - truth).amax() <= 1e-8, "q {q}");
            supports.push(r.support.clone());
        }
        assert_eq!(reconstruct_topology(&supports).unwrap(), g);
    }

    /// Success under the tighter support threshold implies success under the
    /// looser one on the same recovered vectors.
    #[test]
    fn tighter_threshold_success_transfers_to_looser() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 30;
        let g = Graph::erdos_renyi(n, 0.06, 23).unwrap();
        let sys: NetworkSystem<f64> = NetworkSystem::sample(
            g.clone(),
            IsolatedKind::Logistic,
            CouplingKind::Diffusive {
                sign: DiffusionSign::SelfMinusNeighbor,
            },
            &mut rng,
        );
        let eps = sample_pinch_magnitudes(n, 0.5, 1.0, &mut rng);
        let trajs = sys.simulate_pinched_family(&eps, 1).unwrap();
        let m = MeasurementMatrix::<f64>::gaussian(20, n, 29).unwrap();
        let cfg = RecoveryConfig::<f64>::default();
        let recovered: Vec<DVector<f64>> = (1..=n)
            .map(|q| {
                let y = m.measure(&trajs[q - 1].state(1).values).unwrap();
                basis_pursuit(&m, &y, &cfg).unwrap().x_hat
            })
            .collect();
        let supports_at = |tau: f64| -> Vec<BTreeSet<usize>> {
            recovered.iter().map(|x| threshold_support(x, tau)).collect()
        };
        let tight = reconstruct_topology(&supports_at(1e-10)).unwrap();
        if tight == g {
            let loose = reconstruct_topology(&supports_at(1e-9)).unwrap();
            assert_eq!(loose, g);
        }
    }
}
