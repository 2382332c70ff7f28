//! Mean-field measurement matrices and their uniqueness certificates.
//!
//! A measurement matrix compresses a length-N state into P < N linear
//! combinations. Uniqueness of sparse recovery is certified either exactly
//! (spark and restricted-isometry constants, exponential-time enumeration
//! behind an explicit budget) or probabilistically (Gaussian ensembles with
//! budget formulas relating P to the maximum out-degree).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Relative singular-value tolerance for linear-dependence tests.
const RANK_REL_TOL: f64 = 1e-10;

/// Exhaustive certificate computations refuse to enumerate beyond this many
/// columns unless an explicit limit is supplied.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

/// Largest sparsity level accepted by the exact isometry-constant search
/// under the default budget.
pub const DEFAULT_RIP_SPARSITY_LIMIT: usize = 6;

/// How a measurement matrix was produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    /// I.i.d. Gaussian entries with mean zero and the given variance.
    Gaussian { seed: u64, variance: f64 },
    Explicit,
}

/// A P x N real measurement matrix with `P < N`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix<T: Real> {
    phi: DMatrix<T>,
    provenance: Provenance,
}

impl<T: Real> MeasurementMatrix<T> {
    /// Wraps an explicit matrix. Requires `1 <= P < N`.
    pub fn from_matrix(phi: DMatrix<T>) -> Result<Self> {
        Self::check_shape(phi.nrows(), phi.ncols())?;
        Ok(Self {
            phi,
            provenance: Provenance::Explicit,
        })
    }

    /// Samples a `measurements x n` matrix with i.i.d. `Normal(0, 1/P)`
    /// entries, deterministically for a fixed seed.
    pub fn gaussian(measurements: usize, n: usize, seed: u64) -> Result<Self> {
        Self::check_shape(measurements, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (1.0 / measurements as f64).sqrt();
        let normal = StandardNormal;
        // Row-major fill so the sample stream is layout-independent.
        let mut phi = DMatrix::zeros(measurements, n);
        for r in 0..measurements {
            for c in 0..n {
                let z: f64 = normal.sample(&mut rng);
                phi[(r, c)] = real(z * scale);
            }
        }
        Ok(Self {
            phi,
            provenance: Provenance::Gaussian {
                seed,
                variance: 1.0 / measurements as f64,
            },
        })
    }

    fn check_shape(p: usize, n: usize) -> Result<()> {
        if p == 0 {
            return Err(Error::InvalidParameter(
                "measurement count must be >= 1".into(),
            ));
        }
        if p >= n {
            return Err(Error::InvalidParameter(format!(
                "compressed setting requires P < N, got P={p}, N={n}"
            )));
        }
        Ok(())
    }

    pub fn measurements(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.phi
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The compression `y = phi * x`.
    pub fn measure(&self, x: &DVector<T>) -> Result<DVector<T>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "state length {} does not match matrix width {}",
                x.len(),
                self.n()
            )));
        }
        Ok(&self.phi * x)
    }

    /// Size of the smallest linearly dependent column subset, or `P + 1` when
    /// every subset of up to P columns is independent (full spark).
    ///
    /// Exhaustive over subsets; see [`DEFAULT_ENUMERATION_LIMIT`].
    pub fn spark(&self) -> Result<usize> {
        self.spark_with_limit(DEFAULT_ENUMERATION_LIMIT)
    }

    /// As [`MeasurementMatrix::spark`] with an explicit column budget.
    pub fn spark_with_limit(&self, limit: usize) -> Result<usize> {
        let n = self.n();
        if n > limit {
            return Err(Error::EnumerationBudget(format!(
                "spark enumeration over {n} columns exceeds the limit {limit}"
            )));
        }
        let p = self.measurements();
        for size in 1..=p.min(n) {
            let combos: Vec<Vec<usize>> = (0..n).combinations(size).collect();
            let dependent = combos
                .par_iter()
                .any(|cols| rank_of(&self.phi.select_columns(cols.iter())) < size);
            if dependent {
                return Ok(size);
            }
        }
        Ok(p + 1)
    }

    /// True when `spark = P + 1`, equivalently every P x P column submatrix is
    /// invertible.
    pub fn is_full_spark(&self) -> Result<bool> {
        self.is_full_spark_with_limit(DEFAULT_ENUMERATION_LIMIT)
    }

    /// As [`MeasurementMatrix::is_full_spark`] with an explicit column budget.
    ///
    /// Only subsets of exactly P columns are checked: a dependent subset of
    /// fewer columns always extends to a dependent P-subset.
    pub fn is_full_spark_with_limit(&self, limit: usize) -> Result<bool> {
        let n = self.n();
        if n > limit {
            return Err(Error::EnumerationBudget(format!(
                "full-spark enumeration over {n} columns exceeds the limit {limit}"
            )));
        }
        let p = self.measurements();
        let combos: Vec<Vec<usize>> = (0..n).combinations(p).collect();
        Ok(combos
            .par_iter()
            .all(|cols| rank_of(&self.phi.select_columns(cols.iter())) == p))
    }

    /// Exact isometry constant `delta_s`: the smallest `d` with
    /// `(1-d)|x|^2 <= |phi x|^2 <= (1+d)|x|^2` for all s-sparse `x`, computed
    /// as the worst extreme squared singular value over all size-s column
    /// subsets.
    pub fn rip_constant(&self, s: usize) -> Result<T> {
        self.rip_constant_with_limit(s, DEFAULT_ENUMERATION_LIMIT, DEFAULT_RIP_SPARSITY_LIMIT)
    }

    /// As [`MeasurementMatrix::rip_constant`] with explicit budgets.
    pub fn rip_constant_with_limit(
        &self,
        s: usize,
        column_limit: usize,
        sparsity_limit: usize,
    ) -> Result<T> {
        let n = self.n();
        if s == 0 || s > n {
            return Err(Error::InvalidParameter(format!(
                "sparsity level {s} out of range 1..={n}"
            )));
        }
        if n > column_limit || s > sparsity_limit {
            return Err(Error::EnumerationBudget(format!(
                "isometry-constant enumeration (N={n}, s={s}) exceeds the budget \
                 (N<={column_limit}, s<={sparsity_limit})"
            )));
        }
        let combos: Vec<Vec<usize>> = (0..n).combinations(s).collect();
        let one = T::one();
        let delta = combos
            .par_iter()
            .map(|cols| {
                let sub = self.phi.select_columns(cols.iter());
                let sv = sub.singular_values();
                let smax = sv.iter().cloned().fold(T::zero(), |a, b| a.max(b));
                let smin = sv.iter().cloned().fold(smax, |a, b| a.min(b));
                // Subsets with more columns than rows contribute sigma_min = 0.
                let smin = if s > self.measurements() {
                    T::zero()
                } else {
                    smin
                };
                (smax * smax - one).max(one - smin * smin)
            })
            .reduce(T::zero, |a, b| a.max(b));
        Ok(delta)
    }
}

/// Numerical rank with singular values below `1e-10 * sigma_max` treated as
/// zero.
fn rank_of<T: Real>(m: &DMatrix<T>) -> usize {
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(T::zero(), |a, b| a.max(b));
    if smax == T::zero() {
        return 0;
    }
    let tol = smax * real(RANK_REL_TOL);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Measurement budget for unique l0 recovery with full-spark matrices:
/// `P > 2 * max_out_degree + 1`.
pub fn l0_budget_ok(measurements: usize, max_out_degree: usize) -> bool {
    measurements > 2 * max_out_degree + 1
}

/// Sparsity capacity of a Gaussian ensemble for the l1 program:
/// `c1 * P / ln(N / P)`. Recovery of all one-step states is expected when
/// this is at least `max_out_degree + 1`. The constant `c1` is
/// order-of-magnitude guidance; callers must report the value they used.
pub fn gaussian_sparsity_capacity(n: usize, measurements: usize, c1: f64) -> Result<f64> {
    if measurements == 0 || measurements >= n {
        return Err(Error::InvalidParameter(format!(
            "capacity formula needs 1 <= P < N, got P={measurements}, N={n}"
        )));
    }
    if c1 <= 0.0 {
        return Err(Error::InvalidParameter(format!("c1 must be > 0, got {c1}")));
    }
    Ok(c1 * measurements as f64 / (n as f64 / measurements as f64).ln())
}

/// Budget check for Erdős–Rényi graphs measured with a Gaussian ensemble:
/// `N p + sqrt(2 N p ln N) + 1 < c1 P / ln(N / P)`, a high-probability bound
/// on the maximum degree against the sparsity capacity.
pub fn er_measurement_bound(
    n: usize,
    edge_prob: f64,
    measurements: usize,
    c1: f64,
) -> Result<bool> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidParameter(format!(
            "edge probability {edge_prob} outside [0, 1]"
        )));
    }
    let capacity = gaussian_sparsity_capacity(n, measurements, c1)?;
    let np = n as f64 * edge_prob;
    let lhs = np + (2.0 * np * (n as f64).ln()).sqrt() + 1.0;
    Ok(lhs < capacity)
}

/// Compressed observations indexed by pinch vertex and time step.
#[derive(Clone, Debug)]
pub struct MeanFieldSet<T: Real> {
    measurement_dim: usize,
    records: BTreeMap<(usize, usize), DVector<T>>,
    /// Which matrix produced the record for each q; empty when one shared
    /// matrix is used for all pinches.
    matrix_ids: BTreeMap<usize, usize>,
}

impl<T: Real> MeanFieldSet<T> {
    pub fn new(measurement_dim: usize) -> Self {
        Self {
            measurement_dim,
            records: BTreeMap::new(),
            matrix_ids: BTreeMap::new(),
        }
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement_dim
    }

    pub fn insert(&mut self, q: usize, t: usize, y: DVector<T>) -> Result<()> {
        if y.len() != self.measurement_dim {
            return Err(Error::DimensionMismatch(format!(
                "record ({q}, {t}) has length {}, expected {}",
                y.len(),
                self.measurement_dim
            )));
        }
        self.records.insert((q, t), y);
        Ok(())
    }

    pub fn set_matrix_id(&mut self, q: usize, id: usize) {
        self.matrix_ids.insert(q, id);
    }

    /// The matrix id for pinch `q`; 0 (the shared matrix) unless overridden.
    pub fn matrix_id(&self, q: usize) -> usize {
        self.matrix_ids.get(&q).copied().unwrap_or(0)
    }

    pub fn get(&self, q: usize, t: usize) -> Option<&DVector<T>> {
        self.records.get(&(q, t))
    }

    pub fn records(&self) -> impl Iterator<Item = (&(usize, usize), &DVector<T>)> {
        self.records.iter()
    }

    /// Distinct (q, t) keys present, in sorted order.
    pub fn keys(&self) -> Vec<(usize, usize)> {
        self.records.keys().copied().collect()
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Serializes a matrix as CSV: a `P,N` header line, the dimensions, then P
/// row-major lines of N entries.
pub fn matrix_to_csv<T: Real + std::fmt::Display>(m: &MeasurementMatrix<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "P,N");
    let _ = writeln!(out, "{},{}", m.measurements(), m.n());
    for r in 0..m.measurements() {
        let row = (0..m.n())
            .map(|c| m.matrix()[(r, c)].to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Parses the CSV format written by [`matrix_to_csv`]. The literal `P,N`
/// header line is optional.
pub fn matrix_from_csv<T: Real>(text: &str) -> Result<MeasurementMatrix<T>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    if lines.peek() == Some(&"P,N") {
        lines.next();
    }
    let dims = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let mut it = dims.split(',');
    let p: usize = it
        .next()
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad dimension line {dims:?}")))?;
    let n: usize = it
        .next()
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad dimension line {dims:?}")))?;
    let mut phi = DMatrix::<T>::zeros(p, n);
    for r in 0..p {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("matrix file ends at row {r} of {p}")))?;
        let entries: Vec<&str> = line.split(',').collect();
        if entries.len() != n {
            return Err(Error::Parse(format!(
                "row {r} has {} entries, expected {n}",
                entries.len()
            )));
        }
        for (c, e) in entries.iter().enumerate() {
            let v: f64 = e
                .trim()
                .parse()
                .map_err(|err| Error::Parse(format!("bad entry at ({r}, {c}): {err}")))?;
            phi[(r, c)] = real(v);
        }
    }
    MeasurementMatrix::from_matrix(phi)
}

/// Serializes mean-field records as CSV with columns `q,t,k,y`.
pub fn meanfields_to_csv<T: Real + std::fmt::Display>(set: &MeanFieldSet<T>) -> String {
    let mut out = String::from("q,t,k,y\n");
    for ((q, t), y) in set.records() {
        for (k, v) in y.iter().enumerate() {
            let _ = writeln!(out, "{q},{t},{},{v}", k + 1);
        }
    }
    out
}

/// Parses the CSV format written by [`meanfields_to_csv`].
pub fn meanfields_from_csv<T: Real>(text: &str, measurement_dim: usize) -> Result<MeanFieldSet<T>> {
    let mut grouped: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "q,t,k,y" || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!("line {}: expected q,t,k,y", idx + 1)));
        }
        let q: usize = parts[0]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        let t: usize = parts[1]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        let k: usize = parts[2]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        let v: f64 = parts[3]
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        grouped.entry((q, t)).or_default().push((k, v));
    }
    let mut set = MeanFieldSet::new(measurement_dim);
    for ((q, t), mut entries) in grouped {
        entries.sort_by_key(|&(k, _)| k);
        if entries.len() != measurement_dim
            || entries.iter().enumerate().any(|(i, &(k, _))| k != i + 1)
        {
            return Err(Error::Parse(format!(
                "record ({q}, {t}) does not cover k = 1..={measurement_dim}"
            )));
        }
        let y = DVector::from_iterator(measurement_dim, entries.iter().map(|&(_, v)| real(v)));
        set.insert(q, t, y)?;
    }
    Ok(set)
}
