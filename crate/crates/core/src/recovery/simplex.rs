//! Dense two-phase primal simplex for standard-form linear programs
//! `min c'x  s.t.  Ax = b, x >= 0`.
//!
//! Full-tableau implementation with Bland's pivoting rule, which cannot
//! cycle. Sized for the small cross-check programs this crate solves, not for
//! production LP workloads.

use nalgebra::DMatrix;

use crate::scalar::{real, Real};

#[derive(Clone, Debug, PartialEq)]
pub enum SimplexOutcome<T> {
    Optimal { x: Vec<T>, objective: T },
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted before reaching optimality.
    Stalled,
}

pub struct Simplex<T: Real> {
    /// Reduced constraint rows with the rhs in the last column.
    tab: DMatrix<T>,
    /// Reduced costs per column (phase-dependent).
    cost: Vec<T>,
    basis: Vec<usize>,
    rows: usize,
    cols: usize,
    tol: T,
}

impl<T: Real> Simplex<T> {
    /// Solves `min c'x  s.t.  Ax = b, x >= 0`.
    pub fn solve(c: &[T], a: &DMatrix<T>, b: &[T], tol: T) -> SimplexOutcome<T> {
        let rows = a.nrows();
        let n = a.ncols();
        assert_eq!(c.len(), n);
        assert_eq!(b.len(), rows);
        if rows == 0 {
            return SimplexOutcome::Optimal {
                x: vec![T::zero(); n],
                objective: T::zero(),
            };
        }

        // Columns: n structural + rows artificial, then the rhs.
        let cols = n + rows;
        let mut tab = DMatrix::zeros(rows, cols + 1);
        for r in 0..rows {
            let flip = b[r] < T::zero();
            for j in 0..n {
                tab[(r, j)] = if flip { -a[(r, j)] } else { a[(r, j)] };
            }
            tab[(r, n + r)] = T::one();
            tab[(r, cols)] = b[r].abs();
        }
        let basis: Vec<usize> = (n..n + rows).collect();

        // Phase I reduced costs for minimizing the artificial sum: with the
        // artificial basis, cost_j = -sum_r tab[r][j] for structural columns.
        let mut cost = vec![T::zero(); cols];
        for j in 0..n {
            let mut s = T::zero();
            for r in 0..rows {
                s += tab[(r, j)];
            }
            cost[j] = -s;
        }

        let mut solver = Simplex {
            tab,
            cost,
            basis,
            rows,
            cols,
            tol,
        };
        let budget = 200 + 50 * (rows + n);

        // Phase I: artificial columns may never re-enter once the phase ends.
        match solver.run(n + rows, budget) {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => return SimplexOutcome::Infeasible,
            PhaseEnd::Stalled => return SimplexOutcome::Stalled,
        }
        let artificial_mass: T = solver
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &j)| j >= n)
            .map(|(r, _)| solver.tab[(r, solver.cols)])
            .fold(T::zero(), |acc, v| acc + v);
        if artificial_mass > solver.tol {
            return SimplexOutcome::Infeasible;
        }
        if !solver.drive_out_artificials(n) {
            return SimplexOutcome::Stalled;
        }

        // Phase II: recompute reduced costs for the true objective.
        solver.set_phase2_costs(c, n);
        match solver.run(n, budget) {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => return SimplexOutcome::Unbounded,
            PhaseEnd::Stalled => return SimplexOutcome::Stalled,
        }

        let mut x = vec![T::zero(); n];
        for (r, &j) in solver.basis.iter().enumerate() {
            if j < n {
                x[j] = solver.tab[(r, solver.cols)];
            }
        }
        let objective = c
            .iter()
            .zip(&x)
            .fold(T::zero(), |acc, (&ci, &xi)| acc + ci * xi);
        SimplexOutcome::Optimal { x, objective }
    }

    /// Bland's rule iterations over the first `active_cols` columns.
    fn run(&mut self, active_cols: usize, budget: usize) -> PhaseEnd {
        for _ in 0..budget {
            // Entering: smallest index with a negative reduced cost.
            let entering = (0..active_cols)
                .find(|&j| self.cost[j] < -self.tol && !self.basis.contains(&j));
            let Some(e) = entering else {
                return PhaseEnd::Optimal;
            };
            // Leaving: minimum ratio, ties broken by smallest basis index.
            let mut leave: Option<(usize, T)> = None;
            for r in 0..self.rows {
                let a_re = self.tab[(r, e)];
                if a_re > self.tol {
                    let ratio = self.tab[(r, self.cols)] / a_re;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - self.tol
                                || (ratio < lratio + self.tol && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((lr, _)) = leave else {
                return PhaseEnd::Unbounded;
            };
            self.pivot(lr, e);
        }
        PhaseEnd::Stalled
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.tab[(row, col)];
        for j in 0..=self.cols {
            self.tab[(row, j)] /= piv;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let f = self.tab[(r, col)];
            if f != T::zero() {
                for j in 0..=self.cols {
                    let delta = f * self.tab[(row, j)];
                    self.tab[(r, j)] -= delta;
                }
            }
        }
        let cf = self.cost[col];
        if cf != T::zero() {
            for j in 0..self.cols {
                let delta = cf * self.tab[(row, j)];
                self.cost[j] -= delta;
            }
        }
        self.basis[row] = col;
    }

    /// Pivots any artificial still basic (at zero level) onto a structural
    /// column; rows with no structural entry are redundant and get removed.
    fn drive_out_artificials(&mut self, n: usize) -> bool {
        let mut r = 0;
        while r < self.rows {
            if self.basis[r] >= n {
                let col = (0..n).find(|&j| self.tab[(r, j)].abs() > self.tol);
                match col {
                    Some(j) => self.pivot(r, j),
                    None => {
                        self.remove_row(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        true
    }

    fn remove_row(&mut self, row: usize) {
        self.tab = self.tab.clone().remove_row(row);
        self.basis.remove(row);
        self.rows -= 1;
    }

    fn set_phase2_costs(&mut self, c: &[T], n: usize) {
        // Reduced costs c_j - c_B' B^{-1} A_j; the tableau already holds
        // B^{-1} A. Artificial columns are priced out permanently.
        let big = real::<T>(1e30);
        for j in 0..self.cols {
            if j >= n {
                self.cost[j] = big;
                continue;
            }
            let mut v = c[j];
            for r in 0..self.rows {
                let jb = self.basis[r];
                if jb < n {
                    v -= c[jb] * self.tab[(r, j)];
                }
            }
            self.cost[j] = v;
        }
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    Stalled,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solve(c: &[f64], a: &[&[f64]], b: &[f64]) -> SimplexOutcome<f64> {
        let rows = a.len();
        let cols = if rows == 0 { c.len() } else { a[0].len() };
        let mat = DMatrix::from_fn(rows, cols, |r, j| a[r][j]);
        Simplex::solve(c, &mat, b, 1e-9)
    }

    #[test]
    fn bounded_problem_on_a_segment() {
        // min -x1 over x1 + x2 = 1.
        match solve(&[-1.0, 0.0], &[&[1.0, 1.0]], &[1.0]) {
            SimplexOutcome::Optimal { x, objective } => {
                assert_relative_eq!(x[0], 1.0, epsilon = 1e-9);
                assert_relative_eq!(x[1], 0.0, epsilon = 1e-9);
                assert_relative_eq!(objective, -1.0, epsilon = 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        // x1 + x2 = -1 has no nonnegative solution.
        assert_eq!(
            solve(&[1.0, 1.0], &[&[1.0, 1.0]], &[-1.0]),
            SimplexOutcome::Infeasible
        );
    }

    #[test]
    fn detects_unbounded() {
        // min -x1 over x1 - x2 = 0: push both to infinity.
        assert_eq!(
            solve(&[-1.0, 0.0], &[&[1.0, -1.0]], &[0.0]),
            SimplexOutcome::Unbounded
        );
    }

    #[test]
    fn two_constraint_vertex() {
        // min x3 with x1 + x3 = 2, x2 - x3 = 1; optimum at x3 = 0.
        match solve(&[0.0, 0.0, 1.0], &[&[1.0, 0.0, 1.0], &[0.0, 1.0, -1.0]], &[2.0, 1.0]) {
            SimplexOutcome::Optimal { x, objective } => {
                assert_relative_eq!(objective, 0.0, epsilon = 1e-9);
                assert_relative_eq!(x[0], 2.0, epsilon = 1e-9);
                assert_relative_eq!(x[1], 1.0, epsilon = 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn redundant_row_is_tolerated() {
        // Second row duplicates the first.
        match solve(
            &[1.0, 2.0],
            &[&[1.0, 1.0], &[1.0, 1.0]],
            &[1.0, 1.0],
        ) {
            SimplexOutcome::Optimal { x, objective } => {
                assert_relative_eq!(objective, 1.0, epsilon = 1e-9);
                assert_relative_eq!(x[0], 1.0, epsilon = 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_vertices_do_not_cycle() {
        // A classically degenerate instance; Bland's rule must terminate.
        let c = [-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        let a: &[&[f64]] = &[
            &[0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
            &[0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let b = [0.0, 0.0, 1.0];
        match solve(&c, a, &b) {
            SimplexOutcome::Optimal { objective, .. } => {
                assert_relative_eq!(objective, -0.05, epsilon = 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }
}
