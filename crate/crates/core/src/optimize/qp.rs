//! Convex QP subproblems, solved with clarabel.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `min 1/2 p'Hp + g'p + penalty * sum(e)` subject to
/// `c + J p + e >= 0`, `e >= 0`, `lo <= p <= hi`.
///
/// The slacks `e` keep the subproblem feasible when the linearized
/// constraints are inconsistent with the box.
pub(crate) struct ElasticQp<'a> {
    pub h: &'a DMatrix<f64>,
    pub g: &'a DVector<f64>,
    pub c: &'a DVector<f64>,
    pub jac: &'a DMatrix<f64>,
    pub lo: &'a DVector<f64>,
    pub hi: &'a DVector<f64>,
    pub penalty: f64,
}

pub(crate) struct QpSolution {
    pub step: DVector<f64>,
    /// Multipliers of the linearized constraints (nonnegative).
    pub multipliers: DVector<f64>,
    /// Elastic slacks; all zero when the linearization is consistent.
    #[cfg_attr(not(test), allow(dead_code))]
    pub elastic: DVector<f64>,
}

fn csc_from_dense(rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) -> CscMatrix<f64> {
    let mut colptr = Vec::with_capacity(cols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for j in 0..cols {
        for i in 0..rows {
            let v = at(i, j);
            if v != 0.0 {
                rowval.push(i);
                nzval.push(v);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(rows, cols, colptr, rowval, nzval)
}

impl ElasticQp<'_> {
    pub fn solve(&self) -> Result<QpSolution> {
        let n = self.g.len();
        let m = self.c.len();
        let nv = n + m;

        // upper triangle of blockdiag(H, 0)
        let p_mat =
            csc_from_dense(nv, nv, |i, j| if i < n && j < n && i <= j { self.h[(i, j)] } else { 0.0 });
        let mut q = vec![0.0; nv];
        q[..n].copy_from_slice(self.g.as_slice());
        q[n..].iter_mut().for_each(|v| *v = self.penalty);

        // rows: -J p - e <= c ; -e <= 0 ; p <= hi ; -p <= -lo
        let rows = m + m + 2 * n;
        let a_mat = csc_from_dense(rows, nv, |i, j| {
            if i < m {
                if j < n {
                    -self.jac[(i, j)]
                } else if j - n == i {
                    -1.0
                } else {
                    0.0
                }
            } else if i < 2 * m {
                if j >= n && j - n == i - m {
                    -1.0
                } else {
                    0.0
                }
            } else if i < 2 * m + n {
                if j == i - 2 * m {
                    1.0
                } else {
                    0.0
                }
            } else if j == i - 2 * m - n {
                -1.0
            } else {
                0.0
            }
        });
        let mut b = Vec::with_capacity(rows);
        b.extend_from_slice(self.c.as_slice());
        b.extend(std::iter::repeat_n(0.0, m));
        b.extend_from_slice(self.hi.as_slice());
        b.extend(self.lo.iter().map(|v| -v));

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(500)
            .build()
            .map_err(|e| Error::Subproblem(format!("{e:?}")))?;
        let cones = [NonnegativeConeT(rows)];
        let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings)
            .map_err(|e| Error::Subproblem(format!("{e:?}")))?;
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            status => return Err(Error::Subproblem(format!("QP subproblem ended with {status:?}"))),
        }
        let x = &solver.solution.x;
        let z = &solver.solution.z;
        Ok(QpSolution {
            step: DVector::from_column_slice(&x[..n]),
            multipliers: DVector::from_iterator(m, z[..m].iter().map(|v| v.max(0.0))),
            elastic: DVector::from_iterator(m, x[n..].iter().map(|v| v.max(0.0))),
        })
    }
}
