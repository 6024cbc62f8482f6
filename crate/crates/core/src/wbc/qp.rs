//! Dense strictly convex QP by the Goldfarb–Idnani dual active-set method.
//!
//! minimize ½xᵀHx + gᵀx  subject to  aᵢᵀx ≤ bᵢ,  lo ≤ x ≤ hi
//!
//! The dual method starts at the unconstrained minimizer and adds the most
//! violated constraint each round, so primal infeasibility shows up as a
//! constraint that cannot be added; the rows that block it are reported.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::WbcError;

/// `a·x ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub a: DVector<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub rows: Vec<LinearRow>,
    /// Per-variable bounds; infinite entries are ignored.
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// A constraint of [`QpProblem`], as reported in active and infeasible sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum ConstraintRef {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Max of stationarity, primal and dual feasibility and complementarity
    /// violations.
    pub kkt_residual: f64,
    /// Active constraints with their multipliers, sorted.
    pub active: Vec<(ConstraintRef, f64)>,
    pub iterations: usize,
}

impl QpSolution {
    /// Indices of active general rows.
    pub fn active_rows(&self) -> Vec<usize> {
        self.active
            .iter()
            .filter_map(|(c, _)| match c {
                ConstraintRef::Row(i) => Some(*i),
                _ => None,
            })
            .collect()
    }
}

/// Constraint in dual-method form `n·x ≥ e`.
struct Halfspace {
    n: DVector<f64>,
    e: f64,
    source: ConstraintRef,
}

impl QpProblem {
    pub fn unconstrained(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        QpProblem {
            hessian,
            gradient,
            rows: Vec::new(),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let rows = self.rows.iter().map(|r| r.a.dot(x) - r.b);
        let lo = (0..x.len()).map(|i| self.lower[i] - x[i]);
        let hi = (0..x.len()).map(|i| x[i] - self.upper[i]);
        rows.chain(lo).chain(hi).filter(|v| v.is_finite()).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<(), WbcError> {
        let n = self.dim();
        let bad = |m: String| Err(WbcError::Parameter(m));
        if self.hessian.shape() != (n, n) || self.lower.len() != n || self.upper.len() != n {
            return bad(format!("inconsistent QP dimensions for {n} variables"));
        }
        if self.hessian.iter().chain(self.gradient.iter()).any(|v| !v.is_finite()) {
            return bad("QP cost is not finite".into());
        }
        if (&self.hessian - self.hessian.transpose()).amax() > 1e-9 * self.hessian.amax().max(1.0) {
            return bad("hessian is not symmetric".into());
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.a.len() != n || r.a.iter().any(|v| !v.is_finite()) || !r.b.is_finite() {
                return bad(format!("row {i} is malformed or not finite"));
            }
        }
        if (0..n).any(|i| self.lower[i].is_nan() || self.upper[i].is_nan()) {
            return bad("bounds contain NaN".into());
        }
        Ok(())
    }

    fn halfspaces(&self) -> Vec<Halfspace> {
        let n = self.dim();
        let mut out: Vec<Halfspace> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| Halfspace { n: -&r.a, e: -r.b, source: ConstraintRef::Row(i) })
            .collect();
        for i in 0..n {
            if self.lower[i].is_finite() {
                let mut v = DVector::zeros(n);
                v[i] = 1.0;
                out.push(Halfspace { n: v, e: self.lower[i], source: ConstraintRef::Lower(i) });
            }
            if self.upper[i].is_finite() {
                let mut v = DVector::zeros(n);
                v[i] = -1.0;
                out.push(Halfspace { n: v, e: -self.upper[i], source: ConstraintRef::Upper(i) });
            }
        }
        out
    }
}

/// Solves the QP exactly up to round-off. Fails with
/// [`WbcError::Infeasible`] naming a set of constraints that cannot hold
/// together.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, WbcError> {
    problem.validate()?;
    let chol = problem.hessian.clone().cholesky().ok_or(WbcError::NotPositiveDefinite)?;
    let cons = problem.halfspaces();
    let slack = |x: &DVector<f64>, k: usize| cons[k].n.dot(x) - cons[k].e;
    let tol = |k: usize| 1e-11 * (1.0 + cons[k].e.abs());

    let mut x = -chol.solve(&problem.gradient);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_iterations = 50 * (cons.len() + problem.dim() + 1);
    let mut iterations = 0;

    loop {
        let violated = (0..cons.len())
            .filter(|k| !active.contains(k))
            .map(|k| (k, slack(&x, k)))
            .filter(|&(k, s)| s < -tol(k))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let Some((p, _)) = violated else { break };
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iterations {
                return Err(WbcError::NotConverged(iterations));
            }
            let hinv_np = chol.solve(&cons[p].n);
            let (z, r) = if active.is_empty() {
                (hinv_np.clone(), DVector::zeros(0))
            } else {
                let big_n = DMatrix::from_columns(&active.iter().map(|&k| cons[k].n.clone()).collect::<Vec<_>>());
                let hinv_n = chol.solve(&big_n);
                let m = big_n.transpose() * &hinv_n;
                let rhs = big_n.transpose() * &hinv_np;
                let r = match m.clone().cholesky() {
                    Some(c) => c.solve(&rhs),
                    None => m.lu().solve(&rhs).ok_or(WbcError::NotConverged(iterations))?,
                };
                (&hinv_np - hinv_n * &r, r)
            };

            // Largest dual step that keeps every active multiplier non-negative.
            let partial = (0..active.len())
                .filter(|&j| r[j] > 1e-14)
                .map(|j| (u[j] / r[j], j))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let curvature = z.dot(&cons[p].n);
            let full = if curvature > 1e-14 * hinv_np.dot(&cons[p].n).max(1.0) {
                Some(-slack(&x, p) / curvature)
            } else {
                None
            };

            match (partial, full) {
                (None, None) => {
                    // n_p is a non-positive combination of the active normals.
                    let mut blocking: Vec<ConstraintRef> = (0..active.len())
                        .filter(|&j| r[j] < -1e-12)
                        .map(|j| cons[active[j]].source)
                        .collect();
                    blocking.push(cons[p].source);
                    blocking.sort();
                    return Err(WbcError::Infeasible(blocking));
                }
                (Some((t, k)), None) => {
                    for j in 0..active.len() {
                        u[j] -= t * r[j];
                    }
                    u_p += t;
                    active.remove(k);
                    u.remove(k);
                }
                (partial, Some(t2)) => {
                    let (t, drop) = match partial {
                        Some((t1, k)) if t1 < t2 => (t1, Some(k)),
                        _ => (t2, None),
                    };
                    x += &z * t;
                    for j in 0..active.len() {
                        u[j] -= t * r[j];
                    }
                    u_p += t;
                    match drop {
                        Some(k) => {
                            active.remove(k);
                            u.remove(k);
                        }
                        None => {
                            active.push(p);
                            u.push(u_p);
                            break;
                        }
                    }
                }
            }
        }
    }

    let mut multipliers = vec![0.0; cons.len()];
    for (j, &k) in active.iter().enumerate() {
        multipliers[k] = u[j].max(0.0);
    }
    let mut stationarity = &problem.hessian * &x + &problem.gradient;
    let mut residual: f64 = 0.0;
    for (k, c) in cons.iter().enumerate() {
        stationarity -= &c.n * multipliers[k];
        let s = slack(&x, k);
        residual = residual.max(-s).max((multipliers[k] * s).abs());
    }
    residual = residual.max(stationarity.amax());
    let mut active_out: Vec<(ConstraintRef, f64)> = active.iter().map(|&k| (cons[k].source, multipliers[k])).collect();
    active_out.sort_by_key(|a| a.0);
    Ok(QpSolution { objective: problem.objective(&x), x, kkt_residual: residual, active: active_out, iterations })
}
