//! Dense bounded-variable simplex with row duals.
//!
//! Sized for the small dispatch problems in this crate (tens to a few
//! hundred rows). Variables carry individual bounds, possibly infinite;
//! free variables sit at zero while nonbasic. Phase 1 minimizes the sum of
//! one artificial per row; phase 2 pins the artificials to zero and keeps
//! them in the tableau so that row duals can be read off their reduced
//! costs.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const MAX_ITER: usize = 50_000;
/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_AFTER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Constraint {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// `min cᵀx` subject to row constraints and per-variable bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    costs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `∂objective/∂rhs` for each row, in insertion order.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible { residual: f64 },
    Unbounded,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        debug_assert!(lower <= upper);
        self.costs.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.costs.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self).run()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
    FreeZero,
}

struct Tableau {
    m: usize,
    n_struct: usize,
    n_total: usize,
    art_start: usize,
    /// Row-major m × n_total, holds B⁻¹·A.
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    value: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    sigma: Vec<f64>,
    rhs_scale: f64,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n_struct = lp.costs.len();
        let n_slack = lp
            .rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();
        let art_start = n_struct + n_slack;
        let n_total = art_start + m;

        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut cost = lp.costs.clone();
        lower.resize(n_total, 0.0);
        upper.resize(n_total, f64::INFINITY);
        cost.resize(n_total, 0.0);

        let mut t = vec![0.0; m * n_total];
        let mut slack = n_struct;
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                t[i * n_total + j] += a;
            }
            match row.relation {
                Relation::Le => {
                    t[i * n_total + slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    t[i * n_total + slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
        }

        let mut value = vec![0.0; n_total];
        let mut status = vec![Status::AtLower; n_total];
        for j in 0..art_start {
            let (l, u) = (lower[j], upper[j]);
            let (v, s) = match (l.is_finite(), u.is_finite()) {
                (false, false) => (0.0, Status::FreeZero),
                (true, false) => (l, Status::AtLower),
                (false, true) => (u, Status::AtUpper),
                (true, true) => {
                    if u.abs() < l.abs() {
                        (u, Status::AtUpper)
                    } else {
                        (l, Status::AtLower)
                    }
                }
            };
            value[j] = v;
            status[j] = s;
        }

        let mut sigma = vec![1.0; m];
        let mut basis = vec![0; m];
        let mut rhs_scale: f64 = 1.0;
        for i in 0..m {
            let row = &t[i * n_total..i * n_total + art_start];
            let activity: f64 = row.iter().zip(&value).map(|(a, v)| a * v).sum();
            let residual = lp.rows[i].rhs - activity;
            rhs_scale = rhs_scale.max(lp.rows[i].rhs.abs());
            if residual < 0.0 {
                sigma[i] = -1.0;
                for a in &mut t[i * n_total..i * n_total + art_start] {
                    *a = -*a;
                }
            }
            let art = art_start + i;
            t[i * n_total + art] = 1.0;
            value[art] = residual.abs();
            status[art] = Status::Basic(i);
            basis[i] = art;
        }

        Tableau {
            m,
            n_struct,
            n_total,
            art_start,
            t,
            lower,
            upper,
            cost,
            value,
            status,
            basis,
            reduced: vec![0.0; n_total],
            sigma,
            rhs_scale,
        }
    }

    fn recompute_reduced(&mut self, costs: &[f64]) {
        for j in 0..self.n_total {
            let mut d = costs[j];
            for i in 0..self.m {
                let a = self.t[i * self.n_total + j];
                if a != 0.0 {
                    d -= costs[self.basis[i]] * a;
                }
            }
            self.reduced[j] = d;
        }
        for i in 0..self.m {
            self.reduced[self.basis[i]] = 0.0;
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    /// Entering candidate and direction (+1 increase, −1 decrease).
    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n_total {
            if self.is_fixed(j) {
                continue;
            }
            let d = self.reduced[j];
            let dir = match self.status[j] {
                Status::Basic(_) => continue,
                Status::AtLower if d < -OPT_TOL => 1.0,
                Status::AtUpper if d > OPT_TOL => -1.0,
                Status::FreeZero if d.abs() > OPT_TOL => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, score)| d.abs() > score) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n_total;
        let p = self.t[r * n + q];
        for a in &mut self.t[r * n..(r + 1) * n] {
            *a /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * n..(r + 1) * n].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * n..(i + 1) * n];
            for (a, &pr) in row.iter_mut().zip(&pivot_row) {
                if pr != 0.0 {
                    *a -= f * pr;
                }
            }
            row[q] = 0.0;
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (d, &pr) in self.reduced.iter_mut().zip(&pivot_row) {
                if pr != 0.0 {
                    *d -= f * pr;
                }
            }
        }
        self.reduced[q] = 0.0;
    }

    /// Run simplex iterations on the current cost vector.
    fn iterate(&mut self) -> Result<bool> {
        let mut degenerate_run = 0usize;
        for _ in 0..MAX_ITER {
            let bland = degenerate_run > BLAND_AFTER;
            let Some((q, dir)) = self.choose_entering(bland) else {
                return Ok(true);
            };

            // Ratio test.
            let mut step = f64::INFINITY;
            let mut leave: Option<(usize, f64)> = None;
            if self.lower[q].is_finite() && self.upper[q].is_finite() {
                step = self.upper[q] - self.lower[q];
            }
            let n = self.n_total;
            for i in 0..self.m {
                let alpha = dir * self.t[i * n + q];
                let b = self.basis[i];
                let limit = if alpha > PIVOT_TOL {
                    if self.lower[b].is_finite() {
                        ((self.value[b] - self.lower[b]) / alpha).max(0.0)
                    } else {
                        continue;
                    }
                } else if alpha < -PIVOT_TOL {
                    if self.upper[b].is_finite() {
                        ((self.upper[b] - self.value[b]) / -alpha).max(0.0)
                    } else {
                        continue;
                    }
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < step,
                    Some((r, prev_alpha)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                alpha.abs() > prev_alpha.abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = limit;
                    leave = Some((i, alpha));
                }
            }
            if step.is_infinite() {
                return Ok(false);
            }
            if step < 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            for i in 0..self.m {
                let a = self.t[i * n + q];
                if a != 0.0 {
                    let b = self.basis[i];
                    self.value[b] -= dir * step * a;
                }
            }
            self.value[q] += dir * step;

            match leave {
                None => {
                    // Bound flip.
                    self.status[q] = if dir > 0.0 {
                        self.value[q] = self.upper[q];
                        Status::AtUpper
                    } else {
                        self.value[q] = self.lower[q];
                        Status::AtLower
                    };
                }
                Some((r, alpha)) => {
                    let b = self.basis[r];
                    if alpha > 0.0 {
                        self.value[b] = self.lower[b];
                        self.status[b] = Status::AtLower;
                    } else {
                        self.value[b] = self.upper[b];
                        self.status[b] = Status::AtUpper;
                    }
                    self.pivot(r, q);
                    self.basis[r] = q;
                    self.status[q] = Status::Basic(r);
                }
            }
        }
        Err(Error::Solver(format!("iteration limit {MAX_ITER} reached")))
    }

    fn run(mut self) -> Result<LpOutcome> {
        // Phase 1.
        let mut phase1 = vec![0.0; self.n_total];
        for c in &mut phase1[self.art_start..] {
            *c = 1.0;
        }
        self.recompute_reduced(&phase1);
        if !self.iterate()? {
            return Err(Error::Solver("phase 1 reported unbounded".into()));
        }
        let residual: f64 = (self.art_start..self.n_total).map(|j| self.value[j].abs()).sum();
        if residual > FEAS_TOL * self.rhs_scale {
            return Ok(LpOutcome::Infeasible { residual });
        }

        // Phase 2: artificials pinned at zero.
        for j in self.art_start..self.n_total {
            self.upper[j] = 0.0;
            self.lower[j] = 0.0;
            if !matches!(self.status[j], Status::Basic(_)) {
                self.value[j] = 0.0;
                self.status[j] = Status::AtLower;
            }
        }
        let costs = self.cost.clone();
        self.recompute_reduced(&costs);
        if !self.iterate()? {
            return Ok(LpOutcome::Unbounded);
        }

        let x: Vec<f64> = self.value[..self.n_struct].to_vec();
        let objective = x.iter().zip(&self.cost).map(|(v, c)| v * c).sum();
        let duals = (0..self.m)
            .map(|i| -self.sigma[i] * self.reduced[self.art_start + i])
            .collect();
        Ok(LpOutcome::Optimal(LpSolution {
            x,
            objective,
            duals,
        }))
    }
}
