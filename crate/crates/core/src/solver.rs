//! One interface for the linear and quadratic programs used by the reference,
//! MPC and IARR modules:
//!
//! ```text
//! minimize    1/2 x' P x + c' x + c0
//! subject to  A_eq x  = b_eq
//!             A_in x <= b_in
//!             lb <= x <= ub
//! ```
//!
//! `P` is stored as its upper triangle. A zero `P` is an LP. Programs are
//! solved with the Clarabel interior-point method.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute constraint residual accepted on an optimal solution.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Residual accepted on flow-balance equalities.
pub const BALANCE_TOL: f64 = 1e-8;

/// Gap and feasibility tolerances, tightest first. A stalled solve is
/// retried at the next level; the residual check below still applies.
const SOLVER_TOLS: [f64; 3] = [1e-10, 1e-8, 1e-6];
const SOLVER_MAX_ITER: u32 = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearConstraint {
    fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    quadratic: BTreeMap<(usize, usize), f64>,
    linear: Vec<f64>,
    constant: f64,
    equalities: Vec<LinearConstraint>,
    inequalities: Vec<LinearConstraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ConvexProgram {
    /// `n` free variables with zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            quadratic: BTreeMap::new(),
            linear: vec![0.0; n],
            constant: 0.0,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    /// Appends `count` variables sharing bounds and linear cost. Returns the first index.
    pub fn add_variables(&mut self, count: usize, lower: f64, upper: f64, cost: f64) -> usize {
        let start = self.num_vars();
        self.linear.extend(std::iter::repeat_n(cost, count));
        self.lower.extend(std::iter::repeat_n(lower, count));
        self.upper.extend(std::iter::repeat_n(upper, count));
        start
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    pub fn add_linear_cost(&mut self, var: usize, coeff: f64) {
        self.linear[var] += coeff;
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// Adds `value` to `P[i][j]` and `P[j][i]` (once for `i == j`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, value: f64) {
        let key = if i <= j { (i, j) } else { (j, i) };
        *self.quadratic.entry(key).or_insert(0.0) += value;
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearConstraint { coeffs, rhs });
    }

    pub fn add_inequality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearConstraint { coeffs, rhs });
    }

    pub fn equalities(&self) -> &[LinearConstraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[LinearConstraint] {
        &self.inequalities
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.values().all(|&v| v == 0.0)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        for (&(i, j), &v) in &self.quadratic {
            quad += if i == j { 0.5 * v * x[i] * x[i] } else { v * x[i] * x[j] };
        }
        quad + self.linear.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() + self.constant
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.equalities {
            worst = worst.max((c.eval(x) - c.rhs).abs());
        }
        for c in &self.inequalities {
            worst = worst.max(c.eval(x) - c.rhs);
        }
        for ((xi, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - xi).max(xi - hi);
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |msg: String| Err(Error::InvalidProgram(msg));
        for (&(i, j), &v) in &self.quadratic {
            if i >= n || j >= n {
                return bad(format!("quadratic entry ({i}, {j}) out of range"));
            }
            if !v.is_finite() {
                return bad(format!("quadratic entry ({i}, {j}) is not finite"));
            }
            if i == j && v < 0.0 {
                return bad(format!("negative diagonal {v} at {i}: not PSD"));
            }
        }
        if self.linear.iter().any(|c| !c.is_finite()) || !self.constant.is_finite() {
            return bad("non-finite cost".into());
        }
        for c in self.equalities.iter().chain(&self.inequalities) {
            if !c.rhs.is_finite() {
                return bad("non-finite constraint right-hand side".into());
            }
            for &(j, a) in &c.coeffs {
                if j >= n || !a.is_finite() {
                    return bad(format!("bad constraint coefficient at variable {j}"));
                }
            }
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                return bad(format!("bad bounds [{lo}, {hi}] on variable {j}"));
            }
        }
        Ok(())
    }

    /// Dense symmetric `P`.
    pub fn quadratic_matrix(&self) -> DMatrix<f64> {
        let n = self.num_vars();
        let mut p = DMatrix::zeros(n, n);
        for (&(i, j), &v) in &self.quadratic {
            p[(i, j)] += v;
            if i != j {
                p[(j, i)] += v;
            }
        }
        p
    }

    /// Eigenvalue check of `P`. Dense, intended for tests and small programs.
    pub fn is_psd(&self, tol: f64) -> bool {
        let p = self.quadratic_matrix();
        p.symmetric_eigenvalues().iter().all(|&e| e >= -tol)
    }

    /// Adds `sum_i |coeffs[i] * x[vars[i]]|` to the objective through
    /// auxiliary variables `t_i >= |a_i x_i|`. Zero coefficients add nothing.
    /// Returns the indices of the auxiliaries.
    pub fn add_l1_term(&mut self, coeffs: &[f64], vars: &[usize]) -> Vec<usize> {
        assert_eq!(coeffs.len(), vars.len(), "one coefficient per variable");
        let mut aux = Vec::new();
        for (&a, &x) in coeffs.iter().zip(vars) {
            if a == 0.0 {
                continue;
            }
            let t = self.add_variables(1, 0.0, f64::INFINITY, 1.0);
            self.add_inequality(vec![(x, a), (t, -1.0)], 0.0);
            self.add_inequality(vec![(x, -a), (t, -1.0)], 0.0);
            aux.push(t);
        }
        aux
    }

    /// Program in CPLEX LP text format. The objective constant is written as a comment.
    pub fn to_lp_format(&self) -> String {
        let var = |j: usize| format!("x{j}");
        let term = |a: f64, name: String, first: bool| {
            if first {
                format!("{a} {name}")
            } else if a < 0.0 {
                format!("- {} {name}", -a)
            } else {
                format!("+ {a} {name}")
            }
        };
        let mut out = String::new();
        if self.constant != 0.0 {
            let _ = writeln!(out, "\\ objective constant: {}", self.constant);
        }
        out.push_str("Minimize\n obj:");
        let mut first = true;
        for (j, &c) in self.linear.iter().enumerate() {
            if c != 0.0 {
                out.push(' ');
                out.push_str(&term(c, var(j), first));
                first = false;
            }
        }
        if !self.is_linear() {
            out.push_str(if first { " [" } else { " + [" });
            let mut qfirst = true;
            for (&(i, j), &v) in &self.quadratic {
                if v == 0.0 {
                    continue;
                }
                let (coeff, name) = if i == j {
                    (v, format!("{} ^ 2", var(i)))
                } else {
                    (2.0 * v, format!("{} * {}", var(i), var(j)))
                };
                out.push(' ');
                out.push_str(&term(coeff, name, qfirst));
                qfirst = false;
            }
            out.push_str(" ] / 2");
            first = false;
        }
        if first {
            out.push_str(" 0 x0");
        }
        out.push_str("\nSubject To\n");
        let rows = self
            .equalities
            .iter()
            .map(|c| ("e", "=", c))
            .chain(self.inequalities.iter().map(|c| ("i", "<=", c)));
        let mut counts = [0usize; 2];
        for (prefix, sense, c) in rows {
            let idx = if prefix == "e" { 0 } else { 1 };
            let _ = write!(out, " {prefix}{}:", counts[idx]);
            counts[idx] += 1;
            if c.coeffs.is_empty() {
                out.push_str(" 0 x0");
            }
            for (k, &(j, a)) in c.coeffs.iter().enumerate() {
                out.push(' ');
                out.push_str(&term(a, var(j), k == 0));
            }
            let _ = writeln!(out, " {sense} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            let name = var(j);
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {name} free");
                }
                (true, false) => {
                    let _ = writeln!(out, " {name} >= {lo}");
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {name} <= {hi}");
                }
                (true, true) => {
                    let _ = writeln!(out, " {lo} <= {name} <= {hi}");
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Copy of `program` with an l1 penalty on the given variables; see
/// [`ConvexProgram::add_l1_term`].
pub fn l1_epigraph(program: &ConvexProgram, coeffs: &[f64], vars: &[usize]) -> ConvexProgram {
    let mut p = program.clone();
    p.add_l1_term(coeffs, vars);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Objective at `x`, including the constant term.
    pub objective: f64,
    /// Dual objective reported by the solver, including the constant term.
    pub dual_objective: Option<f64>,
    pub iterations: u32,
    pub solve_seconds: f64,
    pub max_residual: f64,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    /// CSC matrix with duplicate entries summed.
    fn into_csc(self, m: usize, n: usize) -> CscMatrix<f64> {
        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for ((r, c), v) in self.rows.into_iter().zip(self.cols).zip(self.vals) {
            *entries.entry((c, r)).or_insert(0.0) += v;
        }
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(entries.len());
        let mut nzval = Vec::with_capacity(entries.len());
        for (&(c, r), &v) in &entries {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }
}

pub fn solve(program: &ConvexProgram) -> Result<Solution> {
    program.validate()?;
    let n = program.num_vars();

    let mut p = Triplets::new();
    for (&(i, j), &v) in &program.quadratic {
        p.push(i, j, v);
    }
    let p = p.into_csc(n, n);

    let mut a = Triplets::new();
    let mut b = Vec::new();
    let mut row = 0;
    for c in &program.equalities {
        for &(j, v) in &c.coeffs {
            a.push(row, j, v);
        }
        b.push(c.rhs);
        row += 1;
    }
    for j in 0..n {
        if program.lower[j] == program.upper[j] {
            a.push(row, j, 1.0);
            b.push(program.lower[j]);
            row += 1;
        }
    }
    let zero_rows = row;
    for c in &program.inequalities {
        for &(j, v) in &c.coeffs {
            a.push(row, j, v);
        }
        b.push(c.rhs);
        row += 1;
    }
    for j in 0..n {
        let (lo, hi) = (program.lower[j], program.upper[j]);
        if lo == hi {
            continue;
        }
        if lo.is_finite() {
            a.push(row, j, -1.0);
            b.push(-lo);
            row += 1;
        }
        if hi.is_finite() {
            a.push(row, j, 1.0);
            b.push(hi);
            row += 1;
        }
    }
    let a = a.into_csc(row, n);
    let mut cones = Vec::new();
    if zero_rows > 0 {
        cones.push(SupportedConeT::ZeroConeT(zero_rows));
    }
    if row > zero_rows {
        cones.push(SupportedConeT::NonnegativeConeT(row - zero_rows));
    }

    let failure = |iterations, solve_seconds| Solution {
        status: SolveStatus::NumericFailure,
        x: vec![0.0; n],
        objective: f64::NAN,
        dual_objective: None,
        iterations,
        solve_seconds,
        max_residual: f64::INFINITY,
    };

    let mut iterations = 0;
    let mut seconds = 0.0;
    let mut last = None;
    for tol in SOLVER_TOLS {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(SOLVER_MAX_ITER)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            .build()
            .map_err(|e| Error::SolverFailure(format!("settings: {e:?}")))?;
        let mut solver = match DefaultSolver::new(&p, &program.linear, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("solver setup failed: {e:?}");
                return Ok(failure(0, 0.0));
            }
        };
        solver.solve();
        iterations += solver.solution.iterations;
        seconds += solver.solution.solve_time;
        let stalled = matches!(
            solver.solution.status,
            SolverStatus::InsufficientProgress | SolverStatus::MaxIterations | SolverStatus::NumericalError
        );
        last = Some(solver);
        if !stalled {
            break;
        }
    }
    let solver = last.expect("at least one tolerance level");
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericFailure,
    };
    if status != SolveStatus::Optimal {
        let mut out = failure(iterations, seconds);
        out.status = status;
        return Ok(out);
    }
    let x = sol.x.clone();
    if x.iter().any(|v| !v.is_finite()) {
        return Ok(failure(iterations, seconds));
    }
    let max_residual = program.max_residual(&x);
    if max_residual > FEASIBILITY_TOL {
        log::warn!("solver reported {:?} but residual is {max_residual:e}", sol.status);
        return Ok(failure(iterations, seconds));
    }
    Ok(Solution {
        status,
        objective: program.objective(&x),
        dual_objective: Some(sol.obj_val_dual + program.constant),
        x,
        iterations,
        solve_seconds: seconds,
        max_residual,
    })
}
