//! Equilibrium references for the linear model and the rebalancing program
//! that selects them.
//!
//! For a rate vector `λ`, any `R̄ >= 0` with `E(R̄ + λ) = 0` defines a fixed
//! point of the model with arrivals `λ`: no queue, `V̄ = λ`, `F̄ = T̃(λ + R̄)`.
//! The vehicles not in transit, `M - 1'F̄`, are spread evenly over the zones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InputVector, Layout, StateVector};
use crate::network::CompleteNetwork;
use crate::solver::{self, ConvexProgram, SolveStatus, BALANCE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `T'R`, the travel-time weighted l1 norm of `R >= 0`.
    Linear,
    /// `sum_i T_i R_i^2`.
    Quadratic,
}

impl CostKind {
    pub fn evaluate(self, travel_steps: &[f64], rebalance: &[f64]) -> f64 {
        let it = travel_steps.iter().zip(rebalance);
        match self {
            CostKind::Linear => it.map(|(t, r)| t * r).sum(),
            CostKind::Quadratic => it.map(|(t, r)| t * r * r).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReference {
    pub cost_kind: CostKind,
    pub lambda: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub f_bar: Vec<f64>,
    pub v_bar: Vec<f64>,
    pub r_bar: Vec<f64>,
    /// `1'F̄`, vehicles needed on the road to sustain the equilibrium.
    pub m_min: f64,
    pub fleet: f64,
    /// Rebalancing cost of `R̄` under `cost_kind`.
    pub cost: f64,
}

impl EquilibriumReference {
    pub fn state(&self, layout: &Layout) -> StateVector {
        layout.state(&self.w_bar, &self.p_bar, &self.f_bar)
    }

    pub fn input(&self, layout: &Layout) -> InputVector {
        layout.input(&self.v_bar, &self.r_bar)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn min_fleet_size(reference: &EquilibriumReference) -> f64 {
    reference.m_min
}

/// Max-norm of `E(R + λ)`.
pub fn balance_residual(net: &CompleteNetwork, lambda: &[f64], rebalance: &[f64]) -> f64 {
    let total: Vec<f64> = lambda.iter().zip(rebalance).map(|(l, r)| l + r).collect();
    net.net_inflow(&total).iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_rates(net: &CompleteNetwork, what: &'static str, xs: &[f64]) -> Result<()> {
    if xs.len() != net.link_count() {
        return Err(Error::DimensionMismatch {
            what,
            expected: net.link_count(),
            found: xs.len(),
        });
    }
    if xs.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidScenario(format!("{what} must be finite and nonnegative")));
    }
    Ok(())
}

/// Assembles the reference for a given balanced `R`.
pub fn equilibrium_from_rebalance(
    net: &CompleteNetwork,
    lambda: &[f64],
    rebalance: &[f64],
    cost_kind: CostKind,
    fleet: f64,
) -> Result<EquilibriumReference> {
    check_rates(net, "rates", lambda)?;
    check_rates(net, "rebalancing", rebalance)?;
    let residual = balance_residual(net, lambda, rebalance);
    if residual > BALANCE_TOL {
        return Err(Error::NotBalanced { residual });
    }
    let t = net.travel_steps_f64();
    let f_bar: Vec<f64> = t
        .iter()
        .zip(lambda.iter().zip(rebalance))
        .map(|(t, (l, r))| t * (l + r))
        .collect();
    let m_min: f64 = f_bar.iter().sum();
    let n = net.zone_count();
    let slack = ((fleet - m_min) / n as f64).max(0.0);
    Ok(EquilibriumReference {
        cost_kind,
        lambda: lambda.to_vec(),
        w_bar: vec![0.0; lambda.len()],
        p_bar: vec![slack; n],
        f_bar,
        v_bar: lambda.to_vec(),
        r_bar: rebalance.to_vec(),
        m_min,
        fleet,
        cost: cost_kind.evaluate(&t, rebalance),
    })
}

/// Removes the interior-point residue from a numerically balanced `R`:
/// negatives are zeroed, then every zone's leftover imbalance is shipped to
/// or from zone 0. Only nonnegative amounts of the size of the residue are
/// added.
fn polish(net: &CompleteNetwork, lambda: &[f64], rebalance: &mut [f64]) {
    for r in rebalance.iter_mut() {
        *r = r.max(0.0);
    }
    let total: Vec<f64> = lambda.iter().zip(rebalance.iter()).map(|(l, r)| l + r).collect();
    let excess = net.net_inflow(&total);
    for (z, &q) in excess.iter().enumerate().skip(1) {
        if q > 0.0 {
            rebalance[net.link_index(z, 0)] += q;
        } else if q < 0.0 {
            rebalance[net.link_index(0, z)] -= q;
        }
    }
}

/// Interior-point iterates approach zero entries only asymptotically. Pins
/// the near-zero entries to zero and re-solves; the result is kept when it
/// is no worse than the original.
fn refine_active_set(prog: &ConvexProgram, x: Vec<f64>, objective: f64, lambda: &[f64]) -> Vec<f64> {
    let scale = lambda.iter().fold(1.0f64, |m, &l| m.max(l));
    let tau = 1e-5 * scale;
    if x.iter().all(|&v| v > tau) {
        return x;
    }
    let mut pinned = prog.clone();
    for (k, &v) in x.iter().enumerate() {
        if v <= tau {
            pinned.set_bounds(k, 0.0, 0.0);
        }
    }
    match solver::solve(&pinned) {
        Ok(sol) if sol.is_optimal() && sol.objective <= objective + 1e-9 * (1.0 + objective.abs()) => sol.x,
        _ => x,
    }
}

/// Cheapest balanced rebalancing flow for `λ` under `cost`, and its reference.
pub fn solve_reference(
    net: &CompleteNetwork,
    lambda: &[f64],
    cost: CostKind,
    fleet: f64,
) -> Result<EquilibriumReference> {
    check_rates(net, "rates", lambda)?;
    let m = net.link_count();
    if lambda.iter().all(|&l| l == 0.0) {
        return equilibrium_from_rebalance(net, lambda, &vec![0.0; m], cost, fleet);
    }

    let t = net.travel_steps_f64();
    let mut prog = ConvexProgram::new(0);
    prog.add_variables(m, 0.0, f64::INFINITY, 0.0);
    for k in 0..m {
        match cost {
            CostKind::Linear => prog.add_linear_cost(k, t[k]),
            CostKind::Quadratic => prog.add_quadratic(k, k, 2.0 * t[k]),
        }
    }
    // Node balance: (E R)_z = -(E λ)_z. The rows sum to zero, so the last one is dropped.
    let rhs = net.net_inflow(lambda);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.zone_count()];
    for (k, &(r, s)) in net.links().iter().enumerate() {
        rows[s].push((k, 1.0));
        rows[r].push((k, -1.0));
    }
    rows.pop();
    for (z, row) in rows.into_iter().enumerate() {
        prog.add_equality(row, -rhs[z]);
    }

    let sol = solver::solve(&prog)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::Infeasible),
        other => return Err(Error::SolverFailure(format!("rebalancing program ended {other:?}"))),
    }
    let mut r_bar = refine_active_set(&prog, sol.x, sol.objective, lambda);
    polish(net, lambda, &mut r_bar);
    equilibrium_from_rebalance(net, lambda, &r_bar, cost, fleet)
}
