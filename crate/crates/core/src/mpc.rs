//! Receding-horizon regulator around an equilibrium reference.
//!
//! Decision variables are the input deviations `Δv_0 .. Δv_{N-1}` followed by
//! the predicted state deviations `Δx_1 .. Δx_N`. Predicted arrivals equal
//! `λ`, so the deviation dynamics carry no disturbance. The measured state
//! handed to the controller has its `W` block equal to the queue visible to
//! the current dispatch (this step's arrivals included), which makes
//! `Δx_0`'s `W` block `queue - λ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{active_lambda, DemandScenario};
use crate::error::{Error, Result};
use crate::model::{Layout, LtiModel, StateVector};
use crate::network::CompleteNetwork;
use crate::plant::ControlAction;
use crate::reference::{solve_reference, CostKind, EquilibriumReference};
use crate::solver::{self, ConvexProgram, SolveStatus};

/// Soft terminal weight relative to the largest stage weight.
pub const SOFT_TERMINAL_SCALE: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    HardZero,
    SoftPenalty(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub cost_kind: CostKind,
    pub reference_kind: CostKind,
    pub terminal_mode: TerminalMode,
    pub rounding_seed: u64,
}

impl MpcConfig {
    pub fn new(horizon: usize, cost_kind: CostKind, reference_kind: CostKind) -> Self {
        Self {
            horizon,
            cost_kind,
            reference_kind,
            terminal_mode: TerminalMode::HardZero,
            rounding_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let TerminalMode::SoftPenalty(w) = self.terminal_mode {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Config(format!("soft terminal weight must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Diagonal stage weights: `λ` on the queue block of the state, `T` on the
/// rebalancing block of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub queue: Vec<f64>,
    pub rebalance: Vec<f64>,
}

impl Weights {
    pub fn new(lambda: &[f64], travel_steps: &[f64]) -> Self {
        Self {
            queue: lambda.to_vec(),
            rebalance: travel_steps.to_vec(),
        }
    }

    pub fn max_stage_weight(&self) -> f64 {
        self.queue.iter().chain(&self.rebalance).fold(0.0f64, |m, &w| m.max(w))
    }

    /// Full `Q` over the state layout.
    pub fn q_diagonal(&self, layout: &Layout) -> Vec<f64> {
        let mut q = vec![0.0; layout.state_dim()];
        q[layout.waiting()].copy_from_slice(&self.queue);
        q
    }

    /// Full `S` over the input layout.
    pub fn s_diagonal(&self, layout: &Layout) -> Vec<f64> {
        let mut s = vec![0.0; layout.input_dim()];
        s[layout.rebalance()].copy_from_slice(&self.rebalance);
        s
    }
}

#[derive(Debug, Clone)]
pub struct HorizonProgram {
    pub program: ConvexProgram,
    pub layout: Layout,
    pub horizon: usize,
    pub terminal: TerminalMode,
}

impl HorizonProgram {
    /// Variable index of input deviation `k` at stage `i`.
    pub fn dv(&self, i: usize, k: usize) -> usize {
        i * self.layout.input_dim() + k
    }

    /// Variable index of state deviation `k` at stage `i`, `1 <= i <= N`.
    pub fn dx(&self, i: usize, k: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.horizon);
        self.horizon * self.layout.input_dim() + (i - 1) * self.layout.state_dim() + k
    }

    pub fn first_input(&self, x: &[f64]) -> Vec<f64> {
        x[..self.layout.input_dim()].to_vec()
    }

    pub fn terminal_residual(&self, x: &[f64]) -> f64 {
        (0..self.layout.state_dim())
            .map(|k| x[self.dx(self.horizon, k)].abs())
            .fold(0.0, f64::max)
    }
}

fn sparse_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).filter(|&j| m[(i, j)] != 0.0).map(|j| (j, m[(i, j)])).collect())
        .collect()
}

/// `Δx_0` for a measured state whose `W` block is the visible queue.
pub fn initial_deviation(model: &LtiModel, reference: &EquilibriumReference, x_now: &StateVector) -> Result<Vec<f64>> {
    let lay = *model.layout();
    if x_now.0.len() != lay.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: lay.state_dim(),
            found: x_now.0.len(),
        });
    }
    let x_bar = reference.state(&lay);
    let mut dx0: Vec<f64> = x_now.0.iter().zip(&x_bar.0).map(|(a, b)| a - b).collect();
    for (d, l) in dx0[lay.waiting()].iter_mut().zip(&reference.lambda) {
        *d -= l;
    }
    Ok(dx0)
}

pub fn build_horizon_program(
    model: &LtiModel,
    reference: &EquilibriumReference,
    x_now: &StateVector,
    cfg: &MpcConfig,
) -> Result<HorizonProgram> {
    cfg.validate()?;
    let lay = *model.layout();
    let (nx, nv, m, n, big_n) = (lay.state_dim(), lay.input_dim(), lay.links, lay.zones, cfg.horizon);
    let dx0 = initial_deviation(model, reference, x_now)?;
    let x_bar = reference.state(&lay);
    let v_bar = reference.input(&lay);
    let weights = Weights::new(&reference.lambda, model.travel_steps());

    let mut prog = ConvexProgram::new(0);
    for _ in 0..big_n {
        for k in 0..nv {
            prog.add_variables(1, -v_bar.0[k], f64::INFINITY, 0.0);
        }
    }
    for i in 1..=big_n {
        for k in 0..nx {
            let (lo, hi) = if i == big_n && cfg.terminal_mode == TerminalMode::HardZero {
                (0.0, 0.0)
            } else {
                (-x_bar.0[k], f64::INFINITY)
            };
            prog.add_variables(1, lo, hi, 0.0);
        }
    }
    let hp = HorizonProgram {
        program: ConvexProgram::new(0),
        layout: lay,
        horizon: big_n,
        terminal: cfg.terminal_mode,
    };

    // Dynamics: Δx_{i+1} - A Δx_i - B Δv_i = 0, with A Δx_0 moved to the right.
    let a_rows = sparse_rows(model.a());
    let b_rows = sparse_rows(model.b());
    for i in 0..big_n {
        for j in 0..nx {
            let mut row = vec![(hp.dx(i + 1, j), 1.0)];
            let mut rhs = 0.0;
            for &(c, a) in &a_rows[j] {
                if i == 0 {
                    rhs += a * dx0[c];
                } else {
                    row.push((hp.dx(i, c), -a));
                }
            }
            for &(c, b) in &b_rows[j] {
                row.push((hp.dv(i, c), -b));
            }
            prog.add_equality(row, rhs);
        }
    }

    // Availability: sum_s V_rs + R_rs <= P_r at every stage.
    let mut out_bar = vec![0.0; n];
    let mut out_links: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(r, _)) in model_links(n).iter().enumerate() {
        out_bar[r] += v_bar.0[k] + v_bar.0[m + k];
        out_links[r].push(k);
    }
    for i in 0..big_n {
        for r in 0..n {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * out_links[r].len() + 1);
            for &k in &out_links[r] {
                row.push((hp.dv(i, k), 1.0));
                row.push((hp.dv(i, m + k), 1.0));
            }
            let p = lay.idle().start + r;
            let rhs = if i == 0 {
                x_bar.0[p] + dx0[p] - out_bar[r]
            } else {
                row.push((hp.dx(i, p), -1.0));
                x_bar.0[p] - out_bar[r]
            };
            prog.add_inequality(row, rhs);
        }
    }

    let queue_block = lay.waiting();
    let w_at_zero = reference.w_bar.iter().all(|&w| w == 0.0);
    match cfg.cost_kind {
        CostKind::Quadratic => {
            for (k, &q) in weights.queue.iter().enumerate() {
                prog.add_constant(q * dx0[queue_block.start + k].powi(2));
                for i in 1..big_n {
                    prog.add_quadratic(hp.dx(i, queue_block.start + k), hp.dx(i, queue_block.start + k), 2.0 * q);
                }
            }
            for i in 0..big_n {
                for (k, &s) in weights.rebalance.iter().enumerate() {
                    prog.add_quadratic(hp.dv(i, m + k), hp.dv(i, m + k), 2.0 * s);
                }
            }
        }
        CostKind::Linear => {
            for (k, &q) in weights.queue.iter().enumerate() {
                prog.add_constant(q * dx0[queue_block.start + k].abs());
            }
            for i in 1..big_n {
                let vars: Vec<usize> = queue_block.clone().map(|k| hp.dx(i, k)).collect();
                if w_at_zero {
                    // ΔW = W >= 0 here, so its absolute value is linear.
                    for (&v, &q) in vars.iter().zip(&weights.queue) {
                        prog.add_linear_cost(v, q);
                    }
                } else {
                    prog.add_l1_term(&weights.queue, &vars);
                }
            }
            for i in 0..big_n {
                let vars: Vec<usize> = (0..m).map(|k| hp.dv(i, m + k)).collect();
                prog.add_l1_term(&weights.rebalance, &vars);
            }
        }
    }
    if let TerminalMode::SoftPenalty(w) = cfg.terminal_mode {
        for k in 0..nx {
            let v = hp.dx(big_n, k);
            prog.add_quadratic(v, v, 2.0 * w);
        }
    }

    Ok(HorizonProgram { program: prog, ..hp })
}

fn model_links(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|r| (0..n).filter(move |&s| s != r).map(move |s| (r, s))).collect()
}

/// A dispatch decision before integer rounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalAction {
    pub dispatch: Vec<f64>,
    pub rebalance: Vec<f64>,
}

impl FractionalAction {
    pub fn zero(links: usize) -> Self {
        Self {
            dispatch: vec![0.0; links],
            rebalance: vec![0.0; links],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcDiagnostics {
    pub status: SolveStatus,
    pub objective: f64,
    pub terminal_residual: f64,
    /// The hard terminal constraint was infeasible and the penalty form was used.
    pub soft_terminal: bool,
    /// The solver failed and the zero action was emitted.
    pub fallback: bool,
    pub iterations: u32,
    pub solve_seconds: f64,
}

/// Clamps `V` to `[0, queue]` and `R` to `>= 0`, then scales down each
/// zone's outflow to its idle vehicles, rebalancing first.
pub fn project_action(net: &CompleteNetwork, action: &mut FractionalAction, queue: &[f64], idle: &[f64]) {
    for (v, &w) in action.dispatch.iter_mut().zip(queue) {
        *v = v.clamp(0.0, w.max(0.0));
    }
    for r in action.rebalance.iter_mut() {
        *r = r.max(0.0);
    }
    let n = net.zone_count();
    let mut sum_v = vec![0.0; n];
    let mut sum_r = vec![0.0; n];
    for (k, &(r, _)) in net.links().iter().enumerate() {
        sum_v[r] += action.dispatch[k];
        sum_r[r] += action.rebalance[k];
    }
    for (k, &(r, _)) in net.links().iter().enumerate() {
        let cap = idle[r].max(0.0);
        if sum_v[r] + sum_r[r] <= cap {
            continue;
        }
        if sum_v[r] <= cap {
            action.rebalance[k] *= (cap - sum_v[r]) / sum_r[r];
        } else {
            action.rebalance[k] = 0.0;
            action.dispatch[k] *= cap / sum_v[r];
        }
    }
}

/// Builds and solves the horizon program. A hard terminal constraint that
/// cannot be met is reported as [`Error::InfeasibleHorizon`].
pub fn solve_horizon(
    model: &LtiModel,
    reference: &EquilibriumReference,
    x_now: &StateVector,
    cfg: &MpcConfig,
) -> Result<(HorizonProgram, solver::Solution)> {
    let hp = build_horizon_program(model, reference, x_now, cfg)?;
    let sol = solver::solve(&hp.program)?;
    if sol.status == SolveStatus::Infeasible && cfg.terminal_mode == TerminalMode::HardZero {
        return Err(Error::InfeasibleHorizon);
    }
    Ok((hp, sol))
}

/// One controller step: solve, fall back to the soft terminal if the hard
/// one is infeasible or fails numerically, and return `v̄ + Δv_0` projected onto the measured
/// state. `x_now`'s `W` block is the visible queue.
pub fn solve_mpc_step(
    model: &LtiModel,
    net: &CompleteNetwork,
    reference: &EquilibriumReference,
    x_now: &StateVector,
    cfg: &MpcConfig,
) -> Result<(FractionalAction, MpcDiagnostics)> {
    let lay = *model.layout();
    let hard = cfg.terminal_mode == TerminalMode::HardZero;
    let first = match solve_horizon(model, reference, x_now, cfg) {
        // A hard terminal the solver cannot settle is treated like an infeasible one.
        Ok((hp, sol)) if sol.is_optimal() || !hard => Some((hp, sol)),
        Ok(_) | Err(Error::InfeasibleHorizon) => None,
        Err(e) => return Err(e),
    };
    let (hp, sol, soft) = match first {
        Some((hp, sol)) => (hp, sol, false),
        None => {
            let weight = SOFT_TERMINAL_SCALE * Weights::new(&reference.lambda, model.travel_steps()).max_stage_weight().max(1.0);
            let relaxed = MpcConfig {
                terminal_mode: TerminalMode::SoftPenalty(weight),
                ..*cfg
            };
            let (hp, sol) = solve_horizon(model, reference, x_now, &relaxed)?;
            (hp, sol, true)
        }
    };
    let m = lay.links;
    if !sol.is_optimal() {
        log::warn!("mpc solve ended {:?}; emitting zero action", sol.status);
        return Ok((
            FractionalAction::zero(m),
            MpcDiagnostics {
                status: sol.status,
                objective: f64::NAN,
                terminal_residual: f64::NAN,
                soft_terminal: soft,
                fallback: true,
                iterations: sol.iterations,
                solve_seconds: sol.solve_seconds,
            },
        ));
    }
    let dv0 = hp.first_input(&sol.x);
    let v_bar = reference.input(&lay);
    let mut action = FractionalAction {
        dispatch: (0..m).map(|k| v_bar.0[k] + dv0[k]).collect(),
        rebalance: (0..m).map(|k| v_bar.0[m + k] + dv0[m + k]).collect(),
    };
    project_action(net, &mut action, x_now.waiting(&lay), x_now.idle(&lay));
    Ok((
        action,
        MpcDiagnostics {
            status: sol.status,
            objective: sol.objective,
            terminal_residual: hp.terminal_residual(&sol.x),
            soft_terminal: soft,
            fallback: false,
            iterations: sol.iterations,
            solve_seconds: sol.solve_seconds,
        },
    ))
}

/// Rounds every entry up with probability equal to its fractional part, then
/// repairs the result against the integer queue and idle vehicles. Repair
/// removes one vehicle at a time from over-committed zones: rebalancing
/// entries before dispatch entries, and within each kind the entries with
/// the smallest fractional part first, cycling until the zone fits.
pub fn randomized_round<R: Rng + ?Sized>(
    net: &CompleteNetwork,
    action: &FractionalAction,
    queue: &[u32],
    idle: &[u32],
    rng: &mut R,
) -> ControlAction {
    randomized_round_counted(net, action, queue, idle, rng).0
}

/// [`randomized_round`] that also returns how many vehicle units the repair removed.
pub fn randomized_round_counted<R: Rng + ?Sized>(
    net: &CompleteNetwork,
    action: &FractionalAction,
    queue: &[u32],
    idle: &[u32],
    rng: &mut R,
) -> (ControlAction, u32) {
    let round = |x: f64, rng: &mut R| -> (u32, f64) {
        let x = x.max(0.0);
        let base = x.floor();
        let frac = x - base;
        let up = frac > 0.0 && rng.random::<f64>() < frac;
        (base as u32 + u32::from(up), frac)
    };
    let m = net.link_count();
    let mut dispatch = Vec::with_capacity(m);
    let mut dispatch_frac = Vec::with_capacity(m);
    for (k, &x) in action.dispatch.iter().enumerate() {
        let (v, f) = round(x, rng);
        dispatch.push(v.min(queue[k]));
        dispatch_frac.push(f);
    }
    let mut rebalance = Vec::with_capacity(m);
    let mut rebalance_frac = Vec::with_capacity(m);
    for &x in &action.rebalance {
        let (v, f) = round(x, rng);
        rebalance.push(v);
        rebalance_frac.push(f);
    }

    let mut out: Vec<Vec<usize>> = vec![Vec::new(); net.zone_count()];
    for (k, &(r, _)) in net.links().iter().enumerate() {
        out[r].push(k);
    }
    let mut removed = 0;
    for (r, links) in out.iter().enumerate() {
        let mut total: u64 = links.iter().map(|&k| dispatch[k] as u64 + rebalance[k] as u64).sum();
        let cap = idle[r] as u64;
        for (entries, fracs) in [(&mut rebalance, &rebalance_frac), (&mut dispatch, &dispatch_frac)] {
            let mut order = links.clone();
            order.sort_by(|&a, &b| fracs[a].total_cmp(&fracs[b]).then(a.cmp(&b)));
            while total > cap && order.iter().any(|&k| entries[k] > 0) {
                for &k in &order {
                    if total > cap && entries[k] > 0 {
                        entries[k] -= 1;
                        total -= 1;
                        removed += 1;
                    }
                }
            }
        }
    }
    (ControlAction { dispatch, rebalance }, removed)
}

/// Reference for the demand block active at `step`.
pub fn refresh_reference(
    scenario: &DemandScenario,
    step: usize,
    net: &CompleteNetwork,
    cfg: &MpcConfig,
    fleet: f64,
) -> Result<EquilibriumReference> {
    let lambda = active_lambda(scenario, step)?;
    solve_reference(net, lambda, cfg.reference_kind, fleet)
}
