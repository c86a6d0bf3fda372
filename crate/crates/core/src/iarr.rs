//! Single-step rebalancing baseline solved from the current state.
//!
//! The program per step, over links `k` and zones `r`:
//!
//! ```text
//! min  T'R - λ'U - ω 1'V' + ρ 1'σ
//! s.t. E_out(V' + R) <= P + E_in T̃⁻¹ F          (anticipated availability)
//!      λ <= U <= max(W, λ),  0 <= V' <= W,  V' <= U,  R >= 0
//!      (E R)_r + σ_r >= ē - e_r,  σ >= 0
//! ```
//!
//! `e_r` is zone `r`'s anticipated availability minus its waiting customers
//! and `ē` their mean, so the last row asks every zone to end near the
//! average excess, with shortfalls priced at `ρ`. Without it the program
//! never rebalances, since `R` only adds cost. `V'` is the number of
//! customers the availability row must make room for; `ω > ρ` makes serving
//! the queue outrank rebalancing. The dispatch is `V = min(W, U)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Layout, StateVector};
use crate::mpc::FractionalAction;
use crate::network::CompleteNetwork;
use crate::solver::{self, ConvexProgram, SolveStatus};

/// Shortfall price relative to the longest travel time.
pub const SHORTFALL_SCALE: f64 = 10.0;
/// Service reward relative to the shortfall price.
pub const SERVICE_SCALE: f64 = 2.0;

const SNAP_TOL: f64 = 1e-7;

/// Values of the program's variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IarrPoint {
    pub rebalance: Vec<f64>,
    pub rate: Vec<f64>,
    pub served: Vec<f64>,
    pub shortfall: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IarrAction {
    pub point: IarrPoint,
    /// `min(W, U)`.
    pub dispatch: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub solve_seconds: f64,
}

impl IarrAction {
    pub fn fractional(&self) -> FractionalAction {
        FractionalAction {
            dispatch: self.dispatch.clone(),
            rebalance: self.point.rebalance.clone(),
        }
    }
}

struct Parts<'a> {
    waiting: &'a [f64],
    idle: &'a [f64],
    in_transit: &'a [f64],
}

fn parts<'a>(net: &CompleteNetwork, x: &'a StateVector, lambda: &[f64]) -> Result<Parts<'a>> {
    let lay = Layout::new(net.zone_count());
    for (what, expected, found) in [("state", lay.state_dim(), x.0.len()), ("rates", lay.links, lambda.len())] {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    Ok(Parts {
        waiting: x.waiting(&lay),
        idle: x.idle(&lay),
        in_transit: x.in_transit(&lay),
    })
}

/// `P + E_in T̃⁻¹ F` per zone.
pub fn anticipated_availability(net: &CompleteNetwork, idle: &[f64], in_transit: &[f64]) -> Vec<f64> {
    let t = net.travel_steps_f64();
    let lagged: Vec<f64> = in_transit.iter().zip(&t).map(|(f, t)| f / t).collect();
    net.inflow(&lagged).iter().zip(idle).map(|(a, p)| a + p).collect()
}

/// Right-hand side `ē - e_r` of the balance rows.
fn balance_targets(net: &CompleteNetwork, p: &Parts) -> Vec<f64> {
    let avail = anticipated_availability(net, p.idle, p.in_transit);
    let queued = net.outflow(p.waiting);
    let excess: Vec<f64> = avail.iter().zip(&queued).map(|(a, q)| a - q).collect();
    let mean = excess.iter().sum::<f64>() / excess.len() as f64;
    excess.iter().map(|e| mean - e).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct IarrLayout {
    pub links: usize,
    pub zones: usize,
}

impl IarrLayout {
    pub fn rebalance(&self, k: usize) -> usize {
        k
    }
    pub fn rate(&self, k: usize) -> usize {
        self.links + k
    }
    pub fn served(&self, k: usize) -> usize {
        2 * self.links + k
    }
    pub fn shortfall(&self, r: usize) -> usize {
        3 * self.links + r
    }

    pub fn flatten(&self, point: &IarrPoint) -> Vec<f64> {
        let mut x = point.rebalance.clone();
        x.extend_from_slice(&point.rate);
        x.extend_from_slice(&point.served);
        x.extend_from_slice(&point.shortfall);
        x
    }

    fn split(&self, x: &[f64]) -> IarrPoint {
        let m = self.links;
        IarrPoint {
            rebalance: x[..m].to_vec(),
            rate: x[m..2 * m].to_vec(),
            served: x[2 * m..3 * m].to_vec(),
            shortfall: x[3 * m..3 * m + self.zones].to_vec(),
        }
    }
}

/// The capped program for one state. `x`'s `W` block is the visible queue.
pub fn build_iarr_program(net: &CompleteNetwork, x: &StateVector, lambda: &[f64]) -> Result<(ConvexProgram, IarrLayout)> {
    let p = parts(net, x, lambda)?;
    let (m, n) = (net.link_count(), net.zone_count());
    let lay = IarrLayout { links: m, zones: n };
    let t = net.travel_steps_f64();
    let rho = SHORTFALL_SCALE * t.iter().fold(1.0f64, |a, &b| a.max(b));
    let omega = SERVICE_SCALE * rho;

    let mut prog = ConvexProgram::new(0);
    for &tk in &t {
        prog.add_variables(1, 0.0, f64::INFINITY, tk);
    }
    for (&l, &w) in lambda.iter().zip(p.waiting) {
        prog.add_variables(1, l, w.max(l), -l);
    }
    for &w in p.waiting {
        prog.add_variables(1, 0.0, w.max(0.0), -omega);
    }
    prog.add_variables(n, 0.0, f64::INFINITY, rho);

    for k in 0..m {
        prog.add_inequality(vec![(lay.served(k), 1.0), (lay.rate(k), -1.0)], 0.0);
    }
    let avail = anticipated_availability(net, p.idle, p.in_transit);
    let mut out_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut bal_rows: Vec<Vec<(usize, f64)>> = (0..n).map(|r| vec![(lay.shortfall(r), -1.0)]).collect();
    for (k, &(r, s)) in net.links().iter().enumerate() {
        out_rows[r].push((lay.served(k), 1.0));
        out_rows[r].push((lay.rebalance(k), 1.0));
        bal_rows[s].push((lay.rebalance(k), -1.0));
        bal_rows[r].push((lay.rebalance(k), 1.0));
    }
    for (row, a) in out_rows.into_iter().zip(&avail) {
        prog.add_inequality(row, *a);
    }
    for (row, target) in bal_rows.into_iter().zip(balance_targets(net, &p)) {
        prog.add_inequality(row, -target);
    }
    Ok((prog, lay))
}

/// The point `R = 0`, `U = λ`, `V' = 0` with the matching shortfall, which
/// satisfies every row. The dispatch is `min(W, λ)`.
pub fn iarr_feasible_fallback(net: &CompleteNetwork, x: &StateVector, lambda: &[f64]) -> Result<IarrAction> {
    let p = parts(net, x, lambda)?;
    let m = net.link_count();
    let point = IarrPoint {
        rebalance: vec![0.0; m],
        rate: lambda.to_vec(),
        served: vec![0.0; m],
        shortfall: balance_targets(net, &p).iter().map(|t| t.max(0.0)).collect(),
    };
    let dispatch = p.waiting.iter().zip(lambda).map(|(w, l)| w.min(*l).max(0.0)).collect();
    let (prog, lay) = build_iarr_program(net, x, lambda)?;
    Ok(IarrAction {
        objective: prog.objective(&lay.flatten(&point)),
        point,
        dispatch,
        status: SolveStatus::Optimal,
        solve_seconds: 0.0,
    })
}

/// Largest violation of the program's rows and bounds at `point`.
pub fn iarr_residual(net: &CompleteNetwork, x: &StateVector, lambda: &[f64], point: &IarrPoint) -> Result<f64> {
    let (prog, lay) = build_iarr_program(net, x, lambda)?;
    Ok(prog.max_residual(&lay.flatten(point)))
}

pub fn solve_iarr_step(net: &CompleteNetwork, x: &StateVector, lambda: &[f64]) -> Result<IarrAction> {
    let (prog, lay) = build_iarr_program(net, x, lambda)?;
    let sol = solver::solve(&prog)?;
    if !sol.is_optimal() {
        // The fallback point is feasible and the objective is bounded below, so
        // only a numerical breakdown lands here.
        log::warn!("iarr solve ended {:?}; using the fallback point", sol.status);
        let mut fb = iarr_feasible_fallback(net, x, lambda)?;
        fb.status = sol.status;
        return Ok(fb);
    }
    // Interior-point iterates stop just short of active bounds; snap them.
    let (lo, hi) = (prog.lower_bounds(), prog.upper_bounds());
    let values: Vec<f64> = sol
        .x
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let v = v.clamp(lo[j], hi[j]);
            if v - lo[j] < SNAP_TOL {
                lo[j]
            } else if hi[j] - v < SNAP_TOL {
                hi[j]
            } else {
                v
            }
        })
        .collect();
    let point = lay.split(&values);
    let waiting = x.waiting(&Layout::new(net.zone_count()));
    let dispatch = waiting.iter().zip(&point.rate).map(|(w, u)| w.min(*u).max(0.0)).collect();
    Ok(IarrAction {
        point,
        dispatch,
        status: sol.status,
        objective: sol.objective,
        solve_seconds: sol.solve_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net2() -> CompleteNetwork {
        CompleteNetwork::from_links(2, vec![2, 2], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn nothing_to_do() {
        let net = net2();
        let lay = Layout::new(2);
        let x = lay.state(&[0.0, 0.0], &[5.0, 5.0], &[0.0, 0.0]);
        let a = solve_iarr_step(&net, &x, &[0.3, 0.6]).unwrap();
        assert!(a.point.rebalance.iter().all(|r| r.abs() < 1e-7), "{:?}", a.point);
        assert!((a.point.rate[0] - 0.3).abs() < 1e-7 && (a.point.rate[1] - 0.6).abs() < 1e-7);
        assert!(a.dispatch.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn vehicles_move_toward_the_queue() {
        let net = net2();
        let lay = Layout::new(2);
        // Six idle at zone 1 (index 0), none at zone 2 where four customers wait.
        let x = lay.state(&[0.0, 4.0], &[6.0, 0.0], &[0.0, 0.0]);
        let a = solve_iarr_step(&net, &x, &[0.5, 0.5]).unwrap();
        // Excess 6 and -4, mean 1: zone 2 asks for 5 and zone 1 can spare 5.
        assert!((a.point.rebalance[0] - 5.0).abs() < 1e-6, "{:?}", a.point);
        assert!(a.point.rebalance[1].abs() < 1e-7);
        assert_eq!(a.dispatch, vec![0.0, 4.0]);
    }

    #[test]
    fn availability_binds() {
        let net = CompleteNetwork::from_links(3, vec![1, 2, 3, 1, 2, 3], vec![1.0; 6]).unwrap();
        let lay = Layout::new(3);
        let x = lay.state(&[3.0, 2.0, 0.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 9.0], &[0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let a = solve_iarr_step(&net, &x, &[0.2; 6]).unwrap();
        let out = net.outflow(&a.point.served.iter().zip(&a.point.rebalance).map(|(v, r)| v + r).collect::<Vec<_>>());
        let avail = anticipated_availability(&net, x.idle(&lay), x.in_transit(&lay));
        for (o, av) in out.iter().zip(&avail) {
            assert!(*o <= av + 1e-6);
        }
        assert!(iarr_residual(&net, &x, &[0.2; 6], &a.point).unwrap() <= 1e-6);
    }

    #[test]
    fn fallback_is_feasible() {
        let net = CompleteNetwork::from_links(3, vec![1, 2, 3, 1, 2, 3], vec![1.0; 6]).unwrap();
        let lay = Layout::new(3);
        let lambda = [0.2, 0.0, 1.5, 0.1, 0.4, 0.3];
        let x = lay.state(&[3.0, 0.0, 1.0, 0.0, 7.0, 0.0], &[0.0, 2.0, 0.0], &[4.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let fb = iarr_feasible_fallback(&net, &x, &lambda).unwrap();
        assert!(iarr_residual(&net, &x, &lambda, &fb.point).unwrap() <= 1e-9);
        assert_eq!(fb.dispatch, vec![0.2, 0.0, 1.0, 0.0, 0.4, 0.0]);
        let zero = lay.state(&[0.0; 6], &[0.0; 3], &[0.0; 6]);
        let fb = iarr_feasible_fallback(&net, &zero, &[0.0; 6]).unwrap();
        assert!(fb.dispatch.iter().chain(&fb.point.rebalance).all(|&v| v == 0.0));
    }
}
