//! Ground-truth simulator of the exact time-delay fleet dynamics.
//!
//! Each step runs in a fixed order: the step's arrivals join the FIFO queue
//! of their origin-destination pair, the action is checked against the
//! resulting queue and the idle vehicles, customers board, vehicles depart as
//! cohorts, and cohorts due at the next step become idle at their
//! destination. A dispatch may therefore serve a customer who arrived in the
//! same step (`V <= W + d`).

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use crate::demand::ArrivalBatch;
use crate::error::{Error, Result};
use crate::network::CompleteNetwork;

/// Integer fleet state: waiting customers per link, idle vehicles per zone,
/// vehicles traveling per link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SystemState {
    pub waiting: Vec<u32>,
    pub idle: Vec<u32>,
    pub in_transit: Vec<u32>,
}

impl SystemState {
    /// Empty queues and roads, `fleet` vehicles split evenly over zones with
    /// the remainder going to the lowest-index zones.
    pub fn uniform(zones: usize, links: usize, fleet: u32) -> Self {
        let base = fleet / zones as u32;
        let extra = (fleet % zones as u32) as usize;
        let idle = (0..zones).map(|r| base + u32::from(r < extra)).collect();
        Self {
            waiting: vec![0; links],
            idle,
            in_transit: vec![0; links],
        }
    }

    pub fn fleet(&self) -> u64 {
        sum_u32(&self.idle) + sum_u32(&self.in_transit)
    }

    pub fn total_waiting(&self) -> u64 {
        sum_u32(&self.waiting)
    }
}

pub(crate) fn sum_u32(xs: &[u32]) -> u64 {
    xs.iter().map(|&x| x as u64).sum()
}

/// Integer dispatch decision: customer-carrying trips `V` and empty
/// rebalancing trips `R`, per link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ControlAction {
    pub dispatch: Vec<u32>,
    pub rebalance: Vec<u32>,
}

impl ControlAction {
    pub fn zero(links: usize) -> Self {
        Self {
            dispatch: vec![0; links],
            rebalance: vec![0; links],
        }
    }

    /// Checks `V <= queue` per link and `sum_s V_rs + R_rs <= idle_r` per zone.
    pub fn check_feasible(&self, net: &CompleteNetwork, queue: &[u32], idle: &[u32]) -> Result<()> {
        let m = net.link_count();
        for (what, len) in [("dispatch", self.dispatch.len()), ("rebalance", self.rebalance.len())] {
            if len != m {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: m,
                    found: len,
                });
            }
        }
        for (k, (&v, &w)) in self.dispatch.iter().zip(queue).enumerate() {
            if v > w {
                let (r, s) = net.links()[k];
                return Err(Error::InfeasibleAction(format!(
                    "dispatch {v} on link {r}->{s} exceeds queue {w}"
                )));
            }
        }
        let mut out = vec![0u64; net.zone_count()];
        for (k, &(r, _)) in net.links().iter().enumerate() {
            out[r] += self.dispatch[k] as u64 + self.rebalance[k] as u64;
        }
        for (r, (&o, &p)) in out.iter().zip(idle).enumerate() {
            if o > p as u64 {
                return Err(Error::InfeasibleAction(format!(
                    "zone {r} dispatches {o} vehicles but only {p} are idle"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InTransitCohort {
    pub link: usize,
    pub dispatch_step: usize,
    pub arrival_step: usize,
    pub count: u32,
    pub carrying: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CustomerRecord {
    pub pair: usize,
    pub arrival_step: usize,
    pub board_step: Option<usize>,
}

/// Relative uniform perturbation of a travel time, rounded and clamped to at
/// least one step. Magnitude zero returns the nominal value and draws nothing.
pub fn perturb_travel_time<R: Rng + ?Sized>(steps: u32, magnitude: f64, rng: &mut R) -> u32 {
    if magnitude <= 0.0 {
        return steps.max(1);
    }
    let half_width = magnitude * steps as f64;
    let offset = rng.random_range(-half_width..=half_width).round();
    (steps as f64 + offset).max(1.0) as u32
}

pub struct Plant<R> {
    net: CompleteNetwork,
    state: SystemState,
    step: usize,
    perturbation: f64,
    rng: R,
    active: Vec<InTransitCohort>,
    cohort_log: Vec<InTransitCohort>,
    queues: Vec<VecDeque<usize>>,
    records: Vec<CustomerRecord>,
    fleet: u64,
}

impl<R: Rng> Plant<R> {
    /// Starts a plant at step 0. Customers already waiting in `initial` are
    /// stamped as arriving at step 0; vehicles already in transit are placed
    /// on cohorts arriving after the nominal link travel time.
    pub fn new(net: CompleteNetwork, initial: SystemState, perturbation: f64, rng: R) -> Result<Self> {
        let (n, m) = (net.zone_count(), net.link_count());
        for (what, expected, found) in [
            ("waiting", m, initial.waiting.len()),
            ("idle", n, initial.idle.len()),
            ("in_transit", m, initial.in_transit.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { what, expected, found });
            }
        }
        if !(perturbation.is_finite() && perturbation >= 0.0) {
            return Err(Error::Config(format!("perturbation must be >= 0, got {perturbation}")));
        }
        let mut queues = vec![VecDeque::new(); m];
        let mut records = Vec::new();
        for (pair, &w) in initial.waiting.iter().enumerate() {
            for _ in 0..w {
                queues[pair].push_back(records.len());
                records.push(CustomerRecord {
                    pair,
                    arrival_step: 0,
                    board_step: None,
                });
            }
        }
        let mut active = Vec::new();
        for (link, &f) in initial.in_transit.iter().enumerate() {
            if f > 0 {
                active.push(InTransitCohort {
                    link,
                    dispatch_step: 0,
                    arrival_step: net.travel_steps()[link] as usize,
                    count: f,
                    carrying: false,
                });
            }
        }
        let fleet = initial.fleet();
        Ok(Self {
            net,
            state: initial,
            step: 0,
            perturbation,
            rng,
            active,
            cohort_log: Vec::new(),
            queues,
            records,
            fleet,
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn network(&self) -> &CompleteNetwork {
        &self.net
    }

    pub fn fleet(&self) -> u64 {
        self.fleet
    }

    pub fn records(&self) -> &[CustomerRecord] {
        &self.records
    }

    /// Every cohort dispatched so far, in dispatch order.
    pub fn cohort_log(&self) -> &[InTransitCohort] {
        &self.cohort_log
    }

    pub fn active_cohorts(&self) -> &[InTransitCohort] {
        &self.active
    }

    /// Queue a controller sees at the current step: waiting customers plus
    /// the step's arrivals.
    pub fn queue_with(&self, arrivals: &ArrivalBatch) -> Vec<u32> {
        self.state
            .waiting
            .iter()
            .zip(&arrivals.counts)
            .map(|(w, d)| w + d)
            .collect()
    }

    /// Advances one step. Infeasible actions are rejected without touching the state.
    pub fn step_exact(&mut self, action: &ControlAction, arrivals: &ArrivalBatch) -> Result<&SystemState> {
        let t = self.step;
        let m = self.net.link_count();
        if arrivals.counts.len() != m {
            return Err(Error::DimensionMismatch {
                what: "arrivals",
                expected: m,
                found: arrivals.counts.len(),
            });
        }
        if arrivals.step != t {
            return Err(Error::Config(format!(
                "arrival batch for step {} applied at step {t}",
                arrivals.step
            )));
        }
        let queue = self.queue_with(arrivals);
        action.check_feasible(&self.net, &queue, &self.state.idle)?;

        for (pair, &d) in arrivals.counts.iter().enumerate() {
            for _ in 0..d {
                self.queues[pair].push_back(self.records.len());
                self.records.push(CustomerRecord {
                    pair,
                    arrival_step: t,
                    board_step: None,
                });
            }
        }
        self.state.waiting = queue;

        for k in 0..m {
            let v = action.dispatch[k];
            for _ in 0..v {
                let id = self.queues[k].pop_front().expect("queue length checked");
                self.records[id].board_step = Some(t);
            }
            self.state.waiting[k] -= v;
            let (r, _) = self.net.links()[k];
            let moved = v + action.rebalance[k];
            self.state.idle[r] -= moved;
            self.state.in_transit[k] += moved;
            for (count, carrying) in [(v, true), (action.rebalance[k], false)] {
                if count == 0 {
                    continue;
                }
                let nominal = self.net.travel_steps()[k];
                let travel = perturb_travel_time(nominal, self.perturbation, &mut self.rng);
                let cohort = InTransitCohort {
                    link: k,
                    dispatch_step: t,
                    arrival_step: t + travel as usize,
                    count,
                    carrying,
                };
                self.cohort_log.push(cohort.clone());
                self.active.push(cohort);
            }
        }

        let next = t + 1;
        let mut still = Vec::with_capacity(self.active.len());
        for c in self.active.drain(..) {
            if c.arrival_step <= next {
                let (_, s) = self.net.links()[c.link];
                self.state.idle[s] += c.count;
                self.state.in_transit[c.link] -= c.count;
            } else {
                still.push(c);
            }
        }
        self.active = still;
        self.step = next;
        debug_assert_eq!(self.state.fleet(), self.fleet);
        Ok(&self.state)
    }
}

/// Five-number summary plus mean of a sample of waiting times in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    /// `None` for an empty sample. Quartiles interpolate linearly between order statistics.
    pub fn from_sample(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct WaitingMetrics {
    /// Time average over steps of the mean queue across pairs, measured after each step.
    pub avg_queue_length: f64,
    /// Mean wait of boarded customers.
    pub avg_wait_minutes: f64,
    pub boarded: usize,
    /// Customers still waiting at the end; excluded from `avg_wait_minutes`.
    pub censored: usize,
    /// Waiting-time summary per pair, pooling that pair's customers.
    pub per_pair: Vec<Option<BoxStats>>,
    /// Summary over all boarded customers.
    pub pooled: Option<BoxStats>,
    /// Summary of the per-pair mean waits.
    pub pair_means: Option<BoxStats>,
}

pub fn waiting_metrics(
    records: &[CustomerRecord],
    pairs: usize,
    duration: usize,
    step_minutes: f64,
) -> WaitingMetrics {
    let mut delta = vec![0i64; duration + 1];
    let mut per_pair: Vec<Vec<f64>> = vec![Vec::new(); pairs];
    let mut pooled = Vec::new();
    let mut censored = 0;
    for rec in records {
        if rec.arrival_step < duration {
            delta[rec.arrival_step] += 1;
        }
        match rec.board_step {
            Some(b) => {
                if b < duration {
                    delta[b] -= 1;
                }
                let w = (b - rec.arrival_step) as f64 * step_minutes;
                per_pair[rec.pair].push(w);
                pooled.push(w);
            }
            None => censored += 1,
        }
    }
    let mut queue = 0i64;
    let mut area = 0.0;
    for d in delta.iter().take(duration) {
        queue += d;
        area += queue as f64;
    }
    let avg_queue_length = if duration == 0 || pairs == 0 {
        0.0
    } else {
        area / duration as f64 / pairs as f64
    };
    let avg_wait_minutes = if pooled.is_empty() {
        0.0
    } else {
        pooled.iter().sum::<f64>() / pooled.len() as f64
    };
    let per_pair_stats: Vec<Option<BoxStats>> = per_pair.iter().map(|w| BoxStats::from_sample(w)).collect();
    let means: Vec<f64> = per_pair_stats.iter().flatten().map(|b| b.mean).collect();
    WaitingMetrics {
        avg_queue_length,
        avg_wait_minutes,
        boarded: pooled.len(),
        censored,
        per_pair: per_pair_stats,
        pooled: BoxStats::from_sample(&pooled),
        pair_means: BoxStats::from_sample(&means),
    }
}

/// Miles driven by rebalancing trips in a sequence of actions.
pub fn empty_distance(actions: &[ControlAction], distance: &[f64]) -> f64 {
    actions
        .iter()
        .map(|a| a.rebalance.iter().zip(distance).map(|(&r, d)| r as f64 * d).sum::<f64>())
        .sum()
}
