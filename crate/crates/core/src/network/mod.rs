//! Zone graphs: the road network between zone centers, its completion into a
//! directed complete graph of origin-destination links, and the incidence
//! matrices every other module is written against.
//!
//! Links of a [`CompleteNetwork`] are ordered origin-major: all links leaving
//! zone 0 (destinations ascending), then all links leaving zone 1, and so on.
//! Every per-link vector in the crate uses this order.

mod file;
mod partition;

pub use file::{parse_network, read_network, ArcSpec, NetworkFile, ZoneSpec};
pub use partition::{partition_zones, WeightedPoint, ZonePartition};

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

pub type ZoneId = u32;

/// A directed road arc between two zones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: ZoneId,
    pub to: ZoneId,
    pub minutes: f64,
    pub miles: f64,
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    minutes: f64,
    miles: f64,
}

/// Road network between zone centers. Zone ids are kept sorted, so internal
/// indices follow id order.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    ids: Vec<ZoneId>,
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<Edge>>,
}

impl RoadNetwork {
    pub fn new(ids: impl IntoIterator<Item = ZoneId>, arcs: Vec<Arc>) -> Result<Self> {
        let mut ids: Vec<ZoneId> = ids.into_iter().collect();
        ids.sort_unstable();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(Error::InvalidNetwork("duplicate zone id".into()));
        }
        if ids.len() < 2 {
            return Err(Error::InvalidNetwork(format!(
                "need at least 2 zones, found {}",
                ids.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); ids.len()];
        for arc in &arcs {
            let from = index_of(&ids, arc.from)?;
            let to = index_of(&ids, arc.to)?;
            if from == to {
                return Err(Error::InvalidNetwork(format!("self loop at zone {}", arc.from)));
            }
            if !(arc.minutes.is_finite() && arc.minutes > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "arc {} -> {}: travel time must be positive, got {}",
                    arc.from, arc.to, arc.minutes
                )));
            }
            if !(arc.miles.is_finite() && arc.miles > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "arc {} -> {}: distance must be positive, got {}",
                    arc.from, arc.to, arc.miles
                )));
            }
            adjacency[from].push(Edge {
                to,
                minutes: arc.minutes,
                miles: arc.miles,
            });
        }
        Ok(Self {
            ids,
            arcs,
            adjacency,
        })
    }

    pub fn zone_count(&self) -> usize {
        self.ids.len()
    }

    pub fn zone_ids(&self) -> &[ZoneId] {
        &self.ids
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn index_of(&self, id: ZoneId) -> Result<usize> {
        index_of(&self.ids, id)
    }

    fn reachable(&self, start: usize, forward: bool) -> Vec<bool> {
        let n = self.zone_count();
        let mut reverse = vec![Vec::new(); n];
        if !forward {
            for (from, edges) in self.adjacency.iter().enumerate() {
                for e in edges {
                    reverse[e.to].push(from);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            let next: Vec<usize> = if forward {
                self.adjacency[u].iter().map(|e| e.to).collect()
            } else {
                reverse[u].clone()
            };
            for v in next {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// First ordered pair (by id) with no directed path, if any.
    fn disconnected_pair(&self) -> Option<(ZoneId, ZoneId)> {
        let forward = self.reachable(0, true);
        if let Some(v) = forward.iter().position(|&r| !r) {
            return Some((self.ids[0], self.ids[v]));
        }
        let backward = self.reachable(0, false);
        backward
            .iter()
            .position(|&r| !r)
            .map(|v| (self.ids[v], self.ids[0]))
    }

    /// Single-source shortest paths by travel time.
    ///
    /// Ties in minutes are broken by fewer hops, then by the lower predecessor
    /// index, so the resulting tree is deterministic.
    fn dijkstra(&self, source: usize) -> Vec<Option<Label>> {
        let n = self.zone_count();
        let mut labels: Vec<Option<Label>> = vec![None; n];
        let mut done = vec![false; n];
        labels[source] = Some(Label {
            minutes: 0.0,
            miles: 0.0,
            hops: 0,
            pred: None,
        });
        loop {
            let mut best: Option<usize> = None;
            for v in 0..n {
                if done[v] {
                    continue;
                }
                if let Some(l) = &labels[v] {
                    let better = match best {
                        None => true,
                        Some(b) => l.key_lt(labels[b].as_ref().unwrap()),
                    };
                    if better {
                        best = Some(v);
                    }
                }
            }
            let Some(u) = best else { break };
            done[u] = true;
            let lu = labels[u].unwrap();
            for e in &self.adjacency[u] {
                if done[e.to] {
                    continue;
                }
                let cand = Label {
                    minutes: lu.minutes + e.minutes,
                    miles: lu.miles + e.miles,
                    hops: lu.hops + 1,
                    pred: Some(u),
                };
                let replace = match &labels[e.to] {
                    None => true,
                    Some(cur) => cand.improves_on(cur),
                };
                if replace {
                    labels[e.to] = Some(cand);
                }
            }
        }
        labels
    }
}

fn index_of(ids: &[ZoneId], id: ZoneId) -> Result<usize> {
    ids.binary_search(&id)
        .map_err(|_| Error::InvalidNetwork(format!("unknown zone id {id}")))
}

#[derive(Debug, Clone, Copy)]
struct Label {
    minutes: f64,
    miles: f64,
    hops: usize,
    pred: Option<usize>,
}

impl Label {
    fn key_lt(&self, other: &Label) -> bool {
        (self.minutes, self.hops) < (other.minutes, other.hops)
    }

    fn improves_on(&self, other: &Label) -> bool {
        if self.minutes != other.minutes || self.hops != other.hops {
            return self.key_lt(other);
        }
        self.pred < other.pred
    }
}

pub fn check_strong_connectivity(net: &RoadNetwork) -> bool {
    net.disconnected_pair().is_none()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortestPath {
    pub minutes: f64,
    pub miles: f64,
    pub nodes: Vec<ZoneId>,
}

/// Minimum-time path between two zones; miles are accumulated along the same path.
pub fn shortest_path(net: &RoadNetwork, origin: ZoneId, dest: ZoneId) -> Result<ShortestPath> {
    let o = net.index_of(origin)?;
    let d = net.index_of(dest)?;
    let labels = net.dijkstra(o);
    path_from_labels(net, &labels, d).ok_or(Error::NotStronglyConnected {
        from: origin,
        to: dest,
    })
}

fn path_from_labels(net: &RoadNetwork, labels: &[Option<Label>], dest: usize) -> Option<ShortestPath> {
    let label = labels[dest]?;
    let mut nodes = vec![net.ids[dest]];
    let mut cur = label.pred;
    while let Some(p) = cur {
        nodes.push(net.ids[p]);
        cur = labels[p].and_then(|l| l.pred);
    }
    nodes.reverse();
    Some(ShortestPath {
        minutes: label.minutes,
        miles: label.miles,
        nodes,
    })
}

/// Directed complete graph over the zones together with its incidence matrices.
#[derive(Debug, Clone)]
pub struct CompleteNetwork {
    zone_ids: Vec<ZoneId>,
    links: Vec<(usize, usize)>,
    travel_steps: Vec<u32>,
    distance: Vec<f64>,
    e_in: DMatrix<f64>,
    e_out: DMatrix<f64>,
}

/// Number of ordered links of a complete digraph on `n` zones.
pub fn link_count(n: usize) -> usize {
    n * n.saturating_sub(1)
}

/// Position of the ordered link `(r, s)` in origin-major order.
pub fn link_index(n: usize, r: usize, s: usize) -> usize {
    debug_assert!(r != s && r < n && s < n);
    r * (n - 1) + if s < r { s } else { s - 1 }
}

impl CompleteNetwork {
    /// Builds a complete network directly from per-link travel steps and miles,
    /// both in origin-major link order. Zones get ids `1..=n`.
    pub fn from_links(n: usize, travel_steps: Vec<u32>, distance: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidNetwork(format!("need at least 2 zones, found {n}")));
        }
        let m = link_count(n);
        if travel_steps.len() != m {
            return Err(Error::DimensionMismatch {
                what: "travel steps",
                expected: m,
                found: travel_steps.len(),
            });
        }
        if distance.len() != m {
            return Err(Error::DimensionMismatch {
                what: "distances",
                expected: m,
                found: distance.len(),
            });
        }
        if travel_steps.iter().any(|&t| t == 0) {
            return Err(Error::InvalidNetwork("travel steps must be at least 1".into()));
        }
        if distance.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidNetwork("distances must be finite and nonnegative".into()));
        }
        let zone_ids = (1..=n as ZoneId).collect();
        Ok(Self::assemble(zone_ids, travel_steps, distance))
    }

    fn assemble(zone_ids: Vec<ZoneId>, travel_steps: Vec<u32>, distance: Vec<f64>) -> Self {
        let n = zone_ids.len();
        let m = link_count(n);
        let mut links = Vec::with_capacity(m);
        for r in 0..n {
            for s in 0..n {
                if r != s {
                    links.push((r, s));
                }
            }
        }
        let mut e_in = DMatrix::zeros(n, m);
        let mut e_out = DMatrix::zeros(n, m);
        for (k, &(r, s)) in links.iter().enumerate() {
            e_out[(r, k)] = 1.0;
            e_in[(s, k)] = 1.0;
        }
        Self {
            zone_ids,
            links,
            travel_steps,
            distance,
            e_in,
            e_out,
        }
    }

    pub fn zone_count(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn zone_ids(&self) -> &[ZoneId] {
        &self.zone_ids
    }

    /// `(origin, destination)` zone indices of every link.
    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn link_index(&self, r: usize, s: usize) -> usize {
        link_index(self.zone_count(), r, s)
    }

    /// Travel time of every link in whole control steps.
    pub fn travel_steps(&self) -> &[u32] {
        &self.travel_steps
    }

    pub fn travel_steps_f64(&self) -> Vec<f64> {
        self.travel_steps.iter().map(|&t| t as f64).collect()
    }

    /// Distance of every link in miles.
    pub fn distance(&self) -> &[f64] {
        &self.distance
    }

    pub fn e_in(&self) -> &DMatrix<f64> {
        &self.e_in
    }

    pub fn e_out(&self) -> &DMatrix<f64> {
        &self.e_out
    }

    pub fn incidence(&self) -> DMatrix<f64> {
        &self.e_in - &self.e_out
    }

    /// `E x` computed from the link list, without forming the matrix.
    pub fn net_inflow(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.zone_count()];
        for (&(r, s), v) in self.links.iter().zip(x) {
            out[s] += v;
            out[r] -= v;
        }
        out
    }

    /// `E_out x`: total over the links leaving each zone.
    pub fn outflow(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.zone_count()];
        for (&(r, _), v) in self.links.iter().zip(x) {
            out[r] += v;
        }
        out
    }

    /// `E_in x`: total over the links entering each zone.
    pub fn inflow(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.zone_count()];
        for (&(_, s), v) in self.links.iter().zip(x) {
            out[s] += v;
        }
        out
    }
}

/// Completes a road network into a directed complete graph.
///
/// Each ordered zone pair becomes a link whose travel time is the shortest
/// path time in whole steps (ceiling, at least one) and whose distance is the
/// mileage along that path.
pub fn complete(net: &RoadNetwork, step_minutes: f64) -> Result<CompleteNetwork> {
    if !(step_minutes.is_finite() && step_minutes > 0.0) {
        return Err(Error::InvalidNetwork(format!(
            "step length must be positive, got {step_minutes}"
        )));
    }
    if let Some((from, to)) = net.disconnected_pair() {
        return Err(Error::NotStronglyConnected { from, to });
    }
    let n = net.zone_count();
    let m = link_count(n);
    let mut travel_steps = Vec::with_capacity(m);
    let mut distance = Vec::with_capacity(m);
    for r in 0..n {
        let labels = net.dijkstra(r);
        for (s, label) in labels.iter().enumerate() {
            if s == r {
                continue;
            }
            let label = label.expect("strongly connected");
            travel_steps.push(quantize_steps(label.minutes, step_minutes));
            distance.push(label.miles);
        }
    }
    Ok(CompleteNetwork::assemble(net.ids.clone(), travel_steps, distance))
}

/// Minutes to whole control steps, rounding up, never below one step.
pub fn quantize_steps(minutes: f64, step_minutes: f64) -> u32 {
    // Tolerance keeps exact multiples such as 0.3 / 0.1 from rounding up.
    let raw = (minutes / step_minutes - 1e-9).ceil();
    raw.max(1.0) as u32
}
