//! Weighted Lloyd k-means for grouping demand points into zones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub x: f64,
    pub y: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl WeightedPoint {
    pub fn new(x: f64, y: f64, weight: f64) -> Self {
        Self { x, y, weight }
    }

    fn dist2(&self, c: (f64, f64)) -> f64 {
        (self.x - c.0).powi(2) + (self.y - c.1).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZonePartition {
    pub k: usize,
    pub centers: Vec<(f64, f64)>,
    /// Zone index of every input point.
    pub assignment: Vec<usize>,
    /// Weighted within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl ZonePartition {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

fn distinct_count(points: &[WeightedPoint]) -> usize {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    xy.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xy.dedup();
    xy.len()
}

fn nearest(p: &WeightedPoint, centers: &[(f64, f64)]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &c) in centers.iter().enumerate() {
        let d = p.dist2(c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn objective(points: &[WeightedPoint], centers: &[(f64, f64)], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &j)| p.weight * p.dist2(centers[j]))
        .sum()
}

/// k-means++ seeding: each new center drawn with probability proportional to
/// weight times squared distance to the nearest chosen center.
fn seed_centers(points: &[WeightedPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let total_w: f64 = points.iter().map(|p| p.weight).sum();
    let mut pick = rng.random::<f64>() * total_w;
    let mut first = points.len() - 1;
    for (i, p) in points.iter().enumerate() {
        if pick < p.weight {
            first = i;
            break;
        }
        pick -= p.weight;
    }
    let mut centers = vec![(points[first].x, points[first].y)];
    let mut d2: Vec<f64> = points.iter().map(|p| p.weight * p.dist2(centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && pick < d {
                chosen = Some(i);
                break;
            }
            pick -= d;
        }
        // Rounding at the tail: fall back to the last point with positive mass.
        let i = chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap());
        let c = (points[i].x, points[i].y);
        centers.push(c);
        for (dj, p) in d2.iter_mut().zip(points) {
            *dj = dj.min(p.weight * p.dist2(c));
        }
    }
    centers
}

pub fn partition_zones(
    points: &[WeightedPoint],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ZonePartition> {
    let distinct = distinct_count(points);
    if k < 2 || k > distinct {
        return Err(Error::InvalidK { k, distinct });
    }
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    if points
        .iter()
        .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.weight.is_finite() && p.weight > 0.0))
    {
        return Err(Error::Config("points need finite coordinates and positive weights".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        history.push(objective(points, &centers, &next));
        if next == assignment {
            break;
        }
        assignment = next;
        update_centers(points, &assignment, &mut centers);
    }

    let last: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    if last != assignment {
        history.push(objective(points, &centers, &last));
        assignment = last;
    }

    Ok(ZonePartition {
        k,
        centers,
        assignment,
        objective_history: history,
        iterations,
    })
}

fn update_centers(points: &[WeightedPoint], assignment: &[usize], centers: &mut [(f64, f64)]) {
    let k = centers.len();
    let mut sum = vec![(0.0, 0.0, 0.0); k];
    for (p, &j) in points.iter().zip(assignment) {
        sum[j].0 += p.weight * p.x;
        sum[j].1 += p.weight * p.y;
        sum[j].2 += p.weight;
    }
    let mut taken: Vec<usize> = Vec::new();
    for j in 0..k {
        let (sx, sy, w) = sum[j];
        if w > 0.0 {
            centers[j] = (sx / w, sy / w);
            continue;
        }
        // Empty cluster: move it onto the point farthest from its current center.
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken.contains(i))
            .max_by(|(ia, a), (ib, b)| {
                let da = a.dist2(centers[assignment[*ia]]);
                let db = b.dist2(centers[assignment[*ib]]);
                da.total_cmp(&db).then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .unwrap();
        taken.push(far);
        centers[j] = (points[far].x, points[far].y);
    }
}
