#![allow(dead_code)]

use amod::network::CompleteNetwork;
use rand::Rng;

/// Complete network with random travel steps in `1..=max_steps` and
/// distances proportional to them.
pub fn random_network<R: Rng>(n: usize, max_steps: u32, rng: &mut R) -> CompleteNetwork {
    let m = n * (n - 1);
    let steps: Vec<u32> = (0..m).map(|_| rng.random_range(1..=max_steps)).collect();
    let dist = steps.iter().map(|&t| 0.3 * t as f64 + rng.random_range(0.0..0.2)).collect();
    CompleteNetwork::from_links(n, steps, dist).unwrap()
}

pub fn random_rates<R: Rng>(m: usize, hi: f64, rng: &mut R) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(0.0..hi)).collect()
}

/// Rates with `E λ = 0`: a random mix of directed cycles.
pub fn circulation<R: Rng>(net: &CompleteNetwork, rng: &mut R) -> Vec<f64> {
    let n = net.zone_count();
    let mut lambda = vec![0.0; net.link_count()];
    for _ in 0..3 {
        let len = rng.random_range(2..=n);
        let mut zones: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            zones.swap(i, rng.random_range(0..=i));
        }
        let w = rng.random_range(0.05..1.0);
        for i in 0..len {
            let (r, s) = (zones[i], zones[(i + 1) % len]);
            lambda[net.link_index(r, s)] += w;
        }
    }
    lambda
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
