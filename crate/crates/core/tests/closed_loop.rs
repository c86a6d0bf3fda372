//! The MPC run against its own lag model with arrivals fixed at `λ`.

mod common;

use amod::model::{build_lti, step_approx, InputVector, Layout, StateVector};
use amod::mpc::{solve_mpc_step, MpcConfig};
use amod::network::CompleteNetwork;
use amod::reference::{solve_reference, CostKind};
use common::circulation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The controller sees the queue after this step's arrivals.
fn visible(lay: &Layout, x: &StateVector, d: &[f64]) -> StateVector {
    let mut v = x.clone();
    for (w, a) in v.0[lay.waiting()].iter_mut().zip(d) {
        *w += a;
    }
    v
}

#[test]
fn balanced_demand_settles_with_no_rebalancing() {
    let net = CompleteNetwork::from_links(4, vec![2, 3, 2, 2, 3, 2, 1, 2, 3, 2, 2, 1], vec![1.0; 12]).unwrap();
    let lambda = circulation(&net, &mut ChaCha8Rng::seed_from_u64(4));
    let model = build_lti(&net);
    let lay = *model.layout();
    for (cost, kind) in [(CostKind::Quadratic, CostKind::Linear), (CostKind::Linear, CostKind::Quadratic)] {
        let reference = solve_reference(&net, &lambda, kind, 40.0).unwrap();
        assert!(reference.r_bar.iter().sum::<f64>() <= 1e-8);
        let cfg = MpcConfig::new(6, cost, kind);
        // Two idle vehicles start in the wrong zone.
        let mut x = reference.state(&lay);
        x.0[lay.idle().start] += 2.0;
        x.0[lay.idle().start + 1] -= 2.0;
        let mut late = 0.0f64;
        for t in 0..80 {
            let (a, _) = solve_mpc_step(&model, &net, &reference, &visible(&lay, &x, &lambda), &cfg).unwrap();
            if t >= 60 {
                late = late.max(a.rebalance.iter().sum::<f64>());
            }
            x = step_approx(&model, &x, &InputVector([a.dispatch, a.rebalance].concat()), &lambda).unwrap();
        }
        assert!(late < 1e-3, "{cost:?}/{kind:?}: rebalancing {late} after settling");
        let p = x.idle(&lay);
        assert!(p.iter().zip(&reference.p_bar).all(|(a, b)| (a - b).abs() < 1e-2), "{p:?}");
    }
}
