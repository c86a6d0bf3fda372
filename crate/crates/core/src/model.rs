//! Controller-side linear model: the exact transport delays replaced by a
//! first-order lag (a fraction `1/T` of each link's vehicles exits per step),
//! assembled into `x(t+1) = A x(t) + B v(t) + L d(t)`.
//!
//! State layout is `x = (W, P, F)` with sizes `(m, n, m)`, input layout is
//! `v = (V, R)` with sizes `(m, m)`, where `m = n(n-1)` is the link count.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::CompleteNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub zones: usize,
    pub links: usize,
}

impl Layout {
    pub fn new(zones: usize) -> Self {
        Self {
            zones,
            links: crate::network::link_count(zones),
        }
    }

    /// `2n^2 - n`
    pub fn state_dim(&self) -> usize {
        2 * self.links + self.zones
    }

    /// `2n(n-1)`
    pub fn input_dim(&self) -> usize {
        2 * self.links
    }

    pub fn waiting(&self) -> Range<usize> {
        0..self.links
    }

    pub fn idle(&self) -> Range<usize> {
        self.links..self.links + self.zones
    }

    pub fn in_transit(&self) -> Range<usize> {
        self.links + self.zones..self.state_dim()
    }

    pub fn dispatch(&self) -> Range<usize> {
        0..self.links
    }

    pub fn rebalance(&self) -> Range<usize> {
        self.links..2 * self.links
    }

    pub fn state(&self, waiting: &[f64], idle: &[f64], in_transit: &[f64]) -> StateVector {
        let mut x = Vec::with_capacity(self.state_dim());
        x.extend_from_slice(waiting);
        x.extend_from_slice(idle);
        x.extend_from_slice(in_transit);
        StateVector(x)
    }

    pub fn input(&self, dispatch: &[f64], rebalance: &[f64]) -> InputVector {
        let mut v = Vec::with_capacity(self.input_dim());
        v.extend_from_slice(dispatch);
        v.extend_from_slice(rebalance);
        InputVector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn waiting(&self, layout: &Layout) -> &[f64] {
        &self.0[layout.waiting()]
    }

    pub fn idle(&self, layout: &Layout) -> &[f64] {
        &self.0[layout.idle()]
    }

    pub fn in_transit(&self, layout: &Layout) -> &[f64] {
        &self.0[layout.in_transit()]
    }

    /// `1'P + 1'F`
    pub fn fleet(&self, layout: &Layout) -> f64 {
        self.idle(layout).iter().sum::<f64>() + self.in_transit(layout).iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputVector(pub Vec<f64>);

impl InputVector {
    pub fn dispatch(&self, layout: &Layout) -> &[f64] {
        &self.0[layout.dispatch()]
    }

    pub fn rebalance(&self, layout: &Layout) -> &[f64] {
        &self.0[layout.rebalance()]
    }
}

#[derive(Debug, Clone)]
pub struct LtiModel {
    layout: Layout,
    travel_steps: Vec<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    l: DMatrix<f64>,
}

pub fn build_lti(net: &CompleteNetwork) -> LtiModel {
    let layout = Layout::new(net.zone_count());
    let (m, nx, nv) = (layout.links, layout.state_dim(), layout.input_dim());
    let travel_steps = net.travel_steps_f64();
    let (w, p, f) = (layout.waiting().start, layout.idle().start, layout.in_transit().start);

    let mut a = DMatrix::zeros(nx, nx);
    for i in 0..nx {
        a[(i, i)] = 1.0;
    }
    for (k, &(_, s)) in net.links().iter().enumerate() {
        let inv_t = 1.0 / travel_steps[k];
        a[(p + s, f + k)] = inv_t;
        a[(f + k, f + k)] = 1.0 - inv_t;
    }

    let mut b = DMatrix::zeros(nx, nv);
    for (k, &(r, _)) in net.links().iter().enumerate() {
        b[(w + k, k)] = -1.0;
        b[(p + r, k)] = -1.0;
        b[(p + r, m + k)] = -1.0;
        b[(f + k, k)] = 1.0;
        b[(f + k, m + k)] = 1.0;
    }

    let mut l = DMatrix::zeros(nx, m);
    for k in 0..m {
        l[(w + k, k)] = 1.0;
    }

    LtiModel {
        layout,
        travel_steps,
        a,
        b,
        l,
    }
}

impl LtiModel {
    /// Model from explicit matrices, for cross-checks and fault injection.
    pub fn from_matrices(
        zones: usize,
        travel_steps: Vec<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        l: DMatrix<f64>,
    ) -> Result<Self> {
        let layout = Layout::new(zones);
        let (nx, nv, m) = (layout.state_dim(), layout.input_dim(), layout.links);
        for (what, expected, found) in [
            ("A rows", nx, a.nrows()),
            ("A cols", nx, a.ncols()),
            ("B rows", nx, b.nrows()),
            ("B cols", nv, b.ncols()),
            ("L rows", nx, l.nrows()),
            ("L cols", m, l.ncols()),
            ("travel steps", m, travel_steps.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { what, expected, found });
            }
        }
        Ok(Self {
            layout,
            travel_steps,
            a,
            b,
            l,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn travel_steps(&self) -> &[f64] {
        &self.travel_steps
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}

/// `x' = A x + B v + L d`, without clamping.
pub fn step_approx(model: &LtiModel, x: &StateVector, v: &InputVector, d: &[f64]) -> Result<StateVector> {
    let lay = model.layout;
    check_len("state", lay.state_dim(), x.0.len())?;
    check_len("input", lay.input_dim(), v.0.len())?;
    check_len("disturbance", lay.links, d.len())?;
    let next = &model.a * DVector::from_column_slice(&x.0)
        + &model.b * DVector::from_column_slice(&v.0)
        + &model.l * DVector::from_column_slice(d);
    Ok(StateVector(next.as_slice().to_vec()))
}

/// Largest change of `1'P + 1'F` produced by one model step from any
/// canonical basis state or input, with no arrivals. Zero for a model that
/// conserves vehicles.
pub fn conservation_residual(model: &LtiModel) -> f64 {
    let lay = model.layout;
    let mut c = DVector::zeros(lay.state_dim());
    for i in lay.idle().chain(lay.in_transit()) {
        c[i] = 1.0;
    }
    let from_state = model.a.tr_mul(&c) - &c;
    let from_input = model.b.tr_mul(&c);
    from_state.amax().max(from_input.amax())
}

/// Row-major text dump: a `rows cols` header followed by one line per row.
pub fn dump_row_major(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}
