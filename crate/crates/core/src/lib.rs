//! Modeling, simulation and control of autonomous mobility-on-demand fleets.
//!
//! A city is a set of zones joined by a directed complete graph of
//! origin-destination links ([`network`]). Customers arrive per link as
//! Poisson streams ([`demand`]) and are served by a fleet whose true motion,
//! with exact travel-time delays, is simulated by [`plant`]. Controllers work
//! on a first-order-lag linear model of the same system ([`model`]): the MPC
//! regulator ([`mpc`]) tracks an equilibrium computed by [`reference`], and
//! the single-step IARR linear program ([`iarr`]) serves as the baseline.
//! [`harness`] runs closed-loop experiments and writes their reports.

pub mod demand;
pub mod error;
pub mod harness;
pub mod iarr;
pub mod network;
pub mod plot;
pub mod model;
pub mod mpc;
pub mod plant;
pub mod reference;
pub mod solver;

pub use error::{Error, Result};
