//! Distributed primal-dual optimization over undirected networks.
//!
//! Agents hold private smooth (possibly nonconvex) costs and cooperate to
//! minimize their average. The crate provides a first-order primal-dual
//! method, a variant that also mixes the dual variables, and a zeroth-order
//! counterpart driven by forward differences, along with the certificate
//! constants that make the iterations provably convergent and runtime
//! monitors that check those certificates on actual trajectories.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod engine;
pub mod graph;
pub mod params;
pub mod problems;
pub mod run;
mod tagged;
pub mod zeroth;
