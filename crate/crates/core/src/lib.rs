//! Dual smoothing and accelerated primal-dual solvers for decentralized
//! convex optimization over networks.
//!
//! The crate covers gossip matrices on graphs, proximal operators and
//! smoothed conjugates of simple convex atoms, the dual reformulations of
//! consensus and coupled-constraint problems, the accelerated primal-dual
//! solver for affinely constrained smooth problems, and a synchronous
//! message-passing simulator that executes the solver node by node.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod apapc;
pub mod atoms;
pub mod conjugate;
pub mod duality;
pub mod error;
pub mod graph;
pub mod netsim;
pub mod problem;
pub mod report;

pub use error::{Error, Result};
