//! Non-intrusive parametric reduced-order models for geometrically nonlinear
//! structures.
//!
//! The crate builds a database of local reduced models over a parameter
//! hypercube, interpolates every reduced operator with radial basis
//! functions, and integrates the resulting models in time. A desk-scale
//! von Kármán arch ([`fe`]) serves as the high-fidelity black box.

pub mod fe;
pub mod linalg;
pub mod modal;
pub mod tensor;
pub mod global_basis;
pub mod sampling;
pub mod ident;
pub mod newmark;
pub mod rom;
pub mod prom;
pub mod pipeline;
