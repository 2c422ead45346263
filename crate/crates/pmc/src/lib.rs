//! Compositional model checking of modal mu-calculus properties over
//! networks of labelled transition systems.
//!
//! The pipeline encodes a formula as a graph, repeatedly quotients that graph
//! against one network component at a time (a synchronous product driven by
//! derived synchronisation rules), and simplifies between rounds until the
//! graph collapses to a constant. A direct product-and-evaluate checker is
//! kept alongside as an oracle.

pub mod bes;
pub mod engine;
pub mod eval;
pub mod fgraph;
pub mod lts;
pub mod mucalc;
pub mod network;
pub mod randgen;
pub mod simplify;
