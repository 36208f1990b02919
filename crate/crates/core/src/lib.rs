//! Hardware synthesis core: expression IR, e-graph rewriting,
//! implementation selection, static timing, scheduling, and Verilog
//! emission.

pub mod asap;
pub mod codegen;
pub mod egraph;
pub mod exact;
pub mod ir;
pub mod library;
pub mod model;
pub mod pattern;
pub mod pipeline;
pub mod rules;
pub mod sim;
pub mod suite;
pub mod timing;
