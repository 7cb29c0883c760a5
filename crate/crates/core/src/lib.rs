//! Bit-exact simulation of approximate in-SRAM multipliers that OR partial
//! products instead of adding them, plus the layout, accelerator, cost and
//! DNN-accuracy tooling built on top.

pub mod accel_sim;
pub mod cli;
pub mod config;
pub mod cost_model;
pub mod dnn_eval;
pub mod error;
pub mod fp_mul;
pub mod oracle;
pub mod pp_core;
pub mod sram_layout;

pub use error::{Error, Result};
