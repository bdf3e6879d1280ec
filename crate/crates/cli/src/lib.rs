//! Experiment runner for the volquad quadrature library.

pub mod commands;
pub mod defaults;
pub mod experiments;
pub mod instances;
pub mod output;
