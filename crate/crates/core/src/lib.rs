pub mod cli;
pub mod comm;
pub mod metrics;
pub mod partition;
pub mod solvers;
pub mod sparse;
