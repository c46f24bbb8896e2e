//! Rank collectives over in-process backends, with alpha-beta cost accounting.
//!
//! A program is written once per rank against [`Comm`] and launched with
//! [`run_spmd`]. Every rank must enter the same collectives in the same order.
//!
//! Counter conventions (per collective, `lg = ceil(log2 P)`):
//!
//! | collective      | messages `L` | words `W`              |
//! |-----------------|--------------|------------------------|
//! | allreduce/bcast | `lg`         | `len * lg`             |
//! | all-to-all small| `lg`         | `sent * lg`            |
//! | all-to-all large| `P - 1`      | `sent`                 |
//!
//! The critical path takes the maximum over ranks at each collective boundary
//! and accumulates it.

mod cost;
mod world;

pub use cost::{ceil_log2, predicted_time, CostCounters, MachineParams};
pub use world::{run_spmd, AllToAllModel, Backend, Comm, CommConfig, Payload};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommError {
    #[error("rank count must be at least 1")]
    ZeroRanks,
    #[error("collective contract violated: {0}")]
    ContractViolation(String),
    #[error("broadcast root {root} out of range for {size} ranks")]
    InvalidRoot { root: usize, size: usize },
    #[error("a rank exited while others were inside a collective")]
    RankExited,
    #[error("invalid machine parameters: {0}")]
    InvalidMachineParams(String),
}
