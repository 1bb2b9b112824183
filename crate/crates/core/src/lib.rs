//! Simulation of disaster-induced failures and post-disaster restoration in
//! interdependent water, power and road networks.

pub mod error;
pub mod hazard;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod recovery;
pub mod simulation;
pub mod solvers;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/hazards.md")]
    mod hazards {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/restoration.md")]
    mod restoration {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
