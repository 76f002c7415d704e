//! Time-frequency block allocation with flexible numerology.
//!
//! An [`Instance`](instance::Instance) holds every candidate block on a
//! resource grid, the services competing for them and the block-service rate
//! matrix. The solvers pick non-overlapping blocks so that latency services
//! receive their demand before their deadline and capacity services get as
//! much rate as possible:
//!
//! - [`assign::ba`], greedy assignment under a utility matrix,
//! - [`lp`], the LP relaxation that supplies one utility,
//! - [`lagrangian`], the subgradient dual that supplies another,
//! - [`exact`], brute force and branch and bound for benchmarking.
//!
//! ```
//! use flexalloc::assign::{run_pipeline, Mode, PipelineParams};
//! use flexalloc::instance::partition_instance;
//!
//! let inst = partition_instance(&[3, 1, 1, 1]).unwrap();
//! let result = run_pipeline(&inst, Mode::LpPlusLd, &PipelineParams::default()).unwrap();
//! assert!(result.assignment.feasible);
//! assert_eq!(result.assignment.objective, 3.0);
//! ```

pub mod assign;
pub mod channel;
pub mod cli;
pub mod error;
pub mod exact;
pub mod grid;
pub mod instance;
pub mod lagrangian;
pub mod lp;
pub mod seed;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/rates.md")]
    struct Rates;
    #[doc = include_str!("../../../book/src/lp.md")]
    struct Lp;
    #[doc = include_str!("../../../book/src/lagrangian.md")]
    struct Lagrangian;
    #[doc = include_str!("../../../book/src/greedy.md")]
    struct Greedy;
    #[doc = include_str!("../../../book/src/exact.md")]
    struct Exact;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
