//! Exact biclustering by branch-and-cut over a doubly nonnegative
//! relaxation.
//!
//! A data matrix is read as a weighted complete bipartite graph between
//! its rows and columns. The solver partitions rows and columns into `k`
//! bicliques maximizing the sum of their densities (block sum divided by
//! the square root of the block size) and certifies the result with upper
//! bounds that remain valid for inexact relaxation solves.
//!
//! ```no_run
//! use bicl::{generate_planted, solve, PlantedSpec, SolverParams};
//!
//! let spec = PlantedSpec { n: 20, m: 15, k: 3, sigma: 0.1, seed: 7 };
//! let (a, _truth) = generate_planted(&spec).unwrap();
//! let r = solve(&a, 3, &SolverParams::default()).unwrap();
//! println!("{} <= opt <= {}", r.lb, r.ub);
//! ```

pub mod bench;
pub mod branching;
pub mod cuts;
pub mod driver;
pub mod error;
pub mod instance;
pub mod io;
pub mod numkernel;
pub mod oracle;
pub mod relaxation;
pub mod rounding;
pub mod safebound;

pub use driver::{elbow_scan, solve, ElbowRow, SolveResult, SolverParams, Termination};
pub use error::{Error, Result, Violation};
pub use instance::{density, generate_planted, objective, validate, Biclustering, DataMatrix, PlantedSpec};
pub use oracle::brute_force;
