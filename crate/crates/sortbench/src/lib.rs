//! Robust distributed-memory sorting algorithms on a deterministic simulated
//! message-passing cluster.
//!
//! The crate provides:
//!
//! - [`netsim`]: a simulated cluster of `p = 2^d` PEs with point-to-point
//!   messaging and cost accounting in the `alpha + l*beta` model,
//! - [`collectives`]: hypercube-pattern primitives (all-reduce,
//!   all-gather-merge, routing, random shuffle),
//! - [`median`]: approximate median selection by a single binary-tree
//!   reduction,
//! - [`instances`]: adversarial input generators and output verification,
//! - sorting algorithms: [`rquick`] (robust hypercube quicksort), [`rfis`]
//!   (robust fast work-inefficient sort), [`rams`] (robust adaptive
//!   multi-level samplesort), and [`baselines`] (gather-merge,
//!   all-gather-merge, bitonic, simple samplesort),
//! - [`bench`]: experiment grids, the median-error experiment, and the
//!   algorithm selector behind the `sortbench` CLI.

pub mod baselines;
pub mod bench;
pub mod collectives;
pub mod instances;
pub mod median;
pub mod netsim;
pub mod rams;
pub mod rfis;
pub mod rquick;
