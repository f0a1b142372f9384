//! Discrete multi-marginal optimal transport with symmetry reduction.
//!
//! Marginals are finitely supported measures, plans are sparse measures on
//! the product of their supports, and costs may forbid cells with `+∞`.
//! Problems are solved exactly by linear programming or approximately by
//! log-domain Sinkhorn iterations, and plans and Kantorovich potentials can
//! be symmetrized under finite groups of measure-preserving permutations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod cost;
pub mod error;
pub mod gen;
pub mod group;
pub mod lp;
pub mod measure;
pub mod par;
pub mod plan;
pub mod sinkhorn;
pub mod symmetrize;

pub use cost::{CostKind, CostSpec, CostTensor, ExtendedReal, Sense};
pub use error::{Error, Result};
pub use group::{ActionFamily, MarginalMap, OrbitPartition, Permutation, ProductAction, SigmaShift};
pub use lp::{solve_exact, solve_exact_with, ExactSolution, LpOptions};
pub use measure::{DiscreteMarginal, ProductIndex, ProductShape};
pub use plan::{Certificate, Plan, Potentials, SolveReport};
pub use sinkhorn::{solve_entropic, EntropicConfig, EntropicSolution};
pub use symmetrize::SymmetrizationTrace;
