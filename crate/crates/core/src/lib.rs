//! Structure-preserving model order reduction for networks of LTI subsystems.
//!
//! A network is a block-diagonal plant `G(s) = diag(G_1, ..., G_q)` closed
//! through a static matrix `N`. The crate reduces each `G_i` individually
//! while measuring quality on the closed loop `F(N, G(s))`:
//!
//! * [`gramians`]: structured (block-extracted) and generalized (LMI) Gramians
//! * [`reduction`]: per-subsystem balancing, truncation and singular perturbation
//! * [`subgradient`]: local refinement of a reduced model by projected
//!   subgradient descent on the closed-loop H-infinity error
//!
//! [`linalg`] holds the dense kernels the rest is built on.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gramians;
pub mod linalg;
pub mod massspring;
pub mod network;
pub mod reduction;
pub mod subgradient;
pub mod sysmodel;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use error::{Error, Result};
pub use gramians::{generalized_gramians, structured_gramians, GramianKind, GramianPair};
pub use linalg::{CMatrix, Matrix};
pub use massspring::{mass_spring, MassSpringModel, MassSpringOptions};
pub use network::{
    assemble_network, close_loop, closed_loop_error, ClosedLoop, Edge, EdgeLists, NetworkMatrix,
};
pub use reduction::{
    balance, singular_perturbation, suggest_orders, theorem1_bound, truncate, BalancedRealization, ErrorBound,
    ReducedModel, ReductionMethod,
};
pub use subgradient::{build_error_plant, improve, DescentOptions, DescentReport, ErrorPlant, GainPoint, ProjectionMask};
pub use sysmodel::{BlockDiagonalPlant, OrderVector, StateSpaceModel};
