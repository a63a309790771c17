//! Closed-form optimal transport on weighted rooted trees.
//!
//! The crate computes the tree-Wasserstein distance between probability
//! measures supported on the nodes of a tree, together with two max-min
//! robust variants that let an adversary move the edge lengths inside an
//! uncertainty set:
//!
//! | Uncertainty set | Value | Function |
//! |-----------------|-------|----------|
//! | none | `Σ w_e h_e` | [`tw_distance`] |
//! | per-edge box `w − α ≤ ŵ ≤ w + β` | `Σ (w_e + β_e) h_e` | [`rt_box`] |
//! | ℓp ball `‖ŵ − w‖_p ≤ λ` | `Σ w_e h_e + λ‖h‖_{p′}` | [`rt_ball`] |
//!
//! where `h_e = |μ(γ_e) − ν(γ_e)|` is the absolute difference of the masses
//! the two measures place below edge `e`. Every value is evaluated over the
//! edges on root paths of the supports only, so the cost does not depend on
//! the size of the tree.
//!
//! Exponentiated distances give positive definite kernels ([`kernel`]), and
//! the [`oracle`] module carries independent brute-force solvers (an exact
//! transportation LP and an adversary search) used to certify the closed
//! forms.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod kernel;
pub mod linalg;
pub mod measure;
pub mod oracle;
pub mod robust;
pub mod sampling;
pub mod synth;
pub mod transport;
pub mod tree;

pub use error::{Error, Result};
pub use kernel::{distance_matrix, gram_matrix, KernelConfig, MatrixKind, Metric, SymmetricMatrix};
pub use measure::{subtree_masses, Measure};
pub use robust::{
    adversarial_weights, check_box_ball_connection, dual_norm, rt_ball, rt_box, Exponent,
    UncertaintySpec,
};
pub use transport::{h_profile, tw_distance, HProfile};
pub use tree::{build_tree, contract_zero_edges, tree_distance, Contraction, EdgeVector, Tree};
