//! Closed-form tree-Wasserstein distance and the `h` profile shared by the
//! robust variants.

use alloc::vec::Vec;

use crate::error::Result;
use crate::math::abs;
use crate::measure::Measure;
use crate::tree::{EdgeVector, Tree};

/// Nonzero entries of `h_e = |μ(γ_e) − ν(γ_e)|`, in ascending edge id, with
/// the matching edge weights. Edges not listed have `h_e = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HProfile {
    pub edges: Vec<usize>,
    pub h: Vec<f64>,
    pub w: Vec<f64>,
}

impl HProfile {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `Σ w_e h_e`, summed in edge-id order.
    pub fn weighted_sum(&self) -> f64 {
        self.w.iter().zip(&self.h).fold(0.0, |s, (w, h)| s + w * h)
    }

    /// `Σ w_e h_e` with Neumaier compensation.
    pub fn weighted_sum_compensated(&self) -> f64 {
        compensated_sum(self.w.iter().zip(&self.h).map(|(w, h)| w * h))
    }

    /// `Σ ŵ_e h_e` for an arbitrary full-length weight vector.
    pub fn dot(&self, weights: &EdgeVector) -> f64 {
        self.edges
            .iter()
            .zip(&self.h)
            .fold(0.0, |s, (&e, h)| s + weights[e] * h)
    }

    /// Scatter into a dense per-edge vector.
    pub fn to_edge_vector(&self, edge_count: usize) -> EdgeVector {
        let mut out = alloc::vec![0.0; edge_count];
        for (&e, &h) in self.edges.iter().zip(&self.h) {
            out[e] = h;
        }
        EdgeVector::new(out)
    }
}

/// Neumaier's variant of Kahan summation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for x in values {
        let t = sum + x;
        if abs(sum) >= abs(x) {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

fn signed_points(mu: &Measure, nu: &Measure) -> Vec<(usize, f64)> {
    mu.support()
        .iter()
        .copied()
        .chain(nu.support().iter().map(|&(v, x)| (v, -x)))
        .collect()
}

/// One bottom-up pass over the root paths of `supp(μ) ∪ supp(ν)`.
pub fn h_profile(tree: &Tree, mu: &Measure, nu: &Measure) -> Result<HProfile> {
    mu.check_tree(tree)?;
    nu.check_tree(tree)?;
    let mut entries: Vec<(usize, f64)> = tree
        .accumulate_sparse(&signed_points(mu, nu))
        .into_iter()
        .filter(|&(_, d)| d != 0.0)
        .map(|(v, d)| (tree.edge_of(v), abs(d)))
        .collect();
    entries.sort_unstable_by_key(|&(e, _)| e);
    let mut profile = HProfile {
        edges: Vec::with_capacity(entries.len()),
        h: Vec::with_capacity(entries.len()),
        w: Vec::with_capacity(entries.len()),
    };
    for (e, h) in entries {
        profile.edges.push(e);
        profile.h.push(h);
        profile.w.push(tree.edge_weight(e));
    }
    Ok(profile)
}

/// The full `h` vector computed by a dense pass over every edge.
pub fn h_vector_full(tree: &Tree, mu: &Measure, nu: &Measure) -> Result<EdgeVector> {
    mu.check_tree(tree)?;
    nu.check_tree(tree)?;
    let acc = tree.accumulate_dense(&signed_points(mu, nu));
    Ok(EdgeVector::new(
        (0..tree.edge_count())
            .map(|e| abs(acc[tree.child_of(e)]))
            .collect(),
    ))
}

/// Tree-Wasserstein distance `Σ_e w_e |μ(γ_e) − ν(γ_e)|`.
pub fn tw_distance(tree: &Tree, mu: &Measure, nu: &Measure) -> Result<f64> {
    Ok(h_profile(tree, mu, nu)?.weighted_sum())
}

/// Same value as [`tw_distance`], evaluated over every edge of the tree.
pub fn tw_distance_full(tree: &Tree, mu: &Measure, nu: &Measure) -> Result<f64> {
    let h = h_vector_full(tree, mu, nu)?;
    Ok(h.iter()
        .enumerate()
        .fold(0.0, |s, (e, h)| s + tree.edge_weight(e) * h))
}
