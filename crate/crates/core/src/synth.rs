//! Seeded random trees and measures for tests, verification runs and
//! benchmarks.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::measure::Measure;
use crate::tree::{EdgeVector, Tree};

/// Random recursive tree rooted at 0: node `v` attaches to a uniform earlier
/// node, with weight uniform in `[lo, hi)`. Draws are made node by node, so
/// with the same generator state the first `k` nodes of a larger tree form
/// the smaller one.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, node_count: usize, lo: f64, hi: f64) -> Tree {
    let n = node_count.max(1);
    let mut parent = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    parent.push(None);
    weight.push(0.0);
    for v in 1..n {
        parent.push(Some(rng.gen_range(0..v)));
        weight.push(if hi > lo { rng.gen_range(lo..hi) } else { lo });
    }
    Tree::from_parent_array(0, &parent, &weight).expect("recursive trees are valid")
}

/// A measure with `support` distinct nodes drawn from `0..node_limit` and
/// masses proportional to uniform draws in `[0.05, 1)`.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, node_limit: usize, support: usize) -> Measure {
    let k = support.clamp(1, node_limit.max(1));
    let nodes = sample(rng, node_limit.max(1), k);
    let entries = nodes
        .into_iter()
        .map(|v| (v, rng.gen_range(0.05..1.0)))
        .collect();
    Measure::normalized(entries).expect("positive masses")
}

/// Set each edge weight to zero independently with probability `fraction`.
pub fn zero_random_edges<R: Rng + ?Sized>(rng: &mut R, tree: &Tree, fraction: f64) -> Result<Tree> {
    let w: Vec<f64> = tree
        .weights()
        .iter()
        .map(|&w| {
            if rng.gen_bool(fraction.clamp(0.0, 1.0)) {
                0.0
            } else {
                w
            }
        })
        .collect();
    tree.with_weights(&EdgeVector::new(w))
}
