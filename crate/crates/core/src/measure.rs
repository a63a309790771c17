//! Sparse probability measures on tree nodes.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::abs;
use crate::tree::{EdgeVector, Tree};

/// Masses at or below this value are rejected.
pub const MIN_MASS: f64 = 1e-15;
/// Allowed deviation of the total mass from 1 in strict mode.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A probability measure stored as `(node, mass)` pairs sorted by node.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    support: Vec<(usize, f64)>,
}

impl Measure {
    /// Strict constructor: masses must already sum to 1 within 1e-9.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        let m = Self::from_positive(entries)?;
        let total = m.total_mass();
        if abs(total - 1.0) > MASS_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
        Ok(m)
    }

    /// Relaxed constructor for raw counts: zero entries are dropped and the
    /// rest divided by their total.
    pub fn normalized(entries: Vec<(usize, f64)>) -> Result<Self> {
        let entries: Vec<_> = entries.into_iter().filter(|&(_, x)| x != 0.0).collect();
        for &(node, mass) in &entries {
            if !(mass.is_finite() && mass > 0.0) {
                return Err(Error::InvalidMass { node, mass });
            }
        }
        let total: f64 = entries.iter().map(|&(_, x)| x).sum();
        if !total.is_finite() {
            return Err(Error::NotNormalized(total));
        }
        Self::from_positive(entries.into_iter().map(|(v, x)| (v, x / total)).collect())
    }

    fn from_positive(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        for &(node, mass) in &entries {
            if !(mass.is_finite() && mass > MIN_MASS) {
                return Err(Error::InvalidMass { node, mass });
            }
        }
        entries.sort_unstable_by_key(|&(v, _)| v);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateSupport(w[0].0));
        }
        Ok(Self { support: entries })
    }

    /// Unit mass at `node`.
    pub fn dirac(tree: &Tree, node: usize) -> Result<Self> {
        tree.check_node(node)?;
        Ok(Self {
            support: alloc::vec![(node, 1.0)],
        })
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|&(_, x)| x).sum()
    }

    pub fn mass_at(&self, node: usize) -> f64 {
        self.support
            .binary_search_by_key(&node, |&(v, _)| v)
            .map_or(0.0, |i| self.support[i].1)
    }

    /// Every support node must exist in `tree`.
    pub fn check_tree(&self, tree: &Tree) -> Result<()> {
        match self.support.last() {
            Some(&(v, _)) if v >= tree.node_count() => Err(Error::TreeMismatch {
                node: v,
                node_count: tree.node_count(),
            }),
            _ => Ok(()),
        }
    }

    /// Push the measure through a node map, merging masses that land on the
    /// same node.
    pub(crate) fn remap(&self, node_map: &[usize]) -> Result<Self> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.support.len());
        let mut mapped: Vec<(usize, f64)> = self
            .support
            .iter()
            .map(|&(v, x)| (node_map[v], x))
            .collect();
        mapped.sort_by_key(|&(v, _)| v);
        for (v, x) in mapped {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += x,
                _ => out.push((v, x)),
            }
        }
        Ok(Self { support: out })
    }
}

/// `μ(γ_e)` for every edge: the mass at or below the child of `e`.
///
/// Only the root paths of the support are visited; the remaining entries
/// are zero.
pub fn subtree_masses(tree: &Tree, measure: &Measure) -> Result<EdgeVector> {
    measure.check_tree(tree)?;
    let mut out = alloc::vec![0.0; tree.edge_count()];
    for (v, x) in tree.accumulate_sparse(measure.support()) {
        out[tree.edge_of(v)] = x;
    }
    Ok(EdgeVector::new(out))
}
