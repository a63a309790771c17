//! Tree metrics over point clouds by hierarchical farthest-point
//! clustering, and bounded random perturbation of edge weights.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::tree::{EdgeVector, Tree};

pub const DEFAULT_BRANCHING: usize = 5;
pub const DEFAULT_DEPTH: usize = 6;

/// `n` points in `R^d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidPointCloud);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoordinate);
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidPointCloud);
        }
        Self::new(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let s: f64 = self
            .point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        sqrt(s)
    }
}

/// A sampled tree with, per node, the point used as its cluster center and,
/// per input point, the leaf node it was assigned to.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTree {
    pub tree: Tree,
    pub node_center: Vec<usize>,
    pub point_node: Vec<usize>,
}

struct Cluster {
    node: usize,
    center: usize,
    members: Vec<usize>,
    level: usize,
}

/// Hierarchical farthest-point clustering.
///
/// Points are first shuffled with `seed`; the first shuffled point is the
/// root center. Each cluster picks up to `branching` centers by farthest-point
/// selection starting from its own center (ties go to the earlier shuffled
/// point), assigns members to the nearest center, and recurses until `depth`
/// levels are built or a cluster is a single location. Every center becomes
/// a child node, so a cluster's own center reappears one level down behind a
/// zero-length edge. Edge weights are distances between centers.
pub fn sample_tree(
    cloud: &PointCloud,
    branching: usize,
    depth: usize,
    seed: u64,
) -> Result<SampledTree> {
    if branching < 2 {
        return Err(Error::InvalidBranching(branching));
    }
    let n = cloud.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut parent: Vec<Option<usize>> = vec![None];
    let mut weight = vec![0.0];
    let mut node_center = vec![order[0]];
    let mut point_node = vec![0usize; n];
    let mut queue = VecDeque::new();
    queue.push_back(Cluster {
        node: 0,
        center: order[0],
        members: order,
        level: 0,
    });

    while let Some(cluster) = queue.pop_front() {
        let centers = if cluster.level < depth && cluster.members.len() > 1 {
            farthest_centers(cloud, &cluster.members, cluster.center, branching)
        } else {
            vec![(cluster.center, Vec::new())]
        };
        if centers.len() <= 1 {
            for &m in &cluster.members {
                point_node[m] = cluster.node;
            }
            continue;
        }
        for (center, members) in centers {
            let node = parent.len();
            parent.push(Some(cluster.node));
            weight.push(cloud.distance(center, cluster.center));
            node_center.push(center);
            queue.push_back(Cluster {
                node,
                center,
                members,
                level: cluster.level + 1,
            });
        }
    }
    let tree = Tree::from_parent_array(0, &parent, &weight)?;
    Ok(SampledTree {
        tree,
        node_center,
        point_node,
    })
}

/// Farthest-point selection within `members` seeded with `first`, then
/// nearest-center assignment. Member order is preserved inside each group.
fn farthest_centers(
    cloud: &PointCloud,
    members: &[usize],
    first: usize,
    branching: usize,
) -> Vec<(usize, Vec<usize>)> {
    let mut centers = vec![first];
    let mut nearest = vec![0usize; members.len()];
    let mut gap: Vec<f64> = members.iter().map(|&m| cloud.distance(m, first)).collect();
    while centers.len() < branching {
        let mut far = 0;
        for i in 1..members.len() {
            if gap[i] > gap[far] {
                far = i;
            }
        }
        if gap[far] == 0.0 {
            break;
        }
        let c = members[far];
        let k = centers.len();
        centers.push(c);
        for (i, &m) in members.iter().enumerate() {
            let d = cloud.distance(m, c);
            if d < gap[i] {
                gap[i] = d;
                nearest[i] = k;
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = centers.iter().map(|&c| (c, Vec::new())).collect();
    for (i, &m) in members.iter().enumerate() {
        groups[nearest[i]].1.push(m);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseDistribution {
    /// `w_e + U[−Δ, Δ]`, clamped at zero.
    #[default]
    UniformSigned,
    /// `w_e + U[0, Δ]`.
    UniformPositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
    pub distribution: NoiseDistribution,
}

/// Perturb every edge weight independently by at most `Δ`, keeping weights
/// nonnegative. Draws are made in edge-id order from a seeded generator.
pub fn perturb_weights(tree: &Tree, spec: &NoiseSpec) -> Result<Tree> {
    let delta = spec.delta;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if delta == 0.0 {
        return Ok(tree.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = match spec.distribution {
        NoiseDistribution::UniformSigned => Uniform::new_inclusive(-delta, delta),
        NoiseDistribution::UniformPositive => Uniform::new_inclusive(0.0, delta),
    };
    let w: Vec<f64> = tree
        .weights()
        .iter()
        .map(|&w| {
            let u = noise.sample(&mut rng);
            // Keep |ŵ − w| ≤ Δ exact in floating point.
            let mut x = (w + u).max(0.0);
            while x - w > delta {
                x = f64::from_bits(x.to_bits() - 1);
            }
            while w - x > delta {
                x = f64::from_bits(x.to_bits() + 1);
            }
            x
        })
        .collect();
    tree.with_weights(&EdgeVector::new(w))
}
