//! Rooted trees with nonnegative edge weights.
//!
//! Nodes are dense ids in `0..node_count`. Every non-root node `v` owns the
//! edge `(parent(v), v)`, so edges are identified by their child node. Edge
//! ids are the child ids in ascending order with the root skipped, which
//! gives a canonical dense layout for [`EdgeVector`].

use alloc::vec;
use alloc::vec::Vec;

use hashbrown::hash_map::Entry;
use hashbrown::HashMap;

use crate::error::{Error, Result};
use crate::measure::Measure;

const NO_PARENT: usize = usize::MAX;

/// A per-edge real vector in edge-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector(Vec<f64>);

impl EdgeVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::constant(len, 0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub(crate) fn check_len(&self, expected: usize) -> Result<()> {
        if self.0.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

impl core::ops::Index<usize> for EdgeVector {
    type Output = f64;

    fn index(&self, edge: usize) -> &f64 {
        &self.0[edge]
    }
}

impl From<Vec<f64>> for EdgeVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// An immutable rooted tree with nonnegative edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    root: usize,
    parent: Vec<usize>,
    // weight[v] is the length of the edge into v; weight[root] is 0.
    weight: Vec<f64>,
    depth: Vec<u32>,
    // Non-root nodes, depth nonincreasing, so every node precedes its parent.
    topo_order: Vec<usize>,
    topo_rank: Vec<usize>,
}

/// Build a validated tree from `(child, parent, weight)` triples.
///
/// The node count is one more than the largest id mentioned.
pub fn build_tree(edges: &[(usize, usize, f64)], root: usize) -> Result<Tree> {
    let node_count = edges
        .iter()
        .flat_map(|&(c, p, _)| [c, p])
        .chain(core::iter::once(root))
        .max()
        .map_or(1, |m| m + 1);
    let mut parent = vec![NO_PARENT; node_count];
    let mut weight = vec![0.0; node_count];
    for &(child, par, w) in edges {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::NegativeWeight { child, weight: w });
        }
        if child == root {
            return Err(Error::RootHasParent(root));
        }
        if parent[child] != NO_PARENT {
            return Err(Error::DuplicateChild(child));
        }
        parent[child] = par;
        weight[child] = w;
    }
    Tree::from_parts(root, parent, weight)
}

impl Tree {
    /// Build from a parent array (`None` exactly at the root) and a weight
    /// array indexed by node (the root entry is ignored).
    pub fn from_parent_array(
        root: usize,
        parent: &[Option<usize>],
        weight: &[f64],
    ) -> Result<Tree> {
        let n = parent.len();
        if root >= n {
            return Err(Error::InvalidNode {
                node: root,
                node_count: n,
            });
        }
        if weight.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: weight.len(),
            });
        }
        let mut par = vec![NO_PARENT; n];
        let mut w = vec![0.0; n];
        for v in 0..n {
            match parent[v] {
                Some(_) if v == root => return Err(Error::RootHasParent(root)),
                Some(p) => {
                    let wv = weight[v];
                    if !(wv.is_finite() && wv >= 0.0) {
                        return Err(Error::NegativeWeight {
                            child: v,
                            weight: wv,
                        });
                    }
                    if p >= n {
                        return Err(Error::InvalidNode {
                            node: p,
                            node_count: n,
                        });
                    }
                    par[v] = p;
                    w[v] = wv;
                }
                None => {}
            }
        }
        Tree::from_parts(root, par, w)
    }

    fn from_parts(root: usize, parent: Vec<usize>, weight: Vec<f64>) -> Result<Tree> {
        let n = parent.len();
        for (v, &p) in parent.iter().enumerate() {
            if v != root && p == NO_PARENT {
                return Err(Error::DisconnectedNode(v));
            }
        }
        // Children in CSR layout, then BFS from the root.
        let mut child_start = vec![0usize; n + 1];
        for (v, &p) in parent.iter().enumerate() {
            if v != root {
                child_start[p + 1] += 1;
            }
        }
        for i in 0..n {
            child_start[i + 1] += child_start[i];
        }
        let mut fill = child_start.clone();
        let mut children = vec![0usize; n.saturating_sub(1)];
        for (v, &p) in parent.iter().enumerate() {
            if v != root {
                children[fill[p]] = v;
                fill[p] += 1;
            }
        }
        let mut depth = vec![u32::MAX; n];
        let mut bfs = Vec::with_capacity(n);
        depth[root] = 0;
        bfs.push(root);
        let mut head = 0;
        while head < bfs.len() {
            let u = bfs[head];
            head += 1;
            for &c in &children[child_start[u]..child_start[u + 1]] {
                depth[c] = depth[u] + 1;
                bfs.push(c);
            }
        }
        if bfs.len() != n {
            let stuck = (0..n).find(|&v| depth[v] == u32::MAX).unwrap_or(0);
            return Err(Error::CycleDetected(stuck));
        }
        let topo_order: Vec<usize> = bfs.into_iter().skip(1).rev().collect();
        let mut topo_rank = vec![n - 1; n];
        for (rank, &v) in topo_order.iter().enumerate() {
            topo_rank[v] = rank;
        }
        Ok(Tree {
            root,
            parent,
            weight,
            depth,
            topo_order,
            topo_rank,
        })
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        match self.parent.get(node) {
            Some(&p) if p != NO_PARENT => Some(p),
            _ => None,
        }
    }

    /// Hop count from the root.
    pub fn depth(&self, node: usize) -> usize {
        self.depth[node] as usize
    }

    /// Non-root nodes, children before parents, depth nonincreasing.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    #[inline]
    pub fn edge_of(&self, child: usize) -> usize {
        debug_assert!(child != self.root);
        child - usize::from(child > self.root)
    }

    #[inline]
    pub fn child_of(&self, edge: usize) -> usize {
        edge + usize::from(edge >= self.root)
    }

    /// Weight of the edge identified by `edge`.
    #[inline]
    pub fn edge_weight(&self, edge: usize) -> f64 {
        self.weight[self.child_of(edge)]
    }

    /// Weight of the edge into `child`.
    #[inline]
    pub fn weight_into(&self, child: usize) -> f64 {
        self.weight[child]
    }

    pub fn weights(&self) -> EdgeVector {
        EdgeVector(
            (0..self.edge_count())
                .map(|e| self.edge_weight(e))
                .collect(),
        )
    }

    /// `(child, parent, weight)` triples in edge-id order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.edge_count()).map(move |e| {
            let c = self.child_of(e);
            (c, self.parent[c], self.weight[c])
        })
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.node_count() {
            return Err(Error::InvalidNode {
                node,
                node_count: self.node_count(),
            });
        }
        Ok(())
    }

    /// The same topology with new edge weights.
    pub fn with_weights(&self, weights: &EdgeVector) -> Result<Tree> {
        weights.check_len(self.edge_count())?;
        let mut weight = vec![0.0; self.node_count()];
        for (e, &w) in weights.iter().enumerate() {
            let c = self.child_of(e);
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::NegativeWeight {
                    child: c,
                    weight: w,
                });
            }
            weight[c] = w;
        }
        Ok(Tree {
            weight,
            ..self.clone()
        })
    }

    /// Accumulate point values bottom-up over the ancestor closure of their
    /// nodes. Returns `(child node, subtree total)` for every edge in the
    /// closure, in topological order. Values at the same node are summed in
    /// input order, and children reach a parent in the same order as in
    /// [`Tree::accumulate_dense`].
    pub(crate) fn accumulate_sparse(&self, points: &[(usize, f64)]) -> Vec<(usize, f64)> {
        const NONE: usize = usize::MAX;
        let mut slot: HashMap<usize, usize> = HashMap::with_capacity(points.len() * 8);
        let mut nodes: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut up: Vec<usize> = Vec::new();
        for &(start, x) in points {
            let mut v = start;
            let mut below = NONE;
            while v != self.root {
                let (i, fresh) = match slot.entry(v) {
                    Entry::Occupied(e) => (*e.get(), false),
                    Entry::Vacant(e) => {
                        let i = nodes.len();
                        e.insert(i);
                        nodes.push(v);
                        values.push(0.0);
                        up.push(NONE);
                        (i, true)
                    }
                };
                if below == NONE {
                    values[i] += x;
                } else {
                    up[below] = i;
                }
                if !fresh {
                    break;
                }
                below = i;
                v = self.parent[v];
            }
        }
        let mut order: Vec<(usize, usize)> = nodes
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.topo_rank[v], i))
            .collect();
        order.sort_unstable();
        for &(_, i) in &order {
            if up[i] != NONE {
                values[up[i]] += values[i];
            }
        }
        order
            .into_iter()
            .map(|(_, i)| (nodes[i], values[i]))
            .collect()
    }

    /// Dense counterpart of [`Tree::accumulate_sparse`]: one value per node,
    /// accumulated over the full topological order.
    pub(crate) fn accumulate_dense(&self, points: &[(usize, f64)]) -> Vec<f64> {
        let mut acc = vec![0.0; self.node_count()];
        for &(v, x) in points {
            acc[v] += x;
        }
        for &v in &self.topo_order {
            let p = self.parent[v];
            acc[p] += acc[v];
        }
        acc
    }

    /// Edge ids on the path between `x` and `z`, unordered.
    pub(crate) fn path_edges(&self, mut x: usize, mut z: usize) -> Vec<usize> {
        let mut edges = Vec::new();
        while self.depth[x] > self.depth[z] {
            edges.push(self.edge_of(x));
            x = self.parent[x];
        }
        while self.depth[z] > self.depth[x] {
            edges.push(self.edge_of(z));
            z = self.parent[z];
        }
        while x != z {
            edges.push(self.edge_of(x));
            edges.push(self.edge_of(z));
            x = self.parent[x];
            z = self.parent[z];
        }
        edges
    }
}

/// Length of the unique path between `x` and `z`.
///
/// Weights are summed in ascending edge-id order, the same order the
/// transport distances use, so `tw_distance(δ_x, δ_z)` matches exactly.
pub fn tree_distance(tree: &Tree, x: usize, z: usize) -> Result<f64> {
    tree.check_node(x)?;
    tree.check_node(z)?;
    let mut edges = tree.path_edges(x, z);
    edges.sort_unstable();
    Ok(edges.iter().fold(0.0, |s, &e| s + tree.edge_weight(e)))
}

/// A tree with its zero-length edges collapsed, the remapped measures, and
/// the old-to-new node id table.
#[derive(Debug, Clone, PartialEq)]
pub struct Contraction {
    pub tree: Tree,
    pub measures: Vec<Measure>,
    pub node_map: Vec<usize>,
}

/// Collapse every edge of weight exactly zero by merging the child into its
/// parent, repeating through chains of zero edges.
///
/// Surviving nodes keep their relative id order. Mass on merged nodes is
/// added to the surviving representative.
pub fn contract_zero_edges(tree: &Tree, measures: &[Measure]) -> Result<Contraction> {
    for m in measures {
        m.check_tree(tree)?;
    }
    let n = tree.node_count();
    // Representatives resolved top-down: parents are final before children.
    let mut rep = vec![0usize; n];
    rep[tree.root] = tree.root;
    for &v in tree.topo_order.iter().rev() {
        rep[v] = if tree.weight[v] == 0.0 {
            rep[tree.parent[v]]
        } else {
            v
        };
    }
    let mut new_id = vec![NO_PARENT; n];
    let mut next = 0;
    for v in 0..n {
        if rep[v] == v {
            new_id[v] = next;
            next += 1;
        }
    }
    let node_map: Vec<usize> = (0..n).map(|v| new_id[rep[v]]).collect();
    let mut parent = vec![None; next];
    let mut weight = vec![0.0; next];
    for v in 0..n {
        if rep[v] == v && v != tree.root {
            parent[new_id[v]] = Some(node_map[tree.parent[v]]);
            weight[new_id[v]] = tree.weight[v];
        }
    }
    let contracted = Tree::from_parent_array(node_map[tree.root], &parent, &weight)?;
    let measures = measures
        .iter()
        .map(|m| m.remap(&node_map))
        .collect::<Result<Vec<_>>>()?;
    Ok(Contraction {
        tree: contracted,
        measures,
        node_map,
    })
}
