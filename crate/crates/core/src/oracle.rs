//! Brute-force verifiers for the closed forms.
//!
//! [`ot_lp`] solves the transportation problem between the supports of two
//! measures with the tree path length as ground cost, by successive shortest
//! paths on the bipartite residual graph. It never looks at subtree masses.
//!
//! [`adversary_search`] searches the uncertainty set directly. Since the
//! inner OT value at weights `ŵ` equals `Σ ŵ_e h_e`, the search maximizes
//! that linear objective; on small trees it can additionally re-solve the
//! inner problem with [`ot_lp`] at every candidate to check that identity.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::abs;
use crate::measure::Measure;
use crate::robust::{lp_norm, Exponent, UncertaintySpec};
use crate::transport::{h_profile, HProfile};
use crate::tree::{tree_distance, EdgeVector, Tree};

/// Upper bound on `|supp μ| · |supp ν|` for [`ot_lp`].
pub const MAX_LP_CELLS: usize = 10_000;
/// Upper bound on `|E|` for exhaustive corner enumeration of a box.
pub const MAX_GRID_EDGES: usize = 16;
/// Trees up to this many nodes get the inner problem re-solved per candidate.
pub const MAX_INNER_CHECK_NODES: usize = 12;

const MASS_EPS: f64 = 1e-15;

/// A transport plan between the supports of two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Row-major `rows.len() × cols.len()`.
    pub plan: Vec<f64>,
}

impl Coupling {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols.len() + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows.len())
            .map(|i| (0..self.cols.len()).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols.len())
            .map(|j| (0..self.rows.len()).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Largest marginal violation against the two measures.
    pub fn marginal_error(&self, mu: &Measure, nu: &Measure) -> f64 {
        let r = self
            .row_sums()
            .iter()
            .zip(mu.support())
            .map(|(s, &(_, x))| abs(s - x))
            .fold(0.0, f64::max);
        let c = self
            .col_sums()
            .iter()
            .zip(nu.support())
            .map(|(s, &(_, x))| abs(s - x))
            .fold(0.0, f64::max);
        r.max(c)
    }
}

/// Exact 1-Wasserstein distance with the tree path metric, by linear
/// programming over couplings. Returns the optimum and an optimal plan.
pub fn ot_lp(tree: &Tree, mu: &Measure, nu: &Measure) -> Result<(f64, Coupling)> {
    mu.check_tree(tree)?;
    nu.check_tree(tree)?;
    let cells = mu.len() * nu.len();
    if cells > MAX_LP_CELLS {
        return Err(Error::InstanceTooLarge {
            size: cells,
            limit: MAX_LP_CELLS,
        });
    }
    let mut cost = Vec::with_capacity(cells);
    for &(x, _) in mu.support() {
        for &(z, _) in nu.support() {
            cost.push(tree_distance(tree, x, z)?);
        }
    }
    let supply: Vec<f64> = mu.support().iter().map(|&(_, m)| m).collect();
    let demand: Vec<f64> = nu.support().iter().map(|&(_, m)| m).collect();
    let plan = transport_ssp(&supply, &demand, &cost);
    let value = plan.iter().zip(&cost).fold(0.0, |s, (f, c)| s + f * c);
    Ok((
        value,
        Coupling {
            rows: mu.support().iter().map(|&(v, _)| v).collect(),
            cols: nu.support().iter().map(|&(v, _)| v).collect(),
            plan,
        },
    ))
}

// Arc i→j plus its reverse is a zero-cost cycle; an absolute margin lets
// rounding relax around it and corrupt the predecessor tree.
fn relax_margin(current: f64) -> f64 {
    if current.is_finite() {
        1e-12 * (1.0 + abs(current))
    } else {
        0.0
    }
}

/// Min-cost transportation by successive shortest augmenting paths.
///
/// Residual arcs: source `i` → sink `j` with unbounded capacity and cost
/// `c_ij`, and `j` → `i` with capacity `flow_ij` and cost `−c_ij`. Paths
/// start at any source with remaining supply and end at the cheapest
/// reachable sink with remaining demand; Bellman-Ford handles the negative
/// reverse arcs.
fn transport_ssp(supply: &[f64], demand: &[f64], cost: &[f64]) -> Vec<f64> {
    let (a, b) = (supply.len(), demand.len());
    let mut flow = vec![0.0; a * b];
    let mut supply = supply.to_vec();
    let mut demand = demand.to_vec();
    let nodes = a + b;
    let max_rounds = 4 * (a + b) * (a + b) + 16;
    for _ in 0..max_rounds {
        if !supply.iter().any(|&s| s > MASS_EPS) || !demand.iter().any(|&d| d > MASS_EPS) {
            break;
        }
        // Node k < a is source k; node a + j is sink j.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred = vec![usize::MAX; nodes];
        for i in 0..a {
            if supply[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        for _ in 0..nodes {
            let mut changed = false;
            for i in 0..a {
                if dist[i] == f64::INFINITY {
                    continue;
                }
                for j in 0..b {
                    let nd = dist[i] + cost[i * b + j];
                    if nd < dist[a + j] - relax_margin(dist[a + j]) {
                        dist[a + j] = nd;
                        pred[a + j] = i;
                        changed = true;
                    }
                }
            }
            for j in 0..b {
                if dist[a + j] == f64::INFINITY {
                    continue;
                }
                for i in 0..a {
                    if flow[i * b + j] > MASS_EPS {
                        let nd = dist[a + j] - cost[i * b + j];
                        if nd < dist[i] - relax_margin(dist[i]) {
                            dist[i] = nd;
                            pred[i] = a + j;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let target = (0..b)
            .filter(|&j| demand[j] > MASS_EPS && dist[a + j] < f64::INFINITY)
            .min_by(|&x, &y| dist[a + x].total_cmp(&dist[a + y]));
        let Some(j_end) = target else { break };
        // Walk back to find the bottleneck, then augment.
        let mut bottleneck = demand[j_end];
        let mut v = a + j_end;
        let mut steps = 0;
        while pred[v] != usize::MAX && steps <= nodes {
            let u = pred[v];
            if u >= a {
                // reverse arc sink u−a → source v
                bottleneck = bottleneck.min(flow[v * b + (u - a)]);
            }
            v = u;
            steps += 1;
        }
        if pred[v] != usize::MAX {
            break;
        }
        bottleneck = bottleneck.min(supply[v]);
        if bottleneck <= 0.0 {
            break;
        }
        let start = v;
        let mut v = a + j_end;
        while v != start {
            let u = pred[v];
            if u < a {
                flow[u * b + (v - a)] += bottleneck;
            } else {
                let cell = v * b + (u - a);
                flow[cell] -= bottleneck;
                if flow[cell] < MASS_EPS {
                    flow[cell] = 0.0;
                }
            }
            v = u;
        }
        supply[start] -= bottleneck;
        demand[j_end] -= bottleneck;
    }
    flow
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Box: every corner of the box (`|E| ≤ 16`). Ball: same as `Random`.
    Grid,
    /// Random sampling followed by coordinate ascent, any size.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryOptions {
    pub budget: usize,
    pub mode: SearchMode,
    pub seed: u64,
    /// Re-solve the inner OT with [`ot_lp`] at every candidate when the tree
    /// has at most [`MAX_INNER_CHECK_NODES`] nodes.
    pub verify_inner: bool,
}

impl Default for AdversaryOptions {
    fn default() -> Self {
        Self {
            budget: 10_000,
            mode: SearchMode::Random,
            seed: 0,
            verify_inner: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryResult {
    pub value: f64,
    pub w_hat: EdgeVector,
    pub evaluations: usize,
    /// Largest `|ot_lp(ŵ) − Σ ŵ_e h_e|` over the checked candidates.
    pub max_inner_gap: Option<f64>,
}

struct Search<'a> {
    tree: &'a Tree,
    mu: &'a Measure,
    nu: &'a Measure,
    profile: HProfile,
    verify: bool,
    best: f64,
    best_w: Vec<f64>,
    evaluations: usize,
    max_gap: Option<f64>,
}

impl Search<'_> {
    fn eval(&mut self, w_hat: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let value: f64 = self
            .profile
            .edges
            .iter()
            .zip(&self.profile.h)
            .fold(0.0, |s, (&e, h)| s + w_hat[e] * h);
        if self.verify {
            let perturbed = self.tree.with_weights(&EdgeVector::new(w_hat.to_vec()))?;
            let (inner, _) = ot_lp(&perturbed, self.mu, self.nu)?;
            let gap = abs(inner - value);
            self.max_gap = Some(self.max_gap.map_or(gap, |g| g.max(gap)));
        }
        if value > self.best {
            self.best = value;
            self.best_w = w_hat.to_vec();
        }
        Ok(value)
    }
}

/// Maximize `Σ ŵ_e h_e` over the uncertainty set by direct search.
pub fn adversary_search(
    tree: &Tree,
    mu: &Measure,
    nu: &Measure,
    spec: &UncertaintySpec,
    opts: &AdversaryOptions,
) -> Result<AdversaryResult> {
    spec.validate(tree)?;
    let profile = h_profile(tree, mu, nu)?;
    let w = tree.weights().into_inner();
    let mut search = Search {
        tree,
        mu,
        nu,
        profile,
        verify: opts.verify_inner && tree.node_count() <= MAX_INNER_CHECK_NODES,
        best: f64::NEG_INFINITY,
        best_w: w.clone(),
        evaluations: 0,
        max_gap: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    match spec {
        UncertaintySpec::Box { alpha, beta } => {
            let lower: Vec<f64> = match alpha {
                Some(a) => w.iter().zip(a.iter()).map(|(w, a)| w - a).collect(),
                None => w.clone(),
            };
            let upper: Vec<f64> = w.iter().zip(beta.iter()).map(|(w, b)| w + b).collect();
            match opts.mode {
                SearchMode::Grid => box_corners(&mut search, &lower, &upper)?,
                SearchMode::Random => {
                    box_random(&mut search, &lower, &upper, opts.budget, &mut rng)?
                }
            }
        }
        UncertaintySpec::Ball { p, lambda } => {
            ball_search(&mut search, &w, *p, *lambda, opts.budget, &mut rng)?;
        }
    }
    Ok(AdversaryResult {
        value: search.best,
        w_hat: EdgeVector::new(search.best_w),
        evaluations: search.evaluations,
        max_inner_gap: search.max_gap,
    })
}

fn box_corners(search: &mut Search<'_>, lower: &[f64], upper: &[f64]) -> Result<()> {
    let m = lower.len();
    if m > MAX_GRID_EDGES {
        return Err(Error::InstanceTooLarge {
            size: m,
            limit: MAX_GRID_EDGES,
        });
    }
    let mut point = vec![0.0; m];
    for mask in 0u32..(1u32 << m) {
        for e in 0..m {
            point[e] = if mask >> e & 1 == 1 {
                upper[e]
            } else {
                lower[e]
            };
        }
        search.eval(&point)?;
    }
    Ok(())
}

fn box_random(
    search: &mut Search<'_>,
    lower: &[f64],
    upper: &[f64],
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let m = lower.len();
    let mut point: Vec<f64> = (0..m)
        .map(|e| {
            if upper[e] > lower[e] {
                rng.gen_range(lower[e]..=upper[e])
            } else {
                lower[e]
            }
        })
        .collect();
    search.eval(&point)?;
    let samples = budget / 2;
    for _ in 1..samples {
        for e in 0..m {
            point[e] = if upper[e] > lower[e] {
                rng.gen_range(lower[e]..=upper[e])
            } else {
                lower[e]
            };
        }
        search.eval(&point)?;
    }
    // Coordinate ascent from the best sample: each coordinate moves to
    // whichever endpoint scores higher.
    let mut current = search.best_w.clone();
    let mut score = search.best;
    let mut used = samples.max(1);
    'outer: loop {
        let mut improved = false;
        for e in 0..m {
            for end in [lower[e], upper[e]] {
                if used >= budget.max(samples + 2 * m) {
                    break 'outer;
                }
                let old = current[e];
                current[e] = end;
                used += 1;
                let v = search.eval(&current)?;
                if v > score {
                    score = v;
                    improved = true;
                } else {
                    current[e] = old;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(())
}

/// Pull a perturbation back into `B_p(0, λ) ∩ {w + d ≥ 0}`: radial scaling
/// onto the sphere (exact clamping for `p = ∞`), then clipping.
fn retract(d: &mut [f64], w: &[f64], p: Exponent, lambda: f64) -> bool {
    if p.is_infinite() {
        for x in d.iter_mut() {
            *x = x.clamp(-lambda, lambda);
        }
    } else {
        let norm = lp_norm(d, p);
        if norm == 0.0 || !norm.is_finite() {
            return false;
        }
        let s = lambda / norm;
        for x in d.iter_mut() {
            *x *= s;
        }
        // Scaling can overshoot the sphere by an ulp.
        let again = lp_norm(d, p);
        if again > lambda {
            let s = lambda / again * (1.0 - 4.0 * f64::EPSILON);
            for x in d.iter_mut() {
                *x *= s;
            }
        }
    }
    for (x, &we) in d.iter_mut().zip(w) {
        if *x < -we {
            *x = -we;
        }
    }
    true
}

fn ball_search(
    search: &mut Search<'_>,
    w: &[f64],
    p: Exponent,
    lambda: f64,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let m = w.len();
    search.eval(w)?;
    if m == 0 || lambda == 0.0 {
        return Ok(());
    }
    let point = |d: &[f64]| -> Vec<f64> { w.iter().zip(d).map(|(w, d)| w + d).collect() };
    let mut best_d = vec![0.0; m];
    let mut best = search.best;
    let mut d = vec![0.0; m];
    let random_phase = (budget / 4).max(1);
    for _ in 0..random_phase {
        for x in d.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        if !retract(&mut d, w, p, lambda) {
            continue;
        }
        let v = search.eval(&point(&d))?;
        if v > best {
            best = v;
            best_d.copy_from_slice(&d);
        }
    }
    // Local refinement: alternate single-coordinate moves and full random
    // steps, adapting the step size on success and failure.
    let mut sigma = 0.5 * lambda;
    for it in random_phase..budget {
        d.copy_from_slice(&best_d);
        if it % 2 == 0 {
            let e = rng.gen_range(0..m);
            d[e] += if rng.gen_bool(0.5) { sigma } else { -sigma };
        } else {
            for x in d.iter_mut() {
                *x += sigma * rng.gen_range(-1.0..1.0);
            }
        }
        if !retract(&mut d, w, p, lambda) {
            continue;
        }
        let v = search.eval(&point(&d))?;
        if v > best {
            best = v;
            best_d.copy_from_slice(&d);
            sigma = (sigma * 1.5).min(2.0 * lambda);
        } else {
            sigma *= 0.95;
            if sigma < 1e-12 * lambda {
                sigma = 0.5 * lambda;
            }
        }
    }
    Ok(())
}
