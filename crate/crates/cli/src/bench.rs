//! Timing harness for per-pair distances and Gram assembly.

use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twr_core::synth::{random_measure, random_tree};
use twr_core::{EdgeVector, Exponent, Measure, Metric, Tree};

use crate::error::{CliError, Context, Result};
use crate::parallel::{distance_matrix, pair_count, pool, Evaluation};

/// `edges:measures:support`, e.g. `10000:50:10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSize {
    pub edges: usize,
    pub measures: usize,
    pub support: usize,
}

impl FromStr for BenchSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [e, n, k] = parts.as_slice() else {
            return Err(format!("`{s}` is not edges:measures:support"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad number `{x}` in `{s}`"))
        };
        let size = BenchSize {
            edges: num(e)?,
            measures: num(n)?,
            support: num(k)?,
        };
        if size.edges == 0 || size.measures < 2 || size.support == 0 {
            return Err(format!("`{s}` needs edges ≥ 1, measures ≥ 2, support ≥ 1"));
        }
        Ok(size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub seed: u64,
    /// Pairs timed per metric and mode.
    pub pairs: usize,
    /// Place supports on the first `n` nodes instead of the whole tree.
    pub support_prefix: Option<usize>,
    pub threads: Option<usize>,
    pub gram: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seed: 0,
            pairs: 200,
            support_prefix: None,
            threads: None,
            gram: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub edges: usize,
    pub measures: usize,
    pub support: usize,
    pub pairs_timed: usize,
    pub tw_restricted_ns: f64,
    pub tw_full_ns: f64,
    pub rt_box_restricted_ns: f64,
    pub rt_box_full_ns: f64,
    pub rt_ball_restricted_ns: f64,
    pub rt_ball_full_ns: f64,
    pub gram_pairs: usize,
    pub gram_seconds: Option<f64>,
    pub gram_pairs_per_second: Option<f64>,
}

/// Mean nanoseconds per pair over `pairs`.
pub fn time_pairs(
    tree: &Tree,
    measures: &[Measure],
    pairs: &[(usize, usize)],
    metric: &Metric,
    evaluation: Evaluation,
) -> Result<f64> {
    let start = Instant::now();
    for &(i, j) in pairs {
        black_box(
            evaluation
                .distance(metric, tree, &measures[i], &measures[j])
                .context("bench pair")?,
        );
    }
    Ok(start.elapsed().as_nanos() as f64 / pairs.len().max(1) as f64)
}

pub fn run_bench(sizes: &[BenchSize], opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    let pool = pool(opts.threads)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for (k, size) in sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
        let nodes = size.edges + 1;
        let tree = random_tree(&mut rng, nodes, 0.0, 1.0);
        let limit = opts.support_prefix.unwrap_or(nodes).clamp(1, nodes);
        if size.support > limit {
            return Err(CliError::config(format!(
                "support {} exceeds the {limit} nodes available",
                size.support
            )));
        }
        let measures: Vec<Measure> = (0..size.measures)
            .map(|_| random_measure(&mut rng, limit, size.support))
            .collect();
        let pairs: Vec<(usize, usize)> = (0..opts.pairs.max(1))
            .map(|_| {
                let i = rng.gen_range(0..size.measures);
                let j = (i + rng.gen_range(1..size.measures)) % size.measures;
                (i, j)
            })
            .collect();
        let metrics = [
            Metric::Tw,
            Metric::RtBox {
                beta: EdgeVector::constant(tree.edge_count(), 0.5),
            },
            Metric::RtBall {
                p: Exponent::TWO,
                lambda: 0.5,
            },
        ];
        let mut ns = [[0.0; 2]; 3];
        for (m, metric) in metrics.iter().enumerate() {
            for (e, eval) in [Evaluation::Restricted, Evaluation::Full]
                .into_iter()
                .enumerate()
            {
                ns[m][e] = time_pairs(&tree, &measures, &pairs, metric, eval)?;
            }
        }
        let gram_pairs = pair_count(size.measures);
        let gram_seconds = if opts.gram {
            let start = Instant::now();
            let d = distance_matrix(&pool, &tree, &measures, &Metric::Tw, Evaluation::Restricted)?;
            black_box(d.to_kernel(1.0).context("gram")?);
            Some(start.elapsed().as_secs_f64())
        } else {
            None
        };
        rows.push(BenchRow {
            edges: size.edges,
            measures: size.measures,
            support: size.support,
            pairs_timed: pairs.len(),
            tw_restricted_ns: ns[0][0],
            tw_full_ns: ns[0][1],
            rt_box_restricted_ns: ns[1][0],
            rt_box_full_ns: ns[1][1],
            rt_ball_restricted_ns: ns[2][0],
            rt_ball_full_ns: ns[2][1],
            gram_pairs,
            gram_seconds,
            gram_pairs_per_second: gram_seconds.map(|s| gram_pairs as f64 / s.max(1e-12)),
        });
    }
    Ok(rows)
}

/// Tree-to-support size ratio above which restricted mode should win.
pub const RESTRICTED_ADVANTAGE: usize = 1_000;

/// Soft scaling checks; each returned line describes a deviation.
pub fn scaling_warnings(rows: &[BenchRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        if r.edges >= RESTRICTED_ADVANTAGE * r.support && r.tw_restricted_ns > r.tw_full_ns {
            out.push(format!(
                "|E|={}: restricted mode ({:.0} ns) slower than full mode ({:.0} ns)",
                r.edges, r.tw_restricted_ns, r.tw_full_ns
            ));
        }
    }
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.edges == 0 || b.edges <= a.edges {
            continue;
        }
        let expected = b.edges as f64 / a.edges as f64;
        let got = b.tw_full_ns / a.tw_full_ns.max(1e-9);
        if got > 1.5 * expected || got < expected / 1.5 {
            out.push(format!(
                "|E| {} → {}: full-mode time grew {got:.2}× (linear would be {expected:.2}×)",
                a.edges, b.edges
            ));
        }
    }
    out
}
