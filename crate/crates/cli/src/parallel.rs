//! Pairwise distance matrices on a worker pool.

use clap::ValueEnum;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use twr_core::{MatrixKind, Measure, Metric, SymmetricMatrix, Tree};

use crate::error::{CliError, Context, Result};

/// How each pairwise distance is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluation {
    /// Only the edges on root paths of the two supports.
    #[default]
    Restricted,
    /// Every edge of the tree.
    Full,
    /// Restricted, with compensated summation.
    Compensated,
}

impl Evaluation {
    pub fn distance(
        self,
        metric: &Metric,
        tree: &Tree,
        mu: &Measure,
        nu: &Measure,
    ) -> twr_core::Result<f64> {
        match self {
            Evaluation::Restricted => metric.distance(tree, mu, nu),
            Evaluation::Full => metric.distance_full(tree, mu, nu),
            Evaluation::Compensated => metric.distance_compensated(tree, mu, nu),
        }
    }
}

/// A pool with `threads` workers, or one per core when `None`.
pub fn pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(CliError::config)
}

/// All pairwise distances. Rows of the upper triangle are computed in
/// parallel; every cell is evaluated independently, so the result does not
/// depend on the number of workers.
pub fn distance_matrix(
    pool: &ThreadPool,
    tree: &Tree,
    measures: &[Measure],
    metric: &Metric,
    evaluation: Evaluation,
) -> Result<SymmetricMatrix> {
    metric.validate(tree).context("metric")?;
    for (i, m) in measures.iter().enumerate() {
        m.check_tree(tree).context(format!("measure {i}"))?;
    }
    let n = measures.len();
    let rows: Vec<Vec<f64>> = pool
        .install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i + 1..n)
                        .map(|j| evaluation.distance(metric, tree, &measures[i], &measures[j]))
                        .collect::<twr_core::Result<Vec<f64>>>()
                })
                .collect::<twr_core::Result<Vec<_>>>()
        })
        .context("distance matrix")?;
    let mut d = SymmetricMatrix::from_upper(n, MatrixKind::Distance, |i, j| Ok(rows[i][j - i - 1]))
        .context("distance matrix")?;
    d.provenance = metric.to_string();
    Ok(d)
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}
