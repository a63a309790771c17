//! Experiment runners: distance matrices, Gram matrices and noise sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use twr_core::kernel::{quantile_bandwidths, quantile_bandwidths_subsampled, MAX_EIGEN_SIZE};
use twr_core::sampling::{perturb_weights, NoiseSpec};
use twr_core::{
    h_profile, EdgeVector, Exponent, KernelConfig, MatrixKind, Measure, Metric, SymmetricMatrix,
    Tree,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Context, Result};
use crate::formats::{
    kind_name, read_matrix, read_sidecar, write_bytes, write_matrix, write_sidecar, MatrixFormat,
    Sidecar,
};
use crate::parallel::{distance_matrix, pair_count, pool};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    /// Reuse matrices whose sidecar carries the same fingerprint; abort when
    /// a sidecar with a different fingerprint is found.
    pub resume: bool,
    /// Record the smallest eigenvalue of kernel matrices in their sidecars.
    pub check_psd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub path: PathBuf,
    pub sidecar: Sidecar,
    pub resumed: bool,
}

/// `Some(sidecar)` when `path` can be reused under `fingerprint`.
fn resumable(path: &Path, fingerprint: &str, resume: bool) -> Result<Option<Sidecar>> {
    if !resume {
        return Ok(None);
    }
    match read_sidecar(path)? {
        Some(s) if s.fingerprint != fingerprint => Err(CliError::config(format!(
            "{}: fingerprint {} does not match the current config {}",
            path.display(),
            s.fingerprint,
            fingerprint
        ))),
        Some(s) if path.exists() => Ok(Some(s)),
        _ => Ok(None),
    }
}

struct Emit<'a> {
    fingerprint: &'a str,
    format: MatrixFormat,
    opts: RunOptions,
}

impl Emit<'_> {
    fn write(
        &self,
        path: &Path,
        m: &SymmetricMatrix,
        seconds: f64,
        bandwidth: Option<f64>,
    ) -> Result<Written> {
        let min_eigenvalue = if self.opts.check_psd
            && m.kind() == MatrixKind::Kernel
            && m.size() <= MAX_EIGEN_SIZE
        {
            m.min_eigenvalue()
        } else {
            None
        };
        let sidecar = Sidecar {
            fingerprint: self.fingerprint.to_string(),
            matrix: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            kind: kind_name(m.kind()).to_string(),
            format: self.format,
            size: m.size(),
            pair_count: pair_count(m.size()),
            metric: m.provenance.clone(),
            wall_time_seconds: seconds,
            bandwidth,
            min_eigenvalue,
        };
        write_matrix(path, m, self.format)?;
        write_sidecar(path, &sidecar)?;
        Ok(Written {
            path: path.to_path_buf(),
            sidecar,
            resumed: false,
        })
    }

    /// Reuse `path` when resuming, otherwise compute and write it.
    fn matrix(
        &self,
        path: &Path,
        kind: MatrixKind,
        compute: impl FnOnce() -> Result<SymmetricMatrix>,
    ) -> Result<(SymmetricMatrix, Written)> {
        if let Some(sidecar) = resumable(path, self.fingerprint, self.opts.resume)? {
            let mut m = read_matrix(path, kind)?;
            m.provenance = sidecar.metric.clone();
            let written = Written {
                path: path.to_path_buf(),
                sidecar,
                resumed: true,
            };
            return Ok((m, written));
        }
        let start = Instant::now();
        let m = compute()?;
        let seconds = start.elapsed().as_secs_f64();
        let written = self.write(path, &m, seconds, None)?;
        Ok((m, written))
    }
}

struct Loaded {
    tree: Tree,
    measures: Vec<Measure>,
    pool: ThreadPool,
}

fn load(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Loaded> {
    cfg.validate()?;
    let tree = cfg.load_tree()?;
    let measures = cfg.load_measures(&tree)?;
    Ok(Loaded {
        tree,
        measures,
        pool: pool(opts.threads)?,
    })
}

/// Pairwise distances for the configured metric, written to `output.path`
/// with a JSON sidecar.
pub fn run_distance_matrix(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Written> {
    let l = load(cfg, opts)?;
    let metric = cfg.metric.build(&l.tree)?;
    let emit = Emit {
        fingerprint: &cfg.fingerprint(),
        format: cfg.output.format,
        opts: *opts,
    };
    let (_, written) = emit.matrix(&cfg.output.path, MatrixKind::Distance, || {
        distance_matrix(&l.pool, &l.tree, &l.measures, &metric, cfg.evaluation)
    })?;
    Ok(written)
}

/// One row of the bandwidth index written next to a Gram grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub file: String,
    pub percent: Option<f64>,
    pub multiplier: Option<f64>,
    pub t: f64,
    pub min_eigenvalue: Option<f64>,
}

/// Kernel Gram matrices `exp(−t·D)`. A single explicit `t` writes one file
/// at `output.path`; otherwise `output.path` is a directory holding one
/// matrix per bandwidth and a `bandwidths.csv` index.
pub fn run_gram(cfg: &ExperimentConfig, opts: &RunOptions, seed: u64) -> Result<Vec<Written>> {
    let l = load(cfg, opts)?;
    let metric = cfg.metric.build(&l.tree)?;
    let fingerprint = cfg.fingerprint();
    KernelConfig {
        metric: metric.clone(),
        t: cfg.bandwidth.t.first().copied().unwrap_or(1.0),
    }
    .validate(&l.tree)
    .context("kernel")?;
    let start = Instant::now();
    let d = distance_matrix(&l.pool, &l.tree, &l.measures, &metric, cfg.evaluation)?;
    let distance_seconds = start.elapsed().as_secs_f64();

    let mut plan: Vec<(Option<f64>, Option<f64>, f64)> =
        cfg.bandwidth.t.iter().map(|&t| (None, None, t)).collect();
    if !cfg.bandwidth.quantiles.is_empty() {
        let grid = match cfg.bandwidth.subsample {
            Some(count) => {
                quantile_bandwidths_subsampled(&d, &cfg.bandwidth.quantiles, count, seed)
            }
            None => quantile_bandwidths(&d, &cfg.bandwidth.quantiles),
        }
        .context("bandwidth grid")?;
        plan.extend(
            grid.iter()
                .map(|b| (Some(b.percent), Some(b.multiplier), b.t())),
        );
    }
    if plan.is_empty() {
        return Err(CliError::config("give --t or --quantile-grid"));
    }
    let emit = Emit {
        fingerprint: &fingerprint,
        format: cfg.output.format,
        opts: *opts,
    };
    let single = plan.len() == 1 && cfg.bandwidth.quantiles.is_empty();
    let mut out = Vec::with_capacity(plan.len());
    let mut index = Vec::with_capacity(plan.len());
    for (i, &(percent, multiplier, t)) in plan.iter().enumerate() {
        let path = if single {
            cfg.output.path.clone()
        } else {
            cfg.output
                .path
                .join(format!("gram_{i:03}.{}", cfg.output.format.extension()))
        };
        let start = Instant::now();
        let k = d.to_kernel(t).context("kernel")?;
        let seconds = distance_seconds + start.elapsed().as_secs_f64();
        let written = emit.write(&path, &k, seconds, Some(t))?;
        index.push(BandwidthRow {
            file: written.sidecar.matrix.clone(),
            percent,
            multiplier,
            t,
            min_eigenvalue: written.sidecar.min_eigenvalue,
        });
        out.push(written);
    }
    if !single {
        write_csv(&cfg.output.path.join("bandwidths.csv"), &index)?;
    }
    Ok(out)
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_bytes(path, &csv_bytes(rows)?)
}

pub(crate) fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(CliError::config)?;
    }
    w.into_inner().map_err(|e| CliError::config(e.error()))
}

/// Summary statistics for one `(Δ, λ)` point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub lambda: f64,
    pub p: String,
    pub pairs: usize,
    pub tw_mean: f64,
    pub rt_box_mean: f64,
    pub rt_ball_mean: f64,
    /// Mean of `|TW_noisy − TW_clean| / TW_clean` over pairs with `TW_clean > 0`.
    pub tw_relative_deviation: f64,
    /// Mean, standard deviation and maximum of `rt_ball − tw` over pairs.
    pub gap_mean: f64,
    pub gap_std: f64,
    pub gap_max: f64,
    /// Mean of `λ‖h‖_{p′}` over pairs.
    pub dual_norm_term_mean: f64,
    /// `max |rt_box(β = λ·1) − rt_ball(p = ∞, λ)|` over pairs.
    pub box_ball_max_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub matrices: Vec<Written>,
    pub summary: PathBuf,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// For each noise level `Δ` and each radius in `{0} ∪ λ grid`: perturb the
/// clean tree, write tw / rt-box / rt-ball matrices, and collect summary
/// statistics into `summary.csv` under `output.path`.
pub fn run_noise_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepReport> {
    let l = load(cfg, opts)?;
    let fingerprint = cfg.fingerprint();
    let emit = Emit {
        fingerprint: &fingerprint,
        format: cfg.output.format,
        opts: *opts,
    };
    let p = cfg.sweep_exponent();
    let ext = cfg.output.format.extension();
    let dir = &cfg.output.path;
    let n = l.measures.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let compute = |tree: &Tree, metric: &Metric| {
        distance_matrix(&l.pool, tree, &l.measures, metric, cfg.evaluation)
    };
    let clean = compute(&l.tree, &Metric::Tw)?;

    let mut lambdas = vec![0.0];
    lambdas.extend(cfg.lambda_grid.iter().copied());
    let deltas = if cfg.noise.deltas.is_empty() {
        vec![0.0]
    } else {
        cfg.noise.deltas.clone()
    };

    let mut rows = Vec::new();
    let mut matrices = Vec::new();
    for &delta in &deltas {
        let noisy = perturb_weights(
            &l.tree,
            &NoiseSpec {
                delta,
                seed: cfg.noise.seed,
                distribution: cfg.noise.distribution.into(),
            },
        )
        .context(format!("noise delta {delta}"))?;
        let profiles = pairs
            .iter()
            .map(|&(i, j)| h_profile(&noisy, &l.measures[i], &l.measures[j]))
            .collect::<twr_core::Result<Vec<_>>>()
            .context("h profiles")?;
        for &lambda in &lambdas {
            let stem = format!("delta{delta}_lambda{lambda}");
            let (tw, w) = emit.matrix(
                &dir.join(format!("{stem}_tw.{ext}")),
                MatrixKind::Distance,
                || compute(&noisy, &Metric::Tw),
            )?;
            matrices.push(w);
            let box_metric = Metric::RtBox {
                beta: EdgeVector::constant(noisy.edge_count(), lambda),
            };
            let (rt_box, w) = emit.matrix(
                &dir.join(format!("{stem}_rt-box.{ext}")),
                MatrixKind::Distance,
                || compute(&noisy, &box_metric),
            )?;
            matrices.push(w);
            let (rt_ball, w) = emit.matrix(
                &dir.join(format!("{stem}_rt-ball.{ext}")),
                MatrixKind::Distance,
                || compute(&noisy, &Metric::RtBall { p, lambda }),
            )?;
            matrices.push(w);
            let ball_inf = compute(
                &noisy,
                &Metric::RtBall {
                    p: Exponent::INFINITY,
                    lambda,
                },
            )?;

            let gaps: Vec<f64> = pairs
                .iter()
                .map(|&(i, j)| rt_ball.get(i, j) - tw.get(i, j))
                .collect();
            let gap_mean = mean(gaps.iter().copied());
            let gap_std = mean(gaps.iter().map(|g| (g - gap_mean) * (g - gap_mean))).sqrt();
            rows.push(SweepRow {
                delta,
                lambda,
                p: p.to_string(),
                pairs: pairs.len(),
                tw_mean: mean(tw.upper_triangle()),
                rt_box_mean: mean(rt_box.upper_triangle()),
                rt_ball_mean: mean(rt_ball.upper_triangle()),
                tw_relative_deviation: mean(
                    pairs
                        .iter()
                        .filter(|&&(i, j)| clean.get(i, j) > 0.0)
                        .map(|&(i, j)| (tw.get(i, j) - clean.get(i, j)).abs() / clean.get(i, j)),
                ),
                gap_mean,
                gap_std,
                gap_max: gaps.iter().copied().fold(0.0, f64::max),
                dual_norm_term_mean: mean(
                    profiles
                        .iter()
                        .map(|h| lambda * twr_core::dual_norm(&h.h, p)),
                ),
                box_ball_max_diff: rt_box
                    .upper_triangle()
                    .zip(ball_inf.upper_triangle())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            });
        }
    }
    let summary = dir.join("summary.csv");
    write_csv(&summary, &rows)?;
    Ok(SweepReport {
        rows,
        matrices,
        summary,
    })
}
