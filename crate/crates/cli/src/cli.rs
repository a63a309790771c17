//! Argument parsing and subcommand dispatch for the `twr` binary.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use twr_core::oracle::{adversary_search, AdversaryOptions, SearchMode};
use twr_core::robust::ball_exits_orthant;
use twr_core::sampling::{
    perturb_weights, sample_tree, NoiseSpec, DEFAULT_BRANCHING, DEFAULT_DEPTH,
};
use twr_core::{adversarial_weights, h_profile, Metric, UncertaintySpec};

use crate::bench::{run_bench, scaling_warnings, BenchOptions, BenchSize};
use crate::config::{
    BandwidthConfig, ExperimentConfig, MetricConfig, NoiseConfig, NoiseKind, OutputConfig, PValue,
    TreeSource, DEFAULT_LAMBDA_GRID,
};
use crate::error::{CliError, Context, Result};
use crate::formats::{
    parse_tree, read_measure, read_points, read_text, read_tree, tree_to_json, write_bytes,
    MatrixFormat,
};
use crate::parallel::Evaluation;
use crate::runner::{csv_bytes, run_distance_matrix, run_gram, run_noise_sweep, RunOptions};
use crate::verify::{run_verify, VerifyOptions};

#[derive(Debug, Parser)]
#[command(
    name = "twr",
    version,
    about = "Tree-Wasserstein and max-min robust tree OT distances"
)]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "TWR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for pairwise work (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a tree metric over a point cloud by farthest-point clustering.
    BuildTree(BuildTreeArgs),
    /// Add bounded random noise to the edge weights of a tree.
    Perturb(PerturbArgs),
    /// Pairwise distance matrix over a directory of measures.
    Dist(DistArgs),
    /// Kernel Gram matrices exp(−t·D).
    Gram(GramArgs),
    /// Worst-case edge weights for a pair of measures.
    Adversary(AdversaryArgs),
    /// Check the closed forms against brute-force oracles.
    Verify(VerifyArgs),
    /// Distance matrices and summary statistics over noise levels and radii.
    Sweep(SweepArgs),
    /// Time per-pair evaluation and Gram assembly.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    Tw,
    RtBox,
    RtBall,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Tree JSON file.
    #[arg(long, required_unless_present = "config")]
    pub tree: Option<PathBuf>,
    /// Directory of measure files, read in file-name order.
    #[arg(long, required_unless_present = "config")]
    pub measures: Option<PathBuf>,
    /// Rescale measures to unit mass and drop zero entries.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long, value_enum, default_value_t = MetricName::Tw)]
    pub metric: MetricName,
    /// rt-box: JSON `{"default": b, "beta": [[child, b], ...], "alpha": [...]}`.
    #[arg(long, conflicts_with = "beta_const")]
    pub beta_file: Option<PathBuf>,
    /// rt-box: the same upper limit β on every edge.
    #[arg(long)]
    pub beta_const: Option<f64>,
    /// rt-ball: exponent, a number ≥ 1 or `inf`.
    #[arg(long, default_value = "2")]
    pub p: PValue,
    /// rt-ball: radius.
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl MetricArgs {
    fn config(&self) -> Result<MetricConfig> {
        Ok(match self.metric {
            MetricName::Tw => MetricConfig::Tw,
            MetricName::RtBox => MetricConfig::RtBox {
                beta_file: self.beta_file.clone(),
                beta: self.beta_const,
            },
            MetricName::RtBall => MetricConfig::RtBall {
                p: self.p,
                lambda: self
                    .lambda
                    .ok_or_else(|| CliError::config("rt-ball needs --lambda"))?,
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct BuildTreeArgs {
    /// CSV point cloud, one point per row.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BRANCHING)]
    pub branching: usize,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
    /// Output tree JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `point,node` rows mapping each input point to its leaf.
    #[arg(long)]
    pub assignments: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// Largest change of any edge weight.
    #[arg(long)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = NoiseKind::UniformSigned)]
    pub noise_dist: NoiseKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Experiment config JSON; replaces the input, metric and output flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Output matrix file.
    #[arg(long, required_unless_present = "config")]
    pub out: Option<PathBuf>,
    /// Matrix format (default: from the extension of --out).
    #[arg(long, value_enum)]
    pub format: Option<MatrixFormat>,
    #[arg(long, value_enum, default_value_t = Evaluation::Restricted)]
    pub evaluation: Evaluation,
    /// Reuse outputs written under the same config fingerprint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct GramArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Output file for a single --t, otherwise an output directory.
    #[arg(long, required_unless_present = "config")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<MatrixFormat>,
    /// Explicit bandwidths.
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    /// Quantile levels in percent; each gives 1/t ∈ {q, 2q, 5q}.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 0..,
        default_missing_value = "10,20,30,40,50,60,70,80,90"
    )]
    pub quantile_grid: Option<Vec<f64>>,
    /// Take quantiles over this many randomly chosen distances.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Record the smallest eigenvalue of each Gram matrix in its sidecar.
    #[arg(long)]
    pub check_psd: bool,
    #[arg(long, value_enum, default_value_t = Evaluation::Restricted)]
    pub evaluation: Evaluation,
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct AdversaryArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// First measure file.
    #[arg(long)]
    pub mu: PathBuf,
    /// Second measure file.
    #[arg(long)]
    pub nu: PathBuf,
    #[arg(long)]
    pub normalize: bool,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Output tree JSON with the worst-case weights (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run the brute-force search with this many evaluations.
    #[arg(long)]
    pub search_budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Random instances per check.
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    /// Adversary search evaluations per instance.
    #[arg(long, default_value_t = 2_000)]
    pub budget: usize,
    /// JSON report path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    /// Noise levels Δ.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub deltas: Vec<f64>,
    /// Radii λ; a λ = 0 baseline is always added.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Ball exponent for the rt-ball matrices.
    #[arg(long, default_value = "2")]
    pub p: PValue,
    #[arg(long, value_enum, default_value_t = NoiseKind::UniformSigned)]
    pub noise_dist: NoiseKind,
    /// Output directory.
    #[arg(long, required_unless_present = "config")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Csv)]
    pub format: MatrixFormat,
    #[arg(long, value_enum, default_value_t = Evaluation::Restricted)]
    pub evaluation: Evaluation,
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sizes as edges:measures:support.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1000:50:10,10000:50:10,100000:50:10"
    )]
    pub sizes: Vec<BenchSize>,
    /// Pairs timed per metric and mode.
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    /// Draw supports from the first N nodes only.
    #[arg(long)]
    pub support_prefix: Option<usize>,
    /// Skip the Gram assembly timing.
    #[arg(long)]
    pub no_gram: bool,
    /// CSV report path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn from_flags(
    input: &InputArgs,
    metric: MetricConfig,
    out: &Option<PathBuf>,
    format: Option<MatrixFormat>,
    evaluation: Evaluation,
) -> ExperimentConfig {
    let path = out.clone().expect("required by clap");
    ExperimentConfig {
        tree: TreeSource::File {
            path: input.tree.clone().expect("required by clap"),
        },
        measures: input.measures.clone().expect("required by clap"),
        normalize: input.normalize,
        metric,
        evaluation,
        noise: NoiseConfig::default(),
        lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        sweep_p: None,
        bandwidth: BandwidthConfig::default(),
        output: OutputConfig {
            format: format.unwrap_or_else(|| MatrixFormat::from_path(&path)),
            path,
        },
    }
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_bytes(path, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(CliError::io(std::path::Path::new("<stdout>"))),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let opts = |resume: bool, check_psd: bool| RunOptions {
        threads: cli.threads,
        resume,
        check_psd,
    };
    match cli.command {
        Command::BuildTree(a) => {
            let cloud = read_points(&a.points)?;
            let sampled =
                sample_tree(&cloud, a.branching, a.depth, cli.seed).context(a.points.display())?;
            write_bytes(&a.out, tree_to_json(&sampled.tree).as_bytes())?;
            if let Some(path) = &a.assignments {
                let mut s = String::from("point,node\n");
                for (i, v) in sampled.point_node.iter().enumerate() {
                    s.push_str(&format!("{i},{v}\n"));
                }
                write_bytes(path, s.as_bytes())?;
            }
            eprintln!(
                "wrote {} ({} nodes, {} points)",
                a.out.display(),
                sampled.tree.node_count(),
                cloud.len()
            );
        }
        Command::Perturb(a) => {
            let text = read_text(&a.tree)?;
            let tree = parse_tree(&text, &a.tree)?;
            let spec = NoiseSpec {
                delta: a.delta,
                seed: cli.seed,
                distribution: a.noise_dist.into(),
            };
            let noisy = perturb_weights(&tree, &spec).context("perturb")?;
            if a.delta == 0.0 {
                write_bytes(&a.out, text.as_bytes())?;
            } else {
                write_bytes(&a.out, tree_to_json(&noisy).as_bytes())?;
            }
        }
        Command::Dist(a) => {
            let cfg = match &a.config {
                Some(path) => ExperimentConfig::load(path)?,
                None => from_flags(&a.input, a.metric.config()?, &a.out, a.format, a.evaluation),
            };
            let w = run_distance_matrix(&cfg, &opts(a.resume, false))?;
            eprintln!(
                "{} {} ({}×{}, {} pairs, {:.3}s)",
                if w.resumed { "kept" } else { "wrote" },
                w.path.display(),
                w.sidecar.size,
                w.sidecar.size,
                w.sidecar.pair_count,
                w.sidecar.wall_time_seconds
            );
        }
        Command::Gram(a) => {
            let cfg = match &a.config {
                Some(path) => ExperimentConfig::load(path)?,
                None => {
                    let mut cfg =
                        from_flags(&a.input, a.metric.config()?, &a.out, a.format, a.evaluation);
                    if a.format.is_none() && !(a.t.len() == 1 && a.quantile_grid.is_none()) {
                        cfg.output.format = MatrixFormat::Csv;
                    }
                    cfg.bandwidth = BandwidthConfig {
                        t: a.t.clone(),
                        quantiles: a.quantile_grid.clone().unwrap_or_default(),
                        subsample: a.subsample,
                    };
                    cfg
                }
            };
            for w in run_gram(&cfg, &opts(a.resume, a.check_psd), cli.seed)? {
                eprintln!(
                    "wrote {} (t={})",
                    w.path.display(),
                    w.sidecar.bandwidth.unwrap_or(f64::NAN)
                );
            }
        }
        Command::Adversary(a) => adversary(&a, cli.seed)?,
        Command::Verify(a) => {
            let report = run_verify(&VerifyOptions {
                seed: cli.seed,
                instances: a.instances,
                budget: a.budget,
            })?;
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            emit(&a.out, json.as_bytes())?;
            if !report.passed {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
        Command::Sweep(a) => {
            let cfg = match &a.config {
                Some(path) => ExperimentConfig::load(path)?,
                None => {
                    let mut cfg = from_flags(
                        &a.input,
                        MetricConfig::Tw,
                        &a.out_dir,
                        Some(a.format),
                        a.evaluation,
                    );
                    cfg.noise = NoiseConfig {
                        deltas: a.deltas.clone(),
                        seed: cli.seed,
                        distribution: a.noise_dist,
                    };
                    if let Some(l) = &a.lambdas {
                        cfg.lambda_grid = l.clone();
                    }
                    cfg.sweep_p = Some(a.p);
                    cfg
                }
            };
            let report = run_noise_sweep(&cfg, &opts(a.resume, false))?;
            eprintln!(
                "wrote {} rows to {} and {} matrices",
                report.rows.len(),
                report.summary.display(),
                report.matrices.len()
            );
        }
        Command::Bench(a) => {
            let rows = run_bench(
                &a.sizes,
                &BenchOptions {
                    seed: cli.seed,
                    pairs: a.pairs,
                    support_prefix: a.support_prefix,
                    threads: cli.threads,
                    gram: !a.no_gram,
                },
            )?;
            for w in scaling_warnings(&rows) {
                eprintln!("warning: {w}");
            }
            emit(&a.out, &csv_bytes(&rows)?)?;
        }
    }
    Ok(())
}

fn adversary(a: &AdversaryArgs, seed: u64) -> Result<()> {
    let tree = read_tree(&a.tree)?;
    let mu = read_measure(&a.mu, a.normalize)?;
    let nu = read_measure(&a.nu, a.normalize)?;
    let metric = a.metric.config()?.build(&tree)?;
    let (spec, w_hat) = match &metric {
        Metric::Tw => {
            return Err(CliError::config(
                "adversary needs --metric rt-box or rt-ball",
            ))
        }
        Metric::RtBox { beta } => {
            let w = tree.weights();
            let w_hat = w
                .iter()
                .zip(beta.iter())
                .map(|(w, b)| w + b)
                .collect::<Vec<_>>();
            h_profile(&tree, &mu, &nu).context("measures")?;
            let spec = UncertaintySpec::Box {
                alpha: None,
                beta: beta.clone(),
            };
            (spec, w_hat.into())
        }
        Metric::RtBall { p, lambda } => {
            if ball_exits_orthant(&tree, *lambda) {
                eprintln!(
                    "warning: the ball of radius {lambda} leaves the nonnegative orthant; \
                     the maximizer is still nonnegative"
                );
            }
            let w_hat = adversarial_weights(&tree, &mu, &nu, *p, *lambda).context("maximizer")?;
            (
                UncertaintySpec::Ball {
                    p: *p,
                    lambda: *lambda,
                },
                w_hat,
            )
        }
    };
    let value = metric.distance(&tree, &mu, &nu).context("measures")?;
    eprintln!("robust value {value}");
    if let Some(budget) = a.search_budget {
        let found = adversary_search(
            &tree,
            &mu,
            &nu,
            &spec,
            &AdversaryOptions {
                budget,
                mode: SearchMode::Random,
                seed,
                verify_inner: false,
            },
        )
        .context("adversary search")?;
        eprintln!(
            "search value {} after {} evaluations",
            found.value, found.evaluations
        );
    }
    let perturbed = tree.with_weights(&w_hat).context("worst-case weights")?;
    emit(&a.out, tree_to_json(&perturbed).as_bytes())
}
