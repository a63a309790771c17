//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twr::bench::time_pairs;
use twr::formats::{measure_to_json, read_matrix, tree_to_json, write_tree};
use twr::parallel::{distance_matrix as parallel_matrix, pool, Evaluation};
use twr_core::kernel::{
    check_negative_definite, divisibility_root, quantile_bandwidths, DEFAULT_QUANTILES,
};
use twr_core::oracle::{adversary_search, ot_lp, AdversaryOptions, SearchMode};
use twr_core::robust::lp_norm;
use twr_core::sampling::{perturb_weights, NoiseDistribution, NoiseSpec};
use twr_core::synth::{random_measure, random_tree, zero_random_edges};
use twr_core::{
    adversarial_weights, contract_zero_edges, distance_matrix, gram_matrix, h_profile, rt_ball,
    rt_box, tw_distance, EdgeVector, Exponent, KernelConfig, MatrixKind, Measure, Metric,
    SymmetricMatrix, Tree, UncertaintySpec,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Outcome { passed, detail }
    }
}

/// Running maximum that turns NaN into +∞.
#[derive(Default, Clone, Copy)]
struct Worst(f64);

impl Worst {
    fn add(&mut self, err: f64) {
        if !(err <= self.0) {
            self.0 = if err.is_nan() { f64::INFINITY } else { err };
        }
    }

    fn within(self, tol: f64) -> bool {
        self.0 <= tol
    }
}

fn rng(criterion: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + criterion)
}

fn measure(rng: &mut ChaCha8Rng, nodes: usize, max_support: usize) -> Measure {
    let k = rng.gen_range(1..=max_support);
    random_measure(rng, nodes, k)
}

/// Tree with 2..=`max_nodes` nodes, weights U[0,5], and `count` measures.
fn instance(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    max_support: usize,
    count: usize,
) -> (Tree, Vec<Measure>) {
    let n = rng.gen_range(2..=max_nodes);
    let t = random_tree(rng, n, 0.0, 5.0);
    let ms = (0..count).map(|_| measure(rng, n, max_support)).collect();
    (t, ms)
}

fn exponent(p: f64) -> Exponent {
    Exponent::new(p).expect("valid exponent")
}

const EXPONENTS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];
const RADII: [f64; 3] = [0.01, 0.5, 5.0];
const LAMBDA_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0];

fn tw_vs_lp() -> Outcome {
    let mut rng = rng(1);
    let start = Instant::now();
    let mut worst = Worst::default();
    for _ in 0..1_000 {
        let (t, ms) = instance(&mut rng, 12, 4, 2);
        let (lp, _) = ot_lp(&t, &ms[0], &ms[1]).expect("lp");
        worst.add((tw_distance(&t, &ms[0], &ms[1]).expect("tw") - lp).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst.within(1e-9) && secs < 30.0,
        format!(
            "1000 instances, max |tw - lp| = {:.2e}, {secs:.2}s",
            worst.0
        ),
    )
}

fn ball_value_and_maximizer() -> Outcome {
    let mut rng = rng(2);
    let start = Instant::now();
    let (mut above, mut attained, mut feasible) =
        (Worst::default(), Worst::default(), Worst::default());
    for &p in &EXPONENTS {
        let p = exponent(p);
        for &lambda in &RADII {
            for _ in 0..500 {
                let (t, ms) = instance(&mut rng, 12, 4, 2);
                let closed = rt_ball(&t, &ms[0], &ms[1], p, lambda).expect("rt_ball");
                let opts = AdversaryOptions {
                    budget: 1_000,
                    mode: SearchMode::Random,
                    seed: rng.gen(),
                    verify_inner: false,
                };
                let found = adversary_search(
                    &t,
                    &ms[0],
                    &ms[1],
                    &UncertaintySpec::Ball { p, lambda },
                    &opts,
                )
                .expect("search");
                above.add((found.value - closed).max(0.0));

                let w_star = adversarial_weights(&t, &ms[0], &ms[1], p, lambda).expect("maximizer");
                let h = h_profile(&t, &ms[0], &ms[1]).expect("h");
                attained.add((h.dot(&w_star) - closed).abs());

                let w = t.weights();
                let diff: Vec<f64> = w_star.iter().zip(w.iter()).map(|(a, b)| a - b).collect();
                let excess = (lp_norm(&diff, p) - lambda * (1.0 + 1e-12)).max(0.0);
                let negative = w_star.iter().fold(0.0f64, |m, &x| m.max(-x));
                feasible.add(excess.max(negative));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        above.within(1e-9) && attained.within(1e-12) && feasible.within(0.0) && secs < 120.0,
        format!(
            "7500 instances, search excess {:.2e}, maximizer gap {:.2e}, infeasibility {:.2e}, {secs:.2}s",
            above.0, attained.0, feasible.0
        ),
    )
}

fn box_equals_ball_at_infinity() -> Outcome {
    let mut rng = rng(3);
    let mut worst = Worst::default();
    for _ in 0..10_000 {
        let (t, ms) = instance(&mut rng, 60, 8, 2);
        let lambda = rng.gen_range(0.0..5.0);
        let b = rt_box(
            &t,
            &ms[0],
            &ms[1],
            &EdgeVector::constant(t.edge_count(), lambda),
        )
        .expect("box");
        let s = rt_ball(&t, &ms[0], &ms[1], Exponent::INFINITY, lambda).expect("ball");
        worst.add((b - s).abs());
    }
    Outcome::new(
        worst.within(1e-12),
        format!("10000 instances, max |box - ball| = {:.2e}", worst.0),
    )
}

fn zero_edge_contraction() -> Outcome {
    let mut rng = rng(4);
    let (mut tw, mut boxed, mut ball) = (Worst::default(), Worst::default(), Worst::default());
    let mut contracted = 0;
    for _ in 0..2_000 {
        let (t, ms) = instance(&mut rng, 40, 6, 2);
        let z = zero_random_edges(&mut rng, &t, 0.3).expect("zeroing");
        let c = contract_zero_edges(&z, &ms).expect("contraction");
        if c.tree.edge_count() < z.edge_count() {
            contracted += 1;
        }
        let (a, b) = (&c.measures[0], &c.measures[1]);
        tw.add(
            (tw_distance(&z, &ms[0], &ms[1]).unwrap() - tw_distance(&c.tree, a, b).unwrap()).abs(),
        );

        let lambda = rng.gen_range(0.01..5.0);
        let before = rt_box(
            &z,
            &ms[0],
            &ms[1],
            &EdgeVector::constant(z.edge_count(), lambda),
        )
        .unwrap();
        let after = rt_box(
            &c.tree,
            a,
            b,
            &EdgeVector::constant(c.tree.edge_count(), lambda),
        )
        .unwrap();
        boxed.add((before - after).abs());
        for p in [Exponent::ONE, Exponent::TWO, Exponent::INFINITY] {
            let before = rt_ball(&z, &ms[0], &ms[1], p, lambda).unwrap();
            let after = rt_ball(&c.tree, a, b, p, lambda).unwrap();
            ball.add((before - after).abs());
        }
    }
    Outcome::new(
        tw.within(1e-12) && boxed.within(1e-12) && ball.within(1e-12),
        format!(
            "2000 instances ({contracted} with contracted edges), max deviation tw {:.2e}, rt_box {:.2e}, rt_ball {:.2e}",
            tw.0, boxed.0, ball.0
        ),
    )
}

fn metric_axioms() -> Outcome {
    let mut rng = rng(5);
    let mut asymmetric = 0usize;
    let mut triangle = Worst::default();
    let mut identity = Worst::default();
    for _ in 0..10_000 {
        let (t, ms) = instance(&mut rng, 60, 6, 3);
        let lambda = rng.gen_range(0.01..5.0);
        let beta = EdgeVector::new(
            (0..t.edge_count())
                .map(|_| rng.gen_range(0.0..2.0))
                .collect(),
        );
        let metrics = [
            Metric::Tw,
            Metric::RtBox { beta },
            Metric::RtBall {
                p: Exponent::ONE,
                lambda,
            },
            Metric::RtBall {
                p: Exponent::TWO,
                lambda,
            },
            Metric::RtBall {
                p: Exponent::INFINITY,
                lambda,
            },
        ];
        for m in &metrics {
            let d = |i: usize, j: usize| m.distance(&t, &ms[i], &ms[j]).expect("distance");
            let (ab, bc, ac) = (d(0, 1), d(1, 2), d(0, 2));
            if ab != d(1, 0) || bc != d(2, 1) || ac != d(2, 0) {
                asymmetric += 1;
            }
            triangle.add((ac - ab - bc).max(ab - ac - bc).max(bc - ab - ac).max(0.0));
            identity.add(d(0, 0).abs());
        }
    }
    Outcome::new(
        asymmetric == 0 && triangle.within(1e-12) && identity.within(0.0),
        format!(
            "10000 triples x 5 metrics, asymmetric pairs {asymmetric}, max triangle excess {:.2e}, max d(x,x) {:.2e}",
            triangle.0, identity.0
        ),
    )
}

/// rt_box and rt_ball with p ∈ {2, 3, ∞}, with random radii.
fn kernel_metrics(rng: &mut ChaCha8Rng, tree: &Tree) -> Vec<Metric> {
    let beta = EdgeVector::new(
        (0..tree.edge_count())
            .map(|_| rng.gen_range(0.0..2.0))
            .collect(),
    );
    let mut out = vec![Metric::RtBox { beta }];
    for p in [2.0, 3.0, f64::INFINITY] {
        out.push(Metric::RtBall {
            p: exponent(p),
            lambda: rng.gen_range(0.01..5.0),
        });
    }
    out
}

fn batch(rng: &mut ChaCha8Rng) -> (Tree, Vec<Measure>) {
    let n = rng.gen_range(50..=300);
    let t = random_tree(rng, n, 0.0, 5.0);
    let ms = (0..50).map(|_| measure(rng, n, 10)).collect();
    (t, ms)
}

fn min_eigenvalue(k: &SymmetricMatrix) -> f64 {
    k.min_eigenvalue()
        .expect("small enough for the eigen solver")
}

fn negative_definite_and_psd() -> Outcome {
    let mut rng = rng(6);
    let floor = -1e-8 * 50.0;
    let mut form = f64::NEG_INFINITY;
    let mut form_failures = 0;
    let mut eig = f64::INFINITY;
    let mut grams = 0;
    for _ in 0..20 {
        let (t, ms) = batch(&mut rng);
        for metric in kernel_metrics(&mut rng, &t) {
            let d = distance_matrix(&t, &ms, &metric).expect("distances");
            let report = check_negative_definite(&d, 10_000, 1e-8, rng.gen());
            form = form.max(report.max_quadratic_form);
            form_failures += report.failures.len();
            for bw in quantile_bandwidths(&d, &DEFAULT_QUANTILES).expect("bandwidths") {
                let k = d.to_kernel(bw.t()).expect("kernel");
                eig = eig.min(min_eigenvalue(&k));
                grams += 1;
            }
        }
    }
    Outcome::new(
        form_failures == 0 && form <= 1e-8 && eig >= floor,
        format!("20 batches x 4 metrics, max c'Dc {form:.2e}, min eigenvalue {eig:.2e} over {grams} Gram matrices"),
    )
}

fn infinite_divisibility() -> Outcome {
    let mut rng = rng(7);
    let floor = -1e-8 * 50.0;
    let mut eig = f64::INFINITY;
    let mut power = Worst::default();
    for _ in 0..20 {
        let (t, ms) = batch(&mut rng);
        for metric in kernel_metrics(&mut rng, &t) {
            let d = distance_matrix(&t, &ms, &metric).expect("distances");
            let unit = gram_matrix(
                &t,
                &ms,
                &KernelConfig {
                    metric: metric.clone(),
                    t: 1.0,
                },
            )
            .expect("gram");
            for bw in quantile_bandwidths(&d, &DEFAULT_QUANTILES).expect("bandwidths") {
                let k = gram_matrix(
                    &t,
                    &ms,
                    &KernelConfig {
                        metric: metric.clone(),
                        t: bw.t(),
                    },
                )
                .expect("gram");
                for (a, b) in k.as_slice().iter().zip(unit.as_slice()) {
                    power.add((a - b.powf(bw.t())).abs());
                }
                for n in [2, 4, 8] {
                    eig = eig.min(min_eigenvalue(&divisibility_root(&k, n).expect("root")));
                }
            }
        }
    }
    Outcome::new(
        eig >= floor && power.within(1e-12),
        format!(
            "min eigenvalue of roots {eig:.2e}, max |gram(t) - gram(1)^t| {:.2e}",
            power.0
        ),
    )
}

fn complexity() -> Outcome {
    let mut rng = rng(8);
    // The first 10^4 + 1 nodes of the large tree form the small one.
    let seed: u64 = rng.gen();
    let small = random_tree(&mut ChaCha8Rng::seed_from_u64(seed), 10_001, 0.0, 1.0);
    let large = random_tree(&mut ChaCha8Rng::seed_from_u64(seed), 100_001, 0.0, 1.0);
    let measures: Vec<Measure> = (0..100)
        .map(|_| random_measure(&mut rng, 1_000, 20))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..2_000)
        .map(|_| {
            let i = rng.gen_range(0..100);
            (i, (i + rng.gen_range(1..100)) % 100)
        })
        .collect();
    let mut ratios = Vec::new();
    for (name, metric_for) in [
        ("tw", (|_: &Tree| Metric::Tw) as fn(&Tree) -> Metric),
        ("rt_box", |t: &Tree| Metric::RtBox {
            beta: EdgeVector::constant(t.edge_count(), 0.5),
        }),
        ("rt_ball", |_: &Tree| Metric::RtBall {
            p: Exponent::TWO,
            lambda: 0.5,
        }),
    ] {
        let (ms, ml) = (metric_for(&small), metric_for(&large));
        let (mut ts, mut tl) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..7 {
            ts = ts.min(
                time_pairs(&small, &measures, &pairs, &ms, Evaluation::Restricted).expect("timing"),
            );
            tl = tl.min(
                time_pairs(&large, &measures, &pairs, &ml, Evaluation::Restricted).expect("timing"),
            );
        }
        ratios.push((name, tl / ts));
    }
    let worst_ratio = ratios.iter().map(|r| r.1).fold(0.0, f64::max);

    let gram_measures: Vec<Measure> = (0..500)
        .map(|_| random_measure(&mut rng, 100_001, 50))
        .collect();
    let start = Instant::now();
    let metric = Metric::RtBall {
        p: Exponent::TWO,
        lambda: 0.5,
    };
    let d = parallel_matrix(
        &pool(None).expect("pool"),
        &large,
        &gram_measures,
        &metric,
        Evaluation::Restricted,
    )
    .expect("distances");
    let bw = quantile_bandwidths(&d, &[50.0]).expect("bandwidth")[0];
    let k = d.to_kernel(bw.t()).expect("kernel");
    let secs = start.elapsed().as_secs_f64();
    let ratio_text: Vec<String> = ratios.iter().map(|(n, r)| format!("{n} {r:.2}")).collect();
    Outcome::new(
        worst_ratio <= 1.5 && secs < 60.0 && k.size() == 500,
        format!(
            "restricted cost ratio |E| 1e4 -> 1e5: {}; 500-measure Gram on 1e5 edges in {secs:.2}s",
            ratio_text.join(", ")
        ),
    )
}

fn noise_model(dir: &Path) -> Outcome {
    let mut rng = rng(9);
    let tree = random_tree(&mut rng, 200, 0.0, 1.0);
    let w = tree.weights();
    let mut violations = 0usize;
    for delta in [0.05, 0.5] {
        for distribution in [
            NoiseDistribution::UniformSigned,
            NoiseDistribution::UniformPositive,
        ] {
            for seed in 0..10_000 {
                let spec = NoiseSpec {
                    delta,
                    seed,
                    distribution,
                };
                let noisy = perturb_weights(&tree, &spec).expect("perturb").weights();
                violations += noisy
                    .iter()
                    .zip(w.iter())
                    .filter(|&(&a, &b)| !(a >= 0.0 && (a - b).abs() <= delta))
                    .count();
            }
        }
    }

    let canonical = dir.join("tree.json");
    write_tree(&canonical, &tree).expect("write tree");
    let loose = dir.join("loose.json");
    fs::write(
        &loose,
        "{ \"root\": 0,\n  \"edges\": [ {\"parent\": 0, \"child\": 1, \"weight\": 0.50},\n {\"parent\": 1, \"child\": 2, \"weight\": 1e0} ] }",
    )
    .expect("write tree");
    let mut identical = true;
    for input in [&canonical, &loose] {
        let out = dir.join("zero-noise.json");
        let status = Command::new(env!("CARGO_BIN_EXE_twr"))
            .args(["perturb", "--delta", "0", "--seed", "17", "--tree"])
            .arg(input)
            .arg("--out")
            .arg(&out)
            .output()
            .expect("binary runs")
            .status;
        identical &= status.success() && fs::read(input).unwrap() == fs::read(&out).unwrap();
    }
    let zero = perturb_weights(
        &tree,
        &NoiseSpec {
            delta: 0.0,
            seed: 3,
            distribution: NoiseDistribution::UniformSigned,
        },
    )
    .expect("perturb");
    identical &= tree_to_json(&zero) == tree_to_json(&tree);
    Outcome::new(
        violations == 0 && identical,
        format!(
            "40000 draws, {violations} weight violations; zero noise byte-identical: {identical}"
        ),
    )
}

fn nondecreasing(mats: &[SymmetricMatrix]) -> usize {
    mats.windows(2)
        .map(|w| {
            w[0].as_slice()
                .iter()
                .zip(w[1].as_slice())
                .filter(|(a, b)| !(a <= b))
                .count()
        })
        .sum()
}

fn monotonicity(dir: &Path) -> Outcome {
    let mut rng = rng(10);
    let tree = random_tree(&mut rng, 300, 0.0, 5.0);
    let measures: Vec<Measure> = (0..30).map(|_| measure(&mut rng, 300, 8)).collect();
    let tree_path = dir.join("tree.json");
    write_tree(&tree_path, &tree).expect("write tree");
    let mdir = dir.join("measures");
    fs::create_dir_all(&mdir).unwrap();
    for (i, m) in measures.iter().enumerate() {
        fs::write(mdir.join(format!("m{i:03}.json")), measure_to_json(m)).unwrap();
    }

    let mut decreases = 0;
    let mut runs_ok = true;
    for p in ["1", "2", "inf"] {
        let out = dir.join(format!("sweep-p{p}"));
        let status = Command::new(env!("CARGO_BIN_EXE_twr"))
            .args([
                "sweep", "--deltas", "0,0.5", "--p", p, "--seed", "4", "--tree",
            ])
            .arg(&tree_path)
            .arg("--measures")
            .arg(&mdir)
            .arg("--out-dir")
            .arg(&out)
            .output()
            .expect("binary runs")
            .status;
        runs_ok &= status.success();
        for delta in ["0", "0.5"] {
            for metric in ["rt-ball", "rt-box"] {
                let mats: Vec<SymmetricMatrix> = LAMBDA_GRID
                    .iter()
                    .map(|l| {
                        read_matrix(
                            &out.join(format!("delta{delta}_lambda{l}_{metric}.csv")),
                            MatrixKind::Distance,
                        )
                    })
                    .collect::<Result<_, _>>()
                    .expect("sweep matrix");
                decreases += nondecreasing(&mats);
            }
        }
    }

    // Elementwise growth of a non-uniform β.
    let mut beta: Vec<f64> = (0..tree.edge_count())
        .map(|_| rng.gen_range(0.0..0.1))
        .collect();
    let mut mats = Vec::new();
    for _ in 0..LAMBDA_GRID.len() {
        let metric = Metric::RtBox {
            beta: EdgeVector::new(beta.clone()),
        };
        mats.push(distance_matrix(&tree, &measures, &metric).expect("distances"));
        for b in &mut beta {
            *b += if rng.gen_bool(0.5) {
                rng.gen_range(0.0..1.0)
            } else {
                0.0
            };
        }
    }
    decreases += nondecreasing(&mats);
    Outcome::new(
        runs_ok && decreases == 0,
        format!("sweeps for p in {{1, 2, inf}} plus elementwise beta growth, {decreases} decreasing entries"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let noise_dir = dir.path().join("noise");
    let sweep_dir = dir.path().join("sweep");
    fs::create_dir_all(&noise_dir).unwrap();
    fs::create_dir_all(&sweep_dir).unwrap();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        (
            "closed-form tree-Wasserstein matches the LP oracle",
            Box::new(tw_vs_lp),
        ),
        (
            "ball value and maximizer",
            Box::new(ball_value_and_maximizer),
        ),
        (
            "box with beta = lambda equals ball at p = inf",
            Box::new(box_equals_ball_at_infinity),
        ),
        (
            "zero-edge contraction invariance",
            Box::new(zero_edge_contraction),
        ),
        ("metric axioms", Box::new(metric_axioms)),
        (
            "negative definiteness and kernel PSD",
            Box::new(negative_definite_and_psd),
        ),
        ("infinite divisibility", Box::new(infinite_divisibility)),
        ("complexity", Box::new(complexity)),
        ("noise model", Box::new(move || noise_model(&noise_dir))),
        (
            "monotonicity over the radius grid",
            Box::new(move || monotonicity(&sweep_dir)),
        ),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if outcome.passed { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
