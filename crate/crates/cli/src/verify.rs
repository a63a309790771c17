//! Randomized oracle suite behind `twr verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twr_core::kernel::{
    check_negative_definite, distance_matrix, quantile_bandwidths, DEFAULT_QUANTILES,
};
use twr_core::oracle::{adversary_search, ot_lp, AdversaryOptions, SearchMode};
use twr_core::robust::lp_norm;
use twr_core::synth::{random_measure, random_tree, zero_random_edges};
use twr_core::{
    adversarial_weights, check_box_ball_connection, contract_zero_edges, h_profile, rt_ball,
    rt_box, tw_distance, EdgeVector, Exponent, Measure, Metric, Tree, UncertaintySpec,
};

use crate::error::{Context, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random instances per check.
    pub instances: usize,
    /// Adversary search budget per instance.
    pub budget: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            instances: 200,
            budget: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub tolerance: f64,
    /// Largest violation seen (0 when every instance is inside tolerance).
    pub max_error: f64,
    pub failures: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

struct Check {
    name: &'static str,
    tolerance: f64,
    instances: usize,
    max_error: f64,
    failures: usize,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Check {
            name,
            tolerance,
            instances: 0,
            max_error: 0.0,
            failures: 0,
        }
    }

    /// Record an error measure; NaN counts as a failure.
    fn record(&mut self, error: f64) {
        if !(error <= self.tolerance) {
            self.failures += 1;
        }
        if error.is_nan() {
            self.max_error = f64::NAN;
        } else if !self.max_error.is_nan() {
            self.max_error = self.max_error.max(error);
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            instances: self.instances,
            tolerance: self.tolerance,
            max_error: self.max_error,
            failures: self.failures,
            passed: self.failures == 0,
        }
    }
}

fn instance(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    support: usize,
    count: usize,
) -> (Tree, Vec<Measure>) {
    let n = rng.gen_range(2..=max_nodes);
    let t = random_tree(rng, n, 0.0, 5.0);
    let ms = (0..count)
        .map(|_| random_measure(rng, n, support))
        .collect();
    (t, ms)
}

const EXPONENTS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];
const RADII: [f64; 3] = [0.01, 0.5, 5.0];

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    let mut lp = Check::new("tw_matches_lp", 1e-9);
    let mut marginals = Check::new("lp_marginals", 1e-10);
    for _ in 0..opts.instances {
        let (t, ms) = instance(&mut rng, 12, 4, 2);
        let (value, plan) = ot_lp(&t, &ms[0], &ms[1]).context("ot_lp")?;
        lp.instances += 1;
        marginals.instances += 1;
        lp.record((tw_distance(&t, &ms[0], &ms[1]).context("tw")? - value).abs());
        marginals.record(plan.marginal_error(&ms[0], &ms[1]));
    }
    checks.extend([lp.finish(), marginals.finish()]);

    let mut search = Check::new("ball_search_below_closed_form", 1e-9);
    let mut objective = Check::new("ball_maximizer_attains_closed_form", 1e-12);
    let mut feasible = Check::new("ball_maximizer_feasible", 1e-12);
    for &p in &EXPONENTS {
        let p = Exponent::new(p).expect("valid exponent");
        for &lambda in &RADII {
            for _ in 0..opts.instances.div_ceil(EXPONENTS.len() * RADII.len()) {
                let (t, ms) = instance(&mut rng, 10, 4, 2);
                let closed = rt_ball(&t, &ms[0], &ms[1], p, lambda).context("rt_ball")?;
                let w_star =
                    adversarial_weights(&t, &ms[0], &ms[1], p, lambda).context("maximizer")?;
                let search_opts = AdversaryOptions {
                    budget: opts.budget,
                    mode: SearchMode::Random,
                    seed: rng.gen(),
                    verify_inner: false,
                };
                let found = adversary_search(
                    &t,
                    &ms[0],
                    &ms[1],
                    &UncertaintySpec::Ball { p, lambda },
                    &search_opts,
                )
                .context("adversary search")?;
                search.instances += 1;
                objective.instances += 1;
                feasible.instances += 1;
                search.record((found.value - closed).max(0.0));
                let attained = h_profile(&t, &ms[0], &ms[1]).context("h")?.dot(&w_star);
                objective.record((attained - closed).abs());
                let diff: Vec<f64> = w_star
                    .iter()
                    .zip(t.weights().iter())
                    .map(|(a, b)| a - b)
                    .collect();
                let excess = (lp_norm(&diff, p) - lambda * (1.0 + 1e-12)).max(0.0);
                let negative = w_star.iter().fold(0.0f64, |m, &x| m.max(-x));
                feasible.record(excess.max(negative));
            }
        }
    }
    checks.extend([search.finish(), objective.finish(), feasible.finish()]);

    let mut grid = Check::new("box_corners_match_closed_form", 1e-9);
    for _ in 0..opts.instances {
        let (t, ms) = instance(&mut rng, 10, 4, 2);
        let beta = EdgeVector::new(
            (0..t.edge_count())
                .map(|_| rng.gen_range(0.0..2.0))
                .collect(),
        );
        let alpha = EdgeVector::new(
            t.weights()
                .iter()
                .map(|w| w * rng.gen_range(0.0..1.0))
                .collect(),
        );
        let closed = rt_box(&t, &ms[0], &ms[1], &beta).context("rt_box")?;
        let spec = UncertaintySpec::Box {
            alpha: Some(alpha),
            beta,
        };
        let search_opts = AdversaryOptions {
            budget: 0,
            mode: SearchMode::Grid,
            seed: 0,
            verify_inner: true,
        };
        let found =
            adversary_search(&t, &ms[0], &ms[1], &spec, &search_opts).context("grid search")?;
        grid.instances += 1;
        grid.record(
            (found.value - closed)
                .abs()
                .max(found.max_inner_gap.unwrap_or(0.0)),
        );
    }
    checks.push(grid.finish());

    let mut connection = Check::new("box_equals_ball_at_infinity", 1e-12);
    let mut contraction = Check::new("zero_edge_contraction", 1e-12);
    let mut axioms = Check::new("metric_axioms", 1e-12);
    for _ in 0..opts.instances {
        let (t, ms) = instance(&mut rng, 40, 6, 3);
        let lambda = rng.gen_range(0.0..3.0);
        let (a, b) = check_box_ball_connection(&t, &ms[0], &ms[1], lambda).context("box/ball")?;
        connection.instances += 1;
        connection.record((a - b).abs());

        let z = zero_random_edges(&mut rng, &t, 0.3).context("zeroing")?;
        let c = contract_zero_edges(&z, &ms).context("contraction")?;
        contraction.instances += 1;
        let before = tw_distance(&z, &ms[0], &ms[1]).context("tw")?;
        let after = tw_distance(&c.tree, &c.measures[0], &c.measures[1]).context("tw")?;
        contraction.record((before - after).abs());
        // The box surcharge of the collapsed edges is all that changes.
        let beta = EdgeVector::new(
            (0..z.edge_count())
                .map(|_| rng.gen_range(0.0..2.0))
                .collect(),
        );
        let kept_beta = EdgeVector::new(
            (0..z.edge_count())
                .filter(|&e| z.edge_weight(e) > 0.0)
                .map(|e| beta[e])
                .collect(),
        );
        let h = h_profile(&z, &ms[0], &ms[1]).context("h")?;
        let collapsed = h
            .edges
            .iter()
            .zip(&h.h)
            .filter(|(&e, _)| z.edge_weight(e) == 0.0)
            .fold(0.0, |acc, (&e, h)| acc + beta[e] * h);
        let box_before = rt_box(&z, &ms[0], &ms[1], &beta).context("rt_box")?;
        let box_after =
            rt_box(&c.tree, &c.measures[0], &c.measures[1], &kept_beta).context("rt_box")?;
        contraction.record((box_before - box_after - collapsed).abs());

        let metrics = [
            Metric::Tw,
            Metric::RtBox { beta },
            Metric::RtBall {
                p: Exponent::TWO,
                lambda,
            },
        ];
        axioms.instances += 1;
        for m in &metrics {
            let d = |x: &Measure, y: &Measure| m.distance(&z, x, y);
            let (ab, ba) = (
                d(&ms[0], &ms[1]).context("d")?,
                d(&ms[1], &ms[0]).context("d")?,
            );
            let (bc, ac) = (
                d(&ms[1], &ms[2]).context("d")?,
                d(&ms[0], &ms[2]).context("d")?,
            );
            let self_dist = d(&ms[0], &ms[0]).context("d")?.abs();
            let asym = if ab == ba { 0.0 } else { f64::INFINITY };
            axioms.record(self_dist.max(asym).max(ac - ab - bc));
        }
    }
    checks.extend([connection.finish(), contraction.finish(), axioms.finish()]);

    let mut negdef = Check::new("negative_definite_and_psd", 1e-8);
    for _ in 0..opts.instances.div_ceil(50).max(1) {
        let (t, ms) = instance(&mut rng, 60, 6, 20);
        for metric in [
            Metric::RtBox {
                beta: EdgeVector::constant(t.edge_count(), 0.5),
            },
            Metric::RtBall {
                p: Exponent::TWO,
                lambda: 0.5,
            },
            Metric::RtBall {
                p: Exponent::INFINITY,
                lambda: 0.5,
            },
        ] {
            let d = distance_matrix(&t, &ms, &metric).context("distance matrix")?;
            let report = check_negative_definite(&d, 1_000, negdef.tolerance, rng.gen());
            negdef.instances += 1;
            negdef.record(report.max_quadratic_form.max(0.0));
            if let Ok(grid) = quantile_bandwidths(&d, &DEFAULT_QUANTILES) {
                for bw in grid {
                    let k = d.to_kernel(bw.t()).context("kernel")?;
                    let ev = k.min_eigenvalue().unwrap_or(0.0);
                    negdef.record((-ev / k.size() as f64).max(0.0));
                }
            }
        }
    }
    checks.push(negdef.finish());

    Ok(VerifyReport {
        seed: opts.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
