//! End-to-end runs of the `twr` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use twr::formats::{read_matrix, read_sidecar, read_tree};
use twr::runner::SweepRow;
use twr_core::{Exponent, MatrixKind};

fn twr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twr"))
        .args(args)
        .env_remove("TWR_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = twr(args);
    assert!(
        out.status.success(),
        "twr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    twr(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Chain 0 →(1) 1 →(2) 2 plus a side branch 0 →(0.5) 3, and three measures.
fn fixture() -> (TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.json");
    fs::write(
        &tree,
        r#"{"root": 0, "edges": [
            {"child": 1, "parent": 0, "weight": 1.0},
            {"child": 2, "parent": 1, "weight": 2.0},
            {"child": 3, "parent": 0, "weight": 0.5}]}"#,
    )
    .unwrap();
    let measures = dir.path().join("measures");
    fs::create_dir(&measures).unwrap();
    fs::write(measures.join("a.json"), r#"{"support": [[2, 1.0]]}"#).unwrap();
    fs::write(measures.join("b.txt"), "0 1.0\n").unwrap();
    fs::write(measures.join("c.txt"), "# two atoms\n1 0.5\n3 0.5\n").unwrap();
    (dir, tree, measures)
}

#[test]
fn dist_writes_a_symmetric_matrix_with_sidecar() {
    let (dir, tree, measures) = fixture();
    let out = dir.path().join("d.csv");
    ok(&[
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--out",
        s(&out),
    ]);
    let d = read_matrix(&out, MatrixKind::Distance).unwrap();
    assert_eq!(d.size(), 3);
    assert!((0..3).all(|i| d.get(i, i) == 0.0));
    assert_eq!(d.get(0, 1), 3.0);
    assert_eq!(d.get(0, 2), 0.5 * 2.0 + 0.5 * 3.5);
    let side = read_sidecar(&out).unwrap().unwrap();
    assert_eq!(
        (side.size, side.pair_count, side.kind.as_str()),
        (3, 3, "distance")
    );
    assert_eq!(side.fingerprint.len(), 64);
    assert_eq!(side.metric, "tw");
}

#[test]
fn dist_is_byte_identical_across_runs_and_thread_counts() {
    let (dir, tree, measures) = fixture();
    for (ext, fmt) in [("csv", "csv"), ("bin", "bin")] {
        let a = dir.path().join(format!("a.{ext}"));
        let b = dir.path().join(format!("b.{ext}"));
        let base = [
            "dist",
            "--tree",
            s(&tree),
            "--measures",
            s(&measures),
            "--metric",
            "rt-ball",
            "--p",
            "3",
            "--lambda",
            "0.7",
            "--format",
            fmt,
        ];
        ok(&[&base[..], &["--out", s(&a), "--threads", "1"]].concat());
        ok(&[&base[..], &["--out", s(&b), "--threads", "4"]].concat());
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let sa = read_sidecar(&a).unwrap().unwrap();
        let sb = read_sidecar(&b).unwrap().unwrap();
        assert_eq!((sa.metric.as_str(), sa.pair_count), (sb.metric.as_str(), 3));
    }
    let bin = fs::read(dir.path().join("a.bin")).unwrap();
    assert_eq!(&bin[..8], b"TWGRAM01");
}

#[test]
fn robust_metrics_from_flags_and_beta_files() {
    let (dir, tree, measures) = fixture();
    let beta = dir.path().join("beta.json");
    fs::write(&beta, r#"{"default": 0.5}"#).unwrap();
    let by_file = dir.path().join("box.csv");
    let by_const = dir.path().join("box2.csv");
    let ball = dir.path().join("ball.csv");
    ok(&[
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--metric",
        "rt-box",
        "--beta-file",
        s(&beta),
        "--out",
        s(&by_file),
    ]);
    ok(&[
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--metric",
        "rt-box",
        "--beta-const",
        "0.5",
        "--out",
        s(&by_const),
    ]);
    ok(&[
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--metric",
        "rt-ball",
        "--p",
        "inf",
        "--lambda",
        "0.5",
        "--out",
        s(&ball),
    ]);
    let a = read_matrix(&by_file, MatrixKind::Distance).unwrap();
    let b = read_matrix(&by_const, MatrixKind::Distance).unwrap();
    let c = read_matrix(&ball, MatrixKind::Distance).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
    assert_eq!(a.get(0, 1), 4.0);
    for (x, y) in a.as_slice().iter().zip(c.as_slice()) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn exit_codes() {
    let (dir, tree, measures) = fixture();
    let out = dir.path().join("d.csv");
    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&[
            "dist",
            "--tree",
            s(&missing),
            "--measures",
            s(&measures),
            "--out",
            s(&out)
        ]),
        2
    );
    assert_eq!(
        code(&[
            "dist",
            "--tree",
            s(&tree),
            "--measures",
            s(&measures),
            "--metric",
            "rt-ball",
            "--p",
            "0.5",
            "--lambda",
            "1",
            "--out",
            s(&out)
        ]),
        2
    );
    assert_eq!(
        code(&[
            "dist",
            "--tree",
            s(&tree),
            "--measures",
            s(&measures),
            "--metric",
            "rt-ball",
            "--out",
            s(&out)
        ]),
        2
    );

    let bad = dir.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(bad.join("m.txt"), "1 0.5\n2 0.4\n").unwrap();
    let err = twr(&[
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&bad),
        "--out",
        s(&out),
    ]);
    assert_eq!(err.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&err.stderr).contains("m.txt"));
    ok(&[
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&bad),
        "--normalize",
        "--out",
        s(&out),
    ]);

    fs::write(bad.join("m.txt"), "1 0.5\n9 0.5\n").unwrap();
    assert_eq!(
        code(&[
            "dist",
            "--tree",
            s(&tree),
            "--measures",
            s(&bad),
            "--out",
            s(&out)
        ]),
        3
    );

    let cyclic = dir.path().join("cyclic.json");
    fs::write(&cyclic, r#"{"root": 0, "edges": [{"child": 1, "parent": 2, "weight": 1}, {"child": 2, "parent": 1, "weight": 1}]}"#).unwrap();
    assert_eq!(
        code(&[
            "dist",
            "--tree",
            s(&cyclic),
            "--measures",
            s(&measures),
            "--out",
            s(&out)
        ]),
        3
    );

    let report = dir.path().join("report.json");
    ok(&[
        "verify",
        "--instances",
        "20",
        "--budget",
        "200",
        "--out",
        s(&report),
    ]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
}

#[test]
fn resume_reuses_matching_outputs_and_rejects_mismatches() {
    let (dir, tree, measures) = fixture();
    let out = dir.path().join("d.csv");
    let args = [
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--out",
        s(&out),
    ];
    ok(&args);
    let kept = ok(&[&args[..], &["--resume"]].concat());
    assert!(String::from_utf8_lossy(&kept.stderr).starts_with("kept"));
    let other = [
        "dist",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--metric",
        "rt-box",
        "--beta-const",
        "1",
        "--out",
        s(&out),
        "--resume",
    ];
    let err = twr(&other);
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("fingerprint"));
}

#[test]
fn config_files_drive_dist() {
    let (dir, tree, measures) = fixture();
    let out = dir.path().join("cfg.bin");
    let cfg = dir.path().join("cfg.json");
    let text = serde_json::json!({
        "tree": {"kind": "file", "path": tree},
        "measures": measures,
        "metric": {"name": "rt-ball", "p": "inf", "lambda": 0.5},
        "output": {"path": out, "format": "bin"}
    });
    fs::write(&cfg, text.to_string()).unwrap();
    ok(&["dist", "--config", s(&cfg)]);
    let d = read_matrix(&out, MatrixKind::Distance).unwrap();
    assert_eq!(d.get(0, 1), 4.0);

    let bad = serde_json::json!({
        "tree": {"kind": "file", "path": tree},
        "measures": measures,
        "metric": {"name": "tw"},
        "lambda_grid": [0.0, 1.0],
        "output": {"path": out}
    });
    fs::write(&cfg, bad.to_string()).unwrap();
    assert_eq!(code(&["dist", "--config", s(&cfg)]), 2);
}

#[test]
fn gram_single_bandwidth_and_quantile_grid() {
    let (dir, tree, measures) = fixture();
    let k = dir.path().join("k.bin");
    ok(&[
        "gram",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--t",
        "0.25",
        "--out",
        s(&k),
    ]);
    let m = read_matrix(&k, MatrixKind::Distance).unwrap();
    assert_eq!(m.kind(), MatrixKind::Kernel);
    assert_eq!(m.get(0, 0), 1.0);
    assert!((m.get(0, 1) - (-0.75f64).exp()).abs() < 1e-15);

    let grid = dir.path().join("grid");
    ok(&[
        "gram",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--metric",
        "rt-ball",
        "--p",
        "2",
        "--lambda",
        "0.5",
        "--quantile-grid",
        "--check-psd",
        "--out",
        s(&grid),
    ]);
    let index = fs::read_to_string(grid.join("bandwidths.csv")).unwrap();
    assert_eq!(index.lines().count(), 1 + 27);
    let side = read_sidecar(&grid.join("gram_000.csv")).unwrap().unwrap();
    assert!(side.min_eigenvalue.unwrap() >= -1e-8 * 3.0);

    assert_eq!(
        code(&[
            "gram",
            "--tree",
            s(&tree),
            "--measures",
            s(&measures),
            "--metric",
            "rt-ball",
            "--p",
            "1.5",
            "--lambda",
            "0.5",
            "--t",
            "1",
            "--out",
            s(&k)
        ]),
        3
    );
}

#[test]
fn adversary_emits_worst_case_weights() {
    let (dir, tree, _) = fixture();
    let mu = dir.path().join("mu.txt");
    let nu = dir.path().join("nu.txt");
    fs::write(&mu, "2 1\n").unwrap();
    fs::write(&nu, "0 1\n").unwrap();
    let out = dir.path().join("w.json");
    ok(&[
        "adversary",
        "--tree",
        s(&tree),
        "--mu",
        s(&mu),
        "--nu",
        s(&nu),
        "--metric",
        "rt-ball",
        "--p",
        "2",
        "--lambda",
        "1",
        "--out",
        s(&out),
    ]);
    let t = read_tree(&out).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert!((t.weight_into(1) - (1.0 + r)).abs() < 1e-15);
    assert!((t.weight_into(2) - (2.0 + r)).abs() < 1e-15);
    assert_eq!(t.weight_into(3), 0.5);

    let run = ok(&[
        "adversary",
        "--tree",
        s(&tree),
        "--mu",
        s(&mu),
        "--nu",
        s(&nu),
        "--metric",
        "rt-ball",
        "--p",
        "inf",
        "--lambda",
        "0.75",
        "--search-budget",
        "500",
    ]);
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("leaves the nonnegative orthant"));
    assert!(stderr.contains("robust value 4.5"));
    let t: twr::formats::TreeFile = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(
        t.edges.iter().map(|e| e.weight).collect::<Vec<_>>(),
        vec![1.75, 2.75, 1.25]
    );

    let run = ok(&[
        "adversary",
        "--tree",
        s(&tree),
        "--mu",
        s(&mu),
        "--nu",
        s(&nu),
        "--metric",
        "rt-box",
        "--beta-const",
        "0.5",
    ]);
    let t: twr::formats::TreeFile = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(
        t.edges.iter().map(|e| e.weight).collect::<Vec<_>>(),
        vec![1.5, 2.5, 1.0]
    );
    assert_eq!(
        code(&[
            "adversary",
            "--tree",
            s(&tree),
            "--mu",
            s(&mu),
            "--nu",
            s(&nu)
        ]),
        2
    );
}

#[test]
fn perturb_respects_the_bound_and_is_exact_at_zero() {
    let (dir, tree, _) = fixture();
    let same = dir.path().join("same.json");
    ok(&[
        "perturb",
        "--tree",
        s(&tree),
        "--delta",
        "0",
        "--out",
        s(&same),
    ]);
    assert_eq!(fs::read(&tree).unwrap(), fs::read(&same).unwrap());

    let clean = read_tree(&tree).unwrap();
    for dist in ["uniform-signed", "uniform-positive"] {
        let noisy = dir.path().join(format!("{dist}.json"));
        ok(&[
            "perturb",
            "--tree",
            s(&tree),
            "--delta",
            "0.6",
            "--noise-dist",
            dist,
            "--seed",
            "11",
            "--out",
            s(&noisy),
        ]);
        let t = read_tree(&noisy).unwrap();
        for (a, b) in clean.weights().iter().zip(t.weights().iter()) {
            assert!(*b >= 0.0 && (a - b).abs() <= 0.6);
        }
    }
    let by_env = dir.path().join("env.json");
    let status = Command::new(env!("CARGO_BIN_EXE_twr"))
        .args([
            "perturb",
            "--tree",
            s(&tree),
            "--delta",
            "0.6",
            "--out",
            s(&by_env),
        ])
        .env("TWR_SEED", "11")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(&by_env).unwrap(),
        fs::read(dir.path().join("uniform-signed.json")).unwrap()
    );
}

#[test]
fn build_tree_from_points() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("p.csv");
    let rows: String = (0..40)
        .map(|i| format!("{}, {}\n", (i % 7) as f64 * 1.5, (i / 7) as f64))
        .collect();
    fs::write(&points, rows).unwrap();
    let out = dir.path().join("t.json");
    let assign = dir.path().join("a.csv");
    ok(&[
        "build-tree",
        "--points",
        s(&points),
        "--branching",
        "3",
        "--depth",
        "4",
        "--seed",
        "7",
        "--out",
        s(&out),
        "--assignments",
        s(&assign),
    ]);
    let t = read_tree(&out).unwrap();
    assert!(t.node_count() > 1);
    assert_eq!(fs::read_to_string(&assign).unwrap().lines().count(), 41);
    let again = dir.path().join("t2.json");
    ok(&[
        "build-tree",
        "--points",
        s(&points),
        "--branching",
        "3",
        "--depth",
        "4",
        "--seed",
        "7",
        "--out",
        s(&again),
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    assert_eq!(
        code(&[
            "build-tree",
            "--points",
            s(&points),
            "--branching",
            "1",
            "--out",
            s(&out)
        ]),
        3
    );
}

fn read_summary(path: &Path) -> Vec<SweepRow> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn sweep_rows_and_matrices() {
    let (dir, tree, measures) = fixture();
    let out = dir.path().join("sweep");
    ok(&[
        "sweep",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--deltas",
        "0,0.3",
        "--p",
        "2",
        "--out-dir",
        s(&out),
        "--seed",
        "5",
    ]);
    let rows = read_summary(&out.join("summary.csv"));
    assert_eq!(rows.len(), 2 * 7);
    let base = &rows[0];
    assert_eq!((base.delta, base.lambda), (0.0, 0.0));
    assert_eq!(base.rt_ball_mean, base.tw_mean);
    assert_eq!(base.rt_box_mean, base.tw_mean);
    assert_eq!(base.tw_relative_deviation, 0.0);
    assert_eq!(base.gap_mean, 0.0);
    for r in &rows {
        assert!(r.box_ball_max_diff <= 1e-12);
        assert!((r.gap_mean - r.dual_norm_term_mean).abs() <= 1e-12);
    }
    // rt-ball grows with λ entrywise.
    let lambdas = [0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0];
    for delta in ["0", "0.3"] {
        let mats: Vec<_> = lambdas
            .iter()
            .map(|l| {
                read_matrix(
                    &out.join(format!("delta{delta}_lambda{l}_rt-ball.csv")),
                    MatrixKind::Distance,
                )
                .unwrap()
            })
            .collect();
        for w in mats.windows(2) {
            assert!(w[0]
                .as_slice()
                .iter()
                .zip(w[1].as_slice())
                .all(|(a, b)| a <= b));
        }
    }
    let p = Exponent::TWO;
    assert_eq!(rows[1].p, p.to_string());

    let again = dir.path().join("again");
    ok(&[
        "sweep",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--deltas",
        "0,0.3",
        "--p",
        "2",
        "--out-dir",
        s(&again),
        "--seed",
        "5",
        "--threads",
        "2",
    ]);
    for name in [
        "summary.csv",
        "delta0.3_lambda0.5_rt-box.csv",
        "delta0.3_lambda5_tw.csv",
    ] {
        assert_eq!(
            fs::read(out.join(name)).unwrap(),
            fs::read(again.join(name)).unwrap(),
            "{name}"
        );
    }
    ok(&[
        "sweep",
        "--tree",
        s(&tree),
        "--measures",
        s(&measures),
        "--deltas",
        "0,0.3",
        "--p",
        "2",
        "--out-dir",
        s(&out),
        "--seed",
        "5",
        "--resume",
    ]);
    assert_eq!(
        code(&[
            "sweep",
            "--tree",
            s(&tree),
            "--measures",
            s(&measures),
            "--deltas",
            "0,0.3",
            "--p",
            "3",
            "--out-dir",
            s(&out),
            "--seed",
            "5",
            "--resume"
        ]),
        2
    );
}

#[test]
fn bench_reports_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    ok(&[
        "bench",
        "--sizes",
        "200:6:4,400:6:4,800:6:4",
        "--pairs",
        "10",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("edges,measures,support,pairs_timed,tw_restricted_ns"));
}
