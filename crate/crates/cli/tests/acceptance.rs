//! One test per acceptance criterion. Each prints a `criterion N ... PASS|FAIL`
//! line (visible with `--nocapture`) before asserting.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ctgraph::grad::{backward, finite_diff_grad, max_relative_error};
use ctgraph::graph::{build_adjacency, degree_vector, edge_weight};
use ctgraph::io::{
    decode_checkpoint, decode_features, encode_checkpoint, encode_features, read_checkpoint, read_features,
    write_checkpoint, write_features,
};
use ctgraph::metrics::{auroc, binary_counts, evaluate, f1_recall_precision_accuracy, select_thresholds};
use ctgraph::model::model_forward;
use ctgraph::spectral::{cheb_apply, laplacian, scaled_laplacian_of, spectral_filter_oracle};
use ctgraph::{
    AdjacencyMatrix, ChebWeights, GraphOperators, GraphSpec, Matrix, ModelConfig, ModelParams, PredictionSet, Sample,
    Variant, WeightFn,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n:>2} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} {name} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

fn random_banded(r: &mut impl Rng, n: usize, q: usize) -> AdjacencyMatrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n.min(i + q + 1) {
            let w = r.gen_range(0.05..3.0);
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    AdjacencyMatrix::from_matrix(a).unwrap()
}

fn ctgraph(args: &[&str], single_thread: bool) -> (std::process::Output, Duration) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctgraph"));
    cmd.args(args);
    if single_thread {
        cmd.env("RAYON_NUM_THREADS", "1");
    }
    let start = Instant::now();
    let out = cmd.output().expect("failed to launch ctgraph");
    let elapsed = start.elapsed();
    assert!(
        out.status.success(),
        "ctgraph {args:?} exited with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    (out, elapsed)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn criterion_01_spectral_oracle_equivalence() {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let n = r.gen_range(2..=16);
        let q = r.gen_range(1..n);
        let a = random_banded(&mut r, n, q);
        let (d_in, d_out) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let w = ChebWeights::new((0..3).map(|_| random_matrix(&mut r, d_in, d_out)).collect()).unwrap();
        let x = random_matrix(&mut r, n, d_in);
        let fast = cheb_apply(&scaled_laplacian_of(&a).unwrap(), &x, &w).unwrap();
        let oracle = spectral_filter_oracle(&laplacian(&a), &x, &w).unwrap();
        worst = worst.max(fast.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "spectral oracle",
        worst <= 1e-10 && secs < 10.0,
        &format!("worst rel. Frobenius error {worst:.2e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_02_laplacian_invariants() {
    let start = Instant::now();
    let mut r = rng(2);
    let mut failures = Vec::new();
    for case in 0..100 {
        let n = r.gen_range(2..=40);
        let q = r.gen_range(1..=n + 4);
        let wf = WeightFn::ALL[r.gen_range(0..3)];
        let spec = GraphSpec::new(n, q, r.gen_range(0.001..0.5), wf).unwrap();
        let a = build_adjacency(&spec);
        let l = laplacian(&a);
        let deg = degree_vector(&a).0;
        let rows_ok = (0..n).all(|i| l.values().row(i).iter().sum::<f64>().abs() <= 1e-12 * deg[i]);
        let spectrum = ctgraph::eigen::symmetric_eigen(l.values()).unwrap().values;
        let lhat = ctgraph::eigen::symmetric_eigen(scaled_laplacian_of(&a).unwrap().values())
            .unwrap()
            .values;
        let ok = l.values().is_symmetric()
            && rows_ok
            && spectrum[0] >= -1e-9
            && lhat.iter().all(|&v| (-1.0 - 1e-9..=1.0 + 1e-9).contains(&v));
        if !ok {
            failures.push(case);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "Laplacian invariants",
        failures.is_empty() && secs < 10.0,
        &format!("failing cases {failures:?}, {secs:.2}s"),
    );
}

#[test]
fn criterion_03_gradient_correctness() {
    let start = Instant::now();
    let mut r = rng(3);
    let mut worst = 0.0_f64;
    for case in 0..20 {
        let variant = Variant::ALL[case % 2];
        let n = r.gen_range(2..=8);
        let d = r.gen_range(2..=6);
        let n_labels = r.gen_range(1..=4);
        let q = r.gen_range(1..n);
        let graph = GraphOperators::from_adjacency(random_banded(&mut r, n, q)).unwrap();
        let h = random_matrix(&mut r, n, d);
        let labels: Vec<u8> = (0..n_labels).map(|_| r.gen_range(0..=1)).collect();
        let mut params = ModelParams::init(&ModelConfig::new(variant, d, n_labels), r.gen()).unwrap();
        // a generic point: zero biases can park pre-activations on a ReLU kink
        for t in params.tensors_mut() {
            for v in t.as_mut_slice() {
                *v += r.gen_range(-0.1..0.1);
            }
        }
        let (_, analytic) = backward(&graph, &h, &labels, &params).unwrap();
        let numeric = finite_diff_grad(&graph, &h, &labels, &params, 1e-5).unwrap();
        worst = worst.max(max_relative_error(&analytic, &numeric, 1e-6));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "gradient correctness",
        worst <= 1e-5 && secs < 60.0,
        &format!("worst relative error {worst:.2e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_04_permutation_invariance() {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst = 0.0_f64;
    for variant in Variant::ALL {
        for _ in 0..50 {
            let n = r.gen_range(2..=20);
            let q = r.gen_range(1..n);
            let graph = GraphOperators::from_adjacency(random_banded(&mut r, n, q)).unwrap();
            let params = ModelParams::init(&ModelConfig::new(variant, 8, 4), r.gen()).unwrap();
            let h = random_matrix(&mut r, n, 8);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut r);
            let base = model_forward(&graph, &h, &params).unwrap();
            let moved = model_forward(&graph.permuted(&perm), &h.permute_rows(&perm), &params).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        "permutation invariance",
        worst <= 1e-9 && secs < 10.0,
        &format!("max logit change {worst:.2e}, {secs:.2}s"),
    );
}

#[test]
fn criterion_05_edge_weight_formula() {
    let mut r = rng(5);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let gap: usize = r.gen_range(1..=100);
        let s_dm: f64 = r.gen_range(0.0005..1.0);
        let spec = GraphSpec::new(gap + 1, gap, s_dm, WeightFn::InverseDm).unwrap();
        let direct = 1.0 + 1.0 / (1.0 + 3.0 * gap as f64 * s_dm);
        worst = worst.max((edge_weight(0, gap, &spec).unwrap() - direct).abs());
    }
    let worked = edge_weight(0, 1, &GraphSpec::new(2, 1, 0.015, WeightFn::InverseDm).unwrap()).unwrap();
    let pass = worst <= 1e-12 && (worked - 1.956_938).abs() < 5e-7;
    verdict(
        5,
        "edge-weight formula",
        pass,
        &format!("max deviation {worst:.2e}, w(1, 0.015 dm) = {worked:.6}"),
    );
}

#[test]
fn criterion_06_end_to_end_learning() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let (_, elapsed) = ctgraph(&["train", "--variant", "cheb", "--out", path_str(&out)], true);
    let report = read_json(&out.join("report.json"));
    let auc = report["macro"]["auroc"].as_f64().unwrap();
    let secs = elapsed.as_secs_f64();
    let steps = std::fs::read_to_string(out.join("loss.jsonl"))
        .unwrap()
        .lines()
        .last()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["step"].as_u64().unwrap());
    verdict(
        6,
        "end-to-end synthetic learning",
        auc >= 0.95 && secs <= 300.0 && steps == Some(2000),
        &format!("Cheb test macro AUROC {auc:.4}, {secs:.1}s single-threaded"),
    );
}

fn random_prediction_set(r: &mut impl Rng, m: usize, n_labels: usize) -> PredictionSet {
    let coarse = r.gen_bool(0.5);
    let scores = Matrix::from_fn(m, n_labels, |_, _| {
        let s: f64 = r.gen_range(0.0..=1.0);
        if coarse {
            (s * 10.0).round() / 10.0
        } else {
            s
        }
    });
    let labels = (0..m * n_labels).map(|_| r.gen_range(0..=1)).collect();
    PredictionSet::new(scores, labels).unwrap()
}

#[test]
fn criterion_07_threshold_optimality() {
    let mut r = rng(7);
    let mut violations = 0;
    for _ in 0..100 {
        let m = r.gen_range(1..=200);
        let set = random_prediction_set(&mut r, m, 3);
        for (l, &t) in select_thresholds(&set).iter().enumerate() {
            let (s, y) = (set.score_column(l), set.label_column(l));
            let f1 = |th: f64| f1_recall_precision_accuracy(binary_counts(&s, &y, th)).f1;
            let chosen = f1(t);
            let grid_best = (0..=1000).map(|k| f1(k as f64 / 1000.0)).fold(0.0, f64::max);
            if chosen < grid_best {
                violations += 1;
            }
        }
    }
    verdict(
        7,
        "threshold optimality",
        violations == 0,
        &format!("{violations} labels beaten by the 1001-point grid"),
    );
}

#[test]
fn criterion_08_auroc_oracle() {
    let mut r = rng(8);
    let mut mismatches = 0;
    for _ in 0..100 {
        let m = r.gen_range(2..=200);
        let scores: Vec<f64> = (0..m).map(|_| f64::from(r.gen_range(0..=25u32)) / 25.0).collect();
        let mut labels: Vec<u8> = (0..m).map(|_| r.gen_range(0..=1)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        if auroc(&scores, &labels) != Some(num / pairs) {
            mismatches += 1;
        }
    }
    let random = PredictionSet::new(
        Matrix::from_fn(10_000, 4, |_, _| r.gen_range(0.0..1.0)),
        (0..40_000).map(|_| r.gen_range(0..=1)).collect(),
    )
    .unwrap();
    let macro_auc = evaluate(&random, &[0.5; 4]).unwrap().macro_avg.auroc.unwrap();
    verdict(
        8,
        "AUROC oracle",
        mismatches == 0 && (0.47..=0.53).contains(&macro_auc),
        &format!("{mismatches} mismatches vs pair counting, random macro AUROC {macro_auc:.4}"),
    );
}

#[test]
fn criterion_09_robustness_structure() {
    let dir = tempfile::tempdir().unwrap();
    let rob = dir.path().join("rob");
    let (_, elapsed) = ctgraph(
        &["robustness", "--shifts", "0,2,4,8,16", "--out", path_str(&rob)],
        false,
    );
    let report = read_json(&rob.join("robustness.json"));
    let shifts: Vec<i64> = report["shifts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_i64().unwrap())
        .collect();
    let curves = report["curves"].as_array().unwrap();
    let f1s = |c: &Value| -> Vec<u64> {
        c["points"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["macro_f1"].as_f64().unwrap().to_bits())
            .collect()
    };
    let mut problems = Vec::new();
    if shifts != [0, 2, 4, 8, 16] {
        problems.push(format!("shifts {shifts:?}"));
    }
    for variant in ["cheb", "graphconv"] {
        let Some(curve) = curves.iter().find(|c| c["variant"] == variant && c["mode"] == "pad") else {
            problems.push(format!("no padded curve for {variant}"));
            continue;
        };
        // standard evaluation of the same configuration via `train`
        let out = dir.path().join(variant);
        ctgraph(&["train", "--variant", variant, "--out", path_str(&out)], false);
        let standard = read_json(&out.join("report.json"))["macro"]["f1"]
            .as_f64()
            .unwrap()
            .to_bits();
        if f1s(curve)[0] != standard {
            problems.push(format!("{variant} shift-0 differs from standard evaluation"));
        }
    }
    match curves.iter().find(|c| c["mode"] == "wrap") {
        Some(control) => {
            let f = f1s(control);
            if f.iter().any(|&x| x != f[0]) {
                problems.push(format!("wrap control not bit-stable: {f:?}"));
            }
        }
        None => problems.push("no wrap-around control curve".into()),
    }
    let secs = elapsed.as_secs_f64();
    if secs > 600.0 {
        problems.push(format!("took {secs:.0}s"));
    }
    verdict(
        9,
        "robustness structure",
        problems.is_empty(),
        &format!("{secs:.1}s; problems: {problems:?}"),
    );
}

struct AblationRun {
    json: String,
    text: String,
    secs: f64,
}

fn run_ablation(dir: &Path) -> AblationRun {
    let (_, elapsed) = ctgraph(&["ablate", "--seeds", "3", "--out", path_str(dir)], false);
    AblationRun {
        json: std::fs::read_to_string(dir.join("ablation.json")).unwrap(),
        text: std::fs::read_to_string(dir.join("ablation.txt")).unwrap(),
        secs: elapsed.as_secs_f64(),
    }
}

fn first_ablation() -> &'static AblationRun {
    static RUN: OnceLock<AblationRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        run_ablation(dir.path())
    })
}

#[test]
fn criterion_10_ablation_structure() {
    let run = first_ablation();
    let report: Value = serde_json::from_str(&run.json).unwrap();
    let cells = report["cells"].as_array().unwrap();
    let mut problems = Vec::new();
    if cells.len() != 18 {
        problems.push(format!("{} cells", cells.len()));
    }
    for variant in ["cheb", "graphconv"] {
        for conn in [
            serde_json::json!({"neighbourhood": 4}),
            serde_json::json!({"neighbourhood": 16}),
            serde_json::json!("fully-connected"),
        ] {
            for wf in ["inverse-dm", "exp", "const"] {
                let cell = cells
                    .iter()
                    .find(|c| c["variant"] == variant && c["connectivity"] == conn && c["weight_fn"] == wf);
                match cell {
                    None => problems.push(format!("missing {variant} {conn} {wf}")),
                    Some(c) => {
                        let runs = c["runs"].as_array().unwrap().len() + c["failures"].as_array().unwrap().len();
                        if runs != 3 || c["summary"]["f1"]["std"].as_f64().is_none() {
                            problems.push(format!("{variant} {conn} {wf}: {runs} runs / no std"));
                        }
                    }
                }
            }
        }
    }
    for heading in ["Connectivity x module", "Neighbourhood size", "Edge weighting", "±"] {
        if !run.text.contains(heading) {
            problems.push(format!("text table lacks '{heading}'"));
        }
    }
    if run.secs > 45.0 * 60.0 {
        problems.push(format!("took {:.0}s", run.secs));
    }
    verdict(
        10,
        "ablation structure",
        problems.is_empty(),
        &format!("{:.1}s; problems: {problems:?}", run.secs),
    );
}

fn checkpoint_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ctgc"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ctgraph(
            &["train", "--variant", "cheb", "--seed", "0", "--out", path_str(out)],
            false,
        );
    }
    let (ca, cb) = (checkpoint_files(&a), checkpoint_files(&b));
    let same_train = ca.len() == 5
        && ca == cb
        && std::fs::read(a.join("report.json")).unwrap() == std::fs::read(b.join("report.json")).unwrap()
        && std::fs::read(a.join("loss.jsonl")).unwrap() == std::fs::read(b.join("loss.jsonl")).unwrap();

    let first = first_ablation();
    let second = run_ablation(&dir.path().join("ablate"));
    let same_ablation = first.json == second.json && first.text == second.text;
    verdict(
        11,
        "determinism",
        same_train && same_ablation,
        &format!(
            "training artefacts identical: {same_train} ({} checkpoints), ablation reports identical: {same_ablation}",
            ca.len()
        ),
    );
}

#[test]
fn criterion_12_serialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(12);
    let mut ok = true;
    for i in 0..20 {
        let n = r.gen_range(1..=80);
        let d = r.gen_range(1..=64);
        let s = Sample {
            features: random_matrix(&mut r, n, d).map(|v| f64::from(v as f32)),
            labels: (0..r.gen_range(1..=18)).map(|_| r.gen_range(0..=1)).collect(),
            spacing_z_mm: r.gen_range(0.5..5.0),
        };
        let fpath = dir.path().join(format!("s{i}.ctgf"));
        write_features(&fpath, &s).unwrap();
        ok &= read_features(&fpath).unwrap() == s;

        let variant = Variant::ALL[i % 2];
        let params = ModelParams::init(
            &ModelConfig::new(variant, r.gen_range(1..=16), r.gen_range(1..=6)),
            r.gen(),
        )
        .unwrap();
        let cpath = dir.path().join(format!("m{i}.ctgc"));
        write_checkpoint(&cpath, &params).unwrap();
        let back = read_checkpoint(&cpath).unwrap();
        ok &= back == params && encode_checkpoint(&back).unwrap() == std::fs::read(&cpath).unwrap();
    }

    let sample = Sample {
        features: Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64),
        labels: vec![1, 0],
        spacing_z_mm: 1.5,
    };
    let params = ModelParams::init(&ModelConfig::new(Variant::Cheb, 4, 2), 0).unwrap();
    let mut codes = Vec::new();
    for (bytes, decode) in [
        (
            encode_features(&sample).unwrap(),
            (|b: &[u8]| decode_features(b).map(|_| ())) as fn(&[u8]) -> _,
        ),
        (encode_checkpoint(&params).unwrap(), |b: &[u8]| {
            decode_checkpoint(b).map(|_| ())
        }),
    ] {
        let mut magic = bytes.clone();
        magic[..4].copy_from_slice(b"XXXX");
        let mut version = bytes.clone();
        version[4..8].copy_from_slice(&9u32.to_le_bytes());
        let truncated = &bytes[..bytes.len() - 3];
        codes.push([&magic[..], &version[..], truncated].map(|b| decode(b).unwrap_err().code()));
    }
    let distinct = codes.iter().all(|c| c[0] != c[1] && c[1] != c[2] && c[0] != c[2]);
    verdict(
        12,
        "serialization",
        ok && distinct,
        &format!("round trips bit-exact: {ok}, error codes {codes:?}"),
    );
}
