use std::path::{Path, PathBuf};
use std::process::Command;

use dbc_core::io::{read_coreset, read_matrix};
use dbc_core::kernel::median_bandwidth;
use dbc_core::metrics::mmd_sq;
use dbc_core::{BaseKernelSpec, KernelFamily, KernelOracle, PointSet, Preconditioner, ScoreSet, SteinKernel};
use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    json: Value,
    stderr: String,
}

fn dbc(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_dbc")).args(args).output().expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout);
    Run {
        code: out.status.code().unwrap_or(-1),
        json: serde_json::from_str(&stdout).unwrap_or(Value::Null),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &TempDir, scenario: &str, n: usize, d: usize, seed: u64) -> (PathBuf, PathBuf) {
    let prefix = dir.path().join(format!("sim{seed}"));
    let r = dbc(&[
        "simulate", "--scenario", scenario, "--n", &n.to_string(), "--d", &d.to_string(), "--seed",
        &seed.to_string(), "--out", p(&prefix),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    (PathBuf::from(r.json["points"].as_str().unwrap()), PathBuf::from(r.json["scores"].as_str().unwrap()))
}

fn library_kernel(points: &Path, scores: &Path) -> SteinKernel {
    let x = read_matrix(points).unwrap();
    let s = read_matrix(scores).unwrap();
    let (n, d) = (x.rows(), x.cols());
    let x = PointSet::new(x.into_vec(), n, d).unwrap();
    let s = ScoreSet::new(s.into_vec(), n, d).unwrap();
    let pre = Preconditioner::identity(d);
    let sigma_sq = median_bandwidth(&x, &pre, 1000).unwrap();
    SteinKernel::new(x, s, BaseKernelSpec::new(KernelFamily::Imq, sigma_sq).unwrap(), pre).unwrap()
}

fn compress(points: &Path, scores: &Path, out: &Path, extra: &[&str]) -> Run {
    let mut args = vec!["compress", "--points", p(points), "--scores", p(scores), "--out", p(out)];
    args.extend_from_slice(extra);
    dbc(&args)
}

#[test]
fn simulate_writes_target_scores() {
    let dir = TempDir::new().unwrap();
    let (px, ps) = simulate(&dir, "iid-target", 4, 3, 0);
    let x = read_matrix(&px).unwrap();
    let s = read_matrix(&ps).unwrap();
    assert_eq!((x.rows(), x.cols()), (4, 3));
    for (a, b) in x.as_slice().iter().zip(s.as_slice()) {
        assert_eq!(*b, -*a);
    }
}

#[test]
fn st_with_one_point_picks_the_diagonal_minimum() {
    let dir = TempDir::new().unwrap();
    let px = dir.path().join("x.csv");
    let ps = dir.path().join("s.csv");
    std::fs::write(&px, "0.5\n-0.1\n2.0\n").unwrap();
    std::fs::write(&ps, "-0.5\n0.1\n-2.0\n").unwrap();
    let out = dir.path().join("c.csv");
    let r = compress(&px, &ps, &out, &["--method", "st", "--m", "1", "--sigma", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(std::fs::read_to_string(&out).unwrap().trim(), format!("1,{}", dbc_core::io::format_f64(1.0)));
}

#[test]
fn skt_coreset_has_equal_weights() {
    let dir = TempDir::new().unwrap();
    let (px, ps) = simulate(&dir, "iid-offtarget(1)", 1024, 2, 1);
    let out = dir.path().join("c.csv");
    let r = compress(&px, &ps, &out, &["--method", "skt", "--m", "32", "--seed", "3"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json["schema"], 1);
    let w = read_coreset(&out, 1024).unwrap();
    assert!(w.iter().filter(|&&v| v != 0.0).count() <= 32);
    for v in &w {
        let c = v * 32.0;
        assert!((c - c.round()).abs() < 1e-9);
    }
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn metrics_reproduce_compress_and_library_values() {
    let dir = TempDir::new().unwrap();
    let (px, ps) = simulate(&dir, "mala-burnin(6,0.2)", 600, 2, 2);
    let k = library_kernel(&px, &ps);
    for method in ["st", "skt", "lskt", "sr", "lsr", "sc", "lsc"] {
        let out = dir.path().join(format!("{method}.csv"));
        let r = compress(&px, &ps, &out, &["--method", method, "--m", "12", "--n0", "300"]);
        assert_eq!(r.code, 0, "{method}: {}", r.stderr);
        let m = dbc(&["metrics", "--points", p(&px), "--scores", p(&ps), "--coreset", p(&out)]);
        assert_eq!(m.code, 0, "{}", m.stderr);
        let from_compress = r.json["mmd_sq"].as_f64().unwrap();
        let from_metrics = m.json["mmd_sq"].as_f64().unwrap();
        assert_eq!(from_compress.to_bits(), from_metrics.to_bits(), "{method}");
        let w = read_coreset(&out, 600).unwrap();
        assert_eq!(mmd_sq(&k, &w).unwrap().to_bits(), from_metrics.to_bits(), "{method}");
        // Thinning 600 → 300 keeps the odd indices of the full sample.
        assert!(w.iter().enumerate().all(|(i, &v)| v == 0.0 || i % 2 == 1), "{method}");
    }
}

#[test]
fn metrics_special_cases() {
    let dir = TempDir::new().unwrap();
    let (px, ps) = simulate(&dir, "tempered(2)", 50, 2, 3);
    let k = library_kernel(&px, &ps);

    let uniform = dir.path().join("u.csv");
    let lines: String = (0..50).map(|i| format!("{i},0.02\n")).collect();
    std::fs::write(&uniform, lines).unwrap();
    let r = dbc(&[
        "metrics", "--points", p(&px), "--scores", p(&ps), "--coreset", p(&uniform), "--reference", p(&px),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.json["energy_distance"].as_f64().unwrap().abs() < 1e-12);

    let single = dir.path().join("one.csv");
    std::fs::write(&single, "7,1\n").unwrap();
    let r = dbc(&["metrics", "--points", p(&px), "--scores", p(&ps), "--coreset", p(&single)]);
    assert_eq!(r.json["mmd"].as_f64().unwrap(), k.entry(7, 7).sqrt());
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let (px, ps) = simulate(&dir, "iid-target", 20, 2, 4);
    let out = dir.path().join("c.csv");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let r = compress(&bad, &ps, &out, &["--method", "st", "--m", "2"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("points"), "{}", r.stderr);

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "1,2\n").unwrap();
    let r = compress(&px, &short, &out, &["--method", "st", "--m", "2"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("scores"), "{}", r.stderr);

    let r = compress(&px, &ps, &out, &["--method", "skt", "--m", "21"]);
    assert_eq!(r.code, 2, "{}", r.stderr);

    let r = compress(&px, &ps, &out, &["--method", "st", "--m", "2", "--sigma=-1"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("sigma"), "{}", r.stderr);

    let range = dir.path().join("range.csv");
    std::fs::write(&range, "20,1\n").unwrap();
    let r = dbc(&["metrics", "--points", p(&px), "--scores", p(&ps), "--coreset", p(&range)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("coreset"), "{}", r.stderr);

    let r = dbc(&["simulate", "--scenario", "brownian", "--n", "3", "--d", "1", "--out", p(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("scenario"), "{}", r.stderr);
}

#[test]
fn seeds_reproduce_byte_identical_coresets() {
    let dir = TempDir::new().unwrap();
    let (px, ps) = simulate(&dir, "iid-offtarget(1)", 256, 2, 5);
    let read = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let r = compress(&px, &ps, &out, &["--method", "lsr", "--m", "8", "--seed", seed]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        std::fs::read(&out).unwrap()
    };
    assert_eq!(read("9", "a.csv"), read("9", "b.csv"));
}

#[test]
fn binary_inputs_and_hessian_preconditioner() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("bin");
    let r = dbc(&[
        "simulate", "--scenario", "iid-offtarget(1)", "--n", "200", "--d", "2", "--seed", "6", "--out", p(&prefix),
        "--format", "binary",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let px = PathBuf::from(r.json["points"].as_str().unwrap());
    let ps = PathBuf::from(r.json["scores"].as_str().unwrap());
    assert!(std::fs::read(&px).unwrap().starts_with(b"DBCM"));

    // Hessian of log N(0, I) is −I, so M = I.
    let hess = dir.path().join("h.csv");
    std::fs::write(&hess, "-1,0\n0,-1\n").unwrap();
    let precond = format!("neg-hessian:{}", p(&hess));
    let a = compress(&px, &ps, &dir.path().join("a.csv"), &["--method", "sc", "--m", "10"]);
    let b = compress(&px, &ps, &dir.path().join("b.csv"), &["--method", "sc", "--m", "10", "--precond", &precond]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(b.code, 0, "{}", b.stderr);
    assert_eq!(a.json["mmd_sq"], b.json["mmd_sq"]);

    let r = compress(&px, &ps, &dir.path().join("c.csv"), &["--method", "sc", "--m", "10", "--precond", p(&hess)]);
    assert_eq!(r.code, 2, "a negative definite M is rejected");
    assert!(r.stderr.contains("precond"), "{}", r.stderr);
}

#[test]
fn diag_curve_is_non_increasing() {
    let dir = TempDir::new().unwrap();
    let (px, ps) = simulate(&dir, "iid-target", 512, 2, 7);
    let r = dbc(&["diag", "--points", p(&px), "--scores", p(&ps)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let curve: Vec<f64> = r.json["rpc_residual_curve"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["residual"].as_f64().unwrap())
        .collect();
    assert_eq!(curve.len(), 7);
    assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.json["kernel_radius"].as_f64().unwrap() > 0.0);
}
