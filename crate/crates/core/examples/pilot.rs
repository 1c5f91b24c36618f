//! Pilot timings and MMD values used to calibrate the acceptance thresholds.
//!
//! `cargo run --release -p dbc-core --example pilot [section]`

use std::time::Instant;

use dbc_core::kernel::{median_bandwidth, BaseKernelSpec, KernelFamily, PointSet, Preconditioner, ScoreSet, SteinKernel};
use dbc_core::lowrank::{low_rank_debias, LdParams};
use dbc_core::metrics::mmd_sq;
use dbc_core::pipelines::{full_debias_oracle, lskt, skt, standard_thin, stein_cholesky, stein_recombination, LsktParams, DEFAULT_DELTA};
use dbc_core::simulate::{simulate, Scenario};
use dbc_core::kernel::materialize;
use dbc_core::WeightVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stein(points: PointSet, scores: ScoreSet, family: KernelFamily) -> SteinKernel {
    let d = points.dim();
    let sigma_sq = median_bandwidth(&points, &Preconditioner::identity(d), 1000).unwrap();
    SteinKernel::new(points, scores, BaseKernelSpec::new(family, sigma_sq).unwrap(), Preconditioner::identity(d)).unwrap()
}

fn biased(n: usize, seed: u64) -> SteinKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, s) = simulate(Scenario::IidOfftarget { shift: 2.0 }, n, 1, &mut rng).unwrap();
    stein(x, s, KernelFamily::Imq)
}

fn random_multiset(n: usize, m: usize, rng: &mut ChaCha8Rng) -> WeightVector {
    let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    WeightVector::from_indices(n, &idx).unwrap()
}

fn main() {
    let section = std::env::args().nth(1).unwrap_or_default();
    let run = |s: &str| section.is_empty() || section == s;

    if run("a2") {
        for n in [1024usize, 4096] {
            let m = (n as f64).sqrt() as usize;
            for seed in 0..5 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (x, s) = simulate(Scenario::IidTarget, n, 2, &mut rng).unwrap();
                let k = stein(x, s, KernelFamily::Gaussian);
                let t = Instant::now();
                let w = skt(&k, m, DEFAULT_DELTA, &mut rng).unwrap();
                let skt_mmd = mmd_sq(&k, w.values()).unwrap().sqrt();
                let rnd = mmd_sq(&k, random_multiset(n, m, &mut rng).values()).unwrap().sqrt();
                println!("a2 n={n} seed={seed} skt={skt_mmd:.5} random={rnd:.5} {:?}", t.elapsed());
            }
        }
    }

    if run("a3") {
        let k = biased(4096, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Instant::now();
        let ld = low_rank_debias(&k, LdParams::with_defaults(64, 4096), &mut rng).unwrap();
        let uni = mmd_sq(&k, WeightVector::uniform(4096).values()).unwrap().sqrt();
        println!(
            "a3 n=4096 ld={:.5} uniform={uni:.5} {:?} rounds={:?}",
            mmd_sq(&k, ld.weights.values()).unwrap().sqrt(),
            t.elapsed(),
            ld.rounds
        );
        let sub = standard_thin(4096, 1024);
        let ks = stein(k.points().select(&sub).unwrap(), k.scores().select(&sub).unwrap(), KernelFamily::Imq);
        let t = Instant::now();
        let dense = materialize(&ks, &(0..1024).collect::<Vec<_>>());
        let oracle = full_debias_oracle(&dense, 100_000).unwrap();
        let o = mmd_sq(&ks, &oracle).unwrap().sqrt();
        println!("a3 oracle n=1024 mmd={o:.5} {:?}", t.elapsed());
        for r in [32usize, 64, 128] {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let ld = low_rank_debias(&ks, LdParams::with_defaults(r, 1024), &mut rng).unwrap();
            println!("a3 sub ld r={r} mmd={:.5}", mmd_sq(&ks, ld.weights.values()).unwrap().sqrt());
        }
    }

    if run("a5") {
        for seed in 0..5 {
            let k = biased(1024, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let t = Instant::now();
            let a = mmd_sq(&k, skt(&k, 32, DEFAULT_DELTA, &mut rng).unwrap().values()).unwrap().sqrt();
            let b = mmd_sq(&k, stein_recombination(&k, 24, None, &mut rng).unwrap().values()).unwrap().sqrt();
            let c = mmd_sq(&k, stein_cholesky(&k, 24, None, &mut rng).unwrap().values()).unwrap().sqrt();
            println!("a5 seed={seed} skt32={a:.5} sr={b:.5} sc={c:.5} {:?}", t.elapsed());
        }
    }

    if run("a6") {
        for seed in 0..5 {
            let k = biased(4096, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let params = LsktParams {
                ld: LdParams { rank: 64, steps: 7 * 64, rounds: 3 },
                oversampling: 4,
                delta: DEFAULT_DELTA,
            };
            let t = Instant::now();
            let l = mmd_sq(&k, lskt(&k, params, &mut rng).unwrap().values()).unwrap().sqrt();
            let tl = t.elapsed();
            let s = mmd_sq(&k, skt(&k, 64, DEFAULT_DELTA, &mut rng).unwrap().values()).unwrap().sqrt();
            println!("a6 seed={seed} lskt={l:.5} ({tl:?}) skt={s:.5} total {:?}", t.elapsed());
        }
        let k = biased(1 << 16, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = LsktParams {
            ld: LdParams { rank: 64, steps: 7 * 64, rounds: 3 },
            oversampling: 4,
            delta: DEFAULT_DELTA,
        };
        let t = Instant::now();
        let w = lskt(&k, params, &mut rng).unwrap();
        println!("a6 n=65536 lskt nnz={} {:?}", w.nnz(), t.elapsed());
    }

    if run("a10") {
        let step: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.5);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 << 14;
            let (x, s) = simulate(Scenario::MalaBurnin { start: 10.0, step }, n, 2, &mut rng).unwrap();
            let k = stein(x, s, KernelFamily::Imq);
            let norm = |i: usize| k.points().row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let t = Instant::now();
            let w = skt(&k, 64, DEFAULT_DELTA, &mut rng).unwrap();
            let a: f64 = w.expand_indices().unwrap().iter().map(|&i| norm(i)).sum::<f64>() / 64.0;
            let b: f64 = standard_thin(n, 64).iter().map(|&i| norm(i)).sum::<f64>() / 64.0;
            println!("a10 seed={seed} skt_norm={a:.4} thin_norm={b:.4} {:?}", t.elapsed());
        }
    }
}
