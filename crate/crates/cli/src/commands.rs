use std::path::{Path, PathBuf};
use std::time::Instant;

use dbc_core::greedy::stein_thinning;
use dbc_core::io::{read_coreset, read_matrix, write_coreset, write_matrix, MatrixFormat};
use dbc_core::kernel::median_bandwidth;
use dbc_core::lowrank::{weighted_rpcholesky, LdParams};
use dbc_core::metrics::{energy_distance, kernel_radius, mmd_sq, point_radius};
use dbc_core::pipelines::{lskt, skt, standard_thin, LsktParams, Session};
use dbc_core::simulate::Scenario;
use dbc_core::{
    BaseKernelSpec, DenseMatrix, Error, KernelFamily, KernelOracle, PointSet, Preconditioner, ScoreSet, SteinKernel,
    WeightKind, WeightVector,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{CompressArgs, DiagArgs, Family, Format, InputArgs, KernelArgs, Method, MetricsArgs, SimulateArgs};

pub const SCHEMA: u32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

/// Tags a library error with the input it came from.
fn ctx(field: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError {
        code: if e.is_input_error() { 2 } else { 3 },
        message: format!("{field}: {e}"),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_points(path: &Path, field: &'static str) -> CliResult<PointSet> {
    let m = read_matrix(path).map_err(ctx(field))?;
    let (n, d) = (m.rows(), m.cols());
    PointSet::new(m.into_vec(), n, d).map_err(ctx(field))
}

fn load_inputs(input: &InputArgs) -> CliResult<(PointSet, ScoreSet)> {
    let points = load_points(&input.points, "points")?;
    let s = read_matrix(&input.scores).map_err(ctx("scores"))?;
    if (s.rows(), s.cols()) != (points.len(), points.dim()) {
        return Err(CliError::input(format!(
            "scores: expected {}x{} to match points, got {}x{}",
            points.len(),
            points.dim(),
            s.rows(),
            s.cols()
        )));
    }
    let (n, d) = (s.rows(), s.cols());
    let scores = ScoreSet::new(s.into_vec(), n, d).map_err(ctx("scores"))?;
    Ok((points, scores))
}

fn preconditioner(spec: &str, d: usize) -> CliResult<Preconditioner> {
    if spec == "identity" {
        return Ok(Preconditioner::identity(d));
    }
    let (path, negate) = match spec.strip_prefix("neg-hessian:") {
        Some(p) => (p, true),
        None => (spec, false),
    };
    let mut m: DenseMatrix = read_matrix(Path::new(path)).map_err(ctx("precond"))?;
    if (m.rows(), m.cols()) != (d, d) {
        return Err(CliError::input(format!("precond: expected {d}x{d}, got {}x{}", m.rows(), m.cols())));
    }
    if negate {
        m.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
    }
    Preconditioner::new(m).map_err(|e| CliError::input(format!("precond: {e}")))
}

fn sigma_sq(spec: &str, points: &PointSet, precond: &Preconditioner) -> CliResult<f64> {
    if spec == "median" {
        return median_bandwidth(points, precond, 1000).map_err(ctx("sigma"));
    }
    match spec.parse::<f64>() {
        Ok(s) if s > 0.0 && s.is_finite() => Ok(s * s),
        _ => Err(CliError::input(format!("sigma: expected `median` or a positive number, got {spec:?}"))),
    }
}

struct Setup {
    kernel: SteinKernel,
    sigma_sq: f64,
}

fn build_kernel(points: PointSet, scores: ScoreSet, args: &KernelArgs) -> CliResult<Setup> {
    let precond = preconditioner(&args.precond, points.dim())?;
    let sigma_sq = sigma_sq(&args.sigma, &points, &precond)?;
    let family = match args.kernel {
        Family::Imq => KernelFamily::Imq,
        Family::Gaussian => KernelFamily::Gaussian,
    };
    let base = BaseKernelSpec::new(family, sigma_sq).map_err(ctx("sigma"))?;
    let kernel = SteinKernel::new(points, scores, base, precond).map_err(ctx("points"))?;
    Ok(Setup { kernel, sigma_sq })
}

fn kind_name(w: &WeightVector) -> &'static str {
    match w.kind() {
        WeightKind::EqualMultiset(_) => "equal_multiset",
        WeightKind::Simplex => "simplex",
        WeightKind::ConstantPreserving => "constant_preserving",
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::St => "st",
        Method::Skt => "skt",
        Method::Lskt => "lskt",
        Method::Sr => "sr",
        Method::Lsr => "lsr",
        Method::Sc => "sc",
        Method::Lsc => "lsc",
    }
}

fn kernel_json(args: &KernelArgs, sigma_sq: f64) -> Value {
    json!({
        "family": match args.kernel { Family::Imq => "imq", Family::Gaussian => "gaussian" },
        "sigma": args.sigma,
        "sigma_sq": sigma_sq,
        "precond": args.precond,
    })
}

pub fn compress(a: &CompressArgs) -> CliResult<Value> {
    let (points, scores) = load_inputs(&a.input)?;
    let n = points.len();
    let keep: Vec<usize> = match a.n0 {
        Some(0) => return Err(CliError::input("n0: must be at least 1")),
        Some(n0) if n0 < n => standard_thin(n, n0),
        _ => (0..n).collect(),
    };
    let setup = build_kernel(points, scores, &a.kernel)?;
    let full = &setup.kernel;
    let used = SteinKernel::new(
        full.points().select(&keep).map_err(ctx("n0"))?,
        full.scores().select(&keep).map_err(ctx("n0"))?,
        *full.base(),
        full.preconditioner().clone(),
    )
    .map_err(ctx("points"))?;
    let n_used = keep.len();

    let ld = LdParams {
        rank: a.rank.unwrap_or(a.m),
        steps: a
            .amd_steps
            .unwrap_or_else(|| LdParams::with_defaults(1, n_used).steps),
        rounds: a.rounds,
    };
    let low_rank = matches!(a.method, Method::Lskt | Method::Lsr | Method::Lsc).then_some(ld);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let start = Instant::now();
    let session = Session::new(&used);
    let w = match a.method {
        Method::St => stein_thinning(&used, a.m).map(|(_, w)| w),
        Method::Skt => skt(&used, a.m, a.delta, &mut rng),
        Method::Lskt => lskt(
            &used,
            LsktParams {
                ld,
                oversampling: a.oversample,
                delta: a.delta,
            },
            &mut rng,
        ),
        Method::Sr | Method::Lsr => session.stein_recombination(a.m, low_rank, &mut rng),
        Method::Sc | Method::Lsc => session.stein_cholesky(a.m, low_rank, &mut rng),
    }
    .map_err(ctx("method"))?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut weights = vec![0.0; n];
    for (&i, &v) in keep.iter().zip(w.values()) {
        weights[i] = v;
    }
    let mmd_sq = mmd_sq(full, &weights).map_err(ctx("coreset"))?;
    write_coreset(&a.out, &weights).map_err(ctx("out"))?;
    let report = json!({
        "schema": SCHEMA,
        "command": "compress",
        "method": method_name(a.method),
        "n": n,
        "n_used": n_used,
        "d": full.dim(),
        "support_size": w.nnz(),
        "weight_kind": kind_name(&w),
        "mmd_sq": mmd_sq,
        "mmd": mmd_sq.sqrt(),
        "wall_ms": wall_ms,
        "seed": a.seed,
        "params": {
            "m": a.m,
            "rank": low_rank.map(|p| p.rank),
            "amd_steps": low_rank.map(|p| p.steps),
            "rounds": low_rank.map(|p| p.rounds),
            "oversample": a.oversample,
            "delta": a.delta,
            "n0": a.n0,
            "kernel": kernel_json(&a.kernel, setup.sigma_sq),
        },
        "coreset": a.out.display().to_string(),
    });
    if let Some(path) = &a.json {
        let text = serde_json::to_string_pretty(&report).expect("JSON values always serialize");
        std::fs::write(path, text).map_err(|e| ctx("json")(e.into()))?;
    }
    Ok(report)
}

pub fn metrics(a: &MetricsArgs) -> CliResult<Value> {
    let (points, scores) = load_inputs(&a.input)?;
    let n = points.len();
    let setup = build_kernel(points, scores, &a.kernel)?;
    let w = read_coreset(&a.coreset, n).map_err(ctx("coreset"))?;
    let mmd_sq = mmd_sq(&setup.kernel, &w).map_err(ctx("coreset"))?;
    let mut report = json!({
        "schema": SCHEMA,
        "command": "metrics",
        "n": n,
        "support_size": w.iter().filter(|&&v| v != 0.0).count(),
        "mmd_sq": mmd_sq,
        "mmd": mmd_sq.sqrt(),
        "kernel": kernel_json(&a.kernel, setup.sigma_sq),
    });
    if let Some(path) = &a.reference {
        let y = load_points(path, "reference")?;
        if y.dim() != setup.kernel.dim() {
            return Err(CliError::input(format!(
                "reference: expected dimension {}, got {}",
                setup.kernel.dim(),
                y.dim()
            )));
        }
        let v = vec![1.0 / y.len() as f64; y.len()];
        let ed = energy_distance(setup.kernel.points(), &w, &y, &v).map_err(ctx("coreset"))?;
        report["energy_distance"] = json!(ed);
    }
    Ok(report)
}

fn prefixed(out: &Path, what: &str, format: Format) -> PathBuf {
    let ext = match format {
        Format::Csv => "csv",
        Format::Binary => "dbcm",
    };
    PathBuf::from(format!("{}.{what}.{ext}", out.display()))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<Value> {
    let scenario: Scenario = a.scenario.parse().map_err(ctx("scenario"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (x, s) = dbc_core::simulate::simulate(scenario, a.n, a.d, &mut rng).map_err(ctx("n"))?;
    let format = match a.format {
        Format::Csv => MatrixFormat::Csv,
        Format::Binary => MatrixFormat::Binary,
    };
    let px = prefixed(&a.out, "points", a.format);
    let ps = prefixed(&a.out, "scores", a.format);
    let as_matrix = |data: &[f64]| DenseMatrix::from_vec(a.n, a.d, data.to_vec()).expect("simulated shape");
    write_matrix(&px, &as_matrix(x.as_slice()), format).map_err(ctx("out"))?;
    write_matrix(&ps, &as_matrix(s.as_slice()), format).map_err(ctx("out"))?;
    Ok(json!({
        "schema": SCHEMA,
        "command": "simulate",
        "scenario": scenario.to_string(),
        "n": a.n,
        "d": a.d,
        "seed": a.seed,
        "points": px.display().to_string(),
        "scores": ps.display().to_string(),
    }))
}

pub fn diag(a: &DiagArgs) -> CliResult<Value> {
    let (points, scores) = load_inputs(&a.input)?;
    let n = points.len();
    let setup = build_kernel(points, scores, &a.kernel)?;
    let k = &setup.kernel;
    let max_rank = a.max_rank.unwrap_or(64).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let lr = weighted_rpcholesky(k, &vec![1.0 / n as f64; n], max_rank, &mut rng).map_err(ctx("points"))?;
    // Residual trace after the first r columns, for r = 1, 2, 4, …
    let f = lr.factor();
    let mut residual: f64 = k.diag().iter().sum();
    let mut curve = Vec::new();
    let mut next = 1;
    for c in 0..max_rank {
        residual -= (0..n).map(|i| f[(i, c)] * f[(i, c)]).sum::<f64>();
        residual = residual.max(0.0);
        if c + 1 == next || c + 1 == max_rank {
            curve.push(json!({ "rank": c + 1, "residual": residual }));
            next *= 2;
        }
    }
    Ok(json!({
        "schema": SCHEMA,
        "command": "diag",
        "n": n,
        "d": k.dim(),
        "kernel_radius": kernel_radius(k).map_err(ctx("points"))?,
        "point_radius": point_radius(k.points(), k.preconditioner()).map_err(ctx("points"))?,
        "columns_used": lr.columns_used(),
        "rpc_residual_curve": curve,
        "kernel": kernel_json(&a.kernel, setup.sigma_sq),
    }))
}
