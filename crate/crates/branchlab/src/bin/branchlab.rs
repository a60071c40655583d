//! Command-line laboratory for Markov branching trees: enumeration, count
//! tables, samplers, exact laws, the hypothesis-(H) probe, cross-model
//! scaling comparisons, the uniform-tree coupling, and the crude continuum
//! approximation.
//!
//! Data goes to standard output (or files under `--out`); diagnostics and
//! errors go to standard error, errors as single-line JSON. Exit codes:
//! 0 success, 2 configuration error, 3 resource-cap breach.

use branchlab::fragmentation::{approx_continuum_tree, nu2, point_mass, DislocationMeasure, MassPartition};
use branchlab::polya::{
    natural_coupling, otter_counts, scaling_constants, uniform_law, uniform_tree, CountTables,
};
use branchlab::rng::stream;
use branchlab::samplers::{exact_P_law, exact_Q_law, sample_P, sample_Q, sample_vertex_depth};
use branchlab::splitlaws::{
    alpha_theta_law, consistent_law, gw_law, probe_h, tabulated_from_json, OffspringLaw,
    ProbeMode, PropexempleLaw, SplitLaw,
};
use branchlab::stats::ks_two_sample;
use branchlab::trees::{enumerate_trees, tree_stats, MaxDegree, Tree};
use clap::{Parser, Subcommand};
use rand::RngCore;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

const AFTER_HELP: &str = "\
CSV SCHEMAS
  counts     n,t,t_tilde,log_t           (exact columns empty past the exact range)
             followed by one JSON line with the scaling-constant record
  sample     rep,n_vertices,height,n_leaves,root_split   (split parts space-separated)
  exact-law  JSON lines {\"tree\": nested arrays, \"prob\": float}
  probe-h    family,n,gamma,estimate,stderr,mode
  scaling    model,rep,depth,rescaled     followed by one JSON KS report line
  coupling   j_star,count                 followed by one JSON report line
  continuum  rep,height,mean_leaf_depth,n_leaves

FAMILY SPECS (--family takes inline JSON or a path to a JSON file)
  {\"family\":\"gw\",\"xi\":\"binary\"}                     conditioned Galton-Watson
  {\"family\":\"gw\",\"xi\":\"poisson\"}
  {\"family\":\"gw\",\"xi\":{\"heavy_tail\":{\"alpha\":1.5,\"c\":0.3}}}
  {\"family\":\"alpha_theta\",\"alpha\":0.5,\"theta\":0.5}
  {\"family\":\"uniform\",\"m\":\"inf\"}                    uniform unordered trees
  {\"family\":\"uniform\",\"m\":2}
  {\"family\":\"propexemple\",\"nu\":\"brownian\",\"gamma\":1.0}
  {\"family\":\"consistent\",\"nu\":\"brownian\",\"gamma\":0.5}
  {\"family\":\"tabulated\",\"table\":{...},\"gamma\":1.0,\"leaf\":true}

NU SPECS
  \"brownian\"                                   the binary Brownian measure
  {\"point_mass\":[0.5,0.5]}
  {\"alpha_theta\":{\"alpha\":0.5,\"theta\":0.5}}

The master seed comes from --seed or the BRANCHLAB_SEED environment
variable; replicate r uses the derived stream (seed, r), so outputs are
byte-identical for a fixed configuration regardless of --workers.";

#[derive(Parser)]
#[command(name = "branchlab", about = "Markov branching trees laboratory", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List all canonical trees with n vertices and degree bound m ("inf" or an integer), one JSON line each.
    Enumerate { n: usize, m: String },
    /// Otter count tables for degree bound m up to size N, plus the scaling-constant record.
    Counts {
        m: String,
        n_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stream tree statistics from a split-law family (or uniform trees).
    Sample {
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pmf of the Markov branching tree law at size n (n ≤ 9).
    ExactLaw {
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hypothesis-(H) probe a_n Σ q_n(λ)(1−λ₁/n)f(λ/n) with f ≡ 1 over an n grid.
    ProbeH {
        #[arg(long)]
        family: String,
        /// Inclusive grid "a:b:step".
        #[arg(long)]
        n_grid: String,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Probe mode: auto | exact | mc.
        #[arg(long, default_value = "auto")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv (default) or svg (trend plot, requires --out).
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Rescaled uniform-vertex depths: conditioned binary Galton-Watson (2/√n)
    /// versus binary uniform unordered trees (1/(ĉ₂√n)), with a KS report.
    Scaling {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Couple uniform trees with the independent-subtree approximation:
    /// j* histogram, marginal TV (small n), height-difference audit.
    Coupling {
        #[arg(long)]
        m: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Statistics of the crude continuum-tree approximation.
    Continuum {
        #[arg(long)]
        nu: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// Failure plumbing
// ---------------------------------------------------------------------------

struct Fail {
    code: i32,
    payload: Value,
}

fn config_err(message: impl Into<String>) -> Fail {
    Fail {
        code: 2,
        payload: json!({"error": "config", "message": message.into()}),
    }
}

fn resource_err(message: impl Into<String>) -> Fail {
    Fail {
        code: 3,
        payload: json!({"error": "resource", "message": message.into()}),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let msg = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            eprintln!("{}", json!({"error": "config", "message": msg}));
            std::process::exit(2);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("{}", f.payload);
            std::process::exit(f.code);
        }
    }
}

// ---------------------------------------------------------------------------
// Shared parsing
// ---------------------------------------------------------------------------

fn parse_m(s: &str) -> Result<Option<usize>, Fail> {
    if s == "inf" {
        return Ok(None);
    }
    let m: usize = s
        .parse()
        .map_err(|_| config_err(format!("bad value for key: m (got {s:?}, want \"inf\" or an integer ≥ 2)")))?;
    if m < 2 {
        return Err(config_err("bad value for key: m (degree bound must be ≥ 2)"));
    }
    Ok(Some(m))
}

fn resolve_seed(seed: Option<u64>) -> Result<u64, Fail> {
    if let Some(s) = seed {
        return Ok(s);
    }
    if let Ok(v) = std::env::var("BRANCHLAB_SEED") {
        return v
            .parse()
            .map_err(|_| config_err("bad value for key: BRANCHLAB_SEED (not an integer)"));
    }
    Err(config_err("missing key: seed (use --seed or BRANCHLAB_SEED)"))
}

fn parse_grid(s: &str) -> Result<Vec<usize>, Fail> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err("bad value for key: n-grid (want a:b:step)"));
    }
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
    let nums = nums.map_err(|_| config_err("bad value for key: n-grid (non-integer bound)"))?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if step == 0 || a == 0 || b < a {
        return Err(config_err("bad value for key: n-grid (need a ≤ b, step ≥ 1)"));
    }
    Ok((a..=b).step_by(step).collect())
}

/// Table caps per degree bound; breaching them is a resource error (3).
fn build_tables(m: Option<usize>, n_max: usize) -> Result<Arc<CountTables>, Fail> {
    let cap = match m {
        None => 4096,
        Some(2) => 16384,
        Some(_) => 450,
    };
    if n_max > cap {
        return Err(resource_err(format!(
            "count tables for m={} stop at n = {cap} (requested {n_max})",
            m.map_or("inf".to_string(), |v| v.to_string())
        )));
    }
    Ok(Arc::new(otter_counts(m, n_max)))
}

fn parse_nu(v: &Value) -> Result<DislocationMeasure, Fail> {
    match v {
        Value::String(s) if s == "brownian" => Ok(nu2()),
        Value::Object(map) => {
            if let Some(pm) = map.get("point_mass") {
                let arr = pm
                    .as_array()
                    .ok_or_else(|| config_err("bad value for key: point_mass (want an array)"))?;
                let mut masses = Vec::new();
                for x in arr {
                    masses.push(
                        x.as_f64()
                            .ok_or_else(|| config_err("bad value for key: point_mass (non-number)"))?,
                    );
                }
                Ok(point_mass(MassPartition::new(masses)))
            } else if let Some(at) = map.get("alpha_theta") {
                let alpha = at
                    .get("alpha")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| config_err("missing key: alpha_theta.alpha"))?;
                let theta = at
                    .get("theta")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| config_err("missing key: alpha_theta.theta"))?;
                Ok(branchlab::fragmentation::nu_alpha_theta(alpha, theta))
            } else {
                Err(config_err("bad value for key: nu (unknown measure spec)"))
            }
        }
        _ => Err(config_err("bad value for key: nu (unknown measure spec)")),
    }
}

fn parse_nu_str(s: &str) -> Result<DislocationMeasure, Fail> {
    let v: Value = serde_json::from_str(s)
        .map_err(|_| config_err("bad value for key: nu (not valid JSON)"))?;
    parse_nu(&v)
}

enum Family {
    Law(Arc<dyn SplitLaw>),
    Uniform(Arc<CountTables>),
}

impl Family {
    fn law(&self) -> Arc<dyn SplitLaw> {
        match self {
            Family::Law(q) => q.clone(),
            Family::Uniform(t) => Arc::new(uniform_law(t.clone())),
        }
    }
}

/// Parse a family spec (inline JSON or a path); `need_n` sizes the tables of
/// table-backed families.
fn parse_family(spec: &str, need_n: usize) -> Result<Family, Fail> {
    let text = if spec.trim_start().starts_with(['{', '[']) {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec)
            .map_err(|e| config_err(format!("bad value for key: family (cannot read {spec}: {e})")))?
    };
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("bad value for key: family (invalid JSON: {e})")))?;
    let name = v
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| config_err("missing key: family"))?;
    match name {
        "gw" => {
            let xi = match v.get("xi").ok_or_else(|| config_err("missing key: xi"))? {
                Value::String(s) if s == "binary" => OffspringLaw::binary(),
                Value::String(s) if s == "poisson" => OffspringLaw::poisson(),
                Value::Object(map) => {
                    let ht = map
                        .get("heavy_tail")
                        .ok_or_else(|| config_err("bad value for key: xi (unknown offspring law)"))?;
                    let alpha = ht
                        .get("alpha")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| config_err("missing key: xi.heavy_tail.alpha"))?;
                    let c = ht
                        .get("c")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| config_err("missing key: xi.heavy_tail.c"))?;
                    OffspringLaw::heavy_tail(alpha, c)
                }
                _ => return Err(config_err("bad value for key: xi (unknown offspring law)")),
            };
            let n_max = v
                .get("n_max")
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .unwrap_or(0)
                .max(need_n.max(2));
            Ok(Family::Law(Arc::new(gw_law(xi, n_max))))
        }
        "alpha_theta" => {
            let alpha = v
                .get("alpha")
                .and_then(Value::as_f64)
                .ok_or_else(|| config_err("missing key: alpha"))?;
            let theta = v
                .get("theta")
                .and_then(Value::as_f64)
                .ok_or_else(|| config_err("missing key: theta"))?;
            Ok(Family::Law(Arc::new(alpha_theta_law(alpha, theta))))
        }
        "uniform" => {
            let m = match v.get("m").ok_or_else(|| config_err("missing key: m"))? {
                Value::String(s) => parse_m(s)?,
                Value::Number(num) => parse_m(&num.to_string())?,
                _ => return Err(config_err("bad value for key: m")),
            };
            let n_max = v
                .get("n_max")
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .unwrap_or(0)
                .max(need_n.max(2));
            Ok(Family::Uniform(build_tables(m, n_max)?))
        }
        "propexemple" => {
            let nu = parse_nu(v.get("nu").ok_or_else(|| config_err("missing key: nu"))?)?;
            let gamma = v
                .get("gamma")
                .and_then(Value::as_f64)
                .ok_or_else(|| config_err("missing key: gamma"))?;
            Ok(Family::Law(Arc::new(PropexempleLaw::new(nu, gamma))))
        }
        "consistent" => {
            let nu = parse_nu(v.get("nu").ok_or_else(|| config_err("missing key: nu"))?)?;
            let gamma = v
                .get("gamma")
                .and_then(Value::as_f64)
                .ok_or_else(|| config_err("missing key: gamma"))?;
            let tol = v.get("tol").and_then(Value::as_f64).unwrap_or(1e-10);
            let n_max = need_n.max(2);
            Ok(Family::Law(Arc::new(consistent_law(&nu, n_max, tol, gamma))))
        }
        "tabulated" => tabulated_from_json(&v)
            .map(|law| Family::Law(Arc::new(law) as Arc<dyn SplitLaw>))
            .map_err(|e| config_err(format!("bad value for key: table ({e})"))),
        other => Err(config_err(format!(
            "bad value for key: family (unknown family {other:?})"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

/// Write `content` to `<out>/<name>` when an output directory is set,
/// otherwise to standard output.
fn emit(out: &Option<PathBuf>, name: &str, content: &str) -> Result<(), Fail> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| config_err(format!("cannot create --out directory: {e}")))?;
            std::fs::write(dir.join(name), content)
                .map_err(|e| config_err(format!("cannot write {name}: {e}")))?;
            eprintln!("{}", json!({"wrote": dir.join(name)}));
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Fail> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| config_err(format!("bad value for key: workers ({e})")))?;
            Ok(pool.install(f))
        }
    }
}

/// Minimal SVG polyline plot with embedded numeric annotations.
fn line_svg(title: &str, points: &[(f64, f64)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (xmin, xmax) = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (ymin, ymax) = (
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let sx = |x: f64| pad + (x - xmin) / (xmax - xmin).max(1e-300) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - ymin) / (ymax - ymin).max(1e-300) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>", w / 2.0);
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad
    );
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad
    );
    let path: Vec<String> = points.iter().map(|&(x, y)| format!("{},{}", sx(x), sy(y))).collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>",
        path.join(" ")
    );
    for &(x, y) in points {
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"steelblue\"/><text x=\"{}\" y=\"{}\" font-size=\"9\">{x},{y:.6}</text>",
            sx(x),
            sy(y),
            sx(x) + 4.0,
            sy(y) - 4.0
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::Enumerate { n, m } => cmd_enumerate(n, &m),
        Cmd::Counts { m, n_max, out } => cmd_counts(&m, n_max, &out),
        Cmd::Sample { family, n, reps, seed, workers, out } => {
            cmd_sample(&family, n, reps, seed, workers, &out)
        }
        Cmd::ExactLaw { family, n, out } => cmd_exact_law(&family, n, &out),
        Cmd::ProbeH { family, n_grid, reps, seed, mode, out, format } => {
            cmd_probe_h(&family, &n_grid, reps, seed, &mode, &out, &format)
        }
        Cmd::Scaling { n, reps, seed, workers, out } => cmd_scaling(n, reps, seed, workers, &out),
        Cmd::Coupling { m, n, reps, seed, workers, out } => {
            cmd_coupling(&m, n, reps, seed, workers, &out)
        }
        Cmd::Continuum { nu, gamma, n, reps, seed, out } => {
            cmd_continuum(&nu, gamma, n, reps, seed, &out)
        }
    }
}

fn cmd_enumerate(n: usize, m: &str) -> Result<(), Fail> {
    if n == 0 {
        return Err(config_err("bad value for key: n (need n ≥ 1)"));
    }
    if n > 20 {
        return Err(resource_err("enumeration stops at n = 20"));
    }
    let max_deg = match parse_m(m)? {
        None => MaxDegree::Unbounded,
        Some(mm) => MaxDegree::Bounded(mm),
    };
    for t in enumerate_trees(n, max_deg) {
        println!("{}", t.to_json());
    }
    Ok(())
}

fn cmd_counts(m: &str, n_max: usize, out: &Option<PathBuf>) -> Result<(), Fail> {
    if n_max == 0 {
        return Err(config_err("bad value for key: n_max (need ≥ 1)"));
    }
    let m = parse_m(m)?;
    let tables = build_tables(m, n_max)?;
    let mut csv = String::from("n,t,t_tilde,log_t\n");
    for n in 1..=n_max {
        if n <= tables.exact_n() {
            let _ = writeln!(
                csv,
                "{n},{},{},{:.12}",
                tables.t(n).to_str_radix(10),
                tables.t_tilde(n).to_str_radix(10),
                tables.log_t(n)
            );
        } else {
            let _ = writeln!(csv, "{n},,,{:.12}", tables.log_t(n));
        }
    }
    emit(out, "counts.csv", &csv)?;
    if n_max >= 20 {
        let c = scaling_constants(&tables);
        let mut rec = serde_json::to_value(&c).expect("constants serialize");
        rec["kappa_psi"] = json!(c.kappa * c.psi_partial);
        let line = format!("{rec}\n");
        emit(out, "constants.json", &line)?;
    }
    Ok(())
}

fn sample_tree(family: &Family, n: usize, rng: &mut dyn RngCore) -> Tree {
    match family {
        Family::Uniform(tables) => uniform_tree(tables, n, rng),
        Family::Law(q) => {
            if q.is_leaf_model() {
                sample_P(q.as_ref(), n, rng)
            } else {
                sample_Q(q.as_ref(), n, rng)
            }
        }
    }
}

fn cmd_sample(
    family: &str,
    n: usize,
    reps: usize,
    seed: Option<u64>,
    workers: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<(), Fail> {
    let seed = resolve_seed(seed)?;
    let family = parse_family(family, n)?;
    let rows: Vec<String> = with_pool(workers, || {
        use rayon::prelude::*;
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream(seed, rep as u64);
                let t = sample_tree(&family, n, &mut rng);
                let s = tree_stats(&t);
                let split = s
                    .root_split
                    .map(|l| {
                        l.parts()
                            .iter()
                            .map(ToString::to_string)
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .unwrap_or_default();
                format!("{rep},{},{},{},{split}", s.n_vertices, s.height, s.n_leaves)
            })
            .collect()
    })?;
    let mut csv = String::from("rep,n_vertices,height,n_leaves,root_split\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    emit(out, "samples.csv", &csv)
}

fn cmd_exact_law(family: &str, n: usize, out: &Option<PathBuf>) -> Result<(), Fail> {
    if n == 0 {
        return Err(config_err("bad value for key: n (need n ≥ 1)"));
    }
    if n > 9 {
        return Err(resource_err("exact-law stops at n = 9"));
    }
    let family = parse_family(family, n)?;
    let law = family.law();
    let table = if law.is_leaf_model() {
        exact_P_law(law.as_ref(), n)
    } else {
        exact_Q_law(law.as_ref(), n)
    };
    let mut body = String::new();
    for (tree, prob) in &table {
        let _ = writeln!(body, "{}", json!({"tree": tree.to_json(), "prob": prob}));
    }
    emit(out, "exact_law.jsonl", &body)
}

fn cmd_probe_h(
    family: &str,
    n_grid: &str,
    reps: usize,
    seed: Option<u64>,
    mode: &str,
    out: &Option<PathBuf>,
    format: &str,
) -> Result<(), Fail> {
    let grid = parse_grid(n_grid)?;
    let mode = match mode {
        "auto" => ProbeMode::Auto,
        "exact" => ProbeMode::Exact,
        "mc" => ProbeMode::MonteCarlo,
        other => return Err(config_err(format!("bad value for key: mode (got {other:?})"))),
    };
    let need_mc = !matches!(mode, ProbeMode::Exact);
    let seed = if need_mc { resolve_seed(seed)? } else { seed.unwrap_or(0) };
    let family = parse_family(family, grid.iter().copied().max().unwrap() + 1)?;
    let law = family.law();
    let mut csv = String::from("family,n,gamma,estimate,stderr,mode\n");
    let mut points = Vec::new();
    for (i, &n) in grid.iter().enumerate() {
        let mut rng = stream(seed, i as u64);
        let r = probe_h(law.as_ref(), |_| 1.0, n, mode, reps, &mut rng);
        let _ = writeln!(
            csv,
            "{},{},{},{:.12e},{:.6e},{}",
            r.family, r.n, r.gamma, r.estimate, r.stderr, r.mode
        );
        points.push((n as f64, r.estimate));
    }
    emit(out, "probe.csv", &csv)?;
    if format == "svg" {
        if out.is_none() {
            return Err(config_err("format svg requires --out"));
        }
        emit(out, "probe.svg", &line_svg("hypothesis-(H) probe", &points))?;
    }
    Ok(())
}

fn cmd_scaling(
    n: usize,
    reps: usize,
    seed: Option<u64>,
    workers: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<(), Fail> {
    if n < 4 {
        return Err(config_err("bad value for key: n (need n ≥ 4)"));
    }
    let seed = resolve_seed(seed)?;
    // Binary Galton-Watson trees exist only at odd sizes.
    let n_gw = if n % 2 == 1 { n } else { n + 1 };
    let tables = build_tables(Some(2), n.max(20))?;
    let c2 = scaling_constants(&tables).c_m;
    let gw = Arc::new(gw_law(OffspringLaw::binary(), n_gw));
    let uni = Arc::new(uniform_law(tables));
    let (gw_depths, uni_depths): (Vec<usize>, Vec<usize>) = with_pool(workers, || {
        use rayon::prelude::*;
        let g: Vec<usize> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream(seed, rep as u64);
                sample_vertex_depth(gw.as_ref(), n_gw, &mut rng)
            })
            .collect();
        let u: Vec<usize> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream(seed, (reps + rep) as u64);
                sample_vertex_depth(uni.as_ref(), n, &mut rng)
            })
            .collect();
        (g, u)
    })?;
    let mut csv = String::from("model,rep,depth,rescaled\n");
    let mut a = Vec::with_capacity(reps);
    let mut b = Vec::with_capacity(reps);
    for (rep, &d) in gw_depths.iter().enumerate() {
        let r = d as f64 / (2.0 * (n_gw as f64).sqrt());
        let _ = writeln!(csv, "gw_binary,{rep},{d},{r:.9}");
        a.push(r);
    }
    for (rep, &d) in uni_depths.iter().enumerate() {
        let r = d as f64 / (c2 * (n as f64).sqrt());
        let _ = writeln!(csv, "uniform_m2,{rep},{d},{r:.9}");
        b.push(r);
    }
    emit(out, "scaling.csv", &csv)?;
    let ks = ks_two_sample(&a, &b);
    let report = json!({
        "n": n, "n_gw": n_gw, "reps": reps, "c2": c2,
        "ks_statistic": ks.statistic, "ks_p_value": ks.p_value,
    });
    emit(out, "scaling_report.json", &format!("{report}\n"))
}

fn cmd_coupling(
    m: &str,
    n: usize,
    reps: usize,
    seed: Option<u64>,
    workers: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<(), Fail> {
    if n < 2 {
        return Err(config_err("bad value for key: n (need n ≥ 2)"));
    }
    let seed = resolve_seed(seed)?;
    let m = parse_m(m)?;
    let tables = build_tables(m, n)?;
    let results: Vec<(usize, usize, usize, Tree)> = with_pool(workers, || {
        use rayon::prelude::*;
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream(seed, rep as u64);
                let original = uniform_tree(&tables, n, &mut rng);
                let o = natural_coupling(&tables, &original, &mut rng);
                (o.j_star, o.original.height(), o.coupled.height(), o.coupled)
            })
            .collect()
    })?;
    let mut hist: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    let mut violations = 0usize;
    for (j, h0, h1, _) in &results {
        *hist.entry(*j).or_insert(0) += 1;
        if h0.abs_diff(*h1) > 2 * j {
            violations += 1;
        }
    }
    let mut csv = String::from("j_star,count\n");
    for (j, c) in &hist {
        let _ = writeln!(csv, "{j},{c}");
    }
    emit(out, "coupling_hist.csv", &csv)?;
    // Marginal TV against the exact Markov branching law, where enumerable.
    let tv = if n <= 7 {
        let law = uniform_law(tables.clone());
        let exact = exact_Q_law(&law, n);
        let mut emp: std::collections::BTreeMap<Tree, f64> = std::collections::BTreeMap::new();
        let w = 1.0 / reps as f64;
        for (_, _, _, coupled) in &results {
            *emp.entry(coupled.clone()).or_insert(0.0) += w;
        }
        let mut diff = 0.0;
        for (t, p) in &exact {
            diff += (p - emp.get(t).copied().unwrap_or(0.0)).abs();
        }
        for (t, p) in &emp {
            if !exact.contains_key(t) {
                diff += p;
            }
        }
        Some(diff / 2.0)
    } else {
        None
    };
    let report = json!({
        "n": n, "reps": reps,
        "height_bound_violations": violations,
        "marginal_tv": tv,
    });
    emit(out, "coupling_report.json", &format!("{report}\n"))
}

fn cmd_continuum(
    nu: &str,
    gamma: f64,
    n: usize,
    reps: usize,
    seed: Option<u64>,
    out: &Option<PathBuf>,
) -> Result<(), Fail> {
    if gamma <= 0.0 {
        return Err(config_err("bad value for key: gamma (need γ > 0)"));
    }
    let seed = resolve_seed(seed)?;
    let nu = parse_nu_str(nu)?;
    let mut csv = String::from("rep,height,mean_leaf_depth,n_leaves\n");
    for rep in 0..reps {
        let mut rng = stream(seed, rep as u64);
        let et = approx_continuum_tree(&nu, gamma, n, &mut rng);
        let depths = et.leaf_depths();
        let mean = depths.iter().sum::<f64>() / depths.len() as f64;
        let _ = writeln!(
            csv,
            "{rep},{:.9},{mean:.9},{}",
            et.total_height(),
            depths.len()
        );
    }
    emit(out, "continuum.csv", &csv)
}
