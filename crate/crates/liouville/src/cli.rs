//! Command line front end. [`run`] returns the process exit status:
//! 0 on success, 2 on validation errors, 3 on numerical failures.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use liouville_core::integral::appendix_moment_integral;
use liouville_core::mollifier::MollifierSpec;
use liouville_core::punctures::{timeline_spectrum, Puncture};
use liouville_core::sphere::{series_l_max, sphere_heat_kernel_nagase, sphere_heat_kernel_series};
use liouville_core::stats::linear_fit;
use liouville_core::thresholds::{classify, moment_regularity, phase_diagram, regularity_bar};

use crate::besov::{estimate_regularity_pooled, Profile, TestFunction};
use crate::config::ExperimentConfig;
use crate::gmc::{estimate_moment_exponents, wick_exponential, ChaosSetup, MomentOptions};
use crate::heat::{covariance_at_zero, HeatKernelSpec};
use crate::io::{write_checkpoint, write_csv, write_ndjson, Provenance};
use crate::solver::{check_mode, dpd_solve, simulate_epsilon, Flavor, ModelParams, SolverConfig, ThresholdMode};
use crate::{Error, Result, TorusGrid};

/// Default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "LIOUVILLE_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "liouville", version, about = "Lattice experiments for the dynamical Liouville equation on the torus")]
pub struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML experiment configuration; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $LIOUVILLE_OUT_DIR or the working directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the regularized equation and write a trajectory checkpoint.
    Simulate(SimulateArgs),
    /// Multifractal moment exponents of GMC balls.
    Spectrum(SpectrumArgs),
    /// Besov regularity exponent of the GMC measure.
    Regularity(RegularityArgs),
    /// Q_eps(0) against log(1/eps).
    Covariance(CovarianceArgs),
    /// Moment exponents of balls on a puncture's time-line.
    Timeline(TimelineArgs),
    /// Sphere heat-kernel comparison table.
    SphereCheck(SphereArgs),
    /// Monte Carlo estimate of the singular n-point moment integral.
    Oracle(OracleArgs),
    /// Phase-diagram constants.
    Thresholds(ThresholdArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FlavorArg {
    Exp,
    Sinh,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Strict,
    Extended,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SolverArg {
    Dpd,
    Direct,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Mollifier scale (default 2 dx).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Points per spatial axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub flavor: Option<FlavorArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum, default_value = "dpd")]
    pub solver: SolverArg,
    /// Picard window (default horizon / 4).
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Moment orders; repeat the flag for several.
    #[arg(long)]
    pub q: Vec<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Time slices (default: enough for the largest radius).
    #[arg(long)]
    pub n_time: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub radii: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct RegularityArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub n_time: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CovarianceArgs {
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.125, 0.0625, 0.03125, 0.015625])]
    pub eps: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct TimelineArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Puncture coupling (puncture at the centre of the torus).
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub q: f64,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub radii: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct SphereArgs {
    #[arg(long, default_value_t = 9)]
    pub n_t: usize,
    #[arg(long, default_value_t = 25)]
    pub n_r: usize,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub json: bool,
}

/// Parses `argv` (program name first) and executes the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            // a closed pipe downstream is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{summary}");
            0
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 for validation errors, 3 for numerical-diagnostic failures.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() { 2 } else { 3 }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn execute(cli: &Cli) -> Result<String> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParameter("--threads must be >= 1".into()));
        }
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let out = out_dir(cli);
    match &cli.command {
        Command::Simulate(a) => simulate(a, cfg.as_ref(), &out),
        Command::Spectrum(a) => spectrum(a, cfg.as_ref(), &out),
        Command::Regularity(a) => regularity(a, cfg.as_ref(), &out),
        Command::Covariance(a) => covariance(a, &out),
        Command::Timeline(a) => timeline(a, cfg.as_ref(), &out),
        Command::SphereCheck(a) => sphere_check(a, &out),
        Command::Oracle(a) => oracle(a, &out),
        Command::Thresholds(a) => Ok(thresholds(a)),
    }
}

fn square_grid(n: usize, n_time: usize) -> Result<TorusGrid> {
    TorusGrid::new(n, n_time, 1.0 / (n * n) as f64)
}

fn simulate(a: &SimulateArgs, cfg: Option<&ExperimentConfig>, out: &Path) -> Result<String> {
    let base = cfg.map(|c| c.model_params());
    let mut params = base.unwrap_or_else(|| ModelParams::simple(0.0, Flavor::Exp));
    if let Some(g) = a.gamma {
        params.gamma = g;
    } else if cfg.is_none() {
        return Err(Error::InvalidParameter("--gamma is required without --config".into()));
    }
    if let Some(f) = a.flavor {
        params.flavor = match f {
            FlavorArg::Exp => Flavor::Exp,
            FlavorArg::Sinh => Flavor::Sinh,
        };
    }
    let mode = match a.mode {
        Some(ModeArg::Strict) => ThresholdMode::Strict,
        Some(ModeArg::Extended) => ThresholdMode::Extended,
        None => cfg.and_then(|c| c.run.mode).unwrap_or(ThresholdMode::Strict),
    };
    params.validate()?;
    let label = check_mode(&params, mode)?;
    let n = a.grid.or(cfg.map(|c| c.grid.n_space)).unwrap_or(64);
    let dt = cfg.and_then(|c| c.grid.dt).filter(|_| a.grid.is_none()).unwrap_or(1.0 / (n * n) as f64);
    let horizon = a.horizon.or(cfg.and_then(|c| c.run.horizon)).unwrap_or(0.1);
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let nt = (horizon / dt).round() as usize + 1;
    let grid = TorusGrid::new(n, nt, dt)?;
    let eps = a.epsilon.or(cfg.map(|c| c.noise.epsilon)).unwrap_or(2.0 / n as f64);
    let seed = a.seed.or(cfg.map(|c| c.noise.seed)).unwrap_or(1);
    let mut sc = SolverConfig::new(grid, eps, seed);
    sc.mode = mode;
    sc.window = a.window.unwrap_or(horizon / 4.0);
    liouville_core::mollifier::check_resolved(&sc.mollifier(), &grid)?;
    let w = vec![0.0; grid.slice_len()];
    let tr = match a.solver {
        SolverArg::Dpd => dpd_solve(&params, &sc, &w)?,
        SolverArg::Direct => {
            let mut tr = simulate_epsilon(&params, &sc, &w)?;
            tr.label = label;
            tr
        }
    };
    let canon = format!(
        "simulate gamma={} mu={} flavor={:?} punctures={:?} mode={mode:?} solver={:?} n={n} dt={dt} horizon={horizon} eps={eps} seed={seed} window={}",
        params.gamma, params.mu, params.flavor, params.punctures, a.solver, sc.window
    );
    let prov = Provenance::new(&canon, seed);
    let (bin, _) = write_checkpoint(&out.join("simulate"), &tr, params.gamma, eps, &prov)?;
    let last = tr.x.slice(grid.n_time() - 1);
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    let rec = json!({
        "gamma": params.gamma,
        "epsilon": eps,
        "horizon": horizon,
        "n_space": n,
        "n_time": nt,
        "solver": format!("{:?}", a.solver).to_lowercase(),
        "regime": classify(params.gamma, params.punctures.first().map(|p| p.alpha)).label(),
        "label": tr.label,
        "final_mean": mean,
        "diagnostics": tr.diagnostics,
    });
    write_ndjson(&out.join("simulate.ndjson"), &[rec], &prov)?;
    Ok(format!(
        "simulate: gamma {} eps {eps} horizon {horizon}, final mean {mean:.6}, checkpoint {}{}",
        params.gamma,
        bin.display(),
        tr.label.map(|l| format!(" [{l}]")).unwrap_or_default()
    ))
}

fn default_radii(n: usize) -> Vec<f64> {
    let mut r = vec![0.25];
    while r.len() < 5 && *r.last().unwrap() / 2.0 >= 2.0 / n as f64 {
        let x = *r.last().unwrap() / 2.0;
        r.push(x);
    }
    r
}

/// Enough slices to hold balls of radius `r0` around mid-horizon centres.
fn slices_for(n: usize, r0: f64) -> usize {
    2 * (r0 * r0 * (n * n) as f64).ceil() as usize + 32
}

fn spectrum(a: &SpectrumArgs, cfg: Option<&ExperimentConfig>, out: &Path) -> Result<String> {
    let gamma = a.gamma.or(cfg.map(|c| c.model.gamma)).ok_or_else(|| Error::InvalidParameter("--gamma is required".into()))?;
    let qs = if !a.q.is_empty() { a.q.clone() } else { cfg.and_then(|c| c.run.q_list.clone()).unwrap_or(vec![2.0]) };
    let replicas = a.replicas.or(cfg.and_then(|c| c.run.replicas)).unwrap_or(200);
    let seed = a.seed.or(cfg.map(|c| c.noise.seed)).unwrap_or(1);
    let n = a.grid.or(cfg.map(|c| c.grid.n_space)).unwrap_or(64);
    let radii = if !a.radii.is_empty() { a.radii.clone() } else { cfg.and_then(|c| c.run.radii.clone()).unwrap_or_else(|| default_radii(n)) };
    let nt = a.n_time.unwrap_or_else(|| slices_for(n, radii[0]));
    let grid = square_grid(n, nt)?;
    let eps = cfg.map(|c| c.noise.epsilon).unwrap_or(2.0 / n as f64);
    let setup = ChaosSetup { grid, mollifier: MollifierSpec::bump(eps), kernel: HeatKernelSpec::default() };
    let cases: Vec<(f64, f64)> = qs.iter().map(|&q| (gamma, q)).collect();
    let fits = estimate_moment_exponents(&setup, &cases, &radii, replicas, seed, MomentOptions::default())?;
    let canon = format!("spectrum gamma={gamma} q={qs:?} replicas={replicas} n={n} nt={nt} eps={eps} radii={radii:?} seed={seed}");
    let prov = Provenance::new(&canon, seed);
    let recs: Vec<_> = fits
        .iter()
        .map(|f| {
            let target = gamma * gamma / 2.0 * (f.q - f.q * f.q) + 4.0 * f.q;
            json!({ "fit": f, "formula": target })
        })
        .collect();
    write_ndjson(&out.join("spectrum.ndjson"), &recs, &prov)?;
    let txt: Vec<String> = fits.iter().map(|f| format!("q {}: {:.3} +- {:.3}", f.q, f.fitted_exponent, f.stderr)).collect();
    Ok(format!("spectrum gamma {gamma}: {}", txt.join(", ")))
}

fn regularity(a: &RegularityArgs, cfg: Option<&ExperimentConfig>, out: &Path) -> Result<String> {
    let gamma = a.gamma.or(cfg.map(|c| c.model.gamma)).ok_or_else(|| Error::InvalidParameter("--gamma is required".into()))?;
    let replicas = a.replicas.or(cfg.and_then(|c| c.run.replicas)).unwrap_or(8);
    let seed = a.seed.or(cfg.map(|c| c.noise.seed)).unwrap_or(1);
    let n = a.grid.or(cfg.map(|c| c.grid.n_space)).unwrap_or(64);
    let nt = a.n_time.or(cfg.map(|c| c.grid.n_time)).unwrap_or(8 * n);
    let grid = square_grid(n, nt)?;
    let eps = cfg.map(|c| c.noise.epsilon).unwrap_or(2.0 / n as f64);
    let setup = ChaosSetup { grid, mollifier: MollifierSpec::bump(eps), kernel: HeatKernelSpec::default() };
    let q0 = setup.q_zero()?;
    let lo = crate::besov::MIN_SCALE_CELLS * grid.resolution();
    let hi = 0.2f64.min((grid.horizon() / 2.0).sqrt());
    let mut scales = vec![hi];
    let step = 2f64.powf(0.25);
    while *scales.last().unwrap() / step >= lo {
        let x = *scales.last().unwrap() / step;
        scales.push(x);
    }
    let f = TestFunction::normalized(Profile::Bump, 2);
    let est = estimate_regularity_pooled(replicas, |r| wick_exponential(&setup.phi(seed, r as u64)?, gamma, q0), &f, &scales)?;
    let canon = format!("regularity gamma={gamma} replicas={replicas} n={n} nt={nt} eps={eps} seed={seed}");
    let prov = Provenance::new(&canon, seed);
    let rows: Vec<Vec<String>> =
        est.scales.iter().zip(&est.per_scale_sup).map(|(l, s)| vec![l.to_string(), s.to_string()]).collect();
    write_csv(&out.join("regularity.csv"), &["scale", "sup_pairing"], &rows, &prov)?;
    let bar = regularity_bar(gamma);
    write_ndjson(&out.join("regularity.ndjson"), &[json!({ "estimate": est, "alpha_bar": bar })], &prov)?;
    Ok(format!("regularity gamma {gamma}: alpha_hat {:.4} (alpha_bar {bar:.4}){}", est.alpha_hat, if est.flagged { " [flagged]" } else { "" }))
}

fn covariance(a: &CovarianceArgs, out: &Path) -> Result<String> {
    let grid = TorusGrid::new(a.grid, 1, 1.0 / (a.grid * a.grid) as f64)?;
    let k = HeatKernelSpec::default();
    let q = a.eps.iter().map(|&e| covariance_at_zero(&MollifierSpec::bump(e), &k, &grid)).collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = a.eps.iter().map(|e| (1.0 / e).ln()).collect();
    let fit = linear_fit(&xs, &q)?;
    let prov = Provenance::new(&format!("covariance n={} eps={:?}", a.grid, a.eps), 0);
    let rows: Vec<Vec<String>> = a.eps.iter().zip(&q).map(|(e, v)| vec![e.to_string(), v.to_string()]).collect();
    write_csv(&out.join("covariance.csv"), &["epsilon", "q_zero"], &rows, &prov)?;
    write_ndjson(&out.join("covariance.ndjson"), &[json!({ "slope": fit.slope, "intercept": fit.intercept })], &prov)?;
    Ok(format!("covariance: slope {:.4}, intercept {:.4}", fit.slope, fit.intercept))
}

fn timeline(a: &TimelineArgs, cfg: Option<&ExperimentConfig>, out: &Path) -> Result<String> {
    let gamma = a.gamma.or(cfg.map(|c| c.model.gamma)).ok_or_else(|| Error::InvalidParameter("--gamma is required".into()))?;
    let replicas = a.replicas.or(cfg.and_then(|c| c.run.replicas)).unwrap_or(100);
    let seed = a.seed.or(cfg.map(|c| c.noise.seed)).unwrap_or(1);
    let n = a.grid.or(cfg.map(|c| c.grid.n_space)).unwrap_or(64);
    let radii = if !a.radii.is_empty() { a.radii.clone() } else { default_radii(n) };
    let grid = square_grid(n, slices_for(n, radii[0]))?;
    let setup = ChaosSetup { grid, mollifier: MollifierSpec::bump(2.0 / n as f64), kernel: HeatKernelSpec::default() };
    let p = cfg.and_then(|c| c.punctures().first().copied()).unwrap_or(Puncture { position: [0.5, 0.5], alpha: a.alpha });
    let spec = timeline_spectrum(gamma, p.alpha, a.q)?;
    let fit = crate::punctures::estimate_timeline_exponent(&setup, gamma, &p, a.q, &radii, replicas, seed)?;
    let canon = format!("timeline gamma={gamma} puncture={p:?} q={} replicas={replicas} n={n} radii={radii:?} seed={seed}", a.q);
    let prov = Provenance::new(&canon, seed);
    write_ndjson(&out.join("timeline.ndjson"), &[json!({ "fit": fit, "formula": spec.value, "q_star": spec.q_star })], &prov)?;
    Ok(format!("timeline gamma {gamma} alpha {}: {:.3} +- {:.3} (formula {:.3})", p.alpha, fit.fitted_exponent, fit.stderr, spec.value))
}

fn sphere_check(a: &SphereArgs, out: &Path) -> Result<String> {
    if a.n_t < 2 || a.n_r < 2 {
        return Err(Error::InvalidParameter("need at least 2 probes per axis".into()));
    }
    let mut rows = Vec::new();
    let mut c: f64 = 0.0;
    for i in 0..a.n_t {
        let t = 1e-3 * 100f64.powf(i as f64 / (a.n_t - 1) as f64);
        let l = series_l_max(t);
        let peak = sphere_heat_kernel_series(t, 0.0, l)?;
        for j in 0..a.n_r {
            let r = PI / 3.0 * j as f64 / (a.n_r - 1) as f64;
            let s = sphere_heat_kernel_series(t, r, l)?;
            let g = sphere_heat_kernel_nagase(t, r)?;
            let rel = (g / s - 1.0).abs();
            if s >= 1e-8 * peak {
                c = c.max(rel / t);
            }
            rows.push(vec![t.to_string(), r.to_string(), s.to_string(), g.to_string(), rel.to_string()]);
        }
    }
    let prov = Provenance::new(&format!("sphere-check n_t={} n_r={}", a.n_t, a.n_r), 0);
    write_csv(&out.join("sphere.csv"), &["t", "r", "series", "nagase", "rel_err"], &rows, &prov)?;
    Ok(format!("sphere-check: relative error <= {c:.4} t over {} probes", rows.len()))
}

fn oracle(a: &OracleArgs, out: &Path) -> Result<String> {
    let m = appendix_moment_integral(a.n, a.gamma, a.samples, a.seed)?;
    let prov = Provenance::new(&format!("oracle n={} gamma={} samples={} seed={}", a.n, a.gamma, a.samples, a.seed), a.seed);
    let rec = json!({ "n": a.n, "gamma": a.gamma, "estimate": m.estimate, "stderr": m.stderr, "samples": m.samples });
    write_ndjson(&out.join("oracle.ndjson"), &[rec], &prov)?;
    Ok(format!("oracle n {} gamma {}: {:.6} +- {:.6}", a.n, a.gamma, m.estimate, m.stderr))
}

fn thresholds(a: &ThresholdArgs) -> String {
    let d = phase_diagram();
    let ks: Vec<f64> = (1..=5).map(|k| d.gamma_k(k)).collect();
    if a.json {
        let doc = json!({
            "gamma_dpd": d.gamma_dpd,
            "gamma_pos": d.gamma_pos,
            "gamma_hat_c": d.gamma_hat_c,
            "gamma_c": d.gamma_c,
            "gamma_l2": d.gamma_l2,
            "gamma_1": d.gamma_1,
            "gamma_k": ks,
            "alpha_bar": { "0.3": d.alpha_bar(0.3), "0.5": d.alpha_bar(0.5) },
            "moment_regularity": { "gamma_0.5_q_2": moment_regularity(0.5, 2.0) },
        });
        return serde_json::to_string_pretty(&doc).expect("plain json");
    }
    let mut s = String::new();
    for (name, v) in [
        ("gamma_dPD", d.gamma_dpd),
        ("gamma_1", d.gamma_1),
        ("gamma_pos", d.gamma_pos),
        ("gamma_hat_c", d.gamma_hat_c),
        ("gamma_c", d.gamma_c),
        ("gamma_L2", d.gamma_l2),
    ] {
        s.push_str(&format!("{name:<12} {v:.12}\n"));
    }
    for (k, v) in ks.iter().enumerate() {
        s.push_str(&format!("gamma^({}){:<5} {v:.12}\n", k + 1, ""));
    }
    s.trim_end().to_string()
}
