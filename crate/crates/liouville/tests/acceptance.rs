//! Acceptance run: one line per criterion, nonzero exit on any failure.
//! `ACCEPTANCE_ONLY=3,8` restricts the run to a subset.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use liouville::besov::{estimate_regularity_pooled, Profile, TestFunction};
use liouville::core::integral::appendix_moment_integral;
use liouville::core::kahane::{kahane_check, random_nested_covariances, ConvexF};
use liouville::core::mollifier::MollifierSpec;
use liouville::core::punctures::Puncture;
use liouville::core::quad::GaussRule;
use liouville::core::sphere::*;
use liouville::core::stats::linear_fit;
use liouville::core::thresholds::*;
use liouville::gmc::*;
use liouville::heat::{covariance_at_zero, HeatKernelSpec};
use liouville::punctures::estimate_timeline_exponent;
use liouville::solver::*;
use liouville::{Error, Field, Result, TorusGrid};

type Outcome = Result<(bool, String)>;

fn grid(n: usize, nt: usize) -> TorusGrid {
    TorusGrid::new(n, nt, 1.0 / (n * n) as f64).unwrap()
}

fn chaos(n: usize, nt: usize, eps_cells: f64) -> ChaosSetup {
    ChaosSetup { grid: grid(n, nt), mollifier: MollifierSpec::bump(eps_cells / n as f64), kernel: HeatKernelSpec::default() }
}

fn mean_one() -> Outcome {
    let s = chaos(64, 256, 4.0);
    let rows = total_mass_study(&s, &[0.3, 0.5, 1.0], 200, 101)?;
    let ok = rows.iter().all(|(m, se)| (m - 1.0).abs() <= 3.0 * se);
    let txt = rows.iter().map(|(m, se)| format!("{m:.4}+-{se:.4}")).collect::<Vec<_>>().join(" ");
    Ok((ok, format!("gamma 0.3/0.5/1.0: {txt}")))
}

fn covariance_slope() -> Outcome {
    let g = TorusGrid::new(256, 1, 1.0 / 65536.0)?;
    let eps = [0.125, 0.0625, 0.03125, 0.015625];
    let xs: Vec<f64> = eps.iter().map(|e: &f64| (1.0 / e).ln()).collect();
    let ys = eps
        .iter()
        .map(|&e| covariance_at_zero(&MollifierSpec::bump(e), &HeatKernelSpec::default(), &g))
        .collect::<Result<Vec<_>>>()?;
    let fit = linear_fit(&xs, &ys)?;
    Ok(((fit.slope - 1.0).abs() <= 0.05, format!("slope {:.4}", fit.slope)))
}

fn spectrum() -> Outcome {
    let s = chaos(128, 2080, 2.0);
    let radii = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
    let cases = [(0.5, 2.0), (0.5, 3.0), (1.0, 2.0)];
    let fits = estimate_moment_exponents(&s, &cases, &radii, 500, 1, MomentOptions::default())?;
    let mut ok = true;
    let mut txt = Vec::new();
    for f in &fits {
        let target = f.gamma * f.gamma / 2.0 * (f.q - f.q * f.q) + 4.0 * f.q;
        ok &= (f.fitted_exponent - target).abs() <= 0.3;
        txt.push(format!("({}, {}) {:.3} vs {target:.3}", f.gamma, f.q, f.fitted_exponent));
    }
    Ok((ok, txt.join("; ")))
}

fn besov_regularity() -> Outcome {
    let s = chaos(128, 512, 2.0);
    let q0 = s.q_zero()?;
    let f = TestFunction::normalized(Profile::Bump, 2);
    let scales = [0.2, 0.141, 0.1, 0.0707, 0.05, 0.0354];
    let est = estimate_regularity_pooled(8, |r| wick_exponential(&s.phi(41, r as u64)?, 0.3, q0), &f, &scales)?;
    let target = regularity_bar(0.3);
    Ok((
        (est.alpha_hat - target).abs() <= 0.15,
        format!("alpha_hat {:.4} vs {target:.4} (residual {:.3})", est.alpha_hat, est.fit_residual),
    ))
}

fn l2_cauchy() -> Outcome {
    let s = chaos(128, 128, 2.0);
    let rows = l2_cauchy_study(&s, 0.5, 0.1, &[0.125, 0.0625, 0.03125], 40, 5)?;
    let ok = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let txt = rows.iter().map(|(e, m, se)| format!("eps {e}: {m:.4}+-{se:.4}")).collect::<Vec<_>>().join(", ");
    Ok((ok, txt))
}

fn sup(a: &Field, b: &Field) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn solver_config(n: usize, horizon: f64, eps_cells: f64, seed: u64) -> SolverConfig {
    let dt = 1.0 / (n * n) as f64;
    let nt = (horizon / dt).round() as usize + 1;
    let mut c = SolverConfig::new(TorusGrid::new(n, nt, dt).unwrap(), eps_cells / n as f64, seed);
    c.window = horizon / 4.0;
    c
}

fn cross_validation() -> Outcome {
    let cfg = solver_config(64, 0.1, 4.0, 61);
    let w: Vec<f64> = (0..64 * 64).map(|i| 0.3 * (2.0 * PI * (i / 64) as f64 / 64.0).sin()).collect();
    let mut gaps = Vec::new();
    for gamma in [0.0, 0.3] {
        let p = ModelParams::simple(gamma, Flavor::Exp);
        let a = simulate_epsilon(&p, &cfg, &w)?;
        let b = dpd_solve(&p, &cfg, &w)?;
        gaps.push(sup(&a.x, &b.x));
    }
    Ok((gaps[0] <= 1e-6 && gaps[1] <= 0.05, format!("gap gamma 0: {:.2e}, gamma 0.3: {:.2e}", gaps[0], gaps[1])))
}

fn contraction() -> Outcome {
    let cfg = solver_config(64, 0.1, 4.0, 71);
    let p = ModelParams::simple(0.3, Flavor::Exp);
    let tr = simulate_epsilon(&ModelParams::simple(0.0, Flavor::Exp), &cfg, &vec![0.0; 4096])?;
    let phi = tr.phi.expect("kept");
    let data = dpd_data(&p, &cfg, &phi, Field::zeros(cfg.grid))?;
    let v0 = vec![0.0; 4096];
    let slices = ((cfg.window / cfg.grid.dt()).round() as usize).min(cfg.grid.n_time() - 1);
    let full = picard_solve(&data, &v0, 0, slices, &cfg)?;
    let half = picard_solve(&data, &v0, 0, slices / 2, &cfg)?;
    let max = full.contraction_ratios.iter().cloned().fold(0.0, f64::max);
    let ok = max <= 0.6 && half.contraction_ratios[0] < full.contraction_ratios[0] && full.residual < cfg.picard_tol;
    Ok((
        ok,
        format!(
            "max ratio {max:.3} on t = {:.4}; first ratio {:.3} -> {:.3} on half window",
            slices as f64 * cfg.grid.dt(),
            full.contraction_ratios[0],
            half.contraction_ratios[0]
        ),
    ))
}

fn eps_convergence() -> Outcome {
    let cfg = solver_config(64, 0.1, 2.0, 81);
    let p = ModelParams::simple(0.3, Flavor::Exp);
    let rep = convergence_study(&p, &cfg, &[0.25, 0.125, 0.0625, 0.03125], &vec![0.0; 4096])?;
    let txt = rep.rows.iter().map(|r| format!("{:.4}", r.besov)).collect::<Vec<_>>().join(" > ");
    Ok((rep.decreasing, format!("C^-1 distances {txt}")))
}

fn thresholds() -> Outcome {
    let mut ok = (gamma_dpd() - (8f64.sqrt() - 6f64.sqrt())).abs() < 1e-12
        && (gamma_pos() - (8f64.sqrt() - 2.0)).abs() < 1e-12
        && (gamma_1() - (-1.75 * 2f64.sqrt() + 0.25 * 130f64.sqrt())).abs() < 1e-12
        && (regularity_bar(gamma_dpd()) + 1.0).abs() < 1e-12
        && (regularity_bar(gamma_pos()) + 2.0).abs() < 1e-12;
    ok &= (1..1000).all(|k| gamma_k(k + 1) > gamma_k(k));
    let tail = (gamma_k(1000) - gamma_pos()).abs();
    ok &= tail < 1e-3;
    Ok((ok, format!("gamma_dPD {:.6}, gamma_pos {:.6}, gamma_1 {:.6}, |gamma^(1000) - gamma_pos| {tail:.1e}", gamma_dpd(), gamma_pos(), gamma_1())))
}

fn timeline() -> Outcome {
    let s = chaos(128, 2080, 2.0);
    let radii = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
    let pun = Puncture { position: [0.5, 0.5], alpha: 0.5 };
    let fit = estimate_timeline_exponent(&s, 0.5, &pun, 2.0, &radii, 200, 3)?;
    Ok(((fit.fitted_exponent - 7.25).abs() <= 0.4, format!("exponent {:.3} +- {:.3} vs 7.25", fit.fitted_exponent, fit.stderr)))
}

/// Largest `|nagase / series - 1| / t` over the cap, on an `nt x nr` probe grid.
fn nagase_constant(nt: usize, nr: usize) -> Result<f64> {
    let mut c: f64 = 0.0;
    for i in 0..nt {
        let t = 1e-3 * 100f64.powf(i as f64 / (nt - 1) as f64);
        let l = series_l_max(t);
        let p0 = sphere_heat_kernel_series(t, 0.0, l)?;
        for j in 0..nr {
            let r = PI / 3.0 * j as f64 / (nr - 1) as f64;
            let s = sphere_heat_kernel_series(t, r, l)?;
            // below 1e-8 of the peak the series is roundoff
            if s < 1e-8 * p0 {
                continue;
            }
            c = c.max((sphere_heat_kernel_nagase(t, r)? / s - 1.0).abs() / t);
        }
    }
    Ok(c)
}

fn green_error(n_r: usize) -> Result<f64> {
    let g = SphereGrid::new(n_r, 16, PI / 3.0)?;
    let f = g.sample(|p| if p.r > 0.0 { sphere_green(p.r).unwrap() } else { 0.0 });
    let lf = laplace_beltrami(&g, &f)?;
    let mut err: f64 = 0.0;
    for i in 1..g.n_r {
        let r = i as f64 * g.h();
        if (0.2..=1.0).contains(&r) {
            err = err.max((lf[i * g.n_theta] - 0.5).abs());
        }
    }
    Ok(err)
}

fn sphere() -> Outcome {
    let c1 = nagase_constant(9, 25)?;
    let c2 = nagase_constant(17, 49)?;
    let stable = (c2 / c1 - 1.0).abs() < 0.1;
    let (e1, e2) = (green_error(40)?, green_error(80)?);
    let order = e1 / e2;
    let ok = stable && (3.0..=5.5).contains(&order);
    Ok((ok, format!("c = {c1:.4} / {c2:.4} under refinement; Delta G error {e1:.2e} -> {e2:.2e} (ratio {order:.2})")))
}

fn kahane() -> Outcome {
    let mut holds = 0;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..100u64 {
        let (a, b, w) = random_nested_covariances(5, 1000 + trial);
        let rep = kahane_check(&a, &b, &w, ConvexF::Power(3.0), 1_000_000, trial)?;
        if rep.lhs <= rep.rhs {
            holds += 1;
        }
        worst = worst.max(rep.z);
    }
    Ok((holds >= 99 && worst <= 4.0, format!("{holds}/100 trials hold, worst z {worst:.2}")))
}

fn two_point_overlap(rule: &GaussRule, dt: f64, r: f64) -> f64 {
    let lens = |a: f64, b: f64, d: f64| {
        if a <= 0.0 || b <= 0.0 || d >= a + b {
            return 0.0;
        }
        if d <= (a - b).abs() {
            let m = a.min(b);
            return PI * m * m;
        }
        let ca = ((d * d + a * a - b * b) / (2.0 * d * a)).clamp(-1.0, 1.0);
        let cb = ((d * d + b * b - a * a) / (2.0 * d * b)).clamp(-1.0, 1.0);
        let k = ((-d + a + b) * (d + a - b) * (d - a + b) * (d + a + b)).max(0.0);
        a * a * ca.acos() + b * b * cb.acos() - 0.5 * k.sqrt()
    };
    let lo = (dt - 1.0).max(-1.0);
    let hi = (dt + 1.0).min(1.0);
    if lo >= hi {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    for c in [0.0, dt] {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let f = |t: f64| lens(1.0 - t.abs().sqrt(), 1.0 - (t - dt).abs().sqrt(), r);
    cuts.windows(2).map(|w| rule.composite(w[0], w[1], 24, f)).sum()
}

/// Nested quadrature of `int_B int_B ||w - w'||^{-g2}` over the unit parabolic ball.
fn two_point_quadrature(g2: f64) -> f64 {
    let p = 4.0 - g2;
    let (inner, mid, outer) = (GaussRule::new(12), GaussRule::new(16), GaussRule::new(16));
    let g = |u: f64| {
        let rho = u.powf(1.0 / p);
        mid.composite(0.0, 1.0, 6, |a| {
            let dt = rho * rho * (1.0 - a) * (1.0 - a);
            2.0 * a * (1.0 - a) * two_point_overlap(&inner, dt, rho * a)
        })
    };
    4.0 * PI * outer.composite(0.0, 2f64.powf(p), 12, g) / p
}

fn appendix() -> Outcome {
    let q = two_point_quadrature(1.0);
    let mc = appendix_moment_integral(2, 1.0, 400_000, 11)?;
    let rel = mc.estimate / q - 1.0;
    // 8 / gamma^2 = 2 at gamma = 2: n = 2 finite just below, divergent at and above
    let below = appendix_moment_integral(2, 1.99, 100_000, 12).map(|m| m.estimate.is_finite()).unwrap_or(false);
    let at = matches!(appendix_moment_integral(2, 2.0, 1000, 13), Err(Error::Divergent(_)));
    let three = matches!(appendix_moment_integral(3, 1.7, 1000, 14), Err(Error::Divergent(_)))
        && appendix_moment_integral(3, 1.6, 1000, 15).is_ok();
    Ok((rel.abs() <= 0.02 && below && at && three, format!("MC {:.5} vs quadrature {q:.5} ({:+.2}%); boundary flips: {}", mc.estimate, 100.0 * rel, below && at && three)))
}

type Criterion = (usize, &'static str, u64, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        (1, "mean-one GMC", 300, mean_one),
        (2, "covariance asymptotics", 60, covariance_slope),
        (3, "multifractal spectrum", 1800, spectrum),
        (4, "GMC Besov regularity", 900, besov_regularity),
        (5, "L2 Cauchy decay", 600, l2_cauchy),
        (6, "solver cross-validation", 300, cross_validation),
        (7, "Picard contraction", 120, contraction),
        (8, "epsilon-convergence trend", 1200, eps_convergence),
        (9, "threshold arithmetic", 1, thresholds),
        (10, "time-line spectrum", 1200, timeline),
        (11, "sphere kernel agreement", 120, sphere),
        (12, "Kahane inequality", 300, kahane),
        (13, "appendix integral", 300, appendix),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let res = run();
        let secs = t.elapsed().as_secs_f64();
        let (ok, detail) = match res {
            Ok((ok, d)) => (ok, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = secs <= budget as f64;
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time { String::new() } else { format!(" over budget {budget}s") };
        println!(
            "[{}] {id:>2}. {name}: {detail} ({secs:.1}s{timing})",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
