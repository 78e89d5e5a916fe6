use liouville::core::mollifier::MollifierSpec;
use liouville::core::stats::mean_stderr;
use liouville::noise::*;
use liouville::{Error, Field, TorusGrid};
use proptest::prelude::*;

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 { 0.0 } else { (-1.0 / (1.0 - u * u)).exp() }
}

/// Independent tabulation of the lattice mollifier: temporal weights on
/// offsets `j dt`, spatial weights on offsets `(a, b) dx`, each normalized.
struct Oracle {
    w: Vec<(i64, f64)>,
    s: Vec<(i64, i64, f64)>,
}

fn oracle(eps: f64, grid: &TorusGrid) -> Oracle {
    let (dt, dx) = (grid.dt(), grid.dx());
    let jmax = (eps * eps / dt) as i64 + 1;
    let mut w: Vec<(i64, f64)> = (-jmax..=jmax).map(|j| (j, bump(j as f64 * dt / (eps * eps)))).collect();
    let zw: f64 = w.iter().map(|p| p.1).sum();
    w.iter_mut().for_each(|p| p.1 /= zw);
    let amax = (eps / dx) as i64 + 1;
    let mut s = Vec::new();
    for a in -amax..=amax {
        for b in -amax..=amax {
            let r = ((a * a + b * b) as f64).sqrt() * dx / eps;
            s.push((a, b, bump(r)));
        }
    }
    let zs: f64 = s.iter().map(|p| p.2).sum();
    s.iter_mut().for_each(|p| p.2 /= zs);
    Oracle { w, s }
}

#[test]
fn sampling_is_deterministic() {
    let g = TorusGrid::new(16, 8, 1.0 / 256.0).unwrap();
    let a = sample_white_noise(&g, 42);
    let b = sample_white_noise(&g, 42);
    assert_eq!(a.core().data(), b.core().data());
    let c = sample_white_noise(&g, 43);
    assert_ne!(a.core().data(), c.core().data());
}

#[test]
fn mean_and_normalization() {
    let g = TorusGrid::new(64, 64, 1.0 / 4096.0).unwrap();
    let noise = sample_white_noise(&g, 7).core();
    let (m, se) = mean_stderr(noise.data());
    assert!(m.abs() < 4.0 * se, "mean {m} se {se}");
    let v: f64 = noise.data().iter().map(|x| x * x).sum::<f64>() / noise.data().len() as f64;
    let scaled = v * g.cell_volume();
    assert!((scaled - 1.0).abs() < 0.05, "variance x cell volume = {scaled}");
}

#[test]
fn margins_extend_without_changing_core() {
    let g = TorusGrid::new(8, 4, 1.0 / 64.0).unwrap();
    let a = sample_white_noise(&g, 3);
    let b = sample_white_noise_with_margins(&g, 3, 5, 2);
    assert_eq!(a.core().data(), b.core().data());
    assert_eq!(b.slice(-5), noise_slice(&g, 3, -5).as_slice());
}

#[test]
fn mollify_constant() {
    let g = TorusGrid::new(32, 40, 1.0 / 1024.0).unwrap();
    let f = Field::constant(g, 2.5);
    let out = mollify(&f, &MollifierSpec::bump(0.125)).unwrap();
    for v in out.data() {
        assert!((v - 2.5).abs() < 1e-12);
    }
}

#[test]
fn mollify_point_mass_matches_tabulated_bump() {
    let g = TorusGrid::new(32, 64, 1.0 / 1024.0).unwrap();
    let eps = 0.125;
    let (t0, x0, y0) = (32usize, 5usize, 30usize);
    let mut f = Field::zeros(g);
    f.data_mut()[g.index(t0, x0, y0)] = 1.0;
    let out = mollify(&f, &MollifierSpec::bump(eps)).unwrap();
    let o = oracle(eps, &g);
    let n = g.n_space() as i64;
    let mut expect = Field::zeros(g);
    for &(j, wj) in &o.w {
        for &(a, b, sab) in &o.s {
            let it = (t0 as i64 + j) as usize;
            let ix = (x0 as i64 + a).rem_euclid(n) as usize;
            let iy = (y0 as i64 + b).rem_euclid(n) as usize;
            expect.data_mut()[g.index(it, ix, iy)] += wj * sab;
        }
    }
    let mut total = 0.0;
    for (v, e) in out.data().iter().zip(expect.data()) {
        assert!(*v >= -1e-15);
        assert!((v - e).abs() < 1e-13, "{v} vs {e}");
        total += v;
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn mollify_twice_conserves_mass() {
    let g = TorusGrid::new(32, 24, 1.0 / 1024.0).unwrap();
    let f = Field::from_fn(g, |z| 1.0 + (6.0 * z.x[0]).sin() * (40.0 * z.t).cos() + z.t * z.x[1]);
    let m = MollifierSpec::bump(0.0625);
    let twice = mollify(&mollify(&f, &m).unwrap(), &m).unwrap();
    assert!((twice.integral() - f.integral()).abs() < 1e-12);
}

#[test]
fn under_resolved_mollifier_is_rejected() {
    let g = TorusGrid::new(32, 8, 1.0 / 1024.0).unwrap();
    let f = Field::zeros(g);
    assert!(matches!(mollify(&f, &MollifierSpec::bump(0.04)), Err(Error::Resolution(_))));
}

#[test]
fn mollified_noise_matches_margin_free_path_away_from_edges() {
    let g = TorusGrid::new(16, 24, 1.0 / 256.0).unwrap();
    let m = MollifierSpec::bump(0.125);
    let h = mollifier_reach(&m, &g).unwrap();
    let noise = sample_white_noise_with_margins(&g, 9, h, h);
    let a = mollify_noise(&noise, &m).unwrap();
    let b = mollify(&noise.core(), &m).unwrap();
    for it in h..g.n_time() - h {
        for (x, y) in a.slice(it).iter().zip(b.slice(it)) {
            assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }
}

/// Monte Carlo covariance of `xi_eps` against the exact kernel autocorrelation
/// `sigma^2 sum_c rho(z - c) rho(z' - c)`.
#[test]
fn mollified_noise_covariance() {
    let g = TorusGrid::new(16, 3, 1.0 / 256.0).unwrap();
    let eps = 0.125;
    let m = MollifierSpec::bump(eps);
    let h = mollifier_reach(&m, &g).unwrap();
    let o = oracle(eps, &g);
    let sigma2 = 1.0 / g.cell_volume();
    let exact = |lag: i64, a: i64, b: i64| {
        let mut acc = 0.0;
        for &(j, wj) in &o.w {
            let wk = o.w.iter().find(|p| p.0 == j + lag).map_or(0.0, |p| p.1);
            for &(p, q, s) in &o.s {
                let s2 = o.s.iter().find(|r| r.0 == p + a && r.1 == q + b).map_or(0.0, |r| r.2);
                acc += wj * wk * s * s2;
            }
        }
        sigma2 * acc
    };
    let offsets = [(0i64, 0i64, 0i64), (0, 1, 0), (0, 1, 1), (1, 0, 0), (2, 2, 1), (0, 3, 0)];
    let reps = 1500;
    let n = g.n_space();
    let mut per_rep: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); offsets.len()];
    for r in 0..reps {
        let noise = sample_white_noise_with_margins(&g, 1000 + r as u64, h, h);
        let xe = mollify_noise(&noise, &m).unwrap();
        for (k, &(lag, a, b)) in offsets.iter().enumerate() {
            let mut acc = 0.0;
            for ix in 0..n {
                for iy in 0..n {
                    let jx = (ix as i64 + a).rem_euclid(n as i64) as usize;
                    let jy = (iy as i64 + b).rem_euclid(n as i64) as usize;
                    acc += xe.get(0, ix, iy) * xe.get(lag as usize, jx, jy);
                }
            }
            per_rep[k].push(acc / (n * n) as f64);
        }
    }
    for (k, &(lag, a, b)) in offsets.iter().enumerate() {
        let (est, se) = mean_stderr(&per_rep[k]);
        let ex = exact(lag, a, b);
        assert!((est - ex).abs() < 4.0 * se, "offset {:?}: MC {est} +- {se}, exact {ex}", offsets[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn mollify_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s1 in 0u64..1000, s2 in 0u64..1000) {
        let g = TorusGrid::new(16, 12, 1.0 / 256.0).unwrap();
        let m = MollifierSpec::bump(0.125);
        let f = sample_white_noise(&g, s1).core();
        let h = sample_white_noise(&g, s2 + 5000).core();
        let comb = f.zip_with(&h, |x, y| a * x + b * y);
        let lhs = mollify(&comb, &m).unwrap();
        let mf = mollify(&f, &m).unwrap();
        let mh = mollify(&h, &m).unwrap();
        let scale = 1.0 + lhs.sup_norm();
        for ((l, x), y) in lhs.data().iter().zip(mf.data()).zip(mh.data()) {
            prop_assert!((l - (a * x + b * y)).abs() < 1e-12 * scale * 16.0);
        }
    }

    #[test]
    fn mollify_commutes_with_translation(sx in 0usize..16, sy in 0usize..16, seed in 0u64..1000) {
        let g = TorusGrid::new(16, 10, 1.0 / 256.0).unwrap();
        let m = MollifierSpec::bump(0.125);
        let f = sample_white_noise(&g, seed).core();
        let shift = |f: &Field| {
            let mut out = Field::zeros(g);
            for it in 0..g.n_time() {
                for ix in 0..16 {
                    for iy in 0..16 {
                        out.data_mut()[g.index(it, (ix + sx) % 16, (iy + sy) % 16)] = f.get(it, ix, iy);
                    }
                }
            }
            out
        };
        let a = mollify(&shift(&f), &m).unwrap();
        let b = shift(&mollify(&f, &m).unwrap());
        let scale = 1.0 + a.sup_norm();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12 * scale * 16.0);
        }
    }
}
