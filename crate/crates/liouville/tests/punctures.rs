use liouville::core::mollifier::MollifierSpec;
use liouville::core::punctures::{torus_green_auto, Puncture};
use liouville::gmc::*;
use liouville::heat::HeatKernelSpec;
use liouville::punctures::*;
use liouville::{Error, TorusGrid};

fn setup(n: usize, nt: usize) -> ChaosSetup {
    ChaosSetup {
        grid: TorusGrid::new(n, nt, 1.0 / (n * n) as f64).unwrap(),
        mollifier: MollifierSpec::bump(2.0 / n as f64),
        kernel: HeatKernelSpec::default(),
    }
}

fn theta(s: &ChaosSetup, gamma: f64, index: u64) -> GmcMeasure {
    wick_exponential(&s.phi(3, index).unwrap(), gamma, s.q_zero().unwrap()).unwrap()
}

#[test]
fn trivial_weights_are_identity() {
    let s = setup(16, 8);
    let th = theta(&s, 0.7, 0);
    let same = weighted_measure(&th, &[], 0.7).unwrap();
    assert_eq!(same.masses().data(), th.masses().data());
    let p = [Puncture { position: [0.3, 0.6], alpha: 1.0 }];
    let g0 = theta(&s, 0.0, 0);
    assert_eq!(weighted_measure(&g0, &p, 0.0).unwrap().masses().data(), g0.masses().data());
}

#[test]
fn half_punctures_add_up() {
    let s = setup(16, 8);
    let th = theta(&s, 0.5, 1);
    let x = [0.21, 0.77];
    let one = weighted_measure(&th, &[Puncture { position: x, alpha: 1.2 }], 0.5).unwrap();
    let two = weighted_measure(&th, &[Puncture { position: x, alpha: 0.6 }, Puncture { position: x, alpha: 0.6 }], 0.5).unwrap();
    for (a, b) in one.masses().data().iter().zip(two.masses().data()) {
        assert!((a - b).abs() <= 1e-14 * a);
    }
}

#[test]
fn weights_follow_the_green_function() {
    let s = setup(32, 4);
    let (gamma, alpha, x1) = (0.6, 1.5, [0.5, 0.5]);
    let a = theta(&s, gamma, 2);
    let b = theta(&s, gamma, 3);
    let p = [Puncture { position: x1, alpha }];
    let (wa, wb) = (weighted_measure(&a, &p, gamma).unwrap(), weighted_measure(&b, &p, gamma).unwrap());
    for (it, ix, iy) in [(0, 0, 0), (1, 5, 30), (3, 10, 17), (2, 20, 3)] {
        let i = s.grid.index(it, ix, iy);
        let ra = wa.masses().data()[i] / a.masses().data()[i];
        let rb = wb.masses().data()[i] / b.masses().data()[i];
        // the weight depends on the cell only, so it commutes with rescaling theta
        assert!((ra - rb).abs() < 1e-12 * ra);
        let c = s.grid.center_of(it, ix, iy);
        let g = torus_green_auto([c.x[0] - x1[0], c.x[1] - x1[1]]).unwrap();
        assert!((ra - (gamma * alpha * g).exp()).abs() < 1e-9 * ra, "{ra} vs {}", (gamma * alpha * g).exp());
    }
    assert!(wa.masses().data().iter().all(|&m| m > 0.0));
}

#[test]
fn timeline_gamma_zero_is_volume_scaling() {
    let s = setup(64, 136);
    let p = Puncture { position: [0.5, 0.5], alpha: 0.7 };
    let fit = estimate_timeline_exponent(&s, 0.0, &p, 2.0, &[0.125, 0.0625, 0.03125], 2, 1).unwrap();
    assert!((fit.fitted_exponent - 8.0).abs() < 0.1, "{}", fit.fitted_exponent);
}

#[test]
fn timeline_without_coupling_matches_bulk_spectrum() {
    let s = setup(64, 136);
    let p = Puncture { position: [0.5, 0.5], alpha: 0.0 };
    let fit = estimate_timeline_exponent(&s, 0.5, &p, 2.0, &[0.125, 0.0625, 0.03125], 24, 2).unwrap();
    assert!((fit.fitted_exponent - 7.75).abs() < 0.3, "{} +- {}", fit.fitted_exponent, fit.stderr);
}

#[test]
fn timeline_coupling_lowers_the_exponent() {
    let s = setup(64, 136);
    let radii = [0.125, 0.0625, 0.03125];
    let bare = estimate_timeline_exponent(&s, 0.5, &Puncture { position: [0.5, 0.5], alpha: 0.0 }, 2.0, &radii, 16, 4).unwrap();
    let hit = estimate_timeline_exponent(&s, 0.5, &Puncture { position: [0.5, 0.5], alpha: 1.0 }, 2.0, &radii, 16, 4).unwrap();
    // xi_R(2) differs from xi_s(2) by 2 alpha gamma = 1 with the same noise
    let d = bare.fitted_exponent - hit.fitted_exponent;
    assert!((d - 1.0).abs() < 0.15, "{d}");
}

#[test]
fn timeline_rejects_bad_input() {
    let s = setup(64, 136);
    let p = Puncture { position: [0.5, 0.5], alpha: 0.5 };
    assert!(matches!(estimate_timeline_exponent(&s, 1.0, &p, 9.0, &[0.125, 0.0625, 0.03125], 4, 1), Err(Error::Domain(_))));
    assert!(matches!(estimate_timeline_exponent(&s, 0.5, &p, 2.0, &[0.125, 0.0625], 4, 1), Err(Error::Fit(_))));
    assert!(matches!(estimate_timeline_exponent(&s, 0.5, &p, 2.0, &[0.125, 0.0625, 0.01], 4, 1), Err(Error::Domain(_))));
}
