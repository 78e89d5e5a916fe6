//! Closed-form phase diagram. Every constant is evaluated from its defining
//! expression at call time.

use num_traits::Float;

const SQRT2: f64 = core::f64::consts::SQRT_2;

/// `gamma_dPD = 2 sqrt 2 - sqrt 6`, below which the Da Prato-Debussche scheme converges.
pub fn gamma_dpd() -> f64 {
    2.0 * SQRT2 - 6.0.sqrt()
}

/// `gamma_pos = 2 sqrt 2 - 2`, below which a strong solution exists via positivity.
pub fn gamma_pos() -> f64 {
    2.0 * SQRT2 - 2.0
}

/// `hat gamma_c = 2 sqrt 2`, where `alpha_bar` stops being negative-and-decreasing.
pub fn gamma_hat_c() -> f64 {
    2.0 * SQRT2
}

/// The critical GMC parameter `gamma_c = 2`.
pub fn gamma_c() -> f64 {
    2.0
}

/// Upper end of the L^2 convergence range.
pub fn gamma_l2() -> f64 {
    2.0
}

/// `gamma_1 = -7/4 sqrt 2 + 1/4 sqrt 130`: with `alpha_hat = gamma`, `R = -1`.
pub fn gamma_1() -> f64 {
    -1.75 * SQRT2 + 0.25 * 130.0.sqrt()
}

/// Background charge `Q = 2/gamma + gamma/2`.
pub fn background_charge(gamma: f64) -> f64 {
    2.0 / gamma + gamma / 2.0
}

/// Moment threshold `q_c = 8/gamma^2`.
pub fn q_critical(gamma: f64) -> f64 {
    8.0 / (gamma * gamma)
}

/// `alpha_bar(gamma) = gamma^2/2 - 2 sqrt 2 gamma`, the Besov regularity of the chaos.
pub fn regularity_bar(gamma: f64) -> f64 {
    gamma * gamma / 2.0 - 2.0 * SQRT2 * gamma
}

/// Exponent `-gamma^2/2 (q - 1) - 4/q` obtained from the q-th moment bound;
/// maximal at `q = 2 sqrt 2 / gamma` where it equals `alpha_bar`.
pub fn moment_regularity(gamma: f64, q: f64) -> f64 {
    -gamma * gamma / 2.0 * (q - 1.0) - 4.0 / q
}

/// Smallest root of `(k+1)/2 g^2 - 2 sqrt 2 (k+1) g + 2k = 0`, i.e. the largest
/// gamma for which `k` extra Schauder steps push `k alpha_bar + ...` above `-2`.
/// Minus branch of the quadratic formula, written without cancellation.
pub fn gamma_k(k: u32) -> f64 {
    let k = k as f64;
    let a = (k + 1.0) / 2.0;
    let b = 2.0 * SQRT2 * (k + 1.0);
    let c = 2.0 * k;
    let disc = (b * b - 4.0 * a * c).sqrt();
    2.0 * c / (b + disc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regime {
    DpdConvergent,
    PositivityStrong,
    Beyond,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::DpdConvergent => "dpd-convergent",
            Regime::PositivityStrong => "positivity-strong",
            Regime::Beyond => "beyond",
        }
    }
}

/// Regime of the equation. Without punctures the gamma thresholds decide;
/// with a puncture of coupling `alpha_hat` the value of `R(alpha_hat, gamma)` does.
pub fn classify(gamma: f64, alpha_hat: Option<f64>) -> Regime {
    match alpha_hat {
        None => {
            if gamma < gamma_dpd() {
                Regime::DpdConvergent
            } else if gamma < gamma_pos() {
                Regime::PositivityStrong
            } else {
                Regime::Beyond
            }
        }
        Some(a) => classify_r(crate::punctures::regularity_r(gamma, a)),
    }
}

pub(crate) fn classify_r(r: f64) -> Regime {
    if r > -1.0 {
        Regime::DpdConvergent
    } else if r > -2.0 {
        Regime::PositivityStrong
    } else {
        Regime::Beyond
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseDiagram {
    pub gamma_dpd: f64,
    pub gamma_pos: f64,
    pub gamma_hat_c: f64,
    pub gamma_c: f64,
    pub gamma_l2: f64,
    pub gamma_1: f64,
}

impl PhaseDiagram {
    pub fn alpha_bar(&self, gamma: f64) -> f64 {
        regularity_bar(gamma)
    }
    pub fn q(&self, gamma: f64) -> f64 {
        background_charge(gamma)
    }
    pub fn q_c(&self, gamma: f64) -> f64 {
        q_critical(gamma)
    }
    pub fn gamma_k(&self, k: u32) -> f64 {
        gamma_k(k)
    }
}

pub fn phase_diagram() -> PhaseDiagram {
    PhaseDiagram {
        gamma_dpd: gamma_dpd(),
        gamma_pos: gamma_pos(),
        gamma_hat_c: gamma_hat_c(),
        gamma_c: gamma_c(),
        gamma_l2: gamma_l2(),
        gamma_1: gamma_1(),
    }
}
