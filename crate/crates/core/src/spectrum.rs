//! Multifractal moment spectrum of small-ball masses of the chaos.

use crate::error::{bail, Result};
use crate::thresholds::q_critical;

/// `xi_s(q) = gamma^2/2 (q - q^2) + 4 q`, the growth exponent of
/// `E[(Theta(B_s(z, r)))^q]` as `r -> 0`. Moments only exist for `q < 8/gamma^2`.
pub fn moment_spectrum(gamma: f64, q: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        bail!(InvalidParameter, "gamma must be >= 0, got {gamma}");
    }
    if !(q >= 0.0) || (gamma > 0.0 && q >= q_critical(gamma)) {
        bail!(
            Domain,
            "q = {q} outside [0, 8/gamma^2 = {}): q-th moments of the chaos exist only for q < 8/gamma^2",
            q_critical(gamma)
        );
    }
    Ok(moment_spectrum_formula(gamma, q))
}

/// The polynomial itself, without the existence check (used for limits).
pub fn moment_spectrum_formula(gamma: f64, q: f64) -> f64 {
    gamma * gamma / 2.0 * (q - q * q) + 4.0 * q
}
