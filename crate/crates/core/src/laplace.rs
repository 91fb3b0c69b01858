//! Real-axis Laplace inversion by Post's formula.
//!
//! The `k`-th approximant is
//! `(-1)^k / k! · (k/v)^{k+1} · ω̃^{(k)}(k/v, t)`. Derivatives come from a jet
//! seeded as `x0 + x0·u` with `x0 = k/v`, whose `k`-th coefficient is
//! `ω̃^{(k)}(x0) x0^k / k!`. The approximant is then `(-1)^k (k/v) d_k`,
//! so neither `k!` nor `(k/v)^{k+1}` is ever formed on its own.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::family::SmearingFamily;
use crate::jet::TaylorJet;

/// Orders above this are refused: the jet recurrences lose accuracy in double precision.
pub const MAX_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PostApproximant {
    pub k: usize,
    pub value: f64,
    pub richardson_value: Option<f64>,
}

/// `d^order/dx^order ω̃(x, t)`.
pub fn jet_derivative(family: &SmearingFamily, x: f64, t: f64, order: usize) -> Result<f64> {
    if order == 0 {
        return Err(Error::invalid("derivative order must be at least 1"));
    }
    if !x.is_finite() || !(t > 0.0) {
        return Err(Error::invalid("jet derivative needs finite x and t > 0"));
    }
    let scale = if x > 0.0 { x } else { 1.0 };
    let jet = family.image_jet(&TaylorJet::variable(x, scale, order), t)?;
    let d = jet.coeff(order);
    if d == 0.0 {
        return Ok(0.0);
    }
    let log_mag = d.abs().ln() + ln_gamma(order as f64 + 1.0) - order as f64 * scale.ln();
    if log_mag > f64::MAX.ln() {
        return Err(Error::Overflow {
            context: format!("derivative of order {order} at x = {x}"),
        });
    }
    Ok(d.signum() * log_mag.exp())
}

/// The `k`-th Post approximant of `ω(v, t)`.
pub fn post_invert(family: &SmearingFamily, v: f64, t: f64, k: usize) -> Result<PostApproximant> {
    if !(v > 0.0 && v.is_finite()) || !(t > 0.0) {
        return Err(Error::invalid("Post inversion needs v > 0 and t > 0"));
    }
    if k == 0 || k > MAX_ORDER {
        return Err(Error::invalid(format!(
            "Post order must be in 1..={MAX_ORDER}, got {k}"
        )));
    }
    let x0 = k as f64 / v;
    let jet = family.image_jet(&TaylorJet::variable(x0, x0, k), t)?;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let value = sign * x0 * jet.coeff(k);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("Post approximant k = {k} at v = {v}")));
    }
    Ok(PostApproximant {
        k,
        value,
        richardson_value: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    pub value: f64,
    pub error_estimate: f64,
    pub approximants: Vec<PostApproximant>,
}

/// Orders `k_max/2^j` (at most four, all `>= 1`), ascending.
fn order_ladder(k_max: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..4).map(|j| k_max >> j).filter(|&k| k >= 1).collect();
    ks.reverse();
    ks
}

/// Richardson-extrapolated Post inversion assuming an `O(1/k)` leading error.
///
/// Evaluates approximants on a doubling ladder ending at `k_max`, applies
/// `levels` Richardson steps and reports the difference of the last two
/// extrapolants as the error estimate. Fails with
/// [`Error::NonConvergence`] when that estimate exceeds `tol` or is as
/// large as the value itself (the result carries no significant digits).
pub fn invert_with_extrapolation(
    family: &SmearingFamily,
    v: f64,
    t: f64,
    k_max: usize,
    tol: f64,
    levels: usize,
) -> Result<Inversion> {
    if k_max < 4 {
        return Err(Error::invalid("extrapolated inversion needs k_max >= 4"));
    }
    if levels == 0 || levels > 2 {
        return Err(Error::invalid("Richardson levels must be 1 or 2"));
    }
    let ks = order_ladder(k_max);
    if ks.len() < levels + 2 {
        return Err(Error::invalid("k_max too small for the requested Richardson levels"));
    }
    let raw: Vec<PostApproximant> = ks
        .iter()
        .map(|&k| post_invert(family, v, t, k))
        .collect::<Result<_>>()?;

    // tableau[i][j]: j Richardson steps ending at ks[i]
    let mut tableau: Vec<Vec<f64>> = raw.iter().map(|p| vec![p.value]).collect();
    for j in 1..=levels {
        let f = (1u64 << j) as f64;
        for i in j..tableau.len() {
            let r = (f * tableau[i][j - 1] - tableau[i - 1][j - 1]) / (f - 1.0);
            tableau[i].push(r);
        }
    }
    let approximants: Vec<PostApproximant> = raw
        .iter()
        .zip(&tableau)
        .map(|(p, row)| PostApproximant {
            richardson_value: row.get(levels).copied(),
            ..*p
        })
        .collect();
    let n = tableau.len();
    let value = tableau[n - 1][levels];
    let error_estimate = (value - tableau[n - 2][levels]).abs();
    if !value.is_finite() || !error_estimate.is_finite() {
        return Err(Error::NonFinite("Richardson extrapolation".into()));
    }
    if error_estimate > tol || error_estimate >= value.abs() {
        return Err(Error::NonConvergence {
            best: value,
            error: error_estimate,
            sequence: ks.iter().map(|&k| k as f64).collect(),
        });
    }
    Ok(Inversion {
        value,
        error_estimate,
        approximants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::ImageForm;
    use approx::assert_relative_eq;

    /// Post approximant for the Gamma image from its closed-form k-th derivative
    /// `(bt)^{ct} (-1)^k Γ(ct+k)/Γ(ct) (x+bt)^{-ct-k}`, evaluated in log space.
    fn gamma_post_closed_form(b: f64, c: f64, t: f64, v: f64, k: usize) -> f64 {
        let (kk, s, r) = (k as f64, c * t, b * t);
        let x = kk / v;
        ((kk + 1.0) * x.ln() + s * r.ln() + ln_gamma(s + kk)
            - ln_gamma(s)
            - ln_gamma(kk + 1.0)
            - (s + kk) * (x + r).ln())
        .exp()
    }

    #[test]
    fn derivative_examples() {
        let f = SmearingFamily::gamma(1.0, 1.0).unwrap();
        assert_relative_eq!(jet_derivative(&f, 1.0, 1.0, 1).unwrap(), -0.25, max_relative = 1e-15);
        assert_relative_eq!(jet_derivative(&f, 0.0, 1.0, 2).unwrap(), 2.0, max_relative = 1e-13);
        assert!(jet_derivative(&f, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn derivative_matches_closed_form() {
        let (b, c, t, x) = (1.5, 2.5, 0.8, 0.7);
        let f = SmearingFamily::gamma(b, c).unwrap();
        for k in 1..=20 {
            let (s, r) = (c * t, b * t);
            let mag = (s * r.ln() + ln_gamma(s + k as f64) - ln_gamma(s) - (s + k as f64) * (x + r).ln()).exp();
            let want = if k % 2 == 0 { mag } else { -mag };
            assert_relative_eq!(jet_derivative(&f, x, t, k).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn polynomial_image_derivatives_vanish() {
        // F(x) = -log(1 + x + x^2) gives the polynomial image 1 + ξ + ξ²
        // in the time-independent form
        let f = SmearingFamily::custom("-log(1 + x + x^2)", ImageForm::TimeIndependent, 1.0).unwrap();
        // exp∘log round-trips are exact only up to round-off
        for order in 3..=8 {
            assert!(jet_derivative(&f, 0.5, 1.0, order).unwrap().abs() < 1e-9);
        }
        assert_relative_eq!(jet_derivative(&f, 0.5, 1.0, 2).unwrap(), 2.0, max_relative = 1e-13);
    }

    #[test]
    fn overflow_is_reported() {
        let f = SmearingFamily::gamma(1.0, 30.0).unwrap();
        assert!(matches!(
            jet_derivative(&f, 1e-6, 1e-6, 64),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn first_post_approximant_exponential() {
        let f = SmearingFamily::gamma(1.0, 1.0).unwrap();
        let p = post_invert(&f, 1.0, 1.0, 1).unwrap();
        assert_relative_eq!(p.value, 0.25, max_relative = 1e-15);
        let p = post_invert(&f, 1.0, 1.0, 64).unwrap();
        let closed = (1.0 + 1.0 / 64.0f64).powi(-65);
        assert_relative_eq!(p.value, closed, max_relative = 1e-13);
        assert!((p.value - (-1.0f64).exp()).abs() < 1e-2);
    }

    #[test]
    fn post_matches_closed_form_up_to_32() {
        for &(b, c, t) in &[(1.0, 2.0, 1.0), (0.5, 0.7, 2.0), (3.0, 1.3, 0.4)] {
            let f = SmearingFamily::gamma(b, c).unwrap();
            for &v in &[0.05, 0.3, 1.0, 2.0, 7.5] {
                for k in 1..=32 {
                    let got = post_invert(&f, v, t, k).unwrap().value;
                    let want = gamma_post_closed_form(b, c, t, v, k);
                    assert_relative_eq!(got, want, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn error_shrinks_with_k() {
        let g = crate::family::GammaFamily::new(1.0, 2.0).unwrap();
        let f = SmearingFamily::from_gamma(g);
        let exact = g.density(2.0, 1.0).unwrap();
        let errs: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&k| (post_invert(&f, 2.0, 1.0, k).unwrap().value - exact).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn extrapolation_recovers_density() {
        let g = crate::family::GammaFamily::new(1.0, 2.0).unwrap();
        let f = SmearingFamily::from_gamma(g);
        let inv = invert_with_extrapolation(&f, 2.0, 1.0, 64, 1e-3, 1).unwrap();
        assert!((inv.value - g.density(2.0, 1.0).unwrap()).abs() < 1e-3);
        assert_eq!(inv.approximants.len(), 4);

        let f = SmearingFamily::gamma(1.0, 1.0).unwrap();
        let inv = invert_with_extrapolation(&f, 1.0, 1.0, 64, 1e-3, 1).unwrap();
        assert!((inv.value - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn far_tail_fails_gracefully() {
        let f = SmearingFamily::gamma(1.0, 0.5).unwrap();
        match invert_with_extrapolation(&f, 60.0, 1.0, 64, 1e-3, 1) {
            Err(Error::NonConvergence { best, error, .. }) => {
                assert!(best.is_finite() && error.is_finite());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(invert_with_extrapolation(&f, 1.0, 1.0, 2, 1e-3, 1).is_err());
    }
}
