//! The ω-process and its Kramers-Moyal coefficients.
//!
//! The kernel `P^ω(z, t | z′, t′) = t/(t−t′) · θ(tz − t′z′) · ω((tz − t′z′)/(t−t′), t−t′)`
//! moves the window average `z` from `t′` to `t`: the accrued integral
//! `tz` is `t′z′` plus an independent Gamma increment.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::family::GammaFamily;
use crate::propagator::HamiltonianSpec;
use crate::quad::{integrate, integrate_power_weighted, QuadratureConfig};

fn check_times(t: f64, t_prev: f64) -> Result<()> {
    if !(t > t_prev && t_prev > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!(
            "need t > t_prev > 0, got t = {t}, t_prev = {t_prev}"
        )));
    }
    Ok(())
}

/// `P^ω(z, t | z_prev, t_prev)`; zero off the support `tz ≥ t′z′`.
pub fn omega_kernel(z: f64, t: f64, z_prev: f64, t_prev: f64, family: &GammaFamily) -> f64 {
    if !(t > t_prev && t_prev > 0.0) {
        return 0.0;
    }
    let tau = t - t_prev;
    let u = (t * z - t_prev * z_prev) / tau;
    if u < 0.0 {
        return 0.0;
    }
    t / tau * family.density_at(u, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaKernel {
    pub family: GammaFamily,
}

impl OmegaKernel {
    pub fn new(family: GammaFamily) -> Self {
        Self { family }
    }

    pub fn eval(&self, z: f64, t: f64, z_prev: f64, t_prev: f64) -> f64 {
        omega_kernel(z, t, z_prev, t_prev, &self.family)
    }

    /// `E[g(z) | z′, t′]` over the kernel, integrated in the increment
    /// `u = (tz − t′z′)/(t − t′)` so the support edge is represented exactly.
    pub fn expect<G: Fn(f64) -> f64>(
        &self,
        g: G,
        t: f64,
        z_prev: f64,
        t_prev: f64,
        quad: &QuadratureConfig,
    ) -> Result<f64> {
        check_times(t, t_prev)?;
        let tau = t - t_prev;
        let z_of = |u: f64| (t_prev * z_prev + tau * u) / t;
        gamma_expectation(&self.family, tau, |u| g(z_of(u)), quad)
    }

    /// `∫₀^∞ P^ω dz`.
    pub fn normalization(&self, t: f64, z_prev: f64, t_prev: f64, quad: &QuadratureConfig) -> Result<f64> {
        self.expect(|_| 1.0, t, z_prev, t_prev, quad)
    }
}

/// Upper quantile level used to truncate moment integrals.
pub const MOMENT_TAIL: f64 = 1e-12;

/// `ln(r^k / Γ(k))`, the log normalizer of a Gamma(k, r) density.
fn ln_gamma_norm(k: f64, r: f64) -> f64 {
    k * r.ln() - ln_gamma(k)
}

/// `∫ g(u) ω(u, τ) du` over `[0, q_{1−1e−12}]`.
fn gamma_expectation<G: Fn(f64) -> f64>(family: &GammaFamily, tau: f64, g: G, quad: &QuadratureConfig) -> Result<f64> {
    let (k, r) = (family.shape(tau), family.rate(tau));
    if !(k > 0.0) {
        return Err(Error::Degenerate("c*tau = 0".into()));
    }
    let top = family.quantile(1.0 - MOMENT_TAIL, tau)?;
    let mid = family.mean().min(0.5 * top);
    let head = integrate_power_weighted(k, mid, ln_gamma_norm(k, r), |u| g(u) * (-r * u).exp(), quad)?;
    let tail = integrate(|u| g(u) * family.density_at(u, tau), mid, top, quad)?;
    Ok(head + tail.value)
}

/// `ω(z, t) − ∫ ω(z′, t′) P^ω(z, t | z′, t′) dz′`.
pub fn smearing_consistency_residual(
    z: f64,
    t: f64,
    t_prev: f64,
    family: &GammaFamily,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_times(t, t_prev)?;
    if !(z > 0.0) {
        return Err(Error::invalid("z must be positive"));
    }
    let tau = t - t_prev;
    let z_max = t * z / t_prev;
    let split = 0.5 * z_max;
    let scale = t / tau;
    let (k1, r1) = (family.shape(t_prev), family.rate(t_prev));
    let (k2, r2) = (family.shape(tau), family.rate(tau));
    // left piece in z′, right piece in w = z_max − z′ so the kernel argument
    // t′w/τ never suffers cancellation; each carries its own power singularity
    let left = integrate_power_weighted(
        k1,
        split,
        ln_gamma_norm(k1, r1),
        |zp| (-r1 * zp).exp() * scale * family.density_at((t * z - t_prev * zp) / tau, tau),
        quad,
    )?;
    let right = integrate_power_weighted(
        k2,
        z_max - split,
        ln_gamma_norm(k2, r2) + (k2 - 1.0) * (t_prev / tau).ln(),
        |w| family.density_at(z_max - w, t_prev) * scale * (-r2 * t_prev * w / tau).exp(),
        quad,
    )?;
    Ok(family.density_at(z, t) - (left + right))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmEstimate {
    pub n: u32,
    pub v: f64,
    pub t: f64,
    pub value: f64,
    pub tau_sequence: Vec<f64>,
    /// Finite-τ moment rates, one per entry of `tau_sequence`.
    pub raw: Vec<f64>,
    pub extrapolation_error: f64,
}

/// Window fractions `τ/t` used by default.
pub const DEFAULT_TAU_FRACTIONS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];

pub fn default_tau_sequence(t: f64) -> Vec<f64> {
    DEFAULT_TAU_FRACTIONS.iter().map(|f| f * t).collect()
}

fn factorial(n: u32) -> f64 {
    (2..=n).map(f64::from).product()
}

/// `(1/(n! τ)) ∫ (x − v)^n P^ω(x, t+τ | v, t) dx`.
pub fn km_moment_rate(n: u32, v: f64, t: f64, tau: f64, family: &GammaFamily, quad: &QuadratureConfig) -> Result<f64> {
    let kernel = OmegaKernel::new(*family);
    let m = kernel.expect(|x| (x - v).powi(n as i32), t + tau, v, t, quad)?;
    Ok(m / (factorial(n) * tau))
}

/// Kramers-Moyal coefficient `K^(n)(v, t)` by finite-τ moments and linear
/// Richardson extrapolation to `τ → 0`.
pub fn km_coefficient_estimate(
    n: u32,
    v: f64,
    t: f64,
    family: &GammaFamily,
    tau_sequence: &[f64],
    quad: &QuadratureConfig,
) -> Result<KmEstimate> {
    if n == 0 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    if !(v > 0.0 && t > 0.0) {
        return Err(Error::invalid("v and t must be positive"));
    }
    if tau_sequence.len() < 4 {
        return Err(Error::invalid("need at least 4 tau values"));
    }
    if tau_sequence.windows(2).any(|w| !(w[1] < w[0])) || tau_sequence.iter().any(|&tau| !(tau > 0.0)) {
        return Err(Error::invalid("tau sequence must be positive and strictly decreasing"));
    }
    if tau_sequence[0] > 0.5 * t {
        return Err(Error::invalid("tau must be small compared with t"));
    }
    let raw: Vec<f64> = tau_sequence
        .iter()
        .map(|&tau| km_moment_rate(n, v, t, tau, family, quad))
        .collect::<Result<_>>()?;

    // linear-in-τ extrapolation through consecutive pairs
    let extrap: Vec<f64> = tau_sequence
        .windows(2)
        .zip(raw.windows(2))
        .map(|(ts, ms)| (ts[0] * ms[1] - ts[1] * ms[0]) / (ts[0] - ts[1]))
        .collect();
    let m = extrap.len();
    let value = extrap[m - 1];
    let extrapolation_error = (extrap[m - 1] - extrap[m - 2]).abs();

    let diffs: Vec<f64> = raw.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let scale = raw.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let diverging = diffs.windows(2).any(|d| d[1] > 1.5 * d[0] + 1e-8 * scale.max(1.0));
    if diverging || !value.is_finite() {
        return Err(Error::NonConvergence {
            best: value,
            error: extrapolation_error,
            sequence: raw,
        });
    }
    Ok(KmEstimate {
        n,
        v,
        t,
        value,
        tau_sequence: tau_sequence.to_vec(),
        raw,
        extrapolation_error,
    })
}

/// Closed forms for the Gamma kernel: `K⁽¹⁾ = (v̄ − v)/t`, `K⁽²⁾ = c/(2b²t²)`.
pub fn km_analytic_gamma(n: u32, v: f64, t: f64, family: &GammaFamily) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    match n {
        1 => Ok((family.mean() - v) / t),
        2 => Ok(family.c() / (2.0 * family.b() * family.b() * t * t)),
        _ => Err(Error::invalid(format!("no closed form for K^({n}); only n = 1, 2"))),
    }
}

/// Drift and diffusion `(r − v/2, v/2)` of the log-price at fixed `v`.
pub fn x_process_coefficients(v: f64, spec: &HamiltonianSpec) -> Result<(f64, f64)> {
    if !(v > 0.0) {
        return Err(Error::invalid("v must be positive"));
    }
    Ok(spec.x_coefficients(v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmRow {
    pub n: u32,
    pub v: f64,
    pub t: f64,
    pub estimate: f64,
    pub analytic: f64,
    pub rel_error: f64,
}

/// `K⁽¹⁾` and `K⁽²⁾` over all `(v, t)` pairs, rows ordered by `(v, t, n)`.
pub fn km_sweep(family: &GammaFamily, vs: &[f64], ts: &[f64], quad: &QuadratureConfig) -> Result<Vec<KmRow>> {
    let cases: Vec<(f64, f64, u32)> = vs
        .iter()
        .flat_map(|&v| ts.iter().flat_map(move |&t| [(v, t, 1), (v, t, 2)]))
        .collect();
    cases
        .par_iter()
        .map(|&(v, t, n)| {
            let est = km_coefficient_estimate(n, v, t, family, &default_tau_sequence(t), quad)?;
            let analytic = km_analytic_gamma(n, v, t, family)?;
            let rel_error = if analytic == 0.0 {
                est.value.abs()
            } else {
                ((est.value - analytic) / analytic).abs()
            };
            Ok(KmRow {
                n,
                v,
                t,
                estimate: est.value,
                analytic,
                rel_error,
            })
        })
        .collect()
}

pub fn km_quadrature_config() -> QuadratureConfig {
    QuadratureConfig {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        max_intervals: 4000,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fam(b: f64, c: f64) -> GammaFamily {
        GammaFamily::new(b, c).unwrap()
    }

    #[test]
    fn kernel_support_and_boundary() {
        let g = fam(1.0, 2.0);
        assert_eq!(omega_kernel(0.4, 2.0, 1.0, 1.0, &g), 0.0);
        // c(t − t′) = 2 > 1: left limit 0 at the edge
        assert_eq!(omega_kernel(0.5, 2.0, 1.0, 1.0, &g), 0.0);
        assert!(omega_kernel(0.6, 2.0, 1.0, 1.0, &g) > 0.0);
        // c(t − t′) = 1: edge value is the exponential rate times t/τ
        let g = fam(1.0, 1.0);
        assert_relative_eq!(omega_kernel(0.5, 2.0, 1.0, 1.0, &g), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn kernel_normalization_grid() {
        let quad = km_quadrature_config();
        for &(b, c) in &[(1.0, 2.0), (3.0, 0.5), (0.5, 1.0)] {
            let k = OmegaKernel::new(fam(b, c));
            for &zp in &[0.2, 1.0, 4.0] {
                for &tp in &[0.3, 1.0, 2.5] {
                    for &dt in &[0.05, 0.5, 3.0] {
                        let n = k.normalization(tp + dt, zp, tp, &quad).unwrap();
                        assert!((n - 1.0).abs() < 1e-8, "b={b} c={c} z'={zp} t'={tp} dt={dt}: {n}");
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_normalization_by_direct_integration() {
        // integrate in z itself, away from the edge singularity (c τ = 2)
        let g = fam(1.0, 2.0);
        let r = integrate(
            |z| omega_kernel(z, 2.0, 1.0, 1.0, &g),
            0.5,
            80.0,
            &QuadratureConfig::default(),
        )
        .unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_concentrates_as_tau_shrinks() {
        let k = OmegaKernel::new(fam(1.0, 2.0));
        let quad = km_quadrature_config();
        let mut last = 0.0;
        for &tau in &[0.1, 0.01, 0.001] {
            let mass = k
                .expect(
                    |z| if (z - 1.0).abs() < 0.05 { 1.0 } else { 0.0 },
                    1.0 + tau,
                    1.0,
                    1.0,
                    &quad,
                )
                .unwrap();
            assert!(mass > last);
            last = mass;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn consistency_residuals() {
        let quad = km_quadrature_config();
        let r = smearing_consistency_residual(2.0, 2.0, 1.0, &fam(1.0, 2.0), &quad).unwrap();
        assert!(r.abs() < 1e-8, "{r}");
        let r = smearing_consistency_residual(0.1, 1.5, 0.5, &fam(3.0, 0.5), &quad).unwrap();
        assert!(r.abs() < 1e-7, "{r}");
        for &(z, t, tp) in &[(0.5, 1.0, 0.9), (3.0, 4.0, 0.5), (1.0, 1.0001, 1.0)] {
            let r = smearing_consistency_residual(z, t, tp, &fam(1.0, 2.0), &quad).unwrap();
            assert!(r.abs() < 1e-7, "z={z} t={t} t'={tp}: {r}");
        }
        assert!(smearing_consistency_residual(1.0, 1.0, 1.0, &fam(1.0, 2.0), &quad).is_err());
    }

    /// Finite-τ moment rates in closed form: with `T = t + τ`,
    /// `x − v = τ(u − v)/T` and `u ~ Gamma(cτ, bτ)`.
    fn moment_rates_closed_form(n: u32, v: f64, t: f64, tau: f64, g: &GammaFamily) -> f64 {
        let big_t = t + tau;
        let d = g.mean() - v;
        match n {
            1 => d / big_t,
            2 => tau / (2.0 * big_t * big_t) * (g.c() / (g.b() * g.b() * tau) + d * d),
            _ => unreachable!(),
        }
    }

    #[test]
    fn moment_rates_match_closed_form() {
        let g = fam(1.0, 2.0);
        let quad = km_quadrature_config();
        for &(v, t) in &[(1.0, 1.0), (4.0, 0.5), (2.0, 2.0)] {
            for tau in default_tau_sequence(t) {
                for n in [1, 2] {
                    let got = km_moment_rate(n, v, t, tau, &g, &quad).unwrap();
                    let want = moment_rates_closed_form(n, v, t, tau, &g);
                    // the 1 − 1e−12 truncation costs about q²·1e−12 in the second moment
                    assert!(
                        (got - want).abs() < 1e-7 * (1.0 + want.abs()),
                        "n={n} v={v} t={t} tau={tau}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn estimates_match_closed_forms() {
        let g = fam(1.0, 2.0);
        let quad = km_quadrature_config();
        let k1 = km_coefficient_estimate(1, 1.0, 1.0, &g, &default_tau_sequence(1.0), &quad).unwrap();
        assert!((k1.value - 1.0).abs() < 1e-2);
        let k2 = km_coefficient_estimate(2, 1.0, 1.0, &g, &default_tau_sequence(1.0), &quad).unwrap();
        assert!((k2.value - 1.0).abs() < 1e-2);
        let fixed = km_coefficient_estimate(1, 2.0, 1.0, &g, &default_tau_sequence(1.0), &quad).unwrap();
        assert!(fixed.value.abs() < 1e-6 + fixed.extrapolation_error);
    }

    #[test]
    fn analytic_examples() {
        let g = fam(2.0, 2.0);
        assert_relative_eq!(km_analytic_gamma(1, 0.5, 2.0, &g).unwrap(), 0.25);
        assert_relative_eq!(km_analytic_gamma(2, 0.5, 2.0, &g).unwrap(), 0.0625);
        assert_eq!(km_analytic_gamma(1, 1.0, 3.0, &g).unwrap(), 0.0);
        assert!(km_analytic_gamma(3, 1.0, 1.0, &g).is_err());
    }

    #[test]
    fn x_coefficients() {
        let (d1, d2) = x_process_coefficients(0.04, &HamiltonianSpec::new(0.05)).unwrap();
        assert_relative_eq!(d1, 0.03, max_relative = 1e-14);
        assert_relative_eq!(d2, 0.02, max_relative = 1e-14);
        let (d1, _) = x_process_coefficients(0.1, &HamiltonianSpec::new(0.05)).unwrap();
        assert_eq!(d1, 0.0);
        assert!(x_process_coefficients(0.0, &HamiltonianSpec::new(0.05)).is_err());
    }

    #[test]
    fn rejects_bad_tau_sequences() {
        let g = fam(1.0, 2.0);
        let quad = km_quadrature_config();
        assert!(km_coefficient_estimate(1, 1.0, 1.0, &g, &[0.01, 0.02, 0.04, 0.08], &quad).is_err());
        assert!(km_coefficient_estimate(1, 1.0, 1.0, &g, &[0.04, 0.02, 0.01], &quad).is_err());
        assert!(km_coefficient_estimate(0, 1.0, 1.0, &g, &default_tau_sequence(1.0), &quad).is_err());
    }
}
