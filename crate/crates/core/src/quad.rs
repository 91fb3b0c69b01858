//! Globally adaptive Gauss-Kronrod (10/21 point) quadrature.
//!
//! Intervals are kept in a max-heap keyed on their error estimate and the
//! worst one is bisected until the summed estimate meets
//! `max(abs_tol, rel_tol * |I|)`. Semi-infinite ranges are mapped onto a
//! finite one with `v = a + L * u / (1 - u)`. Integrable algebraic endpoint
//! singularities `(x - a)^(alpha - 1)` are removed with `x = a + h * s^(1/alpha)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

impl QuadratureConfig {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod evaluation with the QUADPACK error heuristic.
#[allow(clippy::needless_range_loop)]
fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut res_g = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..5 {
        let jt = 2 * j + 1;
        let dx = half * XGK[jt];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jt] = f1;
        fv2[jt] = f2;
        res_g += WG[j] * (f1 + f2);
        res_k += WGK[jt] * (f1 + f2);
        res_abs += WGK[jt] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jt = 2 * j;
        let dx = half * XGK[jt];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jt] = f1;
        fv2[jt] = f2;
        res_k += WGK[jt] * (f1 + f2);
        res_abs += WGK[jt] * (f1.abs() + f2.abs());
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("integration limits must be finite"));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_error: 0.0,
            intervals: 0,
        });
    }
    let (value, error) = kronrod21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::NonFinite("quadrature integrand".into()));
        }
        if total_err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            break;
        }
        if heap.len() >= cfg.max_intervals {
            return Err(Error::Quadrature {
                value: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval exhausted at floating resolution
            return Err(Error::Quadrature {
                value: total,
                error: total_err,
                intervals: heap.len() + 1,
            });
        }
        let (v1, e1) = kronrod21(&f, worst.a, mid);
        let (v2, e2) = kronrod21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum in interval order so the value does not depend on bisection history
    let mut segs = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = segs.iter().map(|s| s.value).sum();
    let abs_error = segs.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        abs_error,
        intervals: segs.len(),
    })
}

/// Integrates `f` over `[a, ∞)` through `v = a + scale * u / (1 - u)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid("semi-infinite map scale must be positive"));
    }
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - u;
        let v = a + scale * u / w;
        let fv = f(v);
        if fv == 0.0 {
            0.0
        } else {
            fv * scale / (w * w)
        }
    };
    integrate(g, 0.0, 1.0, cfg)
}

/// Integrates over `[a, b]` an integrand behaving like
/// `(x - a)^(left - 1)` near `a` and `(b - x)^(right - 1)` near `b`.
///
/// Exponents `>= 1` mean the endpoint is regular and no map is applied.
/// The closure must tolerate being called exactly at an endpoint, which can
/// happen when the substituted abscissa rounds onto it.
pub fn integrate_endpoint_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    if !(left > 0.0 && right > 0.0) {
        return Err(Error::invalid("endpoint exponents must be positive (integrable)"));
    }
    if a == b {
        return integrate(f, a, b, cfg);
    }
    let m = 0.5 * (a + b);
    let h = m - a;
    let left_part = if left < 1.0 {
        let p = 1.0 / left;
        integrate(
            |s: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let x = a + h * s.powf(p);
                let fx = f(x);
                if fx == 0.0 {
                    0.0
                } else {
                    fx * h * p * s.powf(p - 1.0)
                }
            },
            0.0,
            1.0,
            cfg,
        )?
    } else {
        integrate(&f, a, m, cfg)?
    };
    let right_part = if right < 1.0 {
        let p = 1.0 / right;
        integrate(
            |s: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let x = b - h * s.powf(p);
                let fx = f(x);
                if fx == 0.0 {
                    0.0
                } else {
                    fx * h * p * s.powf(p - 1.0)
                }
            },
            0.0,
            1.0,
            cfg,
        )?
    } else {
        integrate(&f, m, b, cfg)?
    };
    Ok(QuadResult {
        value: left_part.value + right_part.value,
        abs_error: left_part.abs_error + right_part.abs_error,
        intervals: left_part.intervals + right_part.intervals,
    })
}

/// `∫₀^h x^{k−1} g(x) dx` for `k > 0`.
///
/// The map `x = h s^{1/k}` absorbs the power factor exactly, leaving
/// `h^k/k ∫₀¹ g(h s^{1/k}) ds` with a bounded integrand. `ln_prefactor` is
/// added to `ln(h^k/k)` before exponentiating, so large normalizers stay in range.
pub fn integrate_power_weighted<F: Fn(f64) -> f64>(
    k: f64,
    h: f64,
    ln_prefactor: f64,
    g: F,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(k > 0.0 && h > 0.0) {
        return Err(Error::invalid("power-weighted integral needs k > 0 and h > 0"));
    }
    let r = integrate(|s: f64| g(h * s.powf(1.0 / k)), 0.0, 1.0, cfg)?;
    Ok((ln_prefactor + k * h.ln() - k.ln()).exp() * r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_weighted_small_exponent() {
        // ∫₀¹ x^{k−1} e^{−x} dx = γ(k, 1), against the series Σ (−1)^n / (n! (n + k))
        let k = 0.01;
        let want: f64 = (0..30)
            .map(|n| {
                let fact: f64 = (1..=n).map(f64::from).product();
                (-1f64).powi(n) / (fact * (n as f64 + k))
            })
            .sum();
        let got = integrate_power_weighted(k, 1.0, 0.0, |x| (-x).exp(), &QuadratureConfig::default()).unwrap();
        assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
    }

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, &QuadratureConfig::default()).unwrap();
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn exponential_tail() {
        let r = integrate_semi_infinite(|x| (-x).exp(), 0.0, 1.0, &QuadratureConfig::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn gaussian_tail_with_offset() {
        let r = integrate_semi_infinite(
            |x| (-0.5 * x * x).exp(),
            1.0,
            1.0,
            &QuadratureConfig::with_tolerances(0.0, 1e-12),
        )
        .unwrap();
        // erfc(1/sqrt 2) * sqrt(pi/2)
        let expected = 0.158_655_253_931_457_05 * (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value - expected).abs() < 1e-12);
    }

    #[test]
    fn algebraic_singularities_at_both_ends() {
        // Beta(0.3, 0.6) normaliser: B(0.3, 0.6) = Γ(0.3)Γ(0.6)/Γ(0.9)
        let f = |x: f64| x.powf(-0.7) * (1.0 - x).powf(-0.4);
        let r =
            integrate_endpoint_singular(f, 0.0, 1.0, 0.3, 0.6, &QuadratureConfig::with_tolerances(0.0, 1e-12)).unwrap();
        let g = statrs::function::gamma::gamma;
        let expected = g(0.3) * g(0.6) / g(0.9);
        assert!(
            (r.value - expected).abs() < 1e-10 * expected,
            "{} vs {expected}",
            r.value
        );
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = QuadratureConfig {
            max_intervals: 8,
            ..QuadratureConfig::default()
        };
        let err = integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
