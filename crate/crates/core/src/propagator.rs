//! Smeared transition densities for the martingale Hamiltonian
//! `H(p) = p²/2 + ip(r/v − 1/2)`, split as `vH = vH₁ + H₂` with
//! `H₁ = p²/2 − ip/2` and `H₂ = ipr`.
//!
//! For fixed `v` the path integral is the Gaussian kernel with mean
//! `(r − v/2)t` and variance `vt`. Smearing over `v` is done two ways:
//! quadrature of the `v`-mixture at each node, and FFT inversion of the
//! effective characteristic function `exp(−tH₂(p)) ω̃(tH₁(p), t)`.
//!
//! Convention: `φ(p) = E[exp(−ipX)]`, so `P(x) = (1/2π) ∫ exp(ipx) φ(p) dp`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{GammaFamily, ImageForm, SmearingFamily};
use crate::quad::{integrate_endpoint_singular, integrate_semi_infinite, QuadratureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub r: f64,
}

impl HamiltonianSpec {
    pub fn new(r: f64) -> Self {
        Self { r }
    }

    /// `H₁(p) = p²/2 − ip/2`; `Re H₁ ≥ 0` on the real axis.
    pub fn h1(&self, p: Complex64) -> Complex64 {
        p * p * 0.5 - Complex64::i() * p * 0.5
    }

    /// `H₂(p) = ipr`; commutes with `H₁` (both depend on `p` only).
    pub fn h2(&self, p: Complex64) -> Complex64 {
        Complex64::i() * p * self.r
    }

    /// `(D⁽¹⁾, D⁽²⁾) = (r − v/2, v/2)` for the log-price.
    pub fn x_coefficients(&self, v: f64) -> (f64, f64) {
        (self.r - 0.5 * v, 0.5 * v)
    }
}

/// Normal density in the displacement `x` with mean `(r − v/2)t`, variance `vt`.
pub fn kernel_density_v(x: f64, t: f64, v: f64, spec: &HamiltonianSpec) -> f64 {
    let var = v * t;
    let d = x - (spec.r - 0.5 * v) * t;
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

/// The law of the variance parameter that is mixed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum VarianceLaw {
    /// `ω(·, t)`: Gamma with shape `ct` and rate `bt`.
    Gamma(GammaFamily),
    /// Gamma(c, b) for every window length: an ad-hoc mixture with memory.
    TimeIndependentGamma(GammaFamily),
    /// No smearing.
    Fixed { v: f64 },
}

impl VarianceLaw {
    pub fn from_family(family: &SmearingFamily) -> Result<Self> {
        let g = *family
            .as_gamma()
            .ok_or_else(|| Error::invalid("propagators are implemented for Gamma exponents only"))?;
        Ok(match family.form() {
            ImageForm::Cke => VarianceLaw::Gamma(g),
            ImageForm::TimeIndependent => VarianceLaw::TimeIndependentGamma(g),
        })
    }

    /// Gamma (shape, rate) of the weights at window `t`, or `None` for a point mass.
    fn gamma_params(&self, t: f64) -> Option<(f64, f64)> {
        match self {
            VarianceLaw::Gamma(g) => Some((g.shape(t), g.rate(t))),
            VarianceLaw::TimeIndependentGamma(g) => Some((g.c(), g.b())),
            VarianceLaw::Fixed { .. } => None,
        }
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(t > 0.0) {
            return Err(Error::invalid("window length t must be positive"));
        }
        match self.gamma_params(t) {
            Some((k, _)) if !(k > 0.0) => Err(Error::Degenerate("c*t = 0: no smearing density".into())),
            None => match self {
                VarianceLaw::Fixed { v } if !(*v > 0.0) => Err(Error::invalid("fixed variance must be positive")),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            VarianceLaw::Gamma(g) | VarianceLaw::TimeIndependentGamma(g) => g.mean(),
            VarianceLaw::Fixed { v } => *v,
        }
    }

    pub fn quantile(&self, p: f64, t: f64) -> Result<f64> {
        match self {
            VarianceLaw::Gamma(g) => g.quantile(p, t),
            VarianceLaw::TimeIndependentGamma(g) => g.quantile(p, 1.0),
            VarianceLaw::Fixed { v } => Ok(*v),
        }
    }

    /// `E[exp(−ξv)]` continued to complex `ξ` with `Re ξ ≥ 0`.
    pub fn image(&self, xi: Complex64, t: f64) -> Result<Complex64> {
        match self.gamma_params(t) {
            Some((k, rate)) => {
                let base = Complex64::new(1.0, 0.0) + xi / rate;
                if base.re <= 0.0 {
                    return Err(Error::Domain(format!(
                        "1 + ξ/(bt) = {base} leaves the principal branch"
                    )));
                }
                Ok((-k * base.ln()).exp())
            }
            None => Ok((-xi * self.mean()).exp()),
        }
    }
}

/// `φ(p) = exp(−tH₂(p)) · ω̃(tH₁(p), t)` for (possibly complex) `p`.
pub fn char_function_complex(p: Complex64, t: f64, law: &VarianceLaw, spec: &HamiltonianSpec) -> Result<Complex64> {
    Ok((-t * spec.h2(p)).exp() * law.image(t * spec.h1(p), t)?)
}

/// The characteristic function of the smeared propagator at real `p`.
///
/// For the Gamma family this is `(1 + H₁(p)/b)^{−ct} e^{−iprt}`, i.e.
/// `exp(−t [H₂(p) + F(H₁(p))])` with `F(x) = v̄ b log(1 + x/b)`.
pub fn effective_char_function(p: f64, t: f64, family: &GammaFamily, spec: &HamiltonianSpec) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    char_function_complex(Complex64::new(p, 0.0), t, &VarianceLaw::Gamma(*family), spec)
}

/// The effective Hamiltonian `H̄ = F(H)` evaluated at `H = x ≥ 0`.
pub fn effective_hamiltonian(family: &SmearingFamily, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid("effective Hamiltonian needs x >= 0"));
    }
    family.exponent(x)
}

/// Uniform periodic grid `x_j = x_a + (j − n/2)·dx`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_a: f64,
    pub dx: f64,
    pub n: usize,
}

/// Smallest and largest grid sizes [`GridSpec::auto`] will pick.
pub const MIN_GRID: usize = 4096;
pub const MAX_GRID: usize = 1 << 21;
/// `|φ|` allowed at the Nyquist frequency before aliasing is flagged.
pub const NYQUIST_TOL: f64 = 1e-12;

impl GridSpec {
    pub fn new(x_a: f64, half_width: f64, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::Grid(format!("grid size must be a power of two >= 4, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Grid("half width must be positive".into()));
        }
        Ok(Self {
            x_a,
            dx: 2.0 * half_width / n as f64,
            n,
        })
    }

    /// Covers `x_a ± (10 σ_max + |drift|)` with `σ_max = √(q₀.₉₉₉(ω)·t)`, and
    /// refines until `|φ|` at the Nyquist frequency is below [`NYQUIST_TOL`].
    pub fn auto(x_a: f64, t: f64, law: &VarianceLaw, spec: &HamiltonianSpec) -> Result<Self> {
        Self::auto_scaled(x_a, t, law, spec, 1.0)
    }

    /// As [`auto`](Self::auto) with the half width multiplied by `widen`.
    pub fn auto_scaled(x_a: f64, t: f64, law: &VarianceLaw, spec: &HamiltonianSpec, widen: f64) -> Result<Self> {
        law.check(t)?;
        let q = law.quantile(0.999, t)?;
        let half = widen * (10.0 * (q * t).sqrt() + (spec.r.abs() + 0.5 * q) * t);
        let mut n = MIN_GRID;
        loop {
            let g = Self::new(x_a, half, n)?;
            let nyq = char_function_complex(Complex64::new(g.nyquist(), 0.0), t, law, spec)?.norm();
            if nyq < NYQUIST_TOL || n >= MAX_GRID {
                return Ok(g);
            }
            n *= 2;
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_a + (j as f64 - (self.n / 2) as f64) * self.dx
    }

    pub fn x_min(&self) -> f64 {
        self.x(0)
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }
}

/// A sampled transition density `P(x, t | x_a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub t_elapsed: f64,
    /// `|φ|` at the Nyquist frequency for FFT-built densities.
    pub nyquist_modulus: Option<f64>,
}

impl DensityGrid {
    pub fn x_min(&self) -> f64 {
        self.grid.x_min()
    }

    pub fn x_max(&self) -> f64 {
        self.grid.x_max()
    }

    pub fn aliasing_warning(&self) -> bool {
        self.nyquist_modulus.is_some_and(|m| m > NYQUIST_TOL)
    }

    /// Trapezoid rule on the grid.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let n = self.values.len();
        let mut acc = 0.0;
        for (j, &p) in self.values.iter().enumerate() {
            let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            acc += w * f(self.grid.x(j)) * p;
        }
        acc * self.grid.dx
    }

    pub fn total_mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    /// `E[e^{x − x_a}]`; equals `e^{rt}` for a martingale density.
    pub fn exp_moment(&self) -> f64 {
        let x_a = self.grid.x_a;
        self.integrate(|x| (x - x_a).exp())
    }

    pub fn central_moment(&self, k: i32) -> f64 {
        let mean = self.integrate(|x| x) / self.total_mass();
        self.integrate(|x| (x - mean).powi(k))
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let m2 = self.central_moment(2);
        self.central_moment(4) / (m2 * m2) - 3.0
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `P(x,t)` on the grid by inverse FFT of the characteristic function.
pub fn density_via_fourier(grid: &GridSpec, t: f64, law: &VarianceLaw, spec: &HamiltonianSpec) -> Result<DensityGrid> {
    law.check(t)?;
    fourier_density(grid, t, |p| char_function_complex(Complex64::new(p, 0.0), t, law, spec))
}

/// The share-measure density `Q(x,t) = e^{x − rt} P(x,t)`, whose characteristic
/// function is `φ(p + i) e^{−rt}`. It carries the call payoff without
/// amplifying round-off in the right tail of `P`.
pub fn share_density_via_fourier(
    grid: &GridSpec,
    t: f64,
    law: &VarianceLaw,
    spec: &HamiltonianSpec,
) -> Result<DensityGrid> {
    law.check(t)?;
    let growth = (-spec.r * t).exp();
    fourier_density(grid, t, |p| {
        Ok(char_function_complex(Complex64::new(p, 1.0), t, law, spec)? * growth)
    })
}

fn fourier_density<F: Fn(f64) -> Result<Complex64>>(grid: &GridSpec, t: f64, phi: F) -> Result<DensityGrid> {
    let n = grid.n;
    if !n.is_multiple_of(4) {
        return Err(Error::Grid("FFT grid size must be a multiple of 4".into()));
    }
    let dp = 2.0 * PI / (n as f64 * grid.dx);
    let half = (n / 2) as f64;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|m| {
            let v = phi((m as f64 - half) * dp)?;
            Ok(if m % 2 == 0 { v } else { -v })
        })
        .collect::<Result<_>>()?;
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    // with x_j − x_a = (j − n/2)dx and n ≡ 0 mod 4 the phase reduces to (−1)^{m+j}
    let scale = dp / (2.0 * PI);
    let values = buf
        .iter()
        .enumerate()
        .map(|(j, z)| if j % 2 == 0 { z.re * scale } else { -z.re * scale })
        .collect();
    let nyquist_modulus = phi(grid.nyquist())?.norm();
    Ok(DensityGrid {
        grid: *grid,
        values,
        t_elapsed: t,
        nyquist_modulus: Some(nyquist_modulus),
    })
}

/// Default per-node tolerances for the mixture quadrature.
pub fn mixture_quadrature_config() -> QuadratureConfig {
    QuadratureConfig {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_intervals: 2000,
    }
}

/// `∫₀^∞ ω(v,t) kernel(x | v) dv` at a single displacement.
pub fn smeared_density_at(
    x: f64,
    t: f64,
    law: &VarianceLaw,
    spec: &HamiltonianSpec,
    quad: &QuadratureConfig,
) -> Result<f64> {
    law.check(t)?;
    let (k, rate) = match law.gamma_params(t) {
        None => return Ok(kernel_density_v(x, t, law.mean(), spec)),
        Some(p) => p,
    };
    let ln_norm = k * rate.ln() - statrs::function::gamma::ln_gamma(k);
    let integrand = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let var = v * t;
        let d = x - (spec.r - 0.5 * v) * t;
        (ln_norm + (k - 1.0) * v.ln() - rate * v - 0.5 * d * d / var - 0.5 * (2.0 * PI * var).ln()).exp()
    };
    // near v = 0 the integrand is at worst v^{k − 3/2} (at x = rt)
    let left = if k > 0.55 { (k - 0.5).min(1.0) } else { k.min(1.0) };
    let split = k / rate;
    let head = integrate_endpoint_singular(integrand, 0.0, split, left, 1.0, quad)?;
    let tail = integrate_semi_infinite(integrand, split, split, quad)?;
    Ok(head.value + tail.value)
}

/// The `v`-mixture density at each node of `grid` (nodes run in parallel).
pub fn smeared_density_quadrature(
    grid: &GridSpec,
    t: f64,
    law: &VarianceLaw,
    spec: &HamiltonianSpec,
    quad: &QuadratureConfig,
) -> Result<DensityGrid> {
    let xs = grid.xs();
    let values = smeared_density_nodes(&xs, t, law, spec, quad)?;
    Ok(DensityGrid {
        grid: *grid,
        values,
        t_elapsed: t,
        nyquist_modulus: None,
    })
}

/// Mixture density at arbitrary displacements; failures carry the node index.
pub fn smeared_density_nodes(
    xs: &[f64],
    t: f64,
    law: &VarianceLaw,
    spec: &HamiltonianSpec,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    xs.par_iter()
        .enumerate()
        .map(|(node, &x)| {
            smeared_density_at(x, t, law, spec, quad).map_err(|e| Error::QuadratureNode {
                node,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Linear convolution of two equally spaced sequences via zero-padded FFT.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let m = len.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(m, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(m, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    planner.plan_fft_inverse(m).process(&mut fa);
    fa.truncate(len);
    fa.iter().map(|z| z.re / m as f64).collect()
}

/// How the densities entering a CKE check are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    #[default]
    Fourier,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CkeReport {
    pub l1_residual: f64,
    pub direct: DensityGrid,
    pub composed: Vec<f64>,
}

/// L¹ distance between `P(·, t_b | t_a)` and `∫ P(·, t_b | x, t_c) P(x, t_c | t_a) dx`,
/// the latter formed by convolution on the grid.
pub fn cke_residual(
    t_a: f64,
    t_c: f64,
    t_b: f64,
    law: &VarianceLaw,
    spec: &HamiltonianSpec,
    grid: &GridSpec,
    method: DensityMethod,
) -> Result<CkeReport> {
    if !(t_a < t_c && t_c < t_b) {
        return Err(Error::invalid(format!("need t_a < t_c < t_b, got {t_a}, {t_c}, {t_b}")));
    }
    let build = |t: f64| match method {
        DensityMethod::Fourier => density_via_fourier(grid, t, law, spec),
        DensityMethod::Quadrature => smeared_density_quadrature(grid, t, law, spec, &mixture_quadrature_config()),
    };
    let direct = build(t_b - t_a)?;
    let first = build(t_c - t_a)?;
    let second = build(t_b - t_c)?;
    let full = convolve(&second.values, &first.values);
    let n = grid.n;
    // both factors start at −(n/2)dx, so the product grid starts at −n·dx
    let composed: Vec<f64> = (0..n).map(|j| full[j + n / 2] * grid.dx).collect();
    let l1_residual = direct
        .values
        .iter()
        .zip(&composed)
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
        * grid.dx;
    Ok(CkeReport {
        l1_residual,
        direct,
        composed,
    })
}
