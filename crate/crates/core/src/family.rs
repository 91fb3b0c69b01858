//! Smearing-distribution families.
//!
//! A family is fixed by its exponent function `F` with `F(0) = 0`. Families
//! that preserve the Chapman-Kolmogorov equation have Laplace image
//! `ω̃(ξ, t) = exp(-t F(ξ/t))` for `t > 0` and `κ^ξ` at `t = 0`. The Gamma
//! family `F(x) = c log(1 + x/b)` has the closed-form density
//! `ω(v, t) = (bt)^{ct} v^{ct-1} e^{-btv} / Γ(ct)`.
//!
//! Families whose image is *not* of that form are representable too
//! ([`ImageForm::TimeIndependent`]) so the residual checkers can show
//! violations, not only confirmations.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::{Scalar, TaylorJet};
use crate::quad::{integrate_power_weighted, QuadratureConfig};

/// Gamma smearing family with rate scale `b > 0` and shape scale `c >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFamily {
    b: f64,
    c: f64,
}

impl GammaFamily {
    pub fn new(b: f64, c: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::invalid(format!("gamma family needs b > 0, got {b}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("gamma family needs c >= 0, got {c}")));
        }
        Ok(Self { b, c })
    }

    /// Family with prescribed mean `v̄ = c/b`.
    pub fn with_mean(mean: f64, c: f64) -> Result<Self> {
        if !(mean > 0.0) {
            return Err(Error::invalid("mean variance must be positive"));
        }
        Self::new(c / mean, c)
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `v̄ = c / b`, the mean of `ω(·, t)` for every `t > 0`.
    pub fn mean(&self) -> f64 {
        self.c / self.b
    }

    pub fn shape(&self, t: f64) -> f64 {
        self.c * t
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.b * t
    }

    /// `F(x) = c log(1 + x/b)`, defined for `x > -b`.
    pub fn exponent(&self, x: f64) -> Result<f64> {
        if x <= -self.b {
            return Err(Error::Domain(format!(
                "gamma exponent undefined at x = {x} (needs x > -b = {})",
                -self.b
            )));
        }
        Ok(self.c * (x / self.b).ln_1p())
    }

    pub fn image(&self, xi: f64, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(1.0);
        }
        Ok((-t * self.exponent(xi / t)?).exp())
    }

    fn check_density_args(&self, v: f64, t: f64) -> Result<()> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("density needs t > 0, got {t}")));
        }
        if !(v > 0.0) {
            return Err(Error::invalid(format!("density needs v > 0, got {v}")));
        }
        if self.c * t == 0.0 {
            return Err(Error::Degenerate(
                "c*t = 0: the smearing is the delta distribution at v = 0".into(),
            ));
        }
        Ok(())
    }

    pub fn ln_density(&self, v: f64, t: f64) -> Result<f64> {
        self.check_density_args(v, t)?;
        let (k, r) = (self.shape(t), self.rate(t));
        Ok(k * r.ln() + (k - 1.0) * v.ln() - r * v - ln_gamma(k))
    }

    /// `ω(v, t)`, the Gamma density with shape `ct` and rate `bt`.
    pub fn density(&self, v: f64, t: f64) -> Result<f64> {
        self.ln_density(v, t).map(f64::exp)
    }

    /// Total version of [`density`](Self::density) on `v >= 0` used inside
    /// integrands: the value at `v = 0` is the right limit when finite and 0
    /// where the density diverges.
    pub fn density_at(&self, v: f64, t: f64) -> f64 {
        let k = self.shape(t);
        if v < 0.0 || !(t > 0.0) || k == 0.0 {
            return 0.0;
        }
        if v == 0.0 {
            return if k == 1.0 { self.rate(t) } else { 0.0 };
        }
        let r = self.rate(t);
        (k * r.ln() + (k - 1.0) * v.ln() - r * v - ln_gamma(k)).exp()
    }

    pub fn cdf(&self, v: f64, t: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        gamma_lr(self.shape(t), self.rate(t) * v)
    }

    pub fn quantile(&self, p: f64, t: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("quantile level must be in (0, 1), got {p}")));
        }
        let (k, r) = (self.shape(t), self.rate(t));
        if !(k > 0.0 && r > 0.0) {
            return Err(Error::Degenerate("gamma quantile needs c*t > 0".into()));
        }
        // statrs' inverse cdf loses its bracket for very large shapes; bisect instead
        let (mut lo, mut hi) = (0.0, k / r + 10.0 * k.sqrt() / r + 1.0 / r);
        while gamma_lr(k, r * hi) < p {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gamma_lr(k, r * mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// How the exponent enters the Laplace image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageForm {
    /// `exp(-t F(ξ/t))`: the general Chapman-Kolmogorov preserving solution.
    #[default]
    Cke,
    /// `exp(-F(ξ))`: the same weights at every time (an ad-hoc smearing).
    TimeIndependent,
}

#[derive(Debug, Clone)]
pub enum Exponent {
    Gamma(GammaFamily),
    Custom { source: String, expr: Expr },
}

#[derive(Debug, Clone)]
pub struct SmearingFamily {
    exponent: Exponent,
    form: ImageForm,
    kappa: f64,
    label: String,
}

impl SmearingFamily {
    pub fn gamma(b: f64, c: f64) -> Result<Self> {
        let g = GammaFamily::new(b, c)?;
        Ok(Self {
            exponent: Exponent::Gamma(g),
            form: ImageForm::Cke,
            // lim_{t->0} (bt/(ξ+bt))^{ct} = 1
            kappa: 1.0,
            label: format!("gamma(b={b}, c={c})"),
        })
    }

    pub fn from_gamma(g: GammaFamily) -> Self {
        Self::gamma(g.b(), g.c()).expect("already validated")
    }

    /// Gamma(c, b) weights frozen in time: not a solution, used as a memory control.
    pub fn time_independent_gamma(b: f64, c: f64) -> Result<Self> {
        let mut f = Self::gamma(b, c)?;
        f.form = ImageForm::TimeIndependent;
        f.label = format!("time-independent gamma(b={b}, c={c})");
        Ok(f)
    }

    /// A family from an exponent expression in `x`.
    ///
    /// Rejected unless `F(0) = 0` and `F` is finite on `[0, ∞)` (probed on a
    /// logarithmic grid up to 1e8).
    pub fn custom(source: &str, form: ImageForm, kappa: f64) -> Result<Self> {
        let expr = Expr::parse(source)?;
        let f0 = expr.eval_f64(0.0);
        if !(f0.abs() <= 1e-12) {
            return Err(Error::Config(format!(
                "custom exponent must satisfy F(0) = 0, got F(0) = {f0}"
            )));
        }
        for i in 0..=160 {
            let x = 10f64.powf(-8.0 + 0.1 * i as f64);
            let fx = expr.eval_f64(x);
            if !fx.is_finite() {
                return Err(Error::Config(format!(
                    "custom exponent is not finite on [0, inf): F({x:e}) = {fx}"
                )));
            }
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Config("kappa must be positive".into()));
        }
        Ok(Self {
            exponent: Exponent::Custom {
                source: source.to_string(),
                expr,
            },
            form,
            kappa,
            label: format!("custom F(x) = {source}"),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn form(&self) -> ImageForm {
        self.form
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn exponent_kind(&self) -> &Exponent {
        &self.exponent
    }

    pub fn as_gamma(&self) -> Option<&GammaFamily> {
        match &self.exponent {
            Exponent::Gamma(g) => Some(g),
            Exponent::Custom { .. } => None,
        }
    }

    /// `F(x)`.
    pub fn exponent(&self, x: f64) -> Result<f64> {
        let v = match &self.exponent {
            Exponent::Gamma(g) => g.exponent(x)?,
            Exponent::Custom { expr, .. } => expr.eval_f64(x),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("exponent undefined at x = {x}")))
        }
    }

    /// `F` applied to a jet.
    pub fn exponent_jet(&self, x: &TaylorJet) -> Result<TaylorJet> {
        let out = match &self.exponent {
            Exponent::Gamma(g) => {
                if x.value() <= -g.b() {
                    return Err(Error::Domain(format!("gamma exponent undefined at x = {}", x.value())));
                }
                (x.clone() * (1.0 / g.b()) + 1.0).ln() * g.c()
            }
            Exponent::Custom { expr, .. } => expr.eval(x),
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Domain(format!("exponent undefined at x = {}", x.value())))
        }
    }

    /// The Laplace image `ω̃(ξ, t)`.
    pub fn image(&self, xi: f64, t: f64) -> Result<f64> {
        if !xi.is_finite() || !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!(
                "image needs finite xi and t >= 0, got ({xi}, {t})"
            )));
        }
        let v = match self.form {
            ImageForm::Cke if t == 0.0 => self.kappa.powf(xi),
            ImageForm::Cke => (-t * self.exponent(xi / t)?).exp(),
            ImageForm::TimeIndependent => (-self.exponent(xi)?).exp(),
        };
        Ok(v)
    }

    /// The image evaluated on a jet in `ξ` (for `t > 0`).
    pub fn image_jet(&self, xi: &TaylorJet, t: f64) -> Result<TaylorJet> {
        if !(t > 0.0) {
            return Err(Error::invalid("jet image needs t > 0"));
        }
        let out = match self.form {
            ImageForm::Cke => (self.exponent_jet(&(xi.clone() * (1.0 / t)))? * (-t)).exp(),
            ImageForm::TimeIndependent => (-self.exponent_jet(xi)?).exp(),
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Overflow {
                context: "image jet".into(),
            })
        }
    }

    /// Closed-form smearing density where one exists (Gamma exponents).
    pub fn density(&self, v: f64, t: f64) -> Result<f64> {
        match (&self.exponent, self.form) {
            (Exponent::Gamma(g), ImageForm::Cke) => g.density(v, t),
            (Exponent::Gamma(g), ImageForm::TimeIndependent) => g.density(v, 1.0),
            (Exponent::Custom { .. }, _) => Err(Error::invalid(
                "custom families have no closed-form density; use Post inversion",
            )),
        }
    }
}

/// `ω̃(ξ,t) ω̃(αξ,αt) − ω̃(ξ+αξ, t+αt)`; identically zero for solutions.
pub fn functional_equation_residual(family: &SmearingFamily, xi: f64, t: f64, alpha: f64) -> Result<f64> {
    if !(xi > 0.0 && t > 0.0 && alpha > 0.0) {
        return Err(Error::invalid("functional equation residual needs xi, t, alpha > 0"));
    }
    let lhs = family.image(xi, t)? * family.image(alpha * xi, alpha * t)?;
    let rhs = family.image(xi + alpha * xi, t + alpha * t)?;
    Ok(lhs - rhs)
}

/// Parameters `(a, b)` of the convolution identity with `1 + 1/a = 1/b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CkePair {
    pub a: f64,
    pub b_cke: f64,
}

impl CkePair {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid("CKE pair needs a > 0"));
        }
        Ok(Self {
            a,
            b_cke: a / (a + 1.0),
        })
    }
}

/// `∫₀^z ω(z′,t) a ω(a(z−z′), t/a) dz′ − b ω(bz, t/b)` with `b = a/(a+1)`.
pub fn convolution_identity_residual(
    family: &GammaFamily,
    z: f64,
    t: f64,
    a: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if !(z > 0.0 && t > 0.0) {
        return Err(Error::invalid("convolution identity needs z, t > 0"));
    }
    let pair = CkePair::new(a)?;
    let t2 = t / a;
    let (k1, r1) = (family.shape(t), family.rate(t));
    let (k2, r2) = (family.shape(t2), family.rate(t2));
    let ln_norm = |k: f64, r: f64| k * r.ln() - ln_gamma(k);
    let half = 0.5 * z;
    // each half carries one power singularity; the right half runs in w = z − z′
    // so a·w is never formed by cancellation
    let left = integrate_power_weighted(
        k1,
        half,
        ln_norm(k1, r1),
        |zp| (-r1 * zp).exp() * a * family.density_at(a * (z - zp), t2),
        quad,
    )?;
    let right = integrate_power_weighted(
        k2,
        half,
        a.ln() + ln_norm(k2, r2) + (k2 - 1.0) * a.ln(),
        |w| family.density_at(z - w, t) * (-r2 * a * w).exp(),
        quad,
    )?;
    let rhs = pair.b_cke * family.density_at(pair.b_cke * z, t / pair.b_cke);
    Ok(left + right - rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub xi: f64,
    pub t: f64,
    pub alpha: f64,
    pub residual: f64,
}

/// Log-spaced sweep: ξ ∈ [0.1, 10] and t ∈ [0.1, 5] (5 points each),
/// α ∈ {1/4, 1/2, 1, 2, 4}; 125 rows.
pub fn residual_grid(family: &SmearingFamily) -> Result<Vec<ResidualRow>> {
    let logspace = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect()
    };
    let mut rows = Vec::with_capacity(125);
    for &xi in &logspace(0.1, 10.0, 5) {
        for &t in &logspace(0.1, 5.0, 5) {
            for alpha in [0.25, 0.5, 1.0, 2.0, 4.0] {
                let residual = functional_equation_residual(family, xi, t, alpha)?;
                rows.push(ResidualRow { xi, t, alpha, residual });
            }
        }
    }
    Ok(rows)
}

/// Counts grid points where `(-1)^n Δ_h^n ω̃(ξ, t) < -tol` for `n = 1..=order`.
///
/// Laplace images of positive measures are completely monotone, so a
/// valid smearing family yields zero violations.
pub fn monotonicity_violations(family: &SmearingFamily, t: f64, order: usize, tol: f64) -> Result<usize> {
    let h = 0.25;
    let n_pts = 41 + order;
    let vals: Vec<f64> = (0..n_pts)
        .map(|i| family.image(i as f64 * h, t))
        .collect::<Result<_>>()?;
    let mut violations = 0;
    let mut diff = vals;
    for n in 1..=order {
        diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
        let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
        violations += diff.iter().filter(|&&d| sign * d < -tol).count();
    }
    Ok(violations)
}

/// On-disk family description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    Gamma {
        b: f64,
        c: f64,
        #[serde(default, skip_serializing_if = "is_cke")]
        form: ImageForm,
    },
    Custom {
        #[serde(rename = "F")]
        exponent: String,
        #[serde(default, skip_serializing_if = "is_cke")]
        form: ImageForm,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
    },
}

fn is_cke(f: &ImageForm) -> bool {
    *f == ImageForm::Cke
}

impl FamilySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("family file: {e}")))
    }

    pub fn build(&self) -> Result<SmearingFamily> {
        match self {
            FamilySpec::Gamma { b, c, form } => match form {
                ImageForm::Cke => SmearingFamily::gamma(*b, *c),
                ImageForm::TimeIndependent => SmearingFamily::time_independent_gamma(*b, *c),
            },
            FamilySpec::Custom { exponent, form, kappa } => {
                SmearingFamily::custom(exponent, *form, kappa.unwrap_or(1.0))
            }
        }
    }
}
