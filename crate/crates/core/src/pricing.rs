//! European options on `S = S₀ eˣ` under the smeared martingale density.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::family::GammaFamily;
use crate::propagator::{
    density_via_fourier, share_density_via_fourier, DensityGrid, GridSpec, HamiltonianSpec, VarianceLaw,
};
use crate::quad::{integrate, QuadratureConfig};
use crate::sim::{simulate, SimConfig};
use crate::stats::mean_stderr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

impl std::str::FromStr for OptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "call" => Ok(OptionKind::Call),
            "put" => Ok(OptionKind::Put),
            _ => Err(Error::invalid(format!("option kind must be call or put, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
    pub spot: f64,
    pub rate: f64,
    pub kind: OptionKind,
}

impl OptionSpec {
    pub fn new(strike: f64, maturity: f64, spot: f64, rate: f64, kind: OptionKind) -> Result<Self> {
        let o = Self {
            strike,
            maturity,
            spot,
            rate,
            kind,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike >= 0.0 && self.maturity > 0.0 && self.spot > 0.0 && self.rate.is_finite()) {
            return Err(Error::invalid("need strike >= 0, maturity > 0, spot > 0"));
        }
        Ok(())
    }

    pub fn payoff(&self, s: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (s - self.strike).max(0.0),
            OptionKind::Put => (self.strike - s).max(0.0),
        }
    }

    pub fn with_kind(self, kind: OptionKind) -> Self {
        Self { kind, ..self }
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.maturity).exp()
    }
}

/// Payoff contribution allowed beyond 90% of the grid half width.
pub const TAIL_TOL: f64 = 1e-9;
/// Number of 1.5× widenings tried before giving up.
pub const MAX_WIDENINGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierPrice {
    pub price: f64,
    pub tail_contribution: f64,
    pub grid: GridSpec,
}

/// `∫ g(x) D(x) dx` by the trapezoid rule, with the cell holding the kink of `g`
/// integrated exactly against the linear interpolant of `D`. Also returns the
/// part contributed beyond 90% of the half width.
fn payoff_integral<G: Fn(f64) -> f64>(g: G, kink: Option<f64>, density: &DensityGrid) -> Result<(f64, f64)> {
    let grid = density.grid;
    let edge = 0.45 * grid.n as f64 * grid.dx;
    let vals = &density.values;
    let n = vals.len();
    let kink_cell = kink
        .map(|k| ((k - grid.x_min()) / grid.dx).floor())
        .filter(|&c| c >= 0.0 && c < (n - 1) as f64)
        .map(|c| c as usize);
    let (mut body, mut tail) = (0.0, 0.0);
    for j in 0..n - 1 {
        let (x0, x1) = (grid.x(j), grid.x(j + 1));
        let cell = if Some(j) == kink_cell {
            let k = kink.unwrap();
            let lin = |x: f64| vals[j] + (vals[j + 1] - vals[j]) * (x - x0) / grid.dx;
            let q = QuadratureConfig::with_tolerances(1e-16, 1e-12);
            integrate(|x| g(x) * lin(x), x0, k, &q)?.value + integrate(|x| g(x) * lin(x), k, x1, &q)?.value
        } else {
            0.5 * grid.dx * (g(x0) * vals[j] + g(x1) * vals[j + 1])
        };
        body += cell;
        if (x0 - grid.x_a).abs() > edge {
            tail += cell.abs();
        }
    }
    Ok((body, tail))
}

/// Price for one grid: calls under the share measure, puts under `P`.
fn price_on_grid(opt: &OptionSpec, grid: &GridSpec, law: &VarianceLaw, spec: &HamiltonianSpec) -> Result<(f64, f64)> {
    let (s, k) = (opt.spot, opt.strike);
    let kink = (k > 0.0).then(|| (k / s).ln());
    match opt.kind {
        OptionKind::Call => {
            // e^{−rT} E[(S eˣ − K)⁺] = E_Q[(S − K e^{−x})⁺]
            let q = share_density_via_fourier(grid, opt.maturity, law, spec)?;
            payoff_integral(|x| (s - k * (-x).exp()).max(0.0), kink, &q)
        }
        OptionKind::Put => {
            let p = density_via_fourier(grid, opt.maturity, law, spec)?;
            let (body, tail) = payoff_integral(|x| (k - s * x.exp()).max(0.0), kink, &p)?;
            Ok((opt.discount() * body, opt.discount() * tail))
        }
    }
}

/// `e^{−rT} ∫ payoff(S₀eˣ) P(x, T) dx` with densities from the Fourier route.
///
/// The call is evaluated in the equivalent form `∫ (S₀ − K e^{−x})⁺ Q(x, T) dx`
/// with `Q = e^{x − rT} P`, which keeps the integrand bounded.
pub fn price_fourier(opt: &OptionSpec, family: &GammaFamily) -> Result<FourierPrice> {
    opt.validate()?;
    let law = VarianceLaw::Gamma(*family);
    let spec = HamiltonianSpec::new(opt.rate);
    let mut widen = 1.0;
    let mut last_tail = f64::NAN;
    for _ in 0..=MAX_WIDENINGS {
        let grid = GridSpec::auto_scaled(0.0, opt.maturity, &law, &spec, widen)?;
        let (price, tail) = price_on_grid(opt, &grid, &law, &spec)?;
        if tail < TAIL_TOL {
            return Ok(FourierPrice {
                price,
                tail_contribution: tail,
                grid,
            });
        }
        last_tail = tail;
        widen *= 1.5;
    }
    Err(Error::Grid(format!(
        "payoff tail contribution {last_tail:e} still above {TAIL_TOL:e} after {MAX_WIDENINGS} widenings"
    )))
}

/// Black-Scholes price with total variance `variance·T`.
pub fn black_scholes(opt: &OptionSpec, variance: f64) -> f64 {
    let n = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let sd = (variance * opt.maturity).sqrt();
    let k = opt.strike * opt.discount();
    if opt.strike == 0.0 {
        return match opt.kind {
            OptionKind::Call => opt.spot,
            OptionKind::Put => 0.0,
        };
    }
    let d1 = ((opt.spot / k).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    match opt.kind {
        OptionKind::Call => opt.spot * n(d1) - k * n(d2),
        OptionKind::Put => k * n(-d2) - opt.spot * n(-d1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPrice {
    pub price: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

/// Monte Carlo price: the simulation window is `[t0, t0 + T]` with drift `r`
/// taken from the option, so `sim.t_end` and `sim.r` are overridden.
pub fn price_mc(opt: &OptionSpec, sim: &SimConfig) -> Result<McPrice> {
    opt.validate()?;
    let cfg = SimConfig {
        r: opt.rate,
        t_end: sim.t0 + opt.maturity,
        record_stride: usize::MAX,
        ..sim.clone()
    };
    let ens = simulate(&cfg)?;
    let disc = opt.discount();
    let payoffs: Vec<f64> = ens
        .terminal_x()
        .iter()
        .map(|x| disc * opt.payoff(opt.spot * (x - cfg.x0).exp()))
        .collect();
    let (price, std_err) = mean_stderr(&ens.pair_average(&payoffs));
    Ok(McPrice {
        price,
        std_err,
        n_paths: cfg.n_paths,
    })
}
