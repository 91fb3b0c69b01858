//! Monte Carlo of the coupled log-price / variance system.
//!
//! Three variance dynamics are available, all advancing `x` and `v` on the
//! same clock step `ds` along the elapsed time `s ∈ [t0, t_end]`:
//!
//! * `coupled_exact`: `v` follows the ω-kernel exactly, `(s+ds)v′ = sv + ds·U`
//!   with `U ~ Gamma(c·ds, b·ds)`, and `x` is driven by the accrued variance
//!   `ds·U` (a Variance-Gamma step, no time discretization error).
//! * `coupled_gamma`: Euler steps of `dv = (v̄ − v)/s ds + (1/s)√(v̄/b) dW₂`.
//! * `heston`: Euler steps of `dv = γ(v̄ − v) ds + ε√v dW₂`.
//!
//! For the two Euler models `dx = (r − v/2) ds + √v dW₁` with full truncation
//! (`v⁺ = max(v, 0)` wherever `v` enters `x` or a square root).
//! Each path owns a ChaCha stream keyed by `(seed, path)`, so results do not
//! depend on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::GammaFamily;
use crate::stats::{exp_mean_stderr, ks_one_sample, ks_threshold, ks_two_sample, mean_stderr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    CoupledExact,
    CoupledGamma,
    Heston,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::CoupledExact => "coupled_exact",
            Model::CoupledGamma => "coupled_gamma",
            Model::Heston => "heston",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled_exact" => Ok(Model::CoupledExact),
            "coupled_gamma" => Ok(Model::CoupledGamma),
            "heston" => Ok(Model::Heston),
            _ => Err(Error::invalid(format!("unknown model '{s}'"))),
        }
    }
}

fn default_one() -> f64 {
    1.0
}
fn default_two() -> f64 {
    2.0
}
fn default_t0() -> f64 {
    1.0
}
fn default_t_end() -> f64 {
    2.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_paths() -> usize {
    10_000
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub model: Model,
    #[serde(default = "default_one")]
    pub b: f64,
    #[serde(default = "default_two")]
    pub c: f64,
    #[serde(default)]
    pub r: f64,
    /// Mean-reversion speed γ (heston only).
    #[serde(default = "default_one")]
    pub gamma_rev: f64,
    /// Volatility of variance ε (heston only).
    #[serde(default = "default_one")]
    pub epsilon: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Correlation of W₁ and W₂ (Euler models only).
    #[serde(default)]
    pub rho: f64,
    /// Fixed initial variance instead of a draw from `Gamma(c·t0, b·t0)`.
    #[serde(default)]
    pub v0: Option<f64>,
    /// Pair paths `2i, 2i+1` with negated Gaussian increments.
    #[serde(default)]
    pub antithetic: bool,
    /// Record every `record_stride`-th step (the final step is always kept).
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Use drift `r` for `x` instead of the martingale drift `r − v/2`.
    #[serde(default)]
    pub naive_drift: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SimConfig {
    pub fn v_bar(&self) -> f64 {
        self.c / self.b
    }

    /// Heston parameters matched to the smeared system at window `t_ref`:
    /// `γ = 1/t_ref`, `ε = 1/(t_ref √b)`.
    pub fn heston_matched(mut self, t_ref: f64) -> Self {
        self.model = Model::Heston;
        self.gamma_rev = 1.0 / t_ref;
        self.epsilon = 1.0 / (t_ref * self.b.sqrt());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.b > 0.0 && self.c > 0.0) {
            return bad("b and c must be positive");
        }
        if !(self.t_end > self.t0) {
            return bad("t_end must exceed t0");
        }
        if !(self.dt > 0.0 && self.dt < (self.t_end - self.t0) / 10.0) {
            return bad("dt must be positive and below (t_end - t0)/10");
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return bad("antithetic sampling needs an even n_paths");
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [-1, 1]");
        }
        if self.model == Model::CoupledExact && self.rho != 0.0 {
            return bad("coupled_exact has no second Brownian motion; rho must be 0");
        }
        if !(self.t0 > 0.0) && !(self.model == Model::Heston && self.v0.is_some()) {
            return bad("t0 must be positive: the drift and diffusion of v are singular at s = 0");
        }
        if self.model == Model::Heston && !(self.gamma_rev > 0.0 && self.epsilon >= 0.0) {
            return bad("heston needs gamma_rev > 0 and epsilon >= 0");
        }
        if let Some(v0) = self.v0 {
            if !(v0 >= 0.0 && v0.is_finite()) {
                return bad("v0 must be non-negative");
            }
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1");
        }
        if !(self.r.is_finite() && self.x0.is_finite()) {
            return bad("r and x0 must be finite");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt - 1e-9).ceil() as usize
    }

    /// The step actually used: `(t_end − t0)/n_steps ≤ dt`.
    pub fn ds(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps() as f64
    }

    fn recorded_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_stride).collect();
        if *steps.last().unwrap() != n {
            steps.push(n);
        }
        steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    /// Row-major `n_paths × times.len()`.
    pub x_paths: Vec<f64>,
    /// Row-major `n_paths × times.len()`, clipped at 0.
    pub v_paths: Vec<f64>,
    pub config: SimConfig,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.config.n_paths
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn x(&self, path: usize, ti: usize) -> f64 {
        self.x_paths[path * self.n_times() + ti]
    }

    pub fn v(&self, path: usize, ti: usize) -> f64 {
        self.v_paths[path * self.n_times() + ti]
    }

    pub fn time_index(&self, at_time: f64) -> Result<usize> {
        let tol = 1e-9 * at_time.abs().max(1.0);
        self.times
            .iter()
            .position(|t| (t - at_time).abs() <= tol)
            .ok_or_else(|| Error::invalid(format!("time {at_time} is not on the recorded grid")))
    }

    pub fn x_column(&self, ti: usize) -> Vec<f64> {
        (0..self.n_paths()).map(|p| self.x(p, ti)).collect()
    }

    pub fn v_column(&self, ti: usize) -> Vec<f64> {
        (0..self.n_paths()).map(|p| self.v(p, ti)).collect()
    }

    pub fn terminal_x(&self) -> Vec<f64> {
        self.x_column(self.n_times() - 1)
    }

    /// Averages antithetic partners so the result holds independent samples.
    pub fn pair_average(&self, values: &[f64]) -> Vec<f64> {
        if self.config.antithetic {
            values.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
        } else {
            values.to_vec()
        }
    }
}

struct Stepper {
    cfg: SimConfig,
    ds: f64,
    sqrt_ds: f64,
    v0_dist: Option<Gamma<f64>>,
    increment: Option<Gamma<f64>>,
}

impl Stepper {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let ds = cfg.ds();
        let gamma = |shape: f64, rate: f64| {
            Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Config(format!("gamma sampler: {e}")))
        };
        let v0_dist = match cfg.v0 {
            Some(_) => None,
            None => Some(gamma(cfg.c * cfg.t0, cfg.b * cfg.t0)?),
        };
        let increment = match cfg.model {
            Model::CoupledExact => Some(gamma(cfg.c * ds, cfg.b * ds)?),
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            ds,
            sqrt_ds: ds.sqrt(),
            v0_dist,
            increment,
        })
    }

    fn run(&self, path: usize, record: &[usize], xs: &mut [f64], vs: &mut [f64]) {
        let cfg = &self.cfg;
        let (stream, sign) = if cfg.antithetic {
            ((path / 2) as u64, if path.is_multiple_of(2) { 1.0 } else { -1.0 })
        } else {
            (path as u64, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let normal = |rng: &mut ChaCha8Rng| -> f64 { sign * rng.sample::<f64, _>(StandardNormal) };

        let v_bar = cfg.v_bar();
        let rho_c = (1.0 - cfg.rho * cfg.rho).sqrt();
        let mut x = cfg.x0;
        let mut v = match (&self.v0_dist, cfg.v0) {
            (_, Some(v0)) => v0,
            (Some(d), None) => d.sample(&mut rng),
            (None, None) => unreachable!("validated"),
        };
        let mut next = 0;
        let n = *record.last().unwrap();
        for step in 0..=n {
            if record[next] == step {
                xs[next] = x;
                vs[next] = v.max(0.0);
                next += 1;
            }
            if step == n {
                break;
            }
            let s = cfg.t0 + step as f64 * self.ds;
            match cfg.model {
                Model::CoupledExact => {
                    let u: f64 = self.increment.as_ref().unwrap().sample(&mut rng);
                    let accrued = self.ds * u;
                    let z = normal(&mut rng);
                    let drift = if cfg.naive_drift { 0.0 } else { -0.5 * accrued };
                    x += cfg.r * self.ds + drift + accrued.sqrt() * z;
                    v = (s * v + accrued) / (s + self.ds);
                }
                Model::CoupledGamma | Model::Heston => {
                    let z1 = normal(&mut rng);
                    let z2 = cfg.rho * z1 + rho_c * normal(&mut rng);
                    let vp = v.max(0.0);
                    let drift = if cfg.naive_drift { cfg.r } else { cfg.r - 0.5 * vp };
                    x += drift * self.ds + vp.sqrt() * self.sqrt_ds * z1;
                    v += match cfg.model {
                        Model::CoupledGamma => {
                            (v_bar - v) / s * self.ds + (v_bar / cfg.b).sqrt() / s * self.sqrt_ds * z2
                        }
                        _ => cfg.gamma_rev * (v_bar - v) * self.ds + cfg.epsilon * vp.sqrt() * self.sqrt_ds * z2,
                    };
                }
            }
        }
    }
}

/// Simulates `config.n_paths` independent paths.
pub fn simulate(config: &SimConfig) -> Result<PathEnsemble> {
    config.validate()?;
    let stepper = Stepper::new(config)?;
    let record = config.recorded_steps();
    let ds = config.ds();
    let times: Vec<f64> = record.iter().map(|&k| config.t0 + k as f64 * ds).collect();
    let m = times.len();
    let mut x_paths = vec![0.0; config.n_paths * m];
    let mut v_paths = vec![0.0; config.n_paths * m];
    x_paths
        .par_chunks_mut(m)
        .zip(v_paths.par_chunks_mut(m))
        .enumerate()
        .for_each(|(path, (xs, vs))| stepper.run(path, &record, xs, vs));
    Ok(PathEnsemble {
        times,
        x_paths,
        v_paths,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalTest {
    pub at_time: f64,
    pub ks_statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// KS distance of `v` at `at_time` from `Gamma(c·s, b·s)`.
pub fn marginal_v_test(ensemble: &PathEnsemble, at_time: f64) -> Result<MarginalTest> {
    let ti = ensemble.time_index(at_time)?;
    let cfg = &ensemble.config;
    let fam = GammaFamily::new(cfg.b, cfg.c)?;
    let ks_statistic = ks_one_sample(&ensemble.v_column(ti), |v| fam.cdf(v, at_time));
    let threshold = ks_threshold(ensemble.n_paths());
    Ok(MarginalTest {
        at_time,
        ks_statistic,
        threshold,
        pass: ks_statistic < threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleTest {
    pub ratio: f64,
    pub std_err: f64,
    pub pass: bool,
}

/// Mean of `exp(x_T − x0 − r(T − t0))` against 1 with a 3-standard-error band.
pub fn martingale_test(ensemble: &PathEnsemble) -> Result<MartingaleTest> {
    if ensemble.n_paths() == 0 {
        return Err(Error::invalid("empty ensemble"));
    }
    let cfg = &ensemble.config;
    let horizon = ensemble.times.last().unwrap() - cfg.t0;
    let w: Vec<f64> = ensemble
        .terminal_x()
        .iter()
        .map(|x| x - cfg.x0 - cfg.r * horizon)
        .collect();
    let (ratio, std_err) = if cfg.antithetic {
        let e: Vec<f64> = w.iter().map(|w| w.exp()).collect();
        mean_stderr(&ensemble.pair_average(&e))
    } else {
        exp_mean_stderr(&w)
    };
    Ok(MartingaleTest {
        ratio,
        std_err,
        pass: (ratio - 1.0).abs() < 3.0 * std_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HestonReport {
    pub t_ref: f64,
    pub window: f64,
    pub gamma_rev: f64,
    pub epsilon: f64,
    pub ks_statistic: f64,
    /// Mean pathwise `|x_gamma − x_heston|` at the end of the window.
    pub mean_abs_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonCase {
    pub b: f64,
    pub c: f64,
    pub r: f64,
    pub t_ref: f64,
    pub window: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Runs `coupled_gamma` and the matched Heston model over `[t_ref, t_ref + window]`
/// with the same seed and compares the terminal log-prices.
pub fn heston_correspondence_test(case: &HestonCase) -> Result<HestonReport> {
    if !(case.t_ref > 0.0 && case.window > 0.0) {
        return Err(Error::invalid("t_ref and window must be positive"));
    }
    let base = SimConfig {
        model: Model::CoupledGamma,
        b: case.b,
        c: case.c,
        r: case.r,
        t0: case.t_ref,
        t_end: case.t_ref + case.window,
        dt: case.dt,
        n_paths: case.n_paths,
        seed: case.seed,
        record_stride: usize::MAX,
        ..SimConfig::default()
    };
    let heston = base.clone().heston_matched(case.t_ref);
    let a = simulate(&base)?.terminal_x();
    let h = simulate(&heston)?.terminal_x();
    let diffs: Vec<f64> = a.iter().zip(&h).map(|(p, q)| (p - q).abs()).collect();
    Ok(HestonReport {
        t_ref: case.t_ref,
        window: case.window,
        gamma_rev: heston.gamma_rev,
        epsilon: heston.epsilon,
        ks_statistic: ks_two_sample(&a, &h),
        mean_abs_diff: mean_stderr(&diffs).0,
    })
}
