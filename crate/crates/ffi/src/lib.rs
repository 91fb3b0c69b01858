//! C interface to the smearing library.
//!
//! Every entry point returns an [`SmStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`sm_last_error`]. Objects are opaque handles released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use smearing::family::{functional_equation_residual, FamilySpec, GammaFamily, SmearingFamily};
use smearing::km::{default_tau_sequence, km_coefficient_estimate, km_quadrature_config};
use smearing::laplace::{invert_with_extrapolation, post_invert};
use smearing::pricing::{price_fourier, price_mc, OptionKind, OptionSpec};
use smearing::propagator::{
    density_via_fourier, effective_hamiltonian, DensityGrid, GridSpec, HamiltonianSpec, VarianceLaw,
};
use smearing::sim::{simulate, PathEnsemble, SimConfig};
use smearing::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    NoConvergence = 4,
    Numerical = 5,
    Config = 6,
    OutOfRange = 7,
    Panic = 8,
}

pub const SM_CALL: i32 = 0;
pub const SM_PUT: i32 = 1;

pub struct SmFamily(SmearingFamily);

pub struct SmDensity(DensityGrid);

pub struct SmEnsemble(PathEnsemble);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::Parse { .. } => SmStatus::InvalidArgument,
            Error::Domain(_) | Error::Degenerate(_) => SmStatus::Domain,
            Error::NonConvergence { .. } | Error::Quadrature { .. } | Error::QuadratureNode { .. } => {
                SmStatus::NoConvergence
            }
            Error::Overflow { .. } | Error::NonFinite(_) | Error::Grid(_) => SmStatus::Numerical,
            Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => SmStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn option_kind(kind: i32) -> Result<OptionKind, Failure> {
    match kind {
        SM_CALL => Ok(OptionKind::Call),
        SM_PUT => Ok(OptionKind::Put),
        k => Err(Failure(SmStatus::InvalidArgument, format!("unknown option kind {k}"))),
    }
}

/// Message of the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sm_family_gamma(b: f64, c: f64, out: *mut *mut SmFamily) -> SmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let f = SmearingFamily::gamma(b, c)?;
        *slot = Box::into_raw(Box::new(SmFamily(f)));
        Ok(())
    })
}

/// Builds a family from its JSON description, e.g. `{"family":"custom","F":"log(1+x)"}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_family_from_json(json: *const c_char, out: *mut *mut SmFamily) -> SmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let text = str_arg(json, "json")?;
        let f = FamilySpec::from_json(text)?.build()?;
        *slot = Box::into_raw(Box::new(SmFamily(f)));
        Ok(())
    })
}

/// # Safety
/// `family` must come from a `sm_family_*` constructor and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sm_family_free(family: *mut SmFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

unsafe fn family_call<F>(family: *const SmFamily, out: *mut f64, f: F) -> SmStatus
where
    F: FnOnce(&SmearingFamily) -> smearing::Result<f64>,
{
    guard(|| {
        let fam = &family.as_ref().ok_or_else(|| null("family"))?.0;
        let slot = self::out(out, "out")?;
        *slot = f(fam)?;
        Ok(())
    })
}

/// Laplace image `ω̃(ξ, t)`.
///
/// # Safety
/// `family` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_family_image(family: *const SmFamily, xi: f64, t: f64, out: *mut f64) -> SmStatus {
    family_call(family, out, |f| f.image(xi, t))
}

/// Closed-form density `ω(v, t)`; fails for custom families.
///
/// # Safety
/// `family` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_family_density(family: *const SmFamily, v: f64, t: f64, out: *mut f64) -> SmStatus {
    family_call(family, out, |f| f.density(v, t))
}

/// `ω̃(ξ,t) ω̃(αξ,αt) − ω̃(ξ+αξ, t+αt)`.
///
/// # Safety
/// `family` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_functional_equation_residual(
    family: *const SmFamily,
    xi: f64,
    t: f64,
    alpha: f64,
    out: *mut f64,
) -> SmStatus {
    family_call(family, out, |f| functional_equation_residual(f, xi, t, alpha))
}

/// The `k`-th Post approximant of `ω(v, t)`.
///
/// # Safety
/// `family` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_post_invert(family: *const SmFamily, v: f64, t: f64, k: usize, out: *mut f64) -> SmStatus {
    family_call(family, out, |f| post_invert(f, v, t, k).map(|a| a.value))
}

/// Effective Hamiltonian `F(x)/κ`.
///
/// # Safety
/// `family` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_effective_hamiltonian(family: *const SmFamily, x: f64, out: *mut f64) -> SmStatus {
    family_call(family, out, |f| effective_hamiltonian(f, x))
}

/// Richardson-extrapolated Post inversion.
///
/// # Safety
/// `family` must be a live handle; `value` and `error_estimate` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_invert_extrapolated(
    family: *const SmFamily,
    v: f64,
    t: f64,
    k_max: usize,
    tol: f64,
    levels: usize,
    value: *mut f64,
    error_estimate: *mut f64,
) -> SmStatus {
    guard(|| {
        let f = &family.as_ref().ok_or_else(|| null("family"))?.0;
        let (value, error_estimate) = (out(value, "value")?, out(error_estimate, "error_estimate")?);
        let inv = invert_with_extrapolation(f, v, t, k_max, tol, levels)?;
        *value = inv.value;
        *error_estimate = inv.error_estimate;
        Ok(())
    })
}

/// Kramers-Moyal coefficient of order `n` of the Gamma variance process, with
/// the default window sequence `τ = {0.08, 0.04, 0.02, 0.01}·t`.
///
/// # Safety
/// `estimate` and `extrapolation_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_km_coefficient(
    b: f64,
    c: f64,
    n: u32,
    v: f64,
    t: f64,
    estimate: *mut f64,
    extrapolation_error: *mut f64,
) -> SmStatus {
    guard(|| {
        let (estimate, err) = (
            out(estimate, "estimate")?,
            out(extrapolation_error, "extrapolation_error")?,
        );
        let family = GammaFamily::new(b, c)?;
        let est = km_coefficient_estimate(n, v, t, &family, &default_tau_sequence(t), &km_quadrature_config())?;
        *estimate = est.value;
        *err = est.extrapolation_error;
        Ok(())
    })
}

/// Smeared transition density of `x` after time `t` from `x_a`, on an automatically sized FFT grid.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_density_fourier(
    b: f64,
    c: f64,
    r: f64,
    x_a: f64,
    t: f64,
    out: *mut *mut SmDensity,
) -> SmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let law = VarianceLaw::Gamma(GammaFamily::new(b, c)?);
        let spec = HamiltonianSpec::new(r);
        let grid = GridSpec::auto(x_a, t, &law, &spec)?;
        let d = density_via_fourier(&grid, t, &law, &spec)?;
        *slot = Box::into_raw(Box::new(SmDensity(d)));
        Ok(())
    })
}

/// Number of grid points, 0 for NULL.
///
/// # Safety
/// `density` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_density_len(density: *const SmDensity) -> usize {
    density.as_ref().map_or(0, |d| d.0.values.len())
}

/// Copies abscissae and density values into caller buffers of length `len`
/// (which must equal [`sm_density_len`]). Either buffer may be NULL.
///
/// # Safety
/// Non-NULL buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sm_density_copy(
    density: *const SmDensity,
    xs: *mut f64,
    values: *mut f64,
    len: usize,
) -> SmStatus {
    guard(|| {
        let d = &density.as_ref().ok_or_else(|| null("density"))?.0;
        if len != d.values.len() {
            return Err(Failure(
                SmStatus::OutOfRange,
                format!("buffer length {len}, density has {}", d.values.len()),
            ));
        }
        if !xs.is_null() {
            let xs = std::slice::from_raw_parts_mut(xs, len);
            for (j, x) in xs.iter_mut().enumerate() {
                *x = d.grid.x(j);
            }
        }
        if !values.is_null() {
            std::slice::from_raw_parts_mut(values, len).copy_from_slice(&d.values);
        }
        Ok(())
    })
}

/// # Safety
/// `density` must come from [`sm_density_fourier`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sm_density_free(density: *mut SmDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Runs a Monte Carlo ensemble. `config_json` is a JSON object with any of the
/// simulation fields (`model`, `b`, `c`, `r`, `t0`, `t_end`, `dt`, `n_paths`,
/// `seed`, ...); missing fields take their defaults. NULL means all defaults.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_simulate(config_json: *const c_char, out: *mut *mut SmEnsemble) -> SmStatus {
    guard(|| {
        let slot = self::out(out, "out")?;
        let cfg = sim_config(config_json)?;
        let ens = simulate(&cfg)?;
        *slot = Box::into_raw(Box::new(SmEnsemble(ens)));
        Ok(())
    })
}

unsafe fn sim_config(config_json: *const c_char) -> Result<SimConfig, Failure> {
    if config_json.is_null() {
        return Ok(SimConfig::default());
    }
    let text = str_arg(config_json, "config_json")?;
    serde_json::from_str(text).map_err(|e| Failure::from(Error::Json(e)))
}

/// # Safety
/// `ensemble` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_ensemble_n_paths(ensemble: *const SmEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.0.n_paths())
}

/// # Safety
/// `ensemble` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_ensemble_n_times(ensemble: *const SmEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.0.n_times())
}

/// State of one path at recorded time index `ti`.
///
/// # Safety
/// `ensemble` must be a live handle; `time`, `x` and `v` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_ensemble_state(
    ensemble: *const SmEnsemble,
    path: usize,
    ti: usize,
    time: *mut f64,
    x: *mut f64,
    v: *mut f64,
) -> SmStatus {
    guard(|| {
        let e = &ensemble.as_ref().ok_or_else(|| null("ensemble"))?.0;
        let (time, x, v) = (out(time, "time")?, out(x, "x")?, out(v, "v")?);
        if path >= e.n_paths() || ti >= e.n_times() {
            return Err(Failure(
                SmStatus::OutOfRange,
                format!("({path}, {ti}) outside {} paths x {} times", e.n_paths(), e.n_times()),
            ));
        }
        *time = e.times[ti];
        *x = e.x(path, ti);
        *v = e.v(path, ti);
        Ok(())
    })
}

/// # Safety
/// `ensemble` must come from [`sm_simulate`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sm_ensemble_free(ensemble: *mut SmEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// European option price from the Fourier density of the Gamma family `(b, c)`.
/// `kind` is [`SM_CALL`] or [`SM_PUT`].
///
/// # Safety
/// `price` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_price_fourier(
    strike: f64,
    maturity: f64,
    spot: f64,
    rate: f64,
    kind: i32,
    b: f64,
    c: f64,
    price: *mut f64,
) -> SmStatus {
    guard(|| {
        let slot = out(price, "price")?;
        let opt = OptionSpec::new(strike, maturity, spot, rate, option_kind(kind)?)?;
        *slot = price_fourier(&opt, &GammaFamily::new(b, c)?)?.price;
        Ok(())
    })
}

/// Monte Carlo price; `config_json` as for [`sm_simulate`], with `r` and
/// `t_end` replaced by the option's rate and `t0 + maturity`.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `price` and `std_err` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_price_mc(
    strike: f64,
    maturity: f64,
    spot: f64,
    rate: f64,
    kind: i32,
    config_json: *const c_char,
    price: *mut f64,
    std_err: *mut f64,
) -> SmStatus {
    guard(|| {
        let (price, std_err) = (out(price, "price")?, out(std_err, "std_err")?);
        let opt = OptionSpec::new(strike, maturity, spot, rate, option_kind(kind)?)?;
        let mc = price_mc(&opt, &sim_config(config_json)?)?;
        *price = mc.price;
        *std_err = mc.std_err;
        Ok(())
    })
}
