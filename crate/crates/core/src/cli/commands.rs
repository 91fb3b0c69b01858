use std::fs;
use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use num_complex::Complex64;
use serde_json::json;

use smearing::family::{monotonicity_violations, residual_grid, FamilySpec, GammaFamily, SmearingFamily};
use smearing::km::{km_analytic_gamma, km_coefficient_estimate, km_quadrature_config};
use smearing::laplace::{invert_with_extrapolation, post_invert};
use smearing::pricing::{price_fourier, price_mc, OptionSpec};
use smearing::propagator::{char_function_complex, cke_residual, GridSpec, HamiltonianSpec, VarianceLaw};
use smearing::sim::{marginal_v_test, martingale_test, simulate as run_simulation, SimConfig};
use smearing::{Error, Result};

use super::{
    Artifacts, CheckFamilyArgs, CkeArgs, FormArg, InvertArgs, KmArgs, ModelArg, Outcome, PriceArgs, SimulateArgs,
};

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn load_family(path: &Path) -> Result<SmearingFamily> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    FamilySpec::from_json(&text)?.build()
}

pub fn check_family(args: &CheckFamilyArgs, art: &mut Artifacts) -> Result<Outcome> {
    let family = load_family(&args.family_file)?;
    let rows = residual_grid(&family)?;
    let mut w = csv_writer(&art.path("residuals.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;

    let max_residual = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let over = rows.iter().filter(|r| !(r.residual.abs() < args.tol)).count();
    let mut cm = Vec::with_capacity(args.cm_t.len());
    for &t in &args.cm_t {
        let violations = monotonicity_violations(&family, t, args.cm_order, args.cm_tol)?;
        cm.push(json!({"t": t, "violations": violations}));
    }
    let cm_total: u64 = cm.iter().map(|e| e["violations"].as_u64().unwrap_or(0)).sum();
    Ok(Outcome {
        pass: over == 0 && cm_total == 0,
        summary: json!({
            "family": family.label(),
            "rows": rows.len(),
            "max_abs_residual": max_residual,
            "rows_over_tol": over,
            "tol": args.tol,
            "monotonicity": cm,
        }),
    })
}

pub fn invert(args: &InvertArgs, art: &mut Artifacts) -> Result<Outcome> {
    let family = match &args.family {
        Some(p) => load_family(p)?,
        None => SmearingFamily::gamma(args.b, args.c)?,
    };
    let mut w = csv_writer(&art.path("invert.csv"))?;
    w.write_record(["v", "k", "approximant", "exact_if_known", "abs_error"])?;
    let mut results = Vec::with_capacity(args.v.len());
    let mut pass = true;
    for &v in &args.v {
        let exact = family.density(v, args.t).ok();
        for k in (0..4).rev().map(|j| args.k >> j).filter(|&k| k >= 1) {
            let a = post_invert(&family, v, args.t, k)?;
            let err = exact.map(|e| (a.value - e).abs());
            w.write_record([
                v.to_string(),
                k.to_string(),
                a.value.to_string(),
                exact.map_or(String::new(), |e| e.to_string()),
                err.map_or(String::new(), |e| e.to_string()),
            ])?;
        }
        match invert_with_extrapolation(&family, v, args.t, args.k, args.tol, args.levels) {
            Ok(inv) => {
                let err = exact.map(|e| (inv.value - e).abs());
                pass &= err.is_none_or(|e| e <= args.tol);
                results.push(json!({
                    "v": v,
                    "value": inv.value,
                    "error_estimate": inv.error_estimate,
                    "exact": exact,
                    "abs_error": err,
                }));
            }
            Err(Error::NonConvergence { best, error, .. }) => {
                pass = false;
                results.push(json!({
                    "v": v,
                    "value": best,
                    "error_estimate": error,
                    "exact": exact,
                    "converged": false,
                }));
            }
            Err(e) => return Err(e),
        }
    }
    w.flush()?;
    Ok(Outcome {
        pass,
        summary: json!({"family": family.label(), "t": args.t, "k": args.k, "tol": args.tol, "results": results}),
    })
}

pub fn cke(args: &CkeArgs, art: &mut Artifacts) -> Result<Outcome> {
    let g = GammaFamily::new(args.b, args.c)?;
    let law = match args.form {
        FormArg::Cke => VarianceLaw::Gamma(g),
        FormArg::TimeIndependent => VarianceLaw::TimeIndependentGamma(g),
    };
    let spec = HamiltonianSpec::new(args.r);
    let elapsed = args.tb - args.ta;
    let auto = GridSpec::auto(args.x_a, elapsed, &law, &spec)?;
    let grid = if args.n == 0 {
        auto
    } else {
        GridSpec::new(args.x_a, 0.5 * auto.dx * auto.n as f64, args.n)?
    };
    let report = cke_residual(args.ta, args.tc, args.tb, &law, &spec, &grid, args.method.into())?;

    let mut w = csv_writer(&art.path("cke_density.csv"))?;
    w.write_record(["x", "density"])?;
    for (j, d) in report.direct.values.iter().enumerate() {
        w.write_record([grid.x(j).to_string(), d.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(&art.path("cke_composed.csv"))?;
    w.write_record(["x", "density"])?;
    for (j, d) in report.composed.iter().enumerate() {
        w.write_record([grid.x(j).to_string(), d.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(&art.path("cke_char.csv"))?;
    w.write_record(["p", "re", "im"])?;
    let n_p = 512;
    for i in 0..=n_p {
        let p = grid.nyquist() * i as f64 / n_p as f64;
        let phi = char_function_complex(Complex64::new(p, 0.0), elapsed, &law, &spec)?;
        w.write_record([p.to_string(), phi.re.to_string(), phi.im.to_string()])?;
    }
    w.flush()?;

    Ok(Outcome {
        pass: report.l1_residual < args.tol,
        summary: json!({
            "l1_residual": report.l1_residual,
            "tol": args.tol,
            "n": grid.n,
            "dx": grid.dx,
            "total_mass": report.direct.total_mass(),
            "nyquist_modulus": report.direct.nyquist_modulus,
            "aliasing_warning": report.direct.aliasing_warning(),
        }),
    })
}

pub fn km(args: &KmArgs, art: &mut Artifacts) -> Result<Outcome> {
    let family = GammaFamily::new(args.b, args.c)?;
    let quad = km_quadrature_config();
    let mut w = csv_writer(&art.path("km.csv"))?;
    w.write_record(["n", "v", "t", "estimate", "analytic", "rel_error"])?;
    let mut results = Vec::new();
    let mut pass = true;
    for &v in &args.v {
        for &t in &args.t {
            let taus: Vec<f64> = args.tau_fractions.iter().map(|f| f * t).collect();
            for &n in &args.n {
                let est = km_coefficient_estimate(n, v, t, &family, &taus, &quad)?;
                let analytic = if n <= 2 {
                    Some(km_analytic_gamma(n, v, t, &family)?)
                } else {
                    None
                };
                let rel_error = analytic.map(|a| {
                    if a == 0.0 {
                        (est.value / (family.mean() / t)).abs()
                    } else {
                        ((est.value - a) / a).abs()
                    }
                });
                pass &= rel_error.is_none_or(|e| e <= args.tol);
                w.write_record([
                    n.to_string(),
                    v.to_string(),
                    t.to_string(),
                    est.value.to_string(),
                    analytic.map_or(String::new(), |a| a.to_string()),
                    rel_error.map_or(String::new(), |e| e.to_string()),
                ])?;
                results.push(json!({
                    "n": n,
                    "v": v,
                    "t": t,
                    "estimate": est.value,
                    "analytic": analytic,
                    "rel_error": rel_error,
                    "extrapolation_error": est.extrapolation_error,
                }));
            }
        }
    }
    w.flush()?;
    Ok(Outcome {
        pass,
        summary: json!({"tol": args.tol, "results": results}),
    })
}

pub fn simulate(args: &SimulateArgs, seed: u64, art: &mut Artifacts) -> Result<Outcome> {
    let cfg = SimConfig {
        model: args.model.into(),
        b: args.b,
        c: args.c,
        r: args.r,
        gamma_rev: args.gamma_rev,
        epsilon: args.epsilon,
        x0: args.x0,
        t0: args.t0,
        t_end: args.t_end,
        dt: args.dt,
        n_paths: args.n_paths,
        seed,
        rho: args.rho,
        v0: args.v0,
        antithetic: args.antithetic,
        record_stride: args.record_stride,
        naive_drift: false,
    };
    let ens = run_simulation(&cfg)?;
    let name = if args.gzip { "ensemble.csv.gz" } else { "ensemble.csv" };
    let path = art.path(name);
    let file = fs::File::create(&path)?;
    if args.gzip {
        let mut w = csv::Writer::from_writer(GzEncoder::new(file, Compression::default()));
        write_ensemble(&mut w, &ens)?;
        let gz = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        gz.finish()?.flush()?;
    } else {
        let mut w = csv::Writer::from_writer(file);
        write_ensemble(&mut w, &ens)?;
        w.flush()?;
    }

    let mart = martingale_test(&ens)?;
    let within = (mart.ratio - 1.0).abs() < args.tol * mart.std_err;
    let marginal = if args.model != ModelArg::Heston && args.v0.is_none() {
        Some(marginal_v_test(&ens, *ens.times.last().unwrap())?)
    } else {
        None
    };
    Ok(Outcome {
        pass: !args.check || within,
        summary: json!({
            "model": cfg.model.name(),
            "seed": seed,
            "n_paths": cfg.n_paths,
            "n_steps": cfg.n_steps(),
            "recorded_times": ens.n_times(),
            "martingale_ratio": mart.ratio,
            "martingale_stderr": mart.std_err,
            "martingale_within_tol": within,
            "v_marginal": marginal,
        }),
    })
}

fn write_ensemble<W: Write>(w: &mut csv::Writer<W>, ens: &smearing::sim::PathEnsemble) -> Result<()> {
    w.write_record(["path_id", "time", "x", "v"])?;
    for p in 0..ens.n_paths() {
        for (ti, t) in ens.times.iter().enumerate() {
            w.write_record([
                p.to_string(),
                t.to_string(),
                ens.x(p, ti).to_string(),
                ens.v(p, ti).to_string(),
            ])?;
        }
    }
    Ok(())
}

pub fn price(args: &PriceArgs, seed: u64, art: &mut Artifacts) -> Result<Outcome> {
    let opt = OptionSpec::new(args.strike, args.maturity, args.spot, args.r, args.kind.into())?;
    let family = GammaFamily::new(args.b, args.c)?;
    let fourier = price_fourier(&opt, &family)?;
    let sim = SimConfig {
        model: args.model.into(),
        b: args.b,
        c: args.c,
        t0: args.t0,
        dt: args.dt,
        n_paths: args.n_paths,
        seed,
        antithetic: args.antithetic,
        ..SimConfig::default()
    };
    let mc = price_mc(&opt, &sim)?;
    let agree = (fourier.price - mc.price).abs() <= args.tol * mc.std_err;
    let result = json!({
        "strike": args.strike,
        "maturity": args.maturity,
        "fourier_price": fourier.price,
        "mc_price": mc.price,
        "mc_stderr": mc.std_err,
        "agree": agree,
    });
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    fs::write(art.path("price.json"), text)?;
    Ok(Outcome {
        pass: agree,
        summary: result,
    })
}
