//! Acceptance suite: one line per criterion, exit status 1 if any fails.
//!
//! Run with `cargo test -p smearing --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use smearing::family::{convolution_identity_residual, residual_grid, GammaFamily, ImageForm, SmearingFamily};
use smearing::km::{km_quadrature_config, km_sweep};
use smearing::laplace::{invert_with_extrapolation, post_invert};
use smearing::pricing::{price_fourier, price_mc, OptionKind, OptionSpec};
use smearing::propagator::{
    cke_residual, density_via_fourier, mixture_quadrature_config, smeared_density_nodes, DensityMethod, GridSpec,
    HamiltonianSpec, VarianceLaw,
};
use smearing::quad::QuadratureConfig;
use smearing::sim::{
    heston_correspondence_test, marginal_v_test, martingale_test, simulate, HestonCase, Model, SimConfig,
};

// tolerances, fixed here rather than passed in
const FE_TOL: f64 = 1e-12;
const FE_CONTROL_MIN: f64 = 1e-2;
const CONV_TOL: f64 = 1e-7;
const POST_EXTRAP_TOL: f64 = 1e-3;
const CKE_TOL: f64 = 1e-6;
const CKE_CONTROL_MIN: f64 = 1e-2;
const FOURIER_TOL: f64 = 1e-8;
const KM_REL_TOL: f64 = 0.01;
const MC_PATHS: usize = 100_000;
const PARITY_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn(&mut Vec<String>) -> Outcome,
}

fn c1_functional_equation(_: &mut Vec<String>) -> Outcome {
    let gamma = SmearingFamily::gamma(1.5, 2.5).unwrap();
    let worst = residual_grid(&gamma)
        .unwrap()
        .iter()
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max);
    let control = SmearingFamily::custom("x^2", ImageForm::TimeIndependent, 1.0).unwrap();
    let control_max = residual_grid(&control)
        .unwrap()
        .iter()
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: worst < FE_TOL && control_max > FE_CONTROL_MIN,
        detail: format!(
            "gamma max {worst:.2e} (< {FE_TOL:e}), x^2 control max {control_max:.3} (> {FE_CONTROL_MIN:e})"
        ),
    }
}

fn c2_convolution(_: &mut Vec<String>) -> Outcome {
    let g = GammaFamily::new(1.0, 2.0).unwrap();
    let quad = QuadratureConfig::with_tolerances(1e-14, 1e-12);
    let mut worst = 0.0f64;
    let mut count = 0;
    for z in [0.3, 1.0, 4.0] {
        for t in [0.5, 1.0, 2.0] {
            for a in [0.5, 1.0, 3.0] {
                let r = convolution_identity_residual(&g, z, t, a, &quad).map_or(f64::INFINITY, f64::abs);
                worst = worst.max(r);
                count += 1;
            }
        }
    }
    Outcome {
        pass: worst < CONV_TOL,
        detail: format!("{count} (z,t,a) combinations, max residual {worst:.2e} (< {CONV_TOL:e})"),
    }
}

fn c3_post(_: &mut Vec<String>) -> Outcome {
    let g = GammaFamily::new(1.0, 2.0).unwrap();
    let f = SmearingFamily::from_gamma(g);
    let vs: Vec<f64> = (0..200).map(|i| 0.05 + (10.0 - 0.05) * i as f64 / 199.0).collect();
    let sup: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&k| {
            vs.iter()
                .map(|&v| (post_invert(&f, v, 1.0, k).unwrap().value - g.density(v, 1.0).unwrap()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let decreasing = sup.windows(2).all(|w| w[1] < w[0]);
    let extrap = vs
        .iter()
        .map(|&v| {
            invert_with_extrapolation(&f, v, 1.0, 64, POST_EXTRAP_TOL, 1)
                .map_or(f64::INFINITY, |inv| (inv.value - g.density(v, 1.0).unwrap()).abs())
        })
        .fold(0.0, f64::max);
    Outcome {
        pass: decreasing && extrap < POST_EXTRAP_TOL,
        detail: format!(
            "sup errors k=8,16,32,64: {:.2e} {:.2e} {:.2e} {:.2e}; extrapolated sup {extrap:.2e} (< {POST_EXTRAP_TOL:e})",
            sup[0], sup[1], sup[2], sup[3]
        ),
    }
}

fn c4_cke(_: &mut Vec<String>) -> Outcome {
    let law = VarianceLaw::Gamma(GammaFamily::new(1.0, 2.0).unwrap());
    let spec = HamiltonianSpec::new(0.05);
    let splits = [(0.0, 0.3, 1.0), (0.0, 0.5, 1.0), (0.0, 1.2, 2.0)];
    let mut worst = 0.0f64;
    for (ta, tc, tb) in splits {
        let grid = GridSpec::auto(0.0, tb - ta, &law, &spec).unwrap();
        let r = cke_residual(ta, tc, tb, &law, &spec, &grid, DensityMethod::Fourier).unwrap();
        worst = worst.max(r.l1_residual);
    }
    let control = VarianceLaw::TimeIndependentGamma(GammaFamily::new(1.0, 2.0).unwrap());
    let grid = GridSpec::auto(0.0, 1.0, &control, &spec).unwrap();
    let memory = cke_residual(0.0, 0.5, 1.0, &control, &spec, &grid, DensityMethod::Fourier)
        .unwrap()
        .l1_residual;
    Outcome {
        pass: worst < CKE_TOL && memory > CKE_CONTROL_MIN,
        detail: format!("max L1 over 3 splits {worst:.2e} (< {CKE_TOL:e}), t-independent mixture {memory:.3} (> {CKE_CONTROL_MIN:e})"),
    }
}

fn c5_fourier_vs_quadrature(_: &mut Vec<String>) -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (b, c) in [(1.0, 2.0), (2.0, 3.0), (0.5, 2.5)] {
        for r in [0.0, 0.05] {
            for t in [1.0, 2.0] {
                let law = VarianceLaw::Gamma(GammaFamily::new(b, c).unwrap());
                let spec = HamiltonianSpec::new(r);
                let grid = GridSpec::auto(0.0, t, &law, &spec).unwrap();
                let fourier = density_via_fourier(&grid, t, &law, &spec).unwrap();
                let sd = (law.mean() * t).sqrt();
                let nodes: Vec<usize> = (0..grid.n).filter(|&j| grid.x(j).abs() <= 8.0 * sd).collect();
                let nodes: Vec<usize> = nodes.iter().copied().step_by((nodes.len() / 250).max(1)).collect();
                let xs: Vec<f64> = nodes.iter().map(|&j| grid.x(j)).collect();
                let quad = smeared_density_nodes(&xs, t, &law, &spec, &mixture_quadrature_config()).unwrap();
                for (&j, q) in nodes.iter().zip(&quad) {
                    worst = worst.max((fourier.values[j] - q).abs());
                }
                cases += 1;
            }
        }
    }
    Outcome {
        pass: worst < FOURIER_TOL,
        detail: format!("{cases} (b,c,r,t) cases, sup |fourier - quadrature| {worst:.2e} (< {FOURIER_TOL:e})"),
    }
}

fn c6_km(notes: &mut Vec<String>) -> Outcome {
    let g = GammaFamily::new(1.0, 2.0).unwrap();
    let v_bar = g.mean();
    let ts = [0.5, 1.0, 2.0];
    let rows = km_sweep(&g, &[0.5 * v_bar, v_bar, 2.0 * v_bar], &ts, &km_quadrature_config()).unwrap();
    let mut worst = 0.0f64;
    for row in &rows {
        // K1 vanishes at v = v̄; measure it against the drift scale v̄/t there
        let err = if row.analytic == 0.0 {
            (row.estimate - row.analytic).abs() / (v_bar / row.t)
        } else {
            row.rel_error
        };
        worst = worst.max(err);
    }
    let mut spread = 0.0f64;
    for t in ts {
        let k2: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == 2 && r.t == t)
            .map(|r| r.estimate)
            .collect();
        let hi = k2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = k2.iter().copied().fold(f64::INFINITY, f64::min);
        spread = spread.max((hi - lo) / (0.5 * (hi + lo)));
    }
    notes.push(format!(
        "K1 at v = v-bar judged as |estimate| / (v-bar/t); {} rows",
        rows.len()
    ));
    Outcome {
        pass: worst < KM_REL_TOL && spread < KM_REL_TOL,
        detail: format!(
            "9 (v,t) pairs, max rel error {worst:.2e} (< {KM_REL_TOL}), K2 spread {spread:.2e} (< {KM_REL_TOL})"
        ),
    }
}

fn marginal_config(model: Model, seed: u64) -> SimConfig {
    SimConfig {
        model,
        b: 1.0,
        c: 2.0,
        t0: 0.5,
        t_end: 1.5,
        dt: 0.001,
        n_paths: MC_PATHS,
        seed,
        record_stride: 500,
        ..SimConfig::default()
    }
}

fn c7_marginal(notes: &mut Vec<String>) -> Outcome {
    let seeds = [1u64, 2, 3, 4, 5];
    let run = |model: Model| -> (Vec<f64>, f64) {
        let mut ks = Vec::new();
        let mut threshold = 0.0;
        for &seed in &seeds {
            let ens = simulate(&marginal_config(model, seed)).unwrap();
            let m = marginal_v_test(&ens, 1.0).unwrap();
            ks.push(m.ks_statistic);
            threshold = m.threshold;
        }
        (ks, threshold)
    };
    let (ks, threshold) = run(Model::CoupledGamma);
    let (exact, _) = run(Model::CoupledExact);
    notes.push(format!(
        "criterion 7 supplementary: coupled_exact KS at s=1 over 5 seeds max {:.4} (threshold {threshold:.5})",
        exact.iter().copied().fold(0.0, f64::max)
    ));
    let worst = ks.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: ks.iter().all(|&d| d < threshold),
        detail: format!("coupled_gamma KS at s=1 over 5 seeds max {worst:.4} (< {threshold:.5})"),
    }
}

fn c8_martingale(_: &mut Vec<String>) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for model in [Model::CoupledExact, Model::CoupledGamma, Model::Heston] {
        for r in [0.0, 0.05] {
            let cfg = SimConfig {
                model,
                r,
                b: 1.0,
                c: 2.0,
                t0: 0.5,
                t_end: 1.5,
                dt: 0.01,
                n_paths: MC_PATHS,
                seed: 11,
                record_stride: usize::MAX,
                ..SimConfig::default()
            };
            let m = martingale_test(&simulate(&cfg).unwrap()).unwrap();
            pass &= m.pass;
            parts.push(format!(
                "{}@r={r}: {:.2}SE",
                model.name(),
                (m.ratio - 1.0).abs() / m.std_err
            ));
        }
    }
    Outcome {
        pass,
        detail: format!("|ratio - 1| in SE units (< 3): {}", parts.join(", ")),
    }
}

fn c9_heston(_: &mut Vec<String>) -> Outcome {
    let case = |t_ref: f64| HestonCase {
        b: 1.0,
        c: 2.0,
        r: 0.05,
        t_ref,
        window: 1.0,
        dt: 0.01,
        n_paths: MC_PATHS,
        seed: 21,
    };
    let near = heston_correspondence_test(&case(10.0)).unwrap();
    let far = heston_correspondence_test(&case(40.0)).unwrap();
    Outcome {
        pass: far.ks_statistic < near.ks_statistic,
        detail: format!(
            "terminal-x KS t_ref=10: {:.2e}, t_ref=40: {:.2e} (mean |dx| {:.2e} -> {:.2e})",
            near.ks_statistic, far.ks_statistic, near.mean_abs_diff, far.mean_abs_diff
        ),
    }
}

fn c10_pricing(notes: &mut Vec<String>) -> Outcome {
    let g = GammaFamily::new(1.0, 2.0).unwrap();
    let r = 0.05;
    let sim = |model: Model| SimConfig {
        model,
        b: 1.0,
        c: 2.0,
        t0: 1.0,
        dt: 0.01,
        n_paths: MC_PATHS,
        seed: 31,
        ..SimConfig::default()
    };
    let mut worst = 0.0f64;
    let mut worst_gamma = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        for k in [0.9, 1.0, 1.1] {
            let opt = OptionSpec::new(k, t, 1.0, r, OptionKind::Call).unwrap();
            let f = price_fourier(&opt, &g).unwrap().price;
            let m = price_mc(&opt, &sim(Model::CoupledExact)).unwrap();
            worst = worst.max((m.price - f).abs() / m.std_err);
            let eg = price_mc(&opt, &sim(Model::CoupledGamma)).unwrap();
            worst_gamma = worst_gamma.max((eg.price - f).abs() / eg.std_err);
        }
    }
    let opt = OptionSpec::new(1.0, 1.0, 1.0, r, OptionKind::Call).unwrap();
    let call = price_fourier(&opt, &g).unwrap().price;
    let put = price_fourier(&opt.with_kind(OptionKind::Put), &g).unwrap().price;
    let parity = (call - put - (1.0 - (-r).exp())).abs();
    notes.push(format!(
        "criterion 10 diagnostic: coupled_gamma MC vs Fourier worst {worst_gamma:.1} SE (not gated)"
    ));
    Outcome {
        pass: worst < 3.0 && parity < PARITY_TOL,
        detail: format!("coupled_exact MC vs Fourier worst {worst:.2} SE (< 3) over 9 cases; parity error {parity:.1e} (< {PARITY_TOL:e})"),
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "functional equation",
            budget: Duration::from_secs(1),
            run: c1_functional_equation,
        },
        Criterion {
            id: 2,
            name: "convolution identity",
            budget: Duration::from_secs(10),
            run: c2_convolution,
        },
        Criterion {
            id: 3,
            name: "Post inversion",
            budget: Duration::from_secs(30),
            run: c3_post,
        },
        Criterion {
            id: 4,
            name: "Chapman-Kolmogorov",
            budget: Duration::from_secs(30),
            run: c4_cke,
        },
        Criterion {
            id: 5,
            name: "effective Hamiltonian",
            budget: Duration::from_secs(60),
            run: c5_fourier_vs_quadrature,
        },
        Criterion {
            id: 6,
            name: "Kramers-Moyal",
            budget: Duration::from_secs(60),
            run: c6_km,
        },
        Criterion {
            id: 7,
            name: "MC v-marginal",
            budget: Duration::from_secs(120),
            run: c7_marginal,
        },
        Criterion {
            id: 8,
            name: "martingale",
            budget: Duration::from_secs(120),
            run: c8_martingale,
        },
        Criterion {
            id: 9,
            name: "Heston correspondence",
            budget: Duration::from_secs(180),
            run: c9_heston,
        },
        Criterion {
            id: 10,
            name: "pricing cross-check",
            budget: Duration::from_secs(180),
            run: c10_pricing,
        },
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut notes = Vec::new();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)(&mut notes);
        let elapsed = start.elapsed();
        let in_time = elapsed < c.budget;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {}: {} ({:.2}s / {}s budget{})",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            outcome.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    for n in &notes {
        println!("  note: {n}");
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
