//! Order-stable reductions and Kolmogorov-Smirnov statistics.

/// Pairwise summation in index order; the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error of `exp(w_i)` computed relative to `max w`.
pub fn exp_mean_stderr(ws: &[f64]) -> (f64, f64) {
    let m = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = ws.iter().map(|w| (w - m).exp()).collect();
    let (mean, se) = mean_stderr(&scaled);
    let f = m.exp();
    (mean * f, se * f)
}

/// Two-sided one-sample KS distance `sup |F_n − F|`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Two-sample KS distance `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS acceptance threshold at α ≈ 0.01.
pub fn ks_threshold(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert_eq!(ks_threshold(10), 1.63 / 10f64.sqrt());
    }

    #[test]
    fn two_sample_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exp_mean_handles_large_exponents() {
        let (m, _) = exp_mean_stderr(&[800.0, 800.0]);
        assert!(m.is_infinite() || m > 1e300);
        let (m, se) = exp_mean_stderr(&[0.0, 2f64.ln()]);
        assert!((m - 1.5).abs() < 1e-15);
        assert!((se - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn pairwise_matches_naive(xs in proptest::collection::vec(-1e3..1e3f64, 0..500)) {
            let naive: f64 = xs.iter().sum();
            prop_assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
        }

        #[test]
        fn ks_bounds(a in proptest::collection::vec(-5.0..5.0f64, 1..60), b in proptest::collection::vec(-5.0..5.0f64, 1..60)) {
            let d = ks_two_sample(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_two_sample(&b, &a));
        }
    }
}
