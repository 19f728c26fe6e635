use hts_core::diffusion::{
    discounted_cost, estimate_cost, occupation_near, simulate, terminal_samples, DiffusionKind, DiffusionSpec, Scheme,
};

fn rbm(b: f64, sigma: f64, dt: f64, horizon: f64, scheme: Scheme) -> DiffusionSpec {
    DiffusionSpec { kind: DiffusionKind::Rbm { b, sigma }, z0: 0.0, dt, horizon, gamma: 1.0, scheme }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

// |B_1| has the law of reflected Brownian motion at time 1
#[test]
fn driftless_rbm_at_unit_time() {
    let s = rbm(0.0, 1.0, 1e-3, 1.0, Scheme::Bridge);
    let z = terminal_samples(&s, 20_000, 3);
    let (m, se) = mean_se(&z);
    let exact = (2.0 / std::f64::consts::PI).sqrt();
    assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
    // P(|B_1| <= 1) = 2 Phi(1) - 1
    let ind: Vec<f64> = z.iter().map(|&v| (v <= 1.0) as u8 as f64).collect();
    let (p, se) = mean_se(&ind);
    assert!((p - 0.682_689_492_137_085_9).abs() < 3.0 * se, "{p}");
}

#[test]
fn euler_bias_is_downward_and_shrinks() {
    let exact = (2.0 / std::f64::consts::PI).sqrt();
    let bias = |dt: f64| {
        let (m, se) = mean_se(&terminal_samples(&rbm(0.0, 1.0, dt, 1.0, Scheme::Euler), 10_000, 4));
        (exact - m, se)
    };
    let (coarse, se_c) = bias(1e-2);
    let (fine, se_f) = bias(1e-3);
    assert!(coarse > 5.0 * se_c, "coarse bias {coarse} (se {se_c})");
    assert!(fine < coarse - 3.0 * se_c.hypot(se_f), "{fine} vs {coarse}");
}

#[test]
fn stationary_mean_of_negative_drift_rbm() {
    // E Z_inf = sigma^2 / (2 |b|)
    let mut s = rbm(-1.0, 1.2, 1e-3, 10.0, Scheme::Bridge);
    s.z0 = 0.72;
    let (m, se) = mean_se(&terminal_samples(&s, 5000, 5));
    assert!((m - 0.72).abs() < 3.0 * se, "{m} (se {se})");
}

#[test]
fn occupation_is_monotone_and_stable_in_dt() {
    let occ = |dt: f64, eps: f64| {
        let s = rbm(-0.5, 1.0, dt, 5.0, Scheme::Euler);
        let v: Vec<f64> = (0..400).map(|j| occupation_near(&simulate(&s, 6, j), 1.0, eps)).collect();
        mean_se(&v)
    };
    let s = rbm(-0.5, 1.0, 1e-3, 5.0, Scheme::Euler);
    let p = simulate(&s, 6, 0);
    let eps = [0.01, 0.05, 0.1, 0.3, 1.0, 10.0];
    let o: Vec<f64> = eps.iter().map(|&e| occupation_near(&p, 1.0, e)).collect();
    assert!(o.windows(2).all(|w| w[0] <= w[1]), "{o:?}");
    assert!((o[5] - 5.001).abs() < 1e-9);
    let (a, sa) = occ(1e-3, 0.1);
    let (b, sb) = occ(5e-4, 0.1);
    assert!((a - b).abs() < 3.0 * sa.hypot(sb), "{a} vs {b}");
}

#[test]
fn seeds_agree_statistically_and_reproduce_exactly() {
    let s = DiffusionSpec::with_default_horizon(DiffusionKind::Rbm { b: -0.4, sigma: 0.9 }, 2.0, 1e-3);
    let a = estimate_cost(&s, 400, 1, 1e-6).unwrap();
    let b = estimate_cost(&s, 400, 2, 1e-6).unwrap();
    assert!((a.estimate - b.estimate).abs() < 3.0 * a.std_error.hypot(b.std_error));
    assert_eq!(a, estimate_cost(&s, 400, 1, 1e-6).unwrap());
    assert_ne!(simulate(&s, 1, 0).z, simulate(&s, 1, 1).z);
}

#[test]
fn streamed_cost_matches_stored_paths() {
    for scheme in [Scheme::Euler, Scheme::Bridge] {
        let mut s = DiffusionSpec::with_default_horizon(
            DiffusionKind::Switched { b_low: 0.3, sigma_low: 0.8, b_high: -1.0, sigma_high: 1.5, zstar: 0.6 },
            4.0,
            1e-3,
        );
        s.scheme = scheme;
        let streamed = estimate_cost(&s, 50, 8, 1e-6).unwrap();
        let paths: Vec<_> = (0..50).map(|j| simulate(&s, 8, j)).collect();
        let stored = discounted_cost(&paths, s.gamma, 1e-6).unwrap();
        assert!((streamed.estimate - stored.estimate).abs() < 1e-12 * stored.estimate);
        assert!((streamed.std_error - stored.std_error).abs() < 1e-9 * stored.std_error);
        assert_eq!(streamed.tail_bound, stored.tail_bound);
    }
}

#[test]
fn switched_coefficients_follow_the_level() {
    let k = DiffusionKind::Switched { b_low: 0.3, sigma_low: 0.8, b_high: -1.0, sigma_high: 1.5, zstar: 0.6 };
    assert_eq!(k.coefficients(0.1), (0.3, 0.8));
    assert_eq!(k.coefficients(0.9), (-1.0, 1.5));
    // a path spends time on both sides and never goes negative
    let s = DiffusionSpec::with_default_horizon(k, 1.0, 1e-3);
    let p = simulate(&s, 3, 0);
    assert!(p.z.iter().all(|&z| z >= 0.0));
    assert!(occupation_near(&p, 0.3, 0.3) > 0.0 && occupation_near(&p, 1.5, 0.9) > 0.0);
}
