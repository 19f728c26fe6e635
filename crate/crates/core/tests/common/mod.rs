//! Shared fixtures for the integration tests: reference instances, random
//! instance generators and an independent interpreter of the policy rules.
#![allow(dead_code)]

pub mod interpreter;
pub mod scenarios;

use hts_core::queue::DistributionSpec;
use hts_core::SystemParams;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Server-switched, dual-mode reference instance (PP policy). The LPC's
/// activity (1,0) has a positive rate perturbation and hyperexponential
/// service, so the two modes differ in both drift and diffusivity.
pub fn ss_reference() -> SystemParams {
    let mut p = SystemParams::first_order([0.6, 2.8], [[1.0, 1.0], [2.0, 2.0]]);
    p.mu_hat[1][0] = 1.0;
    p.c2_service[1][0] = 4.0;
    p.h = [3.0, 1.0];
    p
}

pub fn ss_reference_distributions() -> hts_core::queue::PrimitiveDistributions {
    let mut d = hts_core::queue::PrimitiveDistributions::default();
    d.service[1][0] = DistributionSpec::Hyperexp2Balanced { c2: 4.0 };
    d
}

/// Class-switched, single-mode reference instance with exponential
/// primitives (P policy).
pub fn cs_reference() -> SystemParams {
    let mut p = SystemParams::first_order([0.5, 0.5], [[0.3, 0.7], [0.3, 0.7]]);
    p.mu_hat[1][0] = 0.5;
    p.h = [2.0, 1.0];
    p
}

/// Random product-form instance satisfying the critical-load condition and
/// nondegeneracy (with a margin), with random second-order data.
pub fn random_instance(r: &mut impl Rng) -> SystemParams {
    loop {
        let alpha = [r.random_range(0.5..3.0), r.random_range(0.5..3.0)];
        let b1: f64 = r.random_range(0.15..0.85);
        let beta = [b1, 1.0 - b1];
        let w1: f64 = r.random_range(0.05..0.95);
        let w = [w1, 1.0 - w1];
        if w.iter().any(|wi| beta.iter().any(|bk| (wi - bk).abs() < 0.02)) {
            continue;
        }
        let lambda = [alpha[0] * w[0], alpha[1] * w[1]];
        let mu = [[alpha[0] * beta[0], alpha[0] * beta[1]], [alpha[1] * beta[0], alpha[1] * beta[1]]];
        let mut p = SystemParams::first_order(lambda, mu);
        for i in 0..2 {
            p.lambda_hat[i] = r.random_range(-1.0..1.0);
            p.c2_arrival[i] = r.random_range(0.3..4.0);
            p.h[i] = r.random_range(0.5..3.0);
            for k in 0..2 {
                p.mu_hat[i][k] = r.random_range(-1.0..1.0);
                p.c2_service[i][k] = r.random_range(0.3..4.0);
            }
        }
        p.gamma = r.random_range(0.5..2.0);
        return p;
    }
}

/// Random single-mode coefficients: one mode no worse in both drift and
/// diffusivity. Returns the active `(b, sigma)` and the other mode.
pub fn random_single(r: &mut impl Rng) -> ([f64; 2], [f64; 2]) {
    let b_a: f64 = r.random_range(-1.0..1.0);
    let s_a: f64 = r.random_range(0.5..2.0);
    let b_o = b_a + r.random_range(0.0..1.0);
    let s_o = s_a + r.random_range(0.0..1.0);
    ([b_a, s_a], [b_o, s_o])
}

/// Random dual-mode coefficients `(b_low, sigma_low, b_high, sigma_high)`:
/// the low mode has the larger drift and the smaller diffusivity.
pub fn random_dual(r: &mut impl Rng) -> (f64, f64, f64, f64) {
    let b_h: f64 = r.random_range(-1.0..0.5);
    let b_l = b_h + r.random_range(0.1..1.5);
    let s_l: f64 = r.random_range(0.5..1.5);
    let s_h = s_l + r.random_range(0.3..1.5);
    (b_l, s_l, b_h, s_h)
}
