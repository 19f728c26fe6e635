//! Mean-one primitive distributions and the accelerated renewal streams.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::rng::{self, StreamRng};

/// Family of a mean-one interarrival or service distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DistributionSpec {
    #[default]
    Exponential,
    ErlangK { k: u32 },
    /// Two exponential phases with balanced means.
    Hyperexp2Balanced { c2: f64 },
    Lognormal { c2: f64 },
    Pareto { shape: f64 },
    /// Constant 1. Not a renewal family of the model (its SCV is 0); kept for
    /// scripted and smoke runs.
    Deterministic,
}

impl DistributionSpec {
    pub fn validate(&self, m_moment: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match *self {
            DistributionSpec::ErlangK { k: 0 } => bad("ErlangK needs k >= 1".into()),
            DistributionSpec::Hyperexp2Balanced { c2 } if !(c2 >= 1.0) => {
                bad(format!("Hyperexp2Balanced needs c2 >= 1, got {c2}"))
            }
            DistributionSpec::Lognormal { c2 } if !(c2 > 0.0) => bad(format!("Lognormal needs c2 > 0, got {c2}")),
            DistributionSpec::Pareto { shape } if !(shape > m_moment && shape > 2.0) => {
                bad(format!("Pareto shape {shape} must exceed the moment order {m_moment} (and 2)"))
            }
            _ => Ok(()),
        }
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential => 1.0,
            DistributionSpec::ErlangK { k } => 1.0 / k as f64,
            DistributionSpec::Hyperexp2Balanced { c2 } | DistributionSpec::Lognormal { c2 } => c2,
            DistributionSpec::Pareto { shape } => 1.0 / (shape * (shape - 2.0)),
            DistributionSpec::Deterministic => 0.0,
        }
    }

    /// Largest finite moment order (`inf` if all moments are finite).
    pub fn moment_order(&self) -> f64 {
        match *self {
            DistributionSpec::Pareto { shape } => shape,
            _ => f64::INFINITY,
        }
    }

    /// Phase probabilities and rates `(p1, r1, r2)` of the balanced
    /// two-phase hyperexponential with mean 1 and SCV `c2`.
    pub fn hyperexp_phases(c2: f64) -> (f64, f64, f64) {
        let p1 = 0.5 * (1.0 + ((c2 - 1.0) / (c2 + 1.0)).sqrt());
        (p1, 2.0 * p1, 2.0 * (1.0 - p1))
    }

    pub fn sampler(&self) -> Sampler {
        match *self {
            DistributionSpec::Exponential => Sampler::Exp,
            DistributionSpec::ErlangK { k } => Sampler::Gamma(Gamma::new(k as f64, 1.0 / k as f64).unwrap()),
            DistributionSpec::Hyperexp2Balanced { c2 } => {
                let (p1, r1, r2) = Self::hyperexp_phases(c2);
                Sampler::Hyper { p1, r1, r2 }
            }
            DistributionSpec::Lognormal { c2 } => {
                let s2 = (1.0 + c2).ln();
                Sampler::LogNormal(LogNormal::new(-0.5 * s2, s2.sqrt()).unwrap())
            }
            DistributionSpec::Pareto { shape } => {
                Sampler::Pareto(Pareto::new((shape - 1.0) / shape, shape).unwrap())
            }
            DistributionSpec::Deterministic => Sampler::Const,
        }
    }
}

/// Prepared draw of a mean-one variate.
#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    Exp,
    Gamma(Gamma<f64>),
    Hyper { p1: f64, r1: f64, r2: f64 },
    LogNormal(LogNormal<f64>),
    Pareto(Pareto<f64>),
    Const,
}

impl Sampler {
    #[inline]
    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Exp => rng.sample(Exp1),
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::Hyper { p1, r1, r2 } => {
                let e: f64 = rng.sample(Exp1);
                if rng.random::<f64>() < *p1 {
                    e / r1
                } else {
                    e / r2
                }
            }
            Sampler::LogNormal(d) => d.sample(rng),
            Sampler::Pareto(d) => d.sample(rng),
            Sampler::Const => 1.0,
        }
    }
}

/// Distributions of the six primitive streams.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveDistributions {
    #[serde(default)]
    pub arrival: [DistributionSpec; 2],
    #[serde(default)]
    pub service: [[DistributionSpec; 2]; 2],
}

impl PrimitiveDistributions {
    pub fn all(d: DistributionSpec) -> Self {
        PrimitiveDistributions { arrival: [d; 2], service: [[d; 2]; 2] }
    }

    pub fn iter(&self) -> impl Iterator<Item = &DistributionSpec> {
        self.arrival.iter().chain(self.service.iter().flatten())
    }

    pub fn validate(&self, m_moment: f64) -> Result<()> {
        self.iter().try_for_each(|d| d.validate(m_moment))
    }

    /// Streams whose SCV differs from the second-order data in `params`;
    /// the diffusion limit (and `V_0`) is built from the latter.
    pub fn scv_mismatches(&self, params: &SystemParams) -> Vec<String> {
        let off = |d: &DistributionSpec, c2: f64| (d.scv() - c2).abs() > 1e-9 * c2.max(1.0);
        let mut out = Vec::new();
        for i in 0..2 {
            if off(&self.arrival[i], params.c2_arrival[i]) {
                out.push(format!("arrival {i}: distribution SCV {} but c2_arrival = {}", self.arrival[i].scv(), params.c2_arrival[i]));
            }
            for k in 0..2 {
                let (d, c2) = (&self.service[i][k], params.c2_service[i][k]);
                if off(d, c2) {
                    out.push(format!("service ({i},{k}): distribution SCV {} but c2_service = {c2}", d.scv()));
                }
            }
        }
        out
    }

    /// Smallest finite moment order over the six streams.
    pub fn moment_order(&self) -> f64 {
        self.iter().map(|d| d.moment_order()).fold(f64::INFINITY, f64::min)
    }
}

/// Accelerated rates `lambda^n_i = n lambda_i + sqrt(n) lambda_hat_i` and
/// `mu^n_ik = n mu_ik + sqrt(n) mu_hat_ik`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledRates {
    pub lambda: [f64; 2],
    pub mu: [[f64; 2]; 2],
}

impl ScaledRates {
    pub fn new(params: &SystemParams, n: f64) -> Result<Self> {
        let rn = n.sqrt();
        let mut lambda = [0.0; 2];
        let mut mu = [[0.0; 2]; 2];
        for i in 0..2 {
            lambda[i] = n * params.lambda[i] + rn * params.lambda_hat[i];
            if !(lambda[i] > 0.0) {
                return Err(Error::NonpositiveRate { what: format!("lambda[{i}]"), value: lambda[i], n });
            }
            for k in 0..2 {
                mu[i][k] = n * params.mu[i][k] + rn * params.mu_hat[i][k];
                if !(mu[i][k] > 0.0) {
                    return Err(Error::NonpositiveRate { what: format!("mu[{i}][{k}]"), value: mu[i][k], n });
                }
            }
        }
        Ok(ScaledRates { lambda, mu })
    }
}

/// Source of interarrival and service durations, already divided by the
/// accelerated rates.
pub trait PrimitiveSource {
    /// Next interarrival time of `class`, or `None` once the stream ends.
    fn interarrival(&mut self, class: usize) -> Option<f64>;
    /// Duration of the next service of activity `(class, server)`.
    fn service(&mut self, class: usize, server: usize) -> f64;
}

/// Six independent renewal streams, one RNG stream each.
#[derive(Debug, Clone)]
pub struct RenewalSource {
    rates: ScaledRates,
    arrival: [(Sampler, StreamRng); 2],
    service: [[(Sampler, StreamRng); 2]; 2],
    /// Arrivals stop after this many per class (for truncated runs).
    pub arrival_limit: Option<u64>,
    arrivals_drawn: [u64; 2],
}

impl RenewalSource {
    /// Streams of replication `replication` under `seed`; stream ids are
    /// `mix(replication, s)` for `s = 0..6`.
    pub fn new(rates: ScaledRates, dists: &PrimitiveDistributions, seed: u64, replication: u64) -> Self {
        let st = |s: u64| rng::stream(seed, rng::mix(replication, s));
        RenewalSource {
            rates,
            arrival: [(dists.arrival[0].sampler(), st(0)), (dists.arrival[1].sampler(), st(1))],
            service: [
                [(dists.service[0][0].sampler(), st(2)), (dists.service[0][1].sampler(), st(3))],
                [(dists.service[1][0].sampler(), st(4)), (dists.service[1][1].sampler(), st(5))],
            ],
            arrival_limit: None,
            arrivals_drawn: [0; 2],
        }
    }

    /// Building block of `build_primitives`: validates the rates first.
    pub fn build(params: &SystemParams, n: f64, dists: &PrimitiveDistributions, seed: u64, replication: u64) -> Result<Self> {
        Ok(Self::new(ScaledRates::new(params, n)?, dists, seed, replication))
    }

    pub fn rates(&self) -> &ScaledRates {
        &self.rates
    }
}

impl PrimitiveSource for RenewalSource {
    #[inline]
    fn interarrival(&mut self, class: usize) -> Option<f64> {
        if let Some(lim) = self.arrival_limit {
            if self.arrivals_drawn[class] >= lim {
                return None;
            }
        }
        self.arrivals_drawn[class] += 1;
        let (s, r) = &mut self.arrival[class];
        Some(s.draw(r) / self.rates.lambda[class])
    }

    #[inline]
    fn service(&mut self, class: usize, server: usize) -> f64 {
        let (s, r) = &mut self.service[class][server];
        s.draw(r) / self.rates.mu[class][server]
    }
}

/// Fixed lists of durations, used for hand-checkable scenarios. Arrivals
/// end when their list is exhausted; a service list repeats its last entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedSource {
    pub interarrivals: [Vec<f64>; 2],
    pub services: [[Vec<f64>; 2]; 2],
    #[serde(skip)]
    cursor_a: [usize; 2],
    #[serde(skip)]
    cursor_s: [[usize; 2]; 2],
}

impl ScriptedSource {
    pub fn new(interarrivals: [Vec<f64>; 2], services: [[Vec<f64>; 2]; 2]) -> Self {
        ScriptedSource { interarrivals, services, ..Default::default() }
    }

    /// Constant durations: `n_arrivals` per class at spacing `a`, services `u`.
    pub fn constant(a: [f64; 2], n_arrivals: [usize; 2], u: [[f64; 2]; 2]) -> Self {
        Self::new(
            [vec![a[0]; n_arrivals[0]], vec![a[1]; n_arrivals[1]]],
            [[vec![u[0][0]], vec![u[0][1]]], [vec![u[1][0]], vec![u[1][1]]]],
        )
    }
}

impl PrimitiveSource for ScriptedSource {
    fn interarrival(&mut self, class: usize) -> Option<f64> {
        let c = self.cursor_a[class];
        self.cursor_a[class] += 1;
        self.interarrivals[class].get(c).copied()
    }

    fn service(&mut self, class: usize, server: usize) -> f64 {
        let list = &self.services[class][server];
        let c = self.cursor_s[class][server].min(list.len().saturating_sub(1));
        self.cursor_s[class][server] += 1;
        list.get(c).copied().unwrap_or(1.0)
    }
}
