//! Monte Carlo for the limiting reflected diffusions: the reflected Brownian
//! motion of the single mode case and the switched SDE of the dual mode
//! case, together with the Skorokhod map and discounted-cost estimation.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum DiffusionKind {
    Rbm { b: f64, sigma: f64 },
    /// Low-workload coefficients on `[0, zstar]`, high-workload ones above.
    Switched { b_low: f64, sigma_low: f64, b_high: f64, sigma_high: f64, zstar: f64 },
}

impl DiffusionKind {
    #[inline]
    pub fn coefficients(&self, z: f64) -> (f64, f64) {
        match *self {
            DiffusionKind::Rbm { b, sigma } => (b, sigma),
            DiffusionKind::Switched { b_low, sigma_low, b_high, sigma_high, zstar } => {
                if z <= zstar {
                    (b_low, sigma_low)
                } else {
                    (b_high, sigma_high)
                }
            }
        }
    }
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Euler–Maruyama with `z' = max(0, z + dx)`. Reflection is only seen
    /// at grid times, which biases the process downward by about
    /// `0.58 sigma sqrt(dt)`; the coefficient jump at `zstar` adds a further
    /// `O(sqrt(dt))` bias.
    #[default]
    Euler,
    /// Reflection against the sampled minimum of the Brownian bridge over
    /// the step, and an exact skew-Brownian crossing of `zstar`. Exact for
    /// the RBM; for the switched SDE only the drift is frozen over a step.
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub kind: DiffusionKind,
    #[serde(default)]
    pub z0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub gamma: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl DiffusionSpec {
    /// Default horizon `40 / gamma`, which leaves a discount tail of `e^-40`.
    pub fn with_default_horizon(kind: DiffusionKind, gamma: f64, dt: f64) -> Self {
        DiffusionSpec { kind, z0: 0.0, dt, horizon: 40.0 / gamma, gamma, scheme: Scheme::Euler }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match self.kind {
            DiffusionKind::Rbm { sigma, .. } if !(sigma > 0.0) => return bad(format!("sigma must be > 0, got {sigma}")),
            DiffusionKind::Switched { sigma_low, sigma_high, zstar, .. }
                if !(sigma_low > 0.0 && sigma_high > 0.0 && zstar > 0.0) =>
            {
                return bad("switched diffusion needs sigma_low, sigma_high, zstar > 0".into())
            }
            _ => {}
        }
        if !(self.z0 >= 0.0) || !(self.dt > 0.0) || !(self.horizon > 0.0) || !(self.gamma > 0.0) {
            return bad(format!(
                "need z0 >= 0, dt > 0, horizon > 0, gamma > 0 (got {}, {}, {}, {})",
                self.z0, self.dt, self.horizon, self.gamma
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// State and boundary term on the grid `t_j = j dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectedPath {
    pub dt: f64,
    pub z: Vec<f64>,
    pub l: Vec<f64>,
}

impl ReflectedPath {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.z.len()).map(move |j| j as f64 * self.dt)
    }

    pub fn horizon(&self) -> f64 {
        (self.z.len() - 1) as f64 * self.dt
    }
}

/// One-dimensional Skorokhod map on a discrete path:
/// `eta(t) = sup_{s <= t} psi(s)^-`, `phi = psi + eta`.
pub fn skorokhod_map(psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut eta = Vec::with_capacity(psi.len());
    let mut phi = Vec::with_capacity(psi.len());
    let mut run = 0.0_f64;
    for &v in psi {
        run = run.max(-v);
        eta.push(run);
        phi.push(v + run);
    }
    (phi, eta)
}

/// Drift `b dt` plus diffusion increment, reflected at zero; returns `(z_next, dl)`.
#[inline]
fn reflect<R: Rng>(scheme: Scheme, z: f64, b: f64, s: f64, dt: f64, sqdt: f64, rng: &mut R) -> (f64, f64) {
    let g: f64 = rng.sample(StandardNormal);
    let dx = b * dt + s * sqdt * g;
    let free = z + dx;
    match scheme {
        Scheme::Euler => {
            if free >= 0.0 {
                (free, 0.0)
            } else {
                (0.0, -free)
            }
        }
        Scheme::Bridge => {
            // The bridge dips below -z with probability exp(-2 z (z+dx) / (s^2 dt));
            // past e^-40 the draw is skipped.
            if free > 0.0 && z * free > 20.0 * s * s * dt {
                return (free, 0.0);
            }
            // min over the step of a Brownian bridge from 0 to dx with variance rate s^2
            let e: f64 = rng.sample(Exp1);
            let m = 0.5 * (dx - (dx * dx + 2.0 * s * s * dt * e).sqrt());
            let dl = (-z - m).max(0.0);
            (free + dl, dl)
        }
    }
}

/// Crossing of the coefficient jump at `zstar` with frozen drift.
///
/// `Y = Z - zstar` without drift is oscillating Brownian motion, and
/// `Y / sigma(Y)` is skew Brownian motion whose excursions are positive
/// with probability `sigma_low / (sigma_low + sigma_high)`. Its modulus is
/// reflected Brownian motion, so the step samples `|X|` and, if `X`
/// touched zero, a fresh excursion sign.
#[inline]
#[allow(clippy::too_many_arguments)]
fn skew_step<R: Rng>(
    z: f64,
    zstar: f64,
    b: f64,
    sigma_low: f64,
    sigma_high: f64,
    dt: f64,
    sqdt: f64,
    rng: &mut R,
) -> f64 {
    let low = z <= zstar;
    let s = if low { sigma_low } else { sigma_high };
    let a = (z - zstar).abs() / s;
    let g: f64 = rng.sample(StandardNormal);
    let y = a + sqdt * g;
    let touched = y <= 0.0 || (a * y < 20.0 * dt && rng.random::<f64>() < (-2.0 * a * y / dt).exp());
    let up = if touched { rng.random::<f64>() < sigma_low / (sigma_low + sigma_high) } else { !low };
    let dy = if up { y.abs() * sigma_high } else { -y.abs() * sigma_low };
    zstar + dy + b * dt
}

#[inline]
fn step<R: Rng>(kind: &DiffusionKind, scheme: Scheme, z: f64, dt: f64, sqdt: f64, rng: &mut R) -> (f64, f64) {
    let (b, s) = kind.coefficients(z);
    if let (Scheme::Bridge, DiffusionKind::Switched { sigma_low, sigma_high, zstar, .. }) = (scheme, kind) {
        // Near zstar, and nearer to it than to zero, cross the jump exactly.
        let band = 8.0 * sigma_low.max(*sigma_high) * sqdt;
        if (z - zstar).abs() < band && 2.0 * z > *zstar {
            let zn = skew_step(z, *zstar, b, *sigma_low, *sigma_high, dt, sqdt, rng);
            return if zn >= 0.0 { (zn, 0.0) } else { (0.0, -zn) };
        }
    }
    reflect(scheme, z, b, s, dt, sqdt, rng)
}

/// Simulate path `path_index` of `spec` under `seed`.
pub fn simulate(spec: &DiffusionSpec, seed: u64, path_index: u64) -> ReflectedPath {
    let n = spec.steps();
    let mut rng = rng::stream(seed, path_index);
    let sqdt = spec.dt.sqrt();
    let mut z = Vec::with_capacity(n + 1);
    let mut l = Vec::with_capacity(n + 1);
    let (mut zc, mut lc) = (spec.z0, 0.0);
    z.push(zc);
    l.push(lc);
    for _ in 0..n {
        let (zn, dl) = step(&spec.kind, spec.scheme, zc, spec.dt, sqdt, &mut rng);
        zc = zn;
        lc += dl;
        z.push(zc);
        l.push(lc);
    }
    ReflectedPath { dt: spec.dt, z, l }
}

/// Trapezoidal `int_0^T e^{-gamma t} Z_t dt` of one stored path.
pub fn path_cost(path: &ReflectedPath, gamma: f64) -> f64 {
    let decay = (-gamma * path.dt).exp();
    let mut disc = 1.0;
    let mut acc = 0.0;
    for w in path.z.windows(2) {
        acc += 0.5 * path.dt * disc * (w[0] + decay * w[1]);
        disc *= decay;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// `max_path_value * e^{-gamma T} / gamma`.
    pub tail_bound: f64,
    pub n_paths: usize,
}

fn summarize(costs: &[f64], max_z: f64, gamma: f64, horizon: f64, tol: f64) -> Result<CostEstimate> {
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let tail_bound = max_z * (-gamma * horizon).exp() / gamma;
    if tail_bound > tol {
        return Err(Error::TailBoundExceeded { bound: tail_bound, tol });
    }
    Ok(CostEstimate { estimate: mean, std_error: (var / n).sqrt(), tail_bound, n_paths: costs.len() })
}

/// Discounted cost over a set of stored paths.
pub fn discounted_cost(paths: &[ReflectedPath], gamma: f64, tol: f64) -> Result<CostEstimate> {
    if paths.is_empty() {
        return Err(Error::Precondition("no paths".into()));
    }
    let costs: Vec<f64> = paths.iter().map(|p| path_cost(p, gamma)).collect();
    let max_z = paths.iter().flat_map(|p| p.z.iter()).fold(0.0_f64, |m, &v| m.max(v));
    summarize(&costs, max_z, gamma, paths[0].horizon(), tol)
}

/// Cost and running maximum of one path, without storing it.
fn stream_path_cost(spec: &DiffusionSpec, seed: u64, path_index: u64) -> (f64, f64) {
    let n = spec.steps();
    let mut rng = rng::stream(seed, path_index);
    let sqdt = spec.dt.sqrt();
    let decay = (-spec.gamma * spec.dt).exp();
    let mut disc = 1.0;
    let mut acc = 0.0;
    let mut z = spec.z0;
    let mut max_z = z;
    for _ in 0..n {
        let (zn, _) = step(&spec.kind, spec.scheme, z, spec.dt, sqdt, &mut rng);
        acc += 0.5 * spec.dt * disc * (z + decay * zn);
        disc *= decay;
        z = zn;
        max_z = max_z.max(z);
    }
    (acc, max_z)
}

fn map_paths<T: Send, F: Fn(u64) -> T + Sync + Send>(n_paths: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_paths as u64).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_paths as u64).map(f).collect()
    }
}

/// Monte Carlo estimate of `E int_0^T e^{-gamma t} Z_t dt` over `n_paths`
/// independent paths. Paths are generated in parallel; the reduction is
/// ordered, so results do not depend on the thread count.
pub fn estimate_cost(spec: &DiffusionSpec, n_paths: usize, seed: u64, tol: f64) -> Result<CostEstimate> {
    spec.validate()?;
    if n_paths < 2 {
        return Err(Error::Precondition("need at least two paths".into()));
    }
    let out = map_paths(n_paths, |j| stream_path_cost(spec, seed, j));
    let costs: Vec<f64> = out.iter().map(|c| c.0).collect();
    let max_z = out.iter().fold(0.0_f64, |m, c| m.max(c.1));
    summarize(&costs, max_z, spec.gamma, spec.steps() as f64 * spec.dt, tol)
}

/// `Z_T` for `n_paths` paths (for distributional comparisons).
pub fn terminal_samples(spec: &DiffusionSpec, n_paths: usize, seed: u64) -> Vec<f64> {
    map_paths(n_paths, |j| {
        let n = spec.steps();
        let mut rng = rng::stream(seed, j);
        let sqdt = spec.dt.sqrt();
        let mut z = spec.z0;
        for _ in 0..n {
            z = step(&spec.kind, spec.scheme, z, spec.dt, sqdt, &mut rng).0;
        }
        z
    })
}

/// Time spent within `eps` of `center`: `dt * #{j : |z_j - center| < eps}`.
pub fn occupation_near(path: &ReflectedPath, center: f64, eps: f64) -> f64 {
    path.dt * path.z.iter().filter(|&&z| (z - center).abs() < eps).count() as f64
}
