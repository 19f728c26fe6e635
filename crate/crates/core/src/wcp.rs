//! Workload control problem: mode drifts and diffusivities, the single/dual
//! case split, the closed-form value function and the switching point.
//!
//! The dual-mode cost of a switching policy is a two-piece solution of
//! `b u' + sigma^2/2 u'' + x - gamma u = 0` with `u'(0) = 0`, linear growth,
//! and C^1 pasting at the switching level `z`. All exponentials are written
//! relative to the pasting point so that every factor lies in (0, 1]; no
//! term can overflow regardless of `z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LpStructure, ProductForm};
use crate::params::{Mat2, SystemParams};

/// Drift/diffusivity ties closer than this (relative) count as equal when
/// deciding between the single and dual mode cases.
pub const CASE_TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcpCoefficients {
    /// Drift of each extreme mode.
    pub b: [f64; 2],
    /// Diffusivity (standard deviation rate) of each extreme mode.
    pub sigma: [f64; 2],
    pub sigma_a: [f64; 2],
    pub sigma_s: Mat2,
    pub gamma: f64,
}

/// Drift `b(xi)` and variance rate `sigma(xi)^2` of the workload under allocation `xi`.
pub fn drift_diffusion(params: &SystemParams, pf: &ProductForm, xi: &Mat2) -> (f64, f64) {
    let mut b = 0.0;
    let mut s2 = 0.0;
    for i in 0..2 {
        let a = pf.alpha[i];
        let served: f64 = (0..2).map(|k| params.mu_hat[i][k] * xi[i][k]).sum();
        b += (params.lambda_hat[i] - served) / a;
        let var_a = params.lambda[i] * params.c2_arrival[i];
        let var_s: f64 = (0..2)
            .map(|k| params.mu[i][k] * params.c2_service[i][k] * xi[i][k])
            .sum();
        s2 += (var_a + var_s) / (a * a);
    }
    (b, s2)
}

impl WcpCoefficients {
    pub fn from_lp(params: &SystemParams, lp: &LpStructure) -> Self {
        let pf = &lp.product_form;
        let (b1, v1) = drift_diffusion(params, pf, &lp.mode1.xi);
        let (b2, v2) = drift_diffusion(params, pf, &lp.mode2.xi);
        let sigma_a = [0, 1].map(|i| (params.lambda[i] * params.c2_arrival[i]).sqrt());
        let sigma_s = [0, 1].map(|i| [0, 1].map(|k| (params.mu[i][k] * params.c2_service[i][k]).sqrt()));
        WcpCoefficients {
            b: [b1, b2],
            sigma: [v1.sqrt(), v2.sqrt()],
            sigma_a,
            sigma_s,
            gamma: params.gamma,
        }
    }

    /// Coefficients given directly, bypassing the queueing model.
    pub fn direct(b: [f64; 2], sigma: [f64; 2], gamma: f64) -> Self {
        WcpCoefficients { b, sigma, sigma_a: [0.0; 2], sigma_s: [[0.0; 2]; 2], gamma }
    }

    /// Mode indices `(first, second)` ordered so that `b[first] >= b[second]`,
    /// drift ties broken by `sigma[first] >= sigma[second]`.
    pub fn ordered(&self) -> (usize, usize) {
        let (b, s) = (self.b, self.sigma);
        if b[0] > b[1] || (b[0] == b[1] && s[0] >= s[1]) {
            (0, 1)
        } else {
            (1, 0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeCase {
    /// One mode is at least as good in both drift and diffusivity.
    Single { active: usize },
    /// The larger-drift mode is used at low workload, the other above `z*`.
    Dual { low: usize, high: usize },
}

fn le_tol(a: f64, b: f64) -> bool {
    a <= b + CASE_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

pub fn classify_mode_case(c: &WcpCoefficients) -> ModeCase {
    let (b, s) = (c.b, c.sigma);
    let dominates = |m: usize, o: usize| le_tol(b[m], b[o]) && le_tol(s[m], s[o]);
    // Prefer the mode that the (b desc, sigma desc) ordering puts second.
    let (first, second) = c.ordered();
    if dominates(second, first) {
        ModeCase::Single { active: second }
    } else if dominates(first, second) {
        ModeCase::Single { active: first }
    } else {
        ModeCase::Dual { low: first, high: second }
    }
}

/// Decay rate of the homogeneous solution for a single mode:
/// `(b + sqrt(b^2 + 2 gamma sigma^2)) / sigma^2`.
pub fn decay_rate(b: f64, sigma: f64, gamma: f64) -> f64 {
    let s2 = sigma * sigma;
    (b + (b * b + 2.0 * gamma * s2).sqrt()) / s2
}

/// Growth exponent of the second homogeneous solution:
/// `(b - sqrt(b^2 + 2 gamma sigma^2)) / sigma^2` (negative).
pub fn growth_rate(b: f64, sigma: f64, gamma: f64) -> f64 {
    let s2 = sigma * sigma;
    // b - sqrt(b^2 + c) = -c / (b + sqrt(b^2 + c)), stable when b > 0
    let c = 2.0 * gamma * s2;
    let root = (b * b + c).sqrt();
    if b > 0.0 {
        -c / (b + root) / s2
    } else {
        (b - root) / s2
    }
}

/// Discounted cost of the reflected Brownian motion with drift `b` and
/// diffusivity `sigma` started at `x`; the HJB value in the single mode case.
pub fn value_single(x: f64, b: f64, sigma: f64, gamma: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Precondition(format!("x must be >= 0, got {x}")));
    }
    let rho = decay_rate(b, sigma, gamma);
    Ok(x / gamma + b / (gamma * gamma) + (-rho * x).exp() / (gamma * rho))
}

/// Cost of the policy "low-workload mode on [0, z], high-workload mode above z".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingCost {
    pub b_low: f64,
    pub sigma_low: f64,
    pub b_high: f64,
    pub sigma_high: f64,
    pub gamma: f64,
    /// Decay exponent of the low-mode homogeneous solutions (> 0).
    pub beta: f64,
    /// Growth exponent of the low-mode homogeneous solutions (< 0).
    pub nu: f64,
    /// Decay exponent of the high-mode solution (> 0).
    pub rho: f64,
}

/// Pasting coefficients at a given switching level.
#[derive(Debug, Clone, Copy)]
struct Pasting {
    /// Coefficient of `exp(nu (z - x))` on the low branch.
    grow: f64,
    /// Coefficient of `exp(-beta x)` on the low branch.
    decay: f64,
    /// Coefficient of `exp(-rho (x - z))` on the high branch.
    high: f64,
    /// `exp(-beta z)`.
    e_beta: f64,
}

impl SwitchingCost {
    pub fn new(b_low: f64, sigma_low: f64, b_high: f64, sigma_high: f64, gamma: f64) -> Self {
        SwitchingCost {
            b_low,
            sigma_low,
            b_high,
            sigma_high,
            gamma,
            beta: decay_rate(b_low, sigma_low, gamma),
            nu: growth_rate(b_low, sigma_low, gamma),
            rho: decay_rate(b_high, sigma_high, gamma),
        }
    }

    /// Same problem with drifts and diffusivities multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        SwitchingCost::new(a * self.b_low, a * self.sigma_low, a * self.b_high, a * self.sigma_high, self.gamma)
    }

    fn pasting(&self, z: f64) -> Pasting {
        let (beta, nu, rho, g) = (self.beta, self.nu, self.rho, self.gamma);
        let gap = (self.b_low - self.b_high) / (g * g);
        let e_beta = (-beta * z).exp();
        let e_nu = (nu * z).exp();
        let den = beta * (rho - nu) - nu * e_nu * e_beta * (rho - beta);
        let grow = -(rho * beta * gap + e_beta * (rho - beta) / g) / den;
        let decay = (1.0 / g - nu * e_nu * grow) / beta;
        let high = (nu * grow + beta * decay * e_beta) / rho;
        Pasting { grow, decay, high, e_beta }
    }

    /// Low-workload branch at `x` (analytic, also defined for `x > z`).
    pub fn low_branch(&self, x: f64, z: f64) -> f64 {
        let c = self.pasting(z);
        let g = self.gamma;
        x / g + self.b_low / (g * g) + c.grow * (self.nu * (z - x)).exp() + c.decay * (-self.beta * x).exp()
    }

    /// High-workload branch at `x` (analytic, also defined for `x < z`).
    pub fn high_branch(&self, x: f64, z: f64) -> f64 {
        let c = self.pasting(z);
        let g = self.gamma;
        x / g + self.b_high / (g * g) + c.high * (-self.rho * (x - z)).exp()
    }

    /// `J(x, z)`: discounted workload cost from `x` under switching at `z`.
    pub fn cost(&self, x: f64, z: f64) -> f64 {
        if x <= z {
            self.low_branch(x, z)
        } else {
            self.high_branch(x, z)
        }
    }

    /// Second-derivative jump `J''(z-) - J''(z+)` at the switching point.
    /// Its root is the optimal switching level.
    pub fn smooth_fit_residual(&self, z: f64) -> f64 {
        let c = self.pasting(z);
        let (beta, nu, rho) = (self.beta, self.nu, self.rho);
        nu * (nu - rho) * c.grow + beta * (beta - rho) * c.decay * c.e_beta
    }

    /// Locate the unique root of [`Self::smooth_fit_residual`]: geometric
    /// bracket expansion by 4 from `[1e-6, 1]` up to `1e6`, then bisection.
    pub fn solve_switching_point(&self) -> Result<ZstarSolution> {
        if (self.b_low - self.b_high - self.gamma).abs() < 1e-8 {
            let a = 2.0;
            let s = self.scaled(a).solve_switching_point()?;
            return Ok(ZstarSolution {
                zstar: s.zstar / a,
                bracket: (s.bracket.0 / a, s.bracket.1 / a),
                residual: self.smooth_fit_residual(s.zstar / a),
                scaled: true,
            });
        }
        let f = |z: f64| self.smooth_fit_residual(z);
        let (mut lo, mut hi) = (1e-6, 1.0);
        let mut flo = f(lo);
        let mut fhi = f(hi);
        while flo.signum() == fhi.signum() && fhi != 0.0 {
            if hi >= 1e6 {
                return Err(Error::NoBracket { limit: 1e6 });
            }
            lo = hi;
            flo = fhi;
            hi *= 4.0;
            fhi = f(hi);
        }
        let bracket = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        // pick the endpoint with smaller residual
        let zstar = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
        Ok(ZstarSolution { zstar, bracket, residual: f(zstar), scaled: false })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZstarSolution {
    pub zstar: f64,
    /// Sign-change bracket found by the expansion phase.
    pub bracket: (f64, f64),
    pub residual: f64,
    /// True when the problem was solved in scaled coordinates (b_low - b_high = gamma).
    pub scaled: bool,
}

/// Exponents and switching point of the closed-form HJB solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbClosedForm {
    pub beta_r: f64,
    pub rho_r: f64,
    pub nu_r: f64,
    pub zstar: Option<f64>,
    pub v0: f64,
}

/// Solved workload control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcpSolution {
    pub coeffs: WcpCoefficients,
    pub case: ModeCase,
    pub closed_form: HjbClosedForm,
    /// `h_q alpha_q`, the factor turning workload cost into queueing cost.
    pub cost_scale: f64,
}

impl WcpSolution {
    /// Solve given coefficients; `cost_scale` multiplies `V_WCP(0)` into `V_0`.
    pub fn from_coefficients(coeffs: WcpCoefficients, cost_scale: f64) -> Result<Self> {
        for (m, &s) in coeffs.sigma.iter().enumerate() {
            if !(s > 0.0) {
                return Err(Error::Precondition(format!("sigma[{m}] must be > 0, got {s}")));
            }
        }
        let case = classify_mode_case(&coeffs);
        let (first, second) = coeffs.ordered();
        let g = coeffs.gamma;
        let beta_r = decay_rate(coeffs.b[first], coeffs.sigma[first], g);
        let nu_r = growth_rate(coeffs.b[first], coeffs.sigma[first], g);
        let rho_r = decay_rate(coeffs.b[second], coeffs.sigma[second], g);
        let zstar = match case {
            ModeCase::Single { .. } => None,
            ModeCase::Dual { low, high } => {
                let sc = SwitchingCost::new(coeffs.b[low], coeffs.sigma[low], coeffs.b[high], coeffs.sigma[high], g);
                Some(sc.solve_switching_point()?.zstar)
            }
        };
        let mut sol = WcpSolution {
            coeffs,
            case,
            closed_form: HjbClosedForm { beta_r, rho_r, nu_r, zstar, v0: 0.0 },
            cost_scale,
        };
        sol.closed_form.v0 = cost_scale * sol.value(0.0)?;
        Ok(sol)
    }

    pub fn solve(params: &SystemParams, lp: &LpStructure) -> Result<Self> {
        let coeffs = WcpCoefficients::from_lp(params, lp);
        let q = lp.q;
        Self::from_coefficients(coeffs, params.h[q] * lp.product_form.alpha[q])
    }

    pub fn zstar(&self) -> Option<f64> {
        self.closed_form.zstar
    }

    pub fn switching_cost(&self) -> Option<SwitchingCost> {
        match self.case {
            ModeCase::Dual { low, high } => {
                let c = &self.coeffs;
                Some(SwitchingCost::new(c.b[low], c.sigma[low], c.b[high], c.sigma[high], c.gamma))
            }
            ModeCase::Single { .. } => None,
        }
    }

    /// `V_WCP(x)`.
    pub fn value(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Precondition(format!("x must be >= 0, got {x}")));
        }
        let c = &self.coeffs;
        match self.case {
            ModeCase::Single { active } => value_single(x, c.b[active], c.sigma[active], c.gamma),
            ModeCase::Dual { .. } => {
                let sc = self.switching_cost().expect("dual case");
                Ok(sc.cost(x, self.closed_form.zstar.expect("dual case has z*")))
            }
        }
    }

    /// `V_0 = h_q alpha_q V_WCP(0)`.
    pub fn v0(&self) -> f64 {
        self.closed_form.v0
    }

    /// Mode index (0 or 1) used by the optimal feedback at workload `x`.
    pub fn optimal_mode(&self, x: f64) -> usize {
        match self.case {
            ModeCase::Single { active } => active,
            ModeCase::Dual { low, high } => {
                if x <= self.closed_form.zstar.unwrap_or(f64::INFINITY) {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// `min_m [b_m v1 + sigma_m^2/2 v2]`.
    pub fn hamiltonian(&self, v1: f64, v2: f64) -> f64 {
        let c = &self.coeffs;
        (0..2)
            .map(|m| c.b[m] * v1 + 0.5 * c.sigma[m] * c.sigma[m] * v2)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of checking the three symmetry conditions on the second-order data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `mu_hat_1k / alpha_1 = mu_hat_2k / alpha_2` for both servers.
    pub sy1: bool,
    /// `mu_hat_i1 / beta_1 = mu_hat_i2 / beta_2` for both classes.
    pub sy2: bool,
    /// `C_S_i1 = C_S_i2` for both classes.
    pub sy3: bool,
    pub drift_gap: f64,
    pub sigma_gap: f64,
    /// Whether the single mode case was detected.
    pub single_mode: bool,
    /// Every implication that should hold did hold (to 1e-10).
    pub consistent: bool,
}

pub fn symmetry_check(params: &SystemParams, lp: &LpStructure) -> SymmetryReport {
    let pf = &lp.product_form;
    let mh = &params.mu_hat;
    let eq = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let sy1 = (0..2).all(|k| eq(mh[0][k] / pf.alpha[0], mh[1][k] / pf.alpha[1]));
    let sy2 = (0..2).all(|i| eq(mh[i][0] / pf.beta[0], mh[i][1] / pf.beta[1]));
    let sy3 = (0..2).all(|i| eq(params.c2_service[i][0], params.c2_service[i][1]));
    let c = WcpCoefficients::from_lp(params, lp);
    let drift_gap = (c.b[0] - c.b[1]).abs();
    let sigma_gap = (c.sigma[0] - c.sigma[1]).abs();
    let single_mode = matches!(classify_mode_case(&c), ModeCase::Single { .. });
    let mut consistent = true;
    if sy1 || sy2 {
        consistent &= drift_gap < 1e-10 && single_mode;
    }
    if sy3 {
        consistent &= sigma_gap < 1e-10 && single_mode;
    }
    SymmetryReport { sy1, sy2, sy3, drift_gap, sigma_gap, single_mode, consistent }
}
