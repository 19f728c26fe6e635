//! Static allocation LP for the 2x2 system and its structure under the
//! extended heavy traffic condition.
//!
//! The LP is: minimize `rho` subject to `sum_k xi_ik mu_ik = lambda_i`,
//! `sum_i xi_ik <= rho`, `xi >= 0`. [`solve_lp_bruteforce`] solves it by
//! enumerating basic points and is used as the oracle for the closed forms
//! in the rest of this module.
//!
//! Class and server indices are zero-based throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::params::{Mat2, SystemParams};

/// Absolute tolerance for structural tests on data normalized to max entry 1.
pub const STRUCT_TOL: f64 = 1e-9;

/// `mu_ik = alpha_i * beta_k` with `beta_1 + beta_2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductForm {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

/// An extreme point of the LP solution set, with the roles its graph of
/// basic activities assigns to classes and servers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub xi: Mat2,
    /// The (class, server) activity with zero allocation.
    pub nonbasic: (usize, usize),
    /// Single-activity class (one basic activity).
    pub i1: usize,
    /// Dual-activity class.
    pub i2: usize,
    /// Single-activity server.
    pub k1: usize,
    /// Dual-activity server.
    pub k2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Switching {
    ClassSwitched,
    ServerSwitched,
}

/// Everything the rest of the pipeline needs from the LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpStructure {
    pub rho_star: f64,
    pub product_form: ProductForm,
    pub mode1: Mode,
    pub mode2: Mode,
    pub switching: Switching,
    /// High priority class.
    pub p: usize,
    /// Low priority class.
    pub q: usize,
}

impl LpStructure {
    pub fn mode(&self, m: usize) -> &Mode {
        if m == 0 {
            &self.mode1
        } else {
            &self.mode2
        }
    }
}

/// Result of the vertex-enumeration LP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub rho_star: f64,
    /// All distinct optimal basic points (allocation part only).
    pub vertices: Vec<Mat2>,
}

// Variable order: xi11, xi12, xi21, xi22, rho.
fn lp_constraints(lambda: [f64; 2], mu: Mat2) -> ([[f64; 5]; 8], [f64; 8]) {
    let mut a = [[0.0; 5]; 8];
    let mut b = [0.0; 8];
    a[0][0] = mu[0][0];
    a[0][1] = mu[0][1];
    b[0] = lambda[0];
    a[1][2] = mu[1][0];
    a[1][3] = mu[1][1];
    b[1] = lambda[1];
    // capacity: xi_1k + xi_2k - rho <= 0
    a[2] = [1.0, 0.0, 1.0, 0.0, -1.0];
    a[3] = [0.0, 1.0, 0.0, 1.0, -1.0];
    // nonnegativity: -xi <= 0
    for j in 0..4 {
        a[4 + j][j] = -1.0;
    }
    (a, b)
}

/// Solve the static allocation LP by enumerating every basic point of the
/// 5-variable, 8-constraint system (choose 5 active constraints, solve,
/// keep feasible ones) and returning the optimum and all optimal vertices.
pub fn solve_lp_bruteforce(params: &SystemParams) -> Result<LpSolution> {
    let s = params.scale();
    let lambda = params.lambda.map(|v| v / s);
    let mu = params.mu.map(|r| r.map(|v| v / s));
    let (a, b) = lp_constraints(lambda, mu);
    let tol = STRUCT_TOL;

    let mut feasible: Vec<[f64; 5]> = Vec::new();
    for mask in 0u32..(1 << 8) {
        if mask.count_ones() != 5 {
            continue;
        }
        let mut sa = [[0.0; 5]; 5];
        let mut sb = [0.0; 5];
        for (r, c) in (0..8).filter(|c| mask & (1 << c) != 0).enumerate() {
            sa[r] = a[c];
            sb[r] = b[c];
        }
        let Some(v) = linalg::solve(sa, sb) else { continue };
        let ok = (0..8).all(|c| {
            let lhs: f64 = a[c].iter().zip(&v).map(|(x, y)| x * y).sum();
            if c < 2 {
                (lhs - b[c]).abs() <= tol
            } else {
                lhs <= b[c] + tol
            }
        });
        if ok {
            feasible.push(v);
        }
    }
    let rho_star = feasible
        .iter()
        .map(|v| v[4])
        .min_by(f64::total_cmp)
        .ok_or(Error::LpInfeasible)?;
    let mut vertices: Vec<Mat2> = Vec::new();
    for v in feasible.iter().filter(|v| v[4] <= rho_star + tol) {
        let xi = [[v[0], v[1]], [v[2], v[3]]];
        if !vertices.iter().any(|w| max_abs_diff(w, &xi) <= tol) {
            vertices.push(xi);
        }
    }
    Ok(LpSolution { rho_star, vertices })
}

pub fn max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut m = 0.0_f64;
    for i in 0..2 {
        for k in 0..2 {
            m = m.max((a[i][k] - b[i][k]).abs());
        }
    }
    m
}

/// Factor `mu` as `alpha_i beta_k`, using column 1 as reference.
pub fn factor_product_form(mu: &Mat2) -> Result<ProductForm> {
    let s = mu.iter().flatten().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let n = mu.map(|r| r.map(|v| v / s));
    let det = n[0][0] * n[1][1] - n[0][1] * n[1][0];
    if det.abs() > STRUCT_TOL {
        return Err(Error::NotProductForm { det });
    }
    let b1 = mu[0][0] / (mu[0][0] + mu[0][1]);
    let b2 = mu[0][1] / (mu[0][0] + mu[0][1]);
    let alpha = [mu[0][0] / b1, mu[1][0] / b1];
    Ok(ProductForm { alpha, beta: [b1, b2] })
}

/// `sum_i lambda_i / alpha_i`, which equals the LP optimum for product-form rates.
pub fn product_form_load(params: &SystemParams, pf: &ProductForm) -> f64 {
    params.lambda[0] / pf.alpha[0] + params.lambda[1] / pf.alpha[1]
}

pub fn check_ehtc(params: &SystemParams, pf: &ProductForm) -> bool {
    (product_form_load(params, pf) - 1.0).abs() <= STRUCT_TOL
}

/// First violating pair of the nondegeneracy condition `lambda_i != mu_ik`.
pub fn nondegeneracy_violation(params: &SystemParams) -> Option<(usize, usize)> {
    let tol = STRUCT_TOL * params.scale();
    for i in 0..2 {
        for k in 0..2 {
            if (params.lambda[i] - params.mu[i][k]).abs() <= tol {
                return Some((i, k));
            }
        }
    }
    None
}

pub fn check_nondegeneracy(params: &SystemParams) -> bool {
    nondegeneracy_violation(params).is_none()
}

/// Allocation matrix in the LP solution set determined by its `xi_11` entry.
pub fn xi_from_entry(params: &SystemParams, pf: &ProductForm, xi11: f64) -> Mat2 {
    let [a1, _] = pf.alpha;
    let [b1, b2] = pf.beta;
    let xi12 = params.lambda[0] / (a1 * b2) - (b1 / b2) * xi11;
    let snap = |v: f64| {
        if v.abs() <= 1e-12 {
            0.0
        } else if (v - 1.0).abs() <= 1e-12 {
            1.0
        } else {
            v
        }
    };
    let (xi11, xi12) = (snap(xi11), snap(xi12));
    [[xi11, xi12], [1.0 - xi11, 1.0 - xi12]]
}

impl Mode {
    /// Label a column-stochastic allocation with exactly one zero entry.
    pub fn from_xi(xi: Mat2) -> Result<Mode> {
        let zeros: Vec<(usize, usize)> = (0..2)
            .flat_map(|i| (0..2).map(move |k| (i, k)))
            .filter(|&(i, k)| xi[i][k].abs() <= STRUCT_TOL)
            .collect();
        match zeros.as_slice() {
            [(i, k)] => Ok(Mode {
                xi,
                nonbasic: (*i, *k),
                i1: *i,
                i2: 1 - *i,
                k1: *k,
                k2: 1 - *k,
            }),
            [] => Err(Error::Precondition(format!("{xi:?} is not a mode (no zero entry)"))),
            _ => Err(Error::DegenerateMode { xi }),
        }
    }

    /// Relabel by class and server permutations (new index `i` is old `perm[i]`).
    pub fn relabeled(&self, class_perm: [usize; 2], server_perm: [usize; 2]) -> Mode {
        let mut xi = [[0.0; 2]; 2];
        for i in 0..2 {
            for k in 0..2 {
                xi[i][k] = self.xi[class_perm[i]][server_perm[k]];
            }
        }
        Mode::from_xi(xi).expect("relabeling preserves nondegeneracy")
    }
}

/// The two extreme modes of the LP solution set.
pub fn compute_modes(params: &SystemParams, pf: &ProductForm) -> Result<(Mode, Mode)> {
    let r = params.lambda[0] / (pf.alpha[0] * pf.beta[0]);
    let x1 = (r - pf.beta[1] / pf.beta[0]).max(0.0);
    let x2 = r.min(1.0);
    let m1 = Mode::from_xi(xi_from_entry(params, pf, x1))?;
    let m2 = Mode::from_xi(xi_from_entry(params, pf, x2))?;
    Ok((m1, m2))
}

/// Switching type from the load/speed comparison.
pub fn classify_switching(params: &SystemParams, pf: &ProductForm) -> Result<Switching> {
    let load = (0..2)
        .map(|i| params.lambda[i] / pf.alpha[i])
        .fold(f64::MIN, f64::max);
    let speed = pf.beta[0].max(pf.beta[1]);
    if (load - speed).abs() <= STRUCT_TOL {
        Err(Error::BoundaryCase { load, speed })
    } else if load < speed {
        Ok(Switching::ClassSwitched)
    } else {
        Ok(Switching::ServerSwitched)
    }
}

/// Switching type read off the positions of the two nonbasic activities.
pub fn pair_geometry(m1: &Mode, m2: &Mode) -> Option<Switching> {
    let (r1, c1) = m1.nonbasic;
    let (r2, c2) = m2.nonbasic;
    if c1 == c2 && r1 != r2 {
        Some(Switching::ClassSwitched)
    } else if r1 == r2 && c1 != c2 {
        Some(Switching::ServerSwitched)
    } else {
        None
    }
}

/// High and low priority classes: `h_p alpha_p >= h_q alpha_q`, ties go to class 0.
pub fn priority_classes(params: &SystemParams, pf: &ProductForm) -> (usize, usize) {
    let w = [params.h[0] * pf.alpha[0], params.h[1] * pf.alpha[1]];
    let tie = (w[0] - w[1]).abs() <= STRUCT_TOL * w[0].max(w[1]);
    if tie || w[0] > w[1] {
        (0, 1)
    } else {
        (1, 0)
    }
}

/// The unique (class, server) relabeling that puts `mode` in canonical
/// form, i.e. first column `(1, 0)^T`.
pub fn canonical_relabeling(mode: &Mode) -> ([usize; 2], [usize; 2]) {
    // The single-activity server becomes server 0; the class it is fully
    // devoted to (the dual-activity class) becomes class 0.
    let server_perm = [mode.k1, mode.k2];
    let class_perm = [mode.i2, mode.i1];
    (class_perm, server_perm)
}

/// Full structural analysis. Refuses (with a typed error) anything outside
/// extended heavy traffic with multiplicity and nondegenerate modes.
pub fn analyze(params: &SystemParams) -> Result<LpStructure> {
    params.validate()?;
    let pf = factor_product_form(&params.mu)?;
    let rho_star = product_form_load(params, &pf);
    if !check_ehtc(params, &pf) {
        return Err(Error::NotCritical { rho: rho_star });
    }
    if let Some((class, server)) = nondegeneracy_violation(params) {
        return Err(Error::Nondegeneracy { class, server });
    }
    let (mode1, mode2) = compute_modes(params, &pf)?;
    let switching = classify_switching(params, &pf)?;
    if pair_geometry(&mode1, &mode2) != Some(switching) {
        return Err(Error::Precondition(format!(
            "switching criterion {switching:?} disagrees with nonbasic activities {:?}/{:?}",
            mode1.nonbasic, mode2.nonbasic
        )));
    }
    let (p, q) = priority_classes(params, &pf);
    Ok(LpStructure { rho_star, product_form: pf, mode1, mode2, switching, p, q })
}
