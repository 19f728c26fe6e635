//! Problem data for the 2-class / 2-server parallel server system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row index is the class, column index is the server.
pub type Mat2 = [[f64; 2]; 2];

/// First- and second-order data of the system plus cost parameters.
///
/// Rates are per unit time of the unscaled (n = 1) system; the n-th system
/// uses `n * lambda + sqrt(n) * lambda_hat` and likewise for `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub lambda: [f64; 2],
    pub mu: Mat2,
    #[serde(default)]
    pub lambda_hat: [f64; 2],
    #[serde(default)]
    pub mu_hat: Mat2,
    #[serde(default = "unit2")]
    pub c2_arrival: [f64; 2],
    #[serde(default = "unit22")]
    pub c2_service: Mat2,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "unit2")]
    pub h: [f64; 2],
}

fn one() -> f64 {
    1.0
}
fn unit2() -> [f64; 2] {
    [1.0, 1.0]
}
fn unit22() -> Mat2 {
    [[1.0, 1.0], [1.0, 1.0]]
}

impl SystemParams {
    /// First-order data only; second-order perturbations zero, all SCVs one,
    /// unit holding costs and discount rate.
    pub fn first_order(lambda: [f64; 2], mu: Mat2) -> Self {
        SystemParams {
            lambda,
            mu,
            lambda_hat: [0.0; 2],
            mu_hat: [[0.0; 2]; 2],
            c2_arrival: unit2(),
            c2_service: unit22(),
            gamma: 1.0,
            h: unit2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        let fin = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be finite, got {v}")))
            }
        };
        for i in 0..2 {
            pos(&format!("lambda[{i}]"), self.lambda[i])?;
            pos(&format!("h[{i}]"), self.h[i])?;
            pos(&format!("c2_arrival[{i}]"), self.c2_arrival[i])?;
            fin(&format!("lambda_hat[{i}]"), self.lambda_hat[i])?;
            for k in 0..2 {
                pos(&format!("mu[{i}][{k}]"), self.mu[i][k])?;
                pos(&format!("c2_service[{i}][{k}]"), self.c2_service[i][k])?;
                fin(&format!("mu_hat[{i}][{k}]"), self.mu_hat[i][k])?;
            }
        }
        pos("gamma", self.gamma)
    }

    /// Largest first-order entry; structural tolerances are taken relative
    /// to this so that data of any magnitude is treated alike.
    pub fn scale(&self) -> f64 {
        self.lambda
            .iter()
            .chain(self.mu.iter().flatten())
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Apply a class permutation and a server permutation:
    /// new class `i` is old class `class_perm[i]`, same for servers.
    pub fn relabeled(&self, class_perm: [usize; 2], server_perm: [usize; 2]) -> Self {
        let m = |a: &Mat2| -> Mat2 {
            let mut out = [[0.0; 2]; 2];
            for i in 0..2 {
                for k in 0..2 {
                    out[i][k] = a[class_perm[i]][server_perm[k]];
                }
            }
            out
        };
        let v = |a: &[f64; 2]| -> [f64; 2] { [a[class_perm[0]], a[class_perm[1]]] };
        SystemParams {
            lambda: v(&self.lambda),
            mu: m(&self.mu),
            lambda_hat: v(&self.lambda_hat),
            mu_hat: m(&self.mu_hat),
            c2_arrival: v(&self.c2_arrival),
            c2_service: m(&self.c2_service),
            gamma: self.gamma,
            h: v(&self.h),
        }
    }
}
