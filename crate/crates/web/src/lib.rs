//! Browser bindings: analyze an instance, plot its value function and the
//! switching-level trade-off, and draw a sample path of the limiting
//! workload. Everything crosses the boundary as JSON strings.

use hts_core::diffusion::{self, DiffusionSpec, Scheme};
use hts_core::experiments::limit_diffusion;
use hts_core::lp::{self, LpStructure};
use hts_core::queue::{required_policy, PolicyKind};
use hts_core::wcp::WcpSolution;
use hts_core::SystemParams;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Analysis {
    lp: LpStructure,
    wcp: WcpSolution,
    policy: PolicyKind,
    zstar: Option<f64>,
    v0: f64,
}

#[derive(Serialize)]
struct ValueCurve {
    x: Vec<f64>,
    value: Vec<f64>,
    mode: Vec<usize>,
    zstar: Option<f64>,
    /// `J(0, z)` against the switching level, dual case only.
    switching: Option<SwitchingCurve>,
}

#[derive(Serialize)]
struct SwitchingCurve {
    z: Vec<f64>,
    cost: Vec<f64>,
}

#[derive(Serialize)]
struct SamplePath {
    t: Vec<f64>,
    z: Vec<f64>,
    l: Vec<f64>,
    zstar: Option<f64>,
}

fn solve(system_json: &str) -> Result<(SystemParams, LpStructure, WcpSolution), String> {
    let params: SystemParams = serde_json::from_str(system_json).map_err(|e| e.to_string())?;
    params.validate().map_err(|e| e.to_string())?;
    let lp = lp::analyze(&params).map_err(|e| e.to_string())?;
    let wcp = WcpSolution::solve(&params, &lp).map_err(|e| e.to_string())?;
    Ok((params, lp, wcp))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn analyze_json(system_json: &str) -> Result<String, String> {
    let (_, lp, wcp) = solve(system_json)?;
    let policy = required_policy(&lp, &wcp).map_err(|e| e.to_string())?;
    to_json(&Analysis { policy, zstar: wcp.zstar(), v0: wcp.v0(), lp, wcp })
}

pub fn value_curve_json(system_json: &str, x_max: f64, npts: usize) -> Result<String, String> {
    if x_max.is_nan() || x_max <= 0.0 || !(2..=100_000).contains(&npts) {
        return Err("need x_max > 0 and 2 <= npts <= 100000".into());
    }
    let (_, _, wcp) = solve(system_json)?;
    let x: Vec<f64> = (0..npts).map(|j| x_max * j as f64 / (npts - 1) as f64).collect();
    let value = x.iter().map(|&v| wcp.value(v)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mode = x.iter().map(|&v| wcp.optimal_mode(v)).collect();
    let switching = match (wcp.switching_cost(), wcp.zstar()) {
        (Some(sc), Some(zs)) => {
            // two decades either side of z*
            let z: Vec<f64> = (0..=80).map(|j| zs * 10f64.powf(-2.0 + j as f64 / 20.0)).collect();
            let cost = z.iter().map(|&zz| sc.cost(0.0, zz)).collect();
            Some(SwitchingCurve { z, cost })
        }
        _ => None,
    };
    to_json(&ValueCurve { x, value, mode, zstar: wcp.zstar(), switching })
}

pub fn sample_path_json(system_json: &str, horizon: f64, seed: u32, max_points: usize) -> Result<String, String> {
    if !(horizon > 0.0 && horizon <= 1000.0) || max_points < 2 {
        return Err("need 0 < horizon <= 1000 and max_points >= 2".into());
    }
    let (params, _, wcp) = solve(system_json)?;
    let spec = DiffusionSpec {
        kind: limit_diffusion(&wcp),
        z0: 0.0,
        dt: (horizon / 1e5).min(1e-3),
        horizon,
        gamma: params.gamma,
        scheme: Scheme::Bridge,
    };
    spec.validate().map_err(|e| e.to_string())?;
    let p = diffusion::simulate(&spec, seed as u64, 0);
    let stride = p.z.len().div_ceil(max_points).max(1);
    let keep = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
    let t: Vec<f64> = p.times().step_by(stride).collect();
    to_json(&SamplePath { t, z: keep(&p.z), l: keep(&p.l), zstar: wcp.zstar() })
}

#[wasm_bindgen]
pub fn analyze(system_json: &str) -> Result<String, JsError> {
    analyze_json(system_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn value_curve(system_json: &str, x_max: f64, npts: usize) -> Result<String, JsError> {
    value_curve_json(system_json, x_max, npts).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sample_path(system_json: &str, horizon: f64, seed: u32, max_points: usize) -> Result<String, JsError> {
    sample_path_json(system_json, horizon, seed, max_points).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const SS: &str = r#"{"lambda":[0.6,2.8],"mu":[[1,1],[2,2]],"mu_hat":[[0,0],[1,0]],"c2_service":[[1,1],[4,1]],"h":[3,1]}"#;
    const CS: &str = r#"{"lambda":[0.5,0.5],"mu":[[0.3,0.7],[0.3,0.7]],"mu_hat":[[0,0],[0.5,0]],"h":[2,1]}"#;

    #[test]
    fn analyze_reports_policy() {
        let v: Value = serde_json::from_str(&analyze_json(SS).unwrap()).unwrap();
        assert_eq!(v["policy"], "PP");
        assert!(v["zstar"].as_f64().unwrap() > 0.0);
        let v: Value = serde_json::from_str(&analyze_json(CS).unwrap()).unwrap();
        assert_eq!(v["policy"], "P");
        assert!(v["zstar"].is_null());
        assert!(analyze_json(r#"{"lambda":[1,1],"mu":[[1,2],[2,1]]}"#).is_err());
        assert!(analyze_json("{").is_err());
    }

    #[test]
    fn switching_curve_is_minimized_at_zstar() {
        let v: Value = serde_json::from_str(&value_curve_json(SS, 3.0, 31).unwrap()).unwrap();
        assert_eq!(v["x"].as_array().unwrap().len(), 31);
        let cost: Vec<f64> = serde_json::from_value(v["switching"]["cost"].clone()).unwrap();
        let at_zstar = cost[40];
        assert!(cost.iter().all(|&c| c >= at_zstar - 1e-12));
        let v: Value = serde_json::from_str(&value_curve_json(CS, 3.0, 5).unwrap()).unwrap();
        assert!(v["switching"].is_null());
        assert!(value_curve_json(SS, 0.0, 5).is_err());
    }

    #[test]
    fn sample_path_is_thinned_and_reflected() {
        let v: Value = serde_json::from_str(&sample_path_json(SS, 10.0, 1, 500).unwrap()).unwrap();
        let z: Vec<f64> = serde_json::from_value(v["z"].clone()).unwrap();
        assert!(z.len() <= 500 && z.len() > 250);
        assert!(z.iter().all(|&x| x >= 0.0));
        assert_eq!(v["t"].as_array().unwrap().len(), z.len());
        assert_eq!(sample_path_json(SS, 10.0, 1, 500), sample_path_json(SS, 10.0, 1, 500));
    }
}
