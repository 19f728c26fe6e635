//! n-ladder experiments: cost against `V_0`, state-space collapse, boundary
//! behaviour and mode fidelity, replicated across a sequence of scales.

use serde::{Deserialize, Serialize};

use crate::diffusion::{self, CostEstimate, DiffusionKind, DiffusionSpec, Scheme};
use crate::error::{Error, Result};
use crate::lp::{self, LpStructure};
use crate::params::SystemParams;
use crate::queue::policy::{case_condition, m0};
use crate::queue::{
    self, required_policy, PolicyKind, PolicySpec, PrimitiveDistributions, RecordOptions, RenewalSource,
    ScaledRates, ScalingPolicy, SimConfig, TrajectoryRecord,
};
use crate::rng;
use crate::wcp::{ModeCase, WcpSolution};

fn default_m() -> f64 {
    3.0
}
fn default_confidence() -> f64 {
    0.95
}
fn default_probe() -> f64 {
    1.0
}
fn default_ks_paths() -> usize {
    2000
}
fn default_tail_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub n_values: Vec<f64>,
    pub replications: usize,
    /// `t_0`; defaults to `40 / gamma`.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Mode-fidelity band half-width; defaults to `z*/4`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_m")]
    pub m_moment: f64,
    #[serde(default)]
    pub a_bar: Option<f64>,
    #[serde(default)]
    pub distributions: PrimitiveDistributions,
    #[serde(default)]
    pub seed: u64,
    /// Time at which `W_hat` is compared with the limiting diffusion.
    #[serde(default = "default_probe")]
    pub probe_time: f64,
    #[serde(default = "default_ks_paths")]
    pub ks_paths: usize,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

impl LadderConfig {
    pub fn new(n_values: Vec<f64>, replications: usize, seed: u64) -> Self {
        LadderConfig {
            n_values,
            replications,
            horizon: None,
            epsilon: None,
            confidence: default_confidence(),
            m_moment: default_m(),
            a_bar: None,
            distributions: PrimitiveDistributions::default(),
            seed,
            probe_time: default_probe(),
            ks_paths: default_ks_paths(),
            tail_tol: default_tail_tol(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("n_values must be nonempty and increasing".into()));
        }
        if self.replications < 30 {
            return Err(Error::InvalidParams(format!("need >= 30 replications, got {}", self.replications)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParams("confidence must be in (0, 1)".into()));
        }
        self.distributions.validate(self.m_moment)
    }
}

/// Proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub estimate: f64,
    pub std_error: f64,
    pub count: usize,
}

/// Sample mean with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = xs.into_iter().collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        MeanEstimate { estimate: m, std_error: (var / n).sqrt(), count: v.len() }
    }
}

/// Fraction of replications with `sup X_hat_p >= 2 Theta_hat`.
pub fn ssc_statistic(records: &[TrajectoryRecord], scaling: &ScalingPolicy, p: usize) -> Proportion {
    let n = records.len();
    if n == 0 {
        return Proportion { estimate: 0.0, std_error: 0.0, count: 0 };
    }
    let level = 2.0 * scaling.theta_hat();
    let hits = records.iter().filter(|r| r.sup_x_hat[p] >= level).count();
    let q = hits as f64 / n as f64;
    Proportion { estimate: q, std_error: (q * (1.0 - q) / n as f64).sqrt(), count: n }
}

/// `int_0^{t_0} 1{W_hat >= c3 Theta_hat} dL_hat` of one replication.
pub fn rbar_statistic(record: &TrajectoryRecord) -> f64 {
    record.rbar
}

/// Non-basic usage outside the band around `z*`: `(low, high)`.
pub fn mode_fidelity(record: &TrajectoryRecord, policy: &PolicySpec) -> Result<(f64, f64)> {
    if !policy.kind.is_dual() {
        return Err(Error::Precondition(format!("mode fidelity needs a dual-mode policy, got {}", policy.kind)));
    }
    Ok((record.fidelity[0], record.fidelity[1]))
}

/// Policy required by the case table for `params` (refuses instances the
/// analysis refuses).
pub fn policy_for(params: &SystemParams) -> Result<(LpStructure, WcpSolution, PolicyKind)> {
    let lp = lp::analyze(params)?;
    let wcp = WcpSolution::solve(params, &lp)?;
    let kind = required_policy(&lp, &wcp)?;
    Ok((lp, wcp, kind))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
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

/// Empirical quantile (linear interpolation) of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Statistics for one scale of the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub n: f64,
    pub theta_n: u64,
    pub cost: CostEstimate,
    /// `|J_hat - V_0|`.
    pub gap: f64,
    pub ssc: Proportion,
    pub rbar: MeanEstimate,
    pub fidelity_low: Option<MeanEstimate>,
    pub fidelity_high: Option<MeanEstimate>,
    /// 10%, 50% and 90% quantiles of `e_max(t_0)`.
    pub e_max_quantiles: [f64; 3],
    /// Second moment of the discounted cost (descriptive uniform
    /// integrability check with exponent 1).
    pub cost_second_moment: f64,
    pub mode_switches: MeanEstimate,
    pub ks_statistic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub policy: PolicyKind,
    pub case_condition: String,
    pub v0: f64,
    pub zstar: Option<f64>,
    pub horizon: f64,
    pub epsilon: Option<f64>,
    pub confidence: f64,
    pub rows: Vec<LadderRow>,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    /// Long-format table: `n,statistic,estimate,se`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,statistic,estimate,se\n");
        for r in &self.rows {
            let mut line = |name: &str, est: f64, se: f64| s.push_str(&format!("{},{},{},{}\n", r.n, name, est, se));
            line("cost", r.cost.estimate, r.cost.std_error);
            line("gap", r.gap, r.cost.std_error);
            line("ssc", r.ssc.estimate, r.ssc.std_error);
            line("rbar", r.rbar.estimate, r.rbar.std_error);
            if let (Some(l), Some(h)) = (r.fidelity_low, r.fidelity_high) {
                line("fidelity_low", l.estimate, l.std_error);
                line("fidelity_high", h.estimate, h.std_error);
            }
            for (q, v) in [0.1, 0.5, 0.9].iter().zip(r.e_max_quantiles) {
                line(&format!("e_max_q{}", (q * 100.0) as u32), v, f64::NAN);
            }
            if let Some(k) = r.ks_statistic {
                line("ks", k, f64::NAN);
            }
        }
        s
    }
}

/// Moment requirements of the case table: the T2, T2T2 and T1T2 cases
/// assume `m > m_0`.
pub fn moment_warnings(kind: PolicyKind, ladder: &LadderConfig) -> Vec<String> {
    let mut w = Vec::new();
    if matches!(kind, PolicyKind::T2 | PolicyKind::T2T2 | PolicyKind::T1T2) && ladder.m_moment <= m0() {
        w.push(format!("{kind} assumes moment order > {:.4}; configured {}", m0(), ladder.m_moment));
    }
    let avail = ladder.distributions.moment_order();
    if avail <= ladder.m_moment {
        w.push(format!("distributions have finite moments only below {avail}, configured {}", ladder.m_moment));
    }
    w
}

/// Limiting workload diffusion under the optimal control.
pub fn limit_diffusion(wcp: &WcpSolution) -> DiffusionKind {
    let c = &wcp.coeffs;
    match wcp.case {
        ModeCase::Single { active } => DiffusionKind::Rbm { b: c.b[active], sigma: c.sigma[active] },
        ModeCase::Dual { low, high } => DiffusionKind::Switched {
            b_low: c.b[low],
            sigma_low: c.sigma[low],
            b_high: c.b[high],
            sigma_high: c.sigma[high],
            zstar: wcp.zstar().expect("dual case has z*"),
        },
    }
}

/// Simulation configuration for one scale.
pub fn sim_config(
    params: &SystemParams,
    lp: &LpStructure,
    policy: PolicySpec,
    ladder: &LadderConfig,
    n: f64,
) -> Result<SimConfig> {
    let horizon = ladder.horizon.unwrap_or(40.0 / params.gamma);
    Ok(SimConfig {
        n,
        horizon,
        gamma: params.gamma,
        h: params.h,
        beta: lp.product_form.beta,
        scaling: ScalingPolicy::new(n, ladder.m_moment, ladder.a_bar)?,
        policy,
        fidelity_eps: ladder.epsilon,
        record: RecordOptions { probe_time: Some(ladder.probe_time), ..Default::default() },
    })
}

/// Run `replications` independent replications at one scale; replication
/// `r` at scale `n` draws from streams keyed by `mix(n, r)`.
pub fn replicate(params: &SystemParams, cfg: &SimConfig, dists: &PrimitiveDistributions, seed: u64, replications: usize) -> Result<Vec<TrajectoryRecord>> {
    let rates = ScaledRates::new(params, cfg.n)?;
    let one = |r: u64| {
        let mut src = RenewalSource::new(rates, dists, seed, rng::mix(cfg.n.to_bits(), r));
        queue::run(cfg, &mut src)
    };
    #[cfg(feature = "parallel")]
    let out: Vec<Result<TrajectoryRecord>> = {
        use rayon::prelude::*;
        (0..replications as u64).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out: Vec<Result<TrajectoryRecord>> = (0..replications as u64).map(one).collect();
    out.into_iter().collect()
}

/// Run the ladder for `kind` on `params` and assemble the report.
pub fn ao_experiment(ladder: &LadderConfig, params: &SystemParams, kind: PolicyKind) -> Result<ConvergenceReport> {
    ladder.validate()?;
    let lp = lp::analyze(params)?;
    let wcp = WcpSolution::solve(params, &lp)?;
    let policy = PolicySpec::from_analysis(kind, &lp, &wcp)?;
    let v0 = wcp.v0();
    let limit = limit_diffusion(&wcp);
    let mut spec = DiffusionSpec::with_default_horizon(limit, params.gamma, 1e-3);
    spec.horizon = ladder.probe_time;
    spec.scheme = Scheme::Bridge;
    let limit_samples =
        (ladder.ks_paths > 0).then(|| diffusion::terminal_samples(&spec, ladder.ks_paths, rng::mix(ladder.seed, 0x6b73)));

    let mut rows = Vec::with_capacity(ladder.n_values.len());
    let mut horizon = 0.0;
    for &n in &ladder.n_values {
        let cfg = sim_config(params, &lp, policy, ladder, n)?;
        horizon = cfg.horizon;
        let recs = replicate(params, &cfg, &ladder.distributions, ladder.seed, ladder.replications)?;
        if let Some(v) = recs.iter().find(|r| !r.invariant_violations.is_empty()) {
            return Err(Error::Precondition(format!("simulator invariant violated: {}", v.invariant_violations[0])));
        }
        let cost = queue::cost_estimate(&recs, params.gamma, ladder.tail_tol)?;
        let (fl, fh) = if kind.is_dual() {
            let f: Vec<(f64, f64)> = recs.iter().map(|r| mode_fidelity(r, &policy)).collect::<Result<_>>()?;
            (Some(MeanEstimate::of(f.iter().map(|x| x.0))), Some(MeanEstimate::of(f.iter().map(|x| x.1))))
        } else {
            (None, None)
        };
        let e: Vec<f64> = recs.iter().map(|r| r.e_max).collect();
        let ks = limit_samples.as_ref().map(|lim| {
            let w: Vec<f64> = recs.iter().filter_map(|r| r.w_hat_probe).collect();
            ks_statistic(&w, lim)
        });
        rows.push(LadderRow {
            n,
            theta_n: cfg.scaling.theta_n,
            gap: (cost.estimate - v0).abs(),
            cost,
            ssc: ssc_statistic(&recs, &cfg.scaling, lp.p),
            rbar: MeanEstimate::of(recs.iter().map(rbar_statistic)),
            fidelity_low: fl,
            fidelity_high: fh,
            e_max_quantiles: [quantile(&e, 0.1), quantile(&e, 0.5), quantile(&e, 0.9)],
            cost_second_moment: recs.iter().map(|r| r.cost * r.cost).sum::<f64>() / recs.len() as f64,
            mode_switches: MeanEstimate::of(recs.iter().map(|r| r.mode_switches as f64)),
            ks_statistic: ks,
        });
    }
    Ok(ConvergenceReport {
        policy: kind,
        case_condition: case_condition(&lp, &wcp),
        v0,
        zstar: wcp.zstar(),
        horizon,
        epsilon: wcp.zstar().map(|z| ladder.epsilon.unwrap_or(z / 4.0)),
        confidence: ladder.confidence,
        rows,
        warnings: moment_warnings(kind, ladder).into_iter().chain(ladder.distributions.scv_mismatches(params)).collect(),
    })
}
