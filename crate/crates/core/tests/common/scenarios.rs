//! Hand-specified policy scenarios and event-log checks shared by the
//! simulator tests and the acceptance run.

use super::interpreter::{Rec, Scenario};
use hts_core::experiments::{policy_for, sim_config, LadderConfig};
use hts_core::queue::sim::e_max_from_log;
use hts_core::queue::{
    run, EventKind, ModeLabels, PolicyKind, PolicySpec, PrimitiveDistributions, RecordOptions, RenewalSource,
    ScaledRates, ScalingPolicy, ScriptedSource, SimConfig, TrajectoryRecord,
};
use hts_core::SystemParams;

pub const A: ModeLabels = ModeLabels { i1: 0, i2: 1, k1: 0, k2: 1 };
pub const B: ModeLabels = ModeLabels { i1: 0, i2: 1, k1: 1, k2: 0 };
pub const C: ModeLabels = ModeLabels { i1: 1, i2: 0, k1: 0, k2: 1 };

pub fn scenario(kind: PolicyKind, modes: [ModeLabels; 2], theta: u64, ia: [Vec<f64>; 2], sv: [[Vec<f64>; 2]; 2]) -> Scenario {
    Scenario {
        interarrivals: ia,
        services: sv,
        policy: PolicySpec { kind, modes, zstar: kind.is_dual().then_some(2.0), alpha: [1.0, 1.0] },
        theta,
        n: 1.0,
        horizon: 100.0,
    }
}

pub fn sim_config_for(sc: &Scenario) -> SimConfig {
    SimConfig {
        n: sc.n,
        horizon: sc.horizon,
        gamma: 1.0,
        h: [1.0, 1.0],
        beta: [0.5, 0.5],
        scaling: ScalingPolicy { n: sc.n, m_moment: 3.0, a_bar: 0.45, theta_n: sc.theta },
        policy: sc.policy,
        fidelity_eps: None,
        record: RecordOptions { event_log: true, check_invariants: true, ..Default::default() },
    }
}

pub fn simulate(sc: &Scenario) -> TrajectoryRecord {
    let mut src = ScriptedSource::new(sc.interarrivals.clone(), sc.services.clone());
    run(&sim_config_for(sc), &mut src).unwrap()
}

pub fn as_recs(r: &TrajectoryRecord) -> Vec<Rec> {
    r.events
        .as_ref()
        .unwrap()
        .iter()
        .map(|e| Rec { t: e.t, kind: e.kind, class: e.class, server: e.server, job: e.job, mode: e.mode })
        .collect()
}

/// One hand-specified scenario per policy. Durations are dyadic so every
/// timestamp is exact.
pub fn scenarios() -> Vec<Scenario> {
    let q = |v: &[f64]| v.to_vec();
    vec![
        scenario(
            PolicyKind::P,
            [A, A],
            1,
            [q(&[0.5, 0.25, 0.25]), q(&[0.5, 0.5])],
            [[q(&[0.75]), q(&[0.75])], [q(&[0.75]), q(&[0.5])]],
        ),
        scenario(
            PolicyKind::T2,
            [A, A],
            2,
            [q(&[0.25, 0.25]), q(&[0.25, 0.25, 0.25])],
            [[q(&[0.5]), q(&[0.5])], [q(&[1.0]), q(&[0.5])]],
        ),
        scenario(
            PolicyKind::PP,
            [A, B],
            1,
            [q(&[0.25, 0.25, 0.25]), q(&[0.25, 0.25])],
            [[q(&[0.5]), q(&[0.75])], [q(&[0.5]), q(&[0.5])]],
        ),
        scenario(
            PolicyKind::T2T2,
            [A, B],
            1,
            [q(&[0.25, 0.25]), q(&[0.25, 0.125, 0.125])],
            [[q(&[0.5]), q(&[0.5])], [q(&[0.25, 0.75]), q(&[0.5])]],
        ),
        scenario(
            PolicyKind::T1T2,
            [A, C],
            2,
            [q(&[0.25, 0.125, 0.125]), q(&[0.25, 0.25])],
            [[q(&[0.5]), q(&[0.75])], [q(&[0.5]), q(&[0.5])]],
        ),
        scenario(
            PolicyKind::T2T1,
            [A, C],
            1,
            [q(&[0.25, 0.25]), q(&[0.25, 0.125, 0.125])],
            [[q(&[0.5]), q(&[0.5])], [q(&[0.75]), q(&[0.25])]],
        ),
    ]
}

pub fn renewal_run(params: &SystemParams, dists: &PrimitiveDistributions, n: f64, seed: u64, rep: u64, log: bool) -> (SimConfig, TrajectoryRecord) {
    let (lp, wcp, kind) = policy_for(params).unwrap();
    let policy = PolicySpec::from_analysis(kind, &lp, &wcp).unwrap();
    let mut ladder = LadderConfig::new(vec![n], 30, seed);
    ladder.horizon = Some(6.0);
    let mut cfg = sim_config(params, &lp, policy, &ladder, n).unwrap();
    cfg.record.event_log = log;
    cfg.record.check_invariants = true;
    cfg.record.sample_period = Some(0.05);
    let mut src = RenewalSource::new(ScaledRates::new(params, n).unwrap(), dists, seed, rep);
    let r = run(&cfg, &mut src).unwrap();
    (cfg, r)
}

pub fn check_log(cfg: &SimConfig, r: &TrajectoryRecord) {
    assert!(r.invariant_violations.is_empty(), "{:?}", &r.invariant_violations[..1]);
    let ev = r.events.as_ref().unwrap();
    let mut started = std::collections::HashMap::new();
    let mut busy: [Option<u64>; 2] = [None, None];
    let mut last_start = [None::<u64>; 2];
    for e in ev {
        match e.kind {
            EventKind::Start => {
                let k = e.server.unwrap();
                // non-preemption: the server has no job in progress
                assert!(busy[k].is_none(), "server {k} preempted at {}", e.t);
                assert!(started.insert(e.job, e.t).is_none(), "job {} started twice", e.job);
                busy[k] = Some(e.job);
                // FIFO within class (ids follow arrival order)
                if let Some(prev) = last_start[e.class] {
                    assert!(e.job > prev, "FIFO violated for class {}", e.class);
                }
                last_start[e.class] = Some(e.job);
                // the current mode's non-basic activity is never started
                assert_ne!((e.class, k), cfg.policy.modes[e.mode].nonbasic(), "non-basic start at {}", e.t);
            }
            EventKind::Completion => {
                let k = e.server.unwrap();
                assert_eq!(busy[k], Some(e.job));
                busy[k] = None;
            }
            EventKind::Arrival => {}
        }
    }
    assert!(ev.windows(2).all(|w| w[0].t <= w[1].t));
    assert_eq!(e_max_from_log(ev, cfg.horizon), r.e_max);
    // sampled paths: L_hat nondecreasing, W_hat consistent with X_hat
    let s = r.samples.as_ref().unwrap();
    assert!(s.windows(2).all(|w| w[1].l_hat >= w[0].l_hat && w[1].i_hat[0] >= w[0].i_hat[0]));
    for p in s {
        let w = p.x_hat[0] / cfg.policy.alpha[0] + p.x_hat[1] / cfg.policy.alpha[1];
        assert!((w - p.w_hat).abs() < 1e-12);
    }
}

