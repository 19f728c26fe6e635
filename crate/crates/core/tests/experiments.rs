#![allow(clippy::needless_range_loop)]

mod common;

use hts_core::experiments::{
    ao_experiment, mode_fidelity, policy_for, rbar_statistic, sim_config, ssc_statistic, LadderConfig,
};
use hts_core::queue::{
    required_policy, run, Event, EventKind, PolicyKind, PolicySpec, PrimitiveDistributions, RecordOptions,
    RenewalSource, ScaledRates, SimConfig, TrajectoryRecord,
};
use hts_core::wcp::{ModeCase, WcpSolution};
use hts_core::{lp, Error, SystemParams};

/// Statistics recomputed by a linear scan over an event log.
#[derive(Debug, Default)]
struct Replay {
    cost: f64,
    busy: [[f64; 2]; 2],
    idle: [f64; 2],
    rbar: f64,
    fidelity: [f64; 2],
    sup_x_hat: [f64; 2],
    arrivals: [u64; 2],
    departures: [[u64; 2]; 2],
    mode_switches: u64,
}

fn replay(cfg: &SimConfig, events: &[Event]) -> Replay {
    let rn = cfg.n.sqrt();
    let a = cfg.policy.alpha;
    let c3 = 3.0 / a[0].min(a[1]);
    let band = c3 * cfg.scaling.theta_n as f64 / rn;
    let eps = cfg.fidelity_eps.unwrap_or(cfg.policy.zstar.unwrap_or(0.0) / 4.0);
    let mut out = Replay::default();
    let mut x = [0i64; 2];
    let mut serving: [Option<usize>; 2] = [None, None];
    let mut mode = 0;
    let mut t = 0.0;
    let span = |t0: f64, t1: f64, x: [i64; 2], serving: [Option<usize>; 2], out: &mut Replay| {
        if t1 <= t0 {
            return;
        }
        let g = cfg.gamma;
        let xh = [x[0] as f64 / rn, x[1] as f64 / rn];
        out.cost += (cfg.h[0] * xh[0] + cfg.h[1] * xh[1]) * ((-g * t0).exp() - (-g * t1).exp()) / g;
        let w = xh[0] / a[0] + xh[1] / a[1];
        for k in 0..2 {
            match serving[k] {
                Some(i) => out.busy[i][k] += t1 - t0,
                None => {
                    out.idle[k] += t1 - t0;
                    if w >= band {
                        out.rbar += cfg.beta[k] * rn * (t1 - t0);
                    }
                }
            }
        }
        if let Some(z) = cfg.policy.zstar {
            for (m, inside) in [(0, w <= z - eps), (1, w >= z + eps)] {
                let (i, k) = cfg.policy.modes[m].nonbasic();
                if inside && serving[k] == Some(i) {
                    out.fidelity[m] += t1 - t0;
                }
            }
        }
    };
    for e in events {
        span(t, e.t, x, serving, &mut out);
        t = e.t;
        match e.kind {
            EventKind::Arrival => {
                x[e.class] += 1;
                out.arrivals[e.class] += 1;
            }
            EventKind::Start => serving[e.server.unwrap()] = Some(e.class),
            EventKind::Completion => {
                x[e.class] -= 1;
                serving[e.server.unwrap()] = None;
                out.departures[e.class][e.server.unwrap()] += 1;
            }
        }
        if e.mode != mode {
            out.mode_switches += 1;
            mode = e.mode;
        }
        for i in 0..2 {
            out.sup_x_hat[i] = out.sup_x_hat[i].max(x[i] as f64 / rn);
        }
    }
    span(t, cfg.horizon, x, serving, &mut out);
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn logged_runs(params: &SystemParams, dists: &PrimitiveDistributions, kind: Option<PolicyKind>) -> Vec<(SimConfig, TrajectoryRecord)> {
    let (lp, wcp, required) = policy_for(params).unwrap();
    let policy = PolicySpec::from_analysis_unchecked(kind.unwrap_or(required), &lp, &wcp);
    let mut ladder = LadderConfig::new(vec![100.0], 30, 21);
    ladder.horizon = Some(8.0);
    let mut cfg = sim_config(params, &lp, policy, &ladder, 100.0).unwrap();
    cfg.record = RecordOptions { event_log: true, ..Default::default() };
    (0..4)
        .map(|rep| {
            let mut src = RenewalSource::new(ScaledRates::new(params, 100.0).unwrap(), dists, 21, rep);
            (cfg.clone(), run(&cfg, &mut src).unwrap())
        })
        .collect()
}

#[test]
fn event_log_replay_matches_streaming_statistics() {
    let ss = (common::ss_reference(), common::ss_reference_distributions());
    let cs = (common::cs_reference(), PrimitiveDistributions::default());
    let mut runs = logged_runs(&ss.0, &ss.1, None);
    runs.extend(logged_runs(&ss.0, &ss.1, Some(PolicyKind::T1T2)));
    runs.extend(logged_runs(&cs.0, &cs.1, None));
    for (cfg, r) in &runs {
        let s = replay(cfg, r.events.as_ref().unwrap());
        assert!(close(s.cost, r.cost), "cost {} vs {}", s.cost, r.cost);
        assert!(close(s.rbar, rbar_statistic(r)), "rbar {} vs {}", s.rbar, r.rbar);
        for k in 0..2 {
            assert!(close(s.idle[k], r.idle[k]));
            assert!(close(s.fidelity[k], r.fidelity[k]), "fidelity {:?} vs {:?}", s.fidelity, r.fidelity);
            assert_eq!(s.sup_x_hat[k], r.sup_x_hat[k]);
            for i in 0..2 {
                assert!(close(s.busy[i][k], r.busy[i][k]));
            }
        }
        assert_eq!(s.arrivals, r.arrivals);
        assert_eq!(s.departures, r.departures);
        assert_eq!(s.mode_switches, r.mode_switches);
    }
    // the forced T1T2 runs do use non-basic activities away from z*
    assert!(runs.iter().any(|(_, r)| r.fidelity.iter().any(|&f| f > 0.0)));
    // ssc from the replayed suprema
    let (cfg, _) = &runs[0];
    let recs: Vec<TrajectoryRecord> = runs[..4].iter().map(|x| x.1.clone()).collect();
    let level = 2.0 * cfg.scaling.theta_n as f64 / cfg.n.sqrt();
    let p = lp::analyze(&ss.0).unwrap().p;
    let hits = runs[..4].iter().filter(|(c, r)| replay(c, r.events.as_ref().unwrap()).sup_x_hat[p] >= level).count();
    assert_eq!(ssc_statistic(&recs, &cfg.scaling, p).estimate, hits as f64 / 4.0);
}

#[test]
fn rbar_counts_only_idleness_above_the_band() {
    use common::scenarios::{scenario, simulate, A};
    // n = 1, alpha = 1, Theta = 1: the band is W >= 3
    let empty = scenario(PolicyKind::P, [A, A], 1, [vec![], vec![]], [[vec![1.0], vec![1.0]], [vec![1.0], vec![1.0]]]);
    assert_eq!(simulate(&empty).rbar, 0.0);
    // four class-0 jobs at time 0; server 0 is dedicated to class 1 and
    // idles at W = 4 for the whole horizon
    let mut stuck = scenario(PolicyKind::P, [A, A], 1, [vec![0.0; 4], vec![]], [[vec![10.0], vec![10.0]], [vec![10.0], vec![10.0]]]);
    stuck.horizon = 5.0;
    let r = simulate(&stuck);
    assert_eq!(r.idle, [5.0, 0.0]);
    assert_eq!(r.rbar, 0.5 * 5.0);
}

#[test]
fn mode_fidelity_needs_a_dual_policy() {
    let p = common::cs_reference();
    let (lp, wcp, kind) = policy_for(&p).unwrap();
    assert_eq!(kind, PolicyKind::P);
    let policy = PolicySpec::from_analysis(kind, &lp, &wcp).unwrap();
    let r = TrajectoryRecord::default();
    assert!(matches!(mode_fidelity(&r, &policy), Err(Error::Precondition(_))));
}

#[test]
fn experiment_refuses_the_wrong_policy() {
    let ladder = LadderConfig::new(vec![50.0, 100.0], 30, 1);
    let e = ao_experiment(&ladder, &common::ss_reference(), PolicyKind::T2T2).unwrap_err();
    assert!(matches!(e, Error::PolicyCaseMismatch(_)), "{e}");
    assert!(e.is_refusal());
}

/// Policy that the case table prescribes, derived here from the labels.
fn table_policy(lp: &lp::LpStructure, wcp: &WcpSolution) -> PolicyKind {
    let p = lp.p;
    match wcp.case {
        ModeCase::Single { active } => {
            if lp.mode(active).i1 == p {
                PolicyKind::P
            } else {
                PolicyKind::T2
            }
        }
        ModeCase::Dual { low, high } => {
            let (l, h) = (lp.mode(low), lp.mode(high));
            match (l.i1 == p, h.i1 == p) {
                (true, true) => PolicyKind::PP,
                (false, false) => PolicyKind::T2T2,
                (true, false) => PolicyKind::T1T2,
                (false, true) => PolicyKind::T2T1,
            }
        }
    }
}

#[test]
fn case_table_is_enforced() {
    let mut r = common::rng(17);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..20_000 {
        let p = common::random_instance(&mut r);
        let lp = lp::analyze(&p).unwrap();
        let wcp = WcpSolution::solve(&p, &lp).unwrap();
        let want = table_policy(&lp, &wcp);
        assert_eq!(required_policy(&lp, &wcp).unwrap(), want);
        if seen.insert(want) {
            for kind in PolicyKind::ALL {
                let res = PolicySpec::from_analysis(kind, &lp, &wcp);
                if kind == want {
                    res.unwrap();
                } else {
                    assert!(matches!(res, Err(Error::PolicyCaseMismatch(_))), "{kind} accepted for {want}");
                }
            }
        }
        if seen.len() == 6 {
            return;
        }
    }
    panic!("only saw {seen:?}");
}

#[test]
fn reports_are_deterministic() {
    let mut ladder = LadderConfig::new(vec![50.0, 100.0], 30, 4);
    ladder.horizon = Some(10.0);
    ladder.tail_tol = 1.0;
    ladder.ks_paths = 200;
    ladder.distributions = common::ss_reference_distributions();
    let p = common::ss_reference();
    let a = ao_experiment(&ladder, &p, PolicyKind::PP).unwrap();
    let b = ao_experiment(&ladder, &p, PolicyKind::PP).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let csv = a.to_csv();
    assert!(csv.starts_with("n,statistic,estimate,se\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 4));
    assert_eq!(a.rows.len(), 2);
    assert!(a.rows.iter().all(|r| r.ks_statistic.is_some() && r.fidelity_low.is_some()));
}

#[test]
fn mismatched_distributions_are_reported() {
    let p = common::ss_reference();
    assert!(common::ss_reference_distributions().scv_mismatches(&p).is_empty());
    let w = PrimitiveDistributions::default().scv_mismatches(&p);
    assert_eq!(w.len(), 1);
    assert!(w[0].contains("(1,0)"), "{w:?}");
    let mut ladder = LadderConfig::new(vec![50.0], 30, 2);
    ladder.horizon = Some(8.0);
    ladder.tail_tol = 1.0;
    ladder.ks_paths = 0;
    let rep = ao_experiment(&ladder, &p, PolicyKind::PP).unwrap();
    assert!(rep.warnings.iter().any(|s| s.contains("c2_service")), "{:?}", rep.warnings);
}
