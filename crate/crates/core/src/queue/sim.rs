//! Event-driven simulation of the n-th system under one of the policies.
//!
//! Ties at equal timestamps are broken as: completions before arrivals,
//! server 0 before server 1, class 0 before class 1. Within a class jobs are
//! served first in, first out. After each event the mode is re-sampled (if
//! the policy samples at that event) and then idle servers are offered work,
//! the dedicated server first.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::dist::PrimitiveSource;
use super::policy::{PolicySpec, ScalingPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Arrival,
    Start,
    Completion,
}

/// One log record. `mode` is the current mode (0 = low, 1 = high) right
/// after the event was processed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub class: usize,
    pub server: Option<usize>,
    pub job: u64,
    pub mode: usize,
}

/// State sampled on a regular grid (values hold on `[t, t + period)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub x_hat: [f64; 2],
    pub w_hat: f64,
    pub i_hat: [f64; 2],
    pub l_hat: f64,
    pub mode: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordOptions {
    #[serde(default)]
    pub event_log: bool,
    /// Sampling period of the scaled paths; `None` disables sampling.
    #[serde(default)]
    pub sample_period: Option<f64>,
    /// Check the balance and busyness identities after every event.
    #[serde(default)]
    pub check_invariants: bool,
    /// Time at which `W_hat` is recorded for distributional comparison.
    #[serde(default)]
    pub probe_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: f64,
    /// Simulation horizon `t_0`.
    pub horizon: f64,
    pub gamma: f64,
    pub h: [f64; 2],
    /// Server workload weights (for `L_hat`).
    pub beta: [f64; 2],
    pub scaling: ScalingPolicy,
    pub policy: PolicySpec,
    /// Half-width of the band around `z*` outside which non-basic usage
    /// counts as a violation. Defaults to `z*/4`.
    pub fidelity_eps: Option<f64>,
    pub record: RecordOptions,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if !(self.horizon > 0.0 && self.gamma > 0.0 && self.n >= 1.0) {
            return Err(Error::InvalidParams("need horizon > 0, gamma > 0, n >= 1".into()));
        }
        if !self.h.iter().chain(&self.beta).all(|&v| v > 0.0) {
            return Err(Error::InvalidParams("h and beta must be positive".into()));
        }
        if self.record.sample_period.is_some_and(|p| !(p > 0.0)) {
            return Err(Error::InvalidParams("sample_period must be positive".into()));
        }
        Ok(())
    }

    fn eps(&self) -> f64 {
        self.fidelity_eps.unwrap_or(self.policy.zstar.unwrap_or(0.0) / 4.0)
    }
}

/// Outcome of one replication. All integrals are exact for the piecewise
/// constant state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub horizon: f64,
    /// `int_0^{t_0} e^{-gamma t} h(X_hat(t)) dt`.
    pub cost: f64,
    /// `sup_t h(X_hat(t))`, for the tail bound.
    pub sup_h: f64,
    /// `sup_t X_hat_i(t)`.
    pub sup_x_hat: [f64; 2],
    pub e_max: f64,
    /// `int 1{W_hat >= c3 Theta_hat} dL_hat`.
    pub rbar: f64,
    /// Busy time of the low (high) mode's non-basic activity while
    /// `W_hat <= z* - eps` (`>= z* + eps`). Zero for single-mode policies.
    pub fidelity: [f64; 2],
    pub arrivals: [u64; 2],
    pub departures: [[u64; 2]; 2],
    pub busy: [[f64; 2]; 2],
    pub idle: [f64; 2],
    pub mode_switches: u64,
    pub n_events: u64,
    pub w_hat_probe: Option<f64>,
    pub invariant_violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<Event>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<PathSample>>,
}

#[derive(Debug, Clone, Copy)]
struct Busy {
    class: usize,
    job: u64,
    start: f64,
    end: f64,
}

struct Sim<'a, S: PrimitiveSource> {
    cfg: &'a SimConfig,
    src: &'a mut S,
    t: f64,
    x: [u64; 2],
    queue: [VecDeque<u64>; 2],
    servers: [Option<Busy>; 2],
    next_arrival: [f64; 2],
    last_arrival: [f64; 2],
    next_job: u64,
    mode: usize,
    theta: u64,
    sqrt_n: f64,
    out: TrajectoryRecord,
}

impl<'a, S: PrimitiveSource> Sim<'a, S> {
    fn w(&self) -> f64 {
        let a = self.cfg.policy.alpha;
        self.x[0] as f64 / a[0] + self.x[1] as f64 / a[1]
    }

    fn log(&mut self, kind: EventKind, class: usize, server: Option<usize>, job: u64) {
        let mode = self.mode;
        if let Some(ev) = self.out.events.as_mut() {
            ev.push(Event { t: self.t, kind, class, server, job, mode });
        }
    }

    fn schedule_arrival(&mut self, class: usize) {
        self.next_arrival[class] = match self.src.interarrival(class) {
            Some(a) => self.t + a,
            None => f64::INFINITY,
        };
    }

    fn resample(&mut self) {
        let zstar = self.cfg.policy.zstar.expect("dual policy has z*");
        let m = if self.w() < self.sqrt_n * zstar { 0 } else { 1 };
        if m != self.mode {
            self.out.mode_switches += 1;
            self.mode = m;
        }
    }

    fn start(&mut self, server: usize, class: usize) {
        let job = self.queue[class].pop_front().expect("nonempty queue");
        let d = self.src.service(class, server);
        self.servers[server] = Some(Busy { class, job, start: self.t, end: self.t + d });
        self.log(EventKind::Start, class, Some(server), job);
    }

    fn dispatch(&mut self) {
        let m = self.cfg.policy.modes[self.mode];
        if self.servers[m.k1].is_none() && !self.queue[m.i2].is_empty() {
            self.start(m.k1, m.i2);
        }
        if self.servers[m.k2].is_none() {
            let c = self.cfg.policy.priority_class(self.mode, self.x, self.theta);
            if !self.queue[c].is_empty() {
                self.start(m.k2, c);
            } else if !self.queue[1 - c].is_empty() {
                self.start(m.k2, 1 - c);
            }
        }
    }

    /// Accumulate time integrals over `[self.t, t1]` with the current state.
    fn advance(&mut self, t1: f64) {
        let dt = t1 - self.t;
        if dt <= 0.0 {
            return;
        }
        let cfg = self.cfg;
        let g = cfg.gamma;
        let xh = [self.x[0] as f64 / self.sqrt_n, self.x[1] as f64 / self.sqrt_n];
        let hx = cfg.h[0] * xh[0] + cfg.h[1] * xh[1];
        self.out.cost += hx * ((-g * self.t).exp() - (-g * t1).exp()) / g;
        let w_hat = self.w() / self.sqrt_n;
        let mut dl = 0.0;
        for k in 0..2 {
            match self.servers[k] {
                Some(b) => self.out.busy[b.class][k] += dt,
                None => {
                    self.out.idle[k] += dt;
                    dl += cfg.beta[k] * self.sqrt_n * dt;
                }
            }
        }
        let c3 = 3.0 / cfg.policy.alpha[0].min(cfg.policy.alpha[1]);
        if w_hat >= c3 * cfg.scaling.theta_hat() {
            self.out.rbar += dl;
        }
        if let Some(z) = cfg.policy.zstar {
            let eps = cfg.eps();
            let on = |s: &Option<Busy>, (i, _k): (usize, usize)| s.is_some_and(|b| b.class == i);
            let nl = cfg.policy.modes[0].nonbasic();
            let nh = cfg.policy.modes[1].nonbasic();
            if w_hat <= z - eps && on(&self.servers[nl.1], nl) {
                self.out.fidelity[0] += dt;
            }
            if w_hat >= z + eps && on(&self.servers[nh.1], nh) {
                self.out.fidelity[1] += dt;
            }
        }
        if let Some(p) = cfg.record.probe_time {
            if self.t <= p && p < t1 {
                self.out.w_hat_probe = Some(w_hat);
            }
        }
        self.t = t1;
    }

    fn sample(&mut self, t: f64) {
        let cfg = self.cfg;
        let rn = self.sqrt_n;
        let i_hat = [rn * self.out.idle[0], rn * self.out.idle[1]];
        let s = PathSample {
            t,
            x_hat: [self.x[0] as f64 / rn, self.x[1] as f64 / rn],
            w_hat: self.w() / rn,
            i_hat,
            l_hat: cfg.beta[0] * i_hat[0] + cfg.beta[1] * i_hat[1],
            mode: self.mode,
        };
        self.out.samples.as_mut().expect("sampling enabled").push(s);
    }

    fn check(&mut self) {
        for i in 0..2 {
            let d: u64 = self.out.departures[i].iter().sum();
            if self.x[i] != self.out.arrivals[i] - d {
                let msg = format!("t={}: X[{i}]={} but A-D={}", self.t, self.x[i], self.out.arrivals[i] - d);
                self.out.invariant_violations.push(msg);
            }
            let in_service = self.servers.iter().filter(|s| s.is_some_and(|b| b.class == i)).count() as u64;
            if self.x[i] != self.queue[i].len() as u64 + in_service {
                self.out.invariant_violations.push(format!("t={}: X[{i}] != queued + in service", self.t));
            }
        }
        for k in 0..2 {
            let total = self.out.idle[k] + self.out.busy[0][k] + self.out.busy[1][k];
            if (total - self.t).abs() > 1e-9 * self.t.max(1.0) {
                let msg = format!("t={}: I[{k}] + sum T[.][{k}] = {total}", self.t);
                self.out.invariant_violations.push(msg);
            }
        }
    }

    fn update_sups(&mut self) {
        let rn = self.sqrt_n;
        for i in 0..2 {
            self.out.sup_x_hat[i] = self.out.sup_x_hat[i].max(self.x[i] as f64 / rn);
        }
        let hx = (self.cfg.h[0] * self.x[0] as f64 + self.cfg.h[1] * self.x[1] as f64) / rn;
        self.out.sup_h = self.out.sup_h.max(hx);
    }
}

/// Run one replication to the horizon, starting empty in the low mode.
pub fn run<S: PrimitiveSource>(cfg: &SimConfig, src: &mut S) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut sim = Sim {
        cfg,
        src,
        t: 0.0,
        x: [0; 2],
        queue: [VecDeque::new(), VecDeque::new()],
        servers: [None, None],
        next_arrival: [f64::INFINITY; 2],
        last_arrival: [0.0; 2],
        next_job: 0,
        mode: 0,
        theta: cfg.scaling.theta_n,
        sqrt_n: cfg.n.sqrt(),
        out: TrajectoryRecord {
            horizon: cfg.horizon,
            events: cfg.record.event_log.then(Vec::new),
            samples: cfg.record.sample_period.map(|_| Vec::new()),
            ..Default::default()
        },
    };
    let dual = cfg.policy.kind.is_dual();
    let every = cfg.policy.kind.samples_every_event();
    let period = cfg.record.sample_period;
    let mut sample_j: u64 = 0;
    sim.schedule_arrival(0);
    sim.schedule_arrival(1);
    loop {
        // completions (server order) before arrivals (class order)
        let mut best: Option<(f64, usize)> = None;
        let cands = [
            sim.servers[0].map_or(f64::INFINITY, |b| b.end),
            sim.servers[1].map_or(f64::INFINITY, |b| b.end),
            sim.next_arrival[0],
            sim.next_arrival[1],
        ];
        for (j, &c) in cands.iter().enumerate() {
            if c.is_finite() && best.is_none_or(|(bt, _)| c < bt) {
                best = Some((c, j));
            }
        }
        let t_next = best.map_or(f64::INFINITY, |b| b.0).min(cfg.horizon);
        // right-continuous samples at j * period: events at exactly that
        // time are applied first
        if let Some(p) = period {
            let last = if best.is_some_and(|b| b.0 <= cfg.horizon) { t_next } else { f64::INFINITY };
            loop {
                let ts = sample_j as f64 * p;
                if !(ts < last && ts <= cfg.horizon) {
                    break;
                }
                sim.advance(ts);
                sim.sample(ts);
                sample_j += 1;
            }
        }
        sim.advance(t_next);
        let Some((te, j)) = best.filter(|b| b.0 <= cfg.horizon) else { break };
        debug_assert_eq!(te, sim.t);
        sim.out.n_events += 1;
        if j < 2 {
            let k = j;
            let b = sim.servers[k].take().expect("busy server");
            sim.x[b.class] -= 1;
            sim.out.departures[b.class][k] += 1;
            sim.out.e_max = sim.out.e_max.max(b.end - b.start);
            let single_server = cfg.policy.modes[sim.mode].k1;
            if dual && (every || k == single_server) {
                sim.resample();
            }
            sim.log(EventKind::Completion, b.class, Some(k), b.job);
        } else {
            let i = j - 2;
            let job = sim.next_job;
            sim.next_job += 1;
            sim.x[i] += 1;
            sim.out.arrivals[i] += 1;
            sim.out.e_max = sim.out.e_max.max(te - sim.last_arrival[i]);
            sim.last_arrival[i] = te;
            sim.queue[i].push_back(job);
            sim.schedule_arrival(i);
            if dual && every {
                sim.resample();
            }
            sim.log(EventKind::Arrival, i, None, job);
        }
        sim.dispatch();
        sim.update_sups();
        if cfg.record.check_invariants {
            sim.check();
        }
    }
    if cfg.record.check_invariants {
        sim.check();
    }
    Ok(sim.out)
}

/// Discounted cost over replications: mean, standard error and tail bound
/// `max sup h(X_hat) e^{-gamma t_0} / gamma`.
pub fn cost_estimate(records: &[TrajectoryRecord], gamma: f64, tol: f64) -> Result<crate::diffusion::CostEstimate> {
    if records.is_empty() {
        return Err(Error::Precondition("no replications".into()));
    }
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.cost).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.cost - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sup = records.iter().map(|r| r.sup_h).fold(0.0, f64::max);
    let tail_bound = sup * (-gamma * records[0].horizon).exp() / gamma;
    if tail_bound > tol {
        return Err(Error::TailBoundExceeded { bound: tail_bound, tol });
    }
    Ok(crate::diffusion::CostEstimate { estimate: mean, std_error: (var / n).sqrt(), tail_bound, n_paths: records.len() })
}

/// Largest service duration completed, or interarrival gap realized, by
/// time `t`, recomputed from an event log.
pub fn e_max_from_log(events: &[Event], t: f64) -> f64 {
    let mut starts = std::collections::HashMap::new();
    let mut last = [0.0_f64; 2];
    let mut e: f64 = 0.0;
    for ev in events.iter().take_while(|e| e.t <= t) {
        match ev.kind {
            EventKind::Arrival => {
                e = e.max(ev.t - last[ev.class]);
                last[ev.class] = ev.t;
            }
            EventKind::Start => {
                starts.insert(ev.job, ev.t);
            }
            EventKind::Completion => {
                e = e.max(ev.t - starts[&ev.job]);
            }
        }
    }
    e
}

/// Write an event log as newline-delimited JSON.
pub fn write_ndjson<W: std::io::Write>(events: &[Event], mut w: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Write sampled paths as CSV.
pub fn write_samples_csv<W: std::io::Write>(samples: &[PathSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,x_hat_0,x_hat_1,w_hat,i_hat_0,i_hat_1,l_hat,mode")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.t, s.x_hat[0], s.x_hat[1], s.w_hat, s.i_hat[0], s.i_hat[1], s.l_hat, s.mode
        )?;
    }
    Ok(())
}
