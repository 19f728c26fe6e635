//! Straight-line interpreter of the service rules over a finite list of
//! scripted arrivals. It shares no code with the simulator: jobs live in a
//! flat table and every decision is re-derived from the rule text.

use hts_core::queue::{EventKind, PolicyKind, PolicySpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rec {
    pub t: f64,
    pub kind: EventKind,
    pub class: usize,
    pub server: Option<usize>,
    pub job: u64,
    pub mode: usize,
}

#[derive(Debug, Clone)]
struct Job {
    class: usize,
    arrival: f64,
    server: Option<usize>,
    start: Option<f64>,
    end: Option<f64>,
    done: bool,
}

/// Scripted scenario: interarrival lists per class, service lists per
/// activity (the last entry repeats), and the policy parameters.
pub struct Scenario {
    pub interarrivals: [Vec<f64>; 2],
    pub services: [[Vec<f64>; 2]; 2],
    pub policy: PolicySpec,
    pub theta: u64,
    pub n: f64,
    pub horizon: f64,
}

pub fn interpret(sc: &Scenario) -> Vec<Rec> {
    // absolute arrival times, job ids in global arrival order
    let mut arr: Vec<(f64, usize)> = Vec::new();
    for c in 0..2 {
        let mut t = 0.0;
        for a in &sc.interarrivals[c] {
            t += a;
            arr.push((t, c));
        }
    }
    let mut used = [[0usize; 2]; 2];
    let mut jobs: Vec<Job> = Vec::new();
    let mut next_arr = [0usize; 2];
    let arrival_times: [Vec<f64>; 2] = [0, 1].map(|c| arr.iter().filter(|a| a.1 == c).map(|a| a.0).collect());
    let mut mode = 0usize;
    let mut log = Vec::new();
    let pol = &sc.policy;

    loop {
        // candidate events in tie order: completion at server 0, 1; arrival of class 0, 1
        let busy = |k: usize, jobs: &Vec<Job>| jobs.iter().position(|j| j.server == Some(k) && !j.done);
        let mut cands: Vec<(f64, usize)> = Vec::new();
        for k in 0..2 {
            if let Some(j) = busy(k, &jobs) {
                cands.push((jobs[j].end.unwrap(), k));
            }
        }
        for c in 0..2 {
            if let Some(&t) = arrival_times[c].get(next_arr[c]) {
                cands.push((t, 2 + c));
            }
        }
        let Some(&(t, which)) = cands.iter().fold(None, |best: Option<&(f64, usize)>, c| match best {
            Some(b) if b.0 < c.0 || (b.0 == c.0 && b.1 < c.1) => Some(b),
            _ => Some(c),
        }) else {
            break;
        };
        if t > sc.horizon {
            break;
        }
        let mut arriving: Option<usize> = None;
        if which < 2 {
            let j = busy(which, &jobs).unwrap();
            jobs[j].done = true;
            let single_server = pol.modes[mode].k1;
            let resample = match pol.kind {
                PolicyKind::PP | PolicyKind::T2T2 => which == single_server,
                PolicyKind::T1T2 | PolicyKind::T2T1 => true,
                _ => false,
            };
            if resample {
                mode = sample_mode(&jobs, pol, sc.n);
            }
            log.push(Rec { t, kind: EventKind::Completion, class: jobs[j].class, server: Some(which), job: j as u64, mode });
        } else {
            let c = which - 2;
            next_arr[c] += 1;
            jobs.push(Job { class: c, arrival: t, server: None, start: None, end: None, done: false });
            arriving = Some(jobs.len() - 1);
            if matches!(pol.kind, PolicyKind::T1T2 | PolicyKind::T2T1) {
                mode = sample_mode(&jobs, pol, sc.n);
            }
            log.push(Rec { t, kind: EventKind::Arrival, class: c, server: None, job: (jobs.len() - 1) as u64, mode });
        }
        let _ = arriving;

        // admissions: the dedicated server of the current mode, then the
        // prioritizing one
        let m = pol.modes[mode];
        let in_system = |c: usize, jobs: &Vec<Job>| jobs.iter().filter(|j| j.class == c && !j.done).count() as u64;
        let oldest_waiting = |c: usize, jobs: &Vec<Job>| {
            jobs.iter()
                .enumerate()
                .filter(|(_, j)| j.class == c && j.start.is_none())
                .min_by(|a, b| a.1.arrival.total_cmp(&b.1.arrival).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
        };
        let mut admit = |k: usize, j: usize, jobs: &mut Vec<Job>| {
            let c = jobs[j].class;
            let list = &sc.services[c][k];
            let d = list[used[c][k].min(list.len() - 1)];
            used[c][k] += 1;
            jobs[j].server = Some(k);
            jobs[j].start = Some(t);
            jobs[j].end = Some(t + d);
            log.push(Rec { t, kind: EventKind::Start, class: c, server: Some(k), job: j as u64, mode });
        };
        if busy(m.k1, &jobs).is_none() {
            if let Some(j) = oldest_waiting(m.i2, &jobs) {
                admit(m.k1, j, &mut jobs);
            }
        }
        if busy(m.k2, &jobs).is_none() {
            let rule = match (pol.kind, mode) {
                (PolicyKind::P | PolicyKind::PP, _) => 'P',
                (PolicyKind::T2 | PolicyKind::T2T2, _) => '2',
                (PolicyKind::T1T2, 0) | (PolicyKind::T2T1, 1) => '1',
                (PolicyKind::T1T2, _) | (PolicyKind::T2T1, _) => '2',
            };
            let prio = match rule {
                'P' => m.i1,
                '1' if in_system(m.i1, &jobs) >= sc.theta => m.i1,
                '1' => m.i2,
                _ if in_system(m.i2, &jobs) >= sc.theta => m.i2,
                _ => m.i1,
            };
            if let Some(j) = oldest_waiting(prio, &jobs).or_else(|| oldest_waiting(1 - prio, &jobs)) {
                admit(m.k2, j, &mut jobs);
            }
        }
    }
    log
}

fn sample_mode(jobs: &[Job], pol: &PolicySpec, n: f64) -> usize {
    let mut w = 0.0;
    for j in jobs.iter().filter(|j| !j.done) {
        w += 1.0 / pol.alpha[j.class];
    }
    if w < n.sqrt() * pol.zstar.unwrap() {
        0
    } else {
        1
    }
}
