//! Exact evaluation of the delay violation probability (DVP) and the two
//! analytical upper bounds on it.
//!
//! The batch misses its deadline exactly when some packet is still queued
//! after frame `w - 1`. Writing `S1(a, b)` and `S2(a, b)` for the successful
//! slots of each link over frames `a..b`, that happens iff at least one of
//!
//! * `S2(0, w) < L`
//! * `S2(1, w) < y + x1`
//! * `S1(0, u - 1) + S2(u, w) < y + x1` for some `u` in `2..=w`
//!
//! occurs. The events overlap, so the union bound (DVPUB) overestimates the
//! DVP; bounding every term with a Chernoff bound gives WTB, which is smooth
//! in a real-valued allocation vector.
//!
//! Both link-2 intervals end at the deadline (`u..w`): the service that can
//! still reach packets relayed by frame `u - 1` is the service of the last
//! `w - u` frames. For a schedule that changes from frame to frame this is
//! not the same trial count as the first `w - u` frames.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{
    lower_tail, service_trials, step_queues, Link, QueueState, ScenarioConfig, Schedule,
    ServiceTables,
};
use crate::policy::SlotPolicy;

// Receives a per-frame (s1, s2) path and its probability.
type OutcomeVisitor<'a> = dyn FnMut(&[(u32, u32)], f64) + 'a;

/// Default limit on the number of joint service outcomes enumerated.
pub const ENUM_CAP: u128 = 10_000_000;

/// Lower end of the Chernoff exponent search interval.
pub const S_MIN: f64 = 1e-6;
/// Upper end of the Chernoff exponent search interval.
pub const S_MAX: f64 = 50.0;
const S_TOL: f64 = 1e-9;

/// Default limit on the inner-loop work of the exact chain
/// (`grid states x w x (N + 1)^2`).
pub const CHAIN_CAP: u128 = 20_000_000_000;

/// Inner-loop work of [`propagate`] for `config`.
pub fn chain_work(config: &ScenarioConfig) -> u128 {
    let grid = (config.upstream_load() as u128 + 1) * (config.total_load() as u128 + 1);
    let n = config.slots() as u128 + 1;
    grid * config.deadline() as u128 * n * n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvalMethod {
    ExactChain,
    ExactEnum,
    Dvpub,
    Wtb,
    MonteCarlo,
}

impl EvalMethod {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMethod::ExactChain => "exact-chain",
            EvalMethod::ExactEnum => "exact-enum",
            EvalMethod::Dvpub => "dvpub",
            EvalMethod::Wtb => "wtb",
            EvalMethod::MonteCarlo => "monte-carlo",
        }
    }
}

/// A DVP value and how it was obtained. Bounds are kept unclamped.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub dvp: f64,
    pub method: EvalMethod,
    /// One value per union-bound event, for the bound methods.
    pub detail: Vec<f64>,
}

impl EvalResult {
    fn new(dvp: f64, method: EvalMethod) -> Self {
        Self { dvp, method, detail: Vec::new() }
    }

    pub fn clamped(&self) -> f64 {
        self.dvp.min(1.0)
    }
}

/// Chernoff exponent `s > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChernoffParam(f64);

impl ChernoffParam {
    pub fn new(s: f64) -> Result<Self> {
        if s > 0.0 && s.is_finite() {
            Ok(Self(s))
        } else {
            Err(Error::domain(format!("Chernoff exponent must be positive, got {s}")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Per-slot moment `E[exp(-s b)] = (1 - p_e) e^{-s} + p_e`.
    pub fn alpha(&self, pe: f64) -> f64 {
        (1.0 - pe) * (-self.0).exp() + pe
    }

    /// Threshold exponent of the relay terms, `y + x1 - 1`.
    pub fn beta(config: &ScenarioConfig) -> f64 {
        config.upstream_load() as f64 - 1.0
    }
}

/// Result of propagating the exact state distribution through the horizon.
#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub dvp: f64,
    /// `E[D(w)]`, accumulated frame by frame.
    pub mean_departures: f64,
    /// Distribution of the state after frame `w - 1`, sorted by state.
    pub final_distribution: Vec<(QueueState, f64)>,
}

/// Propagates the joint queue distribution from `(y + x1, x2)` through `w`
/// frames under `policy`.
pub fn propagate<P: SlotPolicy + ?Sized>(config: &ScenarioConfig, policy: &P) -> Result<ChainOutcome> {
    let work = chain_work(config);
    if work > CHAIN_CAP {
        return Err(Error::CapExceeded { what: "exact chain", size: work, cap: CHAIN_CAP });
    }
    let tables = ServiceTables::new(config);
    let n = config.slots();
    let rows = config.upstream_load() as usize + 1;
    let cols = config.total_load() as usize + 1;
    let idx = |s: QueueState| s.q1 as usize * cols + s.q2 as usize;

    let mut dist = vec![0.0; rows * cols];
    dist[idx(config.initial_state())] = 1.0;
    let mut mean_departures = 0.0;

    for epoch in 0..config.deadline() {
        let mut next = vec![0.0; rows * cols];
        for q1 in 0..rows as u32 {
            for q2 in 0..cols as u32 {
                let state = QueueState::new(q1, q2);
                let p = dist[idx(state)];
                if p == 0.0 {
                    continue;
                }
                let a = policy.action(epoch, state)?;
                if a > n {
                    return Err(Error::domain(format!(
                        "policy action {a} at epoch {epoch} exceeds N = {n}"
                    )));
                }
                let b1 = tables.get(a).pmf();
                let b2 = tables.get(n - a).pmf();
                for (s1, &p1) in b1.iter().enumerate() {
                    for (s2, &p2) in b2.iter().enumerate() {
                        let (to, d2) = step_queues(state, s1 as u32, s2 as u32);
                        let pr = p * p1 * p2;
                        next[idx(to)] += pr;
                        mean_departures += pr * d2 as f64;
                    }
                }
            }
        }
        dist = next;
    }

    let mut final_distribution = Vec::new();
    let mut dvp = 0.0;
    for q1 in 0..rows as u32 {
        for q2 in 0..cols as u32 {
            let state = QueueState::new(q1, q2);
            let p = dist[idx(state)];
            if p > 0.0 {
                final_distribution.push((state, p));
                if !state.is_empty() {
                    dvp += p;
                }
            }
        }
    }
    Ok(ChainOutcome { dvp, mean_departures, final_distribution })
}

/// Exact DVP by forward propagation of the state distribution.
///
/// Works for schedules and for state-dependent policies alike. The DVP is
/// summed over the non-empty final states rather than taken as
/// `1 - P{empty}`, which keeps relative precision for tiny values.
pub fn exact_dvp_chain<P: SlotPolicy + ?Sized>(config: &ScenarioConfig, policy: &P) -> Result<EvalResult> {
    let out = propagate(config, policy)?;
    Ok(EvalResult::new(out.dvp, EvalMethod::ExactChain))
}

/// Number of joint per-frame service outcomes of `schedule`.
pub fn outcome_count(schedule: &Schedule) -> u128 {
    (0..schedule.len())
        .map(|k| {
            (schedule.allocation(Link::First, k) as u128 + 1)
                * (schedule.allocation(Link::Second, k) as u128 + 1)
        })
        .product()
}

// Walks every joint outcome sequence ((s1_0, s2_0), ..., (s1_{w-1}, s2_{w-1}))
// with its probability.
fn for_each_outcome(
    config: &ScenarioConfig,
    schedule: &Schedule,
    cap: u128,
    mut visit: impl FnMut(&[(u32, u32)], f64),
) -> Result<()> {
    schedule.check_against(config)?;
    let size = outcome_count(schedule);
    if size > cap {
        return Err(Error::CapExceeded { what: "outcome enumeration", size, cap });
    }
    let tables = ServiceTables::new(config);
    let mut path = Vec::with_capacity(schedule.len());
    fn walk(
        k: usize,
        prob: f64,
        schedule: &Schedule,
        tables: &ServiceTables,
        path: &mut Vec<(u32, u32)>,
        visit: &mut OutcomeVisitor,
    ) {
        if k == schedule.len() {
            visit(path, prob);
            return;
        }
        let b1 = tables.get(schedule.allocation(Link::First, k)).pmf();
        let b2 = tables.get(schedule.allocation(Link::Second, k)).pmf();
        for (s1, &p1) in b1.iter().enumerate() {
            for (s2, &p2) in b2.iter().enumerate() {
                let pr = prob * p1 * p2;
                if pr == 0.0 {
                    continue;
                }
                path.push((s1 as u32, s2 as u32));
                walk(k + 1, pr, schedule, tables, path, visit);
                path.pop();
            }
        }
    }
    walk(0, 1.0, schedule, &tables, &mut path, &mut visit);
    Ok(())
}

/// Exact DVP by brute-force enumeration of every joint service outcome,
/// replaying the queues on each. Refuses instances with more than `cap`
/// outcomes.
pub fn exact_dvp_enum_capped(config: &ScenarioConfig, schedule: &Schedule, cap: u128) -> Result<EvalResult> {
    let mut dvp = 0.0;
    for_each_outcome(config, schedule, cap, |path, prob| {
        let mut state = config.initial_state();
        for &(s1, s2) in path {
            state = step_queues(state, s1, s2).0;
        }
        if !state.is_empty() {
            dvp += prob;
        }
    })?;
    Ok(EvalResult::new(dvp, EvalMethod::ExactEnum))
}

pub fn exact_dvp_enum(config: &ScenarioConfig, schedule: &Schedule) -> Result<EvalResult> {
    exact_dvp_enum_capped(config, schedule, ENUM_CAP)
}

/// Probability of the union of the cumulative-service events listed in the
/// module docs, by outcome enumeration. Never replays the queues, so it
/// checks the event characterisation independently of the dynamics.
pub fn event_union_probability(config: &ScenarioConfig, schedule: &Schedule) -> Result<f64> {
    let w = config.deadline() as usize;
    let load = config.total_load();
    let upstream = config.upstream_load();
    let mut total = 0.0;
    for_each_outcome(config, schedule, ENUM_CAP, |path, prob| {
        let s1 = |a: usize, b: usize| -> u32 { path[a..b].iter().map(|o| o.0).sum() };
        let s2 = |a: usize, b: usize| -> u32 { path[a..b].iter().map(|o| o.1).sum() };
        let violated = s2(0, w) < load
            || s2(1.min(w), w) < upstream
            || (2..=w).any(|u| s1(0, u - 1) + s2(u, w) < upstream);
        if violated {
            total += prob;
        }
    })?;
    Ok(total)
}

// Trial counts of the w + 1 union-bound events for an integer schedule:
// first S2(0, w), then S1(0, u - 1) + S2(u, w) for u = 1..=w.
fn event_trials(schedule: &Schedule) -> Vec<u32> {
    let w = schedule.len();
    let mut trials = Vec::with_capacity(w + 1);
    trials.push(service_trials(schedule, Link::Second, 0, w));
    for u in 1..=w {
        trials.push(
            service_trials(schedule, Link::First, 0, u - 1)
                + service_trials(schedule, Link::Second, u, w),
        );
    }
    trials
}

/// Union bound on the DVP (DVPUB). Every event is a single Binomial tail
/// since both links share the success probability.
pub fn dvpub(config: &ScenarioConfig, schedule: &Schedule) -> Result<EvalResult> {
    schedule.check_against(config)?;
    let q = config.success();
    let trials = event_trials(schedule);
    let mut detail = Vec::with_capacity(trials.len());
    detail.push(lower_tail(trials[0], q, config.total_load() as i64 - 1));
    for &t in &trials[1..] {
        detail.push(lower_tail(t, q, config.upstream_load() as i64 - 1));
    }
    Ok(EvalResult { dvp: detail.iter().sum(), method: EvalMethod::Dvpub, detail })
}

/// WTB as a function of the Chernoff exponent, for a fixed real-valued
/// link-2 allocation vector.
///
/// Each term is `alpha(s)^c * exp(s * t)`, with `c` the (real) trial count
/// of an event and `t` its threshold. `c` is affine in the allocation:
/// `c = sum_j coef[j] * n2[j] + offset`.
#[derive(Debug, Clone)]
pub struct WtbObjective {
    pe: f64,
    exponents: Vec<f64>,
    thresholds: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
}

impl WtbObjective {
    pub fn new(config: &ScenarioConfig, link2: &[f64]) -> Result<Self> {
        let w = config.deadline() as usize;
        if link2.len() != w {
            return Err(Error::domain(format!(
                "allocation has {} frames but the deadline is w={w}",
                link2.len()
            )));
        }
        let n = config.slots() as f64;
        if let Some(v) = link2.iter().find(|v| !(0.0..=n).contains(*v)) {
            return Err(Error::domain(format!("allocation {v} outside [0, {n}]")));
        }

        let mut coefficients = Vec::with_capacity(w + 1);
        let mut offsets = Vec::with_capacity(w + 1);
        coefficients.push(vec![1.0; w]);
        offsets.push(0.0);
        for u in 1..=w {
            // Link-1 frames 0..u-1 contribute N - n2[j]; link-2 frames u..w contribute n2[j].
            let coef: Vec<f64> = (0..w)
                .map(|j| {
                    if j + 1 < u {
                        -1.0
                    } else if j >= u {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            coefficients.push(coef);
            offsets.push((u - 1) as f64 * n);
        }
        let exponents = coefficients
            .iter()
            .zip(&offsets)
            .map(|(coef, off)| off + coef.iter().zip(link2).map(|(c, v)| c * v).sum::<f64>())
            .collect();

        let upstream = ChernoffParam::beta(config);
        let mut thresholds = vec![upstream; w + 1];
        thresholds[0] = config.total_load() as f64 - 1.0;
        Ok(Self { pe: config.pe(), exponents, thresholds, coefficients })
    }

    pub fn from_schedule(config: &ScenarioConfig, schedule: &Schedule) -> Result<Self> {
        schedule.check_against(config)?;
        let link2: Vec<f64> = schedule.link2().into_iter().map(f64::from).collect();
        Self::new(config, &link2)
    }

    fn ln_alpha(&self, s: f64) -> f64 {
        ((1.0 - self.pe) * (-s).exp() + self.pe).ln()
    }

    /// Value of every term at exponent `s`.
    pub fn terms(&self, s: f64) -> Vec<f64> {
        let la = self.ln_alpha(s);
        self.exponents
            .iter()
            .zip(&self.thresholds)
            .map(|(c, t)| (c * la + s * t).exp())
            .collect()
    }

    pub fn value(&self, s: f64) -> f64 {
        self.terms(s).iter().sum()
    }

    /// Gradient with respect to the link-2 allocation at a fixed `s`.
    pub fn gradient(&self, s: f64) -> Vec<f64> {
        let la = self.ln_alpha(s);
        let terms = self.terms(s);
        let w = self.coefficients[0].len();
        let mut grad = vec![0.0; w];
        for (coef, t) in self.coefficients.iter().zip(&terms) {
            for (g, c) in grad.iter_mut().zip(coef) {
                *g += la * c * t;
            }
        }
        grad
    }

    /// Minimises over `s` in `[S_MIN, S_MAX]`. The objective is convex in
    /// `s`: each term is the exponential of `c ln alpha(s) + s t`, and
    /// `ln alpha` is convex with `c >= 0`.
    pub fn minimize(&self) -> (f64, f64) {
        let f = |s: f64| self.value(s);

        // Doubling expansion until the objective stops decreasing.
        let mut hi = 1.0_f64;
        let mut f_hi = f(hi);
        let upper = loop {
            if hi >= S_MAX {
                break S_MAX;
            }
            let next = (2.0 * hi).min(S_MAX);
            let f_next = f(next);
            if f_next >= f_hi {
                break next;
            }
            hi = next;
            f_hi = f_next;
        };

        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (S_MIN, upper);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > S_TOL {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = f(d);
            }
        }
        let mid = 0.5 * (a + b);
        [(mid, f(mid)), (S_MIN, f(S_MIN)), (upper, f(upper))]
            .into_iter()
            .fold((mid, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best })
    }
}

/// Wireless transient bound at a fixed Chernoff exponent.
pub fn wtb(config: &ScenarioConfig, schedule: &Schedule, s: ChernoffParam) -> Result<f64> {
    Ok(WtbObjective::from_schedule(config, schedule)?.value(s.value()))
}

/// WTB for a real-valued link-2 allocation vector.
pub fn wtb_real(config: &ScenarioConfig, link2: &[f64], s: ChernoffParam) -> Result<f64> {
    Ok(WtbObjective::new(config, link2)?.value(s.value()))
}

/// WTB minimised over the Chernoff exponent.
pub fn wtb_min_s(config: &ScenarioConfig, schedule: &Schedule) -> Result<(ChernoffParam, f64)> {
    let (s, v) = WtbObjective::from_schedule(config, schedule)?.minimize();
    Ok((ChernoffParam(s), v))
}

pub fn wtb_min_s_real(config: &ScenarioConfig, link2: &[f64]) -> Result<(ChernoffParam, f64)> {
    let (s, v) = WtbObjective::new(config, link2)?.minimize();
    Ok((ChernoffParam(s), v))
}

/// Optimised WTB packaged as an [`EvalResult`], with per-term detail.
pub fn wtb_eval(config: &ScenarioConfig, schedule: &Schedule) -> Result<EvalResult> {
    let obj = WtbObjective::from_schedule(config, schedule)?;
    let (s, v) = obj.minimize();
    Ok(EvalResult { dvp: v, method: EvalMethod::Wtb, detail: obj.terms(s) })
}

/// Distribution of the final state, keyed by state. Mostly useful in tests.
pub fn final_state_map(outcome: &ChainOutcome) -> HashMap<QueueState, f64> {
    outcome.final_distribution.iter().copied().collect()
}
