//! Dynamic (state-feedback) scheduling.
//!
//! The throughput-maximising policy is the solution of a finite-horizon MDP
//! over joint queue states: the action in frame `k` is the link-1 slot count,
//! the reward is the expected number of packets leaving queue 2 in that
//! frame, and backward induction from `J_w = 0` yields the value table and
//! the policy. Minimising `E[1/D(w)]` would tighten a Markov-inequality bound
//! on the DVP, but that expectation is undefined when nothing departs, so the
//! MDP targets `E[D(w)]` instead.
//!
//! The queue-based baselines (max-weight, weighted fair queueing,
//! backpressure, fixed half split) live here as well.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::fmt_sig12;
use crate::model::{step_queues, Binomial, QueueState, ScenarioConfig, ServiceTables};
use crate::policy::SlotPolicy;

/// The full state rectangle `{0..y+x1} x {0..y+x1+x2}`.
pub fn build_state_space(config: &ScenarioConfig) -> Vec<QueueState> {
    let mut out = Vec::new();
    for q1 in 0..=config.upstream_load() {
        for q2 in 0..=config.total_load() {
            out.push(QueueState::new(q1, q2));
        }
    }
    out
}

/// States of the rectangle that hold at most `L` packets. The set is closed
/// under transitions and contains every state reachable from the start.
pub fn feasible_states(config: &ScenarioConfig) -> Vec<QueueState> {
    build_state_space(config)
        .into_iter()
        .filter(|s| s.total() <= config.total_load())
        .collect()
}

fn check_action(config: &ScenarioConfig, action: u32) -> Result<()> {
    if action > config.slots() {
        Err(Error::domain(format!("action {action} outside 0..={}", config.slots())))
    } else {
        Ok(())
    }
}

fn marginalize(b1: &Binomial, b2: &Binomial, state: QueueState) -> Vec<(QueueState, f64)> {
    let mut acc: BTreeMap<QueueState, f64> = BTreeMap::new();
    for (s1, &p1) in b1.pmf().iter().enumerate() {
        for (s2, &p2) in b2.pmf().iter().enumerate() {
            let (next, _) = step_queues(state, s1 as u32, s2 as u32);
            *acc.entry(next).or_insert(0.0) += p1 * p2;
        }
    }
    acc.into_iter().filter(|(_, p)| *p > 0.0).collect()
}

/// One-frame transition distribution from `state` under `action` link-1
/// slots, obtained by summing the queue update over all independent service
/// outcomes. Sorted by next state; zero-probability states are dropped.
pub fn transition_probs(config: &ScenarioConfig, state: QueueState, action: u32) -> Result<Vec<(QueueState, f64)>> {
    check_action(config, action)?;
    let p = config.success();
    let b1 = Binomial::new(action, p)?;
    let b2 = Binomial::new(config.slots() - action, p)?;
    Ok(marginalize(&b1, &b2, state))
}

/// Probability of moving from `(l1, l2)` to `(l1n, l2n)`, written case by
/// case from the structure of the queue update.
fn case_probability(b1: &Binomial, b2: &Binomial, from: QueueState, to: QueueState) -> f64 {
    let (l1, l2, l1n, l2n) = (from.q1, from.q2, to.q1, to.q2);

    // Case 1: queue 1 cannot grow and the total cannot grow.
    if l1n > l1 || l1n + l2n > l1 + l2 {
        return 0.0;
    }
    let relayed = l1 - l1n;
    // Packets relayed this frame land in queue 2, so it cannot end below them.
    if l2n < relayed {
        return 0.0;
    }
    let left2 = l2n - relayed;

    let pmf1 = |r: u32| b1.pmf().get(r as usize).copied().unwrap_or(0.0);
    let pmf2 = |r: u32| b2.pmf().get(r as usize).copied().unwrap_or(0.0);

    // Link 1. An empty queue 1 makes its service irrelevant.
    let p1 = if l1 == 0 {
        1.0
    } else if l1n == 0 {
        // Case 3: all of queue 1 served, s1 >= l1.
        b1.upper_tail(l1)
    } else {
        // Case 2 (and Case 4 with nothing relayed): s1 = l1 - l1n exactly.
        pmf1(relayed)
    };

    // Link 2, same shape.
    let p2 = if l2 == 0 {
        if left2 == 0 {
            1.0
        } else {
            0.0
        }
    } else if left2 == 0 {
        // Case 4, or Cases 2/3 with queue 2 drained before the relay: s2 >= l2.
        b2.upper_tail(l2)
    } else {
        pmf2(l2 - left2)
    };

    p1 * p2
}

/// Same distribution as [`transition_probs`], assembled from the explicit
/// case analysis over candidate next states instead of from outcomes.
pub fn transition_probs_cases(config: &ScenarioConfig, state: QueueState, action: u32) -> Result<Vec<(QueueState, f64)>> {
    check_action(config, action)?;
    let p = config.success();
    let b1 = Binomial::new(action, p)?;
    let b2 = Binomial::new(config.slots() - action, p)?;
    let mut out = Vec::new();
    for q1 in 0..=state.q1 {
        for q2 in 0..=(state.total() - q1) {
            let to = QueueState::new(q1, q2);
            let pr = case_probability(&b1, &b2, state, to);
            if pr > 0.0 {
                out.push((to, pr));
            }
        }
    }
    Ok(out)
}

/// Expected departures from queue 2 this frame, `E[min(q2, s2)]`.
pub fn reward(config: &ScenarioConfig, state: QueueState, action: u32) -> Result<f64> {
    check_action(config, action)?;
    let b2 = Binomial::new(config.slots() - action, config.success())?;
    Ok(expected_departures(&b2, state.q2))
}

fn expected_departures(b2: &Binomial, q2: u32) -> f64 {
    b2.pmf().iter().enumerate().map(|(r, p)| (r as u32).min(q2) as f64 * p).sum()
}

/// Sparse transition kernel over the feasible states, for every action.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    slots: u32,
    states: Vec<QueueState>,
    index: HashMap<QueueState, usize>,
    // rows[state][action] = [(next state index, probability)]
    rows: Vec<Vec<Vec<(usize, f64)>>>,
}

impl TransitionKernel {
    pub fn build(config: &ScenarioConfig) -> Self {
        let states = feasible_states(config);
        let index: HashMap<QueueState, usize> =
            states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let tables = ServiceTables::new(config);
        let n = config.slots();
        let rows = states
            .par_iter()
            .map(|&s| {
                (0..=n)
                    .map(|a| {
                        marginalize(tables.get(a), tables.get(n - a), s)
                            .into_iter()
                            .map(|(to, p)| (index[&to], p))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { slots: n, states, index, rows }
    }

    pub fn states(&self) -> &[QueueState] {
        &self.states
    }

    pub fn slots(&self) -> u32 {
        self.slots
    }

    pub fn index_of(&self, state: QueueState) -> Option<usize> {
        self.index.get(&state).copied()
    }

    pub fn row(&self, state: QueueState, action: u32) -> Option<Vec<(QueueState, f64)>> {
        let i = self.index_of(state)?;
        let row = self.rows[i].get(action as usize)?;
        Some(row.iter().map(|&(j, p)| (self.states[j], p)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEntry {
    pub action: u32,
    /// Optimal expected departures from this epoch to the deadline.
    pub value: f64,
}

/// Epoch-indexed lookup table of link-1 actions with their reward-to-go.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    config: ScenarioConfig,
    entries: BTreeMap<(u32, QueueState), PolicyEntry>,
    backups: u64,
}

const POLICY_HEADER: &str = "# twohop policy table";
const POLICY_COLUMNS: &str = "epoch q1 q2 action value";

impl PolicyTable {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn get(&self, epoch: u32, state: QueueState) -> Option<PolicyEntry> {
        self.entries.get(&(epoch, state)).copied()
    }

    /// `J_k(q)`, with `J_w = 0` for every state.
    pub fn value(&self, epoch: u32, state: QueueState) -> Option<f64> {
        if epoch == self.config.deadline() {
            return Some(0.0);
        }
        self.get(epoch, state).map(|e| e.value)
    }

    /// `J_0` at the initial state: the optimal `E[D(w)]`.
    pub fn initial_value(&self) -> f64 {
        self.value(0, self.config.initial_state()).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, QueueState, PolicyEntry)> + '_ {
        self.entries.iter().map(|(&(k, s), &e)| (k, s, e))
    }

    /// Number of (epoch, state, action) Bellman evaluations performed.
    pub fn backups(&self) -> u64 {
        self.backups
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(out, "{POLICY_HEADER}").unwrap();
        writeln!(
            out,
            "N={} pe={} w={} y={} x1={} x2={}",
            c.slots(),
            c.pe(),
            c.deadline(),
            c.batch(),
            c.x1(),
            c.x2()
        )
        .unwrap();
        writeln!(out, "{POLICY_COLUMNS}").unwrap();
        for (k, s, e) in self.iter() {
            writeln!(out, "{} {} {} {} {}", k, s.q1, s.q2, e.action, fmt_sig12(e.value)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = None;
        let mut seen_columns = false;
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some(cfg) = config else {
                config = Some(parse_config_line(line, line_no)?);
                continue;
            };
            if !seen_columns {
                if line.split_whitespace().collect::<Vec<_>>().join(" ") != POLICY_COLUMNS {
                    return Err(Error::parse(line_no, format!("expected column header '{POLICY_COLUMNS}'")));
                }
                seen_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(Error::parse(line_no, format!("expected 5 fields, found {}", fields.len())));
            }
            let int = |j: usize, name: &str| -> Result<u32> {
                fields[j]
                    .parse::<u32>()
                    .map_err(|_| Error::parse(line_no, format!("{name} '{}' is not a non-negative integer", fields[j])))
            };
            let epoch = int(0, "epoch")?;
            let state = QueueState::new(int(1, "q1")?, int(2, "q2")?);
            let action = int(3, "action")?;
            let value: f64 = fields[4]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("value '{}' is not a number", fields[4])))?;
            if epoch >= cfg.deadline() {
                return Err(Error::parse(line_no, format!("epoch {epoch} is past the deadline w={}", cfg.deadline())));
            }
            if state.q1 > cfg.upstream_load() || state.q2 > cfg.total_load() {
                return Err(Error::parse(line_no, format!("state ({}, {}) outside the state space", state.q1, state.q2)));
            }
            if action > cfg.slots() {
                return Err(Error::parse(line_no, format!("action {action} exceeds N={}", cfg.slots())));
            }
            if entries.insert((epoch, state), PolicyEntry { action, value }).is_some() {
                return Err(Error::parse(line_no, "duplicate (epoch, q1, q2) row"));
            }
        }
        let config = config.ok_or_else(|| Error::parse(text.lines().count().max(1), "missing configuration line"))?;
        if !seen_columns {
            return Err(Error::parse(text.lines().count().max(1), "missing column header"));
        }
        Ok(Self { config, entries, backups: 0 })
    }
}

fn parse_config_line(line: &str, line_no: usize) -> Result<ScenarioConfig> {
    let mut kv = HashMap::new();
    for tok in line.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, format!("expected key=value, found '{tok}'")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| -> Result<&str> {
        kv.get(k).copied().ok_or_else(|| Error::parse(line_no, format!("missing '{k}'")))
    };
    let int = |k: &str| -> Result<u32> {
        get(k)?.parse().map_err(|_| Error::parse(line_no, format!("'{k}' is not a non-negative integer")))
    };
    let pe: f64 = get("pe")?.parse().map_err(|_| Error::parse(line_no, "'pe' is not a number"))?;
    ScenarioConfig::new(int("N")?, pe, int("w")?, int("y")?, int("x1")?, int("x2")?)
        .map_err(|e| Error::parse(line_no, e.to_string()))
}

impl SlotPolicy for PolicyTable {
    fn action(&self, epoch: u32, state: QueueState) -> Result<u32> {
        self.get(epoch, state)
            .map(|e| e.action)
            .ok_or(Error::MissingState { epoch, state })
    }
}

/// Backward induction from `J_w = 0`. Ties between actions go to the
/// smallest link-1 allocation.
pub fn value_iteration(config: &ScenarioConfig) -> PolicyTable {
    let kernel = TransitionKernel::build(config);
    let tables = ServiceTables::new(config);
    let n = config.slots();
    let states = kernel.states();

    let rewards: Vec<Vec<f64>> = states
        .iter()
        .map(|s| (0..=n).map(|a| expected_departures(tables.get(n - a), s.q2)).collect())
        .collect();

    let mut next_values = vec![0.0; states.len()];
    let mut entries = BTreeMap::new();
    for epoch in (0..config.deadline()).rev() {
        let decided: Vec<PolicyEntry> = (0..states.len())
            .into_par_iter()
            .map(|i| {
                let mut best = PolicyEntry { action: 0, value: f64::NEG_INFINITY };
                for a in 0..=n {
                    let cont: f64 = kernel.rows[i][a as usize]
                        .iter()
                        .map(|&(j, p)| p * next_values[j])
                        .sum();
                    let v = rewards[i][a as usize] + cont;
                    if v > best.value + 1e-14 {
                        best = PolicyEntry { action: a, value: v };
                    }
                }
                best
            })
            .collect();
        for (s, e) in states.iter().zip(&decided) {
            entries.insert((epoch, *s), *e);
        }
        next_values = decided.iter().map(|e| e.value).collect();
    }
    let backups = (n as u64 + 1) * states.len() as u64 * config.deadline() as u64;
    PolicyTable { config: *config, entries, backups }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    MaxWeight,
    Wfq,
    Backpressure,
    FiftyFifty,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::MaxWeight => "mw",
            BaselineKind::Wfq => "wfq",
            BaselineKind::Backpressure => "bp",
            BaselineKind::FiftyFifty => "fifty",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mw" => Some(BaselineKind::MaxWeight),
            "wfq" => Some(BaselineKind::Wfq),
            "bp" => Some(BaselineKind::Backpressure),
            "fifty" => Some(BaselineKind::FiftyFifty),
            _ => None,
        }
    }
}

fn half_up(slots: u32) -> u32 {
    slots.div_ceil(2)
}

/// Link-1 allocation chosen by a queue-based baseline.
///
/// * MW: every slot to the longer queue; ties go to link 1.
/// * WFQ: `round(N q1 / (q1 + q2))`, halves rounded up; an empty system
///   gets `ceil(N/2)`.
/// * BP: weights `q1 - q2` and `q2`, every slot to the heavier link; a tie,
///   or no positive weight, falls back to the half split.
/// * Fifty: `ceil(N/2)` always.
pub fn baseline_policy(kind: BaselineKind, slots: u32, state: QueueState) -> u32 {
    let QueueState { q1, q2 } = state;
    match kind {
        BaselineKind::MaxWeight => {
            if q2 > q1 {
                0
            } else {
                slots
            }
        }
        BaselineKind::Wfq => {
            let total = q1 as u64 + q2 as u64;
            if total == 0 {
                half_up(slots)
            } else {
                ((2 * slots as u64 * q1 as u64 + total) / (2 * total)) as u32
            }
        }
        BaselineKind::Backpressure => {
            let w1 = q1 as i64 - q2 as i64;
            let w2 = q2 as i64;
            if w1 == w2 || (w1 <= 0 && w2 <= 0) {
                half_up(slots)
            } else if w1 > w2 {
                slots
            } else {
                0
            }
        }
        BaselineKind::FiftyFifty => half_up(slots),
    }
}

/// A baseline bound to a frame size, usable wherever a policy is expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub slots: u32,
}

impl Baseline {
    pub fn new(kind: BaselineKind, slots: u32) -> Self {
        Self { kind, slots }
    }
}

impl SlotPolicy for Baseline {
    fn action(&self, _epoch: u32, state: QueueState) -> Result<u32> {
        Ok(baseline_policy(self.kind, self.slots, state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(n: u32, pe: f64, w: u32, y: u32, x1: u32, x2: u32) -> ScenarioConfig {
        ScenarioConfig::new(n, pe, w, y, x1, x2).unwrap()
    }

    #[test]
    fn state_space_sizes() {
        assert_eq!(build_state_space(&cfg(2, 0.1, 1, 1, 0, 0)).len(), 4);
        assert_eq!(build_state_space(&cfg(2, 0.1, 1, 1, 1, 1)).len(), 12);
        assert_eq!(build_state_space(&cfg(2, 0.1, 1, 2, 2, 3)).len(), 40);
    }

    #[test]
    fn empty_state_is_absorbing() {
        let c = cfg(3, 0.4, 2, 1, 0, 0);
        for a in 0..=3 {
            let t = transition_probs(&c, QueueState::new(0, 0), a).unwrap();
            assert_eq!(t.len(), 1);
            assert_eq!(t[0].0, QueueState::new(0, 0));
            assert_abs_diff_eq!(t[0].1, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_bernoulli_transition() {
        let c = cfg(1, 0.5, 1, 1, 0, 0);
        let t = transition_probs(&c, QueueState::new(1, 0), 1).unwrap();
        assert_eq!(t, vec![(QueueState::new(0, 1), 0.5), (QueueState::new(1, 0), 0.5)]);
    }

    #[test]
    fn two_by_two_transition() {
        // Hand marginalisation: s1, s2 ~ Bernoulli(0.5) each.
        // (s1, s2) = (0,0) -> (1,1); (0,1) -> (1,0); (1,0) -> (0,2); (1,1) -> (0,1).
        let c = cfg(2, 0.5, 1, 1, 0, 1);
        let t = transition_probs(&c, QueueState::new(1, 1), 1).unwrap();
        let expect = vec![
            (QueueState::new(0, 1), 0.25),
            (QueueState::new(0, 2), 0.25),
            (QueueState::new(1, 0), 0.25),
            (QueueState::new(1, 1), 0.25),
        ];
        assert_eq!(t, expect);
        assert_eq!(transition_probs_cases(&c, QueueState::new(1, 1), 1).unwrap(), expect);
    }

    #[test]
    fn invalid_action_rejected() {
        let c = cfg(2, 0.5, 1, 1, 0, 0);
        assert!(transition_probs(&c, QueueState::new(1, 0), 3).is_err());
        assert!(transition_probs_cases(&c, QueueState::new(1, 0), 3).is_err());
        assert!(reward(&c, QueueState::new(1, 0), 3).is_err());
    }

    #[test]
    fn reward_examples() {
        let c = cfg(4, 0.3, 2, 1, 1, 1);
        for a in 0..=4 {
            assert_eq!(reward(&c, QueueState::new(2, 0), a).unwrap(), 0.0);
        }
        // Never binding: mean of Binomial(N - n1, 1 - p_e).
        assert_abs_diff_eq!(reward(&c, QueueState::new(0, 5), 1).unwrap(), 3.0 * 0.7, epsilon = 1e-12);
        let c = cfg(3, 0.5, 2, 1, 0, 0);
        assert_abs_diff_eq!(reward(&c, QueueState::new(0, 1), 1).unwrap(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn value_iteration_lossless_drain() {
        let t = value_iteration(&cfg(2, 0.0, 2, 1, 0, 0));
        assert_abs_diff_eq!(t.initial_value(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn value_iteration_dead_channel() {
        let c = cfg(3, 1.0, 3, 2, 1, 1);
        let t = value_iteration(&c);
        for (_, _, e) in t.iter() {
            assert_eq!(e.value, 0.0);
            // Every action ties at zero, so the smallest wins.
            assert_eq!(e.action, 0);
        }
    }

    // Brute force over every deterministic Markov policy on the states the
    // chain can visit at each epoch.
    fn brute_force_max(c: &ScenarioConfig) -> f64 {
        let n = c.slots();
        let mut reach: Vec<Vec<QueueState>> = vec![vec![c.initial_state()]];
        for _ in 1..c.deadline() {
            let mut next = std::collections::BTreeSet::new();
            for s in reach.last().unwrap() {
                for a in 0..=n {
                    for (t, _) in transition_probs(c, *s, a).unwrap() {
                        next.insert(t);
                    }
                }
            }
            reach.push(next.into_iter().collect());
        }
        let slots: Vec<(u32, QueueState)> = reach
            .iter()
            .enumerate()
            .flat_map(|(k, v)| v.iter().map(move |s| (k as u32, *s)))
            .collect();
        let total = (n as u64 + 1).pow(slots.len() as u32);
        let mut best = f64::NEG_INFINITY;
        for code in 0..total {
            let mut table = HashMap::new();
            let mut rest = code;
            for key in &slots {
                table.insert(*key, (rest % (n as u64 + 1)) as u32);
                rest /= n as u64 + 1;
            }
            let mut dist: HashMap<QueueState, f64> = HashMap::from([(c.initial_state(), 1.0)]);
            let mut gained = 0.0;
            for k in 0..c.deadline() {
                let mut nd = HashMap::new();
                for (s, p) in &dist {
                    let a = table[&(k, *s)];
                    gained += p * reward(c, *s, a).unwrap();
                    for (t, q) in transition_probs(c, *s, a).unwrap() {
                        *nd.entry(t).or_insert(0.0) += p * q;
                    }
                }
                dist = nd;
            }
            best = best.max(gained);
        }
        best
    }

    #[test]
    fn value_iteration_matches_policy_enumeration() {
        let c = cfg(1, 0.5, 2, 1, 0, 0);
        let t = value_iteration(&c);
        assert_abs_diff_eq!(t.initial_value(), brute_force_max(&c), epsilon = 1e-12);
        let c = cfg(2, 0.3, 2, 1, 1, 0);
        assert_abs_diff_eq!(value_iteration(&c).initial_value(), brute_force_max(&c), epsilon = 1e-12);
    }

    #[test]
    fn value_table_invariants() {
        let c = cfg(4, 0.35, 4, 2, 1, 2);
        let t = value_iteration(&c);
        assert_eq!(t.backups(), 5 * feasible_states(&c).len() as u64 * 4);
        for (k, s, e) in t.iter() {
            assert!(e.value <= s.total() as f64 + 1e-12);
            let later = t.value(k + 1, s).unwrap();
            assert!(e.value + 1e-12 >= later, "J_{k}({s:?}) < J_{}", k + 1);
        }
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_policy(BaselineKind::MaxWeight, 4, QueueState::new(3, 1)), 4);
        assert_eq!(baseline_policy(BaselineKind::MaxWeight, 4, QueueState::new(1, 3)), 0);
        assert_eq!(baseline_policy(BaselineKind::MaxWeight, 4, QueueState::new(2, 2)), 4);
        assert_eq!(baseline_policy(BaselineKind::Wfq, 4, QueueState::new(1, 3)), 1);
        assert_eq!(baseline_policy(BaselineKind::Wfq, 4, QueueState::new(1, 1)), 2);
        assert_eq!(baseline_policy(BaselineKind::Wfq, 5, QueueState::new(1, 1)), 3);
        assert_eq!(baseline_policy(BaselineKind::Wfq, 5, QueueState::new(0, 0)), 3);
        assert_eq!(baseline_policy(BaselineKind::Backpressure, 4, QueueState::new(1, 2)), 0);
        assert_eq!(baseline_policy(BaselineKind::Backpressure, 4, QueueState::new(5, 1)), 4);
        assert_eq!(baseline_policy(BaselineKind::Backpressure, 5, QueueState::new(0, 0)), 3);
        assert_eq!(baseline_policy(BaselineKind::Backpressure, 4, QueueState::new(2, 1)), 2);
        assert_eq!(baseline_policy(BaselineKind::FiftyFifty, 5, QueueState::new(9, 0)), 3);
    }

    #[test]
    fn policy_file_round_trip() {
        let t = value_iteration(&cfg(3, 0.25, 3, 1, 1, 1));
        let text = t.to_text();
        assert!(text.starts_with("# twohop policy table\nN=3 pe=0.25 w=3 y=1 x1=1 x2=1\nepoch q1 q2 action value\n"));
        let back = PolicyTable::from_text(&text).unwrap();
        assert_eq!(back.len(), t.len());
        for (k, s, e) in t.iter() {
            let b = back.get(k, s).unwrap();
            assert_eq!(b.action, e.action);
            assert!((b.value - e.value).abs() <= 1e-11 * e.value.abs().max(1.0));
        }
    }

    #[test]
    fn policy_file_errors_carry_line_numbers() {
        let base = "# c\nN=2 pe=0.5 w=2 y=1 x1=0 x2=0\nepoch q1 q2 action value\n";
        let err = PolicyTable::from_text(&format!("{base}0 1 0 1\n")).unwrap_err();
        assert_eq!(err, Error::Parse { line: 4, msg: "expected 5 fields, found 4".into() });
        let err = PolicyTable::from_text(&format!("{base}0 1 0 3 0.5\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
        let err = PolicyTable::from_text(&format!("{base}0 1 0 1 0.5\n2 0 0 1 0.5\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }));
        let err = PolicyTable::from_text("N=2 pe=0.5 w=2 y=1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = PolicyTable::from_text("N=2 pe=0.5 w=2 y=1 x1=0 x2=0\nepoch q1 q2 value\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn policy_table_lookup_missing_state() {
        let text = "N=2 pe=0.5 w=2 y=1 x1=0 x2=0\nepoch q1 q2 action value\n0 1 0 1 0.25\n";
        let t = PolicyTable::from_text(text).unwrap();
        assert_eq!(t.action(0, QueueState::new(1, 0)).unwrap(), 1);
        assert_eq!(
            t.action(1, QueueState::new(0, 1)),
            Err(Error::MissingState { epoch: 1, state: QueueState::new(0, 1) })
        );
    }

    proptest! {
        #[test]
        fn kernel_rows_are_stochastic_and_feasible(
            n in 1u32..6, pe in 0.0f64..=1.0, y in 1u32..3, x1 in 0u32..3, x2 in 0u32..3,
        ) {
            let c = cfg(n, pe, 2, y, x1, x2);
            let k = TransitionKernel::build(&c);
            for &s in k.states() {
                for a in 0..=n {
                    let row = k.row(s, a).unwrap();
                    let mass: f64 = row.iter().map(|(_, p)| p).sum();
                    prop_assert!((mass - 1.0).abs() < 1e-12);
                    for (t, _) in row {
                        prop_assert!(t.q1 <= s.q1 && t.total() <= s.total());
                    }
                }
            }
        }

        #[test]
        fn case_form_matches_marginalisation(
            n in 1u32..7, pe in 0.0f64..=1.0, q1 in 0u32..4, q2 in 0u32..4, a_frac in 0.0f64..=1.0,
        ) {
            let c = cfg(n, pe, 1, 3, 0, 3);
            let a = (a_frac * n as f64).round() as u32;
            let s = QueueState::new(q1, q2);
            let m: HashMap<_, _> = transition_probs(&c, s, a).unwrap().into_iter().collect();
            let f: HashMap<_, _> = transition_probs_cases(&c, s, a).unwrap().into_iter().collect();
            for key in m.keys().chain(f.keys()) {
                let x = m.get(key).copied().unwrap_or(0.0);
                let z = f.get(key).copied().unwrap_or(0.0);
                prop_assert!((x - z).abs() < 1e-12, "{:?}: {} vs {}", key, x, z);
            }
        }
    }
}
