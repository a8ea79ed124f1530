//! Scenario parameters, slot allocations, queue states and the one-frame
//! queue dynamics of the two-hop path.
//!
//! Time is split into frames of `N` slots. In frame `k` link 1 gets `n1[k]`
//! slots and link 2 gets `N - n1[k]`; every slot is an independent
//! transmission attempt that succeeds with probability `1 - p_e`. Packets
//! leaving queue 1 in frame `k` join queue 2 and can be served from frame
//! `k + 1` on.

use std::fmt;

use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

/// One problem instance: frame size, error rate, deadline, batch size and
/// the initial backlogs of both queues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    slots: u32,
    pe: f64,
    deadline: u32,
    batch: u32,
    x1: u32,
    x2: u32,
}

impl ScenarioConfig {
    pub fn new(slots: u32, pe: f64, deadline: u32, batch: u32, x1: u32, x2: u32) -> Result<Self> {
        if slots == 0 {
            return Err(Error::config("N must be at least 1"));
        }
        if !(0.0..=1.0).contains(&pe) {
            return Err(Error::config(format!("p_e = {pe} is outside [0, 1]")));
        }
        if deadline == 0 {
            return Err(Error::config("w must be at least 1"));
        }
        if batch == 0 {
            return Err(Error::config("y must be at least 1"));
        }
        Ok(Self { slots, pe, deadline, batch, x1, x2 })
    }

    /// Slots per frame (`N`).
    pub fn slots(&self) -> u32 {
        self.slots
    }

    /// Per-slot packet error rate (`p_e`).
    pub fn pe(&self) -> f64 {
        self.pe
    }

    /// Per-slot success probability `1 - p_e`.
    pub fn success(&self) -> f64 {
        1.0 - self.pe
    }

    /// Deadline in frames (`w`).
    pub fn deadline(&self) -> u32 {
        self.deadline
    }

    /// Size of the time-critical batch (`y`).
    pub fn batch(&self) -> u32 {
        self.batch
    }

    pub fn x1(&self) -> u32 {
        self.x1
    }

    pub fn x2(&self) -> u32 {
        self.x2
    }

    /// Everything that has to cross link 1 before the deadline: `y + x1`.
    pub fn upstream_load(&self) -> u32 {
        self.batch + self.x1
    }

    /// Total initial load `L = y + x1 + x2`.
    pub fn total_load(&self) -> u32 {
        self.batch + self.x1 + self.x2
    }

    pub fn initial_state(&self) -> QueueState {
        QueueState::new(self.upstream_load(), self.x2)
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={} pe={} w={} y={} x1={} x2={}",
            self.slots, self.pe, self.deadline, self.batch, self.x1, self.x2
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    First,
    Second,
}

/// A semi-static allocation: the link-1 slot count of every frame up to the
/// deadline. Link 2 receives the remaining `N - n1[k]` slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    slots: u32,
    link1: Vec<u32>,
}

impl Schedule {
    pub fn new(slots: u32, link1: Vec<u32>) -> Result<Self> {
        if let Some((k, &n)) = link1.iter().enumerate().find(|(_, &n)| n > slots) {
            return Err(Error::domain(format!(
                "frame {k} allocates {n} slots to link 1 but a frame has only {slots}"
            )));
        }
        Ok(Self { slots, link1 })
    }

    /// Builds the schedule from the link-2 allocation vector `n2`.
    pub fn from_link2(slots: u32, link2: &[u32]) -> Result<Self> {
        if let Some((k, &n)) = link2.iter().enumerate().find(|(_, &n)| n > slots) {
            return Err(Error::domain(format!(
                "frame {k} allocates {n} slots to link 2 but a frame has only {slots}"
            )));
        }
        Ok(Self { slots, link1: link2.iter().map(|&n| slots - n).collect() })
    }

    /// Same allocation in every one of `frames` frames.
    pub fn constant(slots: u32, frames: u32, link1: u32) -> Result<Self> {
        Self::new(slots, vec![link1; frames as usize])
    }

    pub fn slots(&self) -> u32 {
        self.slots
    }

    pub fn len(&self) -> usize {
        self.link1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.link1.is_empty()
    }

    pub fn link1(&self) -> &[u32] {
        &self.link1
    }

    pub fn link2(&self) -> Vec<u32> {
        self.link1.iter().map(|&n| self.slots - n).collect()
    }

    pub fn allocation(&self, link: Link, frame: usize) -> u32 {
        match link {
            Link::First => self.link1[frame],
            Link::Second => self.slots - self.link1[frame],
        }
    }

    /// Checks that the schedule covers exactly `config`'s deadline with
    /// `config`'s frame size.
    pub fn check_against(&self, config: &ScenarioConfig) -> Result<()> {
        if self.slots != config.slots() {
            return Err(Error::domain(format!(
                "schedule built for N={} used with N={}",
                self.slots,
                config.slots()
            )));
        }
        if self.len() != config.deadline() as usize {
            return Err(Error::domain(format!(
                "schedule has {} frames but the deadline is w={}",
                self.len(),
                config.deadline()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.link1.iter().map(u32::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Joint backlog `(q1, q2)` at a frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueueState {
    pub q1: u32,
    pub q2: u32,
}

impl QueueState {
    pub const fn new(q1: u32, q2: u32) -> Self {
        Self { q1, q2 }
    }

    pub fn total(&self) -> u32 {
        self.q1 + self.q2
    }

    pub fn is_empty(&self) -> bool {
        self.q1 == 0 && self.q2 == 0
    }
}

/// Granted service and resulting departures of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOutcome {
    pub s1: u32,
    pub s2: u32,
    pub d1: u32,
    pub d2: u32,
}

impl FrameOutcome {
    pub fn new(state: QueueState, s1: u32, s2: u32) -> Self {
        Self { s1, s2, d1: state.q1.min(s1), d2: state.q2.min(s2) }
    }
}

/// Applies one frame of service. Link-1 departures are relayed into queue 2
/// after queue 2 has been served. Returns the next state and the number of
/// packets that left the system.
pub fn step_queues(state: QueueState, s1: u32, s2: u32) -> (QueueState, u32) {
    let out = FrameOutcome::new(state, s1, s2);
    let next = QueueState::new(state.q1 - out.d1, state.q2 - out.d2 + out.d1);
    (next, out.d2)
}

/// Trial count of the successful-slot total of `link` over frames
/// `from..to`. Zero for an empty interval.
pub fn service_trials(schedule: &Schedule, link: Link, from: usize, to: usize) -> u32 {
    (from..to).map(|k| schedule.allocation(link, k)).sum()
}

/// Trial count of the cumulative service `S^link(k)` over frames `0..k`.
pub fn cumulative_service_params(schedule: &Schedule, link: Link, frames: usize) -> Result<u32> {
    if frames > schedule.len() {
        return Err(Error::domain(format!(
            "k = {frames} exceeds the schedule length {}",
            schedule.len()
        )));
    }
    Ok(service_trials(schedule, link, 0, frames))
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("probability {p} is outside [0, 1]")))
    }
}

// ln(p^k), with 0^0 = 1.
fn ln_pow(p: f64, k: u32) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * p.ln()
    }
}

fn pmf_unchecked(n: u32, p: f64, r: u32) -> f64 {
    let ln = ln_binomial(n as u64, r as u64) + ln_pow(p, r) + ln_pow(1.0 - p, n - r);
    ln.exp()
}

/// `P{X = r}` for `X ~ Binomial(n, p)`, evaluated in log space.
pub fn binomial_pmf(n: u32, p: f64, r: u32) -> Result<f64> {
    check_prob(p)?;
    if r > n {
        return Err(Error::domain(format!("r = {r} exceeds the trial count n = {n}")));
    }
    Ok(pmf_unchecked(n, p, r))
}

/// `P{X <= r}` for `X ~ Binomial(n, p)`.
pub fn binomial_cdf(n: u32, p: f64, r: u32) -> Result<f64> {
    check_prob(p)?;
    if r > n {
        return Err(Error::domain(format!("r = {r} exceeds the trial count n = {n}")));
    }
    Ok(lower_tail(n, p, r as i64))
}

/// `P{X <= r}` saturating outside the support: 0 for `r < 0`, 1 for `r >= n`.
pub(crate) fn lower_tail(n: u32, p: f64, r: i64) -> f64 {
    if r < 0 {
        return 0.0;
    }
    if r as u64 >= n as u64 {
        return 1.0;
    }
    let sum: f64 = (0..=r as u32).map(|j| pmf_unchecked(n, p, j)).sum();
    sum.min(1.0)
}

/// The full probability mass vector of `Binomial(n, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Binomial {
    pmf: Vec<f64>,
}

impl Binomial {
    pub fn new(n: u32, p: f64) -> Result<Self> {
        check_prob(p)?;
        Ok(Self { pmf: (0..=n).map(|r| pmf_unchecked(n, p, r)).collect() })
    }

    pub fn trials(&self) -> u32 {
        (self.pmf.len() - 1) as u32
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `P{X >= r}`.
    pub fn upper_tail(&self, r: u32) -> f64 {
        self.pmf.iter().skip(r as usize).sum()
    }
}

/// Cache of `Binomial(n, 1 - p_e)` tables for every `n` in `0..=N`.
#[derive(Debug, Clone)]
pub(crate) struct ServiceTables {
    tables: Vec<Binomial>,
}

impl ServiceTables {
    pub(crate) fn new(config: &ScenarioConfig) -> Self {
        let p = config.success();
        let tables = (0..=config.slots())
            .map(|n| Binomial::new(n, p).expect("success probability already validated"))
            .collect();
        Self { tables }
    }

    pub(crate) fn get(&self, n: u32) -> &Binomial {
        &self.tables[n as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn pmf_examples() {
        assert_abs_diff_eq!(binomial_pmf(2, 0.5, 1).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(binomial_pmf(4, 1.0, 4).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binomial_pmf(3, 0.8, 2).unwrap(), 0.384, epsilon = 1e-14);
        assert_eq!(binomial_pmf(4, 1.0, 3).unwrap(), 0.0);
        assert_eq!(binomial_pmf(4, 0.0, 0).unwrap(), 1.0);
    }

    #[test]
    fn pmf_rejects_out_of_support() {
        assert!(matches!(binomial_pmf(3, 0.5, 4), Err(Error::Domain(_))));
        assert!(matches!(binomial_pmf(3, 1.5, 1), Err(Error::Domain(_))));
        assert!(matches!(binomial_cdf(3, 0.5, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_examples() {
        assert_abs_diff_eq!(binomial_cdf(2, 0.5, 2).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binomial_cdf(2, 0.5, 0).unwrap(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(binomial_cdf(5, 0.6, 2).unwrap(), 0.31744, epsilon = 1e-14);
    }

    #[test]
    fn lower_tail_saturates() {
        assert_eq!(lower_tail(3, 0.5, -1), 0.0);
        assert_eq!(lower_tail(3, 0.5, 3), 1.0);
        assert_eq!(lower_tail(0, 0.5, 0), 1.0);
    }

    #[test]
    fn step_examples() {
        assert_eq!(step_queues(QueueState::new(1, 0), 1, 1), (QueueState::new(0, 1), 0));
        assert_eq!(step_queues(QueueState::new(0, 0), 3, 3), (QueueState::new(0, 0), 0));
        assert_eq!(step_queues(QueueState::new(2, 2), 1, 3), (QueueState::new(1, 1), 2));
    }

    #[test]
    fn cumulative_service_examples() {
        let s = Schedule::new(4, vec![2, 2, 2]).unwrap();
        assert_eq!(cumulative_service_params(&s, Link::First, 0).unwrap(), 0);
        assert_eq!(cumulative_service_params(&s, Link::First, 3).unwrap(), 6);
        let s = Schedule::new(4, vec![1, 3, 2]).unwrap();
        assert_eq!(cumulative_service_params(&s, Link::Second, 2).unwrap(), 4);
        assert!(cumulative_service_params(&s, Link::Second, 4).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ScenarioConfig::new(0, 0.1, 1, 1, 0, 0).is_err());
        assert!(ScenarioConfig::new(1, -0.1, 1, 1, 0, 0).is_err());
        assert!(ScenarioConfig::new(1, 0.1, 0, 1, 0, 0).is_err());
        assert!(ScenarioConfig::new(1, 0.1, 1, 0, 0, 0).is_err());
        let c = ScenarioConfig::new(4, 0.2, 3, 2, 1, 3).unwrap();
        assert_eq!(c.total_load(), 6);
        assert_eq!(c.initial_state(), QueueState::new(3, 3));
    }

    #[test]
    fn schedule_rejects_oversized_frames() {
        assert!(Schedule::new(2, vec![1, 3]).is_err());
        assert!(Schedule::from_link2(2, &[3]).is_err());
        let s = Schedule::from_link2(5, &[1, 4]).unwrap();
        assert_eq!(s.link1(), &[4, 1]);
        assert_eq!(s.link2(), vec![1, 4]);
    }

    #[test]
    fn service_sample_mean_matches_binomial_mean() {
        use rand::{Rng, SeedableRng};
        let n = 5;
        let p = 0.7;
        let table = Binomial::new(n, p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples = 200_000;
        let mut sum = 0.0;
        for _ in 0..samples {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut r = n;
            for (k, pk) in table.pmf().iter().enumerate() {
                acc += pk;
                if u < acc {
                    r = k as u32;
                    break;
                }
            }
            sum += r as f64;
        }
        let mean = sum / samples as f64;
        let se = (n as f64 * p * (1.0 - p) / samples as f64).sqrt();
        assert!((mean - n as f64 * p).abs() < 3.0 * se, "mean {mean}");
    }

    proptest! {
        #[test]
        fn pmf_sums_to_one(n in 0u32..300, p in 0.0f64..=1.0) {
            let total: f64 = Binomial::new(n, p).unwrap().pmf().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cdf_is_monotone(n in 1u32..60, p in 0.0f64..=1.0) {
            let mut prev = 0.0;
            for r in 0..=n {
                let c = binomial_cdf(n, p, r).unwrap();
                prop_assert!(c + 1e-12 >= prev);
                prev = c;
            }
            prop_assert!((binomial_cdf(n, p, n).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn step_conserves_packets(q1 in 0u32..20, q2 in 0u32..20, s1 in 0u32..10, s2 in 0u32..10) {
            let state = QueueState::new(q1, q2);
            let (next, d2) = step_queues(state, s1, s2);
            let out = FrameOutcome::new(state, s1, s2);
            prop_assert_eq!(next.total() + d2, state.total());
            prop_assert!(out.d1 <= q1 && out.d1 <= s1);
            prop_assert!(out.d2 <= q2 && out.d2 <= s2);
        }

        // Cumulative departures over w frames equal L - q1_w - q2_w.
        #[test]
        fn departures_identity(
            x in (1u32..6, 0u32..4, 0u32..4),
            services in prop::collection::vec((0u32..5, 0u32..5), 1..8),
        ) {
            let (y, x1, x2) = x;
            let mut state = QueueState::new(y + x1, x2);
            let mut departed = 0;
            for &(s1, s2) in &services {
                let (next, d2) = step_queues(state, s1, s2);
                departed += d2;
                state = next;
            }
            prop_assert_eq!(departed, y + x1 + x2 - state.q1 - state.q2);
        }
    }
}
