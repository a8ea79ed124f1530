//! Monte Carlo estimation of the DVP and of `E[D(w)]` for any policy.
//!
//! Replication `i` draws from its own ChaCha stream keyed by `(seed, i)`, so
//! results do not depend on how replications are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{step_queues, ScenarioConfig};
use crate::policy::SlotPolicy;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

pub const DEFAULT_REPLICATIONS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimSpec {
    pub replications: u64,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(replications: u64, seed: u64) -> Result<Self> {
        if replications == 0 {
            return Err(Error::config("at least one replication is required"));
        }
        Ok(Self { replications, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub dvp_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_departures: f64,
    pub replications: u64,
}

impl SimResult {
    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// 95% Wilson score interval for `hits` successes out of `n` trials.
pub fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

// Cumulative distribution tables of Binomial(n, 1 - p_e), n = 0..=N.
struct Samplers {
    cdfs: Vec<Vec<f64>>,
}

impl Samplers {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let p = config.success();
        let cdfs = (0..=config.slots())
            .map(|n| {
                let b = crate::model::Binomial::new(n, p)?;
                let mut acc = 0.0;
                Ok(b.pmf()
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { cdfs })
    }

    // Inversion: smallest r with u < F(r).
    fn draw(&self, n: u32, rng: &mut ChaCha8Rng) -> u32 {
        if n == 0 {
            return 0;
        }
        let u: f64 = rng.random();
        let cdf = &self.cdfs[n as usize];
        cdf.iter().position(|&c| u < c).unwrap_or(n as usize) as u32
    }
}

fn stream(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Runs `spec.replications` independent passes of the horizon under
/// `policy` and reports the violation frequency with its Wilson interval.
pub fn simulate<P: SlotPolicy + ?Sized>(config: &ScenarioConfig, policy: &P, spec: &SimSpec) -> Result<SimResult> {
    if spec.replications == 0 {
        return Err(Error::config("at least one replication is required"));
    }
    let samplers = Samplers::new(config)?;
    let n = config.slots();
    let load = config.total_load() as u64;

    let (violations, departed) = (0..spec.replications)
        .into_par_iter()
        .map(|rep| -> Result<(u64, u64)> {
            let mut rng = stream(spec.seed, rep);
            let mut state = config.initial_state();
            for epoch in 0..config.deadline() {
                let a = policy.action(epoch, state)?;
                if a > n {
                    return Err(Error::domain(format!("policy action {a} at epoch {epoch} exceeds N = {n}")));
                }
                let s1 = samplers.draw(a, &mut rng);
                let s2 = samplers.draw(n - a, &mut rng);
                state = step_queues(state, s1, s2).0;
            }
            Ok((u64::from(!state.is_empty()), load - state.total() as u64))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;

    let (ci_low, ci_high) = wilson_interval(violations, spec.replications);
    Ok(SimResult {
        dvp_hat: violations as f64 / spec.replications as f64,
        ci_low,
        ci_high,
        mean_departures: departed as f64 / spec.replications as f64,
        replications: spec.replications,
    })
}
