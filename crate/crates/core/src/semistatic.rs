//! Semi-static schedules: one allocation vector fixed at frame 0 from the
//! initial backlogs only.
//!
//! The integer problem `min WTB(n2)` over `{1..N-1}^w` is relaxed to the box
//! `[1, N-1]^w` and solved by projected gradient descent, re-minimising the
//! Chernoff exponent at every iterate. The relaxed point is then turned into
//! an integer schedule by rounding (WTB-R) or by scoring all floor/ceil
//! combinations with DVPUB (WTB-D) or WTB (WTB-W). Exhaustive searches over
//! the whole domain serve as references.

use rayon::prelude::*;

use crate::analysis::{dvpub, exact_dvp_chain, wtb_min_s, ChernoffParam, WtbObjective};
use crate::error::{Error, Result};
use crate::model::{ScenarioConfig, Schedule};

/// Default limit on `w` for the `2^w` neighbour search.
pub const NEIGHBOR_CAP_FRAMES: u32 = 24;
/// Default limit on the number of schedules an exhaustive search visits.
pub const EXHAUSTIVE_CAP: u128 = 1_000_000;

const MAX_ITERATIONS: usize = 10_000;
const PG_TOL: f64 = 1e-7;
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemiStaticMethod {
    WtbR,
    WtbW,
    WtbD,
    EWtb,
    EDvpub,
    Opt,
    FiftyFifty,
}

impl SemiStaticMethod {
    pub const ALL: [SemiStaticMethod; 7] = [
        SemiStaticMethod::WtbR,
        SemiStaticMethod::WtbW,
        SemiStaticMethod::WtbD,
        SemiStaticMethod::EWtb,
        SemiStaticMethod::EDvpub,
        SemiStaticMethod::Opt,
        SemiStaticMethod::FiftyFifty,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SemiStaticMethod::WtbR => "wtb-r",
            SemiStaticMethod::WtbW => "wtb-w",
            SemiStaticMethod::WtbD => "wtb-d",
            SemiStaticMethod::EWtb => "e-wtb",
            SemiStaticMethod::EDvpub => "e-dvpub",
            SemiStaticMethod::Opt => "opt",
            SemiStaticMethod::FiftyFifty => "fifty",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Which score a search minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Dvpub,
    Wtb,
    Exact,
}

/// Domain of an exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SearchDomain {
    /// `{1..N-1}^w`: both links get at least one slot per frame.
    #[default]
    Interior,
    /// `{0..N}^w`.
    Full,
}

/// Minimiser of WTB over the relaxed box.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSchedule {
    /// Real link-2 allocation per frame, inside `[1, N-1]`.
    pub link2: Vec<f64>,
    pub s: ChernoffParam,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiStaticResult {
    pub schedule: Schedule,
    pub method: SemiStaticMethod,
    /// Value of the criterion the method selected on (WTB for WTB-R and
    /// WTB-W, DVPUB for WTB-D and eDVPUB, exact DVP for OPT and 50/50).
    pub score: f64,
    pub relaxed: Option<RelaxedSchedule>,
}

fn require_interior(config: &ScenarioConfig) -> Result<()> {
    if config.slots() < 2 {
        Err(Error::Infeasible(format!(
            "N = {} leaves no allocation with at least one slot per link",
            config.slots()
        )))
    } else {
        Ok(())
    }
}

/// `ln WTB` and its gradient in the link-2 allocation, with the exponent
/// minimised first. The gradient is taken at the optimal `s` (envelope).
pub fn log_wtb_and_gradient(config: &ScenarioConfig, link2: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
    let obj = WtbObjective::new(config, link2)?;
    let (s, v) = obj.minimize();
    let v = v.max(f64::MIN_POSITIVE);
    let grad = obj.gradient(s).into_iter().map(|g| g / v).collect();
    Ok((v.ln(), grad, s))
}

/// Projected gradient descent on `ln WTB` over `[1, N-1]^w`, starting from
/// the even split `N/2`. Steps use backtracking with Armijo sufficient
/// decrease; iteration stops once the projected gradient is below `1e-7`.
///
/// The log transform leaves the minimiser unchanged and makes the stopping
/// rule independent of how small the bound is.
pub fn solve_relaxed(config: &ScenarioConfig) -> Result<RelaxedSchedule> {
    require_interior(config)?;
    let w = config.deadline() as usize;
    let lo = 1.0;
    let hi = config.slots() as f64 - 1.0;
    let project = |x: f64| x.clamp(lo, hi);

    let mut x = vec![config.slots() as f64 / 2.0; w];
    let (mut f, mut g, mut s) = log_wtb_and_gradient(config, &x)?;
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let pg_norm = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| (project(xi - gi) - xi).powi(2))
            .sum::<f64>()
            .sqrt();
        if pg_norm < PG_TOL || f == f64::MIN_POSITIVE.ln() {
            converged = true;
            break;
        }
        iterations += 1;

        let mut t = (step * 2.0).min(1e6);
        let accepted = loop {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| project(xi - t * gi)).collect();
            let decrease: f64 = cand.iter().zip(&x).zip(&g).map(|((c, xi), gi)| gi * (c - xi)).sum();
            let (fc, gc, sc) = log_wtb_and_gradient(config, &cand)?;
            if fc <= f + ARMIJO_C * decrease {
                break Some((cand, fc, gc, sc));
            }
            t *= 0.5;
            if t < 1e-16 {
                break None;
            }
        };
        match accepted {
            Some((cand, fc, gc, sc)) => {
                x = cand;
                f = fc;
                g = gc;
                s = sc;
                step = t;
            }
            None => {
                // No descent along the projected path at machine precision.
                converged = true;
                break;
            }
        }
    }

    let obj = WtbObjective::new(config, &x)?;
    Ok(RelaxedSchedule {
        objective: obj.value(s),
        s: ChernoffParam::new(s)?,
        link2: x,
        iterations,
        converged,
    })
}

fn clamp_int(v: i64, lo: i64, hi: i64) -> u32 {
    v.clamp(lo, hi) as u32
}

/// WTB-R: every coordinate to its nearest integer (halves up), kept inside
/// `{1..N-1}`.
pub fn round_nearest(config: &ScenarioConfig, relaxed: &RelaxedSchedule) -> Result<SemiStaticResult> {
    require_interior(config)?;
    let hi = config.slots() as i64 - 1;
    let link2: Vec<u32> = relaxed
        .link2
        .iter()
        .map(|&v| clamp_int((v + 0.5).floor() as i64, 1, hi))
        .collect();
    let schedule = Schedule::from_link2(config.slots(), &link2)?;
    let (_, score) = wtb_min_s(config, &schedule)?;
    Ok(SemiStaticResult { schedule, method: SemiStaticMethod::WtbR, score, relaxed: Some(relaxed.clone()) })
}

fn score(config: &ScenarioConfig, schedule: &Schedule, criterion: Criterion) -> Result<f64> {
    match criterion {
        Criterion::Dvpub => Ok(dvpub(config, schedule)?.dvp),
        Criterion::Wtb => Ok(wtb_min_s(config, schedule)?.1),
        Criterion::Exact => Ok(exact_dvp_chain(config, schedule)?.dvp),
    }
}

// Scores every candidate in parallel and returns the first minimiser in
// candidate order.
fn argmin(
    config: &ScenarioConfig,
    candidates: Vec<Vec<u32>>,
    criterion: Criterion,
) -> Result<(Schedule, f64)> {
    let scored: Vec<(Schedule, f64)> = candidates
        .into_par_iter()
        .map(|link2| {
            let schedule = Schedule::from_link2(config.slots(), &link2)?;
            let v = score(config, &schedule, criterion)?;
            Ok((schedule, v))
        })
        .collect::<Result<_>>()?;
    scored
        .into_iter()
        .reduce(|best, cand| if cand.1 < best.1 { cand } else { best })
        .ok_or_else(|| Error::Infeasible("empty search space".into()))
}

// Cross product of per-frame option lists, in lexicographic order.
fn cross_product(options: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::with_capacity(options.len())];
    for opts in options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |&o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    out
}

/// Floor/ceil candidates of every coordinate, clamped into `{1..N-1}` and
/// deduplicated.
pub fn neighbor_candidates(config: &ScenarioConfig, relaxed: &RelaxedSchedule) -> Vec<Vec<u32>> {
    let hi = config.slots() as i64 - 1;
    let options: Vec<Vec<u32>> = relaxed
        .link2
        .iter()
        .map(|&v| {
            let a = clamp_int(v.floor() as i64, 1, hi);
            let b = clamp_int(v.ceil() as i64, 1, hi);
            if a == b {
                vec![a]
            } else {
                vec![a.min(b), a.max(b)]
            }
        })
        .collect();
    cross_product(&options)
}

/// WTB-D (`Criterion::Dvpub`) and WTB-W (`Criterion::Wtb`): best of the
/// `2^w` floor/ceil combinations around the relaxed optimum. Ties go to the
/// lexicographically smallest link-2 vector.
pub fn neighbor_search(
    config: &ScenarioConfig,
    relaxed: &RelaxedSchedule,
    criterion: Criterion,
) -> Result<SemiStaticResult> {
    neighbor_search_capped(config, relaxed, criterion, NEIGHBOR_CAP_FRAMES)
}

pub fn neighbor_search_capped(
    config: &ScenarioConfig,
    relaxed: &RelaxedSchedule,
    criterion: Criterion,
    max_frames: u32,
) -> Result<SemiStaticResult> {
    require_interior(config)?;
    if config.deadline() > max_frames {
        return Err(Error::CapExceeded {
            what: "neighbour search",
            size: 1u128 << config.deadline().min(127),
            cap: 1u128 << max_frames.min(127),
        });
    }
    let method = match criterion {
        Criterion::Dvpub => SemiStaticMethod::WtbD,
        Criterion::Wtb => SemiStaticMethod::WtbW,
        Criterion::Exact => {
            return Err(Error::domain("neighbour search scores with DVPUB or WTB only"));
        }
    };
    let (schedule, score) = argmin(config, neighbor_candidates(config, relaxed), criterion)?;
    Ok(SemiStaticResult { schedule, method, score, relaxed: Some(relaxed.clone()) })
}

fn domain_bounds(config: &ScenarioConfig, domain: SearchDomain) -> Result<(u32, u32)> {
    match domain {
        SearchDomain::Interior => {
            require_interior(config)?;
            Ok((1, config.slots() - 1))
        }
        SearchDomain::Full => Ok((0, config.slots())),
    }
}

/// Number of schedules in the exhaustive search domain.
pub fn domain_size(config: &ScenarioConfig, domain: SearchDomain) -> Result<u128> {
    let (lo, hi) = domain_bounds(config, domain)?;
    let base = (hi - lo + 1) as u128;
    Ok(base.checked_pow(config.deadline()).unwrap_or(u128::MAX))
}

/// Every link-2 vector of the domain, in lexicographic order.
pub fn enumerate_domain(config: &ScenarioConfig, domain: SearchDomain, cap: u128) -> Result<Vec<Vec<u32>>> {
    let (lo, hi) = domain_bounds(config, domain)?;
    let size = domain_size(config, domain)?;
    if size > cap {
        return Err(Error::CapExceeded { what: "exhaustive search", size, cap });
    }
    let options: Vec<Vec<u32>> = (0..config.deadline()).map(|_| (lo..=hi).collect()).collect();
    Ok(cross_product(&options))
}

/// eDVPUB, eWTB and OPT: the minimiser of the criterion over the whole
/// domain. Ties go to the lexicographically smallest link-2 vector.
pub fn exhaustive(config: &ScenarioConfig, criterion: Criterion) -> Result<SemiStaticResult> {
    exhaustive_in(config, criterion, SearchDomain::Interior, EXHAUSTIVE_CAP)
}

pub fn exhaustive_in(
    config: &ScenarioConfig,
    criterion: Criterion,
    domain: SearchDomain,
    cap: u128,
) -> Result<SemiStaticResult> {
    let candidates = enumerate_domain(config, domain, cap)?;
    let (schedule, score) = argmin(config, candidates, criterion)?;
    let method = match criterion {
        Criterion::Dvpub => SemiStaticMethod::EDvpub,
        Criterion::Wtb => SemiStaticMethod::EWtb,
        Criterion::Exact => SemiStaticMethod::Opt,
    };
    Ok(SemiStaticResult { schedule, method, score, relaxed: None })
}

/// Even split, with the odd slot going to link 1.
pub fn fifty_fifty(config: &ScenarioConfig) -> Result<SemiStaticResult> {
    let schedule = Schedule::constant(config.slots(), config.deadline(), config.slots().div_ceil(2))?;
    let score = exact_dvp_chain(config, &schedule)?.dvp;
    Ok(SemiStaticResult { schedule, method: SemiStaticMethod::FiftyFifty, score, relaxed: None })
}

/// Runs `method` with default caps.
pub fn solve(config: &ScenarioConfig, method: SemiStaticMethod) -> Result<SemiStaticResult> {
    match method {
        SemiStaticMethod::WtbR => round_nearest(config, &solve_relaxed(config)?),
        SemiStaticMethod::WtbW => neighbor_search(config, &solve_relaxed(config)?, Criterion::Wtb),
        SemiStaticMethod::WtbD => neighbor_search(config, &solve_relaxed(config)?, Criterion::Dvpub),
        SemiStaticMethod::EWtb => exhaustive(config, Criterion::Wtb),
        SemiStaticMethod::EDvpub => exhaustive(config, Criterion::Dvpub),
        SemiStaticMethod::Opt => exhaustive(config, Criterion::Exact),
        SemiStaticMethod::FiftyFifty => fifty_fifty(config),
    }
}
