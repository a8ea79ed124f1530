//! Parameter sweeps: every (config, policy) cell of a cross product is
//! solved, evaluated and written as one long-format CSV row.
//!
//! Sweep files are plain `key = value` lines; `#` starts a comment.
//!
//! ```text
//! N = 4
//! pe = 0.2
//! w = 2..6
//! x1x2 = 1:1, 2:2, 3:3
//! y = 1
//! policies = wtb-w, e-dvpub, opt, fifty
//! evaluator = exact
//! ```
//!
//! Integer keys take comma lists and inclusive `a..b` ranges. `x1` and `x2`
//! are crossed independently unless `x1x2` lists explicit pairs. The Monte
//! Carlo evaluator is selected with `evaluator = mc` and reads `reps` and
//! `seed`.

use std::fmt;
use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::exact_dvp_chain;
use crate::dynamic::{value_iteration, Baseline, BaselineKind};
use crate::error::{Error, Result};
use crate::format::fmt_prob;
use crate::model::ScenarioConfig;
use crate::policy::SlotPolicy;
use crate::semistatic::{solve, SemiStaticMethod};
use crate::sim::{simulate, SimSpec, DEFAULT_REPLICATIONS};

/// Every policy a sweep or the CLI can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyName {
    SemiStatic(SemiStaticMethod),
    Mdp,
    Baseline(BaselineKind),
}

impl PolicyName {
    pub const ALL: [PolicyName; 11] = [
        PolicyName::SemiStatic(SemiStaticMethod::WtbR),
        PolicyName::SemiStatic(SemiStaticMethod::WtbW),
        PolicyName::SemiStatic(SemiStaticMethod::WtbD),
        PolicyName::SemiStatic(SemiStaticMethod::EWtb),
        PolicyName::SemiStatic(SemiStaticMethod::EDvpub),
        PolicyName::SemiStatic(SemiStaticMethod::Opt),
        PolicyName::SemiStatic(SemiStaticMethod::FiftyFifty),
        PolicyName::Mdp,
        PolicyName::Baseline(BaselineKind::MaxWeight),
        PolicyName::Baseline(BaselineKind::Wfq),
        PolicyName::Baseline(BaselineKind::Backpressure),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyName::SemiStatic(m) => m.name(),
            PolicyName::Mdp => "mdp",
            PolicyName::Baseline(b) => b.name(),
        }
    }

    /// `fifty` resolves to the semi-static schedule; the state-based
    /// baseline of the same name allocates identically.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Solves (if needed) and returns the policy for `config`.
    pub fn build(&self, config: &ScenarioConfig) -> Result<Box<dyn SlotPolicy>> {
        Ok(match self {
            PolicyName::SemiStatic(m) => Box::new(solve(config, *m)?.schedule),
            PolicyName::Mdp => Box::new(value_iteration(config)),
            PolicyName::Baseline(b) => Box::new(Baseline::new(*b, config.slots())),
        })
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    Exact,
    MonteCarlo(SimSpec),
}

/// A DVP figure with its 95% interval when it was estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub dvp: f64,
    pub ci: Option<(f64, f64)>,
}

pub fn evaluate<P: SlotPolicy + ?Sized>(config: &ScenarioConfig, policy: &P, evaluator: &Evaluator) -> Result<Estimate> {
    match evaluator {
        Evaluator::Exact => Ok(Estimate { dvp: exact_dvp_chain(config, policy)?.dvp, ci: None }),
        Evaluator::MonteCarlo(spec) => {
            let r = simulate(config, policy, spec)?;
            Ok(Estimate { dvp: r.dvp_hat, ci: Some((r.ci_low, r.ci_high)) })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub slots: Vec<u32>,
    pub pe: Vec<f64>,
    pub deadline: Vec<u32>,
    pub batch: Vec<u32>,
    /// `(x1, x2)` pairs, already crossed when given as separate lists.
    pub backlogs: Vec<(u32, u32)>,
    pub policies: Vec<PolicyName>,
    pub evaluator: Evaluator,
}

fn parse_u32_list(line: usize, value: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        if let Some((a, b)) = item.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| Error::parse(line, format!("bad range start {a:?}")))?;
            let b: u32 = b.trim().parse().map_err(|_| Error::parse(line, format!("bad range end {b:?}")))?;
            if a > b {
                return Err(Error::parse(line, format!("empty range {item}")));
            }
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| Error::parse(line, format!("bad integer {item:?}")))?);
        }
    }
    Ok(out)
}

fn parse_f64_list(line: usize, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .map(|s| s.parse().map_err(|_| Error::parse(line, format!("bad number {s:?}"))))
        .collect()
}

fn parse_pairs(line: usize, value: &str) -> Result<Vec<(u32, u32)>> {
    value
        .split(',')
        .map(str::trim)
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| Error::parse(line, format!("expected x1:x2, got {item:?}")))?;
            let a = a.trim().parse().map_err(|_| Error::parse(line, format!("bad x1 in {item:?}")))?;
            let b = b.trim().parse().map_err(|_| Error::parse(line, format!("bad x2 in {item:?}")))?;
            Ok((a, b))
        })
        .collect()
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut slots = None;
        let mut pe = None;
        let mut deadline = None;
        let mut batch = None;
        let mut x1 = None;
        let mut x2 = None;
        let mut pairs = None;
        let mut policies = None;
        let mut evaluator = None;
        let mut reps = None;
        let mut seed = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(line, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() && key != "policies" {
                return Err(Error::parse(line, format!("{key} has no value")));
            }
            match key {
                "N" => slots = Some(parse_u32_list(line, value)?),
                "pe" => pe = Some(parse_f64_list(line, value)?),
                "w" => deadline = Some(parse_u32_list(line, value)?),
                "y" => batch = Some(parse_u32_list(line, value)?),
                "x1" => x1 = Some(parse_u32_list(line, value)?),
                "x2" => x2 = Some(parse_u32_list(line, value)?),
                "x1x2" => pairs = Some(parse_pairs(line, value)?),
                "policies" => {
                    let names: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                    let parsed = names
                        .iter()
                        .map(|n| PolicyName::from_name(n).ok_or_else(|| Error::parse(line, format!("unknown policy {n:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    policies = Some(parsed);
                }
                "evaluator" => {
                    evaluator = Some(match value {
                        "exact" => false,
                        "mc" | "monte-carlo" => true,
                        other => return Err(Error::parse(line, format!("unknown evaluator {other:?}"))),
                    })
                }
                "reps" => reps = Some(value.parse().map_err(|_| Error::parse(line, "bad replication count"))?),
                "seed" => seed = Some(value.parse().map_err(|_| Error::parse(line, "bad seed"))?),
                other => return Err(Error::parse(line, format!("unknown key {other:?}"))),
            }
        }

        let need = |v: Option<Vec<u32>>, key: &str| v.ok_or_else(|| Error::config(format!("sweep file lacks {key}")));
        let backlogs = match (pairs, x1, x2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::config("give either x1x2 or x1/x2, not both"));
            }
            (Some(p), None, None) => p,
            (None, x1, x2) => {
                let x1 = need(x1, "x1")?;
                let x2 = need(x2, "x2")?;
                x1.iter().flat_map(|&a| x2.iter().map(move |&b| (a, b))).collect()
            }
        };
        let policies = policies.unwrap_or_default();
        if policies.is_empty() {
            return Err(Error::config("the policy set is empty"));
        }
        let evaluator = if evaluator.unwrap_or(false) {
            Evaluator::MonteCarlo(SimSpec::new(reps.unwrap_or(DEFAULT_REPLICATIONS), seed.unwrap_or(0))?)
        } else {
            Evaluator::Exact
        };
        let spec = SweepSpec {
            slots: need(slots, "N")?,
            pe: pe.ok_or_else(|| Error::config("sweep file lacks pe"))?,
            deadline: need(deadline, "w")?,
            batch: batch.unwrap_or_else(|| vec![1]),
            backlogs,
            policies,
            evaluator,
        };
        spec.configs()?;
        Ok(spec)
    }

    /// The validated cross product, in row order.
    pub fn configs(&self) -> Result<Vec<ScenarioConfig>> {
        let mut out = Vec::new();
        for &(x1, x2) in &self.backlogs {
            for &w in &self.deadline {
                for &n in &self.slots {
                    for &pe in &self.pe {
                        for &y in &self.batch {
                            out.push(ScenarioConfig::new(n, pe, w, y, x1, x2)?);
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::config("the sweep has no configurations"));
        }
        out.sort_by(|a, b| config_key(a).partial_cmp(&config_key(b)).unwrap());
        out.dedup();
        Ok(out)
    }
}

fn config_key(c: &ScenarioConfig) -> (u32, u32, u32, u32, f64, u32) {
    (c.x1(), c.x2(), c.deadline(), c.slots(), c.pe(), c.batch())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x1: u32,
    pub x2: u32,
    pub w: u32,
    pub n: u32,
    pub pe: f64,
    pub y: u32,
    pub policy: String,
    pub dvp: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Record wall time per cell. Off gives byte-identical output across runs.
    pub timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { timing: true }
    }
}

// Round to what the CSV shows so that rows survive a write/read cycle.
fn as_printed(v: f64) -> f64 {
    fmt_prob(v).parse().unwrap_or(v)
}

fn fmt_ms(v: f64) -> String {
    format!("{v:.3}")
}

fn run_cell(config: &ScenarioConfig, policy: PolicyName, evaluator: &Evaluator, options: SweepOptions) -> SweepRow {
    let start = Instant::now();
    let outcome = policy.build(config).and_then(|p| evaluate(config, p.as_ref(), evaluator));
    let ms = options
        .timing
        .then(|| fmt_ms(start.elapsed().as_secs_f64() * 1e3).parse().unwrap_or(0.0));
    let mut row = SweepRow {
        x1: config.x1(),
        x2: config.x2(),
        w: config.deadline(),
        n: config.slots(),
        pe: config.pe(),
        y: config.batch(),
        policy: policy.name().to_string(),
        dvp: None,
        ci_low: None,
        ci_high: None,
        ms,
        error: None,
    };
    match outcome {
        Ok(e) => {
            row.dvp = Some(as_printed(e.dvp));
            row.ci_low = e.ci.map(|c| as_printed(c.0));
            row.ci_high = e.ci.map(|c| as_printed(c.1));
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every cell in parallel; rows come back sorted by config, then by
/// policy name.
pub fn run_sweep(spec: &SweepSpec, options: SweepOptions) -> Result<Vec<SweepRow>> {
    let configs = spec.configs()?;
    let mut policies = spec.policies.clone();
    policies.sort_by_key(|p| p.name());
    policies.dedup();
    let cells: Vec<(ScenarioConfig, PolicyName)> =
        configs.iter().flat_map(|c| policies.iter().map(move |p| (*c, *p))).collect();
    Ok(cells
        .par_iter()
        .map(|(c, p)| run_cell(c, *p, &spec.evaluator, options))
        .collect())
}

const HEADER: [&str; 11] = ["x1", "x2", "w", "N", "pe", "y", "policy", "dvp", "ci_low", "ci_high", "ms"];

fn opt_cell(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Writes the rows as CSV. An `error` column is appended only when some
/// cell failed.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let with_error = rows.iter().any(|r| r.error.is_some());
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    let mut header: Vec<&str> = HEADER.to_vec();
    if with_error {
        header.push("error");
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.x1.to_string(),
            r.x2.to_string(),
            r.w.to_string(),
            r.n.to_string(),
            r.pe.to_string(),
            r.y.to_string(),
            r.policy.clone(),
            opt_cell(r.dvp, fmt_prob),
            opt_cell(r.ci_low, fmt_prob),
            opt_cell(r.ci_high, fmt_prob),
            opt_cell(r.ms, fmt_ms),
        ];
        if with_error {
            rec.push(r.error.clone().unwrap_or_default());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let header = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let with_error = match cols.len() {
        11 => false,
        12 if cols[11] == "error" => true,
        _ => return Err(Error::parse(1, "unexpected sweep header")),
    };
    if cols[..11] != HEADER {
        return Err(Error::parse(1, "unexpected sweep header"));
    }

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let int = |j: usize| -> Result<u32> {
            rec[j].parse().map_err(|_| Error::parse(line, format!("bad {} {:?}", HEADER[j], &rec[j])))
        };
        let float = |j: usize| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                return Ok(None);
            }
            rec[j]
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("bad {} {:?}", HEADER[j], &rec[j])))
        };
        rows.push(SweepRow {
            x1: int(0)?,
            x2: int(1)?,
            w: int(2)?,
            n: int(3)?,
            pe: float(4)?.ok_or_else(|| Error::parse(line, "missing pe"))?,
            y: int(5)?,
            policy: rec[6].to_string(),
            dvp: float(7)?,
            ci_low: float(8)?,
            ci_high: float(9)?,
            ms: float(10)?,
            error: if with_error && !rec[11].is_empty() { Some(rec[11].to_string()) } else { None },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = "\
# deadlines against backlog
N = 4
pe = 0.2
w = 2..4
x1x2 = 1:1, 2:2
y = 1
policies = wtb-w, fifty, opt
";

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyName::ALL {
            assert_eq!(PolicyName::from_name(p.name()), Some(p));
        }
        assert_eq!(PolicyName::from_name("nope"), None);
    }

    #[test]
    fn parses_lists_ranges_and_pairs() {
        let s = SweepSpec::parse(FIG2).unwrap();
        assert_eq!(s.deadline, vec![2, 3, 4]);
        assert_eq!(s.backlogs, vec![(1, 1), (2, 2)]);
        assert_eq!(s.policies.len(), 3);
        assert_eq!(s.evaluator, Evaluator::Exact);
        assert_eq!(s.configs().unwrap().len(), 6);

        let crossed = SweepSpec::parse("N=3\npe=0.1,0.2\nw=2\nx1=0..1\nx2=0,2\npolicies=mw\n").unwrap();
        assert_eq!(crossed.backlogs, vec![(0, 0), (0, 2), (1, 0), (1, 2)]);
        assert_eq!(crossed.configs().unwrap().len(), 8);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SweepSpec::parse("N = 4\npe = 0.2\nw = x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = SweepSpec::parse("N = 4\n\npolicies = wtb-w, foo\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = SweepSpec::parse("N 4\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_policy_set_is_rejected() {
        let err = SweepSpec::parse("N=4\npe=0.2\nw=2\nx1x2=1:1\npolicies =\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
        assert!(SweepSpec::parse("N=4\npe=0.2\nw=2\nx1x2=1:1\n").is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(SweepSpec::parse("N=4\npe=1.5\nw=2\nx1x2=1:1\npolicies=mw\n").is_err());
        assert!(SweepSpec::parse("N=4\npe=0.2\nw=2\nx1x2=1:1\nx1=1\npolicies=mw\n").is_err());
    }

    #[test]
    fn rows_sorted_and_round_trip() {
        let spec = SweepSpec::parse(FIG2).unwrap();
        let rows = run_sweep(&spec, SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 18);
        let names: Vec<&str> = rows[..3].iter().map(|r| r.policy.as_str()).collect();
        assert_eq!(names, ["fifty", "opt", "wtb-w"]);
        assert!(rows.windows(2).all(|p| (p[0].x1, p[0].x2, p[0].w) <= (p[1].x1, p[1].x2, p[1].w)));
        assert!(rows.iter().all(|r| r.error.is_none() && r.ci_low.is_none()));

        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,w,N,pe,y,policy,dvp,ci_low,ci_high,ms\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn untimed_output_is_deterministic() {
        let text = "N=3\npe=0.4\nw=2..3\nx1x2=1:1\npolicies=mdp,bp,fifty\nevaluator=mc\nreps=2000\nseed=5\n";
        let spec = SweepSpec::parse(text).unwrap();
        let opts = SweepOptions { timing: false };
        let render = || {
            let mut buf = Vec::new();
            write_csv(&run_sweep(&spec, opts).unwrap(), &mut buf).unwrap();
            buf
        };
        let a = render();
        assert_eq!(a, render());
        let rows = read_csv(a.as_slice()).unwrap();
        assert!(rows.iter().all(|r| r.ci_low.unwrap() <= r.dvp.unwrap() && r.ms.is_none()));
    }

    #[test]
    fn failed_cells_get_an_error_column() {
        // N = 1 leaves no interior schedule for the relaxed solver.
        let spec = SweepSpec::parse("N=1\npe=0.2\nw=2\nx1x2=0:0\npolicies=wtb-w,mw\n").unwrap();
        let rows = run_sweep(&spec, SweepOptions { timing: false }).unwrap();
        assert_eq!(rows.len(), 2);
        let failed = rows.iter().find(|r| r.policy == "wtb-w").unwrap();
        assert!(failed.dvp.is_none() && failed.error.is_some());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",ms,error"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}
