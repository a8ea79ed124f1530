use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use twohop::analysis::{dvpub, exact_dvp_chain, exact_dvp_enum, wtb_min_s};
use twohop::dynamic::{value_iteration, PolicyTable};
use twohop::format::fmt_prob;
use twohop::semistatic::solve;
use twohop::sim::{simulate, SimSpec, DEFAULT_REPLICATIONS};
use twohop::sweep::{run_sweep, write_csv, PolicyName, SweepOptions, SweepSpec};
use twohop::{Error, ScenarioConfig, Schedule, SlotPolicy};

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_CELLS: u8 = 4;

#[derive(Parser)]
#[command(name = "twohop", version, about = "Delay violation analysis and slot scheduling for two-hop batches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a semi-static schedule or the MDP policy table.
    Solve {
        #[command(flatten)]
        config: ConfigArgs,
        /// wtb-r, wtb-w, wtb-d, e-wtb, e-dvpub, opt, fifty or mdp.
        #[arg(long)]
        method: String,
        /// Where to write the MDP policy table (standard output if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the DVP of a schedule, a policy file or a named policy.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Policy to solve and evaluate, including the baselines mw, wfq, bp.
        #[arg(long)]
        method: Option<String>,
        /// Policy table written by `solve --method mdp`.
        #[arg(long)]
        policy_file: Option<PathBuf>,
        /// Link-1 slots per frame, comma separated.
        #[arg(long, value_delimiter = ',')]
        n1: Option<Vec<u32>>,
        #[arg(long, value_enum, default_value_t = EvaluatorArg::Exact)]
        evaluator: EvaluatorArg,
        #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a parameter sweep file and emit CSV.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave the ms column blank so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long = "N")]
    n: Option<u32>,
    #[arg(long)]
    pe: Option<f64>,
    #[arg(long)]
    w: Option<u32>,
    #[arg(long, default_value_t = 1)]
    y: u32,
    #[arg(long, default_value_t = 0)]
    x1: u32,
    #[arg(long, default_value_t = 0)]
    x2: u32,
}

impl ConfigArgs {
    fn given(&self) -> bool {
        self.n.is_some() || self.pe.is_some() || self.w.is_some()
    }

    fn build(&self) -> Result<ScenarioConfig, Failure> {
        match (self.n, self.pe, self.w) {
            (Some(n), Some(pe), Some(w)) => Ok(ScenarioConfig::new(n, pe, w, self.y, self.x1, self.x2)?),
            _ => Err(Failure::Usage("--N, --pe and --w are required".into())),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvaluatorArg {
    /// Exact forward propagation of the queue distribution.
    Exact,
    /// Exact enumeration of all service outcomes (schedules only).
    Enum,
    /// Union bound (schedules only).
    Dvpub,
    /// Chernoff bound at the optimal exponent (schedules only).
    Wtb,
    /// Monte Carlo estimate with a 95% Wilson interval.
    Mc,
}

enum Failure {
    Usage(String),
    Lib(Error),
    Cells(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) | Error::CapExceeded { .. } | Error::MissingState { .. } => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

fn parse_policy(name: &str) -> Result<PolicyName, Failure> {
    PolicyName::from_name(name).ok_or_else(|| Failure::Usage(format!("unknown method {name:?}")))
}

fn cmd_solve(config: &ConfigArgs, method: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    let config = config.build()?;
    match parse_policy(method)? {
        PolicyName::SemiStatic(m) => {
            let r = solve(&config, m)?;
            let n1: Vec<String> = r.schedule.link1().iter().map(u32::to_string).collect();
            let (_, wtb) = wtb_min_s(&config, &r.schedule)?;
            let ub = dvpub(&config, &r.schedule)?;
            println!("n1={}", n1.join(","));
            println!("wtb={}", fmt_prob(wtb));
            println!("dvpub={}", fmt_prob(ub.dvp));
        }
        PolicyName::Mdp => {
            let table = value_iteration(&config);
            let text = table.to_text();
            match out {
                Some(path) => {
                    fs::write(path, text)?;
                    println!("policy={}", path.display());
                    println!("departures={}", fmt_prob(table.initial_value()));
                }
                None => print!("{text}"),
            }
        }
        PolicyName::Baseline(b) => {
            return Err(Failure::Usage(format!("{} is a fixed rule with nothing to solve; use eval", b.name())));
        }
    }
    Ok(())
}

enum Source {
    Schedule(Schedule),
    Dynamic(Box<dyn SlotPolicy>),
}

fn cmd_eval(
    args: &ConfigArgs,
    method: Option<&str>,
    policy_file: Option<&PathBuf>,
    n1: Option<&[u32]>,
    evaluator: EvaluatorArg,
    reps: u64,
    seed: u64,
) -> Result<(), Failure> {
    let sources = method.is_some() as u8 + policy_file.is_some() as u8 + n1.is_some() as u8;
    if sources != 1 {
        return Err(Failure::Usage("give exactly one of --method, --policy-file, --n1".into()));
    }

    let (config, source) = if let Some(path) = policy_file {
        let table = PolicyTable::from_text(&fs::read_to_string(path)?)?;
        let config = if args.given() { args.build()? } else { *table.config() };
        (config, Source::Dynamic(Box::new(table)))
    } else {
        let config = args.build()?;
        let source = if let Some(n1) = n1 {
            let s = Schedule::new(config.slots(), n1.to_vec())?;
            s.check_against(&config)?;
            Source::Schedule(s)
        } else {
            match parse_policy(method.unwrap_or_default())? {
                PolicyName::SemiStatic(m) => Source::Schedule(solve(&config, m)?.schedule),
                other => Source::Dynamic(other.build(&config)?),
            }
        };
        (config, source)
    };

    let policy: &dyn SlotPolicy = match &source {
        Source::Schedule(s) => s,
        Source::Dynamic(p) => p.as_ref(),
    };
    let schedule_only = |what: &str| match &source {
        Source::Schedule(s) => Ok(s),
        Source::Dynamic(_) => Err(Failure::Usage(format!("the {what} evaluator needs a fixed schedule"))),
    };

    if let Source::Schedule(s) = &source {
        println!("n1={}", s.link1().iter().map(u32::to_string).collect::<Vec<_>>().join(","));
    }
    match evaluator {
        EvaluatorArg::Exact => println!("dvp={}", fmt_prob(exact_dvp_chain(&config, policy)?.dvp)),
        EvaluatorArg::Enum => println!("dvp={}", fmt_prob(exact_dvp_enum(&config, schedule_only("enum")?)?.dvp)),
        EvaluatorArg::Dvpub => {
            let r = dvpub(&config, schedule_only("dvpub")?)?;
            println!("dvpub={}", fmt_prob(r.dvp));
            println!("clamped={}", fmt_prob(r.clamped()));
        }
        EvaluatorArg::Wtb => {
            let (s, v) = wtb_min_s(&config, schedule_only("wtb")?)?;
            println!("wtb={}", fmt_prob(v));
            println!("s={}", fmt_prob(s.value()));
        }
        EvaluatorArg::Mc => {
            let r = simulate(&config, policy, &SimSpec::new(reps, seed)?)?;
            println!("dvp={}", fmt_prob(r.dvp_hat));
            println!("ci_low={}", fmt_prob(r.ci_low));
            println!("ci_high={}", fmt_prob(r.ci_high));
            println!("departures={}", fmt_prob(r.mean_departures));
            println!("reps={}", r.replications);
        }
    }
    Ok(())
}

fn cmd_sweep(file: &PathBuf, out: Option<&PathBuf>, no_timing: bool) -> Result<(), Failure> {
    let spec = SweepSpec::parse(&fs::read_to_string(file)?)?;
    let rows = run_sweep(&spec, SweepOptions { timing: !no_timing })?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    match out {
        Some(path) => fs::write(path, &buf)?,
        None => io::stdout().lock().write_all(&buf)?,
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(Failure::Cells(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { config, method, out } => cmd_solve(config, method, out.as_ref()),
        Command::Eval { config, method, policy_file, n1, evaluator, reps, seed } => cmd_eval(
            config,
            method.as_deref(),
            policy_file.as_ref(),
            n1.as_deref(),
            *evaluator,
            *reps,
            *seed,
        ),
        Command::Sweep { file, out, no_timing } => cmd_sweep(file, out.as_ref(), *no_timing),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Cells(n)) => {
            eprintln!("error: {n} sweep cell(s) failed");
            ExitCode::from(EXIT_CELLS)
        }
    }
}
