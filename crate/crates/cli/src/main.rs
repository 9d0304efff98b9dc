use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use mmp_core::explore::{explore, ExploreConfig};
use mmp_core::lang::{parse_module, validate_module, Module};
use mmp_core::races::{find_races, prefix_for_reversal, render_races};
use mmp_core::runtime::{render_sequence_diagram, run, Policy, RunConfig, RunResult, RunStatus, DEFAULT_MAX_STEPS};
use mmp_core::tracemodel::{check_well_formed_trace, parse_actions, render_actions, ActionBook};

const EXIT_DIVERGENCE: u8 = 1;
const EXIT_DEADLOCK: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_USAGE: u8 = 4;
const EXIT_STEP_LIMIT: u8 = 5;
const EXIT_INCOMPLETE: u8 = 6;

#[derive(Parser)]
#[command(name = "mmp", version, about = "Record, replay and explore message-passing programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum PolicyArg {
    RoundRobin,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a program
    Check { file: PathBuf },
    /// Run a program from scratch and record its trace
    Run {
        file: PathBuf,
        /// Entry function as name/arity; the arity must be 0
        #[arg(long, default_value = "main/0")]
        entry: String,
        #[arg(long, value_enum, default_value = "round_robin")]
        policy: PolicyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
    },
    /// Run a program under a full or partial log
    Replay {
        file: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: u64,
    },
    /// List the message races of a trace
    Races { trace: PathBuf },
    /// Print the log that reverses the K-th race of a trace
    Prefix {
        trace: PathBuf,
        /// 1-based index into the output of `races`
        #[arg(long)]
        race: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate behaviours by iterated race reversal
    Explore {
        file: PathBuf,
        #[arg(long, default_value_t = 1000)]
        max_runs: usize,
        #[arg(long, default_value_t = 64)]
        max_depth: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render a trace as a text sequence diagram
    Diagram { trace: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("mmp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Check { file } => {
            load_module(&file)?;
            println!("{}: ok", file.display());
            Ok(0)
        }
        Command::Run { file, entry, policy, seed, trace_out, max_steps } => {
            let module = load_module(&file)?;
            let entry = parse_entry(&entry)?;
            let policy = match policy {
                PolicyArg::RoundRobin => Policy::RoundRobin,
                PolicyArg::Random => Policy::Random(seed),
            };
            let cfg = RunConfig { entry, policy, max_steps: positive(max_steps)?, ..RunConfig::default() };
            execute(&module, &cfg, trace_out.as_deref())
        }
        Command::Replay { file, log, trace_out, max_steps } => {
            let module = load_module(&file)?;
            let input_log = load_actions(&log)?;
            let cfg = RunConfig { input_log, max_steps: positive(max_steps)?, ..RunConfig::default() };
            execute(&module, &cfg, trace_out.as_deref())
        }
        Command::Races { trace } => {
            let t = load_trace(&trace)?;
            let races = find_races(&t).map_err(|e| Failure::input(e.to_string()))?;
            print!("{}", render_races(&races));
            Ok(0)
        }
        Command::Prefix { trace, race, out } => {
            let t = load_trace(&trace)?;
            let races = find_races(&t).map_err(|e| Failure::input(e.to_string()))?;
            if race == 0 || race > races.len() {
                return Err(Failure::usage(format!(
                    "--race {race} is out of range: the trace has {} race(s)",
                    races.len()
                )));
            }
            let prefix = prefix_for_reversal(&t, &races[race - 1]).map_err(|e| Failure::input(e.to_string()))?;
            emit(&render_actions(&prefix), out.as_deref())?;
            Ok(0)
        }
        Command::Explore { file, max_runs, max_depth, out_dir } => {
            let module = load_module(&file)?;
            if max_runs == 0 {
                return Err(Failure::usage("--max-runs must be at least 1"));
            }
            let cfg = ExploreConfig { max_runs, max_depth, ..ExploreConfig::default() };
            let report = explore(&module, &cfg).map_err(|e| Failure::input(e.to_string()))?;
            if let Some(dir) = out_dir {
                report
                    .write_to(&dir)
                    .map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
            }
            print!("{}", report.summary());
            Ok(0)
        }
        Command::Diagram { trace } => {
            let t = load_trace(&trace)?;
            let text = render_sequence_diagram(&t).map_err(|e| Failure::input(e.to_string()))?;
            print!("{text}");
            Ok(0)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_module(path: &Path) -> Result<Module, Failure> {
    let src = read(path)?;
    let module = parse_module(&src).map_err(|e| Failure::input(format!("{}:{e}", path.display())))?;
    let diags = validate_module(&module);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| format!("{}: {d}", path.display())).collect();
        return Err(Failure::input(lines.join("\n")));
    }
    Ok(module)
}

fn load_actions(path: &Path) -> Result<ActionBook, Failure> {
    parse_actions(&read(path)?).map_err(|e| Failure::input(format!("{}:{e}", path.display())))
}

fn load_trace(path: &Path) -> Result<ActionBook, Failure> {
    let t = load_actions(path)?;
    check_well_formed_trace(&t).map_err(|ds| {
        let lines: Vec<String> = ds.iter().map(|d| format!("{}: {d}", path.display())).collect();
        Failure::input(lines.join("\n"))
    })?;
    Ok(t)
}

fn parse_entry(text: &str) -> Result<String, Failure> {
    let (name, arity) = text
        .split_once('/')
        .ok_or_else(|| Failure::usage(format!("--entry {text}: expected name/arity")))?;
    match arity.parse::<usize>() {
        Ok(0) if !name.is_empty() => Ok(name.to_string()),
        Ok(_) => Err(Failure::usage(format!("--entry {text}: the entry function must take no arguments"))),
        Err(_) => Err(Failure::usage(format!("--entry {text}: bad arity"))),
    }
}

fn positive(max_steps: u64) -> Result<u64, Failure> {
    if max_steps == 0 {
        return Err(Failure::usage("--max-steps must be positive"));
    }
    Ok(max_steps)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(module: &Module, cfg: &RunConfig, trace_out: Option<&Path>) -> Outcome {
    let result = run(module, cfg).map_err(|e| Failure::input(e.to_string()))?;
    emit(&render_actions(&result.trace), trace_out)?;
    report(&result);
    Ok(match result.status {
        RunStatus::Completed => 0,
        RunStatus::Divergence(_) => EXIT_DIVERGENCE,
        RunStatus::Deadlock { .. } => EXIT_DEADLOCK,
        RunStatus::StepLimit => EXIT_STEP_LIMIT,
        RunStatus::IncompleteReplay(_) => EXIT_INCOMPLETE,
    })
}

fn report(result: &RunResult) {
    eprintln!("status: {}", result.status);
    for line in result.outcome_table().lines() {
        eprintln!("  {line}");
    }
}
