//! `dlc`: generate scenarios, run scheduling policies and write reports.
//!
//! Exit codes: 0 success, 2 bad input, 3 infeasible schedule problem,
//! 4 numerical failure (power flow or solver), 1 anything else.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dlc_core::netmodel::{load_scenario, save_scenario, Scenario};
use dlc_core::optimizer::{DlcError, DlcOptions, ObjectiveSpec};
use dlc_core::report::{run_policy, write_comparison, write_run, Policy, PolicyRun};
use dlc_core::scenario::{generate, ScenarioSpec};
use log::info;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dlc",
    version,
    about = "Direct load control scheduling on unbalanced feeders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenario file from a spec file.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed stored in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Schedule one policy and write its report bundle.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(short, long, default_value = "report")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run all three policies and write merged series and a summary table.
    Compare {
        scenario: PathBuf,
        #[arg(short, long, default_value = "comparison")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    WoDlc,
    Conventional,
    Proposed,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::WoDlc => Policy::WoDlc,
            PolicyArg::Conventional => Policy::Conventional,
            PolicyArg::Proposed => Policy::Proposed,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Outer-loop tolerance on the change of simulated squared voltage (pu²).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Cuts allowed per time slot.
    #[arg(long)]
    max_cuts: Option<usize>,
}

impl SolverArgs {
    fn options(&self) -> anyhow::Result<DlcOptions> {
        let mut o = DlcOptions::default();
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(anyhow!("--tol must be positive, got {t}"));
            }
            o.outer_tol = t;
        }
        if let Some(m) = self.max_outer {
            o.max_outer = m.max(1);
        }
        if let Some(m) = self.max_cuts {
            o.max_cuts = m;
        }
        Ok(o)
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn other(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn solver(error: DlcError) -> Failure {
    let code = match &error {
        DlcError::Infeasible { .. } => 3,
        DlcError::Build(_) => 2,
        _ => 4,
    };
    Failure {
        code,
        error: error.into(),
    }
}

fn load(path: &PathBuf) -> Result<Scenario, Failure> {
    load_scenario(path).map_err(|e| input(e.into()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { spec, seed, out } => {
            let mut s = ScenarioSpec::load(&spec).map_err(|e| input(e.into()))?;
            if let Some(seed) = seed {
                s.rng_seed = seed;
            }
            let scn = generate(&s).map_err(|e| input(e.into()))?;
            save_scenario(&scn, &out).map_err(|e| other(e.into()))?;
            info!(
                "wrote {} ({} households)",
                out.display(),
                scn.households.len()
            );
        }
        Command::Run {
            scenario,
            policy,
            out,
            solver: args,
        } => {
            let opts = args.options().map_err(input)?;
            let scn = load(&scenario)?;
            let run = run_policy(&scn, policy.into(), &ObjectiveSpec::default(), &opts)
                .map_err(solver)?;
            let s = write_run(&out, &scn, &run)
                .with_context(|| format!("cannot write report to {}", out.display()))
                .map_err(other)?;
            println!(
                "{}: LSE cost {:.4}, event peak {:.4} MVA, min voltage {:.4} kV, cap_violation={}, voltage_violation={}",
                s.policy, s.lse_cost, s.peak_event_mva, s.min_voltage_kv, s.cap_violation, s.voltage_violation
            );
        }
        Command::Compare {
            scenario,
            out,
            solver: args,
        } => {
            let opts = args.options().map_err(input)?;
            let scn = load(&scenario)?;
            let objective = ObjectiveSpec::default();
            let results: Vec<Result<PolicyRun, DlcError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = Policy::ALL
                    .into_iter()
                    .map(|p| {
                        let (scn, objective, opts) = (&scn, &objective, &opts);
                        scope.spawn(move || run_policy(scn, p, objective, opts))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("policy thread panicked"))
                    .collect()
            });
            let runs = results
                .into_iter()
                .collect::<Result<Vec<_>, _>>()
                .map_err(solver)?;
            let summaries = write_comparison(&out, &scn, &runs)
                .with_context(|| format!("cannot write report to {}", out.display()))
                .map_err(other)?;
            print!("{}", dlc_core::report::markdown(&scn, &summaries));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DLC_LOG", "warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
