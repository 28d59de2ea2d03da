//! Command-line driver: validate instances, test feasibility, find minimal
//! horizons, solve integrally, verify flows, and benchmark the parametric
//! search strategies.
//!
//! Exit codes: 0 success / feasible, 1 negative answer (infeasible, violated,
//! validation findings), 2 input error, 3 internal invariant failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use transship_core::driver::{self, LexmaxMethod, SolveOptions};
use transship_core::generator::{random_instance, GeneratorProfile};
use transship_core::lexmax::FlowOverTime;
use transship_core::parametric::{run_search, SearchStrategy};
use transship_core::pipeline::{lift, refine};
use transship_core::time_expanded::{self, Conservation};
use transship_core::{sfm, Error, TransshipmentInstance};

#[derive(Parser)]
#[command(name = "transship", about = "Integral quickest transshipment solver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    StrongMap,
    Baseline,
}

impl From<StrategyArg> for SearchStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::StrongMap => SearchStrategy::StrongMap,
            StrategyArg::Baseline => SearchStrategy::Baseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LexmaxArg {
    Reduction,
    TimeExpanded,
}

impl From<LexmaxArg> for LexmaxMethod {
    fn from(m: LexmaxArg) -> Self {
        match m {
            LexmaxArg::Reduction => LexmaxMethod::Reduction,
            LexmaxArg::TimeExpanded => LexmaxMethod::TimeExpanded,
        }
    }
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file (JSON)
    #[arg(long)]
    instance: PathBuf,
    /// Override the instance's time horizon
    #[arg(long)]
    horizon: Option<i64>,
}

impl InstanceArgs {
    fn load(&self) -> Result<TransshipmentInstance, Error> {
        let mut inst = TransshipmentInstance::load(&self.instance)?;
        if let Some(t) = self.horizon {
            inst.horizon = Some(t);
        }
        Ok(inst)
    }

    fn load_valid(&self) -> Result<TransshipmentInstance, Error> {
        let inst = self.load()?;
        let violations = inst.validate();
        if !violations.is_empty() {
            return Err(Error::Parse(format!("invalid instance: {}", violations.join("; "))));
        }
        Ok(inst)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the instance file against the model invariants
    Validate(InstanceArgs),
    /// Decide feasibility at the given horizon
    Feasible(InstanceArgs),
    /// Find the minimal feasible horizon
    Horizon(InstanceArgs),
    /// Compute an integral transshipment
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum, default_value = "strong-map")]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value = "reduction")]
        lexmax: LexmaxArg,
        /// Emit one JSON trace record per refinement iteration on stderr
        #[arg(long)]
        trace: bool,
        /// Write the flow here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a flow file against an instance
    Verify {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Flow file (JSON)
        flow: PathBuf,
        /// Forbid storage at non-terminal nodes
        #[arg(long)]
        strict_conservation: bool,
    },
    /// Compare the parametric search strategies on random instances (CSV)
    Bench {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random instances
        #[arg(long, default_value_t = 20)]
        count: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Infeasible { .. } => ExitCode::from(1),
                Error::Internal(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Validate(args) => {
            let inst = args.load()?;
            let violations = inst.validate();
            if violations.is_empty() {
                println!("ok");
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Feasible(args) => {
            let inst = args.load_valid()?;
            inst.horizon_or_err()?;
            let (feasible, witness) = sfm::is_feasible(&inst)?;
            if feasible {
                println!("FEASIBLE");
                Ok(ExitCode::SUCCESS)
            } else {
                let names = inst.set_names(witness.expect("witness accompanies infeasibility"));
                println!("INFEASIBLE violated set {{{}}}", names.join(","));
                Ok(ExitCode::from(1))
            }
        }
        Command::Horizon(args) => {
            let inst = args.load_valid()?;
            let t = driver::minimal_horizon(&inst)?;
            println!("{t}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { instance, strategy, lexmax, trace, out } => {
            let inst = instance.load_valid()?;
            let opts = SolveOptions { strategy: strategy.into(), lexmax: lexmax.into() };
            let report = driver::solve(&inst, &opts)?;
            if trace {
                for record in &report.trace {
                    eprintln!("{}", serde_json::to_string(record).expect("records serialize"));
                }
            }
            let order: Vec<String> = report
                .order
                .sequence
                .iter()
                .map(|&t| report.final_instance.terminal_name(t).to_string())
                .collect();
            eprintln!("horizon: {}", report.horizon);
            eprintln!("tight order: {}", order.join(" < "));
            eprintln!(
                "refinement: {} iterations, {} parametric searches",
                report.trace.len(),
                report.contexts.len()
            );
            for ctx in &report.contexts {
                eprintln!(
                    "  search {}: optimum {}, {} iterations, {} SFM calls, {} MCF calls",
                    ctx.label,
                    ctx.outcome.optimum,
                    ctx.outcome.stats.iterations,
                    ctx.outcome.stats.sfm_calls,
                    ctx.outcome.stats.mcf_calls
                );
            }
            eprintln!("extraction: {} MCF calls", report.extraction_mcf_calls);
            eprintln!(
                "verification: {}",
                if report.oracle_verified { "passed" } else { "skipped (size cap)" }
            );
            let text = report.flow.to_json();
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { instance, flow, strict_conservation } => {
            let inst = instance.load_valid()?;
            let flow = FlowOverTime::load(&flow)?;
            // a flow for a different horizon or network is a usage error, not
            // a verification finding
            if let Some(expected) = inst.horizon {
                if expected != flow.horizon {
                    return Err(Error::Parse(format!(
                        "flow has horizon {} but the instance has {expected}",
                        flow.horizon
                    )));
                }
            }
            if let Some((arc, _)) =
                flow.expanded.keys().find(|(arc, _)| inst.network.arc_by_id(*arc).is_none())
            {
                return Err(Error::Parse(format!("flow references unknown arc id {arc}")));
            }
            let mode = if strict_conservation {
                Conservation::Strict
            } else {
                Conservation::HoldoverAllowed
            };
            let violations = time_expanded::verify(&flow, &inst, mode);
            if violations.is_empty() {
                println!("ok");
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Bench { seed, count, out } => {
            let csv = bench(seed, count)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Replays every parametric context the pipeline encounters under both
/// strategies and tabulates their instrumentation.
fn bench(seed: u64, count: u64) -> Result<String, Error> {
    let mut csv = String::from("seed,context,strategy,sfm_calls,mcf_calls,iterations,optimum\n");
    let profile = GeneratorProfile::default();
    for i in 0..count {
        let instance_seed = seed.wrapping_add(i);
        let inst = random_instance(instance_seed, &profile);
        let refined = refine(&lift(&inst), SearchStrategy::StrongMap)?;
        for record in &refined.contexts {
            for (name, strategy) in
                [("strong-map", SearchStrategy::StrongMap), ("baseline", SearchStrategy::Baseline)]
            {
                let outcome = if strategy == SearchStrategy::StrongMap {
                    record.outcome.clone()
                } else {
                    run_search(&record.context, strategy)?
                };
                use std::fmt::Write as _;
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    instance_seed,
                    record.label,
                    name,
                    outcome.stats.sfm_calls,
                    outcome.stats.mcf_calls,
                    outcome.stats.iterations,
                    outcome.optimum
                )
                .expect("writing to a string cannot fail");
            }
        }
    }
    Ok(csv)
}

