use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use scc_core::{build_plan, place, DemandPolicy, DemandVector, SchemeIndex};
use scc_harness::{
    allocation_rows, bound_rows, labelled_path, parse_index, simulate, tradeoff_rows,
    write_allocation_csv, write_bound_csv, write_tradeoff_csv, Experiment, Grid, HarnessError,
};

#[derive(Parser)]
#[command(name = "scc", version, about = "Successive cache-channel coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment or bare network config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Memory grid `start:stop:count`.
    #[arg(long)]
    grid: Option<Grid>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    WorstCase,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// SCC and STW envelopes and the upper bound over a memory grid.
    Tradeoff(Common),
    /// Upper bound alone.
    Bound(Common),
    /// Rate against total cache budget for each weak-receiver count.
    AllocationStudy(Common),
    /// Monte Carlo run of one scheme index over the erasure channel.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scheme index `p,q`.
        #[arg(long)]
        idx: Option<String>,
        /// Channel uses per block.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Rate as a fraction of `R_(p,q)`.
        #[arg(long)]
        rate_fraction: Option<f64>,
        #[arg(long, value_enum)]
        policy: Option<Policy>,
        /// Also dump the all-distinct delivery plan as JSON lines.
        #[arg(long)]
        plan_out: Option<PathBuf>,
    },
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn tradeoff(c: &Common, exp: &Experiment) -> Result<()> {
    let grid = c.grid.or(exp.grid);
    match &exp.curves[..] {
        [] => bail!(HarnessError::MissingConfig),
        [only] => write_tradeoff_csv(&tradeoff_rows(&only.config, grid.as_ref())?, writer(c.out.as_deref())?)?,
        many => {
            let Some(out) = &c.out else {
                bail!("experiment has {} curves; pass --out to name their files", many.len());
            };
            for (n, curve) in many.iter().enumerate() {
                let label = curve.label.clone().unwrap_or_else(|| n.to_string());
                let path = labelled_path(out, &label);
                write_tradeoff_csv(&tradeoff_rows(&curve.config, grid.as_ref())?, writer(Some(&path))?)?;
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tradeoff(c) => {
            let exp = Experiment::load(&c.config)?;
            tradeoff(&c, &exp)
        }
        Command::Bound(c) => {
            let exp = Experiment::load(&c.config)?;
            let grid = c.grid.or(exp.grid);
            let rows = bound_rows(exp.primary_config()?, grid.as_ref())?;
            Ok(write_bound_csv(&rows, writer(c.out.as_deref())?)?)
        }
        Command::AllocationStudy(c) => {
            let exp = Experiment::load(&c.config)?;
            let study = exp.allocation_study.as_ref().ok_or(HarnessError::MissingStudy)?;
            let grid = c.grid.or(exp.grid);
            let rows = allocation_rows(study, grid.as_ref())?;
            Ok(write_allocation_csv(&rows, writer(c.out.as_deref())?)?)
        }
        Command::Simulate {
            common,
            idx,
            n,
            trials,
            rate_fraction,
            policy,
            plan_out,
        } => {
            let exp = Experiment::load(&common.config)?;
            let cfg = exp.primary_config()?;
            let mut spec = exp.simulate.clone();
            if let Some(s) = idx {
                spec.idx = Some(parse_index(&s)?);
            }
            spec.n = n.unwrap_or(spec.n);
            spec.trials = trials.unwrap_or(spec.trials);
            spec.rate_fraction = rate_fraction.unwrap_or(spec.rate_fraction);
            if let Some(p) = policy {
                spec.demand_policy = match p {
                    Policy::WorstCase => DemandPolicy::WorstCaseScan,
                    Policy::Uniform => DemandPolicy::UniformRandom,
                };
            }
            let seed = common.seed.unwrap_or(exp.seed);
            let report = simulate(cfg, &spec, seed)?;
            if let Some(path) = plan_out {
                let idx = SchemeIndex::new(report.idx.p(), report.idx.q(), cfg.num_weak())?;
                let (lib, _) = place(cfg, idx, seed, spec.n, report.rate)?;
                let plan = build_plan(cfg, &lib, &DemandVector::all_distinct(cfg))?;
                plan.write_jsonl(writer(Some(&path))?)?;
            }
            let mut w = writer(common.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            Ok(w.flush()?)
        }
    }
}

/// A reader such as `head` hanging up early is not a failure.
fn is_closed_pipe(e: &(dyn std::error::Error + 'static)) -> bool {
    let io = match e.downcast_ref::<HarnessError>() {
        Some(HarnessError::Io(io)) => Some(io),
        Some(HarnessError::Csv(c)) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        },
        _ => e.downcast_ref::<io::Error>(),
    };
    io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        if e.chain().any(is_closed_pipe) {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
