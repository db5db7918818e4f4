//! Monte-Carlo runner: one cell, or whole named suites.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rla_core::sim::harness::NULL_MEAN;
use rla_core::sim::tables::{DEFAULT_SEED, TABLE_NAMES};
use rla_core::sim::{generate_table, run_cell, Condition, CostRule, ExperimentSpec, PopulationSpec, TableOptions};
use rla_core::{ComparatorSpec, Sampling, TestConfig};

#[derive(Parser)]
#[command(name = "sim", about = "Simulate sequential audit tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one method on one population and print a CSV row.
    Cell(CellArgs),
    /// Generate named suites (t1..t7, or `all`) as CSV files.
    Tables(TablesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Pop {
    Binary,
    Blanks,
    Compmix,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Wr,
    Wor,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cost {
    Observed,
    Recount,
}

#[derive(clap::Args)]
struct CellArgs {
    /// alpha, fixed, from_lambda, apriori_kelly, sq_kelly, sprt, kaplan_wald, kaplan_kolmogorov
    #[arg(long)]
    method: String,
    /// e.g. `eta=0.6,d=100`
    #[arg(long, default_value = "")]
    params: String,
    #[arg(long, value_enum)]
    pop: Pop,
    /// Share of ones among valid cards (binary, blanks).
    #[arg(long)]
    theta: Option<f64>,
    /// Share of blank cards (blanks).
    #[arg(long)]
    blanks: Option<f64>,
    /// Mass at one (compmix).
    #[arg(long)]
    mass1: Option<f64>,
    /// Population size.
    #[arg(long = "N", visible_alias = "n")]
    n: u64,
    #[arg(long, value_enum, default_value = "wor")]
    mode: Mode,
    /// Maximum draws per replication. Required with replacement.
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long, value_enum, default_value = "observed")]
    cost: Cost,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    reps: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TablesArgs {
    #[arg(required = true)]
    names: Vec<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Full-scale populations, replication counts and caps. Slow.
    #[arg(long)]
    full: bool,
}

fn population(args: &CellArgs) -> Result<PopulationSpec> {
    let need = |v: Option<f64>, flag: &str| v.with_context(|| format!("--{flag} is required for this population"));
    Ok(match args.pop {
        Pop::Binary => PopulationSpec::binary(need(args.theta, "theta")?, args.n),
        Pop::Blanks => PopulationSpec::blanks(need(args.theta, "theta")?, need(args.blanks, "blanks")?, args.n),
        Pop::Compmix => PopulationSpec::comparison_mix(need(args.mass1, "mass1")?, args.n),
    })
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cell(args: CellArgs) -> Result<()> {
    let config = TestConfig::with_replacement(args.alpha, 1.0, NULL_MEAN);
    let method = ComparatorSpec::from_name_params(&args.method, &args.params, &config)?;
    let condition = Condition {
        population: population(&args)?,
        sampling: match args.mode {
            Mode::Wr => Sampling::WithReplacement,
            Mode::Wor => Sampling::WithoutReplacement,
        },
        cap: args.cap,
        cost: match args.cost {
            Cost::Observed => CostRule::Observed,
            Cost::Recount => CostRule::RecountAddIn,
        },
    };
    let spec = ExperimentSpec { method, condition, reps: args.reps, seed: args.seed, alpha: args.alpha };
    let row = run_cell(&spec)?;
    let mut out = output(args.out.as_ref())?;
    rla_core::sim::harness::write_csv(std::slice::from_ref(&row), &mut out)?;
    out.flush()?;
    Ok(())
}

fn tables(args: TablesArgs) -> Result<()> {
    let names: Vec<String> = if args.names.iter().any(|n| n == "all") {
        TABLE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.names
    };
    for name in &names {
        if !TABLE_NAMES.contains(&name.as_str()) {
            bail!("unknown table {name:?}; expected one of {}", TABLE_NAMES.join(", "));
        }
    }
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let opts = TableOptions { reps: args.reps, cap: args.cap, seed: args.seed, alpha: args.alpha, full: args.full };
    for name in &names {
        let table = generate_table(name, &opts)?;
        let path = args.out_dir.join(format!("{name}.csv"));
        let mut out = output(Some(&path))?;
        table.write_csv(&mut out)?;
        out.flush()?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Cell(args) => cell(args),
        Command::Tables(args) => tables(args),
    }
}
