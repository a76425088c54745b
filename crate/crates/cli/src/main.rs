use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use ecsmr_core::reconcile::ReconcileFn;
use ecsmr_core::sim::{
    check_all, fixtures, run, CheckOptions, CheckReport, Scenario, Status, Trace, Verdict, Workload,
};

/// Simulate DAG-based eventually consistent replication and check traces.
#[derive(Debug, Parser)]
#[command(name = "ecsmr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario, then check its trace.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write the trace (JSON lines) here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Check an existing trace file.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Run the built-in three-replica NFS example under bfs and fair and
    /// print both final histories.
    Fig1,
    /// Run a scenario over many seeds in parallel and aggregate verdicts.
    Fuzz {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of seeds, starting from the scenario's own.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario JSON file, or the name of a built-in scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// bfs, fair or lifo.
    #[arg(long)]
    recon: Option<ReconcileFn>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Write the JSON report here.
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Starvation window K; 0 disables the starvation verdict.
    #[arg(long, default_value_t = CheckOptions::default().window)]
    window: usize,
}

impl ReportArgs {
    fn options(&self) -> CheckOptions {
        CheckOptions { window: self.window, ..CheckOptions::default() }
    }
}

/// Everything needed to reproduce a report.
#[derive(Debug, Serialize)]
struct EffectiveConfig<'a> {
    command: &'a str,
    source: Option<&'a str>,
    scenario: Option<&'a Scenario>,
    trace: Option<&'a Path>,
    seeds: Option<u64>,
    options: CheckOptions,
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    config: EffectiveConfig<'a>,
    report: &'a CheckReport,
}

/// Exit codes: 0 all checks pass, 1 some check failed, 2 usage or config error.
fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { scenario, trace_out, report } => cmd_run(&scenario, trace_out.as_deref(), &report),
        Command::Check { trace, report } => cmd_check(&trace, &report),
        Command::Fig1 => cmd_fig1(),
        Command::Fuzz { scenario, seeds, report } => cmd_fuzz(&scenario, seeds, &report),
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let path = Path::new(&args.scenario);
    let mut scenario = if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        fixtures::builtin(&args.scenario).with_context(|| {
            let names: Vec<_> = fixtures::names().collect();
            format!("no file {:?} and no built-in scenario of that name ({})", args.scenario, names.join(", "))
        })?
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(recon) = args.recon {
        scenario.recon = recon;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn status_word(status: Status) -> &'static str {
    match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Indeterminate => "n/a ",
    }
}

fn print_verdicts(report: &CheckReport) {
    for v in report.verdicts() {
        println!("{}  {:<22} {}", status_word(v.status), v.name, v.detail);
        for line in &v.violations {
            println!("        {line}");
        }
        if v.violation_count > v.violations.len() {
            println!("        ... {} more", v.violation_count - v.violations.len());
        }
    }
    println!("{}", if report.passed { "all checks passed" } else { "some checks FAILED" });
}

fn cmd_run(args: &ScenarioArgs, trace_out: Option<&Path>, report_args: &ReportArgs) -> Result<bool> {
    let scenario = load_scenario(args)?;
    let trace = run(&scenario)?;
    if let Some(path) = trace_out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        trace.write_jsonl(BufWriter::new(file))?;
    }
    let options = report_args.options();
    let report = check_all(&trace, options);
    println!(
        "{}: n={} recon={} seed={} events={}",
        scenario.name,
        scenario.n,
        scenario.recon,
        scenario.seed,
        trace.events.len()
    );
    print_verdicts(&report);
    if let Some(path) = &report_args.report_out {
        let config = EffectiveConfig {
            command: "run",
            source: Some(&args.scenario),
            scenario: Some(&scenario),
            trace: trace_out,
            seeds: None,
            options,
        };
        write_json(path, &RunReport { config, report: &report })?;
    }
    Ok(report.passed)
}

fn cmd_check(path: &Path, report_args: &ReportArgs) -> Result<bool> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(file))?;
    let options = report_args.options();
    let report = check_all(&trace, options);
    print_verdicts(&report);
    if let Some(out) = &report_args.report_out {
        let config = EffectiveConfig {
            command: "check",
            source: None,
            scenario: Some(trace.scenario()),
            trace: Some(path),
            seeds: None,
            options,
        };
        write_json(out, &RunReport { config, report: &report })?;
    }
    Ok(report.passed)
}

/// `o<k>` is the k-th operation listed in the scenario; the s-th one of a
/// replica becomes its command with sequence number s.
fn fig1_label(scenario: &Scenario, issuer: u32, seq: u64) -> String {
    let Workload::Explicit(ops) = &scenario.workload else {
        return String::new();
    };
    ops.iter()
        .enumerate()
        .filter(|(_, op)| op.replica.0 == issuer)
        .nth(seq as usize - 1)
        .map_or_else(String::new, |(k, _)| format!("o{}", k + 1))
}

fn cmd_fig1() -> Result<bool> {
    let mut out = io::stdout().lock();
    let mut ok = true;
    for recon in [ReconcileFn::Bfs, ReconcileFn::Fair] {
        let outcome = fixtures::run_fig1(recon);
        let scenario = outcome.trace.scenario();
        let labels: Vec<_> = outcome.history.iter().map(|(c, _)| fig1_label(scenario, c.issuer.0, c.seq)).collect();
        writeln!(out, "{recon}: [{}]", labels.join(","))?;
        for ((command, response), label) in outcome.history.iter().zip(&labels) {
            writeln!(out, "  {label} = ({}, {}, {})  -> {}", command.op, command.issuer, command.seq, response)?;
        }
        let report = check_all(&outcome.trace, CheckOptions::default());
        writeln!(out, "  replicas agree: {}", outcome.converged && report.convergence.passed())?;
        ok &= outcome.converged && report.passed;
    }
    Ok(ok)
}

#[derive(Debug, Default, Serialize)]
struct Tally {
    pass: usize,
    fail: usize,
    indeterminate: usize,
    failing_seeds: Vec<u64>,
}

#[derive(Debug, Serialize)]
struct FuzzReport<'a> {
    config: EffectiveConfig<'a>,
    runs: u64,
    passed: bool,
    verdicts: std::collections::BTreeMap<String, Tally>,
}

fn cmd_fuzz(args: &ScenarioArgs, seeds: u64, report_args: &ReportArgs) -> Result<bool> {
    let base = load_scenario(args)?;
    let options = report_args.options();
    let first = base.seed;
    let results: Vec<(u64, Vec<Verdict>)> = (first..first + seeds)
        .into_par_iter()
        .map(|seed| {
            let mut scenario = base.clone();
            scenario.seed = seed;
            let trace = run(&scenario).expect("validated scenario");
            (seed, check_all(&trace, options).verdicts().cloned().collect())
        })
        .collect();

    let mut verdicts: std::collections::BTreeMap<String, Tally> = Default::default();
    for (seed, vs) in &results {
        for v in vs {
            let tally = verdicts.entry(v.name.clone()).or_default();
            match v.status {
                Status::Pass => tally.pass += 1,
                Status::Indeterminate => tally.indeterminate += 1,
                Status::Fail => {
                    tally.fail += 1;
                    tally.failing_seeds.push(*seed);
                }
            }
        }
    }
    let passed = verdicts.values().all(|t| t.fail == 0);
    println!("{}: recon={} seeds {}..{}", base.name, base.recon, first, first + seeds);
    for (name, t) in &verdicts {
        print!("{name:<22} {}/{seeds} pass", t.pass);
        if t.indeterminate > 0 {
            print!(", {} n/a", t.indeterminate);
        }
        if t.fail > 0 {
            print!(", {} FAIL (seeds {:?})", t.fail, &t.failing_seeds[..t.failing_seeds.len().min(10)]);
        }
        println!();
    }
    if let Some(path) = &report_args.report_out {
        let config = EffectiveConfig {
            command: "fuzz",
            source: Some(&args.scenario),
            scenario: Some(&base),
            trace: None,
            seeds: Some(seeds),
            options,
        };
        write_json(path, &FuzzReport { config, runs: seeds, passed, verdicts })?;
    }
    Ok(passed)
}
