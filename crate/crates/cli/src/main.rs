//! `zonal` command-line tool.
//!
//! Exit status: 0 on success, 1 on invalid input or configuration, 2 when
//! infeasibility dominates the run (the dispatch has no solution, or most
//! scenarios cannot be served).

mod settings;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use zonal::clustering::Partition;
use zonal::format::to_json_string;
use zonal::grid::{load_case, Network};
use zonal::opf::dc_opf;
use zonal::output::{write_matrix_csv, write_method_reports_csv};
use zonal::pipeline::{compare_methods, lmp_pipeline, sequential_partition, MethodResult};
use zonal::ptdf::{generalized_ptdf, ptdf_matrix};
use zonal::scenarios::{load_scenarios_csv, monte_carlo_scenarios, write_scenarios_csv, ScenarioSet};

use settings::{Format, Settings, DEFAULT_SCENARIOS, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(name = "zonal", version, about = "Price-zone delineation for electricity networks")]
struct Cli {
    /// TOML or JSON file with the same keys as the flags
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal power flow
    #[command(subcommand)]
    Opf(OpfCommand),
    /// Distribution-factor matrices
    #[command(subcommand)]
    Ptdf(PtdfCommand),
    /// Wind scenarios
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Zone delineation
    #[command(subcommand)]
    Zones(ZonesCommand),
}

#[derive(Subcommand, Debug)]
enum OpfCommand {
    /// Solve one DC OPF and print the dispatch as JSON
    Run {
        #[command(flatten)]
        settings: Settings,
        /// Ignore every branch limit
        #[arg(long)]
        no_limits: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MatrixKind {
    /// Reference-bus distribution factors
    H,
    /// Generalized (reference-free) distribution factors
    S,
}

#[derive(Subcommand, Debug)]
enum PtdfCommand {
    /// Print a distribution-factor matrix as CSV
    Dump {
        #[command(flatten)]
        settings: Settings,
        #[arg(long, value_enum, default_value = "h")]
        kind: MatrixKind,
        #[arg(long, default_value_t = 0)]
        reference: usize,
    },
}

#[derive(Subcommand, Debug)]
enum ScenarioCommand {
    /// Generate Monte Carlo wind scenarios as CSV
    Gen {
        #[command(flatten)]
        settings: Settings,
        /// Write to this file instead of standard output
        #[arg(long)]
        output: Option<std::path::PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum ZonesCommand {
    /// Consensus clustering of nodal prices
    Lmp {
        #[command(flatten)]
        settings: Settings,
    },
    /// Sequential splitting along congested lines
    Ptdf {
        #[command(flatten)]
        settings: Settings,
    },
    /// Run both methods and compare them
    Compare {
        #[command(flatten)]
        settings: Settings,
    },
}

enum Status {
    Ok,
    Infeasible,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = matches!(
                e.downcast_ref::<zonal::Error>(),
                Some(zonal::Error::AllUnservable(_) | zonal::Error::Unservable(_))
            );
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}

type Job = Box<dyn FnOnce(&Settings) -> Result<Status> + Send>;

fn run(cli: Cli) -> Result<Status> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let (settings, job): (Settings, Job) =
        match cli.command {
            Command::Opf(OpfCommand::Run { settings, no_limits }) => {
                (settings, Box::new(move |s| opf_run(s, no_limits)))
            }
            Command::Ptdf(PtdfCommand::Dump {
                settings,
                kind,
                reference,
            }) => (settings, Box::new(move |s| ptdf_dump(s, kind, reference))),
            Command::Scenario(ScenarioCommand::Gen { settings, output }) => {
                (settings, Box::new(move |s| scenario_gen(s, output.as_deref())))
            }
            Command::Zones(ZonesCommand::Lmp { settings }) => (settings, Box::new(zones_lmp)),
            Command::Zones(ZonesCommand::Ptdf { settings }) => (settings, Box::new(zones_ptdf)),
            Command::Zones(ZonesCommand::Compare { settings }) => {
                (settings, Box::new(zones_compare))
            }
        };
    let settings = settings.over(file);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = settings.threads {
        if n == 0 {
            anyhow::bail!(zonal::Error::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker threads")?;
    pool.install(|| job(&settings))
}

fn network(settings: &Settings) -> Result<Network> {
    let path = settings.case()?;
    load_case(path).with_context(|| format!("loading case {}", path.display()))
}

fn scenario_set(settings: &Settings, network: &Network) -> Result<ScenarioSet> {
    if let Some(path) = &settings.scenarios {
        return load_scenarios_csv(path, network)
            .with_context(|| format!("reading scenarios {}", path.display()));
    }
    let count = settings.gen_scenarios.unwrap_or(DEFAULT_SCENARIOS);
    let seed = settings.seed.unwrap_or(DEFAULT_SEED);
    Ok(monte_carlo_scenarios(network, count, seed, &settings.wind_params())?)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn opf_run(settings: &Settings, no_limits: bool) -> Result<Status> {
    let net = network(settings)?;
    let sol = dc_opf(&net, !no_limits, &[], &settings.tolerances())?;
    print!("{}", to_json_string(&sol)?);
    Ok(if sol.feasible {
        Status::Ok
    } else {
        Status::Infeasible
    })
}

fn ptdf_dump(settings: &Settings, kind: MatrixKind, reference: usize) -> Result<Status> {
    let net = network(settings)?;
    let h = ptdf_matrix(&net, reference)?;
    let values = match kind {
        MatrixKind::H => h.values,
        MatrixKind::S => generalized_ptdf(&h, &net)?.values,
    };
    let stdout = std::io::stdout();
    write_matrix_csv(&values, &net, stdout.lock())?;
    Ok(Status::Ok)
}

fn scenario_gen(settings: &Settings, output: Option<&Path>) -> Result<Status> {
    let net = network(settings)?;
    let set = scenario_set(settings, &net)?;
    match output {
        Some(path) => {
            let mut buf = Vec::new();
            write_scenarios_csv(&set, &net, &mut buf)?;
            fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let stdout = std::io::stdout();
            write_scenarios_csv(&set, &net, stdout.lock())?;
        }
    }
    Ok(Status::Ok)
}

/// More than half of the scenarios unservable, or the recommendation
/// unbalanceable in more than half of the rest.
fn infeasibility_dominated(result: &MethodResult) -> bool {
    let r = &result.report;
    let total = r.scenarios_evaluated + r.scenarios_excluded.len();
    let rec = r.summary_of(&result.recommended).map_or(0, |c| c.infeasible_count);
    2 * r.scenarios_excluded.len() > total || 2 * rec > r.scenarios_evaluated
}

fn write_method(
    settings: &Settings,
    dir: &Path,
    net: &Network,
    result: &MethodResult,
    json_name: &str,
    dot_name: &str,
) -> Result<()> {
    if settings.wants(Format::Json) {
        write_file(dir, json_name, to_json_string(result)?.as_bytes())?;
    }
    if settings.wants(Format::Csv) {
        let mut buf = Vec::new();
        write_method_reports_csv(&[result], &mut buf)?;
        write_file(dir, "report.csv", &buf)?;
    }
    if settings.wants(Format::Dot) {
        write_dot(dir, dot_name, net, &result.recommended, result.method.as_str())?;
    }
    Ok(())
}

fn write_dot(dir: &Path, name: &str, net: &Network, p: &Partition, title: &str) -> Result<()> {
    write_file(dir, name, p.to_dot(net, title).as_bytes())
}

fn prepare(settings: &Settings) -> Result<(Network, ScenarioSet, std::path::PathBuf)> {
    let net = network(settings)?;
    let set = scenario_set(settings, &net)?;
    let dir = settings.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok((net, set, dir))
}

fn print_summary(result: &MethodResult) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{}: k = {}, mean total {}",
        result.method.as_str(),
        result.recommended.k,
        zonal::format::fmt_num(result.recommended_total)
    )?;
    Ok(())
}

fn zones_lmp(settings: &Settings) -> Result<Status> {
    let (net, set, dir) = prepare(settings)?;
    let result = lmp_pipeline(&net, &set, &settings.pipeline()?)?;
    write_method(settings, &dir, &net, &result, "lmp_result.json", "zones_lmp.dot")?;
    print_summary(&result)?;
    Ok(status_of(&[&result]))
}

fn zones_ptdf(settings: &Settings) -> Result<Status> {
    let (net, set, dir) = prepare(settings)?;
    let result = sequential_partition(&net, &set, &settings.pipeline()?)?;
    write_method(settings, &dir, &net, &result, "ptdf_result.json", "zones_ptdf.dot")?;
    if settings.wants(Format::Csv) {
        let s = generalized_ptdf(&ptdf_matrix(&net, 0)?, &net)?;
        let mut buf = Vec::new();
        write_matrix_csv(&s.values, &net, &mut buf)?;
        write_file(&dir, "ptdf_s.csv", &buf)?;
    }
    print_summary(&result)?;
    Ok(status_of(&[&result]))
}

fn zones_compare(settings: &Settings) -> Result<Status> {
    let (net, set, dir) = prepare(settings)?;
    let cmp = compare_methods(&net, &set, &settings.pipeline()?)?;
    if settings.wants(Format::Json) {
        write_file(&dir, "comparison.json", to_json_string(&cmp)?.as_bytes())?;
    }
    if settings.wants(Format::Csv) {
        let mut buf = Vec::new();
        write_method_reports_csv(&[&cmp.lmp, &cmp.ptdf], &mut buf)?;
        write_file(&dir, "report.csv", &buf)?;
    }
    if settings.wants(Format::Dot) {
        write_dot(&dir, "zones_lmp.dot", &net, &cmp.lmp.recommended, "lmp_consensus")?;
        write_dot(&dir, "zones_ptdf.dot", &net, &cmp.ptdf.recommended, "congestion_contribution")?;
    }
    print!("{}", cmp.to_text());
    Ok(status_of(&[&cmp.lmp, &cmp.ptdf]))
}

fn status_of(results: &[&MethodResult]) -> Status {
    if results.iter().any(|r| infeasibility_dominated(r)) {
        Status::Infeasible
    } else {
        Status::Ok
    }
}
