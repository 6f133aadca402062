use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sepkron::functional::{
    data_driven_basis, project_fixed_basis, reduce_space_time, CurvePanel, ReductionResult, Selection,
    DATA_DRIVEN_MAX_ITER, DATA_DRIVEN_TOL, DEFAULT_TAU, DEFAULT_TAU_DATA_DRIVEN,
};
use sepkron::ingest::{
    attach_coordinates, deseasonalize, ingest_long_csv, ingest_wind, read_locations, write_long_csv, LongCsvSchema,
    WindConfig, DEFAULT_DAY_GRID,
};
use sepkron::qmatrices::{self, QKind};
use sepkron::septest::{replicate_rng, run_separability_test, SepTestConfig, TestKind, TestReport, DEFAULT_MC_REPS};
use sepkron::simulate::{
    build_cov_matrix, default_layout, run_scenario, unit_grid, FieldSampler, GneitingParams, ScenarioSpec,
    DEFAULT_TIME_POINTS,
};
use sepkron::{Error, Result};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "sep-kron", version, about = "Separability tests for space-time covariances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce curves to score matrices and run the separability tests.
    Test(TestArgs),
    /// Run a simulation scenario from a JSON spec and write the rejection table.
    Scenario {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one of the Q matrices as CSV.
    Qmatrix {
        #[arg(long, value_parser = parse_qkind)]
        which: QKind,
        #[arg(long = "K")]
        k: usize,
        #[arg(long = "I", default_value_t = 1)]
        i: usize,
        #[arg(long, default_value_t = qmatrices::DEFAULT_MAX_R)]
        max_r: usize,
    },
    /// Simulate Gneiting fields at the default layout and write them in long format.
    Simulate {
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_TIME_POINTS)]
        time_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the `location,x,y` file.
        #[arg(long)]
        locations_out: Option<PathBuf>,
    },
    /// Ingest data and write it back in long format.
    Export {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Long-format CSV with columns replicate,location,time,value.
    #[arg(long, conflicts_with = "wind", required_unless_present = "wind")]
    input: Option<PathBuf>,
    /// `location,x,y` file for the long-format input.
    #[arg(long, requires = "input")]
    locations: Option<PathBuf>,
    /// Daily wind speed file (year month day, then 12 station columns).
    #[arg(long)]
    wind: Option<PathBuf>,
    /// Comma-separated station codes out of RPT,VAL,ROS,KIL,SHA,BIR,DUB,CLA,MUL,CLO,BEL,MAL;
    /// default all but ROS.
    #[arg(long, value_delimiter = ',', requires = "wind")]
    stations: Option<Vec<String>>,
    #[arg(long, default_value_t = DEFAULT_DAY_GRID)]
    day_grid: usize,
    /// Subtract calendar-group mean curves before testing.
    #[arg(long)]
    deseasonalize: bool,
    #[arg(long, default_value_t = 12)]
    period: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// 1: Fourier basis, 2: data-driven basis, 3: space-time reduction.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
    procedure: u8,
    #[arg(long, value_delimiter = ',', value_parser = parse_test, default_value = "lrt-mc,lrt,frob,wald")]
    tests: Vec<TestKind>,
    #[arg(long = "J", conflicts_with = "tau_time")]
    j: Option<usize>,
    #[arg(long = "L", conflicts_with = "tau_space")]
    l: Option<usize>,
    #[arg(long)]
    tau_time: Option<f64>,
    #[arg(long)]
    tau_space: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MC_REPS)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn parse_test(s: &str) -> std::result::Result<TestKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_qkind(s: &str) -> std::result::Result<QKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// The panel and, for long-format input, its replicate ids.
fn load_panel(a: &InputArgs) -> Result<(CurvePanel, Option<Vec<i64>>)> {
    let (panel, ids) = if let Some(path) = &a.input {
        let long = ingest_long_csv(path, &LongCsvSchema::default())?;
        let mut panel = long.panel;
        if let Some(locs) = &a.locations {
            panel = attach_coordinates(&panel, &read_locations(File::open(locs)?)?)?;
        }
        (panel, Some(long.replicate_ids))
    } else {
        let path = a.wind.as_ref().expect("clap requires --input or --wind");
        let mut cfg = WindConfig::new(path);
        if let Some(s) = &a.stations {
            cfg.stations = s.clone();
        }
        cfg.day_grid = a.day_grid;
        (ingest_wind(&cfg)?, None)
    };
    if a.deseasonalize {
        Ok((deseasonalize(&panel, a.period)?, ids))
    } else {
        Ok((panel, ids))
    }
}

fn selection(fixed: Option<usize>, tau: Option<f64>, default_tau: f64) -> Selection {
    match fixed {
        Some(n) => Selection::Fixed(n),
        None => Selection::Threshold(tau.unwrap_or(default_tau)),
    }
}

#[derive(Serialize)]
struct TestOutput {
    procedure: u8,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "J")]
    j: usize,
    #[serde(rename = "L")]
    l: Option<usize>,
    variance_explained_time: f64,
    variance_explained_space: Option<f64>,
    warnings: Vec<String>,
    reports: Vec<TestReport>,
}

fn reduce(panel: &CurvePanel, a: &TestArgs) -> Result<ReductionResult> {
    match a.procedure {
        1 => {
            if a.l.is_some() || a.tau_space.is_some() {
                return Err(Error::InvalidInput("--L/--tau-space apply to procedure 3 only".into()));
            }
            project_fixed_basis(panel, selection(a.j, a.tau_time, DEFAULT_TAU))
        }
        2 => {
            if a.l.is_some() || a.tau_space.is_some() {
                return Err(Error::InvalidInput("--L/--tau-space apply to procedure 3 only".into()));
            }
            data_driven_basis(
                panel,
                selection(a.j, a.tau_time, DEFAULT_TAU_DATA_DRIVEN),
                DATA_DRIVEN_TOL,
                DATA_DRIVEN_MAX_ITER,
            )
        }
        _ => reduce_space_time(
            panel,
            selection(a.j, a.tau_time, DEFAULT_TAU),
            selection(a.l, a.tau_space, DEFAULT_TAU),
        ),
    }
}

fn csv_field<T: ToString>(x: &Option<T>) -> String {
    x.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

fn write_reports_csv<W: Write>(w: W, reports: &[TestReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "test",
        "statistic",
        "df",
        "weights",
        "p_value",
        "K_eff",
        "I_eff",
        "mc_replicates",
        "converged",
        "iterations",
    ])?;
    for r in reports {
        let weights = r
            .weights
            .as_ref()
            .map(|ws| ws.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        w.write_record([
            r.kind.report_name().to_string(),
            r.statistic.to_string(),
            csv_field(&r.df),
            weights,
            r.p_value.to_string(),
            r.k_eff.to_string(),
            r.i_eff.to_string(),
            csv_field(&r.mc_replicates),
            r.converged.to_string(),
            r.iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_test(a: &TestArgs) -> Result<()> {
    let (panel, _) = load_panel(&a.input)?;
    let red = reduce(&panel, a)?;
    if a.tests.contains(&TestKind::LrtMonteCarlo) {
        red.require_n_gt_lj()?;
    }
    for w in &red.warnings {
        eprintln!("warning: {w}");
    }
    let mut cfg = SepTestConfig {
        mc_reps: a.mc_reps,
        seed: a.seed,
        ..SepTestConfig::default()
    };
    cfg.tail.seed = a.seed;
    let reports = run_separability_test(&red.scores, &a.tests, &cfg)?;
    let mut out = output(a.out.as_deref())?;
    match a.format {
        Format::Json => {
            let doc = TestOutput {
                procedure: a.procedure,
                n: panel.n(),
                k: panel.k(),
                j: red.j,
                l: red.l,
                variance_explained_time: red.variance_explained_time,
                variance_explained_space: red.variance_explained_space,
                warnings: red.warnings.clone(),
                reports,
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
        Format::Csv => write_reports_csv(&mut out, &reports)?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_scenario(spec: &Path, out: &Path) -> Result<()> {
    let spec: ScenarioSpec = serde_json::from_reader(io::BufReader::new(File::open(spec)?))?;
    let res = run_scenario(&spec, &SepTestConfig::default())?;
    for &(beta, n, l, j, count) in &res.failures {
        eprintln!("warning: {count} replicate(s) failed at beta={beta}, N={n}, L={l}, J={j}");
    }
    res.write_csv(io::BufWriter::new(File::create(out)?))?;
    eprintln!("{}: {} rows in {:.1}s", res.scenario, res.rows.len(), res.runtime_secs);
    Ok(())
}

fn cmd_qmatrix(which: QKind, k: usize, i: usize, max_r: usize) -> Result<()> {
    let q = qmatrices::build::<f64>(which, k, i, max_r)?;
    let mut out = io::stdout().lock();
    for r in 0..q.nrows() {
        let row: Vec<String> = q.row(r).iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn cmd_simulate(beta: f64, n: usize, time_points: usize, seed: u64, out: &Path, locs: Option<&Path>) -> Result<()> {
    let coords = default_layout();
    let times = unit_grid(time_points);
    let cov = build_cov_matrix(&GneitingParams::simulation_defaults(beta)?, &coords, &times)?;
    let sampler = FieldSampler::new(&cov, coords.len(), times)?.with_coords(coords.clone())?;
    let panel = sampler.sample(n, &mut replicate_rng(seed, 0))?;
    write_long_csv(io::BufWriter::new(File::create(out)?), &panel, None)?;
    if let Some(path) = locs {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["location", "x", "y"])?;
        for (id, c) in panel.location_ids().iter().zip(&coords) {
            w.write_record([id.clone(), c[0].to_string(), c[1].to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Test(a) => cmd_test(&a),
        Command::Scenario { spec, out } => cmd_scenario(&spec, &out),
        Command::Qmatrix { which, k, i, max_r } => cmd_qmatrix(which, k, i, max_r),
        Command::Simulate { beta, n, time_points, seed, out, locations_out } => {
            cmd_simulate(beta, n, time_points, seed, &out, locations_out.as_deref())
        }
        Command::Export { input, out } => {
            let (panel, ids) = load_panel(&input)?;
            write_long_csv(io::BufWriter::new(File::create(out)?), &panel, ids.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}
