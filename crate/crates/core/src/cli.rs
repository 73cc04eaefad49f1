//! Command-line surface: flag and config-file resolution, the experiment
//! commands, CSV emission with atomic writes, and chart rendering.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::chart::{render_line_chart, ChartError, Series};
use crate::diversity::DiversityMode;
use crate::domain::{apply_change, generate_layout, FactoryLayout};
use crate::evolution::{run, ConfigError, EngineConfig, EngineError, RunRecord, Scenario};
use crate::experiments::{
    amplitude_analysis, run_batch, sweep, AmplitudeReport, BatchSpec, ExperimentError, SweepAxis,
    Variant, DEFAULT_CI_LEVEL, DEFAULT_CI_RESAMPLES, DEFAULT_HEADLINE_RUNS, DEFAULT_SWEEP_RUNS,
};
use crate::oracle::{
    affected_fraction, enumerate_optimum, is_unexpected, plan_table, OracleError,
    DEFAULT_ENUMERATION_BUDGET, DEFAULT_EPSILON,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Budget(_) => EXIT_BUDGET,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ChartError> for CliError {
    fn from(e: ChartError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "resilient-evo",
    version,
    about = "Evolutionary online planning with diversity-aware fitness on a dynamic factory-routing benchmark"
)]
pub struct Cli {
    /// JSON config file with flat keys mirroring the flags; flags override
    /// file values.
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,

    /// Worker thread count for batch execution (numeric results never
    /// depend on it).
    #[arg(long, global = true, env = "RESILIENT_EVO_WORKERS")]
    workers: Option<usize>,

    /// Directory experiment outputs are written into (default: out).
    #[arg(long, value_name = "DIR", global = true)]
    out_dir: Option<PathBuf>,

    /// Also render SVG charts next to the CSV output.
    #[arg(long, global = true)]
    chart: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute one seeded run and write its per-generation CSV.
    Run {
        #[command(flatten)]
        engine: EngineFlags,
        /// Seed for scenario generation (default: the engine seed).
        #[arg(long)]
        scenario_seed: Option<u64>,
    },
    /// Average many runs per variant; all variants see the same scenarios.
    Batch {
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        batch: BatchFlags,
    },
    /// Run one batch per value of a swept parameter.
    Sweep {
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        batch: BatchFlags,
        /// Swept parameter: lambda, t, or amount.
        #[arg(long)]
        axis: Option<String>,
        /// Grid as start:end:step (inclusive) or a comma-separated list.
        #[arg(long)]
        values: Option<String>,
    },
    /// Probe mean best waycost around the change for several change
    /// amounts.
    Amplitude {
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        batch: BatchFlags,
        /// Comma-separated change amounts to probe.
        #[arg(long)]
        a_values: Option<String>,
    },
    /// Enumerate the plan space of a layout and its changed counterpart;
    /// report optima, affected fraction, and unexpectedness.
    Oracle {
        #[command(flatten)]
        engine: EngineFlags,
        /// Layout JSON file to analyze (default: generate from layout-seed).
        #[arg(long, value_name = "FILE")]
        layout: Option<PathBuf>,
        /// Seed for layout generation when no file is given.
        #[arg(long)]
        layout_seed: Option<u64>,
        /// Seed for the change draw (default: layout-seed + 1).
        #[arg(long)]
        change_seed: Option<u64>,
        /// Cost difference above which a route counts as affected.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Maximum number of routes the oracle may enumerate.
        #[arg(long)]
        budget: Option<u64>,
        /// Write the pre-change plan table CSV to this path.
        #[arg(long, value_name = "FILE")]
        dump_plans: Option<PathBuf>,
    },
    /// Render an SVG line chart from one or more CSV files.
    Chart {
        /// Input CSV files (repeat or comma-separate).
        #[arg(long, value_name = "FILE", value_delimiter = ',', required = true)]
        input: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
        /// Column to plot against the first column.
        #[arg(long)]
        column: Option<String>,
        /// Chart title (default: output file stem).
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Args, Debug, Default, Clone)]
struct EngineFlags {
    /// Task count (rows of the station matrix).
    #[arg(long)]
    tasks: Option<usize>,
    /// Stations per task (columns of the station matrix).
    #[arg(long)]
    stations_per_task: Option<usize>,
    /// Grid width in units.
    #[arg(long)]
    width: Option<i64>,
    /// Grid height in units.
    #[arg(long)]
    height: Option<i64>,
    /// Population size.
    #[arg(long)]
    population: Option<usize>,
    /// Generations per run.
    #[arg(long)]
    generations: Option<usize>,
    /// Generation index at which the environment switches.
    #[arg(long = "change-at")]
    change_at: Option<usize>,
    /// Stations displaced by each environment change.
    #[arg(long)]
    amount: Option<usize>,
    /// X component of the displacement offset.
    #[arg(long)]
    offset_x: Option<i64>,
    /// Y component of the displacement offset.
    #[arg(long)]
    offset_y: Option<i64>,
    /// Probability per individual of contributing a mutated copy.
    #[arg(long)]
    mutation_rate: Option<f64>,
    /// Probability per individual of mating and contributing one child.
    #[arg(long)]
    crossover_rate: Option<f64>,
    /// Probability per individual of injecting a fresh random individual.
    #[arg(long)]
    hypermutation_rate: Option<f64>,
    /// Similarity penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Trash bit count for genealogical mode.
    #[arg(long = "t")]
    trash_bits: Option<usize>,
    /// Diversity mode: none, dom (domain-distance), or gen (genealogical).
    #[arg(long)]
    mode: Option<String>,
    /// Engine seed (initialization and variation draws).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Clone)]
struct BatchFlags {
    /// Runs per batch.
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed expanded into per-run scenario and engine seeds.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Comma-separated variants: none, dom:<lambda>, gen:<lambda>.
    #[arg(long)]
    variants: Option<String>,
    /// Bootstrap confidence level.
    #[arg(long)]
    ci_level: Option<f64>,
    /// Bootstrap resample count.
    #[arg(long)]
    ci_resamples: Option<usize>,
}

/// The JSON config file: every key mirrors a flag (dashes as underscores).
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    tasks: Option<usize>,
    stations_per_task: Option<usize>,
    width: Option<i64>,
    height: Option<i64>,
    population: Option<usize>,
    generations: Option<usize>,
    change_at: Option<usize>,
    amount: Option<usize>,
    offset_x: Option<i64>,
    offset_y: Option<i64>,
    mutation_rate: Option<f64>,
    crossover_rate: Option<f64>,
    hypermutation_rate: Option<f64>,
    lambda: Option<f64>,
    t: Option<usize>,
    mode: Option<String>,
    seed: Option<u64>,
    scenario_seed: Option<u64>,
    runs: Option<usize>,
    master_seed: Option<u64>,
    variants: Option<String>,
    ci_level: Option<f64>,
    ci_resamples: Option<usize>,
    axis: Option<String>,
    values: Option<String>,
    a_values: Option<String>,
    epsilon: Option<f64>,
    budget: Option<u64>,
    out_dir: Option<String>,
    workers: Option<usize>,
    chart: Option<bool>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))
}

fn parse_mode(s: &str) -> Result<DiversityMode, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "none" => Ok(DiversityMode::None),
        "dom" | "domain" | "domain-distance" | "domain_distance" => {
            Ok(DiversityMode::DomainDistance)
        }
        "gen" | "genealogical" => Ok(DiversityMode::Genealogical),
        other => Err(CliError::Config(format!(
            "unknown mode '{other}': expected none, dom, or gen"
        ))),
    }
}

fn overlay<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Defaults, overlaid by the config file, overlaid by flags.
fn resolve_engine(flags: &EngineFlags, file: &FileConfig) -> Result<EngineConfig, CliError> {
    let mut c = EngineConfig::default();
    overlay(&mut c.tasks, file.tasks);
    overlay(&mut c.stations_per_task, file.stations_per_task);
    overlay(&mut c.width, file.width);
    overlay(&mut c.height, file.height);
    overlay(&mut c.population_size, file.population);
    overlay(&mut c.generations, file.generations);
    overlay(&mut c.change_generation, file.change_at);
    overlay(&mut c.change_amount, file.amount);
    overlay(&mut c.change_offset.x, file.offset_x);
    overlay(&mut c.change_offset.y, file.offset_y);
    overlay(&mut c.mutation_rate, file.mutation_rate);
    overlay(&mut c.crossover_rate, file.crossover_rate);
    overlay(&mut c.hypermutation_rate, file.hypermutation_rate);
    overlay(&mut c.lambda, file.lambda);
    overlay(&mut c.trash_bits, file.t);
    if let Some(mode) = &file.mode {
        c.mode = parse_mode(mode)?;
    }
    overlay(&mut c.seed, file.seed);

    overlay(&mut c.tasks, flags.tasks);
    overlay(&mut c.stations_per_task, flags.stations_per_task);
    overlay(&mut c.width, flags.width);
    overlay(&mut c.height, flags.height);
    overlay(&mut c.population_size, flags.population);
    overlay(&mut c.generations, flags.generations);
    overlay(&mut c.change_generation, flags.change_at);
    overlay(&mut c.change_amount, flags.amount);
    overlay(&mut c.change_offset.x, flags.offset_x);
    overlay(&mut c.change_offset.y, flags.offset_y);
    overlay(&mut c.mutation_rate, flags.mutation_rate);
    overlay(&mut c.crossover_rate, flags.crossover_rate);
    overlay(&mut c.hypermutation_rate, flags.hypermutation_rate);
    overlay(&mut c.lambda, flags.lambda);
    overlay(&mut c.trash_bits, flags.trash_bits);
    if let Some(mode) = &flags.mode {
        c.mode = parse_mode(mode)?;
    }
    overlay(&mut c.seed, flags.seed);

    c.validate()?;
    Ok(c)
}

fn parse_variants(s: &str) -> Result<Vec<Variant>, CliError> {
    s.split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| Variant::parse(part).map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

/// Grid syntax: `start:end:step` (inclusive of `end` when it lands on the
/// grid) or a comma-separated list.
fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let s = s.trim();
    let bad = |detail: &str| CliError::Config(format!("invalid values '{s}': {detail}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let start: f64 = parts[0].trim().parse().map_err(|_| bad("bad start"))?;
        let end: f64 = parts[1].trim().parse().map_err(|_| bad("bad end"))?;
        let step: f64 = parts[2].trim().parse().map_err(|_| bad("bad step"))?;
        if !start.is_finite() || !end.is_finite() || !step.is_finite() || step <= 0.0 {
            return Err(bad("step must be positive"));
        }
        if end < start {
            return Err(bad("end below start"));
        }
        let mut values = Vec::new();
        let mut k = 0u64;
        loop {
            let v = start + step * k as f64;
            if v > end + step * 1e-9 {
                break;
            }
            values.push(v);
            k += 1;
        }
        return Ok(values);
    }
    if parts.len() != 1 {
        return Err(bad("expected start:end:step or a comma list"));
    }
    let values: Result<Vec<f64>, _> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>())
        .collect();
    let values = values.map_err(|_| bad("non-numeric entry"))?;
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok(values)
}

fn as_counts(values: &[f64], what: &str) -> Result<Vec<usize>, CliError> {
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v == v.trunc() && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!(
                    "{what} values must be non-negative integers, got {v}"
                )))
            }
        })
        .collect()
}

fn parse_axis(axis: &str, values: &str) -> Result<SweepAxis, CliError> {
    let grid = parse_grid(values)?;
    match axis.trim().to_ascii_lowercase().as_str() {
        "lambda" => {
            if grid.iter().any(|v| *v < 0.0) {
                return Err(CliError::Config(
                    "lambda values must be non-negative".into(),
                ));
            }
            Ok(SweepAxis::Lambda(grid))
        }
        "t" | "trash_bits" | "trash-bits" => Ok(SweepAxis::TrashBits(as_counts(&grid, "t")?)),
        "amount" | "a" | "change_amount" | "change-amount" => {
            Ok(SweepAxis::ChangeAmount(as_counts(&grid, "amount")?))
        }
        other => Err(CliError::Config(format!(
            "unknown axis '{other}': expected lambda, t, or amount"
        ))),
    }
}

fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", parent.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent)
        .map_err(|e| CliError::Io(format!("creating temp file in {}: {e}", parent.display())))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("replacing {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn format_route(route: &[usize]) -> String {
    route
        .iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

struct Ctx {
    out_dir: PathBuf,
    chart: bool,
}

fn cmd_run(config: &EngineConfig, scenario_seed: u64, ctx: &Ctx) -> Result<(), CliError> {
    let scenario = Scenario::generate(config, scenario_seed)?;
    let record = run(config, &scenario)?;
    let csv_path = ctx.out_dir.join(format!("run_{}.csv", config.seed));
    write_atomic(&csv_path, &record.to_csv())?;
    if ctx.chart {
        let svg = render_line_chart(
            &format!("run seed {}", config.seed),
            "generation",
            "waycost",
            &run_series(&record),
        )?;
        write_atomic(&ctx.out_dir.join(format!("run_{}.svg", config.seed)), &svg)?;
    }
    Ok(())
}

fn run_series(record: &RunRecord) -> Vec<Series> {
    let best = record
        .stats
        .iter()
        .map(|s| (s.generation as f64, s.best_waycost as f64))
        .collect();
    let mean = record
        .stats
        .iter()
        .map(|s| (s.generation as f64, s.mean_waycost))
        .collect();
    vec![
        Series {
            label: "best_waycost".into(),
            points: best,
        },
        Series {
            label: "mean_waycost".into(),
            points: mean,
        },
    ]
}

fn resolve_batch_spec(
    config: &EngineConfig,
    batch: &BatchFlags,
    file: &FileConfig,
    default_runs: usize,
    default_variants: &str,
) -> Result<BatchSpec, CliError> {
    let runs = batch.runs.or(file.runs).unwrap_or(default_runs);
    let master_seed = batch.master_seed.or(file.master_seed).unwrap_or(42);
    let variants_text = batch
        .variants
        .clone()
        .or_else(|| file.variants.clone())
        .unwrap_or_else(|| default_variants.to_string());
    let variants = parse_variants(&variants_text)?;
    let mut spec = BatchSpec::new(config.clone(), runs, master_seed, variants);
    spec.ci_level = batch.ci_level.or(file.ci_level).unwrap_or(DEFAULT_CI_LEVEL);
    spec.ci_resamples = batch
        .ci_resamples
        .or(file.ci_resamples)
        .unwrap_or(DEFAULT_CI_RESAMPLES);
    Ok(spec)
}

fn cmd_batch(spec: &BatchSpec, ctx: &Ctx) -> Result<(), CliError> {
    let result = run_batch(spec)?;
    for outcome in &result.outcomes {
        let path = ctx
            .out_dir
            .join(format!("batch_{}.csv", outcome.variant.file_label()));
        write_atomic(&path, &outcome.aggregate.to_csv())?;
    }
    let cg = spec.base.change_generation;
    if cg >= 1 {
        for outcome in &result.outcomes {
            let rows = &outcome.aggregate.rows;
            println!(
                "spike {}: {:.3}",
                outcome.variant.label(),
                rows[cg].mean_best_waycost - rows[cg - 1].mean_best_waycost
            );
        }
    }
    if ctx.chart {
        let waycost_series: Vec<Series> = result
            .outcomes
            .iter()
            .map(|o| Series {
                label: o.variant.label(),
                points: o
                    .aggregate
                    .rows
                    .iter()
                    .map(|r| (r.generation as f64, r.mean_best_waycost))
                    .collect(),
            })
            .collect();
        let svg = render_line_chart(
            &format!("mean best waycost over {} runs", result.runs),
            "generation",
            "mean best waycost",
            &waycost_series,
        )?;
        write_atomic(&ctx.out_dir.join("batch.svg"), &svg)?;

        let diversity_series: Vec<Series> = result
            .outcomes
            .iter()
            .map(|o| Series {
                label: o.variant.label(),
                points: o
                    .aggregate
                    .rows
                    .iter()
                    .map(|r| (r.generation as f64, r.mean_diversity))
                    .collect(),
            })
            .collect();
        let svg = render_line_chart(
            &format!("mean population diversity over {} runs", result.runs),
            "generation",
            "mean diversity",
            &diversity_series,
        )?;
        write_atomic(&ctx.out_dir.join("batch_diversity.svg"), &svg)?;
    }
    Ok(())
}

fn cmd_sweep(spec: &BatchSpec, ctx: &Ctx) -> Result<(), CliError> {
    let axis_name = spec.sweep.name();
    let points = sweep(spec)?;
    let single_variant = spec.variants.len() == 1;
    let mut chart_series = Vec::new();
    for point in &points {
        for outcome in &point.result.outcomes {
            let file_name = if single_variant {
                format!("sweep_{axis_name}_{}.csv", point.value_label)
            } else {
                format!(
                    "sweep_{axis_name}_{}_{}.csv",
                    point.value_label,
                    outcome.variant.file_label()
                )
            };
            write_atomic(&ctx.out_dir.join(file_name), &outcome.aggregate.to_csv())?;
            let label = if single_variant {
                format!("{axis_name}={}", point.value_label)
            } else {
                format!(
                    "{} {axis_name}={}",
                    outcome.variant.label(),
                    point.value_label
                )
            };
            chart_series.push(Series {
                label,
                points: outcome
                    .aggregate
                    .rows
                    .iter()
                    .map(|r| (r.generation as f64, r.mean_best_waycost))
                    .collect(),
            });
        }
    }
    if ctx.chart {
        let svg = render_line_chart(
            &format!("mean best waycost per {axis_name}"),
            "generation",
            "mean best waycost",
            &chart_series,
        )?;
        write_atomic(&ctx.out_dir.join(format!("sweep_{axis_name}.svg")), &svg)?;
    }
    Ok(())
}

fn cmd_amplitude(spec: &BatchSpec, ctx: &Ctx) -> Result<(), CliError> {
    let report = amplitude_analysis(spec)?;
    write_atomic(&ctx.out_dir.join("amplitude.csv"), &report.to_csv())?;
    if ctx.chart {
        let svg = render_line_chart(
            "best-waycost spike at the change",
            "change amount",
            "mean spike",
            &amplitude_series(&report),
        )?;
        write_atomic(&ctx.out_dir.join("amplitude.svg"), &svg)?;
    }
    Ok(())
}

fn amplitude_series(report: &AmplitudeReport) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for cell in &report.cells {
        let point = (cell.change_amount as f64, cell.spike());
        match series.iter_mut().find(|s| s.label == cell.variant_label) {
            Some(s) => s.points.push(point),
            None => series.push(Series {
                label: cell.variant_label.clone(),
                points: vec![point],
            }),
        }
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    series
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    config: &EngineConfig,
    layout: Option<&Path>,
    layout_seed: u64,
    change_seed: u64,
    epsilon: f64,
    budget: u64,
    dump_plans: Option<&Path>,
) -> Result<(), CliError> {
    let before = match layout {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
            FactoryLayout::from_json(&text)
                .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))?
        }
        None => generate_layout(
            config.tasks,
            config.stations_per_task,
            config.width,
            config.height,
            &mut ChaCha8Rng::seed_from_u64(layout_seed),
        )
        .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let (after, record) = apply_change(
        &before,
        config.change_amount,
        config.change_offset,
        &mut ChaCha8Rng::seed_from_u64(change_seed),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let routes = (before.stations_per_task() as u128).saturating_pow(before.tasks() as u32);
    let (opt_before, cost_before) = enumerate_optimum(&before, budget)?;
    let (opt_after, cost_after) = enumerate_optimum(&after, budget)?;
    let fraction = affected_fraction(&before, &after, epsilon, budget)?;
    let unexpected = is_unexpected(&before, &after, budget)?;

    println!("routes: {routes}");
    println!(
        "moved stations: {}",
        record
            .moved
            .iter()
            .map(|(t, s)| format!("({t},{s})"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!(
        "optimum before: {} (waycost {})",
        format_route(&opt_before),
        cost_before
    );
    println!(
        "optimum after: {} (waycost {})",
        format_route(&opt_after),
        cost_after
    );
    println!("affected fraction (epsilon {epsilon}): {fraction:.6}");
    println!("unexpected: {unexpected}");

    if let Some(path) = dump_plans {
        let table = plan_table(&before, budget)?;
        write_atomic(path, &table.to_csv())?;
    }
    Ok(())
}

fn read_series_from_csv(path: &Path, column: &str) -> Result<Series, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').collect();
    let y_idx = columns.iter().position(|c| *c == column).ok_or_else(|| {
        CliError::Config(format!(
            "{}: no column '{column}' (available: {})",
            path.display(),
            columns.join(", ")
        ))
    })?;
    let mut points = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(CliError::Config(format!(
                "{}: line {}: expected {} fields, got {}",
                path.display(),
                i + 1,
                columns.len(),
                fields.len()
            )));
        }
        let parse = |text: &str, what: &str| {
            text.trim().parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "{}: line {}: {what} value '{text}' is not numeric",
                    path.display(),
                    i + 1
                ))
            })
        };
        points.push((parse(fields[0], columns[0])?, parse(fields[y_idx], column)?));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Series { label, points })
}

fn cmd_chart(
    inputs: &[PathBuf],
    output: &Path,
    column: &str,
    title: Option<&str>,
) -> Result<(), CliError> {
    let series = inputs
        .iter()
        .map(|p| read_series_from_csv(p, column))
        .collect::<Result<Vec<_>, _>>()?;
    let default_title = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "chart".to_string());
    let x_label = "generation";
    let svg = render_line_chart(title.unwrap_or(&default_title), x_label, column, &series)?;
    write_atomic(output, &svg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = load_file_config(cli.config.as_deref())?;
    if let Some(workers) = cli.workers.or(file.workers) {
        // Only the first global-pool initialization can win; later calls
        // (e.g. within one test process) keep the existing pool, which
        // never changes numeric results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let ctx = Ctx {
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out")),
        chart: cli.chart || file.chart.unwrap_or(false),
    };

    match &cli.command {
        Command::Run {
            engine,
            scenario_seed,
        } => {
            let config = resolve_engine(engine, &file)?;
            let scenario_seed = scenario_seed.or(file.scenario_seed).unwrap_or(config.seed);
            cmd_run(&config, scenario_seed, &ctx)
        }
        Command::Batch { engine, batch } => {
            let config = resolve_engine(engine, &file)?;
            let spec = resolve_batch_spec(
                &config,
                batch,
                &file,
                DEFAULT_HEADLINE_RUNS,
                "none,dom:1500,gen:2500",
            )?;
            cmd_batch(&spec, &ctx)
        }
        Command::Sweep {
            engine,
            batch,
            axis,
            values,
        } => {
            let config = resolve_engine(engine, &file)?;
            let axis_name = axis
                .clone()
                .or_else(|| file.axis.clone())
                .ok_or_else(|| CliError::Config("sweep needs --axis".into()))?;
            let values_text = values
                .clone()
                .or_else(|| file.values.clone())
                .ok_or_else(|| CliError::Config("sweep needs --values".into()))?;
            let default_variant = Variant::new(config.mode, config.lambda).label();
            let mut spec =
                resolve_batch_spec(&config, batch, &file, DEFAULT_SWEEP_RUNS, &default_variant)?;
            spec.sweep = parse_axis(&axis_name, &values_text)?;
            cmd_sweep(&spec, &ctx)
        }
        Command::Amplitude {
            engine,
            batch,
            a_values,
        } => {
            let config = resolve_engine(engine, &file)?;
            let values_text = a_values
                .clone()
                .or_else(|| file.a_values.clone())
                .unwrap_or_else(|| "0,1,2,4,8,12,16,20".to_string());
            let mut spec = resolve_batch_spec(
                &config,
                batch,
                &file,
                DEFAULT_SWEEP_RUNS,
                "none,dom:1500,gen:2500",
            )?;
            spec.sweep = SweepAxis::ChangeAmount(as_counts(&parse_grid(&values_text)?, "amount")?);
            cmd_amplitude(&spec, &ctx)
        }
        Command::Oracle {
            engine,
            layout,
            layout_seed,
            change_seed,
            epsilon,
            budget,
            dump_plans,
        } => {
            let config = resolve_engine(engine, &file)?;
            let layout_seed = layout_seed.unwrap_or(0);
            cmd_oracle(
                &config,
                layout.as_deref(),
                layout_seed,
                change_seed.unwrap_or(layout_seed.wrapping_add(1)),
                epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
                budget.or(file.budget).unwrap_or(DEFAULT_ENUMERATION_BUDGET),
                dump_plans.as_deref(),
            )
        }
        Command::Chart {
            input,
            output,
            column,
            title,
        } => cmd_chart(
            input,
            output,
            column.as_deref().unwrap_or("mean_best_waycost"),
            title.as_deref(),
        ),
    }
}

/// Entry point behind `main`: parses arguments, runs the command, and maps
/// errors onto the documented exit codes (2 config, 3 budget refusal,
/// 4 I/O).
pub fn run_cli() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; clap prints them to
            // the right stream and they exit 0.
            let is_usage_error = e.use_stderr();
            let _ = e.print();
            return if is_usage_error {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
