//! Batch execution over many seeded scenarios, parameter sweeps, and the
//! around-the-change amplitude analysis. All variants inside a batch are
//! paired: they see the identical sequence of scenarios and engine seeds, so
//! per-seed differences are meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diversity::DiversityMode;
use crate::evolution::{run, EngineConfig, EngineError, GenerationStats, Scenario};

pub const DEFAULT_HEADLINE_RUNS: usize = 1000;
pub const DEFAULT_SWEEP_RUNS: usize = 100;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const DEFAULT_CI_RESAMPLES: usize = 2000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("a batch needs at least one run")]
    NoRuns,
    #[error("a batch needs at least one variant")]
    NoVariants,
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    BadCiLevel(f64),
    #[error("bootstrap needs at least one resample")]
    NoResamples,
    #[error("bootstrap needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("sweep axis has no values")]
    EmptySweep,
    #[error("this operation needs a sweep axis on the BatchSpec")]
    MissingSweepAxis,
    #[error("amplitude analysis needs a change_amount sweep axis")]
    WrongSweepAxis,
    #[error("amplitude analysis probes one generation past the change; change_generation {change_generation} + 1 must be below generations {generations}")]
    ProbeOutOfRange {
        change_generation: usize,
        generations: usize,
    },
    #[error("invalid variant '{0}': expected none, dom:<lambda>, or gen:<lambda>")]
    BadVariant(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One engine flavor under comparison: a diversity mode plus its penalty
/// weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub mode: DiversityMode,
    pub lambda: f64,
}

fn format_lambda(lambda: f64) -> String {
    if lambda == lambda.trunc() && lambda.abs() < 1e15 {
        format!("{}", lambda as i64)
    } else {
        format!("{lambda}")
    }
}

impl Variant {
    pub fn none() -> Self {
        Variant {
            mode: DiversityMode::None,
            lambda: 0.0,
        }
    }

    pub fn new(mode: DiversityMode, lambda: f64) -> Self {
        Variant { mode, lambda }
    }

    /// `none`, `dom:<lambda>`, or `gen:<lambda>`.
    pub fn label(&self) -> String {
        match self.mode {
            DiversityMode::None => "none".to_string(),
            _ => format!("{}:{}", self.mode.label(), format_lambda(self.lambda)),
        }
    }

    /// Label variant safe for file names.
    pub fn file_label(&self) -> String {
        self.label().replace(':', "_")
    }

    /// Parses the label syntax accepted on the command line.
    pub fn parse(s: &str) -> Result<Variant, ExperimentError> {
        let bad = || ExperimentError::BadVariant(s.to_string());
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Variant::none());
        }
        let (mode_str, lambda_str) = s.split_once(':').ok_or_else(bad)?;
        let mode = match mode_str.trim().to_ascii_lowercase().as_str() {
            "dom" | "domain" | "domain_distance" | "domain-distance" => {
                DiversityMode::DomainDistance
            }
            "gen" | "genealogical" => DiversityMode::Genealogical,
            _ => return Err(bad()),
        };
        let lambda: f64 = lambda_str.trim().parse().map_err(|_| bad())?;
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(bad());
        }
        Ok(Variant { mode, lambda })
    }

    /// Stamps this variant onto a base configuration.
    pub fn apply(&self, base: &EngineConfig) -> EngineConfig {
        let mut config = base.clone();
        config.mode = self.mode;
        config.lambda = self.lambda;
        config
    }
}

/// What a sweep varies, holding the grid of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    None,
    Lambda(Vec<f64>),
    TrashBits(Vec<usize>),
    ChangeAmount(Vec<usize>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::Lambda(_) => "lambda",
            SweepAxis::TrashBits(_) => "t",
            SweepAxis::ChangeAmount(_) => "amount",
        }
    }
}

/// Full description of one experiment batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub base: EngineConfig,
    pub runs: usize,
    pub master_seed: u64,
    pub variants: Vec<Variant>,
    pub sweep: SweepAxis,
    pub ci_level: f64,
    pub ci_resamples: usize,
}

impl BatchSpec {
    pub fn new(base: EngineConfig, runs: usize, master_seed: u64, variants: Vec<Variant>) -> Self {
        BatchSpec {
            base,
            runs,
            master_seed,
            variants,
            sweep: SweepAxis::None,
            ci_level: DEFAULT_CI_LEVEL,
            ci_resamples: DEFAULT_CI_RESAMPLES,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs < 1 {
            return Err(ExperimentError::NoRuns);
        }
        if self.variants.is_empty() {
            return Err(ExperimentError::NoVariants);
        }
        if !self.ci_level.is_finite() || self.ci_level <= 0.0 || self.ci_level >= 1.0 {
            return Err(ExperimentError::BadCiLevel(self.ci_level));
        }
        if self.ci_resamples < 1 {
            return Err(ExperimentError::NoResamples);
        }
        for variant in &self.variants {
            variant
                .apply(&self.base)
                .validate()
                .map_err(EngineError::from)?;
        }
        Ok(())
    }
}

/// Per-generation aggregate over the runs of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub generation: usize,
    pub mean_best_waycost: f64,
    /// Bootstrap CI bounds of mean_best_waycost.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_diversity: f64,
    pub mean_best_diversity: f64,
    pub mean_mean_waycost: f64,
    pub mean_best_fitness: f64,
}

pub const AGGREGATE_CSV_HEADER: &str = "generation,mean_best_waycost,ci_lo,ci_hi,mean_diversity,mean_best_diversity,mean_mean_waycost,mean_best_fitness";

/// Aggregated series of one variant (or one sweep value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub label: String,
    pub rows: Vec<AggregateRow>,
}

impl AggregateSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(AGGREGATE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.generation,
                r.mean_best_waycost,
                r.ci_lo,
                r.ci_hi,
                r.mean_diversity,
                r.mean_best_diversity,
                r.mean_mean_waycost,
                r.mean_best_fitness
            ));
        }
        out
    }
}

/// Everything one variant produced across a batch: the aggregate plus the
/// raw per-run series (run-major) for paired statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub aggregate: AggregateSeries,
    pub per_run: Vec<Vec<GenerationStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub runs: usize,
    pub master_seed: u64,
    pub outcomes: Vec<VariantOutcome>,
}

/// The per-run seed pairs a master seed expands to: one scenario seed and
/// one engine seed per run, drawn up front so run r's seeds never depend on
/// worker scheduling.
pub fn seed_pairs(master_seed: u64, runs: usize) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    (0..runs)
        .map(|_| (rng.random::<u64>(), rng.random::<u64>()))
        .collect()
}

/// Jump in best waycost at the environment switch.
pub fn spike(stats: &[GenerationStats], change_generation: usize) -> f64 {
    assert!(
        change_generation >= 1 && change_generation < stats.len(),
        "spike needs a row before and at the change"
    );
    stats[change_generation].best_waycost as f64 - stats[change_generation - 1].best_waycost as f64
}

/// Percentile bootstrap confidence interval of the sample mean.
/// Deterministic for a given rng state.
pub fn bootstrap_ci<R: Rng>(
    samples: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<(f64, f64), ExperimentError> {
    if samples.len() < 2 {
        return Err(ExperimentError::TooFewSamples(samples.len()));
    }
    if !level.is_finite() || level <= 0.0 || level >= 1.0 {
        return Err(ExperimentError::BadCiLevel(level));
    }
    if resamples < 1 {
        return Err(ExperimentError::NoResamples);
    }
    let n = samples.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += samples[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    // The nudge keeps the index convention at its exact-arithmetic value:
    // (1 - 0.9) / 2 * 40 lands at 1.9999999999999996 and must floor to 2.
    let lo_idx = (((alpha * resamples as f64) + 1e-9).floor() as usize).min(resamples - 1);
    let hi_idx = ((((1.0 - alpha) * resamples as f64) - 1e-9).ceil() as usize)
        .saturating_sub(1)
        .min(resamples - 1);
    Ok((means[lo_idx], means[hi_idx]))
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side has no rank variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "paired samples required");
    assert!(xs.len() >= 2, "correlation needs at least two pairs");
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Tied block spans sorted positions i..=j; everyone gets the mean
        // 1-based rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn mix_seed(master_seed: u64, salt: u64) -> u64 {
    // splitmix64 step; decorrelates the aggregation rng from run seeds.
    let mut z = master_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn aggregate(
    label: String,
    per_run: &[Vec<GenerationStats>],
    spec: &BatchSpec,
    salt: u64,
) -> Result<AggregateSeries, ExperimentError> {
    let runs = per_run.len();
    let generations = per_run[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.master_seed, salt));
    let mut rows = Vec::with_capacity(generations);
    for g in 0..generations {
        let best_waycosts: Vec<f64> = per_run.iter().map(|s| s[g].best_waycost as f64).collect();
        let mean = |f: fn(&GenerationStats) -> f64| {
            per_run.iter().map(|s| f(&s[g])).sum::<f64>() / runs as f64
        };
        let mean_best_waycost = best_waycosts.iter().sum::<f64>() / runs as f64;
        let (ci_lo, ci_hi) = if runs == 1 {
            (mean_best_waycost, mean_best_waycost)
        } else {
            bootstrap_ci(&best_waycosts, spec.ci_level, spec.ci_resamples, &mut rng)?
        };
        rows.push(AggregateRow {
            generation: g,
            mean_best_waycost,
            ci_lo,
            ci_hi,
            mean_diversity: mean(|s| s.mean_diversity),
            mean_best_diversity: mean(|s| s.best_diversity),
            mean_mean_waycost: mean(|s| s.mean_waycost),
            mean_best_fitness: mean(|s| s.best_fitness),
        });
    }
    Ok(AggregateSeries { label, rows })
}

/// Runs every variant against the same `runs` scenarios and aggregates per
/// generation. Runs execute in parallel; results are reduced in run order,
/// so the outcome is independent of worker count.
pub fn run_batch(spec: &BatchSpec) -> Result<BatchResult, ExperimentError> {
    spec.validate()?;
    let seeds = seed_pairs(spec.master_seed, spec.runs);
    let configs: Vec<EngineConfig> = spec.variants.iter().map(|v| v.apply(&spec.base)).collect();

    let per_run_all: Vec<Vec<Vec<GenerationStats>>> = seeds
        .par_iter()
        .map(|&(scenario_seed, engine_seed)| {
            let scenario = Scenario::generate(&spec.base, scenario_seed)?;
            let mut rows = Vec::with_capacity(configs.len());
            for config in &configs {
                let mut config = config.clone();
                config.seed = engine_seed;
                rows.push(run(&config, &scenario)?.stats);
            }
            Ok::<_, ExperimentError>(rows)
        })
        .collect::<Vec<Result<_, _>>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut outcomes = Vec::with_capacity(spec.variants.len());
    for (v, variant) in spec.variants.iter().enumerate() {
        let per_run: Vec<Vec<GenerationStats>> = per_run_all
            .iter()
            .map(|run_rows| run_rows[v].clone())
            .collect();
        let aggregate = aggregate(variant.label(), &per_run, spec, v as u64)?;
        outcomes.push(VariantOutcome {
            variant: *variant,
            aggregate,
            per_run,
        });
    }
    Ok(BatchResult {
        runs: spec.runs,
        master_seed: spec.master_seed,
        outcomes,
    })
}

/// One batch per sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Numeric sweep value (lambda, t, or A).
    pub value: f64,
    pub value_label: String,
    pub result: BatchResult,
}

fn apply_sweep_value(spec: &BatchSpec, axis: &SweepAxis, value: f64) -> BatchSpec {
    let mut point = spec.clone();
    match axis {
        SweepAxis::None => {}
        SweepAxis::Lambda(_) => {
            point.base.lambda = value;
            for variant in &mut point.variants {
                variant.lambda = value;
            }
        }
        SweepAxis::TrashBits(_) => point.base.trash_bits = value as usize,
        SweepAxis::ChangeAmount(_) => point.base.change_amount = value as usize,
    }
    point.sweep = SweepAxis::None;
    point
}

fn sweep_values(axis: &SweepAxis) -> Result<Vec<(f64, String)>, ExperimentError> {
    let values: Vec<(f64, String)> = match axis {
        SweepAxis::None => return Err(ExperimentError::MissingSweepAxis),
        SweepAxis::Lambda(vs) => vs.iter().map(|&v| (v, format_lambda(v))).collect(),
        SweepAxis::TrashBits(vs) | SweepAxis::ChangeAmount(vs) => {
            vs.iter().map(|&v| (v as f64, v.to_string())).collect()
        }
    };
    if values.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    Ok(values)
}

/// Runs one paired batch per sweep value, all from the same master seed, so
/// sweep points are paired with each other wherever the axis does not alter
/// scenario generation.
pub fn sweep(spec: &BatchSpec) -> Result<Vec<SweepPoint>, ExperimentError> {
    let values = sweep_values(&spec.sweep)?;
    let mut points = Vec::with_capacity(values.len());
    for (value, value_label) in values {
        let point_spec = apply_sweep_value(spec, &spec.sweep, value);
        let result = run_batch(&point_spec)?;
        points.push(SweepPoint {
            value,
            value_label,
            result,
        });
    }
    Ok(points)
}

/// Mean best waycost of one variant at one change amount, probed just
/// before, at, and just after the environment switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeCell {
    pub change_amount: usize,
    pub variant_label: String,
    pub before: f64,
    pub at: f64,
    pub after: f64,
}

impl AmplitudeCell {
    /// The spike this cell witnessed.
    pub fn spike(&self) -> f64 {
        self.at - self.before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeReport {
    pub change_generation: usize,
    pub cells: Vec<AmplitudeCell>,
}

impl AmplitudeReport {
    pub fn to_csv(&self) -> String {
        let cg = self.change_generation;
        let mut out = format!("A,variant,gen{},gen{},gen{}\n", cg - 1, cg, cg + 1);
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                cell.change_amount, cell.variant_label, cell.before, cell.at, cell.after
            ));
        }
        out
    }
}

/// Sweeps the change amount and reports each variant's mean best waycost at
/// the three generations around the switch.
pub fn amplitude_analysis(spec: &BatchSpec) -> Result<AmplitudeReport, ExperimentError> {
    let SweepAxis::ChangeAmount(_) = &spec.sweep else {
        return Err(ExperimentError::WrongSweepAxis);
    };
    let cg = spec.base.change_generation;
    if cg < 1 || cg + 1 >= spec.base.generations {
        return Err(ExperimentError::ProbeOutOfRange {
            change_generation: cg,
            generations: spec.base.generations,
        });
    }
    let points = sweep(spec)?;
    let mut cells = Vec::new();
    for point in &points {
        for outcome in &point.result.outcomes {
            let rows = &outcome.aggregate.rows;
            cells.push(AmplitudeCell {
                change_amount: point.value as usize,
                variant_label: outcome.variant.label(),
                before: rows[cg - 1].mean_best_waycost,
                at: rows[cg].mean_best_waycost,
                after: rows[cg + 1].mean_best_waycost,
            });
        }
    }
    Ok(AmplitudeReport {
        change_generation: cg,
        cells,
    })
}
