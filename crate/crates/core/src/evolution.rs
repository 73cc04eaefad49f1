//! Generational evolutionary engine: genome with optional trash bits,
//! variation operators, combined fitness evaluation, and the online-planning
//! loop that swaps the environment mid-run without telling the engine.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diversity::{diversity, normalized_similarity, DiversityError, DiversityMode};
use crate::domain::{
    apply_change, generate_layout, waycost, ChangeRecord, Coord, DomainError, FactoryLayout,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("population_size must be at least 2, got {0}")]
    PopulationTooSmall(usize),
    #[error("generations must be at least 1")]
    NoGenerations,
    #[error("change_generation {change_generation} must be less than generations {generations}")]
    ChangeGenerationOutOfRange {
        change_generation: usize,
        generations: usize,
    },
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("genealogical mode needs at least one trash bit")]
    TrashBitsRequired,
    #[error("layout dimensions must all be at least 1 (tasks={tasks}, stations_per_task={stations_per_task}, width={width}, height={height})")]
    InvalidDimensions {
        tasks: usize,
        stations_per_task: usize,
        width: i64,
        height: i64,
    },
    #[error("change_amount {amount} exceeds station count {stations}")]
    ChangeAmountTooLarge { amount: usize, stations: usize },
    #[error("change_offset components must be non-negative, got ({x}, {y})")]
    NegativeChangeOffset { x: i64, y: i64 },
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Diversity(#[from] DiversityError),
}

/// One candidate plan: a station choice per task plus, in genealogical mode,
/// a block of cost-neutral trash bits. Score caches are only meaningful
/// right after an [`evaluate`] call over the population they were computed
/// in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub route: Vec<usize>,
    pub trash: Vec<bool>,
    pub waycost: i64,
    pub fitness: f64,
}

impl Individual {
    pub fn new(route: Vec<usize>, trash: Vec<bool>) -> Self {
        Individual {
            route,
            trash,
            waycost: 0,
            fitness: 0.0,
        }
    }
}

pub type Population = Vec<Individual>;

/// Full parameterization of one engine run, environment geometry included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub tasks: usize,
    pub stations_per_task: usize,
    pub width: i64,
    pub height: i64,
    pub population_size: usize,
    pub generations: usize,
    /// First generation evaluated against the second environment.
    pub change_generation: usize,
    /// Stations displaced by each environment change.
    pub change_amount: usize,
    pub change_offset: Coord,
    /// Probability per individual of contributing a mutated copy.
    pub mutation_rate: f64,
    /// Probability per individual of mating and contributing one child.
    pub crossover_rate: f64,
    /// Probability per individual of injecting a fresh random individual.
    pub hypermutation_rate: f64,
    /// Weight of the similarity penalty in combined fitness.
    pub lambda: f64,
    /// Trash bit count; materialized only in genealogical mode.
    pub trash_bits: usize,
    pub mode: DiversityMode,
    /// Seed of the engine's random stream (init and variation draws).
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            tasks: 5,
            stations_per_task: 5,
            width: 500,
            height: 500,
            population_size: 50,
            generations: 100,
            change_generation: 50,
            change_amount: 3,
            change_offset: Coord::new(2500, 2500),
            mutation_rate: 0.1,
            crossover_rate: 0.3,
            hypermutation_rate: 0.1,
            lambda: 0.0,
            trash_bits: 16,
            mode: DiversityMode::None,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tasks < 1 || self.stations_per_task < 1 || self.width < 1 || self.height < 1 {
            return Err(ConfigError::InvalidDimensions {
                tasks: self.tasks,
                stations_per_task: self.stations_per_task,
                width: self.width,
                height: self.height,
            });
        }
        for (name, value) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
            ("hypermutation_rate", self.hypermutation_rate),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::RateOutOfRange { name, value });
            }
        }
        if self.population_size < 2 {
            return Err(ConfigError::PopulationTooSmall(self.population_size));
        }
        if self.generations < 1 {
            return Err(ConfigError::NoGenerations);
        }
        if self.change_generation >= self.generations {
            return Err(ConfigError::ChangeGenerationOutOfRange {
                change_generation: self.change_generation,
                generations: self.generations,
            });
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(ConfigError::InvalidLambda(self.lambda));
        }
        if self.mode == DiversityMode::Genealogical && self.trash_bits == 0 {
            return Err(ConfigError::TrashBitsRequired);
        }
        let stations = self.tasks * self.stations_per_task;
        if self.change_amount > stations {
            return Err(ConfigError::ChangeAmountTooLarge {
                amount: self.change_amount,
                stations,
            });
        }
        if self.change_offset.x < 0 || self.change_offset.y < 0 {
            return Err(ConfigError::NegativeChangeOffset {
                x: self.change_offset.x,
                y: self.change_offset.y,
            });
        }
        Ok(())
    }

    /// Trash bits are carried only where they matter; elsewhere the block is
    /// empty rather than inert dead weight.
    pub fn effective_trash_bits(&self) -> usize {
        if self.mode == DiversityMode::Genealogical {
            self.trash_bits
        } else {
            0
        }
    }

    /// Diversity mode used for reporting: populations without a similarity
    /// penalty are still observed through route-gene diversity.
    pub fn observation_mode(&self) -> DiversityMode {
        if self.mode == DiversityMode::None {
            DiversityMode::DomainDistance
        } else {
            self.mode
        }
    }
}

/// Per-generation summary of the surviving population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Minimum waycost over the population.
    pub best_waycost: i64,
    pub mean_waycost: f64,
    /// Diversity of the member with the best combined fitness.
    pub best_diversity: f64,
    pub mean_diversity: f64,
    /// Best (lowest) combined fitness in the population.
    pub best_fitness: f64,
}

pub const RUN_CSV_HEADER: &str =
    "generation,best_waycost,mean_waycost,best_diversity,mean_diversity,best_fitness";

/// Everything one seeded run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: EngineConfig,
    pub change_f1: ChangeRecord,
    pub change_f2: ChangeRecord,
    pub stats: Vec<GenerationStats>,
}

impl RunRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RUN_CSV_HEADER);
        out.push('\n');
        for s in &self.stats {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                s.generation,
                s.best_waycost,
                s.mean_waycost,
                s.best_diversity,
                s.mean_diversity,
                s.best_fitness
            ));
        }
        out
    }
}

/// The pair of environments a run is exposed to. Both are independent
/// displacements of the same base layout, so the second change is not an
/// increment of the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub base: FactoryLayout,
    pub f1: FactoryLayout,
    pub f2: FactoryLayout,
    pub change_f1: ChangeRecord,
    pub change_f2: ChangeRecord,
}

impl Scenario {
    /// Draw order: base layout, then the F1 change, then the F2 change, all
    /// from one stream seeded with `scenario_seed`.
    pub fn generate(config: &EngineConfig, scenario_seed: u64) -> Result<Self, EngineError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed);
        let base = generate_layout(
            config.tasks,
            config.stations_per_task,
            config.width,
            config.height,
            &mut rng,
        )?;
        let (f1, change_f1) =
            apply_change(&base, config.change_amount, config.change_offset, &mut rng)?;
        let (f2, change_f2) =
            apply_change(&base, config.change_amount, config.change_offset, &mut rng)?;
        Ok(Scenario {
            base,
            f1,
            f2,
            change_f1,
            change_f2,
        })
    }
}

fn random_individual<R: Rng>(config: &EngineConfig, rng: &mut R) -> Individual {
    let route = (0..config.tasks)
        .map(|_| rng.random_range(0..config.stations_per_task))
        .collect();
    let trash = (0..config.effective_trash_bits())
        .map(|_| rng.random_bool(0.5))
        .collect();
    Individual::new(route, trash)
}

/// Fresh uniform population. Draw order per individual: route genes in task
/// order, then trash bits.
pub fn init_population<R: Rng>(config: &EngineConfig, rng: &mut R) -> Population {
    (0..config.population_size)
        .map(|_| random_individual(config, rng))
        .collect()
}

/// Returns a copy with one uniformly chosen route position set to a fresh
/// uniform station id (which may equal the old one). In genealogical mode
/// exactly one uniformly chosen trash bit is flipped as well.
pub fn mutate<R: Rng>(ind: &Individual, config: &EngineConfig, rng: &mut R) -> Individual {
    let mut child = ind.clone();
    let pos = rng.random_range(0..child.route.len());
    child.route[pos] = rng.random_range(0..config.stations_per_task);
    if config.mode == DiversityMode::Genealogical {
        let bit = rng.random_range(0..child.trash.len());
        child.trash[bit] = !child.trash[bit];
    }
    child
}

/// Uniform crossover: each route gene, then each trash bit, taken from `a`
/// or `b` with probability 1/2 independently.
pub fn crossover<R: Rng>(a: &Individual, b: &Individual, rng: &mut R) -> Individual {
    debug_assert_eq!(a.route.len(), b.route.len());
    debug_assert_eq!(a.trash.len(), b.trash.len());
    let route = a
        .route
        .iter()
        .zip(&b.route)
        .map(|(&ga, &gb)| if rng.random_bool(0.5) { ga } else { gb })
        .collect();
    let trash = a
        .trash
        .iter()
        .zip(&b.trash)
        .map(|(&ta, &tb)| if rng.random_bool(0.5) { ta } else { tb })
        .collect();
    Individual::new(route, trash)
}

/// Binary tournament: two distinct indices drawn uniformly, the one with
/// lower combined fitness wins, ties go to the lower index.
pub fn select_mate<'a, R: Rng>(pop: &'a [Individual], rng: &mut R) -> &'a Individual {
    assert!(
        pop.len() >= 2,
        "mate selection needs at least two candidates"
    );
    let a = rng.random_range(0..pop.len());
    let mut b = rng.random_range(0..pop.len() - 1);
    if b >= a {
        b += 1;
    }
    let (lo, hi) = (a.min(b), a.max(b));
    match pop[lo].fitness.total_cmp(&pop[hi].fitness) {
        std::cmp::Ordering::Greater => &pop[hi],
        _ => &pop[lo],
    }
}

/// Fills both score caches for every member: waycost against `layout`, and
/// combined fitness `waycost + lambda * normalized_similarity` against a
/// frozen snapshot of `pop` itself. The similarity term is dropped when the
/// mode is off, lambda is zero, or the population is a singleton.
pub fn evaluate(
    pop: &mut [Individual],
    layout: &FactoryLayout,
    config: &EngineConfig,
) -> Result<(), EngineError> {
    for ind in pop.iter_mut() {
        ind.waycost = waycost(&ind.route, layout)?;
    }
    let penalized = config.mode != DiversityMode::None && config.lambda != 0.0 && pop.len() >= 2;
    if penalized {
        let sims = (0..pop.len())
            .map(|i| normalized_similarity(pop, i, config.mode))
            .collect::<Result<Vec<f64>, DiversityError>>()?;
        for (ind, sim) in pop.iter_mut().zip(sims) {
            ind.fitness = ind.waycost as f64 + config.lambda * sim;
        }
    } else {
        for ind in pop.iter_mut() {
            ind.fitness = ind.waycost as f64;
        }
    }
    Ok(())
}

/// Summarizes an evaluated population. The "best" member is the one with
/// the lowest combined fitness (first such index); best_waycost is the
/// population-wide minimum waycost, which may belong to a different member.
pub fn population_stats(
    pop: &[Individual],
    generation: usize,
    config: &EngineConfig,
) -> Result<GenerationStats, EngineError> {
    assert!(!pop.is_empty(), "stats need a non-empty population");
    let obs = config.observation_mode();
    let best_waycost = pop.iter().map(|ind| ind.waycost).min().unwrap();
    let mean_waycost = pop.iter().map(|ind| ind.waycost as f64).sum::<f64>() / pop.len() as f64;
    let mut best_index = 0;
    for (i, ind) in pop.iter().enumerate().skip(1) {
        if ind.fitness.total_cmp(&pop[best_index].fitness) == std::cmp::Ordering::Less {
            best_index = i;
        }
    }
    let mut diversities = Vec::with_capacity(pop.len());
    for i in 0..pop.len() {
        diversities.push(diversity(pop, i, obs)?);
    }
    let mean_diversity = diversities.iter().sum::<f64>() / diversities.len() as f64;
    Ok(GenerationStats {
        generation,
        best_waycost,
        mean_waycost,
        best_diversity: diversities[best_index],
        mean_diversity,
        best_fitness: pop[best_index].fitness,
    })
}

/// Advances the population by one generation against `layout`.
///
/// Passes, in draw order:
/// 1. parents re-evaluated against `layout` (no draws);
/// 2. crossover pass over parents 0..len: one gate draw each, and on
///    success two mate indices plus one coin per gene;
/// 3. mutation pass over parents 0..len: one gate draw each, and on success
///    the mutation draws;
/// 4. injection pass over parents 0..len: one gate draw each, and on
///    success a fresh random individual;
/// 5. parents and offspring evaluated together, stable-sorted by ascending
///    combined fitness, truncated to `population_size`, then re-evaluated
///    among themselves so caches and stats describe the survivors only.
pub fn step_generation<R: Rng>(
    mut pop: Population,
    layout: &FactoryLayout,
    config: &EngineConfig,
    generation: usize,
    rng: &mut R,
) -> Result<(Population, GenerationStats), EngineError> {
    evaluate(&mut pop, layout, config)?;
    let parent_count = pop.len();
    let mut offspring: Vec<Individual> = Vec::new();
    for i in 0..parent_count {
        if rng.random_bool(config.crossover_rate) {
            let mate = select_mate(&pop, rng);
            offspring.push(crossover(&pop[i], mate, rng));
        }
    }
    for i in 0..parent_count {
        if rng.random_bool(config.mutation_rate) {
            offspring.push(mutate(&pop[i], config, rng));
        }
    }
    for _ in 0..parent_count {
        if rng.random_bool(config.hypermutation_rate) {
            offspring.push(random_individual(config, rng));
        }
    }
    pop.extend(offspring);
    evaluate(&mut pop, layout, config)?;
    pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    pop.truncate(config.population_size);
    evaluate(&mut pop, layout, config)?;
    let stats = population_stats(&pop, generation, config)?;
    Ok((pop, stats))
}

/// Runs the full online-planning protocol: generations before
/// `change_generation` see `scenario.f1`, all later ones (the switch
/// generation included) see `scenario.f2`. The engine gets no change
/// signal; the swap only shows up through evaluation.
///
/// Row 0 is the evaluated initial population; every later row is one
/// [`step_generation`]. The whole run is a pure function of config and
/// scenario.
pub fn run(config: &EngineConfig, scenario: &Scenario) -> Result<RunRecord, EngineError> {
    config.validate()?;
    let layout_at = |g: usize| {
        if g < config.change_generation {
            &scenario.f1
        } else {
            &scenario.f2
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pop = init_population(config, &mut rng);
    evaluate(&mut pop, layout_at(0), config)?;
    let mut stats = Vec::with_capacity(config.generations);
    stats.push(population_stats(&pop, 0, config)?);
    for g in 1..config.generations {
        let (next, row) = step_generation(pop, layout_at(g), config, g, &mut rng)?;
        pop = next;
        stats.push(row);
    }
    Ok(RunRecord {
        config: config.clone(),
        change_f1: scenario.change_f1.clone(),
        change_f2: scenario.change_f2.clone(),
        stats,
    })
}

/// Generates the scenario for `scenario_seed` and runs the engine on it.
pub fn run_seeded(config: &EngineConfig, scenario_seed: u64) -> Result<RunRecord, EngineError> {
    let scenario = Scenario::generate(config, scenario_seed)?;
    run(config, &scenario)
}
