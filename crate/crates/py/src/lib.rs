//! Python bindings over the planning engine: layouts, configs, seeded runs,
//! and the exhaustive oracle. Thin wrappers only; all behavior lives in the
//! core crate.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use resilient_evo::diversity::DiversityMode;
use resilient_evo::domain::{self, Coord, FactoryLayout};
use resilient_evo::evolution::{self, EngineConfig, GenerationStats, RunRecord, Scenario};
use resilient_evo::oracle;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(s: &str) -> PyResult<DiversityMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "none" => Ok(DiversityMode::None),
        "dom" | "domain" | "domain-distance" | "domain_distance" => {
            Ok(DiversityMode::DomainDistance)
        }
        "gen" | "genealogical" => Ok(DiversityMode::Genealogical),
        other => Err(value_err(format!(
            "unknown mode '{other}': expected none, dom, or gen"
        ))),
    }
}

fn coords_to_pairs(layout: &FactoryLayout) -> Vec<Vec<(i64, i64)>> {
    (0..layout.tasks())
        .map(|task| {
            (0..layout.stations_per_task())
                .map(|id| {
                    let c = layout.station(task, id);
                    (c.x, c.y)
                })
                .collect()
        })
        .collect()
}

/// Station matrix on a grid; route costs are Manhattan walks from the start
/// corner through one station per task.
#[pyclass(
    name = "FactoryLayout",
    module = "resilient_evo_py",
    skip_from_py_object
)]
#[derive(Clone)]
struct PyFactoryLayout {
    inner: FactoryLayout,
}

#[pymethods]
impl PyFactoryLayout {
    /// Build from an explicit station matrix: stations[task][id] = (x, y).
    #[new]
    fn new(stations: Vec<Vec<(i64, i64)>>, width: i64, height: i64) -> PyResult<Self> {
        let stations = stations
            .into_iter()
            .map(|row| row.into_iter().map(|(x, y)| Coord::new(x, y)).collect())
            .collect();
        FactoryLayout::new(stations, width, height)
            .map(|inner| PyFactoryLayout { inner })
            .map_err(value_err)
    }

    /// Draw a layout with stations placed uniformly on the grid.
    #[staticmethod]
    fn generate(
        tasks: usize,
        stations_per_task: usize,
        width: i64,
        height: i64,
        seed: u64,
    ) -> PyResult<Self> {
        domain::generate_layout(
            tasks,
            stations_per_task,
            width,
            height,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .map(|inner| PyFactoryLayout { inner })
        .map_err(value_err)
    }

    /// Displace `amount` distinct stations by `offset`; returns the changed
    /// layout and the sorted (task, station) pairs that moved.
    #[pyo3(signature = (amount, seed, offset = (2500, 2500)))]
    fn apply_change(
        &self,
        amount: usize,
        seed: u64,
        offset: (i64, i64),
    ) -> PyResult<(Self, Vec<(usize, usize)>)> {
        let (changed, record) = domain::apply_change(
            &self.inner,
            amount,
            Coord::new(offset.0, offset.1),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .map_err(value_err)?;
        Ok((PyFactoryLayout { inner: changed }, record.moved))
    }

    fn stations(&self) -> Vec<Vec<(i64, i64)>> {
        coords_to_pairs(&self.inner)
    }

    #[getter]
    fn tasks(&self) -> usize {
        self.inner.tasks()
    }

    #[getter]
    fn stations_per_task(&self) -> usize {
        self.inner.stations_per_task()
    }

    #[getter]
    fn width(&self) -> i64 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> i64 {
        self.inner.height()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        FactoryLayout::from_json(text)
            .map(|inner| PyFactoryLayout { inner })
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FactoryLayout(tasks={}, stations_per_task={}, width={}, height={})",
            self.inner.tasks(),
            self.inner.stations_per_task(),
            self.inner.width(),
            self.inner.height()
        )
    }
}

/// Engine parameterization; mode is one of "none", "dom", or "gen".
#[pyclass(
    name = "EngineConfig",
    module = "resilient_evo_py",
    skip_from_py_object
)]
#[derive(Clone)]
struct PyEngineConfig {
    inner: EngineConfig,
}

#[pymethods]
impl PyEngineConfig {
    #[new]
    #[pyo3(signature = (
        tasks = None, stations_per_task = None, width = None, height = None,
        population_size = None, generations = None, change_generation = None,
        change_amount = None, change_offset = None, mutation_rate = None,
        crossover_rate = None, hypermutation_rate = None, lambda_ = None,
        trash_bits = None, mode = None, seed = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        tasks: Option<usize>,
        stations_per_task: Option<usize>,
        width: Option<i64>,
        height: Option<i64>,
        population_size: Option<usize>,
        generations: Option<usize>,
        change_generation: Option<usize>,
        change_amount: Option<usize>,
        change_offset: Option<(i64, i64)>,
        mutation_rate: Option<f64>,
        crossover_rate: Option<f64>,
        hypermutation_rate: Option<f64>,
        lambda_: Option<f64>,
        trash_bits: Option<usize>,
        mode: Option<&str>,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let mut c = EngineConfig::default();
        macro_rules! overlay {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    c.$field = v;
                }
            };
        }
        overlay!(tasks, tasks);
        overlay!(stations_per_task, stations_per_task);
        overlay!(width, width);
        overlay!(height, height);
        overlay!(population_size, population_size);
        overlay!(generations, generations);
        overlay!(change_generation, change_generation);
        overlay!(change_amount, change_amount);
        if let Some((x, y)) = change_offset {
            c.change_offset = Coord::new(x, y);
        }
        overlay!(mutation_rate, mutation_rate);
        overlay!(crossover_rate, crossover_rate);
        overlay!(hypermutation_rate, hypermutation_rate);
        overlay!(lambda, lambda_);
        overlay!(trash_bits, trash_bits);
        if let Some(mode) = mode {
            c.mode = parse_mode(mode)?;
        }
        overlay!(seed, seed);
        c.validate().map_err(value_err)?;
        Ok(PyEngineConfig { inner: c })
    }

    #[getter]
    fn tasks(&self) -> usize {
        self.inner.tasks
    }

    #[getter]
    fn stations_per_task(&self) -> usize {
        self.inner.stations_per_task
    }

    #[getter]
    fn population_size(&self) -> usize {
        self.inner.population_size
    }

    #[getter]
    fn generations(&self) -> usize {
        self.inner.generations
    }

    #[getter]
    fn change_generation(&self) -> usize {
        self.inner.change_generation
    }

    #[getter]
    fn change_amount(&self) -> usize {
        self.inner.change_amount
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[setter]
    fn set_lambda_(&mut self, value: f64) {
        self.inner.lambda = value;
    }

    #[getter]
    fn trash_bits(&self) -> usize {
        self.inner.trash_bits
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.label()
    }

    #[setter]
    fn set_mode(&mut self, value: &str) -> PyResult<()> {
        self.inner.mode = parse_mode(value)?;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, value: u64) {
        self.inner.seed = value;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "EngineConfig(tasks={}, stations_per_task={}, population_size={}, \
             generations={}, change_generation={}, change_amount={}, lambda_={}, \
             trash_bits={}, mode='{}', seed={})",
            c.tasks,
            c.stations_per_task,
            c.population_size,
            c.generations,
            c.change_generation,
            c.change_amount,
            c.lambda,
            c.trash_bits,
            c.mode.label(),
            c.seed
        )
    }
}

/// One pre-drawn environment pair: F1 before the change generation, F2 from
/// it onward.
#[pyclass(name = "Scenario", module = "resilient_evo_py", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn generate(config: &PyEngineConfig, scenario_seed: u64) -> PyResult<Self> {
        Scenario::generate(&config.inner, scenario_seed)
            .map(|inner| PyScenario { inner })
            .map_err(value_err)
    }

    #[getter]
    fn base(&self) -> PyFactoryLayout {
        PyFactoryLayout {
            inner: self.inner.base.clone(),
        }
    }

    #[getter]
    fn f1(&self) -> PyFactoryLayout {
        PyFactoryLayout {
            inner: self.inner.f1.clone(),
        }
    }

    #[getter]
    fn f2(&self) -> PyFactoryLayout {
        PyFactoryLayout {
            inner: self.inner.f2.clone(),
        }
    }

    #[getter]
    fn moved_f1(&self) -> Vec<(usize, usize)> {
        self.inner.change_f1.moved.clone()
    }

    #[getter]
    fn moved_f2(&self) -> Vec<(usize, usize)> {
        self.inner.change_f2.moved.clone()
    }
}

/// Survivor-population summary of one generation.
#[pyclass(name = "GenerationStats", module = "resilient_evo_py", frozen)]
struct PyGenerationStats {
    #[pyo3(get)]
    generation: usize,
    #[pyo3(get)]
    best_waycost: i64,
    #[pyo3(get)]
    mean_waycost: f64,
    #[pyo3(get)]
    best_diversity: f64,
    #[pyo3(get)]
    mean_diversity: f64,
    #[pyo3(get)]
    best_fitness: f64,
}

impl From<&GenerationStats> for PyGenerationStats {
    fn from(s: &GenerationStats) -> Self {
        PyGenerationStats {
            generation: s.generation,
            best_waycost: s.best_waycost,
            mean_waycost: s.mean_waycost,
            best_diversity: s.best_diversity,
            mean_diversity: s.mean_diversity,
            best_fitness: s.best_fitness,
        }
    }
}

#[pymethods]
impl PyGenerationStats {
    fn __repr__(&self) -> String {
        format!(
            "GenerationStats(generation={}, best_waycost={}, mean_waycost={:.3}, \
             mean_diversity={:.3})",
            self.generation, self.best_waycost, self.mean_waycost, self.mean_diversity
        )
    }
}

/// Everything one seeded run produced.
#[pyclass(name = "RunRecord", module = "resilient_evo_py")]
struct PyRunRecord {
    inner: RunRecord,
}

#[pymethods]
impl PyRunRecord {
    #[getter]
    fn stats(&self) -> Vec<PyGenerationStats> {
        self.inner
            .stats
            .iter()
            .map(PyGenerationStats::from)
            .collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.stats.len()
    }
}

/// Walk cost of one route on a layout.
#[pyfunction(name = "waycost")]
fn py_waycost(route: Vec<usize>, layout: &PyFactoryLayout) -> PyResult<i64> {
    domain::waycost(&route, &layout.inner).map_err(value_err)
}

/// Evolve against a pre-drawn scenario.
#[pyfunction(name = "run")]
fn py_run(config: &PyEngineConfig, scenario: &PyScenario) -> PyResult<PyRunRecord> {
    evolution::run(&config.inner, &scenario.inner)
        .map(|inner| PyRunRecord { inner })
        .map_err(value_err)
}

/// Draw the scenario from `scenario_seed`, then evolve.
#[pyfunction(name = "run_seeded")]
fn py_run_seeded(config: &PyEngineConfig, scenario_seed: u64) -> PyResult<PyRunRecord> {
    evolution::run_seeded(&config.inner, scenario_seed)
        .map(|inner| PyRunRecord { inner })
        .map_err(value_err)
}

/// Exhaustively enumerate the plan space; returns (route, waycost).
#[pyfunction(name = "enumerate_optimum")]
#[pyo3(signature = (layout, budget = None))]
fn py_enumerate_optimum(
    layout: &PyFactoryLayout,
    budget: Option<u64>,
) -> PyResult<(Vec<usize>, i64)> {
    oracle::enumerate_optimum(
        &layout.inner,
        budget.unwrap_or(oracle::DEFAULT_ENUMERATION_BUDGET),
    )
    .map_err(value_err)
}

/// Fraction of all routes whose cost moved by more than `epsilon`.
#[pyfunction(name = "affected_fraction")]
#[pyo3(signature = (before, after, epsilon = None, budget = None))]
fn py_affected_fraction(
    before: &PyFactoryLayout,
    after: &PyFactoryLayout,
    epsilon: Option<f64>,
    budget: Option<u64>,
) -> PyResult<f64> {
    oracle::affected_fraction(
        &before.inner,
        &after.inner,
        epsilon.unwrap_or(oracle::DEFAULT_EPSILON),
        budget.unwrap_or(oracle::DEFAULT_ENUMERATION_BUDGET),
    )
    .map_err(value_err)
}

/// Whether the change invalidates every optimal plan of the old layout.
#[pyfunction(name = "is_unexpected")]
#[pyo3(signature = (before, after, budget = None))]
fn py_is_unexpected(
    before: &PyFactoryLayout,
    after: &PyFactoryLayout,
    budget: Option<u64>,
) -> PyResult<bool> {
    oracle::is_unexpected(
        &before.inner,
        &after.inner,
        budget.unwrap_or(oracle::DEFAULT_ENUMERATION_BUDGET),
    )
    .map_err(value_err)
}

#[pymodule]
fn resilient_evo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFactoryLayout>()?;
    m.add_class::<PyEngineConfig>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyGenerationStats>()?;
    m.add_class::<PyRunRecord>()?;
    m.add_function(wrap_pyfunction!(py_waycost, m)?)?;
    m.add_function(wrap_pyfunction!(py_run, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_seeded, m)?)?;
    m.add_function(wrap_pyfunction!(py_enumerate_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(py_affected_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(py_is_unexpected, m)?)?;
    Ok(())
}
