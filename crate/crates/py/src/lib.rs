//! Python bindings: grids, runoff, scenarios, the editing environment,
//! training and greedy evaluation.
//!
//! ```python
//! import lulc_ppo
//! grid = lulc_ppo.seed_grid()
//! print(lulc_ppo.compute_runoff(grid))
//! trainer = lulc_ppo.Trainer(grid, seed=7, config_toml="[ppo]\ntotal_updates = 5\n")
//! trainer.train()
//! print(trainer.policy().run_greedy(grid)["runoff_m3_per_s"])
//! ```

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lulc_ppo::agent::Actor;
use lulc_ppo::checkpoint::Checkpoint;
use lulc_ppo::config::RunConfig;
use lulc_ppo::env::{EnvConfig, LulcEnv, NUM_ACTIONS, OBS_DIM};
use lulc_ppo::eval::{run_greedy, TransitionMatrix};
use lulc_ppo::ppo::{TrainStats, Trainer as CoreTrainer};
use lulc_ppo::raster;
use lulc_ppo::runoff::{self, ClassHistogram, CoefficientTable, LulcClass, LulcGrid, NUM_CLASSES};
use lulc_ppo::scenario::{self, Scenario};
use lulc_ppo::Error;

create_exception!(lulc_ppo, LulcPpoError, PyException);
create_exception!(lulc_ppo, InfeasibleScenarioError, LulcPpoError);
create_exception!(lulc_ppo, CheckpointError, LulcPpoError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InfeasibleScenario { .. } => InfeasibleScenarioError::new_err(e.to_string()),
        Error::Checkpoint { .. } => CheckpointError::new_err(e.to_string()),
        Error::InvalidGrid(_)
        | Error::InvalidCoefficients(_)
        | Error::InvalidScenario(_)
        | Error::Config(_)
        | Error::ShapeMismatch { .. }
        | Error::EmptyGrid => PyValueError::new_err(e.to_string()),
        other => LulcPpoError::new_err(other.to_string()),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for lulc_ppo::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn class_from_code(code: u8) -> PyResult<LulcClass> {
    LulcClass::from_code(code).ok_or_else(|| PyValueError::new_err(format!("unknown class code {code}")))
}

fn class_from_name(name: &str) -> PyResult<LulcClass> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown class `{name}`")))
}

fn histogram_dict<'py>(py: Python<'py>, hist: &ClassHistogram) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for class in LulcClass::ALL {
        d.set_item(class.name(), hist[class])?;
    }
    Ok(d)
}

fn per_class_dict<'py>(py: Python<'py>, values: &[f64; NUM_CLASSES]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for class in LulcClass::ALL {
        d.set_item(class.name(), values[class.index()])?;
    }
    Ok(d)
}

fn matrix_rows(m: &TransitionMatrix) -> Vec<Vec<u64>> {
    m.counts().iter().map(|r| r.to_vec()).collect()
}

/// Land-cover raster with a frozen mask.
#[pyclass(name = "Grid", module = "lulc_ppo", skip_from_py_object)]
#[derive(Clone)]
struct Grid {
    inner: LulcGrid,
}

#[pymethods]
impl Grid {
    /// `cells` are class codes 0..6 in row-major order.
    #[new]
    #[pyo3(signature = (width, height, cells, cell_area_m2=900.0, frozen_mask=None))]
    fn new(
        width: usize,
        height: usize,
        cells: Vec<u8>,
        cell_area_m2: f64,
        frozen_mask: Option<Vec<bool>>,
    ) -> PyResult<Self> {
        let cells = cells.into_iter().map(class_from_code).collect::<PyResult<Vec<_>>>()?;
        let mut grid = LulcGrid::new(width, height, cells, cell_area_m2).py()?;
        if let Some(mask) = frozen_mask {
            grid = grid.with_frozen_mask(mask).py()?;
        }
        Ok(Self { inner: grid })
    }

    #[staticmethod]
    #[pyo3(signature = (path, frozen_mask=None))]
    fn read(path: PathBuf, frozen_mask: Option<PathBuf>) -> PyResult<Self> {
        Ok(Self {
            inner: raster::read_grid_with_mask(&path, frozen_mask.as_deref()).py()?,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn cell_area_m2(&self) -> f64 {
        self.inner.cell_area_m2()
    }

    #[getter]
    fn cells(&self) -> Vec<u8> {
        self.inner.cells().iter().map(|c| c.code()).collect()
    }

    #[getter]
    fn frozen_mask(&self) -> Vec<bool> {
        self.inner.frozen_mask().to_vec()
    }

    #[getter]
    fn frozen_count(&self) -> usize {
        self.inner.frozen_count()
    }

    fn histogram<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        histogram_dict(py, &self.inner.histogram())
    }

    fn to_csv(&self) -> String {
        raster::format_grid(&self.inner)
    }

    fn mask_to_csv(&self) -> String {
        raster::format_frozen_mask(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: PyRef<'_, Grid>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid({}x{}, cell_area_m2={}, frozen={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.cell_area_m2(),
            self.inner.frozen_count()
        )
    }
}

/// Runoff coefficients per class plus rainfall intensity.
#[pyclass(name = "CoefficientTable", module = "lulc_ppo", skip_from_py_object)]
#[derive(Clone)]
struct Table {
    inner: CoefficientTable,
}

#[pymethods]
impl Table {
    /// `coefficients` maps class names to values; missing classes keep their
    /// defaults.
    #[new]
    #[pyo3(signature = (coefficients=None, intensity_mm_per_hr=CoefficientTable::DEFAULT_INTENSITY_MM_PER_HR))]
    fn new(coefficients: Option<Vec<(String, f64)>>, intensity_mm_per_hr: f64) -> PyResult<Self> {
        let mut values = CoefficientTable::DEFAULT_COEFFICIENTS;
        for (name, v) in coefficients.unwrap_or_default() {
            values[class_from_name(&name)?.index()] = v;
        }
        Ok(Self {
            inner: CoefficientTable::new(values, intensity_mm_per_hr).py()?,
        })
    }

    fn coefficient(&self, class_name: &str) -> PyResult<f64> {
        Ok(self.inner.coefficient(class_from_name(class_name)?))
    }

    fn coefficients<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        per_class_dict(py, self.inner.coefficients())
    }

    #[getter]
    fn intensity_mm_per_hr(&self) -> f64 {
        self.inner.intensity_mm_per_hr()
    }
}

fn table_or_default(table: Option<PyRef<'_, Table>>) -> CoefficientTable {
    table.map(|t| t.inner.clone()).unwrap_or_default()
}

/// The bundled 25x40 grid (urban and wetland frozen).
#[pyfunction]
fn seed_grid() -> Grid {
    Grid {
        inner: lulc_ppo::seed_grid::make_seed_grid(),
    }
}

/// Total runoff in m^3/s.
#[pyfunction]
#[pyo3(signature = (grid, table=None))]
fn compute_runoff(grid: PyRef<'_, Grid>, table: Option<PyRef<'_, Table>>) -> PyResult<f64> {
    Ok(runoff::compute_runoff(&grid.inner, &table_or_default(table)).py()?.total_m3_per_s)
}

/// Total, per-class runoff and composite coefficient.
#[pyfunction]
#[pyo3(signature = (grid, table=None))]
fn runoff_breakdown<'py>(
    py: Python<'py>,
    grid: PyRef<'_, Grid>,
    table: Option<PyRef<'_, Table>>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = runoff::compute_runoff(&grid.inner, &table_or_default(table)).py()?;
    let d = PyDict::new(py);
    d.set_item("total_m3_per_s", r.total_m3_per_s)?;
    d.set_item("per_class_m3_per_s", per_class_dict(py, &r.per_class_m3_per_s)?)?;
    d.set_item("composite_c", r.composite_c)?;
    Ok(d)
}

#[pyfunction]
fn builtin_scenarios() -> Vec<String> {
    scenario::builtin_scenarios().iter().map(|s| s.name().to_string()).collect()
}

fn resolve_scenario(id: &str) -> PyResult<Scenario> {
    match scenario::builtin_scenario(id) {
        Some(s) => Ok(s),
        None => Scenario::load(std::path::Path::new(id)).py(),
    }
}

/// Apply a scenario (`s1`..`s5` or a scenario file path) to a grid's
/// histogram. Raises `InfeasibleScenarioError` if it cannot be realized.
#[pyfunction]
#[pyo3(signature = (grid, scenario_id, table=None))]
fn apply_scenario<'py>(
    py: Python<'py>,
    grid: PyRef<'_, Grid>,
    scenario_id: &str,
    table: Option<PyRef<'_, Table>>,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = resolve_scenario(scenario_id)?;
    let report = scenario::apply_scenario(&grid.inner.histogram(), &sc).py()?;
    let table = table_or_default(table);
    let after = runoff::runoff_from_histogram(&report.after, &table, grid.inner.cell_area_m2()).py()?;
    let d = PyDict::new(py);
    d.set_item("name", sc.name())?;
    d.set_item("before", histogram_dict(py, &report.before)?)?;
    d.set_item("after", histogram_dict(py, &report.after)?)?;
    d.set_item("targets", report.targets.to_vec())?;
    d.set_item("residual", report.residual)?;
    d.set_item("residual_assigned_to", report.residual_assigned_to.map(|c| c.name()))?;
    d.set_item("runoff_m3_per_s", after.total_m3_per_s)?;
    Ok(d)
}

/// Pixel counts from `before` class (rows) to `after` class (columns).
#[pyfunction]
fn transition_matrix(before: PyRef<'_, Grid>, after: PyRef<'_, Grid>) -> PyResult<Vec<Vec<u64>>> {
    Ok(matrix_rows(&TransitionMatrix::from_grids(&before.inner, &after.inner).py()?))
}

/// Cursor-scan editing environment.
#[pyclass(name = "Env", module = "lulc_ppo", skip_from_py_object)]
struct Env {
    inner: LulcEnv,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (grid, table=None, steps_per_episode=None, target_reduction_m3_per_s=0.0, target_bonus=0.0, reward_scale=1e3, frozen_classes=None))]
    fn new(
        grid: PyRef<'_, Grid>,
        table: Option<PyRef<'_, Table>>,
        steps_per_episode: Option<usize>,
        target_reduction_m3_per_s: f64,
        target_bonus: f64,
        reward_scale: f64,
        frozen_classes: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let mut config = EnvConfig {
            steps_per_episode,
            target_reduction_m3_per_s,
            target_bonus,
            reward_scale,
            ..EnvConfig::default()
        };
        if let Some(names) = frozen_classes {
            config.frozen_classes = names.iter().map(|n| class_from_name(n)).collect::<PyResult<_>>()?;
        }
        Ok(Self {
            inner: LulcEnv::new(grid.inner.clone(), config, table_or_default(table)).py()?,
        })
    }

    fn reset(&mut self) -> PyResult<Vec<f64>> {
        Ok(self.inner.reset().py()?.to_vec())
    }

    fn observation(&self) -> Vec<f64> {
        self.inner.observation().to_vec()
    }

    fn action_mask(&self) -> Vec<bool> {
        self.inner.action_mask().to_vec()
    }

    /// Returns `(observation, reward, done, info)`.
    fn step<'py>(&mut self, py: Python<'py>, action: usize) -> PyResult<(Vec<f64>, f64, bool, Bound<'py, PyDict>)> {
        if action >= NUM_ACTIONS {
            return Err(PyIndexError::new_err(format!("action {action} out of range 0..{NUM_ACTIONS}")));
        }
        let out = self.inner.step(action).py()?;
        let info = PyDict::new(py);
        info.set_item("changed", out.changed)?;
        info.set_item("bonus", out.bonus)?;
        info.set_item("runoff_m3_per_s", self.inner.state().current_runoff_m3_per_s)?;
        Ok((out.observation.to_vec(), out.reward, out.done, info))
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn cursor(&self) -> usize {
        self.inner.state().cursor
    }

    #[getter]
    fn runoff_m3_per_s(&self) -> f64 {
        self.inner.state().current_runoff_m3_per_s
    }

    #[getter]
    fn baseline_runoff_m3_per_s(&self) -> f64 {
        self.inner.state().baseline_runoff_m3_per_s
    }

    #[getter]
    fn steps_per_episode(&self) -> usize {
        self.inner.steps_per_episode()
    }

    fn grid(&self) -> Grid {
        Grid {
            inner: self.inner.state().grid.clone(),
        }
    }

    #[classattr]
    const OBS_DIM: usize = OBS_DIM;

    #[classattr]
    const NUM_ACTIONS: usize = NUM_ACTIONS;
}

/// A trained (or initial) policy network.
#[pyclass(name = "Policy", module = "lulc_ppo", skip_from_py_object)]
struct Policy {
    actor: Actor,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let cp = Checkpoint::load(&path).py()?;
        Ok(Self { actor: cp.actor().py()? })
    }

    #[pyo3(signature = (observation, mask=None))]
    fn probabilities(&self, observation: Vec<f64>, mask: Option<Vec<bool>>) -> PyResult<Vec<f64>> {
        let obs: [f64; OBS_DIM] = observation
            .try_into()
            .map_err(|_| PyValueError::new_err(format!("observation must have {OBS_DIM} entries")))?;
        let mask: [bool; NUM_ACTIONS] = mask
            .unwrap_or(vec![true; NUM_ACTIONS])
            .try_into()
            .map_err(|_| PyValueError::new_err(format!("mask must have {NUM_ACTIONS} entries")))?;
        Ok(self.actor.distribution(&obs, &mask).py()?.probs().to_vec())
    }

    /// Greedy sweep of `steps` cursor steps (default: every pixel once).
    #[pyo3(signature = (grid, steps=None, table=None))]
    fn run_greedy<'py>(
        &self,
        py: Python<'py>,
        grid: PyRef<'_, Grid>,
        steps: Option<usize>,
        table: Option<PyRef<'_, Table>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let steps = steps.unwrap_or(grid.inner.len());
        let run = run_greedy(&grid.inner, &table_or_default(table), &EnvConfig::default(), &self.actor, steps).py()?;
        let d = PyDict::new(py);
        d.set_item("final_grid", Grid { inner: run.final_grid })?;
        d.set_item("transition", matrix_rows(&run.matrix))?;
        d.set_item("runoff_m3_per_s", run.runoff.total_m3_per_s)?;
        Ok(d)
    }
}

fn stats_dict<'py>(py: Python<'py>, s: &TrainStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("update", s.update)?;
    d.set_item("mean_reward", s.mean_reward)?;
    d.set_item("policy_loss", s.policy_loss)?;
    d.set_item("value_loss", s.value_loss)?;
    d.set_item("entropy", s.entropy)?;
    d.set_item("clip_fraction", s.clip_fraction)?;
    d.set_item("final_episode_runoff_m3_per_s", s.final_episode_runoff_m3_per_s)?;
    d.set_item("episodes_completed", s.episodes_completed)?;
    Ok(d)
}

/// PPO trainer. `config_toml` uses the run-config format (only the `[env]`,
/// `[ppo]` and `[runoff]` sections and `seed` are used here).
#[pyclass(name = "Trainer", module = "lulc_ppo", skip_from_py_object)]
struct Trainer {
    inner: CoreTrainer,
}

#[pymethods]
impl Trainer {
    #[new]
    #[pyo3(signature = (grid=None, seed=None, config_toml="", table=None))]
    fn new(
        grid: Option<PyRef<'_, Grid>>,
        seed: Option<u64>,
        config_toml: &str,
        table: Option<PyRef<'_, Table>>,
    ) -> PyResult<Self> {
        let cfg = RunConfig::parse(config_toml).py()?;
        let grid = match grid {
            Some(g) => g.inner.clone(),
            None => cfg.resolve().py()?.grid,
        };
        let table = match table {
            Some(t) => t.inner.clone(),
            None => cfg.coefficient_table().py()?,
        };
        let inner = CoreTrainer::new(grid, table, cfg.env, cfg.ppo, seed.unwrap_or(cfg.seed)).py()?;
        Ok(Self { inner })
    }

    fn run_update<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = py.detach(|| self.inner.run_update()).py()?;
        stats_dict(py, &s)
    }

    /// Run `updates` more updates (default: up to the configured total).
    #[pyo3(signature = (updates=None))]
    fn train<'py>(&mut self, py: Python<'py>, updates: Option<u64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let n = updates.unwrap_or(
            self.inner
                .config
                .total_updates
                .saturating_sub(self.inner.updates_completed),
        );
        let mut out = Vec::new();
        for _ in 0..n {
            out.push(self.run_update(py)?);
        }
        Ok(out)
    }

    #[getter]
    fn updates_completed(&self) -> u64 {
        self.inner.updates_completed
    }

    fn save_checkpoint(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::from_trainer(&self.inner).save(&path).py()
    }

    fn checkpoint_json(&self) -> String {
        String::from_utf8(Checkpoint::from_trainer(&self.inner).to_bytes()).expect("checkpoint is UTF-8 JSON")
    }

    fn policy(&self) -> Policy {
        Policy {
            actor: self.inner.actor.clone(),
        }
    }
}

/// The default run configuration as TOML.
#[pyfunction]
fn default_config_toml() -> PyResult<String> {
    Ok(RunConfig::default().with_explicit_coefficients().py()?.to_toml())
}

#[pymodule]
#[pyo3(name = "lulc_ppo")]
pub fn lulc_ppo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("LulcPpoError", py.get_type::<LulcPpoError>())?;
    m.add("InfeasibleScenarioError", py.get_type::<InfeasibleScenarioError>())?;
    m.add("CheckpointError", py.get_type::<CheckpointError>())?;
    m.add("CLASS_NAMES", LulcClass::ALL.iter().map(|c| c.name()).collect::<Vec<_>>())?;
    m.add_class::<Grid>()?;
    m.add_class::<Table>()?;
    m.add_class::<Env>()?;
    m.add_class::<Policy>()?;
    m.add_class::<Trainer>()?;
    m.add_function(wrap_pyfunction!(seed_grid, m)?)?;
    m.add_function(wrap_pyfunction!(compute_runoff, m)?)?;
    m.add_function(wrap_pyfunction!(runoff_breakdown, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(apply_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(transition_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(default_config_toml, m)?)?;
    Ok(())
}
