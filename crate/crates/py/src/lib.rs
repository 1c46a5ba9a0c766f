//! Python bindings for the tilecast solvers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tilecast::qualitymax::{self, GreedyMetric, StateSpaceOptions};
use tilecast::{baselines, oracle, powermin, sim, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_) | Error::BudgetExceeded { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn metric(name: &str) -> PyResult<GreedyMetric> {
    match name {
        "rate-free" => Ok(GreedyMetric::RateFree),
        "with-rate" => Ok(GreedyMetric::WithRate),
        other => Err(PyValueError::new_err(format!("unknown greedy metric {other:?}"))),
    }
}

#[pyclass(frozen, module = "tilecast_py")]
struct VideoConfig(tilecast::VideoConfig);

#[pymethods]
impl VideoConfig {
    #[new]
    #[pyo3(signature = (v_h, v_v, m_h, m_v, fov_h_deg=100.0, fov_v_deg=100.0, margin_deg=15.0))]
    fn new(v_h: u32, v_v: u32, m_h: u32, m_v: u32, fov_h_deg: f64, fov_v_deg: f64, margin_deg: f64) -> PyResult<Self> {
        tilecast::VideoConfig::new(v_h, v_v, m_h, m_v, fov_h_deg, fov_v_deg, margin_deg)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn n_tiles(&self) -> u32 {
        self.0.n_tiles()
    }

    #[getter]
    fn n_directions(&self) -> u32 {
        self.0.n_directions()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(frozen, module = "tilecast_py")]
struct OfdmaConfig(powermin::OfdmaConfig);

#[pymethods]
impl OfdmaConfig {
    #[new]
    fn new(n_subcarriers: usize, bandwidth_hz: f64, noise_w: f64) -> PyResult<Self> {
        powermin::OfdmaConfig::new(n_subcarriers, bandwidth_hz, noise_w)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn n_subcarriers(&self) -> usize {
        self.0.n_subcarriers
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Multicast groups: each entry holds a tile set and the users needing it.
#[pyclass(frozen, module = "tilecast_py")]
struct GroupPartition(tilecast::GroupPartition);

#[pymethods]
impl GroupPartition {
    #[staticmethod]
    fn from_sizes(sizes: Vec<usize>) -> PyResult<Self> {
        tilecast::GroupPartition::from_sizes(&sizes).map(Self).map_err(py_err)
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.0.sizes()
    }

    /// `(tiles, users)` per group.
    #[getter]
    fn groups(&self) -> Vec<(Vec<u32>, Vec<usize>)> {
        self.0
            .groups
            .iter()
            .map(|g| (g.tiles.as_slice().to_vec(), g.users.clone()))
            .collect()
    }

    #[getter]
    fn total_tiles(&self) -> usize {
        self.0.total_tiles
    }

    fn __len__(&self) -> usize {
        self.0.n_groups()
    }
}

#[pyclass(frozen, get_all, module = "tilecast_py")]
struct PowerMinResult {
    assignment: Vec<usize>,
    power_w: Vec<f64>,
    rate_bps: Vec<f64>,
    total_power_w: f64,
    dual_power_w: f64,
    lower_bound_w: f64,
    upper_bound_w: f64,
    multipliers: Vec<f64>,
    iterations: usize,
    certified: bool,
}

#[pymethods]
impl PowerMinResult {
    fn __repr__(&self) -> String {
        format!(
            "PowerMinResult(total_power_w={:e}, dual_power_w={:e}, certified={})",
            self.total_power_w, self.dual_power_w, self.certified
        )
    }
}

fn channel(gains: Vec<Vec<f64>>) -> PyResult<powermin::ChannelState> {
    powermin::ChannelState::new(gains).map_err(py_err)
}

/// 1-based tile indices visible from direction `(row, col)`.
#[pyfunction]
fn fov_tiles(row: u32, col: u32, video: &VideoConfig) -> PyResult<Vec<u32>> {
    tilecast::fov_tiles(tilecast::ViewDirection::new(row, col), &video.0)
        .map(|t| t.as_slice().to_vec())
        .map_err(py_err)
}

#[pyfunction]
fn partition(tile_sets: Vec<Vec<u32>>) -> PyResult<GroupPartition> {
    let sets: Vec<tilecast::TileSet> = tile_sets.into_iter().map(tilecast::TileSet::new).collect();
    tilecast::partition(&sets).map(GroupPartition).map_err(py_err)
}

/// Groups for users looking in the given `(row, col)` directions.
#[pyfunction]
fn partition_view_state(directions: Vec<(u32, u32)>, video: &VideoConfig) -> PyResult<GroupPartition> {
    let state = tilecast::SystemViewState::new(
        directions
            .into_iter()
            .map(|(r, c)| tilecast::ViewDirection::new(r, c))
            .collect(),
    );
    let sets = tilecast::required_tiles(&state, &video.0).map_err(py_err)?;
    tilecast::partition(&sets).map(GroupPartition).map_err(py_err)
}

/// Minimum-power allocation. `gains[n][k]` is user `k`'s gain on subcarrier `n`.
#[pyfunction]
fn solve_power_min(
    part: &GroupPartition,
    gains: Vec<Vec<f64>>,
    encoding_rate_bps: f64,
    ofdma: &OfdmaConfig,
) -> PyResult<PowerMinResult> {
    let ch = channel(gains)?;
    let r = powermin::solve(&part.0, &ch, encoding_rate_bps, &ofdma.0).map_err(py_err)?;
    Ok(PowerMinResult {
        total_power_w: r.primal_power_w,
        dual_power_w: r.dual_power_w,
        lower_bound_w: r.lower_bound_w,
        upper_bound_w: r.upper_bound_w,
        multipliers: r.multipliers,
        iterations: r.iterations,
        certified: r.unique_argmax,
        assignment: r.allocation.assignment,
        power_w: r.allocation.power_w,
        rate_bps: r.allocation.rate_bps,
    })
}

/// Brute-force minimum power and its assignment, for small instances.
#[pyfunction]
fn exhaustive_power_min(
    part: &GroupPartition,
    gains: Vec<Vec<f64>>,
    encoding_rate_bps: f64,
    ofdma: &OfdmaConfig,
) -> PyResult<(f64, Vec<usize>)> {
    let ch = channel(gains)?;
    oracle::exhaustive_powermin(&part.0, &ch, encoding_rate_bps, &ofdma.0, &oracle::OracleBudget::default())
        .map_err(py_err)
}

/// Total power of a baseline scheme (`"unicast"` or `"equal"`) for one view state.
#[pyfunction]
fn baseline_power(
    scheme: &str,
    directions: Vec<(u32, u32)>,
    video: &VideoConfig,
    gains: Vec<Vec<f64>>,
    encoding_rate_bps: f64,
    ofdma: &OfdmaConfig,
) -> PyResult<f64> {
    let kind = match scheme {
        "unicast" => baselines::BaselineKind::Unicast,
        "equal" => baselines::BaselineKind::EqualSubcarrier,
        other => return Err(PyValueError::new_err(format!("unknown baseline {other:?}"))),
    };
    let state = tilecast::SystemViewState::new(
        directions
            .into_iter()
            .map(|(r, c)| tilecast::ViewDirection::new(r, c))
            .collect(),
    );
    let ch = channel(gains)?;
    baselines::baseline_power(kind, &state, &video.0, &ch, encoding_rate_bps, &ofdma.0)
        .map(|b| b.total_power_w())
        .map_err(py_err)
}

/// Fractional subcarrier counts and rate of the relaxed quality problem.
#[pyfunction]
fn relaxed_quality(sizes: Vec<usize>, ofdma: &OfdmaConfig, budget_w: f64, min_gain: f64) -> (Vec<f64>, f64) {
    let r = qualitymax::relaxed_quality(&sizes, &ofdma.0, budget_w, min_gain);
    (r.counts, r.rate_bps)
}

/// Integer subcarrier counts and the largest rate they support.
#[pyfunction]
#[pyo3(signature = (sizes, ofdma, budget_w, min_gain, metric_name="rate-free"))]
fn greedy_quality(
    sizes: Vec<usize>,
    ofdma: &OfdmaConfig,
    budget_w: f64,
    min_gain: f64,
    metric_name: &str,
) -> PyResult<(Vec<usize>, f64)> {
    let g = qualitymax::greedy_quality_with(&sizes, &ofdma.0, budget_w, min_gain, metric(metric_name)?)
        .map_err(py_err)?;
    Ok((g.counts, g.rate_bps))
}

/// Worst-case rate over view states. Returns `(rate_bps, lower_bps,
/// upper_bps, n_states, sampled)`.
#[pyfunction]
#[pyo3(signature = (video, ofdma, users, budget_w, min_gain, sample=None, seed=0, metric_name="rate-free"))]
#[allow(clippy::too_many_arguments)]
fn solve_quality(
    video: &VideoConfig,
    ofdma: &OfdmaConfig,
    users: usize,
    budget_w: f64,
    min_gain: f64,
    sample: Option<usize>,
    seed: u64,
    metric_name: &str,
) -> PyResult<(f64, f64, f64, usize, bool)> {
    let scn = tilecast::QualityScenario {
        video: video.0,
        ofdma: ofdma.0,
        users,
        budget_w,
        min_gain,
    };
    let opts = StateSpaceOptions {
        sample,
        seed,
        keep_states: false,
        metric: metric(metric_name)?,
        ..StateSpaceOptions::default()
    };
    let r = qualitymax::solve_quality(&scn, &opts).map_err(py_err)?;
    Ok((r.rate_bps, r.lower_bound_bps, r.upper_bound_bps, r.n_states, r.sampled))
}

/// Direction probabilities in row-major order.
#[pyfunction]
fn zipf_pmf(gamma: f64, m_h: u32, m_v: u32) -> PyResult<Vec<f64>> {
    let model = sim::ZipfModel::new(gamma, m_h, m_v).map_err(py_err)?;
    Ok(sim::zipf_pmf(&model))
}

#[pymodule]
fn tilecast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<VideoConfig>()?;
    m.add_class::<OfdmaConfig>()?;
    m.add_class::<GroupPartition>()?;
    m.add_class::<PowerMinResult>()?;
    m.add_function(wrap_pyfunction!(fov_tiles, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(partition_view_state, m)?)?;
    m.add_function(wrap_pyfunction!(solve_power_min, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_power_min, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_power, m)?)?;
    m.add_function(wrap_pyfunction!(relaxed_quality, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_quality, m)?)?;
    m.add_function(wrap_pyfunction!(solve_quality, m)?)?;
    m.add_function(wrap_pyfunction!(zipf_pmf, m)?)?;
    Ok(())
}
