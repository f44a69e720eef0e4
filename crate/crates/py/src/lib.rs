//! Python bindings for `neurochan-core`.
//!
//! Matrices cross the boundary as lists of row lists, vectors as lists, and
//! channel sets as lists of 1-based channel labels.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};
use neurochan_core::design::{self, AlphaScaling};
use neurochan_core::frames::{self, FrameSpec, FrameSpectrum};
use neurochan_core::intermittency::{self, InitialAvailability, MarkovChannelModel};
use neurochan_core::quantize::{self, Alphabet, EmulationTarget};
use neurochan_core::uncertainty::{self, NoiseModel};
use neurochan_core::{io, lattice, lifting, numerics, ChannelSet, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    if e.is_validation() || matches!(e, Error::InvalidLift { .. } | Error::Rank(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    io::from_rows(&rows).map_err(err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    io::to_rows(m)
}

fn vector(values: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(values)
}

fn channels(m: usize, labels: &[usize]) -> PyResult<ChannelSet> {
    ChannelSet::from_one_based(m, labels).map_err(err)
}

fn parse_scaling(name: &str) -> PyResult<AlphaScaling> {
    match name {
        "fixed" => Ok(AlphaScaling::Fixed),
        "inverse_m" => Ok(AlphaScaling::InverseM),
        other => Err(PyValueError::new_err(format!(
            "scaling must be 'fixed' or 'inverse_m', got {other:?}"
        ))),
    }
}

fn parse_alphabet(name: &str) -> PyResult<Alphabet> {
    match name {
        "pm_one" => Ok(Alphabet::PmOne),
        "pm_one_or_off" => Ok(Alphabet::PmOneOrOff),
        other => Err(PyValueError::new_err(format!(
            "alphabet must be 'pm_one' or 'pm_one_or_off', got {other:?}"
        ))),
    }
}

fn noise(m: usize, sigma: Option<Vec<Vec<f64>>>) -> PyResult<NoiseModel> {
    match sigma {
        None => Ok(NoiseModel::identity(m)),
        Some(s) => NoiseModel::new(matrix(s)?).map_err(err),
    }
}

/// Linear plant `ẋ = Ax + Bu`.
#[pyclass(frozen, name = "Plant", module = "neurochan")]
struct Plant(lifting::Plant);

#[pymethods]
impl Plant {
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Plant(
            lifting::Plant::new(matrix(a)?, matrix(b)?).map_err(err)?,
        ))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(self.0.a())
    }

    #[getter]
    fn b(&self) -> Vec<Vec<f64>> {
        rows(self.0.b())
    }

    /// Controllability of every channel subset, as a list of dicts.
    #[pyo3(signature = (horizon = 1.0))]
    fn classify<'py>(&self, py: Python<'py>, horizon: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let report = lattice::classify_controllability(&self.0, horizon).map_err(err)?;
        report
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("channels", r.set.one_based())?;
                d.set_item("controllable", r.controllable)?;
                d.set_item("gramian_min_singular_value", r.gramian_min_singular_value)?;
                Ok(d)
            })
            .collect()
    }

    /// `Bᵀ(BBᵀ)⁻¹A`.
    fn lift_particular(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&lifting::lift_particular(&self.0).map_err(err)?))
    }

    /// Basis of the homogeneous solutions of `B·Â = 0`.
    fn lift_nullspace_basis(&self) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let family = lifting::lift_nullspace_basis(&self.0).map_err(err)?;
        Ok(family.basis.iter().map(rows).collect())
    }

    /// A lift supported on the given channels.
    fn lift_invariant(&self, labels: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let set = channels(self.0.m(), &labels)?;
        Ok(rows(&lifting::lift_invariant(&self.0, &set).map_err(err)?))
    }

    /// Eigenvalues of `A + B·P·K`, with `P` the projection onto `labels`
    /// (all channels when omitted).
    #[pyo3(signature = (k, labels = None))]
    fn closed_loop_spectrum(
        &self,
        k: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
    ) -> PyResult<Vec<Complex<f64>>> {
        let k = matrix(k)?;
        let set = match labels {
            Some(c) => channels(self.0.m(), &c)?,
            None => ChannelSet::full(self.0.m()),
        };
        if k.nrows() != self.0.m() || k.ncols() != self.0.n() {
            return Err(PyValueError::new_err(format!(
                "K must be {}x{}, got {}x{}",
                self.0.m(),
                self.0.n(),
                k.nrows(),
                k.ncols()
            )));
        }
        let spectrum = numerics::eigenvalues(&design::projected_closed_loop(&self.0, &k, &set))
            .map_err(err)?;
        Ok(spectrum.eigenvalues)
    }

    fn __repr__(&self) -> String {
        format!("Plant(n={}, m={})", self.0.n(), self.0.m())
    }
}

/// A gain `K = -α_eff·Bᵀ - Â` with set-point offset `v`.
#[pyclass(frozen, name = "GainDesign", module = "neurochan")]
struct GainDesign(design::GainDesign);

#[pymethods]
impl GainDesign {
    #[getter]
    fn k(&self) -> Vec<Vec<f64>> {
        rows(&self.0.k)
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.0.v.as_slice().to_vec()
    }

    #[getter]
    fn ahat(&self) -> Vec<Vec<f64>> {
        rows(&self.0.ahat)
    }

    #[getter]
    fn x_g(&self) -> Vec<f64> {
        self.0.x_g.as_slice().to_vec()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn effective_alpha(&self) -> f64 {
        self.0.effective_alpha()
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "GainDesign(alpha={}, scaling={}, m={}, n={})",
            self.0.alpha,
            self.0.scaling,
            self.0.m(),
            self.0.n()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (plant, ahat, alpha, x_g = None, scaling = "fixed"))]
fn make_gain(
    plant: &Plant,
    ahat: Vec<Vec<f64>>,
    alpha: f64,
    x_g: Option<Vec<f64>>,
    scaling: &str,
) -> PyResult<GainDesign> {
    let x_g = x_g
        .map(vector)
        .unwrap_or_else(|| DVector::zeros(plant.0.n()));
    design::make_gain(
        &plant.0,
        &matrix(ahat)?,
        alpha,
        &x_g,
        parse_scaling(scaling)?,
    )
    .map(GainDesign)
    .map_err(err)
}

/// Hurwitz check of the design on every superset of `root`.
#[pyfunction]
fn certify<'py>(
    py: Python<'py>,
    plant: &Plant,
    gain: &GainDesign,
    root: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let root = channels(plant.0.m(), &root)?;
    let cert = design::certify_resilience(&plant.0, &gain.0, &root).map_err(err)?;
    let checks: Vec<(Vec<usize>, f64, bool)> = cert
        .verified
        .iter()
        .map(|c| (c.set.one_based(), c.hurwitz_margin, c.passes()))
        .collect();
    let d = PyDict::new(py);
    d.set_item("all_pass", cert.all_pass)?;
    d.set_item("checks", checks)?;
    d.set_item("diagnostics", cert.diagnostics)?;
    Ok(d)
}

/// Solves for `K` so that each two-channel subsystem of a 2-state,
/// 3-channel plant has the requested eigenvalue pair. `targets` maps a pair
/// of 1-based channel labels to two complex numbers.
#[pyfunction]
#[pyo3(signature = (plant, targets, seed = 0))]
fn problem_b_solve(
    plant: &Plant,
    targets: BTreeMap<Vec<usize>, (Complex<f64>, Complex<f64>)>,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let mut map = BTreeMap::new();
    for (labels, (a, b)) in targets {
        map.insert(channels(plant.0.m(), &labels)?, [a, b]);
    }
    Ok(rows(
        &design::problem_b_solve(&plant.0, &map, seed).map_err(err)?,
    ))
}

/// Closed-form `E‖x∞ − x_g‖²` for channel noise with covariance `sigma`
/// (identity when omitted).
#[pyfunction]
#[pyo3(signature = (plant, gain, sigma = None))]
fn steady_state_error(
    plant: &Plant,
    gain: &GainDesign,
    sigma: Option<Vec<Vec<f64>>>,
) -> PyResult<f64> {
    let noise = noise(plant.0.m(), sigma)?;
    Ok(uncertainty::steady_state_error(&plant.0, &gain.0, &noise)
        .map_err(err)?
        .mse)
}

/// `(mse, stderr)` from `trials` sampled noise vectors.
#[pyfunction]
#[pyo3(signature = (plant, gain, trials, seed, sigma = None))]
fn monte_carlo_sse(
    py: Python<'_>,
    plant: &Plant,
    gain: &GainDesign,
    trials: usize,
    seed: u64,
    sigma: Option<Vec<Vec<f64>>>,
) -> PyResult<(f64, f64)> {
    let noise = noise(plant.0.m(), sigma)?;
    let est = py
        .detach(|| uncertainty::monte_carlo_sse(&plant.0, &gain.0, &noise, trials, seed))
        .map_err(err)?;
    Ok((est.mse, est.stderr))
}

/// `(new_mse, old_mse)` after appending a channel with input column `b`.
#[pyfunction]
fn augment_channel(plant: &Plant, gain: &GainDesign, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let a = uncertainty::augment_channel(&plant.0, &gain.0, &vector(b)).map_err(err)?;
    Ok((a.new_mse, a.old_mse))
}

/// One run with every channel switching as an independent two-state Markov
/// chain. Returns `times`, `states` and `active` (0/1 masks).
#[pyfunction]
#[pyo3(signature = (plant, gain, delta, epsilon, x0, horizon, seed, dt = intermittency::DEFAULT_DT, stationary_start = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_intermittent<'py>(
    py: Python<'py>,
    plant: &Plant,
    gain: &GainDesign,
    delta: f64,
    epsilon: f64,
    x0: Vec<f64>,
    horizon: f64,
    seed: u64,
    dt: f64,
    stationary_start: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let model = MarkovChannelModel::new(delta, epsilon).map_err(err)?;
    let initial = if stationary_start {
        InitialAvailability::Stationary
    } else {
        InitialAvailability::AllAvailable
    };
    let x0 = vector(x0);
    let traj = py
        .detach(|| {
            let path = intermittency::sample_availability_with(
                &vec![model; plant.0.m()],
                horizon,
                seed,
                initial,
            )?;
            intermittency::simulate_switched(&plant.0, &gain.0, &path, &x0, dt)
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("times", traj.times)?;
    d.set_item(
        "states",
        traj.states
            .iter()
            .map(|x| x.as_slice().to_vec())
            .collect::<Vec<_>>(),
    )?;
    d.set_item(
        "active",
        traj.active
            .iter()
            .map(|s| s.mask_string())
            .collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Columns `(cos 2πk/m, sin 2πk/m)`.
#[pyfunction]
fn circle_frame(m: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&frames::circle_frame(m).map_err(err)?))
}

/// Sphere frame with the given per-angle counts.
#[pyfunction]
fn sphere_frame(counts: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
    let spec = FrameSpec::new(counts).map_err(err)?;
    Ok(rows(&frames::sphere_frame(&spec)))
}

/// Diagonal, largest off-diagonal entry and largest eigenvalue of `BBᵀ`.
#[pyfunction]
fn frame_spectrum<'py>(py: Python<'py>, b: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let s = FrameSpectrum::of(&matrix(b)?, f64::NAN);
    let d = PyDict::new(py);
    d.set_item("gram_diagonal", s.gram_diagonal)?;
    d.set_item("max_off_diagonal", s.max_off_diagonal)?;
    d.set_item("max_eigenvalue", s.max_eigenvalue)?;
    Ok(d)
}

fn target(h: Vec<Vec<f64>>, step: f64, alphabet: &str) -> PyResult<EmulationTarget> {
    EmulationTarget::new(matrix(h)?, step, parse_alphabet(alphabet)?, None).map_err(err)
}

/// The input in the alphabet whose image under the unit-column `B` is
/// closest to `Hx`. Returns `(u, residual)`.
#[pyfunction]
#[pyo3(signature = (plant, h, x, alphabet = "pm_one"))]
fn select_input(
    plant: &Plant,
    h: Vec<Vec<f64>>,
    x: Vec<f64>,
    alphabet: &str,
) -> PyResult<(Vec<i8>, f64)> {
    let t = target(h, 1.0, alphabet)?;
    let x = vector(x);
    let sel = match t.alphabet {
        Alphabet::PmOne => quantize::select_input(&t, &plant.0, &x),
        Alphabet::PmOneOrOff => quantize::select_gated(&t, &plant.0, &x),
    }
    .map_err(err)?;
    Ok((sel.u, sel.residual))
}

/// Iterates `x ← x + h(Ax + Bu)` with the selected input at each step.
/// Returns `states`, `inputs` and `residuals`.
#[pyfunction]
#[pyo3(signature = (plant, h, step, x0, steps, alphabet = "pm_one"))]
fn simulate_emulation<'py>(
    py: Python<'py>,
    plant: &Plant,
    h: Vec<Vec<f64>>,
    step: f64,
    x0: Vec<f64>,
    steps: usize,
    alphabet: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let t = target(h, step, alphabet)?;
    let x0 = vector(x0);
    let traj = py
        .detach(|| quantize::simulate_emulation(&t, &plant.0, &x0, steps))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item(
        "states",
        traj.states
            .iter()
            .map(|x| x.as_slice().to_vec())
            .collect::<Vec<_>>(),
    )?;
    d.set_item("inputs", traj.inputs)?;
    d.set_item("residuals", traj.residuals)?;
    Ok(d)
}

#[pymodule]
fn neurochan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Plant>()?;
    m.add_class::<GainDesign>()?;
    m.add_function(wrap_pyfunction!(make_gain, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(problem_b_solve, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_error, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_sse, m)?)?;
    m.add_function(wrap_pyfunction!(augment_channel, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_intermittent, m)?)?;
    m.add_function(wrap_pyfunction!(circle_frame, m)?)?;
    m.add_function(wrap_pyfunction!(sphere_frame, m)?)?;
    m.add_function(wrap_pyfunction!(frame_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(select_input, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_emulation, m)?)?;
    Ok(())
}
