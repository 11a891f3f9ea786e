//! Python bindings for the `twinbeam` crate.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use twinbeam::dsp::{self, AnalyzerSettings};
use twinbeam::fit::{self, FitOptions, FitProblem};
use twinbeam::model::{self, QuadratureVariancePair};
use twinbeam::synth::{self, SynthConfig};

create_exception!(twinbeam_py, TwinbeamError, PyValueError);

fn err(e: twinbeam::Error) -> PyErr {
    TwinbeamError::new_err(e.to_string())
}

/// Spectral parameters (ηξ, B, σ).
#[pyclass(name = "SpectralParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PySpectralParams(model::SpectralParams);

#[pymethods]
impl PySpectralParams {
    #[new]
    fn new(eta_xi: f64, bandwidth_hz: f64, sigma: f64) -> PyResult<Self> {
        model::SpectralParams::new(eta_xi, bandwidth_hz, sigma)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn eta_xi(&self) -> f64 {
        self.0.eta_xi
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.0.bandwidth_hz
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    fn intensity(&self, f_hz: f64) -> f64 {
        model::intensity_diff_spectrum(&self.0, f_hz)
    }

    fn phase(&self, f_hz: f64) -> PyResult<f64> {
        model::phase_sum_spectrum(&self.0, f_hz).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SpectralParams(eta_xi={}, bandwidth_hz={}, sigma={})",
            self.0.eta_xi, self.0.bandwidth_hz, self.0.sigma
        )
    }
}

/// Physical NOPO parameters.
#[pyclass(name = "NopoParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyNopoParams(model::NopoParams);

#[pymethods]
impl PyNopoParams {
    #[new]
    fn new(
        transmission: f64,
        intracavity_loss: f64,
        bandwidth_hz: f64,
        pump_power_w: f64,
        threshold_power_w: f64,
        detection_efficiency: f64,
    ) -> PyResult<Self> {
        model::NopoParams::new(
            transmission,
            intracavity_loss,
            bandwidth_hz,
            pump_power_w,
            threshold_power_w,
            detection_efficiency,
        )
        .map(Self)
        .map_err(err)
    }

    #[staticmethod]
    fn from_derived(xi: f64, bandwidth_hz: f64, sigma: f64, eta: f64) -> PyResult<Self> {
        model::NopoParams::from_derived(xi, bandwidth_hz, sigma, eta)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn experiment() -> Self {
        Self(model::NopoParams::experiment())
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.0.xi()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma()
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.0.bandwidth_hz()
    }

    #[getter]
    fn detection_efficiency(&self) -> f64 {
        self.0.detection_efficiency()
    }

    fn spectral(&self) -> PySpectralParams {
        PySpectralParams(self.0.spectral())
    }
}

#[pyclass(name = "DuanVerdict", frozen, get_all, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyDuanVerdict {
    sum: f64,
    entangled: bool,
}

#[pyclass(name = "FitResult", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyFitResult {
    eta_xi: f64,
    bandwidth_hz: f64,
    sigma: Option<f64>,
    residual_norm: f64,
    covariance: [[f64; 3]; 3],
    converged: bool,
    iterations: usize,
    unidentifiable: Vec<String>,
}

#[pyfunction]
fn intensity_diff_spectrum(params: &PySpectralParams, f_hz: f64) -> f64 {
    model::intensity_diff_spectrum(&params.0, f_hz)
}

#[pyfunction]
fn phase_sum_spectrum(params: &PySpectralParams, f_hz: f64) -> PyResult<f64> {
    model::phase_sum_spectrum(&params.0, f_hz).map_err(err)
}

#[pyfunction]
fn db_rel_snl(v: f64) -> PyResult<f64> {
    model::db_rel_snl(v).map_err(err)
}

#[pyfunction]
fn from_db(db: f64) -> f64 {
    model::from_db(db)
}

#[pyfunction]
fn correct_for_electronic_noise(measured: f64, enl: f64) -> PyResult<f64> {
    model::correct_for_electronic_noise(measured, enl).map_err(err)
}

#[pyfunction]
fn mode_match_penalty(v: f64, mode_match: f64) -> PyResult<f64> {
    model::mode_match_penalty(v, mode_match).map_err(err)
}

#[pyfunction]
fn remove_mode_match_penalty(v: f64, mode_match: f64) -> PyResult<f64> {
    model::remove_mode_match_penalty(v, mode_match).map_err(err)
}

#[pyfunction]
fn duan_certify(amplitude_diff: f64, phase_sum: f64) -> PyResult<PyDuanVerdict> {
    let pair = QuadratureVariancePair::new(amplitude_diff, phase_sum).map_err(err)?;
    let v = model::duan_certify(&pair);
    Ok(PyDuanVerdict {
        sum: v.sum,
        entangled: v.entangled,
    })
}

#[pyfunction]
fn arm_length_difference(f_hz: f64) -> PyResult<f64> {
    model::arm_length_difference(f_hz).map_err(err)
}

#[pyfunction]
fn rf_phase(arm_length_difference_m: f64, f_hz: f64) -> f64 {
    model::rf_phase(arm_length_difference_m, f_hz)
}

/// Returns a dict with `xminus`, `xplus`, `yplus`, `yminus` and
/// `snl_reference` sample lists.
#[pyfunction]
#[pyo3(signature = (params, sample_rate_hz=100e6, num_samples=1 << 22, seed=0))]
fn synthesize_twin_beams<'py>(
    py: Python<'py>,
    params: &PySpectralParams,
    sample_rate_hz: f64,
    num_samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SynthConfig {
        sample_rate_hz,
        num_samples,
        seed,
        ..SynthConfig::default()
    };
    let t = py
        .detach(|| synth::synthesize_twin_beams(&params.0, &cfg))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("xminus", t.xminus)?;
    out.set_item("xplus", t.xplus)?;
    out.set_item("yplus", t.yplus)?;
    out.set_item("yminus", t.yminus)?;
    out.set_item("snl_reference", t.snl_reference)?;
    Ok(out)
}

/// Welch PSD with analyzer RBW/VBW emulation. Returns
/// `(frequencies, psd, num_averages)`.
#[pyfunction]
#[pyo3(signature = (series, sample_rate_hz, rbw_hz=10e3, vbw_hz=30.0))]
fn welch_psd(
    py: Python<'_>,
    series: Vec<f64>,
    sample_rate_hz: f64,
    rbw_hz: f64,
    vbw_hz: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, usize)> {
    let settings = AnalyzerSettings {
        rbw_hz,
        vbw_hz,
        ..AnalyzerSettings::experiment(sample_rate_hz)
    };
    let est = py
        .detach(|| dsp::welch_psd(&series, sample_rate_hz, &settings))
        .map_err(err)?;
    Ok((est.frequencies, est.psd, est.num_averages))
}

#[pyfunction]
#[pyo3(signature = (frequencies, s_i=None, s_p=None, variance_weights=false))]
fn fit_spectra(
    py: Python<'_>,
    frequencies: Vec<f64>,
    s_i: Option<Vec<f64>>,
    s_p: Option<Vec<f64>>,
    variance_weights: bool,
) -> PyResult<PyFitResult> {
    let mut problem = FitProblem::new(frequencies, s_i, s_p).map_err(err)?;
    if variance_weights {
        problem = problem.with_variance_weights();
    }
    let r = py
        .detach(|| fit::fit_spectra(&problem, None, &FitOptions::default()))
        .map_err(err)?;
    Ok(PyFitResult {
        eta_xi: r.eta_xi,
        bandwidth_hz: r.bandwidth_hz,
        sigma: r.sigma,
        residual_norm: r.residual_norm,
        covariance: r.covariance,
        converged: r.converged,
        iterations: r.iterations,
        unidentifiable: r.unidentifiable,
    })
}

#[pymodule]
fn twinbeam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TwinbeamError", m.py().get_type::<TwinbeamError>())?;
    m.add("SPEED_OF_LIGHT", model::SPEED_OF_LIGHT)?;
    m.add_class::<PySpectralParams>()?;
    m.add_class::<PyNopoParams>()?;
    m.add_class::<PyDuanVerdict>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(intensity_diff_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(phase_sum_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(db_rel_snl, m)?)?;
    m.add_function(wrap_pyfunction!(from_db, m)?)?;
    m.add_function(wrap_pyfunction!(correct_for_electronic_noise, m)?)?;
    m.add_function(wrap_pyfunction!(mode_match_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(remove_mode_match_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(duan_certify, m)?)?;
    m.add_function(wrap_pyfunction!(arm_length_difference, m)?)?;
    m.add_function(wrap_pyfunction!(rf_phase, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_twin_beams, m)?)?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(fit_spectra, m)?)?;
    Ok(())
}
