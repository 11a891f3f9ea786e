//! Closed-form physics of an above-threshold NOPO twin-beam source.
//!
//! All spectra and variances are expressed relative to the shot-noise limit
//! of the combination they describe, so the SNL is always `1.0` and a value
//! below one is quantum-correlated noise.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, LockCondition, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default acceptance window on the rf phase θ, radians.
pub const DEFAULT_THETA_TOLERANCE: f64 = 0.05;
/// Default acceptance window on the dc phase φ, radians.
pub const DEFAULT_PHI_TOLERANCE: f64 = 0.05;

/// Physical parameters of the non-degenerate OPO and its detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NopoParams {
    transmission: f64,
    intracavity_loss: f64,
    bandwidth_hz: f64,
    pump_power_w: f64,
    threshold_power_w: f64,
    detection_efficiency: f64,
}

impl NopoParams {
    pub fn new(
        transmission: f64,
        intracavity_loss: f64,
        bandwidth_hz: f64,
        pump_power_w: f64,
        threshold_power_w: f64,
        detection_efficiency: f64,
    ) -> Result<Self> {
        // validates T and δ
        output_coupling_efficiency(transmission, intracavity_loss)?;
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::domain(format!(
                "cavity bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        if !(threshold_power_w > 0.0) {
            return Err(Error::domain(format!(
                "threshold power must be positive, got {threshold_power_w}"
            )));
        }
        if !(pump_power_w > threshold_power_w) {
            return Err(Error::BelowThreshold {
                pump: pump_power_w,
                threshold: threshold_power_w,
            });
        }
        check_efficiency("detection efficiency", detection_efficiency)?;
        Ok(Self {
            transmission,
            intracavity_loss,
            bandwidth_hz,
            pump_power_w,
            threshold_power_w,
            detection_efficiency,
        })
    }

    /// Builds parameters from the derived quantities (ξ, B, σ, η).
    ///
    /// The cavity is represented with `T = ξ`, `δ = 1 − ξ`, `P₀ = 1 W` and
    /// `P = σ² W`, which reproduces ξ and σ to rounding.
    pub fn from_derived(xi: f64, bandwidth_hz: f64, sigma: f64, eta: f64) -> Result<Self> {
        check_efficiency("output coupling efficiency", xi)?;
        if !(sigma > 1.0 && sigma.is_finite()) {
            return Err(Error::domain(format!(
                "pump parameter must exceed 1 above threshold, got {sigma}"
            )));
        }
        Self::new(xi, 1.0 - xi, bandwidth_hz, sigma * sigma, 1.0, eta)
    }

    /// Parameters of the reported experiment at its nominal operating point:
    /// ξ = 0.84, B = 24.7 MHz, σ = 1.38, η = 0.88.
    pub fn experiment() -> Self {
        Self::from_derived(0.84, 24.7e6, 1.38, 0.88).expect("nominal parameters are valid")
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    pub fn intracavity_loss(&self) -> f64 {
        self.intracavity_loss
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn pump_power_w(&self) -> f64 {
        self.pump_power_w
    }

    pub fn threshold_power_w(&self) -> f64 {
        self.threshold_power_w
    }

    pub fn detection_efficiency(&self) -> f64 {
        self.detection_efficiency
    }

    /// Output coupling efficiency ξ = T/(T+δ).
    pub fn xi(&self) -> f64 {
        self.transmission / (self.transmission + self.intracavity_loss)
    }

    /// Pump parameter σ = √(P/P₀).
    pub fn sigma(&self) -> f64 {
        (self.pump_power_w / self.threshold_power_w).sqrt()
    }

    /// Same cavity with the detection efficiency replaced.
    pub fn with_detection_efficiency(mut self, eta: f64) -> Result<Self> {
        check_efficiency("detection efficiency", eta)?;
        self.detection_efficiency = eta;
        Ok(self)
    }

    /// The three combinations the spectra actually depend on.
    pub fn spectral(&self) -> SpectralParams {
        SpectralParams {
            eta_xi: self.detection_efficiency * self.xi(),
            bandwidth_hz: self.bandwidth_hz,
            sigma: self.sigma(),
        }
    }
}

/// The identifiable parameter triple of the twin-beam spectra.
///
/// η and ξ only ever appear as their product, so this is what the
/// spectra are computed from and what a fit can recover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub eta_xi: f64,
    pub bandwidth_hz: f64,
    pub sigma: f64,
}

impl SpectralParams {
    pub fn new(eta_xi: f64, bandwidth_hz: f64, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta_xi) {
            return Err(Error::domain(format!("ηξ must lie in [0, 1], got {eta_xi}")));
        }
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(Error::domain(format!(
                "cavity bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        if !(sigma >= 1.0) {
            return Err(Error::domain(format!("pump parameter must be ≥ 1, got {sigma}")));
        }
        Ok(Self {
            eta_xi,
            bandwidth_hz,
            sigma,
        })
    }
}

impl From<NopoParams> for SpectralParams {
    fn from(p: NopoParams) -> Self {
        p.spectral()
    }
}

impl From<&NopoParams> for SpectralParams {
    fn from(p: &NopoParams) -> Self {
        p.spectral()
    }
}

fn check_efficiency(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must lie in (0, 1], got {v}")))
    }
}

/// ξ = T/(T+δ).
pub fn output_coupling_efficiency(transmission: f64, intracavity_loss: f64) -> Result<f64> {
    if !(transmission > 0.0) {
        return Err(Error::domain(format!(
            "output coupler transmission must be positive, got {transmission}"
        )));
    }
    if !(intracavity_loss >= 0.0) {
        return Err(Error::domain(format!(
            "intracavity loss must be non-negative, got {intracavity_loss}"
        )));
    }
    Ok(transmission / (transmission + intracavity_loss))
}

/// σ = √(P/P₀); the spectra model is only valid at or above threshold.
pub fn pump_parameter(pump_power_w: f64, threshold_power_w: f64) -> Result<f64> {
    if !(threshold_power_w > 0.0) {
        return Err(Error::domain(format!(
            "threshold power must be positive, got {threshold_power_w}"
        )));
    }
    if !(pump_power_w >= threshold_power_w) {
        return Err(Error::BelowThreshold {
            pump: pump_power_w,
            threshold: threshold_power_w,
        });
    }
    Ok((pump_power_w / threshold_power_w).sqrt())
}

/// Intensity-difference noise spectrum `1 − ηξ/(1 + (f/B)²)`.
pub fn intensity_diff_spectrum(params: &SpectralParams, f_hz: f64) -> f64 {
    let u = f_hz / params.bandwidth_hz;
    1.0 - params.eta_xi / (1.0 + u * u)
}

/// Phase-sum noise spectrum `1 − ηξ/(σ² + (f/B)²)`; defined above threshold only.
pub fn phase_sum_spectrum(params: &SpectralParams, f_hz: f64) -> Result<f64> {
    if !(params.sigma > 1.0) {
        return Err(Error::domain(format!(
            "phase-sum spectrum requires σ > 1, got {}",
            params.sigma
        )));
    }
    let u = f_hz / params.bandwidth_hz;
    Ok(1.0 - params.eta_xi / (params.sigma * params.sigma + u * u))
}

/// Linear power relative to SNL → dB (negative below SNL).
pub fn db_rel_snl(v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::domain(format!(
            "dB conversion needs a positive power, got {v}"
        )));
    }
    Ok(10.0 * v.log10())
}

/// dB relative to SNL → linear power.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Removes a white electronics floor shared by the measured and SNL traces.
///
/// Both traces read `v(1−e) + e` for true level `v`, so the corrected value is
/// `(m − e)/(1 − e)`.
pub fn correct_for_electronic_noise(measured: f64, enl: f64) -> Result<f64> {
    if !(enl >= 0.0) {
        return Err(Error::domain(format!(
            "electronics noise level must be non-negative, got {enl}"
        )));
    }
    if enl >= 1.0 {
        return Err(Error::domain(format!(
            "electronics noise level {enl} at or above the SNL is unsupported"
        )));
    }
    if !(measured > enl) {
        return Err(Error::BelowElectronicsFloor { measured, enl });
    }
    Ok((measured - enl) / (1.0 - enl))
}

/// Inverse of [`correct_for_electronic_noise`]: what a trace at level `v`
/// reads with an electronics floor `enl` added.
pub fn add_electronic_noise(v: f64, enl: f64) -> f64 {
    v * (1.0 - enl) + enl
}

/// Vacuum admixture from imperfect mode matching, `μv + (1−μ)`.
pub fn mode_match_penalty(v: f64, mode_match: f64) -> Result<f64> {
    check_efficiency("mode-matching efficiency", mode_match)?;
    if !(v > 0.0) {
        return Err(Error::domain(format!("variance must be positive, got {v}")));
    }
    Ok(mode_match * v + (1.0 - mode_match))
}

/// Undoes [`mode_match_penalty`].
pub fn remove_mode_match_penalty(v: f64, mode_match: f64) -> Result<f64> {
    check_efficiency("mode-matching efficiency", mode_match)?;
    let out = (v - (1.0 - mode_match)) / mode_match;
    if !(out > 0.0) {
        return Err(Error::domain(format!(
            "variance {v} is below the vacuum admixture floor {} for μ = {mode_match}",
            1.0 - mode_match
        )));
    }
    Ok(out)
}

/// Variances of the amplitude-difference and phase-sum combinations, each
/// relative to its own SNL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureVariancePair {
    pub amplitude_diff: f64,
    pub phase_sum: f64,
}

impl QuadratureVariancePair {
    pub fn new(amplitude_diff: f64, phase_sum: f64) -> Result<Self> {
        if !(amplitude_diff > 0.0 && phase_sum > 0.0) {
            return Err(Error::domain(format!(
                "variances must be positive, got ({amplitude_diff}, {phase_sum})"
            )));
        }
        Ok(Self {
            amplitude_diff,
            phase_sum,
        })
    }
}

/// Outcome of the inseparability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuanVerdict {
    pub sum: f64,
    pub entangled: bool,
}

/// SNL of the two combined variances.
pub const DUAN_BOUND: f64 = 2.0;

/// Duan inseparability criterion: the state is entangled when the summed
/// variances lie strictly below 2.
pub fn duan_certify(pair: &QuadratureVariancePair) -> DuanVerdict {
    let sum = pair.amplitude_diff + pair.phase_sum;
    DuanVerdict {
        sum,
        entangled: sum < DUAN_BOUND,
    }
}

/// Arm-length difference that puts the rf phase at π for analysis frequency `f`.
pub fn arm_length_difference(f_hz: f64) -> Result<f64> {
    if !(f_hz > 0.0) {
        return Err(Error::domain(format!(
            "analysis frequency must be positive, got {f_hz}"
        )));
    }
    Ok(SPEED_OF_LIGHT / (2.0 * f_hz))
}

/// θ = ΩΔL/c.
pub fn rf_phase(arm_length_difference_m: f64, f_hz: f64) -> f64 {
    TAU * f_hz * arm_length_difference_m / SPEED_OF_LIGHT
}

/// Unbalanced Mach-Zehnder geometry and lock state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    pub analysis_frequency_hz: f64,
    pub arm_length_difference_m: f64,
    pub dc_phase_rad: f64,
    pub winding: i64,
    pub theta_tolerance: f64,
    pub phi_tolerance: f64,
}

impl InterferometerConfig {
    /// Interferometer locked at φ = π/2 + 2kπ with ΔL matched to `f_hz`.
    pub fn locked(f_hz: f64, winding: i64) -> Result<Self> {
        Ok(Self {
            analysis_frequency_hz: f_hz,
            arm_length_difference_m: arm_length_difference(f_hz)?,
            dc_phase_rad: FRAC_PI_2 + TAU * winding as f64,
            winding,
            theta_tolerance: DEFAULT_THETA_TOLERANCE,
            phi_tolerance: DEFAULT_PHI_TOLERANCE,
        })
    }

    pub fn theta(&self) -> f64 {
        rf_phase(self.arm_length_difference_m, self.analysis_frequency_hz)
    }

    /// Phase-quadrature sensitivity `sin(θ/2)`; 1 at θ = π.
    pub fn sensitivity(&self) -> f64 {
        (self.theta() / 2.0).sin()
    }

    /// Checks both lock conditions, reporting the first one violated.
    pub fn check_lock(&self) -> Result<()> {
        if !(self.analysis_frequency_hz > 0.0) || !(self.arm_length_difference_m > 0.0) {
            return Err(Error::Config(format!(
                "interferometer needs positive frequency and arm difference, got f = {} Hz, ΔL = {} m",
                self.analysis_frequency_hz, self.arm_length_difference_m
            )));
        }
        let phi_dev = (self.dc_phase_rad.rem_euclid(TAU) - FRAC_PI_2).abs();
        if !(phi_dev <= self.phi_tolerance) {
            return Err(Error::OutOfLock {
                condition: LockCondition::DcPhase,
                deviation: phi_dev,
                tolerance: self.phi_tolerance,
            });
        }
        let theta_dev = (self.theta() - PI).abs();
        if !(theta_dev <= self.theta_tolerance) {
            return Err(Error::OutOfLock {
                condition: LockCondition::RfPhase,
                deviation: theta_dev,
                tolerance: self.theta_tolerance,
            });
        }
        Ok(())
    }
}

/// Informational record of the two output beams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamPairMetadata {
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub total_output_power_mw: f64,
}

impl BeamPairMetadata {
    pub fn new(signal_nm: f64, idler_nm: f64, total_mw: f64) -> Result<Self> {
        if !(signal_nm > 0.0 && idler_nm > 0.0) {
            return Err(Error::domain("wavelengths must be positive"));
        }
        Ok(Self {
            signal_wavelength_nm: signal_nm,
            idler_wavelength_nm: idler_nm,
            total_output_power_mw: total_mw,
        })
    }

    pub fn wavelength_split_nm(&self) -> f64 {
        (self.signal_wavelength_nm - self.idler_wavelength_nm).abs()
    }
}
