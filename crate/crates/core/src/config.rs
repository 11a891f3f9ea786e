//! Run configuration document (`twinbeam-config/1`).
//!
//! Strict JSON: every object rejects unknown keys, and the `version` field
//! must match exactly. Omitted sections take the values of the nominal
//! experiment.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::AnalyzerSettings;
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::model::{
    self, BeamPairMetadata, InterferometerConfig, NopoParams, DEFAULT_PHI_TOLERANCE,
    DEFAULT_THETA_TOLERANCE,
};
use crate::synth::{DetectionChain, SynthConfig};

pub const CONFIG_VERSION: &str = "twinbeam-config/1";

/// NOPO parameters, either physical (T, δ, P, P₀) or derived (ξ, σ).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NopoSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transmission: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intracavity_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pump_power_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_power_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub bandwidth_hz: f64,
    pub detection_efficiency: f64,
}

impl NopoSpec {
    pub fn experiment() -> Self {
        Self {
            xi: Some(0.84),
            sigma: Some(1.38),
            bandwidth_hz: 24.7e6,
            detection_efficiency: 0.88,
            ..Self::default()
        }
    }

    pub fn resolve(&self) -> Result<NopoParams> {
        let (t, d) = match (self.xi, self.transmission, self.intracavity_loss) {
            (Some(xi), None, None) => (xi, 1.0 - xi),
            (None, Some(t), Some(d)) => (t, d),
            _ => {
                return Err(Error::Schema(
                    "nopo: give either `xi` or both `transmission` and `intracavity_loss`".into(),
                ))
            }
        };
        let (p, p0) = match (self.sigma, self.pump_power_w, self.threshold_power_w) {
            (Some(s), None, None) => (s * s, 1.0),
            (None, Some(p), Some(p0)) => (p, p0),
            _ => {
                return Err(Error::Schema(
                    "nopo: give either `sigma` or both `pump_power_w` and `threshold_power_w`".into(),
                ))
            }
        };
        if self.xi.is_some() && !(t > 0.0 && t <= 1.0) {
            return Err(Error::domain(format!("xi must lie in (0, 1], got {t}")));
        }
        NopoParams::new(t, d, self.bandwidth_hz, p, p0, self.detection_efficiency)
    }
}

/// Where the detection efficiency enters the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaPlacement {
    /// η is folded into the synthesized spectra.
    #[default]
    Spectrum,
    /// Spectra are synthesized with η = 1 and losses applied at the detector.
    Detector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_efficiency: Option<f64>,
    #[serde(default = "one")]
    pub mode_match: f64,
    #[serde(default)]
    pub enl: f64,
    #[serde(default)]
    pub excess_phase_noise: f64,
}

fn one() -> f64 {
    1.0
}

/// Electronics floor 3.9 dB below the SNL.
pub fn experiment_enl() -> f64 {
    model::from_db(-3.9)
}

impl ChainSpec {
    pub fn amplitude_experiment() -> Self {
        Self {
            detection_efficiency: None,
            mode_match: 1.0,
            enl: experiment_enl(),
            excess_phase_noise: 0.0,
        }
    }

    pub fn phase_experiment() -> Self {
        Self {
            detection_efficiency: None,
            mode_match: 0.90,
            enl: experiment_enl(),
            excess_phase_noise: 0.04,
        }
    }

    fn resolve(&self, placement: EtaPlacement, nopo_eta: f64, which: &str) -> Result<DetectionChain> {
        let eta = match (placement, self.detection_efficiency) {
            (EtaPlacement::Spectrum, None) => 1.0,
            (EtaPlacement::Spectrum, Some(1.0)) => 1.0,
            (EtaPlacement::Spectrum, Some(e)) => {
                return Err(Error::Config(format!(
                    "{which}: detection efficiency {e} would be applied twice; \
                     η is already inside the spectra (eta_placement = \"spectrum\")"
                )))
            }
            (EtaPlacement::Detector, Some(e)) => e,
            (EtaPlacement::Detector, None) => nopo_eta,
        };
        let chain = DetectionChain {
            detection_efficiency: eta,
            mode_match: self.mode_match,
            enl: self.enl,
            excess_phase_noise: self.excess_phase_noise,
        };
        chain.validate()?;
        Ok(chain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerSpec {
    pub analysis_frequency_hz: f64,
    /// Matched to the analysis frequency when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_length_difference_m: Option<f64>,
    /// π/2 + 2kπ when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_phase_rad: Option<f64>,
    #[serde(default)]
    pub winding: i64,
    #[serde(default = "theta_tol")]
    pub theta_tolerance: f64,
    #[serde(default = "phi_tol")]
    pub phi_tolerance: f64,
}

fn theta_tol() -> f64 {
    DEFAULT_THETA_TOLERANCE
}

fn phi_tol() -> f64 {
    DEFAULT_PHI_TOLERANCE
}

impl Default for InterferometerSpec {
    fn default() -> Self {
        Self {
            analysis_frequency_hz: 20e6,
            arm_length_difference_m: None,
            dc_phase_rad: None,
            winding: 0,
            theta_tolerance: DEFAULT_THETA_TOLERANCE,
            phi_tolerance: DEFAULT_PHI_TOLERANCE,
        }
    }
}

impl InterferometerSpec {
    pub fn resolve(&self) -> Result<InterferometerConfig> {
        let f = self.analysis_frequency_hz;
        Ok(InterferometerConfig {
            analysis_frequency_hz: f,
            arm_length_difference_m: match self.arm_length_difference_m {
                Some(dl) => dl,
                None => model::arm_length_difference(f)?,
            },
            dc_phase_rad: self
                .dc_phase_rad
                .unwrap_or(FRAC_PI_2 + TAU * self.winding as f64),
            winding: self.winding,
            theta_tolerance: self.theta_tolerance,
            phi_tolerance: self.phi_tolerance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_trace_path")]
    pub trace: PathBuf,
}

fn default_trace_path() -> PathBuf {
    PathBuf::from("trace.twbm")
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            trace: default_trace_path(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    #[serde(default = "NopoSpec::experiment")]
    pub nopo: NopoSpec,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub eta_placement: EtaPlacement,
    #[serde(default = "ChainSpec::amplitude_experiment")]
    pub amplitude_chain: ChainSpec,
    #[serde(default = "ChainSpec::phase_experiment")]
    pub phase_chain: ChainSpec,
    /// Derived from the sample rate when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyzer: Option<AnalyzerSettings>,
    #[serde(default)]
    pub interferometer: InterferometerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BeamPairMetadata>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION.to_string(),
            nopo: NopoSpec::experiment(),
            synth: SynthConfig::default(),
            eta_placement: EtaPlacement::Spectrum,
            amplitude_chain: ChainSpec::amplitude_experiment(),
            phase_chain: ChainSpec::phase_experiment(),
            analyzer: None,
            interferometer: InterferometerSpec::default(),
            metadata: Some(BeamPairMetadata {
                signal_wavelength_nm: 1080.215,
                idler_wavelength_nm: 1079.130,
                total_output_power_mw: 22.0,
            }),
            output: OutputPaths::default(),
        }
    }
}

/// Validated, fully-resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub nopo: NopoParams,
    pub synth: SynthConfig,
    pub eta_placement: EtaPlacement,
    pub amplitude_chain: DetectionChain,
    pub phase_chain: DetectionChain,
    pub analyzer: AnalyzerSettings,
    pub interferometer: InterferometerConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Schema(format!(
                "unsupported config version `{}`, expected `{CONFIG_VERSION}`",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn analyzer_settings(&self) -> AnalyzerSettings {
        self.analyzer
            .unwrap_or_else(|| AnalyzerSettings::experiment(self.synth.sample_rate_hz))
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let nopo = self.nopo.resolve()?;
        self.synth.validate()?;
        let eta = nopo.detection_efficiency();
        let amplitude_chain = self.amplitude_chain.resolve(self.eta_placement, eta, "amplitude_chain")?;
        let phase_chain = self.phase_chain.resolve(self.eta_placement, eta, "phase_chain")?;
        let analyzer = self.analyzer_settings();
        analyzer.validate(self.synth.sample_rate_hz)?;
        let interferometer = self.interferometer.resolve()?;
        Ok(ResolvedRun {
            nopo,
            synth: self.synth,
            eta_placement: self.eta_placement,
            amplitude_chain,
            phase_chain,
            analyzer,
            interferometer,
        })
    }
}
