//! Command-level workflow: spectra tables, trace synthesis, analysis and
//! certification. Each step is a pure function of its inputs; file handling
//! lives in the CLI.

use serde::{Deserialize, Serialize};

use crate::config::{EtaPlacement, RunConfig};
use crate::dsp::{band_power_rel_snl, welch_psd, AnalyzerSettings};
use crate::error::{Error, Result};
use crate::io::{SpectrumTable, TraceFile};
use crate::model::{
    self, correct_for_electronic_noise, duan_certify, intensity_diff_spectrum, phase_sum_spectrum,
    remove_mode_match_penalty, DuanVerdict, QuadratureVariancePair, SpectralParams, DUAN_BOUND,
};
use crate::synth::{mz_measure, synthesize_twin_beams, Quadrature};

/// Channel names written by [`simulate`], in file order.
pub const TRACE_CHANNELS: [&str; 8] = [
    "xminus",
    "yplus",
    "amp_signal",
    "amp_snl",
    "amp_enl",
    "phase_signal",
    "phase_snl",
    "phase_enl",
];

/// Evaluates both analytic spectra on a linear grid.
///
/// `f_min == f_max` yields a single row. Otherwise at least two points are
/// required.
pub fn spectrum_table(params: &SpectralParams, f_min: f64, f_max: f64, points: usize) -> Result<SpectrumTable> {
    if !(f_min.is_finite() && f_max.is_finite()) || f_min < 0.0 || f_max < f_min {
        return Err(Error::Usage(format!(
            "invalid frequency range [{f_min}, {f_max}]"
        )));
    }
    let f_hz: Vec<f64> = if f_min == f_max {
        vec![f_min]
    } else {
        if points < 2 {
            return Err(Error::Usage(format!(
                "need at least 2 points for a range, got {points}"
            )));
        }
        let step = (f_max - f_min) / (points - 1) as f64;
        (0..points)
            .map(|k| if k + 1 == points { f_max } else { f_min + step * k as f64 })
            .collect()
    };
    let s_i = f_hz.iter().map(|&f| intensity_diff_spectrum(params, f)).collect();
    let s_p = f_hz
        .iter()
        .map(|&f| phase_sum_spectrum(params, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumTable {
        f_hz,
        s_i: Some(s_i),
        s_p: Some(s_p),
    })
}

/// Spectra handed to the synthesizer, with η folded in or not depending on
/// where the config places the detection losses.
pub fn synthesis_spectra(cfg: &RunConfig) -> Result<SpectralParams> {
    let run = cfg.resolve()?;
    match run.eta_placement {
        EtaPlacement::Spectrum => Ok(run.nopo.spectral()),
        EtaPlacement::Detector => SpectralParams::new(run.nopo.xi(), run.nopo.bandwidth_hz(), run.nopo.sigma()),
    }
}

/// Synthesizes both beams and pushes them through the two detection chains.
///
/// `seed` overrides the config seed when given.
pub fn simulate(cfg: &RunConfig, seed: Option<u64>) -> Result<TraceFile> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.synth.seed = s;
    }
    let run = cfg.resolve()?;
    let spectra = synthesis_spectra(&cfg)?;
    let traces = synthesize_twin_beams(&spectra, &run.synth)?;
    let seed = run.synth.seed;
    let amp = mz_measure(&traces, Quadrature::Amplitude, &run.interferometer, &run.amplitude_chain, seed)?;
    let phase = mz_measure(&traces, Quadrature::Phase, &run.interferometer, &run.phase_chain, seed)?;

    let mut file = TraceFile::new(run.synth.sample_rate_hz);
    file.push("xminus", &traces.xminus)?;
    file.push("yplus", &traces.yplus)?;
    file.push("amp_signal", &amp.signal)?;
    file.push("amp_snl", &amp.snl)?;
    file.push("amp_enl", &amp.enl)?;
    file.push("phase_signal", &phase.signal)?;
    file.push("phase_snl", &phase.snl)?;
    file.push("phase_enl", &phase.enl)?;
    Ok(file)
}

/// Spectrum-analyzer readings of one channel pair, relative to its SNL trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelReading {
    pub signal_rel_snl: f64,
    pub signal_db: f64,
    /// Absent when the trace carries no electronics-noise channel or it is
    /// identically zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enl_rel_snl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enl_db: Option<f64>,
}

impl ChannelReading {
    pub fn from_rel_snl(signal: f64, enl: Option<f64>) -> Result<Self> {
        Ok(Self {
            signal_rel_snl: signal,
            signal_db: model::db_rel_snl(signal)?,
            enl_rel_snl: enl,
            enl_db: enl.map(model::db_rel_snl).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub f0_hz: f64,
    #[serde(default)]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub num_averages: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyzer: Option<AnalyzerSettings>,
    pub amplitude: ChannelReading,
    pub phase: ChannelReading,
    #[serde(default)]
    pub trace_sha256: String,
    #[serde(default)]
    pub config_hash: String,
}

fn read_channel(
    trace: &TraceFile,
    prefix: &str,
    settings: &AnalyzerSettings,
    f0: f64,
) -> Result<(ChannelReading, usize)> {
    let fs = trace.sample_rate_hz;
    let signal = welch_psd(&trace.series(&format!("{prefix}_signal"))?, fs, settings)?;
    let snl = welch_psd(&trace.series(&format!("{prefix}_snl"))?, fs, settings)?;
    let rel = model::from_db(band_power_rel_snl(&signal, &snl, f0)?);
    let enl = match trace.channel(&format!("{prefix}_enl")) {
        Ok(_) => {
            let est = welch_psd(&trace.series(&format!("{prefix}_enl"))?, fs, settings)?;
            let r = model::from_db(band_power_rel_snl(&est, &snl, f0)?);
            (r > 0.0).then_some(r)
        }
        Err(_) => None,
    };
    Ok((ChannelReading::from_rel_snl(rel, enl)?, signal.num_averages))
}

/// Reads the amplitude-difference and phase-sum channels at `f0_hz`.
pub fn analyze(trace: &TraceFile, settings: &AnalyzerSettings, f0_hz: f64) -> Result<AnalysisReport> {
    let nyquist = trace.sample_rate_hz / 2.0;
    if !(f0_hz > 0.0 && f0_hz < nyquist) {
        return Err(Error::Usage(format!(
            "f0 = {f0_hz} Hz lies outside (0, {nyquist}) Hz"
        )));
    }
    settings.validate(trace.sample_rate_hz)?;
    let (amplitude, num_averages) = read_channel(trace, "amp", settings, f0_hz)?;
    let (phase, _) = read_channel(trace, "phase", settings, f0_hz)?;
    Ok(AnalysisReport {
        f0_hz,
        sample_rate_hz: trace.sample_rate_hz,
        num_averages,
        analyzer: Some(*settings),
        amplitude,
        phase,
        trace_sha256: String::new(),
        config_hash: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertifyOptions {
    /// Electronics floor in dB relative to the SNL. Overrides the levels
    /// stored in the analysis.
    pub enl_db: Option<f64>,
    /// Mode-matching efficiency whose penalty is removed from the phase channel.
    pub mode_match: Option<f64>,
    pub skip_enl_correction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub channel: Quadrature,
    pub kind: String,
    pub parameter: f64,
    pub before: f64,
    pub after: f64,
    pub before_db: f64,
    pub after_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub amplitude_diff: f64,
    pub phase_sum: f64,
    pub amplitude_diff_db: f64,
    pub phase_sum_db: f64,
    pub corrections: Vec<Correction>,
    pub sum: f64,
    pub bound: f64,
    pub entangled: bool,
    pub source_sha256: String,
    pub trace_sha256: String,
    pub config_hash: String,
}

fn correction(channel: Quadrature, kind: &str, parameter: f64, before: f64, after: f64) -> Result<Correction> {
    Ok(Correction {
        channel,
        kind: kind.to_string(),
        parameter,
        before,
        after,
        before_db: model::db_rel_snl(before)?,
        after_db: model::db_rel_snl(after)?,
    })
}

/// Corrects the raw readings and applies the Duan test.
pub fn certify(analysis: &AnalysisReport, opts: &CertifyOptions, source_sha256: &str) -> Result<CertificationReport> {
    let mut amp = analysis.amplitude.signal_rel_snl;
    let mut phase = analysis.phase.signal_rel_snl;
    let mut corrections = Vec::new();

    if !opts.skip_enl_correction {
        for (channel, value, reading) in [
            (Quadrature::Amplitude, &mut amp, &analysis.amplitude),
            (Quadrature::Phase, &mut phase, &analysis.phase),
        ] {
            let enl = match (opts.enl_db, reading.enl_rel_snl) {
                (Some(db), _) => model::from_db(db),
                (None, Some(e)) => e,
                (None, None) => {
                    return Err(Error::Usage(format!(
                        "no electronics-noise level for the {channel:?} channel; \
                         pass --enl-db or --skip-enl-correction"
                    )))
                }
            };
            let after = correct_for_electronic_noise(*value, enl)?;
            corrections.push(correction(channel, "electronic_noise", enl, *value, after)?);
            *value = after;
        }
    }

    if let Some(mu) = opts.mode_match {
        let after = remove_mode_match_penalty(phase, mu)?;
        corrections.push(correction(Quadrature::Phase, "mode_match", mu, phase, after)?);
        phase = after;
    }

    let DuanVerdict { sum, entangled } = duan_certify(&QuadratureVariancePair::new(amp, phase)?);
    Ok(CertificationReport {
        amplitude_diff: amp,
        phase_sum: phase,
        amplitude_diff_db: model::db_rel_snl(amp)?,
        phase_sum_db: model::db_rel_snl(phase)?,
        corrections,
        sum,
        bound: DUAN_BOUND,
        entangled,
        source_sha256: source_sha256.to_string(),
        trace_sha256: analysis.trace_sha256.clone(),
        config_hash: analysis.config_hash.clone(),
    })
}
