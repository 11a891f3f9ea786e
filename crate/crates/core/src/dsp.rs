//! Spectrum-analyzer emulation.
//!
//! A Welch estimator whose segment length follows from the resolution
//! bandwidth and whose segment-to-segment smoothing follows from the video
//! bandwidth. PSDs are normalized so that a unit-variance white series reads
//! `1.0` in every bin; the mean over the full band is then the series
//! variance.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }

    /// Equivalent noise bandwidth in bins.
    pub fn enbw_bins(self) -> f64 {
        match self {
            Window::Hann => 1.5,
            Window::Rectangular => 1.0,
        }
    }
}

/// Front-panel settings of the emulated analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerSettings {
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    #[serde(default)]
    pub window: Window,
    pub center_frequency_hz: f64,
    pub span_hz: f64,
    /// Width of the band-power marker used for readings at a single
    /// frequency. Zero reads the nearest bin only.
    #[serde(default = "default_integration_bandwidth")]
    pub integration_bandwidth_hz: f64,
}

pub const DEFAULT_INTEGRATION_BANDWIDTH_HZ: f64 = 500e3;

fn default_integration_bandwidth() -> f64 {
    DEFAULT_INTEGRATION_BANDWIDTH_HZ
}

impl AnalyzerSettings {
    /// RBW 10 kHz, VBW 30 Hz, Hann, covering the full first Nyquist zone.
    pub fn experiment(sample_rate_hz: f64) -> Self {
        Self {
            rbw_hz: 10e3,
            vbw_hz: 30.0,
            window: Window::Hann,
            center_frequency_hz: sample_rate_hz / 4.0,
            span_hz: sample_rate_hz / 2.0,
            integration_bandwidth_hz: DEFAULT_INTEGRATION_BANDWIDTH_HZ,
        }
    }

    /// Segment length implied by the RBW: `round(Fs·ENBW/rbw)`.
    pub fn segment_length(&self, sample_rate_hz: f64) -> usize {
        (sample_rate_hz * self.window.enbw_bins() / self.rbw_hz).round() as usize
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let nyquist = sample_rate_hz / 2.0;
        if !(sample_rate_hz > 0.0) {
            return Err(Error::domain(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !(self.vbw_hz > 0.0 && self.vbw_hz <= self.rbw_hz) {
            return Err(Error::Config(format!(
                "need 0 < vbw ≤ rbw, got vbw = {} Hz, rbw = {} Hz",
                self.vbw_hz, self.rbw_hz
            )));
        }
        if !(self.rbw_hz * 20.0 <= nyquist) {
            return Err(Error::Config(format!(
                "rbw {} Hz is not small against the Nyquist frequency {nyquist} Hz",
                self.rbw_hz
            )));
        }
        let lo = self.center_frequency_hz - self.span_hz / 2.0;
        let hi = self.center_frequency_hz + self.span_hz / 2.0;
        if !(self.span_hz > 0.0 && lo >= 0.0 && hi <= nyquist) {
            return Err(Error::Config(format!(
                "span [{lo}, {hi}] Hz must lie within [0, {nyquist}] Hz"
            )));
        }
        if !(self.integration_bandwidth_hz >= 0.0) {
            return Err(Error::Config(format!(
                "integration bandwidth must be non-negative, got {}",
                self.integration_bandwidth_hz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub frequencies: Vec<f64>,
    pub psd: Vec<f64>,
    pub num_averages: usize,
    pub sample_rate_hz: f64,
    pub settings: AnalyzerSettings,
}

impl SpectrumEstimate {
    pub fn bin_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.settings.segment_length(self.sample_rate_hz) as f64
    }

    pub fn nearest_bin(&self, f_hz: f64) -> Result<usize> {
        let (first, last) = match (self.frequencies.first(), self.frequencies.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::domain("empty spectrum")),
        };
        let half = self.bin_spacing_hz() / 2.0;
        if !(f_hz >= first - half && f_hz <= last + half) {
            return Err(Error::Usage(format!(
                "frequency {f_hz} Hz lies outside the analyzed span [{first}, {last}] Hz"
            )));
        }
        let idx = ((f_hz - first) / self.bin_spacing_hz()).round() as usize;
        Ok(idx.min(self.frequencies.len() - 1))
    }

    /// Indices read by a band-power marker centred on `f_hz`.
    pub fn marker_bins(&self, f_hz: f64) -> Result<std::ops::Range<usize>> {
        let centre = self.nearest_bin(f_hz)?;
        let offset = (self.frequencies[centre] - f_hz).abs();
        if offset > self.settings.rbw_hz / 2.0 {
            log::warn!(
                "reading at {f_hz} Hz uses bin {} Hz, {offset} Hz away",
                self.frequencies[centre]
            );
        }
        let half_bins =
            (self.settings.integration_bandwidth_hz / 2.0 / self.bin_spacing_hz()).floor() as usize;
        let lo = centre.saturating_sub(half_bins);
        let hi = (centre + half_bins + 1).min(self.psd.len());
        Ok(lo..hi)
    }

    /// Mean PSD inside the band-power marker at `f_hz`.
    pub fn reading(&self, f_hz: f64) -> Result<f64> {
        let bins = self.marker_bins(f_hz)?;
        let n = bins.len() as f64;
        Ok(self.psd[bins].iter().sum::<f64>() / n)
    }

    /// Mean of the PSD over the analyzed bins.
    pub fn mean_psd(&self) -> f64 {
        self.psd.iter().sum::<f64>() / self.psd.len() as f64
    }
}

/// Averaged, VBW-smoothed periodogram of `series`.
///
/// Segments of the RBW-implied length overlap by 50%. Each bin's sequence of
/// segment periodograms passes through a single-pole low-pass with time
/// constant `1/(2π·vbw)` clocked at the segment hop, started as a running
/// mean like an analyzer's exponential averaging mode. The estimate is the
/// mean of that smoothed trace over the record.
pub fn welch_psd(series: &[f64], sample_rate_hz: f64, settings: &AnalyzerSettings) -> Result<SpectrumEstimate> {
    settings.validate(sample_rate_hz)?;
    let len = settings.segment_length(sample_rate_hz);
    if len < 2 {
        return Err(Error::Config(format!("segment length {len} is too short")));
    }
    if series.len() < len {
        return Err(Error::InsufficientData {
            required: len,
            actual: series.len(),
        });
    }
    let hop = len / 2;
    let segments = (series.len() - len) / hop + 1;

    let spacing = sample_rate_hz / len as f64;
    let lo_f = settings.center_frequency_hz - settings.span_hz / 2.0;
    let hi_f = settings.center_frequency_hz + settings.span_hz / 2.0;
    let first_bin = (lo_f / spacing).ceil().max(0.0) as usize;
    let last_bin = ((hi_f / spacing).floor() as usize).min(len / 2);
    if last_bin < first_bin {
        return Err(Error::Config("span contains no frequency bins".into()));
    }
    let nbins = last_bin - first_bin + 1;

    let window = settings.window.coefficients(len);
    let norm = 1.0 / window.iter().map(|w| w * w).sum::<f64>();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);

    let dt = hop as f64 / sample_rate_hz;
    let tau = 1.0 / (TAU * settings.vbw_hz);
    let alpha = 1.0 - (-dt / tau).exp();

    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut smoothed = vec![0.0; nbins];
    let mut acc = vec![0.0; nbins];
    for s in 0..segments {
        let seg = &series[s * hop..s * hop + len];
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        // running mean until the filter's own time constant takes over
        let gain = alpha.max(1.0 / (s + 1) as f64);
        for (k, (y, a)) in smoothed.iter_mut().zip(acc.iter_mut()).enumerate() {
            let p = buf[first_bin + k].norm_sqr() * norm;
            *y += gain * (p - *y);
            *a += *y;
        }
    }
    let psd = acc.into_iter().map(|a| a / segments as f64).collect();
    let frequencies = (first_bin..=last_bin).map(|k| k as f64 * spacing).collect();

    Ok(SpectrumEstimate {
        frequencies,
        psd,
        num_averages: segments,
        sample_rate_hz,
        settings: *settings,
    })
}

/// `10·log₁₀(meas/ref)` read at `f0` with the band-power marker.
pub fn band_power_rel_snl(meas: &SpectrumEstimate, reference: &SpectrumEstimate, f0_hz: f64) -> Result<f64> {
    if meas.frequencies != reference.frequencies
        || meas.settings != reference.settings
        || meas.sample_rate_hz != reference.sample_rate_hz
    {
        return Err(Error::GridMismatch(
            "measured and reference spectra were taken with different settings".into(),
        ));
    }
    let r = reference.reading(f0_hz)?;
    if !(r > 0.0) {
        return Err(Error::domain(format!("reference power is zero at {f0_hz} Hz")));
    }
    let m = meas.reading(f0_hz)?;
    Ok(10.0 * (m / r).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::white_series;

    fn settings(fs: f64) -> AnalyzerSettings {
        AnalyzerSettings::experiment(fs)
    }

    #[test]
    fn segment_length_from_rbw() {
        let s = settings(100e6);
        assert_eq!(s.segment_length(100e6), 15_000);
        let half = AnalyzerSettings { rbw_hz: 5e3, ..s };
        assert_eq!(half.segment_length(100e6), 30_000);
    }

    #[test]
    fn too_short_series_reports_required_length() {
        let s = settings(100e6);
        match welch_psd(&vec![0.0; 1000], 100e6, &s) {
            Err(Error::InsufficientData { required, actual }) => {
                assert_eq!(required, 15_000);
                assert_eq!(actual, 1000);
            }
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn rejects_vbw_above_rbw() {
        let s = AnalyzerSettings {
            vbw_hz: 20e3,
            ..settings(100e6)
        };
        assert!(s.validate(100e6).is_err());
    }

    #[test]
    fn rejects_span_beyond_nyquist() {
        let s = AnalyzerSettings {
            center_frequency_hz: 40e6,
            span_hz: 40e6,
            ..settings(100e6)
        };
        assert!(s.validate(100e6).is_err());
    }

    #[test]
    fn unit_white_is_calibrated() {
        let fs = 1e6;
        let s = AnalyzerSettings {
            rbw_hz: 1e3,
            vbw_hz: 1e3,
            integration_bandwidth_hz: 50e3,
            ..settings(fs)
        };
        let x = white_series(1 << 20, 11u64);
        let est = welch_psd(&x, fs, &s).unwrap();
        assert!(est.num_averages > 1000);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((est.mean_psd() / var - 1.0).abs() < 0.01);
        for f in [50e3, 150e3, 250e3, 350e3, 450e3] {
            let r = est.reading(f).unwrap();
            assert!((10.0 * r.log10()).abs() < 0.2, "{f}: {r}");
        }
    }

    #[test]
    fn self_reference_reads_zero_db() {
        let fs = 1e6;
        let s = AnalyzerSettings {
            rbw_hz: 2e3,
            vbw_hz: 100.0,
            ..settings(fs)
        };
        let x = white_series(1 << 16, 3u64);
        let est = welch_psd(&x, fs, &s).unwrap();
        for f in [10e3, 123e3, 400e3] {
            assert_eq!(band_power_rel_snl(&est, &est, f).unwrap(), 0.0);
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let fs = 1e6;
        let x = white_series(1 << 16, 3u64);
        let a = welch_psd(&x, fs, &AnalyzerSettings { rbw_hz: 2e3, vbw_hz: 100.0, ..settings(fs) }).unwrap();
        let b = welch_psd(&x, fs, &AnalyzerSettings { rbw_hz: 4e3, vbw_hz: 100.0, ..settings(fs) }).unwrap();
        assert!(matches!(
            band_power_rel_snl(&a, &b, 100e3),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn reading_outside_span_is_a_usage_error() {
        let fs = 1e6;
        let s = AnalyzerSettings {
            rbw_hz: 2e3,
            vbw_hz: 100.0,
            center_frequency_hz: 200e3,
            span_hz: 100e3,
            ..settings(fs)
        };
        let est = welch_psd(&white_series(1 << 14, 1u64), fs, &s).unwrap();
        assert!(matches!(est.reading(400e3), Err(Error::Usage(_))));
    }

    #[test]
    fn tone_peak_matches_closed_form_power() {
        // 20 MHz falls exactly on bin 3000 of a 15000-point segment at 100 MS/s.
        let fs = 100e6;
        let amp = 0.5;
        let f = 20e6;
        let mut x = white_series(1 << 18, 5u64);
        for (i, v) in x.iter_mut().enumerate() {
            *v += amp * (TAU * f * i as f64 / fs).cos();
        }
        let s = AnalyzerSettings {
            integration_bandwidth_hz: 0.0,
            ..settings(fs)
        };
        let est = welch_psd(&x, fs, &s).unwrap();
        let len = s.segment_length(fs) as f64;
        let peak = est.reading(f).unwrap() - 1.0;
        // one-sided tone power from the peak bin: P·ENBW·2/L
        let tone = peak * s.window.enbw_bins() * 2.0 / len;
        let expected = amp * amp / 2.0;
        assert!((10.0 * (tone / expected).log10()).abs() < 0.3, "{tone} vs {expected}");
    }

    #[test]
    fn vbw_does_not_bias_the_estimate() {
        let fs = 1e6;
        let x = white_series(1 << 18, 9u64);
        for vbw in [1.0, 10.0, 1e3] {
            let s = AnalyzerSettings {
                rbw_hz: 1e3,
                vbw_hz: vbw,
                ..settings(fs)
            };
            let est = welch_psd(&x, fs, &s).unwrap();
            assert!((est.mean_psd() - 1.0).abs() < 0.01, "vbw {vbw}: {}", est.mean_psd());
        }
    }
}
