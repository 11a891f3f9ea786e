//! Stochastic photocurrent synthesis and the detection chain.
//!
//! Every independent noise source draws from its own ChaCha stream selected
//! by `(seed, source id)`, so a run is bit-reproducible and no two sources
//! share random numbers.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, InterferometerConfig, SpectralParams};

/// Identifies one independent noise stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub source: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, source: u64) -> Self {
        Self { seed, source }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.source);
        rng
    }
}

impl From<u64> for NoiseKey {
    fn from(seed: u64) -> Self {
        Self { seed, source: 0 }
    }
}

// stream ids
const SRC_XMINUS: u64 = 1;
const SRC_XPLUS: u64 = 2;
const SRC_YPLUS: u64 = 3;
const SRC_YMINUS: u64 = 4;
const SRC_SNL: u64 = 5;

const CHAIN_DETECTION: u64 = 0;
const CHAIN_SENSITIVITY: u64 = 1;
const CHAIN_MODE_MATCH: u64 = 2;
const CHAIN_EXCESS: u64 = 3;
const CHAIN_ENL_SIGNAL: u64 = 4;
const CHAIN_ENL_SNL: u64 = 5;
const CHAIN_ENL_ONLY: u64 = 6;

/// Unit-variance white Gaussian series.
pub fn white_series(n: usize, key: impl Into<NoiseKey>) -> Vec<f64> {
    let mut rng = key.into().rng();
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Real Gaussian series whose PSD (unit-white normalization) is `psd(f)`.
///
/// Complex white spectral samples are shaped by `√psd` on the one-sided grid,
/// mirrored to a Hermitian spectrum and inverse transformed.
pub fn colored_gaussian_series<F>(
    psd: F,
    sample_rate_hz: f64,
    n: usize,
    key: impl Into<NoiseKey>,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::domain(format!(
            "sample count must be a power of two ≥ 2, got {n}"
        )));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::domain(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let half = n / 2;
    let df = sample_rate_hz / n as f64;
    let mut amp = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let f = k as f64 * df;
        let p = psd(f);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::domain(format!(
                "target PSD must be positive, got {p} at {f} Hz"
            )));
        }
        amp.push(p.sqrt());
    }

    let mut rng = key.into().rng();
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    spec[0] = Complex::new(amp[0] * gauss(), 0.0);
    for k in 1..half {
        let a = amp[k] * FRAC_1_SQRT_2;
        let z = Complex::new(a * gauss(), a * gauss());
        spec[k] = z;
        spec[n - k] = z.conj();
    }
    spec[half] = Complex::new(amp[half] * gauss(), 0.0);

    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut spec);
    let scale = 1.0 / (n as f64).sqrt();
    Ok(spec.into_iter().map(|z| z.re * scale).collect())
}

/// Spectrum assumed for the anti-squeezed combinations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConjugateMode {
    /// Reciprocal of the squeezed spectrum: uncertainty product exactly 1.
    #[default]
    MinimumUncertainty,
    /// Reciprocal scaled by `excess ≥ 1`.
    Explicit { excess: f64 },
}

impl ConjugateMode {
    fn factor(self) -> Result<f64> {
        match self {
            ConjugateMode::MinimumUncertainty => Ok(1.0),
            ConjugateMode::Explicit { excess } if excess >= 1.0 => Ok(excess),
            ConjugateMode::Explicit { excess } => Err(Error::domain(format!(
                "conjugate excess factor must be ≥ 1, got {excess}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate_hz: f64,
    pub num_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub conjugate_mode: ConjugateMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 100e6,
            num_samples: 1 << 22,
            seed: 0x7477_626d,
            conjugate_mode: ConjugateMode::MinimumUncertainty,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::domain(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.num_samples < 2 || !self.num_samples.is_power_of_two() {
            return Err(Error::domain(format!(
                "num_samples must be a power of two, got {}",
                self.num_samples
            )));
        }
        self.conjugate_mode.factor()?;
        Ok(())
    }
}

/// Per-beam quadrature series reconstructed from the joint combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamQuadratures {
    pub x1: Vec<f64>,
    pub y1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y2: Vec<f64>,
}

/// Sampled fluctuation series of both beams.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub sample_rate_hz: f64,
    /// (X₁ − X₂)/√2
    pub xminus: Vec<f64>,
    /// (X₁ + X₂)/√2
    pub xplus: Vec<f64>,
    /// (Y₁ + Y₂)/√2
    pub yplus: Vec<f64>,
    /// (Y₁ − Y₂)/√2
    pub yminus: Vec<f64>,
    pub beams: Option<BeamQuadratures>,
    /// Independent unit-white vacuum calibration.
    pub snl_reference: Vec<f64>,
}

impl TraceSet {
    pub fn len(&self) -> usize {
        self.xminus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xminus.is_empty()
    }

    /// Fills in per-beam series: X₁ = (X₊ + X₋)/√2, X₂ = (X₊ − X₋)/√2, and
    /// likewise for Y with (Y₊, Y₋).
    pub fn derive_beams(&mut self) {
        let split = |plus: &[f64], minus: &[f64]| -> (Vec<f64>, Vec<f64>) {
            plus.iter()
                .zip(minus)
                .map(|(&p, &m)| ((p + m) * FRAC_1_SQRT_2, (p - m) * FRAC_1_SQRT_2))
                .unzip()
        };
        let (x1, x2) = split(&self.xplus, &self.xminus);
        let (y1, y2) = split(&self.yplus, &self.yminus);
        self.beams = Some(BeamQuadratures { x1, y1, x2, y2 });
    }
}

/// Synthesizes both beams with the amplitude-difference and phase-sum
/// combinations following the twin-beam spectra.
pub fn synthesize_twin_beams(params: &SpectralParams, cfg: &SynthConfig) -> Result<TraceSet> {
    cfg.validate()?;
    // σ > 1 check happens here rather than per frequency
    model::phase_sum_spectrum(params, 0.0)?;
    if cfg.sample_rate_hz / 2.0 < 2.0 * params.bandwidth_hz {
        log::warn!(
            "Nyquist frequency {} Hz is below twice the cavity bandwidth {} Hz",
            cfg.sample_rate_hz / 2.0,
            params.bandwidth_hz
        );
    }
    let excess = cfg.conjugate_mode.factor()?;
    let p = *params;
    let s_i = move |f: f64| model::intensity_diff_spectrum(&p, f);
    let s_p = move |f: f64| model::phase_sum_spectrum(&p, f).unwrap_or(f64::NAN);
    let (fs, n, seed) = (cfg.sample_rate_hz, cfg.num_samples, cfg.seed);

    let xminus = colored_gaussian_series(s_i, fs, n, NoiseKey::new(seed, SRC_XMINUS))?;
    let xplus = colored_gaussian_series(|f| excess / s_i(f), fs, n, NoiseKey::new(seed, SRC_XPLUS))?;
    let yplus = colored_gaussian_series(s_p, fs, n, NoiseKey::new(seed, SRC_YPLUS))?;
    let yminus = colored_gaussian_series(|f| excess / s_p(f), fs, n, NoiseKey::new(seed, SRC_YMINUS))?;
    let snl_reference = white_series(n, NoiseKey::new(seed, SRC_SNL));

    let mut set = TraceSet {
        sample_rate_hz: fs,
        xminus,
        xplus,
        yplus,
        yminus,
        beams: None,
        snl_reference,
    };
    set.derive_beams();
    Ok(set)
}

/// `w·a + √(1−w²)·noise`-style admixture with power weight `weight`.
fn admix(series: &[f64], weight: f64, noise_psd: f64, key: NoiseKey) -> Vec<f64> {
    let a = weight.sqrt();
    let b = ((1.0 - weight) * noise_psd).sqrt();
    let mut rng = key.rng();
    series
        .iter()
        .map(|&x| {
            let w: f64 = StandardNormal.sample(&mut rng);
            a * x + b * w
        })
        .collect()
}

/// Beam-splitter loss model: `√η·in + √(1−η)·vacuum`.
pub fn apply_detection(series: &[f64], eta: f64, key: impl Into<NoiseKey>) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!(
            "detection efficiency must lie in (0, 1], got {eta}"
        )));
    }
    if eta == 1.0 {
        return Ok(series.to_vec());
    }
    Ok(admix(series, eta, 1.0, key.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Sum,
    Difference,
}

/// Power combiner, `(a ± b)/√2`.
pub fn combine_channels(a: &[f64], b: &[f64], op: Combine) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(match op {
        Combine::Sum => a.iter().zip(b).map(|(x, y)| (x + y) * FRAC_1_SQRT_2).collect(),
        Combine::Difference => a.iter().zip(b).map(|(x, y)| (x - y) * FRAC_1_SQRT_2).collect(),
    })
}

/// Imperfections between a beam combination and the spectrum analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionChain {
    /// Applied explicitly by [`mz_measure`]; 1 when η is already inside the spectra.
    #[serde(default = "one")]
    pub detection_efficiency: f64,
    #[serde(default = "one")]
    pub mode_match: f64,
    /// Electronics noise floor relative to the SNL.
    #[serde(default)]
    pub enl: f64,
    /// Additive white PSD on the phase channel (pump phase noise).
    #[serde(default)]
    pub excess_phase_noise: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DetectionChain {
    fn default() -> Self {
        Self::ideal()
    }
}

impl DetectionChain {
    pub fn ideal() -> Self {
        Self {
            detection_efficiency: 1.0,
            mode_match: 1.0,
            enl: 0.0,
            excess_phase_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit("detection efficiency", self.detection_efficiency)?;
        unit("mode-matching efficiency", self.mode_match)?;
        if !(self.enl >= 0.0 && self.enl < 1.0) {
            return Err(Error::domain(format!(
                "electronics noise level must lie in [0, 1), got {}",
                self.enl
            )));
        }
        if !(self.excess_phase_noise >= 0.0) {
            return Err(Error::domain(format!(
                "excess phase noise must be non-negative, got {}",
                self.excess_phase_noise
            )));
        }
        Ok(())
    }

    /// Closed-form measured-to-SNL ratio for a combination with PSD `s`.
    pub fn expected_reading(&self, s: f64, quadrature: Quadrature, sensitivity: f64) -> f64 {
        let mut v = self.detection_efficiency * s + (1.0 - self.detection_efficiency);
        if quadrature == Quadrature::Phase {
            let g = sensitivity * sensitivity;
            v = g * v + (1.0 - g);
        }
        v = self.mode_match * v + (1.0 - self.mode_match);
        if quadrature == Quadrature::Phase {
            v += self.excess_phase_noise;
        }
        model::add_electronic_noise(v, self.enl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Amplitude,
    Phase,
}

impl Quadrature {
    fn stream_base(self) -> u64 {
        match self {
            Quadrature::Amplitude => 16,
            Quadrature::Phase => 32,
        }
    }
}

/// Photocurrents delivered to the spectrum analyzer by one interferometer pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredChannel {
    /// Difference (amplitude) or sum (phase) combination, with electronics noise.
    pub signal: Vec<f64>,
    /// Vacuum reference with the same electronics noise.
    pub snl: Vec<f64>,
    /// Electronics noise alone.
    pub enl: Vec<f64>,
}

/// Runs one quadrature through the interferometer and detection chain.
///
/// Amplitude readings bypass the interferometer; phase readings require it
/// to be in lock and are scaled by its sensitivity `sin(θ/2)`. Mode matching
/// admixes vacuum with weight `1−μ`, excess phase noise is added after it,
/// and finally the signal and the SNL reference are both rescaled by `1−enl`
/// and receive independent electronics noise of PSD `enl`.
pub fn mz_measure(
    trace: &TraceSet,
    quadrature: Quadrature,
    ifc: &InterferometerConfig,
    chain: &DetectionChain,
    seed: u64,
) -> Result<MeasuredChannel> {
    chain.validate()?;
    let key = |k: u64| NoiseKey::new(seed, quadrature.stream_base() + k);

    let mut v = match (quadrature, &trace.beams) {
        (Quadrature::Amplitude, Some(b)) => combine_channels(&b.x1, &b.x2, Combine::Difference)?,
        (Quadrature::Phase, Some(b)) => combine_channels(&b.y1, &b.y2, Combine::Sum)?,
        (Quadrature::Amplitude, None) => trace.xminus.clone(),
        (Quadrature::Phase, None) => trace.yplus.clone(),
    };

    v = apply_detection(&v, chain.detection_efficiency, key(CHAIN_DETECTION))?;

    if quadrature == Quadrature::Phase {
        ifc.check_lock()?;
        let g = ifc.sensitivity().powi(2);
        if g < 1.0 {
            v = admix(&v, g, 1.0, key(CHAIN_SENSITIVITY));
        }
    }

    if chain.mode_match < 1.0 {
        v = admix(&v, chain.mode_match, 1.0, key(CHAIN_MODE_MATCH));
    }

    if quadrature == Quadrature::Phase && chain.excess_phase_noise > 0.0 {
        let amp = chain.excess_phase_noise.sqrt();
        let mut rng = key(CHAIN_EXCESS).rng();
        for x in v.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut rng);
            *x += amp * w;
        }
    }

    let keep = 1.0 - chain.enl;
    let signal = admix(&v, keep, 1.0, key(CHAIN_ENL_SIGNAL));
    let snl = admix(&trace.snl_reference, keep, 1.0, key(CHAIN_ENL_SNL));
    let e = chain.enl.sqrt();
    let enl = white_series(v.len(), key(CHAIN_ENL_ONLY))
        .into_iter()
        .map(|w| e * w)
        .collect();
    Ok(MeasuredChannel { signal, snl, enl })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{welch_psd, AnalyzerSettings};

    const FS: f64 = 10e6;

    fn analyzer() -> AnalyzerSettings {
        AnalyzerSettings {
            rbw_hz: 10e3,
            vbw_hz: 30.0,
            integration_bandwidth_hz: 400e3,
            ..AnalyzerSettings::experiment(FS)
        }
    }

    fn reading(x: &[f64], f: f64) -> f64 {
        welch_psd(x, FS, &analyzer()).unwrap().reading(f).unwrap()
    }

    #[test]
    fn white_target_is_flat() {
        let x = colored_gaussian_series(|_| 1.0, FS, 1 << 20, 4u64).unwrap();
        for f in [0.5e6, 1.5e6, 2.5e6, 3.5e6, 4.5e6] {
            let db = 10.0 * reading(&x, f).log10();
            assert!(db.abs() < 0.2, "{f}: {db}");
        }
    }

    #[test]
    fn colored_series_is_deterministic_per_key() {
        let psd = |f: f64| 1.0 + f / FS;
        let a = colored_gaussian_series(psd, FS, 1 << 12, NoiseKey::new(7, 1)).unwrap();
        let b = colored_gaussian_series(psd, FS, 1 << 12, NoiseKey::new(7, 1)).unwrap();
        let c = colored_gaussian_series(psd, FS, 1 << 12, NoiseKey::new(7, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn colored_series_rejects_bad_input() {
        assert!(colored_gaussian_series(|_| 1.0, FS, 1000, 1u64).is_err());
        assert!(colored_gaussian_series(|f| if f > 1e6 { 0.0 } else { 1.0 }, FS, 1024, 1u64).is_err());
    }

    #[test]
    fn colored_series_variance_is_mean_psd() {
        // psd(f) = 0.5 + f/(Fs/2): mean over the band is 1.0
        let x = colored_gaussian_series(|f| 0.5 + f / (FS / 2.0), FS, 1 << 18, 2u64).unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn detection_is_identity_at_unit_efficiency() {
        let x = white_series(256, 1u64);
        assert_eq!(apply_detection(&x, 1.0, 2u64).unwrap(), x);
        assert!(apply_detection(&x, 0.0, 2u64).is_err());
        assert!(apply_detection(&x, 1.5, 2u64).is_err());
    }

    #[test]
    fn detection_follows_affine_psd_law() {
        let squeezed = colored_gaussian_series(|_| 0.2608, FS, 1 << 20, 3u64).unwrap();
        let out = apply_detection(&squeezed, 0.88, 4u64).unwrap();
        assert!((reading(&out, 2e6) - 0.3495).abs() < 0.015);

        let vac = white_series(1 << 20, 5u64);
        let out = apply_detection(&vac, 0.5, 6u64).unwrap();
        assert!((reading(&out, 2e6) - 1.0).abs() < 0.015 * 2.0);
    }

    #[test]
    fn combiner_preserves_snl() {
        let a = white_series(1 << 20, NoiseKey::new(1, 1));
        let b = white_series(1 << 20, NoiseKey::new(1, 2));
        for op in [Combine::Sum, Combine::Difference] {
            let c = combine_channels(&a, &b, op).unwrap();
            assert!((reading(&c, 3e6) - 1.0).abs() < 0.03);
        }
        assert!(matches!(
            combine_channels(&a, &b[..10], Combine::Sum),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn small_cfg(seed: u64) -> SynthConfig {
        SynthConfig {
            sample_rate_hz: FS,
            num_samples: 1 << 16,
            seed,
            conjugate_mode: ConjugateMode::MinimumUncertainty,
        }
    }

    fn narrow_params() -> SpectralParams {
        SpectralParams::new(0.7392, 2.47e6, 1.38).unwrap()
    }

    #[test]
    fn beams_recombine_to_the_joint_combinations() {
        let set = synthesize_twin_beams(&narrow_params(), &small_cfg(9)).unwrap();
        let b = set.beams.as_ref().unwrap();
        let pairs = [
            (combine_channels(&b.x1, &b.x2, Combine::Difference).unwrap(), &set.xminus),
            (combine_channels(&b.x1, &b.x2, Combine::Sum).unwrap(), &set.xplus),
            (combine_channels(&b.y1, &b.y2, Combine::Sum).unwrap(), &set.yplus),
            (combine_channels(&b.y1, &b.y2, Combine::Difference).unwrap(), &set.yminus),
        ];
        for (got, want) in pairs {
            let worst = got
                .iter()
                .zip(want.iter())
                .map(|(g, w)| (g - w).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-12, "{worst}");
        }
    }

    #[test]
    fn conjugate_targets_have_unit_uncertainty_product() {
        let p = narrow_params();
        for k in 0..=100 {
            let f = k as f64 * 50e3;
            let s_i = model::intensity_diff_spectrum(&p, f);
            let s_p = model::phase_sum_spectrum(&p, f).unwrap();
            assert!((s_i * (1.0 / s_i) - 1.0).abs() < 1e-15);
            assert!((s_p * (1.0 / s_p) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn synthesis_matches_spectra_and_single_beam_law() {
        let p = narrow_params();
        let cfg = SynthConfig {
            num_samples: 1 << 20,
            ..small_cfg(21)
        };
        let set = synthesize_twin_beams(&p, &cfg).unwrap();
        let f = 2e6;
        let s_i = model::intensity_diff_spectrum(&p, f);
        let s_p = model::phase_sum_spectrum(&p, f).unwrap();
        assert!((reading(&set.xminus, f) - s_i).abs() < 0.015);
        assert!((reading(&set.yplus, f) - s_p).abs() < 0.015);
        let prod = reading(&set.xminus, f) * reading(&set.xplus, f);
        assert!((prod - 1.0).abs() < 0.05, "{prod}");
        let beam = (s_i + 1.0 / s_i) / 2.0;
        let got = reading(&set.beams.as_ref().unwrap().x1, f);
        assert!((got / beam - 1.0).abs() < 0.03, "{got} vs {beam}");
    }

    #[test]
    fn explicit_conjugate_excess_scales_antisqueezing() {
        let p = narrow_params();
        let cfg = SynthConfig {
            num_samples: 1 << 20,
            conjugate_mode: ConjugateMode::Explicit { excess: 2.0 },
            ..small_cfg(22)
        };
        let set = synthesize_twin_beams(&p, &cfg).unwrap();
        let f = 3e6;
        let want = 2.0 / model::intensity_diff_spectrum(&p, f);
        assert!((reading(&set.xplus, f) / want - 1.0).abs() < 0.03);

        let bad = SynthConfig {
            conjugate_mode: ConjugateMode::Explicit { excess: 0.5 },
            ..small_cfg(1)
        };
        assert!(synthesize_twin_beams(&p, &bad).is_err());
    }

    #[test]
    fn uncorrelated_limit_is_vacuum() {
        let p = SpectralParams::new(1e-9, 2.47e6, 1e6).unwrap();
        let cfg = SynthConfig {
            num_samples: 1 << 20,
            ..small_cfg(23)
        };
        let set = synthesize_twin_beams(&p, &cfg).unwrap();
        for s in [&set.xminus, &set.xplus, &set.yplus, &set.yminus] {
            assert!((reading(s, 2.5e6) - 1.0).abs() < 0.015 * 2.0);
        }
    }

    #[test]
    fn synthesis_is_reproducible() {
        let a = synthesize_twin_beams(&narrow_params(), &small_cfg(5)).unwrap();
        let b = synthesize_twin_beams(&narrow_params(), &small_cfg(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        let cfg = SynthConfig {
            num_samples: 3000,
            ..small_cfg(1)
        };
        assert!(synthesize_twin_beams(&narrow_params(), &cfg).is_err());
    }

    #[test]
    fn transparent_phase_chain_passes_the_quadrature() {
        let p = narrow_params();
        let cfg = SynthConfig {
            num_samples: 1 << 20,
            ..small_cfg(31)
        };
        let set = synthesize_twin_beams(&p, &cfg).unwrap();
        let ifc = InterferometerConfig::locked(2e6, 0).unwrap();
        let m = mz_measure(&set, Quadrature::Phase, &ifc, &DetectionChain::ideal(), 1).unwrap();
        let f = 2e6;
        assert!((reading(&m.signal, f) - model::phase_sum_spectrum(&p, f).unwrap()).abs() < 0.015);
        assert!((reading(&m.snl, f) - 1.0).abs() < 0.03);
    }

    #[test]
    fn out_of_lock_phase_measurement_is_rejected() {
        let set = synthesize_twin_beams(&narrow_params(), &small_cfg(1)).unwrap();
        let mut ifc = InterferometerConfig::locked(2e6, 0).unwrap();
        ifc.arm_length_difference_m *= 1.1;
        let err = mz_measure(&set, Quadrature::Phase, &ifc, &DetectionChain::ideal(), 1).unwrap_err();
        assert!(err.to_string().contains("θ"), "{err}");
        // the amplitude path does not use the interferometer
        mz_measure(&set, Quadrature::Amplitude, &ifc, &DetectionChain::ideal(), 1).unwrap();
    }

    #[test]
    fn phase_chain_composes_affine_maps() {
        let chain = DetectionChain {
            detection_efficiency: 1.0,
            mode_match: 0.90,
            enl: 0.4074,
            excess_phase_noise: 0.0,
        };
        let v = chain.expected_reading(0.7113, Quadrature::Phase, 1.0);
        assert!((v - 0.8461).abs() < 1e-4);
        assert!((model::db_rel_snl(v).unwrap() + 0.726).abs() < 1e-3);

        let chain = DetectionChain {
            excess_phase_noise: 0.04,
            ..chain
        };
        let v = chain.expected_reading(0.7113, Quadrature::Phase, 1.0);
        let corrected = model::correct_for_electronic_noise(v, 0.4074).unwrap();
        assert!((corrected - 0.7802).abs() < 1e-4);
        assert!((model::db_rel_snl(v).unwrap() + 0.607).abs() < 1e-3);
    }

    #[test]
    fn measured_phase_channel_follows_closed_form() {
        let p = SpectralParams::new(0.7392, 2.47e6, 1.38).unwrap();
        let cfg = SynthConfig {
            num_samples: 1 << 20,
            ..small_cfg(41)
        };
        let set = synthesize_twin_beams(&p, &cfg).unwrap();
        let ifc = InterferometerConfig::locked(2e6, 0).unwrap();
        let chain = DetectionChain {
            detection_efficiency: 1.0,
            mode_match: 0.9,
            enl: 0.4074,
            excess_phase_noise: 0.04,
        };
        let m = mz_measure(&set, Quadrature::Phase, &ifc, &chain, 2).unwrap();
        let f = 2e6;
        let want = chain.expected_reading(model::phase_sum_spectrum(&p, f).unwrap(), Quadrature::Phase, 1.0);
        let got = reading(&m.signal, f) / reading(&m.snl, f);
        assert!((got - want).abs() < 0.02, "{got} vs {want}");
        assert!((reading(&m.enl, f) - 0.4074).abs() < 0.02);
    }
}
