//! Least-squares recovery of (ηξ, B, σ) from noise spectra.
//!
//! Damped Gauss-Newton (Levenberg-Marquardt) on the analytic Jacobian. B and
//! σ − 1 are optimized in log space so positivity and above-threshold
//! operation hold without explicit constraints; ηξ is projected onto its box.
//! η and ξ are never separated: the spectra depend on their product only.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, SpectralParams};

/// Partial derivatives of both spectra with respect to (ηξ, B, σ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectraJacobian {
    pub intensity: [f64; 3],
    pub phase: [f64; 3],
}

/// Analytic Jacobian of the intensity-difference and phase-sum spectra at `f_hz`.
pub fn spectra_jacobian(p: &SpectralParams, f_hz: f64) -> SpectraJacobian {
    let u2 = (f_hz / p.bandwidth_hz).powi(2);
    let a = p.eta_xi;
    let b = p.bandwidth_hz;
    let s2 = p.sigma * p.sigma;

    let di = 1.0 + u2;
    // ∂(u²)/∂B = −2u²/B
    let intensity = [-1.0 / di, -2.0 * u2 * a / (di * di * b), 0.0];

    let dp = s2 + u2;
    let phase = [
        -1.0 / dp,
        -2.0 * u2 * a / (dp * dp * b),
        2.0 * p.sigma * a / (dp * dp),
    ];
    SpectraJacobian { intensity, phase }
}

/// Box constraints on the fitted triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub eta_xi: (f64, f64),
    pub bandwidth_hz: (f64, f64),
    pub sigma: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            eta_xi: (1e-12, 1.0),
            bandwidth_hz: (f64::MIN_POSITIVE, f64::INFINITY),
            sigma: (1.0 + 1e-12, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub frequencies: Vec<f64>,
    pub s_i_observed: Option<Vec<f64>>,
    pub s_p_observed: Option<Vec<f64>>,
    /// Per-frequency weights applied to every observed series; uniform when absent.
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub bounds: Bounds,
}

impl FitProblem {
    pub fn new(frequencies: Vec<f64>, s_i: Option<Vec<f64>>, s_p: Option<Vec<f64>>) -> Result<Self> {
        let p = Self {
            frequencies,
            s_i_observed: s_i,
            s_p_observed: s_p,
            weights: None,
            bounds: Bounds::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Weights `1/s²` for estimates whose variance scales with PSD².
    pub fn with_variance_weights(mut self) -> Self {
        let reference = self
            .s_i_observed
            .as_ref()
            .or(self.s_p_observed.as_ref())
            .expect("validated problem has data");
        self.weights = Some(reference.iter().map(|s| 1.0 / (s * s)).collect());
        self
    }

    pub fn fits_sigma(&self) -> bool {
        self.s_p_observed.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frequencies.len();
        if self.s_i_observed.is_none() && self.s_p_observed.is_none() {
            return Err(Error::domain("fit needs at least one observed spectrum"));
        }
        for series in [&self.s_i_observed, &self.s_p_observed, &self.weights]
            .into_iter()
            .flatten()
        {
            if series.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: series.len(),
                });
            }
        }
        if n < 4 {
            return Err(Error::InsufficientData {
                required: 4,
                actual: n,
            });
        }
        if self.frequencies.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(Error::domain("frequencies must be finite and non-negative"));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::domain("weights must be non-negative"));
            }
        }
        let (lo, hi) = self.span();
        if !(lo > 0.0 && hi >= 2.0 * lo) {
            log::warn!("frequencies span less than one octave; B may be poorly determined");
        }
        Ok(())
    }

    fn span(&self) -> (f64, f64) {
        let lo = self.frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.frequencies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    fn num_residuals(&self) -> usize {
        let n = self.frequencies.len();
        n * (self.s_i_observed.is_some() as usize + self.s_p_observed.is_some() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub eta_xi: f64,
    pub bandwidth_hz: f64,
    /// Absent when only the intensity spectrum was fitted.
    pub sigma: Option<f64>,
    /// `√(Σ wᵢ rᵢ²)`.
    pub residual_norm: f64,
    /// Over (ηξ, B, σ); the σ row and column are zero when σ was not fitted.
    pub covariance: [[f64; 3]; 3],
    pub converged: bool,
    pub iterations: usize,
    /// Parameters the data could not constrain.
    pub unidentifiable: Vec<String>,
}

impl FitResult {
    pub fn spectral(&self) -> Result<SpectralParams> {
        SpectralParams::new(self.eta_xi, self.bandwidth_hz, self.sigma.unwrap_or(1.0))
    }
}

const PARAM_NAMES: [&str; 3] = ["eta_xi", "bandwidth_hz", "sigma"];

/// Internal coordinates: (ηξ, ln B, ln(σ−1)).
#[derive(Debug, Clone, Copy)]
struct Point {
    eta_xi: f64,
    ln_b: f64,
    ln_sm1: f64,
}

impl Point {
    fn from_params(eta_xi: f64, b: f64, sigma: f64) -> Self {
        Self {
            eta_xi,
            ln_b: b.ln(),
            ln_sm1: (sigma - 1.0).ln(),
        }
    }

    fn params(&self) -> SpectralParams {
        SpectralParams {
            eta_xi: self.eta_xi,
            bandwidth_hz: self.ln_b.exp(),
            sigma: 1.0 + self.ln_sm1.exp(),
        }
    }

    fn to_vec(self, dim: usize) -> DVector<f64> {
        DVector::from_iterator(dim, [self.eta_xi, self.ln_b, self.ln_sm1].into_iter().take(dim))
    }

    fn stepped(&self, d: &DVector<f64>, bounds: &Bounds) -> Self {
        let mut p = *self;
        p.eta_xi += d[0];
        p.ln_b += d[1];
        if d.len() > 2 {
            p.ln_sm1 += d[2];
        }
        p.eta_xi = p.eta_xi.clamp(bounds.eta_xi.0, bounds.eta_xi.1);
        p.ln_b = p.ln_b.clamp(bounds.bandwidth_hz.0.ln(), bounds.bandwidth_hz.1.ln());
        p.ln_sm1 = p
            .ln_sm1
            .clamp((bounds.sigma.0 - 1.0).ln(), (bounds.sigma.1 - 1.0).ln());
        p
    }
}

/// Weighted residuals and, optionally, their Jacobian in internal coordinates.
fn evaluate(problem: &FitProblem, pt: &Point, with_jac: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let dim = if problem.fits_sigma() { 3 } else { 2 };
    let m = problem.num_residuals();
    let p = pt.params();
    let mut r = DVector::zeros(m);
    let mut jac = with_jac.then(|| DMatrix::zeros(m, dim));
    // chain rule to internal coordinates
    let scale = [1.0, p.bandwidth_hz, p.sigma - 1.0];
    let mut row = 0;
    for (k, &f) in problem.frequencies.iter().enumerate() {
        let sw = problem.weight(k).sqrt();
        let dj = with_jac.then(|| spectra_jacobian(&p, f));
        if let Some(obs) = &problem.s_i_observed {
            r[row] = sw * (obs[k] - model::intensity_diff_spectrum(&p, f));
            if let (Some(j), Some(d)) = (jac.as_mut(), dj) {
                for c in 0..dim {
                    j[(row, c)] = -sw * d.intensity[c] * scale[c];
                }
            }
            row += 1;
        }
        if let Some(obs) = &problem.s_p_observed {
            let model_p = 1.0 - p.eta_xi / (p.sigma * p.sigma + (f / p.bandwidth_hz).powi(2));
            r[row] = sw * (obs[k] - model_p);
            if let (Some(j), Some(d)) = (jac.as_mut(), dj) {
                for c in 0..dim {
                    j[(row, c)] = -sw * d.phase[c] * scale[c];
                }
            }
            row += 1;
        }
    }
    (r, jac)
}

#[derive(Debug, Clone, Copy)]
struct Run {
    point: Point,
    cost: f64,
    converged: bool,
    iterations: usize,
}

fn levenberg_marquardt(problem: &FitProblem, start: Point, opts: &FitOptions) -> Run {
    let dim = if problem.fits_sigma() { 3 } else { 2 };
    let mut pt = start;
    let (mut r, mut jac) = evaluate(problem, &pt, true);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let j = jac.as_ref().expect("jacobian requested");
        let g = j.transpose() * &r;
        if g.amax() <= opts.grad_tol || cost == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let a = j.transpose() * j;
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = a.clone();
            for c in 0..dim {
                damped[(c, c)] += lambda * a[(c, c)].max(1e-30);
            }
            let Some(delta) = damped.cholesky().map(|ch| ch.solve(&(-&g))) else {
                lambda *= 4.0;
                continue;
            };
            let cand = pt.stepped(&delta, &problem.bounds);
            let (r_new, _) = evaluate(problem, &cand, false);
            let cost_new = r_new.norm_squared();
            let step = (cand.to_vec(dim) - pt.to_vec(dim)).norm();
            let small_step = step <= opts.step_tol * (pt.to_vec(dim).norm() + opts.step_tol);
            if cost_new.is_finite() && cost_new < cost {
                pt = cand;
                cost = cost_new;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if small_step {
                    converged = true;
                }
                break;
            }
            if small_step {
                // no representable improvement left
                converged = true;
                break;
            }
            lambda *= 4.0;
        }
        if converged || !accepted {
            break;
        }
        let (r_new, jac_new) = evaluate(problem, &pt, true);
        r = r_new;
        jac = jac_new;
    }
    Run {
        point: pt,
        cost,
        converged,
        iterations,
    }
}

fn start_grid(problem: &FitProblem) -> Vec<Point> {
    let (lo, hi) = problem.span();
    let span = if hi > lo { hi - lo } else { hi.max(1.0) };
    let sigmas: &[f64] = if problem.fits_sigma() { &[1.1, 1.5, 3.0] } else { &[1.5] };
    let mut starts = Vec::new();
    for &a in &[0.3, 0.6, 0.9] {
        for &b in &[span / 8.0, span / 2.0, 2.0 * span] {
            for &s in sigmas {
                starts.push(Point::from_params(a, b, s));
            }
        }
    }
    starts
}

/// Column-scaled rank check of `JᵀJ`; names the parameter dominating the
/// weakest direction when it is numerically degenerate.
fn check_identifiable(jac: &DMatrix<f64>) -> Result<()> {
    let dim = jac.ncols();
    let norms: Vec<f64> = (0..dim).map(|c| jac.column(c).norm()).collect();
    if let Some(c) = norms.iter().position(|n| *n == 0.0) {
        return Err(Error::Unidentifiable(PARAM_NAMES[c]));
    }
    let mut scaled = jac.clone();
    for (c, n) in norms.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / n);
    }
    let eig = SymmetricEigen::new(scaled.transpose() * &scaled);
    let (imin, min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let max = eig.eigenvalues.amax();
    if min <= 1e-14 * max {
        let v = eig.eigenvectors.column(imin);
        let worst = (0..dim)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap_or(0);
        return Err(Error::Unidentifiable(PARAM_NAMES[worst]));
    }
    Ok(())
}

/// Fits the twin-beam spectra to the observed data.
///
/// Without `init`, every point of a fixed start grid is tried and the best
/// converged run wins (lowest residual, then fewest iterations).
pub fn fit_spectra(problem: &FitProblem, init: Option<SpectralParams>, opts: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    let starts = match init {
        Some(p) => {
            let sigma = if problem.fits_sigma() { p.sigma.max(1.0 + 1e-9) } else { 1.5 };
            vec![Point::from_params(p.eta_xi, p.bandwidth_hz, sigma)]
        }
        None => start_grid(problem),
    };

    let best = starts
        .into_iter()
        .map(|s| levenberg_marquardt(problem, s, opts))
        .reduce(|best, run| {
            let better = match (run.converged, best.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => {
                    run.cost < best.cost
                        || (run.cost == best.cost && run.iterations < best.iterations)
                }
            };
            if better {
                run
            } else {
                best
            }
        })
        .expect("at least one start");

    let dim = if problem.fits_sigma() { 3 } else { 2 };
    let (_, jac) = evaluate(problem, &best.point, true);
    let jac = jac.expect("jacobian requested");
    check_identifiable(&jac)?;

    let params = best.point.params();
    let m = problem.num_residuals();
    let mut covariance = [[0.0; 3]; 3];
    if m > dim {
        // back to natural coordinates
        let scale = [1.0, params.bandwidth_hz, params.sigma - 1.0];
        let mut nat = jac.clone();
        for (c, k) in scale.iter().take(dim).enumerate() {
            nat.column_mut(c).scale_mut(1.0 / k);
        }
        let s2 = best.cost / (m - dim) as f64;
        if let Some(inv) = (nat.transpose() * &nat).try_inverse() {
            for a in 0..dim {
                for b in 0..dim {
                    covariance[a][b] = s2 * inv[(a, b)];
                }
            }
        }
    }

    Ok(FitResult {
        eta_xi: params.eta_xi,
        bandwidth_hz: params.bandwidth_hz,
        sigma: problem.fits_sigma().then_some(params.sigma),
        residual_norm: best.cost.sqrt(),
        covariance,
        converged: best.converged,
        iterations: best.iterations,
        unidentifiable: if problem.fits_sigma() {
            Vec::new()
        } else {
            vec!["sigma".to_string()]
        },
    })
}
