//! Rotation axis and rate from the slow-time modulation of autocorrelation
//! supports.
//!
//! The support `τ_supp(s)` of each receiver's autocorrelation peaks whenever
//! the most separated scatterer pair lines up with the bistatic direction
//! `d_R(s)`. Peak times `s*` and directions `d_R(s*)` feed a regression on
//! consecutive in-plane angles `atan g` against `ω_r·Δs*`.

use crate::correlation::{autocorrelation_envelopes, AutoCorrelations, CorrelationError, CorrelationSet, EnvelopeOptions};
use crate::geometry::{axis_matrix, doppler_factor, unit_from, GeometryError, RotationParams, Vec3};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::scenario::Scenario;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error("autocorrelation of receiver {receiver} is zero at pulse {pulse}")]
    ZeroPulse { receiver: usize, pulse: usize },
    #[error("trace of {len} pulses is not longer than the smoothing window {window}")]
    TraceTooShort { len: usize, window: usize },
    #[error("found {found} support peaks, need at least 2")]
    NoPeaks { found: usize },
    #[error("loss needs at least 2 data points, got {0}")]
    InsufficientData(usize),
    #[error("direction is degenerate for the given axis")]
    DegenerateDirection,
}

/// Support of one autocorrelation envelope: `2·max{τ : env(τ) ≥ α·max env}`
/// with linear interpolation across the threshold crossing.
pub fn support_of(envelope: &[f64], dlag: f64, alpha: f64) -> Option<f64> {
    let peak = envelope.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return None;
    }
    let level = alpha * peak;
    let j = envelope.iter().rposition(|&v| v >= level)?;
    if j + 1 == envelope.len() {
        return Some(2.0 * j as f64 * dlag);
    }
    let (a, b) = (envelope[j], envelope[j + 1]);
    let frac = if a > b { (a - level) / (a - b) } else { 0.0 };
    Some(2.0 * (j as f64 + frac) * dlag)
}

/// Per-receiver support trace and its detected maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportTrace {
    pub receiver: usize,
    pub slow_times: Vec<f64>,
    pub support: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub peaks: Vec<f64>,
}

pub fn support_trace(auto: &AutoCorrelations, r: usize, alpha: f64) -> Result<SupportTrace, EstimationError> {
    let support = (0..auto.n_pulses())
        .map(|s| {
            support_of(auto.trace(r, s), auto.dlag, alpha)
                .ok_or(EstimationError::ZeroPulse { receiver: r, pulse: s })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SupportTrace {
        receiver: r,
        slow_times: auto.slow_times.clone(),
        smoothed: Vec::new(),
        support,
        peaks: Vec::new(),
    })
}

/// Gaussian smoothing with `σ = window/6`, truncated at `±window/2` and
/// renormalized near the ends.
pub fn gaussian_smooth(x: &[f64], window: usize) -> Vec<f64> {
    let half = (window / 2) as isize;
    let sigma = (window as f64 / 6.0).max(1e-12);
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (k, w) in (-half..=half).zip(&kernel) {
                let j = i + k;
                if (0..n).contains(&j) {
                    acc += w * x[j as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

/// Strict local maxima at least `margin` samples from both ends, strongest
/// first, kept when at least `min_sep` samples from every stronger kept one.
/// Returns sub-sample positions from a parabola through the three samples,
/// sorted ascending.
pub fn local_maxima(y: &[f64], min_sep: usize, margin: usize) -> Vec<f64> {
    let lo = margin.max(1);
    let hi = y.len().saturating_sub(margin.max(1));
    let mut cand: Vec<usize> = (lo..hi)
        .filter(|&i| y[i] > y[i - 1] && y[i] > y[i + 1])
        .collect();
    cand.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let mut kept: Vec<usize> = Vec::new();
    for i in cand {
        if kept.iter().all(|&k| k.abs_diff(i) >= min_sep) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept.into_iter()
        .map(|i| {
            let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
            let den = a - 2.0 * b + c;
            let off = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            i as f64 + off.clamp(-0.5, 0.5)
        })
        .collect()
}

/// Smooths the trace and records its peak times.
pub fn smooth_and_find_peaks(trace: &mut SupportTrace, window: usize) -> Result<(), EstimationError> {
    if trace.support.len() <= window {
        return Err(EstimationError::TraceTooShort {
            len: trace.support.len(),
            window,
        });
    }
    trace.smoothed = gaussian_smooth(&trace.support, window);
    let t = &trace.slow_times;
    let ds = if t.len() > 1 { t[1] - t[0] } else { 0.0 };
    // maxima where the kernel is cut by the trace ends are biased
    trace.peaks = local_maxima(&trace.smoothed, (window / 2).max(1), window / 2)
        .into_iter()
        .map(|p| t[0] + p * ds)
        .collect();
    Ok(())
}

/// `d_R(s) = unit(x_L − x_E) + γ_R·unit(x_L − x_R)`.
pub fn direction_vector(s: f64, scenario: &Scenario, r: usize) -> Result<Vec3, EstimationError> {
    let x = scenario.center(s);
    let layout = &scenario.layout;
    let v = scenario.trajectory.v_t;
    let gamma = doppler_factor(&x, layout, r, &v)?;
    let xr = layout.receiver(r)?;
    Ok(unit_from(&x, &layout.emitter, "emitter")? + unit_from(&x, &xr, "receiver")? * gamma)
}

/// `g(θ, φ, d) = (−d₁ sinφ + d₂ cosφ) / (d₁ cosθ cosφ + d₂ cosθ sinφ + d₃ sinθ)`.
pub fn g_ratio(theta: f64, phi: f64, d: &Vec3) -> Result<f64, EstimationError> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let num = -d[0] * sp + d[1] * cp;
    let den = d[0] * ct * cp + d[1] * ct * sp + d[2] * st;
    if den.abs() < 1e-12 * d.norm() {
        return Err(EstimationError::DegenerateDirection);
    }
    Ok(num / den)
}

/// Same ratio from the body-frame components `(R_Ωᵀ d)₂ / (R_Ωᵀ d)₁`.
pub fn g_ratio_matrix(theta: f64, phi: f64, d: &Vec3) -> Result<f64, EstimationError> {
    let p = axis_matrix(theta, phi).transpose() * d;
    if p[0].abs() < 1e-12 * d.norm() {
        return Err(EstimationError::DegenerateDirection);
    }
    Ok(p[1] / p[0])
}

/// In-plane angle of `d` modulo π, free of the `g` singularity.
fn plane_angle(theta: f64, phi: f64, d: &Vec3) -> f64 {
    let (p1, p2) = plane_components(theta, phi, d);
    p2.atan2(p1)
}

/// `((R_Ωᵀ d)₁, (R_Ωᵀ d)₂)`.
fn plane_components(theta: f64, phi: f64, d: &Vec3) -> (f64, f64) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (
        d[0] * ct * cp + d[1] * ct * sp + d[2] * st,
        -d[0] * sp + d[1] * cp,
    )
}

/// Plane angle shifted by the lag of the support maximum behind the phase
/// alignment. With in-plane magnitude `A(s)` and angle `a(s)`, the maximum of
/// `|A sin(a − ωs)|` sits where `a − ωs = π/2 − ε` (mod π) with
/// `tan ε = A' / (A (ω − a'))`.
fn drift_corrected_angle(theta: f64, phi: f64, omega: f64, p: &DataPoint) -> f64 {
    let (p1, p2) = plane_components(theta, phi, &p.d);
    let (q1, q2) = plane_components(theta, phi, &p.d_rate);
    let a2 = p1 * p1 + p2 * p2;
    let angle = p2.atan2(p1);
    if a2 == 0.0 {
        return angle;
    }
    let log_rate = (p1 * q1 + p2 * q2) / a2;
    let angle_rate = (p1 * q2 - p2 * q1) / a2;
    angle + (log_rate / (omega - angle_rate)).atan()
}

/// Wraps into `(−π/2, π/2]`.
pub fn wrap_half_pi(x: f64) -> f64 {
    let y = x - PI * (x / PI).round();
    if y <= -PI / 2.0 {
        y + PI
    } else {
        y
    }
}

/// One regression sample: a support peak time and the direction there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub receiver: usize,
    pub s: f64,
    pub d: Vec3,
    /// `d d_R/ds` at `s`, used by the drift correction.
    pub d_rate: Vec3,
}

impl DataPoint {
    pub fn new(scenario: &Scenario, r: usize, s: f64) -> Result<Self, EstimationError> {
        let h = 1e-3;
        let a = direction_vector(s - h, scenario, r)?;
        let b = direction_vector(s + h, scenario, r)?;
        Ok(Self {
            receiver: r,
            s,
            d: direction_vector(s, scenario, r)?,
            d_rate: (b - a) / (2.0 * h),
        })
    }
}

/// `Σ_i (atan g_i − atan g_{i−1} − ω(s*_i − s*_{i−1}))²` over data sorted by
/// time, each residual wrapped into `(−π/2, π/2]`.
pub fn loss(theta: f64, phi: f64, omega: f64, data: &[DataPoint]) -> Result<f64, EstimationError> {
    if data.len() < 2 {
        return Err(EstimationError::InsufficientData(data.len()));
    }
    let angles: Vec<f64> = data.iter().map(|p| plane_angle(theta, phi, &p.d)).collect();
    Ok(loss_from_angles(&angles, data, omega))
}

/// [`loss`] with each angle replaced by its drift-corrected value.
pub fn loss_drift_corrected(theta: f64, phi: f64, omega: f64, data: &[DataPoint]) -> Result<f64, EstimationError> {
    if data.len() < 2 {
        return Err(EstimationError::InsufficientData(data.len()));
    }
    let angles: Vec<f64> = data.iter().map(|p| drift_corrected_angle(theta, phi, omega, p)).collect();
    Ok(loss_from_angles(&angles, data, omega))
}

fn loss_from_angles(angles: &[f64], data: &[DataPoint], omega: f64) -> f64 {
    angles
        .windows(2)
        .zip(data.windows(2))
        .map(|(a, p)| wrap_half_pi(a[1] - a[0] - omega * (p[1].s - p[0].s)).powi(2))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationOptions {
    /// Support threshold `α`.
    pub alpha: f64,
    /// Smoothing window in slow-time steps.
    pub window: usize,
    pub theta_steps: usize,
    pub phi_steps: usize,
    pub omega_steps: usize,
    /// Relative half-width of the `ω_r` scan around the peak-spacing guess.
    pub omega_span: f64,
    /// Local refinements started from the best distinct coarse cells.
    pub restarts: usize,
    pub tolerance: f64,
    /// Refine with [`loss_drift_corrected`] after minimizing [`loss`].
    pub drift_correction: bool,
    /// Envelope lag sampling; `None` uses 10 ps up to half the pulse window.
    pub envelope: Option<EnvelopeOptions>,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            window: 100,
            theta_steps: 64,
            phi_steps: 128,
            omega_steps: 41,
            omega_span: 0.2,
            restarts: 4,
            tolerance: 1e-6,
            drift_correction: true,
            envelope: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationEstimate {
    pub theta_hat: f64,
    pub phi_hat: f64,
    pub omega_hat: f64,
    pub loss: f64,
    pub data: Vec<DataPoint>,
    /// Rate guess from the peak spacing.
    pub omega_guess: f64,
    pub warnings: Vec<String>,
    pub traces: Vec<SupportTrace>,
}

impl RotationEstimate {
    pub fn params(&self) -> RotationParams {
        RotationParams::canonical(self.theta_hat, self.phi_hat, self.omega_hat)
    }

    /// Relative errors `(θ, φ, ω_r)` against a reference, with the azimuth
    /// difference taken on the circle.
    pub fn relative_errors(&self, truth: &RotationParams) -> [f64; 3] {
        let dphi = {
            let d = (self.phi_hat - truth.phi_rot).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        };
        [
            (self.theta_hat - truth.theta_rot).abs() / truth.theta_rot.abs(),
            dphi / truth.phi_rot.abs(),
            (self.omega_hat - truth.omega_r).abs() / truth.omega_r.abs(),
        ]
    }
}

/// Support traces, smoothed and with peaks, for every receiver.
pub fn support_traces(auto: &AutoCorrelations, opts: &EstimationOptions) -> Result<Vec<SupportTrace>, EstimationError> {
    (0..auto.n_receivers)
        .map(|r| {
            let mut t = support_trace(auto, r, opts.alpha)?;
            smooth_and_find_peaks(&mut t, opts.window)?;
            Ok(t)
        })
        .collect()
}

/// `π / median` spacing of consecutive peaks within each receiver.
pub fn omega_from_peaks(traces: &[SupportTrace]) -> Option<f64> {
    let mut gaps: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.peaks.windows(2).map(|w| w[1] - w[0]))
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    let median = if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    };
    Some(PI / median)
}

/// Merged, time-sorted regression data.
pub fn collect_data(traces: &[SupportTrace], scenario: &Scenario) -> Result<Vec<DataPoint>, EstimationError> {
    let mut data = Vec::new();
    for t in traces {
        for &s in &t.peaks {
            data.push(DataPoint::new(scenario, t.receiver, s)?);
        }
    }
    data.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok(data)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Coarse scan over `θ × φ × ω_r` followed by simplex refinement.
pub fn estimate_from_data(
    data: &[DataPoint],
    omega_guess: f64,
    opts: &EstimationOptions,
) -> Result<(f64, f64, f64, f64, Vec<String>), EstimationError> {
    if data.len() < 2 {
        return Err(EstimationError::InsufficientData(data.len()));
    }
    let nt = opts.theta_steps.max(1);
    let np = opts.phi_steps.max(1);
    let nw = opts.omega_steps.max(1);
    let omegas: Vec<f64> = (0..nw)
        .map(|k| {
            let u = if nw == 1 { 0.0 } else { 2.0 * k as f64 / (nw - 1) as f64 - 1.0 };
            omega_guess * (1.0 + opts.omega_span * u)
        })
        .collect();
    // best loss per (θ, φ) cell with its rate
    let mut cells = Vec::with_capacity(nt * np);
    let mut angles = vec![0.0; data.len()];
    for i in 0..nt {
        let theta = (i as f64 + 0.5) * PI / nt as f64;
        for j in 0..np {
            let phi = j as f64 * 2.0 * PI / np as f64;
            for (a, p) in angles.iter_mut().zip(data) {
                *a = plane_angle(theta, phi, &p.d);
            }
            let (w, l) = omegas
                .iter()
                .map(|&w| (w, loss_from_angles(&angles, data, w)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            cells.push((theta, phi, w, l));
        }
    }
    let mut warnings = Vec::new();
    let best = cells.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
    let med = median(cells.iter().map(|c| c.3).collect());
    if med > 0.0 && (med - best) / med < 0.05 {
        warnings.push(format!("flat loss: coarse best {best:.3e} vs median {med:.3e}"));
    }
    cells.sort_by(|a, b| a.3.total_cmp(&b.3));
    let dt = PI / nt as f64;
    let dp = 2.0 * PI / np as f64;
    let mut starts: Vec<(f64, f64, f64, f64)> = Vec::new();
    for c in &cells {
        if starts.len() >= opts.restarts.max(1) {
            break;
        }
        let far = starts.iter().all(|s| {
            let dphi = (c.1 - s.1).rem_euclid(2.0 * PI);
            (c.0 - s.0).abs() > 2.0 * dt || dphi.min(2.0 * PI - dphi) > 2.0 * dp
        });
        if far {
            starts.push(*c);
        }
    }
    // the refinement stays inside the scanned rate band
    let (w_lo, w_hi) = (omegas[0].min(omegas[nw - 1]), omegas[0].max(omegas[nw - 1]));
    let in_band = |w: f64| w >= w_lo && w <= w_hi;
    let objective = |x: &[f64]| {
        if !in_band(x[2]) {
            return f64::INFINITY;
        }
        let (theta, phi) = fold_angles(x[0], x[1]);
        let angles: Vec<f64> = data.iter().map(|p| plane_angle(theta, phi, &p.d)).collect();
        loss_from_angles(&angles, data, x[2])
    };
    let nm = NelderMeadOptions {
        xtol: opts.tolerance,
        ftol: 0.0,
        max_evals: 20_000,
    };
    let mut result = (starts[0].0, starts[0].1, starts[0].2, starts[0].3);
    for s in &starts {
        let m = nelder_mead(
            objective,
            &[s.0, s.1, s.2],
            &[0.5 * dt, 0.5 * dp, 0.02 * s.2],
            nm,
        );
        if m.value <= result.3 {
            let (theta, phi) = fold_angles(m.x[0], m.x[1]);
            result = (theta, phi, m.x[2], m.value);
        }
        if !m.converged {
            warnings.push(format!("refinement did not converge after {} evaluations", m.evals));
        }
    }
    if opts.drift_correction {
        let corrected = |x: &[f64]| {
            if !in_band(x[2]) {
                return f64::INFINITY;
            }
            let (theta, phi) = fold_angles(x[0], x[1]);
            let angles: Vec<f64> = data
                .iter()
                .map(|p| drift_corrected_angle(theta, phi, x[2], p))
                .collect();
            loss_from_angles(&angles, data, x[2])
        };
        let m = nelder_mead(
            corrected,
            &[result.0, result.1, result.2],
            &[0.25 * dt, 0.25 * dp, 0.01 * result.2],
            nm,
        );
        if !m.converged {
            warnings.push(format!("drift refinement did not converge after {} evaluations", m.evals));
        }
        let (theta, phi) = fold_angles(m.x[0], m.x[1]);
        result = (theta, phi, m.x[2], m.value);
    }
    Ok((result.0, result.1, result.2, result.3, warnings))
}

/// Maps any `(θ, φ)` onto `θ ∈ [0, π]`, `φ ∈ [0, 2π)` describing the same axis.
fn fold_angles(theta: f64, phi: f64) -> (f64, f64) {
    let mut t = theta.rem_euclid(2.0 * PI);
    let mut p = phi;
    if t > PI {
        t = 2.0 * PI - t;
        p += PI;
    }
    (t, p.rem_euclid(2.0 * PI))
}

/// Estimates the rotation from autocorrelation envelopes.
pub fn estimate_from_autocorrelations(
    auto: &AutoCorrelations,
    scenario: &Scenario,
    opts: &EstimationOptions,
) -> Result<RotationEstimate, EstimationError> {
    let traces = support_traces(auto, opts)?;
    let found: usize = traces.iter().map(|t| t.peaks.len()).sum();
    if found < 2 {
        return Err(EstimationError::NoPeaks { found });
    }
    let omega_guess = omega_from_peaks(&traces).ok_or(EstimationError::NoPeaks { found })?;
    let data = collect_data(&traces, scenario)?;
    let (theta_hat, phi_hat, omega_hat, l, warnings) = estimate_from_data(&data, omega_guess, opts)?;
    Ok(RotationEstimate {
        theta_hat,
        phi_hat,
        omega_hat,
        loss: l,
        data,
        omega_guess,
        warnings,
        traces,
    })
}

/// Lags beyond this carry only noise for targets up to a metre across.
const DEFAULT_MAX_LAG: f64 = 10e-9;

/// Default envelope sampling for a scenario.
pub fn default_envelope(scenario: &Scenario) -> EnvelopeOptions {
    EnvelopeOptions {
        lag_step: 10e-12,
        max_lag: DEFAULT_MAX_LAG.min(scenario.pulse.window / 2.0),
    }
}

/// Full estimation from a correlation set.
pub fn estimate_rotation(
    correlations: &CorrelationSet,
    scenario: &Scenario,
    opts: &EstimationOptions,
) -> Result<RotationEstimate, EstimationError> {
    let env = opts.envelope.unwrap_or_else(|| default_envelope(scenario));
    let auto = autocorrelation_envelopes(&correlations.echoes, env)?;
    estimate_from_autocorrelations(&auto, scenario, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ArrayLayout, Trajectory};
    use crate::waveform::Pulse;
    use proptest::prelude::*;

    fn full_scale_scenario(pulses: usize) -> Scenario {
        let layout = ArrayLayout::random_square(Vec3::zeros(), 15, 200e3, 15e3, 1).unwrap();
        let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
        let rot = RotationParams::new(3.0 * PI / 4.0, PI / 3.0, 2.0 * PI / 5.0).unwrap();
        let pulse = Pulse::new(9.6e9, 311e6, 0.015, pulses).unwrap();
        Scenario::new(layout, traj, rot, pulse)
    }

    /// Model peak times: the long pair `(0, ±0.15)` aligns with `d` when
    /// `ω s + ψ ≡ 0 (mod π)` with `tan ψ = p₁/p₂`.
    fn model_data(sc: &Scenario, rot: &RotationParams, body_phase: f64) -> Vec<DataPoint> {
        let mut data = Vec::new();
        let slow = sc.slow_times();
        let (s0, s1) = (slow[0], *slow.last().unwrap());
        for r in 0..sc.layout.len() {
            let mut s = s0;
            // bracket roots of sin(ω s + ψ(s) + phase) on a fine grid
            let h = 0.001;
            let f = |s: f64| {
                let d = direction_vector(s, sc, r).unwrap();
                let p = rot.axis_matrix().transpose() * d;
                (rot.omega_r * s + body_phase).sin() * p[1] + (rot.omega_r * s + body_phase).cos() * p[0]
            };
            while s + h < s1 {
                let (a, b) = (f(s), f(s + h));
                if a * b < 0.0 {
                    let (mut lo, mut hi) = (s, s + h);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if f(lo) * f(mid) <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    let t = 0.5 * (lo + hi);
                    data.push(DataPoint::new(sc, r, t).unwrap());
                }
                s += h;
            }
        }
        data.sort_by(|a, b| a.s.total_cmp(&b.s));
        data
    }

    #[test]
    fn support_of_gaussian() {
        let dl = 0.01;
        let env: Vec<f64> = (0..1000).map(|j| (-(j as f64 * dl).powi(2) / 2.0).exp()).collect();
        let s = support_of(&env, dl, 0.001).unwrap();
        let want = 2.0 * (2.0 * 1000f64.ln()).sqrt();
        assert!((s - want).abs() < 1e-3, "{s} vs {want}");
        assert_eq!(support_of(&vec![0.0; 10], dl, 0.1), None);
    }

    #[test]
    fn gaussian_smoothing_preserves_constants() {
        let x = vec![3.5; 50];
        for v in gaussian_smooth(&x, 10) {
            assert!((v - 3.5).abs() < 1e-14);
        }
    }

    #[test]
    fn sinusoid_peaks() {
        let ds = 0.015;
        let w = 2.0 * PI / 5.0;
        let t: Vec<f64> = (0..1000).map(|i| i as f64 * ds).collect();
        let mut tr = SupportTrace {
            receiver: 0,
            slow_times: t.clone(),
            support: t.iter().map(|s| (2.0 * w * s + 0.3).cos().abs() + 2.0).collect(),
            smoothed: vec![],
            peaks: vec![],
        };
        // |cos| has period π/(2w) in this parametrisation; its maxima at 2ws + 0.3 = kπ
        smooth_and_find_peaks(&mut tr, 20).unwrap();
        assert!(!tr.peaks.is_empty());
        for p in &tr.peaks {
            let k = ((2.0 * w * p + 0.3) / PI).round();
            let want = (k * PI - 0.3) / (2.0 * w);
            assert!((p - want).abs() <= ds, "{p} vs {want}");
        }
        let mut flat = SupportTrace {
            support: vec![1.0; 300],
            ..tr.clone()
        };
        flat.slow_times.truncate(300);
        smooth_and_find_peaks(&mut flat, 20).unwrap();
        assert!(flat.peaks.is_empty());
        let mut short = flat.clone();
        short.support.truncate(10);
        assert!(matches!(smooth_and_find_peaks(&mut short, 20), Err(EstimationError::TraceTooShort { .. })));
    }

    #[test]
    fn peak_separation_is_enforced() {
        let y = [0.0, 1.0, 0.0, 0.9, 0.0, 0.0, 0.0, 0.0, 0.8, 0.0];
        let p = local_maxima(&y, 4, 1);
        assert_eq!(p.len(), 2);
        assert!((p[0] - 1.0).abs() < 0.5 && (p[1] - 8.0).abs() < 0.5);
    }

    #[test]
    fn direction_cases() {
        let layout = ArrayLayout::new(
            Vec3::zeros(),
            vec![Vec3::zeros(), Vec3::new(1e3, 0.0, 0.0)],
            0.0,
            1e3,
        )
        .unwrap();
        let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::zeros());
        let sc = Scenario::new(layout, traj, RotationParams::frozen(), Pulse::new(9.6e9, 311e6, 0.015, 1).unwrap());
        let d = direction_vector(0.0, &sc, 0).unwrap();
        assert!((d - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-15);
        let d = direction_vector(0.0, &sc, 1).unwrap();
        let want = Vec3::new(0.0, 0.0, 1.0) + Vec3::new(-1e3, 0.0, 500e3).normalize();
        assert!((d - want).norm() < 1e-15);
        let sc = full_scale_scenario(1);
        for r in 0..sc.layout.len() {
            let d = direction_vector(0.0, &sc, r).unwrap();
            let x = sc.center(0.0);
            let xr = sc.layout.receivers[r];
            let g = doppler_factor(&x, &sc.layout, r, &sc.trajectory.v_t).unwrap();
            let want = x.normalize() + (x - xr) / (x - xr).norm() * g;
            assert!((d - want).norm() < 1e-14);
            assert!(d.norm() > 0.0 && d.norm() <= 2.0);
        }
    }

    #[test]
    fn g_ratio_degeneracy() {
        let r = g_ratio(PI / 2.0, 0.0, &Vec3::new(1.0, 1.0, 0.0));
        assert!(matches!(r, Err(EstimationError::DegenerateDirection)));
        // d along the axis: both components vanish in the plane
        let axis = RotationParams::new(0.7, 1.1, 1.0).unwrap().axis();
        assert!(matches!(g_ratio(0.7, 1.1, &axis), Err(EstimationError::DegenerateDirection)));
        assert!(matches!(g_ratio_matrix(0.7, 1.1, &axis), Err(EstimationError::DegenerateDirection)));
    }

    #[test]
    fn loss_cases() {
        let sc = full_scale_scenario(667);
        let truth = sc.rotation;
        let data = model_data(&sc, &truth, 0.0);
        assert!(data.len() >= 20);
        let l0 = loss(truth.theta_rot, truth.phi_rot, truth.omega_r, &data).unwrap();
        assert!(l0 < 1e-18, "{l0}");
        let l1 = loss(truth.theta_rot + 0.2, truth.phi_rot, truth.omega_r, &data).unwrap();
        assert!(l1 > l0);
        assert!(matches!(loss(1.0, 1.0, 1.0, &data[..1]), Err(EstimationError::InsufficientData(1))));
    }

    #[test]
    fn recovers_truth_from_model_data() {
        let sc = full_scale_scenario(667);
        let truth = sc.rotation;
        let data = model_data(&sc, &truth, 0.4);
        let opts = EstimationOptions {
            drift_correction: false,
            ..Default::default()
        };
        let (t, p, w, _, _) = estimate_from_data(&data, truth.omega_r * 1.1, &opts).unwrap();
        assert!((t - truth.theta_rot).abs() < 1e-4, "{t}");
        assert!((p - truth.phi_rot).abs() < 1e-4, "{p}");
        assert!((w - truth.omega_r).abs() < 1e-5, "{w}");
    }

    #[test]
    fn error_shrinks_with_jitter() {
        use rand::{Rng, SeedableRng};
        let sc = full_scale_scenario(667);
        let truth = sc.rotation;
        let clean = model_data(&sc, &truth, 0.4);
        let ds = sc.pulse.pulse_spacing;
        let mut errs = Vec::new();
        for level in [0.0, 1.0, 2.0] {
            let mut total = 0.0;
            for seed in 0..4 {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let data: Vec<DataPoint> = clean
                    .iter()
                    .map(|p| {
                        let s = p.s + level * ds * (2.0 * rng.random::<f64>() - 1.0);
                        DataPoint { s, d: direction_vector(s, &sc, p.receiver).unwrap(), ..*p }
                    })
                    .collect();
                let mut data = data;
                data.sort_by(|a, b| a.s.total_cmp(&b.s));
                let opts = EstimationOptions {
                    drift_correction: false,
                    ..Default::default()
                };
                let (t, p, w, _, _) = estimate_from_data(&data, truth.omega_r, &opts).unwrap();
                let est = RotationEstimate {
                    theta_hat: t,
                    phi_hat: p,
                    omega_hat: w,
                    loss: 0.0,
                    data: vec![],
                    omega_guess: 0.0,
                    warnings: vec![],
                    traces: vec![],
                };
                total += est.relative_errors(&truth).iter().sum::<f64>();
            }
            errs.push(total);
        }
        assert!(errs[0] < 1e-4, "{errs:?}");
        assert!(errs[0] <= errs[1] && errs[1] <= errs[2], "{errs:?}");
    }

    #[test]
    fn wrap_range() {
        for x in [-7.0, -PI / 2.0, 0.0, PI / 2.0, 1.6, 10.0] {
            let w = wrap_half_pi(x);
            assert!(w > -PI / 2.0 && w <= PI / 2.0 + 1e-15);
            assert!(((x - w) / PI - ((x - w) / PI).round()).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100_000))]
        #[test]
        fn printed_ratio_matches_matrix_form(
            theta in 0.0f64..PI, phi in 0.0f64..(2.0 * PI),
            d in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let d = Vec3::new(d[0], d[1], d[2]);
            if let (Ok(a), Ok(b)) = (g_ratio(theta, phi, &d), g_ratio_matrix(theta, phi, &d)) {
                let den = (axis_matrix(theta, phi).transpose() * d)[0].abs() / d.norm();
                // conditioning of the ratio
                let tol = 1e-12 * (1.0 + a.abs()) / den.max(1e-3);
                prop_assert!((a - b).abs() <= tol.max(1e-12 * a.abs()), "{} {}", a, b);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn loss_ignores_body_orientation(
            phase in -3.0f64..3.0,
            theta in 0.1f64..3.0, phi in 0.0f64..6.2, omega in 1.0f64..1.5,
        ) {
            // static target: d_R is constant, so a body phase only shifts every
            // peak time by the same amount
            let mut sc = full_scale_scenario(1);
            sc.trajectory.v_t = Vec3::zeros();
            let truth = sc.rotation;
            let gen = |ph: f64| {
                let mut data = Vec::new();
                for r in 0..sc.layout.len() {
                    let d = direction_vector(0.0, &sc, r).unwrap();
                    let p = truth.axis_matrix().transpose() * d;
                    let psi = p[0].atan2(p[1]);
                    for k in 0..6 {
                        let s = (k as f64 * PI - psi - ph) / truth.omega_r;
                        data.push(DataPoint { receiver: r, s, d, d_rate: Vec3::zeros() });
                    }
                }
                data.sort_by(|a, b| a.s.total_cmp(&b.s));
                data
            };
            let la = loss(theta, phi, omega, &gen(0.0)).unwrap();
            let lb = loss(theta, phi, omega, &gen(phase)).unwrap();
            prop_assert!((la - lb).abs() <= 1e-9 * la.max(1.0));
            let at_truth = loss(truth.theta_rot, truth.phi_rot, truth.omega_r, &gen(phase)).unwrap();
            prop_assert!(at_truth < 1e-20);
        }
    }
}
