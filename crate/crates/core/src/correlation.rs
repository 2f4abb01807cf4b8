//! Doppler-rescaled cross-correlations and autocorrelation envelopes.
//!
//! Cross-correlations are kept factored: a [`CorrelationSet`] stores the
//! aligned spectra `û_R(s, ω)` and forms `Ĉ_RR'(s, ω) = û_R conj(û_R')` on
//! demand. With `C_RR'(τ) = ∫ u_R(t) u_R'(t + τ) dt` this is the transform
//! `∫ C(τ) e^{−iωτ} dτ`.

use crate::geometry::{doppler_factor, GeometryError, Vec3};
use crate::scenario::Scenario;
use crate::waveform::{rescale_spectrum, rescale_time, FrequencyGrid, Pulse, SpectralEchoes, TimeEchoes};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("frequency grids differ")]
    GridMismatch,
    #[error("frequency grid must be uniform with at least two samples")]
    NonUniformGrid,
    #[error("receiver {index} out of range for {count} receivers")]
    Receiver { index: usize, count: usize },
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed correlation file: {0}")]
    Format(String),
}

/// Reference Doppler factor `γ_R(x₀, x_E, v₀)`.
pub fn reference_doppler(
    scenario: &Scenario,
    r: usize,
    x0: &Vec3,
    v0: &Vec3,
) -> Result<f64, CorrelationError> {
    Ok(doppler_factor(x0, &scenario.layout, r, v0)?)
}

/// Applies the reference Doppler rescaling to a sampled time axis.
pub fn rescale_echo_time(
    times: &[f64],
    scenario: &Scenario,
    r: usize,
    x0: &Vec3,
    v0: &Vec3,
) -> Result<Vec<f64>, CorrelationError> {
    Ok(rescale_time(times, reference_doppler(scenario, r, x0, v0)?))
}

/// Frequency-domain counterpart of [`rescale_echo_time`].
pub fn rescale_echo_spectrum(
    omegas: &[f64],
    values: &[Complex64],
    scenario: &Scenario,
    r: usize,
    x0: &Vec3,
    v0: &Vec3,
) -> Result<(Vec<f64>, Vec<Complex64>), CorrelationError> {
    Ok(rescale_spectrum(omegas, values, reference_doppler(scenario, r, x0, v0)?))
}

/// `a·conj(b)` for two spectra on the same grid.
pub fn correlate_spectra(
    fa: &FrequencyGrid,
    a: &[Complex64],
    fb: &FrequencyGrid,
    b: &[Complex64],
) -> Result<Vec<Complex64>, CorrelationError> {
    if fa != fb || a.len() != b.len() || a.len() != fa.len() {
        return Err(CorrelationError::GridMismatch);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y.conj()).collect())
}

/// `Ĉ_RR'(s_i, ω)` from aligned spectral echoes.
pub fn cross_correlate_freq(
    echoes: &SpectralEchoes,
    r: usize,
    r2: usize,
    s: usize,
) -> Result<Vec<Complex64>, CorrelationError> {
    for idx in [r, r2] {
        if idx >= echoes.n_receivers {
            return Err(CorrelationError::Receiver {
                index: idx,
                count: echoes.n_receivers,
            });
        }
    }
    correlate_spectra(&echoes.freqs, echoes.row(r, s), &echoes.freqs, echoes.row(r2, s))
}

/// Real correlation on a symmetric lag grid `τ_j = j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagTrace {
    pub dt: f64,
    /// Values for `j = −(n−1), …, n−1`.
    pub values: Vec<f64>,
}

impl LagTrace {
    pub fn max_lag_index(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn lag(&self, i: usize) -> f64 {
        (i as f64 - self.max_lag_index() as f64) * self.dt
    }

    pub fn at_zero(&self) -> f64 {
        self.values[self.max_lag_index()]
    }
}

/// `dt·Σ_j a_j b_{j+k}` for every lag, via zero-padded FFT.
pub fn correlate_real(a: &[f64], b: &[f64], dt: f64) -> LagTrace {
    let n = a.len().max(b.len());
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let load = |x: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        for (d, &s) in v.iter_mut().zip(x) {
            d.re = s;
        }
        v
    };
    let (mut fa, mut fb) = (load(a), load(b));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    inv.process(&mut prod);
    let scale = dt / m as f64;
    let values = (0..2 * n - 1)
        .map(|i| {
            let k = i as isize - (n as isize - 1);
            prod[k.rem_euclid(m as isize) as usize].re * scale
        })
        .collect();
    LagTrace { dt, values }
}

/// Time-domain `C_RR'(s, τ) = ∫ ũ_R(t) ũ_R'(t + τ) dt` on the sample grid.
pub fn cross_correlate_time(echoes: &TimeEchoes, r: usize, r2: usize, s: usize) -> LagTrace {
    correlate_real(echoes.trace(r, s), echoes.trace(r2, s), echoes.grid.dt)
}

pub fn autocorrelate_time(echoes: &TimeEchoes, r: usize, s: usize) -> LagTrace {
    cross_correlate_time(echoes, r, r, s)
}

/// Closed-form pulse kernel `G(τ) = ∫ f''(t) f''(t + τ) dt`.
///
/// With `R_f(τ) = ∫ f(t) f(t+τ) dt = (σ√π/2)·e^{−τ²/(4σ²)}·(cos ω_oτ + e^{−ω_o²σ²})`,
/// `G = R_f''''`, expanded with Hermite polynomials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseKernel {
    sigma: f64,
    omega: f64,
}

pub fn pulse_autocorrelation(p: &Pulse) -> PulseKernel {
    PulseKernel {
        sigma: p.sigma_t(),
        omega: p.omega_o(),
    }
}

impl PulseKernel {
    /// Derivatives 0..=4 of `h(τ) = e^{−τ²/(4σ²)}`.
    fn envelope_derivatives(&self, tau: f64) -> [f64; 5] {
        let a = 1.0 / (2.0 * self.sigma);
        let x = tau * a;
        let e = (-x * x).exp();
        let herm = [
            1.0,
            2.0 * x,
            4.0 * x * x - 2.0,
            8.0 * x.powi(3) - 12.0 * x,
            16.0 * x.powi(4) - 48.0 * x * x + 12.0,
        ];
        let mut out = [0.0; 5];
        let mut sign_scale = 1.0;
        for k in 0..5 {
            out[k] = sign_scale * herm[k] * e;
            sign_scale *= -a;
        }
        out
    }

    pub fn eval(&self, tau: f64) -> f64 {
        let h = self.envelope_derivatives(tau);
        const BINOM: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
        let w = self.omega;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut iw_pow = [Complex64::new(1.0, 0.0); 5];
        for k in 1..5 {
            iw_pow[k] = iw_pow[k - 1] * Complex64::new(0.0, w);
        }
        let carrier = Complex64::from_polar(1.0, w * tau);
        for k in 0..5 {
            acc += iw_pow[4 - k] * BINOM[k] * h[k];
        }
        let pref = self.sigma * PI.sqrt() / 2.0;
        pref * ((carrier * acc).re + (-(w * self.sigma).powi(2)).exp() * h[4])
    }
}

/// Per-(receiver, pulse) autocorrelation envelopes on non-negative lags.
///
/// The envelope is `|z(τ)|` for the analytic autocorrelation
/// `z(τ) = (1/2π)∫_{ω>0} |û(ω)|² e^{−iωτ} dω`, so `C(τ) = 2 Re z(τ)` and
/// `|z|` is even in `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoCorrelations {
    pub slow_times: Vec<f64>,
    pub n_receivers: usize,
    /// Lag spacing; lags are `j·dlag` for `j = 0..n_lags`.
    pub dlag: f64,
    pub n_lags: usize,
    pub data: Vec<f64>,
}

impl AutoCorrelations {
    pub fn n_pulses(&self) -> usize {
        self.slow_times.len()
    }

    pub fn trace(&self, r: usize, s: usize) -> &[f64] {
        let i = (r * self.n_pulses() + s) * self.n_lags;
        &self.data[i..i + self.n_lags]
    }

    pub fn lags(&self) -> Vec<f64> {
        (0..self.n_lags).map(|j| j as f64 * self.dlag).collect()
    }

    /// Autocorrelation magnitude of one receiver as CSV: one row per pulse,
    /// first column the slow time.
    pub fn write_csv<W: Write>(&self, r: usize, mut w: W) -> io::Result<()> {
        write!(w, "s")?;
        for l in self.lags() {
            write!(w, ",{l:.6e}")?;
        }
        writeln!(w)?;
        for (i, s) in self.slow_times.iter().enumerate() {
            write!(w, "{s:.6}")?;
            for v in self.trace(r, i) {
                write!(w, ",{v:.6e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Lag sampling of the envelope computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeOptions {
    /// Requested lag spacing; the actual spacing is at most this.
    pub lag_step: f64,
    /// Largest lag kept.
    pub max_lag: f64,
}

/// Autocorrelation envelopes from spectral echoes on a uniform grid.
///
/// When the grid is much finer than the lag range needs, the power spectrum
/// is first averaged over blocks of `k` bins with `1/(k·Δf) ≥ 4·max_lag`.
/// That multiplies the envelope by `sinc(π k Δf τ)` (≥ 0.90 over the kept
/// lags) and places the alias images on its nulls.
pub fn autocorrelation_envelopes(
    echoes: &SpectralEchoes,
    opts: EnvelopeOptions,
) -> Result<AutoCorrelations, CorrelationError> {
    let df = echoes.freqs.spacing();
    let n = echoes.n_freqs();
    if n < 2 || !(df > 0.0) {
        return Err(CorrelationError::NonUniformGrid);
    }
    let k = ((1.0 / (4.0 * opts.max_lag * df)).floor() as usize).clamp(1, n);
    let nb = n / k;
    let dfb = k as f64 * df;
    let need = (1.0 / (dfb * opts.lag_step)).ceil() as usize;
    let m = need.max(nb).next_power_of_two();
    let dlag = 1.0 / (m as f64 * dfb);
    let n_lags = ((opts.max_lag / dlag).floor() as usize + 1).min(m / 2);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let mut data = Vec::with_capacity(echoes.n_receivers * echoes.n_pulses() * n_lags);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for r in 0..echoes.n_receivers {
        for s in 0..echoes.n_pulses() {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (b, chunk) in buf.iter_mut().zip(echoes.row(r, s).chunks_exact(k)) {
                b.re = chunk.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            fft.process(&mut buf);
            data.extend(buf[..n_lags].iter().map(|z| z.norm() * df));
        }
    }
    Ok(AutoCorrelations {
        slow_times: echoes.slow_times.clone(),
        n_receivers: echoes.n_receivers,
        dlag,
        n_lags,
        data,
    })
}

/// Factored cross-correlation data with its Doppler reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub echoes: SpectralEchoes,
    /// Reference point `x₀` used for rescaling and alignment.
    pub x0: Vec3,
    /// Reference velocity `v₀`.
    pub v0: Vec3,
}

const MAGIC: &[u8; 8] = b"CRSRCS01";

impl CorrelationSet {
    pub fn new(echoes: SpectralEchoes, x0: Vec3, v0: Vec3) -> Self {
        Self { echoes, x0, v0 }
    }

    pub fn n_receivers(&self) -> usize {
        self.echoes.n_receivers
    }

    pub fn cross(&self, r: usize, r2: usize, s: usize) -> Result<Vec<Complex64>, CorrelationError> {
        cross_correlate_freq(&self.echoes, r, r2, s)
    }

    /// Binary layout, little endian: magic `CRSRCS01`, u64 receivers,
    /// pulses, frequencies, f64 `x₀[3]`, `v₀[3]`, slow times, frequencies
    /// (Hz), then `(re, im)` f64 pairs ordered `[receiver][pulse][freq]`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let e = &self.echoes;
        w.write_all(MAGIC)?;
        for n in [e.n_receivers, e.n_pulses(), e.n_freqs()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        let put = |w: &mut W, x: f64| w.write_all(&x.to_le_bytes());
        for x in self.x0.iter().chain(self.v0.iter()) {
            put(&mut w, *x)?;
        }
        for &x in e.slow_times.iter().chain(&e.freqs.hz) {
            put(&mut w, x)?;
        }
        for z in &e.data {
            put(&mut w, z.re)?;
            put(&mut w, z.im)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, CorrelationError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CorrelationError::Format("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut u64s = [0usize; 3];
        for n in &mut u64s {
            r.read_exact(&mut word)?;
            *n = u64::from_le_bytes(word) as usize;
        }
        let [nr, ns, nf] = u64s;
        let total = nr
            .checked_mul(ns)
            .and_then(|x| x.checked_mul(nf))
            .ok_or_else(|| CorrelationError::Format("dimensions overflow".into()))?;
        let mut get = |r: &mut R| -> io::Result<f64> {
            r.read_exact(&mut word)?;
            Ok(f64::from_le_bytes(word))
        };
        let mut v = [0.0; 6];
        for x in &mut v {
            *x = get(&mut r)?;
        }
        let slow = (0..ns).map(|_| get(&mut r)).collect::<io::Result<Vec<_>>>()?;
        let hz = (0..nf).map(|_| get(&mut r)).collect::<io::Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            let re = get(&mut r)?;
            let im = get(&mut r)?;
            data.push(Complex64::new(re, im));
        }
        Ok(Self {
            echoes: SpectralEchoes {
                slow_times: slow,
                freqs: FrequencyGrid { hz },
                n_receivers: nr,
                data,
            },
            x0: Vec3::new(v[0], v[1], v[2]),
            v0: Vec3::new(v[3], v[4], v[5]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ArrayLayout, RotationParams, Scene, Trajectory};
    use crate::waveform::{synthesize_spectral, synthesize_time, DopplerModel};
    use proptest::prelude::*;

    fn scenario(carrier: f64, bandwidth: f64, pulses: usize) -> Scenario {
        let layout = ArrayLayout::random_square(Vec3::zeros(), 4, 200e3, 15e3, 11).unwrap();
        let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
        let rot = RotationParams::new(3.0 * PI / 4.0, PI / 3.0, 2.0 * PI / 5.0).unwrap();
        let pulse = Pulse::new(carrier, bandwidth, 0.015, pulses).unwrap();
        Scenario::new(layout, traj, rot, pulse)
    }

    #[test]
    fn kernel_matches_quadrature_and_fft() {
        let p = Pulse::new(1.0e9, 250e6, 0.015, 1).unwrap();
        let g = pulse_autocorrelation(&p);
        let sig = p.sigma_t();
        let dt = sig / 400.0;
        let n = (16.0 * sig / dt) as usize;
        let t: Vec<f64> = (0..n).map(|j| (j as f64 - n as f64 / 2.0) * dt).collect();
        let f2: Vec<f64> = t.iter().map(|&x| p.second_derivative(x)).collect();
        let fft = correlate_real(&f2, &f2, dt);
        let g0 = g.eval(0.0);
        assert!(g0 > 0.0);
        for i in (0..fft.values.len()).step_by(97) {
            let tau = fft.lag(i);
            if tau.abs() > 6.0 * sig {
                continue;
            }
            let quad: f64 = t.iter().map(|&x| p.second_derivative(x) * p.second_derivative(x + tau)).sum::<f64>() * dt;
            assert!((quad - g.eval(tau)).abs() <= 1e-8 * g0, "quad at {tau}");
            assert!((fft.values[i] - g.eval(tau)).abs() <= 1e-8 * g0, "fft at {tau}");
        }
        for tau in [0.1e-9, 0.37e-9, 1.3e-9] {
            assert!((g.eval(tau) - g.eval(-tau)).abs() <= 1e-12 * g0);
            assert!(g.eval(tau) < g0);
        }
    }

    #[test]
    fn autospectrum_and_centered_scatterer() {
        let sc = scenario(9.6e9, 311e6, 3);
        let f = FrequencyGrid::band(&sc.pulse, 32, 3.0);
        let e = synthesize_spectral(&sc, &Scene::satellite(), &f).unwrap();
        for z in cross_correlate_freq(&e, 2, 2, 1).unwrap() {
            assert_eq!(z.im, 0.0);
            assert!(z.re >= 0.0);
        }
        let e = synthesize_spectral(&sc, &Scene::planar(&[(0.0, 0.0)]), &f).unwrap();
        let c = cross_correlate_freq(&e, 0, 3, 2).unwrap();
        let s = e.slow_times[2];
        for (m, z) in c.iter().enumerate() {
            let xi = sc.xi(s, f.omega(m), 0);
            assert_eq!(*z, Complex64::new(xi * xi, 0.0));
        }
    }

    #[test]
    fn grid_mismatch_and_receiver_range() {
        let a = FrequencyGrid::uniform(1.0, 2.0, 4);
        let b = FrequencyGrid::uniform(1.0, 2.5, 4);
        let z = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(correlate_spectra(&a, &z, &b, &z), Err(CorrelationError::GridMismatch)));
        let e = SpectralEchoes::zeros(2, vec![0.0], a);
        assert!(matches!(cross_correlate_freq(&e, 0, 2, 0), Err(CorrelationError::Receiver { .. })));
    }

    #[test]
    fn rescaling_identity_and_inverse() {
        let sc = scenario(9.6e9, 311e6, 1);
        let t = vec![1e-9, 2e-9, -4e-9];
        let x0 = sc.center(0.0);
        assert_eq!(rescale_echo_time(&t, &sc, 1, &x0, &Vec3::zeros()).unwrap(), t);
        let v0 = sc.trajectory.v_t;
        let g = reference_doppler(&sc, 1, &x0, &v0).unwrap();
        let fwd = rescale_echo_time(&t, &sc, 1, &x0, &v0).unwrap();
        let back = rescale_time(&fwd, 1.0 / g);
        for (a, b) in back.iter().zip(&t) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn doppler_ratio_within_window_is_flat() {
        let sc = scenario(9.6e9, 311e6, 1);
        let x0 = sc.center(0.0);
        let v0 = sc.trajectory.v_t;
        for r in 0..sc.layout.len() {
            let g0 = reference_doppler(&sc, r, &x0, &v0).unwrap();
            for d in [Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.0, -0.5, 0.0), Vec3::new(0.3, 0.3, 0.2)] {
                let g = doppler_factor(&(x0 + d), &sc.layout, r, &v0).unwrap();
                assert!((g / g0 - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn time_and_frequency_cross_correlations_agree() {
        let mut sc = scenario(1.2e9, 311e6, 2);
        sc.pulse = sc.pulse.with_sampling(16e9, 30e-9);
        let scene = Scene::planar(&[(0.1, 0.04), (-0.08, -0.12)]);
        let te = synthesize_time(&sc, &scene, DopplerModel::Effective).unwrap();
        let f = FrequencyGrid::band(&sc.pulse, 40, 2.0);
        let fe = synthesize_spectral(&sc, &scene, &f).unwrap();
        for (r, r2) in [(0, 1), (2, 2), (3, 0)] {
            let c = cross_correlate_time(&te, r, r2, 1);
            let spec = cross_correlate_freq(&fe, r, r2, 1).unwrap();
            let peak = spec.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            for (m, want) in spec.iter().enumerate() {
                let w = f.omega(m);
                let got: Complex64 = c
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| Complex64::from_polar(v * c.dt, -w * c.lag(i)))
                    .sum();
                assert!((got - want).norm() <= 1e-6 * peak, "{r}{r2} m={m}");
            }
        }
    }

    #[test]
    fn autocorrelation_is_even_and_peaks_at_zero() {
        let mut sc = scenario(1.2e9, 311e6, 1);
        sc.pulse = sc.pulse.with_sampling(12e9, 30e-9);
        let te = synthesize_time(&sc, &Scene::satellite(), DopplerModel::Effective).unwrap();
        let c = autocorrelate_time(&te, 1, 0);
        let peak = c.at_zero();
        let mid = c.max_lag_index();
        for k in 1..mid {
            assert!((c.values[mid + k] - c.values[mid - k]).abs() <= 1e-9 * peak);
            assert!(c.values[mid + k] <= peak);
        }
    }

    #[test]
    fn single_scatterer_autocorrelation_is_scaled_kernel() {
        let mut sc = scenario(1.2e9, 311e6, 1);
        sc.pulse = sc.pulse.with_sampling(16e9, 30e-9);
        let te = synthesize_time(&sc, &Scene::planar(&[(0.07, -0.02)]), DopplerModel::Effective).unwrap();
        let c = autocorrelate_time(&te, 0, 0);
        let g = pulse_autocorrelation(&sc.pulse);
        let d = 4.0 * PI * sc.amplitude_range(0.0, 0);
        let a = 1.0 / (d * d);
        let peak = c.at_zero();
        for i in (0..c.values.len()).step_by(13) {
            assert!((c.values[i] - a * a * g.eval(c.lag(i))).abs() <= 1e-6 * peak);
        }
    }

    #[test]
    fn multi_scatterer_autocorrelation_matches_pair_model() {
        let mut sc = scenario(1.2e9, 311e6, 1);
        sc.pulse = sc.pulse.with_sampling(16e9, 30e-9);
        let scene = Scene::satellite();
        let te = synthesize_time(&sc, &scene, DopplerModel::Effective).unwrap();
        let c = autocorrelate_time(&te, 2, 0);
        let delays = crate::waveform::scene_delays(&sc, &sc.rotation, &scene, 0.0, 2).unwrap();
        let g = pulse_autocorrelation(&sc.pulse);
        let d = 4.0 * PI * sc.amplitude_range(0.0, 2);
        let a2 = (1.0 / (d * d)).powi(2);
        let peak = c.at_zero();
        for i in (0..c.values.len()).step_by(7) {
            let tau = c.lag(i);
            let mut model = 0.0;
            for (i1, r1) in scene.reflectivities.iter().enumerate() {
                for (i2, r2) in scene.reflectivities.iter().enumerate() {
                    model += r1 * r2 * g.eval(tau - (delays[i2] - delays[i1]));
                }
            }
            assert!((c.values[i] - a2 * model).abs() <= 1e-6 * peak);
        }
    }

    #[test]
    fn parseval_between_lag_and_frequency() {
        let mut sc = scenario(1.2e9, 311e6, 1);
        sc.pulse = sc.pulse.with_sampling(16e9, 30e-9);
        let te = synthesize_time(&sc, &Scene::planar(&[(0.1, 0.0), (0.0, -0.1)]), DopplerModel::Effective).unwrap();
        let c = cross_correlate_time(&te, 0, 1, 0);
        let lhs: f64 = c.values.iter().map(|v| v * v).sum::<f64>() * c.dt;
        // ∫C² dτ = (1/2π)∫|Ĉ|² dω = ∫|Ĉ|² df over the full line
        let nf = 6000;
        let fmax = 4.0e9;
        let df = 2.0 * fmax / nf as f64;
        let mut rhs = 0.0;
        for k in 0..nf {
            let w = 2.0 * PI * (-fmax + (k as f64 + 0.5) * df);
            let z: Complex64 = c
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| Complex64::from_polar(v * c.dt, -w * c.lag(i)))
                .sum();
            rhs += z.norm_sqr() * df;
        }
        assert!((lhs - rhs).abs() <= 1e-6 * lhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn envelope_support_tracks_delays() {
        let sc = scenario(9.6e9, 1.0e9, 1);
        let scene = Scene::planar(&[(0.0, 0.15), (0.0, -0.15)]);
        // slow time where the pair is most extended along the line of sight
        let (s, sep) = (0..100)
            .map(|i| {
                let s = i as f64 * 0.025;
                let d = crate::waveform::scene_delays(&sc, &sc.rotation, &scene, s, 0).unwrap();
                (s, (d[0] - d[1]).abs())
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(sep > 6.0 * sc.pulse.sigma_t());
        let f = FrequencyGrid::band(&sc.pulse, 256, 3.5);
        let mut e = synthesize_spectral(&sc, &scene, &f).unwrap();
        let rows: Vec<Complex64> = crate::waveform::synthesize_echo_freq(&sc, &scene, s, 0, &f).unwrap();
        e.row_mut(0, 0).copy_from_slice(&rows);
        let env = autocorrelation_envelopes(&e, EnvelopeOptions { lag_step: 5e-12, max_lag: 10e-9 }).unwrap();
        let tr = env.trace(0, 0);
        let lo = ((sep * 0.6) / env.dlag) as usize;
        let j = (lo..env.n_lags).max_by(|&a, &b| tr[a].total_cmp(&tr[b])).unwrap();
        assert!((j as f64 * env.dlag - sep).abs() <= 2.0 * env.dlag, "{} vs {sep}", j as f64 * env.dlag);
        // main lobe is twice the side lobe for equal reflectivities
        assert!((tr[0] / tr[j] - 2.0).abs() < 0.02, "{}", tr[0] / tr[j]);
    }

    #[test]
    fn envelope_matches_time_domain_correlation() {
        let mut sc = scenario(1.2e9, 311e6, 1);
        sc.pulse = sc.pulse.with_sampling(16e9, 40e-9);
        let scene = Scene::planar(&[(0.1, 0.04), (-0.08, -0.12)]);
        let te = synthesize_time(&sc, &scene, DopplerModel::Effective).unwrap();
        let c = autocorrelate_time(&te, 1, 0);
        // df·m·dt = 1 makes the envelope lags land on time lags
        let df = 16e9 / 4096.0;
        let f = FrequencyGrid::uniform(df, 800.0 * df, 800);
        let fe = synthesize_spectral(&sc, &scene, &f).unwrap();
        // a lag range this long keeps the bins undecimated
        let env = autocorrelation_envelopes(&fe, EnvelopeOptions { lag_step: c.dt, max_lag: 35e-9 }).unwrap();
        let ratio = (c.dt / env.dlag).round() as usize;
        assert!((ratio as f64 * env.dlag - c.dt).abs() < 1e-6 * c.dt);
        let tr = env.trace(1, 0);
        let peak = c.at_zero();
        let mid = c.max_lag_index();
        let mut touched = 0;
        for j in (0..env.n_lags).step_by(ratio) {
            let cv = c.values[mid + j / ratio];
            assert!(cv.abs() <= 2.0 * tr[j] + 1e-6 * peak, "lag {j}");
            if (cv.abs() - 2.0 * tr[j]).abs() <= 0.05 * peak {
                touched += 1;
            }
        }
        assert!((2.0 * tr[0] - peak).abs() <= 1e-6 * peak);
        assert!(touched > 10);
    }

    #[test]
    fn binary_round_trip() {
        let sc = scenario(9.6e9, 311e6, 3);
        let f = FrequencyGrid::band(&sc.pulse, 8, 1.0);
        let e = synthesize_spectral(&sc, &Scene::satellite(), &f).unwrap();
        let cs = CorrelationSet::new(e, sc.center(0.0), sc.trajectory.v_t);
        let mut buf = Vec::new();
        cs.write_binary(&mut buf).unwrap();
        let back = CorrelationSet::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, cs);
        buf[0] = b'X';
        assert!(CorrelationSet::read_binary(buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn pair_swap_is_conjugate(
            vals in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2 * 3 * 5),
            r in 0usize..2, r2 in 0usize..2, s in 0usize..3,
        ) {
            let f = FrequencyGrid::uniform(1.0, 5.0, 5);
            let mut e = SpectralEchoes::zeros(2, vec![0.0, 1.0, 2.0], f);
            for (d, v) in e.data.iter_mut().zip(&vals) {
                *d = Complex64::new(v.0, v.1);
            }
            let a = cross_correlate_freq(&e, r, r2, s).unwrap();
            let b = cross_correlate_freq(&e, r2, r, s).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(*x, y.conj());
            }
        }

        #[test]
        fn common_shift_leaves_cross_correlation_unchanged(
            a in prop::collection::vec(-1.0f64..1.0, 40),
            b in prop::collection::vec(-1.0f64..1.0, 40),
            shift in 0usize..=10,
        ) {
            let pad = |x: &Vec<f64>, k: usize| {
                let mut v = vec![0.0; 60];
                v[k..k + 40].copy_from_slice(x);
                v
            };
            let c0 = correlate_real(&pad(&a, 0), &pad(&b, 0), 1.0);
            let c1 = correlate_real(&pad(&a, shift), &pad(&b, shift), 1.0);
            let scale = c0.values.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for (x, y) in c0.values.iter().zip(&c1.values) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }
}
