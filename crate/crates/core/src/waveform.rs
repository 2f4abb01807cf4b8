//! Probing pulse, echo synthesis in both domains, and additive noise.
//!
//! The pulse is the Gaussian-modulated carrier `f(t) = cos(ω_o t)·g(t)` with
//! `g(t) = exp(−t²/(2σ²))` and `σ = 1/(2π B)`, so `B` (Hz) is the standard
//! deviation of the amplitude spectrum around the carrier. Fourier transforms
//! use `û(ω) = ∫ u(t) e^{iωt} dt`.
//!
//! Echoes are stored relative to the travel time of the rotation center, i.e.
//! fast time `τ = 0` is the arrival of a scatterer sitting on the axis. In
//! that frame the Doppler-rescaled echo of scatterer `k` is
//! `−ρ_k f''(τ − Δt_k) / (4π r)²` with `Δt_k = t_R^k − t_R`, and its spectrum
//! is `ξ(s, ω)·ρ_k·e^{iωΔt_k}`.

use crate::geometry::{travel_time, GeometryError, RotationParams, Scene, Vec3};
use crate::scenario::Scenario;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid pulse parameter {field}: {reason}")]
    InvalidPulse { field: &'static str, reason: String },
    #[error(
        "fast-time window of {window:.3e} s cannot hold a delay of {delay:.3e} s plus the pulse tail"
    )]
    WindowTooSmall { window: f64, delay: f64 },
    #[error("cannot set an SNR on an all-zero signal")]
    ZeroSignal,
    #[error("sampling rate {rate:.3e} Hz is below the required {required:.3e} Hz")]
    Undersampled { rate: f64, required: f64 },
}

/// Emitted pulse train and fast-time sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    /// Carrier `f_o`, Hz.
    pub carrier_hz: f64,
    /// Spectral width `B`, Hz.
    pub bandwidth_hz: f64,
    /// Slow-time spacing `Δs`, s.
    pub pulse_spacing: f64,
    pub num_pulses: usize,
    /// Fast-time sampling rate, Hz.
    pub sample_rate: f64,
    /// Fast-time window length, s.
    pub window: f64,
}

impl Pulse {
    pub fn new(
        carrier_hz: f64,
        bandwidth_hz: f64,
        pulse_spacing: f64,
        num_pulses: usize,
    ) -> Result<Self, WaveformError> {
        let bad = |field, reason: &str| WaveformError::InvalidPulse {
            field,
            reason: reason.to_string(),
        };
        if !(carrier_hz > 0.0) {
            return Err(bad("carrier_hz", "must be positive"));
        }
        if !(bandwidth_hz > 0.0) {
            return Err(bad("bandwidth_hz", "must be positive"));
        }
        if !(pulse_spacing > 0.0) {
            return Err(bad("pulse_spacing", "must be positive"));
        }
        if num_pulses == 0 {
            return Err(bad("num_pulses", "must be at least 1"));
        }
        let sigma = 1.0 / (2.0 * PI * bandwidth_hz);
        Ok(Self {
            carrier_hz,
            bandwidth_hz,
            pulse_spacing,
            num_pulses,
            sample_rate: 4.0 * (carrier_hz + 4.0 * bandwidth_hz),
            window: 40.0 * sigma,
        })
    }

    pub fn with_sampling(mut self, sample_rate: f64, window: f64) -> Self {
        self.sample_rate = sample_rate;
        self.window = window;
        self
    }

    pub fn with_pulses(mut self, num_pulses: usize) -> Self {
        self.num_pulses = num_pulses.max(1);
        self
    }

    pub fn omega_o(&self) -> f64 {
        2.0 * PI * self.carrier_hz
    }

    /// Envelope standard deviation in time, `1/(2πB)`.
    pub fn sigma_t(&self) -> f64 {
        1.0 / (2.0 * PI * self.bandwidth_hz)
    }

    /// Carrier wavelength.
    pub fn wavelength(&self) -> f64 {
        crate::geometry::C0 / self.carrier_hz
    }

    /// Synthetic aperture `S = num_pulses·Δs`.
    pub fn aperture(&self) -> f64 {
        self.num_pulses as f64 * self.pulse_spacing
    }

    /// Slow times centered on zero: `s_i = (i − (n−1)/2)·Δs`.
    pub fn slow_times(&self) -> Vec<f64> {
        let c = (self.num_pulses as f64 - 1.0) / 2.0;
        (0..self.num_pulses)
            .map(|i| (i as f64 - c) * self.pulse_spacing)
            .collect()
    }

    /// Fails when the fast-time rate does not cover the band to `f_o + 3B`.
    pub fn check_time_sampling(&self) -> Result<(), WaveformError> {
        let required = 2.0 * (self.carrier_hz + 3.0 * self.bandwidth_hz);
        if self.sample_rate < required {
            return Err(WaveformError::Undersampled {
                rate: self.sample_rate,
                required,
            });
        }
        Ok(())
    }

    /// Fast-time grid for this pulse: `n = round(window·rate)` samples
    /// centered on zero.
    pub fn fast_grid(&self) -> FastGrid {
        let n = (self.window * self.sample_rate).round().max(2.0) as usize;
        FastGrid::centered(n, 1.0 / self.sample_rate)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.sigma_t();
        (self.omega_o() * t).cos() * (-t * t / (2.0 * s * s)).exp()
    }

    /// Closed-form `f''(t)`.
    pub fn second_derivative(&self, t: f64) -> f64 {
        let s2 = self.sigma_t().powi(2);
        let w = self.omega_o();
        let g = (-t * t / (2.0 * s2)).exp();
        let g1 = -t / s2 * g;
        let g2 = (t * t / (s2 * s2) - 1.0 / s2) * g;
        let (sn, cs) = (w * t).sin_cos();
        -w * w * cs * g - 2.0 * w * sn * g1 + cs * g2
    }

    /// `f̂(ω)`, real and even in `ω`.
    pub fn spectrum(&self, omega: f64) -> f64 {
        let s = self.sigma_t();
        let w0 = self.omega_o();
        let a = s * (2.0 * PI).sqrt() / 2.0;
        a * ((-s * s * (omega - w0).powi(2) / 2.0).exp()
            + (-s * s * (omega + w0).powi(2) / 2.0).exp())
    }
}

/// Uniform fast-time sampling `t_j = t0 + j·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl FastGrid {
    pub fn centered(len: usize, dt: f64) -> Self {
        Self {
            t0: -((len / 2) as f64) * dt,
            dt,
            len,
        }
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.time(j)).collect()
    }

    /// Half-length of the covered interval.
    pub fn half_span(&self) -> f64 {
        (-self.t0).min(self.time(self.len - 1))
    }
}

/// Uniform frequency samples, Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub hz: Vec<f64>,
}

impl FrequencyGrid {
    /// `n` samples from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        let hz = if n == 1 {
            vec![(lo + hi) / 2.0]
        } else {
            let d = (hi - lo) / (n - 1) as f64;
            (0..n).map(|m| lo + m as f64 * d).collect()
        };
        Self { hz }
    }

    /// `n` samples over `[f_o − c·B, f_o + c·B]`.
    pub fn band(pulse: &Pulse, n: usize, half_width: f64) -> Self {
        let h = half_width * pulse.bandwidth_hz;
        Self::uniform(pulse.carrier_hz - h, pulse.carrier_hz + h, n)
    }

    pub fn len(&self) -> usize {
        self.hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hz.is_empty()
    }

    pub fn omega(&self, m: usize) -> f64 {
        2.0 * PI * self.hz[m]
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.hz.iter().map(|f| 2.0 * PI * f).collect()
    }

    /// Spacing in Hz; zero for a single sample.
    pub fn spacing(&self) -> f64 {
        if self.hz.len() < 2 {
            0.0
        } else {
            self.hz[1] - self.hz[0]
        }
    }

    /// Picks `n` roughly evenly spaced entries.
    pub fn subsample(&self, n: usize) -> (Self, Vec<usize>) {
        let n = n.clamp(1, self.len());
        let idx: Vec<usize> = if n == 1 {
            vec![self.len() / 2]
        } else {
            (0..n)
                .map(|i| (i as f64 * (self.len() - 1) as f64 / (n - 1) as f64).round() as usize)
                .collect()
        };
        (
            Self {
                hz: idx.iter().map(|&i| self.hz[i]).collect(),
            },
            idx,
        )
    }
}

/// Frequency-domain echoes `û_R(s_i, ω_m)`, laid out `[receiver][pulse][freq]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEchoes {
    pub slow_times: Vec<f64>,
    pub freqs: FrequencyGrid,
    pub n_receivers: usize,
    pub data: Vec<Complex64>,
}

impl SpectralEchoes {
    pub fn zeros(n_receivers: usize, slow_times: Vec<f64>, freqs: FrequencyGrid) -> Self {
        let len = n_receivers * slow_times.len() * freqs.len();
        Self {
            slow_times,
            freqs,
            n_receivers,
            data: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn n_pulses(&self) -> usize {
        self.slow_times.len()
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn index(&self, r: usize, s: usize, m: usize) -> usize {
        (r * self.n_pulses() + s) * self.n_freqs() + m
    }

    pub fn get(&self, r: usize, s: usize, m: usize) -> Complex64 {
        self.data[self.index(r, s, m)]
    }

    /// Spectrum of one receiver and pulse.
    pub fn row(&self, r: usize, s: usize) -> &[Complex64] {
        let i = self.index(r, s, 0);
        &self.data[i..i + self.n_freqs()]
    }

    pub fn row_mut(&mut self, r: usize, s: usize) -> &mut [Complex64] {
        let i = self.index(r, s, 0);
        let n = self.n_freqs();
        &mut self.data[i..i + n]
    }

    /// Restricts to the given frequency indices.
    pub fn select_freqs(&self, idx: &[usize]) -> Self {
        let freqs = FrequencyGrid {
            hz: idx.iter().map(|&i| self.freqs.hz[i]).collect(),
        };
        let mut out = Self::zeros(self.n_receivers, self.slow_times.clone(), freqs);
        for r in 0..self.n_receivers {
            for s in 0..self.n_pulses() {
                let src = self.row(r, s);
                let dst = out.row_mut(r, s);
                for (d, &i) in dst.iter_mut().zip(idx) {
                    *d = src[i];
                }
            }
        }
        out
    }

    /// Restricts to a contiguous block of pulses.
    pub fn select_pulses(&self, range: std::ops::Range<usize>) -> Self {
        let st = self.slow_times[range.clone()].to_vec();
        let mut out = Self::zeros(self.n_receivers, st, self.freqs.clone());
        for r in 0..self.n_receivers {
            for (o, s) in range.clone().enumerate() {
                out.row_mut(r, o).copy_from_slice(self.row(r, s));
            }
        }
        out
    }

    pub fn power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len().max(1) as f64
    }
}

/// Fast-time echoes `ũ_R(s_i, τ_j)`, laid out `[receiver][pulse][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEchoes {
    pub slow_times: Vec<f64>,
    pub grid: FastGrid,
    pub n_receivers: usize,
    pub data: Vec<f64>,
}

impl TimeEchoes {
    pub fn n_pulses(&self) -> usize {
        self.slow_times.len()
    }

    pub fn trace(&self, r: usize, s: usize) -> &[f64] {
        let i = (r * self.n_pulses() + s) * self.grid.len;
        &self.data[i..i + self.grid.len]
    }

    pub fn power(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>() / self.data.len().max(1) as f64
    }
}

/// Exact reduced delays `Δt_k` of every scatterer for one pulse and receiver.
pub fn scene_delays(
    scenario: &Scenario,
    rotation: &RotationParams,
    scene: &Scene,
    s: f64,
    r: usize,
) -> Result<Vec<f64>, WaveformError> {
    let pg = scenario.pulse_geometry(s, rotation)?;
    let v = scenario.trajectory.v_t;
    scene
        .offsets
        .iter()
        .map(|y| Ok(pg.reduced_time(y, &scenario.layout, r, &v)?))
        .collect()
}

/// Options for time-domain synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DopplerModel {
    /// Rescaled echo with the per-scatterer Doppler ratio set to one.
    #[default]
    Effective,
    /// Keeps the residual `γ_k/γ₀ − 1` stretch of each scatterer.
    Exact,
}

/// Doppler-rescaled echo of one pulse on the fast-time grid, relative to the
/// center arrival time.
pub fn synthesize_echo_time(
    scenario: &Scenario,
    scene: &Scene,
    s: f64,
    r: usize,
    grid: &FastGrid,
    model: DopplerModel,
) -> Result<Vec<f64>, WaveformError> {
    let pulse = &scenario.pulse;
    let rot = scenario.rotation;
    let pg = scenario.pulse_geometry(s, &rot)?;
    let v = scenario.trajectory.v_t;
    let center = pg.center;
    let t_c = pg.center_time(r);
    let gamma0 = crate::geometry::doppler_factor(&center, &scenario.layout, r, &v)?;
    let tail = 6.0 * pulse.sigma_t();
    let half = grid.half_span();
    let d = 4.0 * PI * scenario.amplitude_range(s, r);
    let amp = 1.0 / (d * d);
    let mut out = vec![0.0; grid.len];
    for (y, &rho) in scene.offsets.iter().zip(&scene.reflectivities) {
        let x = center + pg.rotation * y;
        let dt = travel_time(&x, &scenario.layout, r, &v)? - t_c;
        if dt.abs() + tail > half {
            return Err(WaveformError::WindowTooSmall {
                window: 2.0 * half,
                delay: dt,
            });
        }
        let stretch = match model {
            DopplerModel::Effective => 0.0,
            DopplerModel::Exact => {
                crate::geometry::doppler_factor(&x, &scenario.layout, r, &v)? / gamma0 - 1.0
            }
        };
        for (j, o) in out.iter_mut().enumerate() {
            let tau = grid.time(j);
            let arg = (tau - dt) + stretch * (t_c + tau);
            *o -= rho * amp * pulse.second_derivative(arg);
        }
    }
    Ok(out)
}

/// Echo as recorded, before Doppler rescaling: `−Σ ρ f''(γ_k t − t_R^k)/(4π r)²`
/// at absolute fast times `t`.
pub fn physical_echo(
    scenario: &Scenario,
    scene: &Scene,
    s: f64,
    r: usize,
    t: &[f64],
) -> Result<Vec<f64>, WaveformError> {
    let rot = scenario.rotation;
    let pg = scenario.pulse_geometry(s, &rot)?;
    let v = scenario.trajectory.v_t;
    let d = 4.0 * PI * scenario.amplitude_range(s, r);
    let amp = 1.0 / (d * d);
    let mut out = vec![0.0; t.len()];
    for (y, &rho) in scene.offsets.iter().zip(&scene.reflectivities) {
        let x = pg.center + pg.rotation * y;
        let gamma = crate::geometry::doppler_factor(&x, &scenario.layout, r, &v)?;
        let tr = travel_time(&x, &scenario.layout, r, &v)?;
        for (o, &ti) in out.iter_mut().zip(t) {
            *o -= rho * amp * scenario.pulse.second_derivative(gamma * ti - tr);
        }
    }
    Ok(out)
}

/// Time-domain Doppler rescaling `ũ(t) = u(t/γ)`: the samples are kept and
/// the grid is stretched by `γ`.
pub fn rescale_time(t: &[f64], gamma: f64) -> Vec<f64> {
    t.iter().map(|x| x * gamma).collect()
}

/// Frequency-domain counterpart: `ũ̂(ω) = γ·û(γω)`, i.e. the sample taken at
/// `ω` moves to `ω/γ` and is scaled by `γ`.
pub fn rescale_spectrum(omega: &[f64], values: &[Complex64], gamma: f64) -> (Vec<f64>, Vec<Complex64>) {
    (
        omega.iter().map(|w| w / gamma).collect(),
        values.iter().map(|v| v * gamma).collect(),
    )
}

/// `A_{R,k}(s, ω) = e^{iω(t_R^k − t_R)}` for a single grid offset.
pub fn sensing_entry(
    scenario: &Scenario,
    rotation: &RotationParams,
    s: f64,
    omega: f64,
    r: usize,
    offset: &Vec3,
) -> Result<Complex64, WaveformError> {
    let pg = scenario.pulse_geometry(s, rotation)?;
    let dt = pg.reduced_time(offset, &scenario.layout, r, &scenario.trajectory.v_t)?;
    Ok(Complex64::from_polar(1.0, omega * dt))
}

/// Writes `Σ_k ρ_k e^{iω_m Δt_k}` for every `m` of a uniform grid into `out`,
/// accumulating (`out` is not cleared). Uses a phase recurrence resynced every
/// 64 steps.
pub(crate) fn accumulate_phasors(omegas: &[f64], delays: &[f64], weights: &[f64], out: &mut [Complex64]) {
    let n = omegas.len();
    if n == 0 {
        return;
    }
    let uniform = n > 2 && {
        let d = omegas[1] - omegas[0];
        omegas
            .windows(2)
            .all(|w| ((w[1] - w[0]) - d).abs() <= 1e-9 * d.abs().max(1.0))
    };
    for (&dt, &rho) in delays.iter().zip(weights) {
        if rho == 0.0 {
            continue;
        }
        if uniform {
            let step = Complex64::from_polar(1.0, (omegas[1] - omegas[0]) * dt);
            let mut z = Complex64::new(0.0, 0.0);
            for m in 0..n {
                if m % 64 == 0 {
                    z = Complex64::from_polar(1.0, omegas[m] * dt);
                } else {
                    z *= step;
                }
                out[m] += z * rho;
            }
        } else {
            for m in 0..n {
                out[m] += Complex64::from_polar(rho, omegas[m] * dt);
            }
        }
    }
}

/// `û_R(s, ω) = ξ(s, ω)·Σ_k ρ_k A_{R,k}(s, ω)` for one receiver and pulse.
pub fn synthesize_echo_freq(
    scenario: &Scenario,
    scene: &Scene,
    s: f64,
    r: usize,
    freqs: &FrequencyGrid,
) -> Result<Vec<Complex64>, WaveformError> {
    let delays = scene_delays(scenario, &scenario.rotation, scene, s, r)?;
    let omegas = freqs.omegas();
    let mut out = vec![Complex64::new(0.0, 0.0); omegas.len()];
    accumulate_phasors(&omegas, &delays, &scene.reflectivities, &mut out);
    for (o, &w) in out.iter_mut().zip(&omegas) {
        *o *= scenario.xi(s, w, r);
    }
    Ok(out)
}

/// Spectral echoes for every receiver and pulse of the scenario.
pub fn synthesize_spectral(
    scenario: &Scenario,
    scene: &Scene,
    freqs: &FrequencyGrid,
) -> Result<SpectralEchoes, WaveformError> {
    let slow = scenario.slow_times();
    let mut out = SpectralEchoes::zeros(scenario.layout.len(), slow.clone(), freqs.clone());
    let omegas = freqs.omegas();
    for (si, &s) in slow.iter().enumerate() {
        let pg = scenario.pulse_geometry(s, &scenario.rotation)?;
        for r in 0..scenario.layout.len() {
            let delays = scene
                .offsets
                .iter()
                .map(|y| pg.reduced_time(y, &scenario.layout, r, &scenario.trajectory.v_t))
                .collect::<Result<Vec<_>, _>>()?;
            let row = out.row_mut(r, si);
            accumulate_phasors(&omegas, &delays, &scene.reflectivities, row);
            for (o, &w) in row.iter_mut().zip(&omegas) {
                *o *= scenario.xi(s, w, r);
            }
        }
    }
    Ok(out)
}

/// Time-domain echoes for every receiver and pulse on the pulse's fast grid.
pub fn synthesize_time(
    scenario: &Scenario,
    scene: &Scene,
    model: DopplerModel,
) -> Result<TimeEchoes, WaveformError> {
    scenario.pulse.check_time_sampling()?;
    let grid = scenario.pulse.fast_grid();
    let slow = scenario.slow_times();
    let mut data = Vec::with_capacity(scenario.layout.len() * slow.len() * grid.len);
    for r in 0..scenario.layout.len() {
        for &s in &slow {
            data.extend(synthesize_echo_time(scenario, scene, s, r, &grid, model)?);
        }
    }
    Ok(TimeEchoes {
        slow_times: slow,
        grid,
        n_receivers: scenario.layout.len(),
        data,
    })
}

fn noise_sigma(power: f64, snr_db: f64) -> Result<Option<f64>, WaveformError> {
    if snr_db == f64::INFINITY {
        return Ok(None);
    }
    if !(power > 0.0) {
        return Err(WaveformError::ZeroSignal);
    }
    Ok(Some((power / 10f64.powf(snr_db / 10.0)).sqrt()))
}

/// Adds the spectrum of real white Gaussian noise sampled at
/// `pulse.sample_rate` over the fast-time window, at a time-domain SNR of
/// `snr_db` (mean signal power over the window against the noise variance).
/// Only the in-band part is synthesized: a circular complex sequence on the
/// window, transformed onto the frequency samples, so neighbouring bins carry
/// the correlation a window of finite length imposes. Samples spaced wider
/// than `1/window` are taken from a grid refined by an integer factor. The
/// signal energy is the Riemann sum over the samples, so grids that cut the
/// band short understate it. `+∞` leaves the echoes untouched.
pub fn add_noise_spectral(
    echoes: &SpectralEchoes,
    pulse: &Pulse,
    snr_db: f64,
    seed: u64,
) -> Result<SpectralEchoes, WaveformError> {
    let mut out = echoes.clone();
    let nf = echoes.freqs.len();
    let df = echoes.freqs.spacing();
    // energy per trace, both signs of frequency
    let energy = 2.0 * echoes.power() * nf as f64 * df;
    let Some(sigma) = noise_sigma(energy / pulse.window, snr_db)? else {
        return Ok(out);
    };
    // refine until the window fits inside one period of the synthesis grid
    let mut refine = 1;
    let (m, dt, half) = loop {
        let m = (nf * refine).next_power_of_two();
        let dt = refine as f64 / (m as f64 * df);
        let half = (0.5 * pulse.window / dt).floor() as usize;
        if 2 * half < m {
            break (m, dt, half);
        }
        refine += 1;
    };
    let df = df / refine as f64;
    let a = sigma * (m as f64 * df / pulse.sample_rate / 2.0).sqrt();
    let fft = rustfft::FftPlanner::new().plan_fft_inverse(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for row in out.data.chunks_mut(nf) {
        buf.fill(Complex64::new(0.0, 0.0));
        for j in 0..=2 * half {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            buf[(j + m - half) % m] = Complex64::new(re * a, im * a);
        }
        fft.process(&mut buf);
        for (k, z) in row.iter_mut().enumerate() {
            *z += buf[k * refine] * dt;
        }
    }
    Ok(out)
}

/// Real white Gaussian noise on time-domain echoes at the given aggregate SNR.
pub fn add_noise_time(echoes: &TimeEchoes, snr_db: f64, seed: u64) -> Result<TimeEchoes, WaveformError> {
    let mut out = echoes.clone();
    let Some(sigma) = noise_sigma(echoes.power(), snr_db)? else {
        return Ok(out);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in &mut out.data {
        let n: f64 = StandardNormal.sample(&mut rng);
        *x += sigma * n;
    }
    Ok(out)
}
