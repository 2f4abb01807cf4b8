//! Closed-form resolution kernels: the array point spread function, its
//! rotation average, the rotation-phase Bessel factor and the approximate
//! two-point interference pattern built from them.

use crate::geometry::{ArrayLayout, RotationParams, C0};
use crate::scenario::Scenario;
use crate::waveform::FrequencyGrid;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::{self, Write};

/// Array aperture `a` and target distance `H_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub aperture: f64,
    pub height: f64,
}

impl KernelParams {
    /// `a` from the layout and `H_T` as the distance from the receiver
    /// centroid to the rotation center at `s = 0`.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self {
            aperture: scenario.layout.aperture,
            height: (scenario.center(0.0) - scenario.layout.centroid()).norm(),
        }
    }

    /// `λH_T/a`, the first zero of the array kernel along an axis.
    pub fn array_resolution(&self, omega: f64) -> f64 {
        2.0 * PI * C0 / omega * self.height / self.aperture
    }
}

pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// `B_A(x) = a² sinc(k a x₁/(2H_T)) sinc(k a x₂/(2H_T))`, `k = ω/c₀`.
pub fn kernel_array(x: [f64; 2], omega: f64, p: &KernelParams) -> f64 {
    let q = omega / C0 * p.aperture / (2.0 * p.height);
    p.aperture * p.aperture * sinc(q * x[0]) * sinc(q * x[1])
}

/// The receiver sum `(a²/N) Σ_R e^{−ik (x_R − x̄)·x / H_T}` over the horizontal
/// receiver offsets from the array centroid, which `kernel_array` replaces by
/// an integral.
pub fn kernel_array_discrete(x: [f64; 2], omega: f64, layout: &ArrayLayout, height: f64) -> Complex64 {
    let k = omega / C0 / height;
    let c = layout.centroid();
    let sum: Complex64 = layout
        .receivers
        .iter()
        .map(|r| Complex64::from_polar(1.0, -k * ((r.x - c.x) * x[0] + (r.y - c.y) * x[1])))
        .sum();
    sum * (layout.aperture * layout.aperture / layout.len() as f64)
}

/// `B_eff(x) = ∫_{−S/2}^{S/2} B_A(R(s)x) ds` by the trapezoid rule with at
/// least 256 nodes per rotation period.
pub fn kernel_effective(x: [f64; 2], omega: f64, p: &KernelParams, rotation: &RotationParams, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = rotation.period();
    let intervals = if period.is_finite() {
        ((256.0 * span / period).ceil() as usize).max(256)
    } else {
        256
    };
    let h = span / intervals as f64;
    let y = crate::geometry::Vec3::new(x[0], x[1], 0.0);
    let mut sum = 0.0;
    for i in 0..=intervals {
        let s = -span / 2.0 + i as f64 * h;
        let r = rotation.rotation_matrix(s) * y;
        let w = if i == 0 || i == intervals { 0.5 } else { 1.0 };
        sum += w * kernel_array([r.x, r.y], omega, p);
    }
    sum * h
}

/// Bessel function of the first kind, order zero.
///
/// Power series below 8, Miller's backward recurrence normalized by
/// `J₀ + 2ΣJ₂ₖ = 1` up to 25, Hankel's asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 8.0 {
        j0_series(x)
    } else if x < 25.0 {
        j0_miller(x)
    } else {
        j0_hankel(x)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = -x * x / 4.0;
    let (mut sum, mut comp) = (1.0f64, 0.0f64);
    let mut term = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        // Neumaier summation
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) && k > 4 {
            break;
        }
    }
    sum + comp
}

fn j0_miller(x: f64) -> f64 {
    let mut n = (x + 15.0 * x.cbrt() + 30.0) as usize;
    n += n % 2;
    let (mut next, mut cur) = (0.0f64, 1e-30f64);
    let mut norm = 0.0;
    for k in (1..=n).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur is now J_{k−1}
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
        }
    }
    cur / (norm + cur)
}

fn j0_hankel(x: f64) -> f64 {
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0f64;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let m = (2 * k - 1) as f64;
            a *= -m * m / (k as f64 * 8.0 * x);
        }
        if a.abs() > last || a.abs() < 1e-18 {
            break;
        }
        last = a.abs();
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
    }
    let chi = x - PI / 4.0;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J₀((ω/c₀)·2 sin θ_rot·r)`.
pub fn kernel_rotation_bessel(r: f64, omega: f64, theta_rot: f64) -> f64 {
    bessel_j0(omega / C0 * 2.0 * theta_rot.sin() * r)
}

/// First positive zero of `J₀`.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Everything the approximate interference pattern needs: quadrature
/// weights `|ξ(ω)|² Δω` over the frequency grid, array parameters, rotation
/// and synthetic aperture span.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternModel {
    pub omegas: Vec<f64>,
    pub weights: Vec<f64>,
    pub params: KernelParams,
    pub rotation: RotationParams,
    pub span: f64,
}

impl PatternModel {
    pub fn from_scenario(scenario: &Scenario, freqs: &FrequencyGrid) -> Self {
        let omegas = freqs.omegas();
        let dw = if omegas.len() > 1 { omegas[1] - omegas[0] } else { 1.0 };
        let weights = omegas
            .iter()
            .map(|&w| {
                let xi = scenario.xi(0.0, w, 0);
                xi * xi * dw
            })
            .collect();
        let n = scenario.pulse.num_pulses;
        Self {
            omegas,
            weights,
            params: KernelParams::from_scenario(scenario),
            rotation: scenario.rotation,
            span: n as f64 * scenario.pulse.pulse_spacing,
        }
    }
}

/// `Σ_ω |ξ|² Δω · B_eff(u − y_i) B_eff(v − y_j) J₀((ω/c₀)2 sin θ |(u − y_i) − (v − y_j)|)`
/// for one scatterer pair.
pub fn interference_pattern_approx(u: [f64; 2], v: [f64; 2], yi: [f64; 2], yj: [f64; 2], model: &PatternModel) -> f64 {
    let a = [u[0] - yi[0], u[1] - yi[1]];
    let b = [v[0] - yj[0], v[1] - yj[1]];
    let r = (a[0] - b[0]).hypot(a[1] - b[1]);
    let theta = model.rotation.theta_rot;
    model
        .omegas
        .iter()
        .zip(&model.weights)
        .map(|(&w, &weight)| {
            let ba = kernel_effective(a, w, &model.params, &model.rotation, model.span);
            let bb = kernel_effective(b, w, &model.params, &model.rotation, model.span);
            weight * ba * bb * kernel_rotation_bessel(r, w, theta)
        })
        .sum()
}

/// Kernel values on a square grid `coords × coords`, row `j` holding the
/// second coordinate `coords[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSample {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl KernelSample {
    /// `2m + 1` samples per axis with spacing `half_extent / m`.
    pub fn evaluate<F: Fn([f64; 2]) -> f64>(half_extent: f64, m: usize, f: F) -> Self {
        let m = m.max(1);
        let coords: Vec<f64> = (0..=2 * m)
            .map(|i| (i as f64 - m as f64) * half_extent / m as f64)
            .collect();
        let mut values = Vec::with_capacity(coords.len() * coords.len());
        for &y in &coords {
            for &x in &coords {
                values.push(f([x, y]));
            }
        }
        Self { coords, values }
    }

    /// The row through the origin.
    pub fn section(&self) -> Vec<(f64, f64)> {
        let n = self.coords.len();
        let j = n / 2;
        (0..n).map(|i| (self.coords[i], self.values[j * n + i])).collect()
    }

    /// First line lists the coordinates; each following line is one row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.9e}")).collect::<Vec<_>>().join(",");
        writeln!(w, "{}", join(&self.coords))?;
        for row in self.values.chunks(self.coords.len()) {
            writeln!(w, "{}", join(row))?;
        }
        Ok(())
    }
}

/// Full width at half maximum of a sampled profile around its largest value,
/// by linear interpolation between samples; `None` if it never drops below
/// half on both sides.
pub fn profile_fwhm(xs: &[f64], values: &[f64]) -> Option<f64> {
    let (ipk, &peak) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = peak / 2.0;
    let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for i in range {
            if values[i] < half {
                let j = (i as isize - step) as usize;
                let t = (values[j] - half) / (values[j] - values[i]);
                return Some(xs[j] + t * (xs[i] - xs[j]));
            }
        }
        None
    };
    let right = cross(&mut (ipk + 1..values.len()), 1)?;
    let left = cross(&mut (0..ipk).rev(), -1)?;
    Some(right - left)
}

/// First zero of `f` in `(0, hi]` along a ray, by scanning `n` steps and then
/// bisecting the first sign change.
pub fn first_zero<F: Fn(f64) -> f64>(f: F, hi: f64, n: usize) -> Option<f64> {
    let mut a = 0.0;
    let mut fa = f(0.0);
    for i in 1..=n {
        let b = hi * i as f64 / n as f64;
        let fb = f(b);
        if fa.signum() != fb.signum() {
            let (mut lo, mut up) = (a, b);
            for _ in 0..100 {
                let mid = 0.5 * (lo + up);
                if f(mid).signum() == fa.signum() {
                    lo = mid;
                } else {
                    up = mid;
                }
            }
            return Some(0.5 * (lo + up));
        }
        a = b;
        fa = fb;
    }
    None
}
