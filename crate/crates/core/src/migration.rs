//! Two-point migration of cross-correlations and image extraction.
//!
//! With `b(s, ω) = Aᴴ û` the back-projection of all receivers onto the grid,
//! the interference matrix `X̃ = Σ_{s,ω} Σ_{R,R'} conj(A_R) Ĉ_RR' A_R'ᵀ`
//! factors as `Σ_{s,ω} b bᴴ`, so no receiver pair is ever formed. Pulses are
//! the outer loop and frequencies the inner one; the order is fixed, which
//! makes every accumulation bit-reproducible.

use crate::correlation::CorrelationSet;
use crate::eigen::{top_eigenpair, CMatrix, EigenError, EigenOptions};
use crate::geometry::{GeometryError, RotationParams, Vec3};
use crate::scenario::Scenario;
use crate::waveform::SpectralEchoes;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MigrationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("image grid is empty")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("echoes have {echoes} receivers but the scenario has {layout}")]
    ReceiverMismatch { echoes: usize, layout: usize },
    #[error("image is zero everywhere")]
    AllZero,
    #[error("no local maximum within two cells of ({x:.4}, {y:.4})")]
    PeakNotFound { x: f64, y: f64 },
    #[error("spot does not fall to half maximum inside the grid")]
    SpotUnbounded,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed interference matrix file: {0}")]
    Format(String),
}

/// Square grid of body-frame offsets `y_k = (x_i, x_j, 0)`, centered on the
/// origin. Index `k = j·n + i` with `i` along the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub n: usize,
    pub spacing: f64,
}

impl ImageGrid {
    /// `2m + 1` points per axis with `m = round(half_extent / spacing)`.
    pub fn new(spacing: f64, half_extent: f64) -> Result<Self, MigrationError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(MigrationError::InvalidGrid(format!("spacing {spacing}")));
        }
        if !(half_extent >= 0.0) || !half_extent.is_finite() {
            return Err(MigrationError::InvalidGrid(format!("half extent {half_extent}")));
        }
        let m = (half_extent / spacing).round() as usize;
        Ok(Self { n: 2 * m + 1, spacing })
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn half_extent(&self) -> f64 {
        (self.n / 2) as f64 * self.spacing
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.spacing
    }

    pub fn point(&self, k: usize) -> Vec3 {
        Vec3::new(self.coord(k % self.n), self.coord(k / self.n), 0.0)
    }

    pub fn points(&self) -> Vec<Vec3> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Fractional grid indices of a planar position.
    pub fn to_index(&self, x: f64, y: f64) -> (f64, f64) {
        let c = (self.n / 2) as f64;
        (x / self.spacing + c, y / self.spacing + c)
    }
}

/// Calls `f(s_index, m, b)` for every pulse and frequency with
/// `b_k = Σ_R e^{−iω Δt_{R,k}} û_R(s, ω)`.
fn back_projections<F: FnMut(usize, usize, &[Complex64])>(
    echoes: &SpectralEchoes,
    scenario: &Scenario,
    rotation: &RotationParams,
    grid: &ImageGrid,
    mut f: F,
) -> Result<(), MigrationError> {
    if grid.is_empty() {
        return Err(MigrationError::EmptyGrid);
    }
    if echoes.n_receivers != scenario.layout.len() {
        return Err(MigrationError::ReceiverMismatch {
            echoes: echoes.n_receivers,
            layout: scenario.layout.len(),
        });
    }
    let k_len = grid.len();
    let nf = echoes.freqs.len();
    let omegas = echoes.freqs.omegas();
    let points = grid.points();
    let v = scenario.trajectory.v_t;
    // b for every frequency of one pulse, [m][k]
    let mut b = vec![Complex64::new(0.0, 0.0); nf * k_len];
    let mut phase = vec![Complex64::new(0.0, 0.0); nf];
    for (si, &s) in echoes.slow_times.iter().enumerate() {
        let pg = scenario.pulse_geometry(s, rotation)?;
        b.fill(Complex64::new(0.0, 0.0));
        for r in 0..echoes.n_receivers {
            let u = echoes.row(r, si);
            for (k, y) in points.iter().enumerate() {
                let dt = pg.reduced_time(y, &scenario.layout, r, &v)?;
                phase.fill(Complex64::new(0.0, 0.0));
                crate::waveform::accumulate_phasors(&omegas, &[-dt], &[1.0], &mut phase);
                for m in 0..nf {
                    b[m * k_len + k] += phase[m] * u[m];
                }
            }
        }
        for m in 0..nf {
            f(si, m, &b[m * k_len..(m + 1) * k_len]);
        }
    }
    Ok(())
}

/// `X̃` with the bookkeeping of what went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMatrix {
    pub x: CMatrix,
    pub grid: ImageGrid,
    pub pulses: usize,
    pub freqs: usize,
    pub receivers: usize,
}

const BLOCK_COLS: usize = 64;
const TILE: usize = 256;

/// Adds `B Bᴴ` to the lower triangle of `x`, `B` stored column by column.
fn add_gram_lower(x: &mut CMatrix, b: &[Complex64], bc: &[Complex64], cols: usize) {
    let n = x.nrows();
    if cols == 0 {
        return;
    }
    let one = [1.0, 0.0];
    let cp = x.as_mut_ptr() as *mut [f64; 2];
    let ap = b.as_ptr() as *const [f64; 2];
    let bp = bc.as_ptr() as *const [f64; 2];
    for i0 in (0..n).step_by(TILE) {
        let mi = TILE.min(n - i0);
        for j0 in (0..=i0).step_by(TILE) {
            let nj = TILE.min(n - j0);
            // SAFETY: Complex64 is two packed f64s; all offsets stay inside
            // the n×n column-major target and the n×cols sources.
            unsafe {
                matrixmultiply::zgemm(
                    matrixmultiply::CGemmOption::Standard,
                    matrixmultiply::CGemmOption::Standard,
                    mi,
                    cols,
                    nj,
                    one,
                    ap.add(i0),
                    1,
                    n as isize,
                    bp.add(j0),
                    n as isize,
                    1,
                    one,
                    cp.add(i0 + j0 * n),
                    1,
                    n as isize,
                );
            }
        }
    }
}

fn mirror_lower(x: &mut CMatrix) {
    let n = x.nrows();
    for j in 0..n {
        x[(j, j)].im = 0.0;
        for i in j + 1..n {
            x[(j, i)] = x[(i, j)].conj();
        }
    }
}

/// Accumulates `X̃` over every pulse, frequency and receiver pair.
pub fn migrate_two_point(
    correlations: &CorrelationSet,
    scenario: &Scenario,
    rotation: &RotationParams,
    grid: &ImageGrid,
) -> Result<InterferenceMatrix, MigrationError> {
    let e = &correlations.echoes;
    let n = grid.len();
    let mut x = CMatrix::zeros(n, n);
    let mut b = Vec::with_capacity(n * BLOCK_COLS);
    let mut bc = Vec::with_capacity(n * BLOCK_COLS);
    back_projections(e, scenario, rotation, grid, |_, _, col| {
        b.extend_from_slice(col);
        bc.extend(col.iter().map(|z| z.conj()));
        if b.len() == n * BLOCK_COLS {
            add_gram_lower(&mut x, &b, &bc, BLOCK_COLS);
            b.clear();
            bc.clear();
        }
    })?;
    add_gram_lower(&mut x, &b, &bc, b.len() / n);
    mirror_lower(&mut x);
    Ok(InterferenceMatrix {
        x,
        grid: grid.clone(),
        pulses: e.n_pulses(),
        freqs: e.n_freqs(),
        receivers: e.n_receivers,
    })
}

const MAGIC: &[u8; 8] = b"CRSRXM01";

impl InterferenceMatrix {
    /// `max|X̃ − X̃ᴴ| / max|X̃|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.x.nrows();
        let mut worst: f64 = 0.0;
        let mut big: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((self.x[(i, j)] - self.x[(j, i)].conj()).norm());
                big = big.max(self.x[(i, j)].norm());
            }
        }
        if big == 0.0 {
            0.0
        } else {
            worst / big
        }
    }

    /// Binary layout, little endian: magic `CRSRXM01`, u64 grid points per
    /// axis, f64 spacing, u64 pulses, frequencies, receivers, then the
    /// column-major `(re, im)` f64 pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&self.grid.spacing.to_le_bytes())?;
        for n in [self.pulses, self.freqs, self.receivers] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for z in self.x.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, MigrationError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MigrationError::Format("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let spacing = f64::from_le_bytes(next(&mut r)?);
        let pulses = u64::from_le_bytes(next(&mut r)?) as usize;
        let freqs = u64::from_le_bytes(next(&mut r)?) as usize;
        let receivers = u64::from_le_bytes(next(&mut r)?) as usize;
        if n == 0 || n % 2 == 0 || !(spacing > 0.0) {
            return Err(MigrationError::Format(format!("grid {n} × {spacing}")));
        }
        let k = n * n;
        let mut x = CMatrix::zeros(k, k);
        for z in x.iter_mut() {
            let re = f64::from_le_bytes(next(&mut r)?);
            let im = f64::from_le_bytes(next(&mut r)?);
            *z = Complex64::new(re, im);
        }
        Ok(Self {
            x,
            grid: ImageGrid { n, spacing },
            pulses,
            freqs,
            receivers,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    SinglePoint,
    Rank1,
    Kirchhoff,
}

impl ImageKind {
    pub fn name(&self) -> &'static str {
        match self {
            ImageKind::SinglePoint => "single_point",
            ImageKind::Rank1 => "rank1",
            ImageKind::Kirchhoff => "kirchhoff",
        }
    }
}

/// Nonnegative image normalized to a maximum of one.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub values: Vec<f64>,
    pub grid: ImageGrid,
    pub kind: ImageKind,
}

impl Image {
    pub fn new(values: Vec<f64>, grid: ImageGrid, kind: ImageKind) -> Result<Self, MigrationError> {
        let mut values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let max = values.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(MigrationError::AllZero);
        }
        for v in &mut values {
            *v /= max;
        }
        Ok(Self { values, grid, kind })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.n + i]
    }

    /// Bilinear interpolation at fractional indices, `None` outside.
    pub fn sample(&self, fi: f64, fj: f64) -> Option<f64> {
        let n = self.grid.n;
        if fi < 0.0 || fj < 0.0 || fi > (n - 1) as f64 || fj > (n - 1) as f64 {
            return None;
        }
        let i = (fi.floor() as usize).min(n - 2);
        let j = (fj.floor() as usize).min(n - 2);
        let (a, b) = (fi - i as f64, fj - j as f64);
        Some(
            (1.0 - a) * (1.0 - b) * self.at(i, j)
                + a * (1.0 - b) * self.at(i + 1, j)
                + (1.0 - a) * b * self.at(i, j + 1)
                + a * b * self.at(i + 1, j + 1),
        )
    }

    /// Rows along the second axis, one line each.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for row in self.values.chunks(self.grid.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// 8-bit binary graymap with the second axis pointing up.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.grid.n;
        write!(w, "P5\n{n} {n}\n255\n")?;
        let mut bytes = Vec::with_capacity(n * n);
        for j in (0..n).rev() {
            for i in 0..n {
                bytes.push((self.at(i, j) * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        w.write_all(&bytes)
    }
}

/// `Re diag X̃`, clipped at zero.
pub fn image_single_point(x: &InterferenceMatrix) -> Result<Image, MigrationError> {
    let values = (0..x.x.nrows()).map(|k| x.x[(k, k)].re).collect();
    Image::new(values, x.grid.clone(), ImageKind::SinglePoint)
}

/// `|v₁|²` of the top eigenvector, with the eigen solver's report.
pub fn image_rank1(
    x: &InterferenceMatrix,
    opts: &EigenOptions,
) -> Result<(Image, crate::eigen::TopEigen), MigrationError> {
    let top = top_eigenpair(&x.x, opts)?;
    let values = top.pair.vector.iter().map(|z| z.norm_sqr()).collect();
    Ok((Image::new(values, x.grid.clone(), ImageKind::Rank1)?, top))
}

/// `|Σ_{s,ω} Aᴴ û|`.
pub fn image_kirchhoff(
    echoes: &SpectralEchoes,
    scenario: &Scenario,
    rotation: &RotationParams,
    grid: &ImageGrid,
) -> Result<Image, MigrationError> {
    let mut rho = vec![Complex64::new(0.0, 0.0); grid.len()];
    back_projections(echoes, scenario, rotation, grid, |_, _, b| {
        for (r, z) in rho.iter_mut().zip(b) {
            *r += z;
        }
    })?;
    Image::new(rho.iter().map(|z| z.norm()).collect(), grid.clone(), ImageKind::Kirchhoff)
}

/// Grid indices of the largest value within two cells of `(x, y)` if it is a
/// local maximum of its 8-neighbourhood.
fn local_peak(image: &Image, x: f64, y: f64) -> Result<(usize, usize), MigrationError> {
    let n = image.grid.n as isize;
    let (fi, fj) = image.grid.to_index(x, y);
    let (ci, cj) = (fi.round() as isize, fj.round() as isize);
    let mut best: Option<(usize, usize, f64)> = None;
    for j in (cj - 2).max(0)..=(cj + 2).min(n - 1) {
        for i in (ci - 2).max(0)..=(ci + 2).min(n - 1) {
            let v = image.at(i as usize, j as usize);
            if best.is_none_or(|b| v > b.2) {
                best = Some((i as usize, j as usize, v));
            }
        }
    }
    let not_found = MigrationError::PeakNotFound { x, y };
    let Some((i, j, v)) = best else { return Err(not_found) };
    let mut strict = false;
    for dj in -1isize..=1 {
        for di in -1isize..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let (a, b) = (i as isize + di, j as isize + dj);
            if a < 0 || b < 0 || a >= n || b >= n {
                continue;
            }
            let w = image.at(a as usize, b as usize);
            if w > v {
                return Err(not_found);
            }
            if w < v {
                strict = true;
            }
        }
    }
    if !strict {
        return Err(not_found);
    }
    Ok((i, j))
}

/// Full width at half maximum through the local maximum near `(x, y)` along
/// the unit `direction`, stepping outward by 0.05 cell with bilinear
/// interpolation and locating each crossing linearly.
pub fn measure_spot(image: &Image, x: f64, y: f64, direction: (f64, f64)) -> Result<f64, MigrationError> {
    let (i, j) = local_peak(image, x, y)?;
    let peak = image.at(i, j);
    let half = 0.5 * peak;
    let norm = direction.0.hypot(direction.1);
    let (dx, dy) = (direction.0 / norm, direction.1 / norm);
    let step = 0.05;
    let mut width = 0.0;
    for sign in [1.0, -1.0] {
        let mut prev = peak;
        let mut t = 0.0;
        loop {
            let next_t = t + step;
            let v = image
                .sample(i as f64 + sign * next_t * dx, j as f64 + sign * next_t * dy)
                .ok_or(MigrationError::SpotUnbounded)?;
            if v < half {
                width += t + step * (prev - half) / (prev - v);
                break;
            }
            prev = v;
            t = next_t;
        }
    }
    Ok(width * image.grid.spacing)
}

/// Mean FWHM over the directions 0°, 45°, 90° and 135°.
pub fn spot_width(image: &Image, x: f64, y: f64) -> Result<f64, MigrationError> {
    let mut sum = 0.0;
    for k in 0..4 {
        let a = k as f64 * PI / 4.0;
        sum += measure_spot(image, x, y, (a.cos(), a.sin()))?;
    }
    Ok(sum / 4.0)
}

/// Smallest FWHM over `directions` orientations evenly spaced in `[0, π)`.
pub fn narrowest_spot_width(image: &Image, x: f64, y: f64, directions: usize) -> Result<f64, MigrationError> {
    let mut best = f64::INFINITY;
    for k in 0..directions.max(1) {
        let a = k as f64 * PI / directions.max(1) as f64;
        best = best.min(measure_spot(image, x, y, (a.cos(), a.sin()))?);
    }
    Ok(best)
}

/// Strict 8-neighbourhood maxima with value at least `floor` (relative to
/// the image maximum), strongest first, as planar positions.
pub fn local_maxima(image: &Image, floor: f64) -> Vec<(f64, f64, f64)> {
    let n = image.grid.n;
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let v = image.at(i, j);
            if v < floor {
                continue;
            }
            let mut ok = true;
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a >= 0 && b >= 0 && (a as usize) < n && (b as usize) < n && image.at(a as usize, b as usize) >= v {
                        ok = false;
                    }
                }
            }
            if ok {
                out.push((image.grid.coord(i), image.grid.coord(j), v));
            }
        }
    }
    out.sort_by(|a, b| b.2.total_cmp(&a.2));
    out
}

/// How many truth positions have one of the `truth.len()` strongest maxima
/// (at least `0.2` of the image maximum) within one grid cell in both
/// coordinates.
pub fn count_true_peaks(image: &Image, truth: &[(f64, f64)]) -> usize {
    let peaks: Vec<_> = local_maxima(image, 0.2).into_iter().take(truth.len()).collect();
    let tol = image.grid.spacing * (1.0 + 1e-9);
    truth
        .iter()
        .filter(|t| {
            peaks
                .iter()
                .any(|p| (p.0 - t.0).abs() <= tol && (p.1 - t.1).abs() <= tol)
        })
        .count()
}
