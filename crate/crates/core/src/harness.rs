//! Pipeline orchestration: synthesis, correlation, rotation estimation,
//! migration and image extraction, with on-disk artifacts, a stage cache for
//! correlation sets and parameter sweeps.
//!
//! Every random stream derives from the run seed, so a run is reproducible
//! from its configuration alone. Sweeps reuse the base seed for every entry
//! (common random numbers): entries differ only in the swept parameter.

use crate::config::{ConfigError, ImageChoice, ScenarioConfig};
use crate::correlation::{CorrelationSet, EnvelopeOptions};
use crate::eigen::{eigen_spectrum, EigenOptions};
use crate::geometry::RotationParams;
use crate::migration::{
    count_true_peaks, image_kirchhoff, image_rank1, image_single_point, local_maxima, migrate_two_point,
    narrowest_spot_width, spot_width, Image, ImageGrid, ImageKind,
};
use crate::resolution_analysis::{
    bessel_j0, kernel_array, kernel_effective, profile_fwhm, KernelParams, KernelSample, J0_FIRST_ZERO,
};
use crate::rotation_estimation::{default_envelope, estimate_rotation, EstimationOptions, RotationEstimate};
use crate::scenario::Scenario;
use crate::waveform::{add_noise_spectral, synthesize_spectral, FrequencyGrid};
use std::collections::hash_map::DefaultHasher;
use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::hash::{Hash, Hasher};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synthesis,
    Estimation,
    Migration,
    Imaging,
    Kernels,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Synthesis => "synthesis",
            Self::Estimation => "estimation",
            Self::Migration => "migration",
            Self::Imaging => "imaging",
            Self::Kernels => "kernels",
            Self::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Stage { .. } => 3,
        }
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> HarnessError {
    move |e| HarnessError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// How far a run goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Goal {
    /// Synthesize and correlate.
    Simulate,
    /// Also estimate the rotation.
    Estimate,
    /// Also migrate and extract images.
    Image,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Artifact directory; nothing is written when absent.
    pub out: Option<PathBuf>,
    /// Directory of cached correlation sets.
    pub stage_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSummary {
    pub theta: f64,
    pub phi: f64,
    pub omega: f64,
    /// Relative errors `(θ, φ, ω_r)`.
    pub errors: [f64; 3],
    pub loss: f64,
    pub data_points: usize,
    pub omega_guess: f64,
    pub warnings: Vec<String>,
}

impl EstimateSummary {
    fn new(est: &RotationEstimate, truth: &RotationParams) -> Self {
        Self {
            theta: est.theta_hat,
            phi: est.phi_hat,
            omega: est.omega_hat,
            errors: est.relative_errors(truth),
            loss: est.loss,
            data_points: est.data.len(),
            omega_guess: est.omega_guess,
            warnings: est.warnings.clone(),
        }
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub kind: ImageKind,
    pub true_peaks: usize,
    pub truth_count: usize,
    /// Mean FWHM over four directions at each truth point.
    pub widths: Vec<Option<f64>>,
    /// Smallest FWHM over eight directions at each truth point.
    pub narrowest: Vec<Option<f64>>,
    /// The strongest local maxima `(x, y, value)`, as many as truth points.
    pub peaks: Vec<(f64, f64, f64)>,
}

fn mean(v: &[Option<f64>]) -> Option<f64> {
    let x: Vec<f64> = v.iter().flatten().copied().collect();
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

impl ImageMetrics {
    pub fn measure(image: &Image, truth: &[(f64, f64)]) -> Self {
        Self {
            kind: image.kind,
            true_peaks: count_true_peaks(image, truth),
            truth_count: truth.len(),
            widths: truth.iter().map(|&(x, y)| spot_width(image, x, y).ok()).collect(),
            narrowest: truth
                .iter()
                .map(|&(x, y)| narrowest_spot_width(image, x, y, 8).ok())
                .collect(),
            peaks: local_maxima(image, 0.2).into_iter().take(truth.len()).collect(),
        }
    }

    pub fn mean_width(&self) -> Option<f64> {
        mean(&self.widths)
    }

    pub fn mean_narrowest(&self) -> Option<f64> {
        mean(&self.narrowest)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub truth: RotationParams,
    pub estimate: Option<EstimateSummary>,
    /// Rotation handed to migration.
    pub imaging_rotation: Option<RotationParams>,
    pub images: Vec<ImageMetrics>,
    /// Leading eigenvalues of `X̃`, descending.
    pub spectrum: Vec<f64>,
    pub hermitian_defect: Option<f64>,
    /// Correlation sets loaded from the stage cache.
    pub cache_hits: Vec<String>,
    pub files: Vec<PathBuf>,
    pub timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn image(&self, kind: ImageKind) -> Option<&ImageMetrics> {
        self.images.iter().find(|m| m.kind == kind)
    }

    /// `λ₂/λ₁` when at least two eigenvalues were computed.
    pub fn eigen_ratio(&self) -> Option<f64> {
        (self.spectrum.len() >= 2 && self.spectrum[0] > 0.0).then(|| self.spectrum[1] / self.spectrum[0])
    }

    /// Plain-text report; the configuration is echoed with defaults filled in.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.truth;
        let _ = writeln!(s, "truth rotation: theta {:.6} phi {:.6} omega {:.6}", t.theta_rot, t.phi_rot, t.omega_r);
        match &self.estimate {
            Some(e) => {
                let _ = writeln!(
                    s,
                    "estimated rotation: theta {:.6} phi {:.6} omega {:.6} (guess {:.6}, loss {:.4e}, {} peaks)",
                    e.theta, e.phi, e.omega, e.omega_guess, e.loss, e.data_points
                );
                let _ = writeln!(
                    s,
                    "relative errors: theta {:.3e} phi {:.3e} omega {:.3e}",
                    e.errors[0], e.errors[1], e.errors[2]
                );
            }
            None => {
                let _ = writeln!(s, "estimated rotation: not run");
            }
        }
        if let Some(r) = &self.imaging_rotation {
            let _ = writeln!(s, "imaging rotation: theta {:.6} phi {:.6} omega {:.6}", r.theta_rot, r.phi_rot, r.omega_r);
        }
        for m in &self.images {
            let mm = |v: Option<f64>| v.map_or("n/a".to_string(), |w| format!("{:.2} mm", w * 1e3));
            let _ = writeln!(
                s,
                "{} image: {}/{} true peaks, mean FWHM {}, narrowest FWHM {}",
                m.kind.name(),
                m.true_peaks,
                m.truth_count,
                mm(m.mean_width()),
                mm(m.mean_narrowest())
            );
        }
        if !self.spectrum.is_empty() {
            let rel: Vec<String> = self.spectrum.iter().map(|l| format!("{:.4}", l / self.spectrum[0])).collect();
            let _ = writeln!(s, "eigenvalues / lambda1: {}", rel.join(" "));
        }
        if let Some(d) = self.hermitian_defect {
            let _ = writeln!(s, "hermitian defect: {d:.3e}");
        }
        for c in &self.cache_hits {
            let _ = writeln!(s, "stage cache hit: {c}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for (name, secs) in &self.timings {
            let _ = writeln!(s, "time {name}: {secs:.2} s");
        }
        for f in &self.files {
            let _ = writeln!(s, "wrote {}", f.display());
        }
        let _ = writeln!(s, "\n# configuration\n{}", self.config.to_toml());
        s
    }
}

/// Independent noise stream per acquisition.
fn noise_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

const STREAM_ESTIMATION: u64 = 1;
const STREAM_IMAGING: u64 = 2;

/// Cache key: everything the correlation set depends on.
fn cache_key(cfg: &ScenarioConfig, tag: &str, freqs: &FrequencyGrid, pulses: usize) -> String {
    let mut h = DefaultHasher::new();
    tag.hash(&mut h);
    cfg.seed.hash(&mut h);
    for part in [
        toml::to_string(&cfg.geometry),
        toml::to_string(&cfg.trajectory),
        toml::to_string(&cfg.rotation),
        toml::to_string(&cfg.scene),
        toml::to_string(&cfg.pulse),
        toml::to_string(&cfg.noise),
    ] {
        part.unwrap_or_default().hash(&mut h);
    }
    pulses.hash(&mut h);
    for w in freqs.omegas() {
        w.to_bits().hash(&mut h);
    }
    format!("correlations-{tag}-{:016x}.bin", h.finish())
}

fn write_file<F: FnOnce(&mut BufWriter<File>) -> io::Result<()>>(
    path: &Path,
    files: &mut Vec<PathBuf>,
    f: F,
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path).map_err(at(Stage::Output))?);
    f(&mut w).and_then(|_| w.flush()).map_err(at(Stage::Output))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Synthesizes (or loads from the cache) the correlation set of one
/// acquisition.
fn correlation_set(
    cfg: &ScenarioConfig,
    scenario: &Scenario,
    freqs: &FrequencyGrid,
    stream: u64,
    tag: &str,
    opts: &RunOptions,
    report: &mut RunReport,
) -> Result<CorrelationSet, HarnessError> {
    let cached = opts
        .stage_cache
        .as_ref()
        .map(|dir| dir.join(cache_key(cfg, tag, freqs, scenario.pulse.num_pulses)));
    if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
        let f = File::open(path).map_err(at(Stage::Synthesis))?;
        let cs = CorrelationSet::read_binary(io::BufReader::new(f)).map_err(at(Stage::Synthesis))?;
        report.cache_hits.push(path.display().to_string());
        return Ok(cs);
    }
    let t = Instant::now();
    let mut echoes = synthesize_spectral(scenario, &cfg.scene(), freqs).map_err(at(Stage::Synthesis))?;
    if let Some(snr) = cfg.noise.snr_db {
        echoes = add_noise_spectral(&echoes, &scenario.pulse, snr, noise_seed(cfg.seed, stream))
            .map_err(at(Stage::Synthesis))?;
    }
    let cs = CorrelationSet::new(echoes, scenario.center(0.0), scenario.trajectory.v_t);
    report.timings.push((format!("synthesis ({tag})"), t.elapsed().as_secs_f64()));
    if let Some(path) = cached {
        fs::create_dir_all(path.parent().unwrap_or(Path::new("."))).map_err(at(Stage::Output))?;
        let mut ignored = Vec::new();
        write_file(&path, &mut ignored, |w| cs.write_binary(w))?;
    }
    Ok(cs)
}

pub fn estimation_options(cfg: &ScenarioConfig, scenario: &Scenario) -> EstimationOptions {
    let e = &cfg.estimation;
    let envelope = e.max_lag.map(|max_lag| EnvelopeOptions {
        max_lag,
        ..default_envelope(scenario)
    });
    EstimationOptions {
        alpha: e.alpha,
        window: e.window,
        theta_steps: e.theta_steps,
        phi_steps: e.phi_steps,
        omega_steps: e.omega_steps,
        omega_span: e.omega_span,
        restarts: e.restarts,
        drift_correction: e.drift_correction,
        envelope,
        ..EstimationOptions::default()
    }
}

/// Rotation handed to migration: frozen when compensation is off, else the
/// estimate (or truth) with every parameter scaled by `1 + rotation_error`.
pub fn imaging_rotation(cfg: &ScenarioConfig, base: &RotationParams) -> RotationParams {
    if !cfg.imaging.compensate_rotation {
        return RotationParams::frozen();
    }
    let k = 1.0 + cfg.imaging.rotation_error;
    if k == 1.0 {
        *base
    } else {
        RotationParams::canonical(base.theta_rot * k, base.phi_rot * k, base.omega_r * k)
    }
}

fn write_estimate(
    dir: &Path,
    est: &RotationEstimate,
    truth: &RotationParams,
    files: &mut Vec<PathBuf>,
) -> Result<(), HarnessError> {
    let err = est.relative_errors(truth);
    write_file(&dir.join("estimate.csv"), files, |w| {
        writeln!(w, "parameter,truth,estimate,relative_error")?;
        writeln!(w, "theta,{:.9e},{:.9e},{:.9e}", truth.theta_rot, est.theta_hat, err[0])?;
        writeln!(w, "phi,{:.9e},{:.9e},{:.9e}", truth.phi_rot, est.phi_hat, err[1])?;
        writeln!(w, "omega,{:.9e},{:.9e},{:.9e}", truth.omega_r, est.omega_hat, err[2])
    })?;
    write_file(&dir.join("supports.csv"), files, |w| {
        writeln!(w, "receiver,s,support,smoothed")?;
        for t in &est.traces {
            for i in 0..t.slow_times.len() {
                writeln!(w, "{},{:.6},{:.9e},{:.9e}", t.receiver, t.slow_times[i], t.support[i], t.smoothed[i])?;
            }
        }
        Ok(())
    })?;
    write_file(&dir.join("support_peaks.csv"), files, |w| {
        writeln!(w, "receiver,s")?;
        for t in &est.traces {
            for p in &t.peaks {
                writeln!(w, "{},{:.9e}", t.receiver, p)?;
            }
        }
        Ok(())
    })
}

/// Runs the pipeline up to `goal`. Estimation is skipped when disabled, in
/// which case imaging uses the true rotation.
pub fn run_pipeline(cfg: &ScenarioConfig, goal: Goal, opts: &RunOptions) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let truth = cfg.truth().map_err(|e| ConfigError::Invalid {
        field: "rotation".into(),
        reason: e.to_string(),
    })?;
    let mut report = RunReport {
        config: cfg.clone(),
        truth,
        estimate: None,
        imaging_rotation: None,
        images: Vec::new(),
        spectrum: Vec::new(),
        hermitian_defect: None,
        cache_hits: Vec::new(),
        files: Vec::new(),
        timings: Vec::new(),
        warnings: Vec::new(),
    };
    let mut files = Vec::new();
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir).map_err(at(Stage::Output))?;
    }
    let started = Instant::now();

    let mut estimate = None;
    if cfg.estimation.enabled {
        let sc = cfg.scenario(cfg.estimation.pulses)?;
        let freqs = cfg.estimation_freqs(&sc.pulse);
        let cs = correlation_set(cfg, &sc, &freqs, STREAM_ESTIMATION, "estimation", opts, &mut report)?;
        if goal == Goal::Simulate {
            if let Some(dir) = &opts.out {
                write_file(&dir.join("correlations_estimation.bin"), &mut files, |w| cs.write_binary(w))?;
            }
        } else {
            let t = Instant::now();
            let est = estimate_rotation(&cs, &sc, &estimation_options(cfg, &sc)).map_err(at(Stage::Estimation))?;
            report.timings.push(("estimation".into(), t.elapsed().as_secs_f64()));
            if let Some(dir) = &opts.out {
                write_estimate(dir, &est, &truth, &mut files)?;
            }
            report.warnings.extend(est.warnings.iter().cloned());
            report.estimate = Some(EstimateSummary::new(&est, &truth));
            estimate = Some(est);
        }
    }

    if cfg.imaging.enabled && (goal == Goal::Simulate || goal == Goal::Image) {
        let sc = cfg.scenario(cfg.imaging.pulses)?;
        let freqs = cfg.imaging_freqs(&sc.pulse);
        let cs = correlation_set(cfg, &sc, &freqs, STREAM_IMAGING, "imaging", opts, &mut report)?;
        if goal == Goal::Simulate {
            if let Some(dir) = &opts.out {
                write_file(&dir.join("correlations_imaging.bin"), &mut files, |w| cs.write_binary(w))?;
            }
        } else {
            let base = estimate.as_ref().map_or(truth, |e| e.params());
            let rot = imaging_rotation(cfg, &base);
            report.imaging_rotation = Some(rot);
            image_stage(cfg, &sc, &cs, &rot, opts, &mut report, &mut files)?;
        }
    }

    report.timings.push(("total".into(), started.elapsed().as_secs_f64()));
    if let Some(dir) = &opts.out {
        let path = dir.join("report.txt");
        files.push(path.clone());
        report.files = files;
        let text = report.to_text();
        fs::write(&path, text).map_err(at(Stage::Output))?;
    } else {
        report.files = files;
    }
    Ok(report)
}

fn image_stage(
    cfg: &ScenarioConfig,
    sc: &Scenario,
    cs: &CorrelationSet,
    rot: &RotationParams,
    opts: &RunOptions,
    report: &mut RunReport,
    files: &mut Vec<PathBuf>,
) -> Result<(), HarnessError> {
    let im = &cfg.imaging;
    let grid = ImageGrid::new(im.spacing, im.half_extent).map_err(at(Stage::Migration))?;
    let truth = cfg.truth_points();
    let wants = |c: ImageChoice| im.images.contains(&c);
    let mut images = Vec::new();
    let eig = EigenOptions::default();
    if wants(ImageChoice::Rank1) || wants(ImageChoice::SinglePoint) || im.eigenvalues > 0 {
        let t = Instant::now();
        let x = migrate_two_point(cs, sc, rot, &grid).map_err(at(Stage::Migration))?;
        report.timings.push(("migration".into(), t.elapsed().as_secs_f64()));
        report.hermitian_defect = Some(x.hermitian_defect());
        let t = Instant::now();
        if wants(ImageChoice::Rank1) {
            let (img, top) = image_rank1(&x, &eig).map_err(at(Stage::Imaging))?;
            report.warnings.extend(top.warnings);
            images.push(img);
        }
        if wants(ImageChoice::SinglePoint) {
            images.push(image_single_point(&x).map_err(at(Stage::Imaging))?);
        }
        if im.eigenvalues > 0 {
            let m = im.eigenvalues.min(grid.len());
            let pairs = eigen_spectrum(&x.x, m, &eig).map_err(at(Stage::Imaging))?;
            report.spectrum = pairs.iter().map(|p| p.value).collect();
        }
        report.timings.push(("eigen and images".into(), t.elapsed().as_secs_f64()));
        if let (Some(dir), true) = (&opts.out, cfg.output.write_matrix) {
            write_file(&dir.join("interference.bin"), files, |w| x.write_binary(w))?;
        }
    }
    if wants(ImageChoice::Kirchhoff) {
        let t = Instant::now();
        images.push(image_kirchhoff(&cs.echoes, sc, rot, &grid).map_err(at(Stage::Imaging))?);
        report.timings.push(("kirchhoff".into(), t.elapsed().as_secs_f64()));
    }
    report.images = images.iter().map(|img| ImageMetrics::measure(img, &truth)).collect();
    let Some(dir) = &opts.out else {
        return Ok(());
    };
    if cfg.output.write_images {
        for img in &images {
            let name = img.kind.name();
            write_file(&dir.join(format!("{name}.csv")), files, |w| img.write_csv(w))?;
            write_file(&dir.join(format!("{name}.pgm")), files, |w| img.write_pgm(w))?;
        }
    }
    if !report.spectrum.is_empty() {
        let spectrum = report.spectrum.clone();
        write_file(&dir.join("spectrum.csv"), files, |w| {
            writeln!(w, "index,eigenvalue,relative")?;
            for (i, l) in spectrum.iter().enumerate() {
                writeln!(w, "{},{:.9e},{:.9e}", i + 1, l, l / spectrum[0])?;
            }
            Ok(())
        })?;
    }
    let metrics = report.images.clone();
    write_file(&dir.join("metrics.csv"), files, |w| {
        writeln!(w, "image,true_peaks,truth,mean_fwhm_m,narrowest_fwhm_m")?;
        for m in &metrics {
            writeln!(
                w,
                "{},{},{},{},{}",
                m.kind.name(),
                m.true_peaks,
                m.truth_count,
                opt_csv(m.mean_width()),
                opt_csv(m.mean_narrowest())
            )?;
        }
        Ok(())
    })
}

fn opt_csv(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.9e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    ThetaRot,
    AperturePulses,
    SnrDb,
    Alpha,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::ThetaRot => "theta_rot",
            Self::AperturePulses => "aperture_pulses",
            Self::SnrDb => "snr_db",
            Self::Alpha => "alpha",
        }
    }

    /// `value` written into the configuration. A non-finite SNR turns noise
    /// off.
    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) -> Result<(), ConfigError> {
        match self {
            Self::ThetaRot => cfg.rotation.theta = value,
            Self::AperturePulses => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(ConfigError::Invalid {
                        field: "imaging.pulses".into(),
                        reason: format!("{value} is not a positive pulse count"),
                    });
                }
                cfg.imaging.pulses = value as usize;
            }
            Self::SnrDb => cfg.noise.snr_db = value.is_finite().then_some(value),
            Self::Alpha => cfg.estimation.alpha = value,
        }
        cfg.validate()
    }
}

impl FromStr for SweepParam {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::ThetaRot, Self::AperturePulses, Self::SnrDb, Self::Alpha]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::Invalid {
                field: "sweep parameter".into(),
                reason: format!("`{s}` is not one of theta_rot, aperture_pulses, snr_db, alpha"),
            })
    }
}

/// Parses a sweep value: a number, optionally with a `pi` suffix
/// (`0.75pi`), or `off`/`inf` for no noise.
pub fn parse_sweep_value(s: &str) -> Result<f64, ConfigError> {
    let t = s.trim();
    let bad = || ConfigError::Invalid {
        field: "sweep values".into(),
        reason: format!("cannot parse `{t}`"),
    };
    if t.eq_ignore_ascii_case("off") {
        return Ok(f64::INFINITY);
    }
    if let Some(k) = t.strip_suffix("pi") {
        let k = k.trim().trim_end_matches('*');
        let k = if k.is_empty() { 1.0 } else { k.parse::<f64>().map_err(|_| bad())? };
        return Ok(k * std::f64::consts::PI);
    }
    t.parse().map_err(|_| bad())
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub goal: Goal,
    pub workers: usize,
    /// Each entry writes into `out/<parameter>_<index>`.
    pub out: Option<PathBuf>,
    pub stage_cache: Option<PathBuf>,
}

#[derive(Debug)]
pub struct SweepEntry {
    pub value: f64,
    pub result: Result<RunReport, HarnessError>,
}

/// Independent runs of `base` with `param` set to each value, up to
/// `workers` at a time. Per-entry failures are recorded, not propagated.
pub fn sweep(
    base: &ScenarioConfig,
    param: SweepParam,
    values: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<SweepEntry>, HarnessError> {
    base.validate()?;
    let configs: Vec<Result<ScenarioConfig, ConfigError>> = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            param.apply(&mut c, v).map(|_| c)
        })
        .collect();
    let slots: Vec<Mutex<Option<Result<RunReport, HarnessError>>>> = values.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = opts.workers.clamp(1, values.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= values.len() {
                    break;
                }
                let result = match &configs[i] {
                    Err(e) => Err(HarnessError::Config(ConfigError::Invalid {
                        field: param.name().into(),
                        reason: e.to_string(),
                    })),
                    Ok(cfg) => {
                        let run = RunOptions {
                            out: opts.out.as_ref().map(|d| d.join(format!("{}_{i:02}", param.name()))),
                            stage_cache: opts.stage_cache.clone(),
                        };
                        run_pipeline(cfg, opts.goal, &run)
                    }
                };
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    let entries: Vec<SweepEntry> = values
        .iter()
        .zip(slots)
        .map(|(&value, slot)| SweepEntry {
            value,
            result: slot.into_inner().unwrap().expect("every entry ran"),
        })
        .collect();
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir).map_err(at(Stage::Output))?;
        let mut ignored = Vec::new();
        write_file(&dir.join(format!("sweep_{}.csv", param.name())), &mut ignored, |w| {
            write_sweep_csv(&entries, param, w)
        })?;
    }
    Ok(entries)
}

const SWEEP_IMAGES: [ImageKind; 3] = [ImageKind::Rank1, ImageKind::SinglePoint, ImageKind::Kirchhoff];

/// One row per entry: estimation errors, then peaks and widths per image.
pub fn write_sweep_csv<W: Write>(entries: &[SweepEntry], param: SweepParam, mut w: W) -> io::Result<()> {
    write!(w, "{},status,theta_error,phi_error,omega_error,eigen_ratio", param.name())?;
    for k in SWEEP_IMAGES {
        write!(w, ",{0}_peaks,{0}_mean_fwhm_m,{0}_narrowest_fwhm_m", k.name())?;
    }
    writeln!(w)?;
    for e in entries {
        write!(w, "{:.9e}", e.value)?;
        match &e.result {
            Err(err) => {
                write!(w, ",\"{}\"", err.to_string().replace('"', "'"))?;
                write!(w, "{}", ",".repeat(4 + 3 * SWEEP_IMAGES.len()))?;
            }
            Ok(r) => {
                write!(w, ",ok")?;
                match &r.estimate {
                    Some(est) => write!(w, ",{:.9e},{:.9e},{:.9e}", est.errors[0], est.errors[1], est.errors[2])?,
                    None => write!(w, ",,,")?,
                }
                write!(w, ",{}", opt_csv(r.eigen_ratio()))?;
                for k in SWEEP_IMAGES {
                    match r.image(k) {
                        Some(m) => write!(
                            w,
                            ",{},{},{}",
                            m.true_peaks,
                            opt_csv(m.mean_width()),
                            opt_csv(m.mean_narrowest())
                        )?,
                        None => write!(w, ",,,")?,
                    }
                }
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    /// `λH_T/a` at the carrier.
    pub array_resolution: f64,
    /// First zero of `B_A` along an axis, found numerically.
    pub array_first_zero: Option<f64>,
    /// FWHM of `B_eff` over that of `B_A`, along the first axis.
    pub effective_width_ratio: Option<f64>,
    /// `λ/(2 sin θ_rot)`.
    pub rotation_resolution: f64,
    /// First zero of the Bessel factor.
    pub bessel_first_zero: f64,
    pub files: Vec<PathBuf>,
}

/// Evaluates the resolution kernels of the imaging acquisition at the
/// carrier and writes them as CSV when `out` is given.
pub fn kernels(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<KernelReport, HarnessError> {
    cfg.validate()?;
    let sc = cfg.scenario(cfg.imaging.pulses)?;
    let p = KernelParams::from_scenario(&sc);
    let w0 = sc.pulse.omega_o();
    let res = p.array_resolution(w0);
    let extent = 2.0 * res;
    let span = sc.pulse.num_pulses as f64 * sc.pulse.pulse_spacing;
    let a = KernelSample::evaluate(extent, 100, |x| kernel_array(x, w0, &p));
    let e = KernelSample::evaluate(extent, 60, |x| kernel_effective(x, w0, &p, &sc.rotation, span));
    let first = crate::resolution_analysis::first_zero(|r| kernel_array([r, 0.0], w0, &p), extent, 400);
    let fwhm = |k: &KernelSample| {
        let (xs, vs): (Vec<f64>, Vec<f64>) = k.section().into_iter().unzip();
        profile_fwhm(&xs, &vs)
    };
    let ratio = fwhm(&e).zip(fwhm(&a)).map(|(e, a)| e / a);
    let theta = sc.rotation.theta_rot;
    let k0 = w0 / crate::geometry::C0;
    let rot_res = std::f64::consts::PI / (k0 * 2.0 * theta.sin());
    let bessel_zero = J0_FIRST_ZERO / (k0 * 2.0 * theta.sin());
    let mut files = Vec::new();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(at(Stage::Output))?;
        write_file(&dir.join("kernel_array.csv"), &mut files, |w| a.write_csv(w))?;
        write_file(&dir.join("kernel_effective.csv"), &mut files, |w| e.write_csv(w))?;
        let r_max = 4.0 * rot_res.min(1.0);
        write_file(&dir.join("kernel_bessel.csv"), &mut files, |w| {
            writeln!(w, "r,j0")?;
            for i in 0..=400 {
                let r = r_max * i as f64 / 400.0;
                writeln!(w, "{:.9e},{:.9e}", r, bessel_j0(k0 * 2.0 * theta.sin() * r))?;
            }
            Ok(())
        })?;
    }
    if first.is_none() {
        return Err(HarnessError::Stage {
            stage: Stage::Kernels,
            message: "array kernel has no zero within two resolution cells".into(),
        });
    }
    Ok(KernelReport {
        array_resolution: res,
        array_first_zero: first,
        effective_width_ratio: ratio,
        rotation_resolution: rot_res,
        bessel_first_zero: bessel_zero,
        files,
    })
}

impl KernelReport {
    pub fn to_text(&self) -> String {
        let mm = |v: f64| format!("{:.3} mm", v * 1e3);
        let mut s = String::new();
        let _ = writeln!(s, "array resolution lambda H / a: {}", mm(self.array_resolution));
        if let Some(z) = self.array_first_zero {
            let _ = writeln!(s, "array kernel first zero: {}", mm(z));
        }
        if let Some(r) = self.effective_width_ratio {
            let _ = writeln!(s, "effective / array main-lobe width: {r:.3}");
        }
        let _ = writeln!(s, "rotation resolution lambda / (2 sin theta): {}", mm(self.rotation_resolution));
        let _ = writeln!(s, "Bessel factor first zero: {}", mm(self.bessel_first_zero));
        for f in &self.files {
            let _ = writeln!(s, "wrote {}", f.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values_parse() {
        assert_eq!(parse_sweep_value("3").unwrap(), 3.0);
        assert!((parse_sweep_value("0.75pi").unwrap() - 0.75 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(parse_sweep_value("pi").unwrap(), std::f64::consts::PI);
        assert!(parse_sweep_value("off").unwrap().is_infinite());
        assert!(parse_sweep_value("x").is_err());
        assert_eq!("alpha".parse::<SweepParam>().unwrap(), SweepParam::Alpha);
        assert!("beta".parse::<SweepParam>().is_err());
    }

    #[test]
    fn sweep_apply_validates() {
        let mut cfg = ScenarioConfig::default();
        SweepParam::SnrDb.apply(&mut cfg, f64::INFINITY).unwrap();
        assert_eq!(cfg.noise.snr_db, None);
        SweepParam::SnrDb.apply(&mut cfg, -3.0).unwrap();
        assert_eq!(cfg.noise.snr_db, Some(-3.0));
        assert!(SweepParam::ThetaRot.apply(&mut cfg.clone(), 4.0).is_err());
        assert!(SweepParam::AperturePulses.apply(&mut cfg.clone(), 10.5).is_err());
        SweepParam::AperturePulses.apply(&mut cfg, 222.0).unwrap();
        assert_eq!(cfg.imaging.pulses, 222);
    }

    #[test]
    fn imaging_rotation_modes() {
        let mut cfg = ScenarioConfig::default();
        let truth = cfg.truth().unwrap();
        assert_eq!(imaging_rotation(&cfg, &truth), truth);
        cfg.imaging.rotation_error = 0.03;
        let r = imaging_rotation(&cfg, &truth);
        assert!((r.omega_r / truth.omega_r - 1.03).abs() < 1e-12);
        assert!((r.theta_rot / truth.theta_rot - 1.03).abs() < 1e-12);
        cfg.imaging.compensate_rotation = false;
        assert_eq!(imaging_rotation(&cfg, &truth).omega_r, 0.0);
    }

    #[test]
    fn exit_codes() {
        let c = HarnessError::Config(ConfigError::UnknownPreset("x".into()));
        assert_eq!(c.exit_code(), 2);
        let s = HarnessError::Stage {
            stage: Stage::Migration,
            message: "m".into(),
        };
        assert_eq!(s.exit_code(), 3);
        assert_eq!(s.to_string(), "migration stage failed: m");
    }
}
