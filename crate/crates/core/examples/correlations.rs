//! Receiver-pair cross-correlations and the autocorrelation supports that
//! carry the rotation signature.

use corrisar::correlation::{autocorrelation_envelopes, CorrelationSet};
use corrisar::geometry::{ArrayLayout, RotationParams, Scene, Trajectory, Vec3};
use corrisar::rotation_estimation::{default_envelope, smooth_and_find_peaks, support_trace};
use corrisar::scenario::Scenario;
use corrisar::waveform::{synthesize_spectral, FrequencyGrid, Pulse};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layout = ArrayLayout::random_square(Vec3::zeros(), 3, 200e3, 15e3, 4)?;
    let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
    let rot = RotationParams::new(3.0 * PI / 4.0, PI / 3.0, 2.0 * PI / 5.0)?;
    let sc = Scenario::new(layout, traj, rot, Pulse::new(9.6e9, 311e6, 0.015, 700)?);
    let freqs = FrequencyGrid::band(&sc.pulse, 256, 3.5);
    let echoes = synthesize_spectral(&sc, &Scene::satellite(), &freqs)?;
    let cs = CorrelationSet::new(echoes, sc.center(0.0), sc.trajectory.v_t);

    let c01 = cs.cross(0, 1, 0)?;
    let energy: f64 = c01.iter().map(|z| z.norm_sqr()).sum();
    println!("pair (0, 1), first pulse: {} frequency samples, energy {energy:.3e}", c01.len());

    let auto = autocorrelation_envelopes(&cs.echoes, default_envelope(&sc))?;
    println!("autocorrelation envelopes: {} lags at {:.0} ps", auto.n_lags, auto.dlag * 1e12);
    for r in 0..sc.layout.len() {
        let mut trace = support_trace(&auto, r, 0.001)?;
        smooth_and_find_peaks(&mut trace, 100)?;
        let (lo, hi) = trace
            .smoothed
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let peaks: Vec<String> = trace.peaks.iter().map(|s| format!("{s:.2}")).collect();
        println!(
            "receiver {r}: support {:.3}–{:.3} ns, maxima at s = [{}] s",
            lo * 1e9,
            hi * 1e9,
            peaks.join(", ")
        );
    }
    Ok(())
}
