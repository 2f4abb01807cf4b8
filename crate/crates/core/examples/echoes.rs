//! Echo synthesis in the frequency and time domains, with and without noise.

use corrisar::geometry::{ArrayLayout, RotationParams, Scene, Trajectory, Vec3};
use corrisar::scenario::Scenario;
use corrisar::waveform::{add_noise_spectral, synthesize_spectral, synthesize_time, DopplerModel, FrequencyGrid, Pulse};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layout = ArrayLayout::random_square(Vec3::zeros(), 4, 200e3, 15e3, 2)?;
    let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
    let rot = RotationParams::new(3.0 * PI / 4.0, PI / 3.0, 2.0 * PI / 5.0)?;
    let pulse = Pulse::new(9.6e9, 311e6, 0.015, 8)?;
    println!(
        "carrier {:.1} GHz, wavelength {:.2} cm, pulse width σ = {:.3} ns",
        pulse.carrier_hz / 1e9,
        pulse.wavelength() * 100.0,
        pulse.sigma_t() * 1e9
    );
    let sc = Scenario::new(layout, traj, rot, pulse);
    let scene = Scene::satellite();

    let freqs = FrequencyGrid::band(&sc.pulse, 64, 3.5);
    let clean = synthesize_spectral(&sc, &scene, &freqs)?;
    let noisy = add_noise_spectral(&clean, &sc.pulse, 0.0, 7)?;
    println!("spectral echoes: {} pulses × {} frequencies", clean.n_pulses(), clean.n_freqs());
    println!("power clean {:.3e}, with 0 dB noise {:.3e}", clean.power(), noisy.power());

    // the time-domain route needs a lower carrier to stay sampled
    let low = Scenario::new(
        sc.layout.clone(),
        sc.trajectory,
        sc.rotation,
        Pulse::new(1.2e9, 311e6, 0.015, 2)?.with_sampling(16e9, 30e-9),
    );
    let te = synthesize_time(&low, &scene, DopplerModel::Effective)?;
    let trace = te.trace(0, 0);
    let peak = trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("time echo: {} samples at {:.1} ps, peak {:.3e}", trace.len(), te.grid.dt * 1e12, peak);
    Ok(())
}
