//! Recovers the rotation axis and rate from noiseless echoes.
//!
//! Usage: `cargo run --release --example estimate_rotation [pulses]`

use corrisar::correlation::CorrelationSet;
use corrisar::geometry::{ArrayLayout, RotationParams, Scene, Trajectory, Vec3};
use corrisar::rotation_estimation::{estimate_rotation, EstimationOptions};
use corrisar::scenario::Scenario;
use corrisar::waveform::{synthesize_spectral, FrequencyGrid, Pulse};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pulses = std::env::args().nth(1).map_or(Ok(1000), |s| s.parse())?;
    let layout = ArrayLayout::random_square(Vec3::zeros(), 15, 200e3, 15e3, 1)?;
    let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
    let truth = RotationParams::new(3.0 * PI / 4.0, PI / 3.0, 2.0 * PI / 5.0)?;
    let sc = Scenario::new(layout, traj, truth, Pulse::new(9.6e9, 311e6, 0.015, pulses)?);
    let freqs = FrequencyGrid::band(&sc.pulse, 256, 3.5);
    let cs = CorrelationSet::new(
        synthesize_spectral(&sc, &Scene::satellite(), &freqs)?,
        sc.center(0.0),
        sc.trajectory.v_t,
    );
    let est = estimate_rotation(&cs, &sc, &EstimationOptions::default())?;
    let err = est.relative_errors(&truth);
    println!("{} support maxima, rate guess {:.4} rad/s", est.data.len(), est.omega_guess);
    println!("truth     θ {:.4}  φ {:.4}  ω {:.4}", truth.theta_rot, truth.phi_rot, truth.omega_r);
    println!("estimate  θ {:.4}  φ {:.4}  ω {:.4}", est.theta_hat, est.phi_hat, est.omega_hat);
    println!("relative errors {:.2e} {:.2e} {:.2e}", err[0], err[1], err[2]);
    for w in &est.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
