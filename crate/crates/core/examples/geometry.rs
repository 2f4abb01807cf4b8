//! Receiver layout, target motion and the bistatic travel-time model.

use corrisar::geometry::{
    doppler_factor, linearized_reduced_travel_time, reduced_travel_time, scatterer_position, ArrayLayout,
    RotationParams, Trajectory, Vec3,
};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layout = ArrayLayout::random_square(Vec3::zeros(), 15, 200e3, 15e3, 1)?;
    let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
    let rot = RotationParams::new(3.0 * PI / 4.0, PI / 3.0, 2.0 * PI / 5.0)?;
    println!("{} receivers, centroid {:?}", layout.len(), layout.centroid().as_slice());
    println!("rotation axis {:?}, period {:.3} s", rot.axis().as_slice(), rot.period());

    let offset = Vec3::new(0.1, 0.05, 0.0);
    for s in [0.0, 1.25, 2.5] {
        let x = scatterer_position(s, &traj, &rot, &offset);
        let gamma = doppler_factor(&x, &layout, 0, &traj.v_t)?;
        let dt = reduced_travel_time(s, &traj, &rot, &offset, &layout, 0)?;
        let lin = linearized_reduced_travel_time(s, &traj, &rot, &offset, &layout, 0)?;
        println!(
            "s = {s:4.2} s: 1 - γ = {:.3e}, reduced delay {:+.4e} s (far field {:+.4e} s)",
            1.0 - gamma,
            dt,
            lin
        );
    }
    Ok(())
}
