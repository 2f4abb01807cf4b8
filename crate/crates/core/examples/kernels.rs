//! Closed-form resolution kernels: the array term, the rotation-averaged
//! effective kernel and the Bessel limit.

use corrisar::geometry::RotationParams;
use corrisar::resolution_analysis::{
    bessel_j0, first_zero, kernel_array, kernel_effective, kernel_rotation_bessel, profile_fwhm, KernelParams,
};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = KernelParams { aperture: 200e3, height: 485e3 };
    let omega = 2.0 * PI * 9.6e9;
    let xs: Vec<f64> = (0..=800).map(|i| -0.2 + 0.0005 * i as f64).collect();
    let fwhm = |f: &dyn Fn(f64) -> f64| profile_fwhm(&xs, &xs.iter().map(|&x| f(x)).collect::<Vec<_>>());

    println!("array resolution λH/a = {:.2} cm", p.array_resolution(omega) * 100.0);
    if let Some(z) = first_zero(|x| kernel_array([x, 0.0], omega, &p), 0.2, 2000) {
        println!("array kernel first zero {:.2} cm", z * 100.0);
    }
    println!("theta      FWHM x     FWHM y");
    for theta in [PI, 7.0 * PI / 8.0, 3.0 * PI / 4.0, 5.0 * PI / 8.0] {
        let rot = RotationParams::new(theta, 0.0, 2.0 * PI / 5.0)?;
        let span = rot.period();
        let wx = fwhm(&|x| kernel_effective([x, 0.0], omega, &p, &rot, span));
        let wy = fwhm(&|y| kernel_effective([0.0, y], omega, &p, &rot, span));
        let mm = |w: Option<f64>| w.map_or("-".into(), |w| format!("{:.1} mm", w * 1e3));
        println!("{:.3}  {:>9}  {:>9}", theta, mm(wx), mm(wy));
    }
    let b = |r: f64| kernel_rotation_bessel(r, omega, 3.0 * PI / 4.0);
    if let Some(z) = first_zero(b, 0.05, 2000) {
        println!("Bessel kernel first zero {:.2} mm, J₀(2.4048) = {:.1e}", z * 1e3, bessel_j0(2.404_825_557_695_773));
    }
    Ok(())
}
