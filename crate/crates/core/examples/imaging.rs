//! Two-point migration of the correlations and the three image types.
//!
//! Usage: `cargo run --release --example imaging [pulses]`

use corrisar::correlation::CorrelationSet;
use corrisar::eigen::EigenOptions;
use corrisar::geometry::{ArrayLayout, RotationParams, Scene, Trajectory, Vec3};
use corrisar::migration::{
    count_true_peaks, image_kirchhoff, local_maxima, image_rank1, image_single_point, migrate_two_point, narrowest_spot_width,
    spot_width, ImageGrid,
};
use corrisar::scenario::Scenario;
use corrisar::waveform::{synthesize_spectral, FrequencyGrid, Pulse};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pulses = std::env::args().nth(1).map_or(Ok(1000), |s| s.parse())?;
    let layout = ArrayLayout::random_square(Vec3::zeros(), 15, 200e3, 15e3, 1)?;
    let traj = Trajectory::new(Vec3::new(0.0, 0.0, 500e3), Vec3::new(7600.0, 0.0, 0.0));
    let rot = RotationParams::new(3.0 * PI / 4.0, PI / 3.0, 2.0 * PI / 5.0)?;
    let sc = Scenario::new(layout, traj, rot, Pulse::new(9.6e9, 311e6, 0.015, pulses)?);
    let truth = [(0.0, 0.0), (0.1, -0.06)];
    let freqs = FrequencyGrid::band(&sc.pulse, 8, 1.0);
    let echoes = synthesize_spectral(&sc, &Scene::planar(&truth), &freqs)?;
    let cs = CorrelationSet::new(echoes.clone(), sc.center(0.0), sc.trajectory.v_t);

    let grid = ImageGrid::new(0.005, 0.14)?;
    let x = migrate_two_point(&cs, &sc, &rot, &grid)?;
    println!("interference matrix {0} × {0}, hermitian defect {1:.1e}", grid.len(), x.hermitian_defect());

    let (rank1, top) = image_rank1(&x, &EigenOptions::default())?;
    let images = [rank1, image_single_point(&x)?, image_kirchhoff(&echoes, &sc, &rot, &grid)?];
    println!("top eigenvalue {:.3e}", top.pair.value);
    for img in &images {
        let (x0, y0) = truth[0];
        let mm = |w: Result<f64, _>| w.map_or("n/a".to_string(), |w: f64| format!("{:.1} mm", w * 1e3));
        println!(
            "{:>12}: {}/{} targets resolved, FWHM {}, narrowest {}",
            img.kind.name(),
            count_true_peaks(img, &truth),
            truth.len(),
            mm(spot_width(img, x0, y0)),
            mm(narrowest_spot_width(img, x0, y0, 8))
        );
        let top: Vec<String> = local_maxima(img, 0.2)
            .iter()
            .take(3)
            .map(|p| format!("({:+.3}, {:+.3}) {:.2}", p.0, p.1, p.2))
            .collect();
        println!("{:>12}  strongest maxima {}", "", top.join(", "));
    }
    let path = std::env::temp_dir().join("rank1.pgm");
    images[0].write_pgm(std::fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
