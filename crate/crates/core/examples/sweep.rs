//! Configuration-driven runs: a preset, a TOML override and a parameter sweep.

use corrisar::config::ScenarioConfig;
use corrisar::harness::{sweep, Goal, SweepOptions, SweepParam};

const OVERRIDE: &str = r#"
[scene]
kind = "single"

[estimation]
enabled = false

[imaging]
pulses = 120
frequencies = 4
spacing = 0.008
half_extent = 0.08
images = ["rank1", "single_point"]
eigenvalues = 4
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::preset("desk")?;
    let file: ScenarioConfig = ScenarioConfig::from_toml(OVERRIDE)?;
    cfg.scene = file.scene;
    cfg.estimation = file.estimation;
    cfg.imaging = file.imaging;
    cfg.validate()?;

    let out = std::env::temp_dir().join("corrisar-sweep");
    let opts = SweepOptions {
        goal: Goal::Image,
        workers: 2,
        out: Some(out.clone()),
        stage_cache: None,
    };
    let values = [std::f64::consts::PI, 0.875 * std::f64::consts::PI, 0.75 * std::f64::consts::PI];
    for entry in sweep(&cfg, SweepParam::ThetaRot, &values, &opts)? {
        let r = entry.result?;
        let widths: Vec<String> = r
            .images
            .iter()
            .map(|m| format!("{} {:.1} mm", m.kind.name(), m.mean_width().unwrap_or(f64::NAN) * 1e3))
            .collect();
        println!("θ = {:.3}: {}, λ₂/λ₁ {:.3}", entry.value, widths.join(", "), r.eigen_ratio().unwrap_or(f64::NAN));
    }
    println!("wrote {}", out.join("sweep_theta_rot.csv").display());
    Ok(())
}
