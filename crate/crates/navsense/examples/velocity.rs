//! Maximum-likelihood UE velocity from decoded navigation signals: nested
//! periodogram grids followed by particle-swarm refinement.

use leo_navsense::config::ScenarioConfig;
use leo_navsense::navigation::{mle_velocity, synthesize_decoded, VelocitySearch};
use leo_navsense::scenario::{build_scenario, Streams};
use leo_navsense::waveform::gen_nav_sequence;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::default();
    let s = build_scenario(&cfg, 5)?;
    let ue = s.ues[0];
    let window = cfg.window();
    let carrier = cfg.channel().carrier;
    let mut rng = Streams::new(5).get("decoded");

    for noise in [0.0, 0.3, 1.0] {
        let links = s
            .satellites
            .iter()
            .enumerate()
            .map(|(k, sat)| {
                let sig = gen_nav_sequence(cfg.seed, cfg.waveform.code_length, 0, k, cfg.chip_rate())?;
                synthesize_decoded(&sig, &window, sat, &ue, carrier, Complex64::from_polar(1.0, 0.7 * k as f64), noise, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let est = mle_velocity(&links, &window, &ue.position, carrier, &VelocitySearch::default())?;
        println!(
            "noise std {noise:.1}: true {:?}, estimate {:?}, error {:.3} m/s, {} cost evaluations",
            ue.velocity.map(|v| (v * 100.0).round() / 100.0).as_slice(),
            est.velocity.map(|v| (v * 100.0).round() / 100.0).as_slice(),
            (est.velocity - ue.velocity).norm(),
            est.evaluations
        );
    }
    Ok(())
}
