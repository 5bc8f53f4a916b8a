//! Cramer-Rao bounds for one UE under the matched starting beams: delay and
//! Doppler FIM, the effective delay FIM and the position, timing and
//! velocity error bounds.

use leo_navsense::config::ScenarioConfig;
use leo_navsense::fim::{effective_fim, pvt_covariance, pvt_errors};
use leo_navsense::optimizer::initial_beams;
use leo_navsense::scenario::build_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::default();
    let s = build_scenario(&cfg, 2)?;
    let oc = cfg.optimizer();
    let (w, navs) = initial_beams(&s.scene, &oc)?;

    for (m, (ue, v)) in s.scene.ues.iter().zip(&navs).enumerate() {
        let bundle = ue.fim(&w, v)?;
        let fe = effective_fim(&bundle)?;
        let delay_std: Vec<String> = (0..fe.nrows()).map(|i| format!("{:.2}", 3e8 / fe[(i, i)].sqrt())).collect();
        let e = pvt_errors(&bundle, &ue.jacobian, &oc.weights)?;
        let cov = pvt_covariance(&bundle, &ue.jacobian)?;
        println!("UE {m}: noise + sensing leakage {:.3e} W", bundle.noise);
        println!("  per-link range std (m)  [{}]", delay_std.join(", "));
        println!("  E^P {:.4e} m^2  ({:.1} m rms)", e.position, e.position.sqrt());
        println!("  E^T {:.4e} s^2  ({:.2} ns rms)", e.timing, e.timing.sqrt() * 1e9);
        println!("  E^V {:.4e} m^2/s^2  ({:.2} m/s rms)", e.velocity, e.velocity.sqrt());
        println!("  weighted {:.4e}, position/clock correlation {:.3}", e.weighted, cov[(0, 3)] / (cov[(0, 0)] * cov[(3, 3)]).sqrt());
    }
    Ok(())
}
