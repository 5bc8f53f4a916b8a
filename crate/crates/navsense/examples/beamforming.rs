//! Joint navigation and sensing beamforming (Algorithm 1) on one desk scene.
//!
//! cargo run --release --example beamforming -- [seed]

use leo_navsense::config::ScenarioConfig;
use leo_navsense::harness::solve;
use leo_navsense::scenario::build_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = ScenarioConfig::default();
    let s = build_scenario(&cfg, seed)?;
    println!(
        "scene {}: K = {}, M = {}, N = {}, eta = {} dB, P = {} dBm",
        s.hash,
        s.satellites.len(),
        s.ues.len(),
        cfg.upa().elements(),
        cfg.optimizer.sainr_threshold_db,
        cfg.optimizer.max_transmit_power_dbm
    );

    let sol = solve(&cfg, &s)?;
    println!("iter  weighted error   penalized");
    for (i, (f, p)) in sol.trace.iter().zip(&sol.penalized_trace).enumerate() {
        println!("{i:>4}  {f:>14.6e}  {p:>10.6}");
    }
    println!(
        "converged {} after {} iterations, rank residual {:.2e}, penalty {:.1}",
        sol.converged, sol.iterations, sol.rank_residual, sol.penalty
    );
    println!("SAINR {:.3} dB", 10.0 * sol.sainr.log10());
    for (k, p) in sol.powers.iter().enumerate() {
        println!("satellite {k}: {:.2} dBm", 10.0 * (p * 1e3).log10());
    }
    for (m, e) in sol.errors.iter().enumerate() {
        println!("UE {m}: {:.1} m, {:.2} ns, {:.2} m/s rms", e.position.sqrt(), e.timing.sqrt() * 1e9, e.velocity.sqrt());
    }
    Ok(())
}
