//! Pseudo-range positioning on a desk scene: Bancroft start, elevation
//! weighted least squares, and its Monte Carlo RMSE against equal weights.
//!
//! cargo run --release --example positioning -- [seed]

use leo_navsense::config::ScenarioConfig;
use leo_navsense::harness::pseudorange_rmse;
use leo_navsense::navigation::{bancroft_init, build_weighting, simulate_pseudoranges, wls_solve};
use leo_navsense::scenario::{build_scenario, Streams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = ScenarioConfig::default();
    let s = build_scenario(&cfg, seed)?;
    let ue = &s.ues[0];
    let elev: Vec<String> = s.elevations[0].iter().map(|e| format!("{:.1}", e.to_degrees())).collect();
    println!("scene {}: {} satellites, elevations [{}] deg", s.hash, s.satellites.len(), elev.join(", "));

    let mut rng = Streams::new(seed).get("pseudorange");
    let phi = build_weighting(&s.elevations[0])?;

    let clean = simulate_pseudoranges(&s.satellites, ue, &mut rng, 0.0);
    let (start, _) = bancroft_init(&s.satellites, &clean)?;
    let fix = wls_solve(&s.satellites, &clean, start, &phi, 10, 1e-6)?;
    println!("noiseless: Bancroft error {:.2e} m, WLS error {:.2e} m", (start - ue.position).norm(), (fix.position - ue.position).norm());

    let sigma = cfg.scenario.pseudorange_sigma_m;
    let noisy = simulate_pseudoranges(&s.satellites, ue, &mut rng, sigma);
    let (start, _) = bancroft_init(&s.satellites, &noisy)?;
    let fix = wls_solve(&s.satellites, &noisy, start, &phi, 10, 1e-6)?;
    println!(
        "sigma {sigma} m: error {:.2} m, clock error {:.2} ns, {} iterations",
        (fix.position - ue.position).norm(),
        (fix.clock - ue.clock_error).abs() * 1e9,
        fix.iterations
    );

    let wls = pseudorange_rmse(&s, sigma, true, 500, &mut rng)?;
    let ls = pseudorange_rmse(&s, sigma, false, 500, &mut rng)?;
    println!("500 trials per UE: WLS RMSE {wls:.2} m, LS RMSE {ls:.2} m");
    Ok(())
}
