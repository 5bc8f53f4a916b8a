//! Compares Algorithm 1 with the ZFBF, UWR, LS-weighting and
//! navigation-only designs on one desk-scale scene.
//!
//! cargo run --release --example baselines -- [seed]

use leo_navsense::config::ScenarioConfig;
use leo_navsense::harness::run_baselines;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = ScenarioConfig::default();
    let report = run_baselines(&cfg, seed)?;
    println!("scene {} seed {}", report.hash, report.seed);
    println!("{:<16} {:>12} {:>12} {:>12} {:>12} {:>9} {:>10}", "method", "weighted", "E^P m2", "E^T s2", "E^V m2/s2", "SAINR dB", "RMSE m");
    for r in &report.rows {
        let rmse = r.position_rmse.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<16} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>9.3} {:>10}",
            r.method, r.objective, r.position, r.timing, r.velocity, r.sainr_db, rmse
        );
    }
    Ok(())
}
