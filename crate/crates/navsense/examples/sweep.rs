//! Sweeps one config field and prints the mean weighted PVT error per value.
//!
//! cargo run --release --example sweep -- optimizer.max_transmit_power_dbm 20,25,30 [seeds]

use leo_navsense::config::ScenarioConfig;
use leo_navsense::harness::sweep;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let param = args.next().unwrap_or_else(|| "optimizer.max_transmit_power_dbm".into());
    let values: Vec<f64> = args
        .next()
        .unwrap_or_else(|| "20,25,30".into())
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    let seeds = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);

    let cfg = ScenarioConfig::default();
    let points = sweep(&cfg, &param, &values, seeds)?;
    println!("{param} over {seeds} seeds");
    println!("{:>10} {:>14} {:>12} {:>10} {:>10} {:>5}", "value", "weighted", "stderr", "log10", "SAINR dB", "fail");
    for p in &points {
        println!(
            "{:>10} {:>14.5e} {:>12.3e} {:>10.4} {:>10.3} {:>5}",
            p.value,
            p.weighted.mean,
            p.weighted.stderr,
            p.log_weighted.mean,
            p.sainr_db.mean,
            p.failures.len()
        );
        for f in &p.failures {
            println!("    {f}");
        }
    }
    Ok(())
}
