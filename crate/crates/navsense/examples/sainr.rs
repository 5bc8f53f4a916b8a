//! Sensing receive chain at the central satellite: MVDR weights, the
//! closed-form SAINR and the loss of a uniformly weighted receiver.

use leo_navsense::config::ScenarioConfig;
use leo_navsense::geometry::CVector;
use leo_navsense::optimizer::initial_beams;
use leo_navsense::scenario::build_scenario;
use leo_navsense::sensing::uniform_receiver;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    println!("{:>5} {:>12} {:>12} {:>12} {:>14}", "seed", "closed dB", "MVDR dB", "UWR dB", "best random dB");
    for seed in 0..5 {
        let s = build_scenario(&cfg, seed)?;
        let sense = &s.scene.sensing;
        let (w, navs) = initial_beams(&s.scene, &cfg.optimizer())?;
        let r = sense.interference(&w, &navs);
        let z = sense.mvdr(&r, &w)?;
        let n = sense.antennas();
        let best_random = (0..1000)
            .map(|_| {
                let z = CVector::from_fn(n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
                sense.sainr(&r, &z, &w)
            })
            .fold(0.0, f64::max);
        println!(
            "{seed:>5} {:>12.4} {:>12.4} {:>12.4} {:>14.4}",
            db(sense.max_sainr(&r, &w)?),
            db(sense.sainr(&r, &z, &w)),
            db(sense.sainr(&r, &uniform_receiver(n), &w)),
            db(best_random)
        );
    }
    Ok(())
}
