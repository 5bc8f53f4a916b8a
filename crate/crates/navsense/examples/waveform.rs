//! Navigation codes and the sampled baseband signal: Gold-code correlation,
//! raised-cosine shaping and the Doppler shift seen by a moving UE.

use leo_navsense::geometry::Vec3;
use leo_navsense::waveform::{correlation, doppler_shift, gen_nav_sequence, gold_code, sample_signal, SamplingWindow};

fn main() -> leo_navsense::error::Result<()> {
    let (a, b) = (gold_code(3), gold_code(40));
    let peak = correlation(&a, &a, 0);
    let cross = (0..a.len()).map(|l| correlation(&a, &b, l).abs()).fold(0.0, f64::max);
    let side = (1..a.len()).map(|l| correlation(&a, &a, l).abs()).fold(0.0, f64::max);
    println!("gold codes: peak {peak:.3}, worst sidelobe {side:.4}, worst cross {cross:.4} (bound 65/1023 = {:.4})", 65.0 / 1023.0);

    let sig = gen_nav_sequence(7, 1023, 0, 2, 10e6)?;
    let window = SamplingWindow::default();
    println!(
        "signal: {} chips at {} Mcps, period {:.1} us, bandwidth {:.1} MHz, power {:.4}",
        sig.chips.len(),
        sig.chip_rate / 1e6,
        sig.period() * 1e6,
        sig.bandwidth / 1e6,
        sig.mean_power()
    );

    let q = Vec3::new(6_928e3, 0.0, 0.0);
    let eta = Vec3::new(0.0, 7.6e3, 0.0);
    let p = Vec3::new(6_371e3, 300e3, 0.0);
    for gamma in [Vec3::zeros(), Vec3::new(0.0, 30.0, 0.0)] {
        let f = doppler_shift(&eta, &gamma, &q, &p, 35e9, 3e8);
        println!("UE velocity {:>5.1} m/s along y: Doppler {:>12.3} Hz", gamma.y, f);
    }

    let x = sample_signal(&sig, &window, 1.5e-6, 2e3)?;
    println!(
        "window: {} samples over {:.2} ms, sample energy {:.4}",
        window.len(),
        window.duration * 1e3,
        x.norm_squared() / window.len() as f64
    );
    Ok(())
}
