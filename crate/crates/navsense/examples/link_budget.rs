//! Ka-band navigation link budget: noise floor, array pattern and the
//! downlink amplitude over a range of slant distances.

use leo_navsense::channel::{array_gain, nav_channel_gain, sensing_round_trip_gain, ChannelParams};
use num_complex::Complex64;

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn main() {
    let p = ChannelParams::default();
    println!("noise power {:.3e} W ({:.2} dBm)", p.noise_power(), db(p.noise_power()) + 30.0);
    println!("wavelength  {:.3} mm", p.wavelength() * 1e3);

    println!("\narray pattern, b_max = {:.1} dBi, 3 dB angle {:.2} deg", db(p.b_max), p.eps_3db.to_degrees());
    for deg in [0.0, 0.1, 0.2, 0.4, 0.8, 1.5, 3.0] {
        let g = array_gain(f64::to_radians(deg), p.b_max, p.eps_3db);
        println!("  {deg:>4.1} deg  {:>8.2} dBi", db(g.max(1e-30)));
    }

    println!("\nslant range   |alpha|^2 dB   SNR at 1 W dB   round trip dB");
    for km in [550.0, 700.0, 900.0, 1200.0] {
        let d = km * 1e3;
        let a = nav_channel_gain(&p, d, 0.0, Complex64::new(1.0, 0.0));
        let rt = sensing_round_trip_gain(&p, d, 550e3);
        println!(
            "  {km:>7.0} km   {:>12.2}   {:>13.2}   {:>13.2}",
            db(a.norm_sqr()),
            db(a.norm_sqr() / p.noise_power()),
            db(rt.norm_sqr())
        );
    }
}
