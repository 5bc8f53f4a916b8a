//! Walker Delta snapshot, service-group selection and the look angles the
//! beams are steered along.

use leo_navsense::geometry::{
    generate_walker, ground_point, local_frame, look_angles, select_service_group, transmit_steering, ue_elevation,
    UpaConfig, WalkerConfig,
};

fn main() -> leo_navsense::error::Result<()> {
    let walker = WalkerConfig::default();
    let sats = generate_walker(&walker, 0.0)?;
    println!(
        "{} satellites in {} planes, {} per plane, orbit radius {:.1} km",
        sats.len(),
        walker.planes,
        walker.per_plane(),
        walker.orbit_radius() / 1e3
    );

    // Sensing area over Chengdu.
    let area = ground_point(30.66f64.to_radians(), 104.06f64.to_radians());
    let group = select_service_group(&sats, &area, 5, 20f64.to_radians())?;
    let upa = UpaConfig::half_wavelength(4, 4, 35e9, 3e8);

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "sat", "elev deg", "range km", "theta deg", "phi deg");
    for &i in &group {
        let s = &sats[i];
        let frame = local_frame(s)?;
        let ang = look_angles(&frame, &s.position, &area)?;
        let a = transmit_steering(&upa, ang.theta, ang.phi);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        println!(
            "{:>6} {:>10.2} {:>10.1} {:>10.3} {:>10.2}",
            i,
            ue_elevation(&area, &s.position).angle.to_degrees(),
            (s.position - area).norm() / 1e3,
            ang.theta.to_degrees(),
            ang.phi.to_degrees()
        );
    }
    Ok(())
}
