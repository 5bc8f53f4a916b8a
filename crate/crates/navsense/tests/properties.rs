use leo_navsense::channel::{array_gain, ChannelParams};
use leo_navsense::config::ScenarioConfig;
use leo_navsense::fim::{block_selector, stack};
use leo_navsense::geometry::{
    local_frame, look_angles, transmit_steering, ue_elevation, CMatrix, CVector, SatelliteState, UpaConfig, Vec3,
};
use leo_navsense::optimizer::{leading_eigenvector, lifted_entry, sca_linearize};
use leo_navsense::sensing::{Ambiguity, SensingScene};
use nalgebra::{Rotation3, Unit};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cvec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
}

fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMatrix {
    (0..rank).fold(CMatrix::zeros(n, n), |acc, _| {
        let x = cvec(rng, n);
        acc + &x * x.adjoint()
    })
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn satellite() -> impl Strategy<Value = SatelliteState> {
    (vec3(), vec3(), 6.9e6..7.5e6f64)
        .prop_filter("non-degenerate", |(p, v, _)| p.norm() > 0.1 && v.cross(p).norm() > 0.05 * v.norm() * p.norm())
        .prop_map(|(p, v, r)| SatelliteState { position: p.normalize() * r, velocity: v.normalize() * 7.6e3, clock_bias: 0.0 })
}

fn sensing_scene(rng: &mut ChaCha8Rng, n: usize, k: usize, ambiguities: usize) -> SensingScene {
    SensingScene {
        receive: cvec(rng, n).normalize(),
        echo: (0..k).map(|_| cvec(rng, n)).collect(),
        beta: Complex64::new(rng.gen::<f64>() + 0.1, rng.gen::<f64>()),
        ambiguities: (0..ambiguities)
            .map(|i| Ambiguity {
                satellite: i % k,
                receive: cvec(rng, n).normalize(),
                transmit: cvec(rng, n).normalize(),
                gain: Complex64::new(rng.gen::<f64>(), rng.gen::<f64>()),
            })
            .collect(),
        noise: 0.01 + rng.gen::<f64>(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_vectors_have_unit_norm(nx in 1usize..6, ny in 1usize..6, theta in 0.0..1.5f64, phi in -3.2..3.2f64) {
        let upa = UpaConfig::half_wavelength(nx, ny, 35e9, 3e8);
        prop_assert!((transmit_steering(&upa, theta, phi).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_frames_are_right_handed_and_orthonormal(sat in satellite()) {
        let f = local_frame(&sat).unwrap();
        for (a, b) in [(f.x, f.y), (f.y, f.z), (f.x, f.z)] {
            prop_assert!(a.dot(&b).abs() < 1e-12);
        }
        for a in [f.x, f.y, f.z] {
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!((f.x.cross(&f.y) - f.z).norm() < 1e-12);
    }

    #[test]
    fn look_angles_survive_a_common_rotation(sat in satellite(), axis in vec3(), angle in -3.0..3.0f64, off in vec3()) {
        prop_assume!(axis.norm() > 0.1);
        let target = sat.position.normalize() * 6.371e6 + off * 2e5;
        let frame = local_frame(&sat).unwrap();
        let Ok(a) = look_angles(&frame, &sat.position, &target) else { return Ok(()); };
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        let moved = SatelliteState { position: rot * sat.position, velocity: rot * sat.velocity, clock_bias: 0.0 };
        let b = look_angles(&local_frame(&moved).unwrap(), &moved.position, &(rot * target)).unwrap();
        prop_assert!((a.theta - b.theta).abs() < 1e-9);
    }

    #[test]
    fn elevation_stays_in_range(p in vec3(), q in vec3()) {
        prop_assume!(p.norm() > 0.1 && (q - p).norm() > 0.1);
        let e = ue_elevation(&(p * 6.4e6), &(q * 7e6));
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&e.angle));
    }

    #[test]
    fn array_gain_peaks_at_boresight(eps in 0.0..0.2f64) {
        let c = ChannelParams::default();
        prop_assert!(array_gain(eps, c.b_max, c.eps_3db) <= c.b_max * (1.0 + 1e-12));
    }

    #[test]
    fn selectors_partition_the_stack(seed in any::<u64>(), n in 1usize..5, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = cvec(&mut rng, n * k);
        let total: f64 = (0..k)
            .map(|i| (block_selector(i, n, k).map(|v| Complex64::new(v, 0.0)) * &x).norm_squared())
            .sum();
        prop_assert!((total - x.norm_squared()).abs() < 1e-12 * x.norm_squared().max(1.0));
        let blocks: Vec<CVector> = (0..k).map(|i| x.rows(i * n, n).into_owned()).collect();
        prop_assert_eq!(stack(&blocks), x);
    }

    #[test]
    fn rank_residual_sandwich_and_extraction_bound(seed in any::<u64>(), n in 2usize..7, rank in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = psd(&mut rng, n, rank);
        let (lmax, u) = leading_eigenvector(&w, None);
        let tr = w.trace().re;
        let probe = cvec(&mut rng, n).normalize();
        let rayleigh = probe.dotc(&(&w * &probe)).re;
        let scale = 1e-10 * tr;
        prop_assert!(tr - rayleigh >= tr - lmax - scale);
        prop_assert!(tr - lmax >= -scale);
        let rebuilt = &u * u.adjoint() * Complex64::new(lmax, 0.0);
        let bound = (2.0 * tr * (tr - lmax).max(0.0)).sqrt();
        prop_assert!((rebuilt - &w).norm() <= bound + 1e-9 * tr);
    }

    #[test]
    fn sainr_constraint_is_additive_in_w(seed in any::<u64>(), n in 1usize..5, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sensing_scene(&mut rng, n, k, 2);
        let r = psd(&mut rng, n, 2);
        let (w1, w2) = (psd(&mut rng, n * k, 1), psd(&mut rng, n * k, 2));
        let sum = s.max_sainr_lifted(&r, &(&w1 + &w2)).unwrap();
        let parts = s.max_sainr_lifted(&r, &w1).unwrap() + s.max_sainr_lifted(&r, &w2).unwrap();
        prop_assert!((sum - parts).abs() <= 1e-10 * sum.abs().max(1e-300));
    }

    #[test]
    fn linearization_touches_and_bounds_from_below(seed in any::<u64>(), n in 1usize..6, t in 0.0..3.0f64) {
        // 2 tr(VA) / (s + tr(WB)) is convex in tr(WB) for tr(VA) >= 0, so the
        // tangent plane is a global under-estimator along W.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (psd(&mut rng, n, 2), psd(&mut rng, n, 1));
        let (w0, v0) = (psd(&mut rng, n, 1), psd(&mut rng, n, 1));
        let lin = sca_linearize(&a, &b, 0.5, &w0, &v0).unwrap();
        let exact0 = lifted_entry(&a, &b, 0.5, &w0, &v0);
        prop_assert!((lin.evaluate(&w0, &v0) - exact0).abs() <= 1e-12 * exact0);
        let w = &w0 * Complex64::new(t, 0.0);
        prop_assert!(lin.evaluate(&w, &v0) <= lifted_entry(&a, &b, 0.5, &w, &v0) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn config_round_trips_through_toml(seed in 0..=i64::MAX as u64, p in 10.0..40.0f64, eta in 0.0..20.0f64, m in 1usize..6) {
        let mut c = ScenarioConfig { seed, ..Default::default() };
        c.optimizer.max_transmit_power_dbm = p;
        c.optimizer.sainr_threshold_db = eta;
        c.scenario.ues = m;
        prop_assert_eq!(ScenarioConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }
}
