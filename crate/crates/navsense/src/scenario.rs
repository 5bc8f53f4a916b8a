//! Seeded scene construction: constellation snapshot, service group, UE and
//! sensing-area placement, and the channel/waveform models fed to the
//! optimizer.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::channel::{nav_channel_gain, rain_attenuation, sensing_round_trip_gain};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fim::{doppler_rows, waveform_grams, UeModel};
use crate::geometry::{
    cap_half_angle, generate_walker, local_frame, look_angles, select_service_group, transmit_steering, ue_elevation,
    CVector, SatelliteState, UeState, UpaConfig, Vec3,
};
use crate::navigation::{build_weighting, jacobian};
use crate::optimizer::Scene;
use crate::sensing::{Ambiguity, SensingScene};
use crate::waveform::{doppler_shift, gen_nav_sequence};

const MAX_DRAWS: usize = 20_000;

/// Independent random sub-streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    pub seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams { seed }
    }

    pub fn get(&self, name: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(name.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

/// Short digest of the configuration and seed, carried by every output.
/// The config's own `seed` field is ignored; `seed` is what builds the scene.
pub fn scenario_hash(cfg: &ScenarioConfig, seed: u64) -> String {
    let mut h = Sha256::new();
    let body = ScenarioConfig { seed: 0, ..cfg.clone() }.to_toml().expect("config without seed serializes");
    h.update(body.as_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A fully built scene plus the geometry it came from.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub hash: String,
    pub seed: u64,
    /// Service group; index 0 is the central satellite.
    pub satellites: Vec<SatelliteState>,
    pub area: Vec3,
    /// Ambiguity points per satellite.
    pub ambiguity_points: Vec<Vec<Vec3>>,
    pub ues: Vec<UeState>,
    /// Elevation (rad) of each group satellite seen from each UE.
    pub elevations: Vec<Vec<f64>>,
    /// Jacobians with equal weights, for the unweighted LS comparison.
    pub uniform_jacobians: Vec<DMatrix<f64>>,
    pub scene: Scene,
}

impl Scenario {
    pub fn central(&self) -> &SatelliteState {
        &self.satellites[0]
    }

    /// Scene whose UE Jacobians use equal weights.
    pub fn uniform_scene(&self) -> Scene {
        let mut s = self.scene.clone();
        for (ue, j) in s.ues.iter_mut().zip(&self.uniform_jacobians) {
            ue.jacobian = j.clone();
        }
        s
    }
}

/// Unit vector and two tangents around `axis`.
fn tangent_basis(axis: &Vec3) -> (Vec3, Vec3, Vec3) {
    let z = axis.normalize();
    let helper = if z.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let e = helper.cross(&z).normalize();
    let n = z.cross(&e);
    (z, e, n)
}

/// Point on the sphere of radius |center| at central angle `psi`, azimuth `az`.
fn offset_point(center: &Vec3, psi: f64, az: f64) -> Vec3 {
    let (z, e, n) = tangent_basis(center);
    (z * psi.cos() + (e * az.cos() + n * az.sin()) * psi.sin()) * center.norm()
}

fn steering_to(upa: &UpaConfig, sat: &SatelliteState, target: &Vec3) -> Result<(CVector, f64)> {
    let frame = local_frame(sat)?;
    let ang = look_angles(&frame, &sat.position, target)?;
    Ok((transmit_steering(upa, ang.theta, ang.phi), ang.theta))
}

fn place_area(
    cfg: &ScenarioConfig,
    constellation: &[SatelliteState],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec3, Vec<SatelliteState>)> {
    let sc = &cfg.scenario;
    let lo = sc.min_elevation_deg.to_radians();
    let hi = sc.max_elevation_deg.to_radians();
    let smax = sc.max_latitude_deg.to_radians().sin();
    let mut last = None;
    for _ in 0..MAX_DRAWS {
        let lat = rng.gen_range(-smax..=smax).asin();
        let lon = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let area = crate::geometry::ground_point(lat, lon);
        let group = match select_service_group(constellation, &area, sc.satellites, sc.service_mask_deg.to_radians()) {
            Ok(g) => g,
            Err(e) => {
                last = Some(e);
                continue;
            }
        };
        let el = ue_elevation(&area, &constellation[group[0]].position).angle;
        if el >= lo && el <= hi {
            return Ok((area, group.into_iter().map(|i| constellation[i]).collect()));
        }
    }
    Err(last.unwrap_or_else(|| Error::Geometry("no sensing area meets the central elevation range".into())))
}

fn place_ue(cfg: &ScenarioConfig, sats: &[SatelliteState], rng: &mut ChaCha8Rng) -> Result<UeState> {
    let sc = &cfg.scenario;
    let lo = sc.min_elevation_deg.to_radians();
    let hi = sc.max_elevation_deg.to_radians();
    let mask = sc.ue_mask_deg.to_radians();
    let q = sats[0].position;
    let psi_max = cap_half_angle(q.norm(), lo);
    let sub = q.normalize() * crate::consts::R_EARTH;
    for _ in 0..MAX_DRAWS {
        let psi = rng.gen_range(psi_max.cos()..=1.0).acos();
        let p = offset_point(&sub, psi, rng.gen_range(0.0..std::f64::consts::TAU));
        let el = ue_elevation(&p, &q).angle;
        if el < lo || el > hi {
            continue;
        }
        if sats.iter().any(|s| {
            let e = ue_elevation(&p, &s.position);
            e.below_horizon || e.angle < mask
        }) {
            continue;
        }
        let (_, east, north) = tangent_basis(&p);
        let heading = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = rng.gen_range(0.0..=sc.ue_max_speed);
        let clock = sc.ue_clock_error_us * 1e-6;
        return Ok(UeState {
            position: p,
            velocity: (east * heading.cos() + north * heading.sin()) * speed,
            clock_error: rng.gen_range(-clock..=clock),
            rx_gain: cfg.channel().rx_gain,
        });
    }
    Err(Error::Geometry(format!(
        "no UE position sees all {} satellites above {:.1} deg",
        sats.len(),
        sc.ue_mask_deg
    )))
}

/// Build the scene for `cfg` under master seed `seed`.
pub fn build_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.validate()?;
    let streams = Streams::new(seed);
    let mut placement = streams.get("placement");
    let mut rain = streams.get("rain");
    let mut reflect = streams.get("reflectivity");

    let sc = &cfg.scenario;
    let ch = cfg.channel();
    let upa = cfg.upa();
    let window = cfg.window();
    let c = ch.light_speed;

    let epoch = placement.gen_range(0.0..std::f64::consts::TAU);
    let constellation = generate_walker(&cfg.walker(), epoch)?;
    let (area, sats) = place_area(cfg, &constellation, &mut placement)?;
    let k = sats.len();

    let mut ues = Vec::with_capacity(sc.ues);
    for _ in 0..sc.ues {
        ues.push(place_ue(cfg, &sats, &mut placement)?);
    }
    let radius = sc.ambiguity_radius_km * 1e3 / crate::consts::R_EARTH;
    let ambiguity_points: Vec<Vec<Vec3>> = (0..k)
        .map(|_| {
            (0..sc.ambiguity_areas)
                .map(|_| {
                    let psi = radius * placement.gen_range(0.0..=1.0f64).sqrt();
                    offset_point(&area, psi, placement.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect()
        })
        .collect();

    let mut models = Vec::with_capacity(ues.len());
    let mut elevations = Vec::with_capacity(ues.len());
    let mut uniform_jacobians = Vec::with_capacity(ues.len());
    for (m, ue) in ues.iter().enumerate() {
        let mut channels = Vec::with_capacity(k);
        let mut signals = Vec::with_capacity(k);
        let mut delays = Vec::with_capacity(k);
        let mut dopplers = Vec::with_capacity(k);
        let mut los = Vec::with_capacity(k);
        let mut elev = Vec::with_capacity(k);
        for (i, s) in sats.iter().enumerate() {
            let (a_t, theta) = steering_to(&upa, s, &ue.position)?;
            let d = (s.position - ue.position).norm();
            let chi = rain_attenuation(&mut rain, ch.rain_mean_db, ch.rain_var_db);
            let alpha = nav_channel_gain(&ch, d, cfg.channel.boresight.angle(theta), chi);
            channels.push(a_t * alpha.conj());
            let sig = gen_nav_sequence(seed, cfg.waveform.code_length, m, i, cfg.chip_rate())?;
            delays.push((d / c + ue.clock_error - s.clock_bias).rem_euclid(sig.period()));
            dopplers.push(doppler_shift(&s.velocity, &ue.velocity, &s.position, &ue.position, ch.carrier, c));
            signals.push(sig);
            los.push((s.position - ue.position).normalize());
            elev.push(ue_elevation(&ue.position, &s.position).angle);
        }
        let grams = waveform_grams(&signals, &delays, &dopplers, &window)?;
        let phi = build_weighting(&elev)?;
        models.push(UeModel {
            channels,
            grams,
            doppler_rows: doppler_rows(&los, ch.carrier, c),
            jacobian: jacobian(&sats, &ue.position, &phi)?,
            noise: ch.noise_power(),
        });
        uniform_jacobians.push(jacobian(&sats, &ue.position, &DMatrix::identity(k, k))?);
        elevations.push(elev);
    }

    let processing = 10f64.powf(sc.sensing_processing_gain_db / 20.0);
    let suppression = 10f64.powf(-sc.ambiguity_suppression_db / 20.0);
    let central = sats[0];
    let (receive, _) = steering_to(&upa, &central, &area)?;
    let d_rx = (central.position - area).norm();
    let mut echo = Vec::with_capacity(k);
    let mut ambiguities = Vec::new();
    for (i, s) in sats.iter().enumerate() {
        let (a_t, _) = steering_to(&upa, s, &area)?;
        let g = sensing_round_trip_gain(&ch, (s.position - area).norm(), d_rx) * processing;
        echo.push(a_t * g.conj());
        for pt in &ambiguity_points[i] {
            let (transmit, _) = steering_to(&upa, s, pt)?;
            let (rx, _) = steering_to(&upa, &central, pt)?;
            let beta = reflect.gen_range(sc.ambiguity_reflectivity_min..=sc.ambiguity_reflectivity_max);
            let g = sensing_round_trip_gain(&ch, (s.position - pt).norm(), (central.position - pt).norm());
            ambiguities.push(Ambiguity { satellite: i, receive: rx, transmit, gain: g * (beta * processing * suppression) });
        }
    }
    let sensing = SensingScene {
        receive,
        echo,
        beta: Complex64::new(sc.area_reflectivity, 0.0),
        ambiguities,
        noise: cfg.sensing_noise(),
    };
    let scene = Scene { ues: models, sensing, budgets: vec![cfg.power_budget(); k] };
    scene.check()?;
    Ok(Scenario {
        hash: scenario_hash(cfg, seed),
        seed,
        satellites: sats,
        area,
        ambiguity_points,
        ues,
        elevations,
        uniform_jacobians,
        scene,
    })
}
