//! Constellation geometry: Walker Delta snapshots, local orbital frames,
//! look angles, planar-array steering and service-group selection.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consts::{MU_EARTH, R_EARTH};
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerConfig {
    pub total_satellites: usize,
    pub planes: usize,
    pub phase_factor: usize,
    /// Orbital altitude in meters.
    pub altitude: f64,
    /// Inclination in radians.
    pub inclination: f64,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        WalkerConfig {
            total_satellites: 1296,
            planes: 72,
            phase_factor: 45,
            altitude: 550e3,
            inclination: 53f64.to_radians(),
        }
    }
}

impl WalkerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.planes == 0 || self.total_satellites == 0 {
            v.push("constellation needs at least one plane and one satellite".into());
        } else if self.total_satellites % self.planes != 0 {
            v.push(format!(
                "total_satellites {} not divisible by planes {}",
                self.total_satellites, self.planes
            ));
        }
        if self.planes > 0 && self.phase_factor >= self.planes {
            v.push(format!("phase_factor {} must be below planes {}", self.phase_factor, self.planes));
        }
        if !(self.altitude > 0.0) {
            v.push("altitude must be positive".into());
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.inclination) {
            v.push("inclination must lie in [0, pi]".into());
        }
        v
    }

    pub fn per_plane(&self) -> usize {
        self.total_satellites / self.planes
    }

    pub fn orbit_radius(&self) -> f64 {
        R_EARTH + self.altitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub clock_bias: f64,
}

/// One snapshot of a Walker Delta constellation on circular orbits.
///
/// Satellites are ordered plane by plane.
pub fn generate_walker(cfg: &WalkerConfig, epoch_phase: f64) -> Result<Vec<SatelliteState>> {
    let issues = cfg.violations();
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    let tau = std::f64::consts::TAU;
    let r = cfg.orbit_radius();
    let speed = (MU_EARTH / r).sqrt();
    let s = cfg.per_plane();
    let (si, ci) = cfg.inclination.sin_cos();
    let mut out = Vec::with_capacity(cfg.total_satellites);
    for p in 0..cfg.planes {
        let raan = tau * p as f64 / cfg.planes as f64;
        let (so, co) = raan.sin_cos();
        for k in 0..s {
            let u = tau * k as f64 / s as f64
                + tau * (cfg.phase_factor * p) as f64 / cfg.total_satellites as f64
                + epoch_phase;
            let (su, cu) = u.sin_cos();
            let radial = Vec3::new(co * cu - so * su * ci, so * cu + co * su * ci, su * si);
            let along = Vec3::new(-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si);
            out.push(SatelliteState { position: radial * r, velocity: along * speed, clock_bias: 0.0 });
        }
    }
    Ok(out)
}

/// Ground user state: position, velocity, receiver clock error and antenna gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub clock_error: f64,
    pub rx_gain: f64,
}

/// Local orbital frame: z' toward Earth center, x' along velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

pub fn local_frame(sat: &SatelliteState) -> Result<LocalFrame> {
    let qn = sat.position.norm();
    let vn = sat.velocity.norm();
    if qn == 0.0 || vn == 0.0 {
        return Err(Error::DegenerateFrame);
    }
    let z = -sat.position / qn;
    let c = z.cross(&(sat.velocity / vn));
    let cn = c.norm();
    if cn < 1e-12 {
        return Err(Error::DegenerateFrame);
    }
    let y = c / cn;
    // Equal to the velocity direction on circular orbits; otherwise its
    // component along z is removed.
    Ok(LocalFrame { x: y.cross(&z), y, z })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularPair {
    pub theta: f64,
    pub phi: f64,
}

/// Elevation/azimuth of `target` relative to the geocentric-pointing array at `q`.
pub fn look_angles(frame: &LocalFrame, q: &Vec3, target: &Vec3) -> Result<AngularPair> {
    let d = target - q;
    let dn = d.norm();
    if dn == 0.0 {
        return Err(Error::Geometry("target coincides with the satellite".into()));
    }
    let dz = d.dot(&frame.z);
    if dz < 0.0 {
        return Err(Error::TargetBehindArray(dz / dn));
    }
    let theta = (dz / dn).clamp(-1.0, 1.0).acos();
    let perp = d - frame.z * dz;
    let phi = if perp.norm() <= 1e-12 * dn { 0.0 } else { perp.dot(&frame.y).atan2(perp.dot(&frame.x)) };
    Ok(AngularPair { theta, phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpaConfig {
    pub nx: usize,
    pub ny: usize,
    /// Element spacing in meters.
    pub spacing: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
}

impl UpaConfig {
    /// Half-wavelength array at the given carrier.
    pub fn half_wavelength(nx: usize, ny: usize, carrier: f64, c: f64) -> Self {
        let wavelength = c / carrier;
        UpaConfig { nx, ny, spacing: wavelength / 2.0, wavelength }
    }

    pub fn elements(&self) -> usize {
        self.nx * self.ny
    }
}

/// Unit-norm steering vector; element (ix, iy) sits at index `ix * ny + iy`.
pub fn transmit_steering(upa: &UpaConfig, theta: f64, phi: f64) -> CVector {
    let n = upa.elements();
    let k = std::f64::consts::TAU / upa.wavelength * upa.spacing;
    let (sp, cp) = phi.sin_cos();
    let st = theta.sin();
    let amp = 1.0 / (n as f64).sqrt();
    DVector::from_fn(n, |idx, _| {
        let ix = (idx / upa.ny) as f64;
        let iy = (idx % upa.ny) as f64;
        Complex64::from_polar(amp, k * (ix * cp * st + iy * sp * st))
    })
}

/// Elevation of a satellite seen from a ground point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elevation {
    pub angle: f64,
    /// Raw value was negative and has been clamped to zero.
    pub below_horizon: bool,
}

pub fn ue_elevation(p0: &Vec3, q: &Vec3) -> Elevation {
    let d = q - p0;
    let cosv = (p0.dot(&d) / (p0.norm() * d.norm())).clamp(-1.0, 1.0);
    let raw = std::f64::consts::FRAC_PI_2 - cosv.acos();
    if raw < 0.0 {
        Elevation { angle: 0.0, below_horizon: true }
    } else {
        Elevation { angle: raw.min(std::f64::consts::FRAC_PI_2), below_horizon: false }
    }
}

/// Pick the `k` highest-elevation satellites above `mask` (radians) as seen
/// from `area_center`. The first index is the central satellite.
pub fn select_service_group(
    constellation: &[SatelliteState],
    area_center: &Vec3,
    k: usize,
    mask: f64,
) -> Result<Vec<usize>> {
    let mut visible: Vec<(usize, f64)> = constellation
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let e = ue_elevation(area_center, &s.position);
            (!e.below_horizon && e.angle >= mask).then_some((i, e.angle))
        })
        .collect();
    if visible.len() < k || k == 0 {
        return Err(Error::Visibility { visible: visible.len(), required: k, mask_deg: mask.to_degrees() });
    }
    visible.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(visible.into_iter().take(k).map(|(i, _)| i).collect())
}

/// Ground point at the given geocentric latitude/longitude (radians).
pub fn ground_point(lat: f64, lon: f64) -> Vec3 {
    Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()) * R_EARTH
}

/// Earth-central angle subtended between the sub-satellite point and the
/// locus where a satellite at radius `r` is seen at elevation `elev`.
pub fn cap_half_angle(r: f64, elev: f64) -> f64 {
    (R_EARTH * elev.cos() / r).acos() - elev
}
