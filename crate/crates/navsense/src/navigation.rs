//! Hybrid PVT estimation: pseudo-range simulation, Bancroft initialization,
//! elevation-weighted iterated least squares and concentrated-MLE velocity.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::consts::{LIGHT_SPEED, R_EARTH};
use crate::error::{Error, Result};
use crate::geometry::{ue_elevation, CVector, SatelliteState, UeState, Vec3};
use crate::waveform::{doppler_shift, sample_signal, NavSignal, SamplingWindow};

/// Measured pseudo-ranges with the satellite clock biases broadcast to the UE.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudorangeSet {
    pub ranges: Vec<f64>,
    pub sat_clock: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvtFix {
    pub position: Vec3,
    /// Receiver clock error in seconds.
    pub clock: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Pseudo-range error standard deviation sigma0 / sin(elevation).
pub fn elevation_sigma(sigma0: f64, elevation: f64) -> f64 {
    sigma0 / elevation.sin().max(1e-3)
}

pub fn simulate_pseudoranges<R: Rng + ?Sized>(
    sats: &[SatelliteState],
    ue: &UeState,
    rng: &mut R,
    sigma0: f64,
) -> PseudorangeSet {
    let mut out = PseudorangeSet { ranges: vec![], sat_clock: vec![], sigma: vec![] };
    for s in sats {
        let sigma = elevation_sigma(sigma0, ue_elevation(&ue.position, &s.position).angle);
        let noise: f64 = rng.sample(StandardNormal);
        let d = (s.position - ue.position).norm();
        out.ranges.push(d + LIGHT_SPEED * (ue.clock_error - s.clock_bias) + sigma * noise);
        out.sat_clock.push(s.clock_bias);
        out.sigma.push(sigma);
    }
    out
}

fn lorentz(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    a.x * b.x + a.y * b.y + a.z * b.z - a.w * b.w
}

/// Closed-form position and clock from four or more pseudo-ranges.
pub fn bancroft_init(sats: &[SatelliteState], pr: &PseudorangeSet) -> Result<(Vec3, f64)> {
    let k = sats.len();
    if k < 4 || pr.ranges.len() != k {
        return Err(Error::Geometry(format!("need at least 4 pseudo-ranges, got {k}")));
    }
    // Work about the satellite centroid in megameters for conditioning.
    let scale = 1e6;
    let center = sats.iter().fold(Vec3::zeros(), |acc, s| acc + s.position) / k as f64;
    let mut b = DMatrix::zeros(k, 4);
    let mut alpha = DVector::zeros(k);
    for (i, s) in sats.iter().enumerate() {
        let q = (s.position - center) / scale;
        let r = (pr.ranges[i] + LIGHT_SPEED * pr.sat_clock[i]) / scale;
        let a = Vector4::new(q.x, q.y, q.z, r);
        b.row_mut(i).copy_from(&a.transpose());
        alpha[i] = 0.5 * lorentz(&a, &a);
    }
    let btb = b.transpose() * &b;
    let eig = btb.clone().symmetric_eigen().eigenvalues;
    let smax = eig.amax();
    let smin = eig.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Geometry("singular Bancroft normal matrix".into()));
    }
    let inv = btb.try_inverse().ok_or_else(|| Error::Geometry("singular Bancroft normal matrix".into()))?;
    let pinv = inv * b.transpose();
    let mflip = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0));
    let u: Vector4<f64> = mflip * (&pinv * DVector::from_element(k, 1.0)).fixed_rows::<4>(0).into_owned();
    let v: Vector4<f64> = mflip * (&pinv * alpha).fixed_rows::<4>(0).into_owned();
    // <u,u> L^2 + 2(<u,v> - 1) L + <v,v> = 0
    let qa = lorentz(&u, &u);
    let qb = 2.0 * (lorentz(&u, &v) - 1.0);
    let qc = lorentz(&v, &v);
    let roots: Vec<f64> = if qa.abs() < 1e-14 * (qb.abs() + qc.abs()) {
        vec![-qc / qb]
    } else {
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
        let r1 = (-qb - qb.signum() * disc) / (2.0 * qa);
        let r2 = if r1 != 0.0 { qc / (qa * r1) } else { (-qb + disc) / (2.0 * qa) };
        vec![r1, r2]
    };
    let candidates: Vec<(Vec3, f64)> = roots
        .iter()
        .map(|&l| {
            let x = u * l + v;
            (Vec3::new(x.x, x.y, x.z) * scale + center, x.w * scale)
        })
        .collect();
    let best = candidates
        .iter()
        .min_by(|a, b| {
            let da = (a.0.norm() - R_EARTH).abs();
            let db = (b.0.norm() - R_EARTH).abs();
            da.total_cmp(&db).then(a.1.abs().total_cmp(&b.1.abs()))
        })
        .copied()
        .expect("at least one root");
    Ok((best.0, best.1 / LIGHT_SPEED))
}

/// Elevation weighting diag(sin e_k) / max_k sin e_k.
pub fn build_weighting(elevations: &[f64]) -> Result<DMatrix<f64>> {
    let s: Vec<f64> = elevations.iter().map(|e| e.sin()).collect();
    let m = s.iter().cloned().fold(0.0, f64::max);
    if !(m > 0.0) {
        return Err(Error::Weighting);
    }
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(s.len(), s.iter().map(|x| x / m))))
}

/// Geometry matrix with unit line-of-sight rows and a unit clock column
/// (clock expressed in meters).
pub fn geometry_matrix_scaled(sats: &[SatelliteState], p: &Vec3) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(sats.len(), 4);
    for (i, s) in sats.iter().enumerate() {
        let d = p - s.position;
        let u = d / d.norm();
        z[(i, 0)] = u.x;
        z[(i, 1)] = u.y;
        z[(i, 2)] = u.z;
        z[(i, 3)] = 1.0;
    }
    z
}

/// Geometry matrix Z with clock column c, so that Z [dp; dt] is in meters.
pub fn geometry_matrix(sats: &[SatelliteState], p: &Vec3) -> DMatrix<f64> {
    let mut z = geometry_matrix_scaled(sats, p);
    z.column_mut(3).fill(LIGHT_SPEED);
    z
}

fn weighted_pinv(z: &DMatrix<f64>, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ztp = z.transpose() * phi;
    let n = &ztp * z;
    let chol = n
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Geometry("normal matrix Z^T Phi Z is singular".into()))?;
    let eig = n.symmetric_eigen().eigenvalues;
    if eig.min() <= 1e-13 * eig.amax() {
        return Err(Error::Geometry("normal matrix Z^T Phi Z is singular".into()));
    }
    Ok(chol.solve(&ztp))
}

/// Scaled weighted pseudo-inverse (Z^T Phi Z)^-1 Z^T Phi for the unit-clock
/// geometry matrix: maps range errors (m) to [position (m); clock (m)].
pub fn range_jacobian(sats: &[SatelliteState], p: &Vec3, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    weighted_pinv(&geometry_matrix_scaled(sats, p), phi)
}

/// J = c (Z^T Phi Z)^-1 Z^T Phi, mapping delays (s) to [position (m); clock (s)].
pub fn jacobian(sats: &[SatelliteState], p: &Vec3, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut j = range_jacobian(sats, p, phi)? * LIGHT_SPEED;
    let mut last = j.row_mut(3);
    last /= LIGHT_SPEED;
    Ok(j)
}

/// Iterated weighted least squares starting from `init`.
pub fn wls_solve(
    sats: &[SatelliteState],
    pr: &PseudorangeSet,
    init: Vec3,
    phi: &DMatrix<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<PvtFix> {
    let k = sats.len();
    if k < 4 {
        return Err(Error::Geometry(format!("need at least 4 pseudo-ranges, got {k}")));
    }
    let mut p = init;
    let mut b = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let z = geometry_matrix_scaled(sats, &p);
        let y = DVector::from_fn(k, |i, _| {
            pr.ranges[i] + LIGHT_SPEED * pr.sat_clock[i] - (sats[i].position - p).norm() - b
        });
        let delta = weighted_pinv(&z, phi)? * y;
        p += Vec3::new(delta[0], delta[1], delta[2]);
        b += delta[3];
        iterations += 1;
        if Vec3::new(delta[0], delta[1], delta[2]).norm() < tol {
            converged = true;
            break;
        }
    }
    Ok(PvtFix { position: p, clock: b / LIGHT_SPEED, iterations, converged })
}

/// Weighted residual cost (y - Z d)^T Phi (y - Z d) at position `p` and
/// clock offset `b` (meters) before any update.
pub fn wls_cost(sats: &[SatelliteState], pr: &PseudorangeSet, p: &Vec3, b: f64, phi: &DMatrix<f64>) -> f64 {
    (0..sats.len())
        .map(|i| {
            let r = pr.ranges[i] + LIGHT_SPEED * pr.sat_clock[i] - (sats[i].position - p).norm() - b;
            phi[(i, i)] * r * r
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySearch {
    /// Half-width of the cubic search box around `center`, m/s.
    pub half_width: f64,
    pub center: Vec3,
    pub grid_points: usize,
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for VelocitySearch {
    fn default() -> Self {
        VelocitySearch {
            half_width: 500.0,
            center: Vec3::zeros(),
            grid_points: 11,
            particles: 40,
            iterations: 100,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            seed: 0,
        }
    }
}

/// Decoded signal of one satellite together with the known reference pieces.
#[derive(Debug, Clone)]
pub struct DecodedLink {
    pub satellite: SatelliteState,
    /// y^d_k(t) on the window grid.
    pub samples: CVector,
    /// Real code waveform s_k(t - tau_k) on the same grid.
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityEstimate {
    pub velocity: Vec3,
    pub cost: f64,
    pub amplitudes: Vec<Complex64>,
    pub evaluations: usize,
    pub on_boundary: bool,
}

const MOMENTS: usize = 10;
const BLOCK: usize = 40;

/// Periodogram of z(t) = s(t) y(t) evaluated through per-block Taylor moments,
/// exact to round-off for residual frequencies up to about 1 MHz.
struct Periodogram {
    nominal: f64,
    centers: Vec<f64>,
    moments: Vec<[Complex64; MOMENTS]>,
    energy: f64,
    sample_count: usize,
}

impl Periodogram {
    fn new(link: &DecodedLink, times: &[f64], nominal: f64, count: usize) -> Self {
        let n = times.len();
        let start = (n - count) / 2;
        let idx: Vec<usize> = (start..start + count).collect();
        let tau = std::f64::consts::TAU;
        let mut centers = vec![];
        let mut moments = vec![];
        for chunk in idx.chunks(BLOCK) {
            let tc = 0.5 * (times[chunk[0]] + times[*chunk.last().unwrap()]);
            let mut m = [Complex64::new(0.0, 0.0); MOMENTS];
            for &i in chunk {
                let z = link.samples[i] * link.reference[i] * Complex64::from_polar(1.0, -tau * nominal * times[i]);
                let x = Complex64::new(0.0, -tau * (times[i] - tc));
                let mut pw = Complex64::new(1.0, 0.0);
                for (order, slot) in m.iter_mut().enumerate() {
                    *slot += z * pw;
                    pw = pw * x / (order + 1) as f64;
                }
            }
            centers.push(tc);
            moments.push(m);
        }
        let energy = idx.iter().map(|&i| link.reference[i] * link.reference[i]).sum();
        Periodogram { nominal, centers, moments, energy, sample_count: count }
    }

    fn inner(&self, f: f64) -> Complex64 {
        let df = f - self.nominal;
        let tau = std::f64::consts::TAU;
        let mut acc = Complex64::new(0.0, 0.0);
        for (tc, m) in self.centers.iter().zip(&self.moments) {
            let mut s = m[MOMENTS - 1];
            for o in (0..MOMENTS - 1).rev() {
                s = s * df + m[o];
            }
            acc += s * Complex64::from_polar(1.0, -tau * df * tc);
        }
        acc
    }

    fn cost(&self, f: f64) -> f64 {
        if self.energy > 0.0 { self.inner(f).norm_sqr() / self.energy } else { 0.0 }
    }
}

fn link_doppler(sat: &SatelliteState, p: &Vec3, gamma: &Vec3, carrier: f64) -> f64 {
    let u = (sat.position - p).normalize();
    -(sat.velocity - gamma).dot(&u) * carrier / LIGHT_SPEED
}

/// Decoded navigation signal of satellite `sat` at `ue` with complex gain
/// `amplitude` and circular white noise of standard deviation `noise_std`.
/// The propagation delay is folded into one code period.
pub fn synthesize_decoded<R: Rng + ?Sized>(
    sig: &NavSignal,
    window: &SamplingWindow,
    sat: &SatelliteState,
    ue: &UeState,
    carrier: f64,
    amplitude: Complex64,
    noise_std: f64,
    rng: &mut R,
) -> Result<DecodedLink> {
    let delay = ((sat.position - ue.position).norm() / LIGHT_SPEED + ue.clock_error - sat.clock_bias)
        .rem_euclid(sig.period());
    let f = doppler_shift(&sat.velocity, &ue.velocity, &sat.position, &ue.position, carrier, LIGHT_SPEED);
    let clean = sample_signal(sig, window, delay, f)?;
    let reference = sample_signal(sig, window, delay, 0.0)?.iter().map(|c| c.re).collect();
    let scale = noise_std / std::f64::consts::SQRT_2;
    let samples = clean.map(|c| {
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        amplitude * c + Complex64::new(a, b) * scale
    });
    Ok(DecodedLink { satellite: *sat, samples, reference })
}

/// Concentrated MLE cost sum_k |<u_k, y_k>|^2 / ||u_k||^2 evaluated directly.
pub fn concentrated_cost(links: &[DecodedLink], window: &SamplingWindow, p: &Vec3, gamma: &Vec3, carrier: f64) -> f64 {
    let times = window.times();
    links
        .iter()
        .map(|l| {
            let f = link_doppler(&l.satellite, p, gamma, carrier);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut energy = 0.0;
            for (i, &t) in times.iter().enumerate() {
                acc += l.samples[i] * l.reference[i] * Complex64::from_polar(1.0, -std::f64::consts::TAU * f * t);
                energy += l.reference[i] * l.reference[i];
            }
            acc.norm_sqr() / energy
        })
        .sum()
}

/// Velocity search: nested grids on progressively longer sub-windows, then
/// particle-swarm refinement on the full window.
pub fn mle_velocity(
    links: &[DecodedLink],
    window: &SamplingWindow,
    p_hat: &Vec3,
    carrier: f64,
    cfg: &VelocitySearch,
) -> Result<VelocityEstimate> {
    if links.is_empty() {
        return Err(Error::Dimension("no decoded links".into()));
    }
    let times = window.times();
    let n = times.len();
    let per_mps = carrier / LIGHT_SPEED;
    let units: Vec<Vec3> = links.iter().map(|l| (l.satellite.position - p_hat).normalize()).collect();
    let nominal: Vec<f64> = links.iter().map(|l| link_doppler(&l.satellite, p_hat, &cfg.center, carrier)).collect();
    let build = |count: usize| -> Vec<Periodogram> {
        links.iter().zip(&nominal).map(|(l, &f0)| Periodogram::new(l, &times, f0, count)).collect()
    };
    let mut evaluations = 0usize;
    let eval = |pg: &[Periodogram], g: &Vec3, evals: &mut usize| -> f64 {
        *evals += 1;
        pg.iter()
            .zip(links)
            .zip(&units)
            .map(|((pg, l), u)| pg.cost(-(l.satellite.velocity - g).dot(u) * per_mps))
            .sum()
    };

    let pts = cfg.grid_points.max(2);
    let mut center = cfg.center;
    let mut half = cfg.half_width;
    loop {
        let spacing = 2.0 * half / (pts - 1) as f64;
        let span = 1.0 / (per_mps * 2.0 * spacing);
        let count = ((span * window.sample_rate) as usize).clamp(BLOCK, n);
        let pg = build(count);
        let mut best = (f64::NEG_INFINITY, center);
        for i in 0..pts {
            for j in 0..pts {
                for k in 0..pts {
                    let g = center
                        + Vec3::new(
                            -half + spacing * i as f64,
                            -half + spacing * j as f64,
                            -half + spacing * k as f64,
                        );
                    let c = eval(&pg, &g, &mut evaluations);
                    if c > best.0 {
                        best = (c, g);
                    }
                }
            }
        }
        center = best.1;
        half = spacing;
        if count == n || pg[0].sample_count == n {
            break;
        }
    }

    let full = build(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lo = center - Vec3::repeat(half);
    let width = 2.0 * half;
    let vmax = 0.2 * width;
    let mut pos: Vec<Vec3> = (0..cfg.particles)
        .map(|i| if i == 0 { center } else { lo + Vec3::from_fn(|_, _| rng.gen::<f64>() * width) })
        .collect();
    let mut vel: Vec<Vec3> = (0..cfg.particles).map(|_| Vec3::from_fn(|_, _| (rng.gen::<f64>() - 0.5) * vmax)).collect();
    let mut pbest: Vec<(f64, Vec3)> = pos.iter().map(|g| (eval(&full, g, &mut evaluations), *g)).collect();
    let mut gbest = pbest.iter().cloned().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap_or((f64::NEG_INFINITY, center));
    for _ in 0..cfg.iterations {
        for i in 0..pos.len() {
            let r1 = Vec3::from_fn(|_, _| rng.gen::<f64>());
            let r2 = Vec3::from_fn(|_, _| rng.gen::<f64>());
            vel[i] = vel[i] * cfg.inertia
                + (pbest[i].1 - pos[i]).component_mul(&r1) * cfg.cognitive
                + (gbest.1 - pos[i]).component_mul(&r2) * cfg.social;
            vel[i] = vel[i].map(|v| v.clamp(-vmax, vmax));
            pos[i] = (pos[i] + vel[i]).zip_map(&lo, |x, l| x.clamp(l, l + width));
            let c = eval(&full, &pos[i], &mut evaluations);
            if c > pbest[i].0 {
                pbest[i] = (c, pos[i]);
                if c > gbest.0 {
                    gbest = (c, pos[i]);
                }
            }
        }
    }
    let gamma = gbest.1;
    let amplitudes = full
        .iter()
        .zip(links)
        .zip(&units)
        .map(|((pg, l), u)| {
            let f = -(l.satellite.velocity - gamma).dot(u) * per_mps;
            if pg.energy > 0.0 { pg.inner(f) / pg.energy } else { Complex64::new(0.0, 0.0) }
        })
        .collect();
    let edge = (gamma - cfg.center).amax();
    Ok(VelocityEstimate {
        velocity: gamma,
        cost: gbest.0,
        amplitudes,
        evaluations,
        on_boundary: edge >= cfg.half_width - 1e-6 * cfg.half_width.max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ground_point;
    use approx::assert_relative_eq;

    fn sky(k: usize) -> (Vec<SatelliteState>, UeState) {
        let p = ground_point(0.5, 0.3);
        let up = p.normalize();
        let east = Vec3::new(-0.3f64.sin(), 0.3f64.cos(), 0.0);
        let north = up.cross(&east);
        let sats = (0..k)
            .map(|i| {
                let az = i as f64 * 2.4;
                let el = 0.35 + 1.1 * (i as f64 / k as f64);
                let dir = (east * az.cos() + north * az.sin()) * el.cos() + up * el.sin();
                let (h, se) = (550e3, el.sin());
                let slant = -R_EARTH * se + (R_EARTH * R_EARTH * se * se + h * h + 2.0 * R_EARTH * h).sqrt();
                let q = p + dir * slant;
                SatelliteState {
                    position: q,
                    velocity: east.cross(&q.normalize()) * 7.6e3,
                    clock_bias: 1e-6 * i as f64,
                }
            })
            .collect();
        (sats, UeState { position: p, velocity: Vec3::zeros(), clock_error: 0.0, rx_gain: 1.0 })
    }

    #[test]
    fn noiseless_ranges_and_clock_offset() {
        let (sats, mut ue) = sky(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pr = simulate_pseudoranges(&sats, &ue, &mut rng, 0.0);
        for (i, s) in sats.iter().enumerate() {
            let want = (s.position - ue.position).norm() - LIGHT_SPEED * s.clock_bias;
            assert_relative_eq!(pr.ranges[i], want, epsilon = 1e-6);
        }
        ue.clock_error = 1e-6;
        let pr2 = simulate_pseudoranges(&sats, &ue, &mut rng, 0.0);
        for i in 0..5 {
            assert_relative_eq!(pr2.ranges[i] - pr.ranges[i], LIGHT_SPEED * 1e-6, epsilon = 1e-6);
        }
    }

    #[test]
    fn bancroft_recovers_noiseless_fix() {
        let (sats, mut ue) = sky(5);
        ue.clock_error = 1e-3;
        let pr = simulate_pseudoranges(&sats, &ue, &mut ChaCha8Rng::seed_from_u64(0), 0.0);
        let (p, dt) = bancroft_init(&sats, &pr).unwrap();
        assert!((p - ue.position).norm() < 1e-6, "{}", (p - ue.position).norm());
        assert!((dt - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn bancroft_flags_coplanar_geometry() {
        let sats: Vec<SatelliteState> = (0..5)
            .map(|i| {
                let a = i as f64 * 0.3;
                SatelliteState {
                    position: Vec3::new(a.cos(), a.sin(), 0.0) * 7e6,
                    velocity: Vec3::new(0.0, 0.0, 7e3),
                    clock_bias: 0.0,
                }
            })
            .collect();
        let ue = UeState { position: Vec3::new(R_EARTH, 0.0, 0.0), velocity: Vec3::zeros(), clock_error: 0.0, rx_gain: 1.0 };
        let pr = PseudorangeSet {
            ranges: sats.iter().map(|s| (s.position - ue.position).norm()).collect(),
            sat_clock: vec![0.0; 5],
            sigma: vec![1.0; 5],
        };
        // Planar geometry with the UE in the plane leaves the z coordinate unresolved.
        let z = geometry_matrix_scaled(&sats, &ue.position);
        let err = weighted_pinv(&z, &DMatrix::identity(5, 5));
        assert!(matches!(err, Err(Error::Geometry(_))));
        assert!(matches!(bancroft_init(&sats, &pr), Err(Error::Geometry(_))));
    }

    #[test]
    fn weighting_examples() {
        let w = build_weighting(&[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(w, DMatrix::identity(3, 3));
        let w = build_weighting(&[std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_6]).unwrap();
        assert_relative_eq!(w[(0, 0)], 1.0);
        assert_relative_eq!(w[(1, 1)], 0.5, epsilon = 1e-15);
        assert_eq!(build_weighting(&[0.0, 0.0]), Err(Error::Weighting));
    }

    #[test]
    fn wls_converges_from_bancroft() {
        let (sats, mut ue) = sky(6);
        ue.clock_error = 2e-4;
        let pr = simulate_pseudoranges(&sats, &ue, &mut ChaCha8Rng::seed_from_u64(0), 0.0);
        let (p0, _) = bancroft_init(&sats, &pr).unwrap();
        let el: Vec<f64> = sats.iter().map(|s| ue_elevation(&p0, &s.position).angle).collect();
        let phi = build_weighting(&el).unwrap();
        let fix = wls_solve(&sats, &pr, p0 + Vec3::new(300.0, -200.0, 100.0), &phi, 10, 1e-4).unwrap();
        assert!(fix.converged && fix.iterations <= 5);
        assert!((fix.position - ue.position).norm() < 1e-6);
        assert!((fix.clock - 2e-4).abs() < 1e-14);
    }

    #[test]
    fn jacobian_times_geometry_is_c_identity() {
        let (sats, ue) = sky(7);
        let el: Vec<f64> = sats.iter().map(|s| ue_elevation(&ue.position, &s.position).angle).collect();
        let phi = build_weighting(&el).unwrap();
        let j = jacobian(&sats, &ue.position, &phi).unwrap();
        let z = geometry_matrix(&sats, &ue.position);
        let jz = &j * &z;
        let scale = j.abs() * z.abs();
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { LIGHT_SPEED } else { 0.0 };
                assert!((jz[(r, c)] - want).abs() <= 1e-9 * scale[(r, c)].max(LIGHT_SPEED * 1e-6));
            }
        }
    }

    fn links(ue: &UeState, noise: f64, seed: u64) -> (Vec<DecodedLink>, SamplingWindow) {
        let (sats, _) = sky(5);
        let window = SamplingWindow::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = sats
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let sig = crate::waveform::gen_nav_sequence(7, 1023, 0, k, 10.23e6).unwrap();
                let a = Complex64::from_polar(1.0, 0.4 * k as f64);
                synthesize_decoded(&sig, &window, s, ue, 35e9, a, noise, &mut rng).unwrap()
            })
            .collect();
        (out, window)
    }

    #[test]
    fn mle_recovers_noiseless_velocity() {
        let (_, mut ue) = sky(5);
        ue.velocity = Vec3::new(120.0, -37.5, 61.0);
        let (l, w) = links(&ue, 0.0, 3);
        let est = mle_velocity(&l, &w, &ue.position, 35e9, &VelocitySearch::default()).unwrap();
        assert!((est.velocity - ue.velocity).norm() < 0.1, "{:?}", est.velocity);
        assert!(!est.on_boundary);
        for (k, a) in est.amplitudes.iter().enumerate() {
            assert!((a - Complex64::from_polar(1.0, 0.4 * k as f64)).norm() < 1e-3);
        }
        let direct = concentrated_cost(&l, &w, &ue.position, &est.velocity, 35e9);
        assert_relative_eq!(direct, est.cost, max_relative = 1e-6);
    }

    #[test]
    fn mle_flags_boundary() {
        let (_, mut ue) = sky(5);
        ue.velocity = Vec3::new(900.0, 0.0, 0.0);
        let (l, w) = links(&ue, 0.0, 3);
        let est = mle_velocity(&l, &w, &ue.position, 35e9, &VelocitySearch::default()).unwrap();
        assert!(est.on_boundary);
    }
}
