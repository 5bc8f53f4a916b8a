//! Fisher information for delay, Doppler and velocity, the effective delay
//! FIM and the position, timing and velocity error metrics.
//!
//! Each UE is summarized by a [`UeModel`]: the stacked effective channel
//! `h` (so that the UE observes `h^H x` for a stacked transmit vector `x`),
//! the waveform Gram matrices over the observation window and the geometry
//! needed to map delays and Doppler shifts to PVT parameters.

use nalgebra::{DMatrix, Matrix3, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{CMatrix, CVector, Vec3};
use crate::waveform::{sample_signal, sample_signal_derivative, NavSignal, SamplingWindow};

/// FIM blocks of one UE in native units (seconds and hertz).
#[derive(Debug, Clone, PartialEq)]
pub struct FimBundle {
    pub tau_tau: DMatrix<f64>,
    pub freq_freq: DMatrix<f64>,
    pub tau_freq: DMatrix<f64>,
    pub gamma: Matrix3<f64>,
    pub noise: f64,
}

impl FimBundle {
    /// The full 2K x 2K delay-Doppler FIM.
    pub fn full(&self) -> DMatrix<f64> {
        let k = self.tau_tau.nrows();
        let mut f = DMatrix::zeros(2 * k, 2 * k);
        f.view_mut((0, 0), (k, k)).copy_from(&self.tau_tau);
        f.view_mut((0, k), (k, k)).copy_from(&self.tau_freq);
        f.view_mut((k, 0), (k, k)).copy_from(&self.tau_freq.transpose());
        f.view_mut((k, k), (k, k)).copy_from(&self.freq_freq);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvtWeights {
    pub position: f64,
    pub velocity: f64,
    pub timing: f64,
}

impl Default for PvtWeights {
    fn default() -> Self {
        PvtWeights { position: 1.0, velocity: 10.0, timing: 1e9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvtErrors {
    /// Position error bound, m^2.
    pub position: f64,
    /// Timing error bound, s^2.
    pub timing: f64,
    /// Velocity error bound, (m/s)^2.
    pub velocity: f64,
    pub weighted: f64,
    /// A diagonal loading was needed to invert one of the FIMs.
    pub jittered: bool,
}

/// Position selector [I3 0].
pub fn position_selector() -> DMatrix<f64> {
    DMatrix::from_fn(3, 4, |r, c| if r == c { 1.0 } else { 0.0 })
}

/// Clock selector [0 0 0 1].
pub fn timing_selector() -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 0.0, 1.0])
}

/// The three Gram families of the derivative waveforms, each K x K and
/// already multiplied by the sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformGrams {
    pub tau_tau: CMatrix,
    pub freq_freq: CMatrix,
    pub tau_freq: CMatrix,
}

/// Gram matrices sum_t conj(x_i(t)) x_j(t) dt for the delay derivative
/// -s'(t - tau) e^{j2 pi f t} and the Doppler derivative j 2 pi t s(t - tau) e^{j2 pi f t}.
pub fn waveform_grams(
    signals: &[NavSignal],
    delays: &[f64],
    dopplers: &[f64],
    window: &SamplingWindow,
) -> Result<WaveformGrams> {
    let k = signals.len();
    if delays.len() != k || dopplers.len() != k {
        return Err(Error::Dimension(format!(
            "{k} signals but {} delays and {} Doppler shifts",
            delays.len(),
            dopplers.len()
        )));
    }
    let t = window.times();
    let dt = window.dt();
    let tau = std::f64::consts::TAU;
    let mut xt = Vec::with_capacity(k);
    let mut xf = Vec::with_capacity(k);
    for i in 0..k {
        xt.push(-sample_signal_derivative(&signals[i], window, delays[i], dopplers[i])?);
        let s = sample_signal(&signals[i], window, delays[i], dopplers[i])?;
        xf.push(CVector::from_fn(t.len(), |n, _| s[n] * Complex64::new(0.0, tau * t[n])));
    }
    let gram = |a: &[CVector], b: &[CVector]| CMatrix::from_fn(k, k, |i, j| a[i].dotc(&b[j]) * dt);
    Ok(WaveformGrams { tau_tau: gram(&xt, &xt), freq_freq: gram(&xf, &xf), tau_freq: gram(&xt, &xf) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FimBlock {
    TauTau,
    FreqFreq,
    TauFreq,
}

/// Everything about one UE that the FIM depends on, apart from the beams.
#[derive(Debug, Clone)]
pub struct UeModel {
    /// Per-satellite effective channels conj(alpha_k) a_t(theta_k, phi_k).
    pub channels: Vec<CVector>,
    pub grams: WaveformGrams,
    /// Rows u_k^T f'/c: Doppler sensitivity to UE velocity.
    pub doppler_rows: DMatrix<f64>,
    /// Delay-to-[position; clock] Jacobian, 4 x K.
    pub jacobian: DMatrix<f64>,
    /// Thermal noise power at the UE.
    pub noise: f64,
}

impl UeModel {
    pub fn satellites(&self) -> usize {
        self.channels.len()
    }

    pub fn antennas(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    /// Stacked channel of satellite `k` zero-padded to length NK.
    pub fn padded(&self, k: usize) -> CVector {
        let n = self.antennas();
        let mut h = CVector::zeros(n * self.satellites());
        h.rows_mut(k * n, n).copy_from(&self.channels[k]);
        h
    }

    /// Full stacked channel h = [h_1; ...; h_K].
    pub fn stacked(&self) -> CVector {
        let n = self.antennas();
        let mut h = CVector::zeros(n * self.satellites());
        for (k, c) in self.channels.iter().enumerate() {
            h.rows_mut(k * n, n).copy_from(c);
        }
        h
    }

    /// Per-satellite beam responses c_k = h_k^H v_k.
    pub fn responses(&self, v: &CVector) -> Vec<Complex64> {
        let n = self.antennas();
        self.channels.iter().enumerate().map(|(k, h)| h.dotc(&v.rows(k * n, n))).collect()
    }

    /// sigma^2 + |h^H w|^2.
    pub fn equivalent_noise(&self, w: &CVector) -> f64 {
        self.noise + self.stacked().dotc(w).norm_sqr()
    }

    /// sigma^2 + tr(W h h^H).
    pub fn equivalent_noise_lifted(&self, w: &CMatrix) -> f64 {
        let h = self.stacked();
        self.noise + h.dotc(&(w * &h)).re
    }

    /// h h^H, the lifted coupling from the sensing beam into the UE noise.
    pub fn noise_coefficient(&self) -> CMatrix {
        let h = self.stacked();
        &h * h.adjoint()
    }

    fn gram(&self, block: FimBlock) -> &CMatrix {
        match block {
            FimBlock::TauTau => &self.grams.tau_tau,
            FimBlock::FreqFreq => &self.grams.freq_freq,
            FimBlock::TauFreq => &self.grams.tau_freq,
        }
    }

    /// Hermitian coefficient A with [F_block]_{ij} = 2 tr(V A) / sigma~^2.
    pub fn coefficient(&self, block: FimBlock, i: usize, j: usize) -> CMatrix {
        let g = self.gram(block)[(i, j)];
        let a = self.padded(i) * self.padded(j).adjoint() * g;
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    /// Entry without the 2 / sigma~^2 factor, from the beam vector.
    pub fn raw_entry(&self, block: FimBlock, c: &[Complex64], i: usize, j: usize) -> f64 {
        (c[i].conj() * c[j] * self.gram(block)[(i, j)]).re
    }

    /// Entry without the 2 / sigma~^2 factor, from the lifted beam.
    pub fn raw_entry_lifted(&self, block: FimBlock, v: &CMatrix, i: usize, j: usize) -> f64 {
        let n = self.antennas();
        // tr(V h_i h_j^H) = h_j^H V_ji h_i
        let vji = v.view((j * n, i * n), (n, n));
        let t = self.channels[j].dotc(&(vji * &self.channels[i]));
        (t * self.gram(block)[(i, j)]).re
    }

    fn assemble(&self, noise: f64, entry: impl Fn(FimBlock, usize, usize) -> f64) -> FimBundle {
        let k = self.satellites();
        let s = 2.0 / noise;
        let sym = |b| {
            let mut m = DMatrix::from_fn(k, k, |i, j| if j >= i { s * entry(b, i, j) } else { 0.0 });
            for i in 0..k {
                for j in 0..i {
                    m[(i, j)] = m[(j, i)];
                }
            }
            m
        };
        let tau_tau = sym(FimBlock::TauTau);
        let freq_freq = sym(FimBlock::FreqFreq);
        let tau_freq = DMatrix::from_fn(k, k, |i, j| s * entry(FimBlock::TauFreq, i, j));
        let gamma = self.gamma_from(&freq_freq);
        FimBundle { tau_tau, freq_freq, tau_freq, gamma, noise }
    }

    /// F_gamma = H^T F_ff H.
    pub fn gamma_from(&self, freq_freq: &DMatrix<f64>) -> Matrix3<f64> {
        let h = &self.doppler_rows;
        let g = h.transpose() * freq_freq * h;
        Matrix3::from_fn(|r, c| g[(r, c)])
    }

    /// FIM from the stacked sensing beam `w` and this UE's navigation beam `v`.
    pub fn fim(&self, w: &CVector, v: &CVector) -> Result<FimBundle> {
        let nk = self.antennas() * self.satellites();
        if w.len() != nk || v.len() != nk {
            return Err(Error::Dimension(format!("beams of length {}/{} for NK = {nk}", w.len(), v.len())));
        }
        let c = self.responses(v);
        Ok(self.assemble(self.equivalent_noise(w), |b, i, j| self.raw_entry(b, &c, i, j)))
    }

    /// FIM from lifted beams W and V.
    pub fn fim_lifted(&self, w: &CMatrix, v: &CMatrix) -> Result<FimBundle> {
        let nk = self.antennas() * self.satellites();
        if w.shape() != (nk, nk) || v.shape() != (nk, nk) {
            return Err(Error::Dimension(format!("lifted beams must be {nk} x {nk}")));
        }
        Ok(self.assemble(self.equivalent_noise_lifted(w), |b, i, j| self.raw_entry_lifted(b, v, i, j)))
    }
}

/// Inverse of a symmetric positive semidefinite matrix, with diagonal loading
/// of 1e-12 tr/K when it is nearly singular. Returns the inverse and whether
/// loading was applied.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let k = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen().eigenvalues;
    let max = eig.amax();
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::Unobservable("information matrix is zero".into()));
    }
    let mut a = sym;
    let jittered = eig.min() < 1e-12 * max;
    if jittered {
        let load = 1e-12 * a.trace() / k as f64;
        for i in 0..k {
            a[(i, i)] += load;
        }
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Unobservable("information matrix is indefinite".into()))?;
    Ok((chol.inverse(), jittered))
}

/// Effective delay FIM F_tt - F_tf F_ff^-1 F_tf^T.
pub fn effective_fim(bundle: &FimBundle) -> Result<DMatrix<f64>> {
    let ff = &bundle.freq_freq;
    let k = ff.nrows();
    let max = ff.diagonal().amax();
    for i in 0..k {
        if !(ff[(i, i)] > 1e-14 * max) {
            return Err(Error::RankDeficient(i));
        }
    }
    let chol = ff.clone().cholesky().ok_or_else(|| {
        let i = (0..k).min_by(|&a, &b| ff[(a, a)].total_cmp(&ff[(b, b)])).unwrap_or(0);
        Error::RankDeficient(i)
    })?;
    let x = chol.solve(&bundle.tau_freq.transpose());
    let fe = &bundle.tau_tau - &bundle.tau_freq * x;
    Ok((&fe + fe.transpose()) * 0.5)
}

/// Position, timing and velocity bounds and their weighted sum.
pub fn pvt_errors(bundle: &FimBundle, jacobian: &DMatrix<f64>, weights: &PvtWeights) -> Result<PvtErrors> {
    let fe = effective_fim(bundle)?;
    let (fe_inv, j1) = spd_inverse(&fe)?;
    let cov = jacobian * fe_inv * jacobian.transpose();
    let position = position_selector() * &cov * position_selector().transpose();
    let timing = cov[(3, 3)];
    let (fg_inv, j2) = spd_inverse(&DMatrix::from_iterator(3, 3, bundle.gamma.iter().cloned()))?;
    let pos = position.trace();
    let vel = fg_inv.trace();
    Ok(PvtErrors {
        position: pos,
        timing,
        velocity: vel,
        weighted: weights.position * pos + weights.timing * timing + weights.velocity * vel,
        jittered: j1 || j2,
    })
}

/// Doppler sensitivity rows u_k^T f'/c for line-of-sight unit vectors `los`.
pub fn doppler_rows(los: &[Vec3], carrier: f64, light_speed: f64) -> DMatrix<f64> {
    DMatrix::from_fn(los.len(), 3, |k, c| los[k][c] * carrier / light_speed)
}

/// 4 x 4 covariance J (F^E)^-1 J^T, useful for Monte Carlo checks.
pub fn pvt_covariance(bundle: &FimBundle, jacobian: &DMatrix<f64>) -> Result<Matrix4<f64>> {
    let (fe_inv, _) = spd_inverse(&effective_fim(bundle)?)?;
    let c = jacobian * fe_inv * jacobian.transpose();
    Ok(Matrix4::from_fn(|r, k| c[(r, k)]))
}

/// Block selector rows picking satellite `k`'s N-block from a stacked vector.
pub fn block_selector(k: usize, n: usize, sats: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n * sats, |r, c| if c == k * n + r { 1.0 } else { 0.0 })
}

pub fn stack(blocks: &[CVector]) -> CVector {
    let total = blocks.iter().map(|b| b.len()).sum();
    let mut out = CVector::zeros(total);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.len()).copy_from(b);
        at += b.len();
    }
    out
}

pub fn outer(x: &CVector) -> CMatrix {
    x * x.adjoint()
}
