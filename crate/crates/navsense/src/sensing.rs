//! Remote-sensing receive chain at the central satellite: interference
//! covariance, MVDR receive weights and SAINR.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{CMatrix, CVector};

/// One ambiguity point illuminated by satellite `satellite`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ambiguity {
    pub satellite: usize,
    /// Receive steering of the central satellite toward the point.
    pub receive: CVector,
    /// Transmit steering of the illuminating satellite toward the point.
    pub transmit: CVector,
    /// Reflection coefficient times round-trip gain.
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingScene {
    /// Receive steering a_r of the central satellite toward the area.
    pub receive: CVector,
    /// Per-satellite echo responses conj(g'_k) a_t(theta'_k, phi'_k).
    pub echo: Vec<CVector>,
    pub beta: Complex64,
    pub ambiguities: Vec<Ambiguity>,
    /// Receiver noise power sigma_s^2.
    pub noise: f64,
}

impl SensingScene {
    pub fn antennas(&self) -> usize {
        self.receive.len()
    }

    pub fn satellites(&self) -> usize {
        self.echo.len()
    }

    fn block<'a>(&self, x: &'a CVector, k: usize) -> nalgebra::DVectorView<'a, Complex64> {
        let n = self.antennas();
        x.rows(k * n, n)
    }

    fn lifted_block(&self, x: &CMatrix, k: usize) -> CMatrix {
        let n = self.antennas();
        x.view((k * n, k * n), (n, n)).into_owned()
    }

    /// Stacked echo vector b = [b_1; ...; b_K], so the desired response is a_r b^H w.
    pub fn echo_stacked(&self) -> CVector {
        crate::fim::stack(&self.echo)
    }

    /// h = a_r (b^H w), the desired response before the reflection coefficient.
    pub fn desired_response(&self, w: &CVector) -> CVector {
        &self.receive * self.echo_stacked().dotc(w)
    }

    /// R from the stacked sensing beam and the UEs' stacked navigation beams.
    pub fn interference(&self, w: &CVector, navs: &[CVector]) -> CMatrix {
        let n = self.antennas();
        let mut r = CMatrix::zeros(n, n);
        for a in &self.ambiguities {
            let p = a.gain.norm_sqr() * a.transmit.dotc(&self.block(w, a.satellite)).norm_sqr();
            r += &a.receive * a.receive.adjoint() * Complex64::new(p, 0.0);
        }
        let mut leak = 0.0;
        for v in navs {
            for (k, e) in self.echo.iter().enumerate() {
                leak += e.dotc(&self.block(v, k)).norm_sqr();
            }
        }
        r += &self.receive * self.receive.adjoint() * Complex64::new(self.beta.norm_sqr() * leak, 0.0);
        r
    }

    /// R from lifted beams.
    pub fn interference_lifted(&self, w: &CMatrix, navs: &[CMatrix]) -> CMatrix {
        let n = self.antennas();
        let mut r = CMatrix::zeros(n, n);
        for a in &self.ambiguities {
            let wk = self.lifted_block(w, a.satellite);
            let p = a.gain.norm_sqr() * a.transmit.dotc(&(wk * &a.transmit)).re;
            r += &a.receive * a.receive.adjoint() * Complex64::new(p, 0.0);
        }
        let mut leak = 0.0;
        for v in navs {
            for (k, e) in self.echo.iter().enumerate() {
                leak += e.dotc(&(self.lifted_block(v, k) * e)).re;
            }
        }
        r += &self.receive * self.receive.adjoint() * Complex64::new(self.beta.norm_sqr() * leak, 0.0);
        r
    }

    /// Coefficients (Q_W, Q_V) with z^H R z = tr(W Q_W) + sum_m tr(V_m Q_V).
    pub fn interference_coefficients(&self, z: &CVector) -> (CMatrix, CMatrix) {
        let n = self.antennas();
        let nk = n * self.satellites();
        let mut qw = CMatrix::zeros(nk, nk);
        for a in &self.ambiguities {
            let s = a.gain.norm_sqr() * z.dotc(&a.receive).norm_sqr();
            let mut blk = qw.view_mut((a.satellite * n, a.satellite * n), (n, n));
            blk += &a.transmit * a.transmit.adjoint() * Complex64::new(s, 0.0);
        }
        let mut qv = CMatrix::zeros(nk, nk);
        let s = self.beta.norm_sqr() * z.dotc(&self.receive).norm_sqr();
        for (k, e) in self.echo.iter().enumerate() {
            let mut blk = qv.view_mut((k * n, k * n), (n, n));
            blk += e * e.adjoint() * Complex64::new(s, 0.0);
        }
        (qw, qv)
    }

    fn loaded_inverse(&self, r: &CMatrix) -> Result<CMatrix> {
        let n = self.antennas();
        let mut q = r.clone();
        for i in 0..n {
            q[(i, i)] += self.noise;
        }
        let q = (&q + q.adjoint()) * Complex64::new(0.5, 0.0);
        q.cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::Numerical("R + sigma_s^2 I is not positive definite".into()))
    }

    /// MVDR weights (R + s I)^-1 h / (h^H (R + s I)^-1 h).
    pub fn mvdr(&self, r: &CMatrix, w: &CVector) -> Result<CVector> {
        let h = self.desired_response(w);
        if h.norm() == 0.0 {
            return Err(Error::NoSignal);
        }
        let qi = self.loaded_inverse(r)?;
        let num = &qi * &h;
        let den = h.dotc(&num);
        Ok(num / den)
    }

    /// SAINR of receive weights `z`.
    pub fn sainr(&self, r: &CMatrix, z: &CVector, w: &CVector) -> f64 {
        let h = self.desired_response(w);
        let sig = (z.dotc(&h) * self.beta).norm_sqr();
        let den = z.dotc(&(r * z)).re + self.noise * z.norm_squared();
        sig / den
    }

    /// |beta|^2 H^H (R + s I)^-1 H with H = a_r b^H.
    pub fn sainr_coefficient(&self, r: &CMatrix) -> Result<CMatrix> {
        let qi = self.loaded_inverse(r)?;
        let g = self.receive.dotc(&(qi * &self.receive)).re * self.beta.norm_sqr();
        let b = self.echo_stacked();
        Ok(&b * b.adjoint() * Complex64::new(g, 0.0))
    }

    /// Closed-form SAINR under MVDR reception.
    pub fn max_sainr(&self, r: &CMatrix, w: &CVector) -> Result<f64> {
        let c = self.sainr_coefficient(r)?;
        Ok(w.dotc(&(c * w)).re)
    }

    pub fn max_sainr_lifted(&self, r: &CMatrix, w: &CMatrix) -> Result<f64> {
        let c = self.sainr_coefficient(r)?;
        Ok((w * c).trace().re)
    }
}

/// Uniformly weighted receive vector ones / sqrt(N).
pub fn uniform_receiver(n: usize) -> CVector {
    CVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0))
}
