//! Navigation baseband waveforms: Gold-code chip sequences with raised-cosine
//! pulses, centered sampling windows and Doppler shifts.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CVector, Vec3};

/// Gold codes built from the two degree-10 GPS C/A generators.
pub const GOLD_LENGTH: usize = 1023;
/// Worst-case periodic cross-correlation of the degree-10 Gold family, 65/1023.
pub const GOLD_CROSS_BOUND: f64 = 65.0 / 1023.0;
/// Raised-cosine roll-off.
pub const ROLLOFF: f64 = 0.5;

/// Syn-SFR / data-SFR durations carried as metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLayout {
    pub syn_subframe_duration: f64,
    pub data_subframe_duration: f64,
}

impl Default for FrameLayout {
    fn default() -> Self {
        FrameLayout { syn_subframe_duration: 1e-3, data_subframe_duration: 9e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingWindow {
    /// Observation length T_obs in seconds.
    pub duration: f64,
    pub sample_rate: f64,
    pub centered: bool,
}

impl Default for SamplingWindow {
    fn default() -> Self {
        SamplingWindow { duration: 1e-3, sample_rate: 40e6, centered: true }
    }
}

impl SamplingWindow {
    pub fn len(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Sample instants; when centered, t_i = -t_{n-1-i} exactly.
    pub fn times(&self) -> Vec<f64> {
        let n = self.len();
        let half = (n as f64 - 1.0) / 2.0;
        (0..n)
            .map(|i| if self.centered { (i as f64 - half) / self.sample_rate } else { i as f64 / self.sample_rate })
            .collect()
    }
}

/// A periodic chip sequence shaped by raised-cosine pulses.
///
/// The periodic waveform is band-limited, so it is held as its Fourier series
/// `s(t) = sum_k a_k exp(j 2 pi k t / T_p)`, which makes values and slopes exact.
#[derive(Debug, Clone, PartialEq)]
pub struct NavSignal {
    pub chips: Vec<f64>,
    pub chip_rate: f64,
    /// Two-sided occupied bandwidth (1 + roll-off) * chip rate.
    pub bandwidth: f64,
    /// Harmonics a_0..a_kmax; negative ones are conjugates.
    harmonics: Vec<Complex64>,
}

fn lfsr_m_sequence(taps: &[usize]) -> Vec<u8> {
    let mut reg = [1u8; 10];
    let mut out = Vec::with_capacity(GOLD_LENGTH);
    for _ in 0..GOLD_LENGTH {
        out.push(reg[9]);
        let fb = taps.iter().fold(0u8, |acc, &t| acc ^ reg[t - 1]);
        reg.rotate_right(1);
        reg[0] = fb;
    }
    out
}

/// Member `index` of the 1025-code Gold family, as +/-1 chips.
pub fn gold_code(index: usize) -> Vec<f64> {
    let g1 = lfsr_m_sequence(&[3, 10]);
    let g2 = lfsr_m_sequence(&[2, 3, 6, 8, 9, 10]);
    let pick = |b: u8| if b == 0 { 1.0 } else { -1.0 };
    match index % (GOLD_LENGTH + 2) {
        i if i == GOLD_LENGTH => g1.into_iter().map(pick).collect(),
        i if i == GOLD_LENGTH + 1 => g2.into_iter().map(pick).collect(),
        shift => (0..GOLD_LENGTH).map(|n| pick(g1[n] ^ g2[(n + shift) % GOLD_LENGTH])).collect(),
    }
}

/// Periodic normalized correlation of two chip sequences at `lag`.
pub fn correlation(a: &[f64], b: &[f64], lag: usize) -> f64 {
    let n = a.len();
    (0..n).map(|i| a[i] * b[(i + lag) % n]).sum::<f64>() / n as f64
}

/// Deterministic code for a (UE, satellite) pair; distinct pairs under the
/// same seed map to distinct Gold-family members.
pub fn gen_nav_sequence(seed: u64, length: usize, ue: usize, sat: usize, chip_rate: f64) -> Result<NavSignal> {
    if length != GOLD_LENGTH {
        return Err(Error::Config(format!("code length {length} unsupported, only {GOLD_LENGTH}")));
    }
    let index = ((seed % GOLD_LENGTH as u64) as usize + ue * 64 + sat) % GOLD_LENGTH;
    Ok(NavSignal::new(gold_code(index), chip_rate))
}

/// Raised-cosine spectrum normalized to 1 at DC; `x` is frequency in chip-rate units.
fn rc_spectrum(x: f64) -> f64 {
    let b = ROLLOFF;
    let x = x.abs();
    let lo = (1.0 - b) / 2.0;
    let hi = (1.0 + b) / 2.0;
    if x <= lo {
        1.0
    } else if x < hi {
        0.5 * (1.0 + (std::f64::consts::PI / b * (x - lo)).cos())
    } else {
        0.0
    }
}

impl NavSignal {
    /// Shape `chips` with raised-cosine pulses and scale to unit mean power.
    pub fn new(chips: Vec<f64>, chip_rate: f64) -> Self {
        let l = chips.len();
        let kmax = ((1.0 + ROLLOFF) / 2.0 * l as f64).floor() as usize;
        let mut harmonics: Vec<Complex64> = (0..=kmax.min(l.saturating_sub(1)))
            .map(|k| {
                let w = -std::f64::consts::TAU * k as f64 / l as f64;
                let dft: Complex64 = chips.iter().enumerate().map(|(n, &c)| Complex64::from_polar(c, w * n as f64)).sum();
                dft * rc_spectrum(k as f64 / l as f64) / l as f64
            })
            .collect();
        let power = harmonics[0].norm_sqr() + 2.0 * harmonics[1..].iter().map(|a| a.norm_sqr()).sum::<f64>();
        if power > 0.0 {
            let g = 1.0 / power.sqrt();
            harmonics.iter_mut().for_each(|a| *a *= g);
        }
        NavSignal { chips, chip_rate, bandwidth: (1.0 + ROLLOFF) * chip_rate, harmonics }
    }

    pub fn period(&self) -> f64 {
        self.chips.len() as f64 / self.chip_rate
    }

    /// Mean power over one period.
    pub fn mean_power(&self) -> f64 {
        self.harmonics[0].norm_sqr() + 2.0 * self.harmonics[1..].iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    fn series(&self, t: f64, order: i32) -> f64 {
        let w = std::f64::consts::TAU / self.period();
        let step = Complex64::from_polar(1.0, w * t);
        let mut rot = Complex64::new(1.0, 0.0);
        let mut acc = if order == 0 { self.harmonics[0].re } else { 0.0 };
        for (k, a) in self.harmonics.iter().enumerate().skip(1) {
            rot *= step;
            if k % 64 == 0 {
                rot = Complex64::from_polar(1.0, w * t * k as f64);
            }
            let mut term = a * rot;
            if order == 1 {
                term *= Complex64::new(0.0, w * k as f64);
            }
            acc += 2.0 * term.re;
        }
        acc
    }

    /// s(t); the code repeats every period.
    pub fn value(&self, t: f64) -> f64 {
        self.series(t, 0)
    }

    /// ds/dt.
    pub fn derivative(&self, t: f64) -> f64 {
        self.series(t, 1)
    }

    /// s^(order)(t_i - delay) on the window grid, using an FFT over one code
    /// period when the period spans a whole number of samples.
    fn sampled(&self, window: &SamplingWindow, delay: f64, order: i32) -> Vec<f64> {
        let t = window.times();
        let np_f = window.sample_rate * self.period();
        let np = np_f.round() as usize;
        if (np_f - np as f64).abs() > 1e-9 * np_f || np < 2 * self.harmonics.len() {
            return t.iter().map(|&ti| self.series(ti - delay, order)).collect();
        }
        let w = std::f64::consts::TAU / self.period();
        let t0 = t.first().copied().unwrap_or(0.0) - delay;
        let mut buf = vec![Complex64::new(0.0, 0.0); np];
        for (k, a) in self.harmonics.iter().enumerate() {
            let mut b = a * Complex64::from_polar(1.0, w * k as f64 * t0);
            if order == 1 {
                b *= Complex64::new(0.0, w * k as f64);
            }
            if k == 0 {
                buf[0] += b;
            } else {
                buf[k] += b;
                buf[np - k] += b.conj();
            }
        }
        let mut planner = rustfft::FftPlanner::new();
        planner.plan_fft_inverse(np).process(&mut buf);
        (0..t.len()).map(|i| buf[i % np].re).collect()
    }
}

fn check_delay(window: &SamplingWindow, delay: f64) -> Result<()> {
    if !(delay.abs() < window.duration) {
        return Err(Error::Window { delay, window: window.duration });
    }
    Ok(())
}

fn modulate(window: &SamplingWindow, base: Vec<f64>, doppler: f64) -> CVector {
    let t = window.times();
    CVector::from_iterator(
        t.len(),
        t.iter().zip(base).map(|(&ti, s)| Complex64::from_polar(s, std::f64::consts::TAU * doppler * ti)),
    )
}

/// s(t - tau) exp(j 2 pi f_d t) over the window.
pub fn sample_signal(sig: &NavSignal, window: &SamplingWindow, delay: f64, doppler: f64) -> Result<CVector> {
    check_delay(window, delay)?;
    Ok(modulate(window, sig.sampled(window, delay, 0), doppler))
}

/// s'(t - tau) exp(j 2 pi f_d t) over the window.
pub fn sample_signal_derivative(sig: &NavSignal, window: &SamplingWindow, delay: f64, doppler: f64) -> Result<CVector> {
    check_delay(window, delay)?;
    Ok(modulate(window, sig.sampled(window, delay, 1), doppler))
}

/// Doppler shift at carrier `carrier` seen by a UE at `p` moving with `gamma`.
pub fn doppler_shift(eta: &Vec3, gamma: &Vec3, q: &Vec3, p: &Vec3, carrier: f64, c: f64) -> f64 {
    let u = (q - p).normalize();
    -(eta - gamma).dot(&u) * carrier / c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gold_family_cross_correlation() {
        let codes: Vec<_> = (0..6).map(|i| gen_nav_sequence(11, GOLD_LENGTH, i / 3, i % 3, 10e6).unwrap().chips).collect();
        for a in &codes {
            assert_eq!(correlation(a, a, 0), 1.0);
        }
        let mut worst: f64 = 0.0;
        for i in 0..codes.len() {
            for j in (i + 1)..codes.len() {
                for lag in 0..GOLD_LENGTH {
                    worst = worst.max(correlation(&codes[i], &codes[j], lag).abs());
                }
            }
        }
        assert!(worst <= GOLD_CROSS_BOUND + 1e-12, "{worst}");
        assert!(worst < 0.1);
    }

    #[test]
    fn generator_is_balanced_m_sequence() {
        // An m-sequence of degree 10 has 512 ones and 511 zeros.
        let g1 = lfsr_m_sequence(&[3, 10]);
        assert_eq!(g1.iter().filter(|&&b| b == 1).count(), 512);
        let g2 = lfsr_m_sequence(&[2, 3, 6, 8, 9, 10]);
        assert_eq!(g2.iter().filter(|&&b| b == 1).count(), 512);
    }

    #[test]
    fn unit_power_over_window() {
        let sig = gen_nav_sequence(3, GOLD_LENGTH, 0, 1, 10e6).unwrap();
        let x = sample_signal(&sig, &SamplingWindow::default(), 0.0, 0.0).unwrap();
        let p = x.norm_squared() / x.len() as f64;
        assert!((p - 1.0).abs() < 1e-3, "{p}");
    }

    #[test]
    fn centered_times_cancel() {
        let w = SamplingWindow::default();
        let t = w.times();
        let n = t.len();
        assert_eq!(n, 40_000);
        for i in 0..n {
            assert_eq!(t[i], -t[n - 1 - i]);
        }
        let s: f64 = (0..n / 2).map(|i| t[i] + t[n - 1 - i]).sum();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        // Five-point central stencil; the plain two-point difference has an
        // O((w h)^2) error near 1e-3 at this step for a 7.5 MHz band edge.
        let sig = gen_nav_sequence(5, GOLD_LENGTH, 1, 2, 10e6).unwrap();
        let h = 1.0 / (8.0 * 40e6);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..400 {
            let t = -5e-5 + i as f64 * 3.7e-8;
            let fd = (sig.value(t - 2.0 * h) - 8.0 * sig.value(t - h) + 8.0 * sig.value(t + h) - sig.value(t + 2.0 * h))
                / (12.0 * h);
            let an = sig.derivative(t);
            num += (fd - an).powi(2);
            den += an * an;
        }
        assert!((num / den).sqrt() < 1e-4, "{}", (num / den).sqrt());
    }

    #[test]
    fn dc_waveform_has_zero_slope() {
        let sig = NavSignal::new(vec![1.0; 64], 10e6);
        for i in 0..50 {
            let t = i as f64 * 1.3e-7;
            assert!(sig.derivative(t).abs() < 1e-9 * sig.chip_rate);
            assert_relative_eq!(sig.value(t), 1.0, max_relative = 1e-12);
        }
        let w = SamplingWindow { duration: 2e-5, ..SamplingWindow::default() };
        let d = sample_signal_derivative(&sig, &w, 3e-7, 0.0).unwrap();
        assert!(d.iter().all(|z| z.norm() < 1e-9 * sig.chip_rate));
    }

    #[test]
    fn fft_grid_matches_pointwise_series() {
        let sig = gen_nav_sequence(9, GOLD_LENGTH, 0, 0, 10e6).unwrap();
        let w = SamplingWindow::default();
        let tau = 3.3317e-6;
        let x = sample_signal(&sig, &w, tau, 1234.5).unwrap();
        let dx = sample_signal_derivative(&sig, &w, tau, 0.0).unwrap();
        let t = w.times();
        for i in (0..t.len()).step_by(997) {
            let want = Complex64::from_polar(sig.value(t[i] - tau), std::f64::consts::TAU * 1234.5 * t[i]);
            assert!((x[i] - want).norm() < 1e-10, "{i}");
            assert!((dx[i].re - sig.derivative(t[i] - tau)).abs() < 1e-10 * sig.chip_rate, "{i}");
        }
    }

    #[test]
    fn delay_preserves_energy() {
        let sig = gen_nav_sequence(2, GOLD_LENGTH, 1, 0, 10e6).unwrap();
        let w = SamplingWindow::default();
        let e0 = sample_signal(&sig, &w, 0.0, 0.0).unwrap().norm_squared();
        for tau in [1e-8, 3.3e-7, 2e-6] {
            let e = sample_signal(&sig, &w, tau, 0.0).unwrap().norm_squared();
            assert!((e / e0 - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn pure_tone_limit() {
        let sig = NavSignal::new(vec![1.0; 31], 10e6);
        let w = SamplingWindow { duration: 1e-5, ..SamplingWindow::default() };
        let x = sample_signal(&sig, &w, 0.0, 5e5).unwrap();
        for (ti, xi) in w.times().iter().zip(x.iter()) {
            let want = Complex64::from_polar(1.0, std::f64::consts::TAU * 5e5 * ti);
            assert!((xi - want).norm() < 1e-12);
        }
    }

    #[test]
    fn delay_outside_window() {
        let sig = NavSignal::new(vec![1.0, -1.0, 1.0], 10e6);
        let w = SamplingWindow::default();
        assert!(matches!(sample_signal(&sig, &w, 2e-3, 0.0), Err(Error::Window { .. })));
    }

    #[test]
    fn doppler_examples() {
        let q = Vec3::new(7e6, 0.0, 0.0);
        let p = Vec3::new(6.4e6, 0.0, 0.0);
        let approach = Vec3::new(-7.5e3, 0.0, 0.0);
        let f = doppler_shift(&approach, &Vec3::zeros(), &q, &p, 35e9, 3e8);
        assert_relative_eq!(f, 875e3, max_relative = 1e-12);
        let g = doppler_shift(&-approach, &Vec3::zeros(), &q, &p, 35e9, 3e8);
        assert_eq!(f, -g);
        let side = Vec3::new(0.0, 7.5e3, 0.0);
        assert_eq!(doppler_shift(&side, &Vec3::zeros(), &q, &p, 35e9, 3e8), 0.0);
    }
}
