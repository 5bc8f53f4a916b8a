//! Satellite-to-ground link budget and sensing round-trip gains.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::consts::{db_to_lin, BOLTZMANN, LIGHT_SPEED};

/// Link-budget parameters in linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub carrier: f64,
    pub light_speed: f64,
    pub bandwidth: f64,
    pub noise_temperature: f64,
    pub boltzmann: f64,
    pub rx_gain: f64,
    pub b_max: f64,
    /// 3 dB beam angle (rad).
    pub eps_3db: f64,
    /// Mean of the rain fade magnitude in dB.
    pub rain_mean_db: f64,
    /// Variance of the rain fade magnitude in dB^2.
    pub rain_var_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            carrier: 35e9,
            light_speed: LIGHT_SPEED,
            bandwidth: 20e6,
            noise_temperature: 100.0,
            boltzmann: BOLTZMANN,
            rx_gain: db_to_lin(55.0),
            b_max: db_to_lin(16.0),
            eps_3db: 0.4f64.to_radians(),
            rain_mean_db: -2.6,
            rain_var_db: 1.63,
        }
    }
}

impl ChannelParams {
    pub fn wavelength(&self) -> f64 {
        self.light_speed / self.carrier
    }

    pub fn noise_power(&self) -> f64 {
        noise_power(self.boltzmann, self.bandwidth, self.noise_temperature)
    }

    /// Free-space amplitude factor c / (4 pi f' d).
    pub fn free_space(&self, d: f64) -> f64 {
        self.light_speed / (4.0 * std::f64::consts::PI * self.carrier * d)
    }
}

/// Thermal noise power kappa * B * T in watts.
pub fn noise_power(boltzmann: f64, bandwidth: f64, temperature: f64) -> f64 {
    boltzmann * bandwidth * temperature
}

/// Reference direction for the off-boresight angle of a navigation link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boresight {
    /// Beam steered onto each link; the pattern is read at its peak.
    #[default]
    Steered,
    /// Angle between the array normal and the link.
    ArrayNormal,
}

impl Boresight {
    /// Off-boresight angle for a link at angle `theta` from the array normal.
    pub fn angle(self, theta: f64) -> f64 {
        match self {
            Boresight::Steered => 0.0,
            Boresight::ArrayNormal => theta,
        }
    }
}

/// Bessel-type satellite array gain at off-boresight angle `eps_b`.
///
/// The pattern term oscillates in sign beyond the main lobe; its magnitude is
/// cubed so the sidelobe gain stays non-negative.
pub fn array_gain(eps_b: f64, b_max: f64, eps_3db: f64) -> f64 {
    let u = 2.071 * eps_b.sin() / eps_3db.sin();
    b_max * pattern_term(u).abs().powi(3)
}

fn pattern_term(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        // J1(u)/(2u) -> 1/4 - u^2/32, 36 J3(u)/u^3 -> 3/4 - 3u^2/32
        return 1.0 - u * u / 8.0;
    }
    puruspe::Jn(1, u) / (2.0 * u) + 36.0 * puruspe::Jn(3, u) / u.powi(3)
}

/// Rain fade chi = |xi|^(1/2) e^{-j psi}; the magnitude is log-normal with the
/// given dB mean and variance, the phase uniform.
pub fn rain_attenuation<R: Rng + ?Sized>(rng: &mut R, mean_db: f64, var_db: f64) -> Complex64 {
    let db = if var_db > 0.0 {
        Normal::new(mean_db, var_db.sqrt()).expect("finite rain parameters").sample(rng)
    } else {
        mean_db
    };
    let psi = rng.gen_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(10f64.powf(db / 20.0), -psi)
}

/// Downlink amplitude alpha_{k,m}.
pub fn nav_channel_gain(p: &ChannelParams, distance: f64, eps_b: f64, chi: Complex64) -> Complex64 {
    let path = (p.free_space(distance).powi(2) * p.rx_gain).sqrt();
    chi * path * array_gain(eps_b, p.b_max, p.eps_3db).sqrt()
}

/// Free-space round-trip amplitude for a bistatic sensing path.
pub fn sensing_round_trip_gain(p: &ChannelParams, d_tx: f64, d_rx: f64) -> Complex64 {
    Complex64::new(p.free_space(d_tx) * p.free_space(d_rx), 0.0)
}
