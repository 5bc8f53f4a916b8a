//! Physical constants shared across modules.

/// Earth gravitational parameter (m^3/s^2).
pub const MU_EARTH: f64 = 3.986004418e14;
/// Mean Earth radius (m).
pub const R_EARTH: f64 = 6.371e6;
/// Speed of light used throughout the link model (m/s).
pub const LIGHT_SPEED: f64 = 3.0e8;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.38e-23;

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}
