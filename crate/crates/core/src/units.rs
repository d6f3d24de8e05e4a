//! Unit conventions and conversion constants.
//!
//! Energies and frequencies are in cm⁻¹, times in fs, temperatures in K.
//! Anything that enters a phase `ω t` must first go through [`angular`].

/// Angular frequency in rad/fs per cm⁻¹ (2πc).
pub const RAD_PER_FS_PER_CM1: f64 = 1.883_651_567e-4;

/// Boltzmann constant in cm⁻¹/K.
pub const KB_CM1_PER_K: f64 = 0.695_034_800;

/// cm⁻¹ per meV.
pub const CM1_PER_MEV: f64 = 8.065_54;

/// cm⁻¹ → rad/fs.
#[inline]
pub fn angular(cm1: f64) -> f64 {
    cm1 * RAD_PER_FS_PER_CM1
}

/// rad/fs → cm⁻¹.
#[inline]
pub fn from_angular(rad_per_fs: f64) -> f64 {
    rad_per_fs / RAD_PER_FS_PER_CM1
}

/// A rate given in fs⁻¹ expressed as a width in cm⁻¹, e.g. 1 ps⁻¹ ≈ 5.31 cm⁻¹.
#[inline]
pub fn rate_to_cm1(per_fs: f64) -> f64 {
    per_fs / RAD_PER_FS_PER_CM1
}

#[inline]
pub fn mev_to_cm1(mev: f64) -> f64 {
    mev * CM1_PER_MEV
}

#[inline]
pub fn cm1_to_mev(cm1: f64) -> f64 {
    cm1 / CM1_PER_MEV
}

/// Thermal energy k_B T in cm⁻¹.
#[inline]
pub fn thermal_energy(temperature: f64) -> f64 {
    KB_CM1_PER_K * temperature
}

/// coth(ω / 2k_BT), with T = 0 mapped to 1.
///
/// Not safe at ω = 0; use [`j_coth`] for densities that vanish there.
pub fn coth_factor(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return omega.signum();
    }
    let x = omega / (2.0 * thermal_energy(temperature));
    coth(x)
}

pub(crate) fn coth(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-3 {
        1.0 / x + x / 3.0
    } else if ax > 20.0 {
        x.signum() * (1.0 + 2.0 * (-2.0 * ax).exp())
    } else {
        1.0 / x.tanh()
    }
}

/// J(ω)·coth(ω/2k_BT) given the value J(ω) and the small-ω slope J(ω)/ω.
///
/// Near ω = 0 the expansion coth x ≈ 1/x + x/3 is used so that the product
/// stays finite when J is linear in ω.
pub fn j_coth(j: f64, j_over_omega: f64, omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return j;
    }
    let two_kt = 2.0 * thermal_energy(temperature);
    let x = omega / two_kt;
    if x.abs() < 1e-3 {
        j_over_omega * two_kt + j * x / 3.0
    } else {
        j * coth(x)
    }
}

/// Bose-Einstein occupation of a mode at `omega` (cm⁻¹).
pub fn bose(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = omega / thermal_energy(temperature);
    1.0 / x.exp_m1()
}
