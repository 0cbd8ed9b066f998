//! CODATA 2018 values in SI units.

use std::f64::consts::PI;

/// Planck constant, J s (exact).
pub const H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = H / (2.0 * PI);
/// Bohr magneton, J/T.
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Nuclear magneton, J/T.
pub const MU_N: f64 = 5.050_783_746_1e-27;
/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum permeability, T m/A.
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// Free-electron g-factor.
pub const G_FREE_ELECTRON: f64 = 2.002_319_304_362_56;
/// Free-proton g-factor.
pub const G_PROTON: f64 = 5.585_694_689_3;
/// Ground-state hyperfine splitting of atomic hydrogen, Hz.
pub const A_HYDROGEN: f64 = 1_420.405_751_768e6;

/// Bundle of the constants used by the physics routines. Immutable; the
/// default is CODATA 2018.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub h: f64,
    pub hbar: f64,
    pub mu_b: f64,
    pub mu_n: f64,
    pub k_b: f64,
    pub mu_0: f64,
}

impl PhysicalConstants {
    pub const CODATA2018: PhysicalConstants = PhysicalConstants {
        h: H,
        hbar: HBAR,
        mu_b: MU_B,
        mu_n: MU_N,
        k_b: K_B,
        mu_0: MU_0,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA2018
    }
}

/// Electron gyromagnetic ratio g μ_B / h in Hz/T.
pub fn gamma_e_hz_per_tesla(g: f64) -> f64 {
    g * MU_B / H
}
