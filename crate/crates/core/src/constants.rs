//! Physical constants (SI, CODATA 2018 exact or recommended values).

use std::f64::consts::PI;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant, J s.
pub const H: f64 = 6.626_070_15e-34;
/// Bohr magneton, J/T.
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Nuclear magneton, J/T.
pub const MU_N: f64 = 5.050_783_746_1e-27;
/// Vacuum permeability, T m / A.
pub const MU0: f64 = 1.256_637_062_12e-6;
/// mu0 / 4 pi.
pub const MU0_OVER_4PI: f64 = MU0 / (4.0 * PI);
/// Free-electron g factor.
pub const G_FREE_ELECTRON: f64 = 2.002_319_304_36;
/// NV electron gyromagnetic ratio divided by 2 pi, Hz/T.
pub const GAMMA_NV_HZ_PER_T: f64 = 28.024e9;

/// Bundle of constants passed around where a configurable set is useful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysConstants {
    pub hbar: f64,
    pub h: f64,
    pub mu_b: f64,
    pub mu_n: f64,
    pub mu0: f64,
    /// Angular NV gyromagnetic ratio, rad/(s T).
    pub gamma_nv: f64,
    /// Angular free-electron gyromagnetic ratio, rad/(s T).
    pub gamma_e: f64,
}

impl Default for PhysConstants {
    fn default() -> Self {
        PhysConstants {
            hbar: HBAR,
            h: H,
            mu_b: MU_B,
            mu_n: MU_N,
            mu0: MU0,
            gamma_nv: 2.0 * PI * GAMMA_NV_HZ_PER_T,
            gamma_e: G_FREE_ELECTRON * MU_B / HBAR,
        }
    }
}

impl PhysConstants {
    pub fn gamma_nv_hz(&self) -> f64 {
        self.gamma_nv / (2.0 * PI)
    }

    pub fn gamma_e_hz(&self) -> f64 {
        self.gamma_e / (2.0 * PI)
    }

    pub fn is_valid(&self) -> bool {
        [
            self.hbar,
            self.h,
            self.mu_b,
            self.mu_n,
            self.mu0,
            self.gamma_nv,
            self.gamma_e,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_positive_and_nv_gamma_exact() {
        let c = PhysConstants::default();
        assert!(c.is_valid());
        assert_eq!(c.gamma_nv_hz(), 28.024e9);
        assert!((c.h / (2.0 * PI) - c.hbar).abs() / c.hbar < 1e-9);
    }

    #[test]
    fn free_electron_ratio() {
        // 28.0249514 GHz/T
        let c = PhysConstants::default();
        assert!((c.gamma_e_hz() / 28.024_951_4e9 - 1.0).abs() < 1e-7);
    }
}
