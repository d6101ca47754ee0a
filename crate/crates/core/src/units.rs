//! Physical constants and the SI ↔ natural (Heaviside-Lorentz, ħ = c = 1) bridge.
//!
//! Everything is evaluated once in `f64` from CODATA 2018 values and then
//! narrowed to the working scalar. Public APIs elsewhere take and return SI;
//! natural units only appear inside the ALP formulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub mod codata {
    pub const ALPHA: f64 = 7.297_352_569_3e-3;
    pub const E_CHARGE: f64 = 1.602_176_634e-19;
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const C: f64 = 299_792_458.0;
    pub const M_E: f64 = 9.109_383_701_5e-31;
    pub const K_B: f64 = 1.380_649e-23;
    pub const MU_0: f64 = 1.256_637_062_12e-6;
    /// Electron rest energy in eV.
    pub const M_E_EV: f64 = 510_998.950_00;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants<F> {
    pub alpha: F,
    /// C
    pub e_charge: F,
    /// J·s
    pub hbar: F,
    /// m/s
    pub c: F,
    /// kg
    pub m_e: F,
    /// J/K
    pub k_b: F,
    /// T·m/A
    pub mu_0: F,
    /// eV
    pub m_e_ev: F,
    /// ħc in eV·m
    pub hbar_c_ev_m: F,
    /// Euler-Heisenberg nonlinearity scale, T⁻².
    pub a_e: F,
    /// T
    pub b_crit: F,
    /// V/m
    pub e_crit: F,
    /// Reduced Compton wavelength of the electron, m.
    pub lambdabar_e: F,
}

/// Conversion factors into natural Heaviside-Lorentz units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalUnitBridge<F> {
    /// eV² per tesla
    pub tesla_to_ev2: F,
    /// eV⁻¹ per metre
    pub meter_to_inv_ev: F,
}

/// `A_e = (2 / 45 μ0) α² ƛ³ / (m c²)` evaluated in f64.
fn a_e_f64() -> f64 {
    use codata::*;
    let lambdabar = HBAR / (M_E * C);
    2.0 / (45.0 * MU_0) * ALPHA * ALPHA * lambdabar.powi(3) / (M_E * C * C)
}

impl<F: Real> PhysicalConstants<F> {
    pub fn codata() -> Self {
        use codata::*;
        let b_crit = M_E * M_E * C * C / (E_CHARGE * HBAR);
        Self {
            alpha: lit(ALPHA),
            e_charge: lit(E_CHARGE),
            hbar: lit(HBAR),
            c: lit(C),
            m_e: lit(M_E),
            k_b: lit(K_B),
            mu_0: lit(MU_0),
            m_e_ev: lit(M_E_EV),
            hbar_c_ev_m: lit(HBAR * C / E_CHARGE),
            a_e: lit(a_e_f64()),
            b_crit: lit(b_crit),
            e_crit: lit(b_crit * C),
            lambdabar_e: lit(HBAR / (M_E * C)),
        }
    }

    /// Photon energy ħω in eV for a vacuum wavelength in metres.
    pub fn photon_energy_ev(&self, wavelength_m: F) -> F {
        F::TAU() * self.hbar_c_ev_m / wavelength_m
    }

    /// Critical field `m²c²/(qħ)` for a particle of rest energy `mass_ev` and unit charge.
    ///
    /// Written as `m[eV]² / (c · ħc[eV·m])` so it stays in range for `f32`.
    pub fn critical_field(&self, mass_ev: F) -> F {
        mass_ev * mass_ev / (self.c * self.hbar_c_ev_m)
    }
}

impl<F: Real> Default for PhysicalConstants<F> {
    fn default() -> Self {
        Self::codata()
    }
}

impl<F: Real> NaturalUnitBridge<F> {
    pub fn codata() -> Self {
        use codata::*;
        // 1 T = sqrt(ħ³c³ / (e⁴ μ0)) eV², 1 m = e / (ħc) eV⁻¹
        let t = (HBAR.powi(3) * C.powi(3) / (E_CHARGE.powi(4) * MU_0)).sqrt();
        Self {
            tesla_to_ev2: lit(t),
            meter_to_inv_ev: lit(E_CHARGE / (HBAR * C)),
        }
    }

    pub fn tesla_to_natural(&self, b_tesla: F) -> Result<F> {
        if !(b_tesla >= F::zero()) {
            return Err(Error::Domain(format!("magnetic field must be >= 0 T, got {b_tesla}")));
        }
        Ok(b_tesla * self.tesla_to_ev2)
    }

    pub fn meter_to_natural(&self, length_m: F) -> Result<F> {
        if !(length_m >= F::zero()) {
            return Err(Error::Domain(format!("length must be >= 0 m, got {length_m}")));
        }
        Ok(length_m * self.meter_to_inv_ev)
    }

    pub fn natural_to_tesla(&self, b_ev2: F) -> F {
        b_ev2 / self.tesla_to_ev2
    }

    pub fn natural_to_meter(&self, l_inv_ev: F) -> F {
        l_inv_ev / self.meter_to_inv_ev
    }
}

impl<F: Real> Default for NaturalUnitBridge<F> {
    fn default() -> Self {
        Self::codata()
    }
}
