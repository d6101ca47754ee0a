//! Magnetically induced birefringence Δn (and dichroism Δκ) for each vacuum model.
//!
//! Sign convention throughout: Δn = n∥ − n⊥ and Δκ = κ∥ − κ⊥, with ∥ meaning
//! light polarisation parallel to the external field.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::units::{NaturalUnitBridge, PhysicalConstants};

/// Lower edge of the χ band in which neither MCP asymptotic form holds.
pub const MCP_GAP_LOW: f64 = 0.2;
/// Upper edge of the χ band in which neither MCP asymptotic form holds.
pub const MCP_GAP_HIGH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams<F> {
    /// m
    pub wavelength: F,
    /// ħω in eV
    pub photon_energy: F,
}

impl<F: Real> BeamParams<F> {
    pub fn new(k: &PhysicalConstants<F>, wavelength: F) -> Result<Self> {
        if !(wavelength > F::zero()) || !wavelength.is_finite() {
            return Err(Error::Domain(format!("wavelength must be > 0, got {wavelength}")));
        }
        Ok(Self { wavelength, photon_energy: k.photon_energy_ev(wavelength) })
    }
}

/// Magnetic field seen by the beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRegion<F> {
    /// T
    pub b_ext: F,
    /// m
    pub length: F,
    /// ∫B² dL in T²·m; may differ from B_ext²·L for measured, non-uniform fields.
    pub int_b2_dl: F,
}

impl<F: Real> FieldRegion<F> {
    pub fn uniform(b_ext: F, length: F) -> Self {
        Self { b_ext, length, int_b2_dl: b_ext * b_ext * length }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.b_ext >= F::zero()) {
            errs.push(format!("B_ext must be >= 0, got {}", self.b_ext));
        }
        if !(self.length >= F::zero()) {
            errs.push(format!("L must be >= 0, got {}", self.length));
        }
        if !(self.int_b2_dl >= F::zero()) {
            errs.push(format!("int_B2_dL must be >= 0, got {}", self.int_b2_dl));
        }
        if errs.is_empty() { Ok(()) } else { Err(Error::Validation(errs)) }
    }

    /// ⟨B²⟩ = ∫B²dL / L.
    pub fn mean_b2(&self) -> F {
        if self.length > F::zero() {
            self.int_b2_dl / self.length
        } else {
            self.b_ext * self.b_ext
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlpKind {
    Pseudoscalar,
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlpModel<F> {
    pub kind: AlpKind,
    /// Two-photon coupling in eV⁻¹.
    pub g: F,
    /// Particle mass in eV.
    pub mass: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McpKind {
    Fermion,
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McpModel<F> {
    pub kind: McpKind,
    /// Charge in units of e.
    pub epsilon: F,
    /// Particle mass in eV.
    pub mass: F,
}

/// Which asymptotic branch of the MCP index formulas applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McpRegime {
    /// χ ≪ 1 (heavy particles)
    Weak,
    /// χ ≫ 1 (light particles)
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedBirefringence<F> {
    pub delta_n: F,
    /// Zero for models without absorption.
    pub delta_kappa: F,
    /// False only inside the MCP gap band, where the nearest asymptote is returned.
    pub regime_valid: bool,
}

impl<F: Real> SignedBirefringence<F> {
    fn pure(delta_n: F) -> Self {
        Self { delta_n, delta_kappa: F::zero(), regime_valid: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BirefringenceModel<F> {
    Ehw,
    PostMaxwellian { eta1: F, eta2: F },
    /// EHW including the α³ radiative correction.
    Radiative,
    Alp(AlpModel<F>),
    Mcp(McpModel<F>),
}

/// Which field quantity the B²-proportional models use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldMode {
    /// B_ext
    #[default]
    Uniform,
    /// √⟨B²⟩ from ∫B²dL, for path-integrated ellipticity.
    PathAveraged,
}

fn check_field<F: Real>(b: F) -> Result<()> {
    if b >= F::zero() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("magnetic field must be finite and >= 0, got {b}")))
    }
}

/// Index excesses (x − 1) of the EHW vacuum. Stored as excesses because
/// 1 + 10⁻²³ is not representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhwIndices<F> {
    pub n_par: F,
    pub n_perp: F,
    pub eps_par: F,
    pub eps_perp: F,
    pub mu_par: F,
    pub mu_perp: F,
}

impl<F: Real> EhwIndices<F> {
    pub fn delta_n(&self) -> F {
        self.n_par - self.n_perp
    }
}

pub fn ehw_indices<F: Real>(k: &PhysicalConstants<F>, b: F) -> Result<EhwIndices<F>> {
    check_field(b)?;
    let x = k.a_e * b * b;
    Ok(EhwIndices {
        n_par: lit::<F>(7.0) * x,
        n_perp: lit::<F>(4.0) * x,
        eps_par: lit::<F>(10.0) * x,
        eps_perp: lit::<F>(-4.0) * x,
        mu_par: lit::<F>(4.0) * x,
        mu_perp: lit::<F>(12.0) * x,
    })
}

/// Δn = 3 A_e B².
pub fn ehw_birefringence<F: Real>(k: &PhysicalConstants<F>, b: F) -> Result<F> {
    Ok(ehw_indices(k, b)?.delta_n())
}

/// Δn = 2 (η₂ − η₁) B² / B_crit². Zero for Born-Infeld (η₁ = η₂).
pub fn post_maxwellian_birefringence<F: Real>(
    k: &PhysicalConstants<F>,
    eta1: F,
    eta2: F,
    b: F,
) -> Result<F> {
    check_field(b)?;
    let xi_b2 = (b / k.b_crit).powi(2);
    Ok(lit::<F>(2.0) * (eta2 - eta1) * xi_b2)
}

/// η₁ = α/45π, η₂ = 7η₁/4: the parameters that reproduce EHW.
pub fn post_maxwellian_ehw_parameters<F: Real>(k: &PhysicalConstants<F>) -> (F, F) {
    let eta1 = k.alpha / (lit::<F>(45.0) * F::PI());
    (eta1, lit::<F>(1.75) * eta1)
}

/// 25α/4π
pub fn radiative_correction_factor<F: Real>(k: &PhysicalConstants<F>) -> F {
    lit::<F>(25.0) * k.alpha / (lit::<F>(4.0) * F::PI())
}

pub fn radiative_corrected_birefringence<F: Real>(k: &PhysicalConstants<F>, b: F) -> Result<F> {
    Ok((F::one() + radiative_correction_factor(k)) * ehw_birefringence(k, b)?)
}

/// sin x / x, series below |x| < 1e-4.
pub fn sinc<F: Real>(x: F) -> F {
    if x.abs() < lit(1e-4) {
        let x2 = x * x;
        F::one() - x2 / lit(6.0) + x2 * x2 / lit(120.0)
    } else {
        x.sin() / x
    }
}

/// 1 − sin y / y without cancellation for small y.
pub fn one_minus_sinc<F: Real>(y: F) -> F {
    if y.abs() < lit(0.1) {
        let y2 = y * y;
        // y²/6 − y⁴/120 + y⁶/5040 − y⁸/362880
        y2 / lit(6.0) * (F::one() - y2 / lit(20.0) * (F::one() - y2 / lit(42.0) * (F::one() - y2 / lit(72.0))))
    } else {
        F::one() - y.sin() / y
    }
}

/// Mixing phase x = L m² / 4ω in natural units.
pub fn alp_mixing_phase<F: Real>(mass_ev: F, length_m: F, photon_energy_ev: F) -> Result<F> {
    let l = NaturalUnitBridge::<F>::codata().meter_to_natural(length_m)?;
    Ok(l * mass_ev * mass_ev / (lit::<F>(4.0) * photon_energy_ev))
}

fn check_alp<F: Real>(model: &AlpModel<F>) -> Result<()> {
    if !(model.mass > F::zero()) {
        return Err(Error::Domain(format!("ALP mass must be > 0, got {}", model.mass)));
    }
    if !(model.g >= F::zero()) {
        return Err(Error::Domain(format!("ALP coupling must be >= 0, got {}", model.g)));
    }
    Ok(())
}

/// Birefringence and dichroism from virtual and real ALP production in a
/// uniform field region.
///
/// |Δκ| = 2 (gBL/4)² (sin x / x)², |Δn| = g²B²/(2m²) (1 − sin 2x / 2x).
/// A pseudoscalar acts on the ∥ component (both positive); a scalar on ⊥
/// (both negative).
pub fn alp_effect<F: Real>(
    model: &AlpModel<F>,
    region: &FieldRegion<F>,
    beam: &BeamParams<F>,
) -> Result<SignedBirefringence<F>> {
    check_alp(model)?;
    region.validate()?;
    let bridge = NaturalUnitBridge::<F>::codata();
    let b = bridge.tesla_to_natural(region.b_ext)?;
    let l = bridge.meter_to_natural(region.length)?;
    let m = model.mass;
    let two = lit::<F>(2.0);
    let x = l * m * m / (lit::<F>(4.0) * beam.photon_energy);

    let gbl4 = model.g * b * l / lit(4.0);
    let kappa = two * gbl4 * gbl4 * sinc(x).powi(2);
    let dn = model.g * model.g * b * b / (two * m * m) * one_minus_sinc(two * x);

    let sign = match model.kind {
        AlpKind::Pseudoscalar => F::one(),
        AlpKind::Scalar => -F::one(),
    };
    Ok(SignedBirefringence { delta_n: sign * dn, delta_kappa: sign * kappa, regime_valid: true })
}

/// |Δn| for x ≪ 1: g²B²m²L²/(48ω²).
pub fn alp_delta_n_small_mass<F: Real>(model: &AlpModel<F>, region: &FieldRegion<F>, beam: &BeamParams<F>) -> Result<F> {
    let bridge = NaturalUnitBridge::<F>::codata();
    let b = bridge.tesla_to_natural(region.b_ext)?;
    let l = bridge.meter_to_natural(region.length)?;
    let w = beam.photon_energy;
    Ok((model.g * b * model.mass * l / w).powi(2) / lit(48.0))
}

/// |Δn| for x ≫ 1: g²B²/(2m²).
pub fn alp_delta_n_large_mass<F: Real>(model: &AlpModel<F>, region: &FieldRegion<F>) -> Result<F> {
    let b = NaturalUnitBridge::<F>::codata().tesla_to_natural(region.b_ext)?;
    Ok((model.g * b / model.mass).powi(2) / lit(2.0))
}

fn check_mcp<F: Real>(model: &McpModel<F>) -> Result<()> {
    if !(model.mass > F::zero()) {
        return Err(Error::Domain(format!("MCP mass must be > 0, got {}", model.mass)));
    }
    if !(model.epsilon >= F::zero()) {
        return Err(Error::Domain(format!("MCP charge fraction must be >= 0, got {}", model.epsilon)));
    }
    Ok(())
}

/// χ = (3/2)(ħω / m c²)(εeBħ / m²c²).
pub fn mcp_chi<F: Real>(k: &PhysicalConstants<F>, model: &McpModel<F>, beam: &BeamParams<F>, b: F) -> Result<F> {
    check_mcp(model)?;
    check_field(b)?;
    let energy_ratio = beam.photon_energy / model.mass;
    let field_ratio = model.epsilon * b / k.critical_field(model.mass);
    Ok(lit::<F>(1.5) * energy_ratio * field_ratio)
}

/// π^{1/2} 2^{1/3} Γ(2/3)² / Γ(1/6)
pub fn mcp_strong_field_prefactor() -> f64 {
    std::f64::consts::PI.sqrt() * 2f64.cbrt() * gamma(2.0 / 3.0).powi(2) / gamma(1.0 / 6.0)
}

/// Regime coefficient c such that Δn = c · A_ε B² (weak) or c · χ^{−4/3} A_ε B² (strong).
pub fn mcp_coefficient(kind: McpKind, regime: McpRegime) -> f64 {
    let strong = 45.0 / 2.0 * mcp_strong_field_prefactor();
    match (kind, regime) {
        (McpKind::Fermion, McpRegime::Weak) => 3.0,
        (McpKind::Fermion, McpRegime::Strong) => -9.0 / 7.0 * strong,
        (McpKind::Scalar, McpRegime::Weak) => -1.5,
        (McpKind::Scalar, McpRegime::Strong) => 9.0 / 14.0 * strong,
    }
}

/// Δn evaluated with the given asymptotic branch, irrespective of χ.
pub fn mcp_birefringence_in_regime<F: Real>(
    k: &PhysicalConstants<F>,
    model: &McpModel<F>,
    beam: &BeamParams<F>,
    b: F,
    regime: McpRegime,
) -> Result<F> {
    check_mcp(model)?;
    check_field(b)?;
    // A_ε = A_e (ε m_e / m)⁴ since ƛ³/(mc²) ∝ m⁻⁴
    let r = model.epsilon * k.m_e_ev / model.mass;
    let coeff: F = lit(mcp_coefficient(model.kind, regime));
    let b2 = b * b;
    match regime {
        McpRegime::Weak => Ok(coeff * k.a_e * r.powi(4) * b2),
        McpRegime::Strong => {
            let chi = mcp_chi(k, model, beam, b)?;
            if chi == F::zero() {
                return Ok(F::zero());
            }
            // r⁴ χ^{-4/3} = (r³/χ)^{4/3}; keeps f32 intermediates in range
            let scale = (r.powi(3) / chi).powf(lit(4.0 / 3.0));
            Ok(coeff * k.a_e * scale * b2)
        }
    }
}

/// Δn for millicharged particles. Inside the gap band (0.2 < χ < 5) the
/// asymptote nearer in log χ is returned with `regime_valid = false`.
pub fn mcp_birefringence<F: Real>(
    k: &PhysicalConstants<F>,
    model: &McpModel<F>,
    beam: &BeamParams<F>,
    b: F,
) -> Result<SignedBirefringence<F>> {
    let chi = mcp_chi(k, model, beam, b)?;
    let regime = if chi < F::one() { McpRegime::Weak } else { McpRegime::Strong };
    let dn = mcp_birefringence_in_regime(k, model, beam, b, regime)?;
    let in_gap = chi > lit(MCP_GAP_LOW) && chi < lit(MCP_GAP_HIGH);
    Ok(SignedBirefringence { delta_n: dn, delta_kappa: F::zero(), regime_valid: !in_gap })
}

/// Δn for any model. B²-proportional models read B_ext or √⟨B²⟩ per `mode`;
/// ALPs always use the uniform B_ext over L.
pub fn birefringence<F: Real>(
    k: &PhysicalConstants<F>,
    model: &BirefringenceModel<F>,
    region: &FieldRegion<F>,
    beam: &BeamParams<F>,
    mode: FieldMode,
) -> Result<SignedBirefringence<F>> {
    region.validate()?;
    let b = match mode {
        FieldMode::Uniform => region.b_ext,
        FieldMode::PathAveraged => region.mean_b2().sqrt(),
    };
    match model {
        BirefringenceModel::Ehw => ehw_birefringence(k, b).map(SignedBirefringence::pure),
        BirefringenceModel::PostMaxwellian { eta1, eta2 } => {
            post_maxwellian_birefringence(k, *eta1, *eta2, b).map(SignedBirefringence::pure)
        }
        BirefringenceModel::Radiative => radiative_corrected_birefringence(k, b).map(SignedBirefringence::pure),
        BirefringenceModel::Alp(alp) => alp_effect(alp, region, beam),
        BirefringenceModel::Mcp(mcp) => mcp_birefringence(k, mcp, beam, b),
    }
}

/// Optical retardation Δn·L accumulated across a region, using ∫B²dL for
/// every model except ALPs.
pub fn retardation<F: Real>(
    k: &PhysicalConstants<F>,
    model: &BirefringenceModel<F>,
    region: &FieldRegion<F>,
    beam: &BeamParams<F>,
) -> Result<F> {
    let mode = match model {
        BirefringenceModel::Alp(_) => FieldMode::Uniform,
        _ => FieldMode::PathAveraged,
    };
    Ok(birefringence(k, model, region, beam, mode)?.delta_n * region.length)
}
