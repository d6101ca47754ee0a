//! Run configuration. Every physical quantity carries its unit in the key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vmb_core::birefringence::{AlpKind, AlpModel, BirefringenceModel, McpKind, McpModel};
use vmb_core::signal::{
    AlphaModel, DetectorSpec, ModulatorSpec, NoiseToggles, OpticsSpec, RinSpec, SpuriousHarmonic,
};
use vmb_core::{BeamParams, FieldRegion, MagnetSpec, PhysicalConstants, SynthConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSection>,
    pub beam: BeamSection,
    pub magnets: Vec<MagnetSection>,
    pub modulator: ModulatorSection,
    pub detector: DetectorSection,
    pub optics: OpticsSection,
    #[serde(default)]
    pub alpha: AlphaSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub model: ModelSection,
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(rename = "A_e_per_T2", default, skip_serializing_if = "Option::is_none")]
    pub a_e: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub wavelength_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetSection {
    #[serde(rename = "B_ext_T")]
    pub b_ext: f64,
    #[serde(rename = "L_m")]
    pub length: f64,
    /// Defaults to B_ext² L.
    #[serde(rename = "int_B2_dL_T2m", default, skip_serializing_if = "Option::is_none")]
    pub int_b2_dl: Option<f64>,
    #[serde(rename = "nu_mag_Hz")]
    pub nu_mag: f64,
    #[serde(rename = "theta_mag_rad", default)]
    pub theta_mag: f64,
    #[serde(rename = "orientation_offset_rad", default)]
    pub orientation_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulatorSection {
    pub eta0: f64,
    #[serde(rename = "nu_mod_Hz")]
    pub nu_mod: f64,
    #[serde(rename = "theta_mod_rad", default)]
    pub theta_mod: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(rename = "responsivity_A_per_W")]
    pub responsivity: f64,
    #[serde(rename = "gain_Ohm")]
    pub gain: f64,
    #[serde(rename = "dark_noise_A_per_rtHz", default)]
    pub dark_noise: f64,
    #[serde(rename = "temperature_K", default)]
    pub temperature: f64,
    #[serde(rename = "rin_white_per_rtHz", default)]
    pub rin_white: f64,
    #[serde(rename = "rin_corner_Hz", default)]
    pub rin_corner: f64,
}

/// Give exactly one of `finesse` or `mirror_r2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsSection {
    pub sigma2: f64,
    #[serde(rename = "I_out_W")]
    pub i_out: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finesse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror_r2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSection {
    #[serde(default)]
    pub dc: f64,
    #[serde(rename = "drift_per_s", default)]
    pub drift: f64,
    #[serde(rename = "flicker_psd_1Hz_per_Hz", default)]
    pub flicker_psd: f64,
    #[serde(rename = "flicker_corner_Hz", default)]
    pub flicker_corner: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub harmonics: Vec<HarmonicSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSection {
    pub harmonic: u32,
    pub amplitude: f64,
    #[serde(rename = "phase_rad", default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub shot: bool,
    #[serde(default)]
    pub dark: bool,
    #[serde(default)]
    pub johnson: bool,
    #[serde(default)]
    pub rin: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ehw,
    PostMaxwellian,
    Radiative,
    Alp,
    Mcp,
}

/// Parameters not used by `kind` must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
    /// `pseudoscalar`/`scalar` for ALPs, `fermion`/`scalar` for MCPs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particle: Option<String>,
    #[serde(rename = "g_per_eV", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(rename = "mass_eV", default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "sample_rate_Hz")]
    pub sample_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub normalized_output: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionTarget {
    AlpBirefringence,
    AlpDichroism,
    McpFermion,
    McpScalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub confidence: f64,
    pub window: vmb_core::analysis::WindowPolicy,
    /// Width of the ellipticity spectrum around the signal line.
    #[serde(rename = "band_Hz")]
    pub band: f64,
    pub exclusion: ExclusionTarget,
    #[serde(rename = "mass_min_eV")]
    pub mass_min: f64,
    #[serde(rename = "mass_max_eV")]
    pub mass_max: f64,
    pub mass_points: usize,
    pub eta0_min: f64,
    pub eta0_max: f64,
    pub eta0_points: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            confidence: 0.95,
            window: Default::default(),
            band: 2.0,
            exclusion: ExclusionTarget::AlpBirefringence,
            mass_min: 1e-5,
            mass_max: 1e-1,
            mass_points: 200,
            eta0_min: 1e-3,
            eta0_max: 1e-1,
            eta0_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from(".") }
    }
}

/// Overrides `[output] dir`.
pub const OUTPUT_DIR_ENV: &str = "VMB_OUTPUT_DIR";

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// SHA-256 of the canonical serialization, so comments and key order
    /// in the source file do not change it.
    pub fn hash(&self) -> String {
        crate::output::sha256_hex(self.to_toml().as_bytes())
    }

    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output.dir.clone(),
        }
    }

    /// Structural checks with key paths. Physics constraints are left to the
    /// core, which reports them all at once.
    // negated comparisons so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn check(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let mut positive = |key: String, v: f64| {
            if !(v > 0.0) || !v.is_finite() {
                errs.push(format!("{key} must be finite and > 0, got {v}"));
            }
        };
        positive("beam.wavelength_nm".into(), self.beam.wavelength_nm);
        for (i, m) in self.magnets.iter().enumerate() {
            positive(format!("magnets[{i}].L_m"), m.length);
            positive(format!("magnets[{i}].nu_mag_Hz"), m.nu_mag);
        }
        positive("modulator.nu_mod_Hz".into(), self.modulator.nu_mod);
        positive("optics.I_out_W".into(), self.optics.i_out);
        positive("synthesis.duration_s".into(), self.synthesis.duration);
        positive("synthesis.sample_rate_Hz".into(), self.synthesis.sample_rate);
        let a = &self.analysis;
        positive("analysis.band_Hz".into(), a.band);
        positive("analysis.mass_min_eV".into(), a.mass_min);
        positive("analysis.eta0_min".into(), a.eta0_min);
        if self.magnets.is_empty() {
            errs.push("magnets: at least one [[magnets]] entry is required".into());
        }
        for (i, m) in self.magnets.iter().enumerate() {
            if !(m.b_ext >= 0.0) {
                errs.push(format!("magnets[{i}].B_ext_T must be >= 0, got {}", m.b_ext));
            }
        }
        match (self.optics.finesse, self.optics.mirror_r2) {
            (Some(_), Some(_)) | (None, None) => {
                errs.push("optics: give exactly one of finesse or mirror_r2".into());
            }
            _ => {}
        }
        if !(a.confidence > 0.0 && a.confidence < 1.0) {
            errs.push(format!("analysis.confidence must lie in (0, 1), got {}", a.confidence));
        }
        if a.mass_points == 0 || !(a.mass_max >= a.mass_min) || (a.mass_points > 1 && a.mass_max == a.mass_min) {
            errs.push("analysis: need mass_points >= 1 and mass_max_eV > mass_min_eV".into());
        }
        if a.eta0_points == 0 || !(a.eta0_max >= a.eta0_min) || (a.eta0_points > 1 && a.eta0_max == a.eta0_min) {
            errs.push("analysis: need eta0_points >= 1 and eta0_max > eta0_min".into());
        }
        if let Err(e) = self.model() {
            errs.push(e);
        }
        if errs.is_empty() { Ok(()) } else { Err(CliError::Core(vmb_core::Error::Validation(errs))) }
    }

    pub fn constants(&self) -> PhysicalConstants {
        let mut k = PhysicalConstants::codata();
        if let Some(a_e) = self.constants.as_ref().and_then(|c| c.a_e) {
            k.a_e = a_e;
        }
        k
    }

    pub fn wavelength_m(&self) -> f64 {
        self.beam.wavelength_nm * 1e-9
    }

    pub fn beam(&self) -> Result<BeamParams, CliError> {
        Ok(BeamParams::new(&self.constants(), self.wavelength_m())?)
    }

    pub fn finesse(&self) -> Result<f64, CliError> {
        match (self.optics.finesse, self.optics.mirror_r2) {
            (Some(f), None) => Ok(f),
            (None, Some(r2)) => Ok(vmb_core::jones::finesse(r2)?),
            _ => unreachable!("checked at parse time"),
        }
    }

    pub fn model(&self) -> Result<BirefringenceModel<f64>, String> {
        let m = &self.model;
        let need = |key: &str, v: Option<f64>| v.ok_or_else(|| format!("model.{key} is required for this kind"));
        let set: Vec<&str> = [
            ("eta1", m.eta1.is_some()),
            ("eta2", m.eta2.is_some()),
            ("particle", m.particle.is_some()),
            ("g_per_eV", m.g.is_some()),
            ("epsilon", m.epsilon.is_some()),
            ("mass_eV", m.mass.is_some()),
        ]
        .into_iter()
        .filter_map(|(k, s)| s.then_some(k))
        .collect();
        let allowed: &[&str] = match m.kind {
            ModelKind::Ehw | ModelKind::Radiative => &[],
            ModelKind::PostMaxwellian => &["eta1", "eta2"],
            ModelKind::Alp => &["particle", "g_per_eV", "mass_eV"],
            ModelKind::Mcp => &["particle", "epsilon", "mass_eV"],
        };
        if let Some(extra) = set.iter().find(|k| !allowed.contains(k)) {
            return Err(format!("model.{extra} does not apply to kind {:?}", m.kind));
        }
        let particle = || m.particle.as_deref().ok_or_else(|| "model.particle is required for this kind".to_string());
        Ok(match m.kind {
            ModelKind::Ehw => BirefringenceModel::Ehw,
            ModelKind::Radiative => BirefringenceModel::Radiative,
            ModelKind::PostMaxwellian => {
                BirefringenceModel::PostMaxwellian { eta1: need("eta1", m.eta1)?, eta2: need("eta2", m.eta2)? }
            }
            ModelKind::Alp => {
                let kind = match particle()? {
                    "pseudoscalar" => AlpKind::Pseudoscalar,
                    "scalar" => AlpKind::Scalar,
                    p => return Err(format!("model.particle for alp must be pseudoscalar or scalar, got {p}")),
                };
                BirefringenceModel::Alp(AlpModel { kind, g: need("g_per_eV", m.g)?, mass: need("mass_eV", m.mass)? })
            }
            ModelKind::Mcp => {
                let kind = match particle()? {
                    "fermion" => McpKind::Fermion,
                    "scalar" => McpKind::Scalar,
                    p => return Err(format!("model.particle for mcp must be fermion or scalar, got {p}")),
                };
                BirefringenceModel::Mcp(McpModel {
                    kind,
                    epsilon: need("epsilon", m.epsilon)?,
                    mass: need("mass_eV", m.mass)?,
                })
            }
        })
    }

    pub fn magnet_specs(&self) -> Vec<MagnetSpec> {
        self.magnets
            .iter()
            .map(|m| MagnetSpec {
                b_ext: m.b_ext,
                length: m.length,
                int_b2_dl: m.int_b2_dl.unwrap_or(m.b_ext * m.b_ext * m.length),
                nu_mag: m.nu_mag,
                theta_mag: m.theta_mag,
                orientation_offset: m.orientation_offset,
            })
            .collect()
    }

    /// All magnets taken as one region: lengths and ∫B²dL add.
    pub fn combined_region(&self) -> FieldRegion {
        let specs = self.magnet_specs();
        let length: f64 = specs.iter().map(|m| m.length).sum();
        let int_b2_dl: f64 = specs.iter().map(|m| m.int_b2_dl).sum();
        let b_ext = specs.iter().map(|m| m.b_ext).fold(0.0, f64::max);
        FieldRegion { b_ext, length, int_b2_dl }
    }

    pub fn detector(&self) -> DetectorSpec<f64> {
        let d = &self.detector;
        DetectorSpec {
            responsivity: d.responsivity,
            gain: d.gain,
            dark_noise_density: d.dark_noise,
            temperature: d.temperature,
            rin: RinSpec { white: d.rin_white, corner_hz: d.rin_corner },
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let a = &self.alpha;
        let n = self.noise;
        Ok(SynthConfig {
            magnets: self.magnet_specs(),
            modulator: ModulatorSpec {
                eta0: self.modulator.eta0,
                nu_mod: self.modulator.nu_mod,
                theta_mod: self.modulator.theta_mod,
            },
            detector: self.detector(),
            optics: OpticsSpec { sigma2: self.optics.sigma2, i_out: self.optics.i_out, finesse: self.finesse()? },
            alpha: AlphaModel {
                dc: a.dc,
                drift_per_s: a.drift,
                flicker_psd_1hz: a.flicker_psd,
                flicker_corner_hz: a.flicker_corner,
                harmonics: a
                    .harmonics
                    .iter()
                    .map(|h| SpuriousHarmonic { harmonic: h.harmonic, amplitude: h.amplitude, phase: h.phase })
                    .collect(),
            },
            sample_rate: self.synthesis.sample_rate,
            noise: NoiseToggles { shot: n.shot, dark: n.dark, johnson: n.johnson, rin: n.rin },
            normalized_output: self.synthesis.normalized_output,
        })
    }

    pub fn mass_grid(&self) -> Vec<f64> {
        log_grid(self.analysis.mass_min, self.analysis.mass_max, self.analysis.mass_points)
    }

    pub fn eta0_grid(&self) -> Vec<f64> {
        log_grid(self.analysis.eta0_min, self.analysis.eta0_max, self.analysis.eta0_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const EXAMPLE: &str = include_str!("../configs/pvlas_planned.toml");

    #[test]
    fn example_parses() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.magnets.len(), 2);
        assert!(matches!(cfg.model().unwrap(), BirefringenceModel::Ehw));
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = EXAMPLE.replace("wavelength_nm", "wavelength");
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Schema(_))));
        let bad = format!("{EXAMPLE}\n[extra]\nx = 1\n");
        assert!(matches!(RunConfig::parse(&bad), Err(CliError::Schema(_))));
    }

    #[test]
    fn validation_reports_key_paths() {
        let bad = EXAMPLE.replace("L_m = 0.8", "L_m = -0.8");
        match RunConfig::parse(&bad) {
            Err(CliError::Core(vmb_core::Error::Validation(v))) => {
                assert!(v.iter().any(|m| m.starts_with("magnets[0].L_m")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_parameters_must_match_kind() {
        let bad = EXAMPLE.replace("kind = \"ehw\"", "kind = \"ehw\"\nmass_eV = 1e-3");
        assert!(RunConfig::parse(&bad).is_err());
        let alp = EXAMPLE.replace(
            "kind = \"ehw\"",
            "kind = \"alp\"\nparticle = \"pseudoscalar\"\ng_per_eV = 1e-6\nmass_eV = 1e-3",
        );
        assert!(matches!(RunConfig::parse(&alp).unwrap().model().unwrap(), BirefringenceModel::Alp(_)));
    }

    #[test]
    fn mirror_reflectance_gives_finesse() {
        let r2 = vmb_core::jones::r2_from_finesse(414000.0).unwrap();
        let text = EXAMPLE.replace("finesse = 414000.0", &format!("mirror_r2 = {r2:e}"));
        let f = RunConfig::parse(&text).unwrap().finesse().unwrap();
        assert!((f / 414000.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-4, 1e-1, 4);
        assert_eq!(g.len(), 4);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[3] / 1e-1 - 1.0).abs() < 1e-12);
        assert!((g[1] / 1e-3 - 1.0).abs() < 1e-12);
    }
}
