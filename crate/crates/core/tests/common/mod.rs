#![allow(dead_code)]

use vmb_core::birefringence::{BeamParams, BirefringenceModel};
use vmb_core::scalar::{lit, Real};
use vmb_core::signal::{
    AlphaModel, DetectorSpec, EllipticitySource, MagnetSpec, ModulatorSpec, NoiseToggles, OpticsSpec, RinSpec,
    SynthConfig,
};
use vmb_core::units::PhysicalConstants;

pub fn k<F: Real>() -> PhysicalConstants<F> {
    PhysicalConstants::codata()
}

pub fn beam<F: Real>() -> BeamParams<F> {
    BeamParams::new(&k(), lit(1064e-9)).unwrap()
}

/// One 2.5 T, 1.6 m magnet at 5 Hz, carrier 100 Hz, 1 kHz sampling, noise off.
pub fn base_config<F: Real>(eta0: f64) -> SynthConfig<F> {
    let mut magnet = MagnetSpec::uniform(lit(2.5), lit(1.6), lit(5.0));
    magnet.theta_mag = lit(0.2);
    SynthConfig {
        magnets: vec![magnet],
        modulator: ModulatorSpec { eta0: lit(eta0), nu_mod: lit(100.0), theta_mod: lit(0.3) },
        detector: DetectorSpec {
            responsivity: lit(0.7),
            gain: lit(1e6),
            dark_noise_density: F::zero(),
            temperature: F::zero(),
            rin: RinSpec::flat(F::zero()),
        },
        optics: OpticsSpec { sigma2: lit(1e-7), i_out: lit(5e-3), finesse: lit(414000.0) },
        alpha: AlphaModel::constant(lit(1e-5)),
        sample_rate: lit(1000.0),
        noise: NoiseToggles::OFF,
        normalized_output: false,
    }
}

/// A post-Maxwellian vacuum tuned so the first magnet of `cfg` produces a
/// cavity ellipticity of `psi`.
pub fn model_for_psi<F: Real>(cfg: &SynthConfig<F>, psi: f64) -> BirefringenceModel<F> {
    let kk = k::<f64>();
    let m = &cfg.magnets[0];
    let (finesse, int_b2_dl) = (cfg.optics.finesse.to_f64_lossy(), m.int_b2_dl.to_f64_lossy());
    // Ψ = 2𝓕 Δn L / λ and Δn L = 2 η₂ ∫B²dL / B_crit²
    let eta2 = psi * 1064e-9 * kk.b_crit * kk.b_crit / (4.0 * finesse * int_b2_dl);
    BirefringenceModel::PostMaxwellian { eta1: F::zero(), eta2: lit(eta2) }
}

/// Peak ellipticity of each magnet as the synthesizer sees it.
pub fn psi_amplitudes<F: Real>(cfg: &SynthConfig<F>, model: &BirefringenceModel<F>) -> Vec<F> {
    EllipticitySource::new(&k(), &cfg.magnets, model, &beam(), cfg.optics.finesse)
        .unwrap()
        .amplitudes()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}
