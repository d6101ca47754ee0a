//! Time-domain synthesis of the heterodyne ellipsometer photocurrent.
//!
//! The detected intensity follows the first-order expansion
//! `I_out [σ² + η² + α² + 2ηΨ + 2ηα]` with η(t) the modulator ellipticity,
//! Ψ(t) the cavity-amplified magnetic ellipticity and α(t) the spurious one.
//! Shot, dark, Johnson and relative-intensity noise are added on top.
//!
//! Random numbers are position addressed: noise source `s` at sample `i`
//! reads ChaCha8 stream `s` at word `4i`. Output is therefore bit-identical
//! whatever the chunking or thread count.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birefringence::{retardation, BeamParams, BirefringenceModel, FieldRegion};
use crate::error::{Error, Result};
use crate::jones::transmitted_intensity;
use crate::scalar::{count, lit, Real};
use crate::units::PhysicalConstants;

/// Samples per parallel work unit.
pub const CHUNK_LEN: usize = 1 << 16;
/// Upper bound on a synthesized record.
pub const MAX_SAMPLES: usize = 200_000_000;

const WORDS_PER_SAMPLE: u128 = 4;

mod stream {
    pub const SHOT: u64 = 1;
    pub const DARK: u64 = 2;
    pub const JOHNSON: u64 = 3;
    pub const RIN_WHITE: u64 = 4;
    pub const RIN_FLICKER: u64 = 0x100;
    pub const ALPHA_FLICKER: u64 = 0x200;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetSpec<F> {
    /// T
    pub b_ext: F,
    /// m
    pub length: F,
    /// T²·m
    pub int_b2_dl: F,
    /// Rotation frequency, Hz.
    pub nu_mag: F,
    /// Field angle at t = 0, rad.
    pub theta_mag: F,
    /// Fixed field-angle offset relative to the other magnets, rad. π/2
    /// between two identical magnets cancels their ellipticity.
    pub orientation_offset: F,
}

impl<F: Real> MagnetSpec<F> {
    pub fn uniform(b_ext: F, length: F, nu_mag: F) -> Self {
        Self {
            b_ext,
            length,
            int_b2_dl: b_ext * b_ext * length,
            nu_mag,
            theta_mag: F::zero(),
            orientation_offset: F::zero(),
        }
    }

    pub fn region(&self) -> FieldRegion<F> {
        FieldRegion { b_ext: self.b_ext, length: self.length, int_b2_dl: self.int_b2_dl }
    }

    /// Field angle θ(t) relative to the input polarisation.
    pub fn angle(&self, t: F) -> F {
        F::TAU() * (self.nu_mag * t).fract() + self.theta_mag + self.orientation_offset
    }
}

/// Relative intensity noise: white floor plus an optional 1/f segment,
/// `RIN(ν)² = white² (1 + corner/ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RinSpec<F> {
    /// 1/√Hz
    pub white: F,
    /// Hz; zero disables the 1/f part.
    pub corner_hz: F,
}

impl<F: Real> RinSpec<F> {
    pub fn flat(white: F) -> Self {
        Self { white, corner_hz: F::zero() }
    }

    pub fn density(&self, nu: F) -> F {
        if self.corner_hz > F::zero() && nu > F::zero() {
            self.white * (F::one() + self.corner_hz / nu).sqrt()
        } else {
            self.white
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec<F> {
    /// Responsivity q, A/W.
    pub responsivity: F,
    /// Transimpedance gain G, Ω.
    pub gain: F,
    /// Dark-current noise density V_dark/G, A/√Hz.
    pub dark_noise_density: F,
    /// K
    pub temperature: F,
    pub rin: RinSpec<F>,
}

impl<F: Real> DetectorSpec<F> {
    /// Johnson current-noise density √(4 k_B T / G), A/√Hz.
    pub fn johnson_density(&self, k: &PhysicalConstants<F>) -> F {
        (lit::<F>(4.0) * k.k_b * self.temperature / self.gain).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulatorSpec<F> {
    pub eta0: F,
    /// Hz
    pub nu_mod: F,
    /// rad
    pub theta_mod: F,
}

impl<F: Real> ModulatorSpec<F> {
    /// η(t) = η₀ cos(2πν_mod t + θ_mod)
    pub fn eta(&self, t: F) -> F {
        self.eta0 * (F::TAU() * (self.nu_mod * t).fract() + self.theta_mod).cos()
    }
}

/// Additive spurious ellipticity `a cos(2π k ν_mag t + φ)` locked to the
/// rotation of the first magnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousHarmonic<F> {
    pub harmonic: u32,
    pub amplitude: F,
    /// rad
    pub phase: F,
}

/// Slowly varying ellipticity α(t) = α_dc + drift·t + flicker(t) + harmonics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaModel<F> {
    pub dc: F,
    /// s⁻¹
    pub drift_per_s: F,
    /// One-sided PSD of the flicker process is `flicker_psd_1hz / ν` (1/Hz)
    /// up to `flicker_corner_hz`, falling as 1/ν² above it.
    pub flicker_psd_1hz: F,
    pub flicker_corner_hz: F,
    pub harmonics: Vec<SpuriousHarmonic<F>>,
}

impl<F: Real> AlphaModel<F> {
    pub fn constant(dc: F) -> Self {
        Self {
            dc,
            drift_per_s: F::zero(),
            flicker_psd_1hz: F::zero(),
            flicker_corner_hz: F::zero(),
            harmonics: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseToggles {
    pub shot: bool,
    pub dark: bool,
    pub johnson: bool,
    pub rin: bool,
}

impl NoiseToggles {
    pub const OFF: Self = Self { shot: false, dark: false, johnson: false, rin: false };
    pub const ALL: Self = Self { shot: true, dark: true, johnson: true, rin: true };
    pub const SHOT_ONLY: Self = Self { shot: true, ..Self::OFF };

    pub fn any(&self) -> bool {
        self.shot || self.dark || self.johnson || self.rin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsSpec<F> {
    /// Polariser extinction ratio σ².
    pub sigma2: F,
    /// Power reaching the analyser, W.
    pub i_out: F,
    pub finesse: F,
}

/// What a sample holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum SampleUnit<F> {
    /// Photocurrent in A, with the responsivity used to produce it.
    Current { responsivity: F },
    /// Detected power divided by I_out.
    Normalized,
}

impl<F: Real> SampleUnit<F> {
    pub fn column_name(&self) -> &'static str {
        match self {
            SampleUnit::Current { .. } => "i_A",
            SampleUnit::Normalized => "i_over_Iout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig<F> {
    pub magnets: Vec<MagnetSpec<F>>,
    pub modulator: ModulatorSpec<F>,
    pub detector: DetectorSpec<F>,
    pub optics: OpticsSpec<F>,
    pub alpha: AlphaModel<F>,
    /// Hz
    pub sample_rate: F,
    pub noise: NoiseToggles,
    pub normalized_output: bool,
}

impl<F: Real> SynthConfig<F> {
    /// Check every constraint and report all violations together. Soft
    /// limits are returned as warnings.
    pub fn validate(&self, duration: F) -> Result<Vec<String>> {
        let mut errs = Vec::new();
        let mut warns = Vec::new();
        let zero = F::zero();
        if !(duration > zero) {
            errs.push(format!("duration must be > 0 s, got {duration}"));
        }
        if !(self.sample_rate > zero) {
            errs.push(format!("sample_rate must be > 0 Hz, got {}", self.sample_rate));
        }
        if self.magnets.is_empty() {
            errs.push("at least one magnet is required".into());
        }
        let mut max_mag = zero;
        for (i, m) in self.magnets.iter().enumerate() {
            if let Err(Error::Validation(v)) = m.region().validate() {
                errs.extend(v.into_iter().map(|e| format!("magnets[{i}]: {e}")));
            }
            if !(m.nu_mag >= zero) {
                errs.push(format!("magnets[{i}]: nu_mag must be >= 0, got {}", m.nu_mag));
            }
            max_mag = max_mag.max(m.nu_mag);
        }
        let md = &self.modulator;
        if !(md.eta0 > zero) {
            errs.push(format!("modulator: eta0 must be > 0, got {}", md.eta0));
        } else if md.eta0 > lit(0.3) {
            warns.push(format!("modulator: eta0 = {} is outside the small-ellipticity regime", md.eta0));
        }
        if !(md.nu_mod > zero) {
            errs.push(format!("modulator: nu_mod must be > 0, got {}", md.nu_mod));
        } else if md.nu_mod <= lit::<F>(2.0) * max_mag {
            warns.push(format!("modulator: nu_mod = {} Hz is not above 2 nu_mag = {} Hz", md.nu_mod, lit::<F>(2.0) * max_mag));
        }
        let need = lit::<F>(4.0) * (md.nu_mod + lit::<F>(2.0) * max_mag);
        if self.sample_rate > zero && !(self.sample_rate > need) {
            errs.push(format!("sample_rate {} Hz must exceed 4 (nu_mod + 2 nu_mag) = {} Hz", self.sample_rate, need));
        }
        let d = &self.detector;
        if !(d.responsivity > zero && d.responsivity <= lit(2.0)) {
            errs.push(format!("detector: responsivity must lie in (0, 2] A/W, got {}", d.responsivity));
        }
        if !(d.gain > zero) {
            errs.push(format!("detector: gain must be > 0 ohm, got {}", d.gain));
        }
        if !(d.temperature >= zero) {
            errs.push(format!("detector: temperature must be >= 0 K, got {}", d.temperature));
        }
        if !(d.dark_noise_density >= zero) {
            errs.push(format!("detector: dark noise density must be >= 0, got {}", d.dark_noise_density));
        }
        if !(d.rin.white >= zero && d.rin.corner_hz >= zero) {
            errs.push("detector: RIN level and corner must be >= 0".into());
        }
        let o = &self.optics;
        if !(o.sigma2 >= zero) {
            errs.push(format!("optics: sigma2 must be >= 0, got {}", o.sigma2));
        }
        if !(o.i_out > zero) {
            errs.push(format!("optics: I_out must be > 0 W, got {}", o.i_out));
        }
        if !(o.finesse > zero) {
            errs.push(format!("optics: finesse must be > 0, got {}", o.finesse));
        }
        let a = &self.alpha;
        if !(a.flicker_psd_1hz >= zero && a.flicker_corner_hz >= zero) {
            errs.push("alpha: flicker level and corner must be >= 0".into());
        }
        if a.flicker_psd_1hz > zero && !(a.flicker_corner_hz > zero) {
            errs.push("alpha: flicker noise needs a corner frequency > 0".into());
        }
        if duration > zero && self.sample_rate > zero {
            let n = (duration * self.sample_rate).to_f64_lossy();
            if n > MAX_SAMPLES as f64 {
                errs.push(format!("record of {n:.3e} samples exceeds the {MAX_SAMPLES} sample budget"));
            }
        }
        if errs.is_empty() { Ok(warns) } else { Err(Error::Validation(errs)) }
    }

    /// Mean photocurrent, A: `q I_out (σ² + α_dc² + η₀²/2)`.
    pub fn dc_current(&self) -> F {
        let o = &self.optics;
        let e = self.modulator.eta0;
        self.detector.responsivity * o.i_out * (o.sigma2 + self.alpha.dc * self.alpha.dc + e * e / lit(2.0))
    }
}

/// Uniformly sampled detector record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<F> {
    /// Hz
    pub sample_rate: F,
    pub samples: Vec<F>,
    /// s
    pub t0: F,
    pub seed: u64,
    pub unit: SampleUnit<F>,
    /// How random numbers were laid out.
    pub chunk_layout: String,
}

impl<F: Real> TimeSeries<F> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> F {
        count::<F>(self.samples.len()) / self.sample_rate
    }

    pub fn time(&self, i: usize) -> F {
        self.t0 + count::<F>(i) / self.sample_rate
    }

    /// Samples expressed as detected power in W (or I/I_out for normalized records).
    pub fn power(&self) -> Vec<F> {
        match self.unit {
            SampleUnit::Current { responsivity } => self.samples.iter().map(|&s| s / responsivity).collect(),
            SampleUnit::Normalized => self.samples.clone(),
        }
    }

    /// Metadata written ahead of the CSV header.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("sample_rate_Hz".to_string(), format!("{:.16e}", self.sample_rate.to_f64_lossy())),
            ("t0_s".to_string(), format!("{:.16e}", self.t0.to_f64_lossy())),
            ("seed".to_string(), self.seed.to_string()),
            ("chunk_layout".to_string(), self.chunk_layout.clone()),
        ];
        if let SampleUnit::Current { responsivity } = self.unit {
            m.push(("responsivity_A_per_W".to_string(), format!("{:.16e}", responsivity.to_f64_lossy())));
        }
        m
    }

    /// CSV with `# key: value` metadata lines, then `t_s,<column>` and one
    /// sample per line at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, extra_metadata: &[(String, String)]) -> Result<()> {
        for (k, v) in extra_metadata.iter().chain(self.metadata().iter()) {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "t_s,{}", self.unit.column_name())?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.time(i).to_f64_lossy(), s.to_f64_lossy())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, BTreeMap<String, String>)> {
        let mut meta = BTreeMap::new();
        let mut header: Option<String> = None;
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once(':') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if header.is_none() {
                header = Some(line.to_string());
                continue;
            }
            let (t, s) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", lineno + 1)))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            times.push(parse(t)?);
            samples.push(lit::<F>(parse(s)?));
        }
        let header = header.ok_or_else(|| Error::Parse("missing CSV header".into()))?;
        let meta_f = |key: &str| -> Result<Option<f64>> {
            meta.get(key)
                .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("metadata {key}: {e}"))))
                .transpose()
        };
        let unit = match header.split(',').nth(1).map(str::trim) {
            Some("i_A") => {
                let q = meta_f("responsivity_A_per_W")?
                    .ok_or_else(|| Error::Parse("current record lacks responsivity_A_per_W metadata".into()))?;
                SampleUnit::Current { responsivity: lit(q) }
            }
            Some("i_over_Iout") => SampleUnit::Normalized,
            other => return Err(Error::Parse(format!("unknown sample column {other:?}"))),
        };
        let sample_rate = match meta_f("sample_rate_Hz")? {
            Some(fs) => fs,
            None if times.len() >= 2 => 1.0 / (times[1] - times[0]),
            None => return Err(Error::Parse("cannot determine sample rate".into())),
        };
        let t0 = meta_f("t0_s")?.or(times.first().copied()).unwrap_or(0.0);
        let seed = meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
        let chunk_layout = meta.get("chunk_layout").cloned().unwrap_or_default();
        let ts = TimeSeries { sample_rate: lit(sample_rate), samples, t0: lit(t0), seed, unit, chunk_layout };
        Ok((ts, meta))
    }
}

/// Cavity-amplified ellipticity Ψ(t) = (2𝓕/π) Σ_k π (Δn L)_k / λ · sin 2θ_k(t).
pub struct EllipticitySource<F> {
    /// Per magnet: (2𝓕/π) π (Δn L)/λ and the magnet itself.
    terms: Vec<(F, MagnetSpec<F>)>,
}

impl<F: Real> EllipticitySource<F> {
    pub fn new(
        k: &PhysicalConstants<F>,
        magnets: &[MagnetSpec<F>],
        model: &BirefringenceModel<F>,
        beam: &BeamParams<F>,
        finesse: F,
    ) -> Result<Self> {
        if magnets.is_empty() {
            return Err(Error::Validation(vec!["at least one magnet is required".into()]));
        }
        let gain = lit::<F>(2.0) * finesse / F::PI();
        let terms = magnets
            .iter()
            .map(|m| {
                let dnl = retardation(k, model, &m.region(), beam)?;
                Ok((gain * F::PI() * dnl / beam.wavelength, *m))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }

    /// Peak ellipticity of each magnet, (2𝓕/π)·ψ_k.
    pub fn amplitudes(&self) -> Vec<F> {
        self.terms.iter().map(|(a, _)| *a).collect()
    }

    pub fn at(&self, t: F) -> F {
        self.terms
            .iter()
            .fold(F::zero(), |acc, (a, m)| acc + *a * (lit::<F>(2.0) * m.angle(t)).sin())
    }
}

/// Ψ(t) for the given magnets and model.
pub fn ellipticity_signal<F: Real>(
    k: &PhysicalConstants<F>,
    magnets: &[MagnetSpec<F>],
    model: &BirefringenceModel<F>,
    beam: &BeamParams<F>,
    finesse: F,
    t: F,
) -> Result<F> {
    Ok(EllipticitySource::new(k, magnets, model, beam, finesse)?.at(t))
}

fn rng_at(seed: u64, stream: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(WORDS_PER_SAMPLE * sample as u128);
    rng
}

/// One standard normal deviate from exactly two u64 draws (Box-Muller,
/// cosine branch), so every sample consumes a fixed number of words.
fn normal<F: Real>(rng: &mut ChaCha8Rng) -> F {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * SCALE; // (0, 1]
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    lit((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos())
}

/// Zero-mean Gaussian process with one-sided PSD ≈ `psd_1hz / ν` between
/// `f_lo` and `f_hi`, built from Ornstein-Uhlenbeck processes with poles
/// every half decade.
fn flicker_series<F: Real>(seed: u64, base_stream: u64, n: usize, dt: F, psd_1hz: F, f_lo: F, f_hi: F) -> Vec<F> {
    if !(psd_1hz > F::zero()) || n == 0 || !(f_hi > f_lo) {
        return vec![F::zero(); n];
    }
    let step = lit::<F>(10f64.sqrt());
    let mut poles = Vec::new();
    let mut f = f_lo;
    while f <= f_hi * lit(1.0001) {
        poles.push(f);
        f *= step;
    }
    // S(ν) ≈ σ² / (Δ ln τ · ν) for log-spaced poles of variance σ²
    let var = psd_1hz * (lit::<F>(10.0).ln() / lit(2.0));
    let sigma = var.sqrt();
    let components: Vec<Vec<F>> = poles
        .par_iter()
        .enumerate()
        .map(|(j, &fp)| {
            let tau = F::one() / (F::TAU() * fp);
            let a = (-dt / tau).exp();
            let kick = sigma * (F::one() - a * a).sqrt();
            let mut rng = rng_at(seed, base_stream + j as u64, 0);
            let mut x = sigma * normal::<F>(&mut rng);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(x);
                x = a * x + kick * normal::<F>(&mut rng);
            }
            out
        })
        .collect();
    let mut total = vec![F::zero(); n];
    for c in &components {
        for (t, v) in total.iter_mut().zip(c) {
            *t += *v;
        }
    }
    total
}

/// Synthesize a detector record of `duration` seconds.
pub fn synthesize<F: Real>(
    k: &PhysicalConstants<F>,
    cfg: &SynthConfig<F>,
    model: &BirefringenceModel<F>,
    beam: &BeamParams<F>,
    duration: F,
    seed: u64,
) -> Result<TimeSeries<F>> {
    for w in cfg.validate(duration)? {
        log::warn!("{w}");
    }
    let fs = cfg.sample_rate;
    let n = (duration * fs).round().to_usize().unwrap_or(0);
    let dt = F::one() / fs;
    let half_band = (fs / lit(2.0)).sqrt();
    let psi = EllipticitySource::new(k, &cfg.magnets, model, beam, cfg.optics.finesse)?;

    let q = cfg.detector.responsivity;
    let i_out = cfg.optics.i_out;
    let sigma_shot = (lit::<F>(2.0) * k.e_charge * cfg.dc_current()).sqrt() * half_band;
    let sigma_dark = cfg.detector.dark_noise_density * half_band;
    let sigma_johnson = cfg.detector.johnson_density(k) * half_band;
    let sigma_rin = cfg.detector.rin.white * half_band;
    let record = duration.max(dt);
    let f_lo = F::one() / record;

    let rin_flicker = if cfg.noise.rin && cfg.detector.rin.corner_hz > F::zero() {
        let rin = cfg.detector.rin;
        let f_hi = (lit::<F>(10.0) * rin.corner_hz).min(fs / lit(4.0));
        flicker_series(seed, stream::RIN_FLICKER, n, dt, rin.white * rin.white * rin.corner_hz, f_lo, f_hi)
    } else {
        Vec::new()
    };
    let alpha_flicker = if cfg.alpha.flicker_psd_1hz > F::zero() {
        let f_hi = cfg.alpha.flicker_corner_hz.min(fs / lit(4.0));
        flicker_series(seed, stream::ALPHA_FLICKER, n, dt, cfg.alpha.flicker_psd_1hz, f_lo, f_hi)
    } else {
        Vec::new()
    };

    let nu_ref = cfg.magnets[0].nu_mag;
    let theta_ref = cfg.magnets[0].theta_mag;
    let t0 = F::zero();
    let noise = cfg.noise;
    let out_scale = if cfg.normalized_output { F::one() / (q * i_out) } else { F::one() };

    let mut samples = vec![F::zero(); n];
    samples.par_chunks_mut(CHUNK_LEN).enumerate().for_each(|(c, chunk)| {
        let start = c * CHUNK_LEN;
        let mut shot = noise.shot.then(|| rng_at(seed, stream::SHOT, start));
        let mut dark = noise.dark.then(|| rng_at(seed, stream::DARK, start));
        let mut johnson = noise.johnson.then(|| rng_at(seed, stream::JOHNSON, start));
        let mut rin = noise.rin.then(|| rng_at(seed, stream::RIN_WHITE, start));
        for (j, out) in chunk.iter_mut().enumerate() {
            let i = start + j;
            let t = t0 + count::<F>(i) * dt;
            let eta = cfg.modulator.eta(t);
            let mut alpha = cfg.alpha.dc + cfg.alpha.drift_per_s * t;
            if let Some(v) = alpha_flicker.get(i) {
                alpha += *v;
            }
            for h in &cfg.alpha.harmonics {
                let ph = F::TAU() * (count::<F>(h.harmonic as usize) * nu_ref * t).fract()
                    + count::<F>(h.harmonic as usize) * theta_ref
                    + h.phase;
                alpha += h.amplitude * ph.cos();
            }
            let mut power_scale = F::one();
            if let Some(r) = rin.as_mut() {
                power_scale += sigma_rin * normal::<F>(r);
                if let Some(v) = rin_flicker.get(i) {
                    power_scale += *v;
                }
            }
            let p = transmitted_intensity(i_out * power_scale, cfg.optics.sigma2, alpha, eta, psi.at(t));
            let mut current = q * p;
            if let Some(r) = shot.as_mut() {
                current += sigma_shot * normal::<F>(r);
            }
            if let Some(r) = dark.as_mut() {
                current += sigma_dark * normal::<F>(r);
            }
            if let Some(r) = johnson.as_mut() {
                current += sigma_johnson * normal::<F>(r);
            }
            *out = current * out_scale;
        }
    });

    let unit = if cfg.normalized_output { SampleUnit::Normalized } else { SampleUnit::Current { responsivity: q } };
    Ok(TimeSeries {
        sample_rate: fs,
        samples,
        t0,
        seed,
        unit,
        chunk_layout: format!(
            "chacha8 seed={seed}; stream per noise source; word offset {WORDS_PER_SAMPLE}*sample; work chunks of {CHUNK_LEN}"
        ),
    })
}
