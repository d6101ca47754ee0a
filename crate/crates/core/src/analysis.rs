//! From detector records to ellipticities, noise floors and physics limits.
//!
//! Line amplitudes are read by projecting onto the exactly known
//! frequencies; the noise density next to the sidebands comes from an FFT.
//! Amplitudes follow the peak convention: `a cos(2πνt + φ)` has amplitude
//! `a`, and a noise density `R` is defined so that an FFT bin of width Δν
//! has mean squared peak amplitude `R² Δν`.

use std::f64::consts::{LN_2, TAU};

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::birefringence::{
    mcp_birefringence_in_regime, mcp_chi, mcp_coefficient, one_minus_sinc, sinc, BeamParams, FieldRegion, McpKind,
    McpModel, McpRegime, MCP_GAP_HIGH, MCP_GAP_LOW,
};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};
use crate::signal::{DetectorSpec, TimeSeries};
use crate::units::{NaturalUnitBridge, PhysicalConstants};

/// Minimum number of amplitudes accepted by [`rayleigh_fit`].
pub const RAYLEIGH_MIN_VALUES: usize = 100;
/// Histogram bins used for the Rayleigh goodness-of-fit diagnostic.
pub const RAYLEIGH_HIST_BINS: usize = 50;
/// Photon-photon elastic cross section implied by the EHW Lagrangian at 1064 nm, m².
pub const SIGMA_GAMMA_GAMMA_EHW_M2: f64 = 1.8e-69;
/// An exclusion point is flagged when the mass-dependent factor drops below
/// this fraction of its envelope.
pub const SPIKE_FRACTION: f64 = 1e-3;
/// Relative tolerance of the exclusion-curve root finder.
pub const ROOT_REL_TOL: f64 = 1e-4;

const PROJECTION_CHUNK: usize = 1 << 16;
const COMMON_PERIOD_SCAN: usize = 10_000_000;

/// How the record is windowed before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// Rectangular window over the longest prefix holding an integer number
    /// of cycles of every line. Lines are then mutually orthogonal.
    #[default]
    CommonPeriod,
    /// Rectangular window over the whole record.
    Full,
    /// Hann window over the whole record, amplitude-corrected.
    Hann,
}

impl WindowPolicy {
    /// Bins on either side of a line that are kept out of the noise estimate.
    fn guard_bins(self) -> f64 {
        match self {
            WindowPolicy::CommonPeriod => 0.5,
            WindowPolicy::Full => 1.5,
            WindowPolicy::Hann => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine<F> {
    /// Hz
    pub frequency: F,
    /// Peak amplitude in the units of the record (W, or I/I_out).
    pub amplitude: F,
    /// Cosine phase at t = 0, rad in (−π, π].
    pub phase: F,
}

/// The Fourier components of a heterodyne ellipsometer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTable<F> {
    pub i_dc: F,
    /// ν_mod
    pub carrier: SpectralLine<F>,
    /// ν_mod − 2ν_mag
    pub lower: SpectralLine<F>,
    /// ν_mod + 2ν_mag
    pub upper: SpectralLine<F>,
    /// 2ν_mod
    pub second_harmonic: SpectralLine<F>,
    /// Noise density next to the upper sideband, per √Hz.
    pub r_upper: F,
    /// Noise density next to the lower sideband, per √Hz.
    pub r_lower: F,
    /// Density from both sidebands pooled, which is the estimate of the
    /// common value when the two are taken to be equal.
    pub r: F,
    /// Bin spacing, Hz.
    pub resolution: F,
    /// Equivalent noise bandwidth of one bin, Hz.
    pub enbw: F,
    pub samples_used: usize,
    pub window: WindowPolicy,
}

impl<F: Real> SpectralTable<F> {
    /// Sideband phases referred to the sine of 2θ_mag, the convention in
    /// which a positive ellipticity reads θ_mod ± 2θ_mag: (upper, lower).
    pub fn signal_phases(&self) -> (F, F) {
        let h = F::FRAC_PI_2();
        (wrap_phase(self.upper.phase + h), wrap_phase(self.lower.phase - h))
    }
}

/// Wrap an angle into (−π, π].
pub fn wrap_phase<F: Real>(x: F) -> F {
    x - F::TAU() * ((x - F::PI()) / F::TAU()).ceil()
}

fn check_frequencies<F: Real>(fs: F, nu_mod: F, nu_mag: F) -> Result<()> {
    let mut errs = Vec::new();
    if !(nu_mag > F::zero()) {
        errs.push(format!("nu_mag must be > 0 Hz, got {nu_mag}"));
    }
    if !(nu_mod > lit::<F>(2.0) * nu_mag) {
        errs.push(format!("nu_mod = {nu_mod} Hz must exceed 2 nu_mag"));
    }
    if !(lit::<F>(2.0) * nu_mod < fs / lit(2.0)) {
        errs.push(format!("2 nu_mod = {} Hz is not below the Nyquist frequency {} Hz", lit::<F>(2.0) * nu_mod, fs / lit(2.0)));
    }
    if errs.is_empty() { Ok(()) } else { Err(Error::Domain(errs.join("; "))) }
}

/// Longest prefix (not shorter than half the record) on which every line
/// completes an integer number of cycles.
fn common_period_len(n_max: usize, fs: f64, freqs: &[f64]) -> usize {
    let mut best = (f64::INFINITY, n_max);
    for n in ((n_max / 2).max(1)..=n_max).rev().take(COMMON_PERIOD_SCAN) {
        let err = freqs
            .iter()
            .map(|f| {
                let c = f * n as f64 / fs;
                (c - c.round()).abs()
            })
            .fold(0.0, f64::max);
        if err < 1e-6 {
            return n;
        }
        if err < best.0 {
            best = (err, n);
        }
    }
    log::warn!("no common period of the lines fits the record; worst residual {:.3e} cycles", best.0);
    best.1
}

fn hann<F: Real>(n: usize) -> Vec<F> {
    (0..n)
        .map(|i| lit::<F>(0.5 - 0.5 * (TAU * i as f64 / n as f64).cos()))
        .collect()
}

/// Σ w x e^{−i2πf t} for each frequency plus Σ w x, summed chunk by chunk
/// in a fixed order so the result does not depend on thread count.
fn project<F: Real>(x: &[F], w: Option<&[F]>, freqs: &[f64], fs: f64, t0: f64) -> (F, Vec<Complex<F>>) {
    let partial: Vec<(F, Vec<Complex<F>>)> = x
        .par_chunks(PROJECTION_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let start = c * PROJECTION_CHUNK;
            let mut dc = F::zero();
            let mut acc = vec![Complex::new(F::zero(), F::zero()); freqs.len()];
            for (j, &v) in chunk.iter().enumerate() {
                let i = start + j;
                let v = match w {
                    Some(w) => v * w[i],
                    None => v,
                };
                dc += v;
                let t = t0 + i as f64 / fs;
                for (a, f) in acc.iter_mut().zip(freqs) {
                    let ph = TAU * (f * t).fract();
                    *a += Complex::new(v * lit(ph.cos()), -v * lit(ph.sin()));
                }
            }
            (dc, acc)
        })
        .collect();
    let mut dc = F::zero();
    let mut acc = vec![Complex::new(F::zero(), F::zero()); freqs.len()];
    for (d, a) in partial {
        dc += d;
        for (s, v) in acc.iter_mut().zip(a) {
            *s += v;
        }
    }
    (dc, acc)
}

fn median<F: Real>(mut v: Vec<F>) -> F {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / lit(2.0) }
}

/// Demodulated record: the table plus the one-sided amplitude spectrum it was built from.
struct Analysed<F> {
    table: SpectralTable<F>,
    /// Peak amplitude per FFT bin, k = 0..=n/2.
    amplitudes: Vec<F>,
}

fn analyse<F: Real>(ts: &TimeSeries<F>, nu_mod: F, nu_mag: F, window: WindowPolicy) -> Result<Analysed<F>> {
    let fs = ts.sample_rate;
    if !(fs > F::zero()) {
        return Err(Error::Domain(format!("sample rate must be > 0 Hz, got {fs}")));
    }
    check_frequencies(fs, nu_mod, nu_mag)?;
    let need = lit::<F>(4.0) / nu_mag;
    if !(ts.duration() >= need) {
        return Err(Error::Resolution(format!(
            "record of {} s is shorter than 4/nu_mag = {} s; the sidebands cannot be separated",
            ts.duration(),
            need
        )));
    }
    let two = lit::<F>(2.0);
    let lines = [nu_mod, nu_mod - two * nu_mag, nu_mod + two * nu_mag, two * nu_mod];
    let lines64: Vec<f64> = lines.iter().map(|f| f.to_f64_lossy()).collect();
    let fs64 = fs.to_f64_lossy();
    let n = match window {
        WindowPolicy::CommonPeriod => common_period_len(ts.len(), fs64, &lines64),
        _ => ts.len(),
    };
    if !(count::<F>(n) / fs >= need) {
        return Err(Error::Resolution(format!(
            "usable record of {} s is shorter than 4/nu_mag = {} s",
            count::<F>(n) / fs,
            need
        )));
    }

    let power = ts.power();
    let x = &power[..n];
    let w: Option<Vec<F>> = (window == WindowPolicy::Hann).then(|| hann(n));
    let (sum_w, sum_w2) = match &w {
        Some(w) => (w.iter().fold(F::zero(), |a, &v| a + v), w.iter().fold(F::zero(), |a, &v| a + v * v)),
        None => (count::<F>(n), count::<F>(n)),
    };
    let (dc_sum, proj) = project(x, w.as_deref(), &lines64, fs64, ts.t0.to_f64_lossy());
    let i_dc = dc_sum / sum_w;
    let line = |j: usize| SpectralLine {
        frequency: lines[j],
        amplitude: two * proj[j].norm() / sum_w,
        phase: wrap_phase(proj[j].arg()),
    };

    let mut buf: Vec<Complex<F>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v - i_dc;
            Complex::new(
                match &w {
                    Some(w) => v * w[i],
                    None => v,
                },
                F::zero(),
            )
        })
        .collect();
    FftPlanner::<F>::new().plan_fft_forward(n).process(&mut buf);
    let amplitudes: Vec<F> = buf[..=n / 2].iter().map(|z| two * z.norm() / sum_w).collect();

    let df = fs / count::<F>(n);
    let enbw = fs * sum_w2 / (sum_w * sum_w);
    let guard = lit::<F>(window.guard_bins()) * df;
    let half_band = nu_mag / two;
    let band = |centre: F| -> Vec<F> {
        let lo = ((centre - half_band) / df).ceil().to_usize().unwrap_or(0);
        let hi = ((centre + half_band) / df).floor().to_usize().unwrap_or(0).min(n / 2);
        (lo..=hi)
            .filter(|&k| {
                let f = count::<F>(k) * df;
                lines.iter().all(|&l| (f - l).abs() > guard)
            })
            .map(|k| amplitudes[k] * amplitudes[k])
            .collect()
    };
    let up = band(lines[2]);
    let lo = band(lines[1]);
    if up.is_empty() || lo.is_empty() {
        return Err(Error::Resolution("no noise bins next to the sidebands".into()));
    }
    let density = |a2: Vec<F>| (median(a2) / lit(LN_2) / enbw).sqrt();
    let pooled: Vec<F> = up.iter().chain(lo.iter()).copied().collect();

    let table = SpectralTable {
        i_dc,
        carrier: line(0),
        lower: line(1),
        upper: line(2),
        second_harmonic: line(3),
        r_upper: density(up),
        r_lower: density(lo),
        r: density(pooled),
        resolution: df,
        enbw,
        samples_used: n,
        window,
    };
    Ok(Analysed { table, amplitudes })
}

/// Amplitudes and phases of the dc, ν_mod, ν_mod ± 2ν_mag and 2ν_mod
/// components, and the noise density beside the sidebands.
///
/// The noise density is the median of the squared bin amplitudes within
/// ±ν_mag/2 of each sideband, with the line bins excluded, divided by ln 2
/// (the median-to-mean ratio of an exponential variate).
pub fn demodulate<F: Real>(ts: &TimeSeries<F>, nu_mod: F, nu_mag: F, window: WindowPolicy) -> Result<SpectralTable<F>> {
    analyse(ts, nu_mod, nu_mag, window).map(|a| a.table)
}

fn check_modulation<F: Real>(table: &SpectralTable<F>, i_out: F) -> Result<F> {
    if !(i_out > F::zero()) {
        return Err(Error::Domain(format!("I_out must be > 0, got {i_out}")));
    }
    let i2 = table.second_harmonic.amplitude;
    let floor = lit::<F>(1e-10) * table.i_dc.abs();
    if !(i2 > floor) || i2 == F::zero() {
        return Err(Error::ModulationAbsent);
    }
    Ok(i2)
}

/// Ψ = ½ (I₊ + I₋) / √(2 I_out I_2ν).
pub fn estimate_psi<F: Real>(table: &SpectralTable<F>, i_out: F) -> Result<F> {
    let i2 = check_modulation(table, i_out)?;
    let denom = (lit::<F>(2.0) * i_out * i2).sqrt();
    Ok((table.upper.amplitude + table.lower.amplitude) / (lit::<F>(2.0) * denom))
}

/// s = R / √(4 I_out I_2ν), using the pooled sideband density.
pub fn sensitivity_from_spectrum<F: Real>(table: &SpectralTable<F>, i_out: F) -> Result<F> {
    let i2 = check_modulation(table, i_out)?;
    Ok(table.r / (lit::<F>(4.0) * i_out * i2).sqrt())
}

/// Sensitivity computed separately at each sideband: (upper, lower).
pub fn sensitivity_per_sideband<F: Real>(table: &SpectralTable<F>, i_out: F) -> Result<(F, F)> {
    let i2 = check_modulation(table, i_out)?;
    let d = (lit::<F>(4.0) * i_out * i2).sqrt();
    Ok((table.r_upper / d, table.r_lower / d))
}

/// Ellipticity amplitude spectrum around the upper sideband, expressed at
/// the demodulated frequency (offset from ν_mod).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticitySpectrum<F> {
    /// Hz
    pub frequency: Vec<F>,
    pub amplitude: Vec<F>,
    /// Index of the bin at exactly 2ν_mag, if it lies on the grid.
    pub signal_index: Option<usize>,
    /// Hz
    pub resolution: F,
}

impl<F: Real> EllipticitySpectrum<F> {
    /// Amplitudes with the signal bin removed.
    pub fn noise_amplitudes(&self) -> Vec<F> {
        self.amplitude
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.signal_index)
            .map(|(_, &a)| a)
            .collect()
    }

    pub fn signal_amplitude(&self) -> Option<F> {
        self.signal_index.map(|i| self.amplitude[i])
    }
}

/// Bins within `band/2` of ν_mod + 2ν_mag, each scaled to ellipticity by
/// 1/√(2 I_out I_2ν).
pub fn ellipticity_spectrum<F: Real>(
    ts: &TimeSeries<F>,
    nu_mod: F,
    nu_mag: F,
    i_out: F,
    band: F,
    window: WindowPolicy,
) -> Result<EllipticitySpectrum<F>> {
    if !(band > F::zero()) {
        return Err(Error::Domain(format!("band must be > 0 Hz, got {band}")));
    }
    let a = analyse(ts, nu_mod, nu_mag, window)?;
    let i2 = check_modulation(&a.table, i_out)?;
    let scale = F::one() / (lit::<F>(2.0) * i_out * i2).sqrt();
    let df = a.table.resolution;
    let centre = a.table.upper.frequency;
    let half = band / lit(2.0);
    let lo = ((centre - half) / df).ceil().max(F::zero()).to_usize().unwrap_or(0);
    let hi = ((centre + half) / df).floor().to_usize().unwrap_or(0).min(a.amplitudes.len() - 1);
    let mut spectrum = EllipticitySpectrum { frequency: Vec::new(), amplitude: Vec::new(), signal_index: None, resolution: df };
    for k in lo..=hi {
        let f = count::<F>(k) * df;
        if (f - centre).abs() < df / lit(2.0) {
            spectrum.signal_index = Some(spectrum.frequency.len());
        }
        spectrum.frequency.push(f - nu_mod);
        spectrum.amplitude.push(a.amplitudes[k] * scale);
    }
    Ok(spectrum)
}

/// One point of the ellipticity noise budget, all in 1/√Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudgetRow<F> {
    pub eta0: F,
    pub s_shot: F,
    pub s_dark: F,
    pub s_j: F,
    pub s_rin: F,
    /// Quadrature sum.
    pub s_total: F,
}

/// Column order of the budget CSV.
pub const NOISE_BUDGET_COLUMNS: [&str; 6] = ["eta0", "s_shot", "s_dark", "s_J", "s_RIN", "s_total"];

/// Per-source ellipticity sensitivity versus modulation depth.
pub fn noise_budget<F: Real>(
    k: &PhysicalConstants<F>,
    eta0: &[F],
    i_out: F,
    sigma2: F,
    detector: &DetectorSpec<F>,
    nu_mod: F,
) -> Result<Vec<NoiseBudgetRow<F>>> {
    if !(i_out > F::zero()) || !(sigma2 >= F::zero()) || !(detector.responsivity > F::zero()) {
        return Err(Error::Domain("I_out and responsivity must be > 0 and sigma2 >= 0".into()));
    }
    if let Some(bad) = eta0.iter().find(|e| !(**e > F::zero())) {
        return Err(Error::Domain(format!("eta0 grid values must be > 0, got {bad}")));
    }
    let two = lit::<F>(2.0);
    let q = detector.responsivity;
    let rin = detector.rin.density(nu_mod);
    let i_j = detector.johnson_density(k);
    Ok(eta0
        .iter()
        .map(|&e| {
            let h = e * e / two;
            let s_shot = (two * k.e_charge / (i_out * q) * ((sigma2 + h) / (e * e))).sqrt();
            let s_dark = detector.dark_noise_density / (i_out * q * e);
            let s_j = i_j / (i_out * q * e);
            let s_rin = rin * ((sigma2 + h).powi(2) + h * h).sqrt() / e;
            let s_total = (s_shot * s_shot + s_dark * s_dark + s_j * s_j + s_rin * s_rin).sqrt();
            NoiseBudgetRow { eta0: e, s_shot, s_dark, s_j, s_rin, s_total }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighFit<F> {
    /// Per-quadrature standard deviation σ.
    pub sigma: F,
    pub n_values: usize,
    pub n_bins: usize,
    /// Histogram χ²/dof against the fitted density. Diagnostic only.
    pub chi2_per_dof: F,
    pub value_at_signal_bin: Option<F>,
}

/// Maximum-likelihood Rayleigh fit, σ̂² = ⟨r²⟩/2.
pub fn rayleigh_fit<F: Real>(values: &[F], value_at_signal_bin: Option<F>) -> Result<RayleighFit<F>> {
    if values.is_empty() {
        return Err(Error::Validation(vec!["no amplitudes to fit".into()]));
    }
    if values.len() < RAYLEIGH_MIN_VALUES {
        return Err(Error::Validation(vec![format!(
            "{} amplitudes given, at least {RAYLEIGH_MIN_VALUES} needed",
            values.len()
        )]));
    }
    if let Some(bad) = values.iter().find(|v| !(**v >= F::zero()) || !v.is_finite()) {
        return Err(Error::Domain(format!("amplitudes must be finite and >= 0, got {bad}")));
    }
    let n = count::<F>(values.len());
    let mean_sq = values.iter().fold(F::zero(), |a, &v| a + v * v) / n;
    if mean_sq == F::zero() {
        return Err(Error::Degenerate("all amplitudes are zero".into()));
    }
    let two = lit::<F>(2.0);
    let sigma = (mean_sq / two).sqrt();

    let max = values.iter().copied().fold(F::zero(), F::max);
    let width = max / count(RAYLEIGH_HIST_BINS);
    let mut hist = [0usize; RAYLEIGH_HIST_BINS];
    for &v in values {
        let b = (v / width).floor().to_usize().unwrap_or(0).min(RAYLEIGH_HIST_BINS - 1);
        hist[b] += 1;
    }
    let cdf = |r: F| F::one() - (-(r * r) / (two * sigma * sigma)).exp();
    let mut chi2 = F::zero();
    let mut used = 0usize;
    for (b, &obs) in hist.iter().enumerate() {
        let a = count::<F>(b) * width;
        let expected = n * (cdf(a + width) - cdf(a));
        if expected > F::zero() {
            let d = count::<F>(obs) - expected;
            chi2 += d * d / expected;
            used += 1;
        }
    }
    let dof = used.saturating_sub(1).max(1);
    Ok(RayleighFit {
        sigma,
        n_values: values.len(),
        n_bins: RAYLEIGH_HIST_BINS,
        chi2_per_dof: chi2 / count(dof),
        value_at_signal_bin,
    })
}

/// √(−2 ln(1 − CL)): the Rayleigh amplitude not exceeded with probability CL, in units of σ.
pub fn confidence_factor<F: Real>(confidence: F) -> Result<F> {
    if !(confidence > F::zero() && confidence < F::one()) {
        return Err(Error::Domain(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    Ok((-lit::<F>(2.0) * (F::one() - confidence).ln()).sqrt())
}

fn check_positive<F: Real>(pairs: &[(&str, F)]) -> Result<()> {
    let errs: Vec<String> = pairs
        .iter()
        .filter(|(_, v)| !(*v > F::zero()) || !v.is_finite())
        .map(|(n, v)| format!("{n} must be finite and > 0, got {v}"))
        .collect();
    if errs.is_empty() { Ok(()) } else { Err(Error::Domain(errs.join("; "))) }
}

/// Δn < k(CL) σλ / (2𝓕L).
pub fn birefringence_limit<F: Real>(sigma: F, confidence: F, finesse: F, length: F, wavelength: F) -> Result<F> {
    check_positive(&[("sigma", sigma), ("finesse", finesse), ("L", length), ("wavelength", wavelength)])?;
    Ok(confidence_factor(confidence)? * sigma * wavelength / (lit::<F>(2.0) * finesse * length))
}

/// A_e < k(CL) σλ / (6𝓕 ∫B²dL).
pub fn ae_limit<F: Real>(sigma: F, confidence: F, finesse: F, int_b2_dl: F, wavelength: F) -> Result<F> {
    check_positive(&[("sigma", sigma), ("finesse", finesse), ("int_B2_dL", int_b2_dl), ("wavelength", wavelength)])?;
    Ok(confidence_factor(confidence)? * sigma * wavelength / (lit::<F>(6.0) * finesse * int_b2_dl))
}

/// σ_γγ bound from a birefringence bound measured at field `b`.
///
/// The cross section scales as A_e², so the EHW value is rescaled by
/// (Δn_limit / 3A_eB²)². Evaluated in f64 because 10⁻⁶⁹ m² is below the
/// range of `f32`.
pub fn cross_section_limit<F: Real>(delta_n_limit: F, b: F) -> Result<f64> {
    check_positive(&[("delta_n", delta_n_limit), ("B", b)])?;
    let k = PhysicalConstants::<f64>::codata();
    let b = b.to_f64_lossy();
    let ratio = delta_n_limit.to_f64_lossy() / (3.0 * k.a_e * b * b);
    Ok(SIGMA_GAMMA_GAMMA_EHW_M2 * ratio * ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitResult<F> {
    pub sigma: F,
    pub confidence: F,
    pub delta_n_limit: F,
    /// T⁻²
    pub a_e_limit: F,
    /// m²
    pub sigma_gamma_gamma_limit: f64,
    /// √⟨B²⟩ used for the cross section, T.
    pub b_rms: F,
}

/// Δn, A_e and σ_γγ bounds from an ellipticity noise floor over `region`.
pub fn limit_chain<F: Real>(
    sigma: F,
    confidence: F,
    finesse: F,
    region: &FieldRegion<F>,
    wavelength: F,
) -> Result<LimitResult<F>> {
    region.validate()?;
    let delta_n_limit = birefringence_limit(sigma, confidence, finesse, region.length, wavelength)?;
    let a_e_limit = ae_limit(sigma, confidence, finesse, region.int_b2_dl, wavelength)?;
    let b_rms = region.mean_b2().sqrt();
    let sigma_gamma_gamma_limit = cross_section_limit(delta_n_limit, b_rms)?;
    Ok(LimitResult { sigma, confidence, delta_n_limit, a_e_limit, sigma_gamma_gamma_limit, b_rms })
}

/// Bound on a coupling or charge as a function of particle mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionCurve<F> {
    /// eV, ascending
    pub mass_grid: Vec<F>,
    /// g in eV⁻¹ for ALPs, ε for MCPs.
    pub limit: Vec<F>,
    pub valid: Vec<bool>,
}

/// Column order of the exclusion CSV.
pub const EXCLUSION_COLUMNS: [&str; 3] = ["mass_eV", "limit", "valid"];

fn check_mass_grid<F: Real>(masses: &[F]) -> Result<()> {
    if masses.is_empty() {
        return Err(Error::Domain("mass grid is empty".into()));
    }
    if let Some(bad) = masses.iter().find(|m| !(**m > F::zero()) || !m.is_finite()) {
        return Err(Error::Domain(format!("masses must be finite and > 0 eV, got {bad}")));
    }
    if masses.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("mass grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Which measured quantity an ALP bound is inverted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlpObservable {
    Birefringence,
    Dichroism,
}

/// Largest g compatible with a |Δn| or |Δκ| bound, per mass.
///
/// g = √(2Δn m² / (B² (1 − sin 2x/2x))) or g = (4/BL) √(Δκ / 2 (sin x/x)²).
/// Points where the oscillating factor falls below [`SPIKE_FRACTION`] of
/// its envelope are flagged.
pub fn alp_exclusion<F: Real>(
    observable: AlpObservable,
    limit: F,
    region: &FieldRegion<F>,
    beam: &BeamParams<F>,
    masses: &[F],
) -> Result<ExclusionCurve<F>> {
    check_positive(&[("limit", limit), ("B", region.b_ext), ("L", region.length), ("photon energy", beam.photon_energy)])?;
    check_mass_grid(masses)?;
    let bridge = NaturalUnitBridge::<F>::codata();
    let b = bridge.tesla_to_natural(region.b_ext)?;
    let l = bridge.meter_to_natural(region.length)?;
    let two = lit::<F>(2.0);
    let spike = lit::<F>(SPIKE_FRACTION);
    let points: Vec<(F, bool)> = masses
        .par_iter()
        .map(|&m| {
            let x = l * m * m / (lit::<F>(4.0) * beam.photon_energy);
            let (factor, envelope) = match observable {
                AlpObservable::Birefringence => {
                    let y = two * x;
                    (one_minus_sinc(y), (y * y / lit(6.0)).min(F::one()))
                }
                AlpObservable::Dichroism => (sinc(x).powi(2), (F::one() / (x * x)).min(F::one())),
            };
            let g = match observable {
                AlpObservable::Birefringence => (two * limit * m * m / (b * b * factor)).sqrt(),
                AlpObservable::Dichroism => lit::<F>(4.0) / (b * l) * (limit / (two * factor)).sqrt(),
            };
            let valid = factor >= spike * envelope && g.is_finite() && g > F::zero();
            (g, valid)
        })
        .collect();
    Ok(ExclusionCurve {
        mass_grid: masses.to_vec(),
        limit: points.iter().map(|p| p.0).collect(),
        valid: points.iter().map(|p| p.1).collect(),
    })
}

/// Solve |Δn(ε)| = target within one MCP branch by bisection in log ε,
/// starting from the branch's analytic power law.
fn solve_mcp_branch<F: Real>(
    k: &PhysicalConstants<F>,
    kind: McpKind,
    mass: F,
    b: F,
    beam: &BeamParams<F>,
    target: F,
    regime: McpRegime,
) -> Result<F> {
    let eval = |eps: F| -> Result<F> {
        let model = McpModel { kind, epsilon: eps, mass };
        Ok(mcp_birefringence_in_regime(k, &model, beam, b, regime)?.abs())
    };
    let c: F = lit(mcp_coefficient(kind, regime).abs());
    let rm = k.m_e_ev / mass;
    let guess = match regime {
        McpRegime::Weak => (target / (c * k.a_e * b * b)).powf(lit(0.25)) / rm,
        McpRegime::Strong => {
            // χ = κ ε, Δn = c A_e B² rm⁴ κ^{−4/3} ε^{8/3}
            let kappa = lit::<F>(1.5) * beam.photon_energy / mass * b / k.critical_field(mass);
            (target / (c * k.a_e * b * b * rm.powi(4)) * kappa.powf(lit(4.0 / 3.0))).powf(lit(3.0 / 8.0))
        }
    };
    if !(guess > F::zero()) || !guess.is_finite() {
        return Err(Error::Domain(format!("no usable starting point for mass {mass} eV")));
    }
    let ten = lit::<F>(10.0);
    let (mut lo, mut hi) = (guess / ten, guess * ten);
    for _ in 0..60 {
        if eval(lo)? <= target {
            break;
        }
        lo /= ten;
    }
    for _ in 0..60 {
        if eval(hi)? >= target {
            break;
        }
        hi *= ten;
    }
    let tol = F::one() + lit(ROOT_REL_TOL);
    while hi / lo > tol {
        let mid = (lo * hi).sqrt();
        if eval(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Largest charge fraction ε compatible with a |Δn| bound, per mass.
///
/// Each asymptotic branch is solved separately and kept only if χ at the
/// solution lies in that branch's domain (χ ≤ 0.2 or χ ≥ 5). The smaller
/// surviving ε is reported; if neither survives the point is in the gap
/// band and flagged, with the branch nearer in log χ reported.
pub fn mcp_exclusion<F: Real>(
    k: &PhysicalConstants<F>,
    kind: McpKind,
    delta_n_limit: F,
    b: F,
    beam: &BeamParams<F>,
    masses: &[F],
) -> Result<ExclusionCurve<F>> {
    check_positive(&[("delta_n", delta_n_limit), ("B", b), ("photon energy", beam.photon_energy)])?;
    check_mass_grid(masses)?;
    let points = masses
        .par_iter()
        .map(|&m| -> Result<(F, bool)> {
            let chi_at = |eps: F| mcp_chi(k, &McpModel { kind, epsilon: eps, mass: m }, beam, b);
            let weak = solve_mcp_branch(k, kind, m, b, beam, delta_n_limit, McpRegime::Weak)?;
            let strong = solve_mcp_branch(k, kind, m, b, beam, delta_n_limit, McpRegime::Strong)?;
            let chi_w = chi_at(weak)?;
            let chi_s = chi_at(strong)?;
            let weak_ok = chi_w <= lit(MCP_GAP_LOW);
            let strong_ok = chi_s >= lit(MCP_GAP_HIGH);
            Ok(match (weak_ok, strong_ok) {
                (true, true) => (weak.min(strong), true),
                (true, false) => (weak, true),
                (false, true) => (strong, true),
                (false, false) => {
                    if chi_w.ln().abs() <= chi_s.ln().abs() { (weak, false) } else { (strong, false) }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExclusionCurve {
        mass_grid: masses.to_vec(),
        limit: points.iter().map(|p| p.0).collect(),
        valid: points.iter().map(|p| p.1).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    Heterodyne,
    Homodyne,
}

/// Primary parameters of one experiment in one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams<F> {
    pub name: String,
    pub status: String,
    #[serde(rename = "wavelength_m")]
    pub wavelength: F,
    #[serde(rename = "int_B2_dL_T2m")]
    pub int_b2_dl: F,
    #[serde(rename = "B_avg_T")]
    pub b_avg: F,
    pub finesse: F,
    pub detection: Detection,
    #[serde(rename = "f_mod_Hz")]
    pub f_mod: F,
    pub duty_cycle: F,
    /// Optical sensitivity, 1/√Hz.
    #[serde(rename = "s_per_rtHz")]
    pub s: F,
    #[serde(rename = "T_pulse_s", default, skip_serializing_if = "Option::is_none")]
    pub t_pulse: Option<F>,
    /// Birefringence per T² per pulse.
    #[serde(rename = "delta_n_B_per_T2", default, skip_serializing_if = "Option::is_none")]
    pub delta_n_b: Option<F>,
}

impl<F: Real> ExperimentParams<F> {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (n, v) in [
            ("wavelength_m", self.wavelength),
            ("int_B2_dL_T2m", self.int_b2_dl),
            ("B_avg_T", self.b_avg),
            ("finesse", self.finesse),
            ("f_mod_Hz", self.f_mod),
            ("s_per_rtHz", self.s),
        ] {
            if !(v > F::zero()) || !v.is_finite() {
                errs.push(format!("{}: {n} must be finite and > 0, got {v}", self.name));
            }
        }
        if !(self.duty_cycle > F::zero() && self.duty_cycle <= F::one()) {
            errs.push(format!("{}: duty_cycle must lie in (0, 1], got {}", self.name, self.duty_cycle));
        }
        let pulsed = self.duty_cycle < F::one();
        if pulsed && self.t_pulse.is_none() {
            errs.push(format!("{}: pulsed experiments need T_pulse_s", self.name));
        }
        if !pulsed && (self.t_pulse.is_some() || self.delta_n_b.is_some()) {
            errs.push(format!("{}: T_pulse_s and delta_n_B_per_T2 apply only when duty_cycle < 1", self.name));
        }
        if errs.is_empty() { Ok(()) } else { Err(Error::Validation(errs)) }
    }

    /// Magnet length implied by ∫B²dL and the average field.
    pub fn length(&self) -> F {
        self.int_b2_dl / (self.b_avg * self.b_avg)
    }
}

/// Derived figures of merit for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFigures<F> {
    pub name: String,
    pub status: String,
    /// m
    pub length: F,
    pub qed_ellipticity: F,
    /// 1/√Hz
    pub s_eff: F,
    /// 1/√Hz
    pub delta_n_eff: F,
    /// T⁻²/√Hz
    pub a_e_density: F,
    /// s
    pub time_snr1: F,
    /// Δn_B B² √(T_pulse / D_t), pulsed experiments with a per-pulse figure only.
    pub delta_n_eff_from_pulses: Option<F>,
}

/// Integration time for unit signal-to-noise, (s/Ψ)².
pub fn time_to_snr1<F: Real>(s_eff: F, psi: F) -> F {
    (s_eff / psi).powi(2)
}

/// Expected EHW ellipticity Ψ = 2𝓕 · 3A_e ∫B²dL / λ.
pub fn qed_ellipticity<F: Real>(k: &PhysicalConstants<F>, finesse: F, int_b2_dl: F, wavelength: F) -> F {
    lit::<F>(6.0) * finesse * k.a_e * int_b2_dl / wavelength
}

pub fn compare_experiments<F: Real>(
    k: &PhysicalConstants<F>,
    params: &[ExperimentParams<F>],
) -> Result<Vec<ExperimentFigures<F>>> {
    let errs: Vec<String> = params
        .iter()
        .filter_map(|p| match p.validate() {
            Err(Error::Validation(v)) => Some(v),
            _ => None,
        })
        .flatten()
        .collect();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    Ok(params
        .iter()
        .map(|p| {
            let length = p.length();
            let psi = qed_ellipticity(k, p.finesse, p.int_b2_dl, p.wavelength);
            let s_eff = p.s / p.duty_cycle.sqrt();
            let delta_n_eff = s_eff * p.wavelength / (lit::<F>(2.0) * p.finesse * length);
            let a_e_density = delta_n_eff / (lit::<F>(3.0) * p.b_avg * p.b_avg);
            let delta_n_eff_from_pulses = match (p.delta_n_b, p.t_pulse) {
                (Some(dnb), Some(tp)) => Some(dnb * p.b_avg * p.b_avg * (tp / p.duty_cycle).sqrt()),
                _ => None,
            };
            ExperimentFigures {
                name: p.name.clone(),
                status: p.status.clone(),
                length,
                qed_ellipticity: psi,
                s_eff,
                delta_n_eff,
                a_e_density,
                time_snr1: time_to_snr1(s_eff, psi),
                delta_n_eff_from_pulses,
            }
        })
        .collect())
}

/// Achieved and planned parameters of PVLAS, Q & A and BMV.
pub fn published_experiments() -> Vec<ExperimentParams<f64>> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        name: &str,
        status: &str,
        wavelength_nm: f64,
        int_b2_dl: f64,
        b_avg: f64,
        finesse: f64,
        detection: Detection,
        f_mod: f64,
        duty_cycle: f64,
        s: f64,
        pulse: Option<(f64, Option<f64>)>,
    ) -> ExperimentParams<f64> {
        ExperimentParams {
            name: name.into(),
            status: status.into(),
            wavelength: wavelength_nm * 1e-9,
            int_b2_dl,
            b_avg,
            finesse,
            detection,
            f_mod,
            duty_cycle,
            s,
            t_pulse: pulse.map(|p| p.0),
            delta_n_b: pulse.and_then(|p| p.1),
        }
    }
    use Detection::*;
    vec![
        row("PVLAS", "achieved", 1064.0, 1.85, 2.15, 2.4e5, Heterodyne, 6.0, 1.0, 3e-7, None),
        row("PVLAS", "planned", 1064.0, 10.0, 2.5, 4e5, Heterodyne, 20.0, 1.0, 3e-8, None),
        row("Q&A", "achieved", 1064.0, 3.2, 2.3, 3e4, Heterodyne, 26.0, 1.0, 1e-6, None),
        row("Q&A", "planned", 532.0, 19.0, 2.3, 1e5, Heterodyne, 26.0, 1.0, 1e-8, None),
        row("BMV", "achieved", 1064.0, 25.0, 14.0, 5e5, Homodyne, 500.0, 3e-6, 5e-8, Some((2e-3, Some(5e-20)))),
        row("BMV", "planned", 1064.0, 600.0, 30.0, 1e6, Homodyne, 500.0, 3e-6, 7e-9, Some((2e-3, None))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{RinSpec, SampleUnit};
    use approx::assert_relative_eq;

    fn k() -> PhysicalConstants<f64> {
        PhysicalConstants::codata()
    }

    /// Normalized record built directly from the component table.
    fn record(fs: f64, secs: f64, comps: &[(f64, f64, f64)], dc: f64) -> TimeSeries<f64> {
        let n = (fs * secs).round() as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                dc + comps.iter().map(|(f, a, p)| a * (TAU * f * t + p).cos()).sum::<f64>()
            })
            .collect();
        TimeSeries { sample_rate: fs, samples, t0: 0.0, seed: 0, unit: SampleUnit::Normalized, chunk_layout: String::new() }
    }

    #[test]
    fn projection_recovers_lines() {
        let comps = [(100.0, 2e-3, 0.4), (90.0, 3e-7, -1.0), (110.0, 5e-7, 2.0), (200.0, 5e-5, 0.8)];
        let ts = record(1000.0, 4.0, &comps, 1e-4);
        let t = demodulate(&ts, 100.0, 5.0, WindowPolicy::CommonPeriod).unwrap();
        assert_relative_eq!(t.i_dc, 1e-4, max_relative = 1e-9);
        for (line, (f, a, p)) in [t.carrier, t.lower, t.upper, t.second_harmonic].iter().zip(comps) {
            assert_eq!(line.frequency, f);
            assert_relative_eq!(line.amplitude, a, max_relative = 1e-8);
            assert!((line.phase - p).abs() < 1e-8);
        }
    }

    #[test]
    fn pure_dc_has_no_ac_lines() {
        let ts = record(1000.0, 2.0, &[], 3.0);
        let t = demodulate(&ts, 100.0, 5.0, WindowPolicy::CommonPeriod).unwrap();
        for l in [t.carrier, t.lower, t.upper, t.second_harmonic] {
            assert!(l.amplitude < 1e-12);
        }
        assert!(matches!(estimate_psi(&t, 1.0), Err(Error::ModulationAbsent)));
    }

    #[test]
    fn hann_and_full_windows_agree_on_integer_records() {
        let comps = [(100.0, 2e-3, 0.4), (90.0, 3e-7, -1.0), (110.0, 5e-7, 2.0), (200.0, 5e-5, 0.8)];
        let ts = record(1000.0, 4.0, &comps, 1e-4);
        let h = demodulate(&ts, 100.0, 5.0, WindowPolicy::Hann).unwrap();
        assert_relative_eq!(h.upper.amplitude, 5e-7, max_relative = 1e-6);
        assert_relative_eq!(h.enbw, 1.5 * h.resolution, max_relative = 1e-3);
    }

    #[test]
    fn common_period_truncates_to_integer_cycles() {
        // 4.1 s at 1 kHz: 110 Hz needs multiples of 100 samples
        let ts = record(1000.0, 4.05, &[(110.0, 1.0, 0.0)], 0.0);
        let t = demodulate(&ts, 100.0, 5.0, WindowPolicy::CommonPeriod).unwrap();
        assert_eq!(t.samples_used, 4000);
        assert_relative_eq!(t.upper.amplitude, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn short_record_is_a_resolution_error() {
        let ts = record(1000.0, 0.5, &[(100.0, 1.0, 0.0)], 1.0);
        assert!(matches!(demodulate(&ts, 100.0, 5.0, WindowPolicy::Full), Err(Error::Resolution(_))));
    }

    #[test]
    fn psi_from_table_algebra_is_exact() {
        let (eta0, psi, i_out) = (0.02, 3e-7, 5e-3);
        let line = |a| SpectralLine { frequency: 0.0, amplitude: a, phase: 0.0 };
        let t = SpectralTable {
            i_dc: i_out * eta0 * eta0 / 2.0,
            carrier: line(0.0),
            lower: line(eta0 * psi * i_out),
            upper: line(eta0 * psi * i_out),
            second_harmonic: line(eta0 * eta0 * i_out / 2.0),
            r_upper: 1e-12,
            r_lower: 1e-12,
            r: 1e-12,
            resolution: 0.1,
            enbw: 0.1,
            samples_used: 0,
            window: WindowPolicy::CommonPeriod,
        };
        assert_relative_eq!(estimate_psi(&t, i_out).unwrap(), psi, max_relative = 1e-12);
        let s = sensitivity_from_spectrum(&t, i_out).unwrap();
        let t2 = SpectralTable { r: 2e-12, ..t.clone() };
        assert_relative_eq!(sensitivity_from_spectrum(&t2, i_out).unwrap(), 2.0 * s, max_relative = 1e-12);
    }

    #[test]
    fn phase_wrapping() {
        use std::f64::consts::PI;
        assert_relative_eq!(wrap_phase(PI), PI);
        assert_relative_eq!(wrap_phase(-PI), PI);
        assert_relative_eq!(wrap_phase(3.0 * PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_phase(0.3), 0.3);
    }

    fn detector(temperature: f64) -> DetectorSpec<f64> {
        DetectorSpec {
            responsivity: 0.7,
            gain: 1e6,
            dark_noise_density: 2e-13,
            temperature,
            rin: RinSpec::flat(1e-7),
        }
    }

    #[test]
    fn budget_shot_asymptote_and_slopes() {
        let d = detector(300.0);
        let rows = noise_budget(&k(), &[1e-2, 1e-1, 1.0], 5e-3, 1e-8, &d, 500.0).unwrap();
        let oracle = (k().e_charge / (5e-3 * 0.7)).sqrt();
        assert_relative_eq!(rows[2].s_shot, oracle, max_relative = 1e-6);
        assert_relative_eq!(rows[0].s_dark / rows[1].s_dark, 10.0, max_relative = 1e-12);
        assert_relative_eq!(rows[0].s_j / rows[1].s_j, 10.0, max_relative = 1e-12);
        for r in &rows {
            let q = (r.s_shot.powi(2) + r.s_dark.powi(2) + r.s_j.powi(2) + r.s_rin.powi(2)).sqrt();
            assert_relative_eq!(r.s_total, q, max_relative = 1e-12);
        }
        let cold = noise_budget(&k(), &[1e-2], 5e-3, 1e-8, &detector(0.0), 500.0).unwrap();
        assert_eq!(cold[0].s_j, 0.0);
        assert!(noise_budget(&k(), &[0.0], 5e-3, 1e-8, &d, 500.0).is_err());
    }

    #[test]
    fn rayleigh_rejects_bad_input() {
        assert!(matches!(rayleigh_fit::<f64>(&[], None), Err(Error::Validation(_))));
        assert!(matches!(rayleigh_fit(&[1.0; 10], None), Err(Error::Validation(_))));
        assert!(matches!(rayleigh_fit(&[0.0; 200], None), Err(Error::Degenerate(_))));
        let mut v = vec![1.0; 200];
        v[3] = -1.0;
        assert!(matches!(rayleigh_fit(&v, None), Err(Error::Domain(_))));
    }

    #[test]
    fn rayleigh_ml_is_closed_form_and_scale_equivariant() {
        let v: Vec<f64> = (1..=500).map(|i| (i as f64 * 0.37).sin().abs() + 0.01).collect();
        let f = rayleigh_fit(&v, Some(0.5)).unwrap();
        let oracle = (v.iter().map(|x| x * x).sum::<f64>() / (2.0 * v.len() as f64)).sqrt();
        assert_relative_eq!(f.sigma, oracle, max_relative = 1e-12);
        assert_eq!(f.value_at_signal_bin, Some(0.5));
        let w: Vec<f64> = v.iter().map(|x| 10.0 * x).collect();
        assert_relative_eq!(rayleigh_fit(&w, None).unwrap().sigma, 10.0 * f.sigma, max_relative = 1e-12);
    }

    #[test]
    fn confidence_factor_values() {
        assert_relative_eq!(confidence_factor(0.95).unwrap(), 2.447_746_830_680_816, max_relative = 1e-12);
        assert!(confidence_factor(0.0).is_err());
        assert!(confidence_factor(1.0).is_err());
        assert!(confidence_factor(1e-12).unwrap() < 1e-5);
    }

    #[test]
    fn ae_limit_is_birefringence_limit_over_three_mean_b2() {
        let region = FieldRegion { b_ext: 2.15, length: 0.4, int_b2_dl: 1.85 };
        let r = limit_chain(3.35e-9, 0.95, 2.4e5, &region, 1064e-9).unwrap();
        assert_relative_eq!(r.a_e_limit, r.delta_n_limit / (3.0 * region.mean_b2()), max_relative = 1e-12);
        let lo = limit_chain(3.35e-9, 0.9, 2.4e5, &region, 1064e-9).unwrap();
        assert!(lo.delta_n_limit < r.delta_n_limit && lo.a_e_limit < r.a_e_limit);
        assert!(lo.sigma_gamma_gamma_limit < r.sigma_gamma_gamma_limit);
        let half = limit_chain(3.35e-9 / 2.0, 0.95, 2.4e5, &region, 1064e-9).unwrap();
        assert_relative_eq!(half.delta_n_limit, r.delta_n_limit / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn cross_section_at_ehw_value_is_the_anchor() {
        let dn = crate::birefringence::ehw_birefringence(&k(), 2.3).unwrap();
        assert_relative_eq!(cross_section_limit(dn, 2.3).unwrap(), SIGMA_GAMMA_GAMMA_EHW_M2, max_relative = 1e-12);
    }

    #[test]
    fn ehw_a_e_from_published_2008_bound() {
        // Δn = 1.0e-19 at 2.3 T
        assert_relative_eq!(1.0e-19 / (3.0 * 2.3 * 2.3), 6.3e-21, max_relative = 1e-2);
    }

    fn beam() -> BeamParams<f64> {
        BeamParams::new(&k(), 1064e-9).unwrap()
    }

    fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn alp_curve_asymptotes() {
        let region = FieldRegion::uniform(2.3, 0.4);
        let masses = log_grid(1e-6, 1.0, 61);
        let c = alp_exclusion(AlpObservable::Birefringence, 4.6e-20, &region, &beam(), &masses).unwrap();
        assert!(c.valid.iter().all(|&v| v));
        let br = NaturalUnitBridge::<f64>::codata();
        let b = br.tesla_to_natural(2.3).unwrap();
        let l = br.meter_to_natural(0.4).unwrap();
        let w = beam().photon_energy;
        // small x: g = √(48Δn) ω / (B m L)
        let g_small = (48.0 * 4.6e-20f64).sqrt() * w / (b * masses[0] * l);
        assert_relative_eq!(c.limit[0], g_small, max_relative = 1e-6);
        // large x: g = m √(2Δn) / B
        let g_large = masses[60] * (2.0 * 4.6e-20f64).sqrt() / b;
        assert_relative_eq!(c.limit[60], g_large, max_relative = 1e-3);
        let tighter = alp_exclusion(AlpObservable::Birefringence, 1e-20, &region, &beam(), &masses).unwrap();
        assert!(tighter.limit.iter().zip(&c.limit).all(|(a, b)| a < b));
    }

    #[test]
    fn alp_dichroism_flags_sinc_zeros() {
        let region = FieldRegion::uniform(2.3, 0.4);
        let br = NaturalUnitBridge::<f64>::codata();
        let l = br.meter_to_natural(0.4).unwrap();
        // x = π exactly
        let m_zero = (std::f64::consts::PI * 4.0 * beam().photon_energy / l).sqrt();
        let masses = [m_zero * 0.5, m_zero, m_zero * 1.2];
        let c = alp_exclusion(AlpObservable::Dichroism, 1e-12, &region, &beam(), &masses).unwrap();
        assert_eq!(c.valid, vec![true, false, true]);
    }

    #[test]
    fn alp_closed_form_matches_numeric_inversion() {
        let region = FieldRegion::uniform(2.3, 0.4);
        let masses = [1e-4, 1e-3, 3e-3];
        let c = alp_exclusion(AlpObservable::Birefringence, 4.6e-20, &region, &beam(), &masses).unwrap();
        for (m, g) in masses.iter().zip(&c.limit) {
            let dn = |g: f64| {
                let model = crate::birefringence::AlpModel { kind: crate::birefringence::AlpKind::Pseudoscalar, g, mass: *m };
                crate::birefringence::alp_effect(&model, &region, &beam()).unwrap().delta_n
            };
            let (mut lo, mut hi) = (g * 1e-3, g * 1e3);
            while hi / lo > 1.0 + 1e-10 {
                let mid = (lo * hi).sqrt();
                if dn(mid) < 4.6e-20 { lo = mid } else { hi = mid }
            }
            assert_relative_eq!(lo, *g, max_relative = 1e-6);
        }
    }

    #[test]
    fn mcp_regime_exponents() {
        let masses = log_grid(1e-3, 1e6, 91);
        let c = mcp_exclusion(&k(), McpKind::Fermion, 4.6e-20, 2.3, &beam(), &masses).unwrap();
        // heavy particles: ε ∝ m
        let (i, j) = (80, 90);
        assert!(c.valid[i] && c.valid[j]);
        let slope = (c.limit[j] / c.limit[i]).ln() / (masses[j] / masses[i]).ln();
        assert_relative_eq!(slope, 1.0, max_relative = 1e-3);
        // light particles: ε independent of m
        assert!(c.valid[0] && c.valid[10]);
        assert_relative_eq!(c.limit[0], c.limit[10], max_relative = 1e-3);
        assert!(c.valid.iter().any(|v| !v));
    }

    #[test]
    fn mcp_scalar_over_fermion_weak_ratio() {
        let m = [1e6];
        let f = mcp_exclusion(&k(), McpKind::Fermion, 4.6e-20, 2.3, &beam(), &m).unwrap();
        let s = mcp_exclusion(&k(), McpKind::Scalar, 4.6e-20, 2.3, &beam(), &m).unwrap();
        assert_relative_eq!(s.limit[0] / f.limit[0], 2f64.powf(0.25), max_relative = 1e-3);
    }

    #[test]
    fn mass_grid_must_be_sorted() {
        let region = FieldRegion::uniform(2.3, 0.4);
        assert!(alp_exclusion(AlpObservable::Birefringence, 1e-20, &region, &beam(), &[1e-3, 1e-4]).is_err());
        assert!(mcp_exclusion(&k(), McpKind::Scalar, 1e-20, 2.3, &beam(), &[]).is_err());
    }

    #[test]
    fn published_experiment_rows() {
        let figs = compare_experiments(&k(), &published_experiments()).unwrap();
        let pvlas_planned = &figs[1];
        assert_relative_eq!(pvlas_planned.qed_ellipticity, 3e-11, max_relative = 0.15);
        assert_relative_eq!(pvlas_planned.time_snr1, 12.0 * 86400.0, max_relative = 0.15);
        assert_relative_eq!(pvlas_planned.length, 1.6, max_relative = 1e-12);
        let bmv = &figs[4];
        assert_relative_eq!(bmv.s_eff, 5e-8 / 3e-6f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(bmv.delta_n_eff_from_pulses.unwrap(), 2.6e-16, max_relative = 0.15);
        assert_eq!(figs[0].s_eff, 3e-7);
    }

    #[test]
    fn experiment_validation() {
        let mut p = published_experiments()[4].clone();
        p.t_pulse = None;
        assert!(p.validate().is_err());
        let mut q = published_experiments()[0].clone();
        q.duty_cycle = 0.0;
        assert!(compare_experiments(&k(), &[q]).is_err());
    }

    #[test]
    fn single_precision_budget_and_limits() {
        let k32 = PhysicalConstants::<f32>::codata();
        let d = DetectorSpec { responsivity: 0.7f32, gain: 1e6, dark_noise_density: 2e-13, temperature: 300.0, rin: RinSpec::flat(1e-7) };
        let r = noise_budget(&k32, &[1.0f32], 5e-3, 1e-8, &d, 500.0).unwrap();
        assert!((r[0].s_shot / 6.766e-9 - 1.0).abs() < 1e-3);
        let dn = birefringence_limit(3.35e-9f32, 0.95, 2.4e5, 0.4, 1064e-9).unwrap();
        assert!((dn / 4.6e-20 - 1.0).abs() < 0.02);
    }

    proptest::proptest! {
        #[test]
        fn limits_monotone(sigma in 1e-10f64..1e-6, c1 in 0.01f64..0.98, dc in 0.001f64..0.01) {
            let c2 = c1 + dc;
            let a = birefringence_limit(sigma, c1, 2.4e5, 0.4, 1064e-9).unwrap();
            let b = birefringence_limit(sigma, c2, 2.4e5, 0.4, 1064e-9).unwrap();
            let c = birefringence_limit(sigma * 1.1, c1, 2.4e5, 0.4, 1064e-9).unwrap();
            proptest::prop_assert!(a < b && a < c);
            let ea = ae_limit(sigma, c1, 2.4e5, 1.85, 1064e-9).unwrap();
            let eb = ae_limit(sigma, c2, 2.4e5, 1.85, 1064e-9).unwrap();
            proptest::prop_assert!(ea < eb);
        }

        #[test]
        fn psi_is_invariant_under_intensity_rescaling(scale in 1e-3f64..1e3) {
            let comps = [(100.0, 2e-3, 0.4), (90.0, 3e-7, -1.0), (110.0, 5e-7, 2.0), (200.0, 5e-5, 0.8)];
            let ts = record(1000.0, 2.0, &comps, 1e-4);
            let mut scaled = ts.clone();
            scaled.samples.iter_mut().for_each(|s| *s *= scale);
            let a = estimate_psi(&demodulate(&ts, 100.0, 5.0, WindowPolicy::CommonPeriod).unwrap(), 1.0).unwrap();
            let b = estimate_psi(&demodulate(&scaled, 100.0, 5.0, WindowPolicy::CommonPeriod).unwrap(), scale).unwrap();
            proptest::prop_assert!((a / b - 1.0).abs() < 1e-9);
        }
    }
}
