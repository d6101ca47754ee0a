use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use vmb_core::analysis::{
    alp_exclusion, compare_experiments, demodulate, ellipticity_spectrum, estimate_psi, limit_chain, mcp_exclusion,
    noise_budget, published_experiments, rayleigh_fit, sensitivity_from_spectrum, sensitivity_per_sideband,
    time_to_snr1, AlpObservable, EllipticitySpectrum, ExperimentFigures, NOISE_BUDGET_COLUMNS, EXCLUSION_COLUMNS,
};
use vmb_core::birefringence::{birefringence, retardation, BirefringenceModel, FieldMode, McpKind};
use vmb_core::signal::{synthesize, EllipticitySource, SampleUnit};
use vmb_core::{ExclusionCurve, ExperimentParams, LimitResult, RayleighFit, SpectralTable, TimeSeries};

use crate::config::{ExclusionTarget, RunConfig};
use crate::output::{finite, num, sha256_hex, write_csv, write_json, Metadata};
use crate::CliError;

/// What a command leaves behind: files written and a short human summary.
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub struct Loaded {
    pub cfg: RunConfig,
    pub hash: String,
}

pub fn load_config(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg = RunConfig::parse(&text)?;
    let hash = cfg.hash();
    Ok(Loaded { cfg, hash })
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize)]
pub struct MagnetPrediction {
    pub delta_n: f64,
    pub delta_kappa: f64,
    pub regime_valid: bool,
    /// π Δn L / λ, rad
    pub single_pass_psi: f64,
    /// (2𝓕/π) ψ
    pub cavity_psi: f64,
}

#[derive(Debug, Serialize)]
pub struct PredictReport {
    pub model: BirefringenceModel<f64>,
    pub finesse: f64,
    pub magnets: Vec<MagnetPrediction>,
    /// Amplitude of the summed signal at 2ν_mag, for magnets sharing ν_mag.
    pub psi_total: f64,
    #[serde(rename = "s_total_per_rtHz")]
    pub s_total: f64,
    /// Absent when no signal is expected.
    pub time_snr1_s: Option<f64>,
}

pub fn predict(l: &Loaded) -> Result<(PredictReport, Outcome), CliError> {
    let cfg = &l.cfg;
    let k = cfg.constants();
    let beam = cfg.beam()?;
    let model = cfg.model().map_err(|e| CliError::Core(vmb_core::Error::Validation(vec![e])))?;
    let finesse = cfg.finesse()?;
    let specs = cfg.magnet_specs();
    let cavity = EllipticitySource::new(&k, &specs, &model, &beam, finesse)?.amplitudes();
    let mode = match model {
        BirefringenceModel::Alp(_) => FieldMode::Uniform,
        _ => FieldMode::PathAveraged,
    };
    let mut magnets = Vec::new();
    let mut phasor = Complex64::new(0.0, 0.0);
    for (m, &a) in specs.iter().zip(&cavity) {
        let region = m.region();
        let dn = birefringence(&k, &model, &region, &beam, mode)?;
        let psi = std::f64::consts::PI * retardation(&k, &model, &region, &beam)? / beam.wavelength;
        phasor += Complex64::from_polar(a, 2.0 * (m.theta_mag + m.orientation_offset));
        magnets.push(MagnetPrediction {
            delta_n: dn.delta_n,
            delta_kappa: dn.delta_kappa,
            regime_valid: dn.regime_valid,
            single_pass_psi: psi,
            cavity_psi: a,
        });
    }
    let psi_total = phasor.norm();
    let row = noise_budget(
        &k,
        &[cfg.modulator.eta0],
        cfg.optics.i_out,
        cfg.optics.sigma2,
        &cfg.detector(),
        cfg.modulator.nu_mod,
    )?[0];
    let time = if psi_total > 0.0 { finite(time_to_snr1(row.s_total, psi_total)) } else { None };
    let report = PredictReport { model, finesse, magnets, psi_total, s_total: row.s_total, time_snr1_s: time };

    let meta = Metadata::new("predict", l.hash.clone(), None);
    let path = write_json(&cfg.output_dir(), "predict.json", &meta, &report)?;
    let mut summary = String::new();
    for (i, m) in report.magnets.iter().enumerate() {
        summary += &format!(
            "magnet {i}: delta_n = {:.4e}  psi = {:.4e}  Psi = {:.4e}\n",
            m.delta_n, m.single_pass_psi, m.cavity_psi
        );
    }
    summary += &format!("Psi total = {:.4e}\ns_total = {:.4e} /rtHz\n", psi_total, row.s_total);
    summary += &match time {
        Some(t) => format!("time for SNR 1 = {t:.4e} s ({:.3} d)", t / 86400.0),
        None => "time for SNR 1 = unbounded".to_string(),
    };
    Ok((report, Outcome { files: vec![path], summary }))
}

pub fn synth(l: &Loaded, seed: Option<u64>) -> Result<Outcome, CliError> {
    let cfg = &l.cfg;
    let seed = seed.unwrap_or(cfg.synthesis.seed);
    let ts = synthesize(
        &cfg.constants(),
        &cfg.synth_config()?,
        &cfg.model().map_err(|e| CliError::Core(vmb_core::Error::Validation(vec![e])))?,
        &cfg.beam()?,
        cfg.synthesis.duration,
        seed,
    )?;
    let meta = Metadata::new("synth", l.hash.clone(), Some(seed));
    // the series writes its own seed line
    let pairs: Vec<_> = meta.pairs().into_iter().filter(|(k, _)| k != "seed").collect();
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let path = dir.join("timeseries.csv");
    let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = std::io::BufWriter::new(f);
    ts.write_csv(&mut w, &pairs)?;
    std::io::Write::flush(&mut w).map_err(|e| CliError::io(&path, e))?;
    let summary = format!("{} samples at {} Hz, seed {seed}", ts.len(), ts.sample_rate);
    Ok(Outcome { files: vec![path], summary })
}

fn input_seed(meta: &std::collections::BTreeMap<String, String>) -> Option<u64> {
    meta.get("seed").and_then(|s| s.parse().ok())
}

/// Reference power for ellipticity scaling: 1 when samples are already
/// normalised to I_out.
fn scale_power(cfg: &RunConfig, ts: &TimeSeries) -> f64 {
    match ts.unit {
        SampleUnit::Normalized => 1.0,
        SampleUnit::Current { .. } => cfg.optics.i_out,
    }
}

#[derive(Debug, Serialize)]
pub struct DemodReport {
    pub table: SpectralTable,
    pub psi: f64,
    /// Pooled-density sensitivity, 1/√Hz.
    #[serde(rename = "sensitivity_per_rtHz")]
    pub sensitivity: f64,
    #[serde(rename = "sensitivity_upper_per_rtHz")]
    pub sensitivity_upper: f64,
    #[serde(rename = "sensitivity_lower_per_rtHz")]
    pub sensitivity_lower: f64,
}

pub fn demod(l: &Loaded, input: &Path) -> Result<(DemodReport, Outcome), CliError> {
    let cfg = &l.cfg;
    let bytes = read_input(input)?;
    let (ts, meta_in) = TimeSeries::read_csv(bytes.as_slice())?;
    let table = demodulate(&ts, cfg.modulator.nu_mod, cfg.magnets[0].nu_mag, cfg.analysis.window)?;
    let p = scale_power(cfg, &ts);
    let psi = estimate_psi(&table, p)?;
    let s = sensitivity_from_spectrum(&table, p)?;
    let (su, sl) = sensitivity_per_sideband(&table, p)?;
    let report = DemodReport {
        table,
        psi,
        sensitivity: s,
        sensitivity_upper: su,
        sensitivity_lower: sl,
    };
    let meta = Metadata::new("demod", l.hash.clone(), input_seed(&meta_in)).with_input("series", &bytes);
    let path = write_json(&cfg.output_dir(), "spectral_table.json", &meta, &report)?;
    let summary = format!("Psi = {psi:.6e}\ns = {s:.4e} /rtHz");
    Ok((report, Outcome { files: vec![path], summary }))
}

const SPECTRUM_COLUMNS: [&str; 3] = ["f_offset_Hz", "amplitude", "is_signal"];

fn read_spectrum(bytes: &[u8]) -> Result<EllipticitySpectrum<f64>, CliError> {
    let mut spectrum = EllipticitySpectrum { frequency: Vec::new(), amplitude: Vec::new(), signal_index: None, resolution: 0.0 };
    let bad = |n: usize, what: &str| CliError::Core(vmb_core::Error::Parse(format!("spectrum line {n}: {what}")));
    let mut header = false;
    for (n, line) in bytes.lines().enumerate() {
        let line = line.map_err(|e| CliError::Core(e.into()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header {
            header = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(n + 1, "expected three columns"));
        }
        let f: f64 = cols[0].trim().parse().map_err(|_| bad(n + 1, "bad frequency"))?;
        let a: f64 = cols[1].trim().parse().map_err(|_| bad(n + 1, "bad amplitude"))?;
        if cols[2].trim() == "1" {
            spectrum.signal_index = Some(spectrum.frequency.len());
        }
        spectrum.frequency.push(f);
        spectrum.amplitude.push(a);
    }
    if spectrum.frequency.len() >= 2 {
        spectrum.resolution = spectrum.frequency[1] - spectrum.frequency[0];
    }
    Ok(spectrum)
}

fn csv_header(bytes: &[u8]) -> Option<String> {
    bytes
        .lines()
        .map_while(Result::ok)
        .map(|l| l.trim().to_string())
        .find(|l| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Serialize)]
pub struct FloorReport {
    pub rayleigh: RayleighFit,
    pub limit: LimitResult,
    /// Bin spacing of the fitted spectrum, Hz.
    pub resolution: f64,
}

/// Accepts a time series or an ellipticity spectrum written by an earlier run.
pub fn floor(l: &Loaded, input: &Path) -> Result<(FloorReport, Outcome), CliError> {
    let cfg = &l.cfg;
    let bytes = read_input(input)?;
    let dir = cfg.output_dir();
    let mut files = Vec::new();
    let header = csv_header(&bytes).unwrap_or_default();
    let (spectrum, seed) = if header == SPECTRUM_COLUMNS.join(",") {
        let seed = bytes
            .lines()
            .map_while(Result::ok)
            .find_map(|l| l.strip_prefix("# seed: ").and_then(|s| s.trim().parse().ok()));
        (read_spectrum(&bytes)?, seed)
    } else {
        let (ts, meta_in) = TimeSeries::read_csv(bytes.as_slice())?;
        let spectrum = ellipticity_spectrum(
            &ts,
            cfg.modulator.nu_mod,
            cfg.magnets[0].nu_mag,
            scale_power(cfg, &ts),
            cfg.analysis.band,
            cfg.analysis.window,
        )?;
        let seed = input_seed(&meta_in);
        let meta = Metadata::new("floor", l.hash.clone(), seed).with_input("series", &bytes);
        let rows = spectrum.frequency.iter().zip(&spectrum.amplitude).enumerate().map(|(i, (f, a))| {
            vec![num(*f), num(*a), if Some(i) == spectrum.signal_index { "1" } else { "0" }.to_string()]
        });
        files.push(write_csv(&dir, "ellipticity_spectrum.csv", &meta, &SPECTRUM_COLUMNS, rows)?);
        (spectrum, seed)
    };
    let fit = rayleigh_fit(&spectrum.noise_amplitudes(), spectrum.signal_amplitude())?;
    let limit = limit_chain(
        fit.sigma,
        cfg.analysis.confidence,
        cfg.finesse()?,
        &cfg.combined_region(),
        cfg.wavelength_m(),
    )?;
    let report = FloorReport { rayleigh: fit, limit, resolution: spectrum.resolution };
    let meta = Metadata::new("floor", l.hash.clone(), seed).with_input("input", &bytes);
    files.push(write_json(&dir, "floor.json", &meta, &report)?);
    let summary = format!(
        "sigma = {:.4e} (chi2/dof {:.2})\ndelta_n < {:.3e}\nA_e < {:.3e} /T^2\nsigma_gg < {:.3e} m^2",
        fit.sigma, fit.chi2_per_dof, limit.delta_n_limit, limit.a_e_limit, limit.sigma_gamma_gamma_limit
    );
    Ok((report, Outcome { files, summary }))
}

/// Reads `result.limit.delta_n_limit` from a floor report.
pub fn limit_from_floor(path: &Path) -> Result<f64, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    v.pointer("/result/limit/delta_n_limit")
        .and_then(|x| x.as_f64())
        .ok_or_else(|| CliError::Schema(format!("{}: no result.limit.delta_n_limit", path.display())))
}

pub fn exclude(l: &Loaded, limit: f64) -> Result<(ExclusionCurve, Outcome), CliError> {
    let cfg = &l.cfg;
    let k = cfg.constants();
    let beam = cfg.beam()?;
    let region = cfg.combined_region();
    let masses = cfg.mass_grid();
    let curve = match cfg.analysis.exclusion {
        ExclusionTarget::AlpBirefringence => {
            alp_exclusion(AlpObservable::Birefringence, limit, &region, &beam, &masses)?
        }
        ExclusionTarget::AlpDichroism => alp_exclusion(AlpObservable::Dichroism, limit, &region, &beam, &masses)?,
        ExclusionTarget::McpFermion => mcp_exclusion(&k, McpKind::Fermion, limit, region.b_ext, &beam, &masses)?,
        ExclusionTarget::McpScalar => mcp_exclusion(&k, McpKind::Scalar, limit, region.b_ext, &beam, &masses)?,
    };
    let mut meta = Metadata::new("exclude", l.hash.clone(), None);
    meta.inputs.push(("limit".into(), num(limit)));
    let rows = curve
        .mass_grid
        .iter()
        .zip(&curve.limit)
        .zip(&curve.valid)
        .map(|((m, g), v)| vec![num(*m), num(*g), (*v as u8).to_string()]);
    let path = write_csv(&cfg.output_dir(), "exclusion.csv", &meta, &EXCLUSION_COLUMNS, rows)?;
    let flagged = curve.valid.iter().filter(|v| !**v).count();
    let summary = format!("{} masses, {flagged} flagged", curve.mass_grid.len());
    Ok((curve, Outcome { files: vec![path], summary }))
}

pub fn budget(l: &Loaded) -> Result<Outcome, CliError> {
    let cfg = &l.cfg;
    let rows = noise_budget(
        &cfg.constants(),
        &cfg.eta0_grid(),
        cfg.optics.i_out,
        cfg.optics.sigma2,
        &cfg.detector(),
        cfg.modulator.nu_mod,
    )?;
    let best = rows.iter().min_by(|a, b| a.s_total.total_cmp(&b.s_total)).copied();
    let meta = Metadata::new("budget", l.hash.clone(), None);
    let csv = rows.iter().map(|r| [r.eta0, r.s_shot, r.s_dark, r.s_j, r.s_rin, r.s_total].map(num).to_vec());
    let path = write_csv(&cfg.output_dir(), "budget.csv", &meta, &NOISE_BUDGET_COLUMNS, csv)?;
    let summary = match best {
        Some(b) => format!("minimum s_total = {:.4e} /rtHz at eta0 = {:.3e}", b.s_total, b.eta0),
        None => String::new(),
    };
    Ok(Outcome { files: vec![path], summary })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentsFile {
    pub experiment: Vec<ExperimentParams>,
}

pub fn experiments_toml(params: Vec<ExperimentParams>) -> String {
    toml::to_string(&ExperimentsFile { experiment: params }).expect("experiment table is representable in TOML")
}

pub fn compare(params: Option<&Path>, out_dir: &Path) -> Result<(Vec<ExperimentFigures<f64>>, Outcome), CliError> {
    let (list, input) = match params {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let file: ExperimentsFile = toml::from_str(&text).map_err(|e| CliError::Schema(e.to_string()))?;
            (file.experiment, Some(text))
        }
        None => (published_experiments(), None),
    };
    let hash = sha256_hex(experiments_toml(list.clone()).as_bytes());
    let figs = compare_experiments(&vmb_core::PhysicalConstants::codata(), &list)?;
    let mut meta = Metadata::new("compare", hash, None);
    if let Some(t) = &input {
        meta = meta.with_input("params", t.as_bytes());
    }
    let path = write_json(out_dir, "compare.json", &meta, &figs)?;
    let mut summary = format!(
        "{:<8} {:<9} {:>10} {:>10} {:>10} {:>10} {:>12}\n",
        "name", "status", "Psi", "s_eff", "dn_eff", "A_e", "T(SNR=1)"
    );
    for f in &figs {
        summary += &format!(
            "{:<8} {:<9} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e} {:>12}\n",
            f.name,
            f.status,
            f.qed_ellipticity,
            f.s_eff,
            f.delta_n_eff,
            f.a_e_density,
            human_time(f.time_snr1)
        );
    }
    Ok((figs, Outcome { files: vec![path], summary: summary.trim_end().to_string() }))
}

fn human_time(s: f64) -> String {
    const DAY: f64 = 86400.0;
    const YEAR: f64 = 365.25 * DAY;
    if s >= YEAR {
        format!("{:.3} yr", s / YEAR)
    } else {
        format!("{:.3} d", s / DAY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_formatting() {
        assert_eq!(human_time(12.0 * 86400.0), "12.000 d");
        assert_eq!(human_time(2.0 * 365.25 * 86400.0), "2.000 yr");
    }

    #[test]
    fn published_table_survives_toml() {
        let text = experiments_toml(published_experiments());
        let back: ExperimentsFile = toml::from_str(&text).unwrap();
        assert_eq!(back.experiment, published_experiments());
    }

    #[test]
    fn spectrum_csv_round_trip() {
        let text = "# seed: 4\nf_offset_Hz,amplitude,is_signal\n9.5,1e-9,0\n10,2e-9,1\n10.5,3e-9,0\n";
        let s = read_spectrum(text.as_bytes()).unwrap();
        assert_eq!(s.signal_index, Some(1));
        assert_eq!(s.noise_amplitudes(), vec![1e-9, 3e-9]);
        assert_eq!(s.resolution, 0.5);
        assert_eq!(csv_header(text.as_bytes()).unwrap(), SPECTRUM_COLUMNS.join(","));
    }
}
