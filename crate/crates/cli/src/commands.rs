//! Implementations of the CLI subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use turbmode::analytic::{CrosstalkPdf, PowerLawPdf};
use turbmode::estimate::{estimate_r0, TransmittanceSeries};
use turbmode::montecarlo::{simulate_crosstalk, simulate_transmittance, EmpiricalPdf};
use turbmode::spectrum::VarianceKernel;

use crate::config::{PdfTarget, RunConfig};
use crate::{CliError, Format, IoArgs};

pub fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::input(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("invalid config {}: {e}", p.display())))
        }
    }
}

/// Shortest round-trip formatting, scientific notation where shorter.
fn fmt_float(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        None => match std::io::stdout().write_all(content.as_bytes()) {
            // A closed pipe (e.g. `turbmode pdf | head`) is not an error.
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => r.map_err(|e| CliError::input(format!("cannot write to stdout: {e}"))),
        },
        Some(p) => fs::write(p, content)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
    }
}

fn json_doc<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::input(format!("cannot serialise output: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn key_value_csv(rows: &[(&str, String)]) -> String {
    let mut s = String::from("quantity,value\n");
    for (k, v) in rows {
        s.push_str(k);
        s.push(',');
        s.push_str(v);
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// variances

#[derive(Serialize)]
struct VariancesOut {
    vartheta: f64,
    c_a: f64,
    c_g: f64,
    c_s: f64,
    /// r0-independent kernels: `c_a = r0^(-5/3) k_a`, `c_s = r0^(-5/3) k_s`.
    k_a: f64,
    k_s: f64,
    /// Power-law exponent of the first-order transmittance density.
    gamma: f64,
}

pub fn variances(io: &IoArgs) -> Result<(), CliError> {
    let cfg = load_config(&io.config)?;
    let params = cfg.turbulence()?;
    let beam = cfg.beam()?;
    let filter = cfg.mode_filter()?;
    let kernel = VarianceKernel::compute(params.inner_scale(), params.outer_scale(), &filter)?;
    let v = kernel.variances(params.r0())?;
    let out = VariancesOut {
        vartheta: turbmode::spectrum::vartheta(),
        c_a: v.c_a,
        c_g: v.c_g,
        c_s: v.c_s,
        k_a: kernel.k_a,
        k_s: kernel.k_s,
        gamma: 2.0 / (beam.waist() * beam.waist() * v.c_a),
    };
    let content = match io.format.unwrap_or(Format::Json) {
        Format::Json => json_doc(&out)?,
        Format::Csv => key_value_csv(&[
            ("vartheta", fmt_float(out.vartheta)),
            ("c_a", fmt_float(out.c_a)),
            ("c_g", fmt_float(out.c_g)),
            ("c_s", fmt_float(out.c_s)),
            ("k_a", fmt_float(out.k_a)),
            ("k_s", fmt_float(out.k_s)),
            ("gamma", fmt_float(out.gamma)),
        ]),
    };
    emit(&io.out, &content)
}

// ---------------------------------------------------------------------------
// pdf

#[derive(Serialize)]
struct PdfOut {
    target: &'static str,
    gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    t: Vec<f64>,
    density: Vec<f64>,
}

/// Power-law exponent: explicit override, or derived from the physical
/// configuration.
fn resolve_gamma(cfg: &RunConfig) -> Result<f64, CliError> {
    if let Some(g) = cfg.pdf.gamma {
        if !(g.is_finite() && g > 0.0) {
            return Err(CliError::input(format!(
                "pdf.gamma must be positive and finite, got {g}"
            )));
        }
        return Ok(g);
    }
    let params = cfg.turbulence()?;
    let beam = cfg.beam()?;
    let filter = cfg.mode_filter()?;
    let v = turbmode::spectrum::compute_variances(&params, &filter)?;
    Ok(2.0 / (beam.waist() * beam.waist() * v.c_a))
}

pub fn pdf(io: &IoArgs) -> Result<(), CliError> {
    let cfg = load_config(&io.config)?;
    let points = cfg.pdf.points;
    if points < 8 {
        return Err(CliError::input(format!(
            "pdf.points must be at least 8, got {points}"
        )));
    }
    let gamma = resolve_gamma(&cfg)?;

    let out = match cfg.pdf.target {
        PdfTarget::Fundamental => {
            let law = PowerLawPdf::new(gamma)?;
            let mut t = Vec::with_capacity(points);
            let mut density = Vec::with_capacity(points);
            for i in 1..=points {
                let x = i as f64 / points as f64;
                t.push(x);
                density.push(law.density(x)?);
            }
            PdfOut {
                target: "fundamental",
                gamma,
                level: None,
                t_max: None,
                t,
                density,
            }
        }
        PdfTarget::Crosstalk => {
            // gamma = 2/s fixes the scale of the xi law.
            let law = CrosstalkPdf::new(cfg.pdf.level, 2.0 / gamma)?;
            let t_max = law.t_max();
            let mut t = Vec::with_capacity(points - 1);
            let mut density = Vec::with_capacity(points - 1);
            // Square-root clustering toward t_max, where the density has an
            // integrable singularity.
            for i in 1..points {
                let u = 1.0 - i as f64 / points as f64;
                let x = t_max * (1.0 - u * u);
                t.push(x);
                density.push(law.density(x)?);
            }
            PdfOut {
                target: "crosstalk",
                gamma,
                level: Some(cfg.pdf.level),
                t_max: Some(t_max),
                t,
                density,
            }
        }
    };

    let content = match io.format.unwrap_or(Format::Csv) {
        Format::Json => json_doc(&out)?,
        Format::Csv => {
            let mut s = String::from("t,density\n");
            for (x, d) in out.t.iter().zip(&out.density) {
                s.push_str(&format!("{},{}\n", fmt_float(*x), fmt_float(*d)));
            }
            s
        }
    };
    emit(&io.out, &content)
}

// ---------------------------------------------------------------------------
// simulate

fn histogram_csv(h: &EmpiricalPdf) -> String {
    let mut s = String::from("bin_lo,bin_hi,density\n");
    for (d, e) in h.density().iter().zip(h.edges().windows(2)) {
        s.push_str(&format!(
            "{},{},{}\n",
            fmt_float(e[0]),
            fmt_float(e[1]),
            fmt_float(*d)
        ));
    }
    s
}

fn raw_lines(samples: &[f64]) -> String {
    let mut s = String::with_capacity(samples.len() * 20);
    for t in samples {
        s.push_str(&fmt_float(*t));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct HistogramOut {
    count: usize,
    seed: u64,
    bin_lo: Vec<f64>,
    bin_hi: Vec<f64>,
    density: Vec<f64>,
}

fn histogram_out(h: &EmpiricalPdf, seed: u64) -> HistogramOut {
    let edges = h.edges();
    HistogramOut {
        count: h.count(),
        seed,
        bin_lo: edges[..edges.len() - 1].to_vec(),
        bin_hi: edges[1..].to_vec(),
        density: h.density().to_vec(),
    }
}

pub fn simulate(io: &IoArgs, seed: Option<u64>, raw_out: &Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(&io.config)?;
    let params = cfg.turbulence()?;
    let beam = cfg.beam()?;
    let filter = cfg.mode_filter()?;
    let vars = turbmode::spectrum::compute_variances(&params, &filter)?;
    let sim = cfg.sim_config(seed, &beam)?;

    let run = simulate_transmittance(&vars, &beam, &sim)?;

    if let Some(path) = raw_out {
        fs::write(path, raw_lines(&run.samples))
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    }

    let content = match io.format.unwrap_or(Format::Csv) {
        Format::Csv => histogram_csv(&run.histogram),
        Format::Json => json_doc(&histogram_out(&run.histogram, sim.seed))?,
    };
    emit(&io.out, &content)
}

// ---------------------------------------------------------------------------
// crosstalk

#[derive(Serialize)]
struct CrosstalkLevelOut {
    level: u32,
    t_max: f64,
    bin_lo: Vec<f64>,
    bin_hi: Vec<f64>,
    density: Vec<f64>,
}

#[derive(Serialize)]
struct CrosstalkOut {
    count: usize,
    seed: u64,
    levels: Vec<CrosstalkLevelOut>,
}

/// `raw.txt` becomes `raw.level2.txt` for level 2.
fn level_path(base: &Path, level: u32) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.level{level}.{}", ext.to_string_lossy()),
        None => format!("{stem}.level{level}"),
    };
    base.with_file_name(name)
}

pub fn crosstalk(io: &IoArgs, seed: Option<u64>, raw_out: &Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(&io.config)?;
    let params = cfg.turbulence()?;
    let beam = cfg.beam()?;
    let filter = cfg.mode_filter()?;
    let vars = turbmode::spectrum::compute_variances(&params, &filter)?;
    let sim = cfg.sim_config(seed, &beam)?;

    let run = simulate_crosstalk(&vars, &beam, &sim, cfg.crosstalk.max_level)?;

    if let Some(base) = raw_out {
        for (k, samples) in run.samples.iter().enumerate() {
            let path = level_path(base, k as u32 + 1);
            fs::write(&path, raw_lines(samples))
                .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        }
    }

    let content = match io.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("level,bin_lo,bin_hi,density\n");
            for (k, h) in run.histograms.iter().enumerate() {
                let level = k + 1;
                for (d, e) in h.density().iter().zip(h.edges().windows(2)) {
                    s.push_str(&format!(
                        "{level},{},{},{}\n",
                        fmt_float(e[0]),
                        fmt_float(e[1]),
                        fmt_float(*d)
                    ));
                }
            }
            s
        }
        Format::Json => {
            let levels = run
                .histograms
                .iter()
                .enumerate()
                .map(|(k, h)| {
                    let out = histogram_out(h, sim.seed);
                    Ok(CrosstalkLevelOut {
                        level: k as u32 + 1,
                        t_max: turbmode::analytic::t_n_max(k as u32 + 1)?,
                        bin_lo: out.bin_lo,
                        bin_hi: out.bin_hi,
                        density: out.density,
                    })
                })
                .collect::<Result<Vec<_>, turbmode::Error>>()?;
            json_doc(&CrosstalkOut {
                count: sim.samples,
                seed: sim.seed,
                levels,
            })?
        }
    };
    emit(&io.out, &content)
}

// ---------------------------------------------------------------------------
// estimate-r0

/// Parse a transmittance trace: one value per line, or `time,value` pairs.
/// A non-numeric first line is accepted as a header.
fn parse_trace(text: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    let mut first_content_line = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let field = match fields.len() {
            1 => fields[0],
            2 => fields[1],
            n => {
                return Err(CliError::input(format!(
                    "line {}: expected 1 or 2 comma-separated fields, found {n}",
                    idx + 1
                )))
            }
        };
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if first_content_line => {} // header row
            Err(_) => {
                return Err(CliError::input(format!(
                    "line {}: cannot parse transmittance '{field}'",
                    idx + 1
                )))
            }
        }
        first_content_line = false;
    }
    if values.is_empty() {
        return Err(CliError::input("input contains no samples"));
    }
    Ok(values)
}

#[derive(Serialize)]
struct EstimateOut {
    gamma: f64,
    gamma_std_error: f64,
    samples_used: usize,
    rejected_count: usize,
    c_a: f64,
    r0_m: f64,
    r0_ci_lo_m: f64,
    r0_ci_hi_m: f64,
}

pub fn estimate(input: &Path, io: &IoArgs) -> Result<(), CliError> {
    let cfg = load_config(&io.config)?;
    let beam = cfg.beam()?;
    let filter = cfg.mode_filter()?;
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", input.display())))?;
    let series = TransmittanceSeries::from_values(parse_trace(&text)?)?;
    let est = estimate_r0(
        &series,
        &beam,
        cfg.turbulence.inner_scale_m,
        cfg.turbulence.outer_scale_m,
        &filter,
    )?;
    let out = EstimateOut {
        gamma: est.fit.gamma,
        gamma_std_error: est.fit.std_error,
        samples_used: est.fit.samples_used,
        rejected_count: est.rejected_count,
        c_a: est.c_a,
        r0_m: est.r0,
        r0_ci_lo_m: est.r0_interval.0,
        r0_ci_hi_m: est.r0_interval.1,
    };
    let content = match io.format.unwrap_or(Format::Json) {
        Format::Json => json_doc(&out)?,
        Format::Csv => key_value_csv(&[
            ("gamma", fmt_float(out.gamma)),
            ("gamma_std_error", fmt_float(out.gamma_std_error)),
            ("samples_used", out.samples_used.to_string()),
            ("rejected_count", out.rejected_count.to_string()),
            ("c_a", fmt_float(out.c_a)),
            ("r0_m", fmt_float(out.r0_m)),
            ("r0_ci_lo_m", fmt_float(out.r0_ci_lo_m)),
            ("r0_ci_hi_m", fmt_float(out.r0_ci_hi_m)),
        ]),
    };
    emit(&io.out, &content)
}
