use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use homlab::coincidence::{
    accidental_estimate, fit_dip_with, format_uncertainty, read_csv, CoincidenceError,
    DipFitResult, FitOptions, HeraldCorrelator, Histogram, HistogramConfig, TagReader, TagWriter,
    MAGIC,
};
use homlab::fock::{FockDim, SourceParams};
use homlab::hom::{
    coincidence_sweep, level_set, visibility_map, HeraldArm, ModelOptions, SweepAxis,
    VisibilityMap,
};
use homlab::mc::{McConfig, Simulator};
use homlab::temporal::{
    coincidence_profile, fwhm_of_dip, integrated_dip_depth, jitter_condition, DipKernel,
    TemporalConfig, TemporalError,
};
use homlab::tolerance::Tolerances;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::Outputs;
use crate::CliError;

/// Fully resolved parameters of one run, as stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum RunConfig {
    VisibilityMap(MapRun),
    DipModel(DipRun),
    TagsGen(GenRun),
    TagsAnalyze(AnalyzeRun),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub fixed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRun {
    pub mu_axis: Vec<f64>,
    pub nbar_axis: Vec<f64>,
    pub dim: usize,
    pub herald_arm: HeraldArm,
    pub efficiencies: [f64; 3],
    pub level: f64,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipRun {
    pub temporal: TemporalConfig,
    pub half_span_ps: u64,
    pub step_ps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TagFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRun {
    pub mc: McConfig,
    pub tag_format: TagFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRun {
    pub input: PathBuf,
    pub window_ps: u64,
    pub bin_ps: u64,
    pub model: TemporalConfig,
    pub free_dip_width: bool,
}

/// Key results echoed on stdout.
pub type Summary = Vec<(String, serde_json::Value)>;

pub fn execute(run: &RunConfig, out: &mut Outputs) -> Result<Summary, CliError> {
    match run {
        RunConfig::VisibilityMap(r) => run_map(r, out),
        RunConfig::DipModel(r) => run_dip(r, out),
        RunConfig::TagsGen(r) => run_gen(r, out),
        RunConfig::TagsAnalyze(r) => run_analyze(r, out),
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or(String::new(), num)
}

fn run_map(r: &MapRun, out: &mut Outputs) -> Result<Summary, CliError> {
    let dim = FockDim::new(r.dim).map_err(CliError::from_fock)?;
    let opts = ModelOptions {
        herald_arm: r.herald_arm,
        efficiencies: r.efficiencies,
    };
    // The cutoff must hold at the largest flux on the grid.
    let top = |axis: &[f64]| axis.iter().cloned().fold(0.0, f64::max);
    let corner = SourceParams::new(top(&r.mu_axis), top(&r.nbar_axis), dim).map_err(CliError::from_fock)?;
    corner
        .check_truncation(&Tolerances::DEFAULT)
        .map_err(CliError::from_fock)?;

    let map: VisibilityMap = visibility_map(&r.mu_axis, &r.nbar_axis, dim, &opts).map_err(CliError::from_hom)?;
    let mut rows = Vec::new();
    for (i, &mu) in map.mu_axis.iter().enumerate() {
        for (j, &nbar) in map.nbar_axis.iter().enumerate() {
            rows.push(vec![num(mu), num(nbar), opt_num(map.get(i, j))]);
        }
    }
    out.add_csv("map.csv", &["mu", "nbar", "visibility"], &rows)?;
    out.add_json("map.json", &map)?;
    let level: Vec<Vec<String>> = level_set(&map, r.level)
        .into_iter()
        .map(|(m, n)| vec![num(m), num(n)])
        .collect();
    out.add_csv("level70.csv", &["mu", "nbar"], &level)?;

    if let Some(s) = &r.sweep {
        let axis = match s.axis {
            SweepAxis::Mu => &r.mu_axis,
            SweepAxis::Nbar => &r.nbar_axis,
        };
        let pts = coincidence_sweep(s.axis, axis, s.fixed, dim, &opts).map_err(CliError::from_hom)?;
        let rows: Vec<Vec<String>> = pts
            .iter()
            .map(|p| {
                let v = if p.n_dis > 0.0 {
                    num(1.0 - p.n_indis / p.n_dis)
                } else {
                    String::new()
                };
                vec![num(p.value), num(p.n_indis), num(p.n_dis), v]
            })
            .collect();
        out.add_csv("sweep.csv", &["value", "n_indis", "n_dis", "visibility"], &rows)?;
    }

    let mut summary: Summary = vec![
        ("cells".into(), json!(r.mu_axis.len() * r.nbar_axis.len())),
        ("degenerate_cells".into(), json!(map.degenerate_cells())),
        ("level_points".into(), json!(level.len())),
    ];
    let anchor = SourceParams::new(0.01, 0.01, dim).map_err(CliError::from_fock)?;
    let v = homlab::hom::visibility_with(&anchor, &opts).map_err(CliError::from_hom)?;
    summary.push(("visibility_0.01_0.01".into(), json!(v.visibility)));
    Ok(summary)
}

fn run_dip(r: &DipRun, out: &mut Outputs) -> Result<Summary, CliError> {
    let cfg = &r.temporal;
    cfg.validate().map_err(CliError::from_temporal)?;
    if r.step_ps == 0 || r.half_span_ps == 0 {
        return Err(CliError::config("tau axis span and step must be > 0"));
    }
    let n = (r.half_span_ps / r.step_ps) as i64;
    let axis: Vec<f64> = (-n..=n).map(|k| (k * r.step_ps as i64) as f64 * 1e-12).collect();
    let profile = coincidence_profile(cfg, &axis).map_err(CliError::from_temporal)?;
    let rows: Vec<Vec<String>> = (0..axis.len())
        .map(|i| {
            vec![
                num((axis[i] * 1e12).round()),
                num(profile.envelope[i]),
                num(profile.dip_factor[i]),
                num(profile.combined[i]),
            ]
        })
        .collect();
    out.add_csv("profile.csv", &["tau_ps", "envelope", "dip_factor", "combined"], &rows)?;

    let (fwhm_ps, note) = match fwhm_of_dip(cfg) {
        Ok(f) => (Some(f * 1e12), None),
        Err(TemporalError::NoDip) => (None, Some("no dip: zero-delay depth is zero")),
        Err(e) => return Err(CliError::from_temporal(e)),
    };
    let jitter = jitter_condition(cfg).map_err(CliError::from_temporal)?;
    let kernel = DipKernel::new(cfg).map_err(CliError::from_temporal)?;
    let depth = integrated_dip_depth(cfg).map_err(CliError::from_temporal)?;
    let peak_depth = axis
        .iter()
        .map(|&t| cfg.visibility0 * kernel.eval(t))
        .fold(f64::MIN, f64::max);
    let report = json!({
        "fwhm_ps": fwhm_ps,
        "note": note,
        "dip_depth": depth,
        "peak_depth": peak_depth,
        "jitter_depth_factor": kernel.jitter_depth_factor(),
        "envelope_base_ps": 2.0 * cfg.gate_width * 1e12,
        "jitter_condition": {
            "coherence_time_ps": jitter.coherence_time * 1e12,
            "jitter_ps": jitter.jitter * 1e12,
            "ratio": if jitter.ratio.is_finite() { json!(jitter.ratio) } else { json!("inf") },
            "satisfied": jitter.satisfied,
        },
    });
    out.add_json("report.json", &report)?;
    Ok(vec![
        ("fwhm_ps".into(), json!(fwhm_ps)),
        ("dip_depth".into(), json!(depth)),
        ("coherence_time_ps".into(), json!(jitter.coherence_time * 1e12)),
        ("jitter_ps".into(), json!(jitter.jitter * 1e12)),
        ("jitter_condition_satisfied".into(), json!(jitter.satisfied)),
    ])
}

fn run_gen(r: &GenRun, out: &mut Outputs) -> Result<Summary, CliError> {
    let mut sim = Simulator::new(&r.mc).map_err(CliError::from_mc)?;
    let tmp = out.temp_file()?;
    let file = tmp.reopen().map_err(CliError::io)?;
    let (mut heralds, mut total) = (0u64, 0u64);
    let name = match r.tag_format {
        TagFormat::Binary => {
            let mut w = TagWriter::new(BufWriter::new(file)).map_err(CliError::from_coincidence)?;
            while let Some(chunk) = sim.next_chunk() {
                heralds += chunk.iter().filter(|t| t.channel == 3).count() as u64;
                total += chunk.len() as u64;
                w.write(&chunk).map_err(CliError::from_coincidence)?;
            }
            let buf = w.finish().map_err(CliError::from_coincidence)?;
            buf.into_inner()
                .map_err(|e| CliError::io(e.error()))?
                .sync_all()
                .map_err(CliError::io)?;
            "tags.bin"
        }
        TagFormat::Csv => {
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            w.write_record(["channel", "timestamp_ps"]).map_err(CliError::io)?;
            while let Some(chunk) = sim.next_chunk() {
                for t in &chunk {
                    heralds += (t.channel == 3) as u64;
                    w.write_record([t.channel.to_string(), t.timestamp.to_string()])
                        .map_err(CliError::io)?;
                }
                total += chunk.len() as u64;
            }
            w.flush().map_err(CliError::io)?;
            "tags.csv"
        }
    };
    out.persist(tmp, name)?;
    Ok(vec![
        ("file".into(), json!(name)),
        ("records".into(), json!(total)),
        ("heralds".into(), json!(heralds)),
        ("seed".into(), json!(r.mc.seed)),
    ])
}

fn histogram_from_file(path: &Path, cfg: HistogramConfig) -> Result<Histogram, CliError> {
    let file = File::open(path).map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let binary = reader.fill_buf().map_err(CliError::io)?.starts_with(&MAGIC[..6]);
    let mut corr = HeraldCorrelator::new(cfg).map_err(CliError::from_coincidence)?;
    if binary {
        for tag in TagReader::new(reader).map_err(CliError::from_coincidence)? {
            corr.push(tag.map_err(CliError::from_coincidence)?)
                .map_err(CliError::from_coincidence)?;
        }
    } else {
        let tags = read_csv(reader).map_err(CliError::from_coincidence)?;
        corr.push_all(&tags.records).map_err(CliError::from_coincidence)?;
    }
    Ok(corr.finish())
}

fn estimate_json(e: homlab::coincidence::Estimate, unit: f64) -> serde_json::Value {
    json!({
        "value": e.value * unit,
        "stderr": e.stderr * unit,
        "formatted": format_uncertainty(e.value * unit, e.stderr * unit),
    })
}

fn fit_json(f: &DipFitResult) -> serde_json::Value {
    json!({
        "v_raw": estimate_json(f.v_raw, 1.0),
        "v_net": estimate_json(f.v_net, 1.0),
        "v_raw_percent": format!("{}%", format_uncertainty(100.0 * f.v_raw.value, 100.0 * f.v_raw.stderr)),
        "v_net_percent": format!("{}%", format_uncertainty(100.0 * f.v_net.value, 100.0 * f.v_net.stderr)),
        "fwhm_ps": estimate_json(f.fwhm, 1e12),
        "tau0_ps": estimate_json(f.tau0, 1e12),
        "amplitude_per_bin": estimate_json(f.amplitude, 1.0),
        "baseline_per_bin": estimate_json(f.baseline_per_bin, 1.0),
        "baseline_noise_per_s": f.baseline_noise,
        "envelope_width_ps": f.envelope_width * 1e12,
        "chi2_reduced": f.chi2_reduced,
        "iterations": f.iterations,
    })
}

fn run_analyze(r: &AnalyzeRun, out: &mut Outputs) -> Result<Summary, CliError> {
    r.model.validate().map_err(CliError::from_temporal)?;
    let gate_ps = (r.model.gate_width * 1e12).round() as u64;
    let hcfg = HistogramConfig::new(r.window_ps, r.bin_ps, gate_ps).map_err(CliError::from_coincidence)?;
    let h = histogram_from_file(&r.input, hcfg)?;
    let opts = FitOptions {
        free_dip_width: r.free_dip_width,
        ..Default::default()
    };
    let fit = fit_dip_with(&h, &r.model, &opts).map_err(CliError::from_coincidence)?;
    let accidental = accidental_estimate(&h, r.model.gate_width).ok();

    let rows: Vec<Vec<String>> = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| vec![num((h.tau_center(i) * 1e12).round()), c.to_string()])
        .collect();
    out.add_csv("hist.csv", &["tau_ps", "counts"], &rows)?;
    let report = json!({
        "fit": fit_json(&fit),
        "accidental_per_bin": accidental.map(|a| json!({"value": a.per_bin, "stderr": a.stderr, "bins": a.bins})),
        "histogram": {
            "bin_ps": r.bin_ps,
            "window_ps": r.window_ps,
            "total_counts": h.total(),
            "total_heralds": h.total_heralds,
            "acquisition_span_s": h.acquisition_span,
        },
    });
    out.add_json("fit.json", &report)?;
    Ok(vec![
        ("v_raw".into(), json!(fit.v_raw.to_string())),
        ("v_net".into(), json!(fit.v_net.to_string())),
        ("fwhm_ps".into(), json!(format_uncertainty(fit.fwhm.value * 1e12, fit.fwhm.stderr * 1e12))),
        ("chi2_reduced".into(), json!(fit.chi2_reduced)),
        ("total_counts".into(), json!(h.total())),
    ])
}

impl CliError {
    pub fn from_fock(e: homlab::fock::FockError) -> Self {
        CliError::config(e.to_string())
    }

    pub fn from_hom(e: homlab::hom::HomError) -> Self {
        use homlab::hom::HomError;
        match e {
            HomError::Numerical(_) | HomError::DegenerateRegime { .. } => CliError::numerical(e.to_string()),
            _ => CliError::config(e.to_string()),
        }
    }

    pub fn from_temporal(e: TemporalError) -> Self {
        CliError::config(e.to_string())
    }

    pub fn from_mc(e: homlab::mc::McError) -> Self {
        use homlab::mc::McError;
        match e {
            McError::Hom(h) => CliError::from_hom(h),
            _ => CliError::config(e.to_string()),
        }
    }

    pub fn from_coincidence(e: CoincidenceError) -> Self {
        match e {
            CoincidenceError::Window(_) | CoincidenceError::Temporal(_) => CliError::config(e.to_string()),
            CoincidenceError::FitDivergence { .. } => CliError::numerical(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}
