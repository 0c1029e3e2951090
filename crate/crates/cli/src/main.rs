use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use homlab::fock::FockDim;
use homlab::hom::{log_space, HeraldArm, SweepAxis};
use homlab::mc::{McConfig, NoisePreset};
use homlab::temporal::{KernelShape, TemporalConfig};

mod commands;
mod output;

use commands::{AnalyzeRun, DipRun, GenRun, MapRun, RunConfig, Summary, Sweep, TagFormat};
use output::Outputs;

/// Failure with its process exit code: 2 configuration, 3 input data or
/// format, 4 numerical.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { code: 3, msg: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError { code: 4, msg: msg.into() }
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        CliError::data(format!("I/O error: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "homlab", version, about = "HOM interference between a weak coherent and a heralded single-photon source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Visibility over a (mu, nbar) grid, with the 70 % level set.
    VisibilityMap(MapArgs),
    /// Coincidence-versus-delay profile and dip width.
    DipModel(DipArgs),
    /// Generate a Monte Carlo time-tag file.
    TagsGen(GenArgs),
    /// Histogram a tag file and fit the dip.
    TagsAnalyze(AnalyzeArgs),
    /// Re-run a previous run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Summary format on stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Exponential,
    Gaussian,
}

#[derive(Args)]
struct TemporalArgs {
    #[arg(long)]
    gate_width_ns: Option<f64>,
    #[arg(long)]
    filter_fwhm_mhz: Option<f64>,
    #[arg(long)]
    jitter_fwhm_ps: Option<f64>,
    #[arg(long, conflicts_with = "detuning")]
    detuning_ghz: Option<f64>,
    /// Detuning in Hz.
    #[arg(long)]
    detuning: Option<f64>,
    /// Zero-delay visibility that scales the dip kernel.
    #[arg(long)]
    visibility0: Option<f64>,
    #[arg(long, value_enum)]
    kernel: Option<Kernel>,
}

impl TemporalArgs {
    fn apply(&self, t: &mut TemporalConfig) {
        if let Some(v) = self.gate_width_ns {
            t.gate_width = v * 1e-9;
        }
        if let Some(v) = self.filter_fwhm_mhz {
            t.filter_fwhm = v * 1e6;
        }
        if let Some(v) = self.jitter_fwhm_ps {
            t.jitter_fwhm = v * 1e-12;
        }
        if let Some(v) = self.detuning_ghz {
            t.detuning = v * 1e9;
        }
        if let Some(v) = self.detuning {
            t.detuning = v;
        }
        if let Some(v) = self.visibility0 {
            t.visibility0 = v;
        }
        match self.kernel {
            Some(Kernel::Exponential) => t.kernel = KernelShape::Exponential,
            Some(Kernel::Gaussian) => t.kernel = KernelShape::Gaussian,
            None => {}
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Arm {
    Ideal,
    SeparatingSplitter,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated mean photon numbers of the WCS per gate.
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Comma-separated mean pair numbers per gate.
    #[arg(long, value_delimiter = ',')]
    nbar: Option<Vec<f64>>,
    /// Log-spaced grid: lower end, upper end and points per axis.
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "N"], conflicts_with_all = ["mu", "nbar"])]
    grid: Option<Vec<f64>>,
    /// Fock cutoff per mode.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, value_enum, default_value_t = Arm::Ideal)]
    herald_arm: Arm,
    /// Efficiencies of D1, D2 and the herald detector.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    efficiencies: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.7)]
    level: f64,
    /// Also sweep mu at this fixed nbar, into sweep.csv.
    #[arg(long, conflicts_with = "mu_fixed")]
    nbar_fixed: Option<f64>,
    /// Also sweep nbar at this fixed mu, into sweep.csv.
    #[arg(long)]
    mu_fixed: Option<f64>,
}

#[derive(Args)]
struct DipArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    temporal: TemporalArgs,
    /// Half-span of the delay axis, ps.
    #[arg(long, default_value_t = 10_000)]
    half_span_ps: u64,
    #[arg(long, default_value_t = 10)]
    step_ps: u64,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Base configuration as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    nbar: Option<f64>,
    #[arg(long)]
    herald_rate: Option<f64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Delay added to every D2 timestamp, ps.
    #[arg(long)]
    applied_delay_ps: Option<f64>,
    /// Dark counts per second on each of D1 and D2.
    #[arg(long)]
    dark_rate: Option<f64>,
    #[arg(long)]
    ase_fraction: Option<f64>,
    /// Named noise levels, applied before the individual noise flags.
    #[arg(long, value_enum)]
    noise_preset: Option<Preset>,
    #[arg(long, value_enum, default_value_t = TagFormat::Binary)]
    tag_format: TagFormat,
    #[command(flatten)]
    temporal: TemporalArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    None,
    Calibrated,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Tag file, binary or CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    window_ns: f64,
    #[arg(long, default_value_t = 100)]
    bin_ps: u64,
    /// Hold the dip width at the model value.
    #[arg(long)]
    fixed_dip_width: bool,
    #[command(flatten)]
    temporal: TemporalArgs,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: Common,
    /// manifest.json of the run to repeat.
    #[arg(long)]
    manifest: PathBuf,
}

fn resolve_map(a: &MapArgs) -> Result<MapRun, CliError> {
    let (mu_axis, nbar_axis) = match &a.grid {
        Some(g) => {
            let n = g[2];
            if n < 2.0 || n.fract() != 0.0 {
                return Err(CliError::config("grid point count must be an integer >= 2"));
            }
            if !(g[0] > 0.0 && g[1] > g[0]) {
                return Err(CliError::config("grid needs 0 < LO < HI"));
            }
            let axis = log_space(g[0], g[1], n as usize);
            (axis.clone(), axis)
        }
        None => {
            let default = log_space(1e-4, 1e-1, 31);
            (
                a.mu.clone().unwrap_or_else(|| default.clone()),
                a.nbar.clone().unwrap_or(default),
            )
        }
    };
    FockDim::new(a.dim).map_err(CliError::from_fock)?;
    let efficiencies = match &a.efficiencies {
        Some(e) => [e[0], e[1], e[2]],
        None => [1.0; 3],
    };
    let sweep = match (a.nbar_fixed, a.mu_fixed) {
        (Some(n), _) => Some(Sweep {
            axis: SweepAxis::Mu,
            fixed: n,
        }),
        (None, Some(m)) => Some(Sweep {
            axis: SweepAxis::Nbar,
            fixed: m,
        }),
        (None, None) => None,
    };
    Ok(MapRun {
        mu_axis,
        nbar_axis,
        dim: a.dim,
        herald_arm: match a.herald_arm {
            Arm::Ideal => HeraldArm::Ideal,
            Arm::SeparatingSplitter => HeraldArm::SeparatingSplitter,
        },
        efficiencies,
        level: a.level,
        sweep,
    })
}

fn resolve_gen(a: &GenArgs) -> Result<GenRun, CliError> {
    let mut mc = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<McConfig>(&text)
                .map_err(|e| CliError::config(format!("invalid config {}: {e}", p.display())))?
        }
        None => McConfig::default(),
    };
    if let Some(v) = a.mu {
        mc.source.mu_wcs = v;
    }
    if let Some(v) = a.nbar {
        mc.source.nbar = v;
    }
    if let Some(v) = a.herald_rate {
        mc.herald_rate = v;
    }
    if let Some(v) = a.duration_s {
        mc.duration = v;
    }
    if let Some(v) = a.seed {
        mc.seed = v;
    }
    if let Some(v) = a.applied_delay_ps {
        mc.applied_delay = v * 1e-12;
    }
    match a.noise_preset {
        Some(Preset::None) => mc = mc.with_noise(NoisePreset::NONE),
        Some(Preset::Calibrated) => mc = mc.with_noise(NoisePreset::CALIBRATED),
        None => {}
    }
    if let Some(v) = a.dark_rate {
        mc.dark_rate_per_detector = v;
    }
    if let Some(v) = a.ase_fraction {
        mc.ase_noise_fraction = v;
    }
    a.temporal.apply(&mut mc.temporal);
    mc.validate().map_err(CliError::from_mc)?;
    Ok(GenRun {
        mc,
        tag_format: a.tag_format,
    })
}

fn resolve_analyze(a: &AnalyzeArgs) -> Result<AnalyzeRun, CliError> {
    let input = std::fs::canonicalize(&a.input)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", a.input.display())))?;
    let window_ps = a.window_ns * 1e3;
    if !(window_ps >= 1.0) || window_ps.fract() != 0.0 {
        return Err(CliError::config("window must be a positive whole number of ps"));
    }
    let mut model = TemporalConfig::default();
    a.temporal.apply(&mut model);
    Ok(AnalyzeRun {
        input,
        window_ps: window_ps as u64,
        bin_ps: a.bin_ps,
        model,
        free_dip_width: !a.fixed_dip_width,
    })
}

fn print_summary(summary: &Summary, format: Format) {
    match format {
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = summary.iter().cloned().collect();
            println!("{}", serde_json::Value::Object(map));
        }
        Format::Csv => {
            println!("key,value");
            for (k, v) in summary {
                match v {
                    serde_json::Value::String(s) => println!("{k},{s}"),
                    v => println!("{k},{v}"),
                }
            }
        }
    }
}

fn run_and_write(run: &RunConfig, common: &Common) -> Result<(), CliError> {
    let mut out = Outputs::new(&common.out_dir)?;
    let summary = commands::execute(run, &mut out)?;
    out.finish(run)?;
    print_summary(&summary, common.format);
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("HOMLAB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::config(format!("HOMLAB_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::config("HOMLAB_THREADS must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    Ok(())
}

fn replay(manifest: &Path) -> Result<RunConfig, CliError> {
    Ok(output::read_manifest(manifest)?.run)
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::VisibilityMap(a) => run_and_write(&RunConfig::VisibilityMap(resolve_map(&a)?), &a.common),
        Command::DipModel(a) => {
            let mut temporal = TemporalConfig::default();
            a.temporal.apply(&mut temporal);
            let run = RunConfig::DipModel(DipRun {
                temporal,
                half_span_ps: a.half_span_ps,
                step_ps: a.step_ps,
            });
            run_and_write(&run, &a.common)
        }
        Command::TagsGen(a) => run_and_write(&RunConfig::TagsGen(resolve_gen(&a)?), &a.common),
        Command::TagsAnalyze(a) => run_and_write(&RunConfig::TagsAnalyze(resolve_analyze(&a)?), &a.common),
        Command::Replay(a) => run_and_write(&replay(&a.manifest)?, &a.common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("homlab: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
