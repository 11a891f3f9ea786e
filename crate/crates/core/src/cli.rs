//! Command-line front end. The binary is a thin wrapper around [`run`].

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_spectra, FitOptions, FitProblem, FitResult};
use crate::io::{sha256_hex, write_atomic, SpectrumTable, TraceFile};
use crate::model::SpectralParams;
use crate::pipeline::{self, AnalysisReport, CertifyOptions};

#[derive(Debug, Parser)]
#[command(name = "twinbeam", version, about = "Twin-beam entanglement simulator")]
pub struct Cli {
    /// Run configuration (JSON, version "twinbeam-config/1").
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the analytic amplitude-difference and phase-sum spectra.
    Spectra(SpectraArgs),
    /// Synthesize photocurrent traces and write a trace file.
    Synth(SynthArgs),
    /// Read both channels of a trace file at the analysis frequency.
    Analyze(AnalyzeArgs),
    /// Correct an analysis and apply the inseparability test.
    Certify(CertifyArgs),
    /// Fit (ηξ, B, σ) to a spectrum CSV.
    Fit(FitArgs),
    /// Print the default configuration document.
    DefaultConfig(OutArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[arg(long, default_value_t = 0.0, value_name = "HZ")]
    pub f_min: f64,
    #[arg(long, default_value_t = 100e6, value_name = "HZ")]
    pub f_max: f64,
    #[arg(long, default_value_t = 1001)]
    pub points: usize,
    /// Override ηξ from the config.
    #[arg(long)]
    pub eta_xi: Option<f64>,
    #[arg(long, value_name = "HZ")]
    pub bandwidth_hz: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trace file (defaults to the path in the config).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub trace: PathBuf,
    /// Analysis frequency (defaults to the interferometer frequency in the config).
    #[arg(long, value_name = "HZ")]
    pub f0: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    pub analysis: PathBuf,
    /// Electronics floor in dB relative to the SNL.
    #[arg(long, value_name = "DB", allow_hyphen_values = true)]
    pub enl_db: Option<f64>,
    /// Remove the mode-matching penalty of this efficiency from the phase channel.
    #[arg(long, value_name = "MU")]
    pub mode_match: Option<f64>,
    #[arg(long)]
    pub skip_enl_correction: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub spectrum: PathBuf,
    /// Weight residuals by 1/s², as for relative noise.
    #[arg(long)]
    pub variance_weights: bool,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn say(stdout: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(stdout, "{line}").map_err(|e| Error::io("<stdout>", e))
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    path: &'a Path,
    seed: u64,
    sha256: String,
    channels: Vec<&'a str>,
    num_samples: usize,
    sample_rate_hz: f64,
    config_hash: String,
}

#[derive(Serialize)]
struct Written<'a> {
    path: &'a Path,
    sha256: String,
}

#[derive(Serialize)]
struct FitReport {
    #[serde(flatten)]
    result: FitResult,
    source_sha256: String,
    num_points: usize,
}

fn spectra(cli: &Cli, args: &SpectraArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let base = cfg.nopo.resolve()?.spectral();
    let params = SpectralParams::new(
        args.eta_xi.unwrap_or(base.eta_xi),
        args.bandwidth_hz.unwrap_or(base.bandwidth_hz),
        args.sigma.unwrap_or(base.sigma),
    )?;
    let table = pipeline::spectrum_table(&params, args.f_min, args.f_max, args.points)?;
    let csv = table.to_csv()?;
    match (&args.out.out, cli.json) {
        (Some(p), json) => {
            write_atomic(p, csv.as_bytes())?;
            let w = Written {
                path: p,
                sha256: sha256_hex(csv.as_bytes()),
            };
            if json {
                emit(None, &to_json(&w), stdout)
            } else {
                say(stdout, &format!("wrote {} rows to {} (sha256 {})", table.f_hz.len(), p.display(), w.sha256))
            }
        }
        (None, _) => emit(None, &csv, stdout),
    }
}

fn synth(cli: &Cli, args: &SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let file = pipeline::simulate(&cfg, args.seed)?;
    let bytes = file.to_bytes();
    let path = args.out.clone().unwrap_or_else(|| cfg.output.trace.clone());
    write_atomic(&path, &bytes)?;
    let summary = SynthSummary {
        path: &path,
        seed: args.seed.unwrap_or(cfg.synth.seed),
        sha256: sha256_hex(&bytes),
        channels: file.channels.iter().map(|c| c.name.as_str()).collect(),
        num_samples: file.num_samples(),
        sample_rate_hz: file.sample_rate_hz,
        config_hash: cfg.hash(),
    };
    if cli.json {
        emit(None, &to_json(&summary), stdout)
    } else {
        say(stdout, &format!("seed {}", summary.seed))?;
        say(stdout, &format!("sha256 {}", summary.sha256))?;
        say(
            stdout,
            &format!(
                "wrote {} channels x {} samples to {}",
                summary.channels.len(),
                summary.num_samples,
                path.display()
            ),
        )
    }
}

fn analyze(cli: &Cli, args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let bytes = read_bytes(&args.trace)?;
    let trace = TraceFile::from_bytes(&bytes)?;
    let settings = cfg
        .analyzer
        .unwrap_or_else(|| crate::dsp::AnalyzerSettings::experiment(trace.sample_rate_hz));
    let f0 = args.f0.unwrap_or(cfg.interferometer.analysis_frequency_hz);
    let mut report = pipeline::analyze(&trace, &settings, f0)?;
    report.trace_sha256 = sha256_hex(&bytes);
    report.config_hash = cfg.hash();
    let json = to_json(&report);
    if let Some(p) = &args.out.out {
        write_atomic(p, json.as_bytes())?;
    }
    if cli.json {
        emit(None, &json, stdout)
    } else {
        let enl = |db: Option<f64>| db.map_or("n/a".to_string(), |d| format!("{d:.3} dB"));
        say(stdout, &format!("f0 {:.6e} Hz, {} averages", f0, report.num_averages))?;
        say(
            stdout,
            &format!(
                "amplitude difference {:.3} dB rel SNL (enl {})",
                report.amplitude.signal_db,
                enl(report.amplitude.enl_db)
            ),
        )?;
        say(
            stdout,
            &format!(
                "phase sum            {:.3} dB rel SNL (enl {})",
                report.phase.signal_db,
                enl(report.phase.enl_db)
            ),
        )
    }
}

fn certify(cli: &Cli, args: &CertifyArgs, stdout: &mut dyn Write) -> Result<()> {
    let bytes = read_bytes(&args.analysis)?;
    let analysis: AnalysisReport =
        serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", args.analysis.display())))?;
    let opts = CertifyOptions {
        enl_db: args.enl_db,
        mode_match: args.mode_match,
        skip_enl_correction: args.skip_enl_correction,
    };
    let report = pipeline::certify(&analysis, &opts, &sha256_hex(&bytes))?;
    let json = to_json(&report);
    if let Some(p) = &args.out.out {
        write_atomic(p, json.as_bytes())?;
    }
    if cli.json {
        return emit(None, &json, stdout);
    }
    for c in &report.corrections {
        say(
            stdout,
            &format!(
                "{:?} {}: {:.3} dB -> {:.3} dB",
                c.channel, c.kind, c.before_db, c.after_db
            ),
        )?;
    }
    say(
        stdout,
        &format!(
            "sum {:.4} (bound {}): {}",
            report.sum,
            report.bound,
            if report.entangled { "entangled" } else { "not entangled" }
        ),
    )
}

fn fit(cli: &Cli, args: &FitArgs, stdout: &mut dyn Write) -> Result<()> {
    let bytes = read_bytes(&args.spectrum)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| Error::Csv { line: 0, reason: e.to_string() })?;
    let table = SpectrumTable::from_csv(&text)?;
    let num_points = table.f_hz.len();
    let mut problem = FitProblem::new(table.f_hz, table.s_i, table.s_p)?;
    if args.variance_weights {
        problem = problem.with_variance_weights();
    }
    let opts = FitOptions {
        max_iter: args.max_iter,
        ..FitOptions::default()
    };
    let result = fit_spectra(&problem, None, &opts)?;
    let report = FitReport {
        result,
        source_sha256: sha256_hex(&bytes),
        num_points,
    };
    let json = to_json(&report);
    if let Some(p) = &args.out.out {
        write_atomic(p, json.as_bytes())?;
    }
    if cli.json {
        return emit(None, &json, stdout);
    }
    let r = &report.result;
    say(stdout, &format!("eta_xi       {:.6}", r.eta_xi))?;
    say(stdout, &format!("bandwidth_hz {:.6e}", r.bandwidth_hz))?;
    match r.sigma {
        Some(s) => say(stdout, &format!("sigma        {s:.6}"))?,
        None => say(stdout, "sigma        not fitted (no phase column)")?,
    }
    say(
        stdout,
        &format!(
            "residual {:.3e}, {} iterations, {}",
            r.residual_norm,
            r.iterations,
            if r.converged { "converged" } else { "not converged" }
        ),
    )
}

/// Executes one parsed command.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Spectra(a) => spectra(cli, a, stdout),
        Command::Synth(a) => synth(cli, a, stdout),
        Command::Analyze(a) => analyze(cli, a, stdout),
        Command::Certify(a) => certify(cli, a, stdout),
        Command::Fit(a) => fit(cli, a, stdout),
        Command::DefaultConfig(a) => {
            let text = RunConfig::default().to_json() + "\n";
            emit(a.out.as_deref(), &text, stdout)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
