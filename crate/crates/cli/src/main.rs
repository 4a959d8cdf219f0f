//! `chanest` command-line entry point.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors. Every
//! successful run writes its resolved configuration to
//! `<out-dir>/<subcommand>.config.json`, where the directory comes from
//! `--out-dir`, then `CHANEST_OUT_DIR`, then the working directory.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chanest::dataset::{generate_dataset, DatasetRequest, Split};
use chanest::design::{autocorrelation_matrix, eigen_spectrum, is_applicable_with, suggest_envelope, CorrelationMode, EnvelopeScale};
use chanest::eval::{ds_sweep, emit_report, generalization_grid, mse_vs_snr, write_csv, EvalConfig, EvalPoint, Estimator, GridFamily, ReportFormat};
use chanest::fading::{freq_response, generate_realization};
use chanest::ofdm::{build_slot, transmit_receive_fd, transmit_receive_td, write_grid_dump, DmrsPattern, FrameConfig};
use chanest::profiles::{resolve_selector, CdlProfile, ChannelSpec, PowerDelayProfile};
use chanest::sim::{LinkPath, Range};
use chanest::{estimators, Error, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "chanest", version, about = "OFDM channel-estimation simulator and training-data design kit")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for the resolved-config JSON.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Simulate one slot and dump the channel, received and LS grids.
    Simulate(SimulateArgs),
    /// Check whether a candidate PDP is covered by a designed PDP.
    DesignCheck(DesignCheckArgs),
    /// Print the eigen-spectrum of a channel's frequency auto-correlation.
    Eigs(EigsArgs),
    /// Generate a training dataset.
    GenDataset(GenDatasetArgs),
    /// MSE versus SNR for one estimator over several channels.
    Eval(EvalArgs),
    /// Train-by-test generalization grid.
    Grid(GridArgs),
    /// MSE versus delay spread for scaled CDL profiles.
    SweepDs(SweepDsArgs),
    /// Suggest a designed PDP covering a set of channels.
    Suggest(SuggestArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::DesignCheck(_) => "design-check",
            Self::Eigs(_) => "eigs",
            Self::GenDataset(_) => "gen-dataset",
            Self::Eval(_) => "eval",
            Self::Grid(_) => "grid",
            Self::SweepDs(_) => "sweep-ds",
            Self::Suggest(_) => "suggest",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PathArg {
    Fd,
    Td,
}

#[derive(Debug, Args, Serialize)]
struct LinkArgs {
    /// DM-RS pattern: `default`, `alt` or a JSON file.
    #[arg(long, default_value = "default")]
    pattern: String,
    /// Normalize the PDP to unit total power.
    #[arg(long)]
    normalize_power: bool,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Built-in name, `CDL-x@<ds>` or PDP JSON file.
    #[arg(long)]
    channel: String,
    /// SNR in dB or `inf`.
    #[arg(long, default_value = "inf")]
    snr: String,
    /// Maximum Doppler shift in Hz.
    #[arg(long, default_value_t = 0.0)]
    doppler: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "fd")]
    path: PathArg,
    /// Directory for `h.grid`, `y.grid` and `ls.grid`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    link: LinkArgs,
}

#[derive(Debug, Args, Serialize)]
struct DesignCheckArgs {
    #[arg(long)]
    designed: String,
    #[arg(long)]
    candidate: String,
    #[arg(long, default_value_t = 1.0)]
    tol_db: f64,
    /// Interpolate the envelope in linear power instead of dB.
    #[arg(long)]
    linear: bool,
}

#[derive(Debug, Args, Serialize)]
struct EigsArgs {
    #[arg(long)]
    channel: String,
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Use an empirical average over this many realizations.
    #[arg(long)]
    empirical: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct GenDatasetArgs {
    #[arg(long)]
    channel: String,
    #[arg(long)]
    count: usize,
    /// `lo:hi` in dB, a single value, or `inf` for noiseless samples.
    #[arg(long, default_value = "5:25")]
    snr: String,
    /// `lo:hi` in Hz or a single value.
    #[arg(long, default_value = "0:97")]
    doppler: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of samples placed in the validation split.
    #[arg(long, default_value_t = 0.05)]
    val_frac: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    link: LinkArgs,
}

#[derive(Debug, Args, Serialize)]
struct EvalCommon {
    /// SNR grid: `lo:hi:step`, comma list, `inf` allowed.
    #[arg(long, default_value = "0:30:5")]
    snr: String,
    /// Realizations per cell.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `lo:hi` maximum Doppler range in Hz.
    #[arg(long, default_value = "0:97")]
    doppler: String,
    /// CSV output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render an SVG plot.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    link: LinkArgs,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// `ls`, `mmse`, `mmse:<channel>` or `external:<dir>`.
    #[arg(long, default_value = "mmse")]
    estimator: String,
    /// Score prediction files from this directory instead.
    #[arg(long, conflicts_with = "estimator")]
    predictions: Option<PathBuf>,
    /// Comma-separated channel selectors.
    #[arg(long, value_delimiter = ',', default_value = "flat,dc1,dc2,dc3,twopath,epa,eva,etu")]
    channels: Vec<String>,
    #[command(flatten)]
    common: EvalCommon,
}

#[derive(Debug, Args, Serialize)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_value = "flat,epa,etu,dc3,designed")]
    train: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "flat,epa,etu,dc3,designed")]
    channels: Vec<String>,
    /// Read `<train>__<test>.bin` predictions instead of running MMSE.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[command(flatten)]
    common: EvalCommon,
}

#[derive(Debug, Args, Serialize)]
struct SweepDsArgs {
    #[arg(long, default_value = "ls")]
    estimator: String,
    /// CDL profiles to scale.
    #[arg(long, value_delimiter = ',', default_value = "CDL-A,CDL-B,CDL-C")]
    channels: Vec<String>,
    /// Comma-separated delay spreads in ns.
    #[arg(long, value_delimiter = ',', default_value = "100,300,1000,3000,5000,9000,15000,20000,30000")]
    ds: Vec<f64>,
    #[command(flatten)]
    common: EvalCommon,
}

#[derive(Debug, Args, Serialize)]
struct SuggestArgs {
    /// Channels the suggestion must cover.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    margin_db: f64,
    #[arg(long, default_value_t = 0.0)]
    extra_delay_ns: f64,
    /// Write the PDP JSON here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let resolved = match &cli.command {
        Command::Simulate(a) => simulate(a)?,
        Command::DesignCheck(a) => design_check(a)?,
        Command::Eigs(a) => eigs(a)?,
        Command::GenDataset(a) => gen_dataset(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Grid(a) => grid(a)?,
        Command::SweepDs(a) => sweep_ds(a)?,
        Command::Suggest(a) => suggest(a)?,
    };
    write_config(cli, resolved)
}

fn write_config(cli: &Cli, resolved: serde_json::Value) -> Result<()> {
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("CHANEST_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let doc = serde_json::json!({
        "subcommand": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "threads": cli.threads.unwrap_or_else(rayon::current_num_threads),
        "args": cli.command,
        "resolved": resolved,
    });
    let path = dir.join(format!("{}.config.json", cli.command.name()));
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    log::info!("resolved config written to {}", path.display());
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("+inf") {
        return Ok(f64::INFINITY);
    }
    t.parse().map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
}

/// `lo:hi` or a single value.
fn parse_range(s: &str) -> Result<Range> {
    match s.split_once(':') {
        Some((lo, hi)) => Range::new(parse_f64(lo)?, parse_f64(hi)?),
        None => {
            let v = parse_f64(s)?;
            Range::new(v, v)
        }
    }
}

/// `lo:hi:step` or a comma-separated list.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (lo, hi, step) = (parse_f64(parts[0])?, parse_f64(parts[1])?, parse_f64(parts[2])?);
        if !(step > 0.0 && step.is_finite() && lo.is_finite() && hi >= lo) {
            return Err(Error::InvalidArgument(format!("invalid grid {s:?}")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| lo + step * i as f64).collect());
    }
    s.split(',').map(parse_f64).collect()
}

fn parse_pattern(s: &str) -> Result<DmrsPattern> {
    match s.to_ascii_lowercase().as_str() {
        "default" => Ok(DmrsPattern::default()),
        "alt" | "alternative" => Ok(DmrsPattern::alternative()),
        _ => Ok(serde_json::from_str(&fs::read_to_string(s)?)?),
    }
}

fn eval_config(common: &EvalCommon) -> Result<EvalConfig> {
    let frame = FrameConfig::default();
    let pattern = parse_pattern(&common.link.pattern)?;
    pattern.validate(&frame)?;
    Ok(EvalConfig {
        frame,
        pattern,
        doppler_range_hz: parse_range(&common.doppler)?,
        normalize_power: common.link.normalize_power,
    })
}

fn selectors(list: &[String]) -> Result<Vec<PowerDelayProfile>> {
    list.iter().map(|s| resolve_selector(s.trim())).collect()
}

fn emit_table(common: &EvalCommon, table: &[EvalPoint]) -> Result<()> {
    match &common.out {
        Some(path) => emit_report(table, ReportFormat::Csv, path)?,
        None => write_csv(io::stdout().lock(), table)?,
    }
    if let Some(svg) = &common.svg {
        emit_report(table, ReportFormat::Svg, svg)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<serde_json::Value> {
    let frame = FrameConfig::default();
    let pattern = parse_pattern(&a.link.pattern)?;
    pattern.validate(&frame)?;
    let pdp = resolve_selector(&a.channel)?;
    let snr_db = parse_f64(&a.snr)?;
    let spec = ChannelSpec::new(pdp, a.doppler).normalized(a.link.normalize_power);
    spec.validate(frame.symbol_duration_s())?;
    let r = generate_realization(&spec, a.seed, &frame.symbol_times())?;
    let h = freq_response(&r, &frame)?;
    let x = build_slot(None, &pattern, &frame, a.seed)?;
    let y = match a.path {
        PathArg::Fd => transmit_receive_fd(&x, &h, snr_db, a.seed)?,
        PathArg::Td => transmit_receive_td(&x, &r, &frame, snr_db, a.seed)?,
    };
    let ls = estimators::ls_estimate(&chanest::ofdm::extract_pilots(&y, &pattern, &frame)?, &pattern);
    let ls_full = estimators::bilinear_to_slot(&ls.values, &pattern, &frame)?;
    let mse = estimators::mse(&ls_full, &h)?;

    fs::create_dir_all(&a.out)?;
    for (name, g) in [("h.grid", &h), ("y.grid", &y), ("ls.grid", &ls.values)] {
        let mut w = BufWriter::new(File::create(a.out.join(name))?);
        write_grid_dump(&mut w, g)?;
        w.flush()?;
    }
    let summary = serde_json::json!({
        "channel": spec.pdp.name(),
        "snr_db": snr_db,
        "doppler_hz": a.doppler,
        "seed": a.seed,
        "path": a.path,
        "ls_mse": mse,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(serde_json::json!({ "channel": spec.effective_pdp(), "pattern": pattern, "frame": frame }))
}

fn design_check(a: &DesignCheckArgs) -> Result<serde_json::Value> {
    let designed = resolve_selector(&a.designed)?;
    let candidate = resolve_selector(&a.candidate)?;
    let scale = if a.linear { EnvelopeScale::Linear } else { EnvelopeScale::Db };
    let report = is_applicable_with(&candidate, &designed, a.tol_db, scale);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(serde_json::json!({ "designed": designed, "candidate": candidate }))
}

fn eigs(a: &EigsArgs) -> Result<serde_json::Value> {
    let frame = FrameConfig::default();
    let pdp = resolve_selector(&a.channel)?;
    let mode = match a.empirical {
        Some(n) => CorrelationMode::Empirical { n, seed: a.seed },
        None => CorrelationMode::Analytic,
    };
    let spec = eigen_spectrum(&autocorrelation_matrix(&pdp, &frame, mode)?)?;
    let mut out = io::stdout().lock();
    writeln!(out, "index,eigenvalue")?;
    for (i, v) in spec.eigenvalues.iter().take(a.count).enumerate() {
        writeln!(out, "{i},{v:e}")?;
    }
    Ok(serde_json::json!({ "channel": pdp, "trace": spec.trace() }))
}

fn gen_dataset(a: &GenDatasetArgs) -> Result<serde_json::Value> {
    let frame = FrameConfig::default();
    let pattern = parse_pattern(&a.link.pattern)?;
    let snr = if a.snr.trim().eq_ignore_ascii_case("inf") {
        None
    } else {
        Some(parse_range(&a.snr)?)
    };
    let req = DatasetRequest {
        channel: resolve_selector(&a.channel)?,
        normalize_power: a.link.normalize_power,
        pattern,
        frame,
        count: a.count,
        snr_range_db: snr,
        doppler_range_hz: parse_range(&a.doppler)?,
        base_seed: a.seed,
        split: Split {
            train: 1.0 - a.val_frac,
            val: a.val_frac,
        },
    };
    let manifest = generate_dataset(&req, &a.out)?;
    println!("{}", a.out.join("manifest.json").display());
    Ok(serde_json::to_value(&manifest)?)
}

fn eval(a: &EvalArgs) -> Result<serde_json::Value> {
    let cfg = eval_config(&a.common)?;
    let estimator = match &a.predictions {
        Some(dir) => Estimator::External(dir.clone()),
        None => a.estimator.parse()?,
    };
    let channels = selectors(&a.channels)?;
    let snrs = parse_grid(&a.common.snr)?;
    let table = mse_vs_snr(&estimator, &channels, &snrs, a.common.n, a.common.seed, &cfg)?;
    emit_table(&a.common, &table)?;
    Ok(serde_json::json!({ "eval": cfg, "estimator": estimator.id(), "channels": channels, "snr_db": snrs }))
}

fn grid(a: &GridArgs) -> Result<serde_json::Value> {
    let cfg = eval_config(&a.common)?;
    let family = match &a.predictions {
        Some(dir) => GridFamily::External(dir.clone()),
        None => GridFamily::Mmse,
    };
    let train = selectors(&a.train)?;
    let test = selectors(&a.channels)?;
    let snrs = parse_grid(&a.common.snr)?;
    let [snr] = snrs[..] else {
        return Err(Error::InvalidArgument("grid takes exactly one SNR".into()));
    };
    let rows = generalization_grid(&family, &train, &test, snr, a.common.n, a.common.seed, &cfg)?;
    let table: Vec<EvalPoint> = rows.into_iter().flatten().collect();
    emit_table(&a.common, &table)?;
    Ok(serde_json::json!({ "eval": cfg, "train": train, "test": test, "snr_db": snr }))
}

fn sweep_ds(a: &SweepDsArgs) -> Result<serde_json::Value> {
    let cfg = eval_config(&a.common)?;
    let estimator: Estimator = a.estimator.parse()?;
    let profiles: Vec<CdlProfile> = a.channels.iter().map(|s| CdlProfile::named(s.trim())).collect::<Result<_>>()?;
    let snrs = parse_grid(&a.common.snr)?;
    let [snr] = snrs[..] else {
        return Err(Error::InvalidArgument("sweep-ds takes exactly one SNR".into()));
    };
    let table = ds_sweep(&estimator, &profiles, &a.ds, snr, a.common.n, a.common.seed, &cfg)?;
    emit_table(&a.common, &table)?;
    Ok(serde_json::json!({ "eval": cfg, "estimator": estimator.id(), "profiles": profiles, "snr_db": snr, "path": LinkPath::Td }))
}

fn suggest(a: &SuggestArgs) -> Result<serde_json::Value> {
    let inputs = selectors(&a.channels)?;
    let pdp = suggest_envelope(&inputs, a.margin_db, a.extra_delay_ns)?;
    let json = serde_json::to_string_pretty(&pdp)?;
    println!("{json}");
    if let Some(path) = &a.out {
        write_file(path, &json)?;
    }
    Ok(serde_json::json!({ "inputs": inputs, "suggested": pdp }))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, format!("{text}\n"))?;
    Ok(())
}
