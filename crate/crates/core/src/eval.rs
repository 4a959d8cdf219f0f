//! Monte Carlo evaluation: MSE against SNR, train-by-test generalization
//! grids, CDL delay-spread sweeps, and CSV/SVG reports.
//!
//! Realization `i` of every cell uses seed `derive(base_seed, i)`, so all
//! estimators, channels and SNR points see common random numbers and a table
//! is a pure function of its configuration.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::read_predictions;
use crate::error::{Error, Result};
use crate::estimators::{analytic_correlations, bilinear_to_slot, mse, MmseFilter};
use crate::ofdm::{DmrsPattern, FrameConfig, Grid};
use crate::profiles::{resolve_selector, scale_cdl, CdlProfile, PowerDelayProfile};
use crate::seed;
use crate::sim::{LinkPath, Range, SlotSetup, SlotSimulation};

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Ls,
    /// MMSE with the correlations of the channel under test.
    MmseMatched,
    /// MMSE with the correlations of a fixed profile.
    MmseStats(PowerDelayProfile),
    /// Prediction files in a directory, scored against the simulated truth.
    External(PathBuf),
}

impl Estimator {
    pub fn id(&self) -> String {
        match self {
            Self::Ls => "LS".into(),
            Self::MmseMatched => "MMSE".into(),
            Self::MmseStats(p) => format!("MMSE[{}]", p.name()),
            Self::External(_) => "external".into(),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    /// `ls`, `mmse`, `mmse:<channel selector>` or `external:<dir>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "ls" => return Ok(Self::Ls),
            "mmse" | "mmse-matched" => return Ok(Self::MmseMatched),
            _ => {}
        }
        if let Some((head, rest)) = s.split_once(':') {
            match head.to_ascii_lowercase().as_str() {
                "mmse" => return Ok(Self::MmseStats(resolve_selector(rest)?)),
                "external" => return Ok(Self::External(PathBuf::from(rest))),
                _ => {}
            }
        }
        Err(Error::UnknownEstimator(s.to_string()))
    }
}

/// Settings shared by every evaluation cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub frame: FrameConfig,
    pub pattern: DmrsPattern,
    pub doppler_range_hz: Range,
    pub normalize_power: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            pattern: DmrsPattern::default(),
            doppler_range_hz: Range { lo: 0.0, hi: 97.0 },
            normalize_power: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub estimator: String,
    pub channel: String,
    pub snr_db: f64,
    pub ds_ns: Option<f64>,
    pub n: usize,
    pub mse: f64,
    pub stderr: f64,
}

/// Compensated sum.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = kahan_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = kahan_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn ls_full(sim: &SlotSimulation, cfg: &EvalConfig) -> Result<Grid> {
    bilinear_to_slot(&sim.ls.values, &cfg.pattern, &cfg.frame)
}

/// One (estimator, channel, SNR) cell.
struct Cell<'a> {
    estimator: &'a Estimator,
    channel: &'a PowerDelayProfile,
    snr_db: Option<f64>,
    ds_ns: Option<f64>,
    path: LinkPath,
    predictions: Option<PathBuf>,
}

fn evaluate_cell(cell: Cell<'_>, n: usize, base_seed: u64, cfg: &EvalConfig) -> Result<EvalPoint> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let setup = SlotSetup {
        pdp: cell.channel,
        normalize_power: cfg.normalize_power,
        pattern: &cfg.pattern,
        frame: &cfg.frame,
        snr_db: cell.snr_db.map(Range::fixed),
        doppler_hz: cfg.doppler_range_hz,
        path: cell.path,
    };
    let snr = cell.snr_db.unwrap_or(f64::INFINITY);
    let stats = |p: &PowerDelayProfile| {
        if cfg.normalize_power {
            p.normalize_power()
        } else {
            p.clone()
        }
    };
    let filter = match cell.estimator {
        Estimator::MmseMatched => Some(stats(cell.channel)),
        Estimator::MmseStats(p) => Some(stats(p)),
        _ => None,
    }
    .map(|p| MmseFilter::new(&analytic_correlations(&p, &cfg.pattern, &cfg.frame), cfg.pattern.pilot_value, snr))
    .transpose()?;
    let predictions = match (&cell.estimator, &cell.predictions) {
        (Estimator::External(_), Some(path)) => {
            if !path.exists() {
                return Err(Error::MissingPredictions(path.clone()));
            }
            let p = read_predictions(path)?;
            if p.len() < n {
                return Err(Error::Format {
                    path: path.clone(),
                    msg: format!("{} predictions for {n} realizations", p.len()),
                });
            }
            Some(p)
        }
        (Estimator::External(_), None) => {
            return Err(Error::InvalidArgument("external estimator needs a prediction file".into()))
        }
        _ => None,
    };

    let errors: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sim = setup.run(seed::derive(base_seed, i as u64))?;
            let estimate = match (cell.estimator, &filter, &predictions) {
                (Estimator::Ls, _, _) => ls_full(&sim, cfg)?,
                (_, Some(f), _) => bilinear_to_slot(&f.apply(&sim.ls)?, &cfg.pattern, &cfg.frame)?,
                (_, _, Some(p)) => p[i].clone(),
                _ => unreachable!("estimator resolved above"),
            };
            mse(&estimate, &sim.h)
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = mean_stderr(&errors);
    Ok(EvalPoint {
        estimator: cell.estimator.id(),
        channel: cell.channel.name().to_string(),
        snr_db: snr,
        ds_ns: cell.ds_ns,
        n,
        mse: mean,
        stderr,
    })
}

/// Prediction file for an SNR cell: `<dir>/<channel>_snr<snr>.bin`.
pub fn snr_prediction_path(dir: &Path, channel: &str, snr_db: f64) -> PathBuf {
    dir.join(format!("{channel}_snr{snr_db}.bin"))
}

/// Prediction file for a grid cell: `<dir>/<train>__<test>.bin`.
pub fn grid_prediction_path(dir: &Path, train: &str, test: &str) -> PathBuf {
    dir.join(format!("{train}__{test}.bin"))
}

/// `snr_db = +inf` disables noise.
fn snr_option(snr_db: f64) -> Option<f64> {
    (snr_db != f64::INFINITY).then_some(snr_db)
}

/// Mean MSE per (channel, SNR) over `n` slots, Doppler drawn per slot.
pub fn mse_vs_snr(
    estimator: &Estimator,
    channels: &[PowerDelayProfile],
    snr_grid: &[f64],
    n: usize,
    base_seed: u64,
    cfg: &EvalConfig,
) -> Result<Vec<EvalPoint>> {
    let mut out = Vec::with_capacity(channels.len() * snr_grid.len());
    for ch in channels {
        for &snr in snr_grid {
            let predictions = match estimator {
                Estimator::External(dir) => Some(snr_prediction_path(dir, ch.name(), snr)),
                _ => None,
            };
            out.push(evaluate_cell(
                Cell {
                    estimator,
                    channel: ch,
                    snr_db: snr_option(snr),
                    ds_ns: None,
                    path: LinkPath::Fd,
                    predictions,
                },
                n,
                base_seed,
                cfg,
            )?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridFamily {
    /// Row `i` uses MMSE with the correlations of training channel `i`.
    Mmse,
    /// Row `i` reads `<dir>/<train>__<test>.bin`.
    External(PathBuf),
}

/// Train-by-test MSE matrix at one SNR.
pub fn generalization_grid(
    family: &GridFamily,
    train: &[PowerDelayProfile],
    test: &[PowerDelayProfile],
    snr_db: f64,
    n: usize,
    base_seed: u64,
    cfg: &EvalConfig,
) -> Result<Vec<Vec<EvalPoint>>> {
    train
        .iter()
        .map(|tr| {
            test.iter()
                .map(|te| {
                    let (estimator, predictions) = match family {
                        GridFamily::Mmse => (Estimator::MmseStats(tr.clone()), None),
                        GridFamily::External(dir) => (
                            Estimator::External(dir.clone()),
                            Some(grid_prediction_path(dir, tr.name(), te.name())),
                        ),
                    };
                    let mut p = evaluate_cell(
                        Cell {
                            estimator: &estimator,
                            channel: te,
                            snr_db: snr_option(snr_db),
                            ds_ns: None,
                            path: LinkPath::Fd,
                            predictions,
                        },
                        n,
                        base_seed,
                        cfg,
                    )?;
                    p.estimator = format!("{}<-{}", p.estimator, tr.name());
                    Ok(p)
                })
                .collect()
        })
        .collect()
}

/// Scales each CDL profile to every delay spread and evaluates through the
/// time-domain link, which models CP overrun.
pub fn ds_sweep(
    estimator: &Estimator,
    profiles: &[CdlProfile],
    ds_grid_ns: &[f64],
    snr_db: f64,
    n: usize,
    base_seed: u64,
    cfg: &EvalConfig,
) -> Result<Vec<EvalPoint>> {
    if matches!(estimator, Estimator::External(_)) {
        return Err(Error::UnknownEstimator("external (not supported for delay-spread sweeps)".into()));
    }
    let limit_ns = cfg.frame.slot_duration_s() * 1e9;
    let mut out = Vec::new();
    for profile in profiles {
        for &ds in ds_grid_ns {
            let pdp = scale_cdl(profile, ds)?;
            if pdp.max_delay_ns() > limit_ns {
                return Err(Error::DelayOutOfModel {
                    delay_ns: pdp.max_delay_ns(),
                    limit_ns,
                });
            }
            log::debug!("{} scaled delays: {:?}", pdp.name(), pdp.delays_ns());
            let mut p = evaluate_cell(
                Cell {
                    estimator,
                    channel: &pdp,
                    snr_db: snr_option(snr_db),
                    ds_ns: Some(ds),
                    path: LinkPath::Td,
                    predictions: None,
                },
                n,
                base_seed,
                cfg,
            )?;
            p.channel = profile.name.clone();
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    estimator: String,
    channel: String,
    snr_db: f64,
    ds_ns: Option<f64>,
    n: usize,
    mse: f64,
    stderr: f64,
}

/// CSV with header `estimator,channel,snr_db,ds_ns,n,mse,stderr`; `ds_ns` is
/// empty when not applicable and an infinite SNR is written as `inf`.
pub fn write_csv<W: Write>(w: W, table: &[EvalPoint]) -> Result<()> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("empty table".into()));
    }
    let mut wr = csv::Writer::from_writer(w);
    for p in table {
        wr.serialize(CsvRow {
            estimator: p.estimator.clone(),
            channel: p.channel.clone(),
            snr_db: p.snr_db,
            ds_ns: p.ds_ns,
            n: p.n,
            mse: p.mse,
            stderr: p.stderr,
        })
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<EvalPoint>> {
    csv::Reader::from_reader(r)
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(EvalPoint {
                estimator: row.estimator,
                channel: row.channel,
                snr_db: row.snr_db,
                ds_ns: row.ds_ns,
                n: row.n,
                mse: row.mse,
                stderr: row.stderr,
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line plot of MSE (log scale) against SNR, or against delay spread when the
/// table carries delay spreads. One polyline per (estimator, channel).
pub fn render_svg(table: &[EvalPoint]) -> Result<String> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("empty table".into()));
    }
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

    let by_ds = table.iter().all(|p| p.ds_ns.is_some());
    let x_of = |p: &EvalPoint| if by_ds { p.ds_ns.unwrap() } else { p.snr_db };
    let pts: Vec<(f64, f64)> = table
        .iter()
        .map(|p| (x_of(p), p.mse.max(1e-12).log10()))
        .filter(|(x, _)| x.is_finite())
        .collect();
    let (xmin, xmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
    let (ymin, ymax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, y)| (a.min(*y), b.max(*y)));
    let (ymin, ymax) = (ymin.floor(), ymax.ceil().max(ymin.floor() + 1.0));
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let sx = |x: f64| PAD + (x - xmin) / xspan * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - ymin) / (ymax - ymin) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD
    );
    for decade in (ymin as i32)..=(ymax as i32) {
        let y = sy(decade as f64);
        let _ = writeln!(svg, r##"<line x1="{PAD}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, W - PAD);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">1e{decade}</text>"#, PAD - 6.0, y + 4.0);
    }
    let xlabel = if by_ds { "delay spread (ns)" } else { "SNR (dB)" };
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="start">{xmin}</text>"#, PAD, H - PAD + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{xmax}</text>"#, W - PAD, H - PAD + 16.0);

    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for p in table {
        let key = format!("{} / {}", p.estimator, p.channel);
        let xy = (x_of(p), p.mse.max(1e-12).log10());
        if !xy.0.is_finite() {
            continue;
        }
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(xy),
            None => series.push((key, vec![xy])),
        }
    }
    for (i, (key, mut v)) in series.into_iter().enumerate() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = v.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, points.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            W - PAD - 150.0,
            PAD + 14.0 * (i as f64 + 1.0),
            xml_escape(&key)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

/// Writes `table` to `path` in the requested format.
pub fn emit_report(table: &[EvalPoint], format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(std::fs::File::create(path)?, table),
        ReportFormat::Svg => Ok(std::fs::write(path, render_svg(table)?)?),
    }
}
