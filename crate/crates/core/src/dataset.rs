//! Training datasets: LS pilot estimates as inputs, true channel matrices as
//! labels, stored as little-endian f32 tensors with a JSON manifest.
//!
//! Binary file layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "CHESTDS\0"
//! 8       4     u32 format version (1)
//! 12      4     u32 record kind: 0 = samples, 1 = predictions
//! 16      4     u32 N_f (label rows)
//! 20      4     u32 N_s (label columns)
//! 24      4     u32 pilot rows (0 for predictions)
//! 28      4     u32 pilot symbols (0 for predictions)
//! 32      8     u64 record count
//! 40            records
//! ```
//!
//! A sample record is `f32 snr_db` (+inf when noiseless), `f32 doppler_hz`,
//! the input tensor `[pilot rows x pilot symbols x 2]` and the label tensor
//! `[N_f x N_s x 2]`, both row-major with the real/imaginary pair innermost.
//! A prediction record is a label-shaped tensor only.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ofdm::{DmrsPattern, FrameConfig, Grid};
use crate::profiles::PowerDelayProfile;
use crate::seed;
use crate::sim::{LinkPath, Range, SlotSetup};

pub const MAGIC: &[u8; 8] = b"CHESTDS\0";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;
pub const MANIFEST_NAME: &str = "manifest.json";
pub const PARTIAL_MARKER: &str = ".partial";

const KIND_SAMPLES: u32 = 0;
const KIND_PREDICTIONS: u32 = 1;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: f64,
    pub val: f64,
}

impl Default for Split {
    fn default() -> Self {
        Self { train: 0.95, val: 0.05 }
    }
}

impl Split {
    pub fn validate(&self) -> Result<()> {
        if !(self.train >= 0.0 && self.val >= 0.0 && (self.train + self.val - 1.0).abs() < 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "split fractions {}/{} must be non-negative and sum to 1",
                self.train, self.val
            )));
        }
        Ok(())
    }

    /// `(train, val)` counts: validation gets the floor, training the rest.
    pub fn counts(&self, count: usize) -> (usize, usize) {
        let val = ((count as f64) * self.val + 1e-9).floor() as usize;
        (count - val, val)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub split: String,
    pub file: String,
    pub samples: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub frame: FrameConfig,
    pub pattern: DmrsPattern,
    pub channel: PowerDelayProfile,
    pub normalize_power: bool,
    pub count: usize,
    /// `null` when noise is disabled.
    pub snr_range_db: Option<Range>,
    pub doppler_range_hz: Range,
    pub base_seed: u64,
    pub split: Split,
    pub files: Vec<FileEntry>,
}

impl DatasetManifest {
    pub fn input_shape(&self) -> [usize; 3] {
        [self.pattern.n_pilot_subcarriers(&self.frame), self.pattern.n_pilot_symbols(), 2]
    }

    pub fn label_shape(&self) -> [usize; 3] {
        [self.frame.n_subcarriers, self.frame.n_symbols, 2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[pilot rows x pilot symbols x 2]`, row-major.
    pub input: Vec<f32>,
    /// `[N_f x N_s x 2]`, row-major.
    pub label: Vec<f32>,
    pub snr_db: f32,
    pub doppler_hz: f32,
}

impl Sample {
    pub fn label_grid(&self, n_f: usize, n_s: usize) -> Grid {
        planes_to_grid(&self.label, n_f, n_s)
    }

    pub fn input_grid(&self, rows: usize, cols: usize) -> Grid {
        planes_to_grid(&self.input, rows, cols)
    }
}

/// Row-major `[rows x cols x 2]` f32 tensor of a complex grid.
pub fn grid_to_planes(g: &Grid) -> Vec<f32> {
    let mut out = Vec::with_capacity(g.len() * 2);
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            out.push(g[(r, c)].re as f32);
            out.push(g[(r, c)].im as f32);
        }
    }
    out
}

pub fn planes_to_grid(v: &[f32], rows: usize, cols: usize) -> Grid {
    Grid::from_fn(rows, cols, |r, c| {
        let i = 2 * (r * cols + c);
        Complex64::new(v[i] as f64, v[i + 1] as f64)
    })
}

/// Everything `generate_dataset` needs besides the output directory.
#[derive(Debug, Clone)]
pub struct DatasetRequest {
    pub channel: PowerDelayProfile,
    pub normalize_power: bool,
    pub pattern: DmrsPattern,
    pub frame: FrameConfig,
    pub count: usize,
    pub snr_range_db: Option<Range>,
    pub doppler_range_hz: Range,
    pub base_seed: u64,
    pub split: Split,
}

impl DatasetRequest {
    fn setup(&self) -> SlotSetup<'_> {
        SlotSetup {
            pdp: &self.channel,
            normalize_power: self.normalize_power,
            pattern: &self.pattern,
            frame: &self.frame,
            snr_db: self.snr_range_db,
            doppler_hz: self.doppler_range_hz,
            path: LinkPath::Fd,
        }
    }

    /// Sample `index`; independent of how samples are batched or scheduled.
    pub fn sample(&self, index: usize) -> Result<Sample> {
        let sim = self.setup().run(seed::derive(self.base_seed, index as u64))?;
        Ok(Sample {
            input: grid_to_planes(&sim.ls.values),
            label: grid_to_planes(&sim.h),
            snr_db: sim.snr_db as f32,
            doppler_hz: sim.doppler_hz as f32,
        })
    }
}

fn header(kind: u32, n_f: usize, n_s: usize, rows: usize, cols: usize, count: usize) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    h.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, kind, n_f as u32, n_s as u32, rows as u32, cols as u32] {
        h.extend_from_slice(&v.to_le_bytes());
    }
    h.extend_from_slice(&(count as u64).to_le_bytes());
    h
}

fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Writes records to `path.partial`, hashing as it goes, then renames.
fn write_sample_file(req: &DatasetRequest, range: std::ops::Range<usize>, path: &Path) -> Result<String> {
    let tmp = path.with_extension("bin.partial");
    let mut hasher = Sha256::new();
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        let [rows, cols, _] = [req.pattern.n_pilot_subcarriers(&req.frame), req.pattern.n_pilot_symbols(), 2];
        let h = header(KIND_SAMPLES, req.frame.n_subcarriers, req.frame.n_symbols, rows, cols, range.len());
        hasher.update(&h);
        w.write_all(&h)?;
        let mut start = range.start;
        while start < range.end {
            let end = (start + CHUNK).min(range.end);
            let batch: Vec<Sample> = (start..end)
                .into_par_iter()
                .map(|i| req.sample(i))
                .collect::<Result<_>>()?;
            let mut bytes = Vec::new();
            for s in &batch {
                bytes.extend_from_slice(&s.snr_db.to_le_bytes());
                bytes.extend_from_slice(&s.doppler_hz.to_le_bytes());
                write_f32s(&mut bytes, &s.input)?;
                write_f32s(&mut bytes, &s.label)?;
            }
            hasher.update(&bytes);
            w.write_all(&bytes)?;
            start = end;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(hex::encode(hasher.finalize()))
}

/// Generates a dataset under `out_dir`: `train.bin`, `val.bin` (when
/// non-empty) and `manifest.json`. A `.partial` marker exists while writing;
/// the manifest is written last.
pub fn generate_dataset(req: &DatasetRequest, out_dir: &Path) -> Result<DatasetManifest> {
    if req.count == 0 {
        return Err(Error::InvalidArgument("dataset count must be at least 1".into()));
    }
    req.split.validate()?;
    req.pattern.validate(&req.frame)?;
    req.frame.validate()?;

    fs::create_dir_all(out_dir)?;
    let marker = out_dir.join(PARTIAL_MARKER);
    File::create(&marker)?;
    let manifest_path = out_dir.join(MANIFEST_NAME);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path)?;
    }

    let (n_train, n_val) = req.split.counts(req.count);
    let mut files = Vec::new();
    for (split, range) in [("train", 0..n_train), ("val", n_train..req.count)] {
        if range.is_empty() {
            continue;
        }
        let file = format!("{split}.bin");
        let samples = range.len();
        log::info!("writing {samples} {split} samples");
        let sha256 = write_sample_file(req, range, &out_dir.join(&file))?;
        files.push(FileEntry {
            split: split.into(),
            file,
            samples,
            sha256,
        });
    }
    debug_assert_eq!(files.iter().map(|f| f.samples).sum::<usize>(), n_train + n_val);

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        frame: req.frame.clone(),
        pattern: req.pattern.clone(),
        channel: req.channel.clone(),
        normalize_power: req.normalize_power,
        count: req.count,
        snr_range_db: req.snr_range_db,
        doppler_range_hz: req.doppler_range_hz,
        base_seed: req.base_seed,
        split: req.split,
        files,
    };
    let tmp = out_dir.join("manifest.json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
    fs::rename(&tmp, &manifest_path)?;
    fs::remove_file(&marker)?;
    Ok(manifest)
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

struct FileHeader {
    kind: u32,
    n_f: usize,
    n_s: usize,
    rows: usize,
    cols: usize,
    count: usize,
}

impl FileHeader {
    fn record_floats(&self) -> usize {
        match self.kind {
            KIND_SAMPLES => 2 + 2 * self.rows * self.cols + 2 * self.n_f * self.n_s,
            _ => 2 * self.n_f * self.n_s,
        }
    }
}

fn read_header(path: &Path, bytes: &[u8]) -> Result<FileHeader> {
    let fmt = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(fmt("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(fmt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let h = FileHeader {
        kind: u32_at(12),
        n_f: u32_at(16) as usize,
        n_s: u32_at(20) as usize,
        rows: u32_at(24) as usize,
        cols: u32_at(28) as usize,
        count: u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize,
    };
    if h.kind > KIND_PREDICTIONS {
        return Err(fmt("unknown record kind"));
    }
    if bytes.len() != HEADER_LEN + h.count * h.record_floats() * 4 {
        return Err(fmt("truncated or oversized record section"));
    }
    Ok(h)
}

fn floats(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// A verified dataset on disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

/// Opens a dataset after checking the manifest version, every digest and
/// every file length.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    if dir.join(PARTIAL_MARKER).exists() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            msg: "incomplete dataset (partial marker present)".into(),
        });
    }
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    for f in &manifest.files {
        let path = dir.join(&f.file);
        if sha256_file(&path)? != f.sha256 {
            return Err(Error::Digest { path });
        }
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
    })
}

impl Dataset {
    /// Samples of one file in stored order.
    pub fn read_file(&self, entry: &FileEntry) -> Result<Vec<Sample>> {
        let path = self.dir.join(&entry.file);
        let bytes = fs::read(&path)?;
        let h = read_header(&path, &bytes)?;
        let [rows, cols, _] = self.manifest.input_shape();
        if h.kind != KIND_SAMPLES
            || h.count != entry.samples
            || (h.n_f, h.n_s, h.rows, h.cols) != (self.manifest.frame.n_subcarriers, self.manifest.frame.n_symbols, rows, cols)
        {
            return Err(Error::Format {
                path,
                msg: "header disagrees with manifest".into(),
            });
        }
        let n_in = 2 * rows * cols;
        let rec = h.record_floats() * 4;
        Ok(bytes[HEADER_LEN..]
            .chunks_exact(rec)
            .map(|r| {
                let v = floats(r);
                Sample {
                    snr_db: v[0],
                    doppler_hz: v[1],
                    input: v[2..2 + n_in].to_vec(),
                    label: v[2 + n_in..].to_vec(),
                }
            })
            .collect())
    }

    /// Every sample, training file first, in stored order.
    pub fn samples(&self) -> impl Iterator<Item = Result<Sample>> + '_ {
        self.manifest.files.iter().flat_map(move |f| match self.read_file(f) {
            Ok(v) => v.into_iter().map(Ok).collect::<Vec<_>>(),
            Err(e) => vec![Err(e)],
        })
    }
}

/// Writes label-shaped prediction tensors in the dataset binary layout.
pub fn write_predictions(path: &Path, grids: &[Grid]) -> Result<()> {
    let (n_f, n_s) = grids.first().map_or((0, 0), |g| g.shape());
    if grids.iter().any(|g| g.shape() != (n_f, n_s)) {
        return Err(Error::Dimension("predictions of unequal shape".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header(KIND_PREDICTIONS, n_f, n_s, 0, 0, grids.len()))?;
    for g in grids {
        write_f32s(&mut w, &grid_to_planes(g))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Grid>> {
    let bytes = fs::read(path)?;
    let h = read_header(path, &bytes)?;
    if h.kind != KIND_PREDICTIONS {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "not a predictions file".into(),
        });
    }
    let rec = h.record_floats() * 4;
    Ok(bytes[HEADER_LEN..]
        .chunks_exact(rec.max(1))
        .take(h.count)
        .map(|r| planes_to_grid(&floats(r), h.n_f, h.n_s))
        .collect())
}
