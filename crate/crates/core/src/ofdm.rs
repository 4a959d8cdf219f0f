//! Slot construction (DM-RS pilots + QPSK data), the frequency-domain link
//! `Y = H o X + W`, a time-domain link with cyclic prefix for delay spreads that
//! exceed the CP, pilot extraction, and a small grid dump format.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::ChannelRealization;
use crate::seed::{self, Stream};

pub type Grid = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub fft_size: usize,
    pub cp_len: usize,
    pub impl_delay: usize,
    pub carrier_hz: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 72,
            n_symbols: 14,
            subcarrier_spacing_hz: 15e3,
            fft_size: 128,
            cp_len: 9,
            impl_delay: 7,
            carrier_hz: 2.1e9,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0
            || self.n_symbols == 0
            || self.fft_size == 0
            || !(self.subcarrier_spacing_hz > 0.0)
            || !(self.carrier_hz > 0.0)
        {
            return Err(Error::InvalidArgument("frame parameters must be positive".into()));
        }
        if self.n_subcarriers > self.fft_size {
            return Err(Error::InvalidArgument(format!(
                "{} subcarriers do not fit an FFT of {}",
                self.n_subcarriers, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.fft_size as f64 * self.subcarrier_spacing_hz
    }

    /// Guard samples: CP plus implementation delay.
    pub fn cp_samples(&self) -> usize {
        self.cp_len + self.impl_delay
    }

    pub fn symbol_samples(&self) -> usize {
        self.fft_size + self.cp_samples()
    }

    pub fn cp_duration_s(&self) -> f64 {
        self.cp_samples() as f64 / self.sample_rate_hz()
    }

    pub fn symbol_duration_s(&self) -> f64 {
        self.symbol_samples() as f64 / self.sample_rate_hz()
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.symbol_duration_s() * self.n_symbols as f64
    }

    /// Start time of every OFDM symbol in the slot.
    pub fn symbol_times(&self) -> Vec<f64> {
        (0..self.n_symbols)
            .map(|l| l as f64 * self.symbol_duration_s())
            .collect()
    }
}

/// Comb-type DM-RS layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmrsPattern {
    pub pilot_symbols: Vec<usize>,
    pub comb_offset: usize,
    pub comb_spacing: usize,
    pub pilot_value: Complex64,
}

impl Default for DmrsPattern {
    fn default() -> Self {
        Self {
            pilot_symbols: vec![2, 11],
            comb_offset: 0,
            comb_spacing: 2,
            pilot_value: Complex64::new(1.0, 1.0),
        }
    }
}

impl DmrsPattern {
    pub fn alternative() -> Self {
        Self {
            pilot_symbols: vec![2, 7, 11],
            comb_offset: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self, frame: &FrameConfig) -> Result<()> {
        if self.pilot_symbols.is_empty() {
            return Err(Error::InvalidArgument("pattern has no pilot symbols".into()));
        }
        if self.pilot_symbols.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("pilot symbols must be strictly increasing".into()));
        }
        if self.pilot_symbols.iter().any(|&l| l >= frame.n_symbols) {
            return Err(Error::InvalidArgument("pilot symbol outside the slot".into()));
        }
        if self.comb_spacing == 0 || self.comb_offset >= self.comb_spacing {
            return Err(Error::InvalidArgument("comb offset must be below comb spacing".into()));
        }
        if !frame.n_subcarriers.is_multiple_of(self.comb_spacing) {
            return Err(Error::InvalidArgument("subcarrier count not a multiple of the comb spacing".into()));
        }
        if self.pilot_value.norm_sqr() == 0.0 {
            return Err(Error::InvalidArgument("pilot value must be non-zero".into()));
        }
        Ok(())
    }

    pub fn n_pilot_symbols(&self) -> usize {
        self.pilot_symbols.len()
    }

    pub fn n_pilot_subcarriers(&self, frame: &FrameConfig) -> usize {
        frame.n_subcarriers / self.comb_spacing
    }

    /// Subcarrier index of pilot row `r`.
    pub fn pilot_subcarrier(&self, r: usize) -> usize {
        self.comb_spacing * r + self.comb_offset
    }

    pub fn pilot_subcarriers(&self, frame: &FrameConfig) -> Vec<usize> {
        (0..self.n_pilot_subcarriers(frame))
            .map(|r| self.pilot_subcarrier(r))
            .collect()
    }

    pub fn is_pilot_symbol(&self, l: usize) -> bool {
        self.pilot_symbols.contains(&l)
    }

    pub fn n_data_res(&self, frame: &FrameConfig) -> usize {
        frame.n_subcarriers * (frame.n_symbols - self.n_pilot_symbols())
    }
}

/// Transmitted resource grid `X`, `[N_f x N_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotGrid {
    pub x: Grid,
}

/// Gray-free QPSK: bit 0 selects the real sign, bit 1 the imaginary sign.
pub fn qpsk(b0: bool, b1: bool) -> Complex64 {
    let s = |b: bool| if b { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Complex64::new(s(b0), s(b1))
}

/// Builds a slot. Data REs are filled symbol by symbol, subcarrier by
/// subcarrier, two bits per RE. Without explicit bits, bits are drawn from
/// `seed`.
pub fn build_slot(bits: Option<&[bool]>, pattern: &DmrsPattern, frame: &FrameConfig, seed: u64) -> Result<SlotGrid> {
    pattern.validate(frame)?;
    let needed = 2 * pattern.n_data_res(frame);
    let owned;
    let bits = match bits {
        Some(b) if b.len() != needed => {
            return Err(Error::InvalidArgument(format!("expected {needed} bits, got {}", b.len())));
        }
        Some(b) => b,
        None => {
            let mut rng = seed::rng(seed, Stream::Bits);
            owned = (0..needed).map(|_| rng.random::<bool>()).collect::<Vec<_>>();
            &owned
        }
    };
    let mut x = Grid::zeros(frame.n_subcarriers, frame.n_symbols);
    let mut pairs = bits.chunks_exact(2);
    for l in 0..frame.n_symbols {
        if pattern.is_pilot_symbol(l) {
            for k in pattern.pilot_subcarriers(frame) {
                x[(k, l)] = pattern.pilot_value;
            }
        } else {
            for k in 0..frame.n_subcarriers {
                let p = pairs.next().expect("bit count checked");
                x[(k, l)] = qpsk(p[0], p[1]);
            }
        }
    }
    Ok(SlotGrid { x })
}

/// Noise variance per RE for an SNR referenced to unit data-symbol power.
/// `+inf` dB disables noise.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

fn add_noise(y: &mut Grid, snr_db: f64, seed: u64) {
    let var = noise_variance(snr_db);
    if var == 0.0 {
        return;
    }
    let sd = (var / 2.0).sqrt();
    let mut rng = seed::rng(seed, Stream::Noise);
    // Column-major fill keeps the draw order fixed.
    for v in y.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re * sd, im * sd);
    }
}

/// `Y = H o X + W`.
pub fn transmit_receive_fd(x: &SlotGrid, h: &Grid, snr_db: f64, seed: u64) -> Result<Grid> {
    if x.x.shape() != h.shape() {
        return Err(Error::Dimension(format!("X {:?} vs H {:?}", x.x.shape(), h.shape())));
    }
    let mut y = x.x.component_mul(h);
    add_noise(&mut y, snr_db, seed);
    Ok(y)
}

/// Time-domain link: per symbol IFFT, cyclic prefix of `cp_len + impl_delay`
/// samples, continuous-delay multipath, CP removal, FFT, AWGN.
///
/// Subcarrier `k` occupies FFT bin `k`, matching the frequency convention of
/// [`crate::fading::freq_response`]. Each tap applies an exact (fractional)
/// delay to the band-limited symbol waveform, so when every delay is within the
/// guard interval the result equals `H o X`. Longer delays pull samples of the
/// preceding symbols into the FFT window (ISI); the slot is preceded by
/// silence. Tap gains are those of the receiving symbol.
pub fn transmit_receive_td(
    x: &SlotGrid,
    r: &ChannelRealization,
    frame: &FrameConfig,
    snr_db: f64,
    seed: u64,
) -> Result<Grid> {
    frame.validate()?;
    let (n_f, n_s) = (frame.n_subcarriers, frame.n_symbols);
    if x.x.shape() != (n_f, n_s) {
        return Err(Error::Dimension(format!("X {:?} vs frame ({n_f}, {n_s})", x.x.shape())));
    }
    if r.n_times() < n_s {
        return Err(Error::Dimension("realization shorter than the slot".into()));
    }
    let limit_ns = frame.slot_duration_s() * 1e9;
    if let Some(&d) = r.delays_ns.iter().find(|&&d| d > limit_ns) {
        return Err(Error::DelayOutOfModel {
            delay_ns: d,
            limit_ns,
        });
    }

    let n = frame.fft_size;
    let cp = frame.cp_samples() as f64;
    let sym_len = frame.symbol_samples() as f64;
    let fs = frame.sample_rate_hz();
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let fft = planner.plan_fft_forward(n);

    // Per tap: integer and fractional delay in samples.
    let delays: Vec<(i64, f64)> = r
        .delays_ns
        .iter()
        .map(|d| {
            let s = d * 1e-9 * fs;
            let i = s.floor();
            (i as i64, s - i)
        })
        .collect();

    // waveforms[l][m]: periodic useful-part waveform of symbol l delayed by the
    // fractional part of tap m.
    let mut waveforms = vec![vec![Vec::<Complex64>::new(); delays.len()]; n_s];
    for (l, per_tap) in waveforms.iter_mut().enumerate() {
        for (m, &(_, frac)) in delays.iter().enumerate() {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for k in 0..n_f {
                buf[k] = x.x[(k, l)] * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * frac / n as f64);
            }
            ifft.process(&mut buf);
            per_tap[m] = buf;
        }
    }

    let mut y = Grid::zeros(n_f, n_s);
    let mut window = vec![Complex64::new(0.0, 0.0); n];
    for l in 0..n_s {
        window.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (m, &(d_int, frac)) in delays.iter().enumerate() {
            let g = r.tap_gains[(m, l)];
            let start = l as i64 * sym_len as i64 + cp as i64 - d_int;
            for (i, w) in window.iter_mut().enumerate() {
                let shifted = start + i as i64;
                let t = shifted as f64 - frac;
                if t < 0.0 {
                    continue;
                }
                let src = (t / sym_len).floor() as i64;
                let j = shifted - src * sym_len as i64 - cp as i64;
                let idx = j.rem_euclid(n as i64) as usize;
                *w += g * waveforms[src as usize][m][idx];
            }
        }
        fft.process(&mut window);
        for k in 0..n_f {
            y[(k, l)] = window[k] / n as f64;
        }
    }
    add_noise(&mut y, snr_db, seed);
    Ok(y)
}

/// Pilot grid `[N_f/comb x N_pilot]`: row `r`, column `c` is
/// `Y[comb * r + offset, pilot_symbols[c]]`.
pub fn extract_pilots(y: &Grid, pattern: &DmrsPattern, frame: &FrameConfig) -> Result<Grid> {
    pattern.validate(frame)?;
    if y.shape() != (frame.n_subcarriers, frame.n_symbols) {
        return Err(Error::Dimension(format!("grid {:?} does not match frame", y.shape())));
    }
    Ok(Grid::from_fn(
        pattern.n_pilot_subcarriers(frame),
        pattern.n_pilot_symbols(),
        |r, c| y[(pattern.pilot_subcarrier(r), pattern.pilot_symbols[c])],
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpHeader {
    rows: usize,
    cols: usize,
    dtype: String,
    order: String,
}

/// Debug dump: one JSON header line, then little-endian complex64 (re, im
/// as f32) in row-major order.
pub fn write_grid_dump<W: Write>(mut w: W, grid: &Grid) -> Result<()> {
    let header = DumpHeader {
        rows: grid.nrows(),
        cols: grid.ncols(),
        dtype: "complex64-le".into(),
        order: "row-major".into(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for r in 0..grid.nrows() {
        for c in 0..grid.ncols() {
            let v = grid[(r, c)];
            w.write_all(&(v.re as f32).to_le_bytes())?;
            w.write_all(&(v.im as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_grid_dump<R: BufRead>(mut r: R) -> Result<Grid> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end())?;
    let mut buf = vec![0u8; header.rows * header.cols * 8];
    r.read_exact(&mut buf)?;
    let f = |i: usize| f32::from_le_bytes(buf[i..i + 4].try_into().unwrap()) as f64;
    Ok(Grid::from_fn(header.rows, header.cols, |row, col| {
        let i = (row * header.cols + col) * 8;
        Complex64::new(f(i), f(i + 4))
    }))
}
