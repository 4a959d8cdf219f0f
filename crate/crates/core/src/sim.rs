//! One simulated slot: parameter draw, fading, link, LS. Dataset generation and
//! the evaluation harness share this path so that a dataset generated with a
//! given base seed carries exactly the realizations the harness scores.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ls_estimate, PilotEstimate};
use crate::fading::{freq_response, generate_realization};
use crate::ofdm::{build_slot, extract_pilots, transmit_receive_fd, transmit_receive_td, DmrsPattern, FrameConfig, Grid};
use crate::profiles::{ChannelSpec, PowerDelayProfile};
use crate::seed::{self, Stream};

/// Closed interval; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidArgument(format!("invalid range {lo}:{hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn at(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkPath {
    /// `Y = H o X + W`.
    #[default]
    Fd,
    /// IFFT, cyclic prefix, multipath, FFT.
    Td,
}

#[derive(Debug, Clone)]
pub struct SlotSimulation {
    pub h: Grid,
    pub y: Grid,
    pub ls: PilotEstimate,
    pub snr_db: f64,
    pub doppler_hz: f64,
}

/// Static configuration of a slot simulation.
#[derive(Debug, Clone)]
pub struct SlotSetup<'a> {
    pub pdp: &'a PowerDelayProfile,
    pub normalize_power: bool,
    pub pattern: &'a DmrsPattern,
    pub frame: &'a FrameConfig,
    /// `None` disables noise.
    pub snr_db: Option<Range>,
    pub doppler_hz: Range,
    pub path: LinkPath,
}

impl SlotSetup<'_> {
    /// Simulates the slot keyed by `seed`. SNR and Doppler are drawn first
    /// from the parameter stream (always two uniforms, pinned or not).
    pub fn run(&self, seed: u64) -> Result<SlotSimulation> {
        let mut prng = seed::rng(seed, Stream::Params);
        let (u_snr, u_dop): (f64, f64) = (prng.random(), prng.random());
        let snr_db = self.snr_db.map_or(f64::INFINITY, |r| r.at(u_snr));
        let doppler_hz = self.doppler_hz.at(u_dop);

        let spec = ChannelSpec::new(self.pdp.clone(), doppler_hz).normalized(self.normalize_power);
        spec.validate(self.frame.symbol_duration_s())?;
        let r = generate_realization(&spec, seed, &self.frame.symbol_times())?;
        let h = freq_response(&r, self.frame)?;
        let x = build_slot(None, self.pattern, self.frame, seed)?;
        let y = match self.path {
            LinkPath::Fd => transmit_receive_fd(&x, &h, snr_db, seed)?,
            LinkPath::Td => transmit_receive_td(&x, &r, self.frame, snr_db, seed)?,
        };
        let ls = ls_estimate(&extract_pilots(&y, self.pattern, self.frame)?, self.pattern);
        Ok(SlotSimulation {
            h,
            y,
            ls,
            snr_db,
            doppler_hz,
        })
    }
}
