//! Rayleigh tap-gain trajectories from a sum-of-sinusoids Doppler model and the
//! frequency response they induce on the OFDM grid.
//!
//! Each tap is `g(t) = mu_i(t) + j mu_q(t)` where each quadrature component is
//!
//! ```text
//! mu(t) = sigma * sqrt(2/N) * sum_n cos(2 pi f_max cos(alpha_n) t + phi_n)
//! alpha_n = pi/(2N) (n - 1/2) +/- pi/(8N)
//! ```
//!
//! with independent uniform phases `phi_n`. The in-phase and quadrature angle
//! sets are rotated in opposite directions so the two components use disjoint
//! Doppler frequencies. Over the random phases the autocorrelation of each
//! component is `sigma^2 / N * sum_n cos(2 pi f_max cos(alpha_n) tau)`, a
//! midpoint-rule approximation of `sigma^2 J0(2 pi f_max tau)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ofdm::FrameConfig;
use crate::profiles::ChannelSpec;
use crate::seed::{self, Stream};

/// Sinusoids per quadrature component.
pub const SINUSOIDS: usize = 20;

/// One slot of tap gains sampled at the supplied instants.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `[taps x times]`.
    pub tap_gains: DMatrix<Complex64>,
    pub delays_ns: Vec<f64>,
    pub spec: ChannelSpec,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn n_taps(&self) -> usize {
        self.tap_gains.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.tap_gains.ncols()
    }
}

/// Angle offsets of the in-phase and quadrature sets.
fn angle_offset(component: usize) -> f64 {
    let base = PI / (8.0 * SINUSOIDS as f64);
    if component == 0 {
        base
    } else {
        -base
    }
}

/// Discrete Doppler frequencies (Hz) of one quadrature component.
pub fn doppler_frequencies(max_doppler_hz: f64, component: usize) -> [f64; SINUSOIDS] {
    let n = SINUSOIDS as f64;
    std::array::from_fn(|i| {
        let alpha = PI / (2.0 * n) * (i as f64 + 0.5) + angle_offset(component);
        max_doppler_hz * alpha.cos()
    })
}

/// Draws one realization. Deterministic in `(spec, seed, symbol_times)`.
pub fn generate_realization(spec: &ChannelSpec, seed: u64, symbol_times: &[f64]) -> Result<ChannelRealization> {
    if symbol_times.is_empty() {
        return Err(Error::InvalidArgument("no symbol times".into()));
    }
    if symbol_times.windows(2).any(|w| w[1] < w[0]) || symbol_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("symbol times must be finite and non-decreasing".into()));
    }
    if !(spec.max_doppler_hz.is_finite() && spec.max_doppler_hz >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad max Doppler {}", spec.max_doppler_hz)));
    }
    let pdp = spec.effective_pdp();
    let freqs = [
        doppler_frequencies(spec.max_doppler_hz, 0),
        doppler_frequencies(spec.max_doppler_hz, 1),
    ];
    let amp_scale = (2.0 / SINUSOIDS as f64).sqrt();
    let mut rng = seed::rng(seed, Stream::Fading);

    let mut gains = DMatrix::<Complex64>::zeros(pdp.len(), symbol_times.len());
    for (m, tap) in pdp.taps().iter().enumerate() {
        let sigma = (tap.linear_power() / 2.0).sqrt() * amp_scale;
        let mut phases = [[0.0f64; SINUSOIDS]; 2];
        for comp in phases.iter_mut() {
            for p in comp.iter_mut() {
                *p = rng.random::<f64>() * 2.0 * PI;
            }
        }
        for (l, &t) in symbol_times.iter().enumerate() {
            let mut quad = [0.0f64; 2];
            for c in 0..2 {
                quad[c] = sigma
                    * freqs[c]
                        .iter()
                        .zip(&phases[c])
                        .map(|(f, p)| (2.0 * PI * f * t + p).cos())
                        .sum::<f64>();
            }
            gains[(m, l)] = Complex64::new(quad[0], quad[1]);
        }
    }
    Ok(ChannelRealization {
        tap_gains: gains,
        delays_ns: pdp.delays_ns(),
        spec: spec.clone(),
        seed,
    })
}

/// `H(k, l) = sum_m g_m(l) exp(-j 2 pi k df tau_m)` on the `[N_f x N_s]` grid.
///
/// Uses the first `N_s` gain samples of the realization.
pub fn freq_response(r: &ChannelRealization, frame: &FrameConfig) -> Result<DMatrix<Complex64>> {
    let n_f = frame.n_subcarriers;
    let n_s = frame.n_symbols;
    if r.n_times() < n_s {
        return Err(Error::Dimension(format!(
            "realization has {} time samples, frame needs {n_s}",
            r.n_times()
        )));
    }
    // steering[k, m] = exp(-j 2 pi k df tau_m)
    let steering = DMatrix::from_fn(n_f, r.n_taps(), |k, m| {
        let phase = -2.0 * PI * k as f64 * frame.subcarrier_spacing_hz * r.delays_ns[m] * 1e-9;
        Complex64::from_polar(1.0, phase)
    });
    Ok(&steering * r.tap_gains.columns(0, n_s))
}
