//! Pilot-based channel estimators: LS division, the frequency-domain MMSE
//! filter built from WSSUS correlations, bilinear interpolation to the full
//! slot, and the MSE metric.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ofdm::{noise_variance, DmrsPattern, FrameConfig, Grid};
use crate::profiles::PowerDelayProfile;

/// Estimate on the pilot grid, `[N_f/comb x N_pilot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotEstimate {
    pub values: Grid,
    pub pattern: DmrsPattern,
}

/// `H_ls = Y_pilot / X_pilot`, element-wise.
pub fn ls_estimate(y_pilot: &Grid, pattern: &DmrsPattern) -> PilotEstimate {
    let inv = Complex64::new(1.0, 0.0) / pattern.pilot_value;
    PilotEstimate {
        values: y_pilot.map(|v| v * inv),
        pattern: pattern.clone(),
    }
}

/// `sum_m P_m exp(-j 2 pi df (k - k') tau_m)`.
pub fn frequency_correlation(pdp: &PowerDelayProfile, spacing_hz: f64, rows: &[usize], cols: &[usize]) -> DMatrix<Complex64> {
    let taps: Vec<(f64, f64)> = pdp
        .taps()
        .iter()
        .map(|t| (t.linear_power(), -2.0 * PI * spacing_hz * t.delay_ns * 1e-9))
        .collect();
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let dk = rows[i] as f64 - cols[j] as f64;
        taps.iter()
            .map(|&(p, w)| Complex64::from_polar(p, w * dk))
            .sum()
    })
}

/// Correlations feeding the MMSE filter. The channel is stationary, so one
/// pair of matrices serves every pilot symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    /// `E{H H_p^H}`, `[N_f x N_f/comb]`.
    pub r_hp: DMatrix<Complex64>,
    /// `E{H_p H_p^H}`, `[N_f/comb x N_f/comb]`.
    pub r_pp: DMatrix<Complex64>,
    pub n_pilot_symbols: usize,
}

impl CorrelationSet {
    pub fn for_symbol(&self, u: usize) -> (&DMatrix<Complex64>, &DMatrix<Complex64>) {
        assert!(u < self.n_pilot_symbols, "pilot symbol {u} out of range");
        (&self.r_hp, &self.r_pp)
    }
}

pub fn analytic_correlations(pdp: &PowerDelayProfile, pattern: &DmrsPattern, frame: &FrameConfig) -> CorrelationSet {
    let all: Vec<usize> = (0..frame.n_subcarriers).collect();
    let pilots = pattern.pilot_subcarriers(frame);
    CorrelationSet {
        r_hp: frequency_correlation(pdp, frame.subcarrier_spacing_hz, &all, &pilots),
        r_pp: frequency_correlation(pdp, frame.subcarrier_spacing_hz, &pilots, &pilots),
        n_pilot_symbols: pattern.n_pilot_symbols(),
    }
}

fn condition_estimate(a: &DMatrix<Complex64>) -> f64 {
    let eig = a.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    max / min
}

/// Solves `A Z = B` for Hermitian `A`: Cholesky first, then Cholesky with a
/// `1e-10 * trace / n` diagonal floor, then LU.
fn hermitian_solve(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let n = a.nrows();
    let floor = 1e-10 * a.trace().re / n as f64;
    let mut reg = a.clone();
    for i in 0..n {
        reg[(i, i)] += floor;
    }
    if let Some(ch) = reg.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    reg.clone()
        .lu()
        .solve(b)
        .filter(|z| z.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
        .ok_or_else(|| Error::Solver {
            condition: condition_estimate(&reg),
        })
}

/// `W = R_hp (R_pp + sigma_n^2 / sigma_x^2 I)^-1`, with `sigma_x^2` the pilot
/// power, precomputed for one SNR.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    pub weights: DMatrix<Complex64>,
}

impl MmseFilter {
    pub fn new(corr: &CorrelationSet, pilot_value: Complex64, snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("SNR must be finite or +inf, got {snr_db}")));
        }
        let ratio = noise_variance(snr_db) / pilot_value.norm_sqr();
        let mut a = corr.r_pp.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += ratio;
        }
        // A W^H = R_hp^H
        let wh = hermitian_solve(&a, &corr.r_hp.adjoint())?;
        Ok(Self { weights: wh.adjoint() })
    }

    /// Full-band estimate per pilot symbol, `[N_f x N_pilot]`.
    pub fn apply(&self, ls: &PilotEstimate) -> Result<Grid> {
        if ls.values.nrows() != self.weights.ncols() {
            return Err(Error::Dimension(format!(
                "LS has {} pilot rows, filter expects {}",
                ls.values.nrows(),
                self.weights.ncols()
            )));
        }
        Ok(&self.weights * &ls.values)
    }
}

pub fn mmse_estimate(ls: &PilotEstimate, corr: &CorrelationSet, snr_db: f64) -> Result<Grid> {
    if ls.values.ncols() != corr.n_pilot_symbols {
        return Err(Error::Dimension("pilot symbol count mismatch".into()));
    }
    MmseFilter::new(corr, ls.pattern.pilot_value, snr_db)?.apply(ls)
}

/// Piecewise-linear interpolation with constant hold outside the sample range.
/// `positions` must be strictly increasing.
fn interp_axis(positions: &[usize], values: &[Complex64], target: usize) -> Complex64 {
    debug_assert_eq!(positions.len(), values.len());
    let t = target;
    if positions.len() == 1 || t <= positions[0] {
        return values[0];
    }
    let last = positions.len() - 1;
    if t >= positions[last] {
        return values[last];
    }
    let hi = positions.partition_point(|&p| p <= t);
    let lo = hi - 1;
    if positions[lo] == t {
        return values[lo];
    }
    let w = (t - positions[lo]) as f64 / (positions[hi] - positions[lo]) as f64;
    values[lo] * (1.0 - w) + values[hi] * w
}

/// Bilinear interpolation from the pilot grid to `[N_f x N_s]`: linear along
/// frequency between sampled rows and along time between pilot symbols, with
/// hold beyond the outermost samples.
///
/// `values` has either one row per pilot subcarrier or one row per subcarrier
/// (already full-band, e.g. MMSE output) and one column per pilot symbol.
pub fn bilinear_to_slot(values: &Grid, pattern: &DmrsPattern, frame: &FrameConfig) -> Result<Grid> {
    let rows: Vec<usize> = if values.nrows() == frame.n_subcarriers {
        (0..frame.n_subcarriers).collect()
    } else if values.nrows() == pattern.n_pilot_subcarriers(frame) {
        pattern.pilot_subcarriers(frame)
    } else {
        return Err(Error::Dimension(format!(
            "{} rows match neither the pilot grid nor the full band",
            values.nrows()
        )));
    };
    if values.ncols() != pattern.n_pilot_symbols() || values.ncols() == 0 {
        return Err(Error::Dimension("one column per pilot symbol required".into()));
    }

    // Frequency first, on each pilot symbol.
    let mut freq = Grid::zeros(frame.n_subcarriers, values.ncols());
    for c in 0..values.ncols() {
        let col: Vec<Complex64> = values.column(c).iter().copied().collect();
        for k in 0..frame.n_subcarriers {
            freq[(k, c)] = interp_axis(&rows, &col, k);
        }
    }
    let mut out = Grid::zeros(frame.n_subcarriers, frame.n_symbols);
    for k in 0..frame.n_subcarriers {
        let row: Vec<Complex64> = freq.row(k).iter().copied().collect();
        for l in 0..frame.n_symbols {
            out[(k, l)] = interp_axis(&pattern.pilot_symbols, &row, l);
        }
    }
    Ok(out)
}

/// `(1 / (N_f N_s)) sum |H_hat - H|^2`.
pub fn mse(h_hat: &Grid, h: &Grid) -> Result<f64> {
    if h_hat.shape() != h.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", h_hat.shape(), h.shape())));
    }
    let sum: f64 = h_hat.iter().zip(h.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(sum / h.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::builtin_profile;

    fn frame() -> FrameConfig {
        FrameConfig::default()
    }

    #[test]
    fn ls_division() {
        let p = DmrsPattern::default();
        let y = Grid::from_element(36, 2, p.pilot_value);
        assert!(ls_estimate(&y, &p).values.iter().all(|v| (*v - 1.0).norm() < 1e-15));
        let y = Grid::from_element(1, 1, Complex64::new(2.0, 2.0));
        assert_eq!(ls_estimate(&y, &p).values[(0, 0)], Complex64::new(2.0, 0.0));
    }

    #[test]
    fn flat_correlations_are_constant() {
        let corr = analytic_correlations(&builtin_profile("flat").unwrap(), &DmrsPattern::default(), &frame());
        assert_eq!(corr.r_hp.shape(), (72, 36));
        assert!(corr.r_hp.iter().all(|v| (*v - 1.0).norm() < 1e-12));
        assert!(corr.r_pp.iter().all(|v| (*v - 1.0).norm() < 1e-12));
    }

    #[test]
    fn diagonal_is_total_power() {
        let pdp = builtin_profile("ETU").unwrap();
        let corr = analytic_correlations(&pdp, &DmrsPattern::default(), &frame());
        for i in 0..36 {
            assert!((corr.r_pp[(i, i)].re - pdp.total_power()).abs() < 1e-12);
            assert!(corr.r_pp[(i, i)].im.abs() < 1e-12);
        }
        assert!((&corr.r_pp - corr.r_pp.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn flat_noiseless_mmse_recovers_constant() {
        let f = frame();
        let p = DmrsPattern::default();
        let corr = analytic_correlations(&builtin_profile("flat").unwrap(), &p, &f);
        let c = Complex64::new(0.3, -0.8);
        let ls = PilotEstimate {
            values: Grid::from_element(36, 2, c),
            pattern: p.clone(),
        };
        let out = mmse_estimate(&ls, &corr, f64::INFINITY).unwrap();
        assert_eq!(out.shape(), (72, 2));
        assert!(out.iter().all(|v| (*v - c).norm() < 1e-6));
    }

    #[test]
    fn mmse_vanishes_at_very_low_snr() {
        let p = DmrsPattern::default();
        let corr = analytic_correlations(&builtin_profile("EPA").unwrap(), &p, &frame());
        let ls = PilotEstimate {
            values: Grid::from_element(36, 2, Complex64::new(1.0, 1.0)),
            pattern: p,
        };
        let out = mmse_estimate(&ls, &corr, -200.0).unwrap();
        assert!(out.iter().all(|v| v.norm() < 1e-15));
        assert!(mmse_estimate(&ls, &corr, f64::NAN).is_err());
    }

    #[test]
    fn bilinear_preserves_constants_and_lines() {
        let f = frame();
        let p = DmrsPattern::default();
        let c = Complex64::new(-1.0, 2.0);
        let out = bilinear_to_slot(&Grid::from_element(36, 2, c), &p, &f).unwrap();
        assert!(out.iter().all(|v| *v == c));

        let lin = Grid::from_fn(36, 2, |r, _| Complex64::new(2.0 * r as f64, 1.0));
        let out = bilinear_to_slot(&lin, &p, &f).unwrap();
        for k in 0..=70 {
            assert!((out[(k, 5)] - Complex64::new(k as f64, 1.0)).norm() < 1e-12);
        }
        assert_eq!(out[(71, 5)], out[(70, 5)]);
    }

    #[test]
    fn bilinear_time_axis() {
        let f = frame();
        let single = DmrsPattern {
            pilot_symbols: vec![3],
            ..DmrsPattern::default()
        };
        let vals = Grid::from_fn(36, 1, |r, _| Complex64::new(r as f64, 0.0));
        let out = bilinear_to_slot(&vals, &single, &f).unwrap();
        for l in 1..14 {
            assert_eq!(out.column(l), out.column(0));
        }

        let p = DmrsPattern::default();
        let vals = Grid::from_fn(36, 2, |_, c| Complex64::new(if c == 0 { 0.0 } else { 9.0 }, 0.0));
        let out = bilinear_to_slot(&vals, &p, &f).unwrap();
        assert_eq!(out[(4, 0)].re, 0.0);
        assert_eq!(out[(4, 13)].re, 9.0);
        assert!((out[(4, 5)].re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mse_basics() {
        let h = Grid::from_fn(4, 3, |r, c| Complex64::new(r as f64, c as f64));
        assert_eq!(mse(&h, &h).unwrap(), 0.0);
        let shifted = h.map(|v| v + 1.0);
        assert!((mse(&shifted, &h).unwrap() - 1.0).abs() < 1e-15);
        assert!(mse(&h, &Grid::zeros(2, 2)).is_err());
        let rot = Complex64::from_polar(1.0, 0.7);
        let a = shifted.map(|v| v * rot);
        let b = h.map(|v| v * rot);
        assert!((mse(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }
}
