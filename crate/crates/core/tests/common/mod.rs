//! Independent oracles shared by the integration tests. Nothing here calls the
//! library code it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::io::Write;

/// Bessel `J0(x) = (1/pi) int_0^pi cos(x sin t) dt`, composite Simpson rule.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 / PI
}

/// Sum of `10^(g/10)`.
pub fn linear_power_sum(gains_db: &[f64]) -> f64 {
    gains_db.iter().map(|g| 10f64.powf(g / 10.0)).sum()
}

/// Linear-in-dB interpolation through `(delay, gain)` points sorted by delay;
/// `None` outside the delay span.
fn envelope_at(pts: &[(f64, f64)], d: f64) -> Option<f64> {
    if d < pts[0].0 || d > pts[pts.len() - 1].0 {
        return None;
    }
    for w in pts.windows(2) {
        let ((d0, g0), (d1, g1)) = (w[0], w[1]);
        if d >= d0 && d <= d1 {
            if d == d0 {
                return Some(g0);
            }
            if d == d1 {
                return Some(g1);
            }
            return Some(g0 + (g1 - g0) * (d - d0) / (d1 - d0));
        }
    }
    Some(pts[0].1)
}

/// Brute-force applicability: the candidate's envelope stays within
/// `tol_db` of the designed envelope on a 0.25 ns grid plus every anchor, the
/// candidate ends no later than the designed profile and has no more taps.
pub fn oracle_applicable(candidate: &[(f64, f64)], designed: &[(f64, f64)], tol_db: f64) -> bool {
    if candidate.len() > designed.len() {
        return false;
    }
    let (c_lo, c_hi) = (candidate[0].0, candidate[candidate.len() - 1].0);
    if c_hi > designed[designed.len() - 1].0 {
        return false;
    }
    let mut probes: Vec<f64> = candidate.iter().chain(designed).map(|p| p.0).filter(|d| *d >= c_lo && *d <= c_hi).collect();
    let steps = ((c_hi - c_lo) * 4.0).ceil() as usize;
    probes.extend((0..=steps).map(|i| (c_lo + i as f64 * 0.25).min(c_hi)));
    probes.iter().all(|&d| {
        let c = envelope_at(candidate, d).expect("inside candidate span");
        match envelope_at(designed, d) {
            Some(v) => c <= v + tol_db + 1e-9,
            None => false,
        }
    })
}

/// One result line on the real stdout, visible even when the harness
/// captures test output.
pub fn report(criterion: &str, pass: bool, detail: &str) {
    let line = format!("{} {criterion}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}
