//! Acceptance criteria. Each test prints exactly one `PASS`/`FAIL` line and
//! then asserts the same outcome.

mod common;

use std::f64::consts::PI;

use chanest::dataset::{generate_dataset, read_dataset, DatasetRequest, Split};
use chanest::design::{autocorrelation_matrix, eigen_compare, eigen_spectrum, is_applicable, CorrelationMode};
use chanest::eval::{ds_sweep, mse_vs_snr, EvalConfig, Estimator};
use chanest::fading::generate_realization;
use chanest::ofdm::{DmrsPattern, FrameConfig};
use chanest::profiles::{builtin_profile, scale_cdl, BuiltinProfile, CdlProfile, ChannelSpec, PowerDelayProfile};
use chanest::seed;
use chanest::sim::Range;
use common::{bessel_j0, linear_power_sum, oracle_applicable, report};
use nalgebra::DMatrix;
use num_complex::Complex64;

const DESIGNED_DELAYS_NS: [f64; 10] = [0.0, 30.0, 200.0, 300.0, 500.0, 1500.0, 2500.0, 5000.0, 7000.0, 9000.0];
const DESIGNED_GAINS_DB: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, -1.0, -2.0, -4.0];

fn test_channels() -> Vec<PowerDelayProfile> {
    BuiltinProfile::TEST_CHANNELS.iter().map(|b| b.profile()).collect()
}

#[test]
fn doppler_fidelity() {
    let fd = 97.0;
    let dt = 1e-4;
    let lags = 101; // 0 ..= 10 ms
    let origins: Vec<f64> = (0..20).map(|i| 0.137 * i as f64).collect();
    let times: Vec<f64> = origins
        .iter()
        .flat_map(|&o| (0..lags).map(move |k| o + k as f64 * dt))
        .collect();
    let spec = ChannelSpec::new(builtin_profile("flat").unwrap(), fd);
    let realizations = 500;
    let mut acc = vec![Complex64::new(0.0, 0.0); lags];
    for r in 0..realizations {
        let real = generate_realization(&spec, seed::derive(101, r), &times).unwrap();
        for o in 0..origins.len() {
            let g0 = real.tap_gains[(0, o * lags)];
            for k in 0..lags {
                acc[k] += real.tap_gains[(0, o * lags + k)] * g0.conj();
            }
        }
    }
    let norm = (realizations as usize * origins.len()) as f64;
    let max_err = (0..lags)
        .map(|k| (acc[k] / norm - bessel_j0(2.0 * PI * fd * k as f64 * dt)).norm())
        .fold(0.0f64, f64::max);
    let pass = max_err < 0.05;
    report("Doppler fidelity", pass, &format!("max |R(tau) - J0| = {max_err:.4} over [0, 10 ms] (limit 0.05)"));
    assert!(pass);
}

#[test]
fn wssus_correlation_epa() {
    let frame = FrameConfig::default();
    let epa = builtin_profile("epa").unwrap();
    let emp = autocorrelation_matrix(&epa, &frame, CorrelationMode::Empirical { n: 10_000, seed: 202 }).unwrap();
    let n_f = frame.n_subcarriers;
    let analytic = DMatrix::from_fn(n_f, n_f, |k, kp| {
        epa.taps()
            .iter()
            .map(|t| {
                let phase = -2.0 * PI * frame.subcarrier_spacing_hz * (k as f64 - kp as f64) * t.delay_ns * 1e-9;
                Complex64::from_polar(10f64.powf(t.gain_db / 10.0), phase)
            })
            .sum::<Complex64>()
    });
    let rel = (&emp - &analytic).norm() / analytic.norm();
    let pass = rel < 0.05;
    report("WSSUS correlation (EPA)", pass, &format!("relative Frobenius error {rel:.4} with 10^4 realizations (limit 0.05)"));
    assert!(pass);
}

#[test]
fn cdl_scaling_exact() {
    let mut mismatches = 0;
    let mut checked = 0;
    for cdl in CdlProfile::all() {
        for ds in [20.0, 30.0, 1148.0, 30000.0] {
            let mut expected: Vec<f64> = cdl.normalized_delays.iter().map(|d| d * ds).collect();
            expected.sort_by(f64::total_cmp);
            let got = scale_cdl(&cdl, ds).unwrap().delays_ns();
            checked += expected.len();
            if got.len() != expected.len() || got.iter().zip(&expected).any(|(a, b)| a.to_bits() != b.to_bits()) {
                mismatches += 1;
            }
        }
    }
    let pass = mismatches == 0;
    report("CDL delay scaling", pass, &format!("{checked} delays over CDL-A/B/C x 4 spreads, {mismatches} inexact sets"));
    assert!(pass);
}

#[test]
fn estimator_dominance() {
    let cfg = EvalConfig::default();
    let channels: Vec<PowerDelayProfile> = ["flat", "epa", "etu", "dc2"].iter().map(|n| builtin_profile(n).unwrap()).collect();
    let snrs: Vec<f64> = (0..=6).map(|i| 5.0 * i as f64).collect();
    let ls = mse_vs_snr(&Estimator::Ls, &channels, &snrs, 500, 303, &cfg).unwrap();
    let mmse = mse_vs_snr(&Estimator::MmseMatched, &channels, &snrs, 500, 303, &cfg).unwrap();
    let violations: Vec<String> = ls
        .iter()
        .zip(&mmse)
        .filter(|(l, m)| m.mse > l.mse)
        .map(|(l, m)| format!("{}@{}dB ({:.5} > {:.5})", l.channel, l.snr_db, m.mse, l.mse))
        .collect();
    let pass = violations.is_empty();
    report(
        "Estimator dominance",
        pass,
        &format!("{} cells, {} violations {:?}", ls.len(), violations.len(), violations),
    );
    assert!(pass);
}

#[test]
fn applicability_catalog() {
    let all: Vec<(BuiltinProfile, PowerDelayProfile)> = BuiltinProfile::ALL.iter().map(|b| (*b, b.profile())).collect();
    let pairs = |p: &PowerDelayProfile| -> Vec<(f64, f64)> { p.taps().iter().map(|t| (t.delay_ns, t.gain_db)).collect() };

    // Library and brute-force predicate agree on the whole catalog.
    let mut disagreements = Vec::new();
    for (bd, d) in &all {
        for (bc, c) in &all {
            let lib = is_applicable(c, d, 1.0).applicable;
            if lib != oracle_applicable(&pairs(c), &pairs(d), 1.0) {
                disagreements.push(format!("{bc}->{bd}"));
            }
        }
    }

    // Ablation catalog: row = designed (training) profile, column = candidate.
    use BuiltinProfile::*;
    let catalog = [Flat, Epa, Etu, Dc3, Designed];
    let expected = [
        [true, false, false, false, false],
        [true, true, false, false, false],
        [true, true, true, false, false],
        [true, true, false, true, false],
        [true, true, true, true, true],
    ];
    let mut wrong = Vec::new();
    for (i, d) in catalog.iter().enumerate() {
        for (j, c) in catalog.iter().enumerate() {
            if is_applicable(&c.profile(), &d.profile(), 1.0).applicable != expected[i][j] {
                wrong.push(format!("{c}->{d}"));
            }
        }
    }
    let designed = Designed.profile();
    let designed_misses: Vec<String> = BuiltinProfile::TEST_CHANNELS
        .iter()
        .filter(|c| !is_applicable(&c.profile(), &designed, 1.0).applicable)
        .map(|c| c.to_string())
        .collect();

    let pass = disagreements.is_empty() && wrong.is_empty() && designed_misses.is_empty();
    report(
        "Applicability catalog",
        pass,
        &format!(
            "oracle disagreements {disagreements:?}, ablation-matrix mismatches {wrong:?}, test channels not covered by Designed {designed_misses:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn eigen_analysis() {
    let frame = FrameConfig::default();
    let spectrum = |p: &PowerDelayProfile| {
        eigen_spectrum(&autocorrelation_matrix(p, &frame, CorrelationMode::Analytic).unwrap()).unwrap()
    };
    let designed = spectrum(&builtin_profile("designed").unwrap());
    let expected_trace = frame.n_subcarriers as f64 * linear_power_sum(&DESIGNED_GAINS_DB);
    let trace_err = (designed.trace() - expected_trace).abs() / expected_trace;
    assert_eq!(builtin_profile("designed").unwrap().delays_ns(), DESIGNED_DELAYS_NS);

    let mut rank_fail = Vec::new();
    let mut elem_fail = Vec::new();
    let mut reported = Vec::new();
    for b in BuiltinProfile::TEST_CHANNELS {
        let cmp = eigen_compare(&designed, &spectrum(&b.profile()), 8, 0.01).unwrap();
        if !cmp.rank_dominates {
            rank_fail.push(b.to_string());
        }
        match b {
            BuiltinProfile::Etu | BuiltinProfile::Dc2 | BuiltinProfile::Dc3 => {
                reported.push(format!("{b}={}", if cmp.elementwise_dominates() { "dominated" } else { "not dominated" }));
            }
            _ if !cmp.elementwise_dominates() => elem_fail.push(b.to_string()),
            _ => {}
        }
    }
    let pass = trace_err < 1e-3 && rank_fail.is_empty() && elem_fail.is_empty();
    report(
        "Eigen analysis",
        pass,
        &format!(
            "trace {:.3} vs {:.3} (rel err {trace_err:.2e}); rank failures {rank_fail:?}; element-wise failures {elem_fail:?}; reported only: {}",
            designed.trace(),
            expected_trace,
            reported.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn mmse_mismatch_robustness() {
    let cfg = EvalConfig::default();
    let designed = builtin_profile("designed").unwrap();
    let applicable: Vec<PowerDelayProfile> = test_channels()
        .into_iter()
        .filter(|c| is_applicable(c, &designed, 1.0).applicable)
        .collect();
    let n = 500;
    let matched = mse_vs_snr(&Estimator::MmseMatched, &applicable, &[15.0], n, 404, &cfg).unwrap();
    let robust = mse_vs_snr(&Estimator::MmseStats(designed.clone()), &applicable, &[15.0], n, 404, &cfg).unwrap();
    let limit = 10f64.powf(0.3);
    let mut over = Vec::new();
    let mut detail = Vec::new();
    for (m, r) in matched.iter().zip(&robust) {
        let db = 10.0 * (r.mse / m.mse).log10();
        detail.push(format!("{} {db:.2} dB", m.channel));
        if r.mse / m.mse > limit {
            over.push(m.channel.clone());
        }
    }

    let etu = [builtin_profile("etu").unwrap()];
    let etu_matched = mse_vs_snr(&Estimator::MmseMatched, &etu, &[15.0], n, 404, &cfg).unwrap()[0].mse;
    let etu_epa = mse_vs_snr(&Estimator::MmseStats(builtin_profile("epa").unwrap()), &etu, &[15.0], n, 404, &cfg).unwrap()[0].mse;
    let etu_designed = mse_vs_snr(&Estimator::MmseStats(designed), &etu, &[15.0], n, 404, &cfg).unwrap()[0].mse;
    let (deg_epa, deg_designed) = (etu_epa / etu_matched, etu_designed / etu_matched);

    let pass = over.is_empty() && deg_epa > deg_designed;
    report(
        "MMSE mismatch robustness",
        pass,
        &format!(
            "Designed-stats penalty at 15 dB: [{}]; channels beyond 3 dB {over:?}; on ETU EPA-stats factor {deg_epa:.1} vs Designed-stats factor {deg_designed:.2}",
            detail.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn dataset_integrity() {
    let req = DatasetRequest {
        channel: builtin_profile("designed").unwrap(),
        normalize_power: false,
        pattern: DmrsPattern::default(),
        frame: FrameConfig::default(),
        count: 1000,
        snr_range_db: Some(Range::new(5.0, 25.0).unwrap()),
        doppler_range_hz: Range::new(0.0, 97.0).unwrap(),
        base_seed: 505,
        split: Split::default(),
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_dataset(&req, a.path()).unwrap();
    rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| generate_dataset(&req, b.path()))
        .unwrap();

    let ds = read_dataset(a.path()).unwrap();
    let samples: Vec<_> = ds.samples().collect::<chanest::Result<_>>().unwrap();
    let round_trip = samples.len() == req.count && samples.iter().enumerate().all(|(i, s)| *s == req.sample(i).unwrap());

    let label_power: f64 = samples
        .iter()
        .map(|s| s.label.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / (s.label.len() / 2) as f64)
        .sum::<f64>()
        / samples.len() as f64;
    let pdp_power = linear_power_sum(&DESIGNED_GAINS_DB);
    let power_err = (label_power - pdp_power).abs() / pdp_power;

    let identical = ["train.bin", "val.bin", "manifest.json"]
        .iter()
        .all(|f| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap());

    let pass = round_trip && power_err < 0.03 && identical;
    report(
        "Dataset integrity",
        pass,
        &format!(
            "round trip {round_trip} on {} samples; label power {label_power:.4} vs PDP {pdp_power:.4} (rel err {power_err:.4}, limit 0.03); regeneration byte-identical {identical}",
            samples.len()
        ),
    );
    assert!(pass);
}

#[test]
fn ds_sweep_shape() {
    let cfg = EvalConfig::default();
    let cdl_b = CdlProfile::named("CDL-B").unwrap();
    let grid = [100.0, 9000.0, 12000.0, 15000.0, 20000.0, 25000.0, 30000.0];
    let pts = ds_sweep(&Estimator::Ls, &[cdl_b], &grid, 20.0, 500, 606, &cfg).unwrap();
    let mse: Vec<f64> = pts.iter().map(|p| p.mse).collect();
    let endpoint = mse[6] > mse[0];
    let breaks: Vec<String> = (1..6)
        .filter(|&i| mse[i + 1] <= mse[i])
        .map(|i| format!("{}->{}", grid[i], grid[i + 1]))
        .collect();
    let pass = endpoint && breaks.is_empty();
    let curve: Vec<String> = grid.iter().zip(&mse).map(|(d, m)| format!("{d}:{m:.4}")).collect();
    report(
        "DS sweep shape (CDL-B, LS, 20 dB)",
        pass,
        &format!("MSE by DS [{}]; 30000 > 100: {endpoint}; non-increasing steps at DS >= 9000: {breaks:?}", curve.join(", ")),
    );
    assert!(pass);
}
