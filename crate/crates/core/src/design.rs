//! Training-channel design tools.
//!
//! A designed profile covers a candidate channel when the candidate's
//! piecewise-linear PDP envelope never rises above the designed one over the
//! candidate's delay span, the candidate's last delay does not exceed the
//! designed last delay, and the candidate has no more taps. The module also
//! computes the frequency auto-correlation eigen-spectrum used to compare the
//! rank and strength of channels, and constructs a covering profile for a set
//! of channels.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::frequency_correlation;
use crate::fading::{freq_response, generate_realization};
use crate::ofdm::FrameConfig;
use crate::profiles::{db_to_linear, linear_to_db, ChannelSpec, PowerDelayProfile, Tap};
use crate::seed;

/// Interpolation domain for envelope comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeScale {
    /// Linear in dB between anchors.
    #[default]
    Db,
    /// Linear in power between anchors.
    Linear,
}

/// Piecewise-linear function through a profile's (delay, gain) anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpEnvelope {
    anchors: Vec<Tap>,
    scale: EnvelopeScale,
}

pub fn pdp_envelope(pdp: &PowerDelayProfile) -> PdpEnvelope {
    PdpEnvelope::with_scale(pdp, EnvelopeScale::Db)
}

impl PdpEnvelope {
    pub fn with_scale(pdp: &PowerDelayProfile, scale: EnvelopeScale) -> Self {
        Self {
            anchors: pdp.taps().to_vec(),
            scale,
        }
    }

    pub fn anchors(&self) -> &[Tap] {
        &self.anchors
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.anchors[0].delay_ns, self.anchors[self.anchors.len() - 1].delay_ns)
    }

    pub fn contains(&self, delay_ns: f64) -> bool {
        let (lo, hi) = self.domain();
        delay_ns >= lo && delay_ns <= hi
    }

    /// Envelope value in dB at `delay_ns`.
    pub fn eval(&self, delay_ns: f64) -> Result<f64> {
        if !self.contains(delay_ns) {
            let (lo, hi) = self.domain();
            return Err(Error::InvalidArgument(format!(
                "{delay_ns} ns outside envelope domain [{lo}, {hi}] ns"
            )));
        }
        let hi = self.anchors.partition_point(|t| t.delay_ns < delay_ns);
        if self.anchors[hi].delay_ns == delay_ns {
            return Ok(self.anchors[hi].gain_db);
        }
        let (a, b) = (self.anchors[hi - 1], self.anchors[hi]);
        let w = (delay_ns - a.delay_ns) / (b.delay_ns - a.delay_ns);
        Ok(match self.scale {
            EnvelopeScale::Db => a.gain_db + w * (b.gain_db - a.gain_db),
            EnvelopeScale::Linear => {
                linear_to_db(db_to_linear(a.gain_db) * (1.0 - w) + db_to_linear(b.gain_db) * w)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Envelope,
    MaxDelay,
    TapCount,
}

/// One failed condition. `margin` is the worst excess: dB above the designed
/// envelope (null when the candidate lies outside the designed delay domain),
/// ns beyond the designed last delay, or surplus taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub delay_ns: f64,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicabilityReport {
    pub candidate: String,
    pub designed: String,
    pub tol_db: f64,
    pub applicable: bool,
    pub violations: Vec<Violation>,
}

/// Delays at which two piecewise-linear envelopes must be compared: a 1 ns
/// grid over `[lo, hi]` plus every anchor of either profile inside it.
fn comparison_grid(a: &PdpEnvelope, b: &PdpEnvelope, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::new();
    let steps = (hi - lo).floor() as usize;
    pts.extend((0..=steps).map(|i| lo + i as f64));
    pts.push(hi);
    pts.extend(
        a.anchors
            .iter()
            .chain(&b.anchors)
            .map(|t| t.delay_ns)
            .filter(|d| *d >= lo && *d <= hi),
    );
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Checks whether `candidate` is covered by `designed` with `tol_db` slack.
pub fn is_applicable(candidate: &PowerDelayProfile, designed: &PowerDelayProfile, tol_db: f64) -> ApplicabilityReport {
    is_applicable_with(candidate, designed, tol_db, EnvelopeScale::Db)
}

pub fn is_applicable_with(
    candidate: &PowerDelayProfile,
    designed: &PowerDelayProfile,
    tol_db: f64,
    scale: EnvelopeScale,
) -> ApplicabilityReport {
    const EPS: f64 = 1e-9;
    let cand = PdpEnvelope::with_scale(candidate, scale);
    let des = PdpEnvelope::with_scale(designed, scale);
    let (lo, hi) = cand.domain();
    let mut violations = Vec::new();

    let mut worst: Option<(f64, Option<f64>)> = None;
    for d in comparison_grid(&cand, &des, lo, hi) {
        let c = cand.eval(d).expect("grid inside candidate domain");
        let margin = match des.eval(d) {
            Ok(v) => {
                let m = c - v;
                if m <= tol_db + EPS {
                    continue;
                }
                Some(m)
            }
            Err(_) => None,
        };
        let worse = match (&worst, margin) {
            (None, _) => true,
            (Some((_, Some(w))), Some(m)) => m > *w,
            (Some((_, Some(_))), None) => true,
            (Some((_, None)), _) => false,
        };
        if worse {
            worst = Some((d, margin));
        }
    }
    if let Some((delay_ns, margin)) = worst {
        violations.push(Violation {
            kind: ViolationKind::Envelope,
            delay_ns,
            margin,
        });
    }
    if candidate.max_delay_ns() > designed.max_delay_ns() {
        violations.push(Violation {
            kind: ViolationKind::MaxDelay,
            delay_ns: candidate.max_delay_ns(),
            margin: Some(candidate.max_delay_ns() - designed.max_delay_ns()),
        });
    }
    if candidate.len() > designed.len() {
        violations.push(Violation {
            kind: ViolationKind::TapCount,
            delay_ns: candidate.max_delay_ns(),
            margin: Some((candidate.len() - designed.len()) as f64),
        });
    }
    ApplicabilityReport {
        candidate: candidate.name().to_string(),
        designed: designed.name().to_string(),
        tol_db,
        applicable: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationMode {
    Analytic,
    /// Average of `H(:,0) H(:,0)^H` over `n` static realizations.
    Empirical { n: usize, seed: u64 },
}

/// Frequency auto-correlation `E{H H^H}` over the `N_f` subcarriers.
pub fn autocorrelation_matrix(pdp: &PowerDelayProfile, frame: &FrameConfig, mode: CorrelationMode) -> Result<DMatrix<Complex64>> {
    let n_f = frame.n_subcarriers;
    match mode {
        CorrelationMode::Analytic => {
            let idx: Vec<usize> = (0..n_f).collect();
            Ok(frequency_correlation(pdp, frame.subcarrier_spacing_hz, &idx, &idx))
        }
        CorrelationMode::Empirical { n, seed: base } => {
            if n == 0 {
                return Err(Error::InvalidArgument("empirical mode needs n >= 1".into()));
            }
            let spec = ChannelSpec::new(pdp.clone(), 0.0);
            let single = FrameConfig {
                n_symbols: 1,
                ..frame.clone()
            };
            let mut acc = DMatrix::<Complex64>::zeros(n_f, n_f);
            for i in 0..n {
                let r = generate_realization(&spec, seed::derive(base, i as u64), &[0.0])?;
                let h = freq_response(&r, &single)?;
                acc += &h * h.adjoint();
            }
            Ok(acc / Complex64::new(n as f64, 0.0))
        }
    }
}

/// Descending eigenvalues of a Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<f64>,
    pub dimension: usize,
}

impl EigenSpectrum {
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Number of eigenvalues above `frac * trace`.
    pub fn rank_above(&self, frac: f64) -> usize {
        let t = frac * self.trace();
        self.eigenvalues.iter().filter(|&&v| v > t).count()
    }
}

pub fn eigen_spectrum(r: &DMatrix<Complex64>) -> Result<EigenSpectrum> {
    if !r.is_square() {
        return Err(Error::Dimension(format!("{:?} is not square", r.shape())));
    }
    let norm = r.norm();
    let asym = if norm > 0.0 { (r - r.adjoint()).norm() / norm } else { 0.0 };
    if asym > 1e-9 {
        return Err(Error::NotHermitian(asym));
    }
    let eig = r.clone().symmetric_eigen();
    let lambda = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| Complex64::new(v, 0.0)));
    let recon = &eig.eigenvectors * lambda * eig.eigenvectors.adjoint();
    let residual = if norm > 0.0 { (r - recon).norm() / norm } else { 0.0 };
    if !(residual < 1e-8) {
        return Err(Error::EigenResidual(residual));
    }
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    Ok(EigenSpectrum {
        eigenvalues,
        dimension: r.nrows(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenComparison {
    /// `designed[i] >= candidate[i]` for the first `count` indices.
    pub elementwise: Vec<bool>,
    pub designed_rank: usize,
    pub candidate_rank: usize,
    pub rank_dominates: bool,
}

impl EigenComparison {
    pub fn elementwise_dominates(&self) -> bool {
        self.elementwise.iter().all(|&b| b)
    }
}

pub fn eigen_compare(designed: &EigenSpectrum, candidate: &EigenSpectrum, count: usize, threshold_frac: f64) -> Result<EigenComparison> {
    if count > designed.eigenvalues.len() || count > candidate.eigenvalues.len() {
        return Err(Error::InvalidArgument(format!("count {count} exceeds spectrum length")));
    }
    let elementwise = (0..count)
        .map(|i| designed.eigenvalues[i] >= candidate.eigenvalues[i])
        .collect();
    let designed_rank = designed.rank_above(threshold_frac);
    let candidate_rank = candidate.rank_above(threshold_frac);
    Ok(EigenComparison {
        elementwise,
        designed_rank,
        candidate_rank,
        rank_dominates: designed_rank >= candidate_rank,
    })
}

/// Builds a profile covering every input: the pointwise maximum (in dB) of the
/// input envelopes plus `margin_db`, extended by `extra_delay_ns` past the
/// largest input delay at the last envelope value.
pub fn suggest_envelope(applicables: &[PowerDelayProfile], margin_db: f64, extra_delay_ns: f64) -> Result<PowerDelayProfile> {
    if applicables.is_empty() {
        return Err(Error::InvalidArgument("no profiles to cover".into()));
    }
    if !(margin_db >= 0.0 && extra_delay_ns >= 0.0) {
        return Err(Error::InvalidArgument("margin and extra delay must be non-negative".into()));
    }
    let envs: Vec<PdpEnvelope> = applicables.iter().map(pdp_envelope).collect();

    // The upper envelope is piecewise linear with breakpoints at anchors and
    // at pairwise segment crossings.
    let mut pts: Vec<f64> = envs.iter().flat_map(|e| e.anchors.iter().map(|t| t.delay_ns)).collect();
    for (i, a) in envs.iter().enumerate() {
        for b in &envs[i + 1..] {
            for sa in a.anchors.windows(2) {
                for sb in b.anchors.windows(2) {
                    if let Some(x) = segment_crossing(sa, sb) {
                        pts.push(x);
                    }
                }
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut taps: Vec<Tap> = pts
        .iter()
        .map(|&d| {
            let g = envs
                .iter()
                .filter_map(|e| e.eval(d).ok())
                .fold(f64::NEG_INFINITY, f64::max);
            (d, g)
        })
        .filter(|(_, g)| g.is_finite())
        .map(|(delay_ns, g)| Tap {
            delay_ns,
            gain_db: g + margin_db,
        })
        .collect();

    let max_in = applicables.iter().map(|p| p.len()).max().unwrap_or(1);
    let last = *taps.last().expect("non-empty");
    if extra_delay_ns > 0.0 {
        taps.push(Tap {
            delay_ns: last.delay_ns + extra_delay_ns,
            gain_db: last.gain_db,
        });
    }
    // Pad the tail so the tap count covers every input.
    while taps.len() < max_in {
        let n = taps.len();
        if n < 2 {
            let t = taps[0];
            taps.push(Tap {
                delay_ns: t.delay_ns + 1.0,
                gain_db: t.gain_db,
            });
            continue;
        }
        let (a, b) = (taps[n - 2], taps[n - 1]);
        taps.insert(
            n - 1,
            Tap {
                delay_ns: 0.5 * (a.delay_ns + b.delay_ns),
                gain_db: 0.5 * (a.gain_db + b.gain_db),
            },
        );
    }
    PowerDelayProfile::new("suggested", taps)
}

/// Interior crossing delay of two envelope segments, if any.
fn segment_crossing(a: &[Tap], b: &[Tap]) -> Option<f64> {
    let lo = a[0].delay_ns.max(b[0].delay_ns);
    let hi = a[1].delay_ns.min(b[1].delay_ns);
    if hi <= lo {
        return None;
    }
    let line = |s: &[Tap], x: f64| {
        s[0].gain_db + (x - s[0].delay_ns) * (s[1].gain_db - s[0].gain_db) / (s[1].delay_ns - s[0].delay_ns)
    };
    let d_lo = line(a, lo) - line(b, lo);
    let d_hi = line(a, hi) - line(b, hi);
    if d_lo * d_hi < 0.0 {
        Some(lo + (hi - lo) * d_lo / (d_lo - d_hi))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{builtin_profile, BuiltinProfile};

    fn p(name: &str) -> PowerDelayProfile {
        builtin_profile(name).unwrap()
    }

    #[test]
    fn envelope_values() {
        let e = pdp_envelope(&p("Designed"));
        assert!((e.eval(2000.0).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(e.eval(7000.0).unwrap(), -2.0);
        assert!(e.eval(9001.0).is_err());

        let flat = pdp_envelope(&p("Flat"));
        assert_eq!(flat.domain(), (0.0, 0.0));
        assert_eq!(flat.eval(0.0).unwrap(), 0.0);
        assert!(flat.eval(1.0).is_err());
    }

    #[test]
    fn linear_scale_differs_between_anchors() {
        let pdp = PowerDelayProfile::from_pairs("x", &[0.0, 100.0], &[0.0, -20.0]).unwrap();
        let db = PdpEnvelope::with_scale(&pdp, EnvelopeScale::Db).eval(50.0).unwrap();
        let lin = PdpEnvelope::with_scale(&pdp, EnvelopeScale::Linear).eval(50.0).unwrap();
        assert!((db + 10.0).abs() < 1e-12);
        assert!((lin - linear_to_db(0.505)).abs() < 1e-12);
    }

    #[test]
    fn predicate_examples() {
        assert!(is_applicable(&p("EPA"), &p("Designed"), 0.0).applicable);

        let r = is_applicable(&p("Designed"), &p("ETU"), 0.0);
        assert!(!r.applicable);
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::MaxDelay && v.margin == Some(4000.0)));

        assert!(is_applicable(&p("Flat"), &p("EPA"), 0.0).applicable);
        assert!(!is_applicable(&p("EPA"), &p("Flat"), 0.0).applicable);
    }

    #[test]
    fn worst_envelope_margin_reported() {
        // ETU over EPA: EPA's 0 dB first tap sits 1 dB above ETU's -1 dB.
        let r = is_applicable(&p("EPA"), &p("ETU"), 0.0);
        let env: Vec<_> = r.violations.iter().filter(|v| v.kind == ViolationKind::Envelope).collect();
        assert_eq!(env.len(), 1);
        assert_eq!(env[0].delay_ns, 0.0);
        assert!((env[0].margin.unwrap() - 1.0).abs() < 1e-12);
        assert!(is_applicable(&p("EPA"), &p("ETU"), 1.0).applicable);
    }

    #[test]
    fn outside_domain_is_envelope_violation() {
        let r = is_applicable(&p("Flat"), &p("TwoPath"), 10.0);
        assert!(!r.applicable);
        assert_eq!(r.violations[0].kind, ViolationKind::Envelope);
        assert_eq!(r.violations[0].margin, None);
    }

    #[test]
    fn reflexive_over_catalog() {
        for b in BuiltinProfile::ALL {
            let x = b.profile();
            assert!(is_applicable(&x, &x, 0.0).applicable, "{b}");
        }
    }

    #[test]
    fn flat_spectrum_is_rank_one() {
        let r = autocorrelation_matrix(&p("Flat"), &FrameConfig::default(), CorrelationMode::Analytic).unwrap();
        assert!(r.iter().all(|v| (*v - 1.0).norm() < 1e-12));
        assert_eq!((&r - r.adjoint()).norm(), 0.0);
        let s = eigen_spectrum(&r).unwrap();
        assert!((s.eigenvalues[0] - 72.0).abs() < 1e-9);
        assert!(s.eigenvalues[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn identity_spectrum() {
        let s = eigen_spectrum(&DMatrix::<Complex64>::identity(5, 5)).unwrap();
        assert!(s.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = DMatrix::<Complex64>::identity(3, 3);
        m[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(matches!(eigen_spectrum(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn compare_identical() {
        let s = eigen_spectrum(&autocorrelation_matrix(&p("EVA"), &FrameConfig::default(), CorrelationMode::Analytic).unwrap()).unwrap();
        let c = eigen_compare(&s, &s, 8, 0.01).unwrap();
        assert!(c.elementwise_dominates());
        assert_eq!(c.designed_rank, c.candidate_rank);
        assert!(eigen_compare(&s, &s, 100, 0.01).is_err());
    }

    #[test]
    fn suggest_single_input_is_identity() {
        let epa = p("EPA");
        let s = suggest_envelope(std::slice::from_ref(&epa), 0.0, 0.0).unwrap();
        assert_eq!(s.taps(), epa.taps());
        assert!(suggest_envelope(&[], 0.0, 0.0).is_err());
    }

    #[test]
    fn suggest_flat_and_two_path() {
        let ins = [p("Flat"), p("TwoPath")];
        let s = suggest_envelope(&ins, 0.0, 0.0).unwrap();
        assert_eq!(s.max_delay_ns(), 5000.0);
        for i in &ins {
            assert!(is_applicable(i, &s, 0.0).applicable, "{}", i.name());
        }
    }
}
