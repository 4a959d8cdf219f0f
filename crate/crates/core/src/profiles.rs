//! Power-delay profiles: the built-in catalog, CDL delay scaling, JSON loading
//! and the channel specification consumed by the fading engine.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multipath component: delay in nanoseconds, average power in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_ns: f64,
    pub gain_db: f64,
}

impl Tap {
    pub fn linear_power(&self) -> f64 {
        db_to_linear(self.gain_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// Ordered tap list. Delays are strictly increasing, non-negative and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PdpFile", into = "PdpFile")]
pub struct PowerDelayProfile {
    name: String,
    taps: Vec<Tap>,
}

/// On-disk JSON schema: `{"name": ..., "delays_ns": [...], "gains_db": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdpFile {
    pub name: String,
    pub delays_ns: Vec<f64>,
    pub gains_db: Vec<f64>,
}

impl TryFrom<PdpFile> for PowerDelayProfile {
    type Error = Error;

    fn try_from(f: PdpFile) -> Result<Self> {
        if f.delays_ns.len() != f.gains_db.len() {
            return Err(Error::InvalidProfile(format!(
                "{} delays but {} gains",
                f.delays_ns.len(),
                f.gains_db.len()
            )));
        }
        let taps = f
            .delays_ns
            .iter()
            .zip(&f.gains_db)
            .map(|(&delay_ns, &gain_db)| Tap { delay_ns, gain_db })
            .collect();
        PowerDelayProfile::new(f.name, taps)
    }
}

impl From<PowerDelayProfile> for PdpFile {
    fn from(p: PowerDelayProfile) -> Self {
        PdpFile {
            delays_ns: p.delays_ns(),
            gains_db: p.gains_db(),
            name: p.name,
        }
    }
}

impl PowerDelayProfile {
    pub fn new(name: impl Into<String>, taps: Vec<Tap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidProfile("at least one tap required".into()));
        }
        for t in &taps {
            if !t.delay_ns.is_finite() || !t.gain_db.is_finite() {
                return Err(Error::InvalidProfile("non-finite tap value".into()));
            }
        }
        if taps[0].delay_ns < 0.0 {
            return Err(Error::InvalidProfile(format!(
                "negative first delay {} ns",
                taps[0].delay_ns
            )));
        }
        if let Some(w) = taps.windows(2).find(|w| w[1].delay_ns <= w[0].delay_ns) {
            return Err(Error::InvalidProfile(format!(
                "delays not strictly increasing ({} ns then {} ns)",
                w[0].delay_ns, w[1].delay_ns
            )));
        }
        Ok(Self {
            name: name.into(),
            taps,
        })
    }

    pub fn from_pairs(name: impl Into<String>, delays_ns: &[f64], gains_db: &[f64]) -> Result<Self> {
        PdpFile {
            name: name.into(),
            delays_ns: delays_ns.to_vec(),
            gains_db: gains_db.to_vec(),
        }
        .try_into()
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn delays_ns(&self) -> Vec<f64> {
        self.taps.iter().map(|t| t.delay_ns).collect()
    }

    pub fn gains_db(&self) -> Vec<f64> {
        self.taps.iter().map(|t| t.gain_db).collect()
    }

    pub fn linear_powers(&self) -> Vec<f64> {
        self.taps.iter().map(Tap::linear_power).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(Tap::linear_power).sum()
    }

    pub fn first_delay_ns(&self) -> f64 {
        self.taps[0].delay_ns
    }

    pub fn max_delay_ns(&self) -> f64 {
        self.taps[self.taps.len() - 1].delay_ns
    }

    /// Root-mean-square delay spread in nanoseconds.
    pub fn rms_delay_spread_ns(&self) -> f64 {
        let p = self.total_power();
        let mean = self
            .taps
            .iter()
            .map(|t| t.linear_power() * t.delay_ns)
            .sum::<f64>()
            / p;
        let second = self
            .taps
            .iter()
            .map(|t| t.linear_power() * (t.delay_ns - mean).powi(2))
            .sum::<f64>()
            / p;
        second.sqrt()
    }

    /// Rescales gains so the linear tap powers sum to one.
    pub fn normalize_power(&self) -> Self {
        let offset = linear_to_db(self.total_power());
        Self {
            name: self.name.clone(),
            taps: self
                .taps
                .iter()
                .map(|t| Tap {
                    delay_ns: t.delay_ns,
                    gain_db: t.gain_db - offset,
                })
                .collect(),
        }
    }
}

/// Built-in tap tables: the customized channels, the extended LTE models and
/// the designed training channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuiltinProfile {
    Flat,
    Dc1,
    Dc2,
    Dc3,
    TwoPath,
    Epa,
    Eva,
    Etu,
    Designed,
}

impl BuiltinProfile {
    pub const ALL: [BuiltinProfile; 9] = [
        Self::Flat,
        Self::Dc1,
        Self::Dc2,
        Self::Dc3,
        Self::TwoPath,
        Self::Epa,
        Self::Eva,
        Self::Etu,
        Self::Designed,
    ];

    /// The eight channels the designed profile is expected to cover.
    pub const TEST_CHANNELS: [BuiltinProfile; 8] = [
        Self::Flat,
        Self::Epa,
        Self::Eva,
        Self::Etu,
        Self::Dc1,
        Self::Dc2,
        Self::Dc3,
        Self::TwoPath,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Flat => "Flat",
            Self::Dc1 => "DC1",
            Self::Dc2 => "DC2",
            Self::Dc3 => "DC3",
            Self::TwoPath => "TwoPath",
            Self::Epa => "EPA",
            Self::Eva => "EVA",
            Self::Etu => "ETU",
            Self::Designed => "Designed",
        }
    }

    fn table(self) -> (&'static [f64], &'static [f64]) {
        match self {
            Self::Flat => (&[0.0], &[0.0]),
            Self::Dc1 => (
                &[0.0, 50.0, 100.0, 200.0, 400.0],
                &[0.0, -2.0, -4.0, -8.0, -16.0],
            ),
            Self::Dc2 => (
                &[0.0, 30.0, 200.0, 300.0, 500.0, 1500.0, 2500.0, 5000.0],
                &[-7.0, 0.0, 0.0, -1.0, -2.0, -1.0, -1.0, -5.5],
            ),
            Self::Dc3 => (
                &[0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0, 7000.0],
                &[0.0, -1.0, -1.0, -1.0, -1.0, -1.5, -1.5, -1.5, -3.0, -5.0],
            ),
            Self::TwoPath => (&[50.0, 5000.0], &[-3.0, -3.0]),
            Self::Epa => (
                &[0.0, 30.0, 70.0, 90.0, 110.0, 190.0, 410.0],
                &[0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8],
            ),
            Self::Eva => (
                &[0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0],
                &[0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9],
            ),
            Self::Etu => (
                &[0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0],
                &[-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0],
            ),
            Self::Designed => (
                &[0.0, 30.0, 200.0, 300.0, 500.0, 1500.0, 2500.0, 5000.0, 7000.0, 9000.0],
                &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, -1.0, -2.0, -4.0],
            ),
        }
    }

    pub fn profile(self) -> PowerDelayProfile {
        let (d, g) = self.table();
        PowerDelayProfile::from_pairs(self.label(), d, g).expect("built-in tables are valid")
    }

    fn valid_names() -> String {
        Self::ALL.iter().map(|p| p.label()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for BuiltinProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BuiltinProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.label().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::UnknownProfile {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// Looks up a built-in profile by name.
pub fn builtin_profile(name: &str) -> Result<PowerDelayProfile> {
    Ok(name.parse::<BuiltinProfile>()?.profile())
}

/// Non-line-of-sight clustered delay line profile with normalized delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdlProfile {
    pub name: String,
    pub normalized_delays: Vec<f64>,
    #[serde(rename = "cluster_powers_db")]
    pub cluster_powers: Vec<f64>,
}

#[derive(Deserialize)]
struct CdlTable {
    version: u32,
    profiles: Vec<CdlProfile>,
}

const CDL_TABLE_VERSION: u32 = 1;
static CDL_TABLE: OnceLock<Vec<CdlProfile>> = OnceLock::new();

fn cdl_table() -> &'static [CdlProfile] {
    CDL_TABLE.get_or_init(|| {
        let table: CdlTable = serde_json::from_str(include_str!("../data/cdl_nlos_v1.json"))
            .expect("embedded CDL table parses");
        assert_eq!(table.version, CDL_TABLE_VERSION);
        table.profiles
    })
}

impl CdlProfile {
    pub fn new(name: impl Into<String>, normalized_delays: Vec<f64>, cluster_powers: Vec<f64>) -> Result<Self> {
        let p = Self {
            name: name.into(),
            normalized_delays,
            cluster_powers,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.normalized_delays.is_empty() || self.normalized_delays.len() != self.cluster_powers.len() {
            return Err(Error::InvalidProfile(format!("CDL {}: malformed table", self.name)));
        }
        if self.normalized_delays[0] != 0.0 {
            return Err(Error::InvalidProfile(format!("CDL {}: first delay must be 0", self.name)));
        }
        if self.normalized_delays.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidProfile(format!("CDL {}: negative delay", self.name)));
        }
        Ok(())
    }

    /// `CDL-A`, `CDL-B` or `CDL-C` (case and punctuation insensitive).
    pub fn named(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase().replace(['-', '_', ' '], "");
        cdl_table()
            .iter()
            .find(|p| p.name.to_ascii_lowercase().replace('-', "") == key)
            .cloned()
            .ok_or_else(|| Error::UnknownProfile {
                name: name.to_string(),
                valid: cdl_table().iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join(", "),
            })
    }

    pub fn all() -> Vec<Self> {
        cdl_table().to_vec()
    }
}

/// Scales normalized CDL delays to a desired delay spread.
///
/// Every output delay is `normalized_delay * ds_desired_ns` with no further
/// rounding; clusters are emitted in ascending delay order.
pub fn scale_cdl(profile: &CdlProfile, ds_desired_ns: f64) -> Result<PowerDelayProfile> {
    if !(ds_desired_ns.is_finite() && ds_desired_ns > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "desired delay spread must be positive, got {ds_desired_ns}"
        )));
    }
    profile.validate()?;
    let mut taps: Vec<Tap> = profile
        .normalized_delays
        .iter()
        .zip(&profile.cluster_powers)
        .map(|(&d, &g)| Tap {
            delay_ns: d * ds_desired_ns,
            gain_db: g,
        })
        .collect();
    taps.sort_by(|a, b| a.delay_ns.total_cmp(&b.delay_ns));
    PowerDelayProfile::new(format!("{}@{}ns", profile.name, ds_desired_ns), taps)
}

/// Resolves a channel selector: a built-in name, `CDL-x@<ds_ns>`, or a path to
/// a JSON profile file.
pub fn resolve_selector(selector: &str) -> Result<PowerDelayProfile> {
    if let Ok(b) = selector.parse::<BuiltinProfile>() {
        return Ok(b.profile());
    }
    if let Some((name, ds)) = selector.split_once('@') {
        let ds: f64 = ds
            .trim_end_matches("ns")
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad delay spread in `{selector}`")))?;
        return scale_cdl(&CdlProfile::named(name)?, ds);
    }
    let path = Path::new(selector);
    if path.exists() {
        return PowerDelayProfile::load_json(path);
    }
    Err(Error::UnknownProfile {
        name: selector.to_string(),
        valid: format!("{}, CDL-A@<ns>, CDL-B@<ns>, CDL-C@<ns>, or a JSON file", BuiltinProfile::valid_names()),
    })
}

/// Profile plus Doppler: everything the fading engine needs for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub pdp: PowerDelayProfile,
    pub max_doppler_hz: f64,
    #[serde(default)]
    pub normalize_power: bool,
}

impl ChannelSpec {
    pub fn new(pdp: PowerDelayProfile, max_doppler_hz: f64) -> Self {
        Self {
            pdp,
            max_doppler_hz,
            normalize_power: false,
        }
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize_power = on;
        self
    }

    /// The profile actually simulated (normalized when the flag is set).
    pub fn effective_pdp(&self) -> PowerDelayProfile {
        if self.normalize_power {
            self.pdp.normalize_power()
        } else {
            self.pdp.clone()
        }
    }

    /// Checks `max_doppler <= 1 / (2 * symbol_duration)`.
    pub fn validate(&self, symbol_duration_s: f64) -> Result<()> {
        let limit = 1.0 / (2.0 * symbol_duration_s);
        if !(self.max_doppler_hz.is_finite() && self.max_doppler_hz >= 0.0) || self.max_doppler_hz > limit {
            return Err(Error::InvalidArgument(format!(
                "max Doppler {} Hz outside [0, {limit:.1}] Hz",
                self.max_doppler_hz
            )));
        }
        Ok(())
    }
}
