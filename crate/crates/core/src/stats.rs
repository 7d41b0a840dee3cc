//! Corpus-level phone statistics and the clamp bounds derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::track::{to_canonical_json, F0Domain, FeatureKind, UtteranceTrack};

pub const STATS_EXTENSION: &str = ".stats.json";

pub const DEFAULT_MIN_DURATION: f64 = 0.3;
pub const DEFAULT_MAX_DURATION: f64 = 15.0;
pub const DEFAULT_F0_SIGMA_MULT: f64 = 3.0;
pub const DEFAULT_ENERGY_SIGMA_MULT: f64 = 1.5;
pub const DEFAULT_F0_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampConfig {
    pub f0_sigma_mult: f64,
    pub energy_sigma_mult: f64,
    pub f0_floor: f64,
}

impl Default for ClampConfig {
    fn default() -> Self {
        Self {
            f0_sigma_mult: DEFAULT_F0_SIGMA_MULT,
            energy_sigma_mult: DEFAULT_ENERGY_SIGMA_MULT,
            f0_floor: DEFAULT_F0_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub f0_domain: F0Domain,
    /// Voiced phones only.
    pub f0: FeatureStats,
    pub energy: FeatureStats,
    pub clamp: ClampConfig,
}

/// Closed interval `[lo, hi]` a feature value must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ClampBounds {
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no surviving tracks")]
    NoSurvivingTracks,
    #[error("tracks mix f0 domains ({first:?} and {other:?})")]
    MixedDomain { first: F0Domain, other: F0Domain },
    #[error("fewer than two contributing {feature} phones")]
    TooFewPhones { feature: FeatureKind },
    #[error("degenerate corpus: {feature} standard deviation is zero")]
    Degenerate { feature: FeatureKind },
    #[error("duration is range-scaled, not clamped by sigma")]
    DurationNotClamped,
    #[error("invalid stats: {0}")]
    Invalid(String),
    #[error("malformed stats document at {path}: {message}")]
    Malformed { path: String, message: String },
}

/// Utterance length filter applied before statistics are gathered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsOptions {
    pub min_duration: f64,
    pub max_duration: f64,
    pub clamp: ClampConfig,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self { min_duration: DEFAULT_MIN_DURATION, max_duration: DEFAULT_MAX_DURATION, clamp: ClampConfig::default() }
    }
}

/// Sample mean and (n-1) standard deviation.
///
/// Values are sorted before summation so the result does not depend on the
/// order in which tracks or phones were supplied.
fn sample_stats(mut values: Vec<f64>, feature: FeatureKind) -> Result<FeatureStats, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewPhones { feature });
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    sq.sort_by(f64::total_cmp);
    let std = (sq.iter().sum::<f64>() / (n - 1.0)).sqrt();
    if !(std > 0.0) {
        return Err(StatsError::Degenerate { feature });
    }
    Ok(FeatureStats { mean, std, count: values.len() })
}

pub fn compute_stats<'a, I>(tracks: I, options: &StatsOptions) -> Result<CorpusStats, StatsError>
where
    I: IntoIterator<Item = &'a UtteranceTrack>,
{
    let mut domain: Option<F0Domain> = None;
    let mut f0 = Vec::new();
    let mut energy = Vec::new();
    for track in tracks {
        let total = track.total_duration();
        if total < options.min_duration || total > options.max_duration {
            continue;
        }
        match domain {
            None => domain = Some(track.f0_domain),
            Some(first) if first != track.f0_domain => {
                return Err(StatsError::MixedDomain { first, other: track.f0_domain })
            }
            Some(_) => {}
        }
        for phone in &track.phones {
            if phone.voiced {
                f0.push(phone.f0);
            }
            energy.push(phone.energy);
        }
    }
    let f0_domain = domain.ok_or(StatsError::NoSurvivingTracks)?;
    let stats = CorpusStats {
        f0_domain,
        f0: sample_stats(f0, FeatureKind::F0)?,
        energy: sample_stats(energy, FeatureKind::Energy)?,
        clamp: options.clamp,
    };
    stats.validate()?;
    Ok(stats)
}

impl CorpusStats {
    /// Legal phone-value interval for `feature`.
    pub fn clamp_bounds(&self, feature: FeatureKind) -> Result<ClampBounds, StatsError> {
        let (stats, mult) = match feature {
            FeatureKind::F0 => (&self.f0, self.clamp.f0_sigma_mult),
            FeatureKind::Energy => (&self.energy, self.clamp.energy_sigma_mult),
            FeatureKind::Duration => return Err(StatsError::DurationNotClamped),
        };
        let mut lo = stats.mean - mult * stats.std;
        if feature == FeatureKind::F0 {
            lo = lo.max(self.clamp.f0_floor);
        }
        Ok(ClampBounds { lo, hi: stats.mean + mult * stats.std })
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let finite = |x: f64| x.is_finite();
        for (name, s) in [("f0", &self.f0), ("energy", &self.energy)] {
            if !finite(s.mean) || !finite(s.std) || s.std <= 0.0 {
                return Err(StatsError::Invalid(format!("{name}: std must be finite and > 0")));
            }
            if s.count < 2 {
                return Err(StatsError::Invalid(format!("{name}: count must be at least 2")));
            }
        }
        let c = &self.clamp;
        if !(c.f0_sigma_mult > 0.0 && c.energy_sigma_mult > 0.0 && c.f0_floor > 0.0)
            || !finite(c.f0_sigma_mult)
            || !finite(c.energy_sigma_mult)
            || !finite(c.f0_floor)
        {
            return Err(StatsError::Invalid("clamp multipliers and f0_floor must be positive".into()));
        }
        for feature in [FeatureKind::F0, FeatureKind::Energy] {
            let b = self.clamp_bounds(feature)?;
            if !(b.lo < b.hi) {
                return Err(StatsError::Invalid(format!("{feature}: empty clamp range")));
            }
        }
        Ok(())
    }
}

pub fn parse_stats(bytes: &[u8]) -> Result<CorpusStats, StatsError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let stats: CorpusStats = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| StatsError::Malformed { path: e.path().to_string(), message: e.inner().to_string() })?;
    stats.validate()?;
    Ok(stats)
}

pub fn serialize_stats(stats: &CorpusStats) -> Vec<u8> {
    to_canonical_json(stats)
}
