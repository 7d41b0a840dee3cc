//! Word- and utterance-level prosody edits.
//!
//! F0 and energy are edited by moving a word's mean: every contributing
//! phone is rescaled by the same factor, `v'_i = K'_w * v_i / K_w`, so the
//! ratios between phones survive and the new mean is exactly the requested
//! one. Voiceless phones neither contribute to nor receive F0 edits.
//! Duration is edited by scaling each phone of a word by a constant in
//! `[0, 2]`, always relative to the baseline durations.
//!
//! [`EditState`] holds the baseline plus the current control position of
//! every slider and renders the edited track from the baseline on demand.
//! Because rendering is anchored to the baseline, repeated edits on one
//! word collapse to the last one bit-for-bit, and replaying a log of edits
//! is deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{ClampBounds, CorpusStats, StatsError};
use crate::track::{F0Domain, FeatureKind, UtteranceTrack};

pub const EDITS_EXTENSION: &str = ".edits.json";

/// Duration scale factors accepted at word and utterance level.
pub const DURATION_SCALE_RANGE: TargetRange = TargetRange { lo: 0.0, hi: 2.0 };

/// One word-level control input.
///
/// For f0/energy `value` is the target word mean; for duration it is the
/// scale factor applied to the baseline durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordEdit {
    pub word_index: usize,
    pub feature: FeatureKind,
    pub value: f64,
}

/// One utterance-level control input.
///
/// For f0/energy `value` is an additive shift applied to every word mean;
/// for duration it is a scale factor applied to every phone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEdit {
    pub feature: FeatureKind,
    pub value: f64,
}

/// An entry of an edit script.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum Edit {
    Word(WordEdit),
    Utterance(UtteranceEdit),
}

impl From<WordEdit> for Edit {
    fn from(e: WordEdit) -> Self {
        Edit::Word(e)
    }
}

impl From<UtteranceEdit> for Edit {
    fn from(e: UtteranceEdit) -> Self {
        Edit::Utterance(e)
    }
}

/// Closed interval of acceptable control values. Degenerate when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRange {
    pub lo: f64,
    pub hi: f64,
}

impl TargetRange {
    pub fn is_degenerate(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn intersect(&self, other: &TargetRange) -> TargetRange {
        TargetRange { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }
}

impl std::fmt::Display for TargetRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_degenerate() {
            write!(f, "degenerate [{}, {}]", self.lo, self.hi)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("word index {word_index} out of range for {words} words")]
    WordOutOfRange { word_index: usize, words: usize },
    #[error("no voiced phones in word {word_index}")]
    NoVoicedPhones { word_index: usize },
    #[error("zero-valued phone {phone_index} in word {word_index} ({feature})")]
    ZeroValuedPhone { word_index: usize, phone_index: usize, feature: FeatureKind },
    #[error("range violation: {feature} value {value} outside feasible interval {range}")]
    RangeViolation { feature: FeatureKind, value: f64, range: TargetRange },
    #[error("duration scale {value} outside [0, 2]")]
    DurationOutOfRange { value: f64 },
    #[error("{feature} has no word mean; it is a scale feature")]
    NotScalar { feature: FeatureKind },
    #[error("expected a {expected} edit, got {got}")]
    FeatureMismatch { expected: &'static str, got: FeatureKind },
    #[error("no word has contributing {feature} phones")]
    NoEligibleWords { feature: FeatureKind },
    #[error("track f0 domain {track:?} does not match stats domain {stats:?}")]
    DomainMismatch { track: F0Domain, stats: F0Domain },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl EngineError {
    /// Feasible interval attached to a rejected value, if any.
    pub fn feasible_interval(&self) -> Option<TargetRange> {
        match self {
            EngineError::RangeViolation { range, .. } => Some(*range),
            EngineError::DurationOutOfRange { .. } => Some(DURATION_SCALE_RANGE),
            _ => None,
        }
    }
}

/// Failure of one entry in an ordered edit list.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("edit {index}: {source}")]
pub struct ApplyError {
    pub index: usize,
    #[source]
    pub source: EngineError,
}

fn check_word(track: &UtteranceTrack, word_index: usize) -> Result<&[usize], EngineError> {
    track.word_phones(word_index).ok_or(EngineError::WordOutOfRange { word_index, words: track.words.len() })
}

fn contributing(track: &UtteranceTrack, word_index: usize, feature: FeatureKind) -> Result<Vec<usize>, EngineError> {
    if !feature.is_scalar_mean() {
        return Err(EngineError::NotScalar { feature });
    }
    let phones: Vec<usize> =
        check_word(track, word_index)?.iter().copied().filter(|&i| track.phones[i].contributes_to(feature)).collect();
    if phones.is_empty() {
        return Err(EngineError::NoVoicedPhones { word_index });
    }
    Ok(phones)
}

fn mean_of(track: &UtteranceTrack, phones: &[usize], feature: FeatureKind) -> f64 {
    phones.iter().map(|&i| track.phones[i].feature(feature)).sum::<f64>() / phones.len() as f64
}

/// Mean of the contributing phone values of a word (`K_w`).
pub fn word_mean(track: &UtteranceTrack, word_index: usize, feature: FeatureKind) -> Result<f64, EngineError> {
    let phones = contributing(track, word_index, feature)?;
    Ok(mean_of(track, &phones, feature))
}

/// Slider state of one word for one scalar feature.
#[derive(Debug, Clone, PartialEq)]
struct ScalarControl {
    phones: Vec<usize>,
    base_mean: f64,
    target: f64,
    range: TargetRange,
}

fn scalar_control(
    track: &UtteranceTrack,
    word_index: usize,
    feature: FeatureKind,
    bounds: ClampBounds,
) -> Result<ScalarControl, EngineError> {
    let phones = contributing(track, word_index, feature)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &i in &phones {
        let v = track.phones[i].feature(feature);
        if v == 0.0 {
            return Err(EngineError::ZeroValuedPhone { word_index, phone_index: i, feature });
        }
        min = min.min(v);
        max = max.max(v);
    }
    let base_mean = mean_of(track, &phones, feature);
    // Lowest phone lands on the lower bound at K_lo, highest on the upper at K_hi.
    let mut lo = bounds.lo * base_mean / min;
    if lo <= 0.0 {
        lo = f64::MIN_POSITIVE;
    }
    let hi = bounds.hi * base_mean / max;
    Ok(ScalarControl { phones, base_mean, target: base_mean, range: TargetRange { lo, hi } })
}

/// Interval of word means `K'` for which every edited phone stays inside
/// the clamp bounds of `feature`.
pub fn allowed_target_range(
    track: &UtteranceTrack,
    word_index: usize,
    feature: FeatureKind,
    stats: &CorpusStats,
) -> Result<TargetRange, EngineError> {
    check_domain(track, stats)?;
    let bounds = stats.clamp_bounds(feature)?;
    Ok(scalar_control(track, word_index, feature, bounds)?.range)
}

fn check_domain(track: &UtteranceTrack, stats: &CorpusStats) -> Result<(), EngineError> {
    if track.f0_domain != stats.f0_domain {
        return Err(EngineError::DomainMismatch { track: track.f0_domain, stats: stats.f0_domain });
    }
    Ok(())
}

fn check_scale(value: f64) -> Result<f64, EngineError> {
    if DURATION_SCALE_RANGE.contains(value) {
        Ok(value)
    } else {
        Err(EngineError::DurationOutOfRange { value })
    }
}

fn scale_durations(out: &mut UtteranceTrack, baseline: &UtteranceTrack, word_index: usize, scale: f64) {
    if scale == 1.0 {
        return;
    }
    for &i in &baseline.words[word_index].phone_indices {
        out.phones[i].duration = baseline.phones[i].duration * scale;
    }
}

/// Scales every phone duration of one word by `edit.value`.
pub fn apply_word_duration_edit(track: &UtteranceTrack, edit: &WordEdit) -> Result<UtteranceTrack, EngineError> {
    if edit.feature != FeatureKind::Duration {
        return Err(EngineError::FeatureMismatch { expected: "duration", got: edit.feature });
    }
    check_word(track, edit.word_index)?;
    let scale = check_scale(edit.value)?;
    let mut out = track.clone();
    scale_durations(&mut out, track, edit.word_index, scale);
    Ok(out)
}

/// Retargets one word's F0 or energy mean.
pub fn apply_word_scalar_edit(
    track: &UtteranceTrack,
    edit: &WordEdit,
    stats: &CorpusStats,
) -> Result<UtteranceTrack, EngineError> {
    if !edit.feature.is_scalar_mean() {
        return Err(EngineError::NotScalar { feature: edit.feature });
    }
    let mut state = EditState::new(track.clone(), stats)?;
    state.apply_word(edit)?;
    Ok(state.render())
}

/// Expands an utterance-level input into one word-level input per eligible word.
pub fn decompose_utterance_edit(
    track: &UtteranceTrack,
    edit: &UtteranceEdit,
    stats: &CorpusStats,
) -> Result<Vec<WordEdit>, EngineError> {
    EditState::new(track.clone(), stats)?.decompose(edit)
}

/// Feasible shift (f0/energy) or scale (duration) for an utterance-level input.
pub fn allowed_utterance_range(
    track: &UtteranceTrack,
    feature: FeatureKind,
    stats: &CorpusStats,
) -> Result<TargetRange, EngineError> {
    EditState::new(track.clone(), stats)?.utterance_range(feature)
}

/// Folds `edits` left to right over `track`.
pub fn apply_edits(track: &UtteranceTrack, edits: &[Edit], stats: &CorpusStats) -> Result<UtteranceTrack, ApplyError> {
    let mut state = EditState::new(track.clone(), stats).map_err(|source| ApplyError { index: 0, source })?;
    for (index, edit) in edits.iter().enumerate() {
        state.apply(edit).map_err(|source| ApplyError { index, source })?;
    }
    Ok(state.render())
}

#[derive(Debug, Clone, PartialEq)]
struct WordControls {
    f0: Result<ScalarControl, EngineError>,
    energy: Result<ScalarControl, EngineError>,
    duration_scale: f64,
}

impl WordControls {
    fn scalar(&self, feature: FeatureKind) -> &Result<ScalarControl, EngineError> {
        match feature {
            FeatureKind::F0 => &self.f0,
            _ => &self.energy,
        }
    }

    fn scalar_mut(&mut self, feature: FeatureKind) -> &mut Result<ScalarControl, EngineError> {
        match feature {
            FeatureKind::F0 => &mut self.f0,
            _ => &mut self.energy,
        }
    }
}

/// Baseline track plus the current position of every control.
#[derive(Debug, Clone, PartialEq)]
pub struct EditState {
    baseline: UtteranceTrack,
    f0_bounds: ClampBounds,
    energy_bounds: ClampBounds,
    words: Vec<WordControls>,
}

impl EditState {
    pub fn new(baseline: UtteranceTrack, stats: &CorpusStats) -> Result<Self, EngineError> {
        check_domain(&baseline, stats)?;
        let f0_bounds = stats.clamp_bounds(FeatureKind::F0)?;
        let energy_bounds = stats.clamp_bounds(FeatureKind::Energy)?;
        let words = (0..baseline.words.len())
            .map(|w| WordControls {
                f0: scalar_control(&baseline, w, FeatureKind::F0, f0_bounds),
                energy: scalar_control(&baseline, w, FeatureKind::Energy, energy_bounds),
                duration_scale: 1.0,
            })
            .collect();
        Ok(Self { baseline, f0_bounds, energy_bounds, words })
    }

    pub fn baseline(&self) -> &UtteranceTrack {
        &self.baseline
    }

    /// Returns every control to its baseline position.
    pub fn reset(&mut self) {
        for word in &mut self.words {
            for control in [&mut word.f0, &mut word.energy].into_iter().flatten() {
                control.target = control.base_mean;
            }
            word.duration_scale = 1.0;
        }
    }

    fn word(&self, word_index: usize) -> Result<&WordControls, EngineError> {
        self.words.get(word_index).ok_or(EngineError::WordOutOfRange { word_index, words: self.words.len() })
    }

    fn bounds(&self, feature: FeatureKind) -> ClampBounds {
        match feature {
            FeatureKind::F0 => self.f0_bounds,
            _ => self.energy_bounds,
        }
    }

    /// Current control value: the word mean for f0/energy, the scale for duration.
    pub fn word_value(&self, word_index: usize, feature: FeatureKind) -> Result<f64, EngineError> {
        let word = self.word(word_index)?;
        match feature {
            FeatureKind::Duration => Ok(word.duration_scale),
            f => word.scalar(f).as_ref().map(|c| c.target).map_err(Clone::clone),
        }
    }

    pub fn word_range(&self, word_index: usize, feature: FeatureKind) -> Result<TargetRange, EngineError> {
        let word = self.word(word_index)?;
        match feature {
            FeatureKind::Duration => Ok(DURATION_SCALE_RANGE),
            f => word.scalar(f).as_ref().map(|c| c.range).map_err(Clone::clone),
        }
    }

    /// Feasible utterance-level input given the current word means.
    pub fn utterance_range(&self, feature: FeatureKind) -> Result<TargetRange, EngineError> {
        if feature == FeatureKind::Duration {
            return Ok(DURATION_SCALE_RANGE);
        }
        let mut range: Option<TargetRange> = None;
        for word in &self.words {
            let control = match word.scalar(feature) {
                Ok(c) => c,
                Err(EngineError::NoVoicedPhones { .. }) => continue,
                Err(e) => return Err(e.clone()),
            };
            let shift = TargetRange { lo: control.range.lo - control.target, hi: control.range.hi - control.target };
            range = Some(match range {
                None => shift,
                Some(r) => r.intersect(&shift),
            });
        }
        range.ok_or(EngineError::NoEligibleWords { feature })
    }

    /// Word-level inputs equivalent to `edit` at the current state.
    pub fn decompose(&self, edit: &UtteranceEdit) -> Result<Vec<WordEdit>, EngineError> {
        if edit.feature == FeatureKind::Duration {
            let scale = check_scale(edit.value)?;
            return Ok((0..self.words.len())
                .map(|word_index| WordEdit { word_index, feature: FeatureKind::Duration, value: scale })
                .collect());
        }
        let range = self.utterance_range(edit.feature)?;
        if !range.contains(edit.value) {
            return Err(EngineError::RangeViolation { feature: edit.feature, value: edit.value, range });
        }
        let mut out = Vec::new();
        for (word_index, word) in self.words.iter().enumerate() {
            let Ok(control) = word.scalar(edit.feature) else { continue };
            // The shift is feasible for every word; clamping only absorbs rounding.
            let value = (control.target + edit.value).clamp(control.range.lo, control.range.hi);
            out.push(WordEdit { word_index, feature: edit.feature, value });
        }
        Ok(out)
    }

    pub fn apply_word(&mut self, edit: &WordEdit) -> Result<(), EngineError> {
        if edit.feature == FeatureKind::Duration {
            self.word(edit.word_index)?;
            let scale = check_scale(edit.value)?;
            self.words[edit.word_index].duration_scale = scale;
            return Ok(());
        }
        self.word(edit.word_index)?;
        let control = match self.words[edit.word_index].scalar_mut(edit.feature) {
            Ok(c) => c,
            Err(e) => return Err(e.clone()),
        };
        if !control.range.contains(edit.value) {
            return Err(EngineError::RangeViolation { feature: edit.feature, value: edit.value, range: control.range });
        }
        control.target = edit.value;
        Ok(())
    }

    /// Applies one edit. On error the state is unchanged.
    pub fn apply(&mut self, edit: &Edit) -> Result<(), EngineError> {
        match edit {
            Edit::Word(e) => self.apply_word(e),
            Edit::Utterance(e) => {
                let word_edits = self.decompose(e)?;
                let mut next = self.clone();
                for we in &word_edits {
                    next.apply_word(we)?;
                }
                *self = next;
                Ok(())
            }
        }
    }

    /// Edited track, computed from the baseline.
    pub fn render(&self) -> UtteranceTrack {
        let mut out = self.baseline.clone();
        for (w, word) in self.words.iter().enumerate() {
            for feature in [FeatureKind::F0, FeatureKind::Energy] {
                let Ok(control) = word.scalar(feature) else { continue };
                if control.target == control.base_mean {
                    continue;
                }
                let bounds = self.bounds(feature);
                for &i in &control.phones {
                    let v = self.baseline.phones[i].feature(feature);
                    *out.phones[i].feature_mut(feature) =
                        (control.target * v / control.base_mean).clamp(bounds.lo, bounds.hi);
                }
            }
            scale_durations(&mut out, &self.baseline, w, word.duration_scale);
        }
        out
    }

    /// Slider positions and bounds for every control.
    pub fn sliders(&self) -> SliderPanel {
        let words = self
            .baseline
            .words
            .iter()
            .enumerate()
            .map(|(w, word)| WordSliders {
                text: word.text.clone(),
                f0: self.word_slider(w, FeatureKind::F0),
                energy: self.word_slider(w, FeatureKind::Energy),
                duration: SliderState::enabled(self.words[w].duration_scale, DURATION_SCALE_RANGE),
            })
            .collect();
        let first_scale = self.words.first().map_or(1.0, |w| w.duration_scale);
        let common_scale = if self.words.iter().all(|w| w.duration_scale == first_scale) { first_scale } else { 1.0 };
        SliderPanel {
            words,
            utterance: UtteranceSliders {
                f0: self.utterance_slider(FeatureKind::F0),
                energy: self.utterance_slider(FeatureKind::Energy),
                duration: SliderState::enabled(common_scale, DURATION_SCALE_RANGE),
            },
        }
    }

    fn word_slider(&self, w: usize, feature: FeatureKind) -> SliderState {
        match self.words[w].scalar(feature) {
            Ok(c) => SliderState::from_range(c.target, c.range),
            Err(e) => SliderState::disabled(None, None, e.to_string()),
        }
    }

    fn utterance_slider(&self, feature: FeatureKind) -> SliderState {
        match self.utterance_range(feature) {
            Ok(range) => SliderState::from_range(0.0, range),
            Err(e) => SliderState::disabled(None, None, e.to_string()),
        }
    }
}

/// What a UI needs to draw one slider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliderState {
    pub value: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl SliderState {
    fn enabled(value: f64, range: TargetRange) -> Self {
        Self { value: Some(value), lo: Some(range.lo), hi: Some(range.hi), enabled: true, reason: None }
    }

    fn disabled(value: Option<f64>, range: Option<TargetRange>, reason: String) -> Self {
        Self { value, lo: range.map(|r| r.lo), hi: range.map(|r| r.hi), enabled: false, reason: Some(reason) }
    }

    fn from_range(value: f64, range: TargetRange) -> Self {
        if range.is_degenerate() {
            Self::disabled(Some(value), Some(range), format!("degenerate range {range}"))
        } else if !range.contains(value) {
            Self::disabled(Some(value), Some(range), format!("current value outside clamp range {range}"))
        } else {
            Self::enabled(value, range)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSliders {
    pub text: String,
    pub f0: SliderState,
    pub energy: SliderState,
    pub duration: SliderState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSliders {
    pub f0: SliderState,
    pub energy: SliderState,
    pub duration: SliderState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliderPanel {
    pub words: Vec<WordSliders>,
    pub utterance: UtteranceSliders,
}

/// Parses an edit script (JSON array of edits).
pub fn parse_edit_script(bytes: &[u8]) -> Result<Vec<Edit>, serde_path_to_error::Error<serde_json::Error>> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de)
}

pub fn serialize_edit_script(edits: &[Edit]) -> Vec<u8> {
    crate::track::to_canonical_json(&edits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ClampConfig, FeatureStats};
    use crate::track::fixtures::{phone, track};
    use crate::track::Phone;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
    }

    /// Stats whose clamp bounds are exactly `f0` and `energy`.
    fn stats_for(f0: (f64, f64), energy: (f64, f64)) -> CorpusStats {
        let fs = |(lo, hi): (f64, f64), mult: f64| FeatureStats {
            mean: (lo + hi) / 2.0,
            std: (hi - lo) / (2.0 * mult),
            count: 100,
        };
        CorpusStats { f0_domain: F0Domain::Hz, f0: fs(f0, 3.0), energy: fs(energy, 1.5), clamp: ClampConfig::default() }
    }

    fn wide() -> CorpusStats {
        stats_for((10.0, 1000.0), (0.01, 10.0))
    }

    fn voiced(f0: f64) -> Phone {
        phone("V", true, f0, 1.0, 0.1)
    }

    fn f0s(t: &UtteranceTrack) -> Vec<f64> {
        t.phones.iter().map(|p| p.f0).collect()
    }

    #[test]
    fn word_mean_examples() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(200.0), voiced(300.0)])]);
        assert_eq!(word_mean(&t, 0, FeatureKind::F0).unwrap(), 200.0);
        let t = track(vec![("a", vec![voiced(150.0), phone("S", false, 0.0, 1.0, 0.1), voiced(250.0)])]);
        assert_eq!(word_mean(&t, 0, FeatureKind::F0).unwrap(), 200.0);
        let t = track(vec![("a", vec![phone("A", true, 100.0, 0.7, 0.1)])]);
        assert_eq!(word_mean(&t, 0, FeatureKind::Energy).unwrap(), 0.7);
    }

    #[test]
    fn word_mean_errors() {
        let t = track(vec![("s", vec![phone("S", false, 0.0, 1.0, 0.1)])]);
        assert_eq!(word_mean(&t, 0, FeatureKind::F0), Err(EngineError::NoVoicedPhones { word_index: 0 }));
        assert_eq!(
            word_mean(&t, 0, FeatureKind::Duration),
            Err(EngineError::NotScalar { feature: FeatureKind::Duration })
        );
        assert!(matches!(word_mean(&t, 3, FeatureKind::Energy), Err(EngineError::WordOutOfRange { .. })));
    }

    #[test]
    fn scalar_edit_scales_proportionally() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(200.0), voiced(300.0)])]);
        let out =
            apply_word_scalar_edit(&t, &WordEdit { word_index: 0, feature: FeatureKind::F0, value: 220.0 }, &wide())
                .unwrap();
        assert_eq!(f0s(&out), vec![110.0, 220.0, 330.0]);
        assert!(rel_close(word_mean(&out, 0, FeatureKind::F0).unwrap(), 220.0, 1e-12));
    }

    #[test]
    fn identity_edit_is_bit_exact() {
        let t = track(vec![("a", vec![voiced(101.3), voiced(207.9), voiced(299.1)])]);
        let k = word_mean(&t, 0, FeatureKind::F0).unwrap();
        let out = apply_word_scalar_edit(&t, &WordEdit { word_index: 0, feature: FeatureKind::F0, value: k }, &wide())
            .unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn voiceless_phone_untouched_by_f0_edit() {
        let t = track(vec![("a", vec![voiced(100.0), phone("S", false, 0.0, 1.0, 0.1), voiced(300.0)])]);
        let out =
            apply_word_scalar_edit(&t, &WordEdit { word_index: 0, feature: FeatureKind::F0, value: 100.0 }, &wide())
                .unwrap();
        assert_eq!(f0s(&out), vec![50.0, 0.0, 150.0]);
    }

    #[test]
    fn zero_valued_phone_rejected() {
        let t = track(vec![("a", vec![phone("A", true, 100.0, 0.0, 0.1), phone("B", true, 120.0, 1.0, 0.1)])]);
        let err =
            apply_word_scalar_edit(&t, &WordEdit { word_index: 0, feature: FeatureKind::Energy, value: 0.5 }, &wide())
                .unwrap_err();
        assert_eq!(err, EngineError::ZeroValuedPhone { word_index: 0, phone_index: 0, feature: FeatureKind::Energy });
    }

    #[test]
    fn out_of_range_target_carries_interval() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(200.0), voiced(300.0)])]);
        let stats = stats_for((50.0, 400.0), (0.01, 10.0));
        let err =
            apply_word_scalar_edit(&t, &WordEdit { word_index: 0, feature: FeatureKind::F0, value: 300.0 }, &stats)
                .unwrap_err();
        let range = err.feasible_interval().unwrap();
        assert!(rel_close(range.lo, 100.0, 1e-12));
        assert!(rel_close(range.hi, 800.0 / 3.0, 1e-12));
    }

    #[test]
    fn target_range_examples() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(200.0), voiced(300.0)])]);
        let stats = stats_for((50.0, 400.0), (0.01, 10.0));
        let r = allowed_target_range(&t, 0, FeatureKind::F0, &stats).unwrap();
        assert!(rel_close(r.lo, 100.0, 1e-12) && rel_close(r.hi, 266.666_666_666_666_6, 1e-12), "{r:?}");
        // Boundary phones land on the clamp bounds.
        let lo = apply_word_scalar_edit(&t, &WordEdit { word_index: 0, feature: FeatureKind::F0, value: r.lo }, &stats)
            .unwrap();
        let hi = apply_word_scalar_edit(&t, &WordEdit { word_index: 0, feature: FeatureKind::F0, value: r.hi }, &stats)
            .unwrap();
        assert!(rel_close(lo.phones[0].f0, 50.0, 1e-9));
        assert!(rel_close(hi.phones[2].f0, 400.0, 1e-9));

        let single = track(vec![("a", vec![voiced(200.0)])]);
        let stats = stats_for((50.0, 350.0), (0.01, 10.0));
        let r = allowed_target_range(&single, 0, FeatureKind::F0, &stats).unwrap();
        assert!(rel_close(r.lo, 50.0, 1e-12) && rel_close(r.hi, 350.0, 1e-12));
    }

    #[test]
    fn degenerate_range_matches_grid() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(300.0)])]);
        let stats = stats_for((120.0, 280.0), (0.01, 10.0));
        let r = allowed_target_range(&t, 0, FeatureKind::F0, &stats).unwrap();
        assert!(r.is_degenerate());
        // Brute force: no K' on a fine grid keeps both phones in [120, 280].
        let feasible = (0..=1000)
            .map(|i| i as f64 * 0.5)
            .any(|k| [100.0, 300.0].iter().all(|v: &f64| (120.0..=280.0).contains(&(k * v / 200.0))));
        assert!(!feasible);
        let sliders = EditState::new(t, &stats).unwrap().sliders();
        assert!(!sliders.words[0].f0.enabled);
    }

    #[test]
    fn duration_edit_examples() {
        let t = track(vec![
            ("a", vec![phone("A", true, 100.0, 1.0, 0.1), phone("B", true, 100.0, 1.0, 0.2)]),
            ("b", vec![voiced(120.0)]),
        ]);
        let e = |value| WordEdit { word_index: 0, feature: FeatureKind::Duration, value };
        let out = apply_word_duration_edit(&t, &e(1.5)).unwrap();
        assert!(rel_close(out.phones[0].duration, 0.15, 1e-12) && rel_close(out.phones[1].duration, 0.3, 1e-12));
        assert_eq!(out.phones[2], t.phones[2]);
        assert_eq!(apply_word_duration_edit(&t, &e(1.0)).unwrap(), t);
        let zero = apply_word_duration_edit(&t, &e(0.0)).unwrap();
        assert_eq!((zero.phones[0].duration, zero.phones[1].duration), (0.0, 0.0));
        assert_eq!(apply_word_duration_edit(&t, &e(2.01)), Err(EngineError::DurationOutOfRange { value: 2.01 }));
        assert!(apply_word_duration_edit(&t, &e(-0.1)).is_err());
    }

    #[test]
    fn utterance_decomposition() {
        let t = track(vec![("a", vec![voiced(200.0)]), ("b", vec![voiced(100.0), voiced(200.0)])]);
        let stats = wide();
        let edits =
            decompose_utterance_edit(&t, &UtteranceEdit { feature: FeatureKind::F0, value: 20.0 }, &stats).unwrap();
        assert_eq!(edits.iter().map(|e| e.value).collect::<Vec<_>>(), vec![220.0, 170.0]);
        let out = apply_edits(&t, &[UtteranceEdit { feature: FeatureKind::F0, value: 20.0 }.into()], &stats).unwrap();
        assert!(rel_close(word_mean(&out, 0, FeatureKind::F0).unwrap(), 220.0, 1e-12));
        assert!(rel_close(word_mean(&out, 1, FeatureKind::F0).unwrap(), 170.0, 1e-12));

        let zero =
            apply_edits(&t, &[UtteranceEdit { feature: FeatureKind::Energy, value: 0.0 }.into()], &stats).unwrap();
        assert_eq!(zero, t);

        let doubled =
            apply_edits(&t, &[UtteranceEdit { feature: FeatureKind::Duration, value: 2.0 }.into()], &stats).unwrap();
        for (a, b) in doubled.phones.iter().zip(&t.phones) {
            assert_eq!(a.duration, b.duration * 2.0);
        }
    }

    #[test]
    fn utterance_skips_voiceless_words() {
        let t = track(vec![("s", vec![phone("S", false, 0.0, 1.0, 0.1)]), ("b", vec![voiced(150.0)])]);
        let edits =
            decompose_utterance_edit(&t, &UtteranceEdit { feature: FeatureKind::F0, value: 10.0 }, &wide()).unwrap();
        assert_eq!(edits, vec![WordEdit { word_index: 1, feature: FeatureKind::F0, value: 160.0 }]);
        let all_voiceless = track(vec![("s", vec![phone("S", false, 0.0, 1.0, 0.1)])]);
        assert_eq!(
            allowed_utterance_range(&all_voiceless, FeatureKind::F0, &wide()),
            Err(EngineError::NoEligibleWords { feature: FeatureKind::F0 })
        );
    }

    #[test]
    fn utterance_range_examples() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(200.0), voiced(300.0)])]);
        let stats = stats_for((50.0, 400.0), (0.01, 10.0));
        let r = allowed_utterance_range(&t, FeatureKind::F0, &stats).unwrap();
        assert!(rel_close(r.lo, -100.0, 1e-12) && rel_close(r.hi, 200.0 / 3.0, 1e-9), "{r:?}");
        assert_eq!(allowed_utterance_range(&t, FeatureKind::Duration, &stats).unwrap(), DURATION_SCALE_RANGE);
        let a = TargetRange { lo: -50.0, hi: 40.0 };
        let b = TargetRange { lo: -30.0, hi: 80.0 };
        assert_eq!(a.intersect(&b), TargetRange { lo: -30.0, hi: 40.0 });

        // Two single-phone words: range is the intersection of their shifts.
        let stats = stats_for((100.0, 300.0), (0.01, 10.0));
        let two = track(vec![("a", vec![voiced(150.0)]), ("b", vec![voiced(250.0)])]);
        let r = allowed_utterance_range(&two, FeatureKind::F0, &stats).unwrap();
        assert!(rel_close(r.lo, -50.0, 1e-12) && rel_close(r.hi, 50.0, 1e-12), "{r:?}");
    }

    #[test]
    fn utterance_edit_at_bound_is_accepted() {
        let stats = stats_for((100.0, 300.0), (0.01, 10.0));
        let t = track(vec![("a", vec![voiced(153.1), voiced(171.7)]), ("b", vec![voiced(249.3)])]);
        let r = allowed_utterance_range(&t, FeatureKind::F0, &stats).unwrap();
        for delta in [r.lo, r.hi] {
            let out =
                apply_edits(&t, &[UtteranceEdit { feature: FeatureKind::F0, value: delta }.into()], &stats).unwrap();
            let b = stats.clamp_bounds(FeatureKind::F0).unwrap();
            assert!(out.phones.iter().all(|p| b.contains(p.f0)));
        }
        let beyond = r.hi + 1e-6;
        assert!(apply_edits(&t, &[UtteranceEdit { feature: FeatureKind::F0, value: beyond }.into()], &stats).is_err());
    }

    #[test]
    fn consecutive_edits_collapse_to_last() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(200.0), voiced(300.0)])]);
        let stats = wide();
        let e = |value| Edit::Word(WordEdit { word_index: 0, feature: FeatureKind::F0, value });
        let both = apply_edits(&t, &[e(220.0), e(180.0)], &stats).unwrap();
        let last = apply_edits(&t, &[e(180.0)], &stats).unwrap();
        assert_eq!(both, last);
        assert_eq!(f0s(&last), vec![90.0, 180.0, 270.0]);
    }

    #[test]
    fn failing_edit_reports_index() {
        let t = track(vec![("a", vec![voiced(100.0)])]);
        let edits = [
            Edit::Word(WordEdit { word_index: 0, feature: FeatureKind::Duration, value: 1.2 }),
            Edit::Word(WordEdit { word_index: 0, feature: FeatureKind::Duration, value: 3.0 }),
        ];
        let err = apply_edits(&t, &edits, &wide()).unwrap_err();
        assert_eq!(err.index, 1);
        assert_eq!(apply_edits(&t, &[], &wide()).unwrap(), t);
    }

    #[test]
    fn failed_utterance_edit_leaves_state_unchanged() {
        let t = track(vec![("a", vec![voiced(120.0)]), ("b", vec![voiced(140.0)])]);
        let mut state = EditState::new(t, &wide()).unwrap();
        let before = state.clone();
        assert!(state.apply(&UtteranceEdit { feature: FeatureKind::F0, value: 1e6 }.into()).is_err());
        assert_eq!(state, before);
    }

    #[test]
    fn domain_mismatch_rejected() {
        let mut t = track(vec![("a", vec![voiced(5.0)])]);
        t.f0_domain = F0Domain::LogHz;
        assert!(matches!(EditState::new(t, &wide()), Err(EngineError::DomainMismatch { .. })));
    }

    #[test]
    fn edit_script_schema() {
        let doc = br#"[{"scope":"word","word_index":1,"feature":"f0","value":220.0},
                       {"scope":"utterance","feature":"duration","value":1.5}]"#;
        let edits = parse_edit_script(doc).unwrap();
        assert_eq!(edits[0], Edit::Word(WordEdit { word_index: 1, feature: FeatureKind::F0, value: 220.0 }));
        assert_eq!(edits[1], Edit::Utterance(UtteranceEdit { feature: FeatureKind::Duration, value: 1.5 }));
        assert_eq!(parse_edit_script(&serialize_edit_script(&edits)).unwrap(), edits);
        assert!(parse_edit_script(br#"[{"scope":"phone","feature":"f0","value":1}]"#).is_err());
    }

    #[test]
    fn sliders_reflect_state() {
        let t = track(vec![("a", vec![voiced(100.0), voiced(200.0)]), ("s", vec![phone("S", false, 0.0, 1.0, 0.1)])]);
        let mut state = EditState::new(t, &wide()).unwrap();
        state.apply(&WordEdit { word_index: 0, feature: FeatureKind::F0, value: 160.0 }.into()).unwrap();
        let panel = state.sliders();
        assert_eq!(panel.words[0].f0.value, Some(160.0));
        assert!(panel.words[0].f0.enabled);
        assert!(!panel.words[1].f0.enabled);
        assert!(panel.words[1].energy.enabled);
        assert_eq!(panel.utterance.f0.value, Some(0.0));
        state.reset();
        assert_eq!(state.render(), *state.baseline());
    }
}
