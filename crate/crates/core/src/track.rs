//! Phone-level feature tracks and their canonical file format.
//!
//! A track is the unit every edit acts on: an ordered list of phones, each
//! carrying F0, energy and duration, grouped into words that partition the
//! phone list. The on-disk form is a pretty-printed JSON document with a
//! fixed key order; floats are written in the shortest form that parses
//! back to the same value, so `serialize(parse(doc)) == doc` for any
//! canonical document.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File extension used for track documents.
pub const TRACK_EXTENSION: &str = ".track.json";

/// Domain in which a track stores its F0 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F0Domain {
    Hz,
    LogHz,
}

/// Prosodic feature addressed by an edit.
///
/// F0 and energy are scalar-mean features (edited by retargeting a word
/// mean); duration is a scale feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    F0,
    Energy,
    Duration,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::F0, FeatureKind::Energy, FeatureKind::Duration];

    pub fn is_scalar_mean(self) -> bool {
        matches!(self, FeatureKind::F0 | FeatureKind::Energy)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::F0 => "f0",
            FeatureKind::Energy => "energy",
            FeatureKind::Duration => "duration",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phone {
    pub symbol: String,
    pub voiced: bool,
    /// Stored as 0 on voiceless phones by convention.
    pub f0: f64,
    pub energy: f64,
    /// Seconds.
    pub duration: f64,
}

impl Phone {
    /// Value of a scalar feature. Returns `None` for duration.
    pub fn scalar(&self, feature: FeatureKind) -> Option<f64> {
        match feature {
            FeatureKind::F0 => Some(self.f0),
            FeatureKind::Energy => Some(self.energy),
            FeatureKind::Duration => None,
        }
    }

    pub fn feature(&self, feature: FeatureKind) -> f64 {
        match feature {
            FeatureKind::F0 => self.f0,
            FeatureKind::Energy => self.energy,
            FeatureKind::Duration => self.duration,
        }
    }

    pub fn feature_mut(&mut self, feature: FeatureKind) -> &mut f64 {
        match feature {
            FeatureKind::F0 => &mut self.f0,
            FeatureKind::Energy => &mut self.energy,
            FeatureKind::Duration => &mut self.duration,
        }
    }

    /// Whether this phone takes part in word means for `feature`.
    pub fn contributes_to(&self, feature: FeatureKind) -> bool {
        feature != FeatureKind::F0 || self.voiced
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    #[serde(rename = "phones")]
    pub phone_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceTrack {
    pub id: String,
    pub text: String,
    pub f0_domain: F0Domain,
    pub words: Vec<Word>,
    pub phones: Vec<Phone>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("malformed track document at {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("word partition violation at {path}: {detail}")]
    WordPartition { path: String, detail: String },
    #[error("negative duration at {path}")]
    NegativeDuration { path: String },
    #[error("non-finite number at {path}")]
    NonFinite { path: String },
    #[error("negative value at {path}")]
    Negative { path: String },
    #[error("voiced phone must have a strictly positive f0 in the log_hz domain at {path}")]
    NonPositiveLogF0 { path: String },
    #[error("track has no phones")]
    Empty,
}

impl TrackError {
    /// Field path the error points at, when there is one.
    pub fn path(&self) -> Option<&str> {
        match self {
            TrackError::Malformed { path, .. }
            | TrackError::WordPartition { path, .. }
            | TrackError::NegativeDuration { path }
            | TrackError::NonFinite { path }
            | TrackError::Negative { path }
            | TrackError::NonPositiveLogF0 { path } => Some(path),
            TrackError::Empty => None,
        }
    }
}

impl UtteranceTrack {
    /// Checks every structural and numeric invariant of the track.
    pub fn validate(&self) -> Result<(), TrackError> {
        if self.phones.is_empty() {
            return Err(TrackError::Empty);
        }
        for (i, phone) in self.phones.iter().enumerate() {
            for (name, value) in [("f0", phone.f0), ("energy", phone.energy), ("duration", phone.duration)] {
                let path = format!("phones[{i}].{name}");
                if !value.is_finite() {
                    return Err(TrackError::NonFinite { path });
                }
                if value < 0.0 {
                    return Err(if name == "duration" {
                        TrackError::NegativeDuration { path }
                    } else {
                        TrackError::Negative { path }
                    });
                }
            }
            if phone.voiced && self.f0_domain == F0Domain::LogHz && phone.f0 <= 0.0 {
                return Err(TrackError::NonPositiveLogF0 { path: format!("phones[{i}].f0") });
            }
        }
        if self.words.is_empty() {
            return Err(TrackError::WordPartition {
                path: "words".into(),
                detail: "no words cover the phone list".into(),
            });
        }
        let mut next = 0usize;
        for (w, word) in self.words.iter().enumerate() {
            if word.phone_indices.is_empty() {
                return Err(TrackError::WordPartition {
                    path: format!("words[{w}].phones"),
                    detail: "word has no phones".into(),
                });
            }
            for (j, &idx) in word.phone_indices.iter().enumerate() {
                let path = format!("words[{w}].phones[{j}]");
                if idx >= self.phones.len() {
                    return Err(TrackError::WordPartition {
                        path,
                        detail: format!("index {idx} out of range for {} phones", self.phones.len()),
                    });
                }
                if idx != next {
                    return Err(TrackError::WordPartition {
                        path,
                        detail: format!("expected phone index {next}, found {idx}"),
                    });
                }
                next += 1;
            }
        }
        if next != self.phones.len() {
            return Err(TrackError::WordPartition {
                path: "words".into(),
                detail: format!("phones {next}..{} belong to no word", self.phones.len()),
            });
        }
        Ok(())
    }

    /// Sum of phone durations in seconds.
    pub fn total_duration(&self) -> f64 {
        self.phones.iter().map(|p| p.duration).sum()
    }

    pub fn word_phones(&self, word_index: usize) -> Option<&[usize]> {
        self.words.get(word_index).map(|w| w.phone_indices.as_slice())
    }
}

/// Parses and validates a track document.
pub fn parse_track(bytes: &[u8]) -> Result<UtteranceTrack, TrackError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let track: UtteranceTrack = serde_path_to_error::deserialize(&mut de).map_err(malformed)?;
    de.end().map_err(|e| TrackError::Malformed { path: ".".into(), message: e.to_string() })?;
    track.validate()?;
    Ok(track)
}

/// Deserializes and validates a track from an already-parsed JSON value.
pub fn track_from_value(value: serde_json::Value) -> Result<UtteranceTrack, TrackError> {
    let track: UtteranceTrack = serde_path_to_error::deserialize(value).map_err(malformed)?;
    track.validate()?;
    Ok(track)
}

fn malformed(err: serde_path_to_error::Error<serde_json::Error>) -> TrackError {
    TrackError::Malformed { path: err.path().to_string(), message: err.inner().to_string() }
}

/// Canonical document bytes: fixed key order, two-space indent, trailing newline.
pub fn serialize_track(track: &UtteranceTrack) -> Vec<u8> {
    to_canonical_json(track)
}

pub(crate) fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    // Plain data structs with string keys cannot fail to serialize.
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_document_parses() {
        let doc = br#"{"id":"u1","text":"ah","f0_domain":"hz",
            "words":[{"text":"ah","phones":[0]}],
            "phones":[{"symbol":"AA","voiced":true,"f0":200,"energy":1,"duration":0.1}]}"#;
        let track = parse_track(doc).unwrap();
        assert_eq!(track.words.len(), 1);
        assert_eq!(track.phones.len(), 1);
        assert_eq!(track.phones[0].f0, 200.0);
    }

    #[test]
    fn out_of_range_word_index_is_partition_violation() {
        let mut track = nine_phone();
        track.phones.truncate(3);
        track.words = vec![Word { text: "x".into(), phone_indices: vec![0, 1, 5] }];
        let err = track.validate().unwrap_err();
        assert!(err.to_string().contains("word partition violation"), "{err}");
        assert_eq!(err.path(), Some("words[0].phones[2]"));
    }

    #[test]
    fn gaps_and_overlaps_are_rejected() {
        let mut gap = nine_phone();
        gap.words[1].phone_indices.pop();
        assert!(matches!(gap.validate(), Err(TrackError::WordPartition { .. })));

        let mut overlap = nine_phone();
        overlap.words[1].phone_indices.insert(0, 1);
        assert!(matches!(overlap.validate(), Err(TrackError::WordPartition { .. })));

        let mut empty_word = nine_phone();
        empty_word.words.push(Word { text: "x".into(), phone_indices: vec![] });
        assert!(matches!(empty_word.validate(), Err(TrackError::WordPartition { .. })));
    }

    #[test]
    fn negative_duration_reports_field_path() {
        let mut track = nine_phone();
        track.phones[4].duration = -0.01;
        assert_eq!(track.validate(), Err(TrackError::NegativeDuration { path: "phones[4].duration".into() }));
    }

    #[test]
    fn non_finite_and_malformed_documents() {
        let mut track = nine_phone();
        track.phones[0].energy = f64::NAN;
        assert_eq!(track.validate(), Err(TrackError::NonFinite { path: "phones[0].energy".into() }));

        let err =
            parse_track(br#"{"id":"u","text":"t","f0_domain":"hz","words":[],"phones":[{"symbol":"A"}]}"#).unwrap_err();
        match err {
            TrackError::Malformed { path, .. } => assert_eq!(path, "phones[0]"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_track(b"not json"), Err(TrackError::Malformed { .. })));
    }

    #[test]
    fn log_domain_requires_positive_voiced_f0() {
        let mut track = nine_phone();
        track.f0_domain = F0Domain::LogHz;
        for p in &mut track.phones {
            if p.voiced {
                p.f0 = p.f0.ln();
            }
        }
        track.validate().unwrap();
        track.phones[0].f0 = 0.0;
        assert!(matches!(track.validate(), Err(TrackError::NonPositiveLogF0 { .. })));
    }

    #[test]
    fn empty_track_fails_validation() {
        let mut track = nine_phone();
        track.phones.clear();
        track.words.clear();
        assert_eq!(track.validate(), Err(TrackError::Empty));
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let track = nine_phone();
        let doc = serialize_track(&track);
        assert!(doc.ends_with(b"\n"));
        let parsed = parse_track(&doc).unwrap();
        assert_eq!(parsed, track);
        assert_eq!(serialize_track(&parsed), doc);
        assert_eq!(serialize_track(&track), doc);
    }

    #[test]
    fn canonical_key_order() {
        let doc = String::from_utf8(serialize_track(&nine_phone())).unwrap();
        let pos = |k: &str| doc.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("id") < pos("text") && pos("text") < pos("f0_domain"));
        assert!(pos("f0_domain") < pos("words") && pos("words") < pos("phones"));
        assert!(pos("symbol") < pos("voiced") && pos("voiced") < pos("energy"));
    }

    fn arb_track() -> impl Strategy<Value = UtteranceTrack> {
        let phone = (any::<bool>(), 1e-3f64..1e4, 0f64..50.0, 0f64..2.0).prop_map(|(voiced, f0, energy, duration)| {
            phone("P", voiced, if voiced { f0 } else { 0.0 }, energy, duration)
        });
        prop::collection::vec(prop::collection::vec(phone, 1..6), 1..6)
            .prop_map(|groups| track(groups.into_iter().map(|g| ("w", g)).collect()))
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(track in arb_track()) {
            let doc = serialize_track(&track);
            let parsed = parse_track(&doc).unwrap();
            prop_assert_eq!(&parsed, &track);
            prop_assert_eq!(serialize_track(&parsed), doc);
        }

        #[test]
        fn random_index_mutation_is_caught(track in arb_track(), w in 0usize..6, j in 0usize..6, delta in 1usize..10, up in any::<bool>()) {
            let mut track = track;
            let w = w % track.words.len();
            let j = j % track.words[w].phone_indices.len();
            let idx = &mut track.words[w].phone_indices[j];
            *idx = if up { *idx + delta } else { idx.wrapping_sub(delta) };
            let caught = matches!(track.validate(), Err(TrackError::WordPartition { .. }));
            prop_assert!(caught);
        }
    }
}
