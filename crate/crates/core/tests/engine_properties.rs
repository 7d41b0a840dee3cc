//! Property tests of the edit engine over randomly generated tracks.

use proptest::prelude::*;
use prosody_core::engine::{allowed_target_range, apply_edits, word_mean, Edit, EditState, UtteranceEdit, WordEdit};
use prosody_core::stats::{ClampConfig, CorpusStats, FeatureStats};
use prosody_core::track::{F0Domain, FeatureKind, Phone, UtteranceTrack, Word};

fn stats() -> CorpusStats {
    CorpusStats {
        f0_domain: F0Domain::Hz,
        f0: FeatureStats { mean: 180.0, std: 40.0, count: 1000 },
        energy: FeatureStats { mean: 1.0, std: 0.3, count: 1000 },
        clamp: ClampConfig::default(),
    }
}

/// Words of 1..5 phones with values inside the clamp bounds; some phones voiceless.
fn arb_track() -> impl Strategy<Value = UtteranceTrack> {
    let phone = (any::<bool>(), 70.0..290.0f64, 0.6..1.4f64, 0.02..0.2f64)
        .prop_map(|(voiced, f0, energy, duration)| (voiced, f0, energy, duration));
    prop::collection::vec(prop::collection::vec(phone, 1..5), 1..6).prop_map(|words| {
        let mut phones = Vec::new();
        let mut out_words = Vec::new();
        for (w, group) in words.into_iter().enumerate() {
            let mut idx = Vec::new();
            for (voiced, f0, energy, duration) in group {
                idx.push(phones.len());
                phones.push(Phone {
                    symbol: if voiced { "AA".into() } else { "S".into() },
                    voiced,
                    f0: if voiced { f0 } else { 0.0 },
                    energy,
                    duration,
                });
            }
            out_words.push(Word { text: format!("w{w}"), phone_indices: idx });
        }
        UtteranceTrack { id: "p".into(), text: String::new(), f0_domain: F0Domain::Hz, words: out_words, phones }
    })
}

fn scalar_feature() -> impl Strategy<Value = FeatureKind> {
    prop_oneof![Just(FeatureKind::F0), Just(FeatureKind::Energy)]
}

proptest! {
    #[test]
    fn feasible_target_is_hit_and_stays_local(track in arb_track(), feature in scalar_feature(), w in 0usize..6, t in 0.0..1.0f64) {
        let w = w % track.words.len();
        let stats = stats();
        let Ok(range) = allowed_target_range(&track, w, feature, &stats) else { return Ok(()) };
        prop_assume!(!range.is_degenerate());
        let target = range.lo + t * (range.hi - range.lo);
        let edited = apply_edits(&track, &[WordEdit { word_index: w, feature, value: target }.into()], &stats).unwrap();
        let got = word_mean(&edited, w, feature).unwrap();
        prop_assert!((got - target).abs() <= 1e-9 * target.abs().max(1.0));
        let bounds = stats.clamp_bounds(feature).unwrap();
        let in_word = &track.words[w].phone_indices;
        for (i, (a, b)) in track.phones.iter().zip(&edited.phones).enumerate() {
            if !in_word.contains(&i) || !a.contributes_to(feature) {
                prop_assert_eq!(a, b);
            } else {
                prop_assert!(bounds.contains(b.feature(feature)));
            }
        }
    }

    #[test]
    fn utterance_shift_equals_word_edits(track in arb_track(), feature in scalar_feature(), t in 0.0..1.0f64) {
        let stats = stats();
        let state = EditState::new(track.clone(), &stats).unwrap();
        let Ok(range) = state.utterance_range(feature) else { return Ok(()) };
        prop_assume!(!range.is_degenerate());
        let delta = range.lo + t * (range.hi - range.lo);
        let utt = apply_edits(&track, &[UtteranceEdit { feature, value: delta }.into()], &stats).unwrap();
        let words: Vec<Edit> = state.decompose(&UtteranceEdit { feature, value: delta }).unwrap().into_iter().map(Edit::from).collect();
        prop_assert_eq!(utt, apply_edits(&track, &words, &stats).unwrap());
    }

    #[test]
    fn last_write_wins(track in arb_track(), feature in scalar_feature(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let stats = stats();
        let Ok(range) = allowed_target_range(&track, 0, feature, &stats) else { return Ok(()) };
        prop_assume!(!range.is_degenerate());
        let at = |t: f64| Edit::from(WordEdit { word_index: 0, feature, value: range.lo + t * (range.hi - range.lo) });
        prop_assert_eq!(apply_edits(&track, &[at(a), at(b)], &stats).unwrap(), apply_edits(&track, &[at(b)], &stats).unwrap());
    }

    #[test]
    fn duration_scale_does_not_touch_other_features(track in arb_track(), scale in 0.0..=2.0f64) {
        let edited = apply_edits(&track, &[UtteranceEdit { feature: FeatureKind::Duration, value: scale }.into()], &stats()).unwrap();
        for (a, b) in track.phones.iter().zip(&edited.phones) {
            prop_assert_eq!((a.f0, a.energy, a.voiced), (b.f0, b.energy, b.voiced));
            prop_assert_eq!(b.duration, a.duration * scale);
        }
    }
}
