//! Human-in-the-loop prosody editing.
//!
//! Phone-level F0, energy and duration tracks are edited through word- and
//! utterance-level controls, edits are journaled per session, and the
//! resulting original/edited pairs feed listening-test analysis.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod session;
pub mod stats;
pub mod synth;
pub mod track;

pub use analysis::{aggregate_table, cosine_distance, edit_distribution, linear_fit, MeanStd, RegressionFit};
pub use engine::{
    allowed_target_range, allowed_utterance_range, apply_edits, apply_word_duration_edit, apply_word_scalar_edit,
    decompose_utterance_edit, word_mean, ApplyError, Edit, EditState, EngineError, SliderPanel, SliderState,
    TargetRange, UtteranceEdit, WordEdit,
};
pub use session::{Confidence, CorpusExport, ExportFilter, ExportRecord, SessionError, SessionStore, SessionView};
pub use stats::{compute_stats, ClampBounds, ClampConfig, CorpusStats, FeatureStats, StatsError, StatsOptions};
pub use synth::{render_mock, AudioBuffer, SynthBackend, SynthError, Synthesizer};
pub use track::{parse_track, serialize_track, F0Domain, FeatureKind, Phone, TrackError, UtteranceTrack, Word};
