//! Audio rendering for tracks.
//!
//! The mock renderer turns a track into a sine-plus-noise signal that
//! carries its prosody: voiced phones become a continuous-phase sine at
//! the phone's F0, voiceless phones become fixed-seed noise, amplitude
//! follows energy, and every phone occupies exactly its duration.
//! A remote backend forwards the canonical track document to an external
//! synthesizer over HTTP and decodes the PCM WAV it returns.

use std::f64::consts::TAU;
use std::io::Cursor;
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::track::{serialize_track, F0Domain, UtteranceTrack};

pub const DEFAULT_SAMPLE_RATE: u32 = 22_050;
pub const CROSSFADE_SECONDS: f64 = 0.005;
pub const PEAK_AMPLITUDE: f64 = 0.9;
const NOISE_SEED: u64 = 0x0050_524f_534f_4459;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl AudioBuffer {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("phone {phone}: f0 {f0_hz} Hz is at or above the Nyquist frequency {nyquist} Hz")]
    AboveNyquist { phone: usize, f0_hz: f64, nyquist: f64 },
    #[error("phone {phone}: voiced phone has non-positive f0 {f0_hz} Hz")]
    NonPositiveF0 { phone: usize, f0_hz: f64 },
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("synthesizer adapter failed: {0}")]
    Adapter(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("sample rate mismatch: expected {expected} Hz, adapter returned {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
}

/// Sample index at which each phone starts, plus the end of the last phone.
///
/// Boundaries are the rounded cumulative durations, so the buffer length is
/// `round(total * sample_rate)` and every phone is within one sample of its
/// exact length.
pub fn phone_boundaries(track: &UtteranceTrack, sample_rate: u32) -> Vec<usize> {
    let sr = f64::from(sample_rate);
    let mut cum = 0.0;
    let mut out = Vec::with_capacity(track.phones.len() + 1);
    out.push(0);
    for phone in &track.phones {
        cum += phone.duration;
        out.push((cum * sr).round() as usize);
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Voice {
    freq: f64,
    tone: f64,
    noise: f64,
}

impl Voice {
    fn lerp(a: Voice, b: Voice, t: f64) -> Voice {
        Voice {
            freq: a.freq + (b.freq - a.freq) * t,
            tone: a.tone + (b.tone - a.tone) * t,
            noise: a.noise + (b.noise - a.noise) * t,
        }
    }
}

fn voices(track: &UtteranceTrack, sample_rate: u32) -> Result<Vec<Voice>, SynthError> {
    let nyquist = f64::from(sample_rate) / 2.0;
    let mut hz = Vec::with_capacity(track.phones.len());
    for (i, phone) in track.phones.iter().enumerate() {
        if !phone.voiced {
            hz.push(None);
            continue;
        }
        let f = match track.f0_domain {
            F0Domain::Hz => phone.f0,
            F0Domain::LogHz => phone.f0.exp(),
        };
        if !(f > 0.0) {
            return Err(SynthError::NonPositiveF0 { phone: i, f0_hz: f });
        }
        if f >= nyquist {
            return Err(SynthError::AboveNyquist { phone: i, f0_hz: f, nyquist });
        }
        hz.push(Some(f));
    }
    let e_max = track.phones.iter().map(|p| p.energy).fold(0.0, f64::max);
    let first_voiced = hz.iter().flatten().next().copied().unwrap_or(0.0);
    let mut carry = first_voiced;
    Ok(track
        .phones
        .iter()
        .zip(&hz)
        .map(|(phone, f)| {
            let amp = if e_max > 0.0 { PEAK_AMPLITUDE * phone.energy / e_max } else { 0.0 };
            match f {
                Some(f) => {
                    carry = *f;
                    Voice { freq: *f, tone: amp, noise: 0.0 }
                }
                // Voiceless phones hold the last pitch so crossfades stay smooth.
                None => Voice { freq: carry, tone: 0.0, noise: amp },
            }
        })
        .collect())
}

/// Deterministically renders `track` to mono audio.
pub fn render_mock(track: &UtteranceTrack, sample_rate: u32) -> Result<AudioBuffer, SynthError> {
    if sample_rate == 0 {
        return Err(SynthError::InvalidSampleRate);
    }
    let voices = voices(track, sample_rate)?;
    let bounds = phone_boundaries(track, sample_rate);
    let n = voices.len();
    let total = bounds.last().copied().unwrap_or(0);
    let half = ((CROSSFADE_SECONDS * f64::from(sample_rate)).round() as usize) / 2;
    let len = |k: usize| bounds[k + 1] - bounds[k];
    // Half-width of the crossfade centred on the start of phone k.
    let fade: Vec<usize> = (0..n).map(|k| if k == 0 { 0 } else { half.min(len(k - 1) / 2).min(len(k) / 2) }).collect();

    let sr = f64::from(sample_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(NOISE_SEED);
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(total);
    for k in 0..n {
        for s in bounds[k]..bounds[k + 1] {
            let voice = if k > 0 && s < bounds[k] + fade[k] {
                let h = fade[k];
                let t = ((s + h - bounds[k]) as f64 + 0.5) / (2 * h) as f64;
                Voice::lerp(voices[k - 1], voices[k], t)
            } else if k + 1 < n && s + fade[k + 1] >= bounds[k + 1] {
                let h = fade[k + 1];
                let t = ((s + h - bounds[k + 1]) as f64 + 0.5) / (2 * h) as f64;
                Voice::lerp(voices[k], voices[k + 1], t)
            } else {
                voices[k]
            };
            let noise: f64 = rng.random_range(-1.0..1.0);
            let x = voice.tone * phase.sin() + voice.noise * noise;
            samples.push(x.clamp(-1.0, 1.0) as f32);
            phase += TAU * voice.freq / sr;
            if phase >= TAU {
                phase -= TAU;
            }
        }
    }
    Ok(AudioBuffer { sample_rate, samples })
}

/// RIFF WAV, 16-bit signed PCM, mono.
pub fn encode_wav(buffer: &AudioBuffer) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::with_capacity(44 + buffer.samples.len() * 2));
    {
        // Writing into memory cannot fail short of allocation failure.
        let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory WAV writer");
        for &s in &buffer.samples {
            let v = (f64::from(s) * f64::from(i16::MAX)).round() as i16;
            writer.write_sample(v).expect("in-memory WAV write");
        }
        writer.finalize().expect("in-memory WAV finalize");
    }
    cursor.into_inner()
}

/// Decodes a 16-bit PCM mono WAV; every other encoding is rejected.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, SynthError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| SynthError::MalformedWav(e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(SynthError::UnsupportedEncoding(format!(
            "{}-bit {:?}, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.channels != 1 {
        return Err(SynthError::UnsupportedEncoding(format!("{} channels, expected mono", spec.channels)));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| (f64::from(v) / f64::from(i16::MAX)).max(-1.0) as f32))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SynthError::MalformedWav(e.to_string()))?;
    Ok(AudioBuffer { sample_rate: spec.sample_rate, samples })
}

/// Where synthesis happens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SynthBackend {
    #[default]
    Mock,
    /// Base URL of an adapter exposing `POST /synthesize`.
    Remote { url: String },
}

impl std::fmt::Display for SynthBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SynthBackend::Mock => f.write_str("mock"),
            SynthBackend::Remote { url } => write!(f, "remote:{url}"),
        }
    }
}

impl FromStr for SynthBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "mock" {
            return Ok(SynthBackend::Mock);
        }
        match s.strip_prefix("remote:") {
            Some(url) if url.starts_with("http://") || url.starts_with("https://") => {
                Ok(SynthBackend::Remote { url: url.trim_end_matches('/').to_string() })
            }
            _ => Err(format!("unknown backend {s:?}; expected \"mock\" or \"remote:http://host:port\"")),
        }
    }
}

impl Serialize for SynthBackend {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SynthBackend {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub struct Synthesizer {
    pub backend: SynthBackend,
    pub sample_rate: u32,
    pub timeout: Duration,
}

impl Synthesizer {
    pub fn new(backend: SynthBackend, sample_rate: u32) -> Self {
        Self { backend, sample_rate, timeout: Duration::from_secs(30) }
    }

    pub fn mock() -> Self {
        Self::new(SynthBackend::Mock, DEFAULT_SAMPLE_RATE)
    }

    pub fn synthesize(&self, track: &UtteranceTrack) -> Result<AudioBuffer, SynthError> {
        match &self.backend {
            SynthBackend::Mock => render_mock(track, self.sample_rate),
            SynthBackend::Remote { url } => self.synthesize_remote(url, track),
        }
    }

    fn synthesize_remote(&self, base: &str, track: &UtteranceTrack) -> Result<AudioBuffer, SynthError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let body = serialize_track(track);
        let mut response = agent
            .post(&format!("{base}/synthesize"))
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(|e| SynthError::Adapter(e.to_string()))?;
        let bytes = response
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(|e| SynthError::Adapter(e.to_string()))?;
        let buffer = decode_wav(&bytes)?;
        if buffer.sample_rate != self.sample_rate {
            return Err(SynthError::SampleRateMismatch { expected: self.sample_rate, got: buffer.sample_rate });
        }
        Ok(buffer)
    }
}
