//! Remote synthesizer adapter protocol against in-process stub adapters.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use prosody_core::synth::{encode_wav, render_mock, AudioBuffer, SynthBackend, SynthError, Synthesizer};
use prosody_core::track::{parse_track, F0Domain, Phone, UtteranceTrack, Word};

fn track() -> UtteranceTrack {
    let phone = |s: &str, voiced, f0, energy, duration| Phone { symbol: s.into(), voiced, f0, energy, duration };
    UtteranceTrack {
        id: "remote".into(),
        text: "so yes".into(),
        f0_domain: F0Domain::Hz,
        words: vec![
            Word { text: "so".into(), phone_indices: vec![0, 1] },
            Word { text: "yes".into(), phone_indices: vec![2, 3, 4] },
        ],
        phones: vec![
            phone("S", false, 0.0, 0.3, 0.08),
            phone("OW1", true, 180.0, 1.0, 0.15),
            phone("Y", true, 170.0, 0.6, 0.05),
            phone("EH1", true, 210.0, 1.1, 0.12),
            phone("S", false, 0.0, 0.25, 0.09),
        ],
    }
}

/// Serves `requests` POSTs, answering each with `respond(body)`.
fn stub(requests: usize, respond: impl Fn(&[u8]) -> Vec<u8> + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            assert!(request_line.starts_with("POST /synthesize "), "{request_line}");
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let wav = respond(&body);
            let head = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: audio/wav\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                wav.len()
            );
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(&wav).unwrap();
        }
    });
    format!("http://{addr}")
}

fn echo(body: &[u8]) -> Vec<u8> {
    let track = parse_track(body).expect("adapter receives a canonical track");
    encode_wav(&render_mock(&track, 22_050).unwrap())
}

#[test]
fn loopback_adapter_matches_local_mock() {
    let url = stub(1, echo);
    let remote = Synthesizer::new(SynthBackend::Remote { url }, 22_050).synthesize(&track()).unwrap();
    let local = render_mock(&track(), 22_050).unwrap();
    assert_eq!(encode_wav(&remote), encode_wav(&local));
}

#[test]
fn eight_bit_wav_is_unsupported() {
    let url = stub(1, |_| {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22_050,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = std::io::Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(0i8).unwrap();
        }
        w.finalize().unwrap();
        cursor.into_inner()
    });
    let err = Synthesizer::new(SynthBackend::Remote { url }, 22_050).synthesize(&track()).unwrap_err();
    assert!(matches!(err, SynthError::UnsupportedEncoding(_)), "{err}");
}

#[test]
fn sample_rate_mismatch_is_rejected() {
    let url = stub(1, |_| encode_wav(&AudioBuffer { sample_rate: 16_000, samples: vec![0.0; 16] }));
    let err = Synthesizer::new(SynthBackend::Remote { url }, 22_050).synthesize(&track()).unwrap_err();
    assert_eq!(err, SynthError::SampleRateMismatch { expected: 22_050, got: 16_000 });
}

#[test]
fn garbage_response_is_malformed() {
    let url = stub(1, |_| b"definitely not a wav".to_vec());
    let err = Synthesizer::new(SynthBackend::Remote { url }, 22_050).synthesize(&track()).unwrap_err();
    assert!(matches!(err, SynthError::MalformedWav(_)), "{err}");
}
