mod common;

use std::fs;

use proptest::prelude::*;
use swarmforge::audio::{load_wav, write_wav, AudioClip};
use swarmforge::Error;

/// Pull the data chunk out of a RIFF file without going through the reader under test.
fn data_chunk(bytes: &[u8]) -> &[u8] {
    assert_eq!(&bytes[0..4], b"RIFF");
    assert_eq!(&bytes[8..12], b"WAVE");
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        if id == b"data" {
            return &bytes[pos + 8..pos + 8 + len];
        }
        pos += 8 + len + (len & 1);
    }
    panic!("no data chunk");
}

fn fmt_tag(bytes: &[u8]) -> u16 {
    assert_eq!(&bytes[12..16], b"fmt ");
    u16::from_le_bytes([bytes[20], bytes[21]])
}

fn write_with_hound(path: &std::path::Path, spec: hound::WavSpec, frames: &[Vec<f32>]) {
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for frame in frames {
        for &s in frame {
            match (spec.sample_format, spec.bits_per_sample) {
                (hound::SampleFormat::Float, 32) => w.write_sample(s).unwrap(),
                (hound::SampleFormat::Int, 16) => w.write_sample((s * 32767.0) as i16).unwrap(),
                (hound::SampleFormat::Int, 24) => w.write_sample((s * 8_388_607.0) as i32).unwrap(),
                _ => unreachable!(),
            }
        }
    }
    w.finalize().unwrap();
}

#[test]
fn one_second_at_8k() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    let clip = AudioClip::new(vec![0.25; 8_000], 8_000).unwrap();
    write_wav(&clip, &path).unwrap();
    let back = load_wav(&path).unwrap();
    assert_eq!(back.len(), 8_000);
    assert_eq!(back.sample_rate(), 8_000);
}

#[test]
fn opposite_stereo_channels_cancel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let frames: Vec<Vec<f32>> = (0..1_000)
        .map(|i| {
            let c = ((i % 50) as f32 / 50.0) - 0.5;
            vec![c, -c]
        })
        .collect();
    write_with_hound(&path, spec, &frames);
    let mono = load_wav(&path).unwrap();
    assert_eq!(mono.len(), 1_000);
    assert!(mono.samples().iter().all(|&s| s == 0.0));
}

/// Plain (non-extensible) WAVE file with format tag 3.
fn float32_wav(rate: u32, samples: &[f32]) -> Vec<u8> {
    let data_len = (samples.len() * 4) as u32;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(4 + 24 + 8 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&3u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&rate.to_le_bytes());
    b.extend_from_slice(&(rate * 4).to_le_bytes());
    b.extend_from_slice(&4u16.to_le_bytes());
    b.extend_from_slice(&32u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        b.extend_from_slice(&s.to_le_bytes());
    }
    b
}

#[test]
fn reads_float32() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.wav");
    fs::write(&path, float32_wav(44_100, &[0.5, -0.125, 1.5])).unwrap();
    assert_eq!(fmt_tag(&fs::read(&path).unwrap()), 3);
    let clip = load_wav(&path).unwrap();
    assert_eq!(clip.sample_rate(), 44_100);
    assert_eq!(clip.samples(), &[0.5, -0.125, 1.5]);
}

#[test]
fn reads_extensible_float32() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fx.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    write_with_hound(&path, spec, &[vec![0.25], vec![-0.75]]);
    assert_eq!(load_wav(&path).unwrap().samples(), &[0.25, -0.75]);
}

#[test]
fn rejects_24_bit_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("24.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 24,
        sample_format: hound::SampleFormat::Int,
    };
    write_with_hound(&path, spec, &[vec![0.1], vec![0.2]]);
    assert!(matches!(load_wav(&path), Err(Error::UnsupportedFormat { .. })));
    assert!(matches!(
        load_wav(dir.path().join("missing.wav")),
        Err(Error::FileNotFound(_))
    ));

    let junk = dir.path().join("junk.wav");
    fs::write(&junk, b"RIFF\x04\x00\x00\x00MP3 ").unwrap();
    assert!(matches!(load_wav(&junk), Err(Error::UnsupportedFormat { .. })));
}

#[test]
fn written_file_is_pcm16_mono_with_expected_data_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.wav");
    let clip = AudioClip::new(vec![0.1; 16_000], 16_000).unwrap();
    write_wav(&clip, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(fmt_tag(&bytes), 1);
    assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 1, "channels");
    assert_eq!(data_chunk(&bytes).len(), 32_000);
}

#[test]
fn clamps_then_quantizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.wav");
    let clip = AudioClip::new(vec![1.5, -1.5, 0.5, 0.0], 16_000).unwrap();
    write_wav(&clip, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    let data = data_chunk(&bytes);
    let values: Vec<i16> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect();
    assert_eq!(values, vec![32767, -32768, 16384, 0]);
}

#[test]
fn round_trip_matches_byte_level_decode() {
    let dir = tempfile::tempdir().unwrap();
    let mut lcg = common::Lcg(99);
    let clip = AudioClip::new(lcg.signal(5_000), 16_000).unwrap();
    let first = dir.path().join("1.wav");
    write_wav(&clip, &first).unwrap();
    let loaded = load_wav(&first).unwrap();

    let bytes = fs::read(&first).unwrap();
    let decoded: Vec<f64> = data_chunk(&bytes)
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    assert_eq!(loaded.samples(), &decoded[..]);
    for (a, b) in clip.samples().iter().zip(loaded.samples()) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }

    // A second pass through write/read is lossless.
    let second = dir.path().join("2.wav");
    write_wav(&loaded, &second).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    assert_eq!(load_wav(&second).unwrap().len(), clip.len());
}

fn clip_strategy() -> impl Strategy<Value = AudioClip> {
    prop::collection::vec(-2.0f64..2.0, 1..400).prop_map(|v| AudioClip::new(v, 16_000).unwrap())
}

proptest! {
    #[test]
    fn normalized_peak_is_exact(clip in clip_strategy()) {
        prop_assume!(clip.peak() > 0.0);
        let n = clip.peak_normalize(0.9);
        prop_assert!((n.peak() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn normalize_is_idempotent(clip in clip_strategy()) {
        let once = clip.peak_normalize(0.9);
        let twice = once.peak_normalize(0.9);
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_is_rate_idempotent(v in prop::collection::vec(-1.0f64..1.0, 50..300), rate in 8_000u32..48_000) {
        let clip = AudioClip::new(v, rate).unwrap();
        let once = clip.resample(16_000);
        prop_assert_eq!(once.resample(16_000), once.clone());
        prop_assert_eq!(once.len(), (clip.len() as f64 * 16_000.0 / rate as f64).round() as usize);
    }
}
