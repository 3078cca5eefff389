//! Mono audio clips, WAV I/O, band-limited resampling and peak normalization.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;

use crate::error::{Error, Result};

/// Working sample rate of every downstream stage.
pub const TARGET_RATE: u32 = 16_000;

/// Peak level applied to source recordings at ingest.
pub const INGEST_PEAK: f64 = 0.9;

const PCM16_SCALE: f64 = 32768.0;

/// A mono buffer of samples at a fixed rate. Nominal amplitude range is [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidClip("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::InvalidClip("clip has no samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    /// Scale so that `max |x| == peak`. All-zero clips are returned unchanged.
    pub fn peak_normalize(&self, peak: f64) -> AudioClip {
        assert!(peak > 0.0 && peak <= 1.0, "peak must lie in (0, 1]");
        let current = self.peak();
        if current == 0.0 {
            return self.clone();
        }
        let gain = peak / current;
        AudioClip {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Band-limited resampling to `target_rate`. Output length is
    /// `round(len * target_rate / sample_rate)`.
    pub fn resample(&self, target_rate: u32) -> AudioClip {
        assert!(target_rate > 0, "target rate must be positive");
        if target_rate == self.sample_rate {
            return self.clone();
        }
        let samples = Resampler::new(self.sample_rate, target_rate).process(&self.samples);
        AudioClip {
            samples,
            sample_rate: target_rate,
        }
    }
}

/// Read a RIFF/WAVE file (16-bit PCM or 32-bit float) and downmix to mono by channel mean.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path)
}

/// Decode an in-memory WAVE file. `path` is used only for error messages.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::new(io::Cursor::new(bytes)).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat {
            path: path.to_owned(),
            reason: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_owned(),
                reason: format!("{bits}-bit {format:?} samples"),
            })
        }
    };
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyAudio(path.to_owned()));
    }
    AudioClip::new(samples, spec.sample_rate)
}

fn wav_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.to_owned(),
            reason: "unsupported WAVE encoding".into(),
        },
        hound::Error::FormatError(reason) => Error::UnsupportedFormat {
            path: path.to_owned(),
            reason: reason.into(),
        },
        other => Error::Wav {
            path: path.to_owned(),
            source: other,
        },
    }
}

/// Quantize one sample to 16-bit PCM after clamping to [-1, 1].
pub fn quantize_pcm16(sample: f64) -> i16 {
    let scaled = (sample.clamp(-1.0, 1.0) * PCM16_SCALE).round();
    scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Encode a clip as a mono 16-bit PCM WAVE byte stream.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = io::Cursor::new(Vec::with_capacity(44 + 2 * clip.len()));
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory wav header write");
        let mut samples = writer.get_i16_writer(clip.len() as u32);
        for &s in &clip.samples {
            samples.write_sample(quantize_pcm16(s));
        }
        samples.flush().expect("in-memory wav write");
        writer.finalize().expect("in-memory wav finalize");
    }
    cursor.into_inner()
}

/// Write a clip as mono 16-bit PCM. Samples are clamped to [-1, 1] before quantization.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip)).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.0;
const MAX_PHASE_TABLE: u64 = 4096;

/// Kaiser-windowed sinc interpolator between two fixed rates.
///
/// Output sample `m` sits at input position `m * from / to`. For rational rate
/// pairs with a small number of distinct fractional positions the weights are
/// tabulated per phase; otherwise they are evaluated per output sample.
struct Resampler {
    from: u64,
    to: u64,
    cutoff: f64,
    half_width: f64,
    reach: i64,
    i0_beta: f64,
    phases: HashMap<u64, Vec<f64>>,
    tabulate: bool,
}

impl Resampler {
    fn new(from: u32, to: u32) -> Self {
        let (from, to) = (from as u64, to as u64);
        let cutoff = (to as f64 / from as f64).min(1.0);
        let half_width = ZERO_CROSSINGS / cutoff;
        let g = gcd(from, to);
        Self {
            from,
            to,
            cutoff,
            half_width,
            reach: half_width.ceil() as i64 + 1,
            i0_beta: bessel_i0(KAISER_BETA),
            phases: HashMap::new(),
            tabulate: to / g <= MAX_PHASE_TABLE,
        }
    }

    fn weights(&self, remainder: u64) -> Vec<f64> {
        let frac = remainder as f64 / self.to as f64;
        let mut w: Vec<f64> = (-self.reach..=self.reach)
            .map(|j| {
                let d = frac - j as f64;
                if d.abs() >= self.half_width {
                    return 0.0;
                }
                let x = d / self.half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / self.i0_beta;
                self.cutoff * sinc(self.cutoff * d) * window
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total != 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
        }
        w
    }

    fn process(&mut self, input: &[f64]) -> Vec<f64> {
        let out_len = ((input.len() as f64) * self.to as f64 / self.from as f64).round() as usize;
        let len = input.len() as i64;
        let mut out = Vec::with_capacity(out_len);
        for m in 0..out_len as u64 {
            let pos = m * self.from;
            let base = (pos / self.to) as i64;
            let rem = pos % self.to;
            let computed;
            let weights: &[f64] = if self.tabulate {
                if !self.phases.contains_key(&rem) {
                    let w = self.weights(rem);
                    self.phases.insert(rem, w);
                }
                &self.phases[&rem]
            } else {
                computed = self.weights(rem);
                &computed
            };
            let mut acc = 0.0;
            for (k, &w) in weights.iter().enumerate() {
                let n = base + k as i64 - self.reach;
                if w != 0.0 && n >= 0 && n < len {
                    acc += w * input[n as usize];
                }
            }
            out.push(acc);
        }
        out
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
