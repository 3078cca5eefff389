//! Spectral features: DFT, framed STFT, HTK mel filterbank, dB-re-max log-mel
//! spectrograms and their 224×224 image rendering.

use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::TARGET_RATE;
use crate::error::{Error, Result};

/// Guard added to mel energies before taking the logarithm.
pub const LOG_GUARD: f64 = 1e-10;
pub const DEFAULT_FLOOR_DB: f64 = -80.0;
pub const DEFAULT_IMAGE_SIZE: usize = 224;

/// Discrete Fourier transform, `X[k] = Σ_n x[n] e^{-j2πkn/N}`.
pub fn dft(signal: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 512-point FFT, 25 ms window, 10 ms hop at 16 kHz.
    fn default() -> Self {
        Self {
            fft_size: 512,
            window_len: 400,
            hop: 160,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.window_len > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "stft window_len {} must be in 1..={}",
                self.window_len, self.fft_size
            )));
        }
        if self.hop == 0 {
            return Err(Error::InvalidConfig("stft hop must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop
        }
    }

    /// Periodic window of `window_len` samples.
    pub fn window_coefficients(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        match self.window {
            WindowKind::Hann => (0..self.window_len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
                .collect(),
        }
    }
}

/// Reusable STFT plan.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            window: cfg.window_coefficients(),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// One-sided spectra, `n_frames × (fft_size/2 + 1)`. Frame `f` covers
    /// `[f·hop, f·hop + window_len)`; no edge padding.
    pub fn process(&self, signal: &[f64]) -> Result<Array2<Complex64>> {
        let cfg = &self.cfg;
        if signal.len() < cfg.window_len {
            return Err(Error::SignalTooShort {
                len: signal.len(),
                window: cfg.window_len,
            });
        }
        let n_frames = cfg.n_frames(signal.len());
        let n_bins = cfg.n_bins();
        let mut out = Array2::zeros((n_frames, n_bins));
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for f in 0..n_frames {
            let frame = &signal[f * cfg.hop..f * cfg.hop + cfg.window_len];
            for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *b = Complex64::new(x * w, 0.0);
            }
            buf[cfg.window_len..].fill(Complex64::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, &v) in out.row_mut(f).iter_mut().zip(&buf[..n_bins]) {
                *o = v;
            }
        }
        Ok(out)
    }
}

pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Array2<Complex64>> {
    Stft::new(cfg.clone())?.process(signal)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 128,
            f_min: 0.0,
            f_max: 8_000.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::InvalidConfig("n_mels must be at least 1".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {}..{}",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }
}

/// Triangular mel filters, one row per band, each row summing to 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Array2<f64>,
    /// Bands whose triangle contains no FFT bin. These are replaced by a unit
    /// weight on the bin nearest the band centre.
    pub collapsed: Vec<usize>,
}

pub fn mel_filterbank(cfg: &MelConfig, fft_size: usize, sample_rate: u32) -> Result<MelFilterbank> {
    cfg.validate(sample_rate)?;
    let n_bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();

    let mut weights = Array2::zeros((cfg.n_mels, n_bins));
    let mut collapsed = Vec::new();
    for m in 0..cfg.n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut row = weights.row_mut(m);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - left) / (centre - left);
            let fall = (right - f) / (right - centre);
            *w = rise.min(fall).max(0.0);
        }
        let sum: f64 = row.sum();
        if sum > 0.0 {
            row.mapv_inplace(|w| w / sum);
        } else {
            let nearest = ((centre / bin_hz).round() as usize).min(n_bins - 1);
            row[nearest] = 1.0;
            collapsed.push(m);
        }
    }
    if !collapsed.is_empty() {
        log::debug!(
            "{} of {} mel bands narrower than one FFT bin: {:?}",
            collapsed.len(),
            cfg.n_mels,
            collapsed
        );
    }
    Ok(MelFilterbank { weights, collapsed })
}

/// Mel-band × frame matrix in dB relative to its own maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramMatrix {
    pub values: Array2<f64>,
    pub floor_db: f64,
    /// Set when the input carried no energy; every cell is then 0 dB.
    pub degenerate: bool,
}

impl SpectrogramMatrix {
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Full log-mel front-end with cached FFT plan and filterbank.
pub struct LogMel {
    stft: Stft,
    bank: MelFilterbank,
    floor_db: f64,
}

impl LogMel {
    pub fn new(stft_cfg: StftConfig, mel_cfg: &MelConfig, floor_db: f64) -> Result<Self> {
        let bank = mel_filterbank(mel_cfg, stft_cfg.fft_size, TARGET_RATE)?;
        if floor_db.is_nan() || floor_db >= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "floor_db must be negative, got {floor_db}"
            )));
        }
        Ok(Self {
            stft: Stft::new(stft_cfg)?,
            bank,
            floor_db,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Mel power in dB before re-referencing to the maximum.
    pub fn mel_db(&self, signal: &[f64]) -> Result<Array2<f64>> {
        let spec = self.stft.process(signal)?;
        let power = spec.mapv(|c| c.norm_sqr());
        let mel = self.bank.weights.dot(&power.t());
        Ok(mel.mapv(|e| 10.0 * (e + LOG_GUARD).log10()))
    }

    pub fn compute(&self, signal: &[f64]) -> Result<SpectrogramMatrix> {
        let mut db = self.mel_db(signal)?;
        let max = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let degenerate = !signal.iter().any(|&x| x != 0.0);
        if degenerate {
            log::warn!("degenerate spectrogram: input signal is all zeros");
        }
        let floor = self.floor_db;
        db.mapv_inplace(|v| (v - max).max(floor));
        Ok(SpectrogramMatrix {
            values: db,
            floor_db: floor,
            degenerate,
        })
    }
}

pub fn log_mel(
    signal: &[f64],
    stft_cfg: &StftConfig,
    mel_cfg: &MelConfig,
    floor_db: f64,
) -> Result<SpectrogramMatrix> {
    LogMel::new(stft_cfg.clone(), mel_cfg, floor_db)?.compute(signal)
}

/// 8-bit RGB image with three identical channels, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major grey levels; expanded to RGB on encode.
    pub pixels: Vec<u8>,
}

impl GrayRgbImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn rgb_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|&g| [g, g, g]).collect()
    }

    pub fn encode_png(&self) -> std::result::Result<Vec<u8>, png::EncodingError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.rgb_bytes())?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png().map_err(|source| Error::Png {
            path: path.to_owned(),
            source,
        })?;
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        std::io::Write::write_all(&mut w, &bytes).map_err(|e| Error::io(path, e))
    }
}

/// Map `[floor_db, 0]` linearly onto `[0, 255]`, bilinearly resize to
/// `size × size` (pixel-centre alignment) and flip so the lowest band is the
/// bottom row.
pub fn render_image(spec: &SpectrogramMatrix, size: usize) -> GrayRgbImage {
    assert!(spec.n_mels() > 0 && spec.n_frames() > 0, "empty spectrogram");
    assert!(size > 0, "image size must be positive");
    let floor = spec.floor_db;
    let level = spec
        .values
        .mapv(|v| ((v - floor) / -floor).clamp(0.0, 1.0) * 255.0);
    let (rows_in, cols_in) = level.dim();

    let axis = |n_in: usize| -> Vec<(usize, usize, f64)> {
        (0..size)
            .map(|d| {
                let src = ((d as f64 + 0.5) * n_in as f64 / size as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let row_map = axis(rows_in);
    let col_map = axis(cols_in);

    let mut pixels = vec![0u8; size * size];
    for (r_from_bottom, &(r0, r1, fr)) in row_map.iter().enumerate() {
        let out_row = size - 1 - r_from_bottom;
        for (c, &(c0, c1, fc)) in col_map.iter().enumerate() {
            let top = level[[r0, c0]] * (1.0 - fc) + level[[r0, c1]] * fc;
            let bottom = level[[r1, c0]] * (1.0 - fc) + level[[r1, c1]] * fc;
            let v = top * (1.0 - fr) + bottom * fr;
            pixels[out_row * size + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayRgbImage {
        width: size,
        height: size,
        pixels,
    }
}
