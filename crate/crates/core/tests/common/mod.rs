#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use swarmforge::{AudioClip, ChunkBank, SpeciesId};

/// Nominal wingbeat fundamentals used for toy sources, Hz.
pub fn fundamental(species: SpeciesId) -> f64 {
    match species {
        SpeciesId::AeAegypti => 480.0,
        SpeciesId::AeAlbopictus => 550.0,
        SpeciesId::AnArabiensis => 420.0,
        SpeciesId::AnGambiae => 450.0,
        SpeciesId::CxQuinquefasciatus => 380.0,
        SpeciesId::CxPipiens => 350.0,
    }
}

/// A harmonic tone with slow amplitude modulation, standing in for a flight recording.
pub fn wingbeat(species: SpeciesId, rate: u32, seconds: f64, variant: u32) -> AudioClip {
    let f0 = fundamental(species) * (1.0 + 0.01 * variant as f64);
    let n = (seconds * rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let env = 0.6 + 0.4 * (2.0 * PI * (1.3 + variant as f64 * 0.2) * t).sin();
            let tone = (2.0 * PI * f0 * t).sin()
                + 0.5 * (2.0 * PI * 2.0 * f0 * t + 0.3).sin()
                + 0.25 * (2.0 * PI * 3.0 * f0 * t + 1.1).sin();
            0.3 * env * tone
        })
        .collect();
    AudioClip::new(samples, rate).unwrap()
}

/// Write one source file per (species, variant) under `dir` at a non-target rate.
pub fn write_sources(dir: &Path, per_species: u32, seconds: f64) -> Vec<(PathBuf, SpeciesId)> {
    std::fs::create_dir_all(dir).unwrap();
    let mut out = Vec::new();
    for sp in SpeciesId::ALL {
        for v in 0..per_species {
            let path = dir.join(format!("{}_{v}.wav", sp.dir_name()));
            swarmforge::write_wav(&wingbeat(sp, 22_050, seconds, v), &path).unwrap();
            out.push((path, sp));
        }
    }
    out
}

pub fn toy_bank(root: &Path, per_species: u32, seconds: f64, seed: u64) -> ChunkBank {
    let sources = write_sources(&root.join("sources"), per_species, seconds);
    ChunkBank::build(root.join("bank"), &sources, seed).unwrap()
}

/// O(N²) evaluation of X[k] = Σ x[n] e^{-j2πkn/N}.
pub fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let angle = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                    Complex64::from_polar(v, angle)
                })
                .sum()
        })
        .collect()
}

/// Small deterministic LCG for test signals, independent of the crate's RNG.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn signal(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| 2.0 * self.next_f64() - 1.0).collect()
    }
}
