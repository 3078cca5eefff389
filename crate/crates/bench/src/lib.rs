//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use ndarray::Array2;
use swarmforge::seed::rng_from_seed;
use swarmforge::synth::SynthConfig;
use swarmforge::{draw_recipe, Catalog, ChunkRef, MemorySource, SpeciesId, SwarmRecipe};

pub fn tone_signal(len: usize, rate: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let t = i as f64 / rate;
            0.5 * (2.0 * PI * 470.0 * t).sin() + 0.2 * (2.0 * PI * 940.0 * t).sin()
        })
        .collect()
}

/// An in-memory bank of eight 0.5 s chunks per species.
pub fn memory_bank() -> (Catalog, MemorySource) {
    let mut refs = Vec::new();
    let mut src = MemorySource::new();
    for sp in SpeciesId::ALL {
        for k in 0..8 {
            let id = format!("audio/{}/bench.wav#{k:04}", sp.dir_name());
            refs.push(ChunkRef {
                chunk_id: id.clone(),
                species: sp,
                source_file: format!("audio/{}/bench.wav", sp.dir_name()),
                start_s: 0.5 * k as f64,
                duration_s: 0.5,
                hash: 0,
            });
            src.insert(id, tone_signal(8_000, 16_000.0));
        }
    }
    (Catalog::new(refs), src)
}

pub fn recipes(catalog: &Catalog, n: usize) -> Vec<SwarmRecipe> {
    let mut rng = rng_from_seed(1);
    (0..n)
        .map(|_| draw_recipe(catalog, &SynthConfig::default(), "bench", &mut rng).unwrap())
        .collect()
}

/// Labels and correlated scores for `n` samples.
pub fn scored_labels(n: usize) -> (Array2<f64>, Array2<u8>) {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let y = Array2::from_shape_fn((n, 6), |_| u8::from(next() < 0.3));
    let s = Array2::from_shape_fn((n, 6), |(i, j)| (0.4 * y[[i, j]] as f64 + 0.6 * next()).min(1.0));
    (s, y)
}
