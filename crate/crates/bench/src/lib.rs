//! Shared inputs for the criterion benchmarks in `benches/`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use onseg_core::{DurationModel, Grammar, ProbabilityStream, Transcript};

/// A decoding problem of realistic shape.
pub struct Workload {
    pub anchor: ProbabilityStream,
    pub auxiliary: ProbabilityStream,
    pub durations: DurationModel,
    pub grammar: Grammar,
}

/// `transcripts` random transcripts of length `len` over `actions` actions and
/// two random streams of `frames` frames, all from `seed`.
pub fn workload(frames: usize, actions: usize, transcripts: usize, len: usize, seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grammar = Grammar::new(
        (0..transcripts).map(|_| Transcript::new((0..len).map(|_| rng.random_range(0..actions)).collect()).unwrap()),
    )
    .unwrap();
    let mut stream = || {
        let raw = Array2::from_shape_simple_fn((frames, actions), || rng.random_range(-2.0..2.0f64).exp());
        ProbabilityStream::from_unnormalized(raw).unwrap()
    };
    let (anchor, auxiliary) = (stream(), stream());
    Workload {
        anchor,
        auxiliary,
        durations: DurationModel::uniform(actions, frames as f64 / len as f64).unwrap(),
        grammar,
    }
}
