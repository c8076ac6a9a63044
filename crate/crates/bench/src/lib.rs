//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use shaplit_core::games::TabularGame;
use shaplit_core::masking::{boolean_sampler, BooleanMasking, Masker};
use shaplit_core::predictors::{boolean_truth, BooleanTruth};
use shaplit_core::rng::stream;

/// A game with uniform random values on every coalition.
pub fn random_game(players: usize, seed: u64) -> TabularGame {
    TabularGame::random(players, &mut stream(seed, &[]))
        .expect("players within the enumeration cap")
}

/// The Boolean-block rule with its masker and a sample that fires one
/// feature in each block.
pub struct BooleanCase {
    pub predictor: BooleanTruth,
    pub masker: Masker,
    pub x: Vec<f64>,
}

pub fn boolean_case(blocks: usize, width: usize) -> BooleanCase {
    let predictor = boolean_truth(blocks, width, 3.0).unwrap();
    let sampler = boolean_sampler(blocks, width, 4.0, &BooleanMasking::Unimportant).unwrap();
    let masker = Masker::singletons(Arc::new(sampler)).unwrap();
    let mut x = vec![0.0; blocks * width];
    for b in 0..blocks {
        x[b * width] = if b % 2 == 0 { 4.5 } else { -4.5 };
    }
    BooleanCase {
        predictor,
        masker,
        x,
    }
}
