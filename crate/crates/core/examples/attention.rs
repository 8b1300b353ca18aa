//! Score a random queue with the attention policy and show that permuting the
//! queue permutes the scores.

use fabrl::policy::{select_es, softmax, Descriptor, PolicyParams, LOT_FEATURES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = PolicyParams::init(Descriptor::ES, &mut rng);
    println!("{} parameters", params.len());
    let queue: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..LOT_FEATURES).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let scores = params.scores(&queue);
    println!("scores  {scores:.4?}");
    println!("softmax {:.4?}", softmax(&scores));
    println!("greedy pick {}", select_es(&scores));
    let reversed: Vec<_> = queue.iter().rev().cloned().collect();
    println!("reversed {:.4?}", params.scores(&reversed));
}
