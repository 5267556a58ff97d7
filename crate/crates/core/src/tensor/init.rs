use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Matrix;

/// Half-width of the Glorot uniform interval, `√(6 / (rows + cols))`.
pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// I.i.d. uniform samples on `[-bound, bound]`, reproducible from `seed`.
pub fn glorot_init(rows: usize, cols: usize, seed: u64) -> Matrix {
    assert!(
        rows > 0 && cols > 0,
        "glorot_init needs positive dimensions"
    );
    let bound = glorot_bound(rows, cols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}
