//! Per-path random streams.
//!
//! Every path (or antithetic pair) owns a ChaCha stream keyed by the run seed
//! and its index, so the draws of a path do not depend on how paths are
//! scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random stream for the path (or antithetic pair) with the given index.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}

/// Stream index and sign for path `path` under optional antithetic pairing.
///
/// With pairing, paths 2i and 2i+1 share stream i and the odd one negates
/// every draw.
pub fn stream_of(path: u64, antithetic: bool) -> (u64, f64) {
    if antithetic {
        (path / 2, if path % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (path, 1.0)
    }
}
