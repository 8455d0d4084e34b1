//! Inputs shared by the benchmarks.

use rankspec::blockmodel::sample_matrix;
use rankspec::experiments::contaminated_normal_spec;
use rankspec::{BlockModelSpec, SeedStream, SymMatrix};

/// Two-block contaminated-normal spec with 1% contamination.
pub fn bench_spec(n: usize) -> BlockModelSpec {
    contaminated_normal_spec(n, 0.01).expect("valid spec")
}

/// A draw from [`bench_spec`].
pub fn bench_matrix(n: usize, seed: u64) -> SymMatrix {
    sample_matrix(&bench_spec(n), SeedStream::new(seed))
}
