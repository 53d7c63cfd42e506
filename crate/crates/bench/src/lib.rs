//! Fixtures shared by the benchmarks.

use dyadgp::simulation::{simulate, SimulationSpec};
use dyadgp::{DyadDataset, OutcomeKind, RngStream};

/// A Setting 3 dataset of `n` individuals, fixed by `seed`.
pub fn dataset(kind: OutcomeKind, n: usize, seed: u64) -> DyadDataset {
    let spec = SimulationSpec::new(kind, 3, n).expect("valid simulation spec");
    simulate(&spec, &mut RngStream::new(seed)).expect("simulation succeeds").data
}
