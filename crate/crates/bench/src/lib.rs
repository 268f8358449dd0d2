//! Shared fixtures for the benchmarks under `benches/`.

use simtop_core::field::MlpConfig;
use simtop_core::grid::Grid;
use simtop_core::model::{FlowModel, ModelConfig};
use simtop_core::problems::{build_problem, BenchmarkId};

/// Diffuser model on an `n x n` lattice with the given hidden layers.
pub fn diffuser(n: usize, hidden: &[usize]) -> FlowModel {
    let cfg = ModelConfig { mlp: MlpConfig::new(2, hidden, 4), ..Default::default() };
    FlowModel::new(build_problem(BenchmarkId::Diffuser).expect("built-in"), Grid::unit_square(n, n).expect("valid grid"), cfg)
        .expect("valid model")
}
