//! Deterministic workloads shared by the benchmarks.

use secord_core::{ChainInitialization, ChainOrder, FirstOrderMatrix, SimulationConfig, StateSpace, TransitionTensor};

/// Dense chain on `m` states where every state can move to every other and
/// the last state absorbs.
pub fn dense_chain(m: usize) -> (StateSpace, TransitionTensor, ChainInitialization) {
    let labels: Vec<String> = (1..=m).map(|i| format!("S{i}")).collect();
    let moves: Vec<(usize, usize)> = (0..m - 1).flat_map(|h| (0..m).filter(move |&k| k != h).map(move |k| (h, k))).collect();
    let space = StateSpace::new(labels, &moves, &[m - 1]).unwrap();
    let mut b = TransitionTensor::builder(m);
    for h in 0..m - 1 {
        for j in 0..m - 1 {
            let raw: Vec<f64> = (0..m).map(|k| 1.0 + ((h * 7 + j * 3 + k * 5) % 11) as f64).collect();
            let s: f64 = raw.iter().sum();
            b.row(h, j, &raw.iter().map(|x| x / s).collect::<Vec<_>>());
        }
        b.unit(h, m - 1, m - 1);
    }
    b.unit(m - 1, m - 1, m - 1);
    let tensor = b.build().unwrap();
    let mut rows = vec![vec![1.0 / m as f64; m]; m];
    rows[m - 1] = (0..m).map(|k| if k == m - 1 { 1.0 } else { 0.0 }).collect();
    let init = ChainInitialization::new(vec![1.0 / (m - 1) as f64; m - 1].into_iter().chain([0.0]).collect(), FirstOrderMatrix::from_rows(&rows).unwrap()).unwrap();
    (space, tensor, init)
}

pub fn dense_config(m: usize, n_subjects: usize, t_max: usize) -> SimulationConfig {
    let (space, tensor, init) = dense_chain(m);
    SimulationConfig { space, tensor, init, n_subjects, t_max, seed: 1, order: ChainOrder::Second }
}
