//! Extended Chapman-Kolmogorov propagation.
//!
//! Conditioning is always on two *consecutive* past states `(X_s, X_{s+1}) =
//! (h, j)`. The n-step law is computed by pushing the joint law of the pair
//! `(X_{t-1}, X_t)` forward one day at a time, which costs `O(n m³)` and never
//! enumerates paths.
//!
//! Mass that would have to leave a pair the tensor does not support is
//! dropped and accumulated in [`Propagation::lost_mass`] instead of being
//! renormalized away.

use crate::error::{Error, Result};
use crate::model::{pair_index, ChainInitialization, FirstOrderMatrix, TransitionTensor};

/// Probabilities `P(X_{s+2+n} = target | X_{s+1} = j, X_s = h)` for
/// `n = 1..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCurve {
    pub from: (usize, usize),
    pub target: usize,
    pub horizon: usize,
    pub values: Vec<f64>,
}

/// Law of `X_{s+2+n}` together with the mass dropped at unsupported pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub distribution: Vec<f64>,
    pub lost_mass: f64,
}

/// Joint law over pairs, stepped forward one day at a time.
struct PairFlow<'a> {
    tensor: &'a TransitionTensor,
    pairs: Vec<f64>,
    scratch: Vec<f64>,
    lost: f64,
}

impl<'a> PairFlow<'a> {
    fn new(tensor: &'a TransitionTensor, pairs: Vec<f64>) -> Self {
        let n = pairs.len();
        Self { tensor, pairs, scratch: vec![0.0; n], lost: 0.0 }
    }

    fn start_at(tensor: &'a TransitionTensor, h: usize, j: usize) -> Self {
        let m = tensor.m();
        let mut pairs = vec![0.0; m * m];
        pairs[pair_index(m, h, j)] = 1.0;
        Self::new(tensor, pairs)
    }

    fn step(&mut self) {
        let m = self.tensor.m();
        self.scratch.iter_mut().for_each(|x| *x = 0.0);
        for h in 0..m {
            for j in 0..m {
                let q = self.pairs[pair_index(m, h, j)];
                if q == 0.0 {
                    continue;
                }
                if !self.tensor.is_supported(h, j) {
                    self.lost += q;
                    continue;
                }
                let base = pair_index(m, j, 0);
                for (k, &p) in self.tensor.row(h, j).iter().enumerate() {
                    self.scratch[base + k] += q * p;
                }
            }
        }
        std::mem::swap(&mut self.pairs, &mut self.scratch);
    }

    /// Law of the current state (second pair coordinate).
    fn current(&self) -> Vec<f64> {
        let m = self.tensor.m();
        let mut out = vec![0.0; m];
        for (p, &q) in self.pairs.iter().enumerate() {
            out[p % m] += q;
        }
        out
    }
}

fn check_start(tensor: &TransitionTensor, h: usize, j: usize) -> Result<()> {
    let m = tensor.m();
    if h >= m || j >= m || !tensor.is_supported(h, j) {
        return Err(Error::UnsupportedPair { h: h + 1, j: j + 1 });
    }
    Ok(())
}

/// Law of `X_{s+n+2}` given `X_s = h`, `X_{s+1} = j`, with lost-mass
/// bookkeeping. `n = 1` is the two-day-ahead law `Σ_k P[h][j][k] P[j][k][l]`.
pub fn propagate(tensor: &TransitionTensor, h: usize, j: usize, n: usize) -> Result<Propagation> {
    check_start(tensor, h, j)?;
    if n < 1 {
        return Err(Error::InvalidSteps { min: 1, got: n });
    }
    let mut flow = PairFlow::start_at(tensor, h, j);
    for _ in 0..=n {
        flow.step();
    }
    Ok(Propagation { distribution: flow.current(), lost_mass: flow.lost })
}

/// Entry `l` is `P(X_{s+n+2} = l | X_{s+1} = j, X_s = h)`.
pub fn n_step_distribution(tensor: &TransitionTensor, h: usize, j: usize, n: usize) -> Result<Vec<f64>> {
    propagate(tensor, h, j, n).map(|p| p.distribution)
}

/// One forward pass producing `n_step_distribution(.., n)[target]` for every
/// `n` in `1..=horizon`.
pub fn prediction_curve(
    tensor: &TransitionTensor,
    h: usize,
    j: usize,
    target: usize,
    horizon: usize,
) -> Result<PredictionCurve> {
    check_start(tensor, h, j)?;
    if target >= tensor.m() {
        return Err(Error::StateOutOfRange { subject: "-".into(), index: target + 1, m: tensor.m() });
    }
    let mut flow = PairFlow::start_at(tensor, h, j);
    flow.step();
    let mut values = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        flow.step();
        values.push(flow.current()[target]);
    }
    Ok(PredictionCurve { from: (h, j), target, horizon, values })
}

/// `n`-th power of a first-order matrix (identity for `n = 0`).
pub fn first_order_n_step(matrix: &FirstOrderMatrix, n: usize) -> FirstOrderMatrix {
    let mut result = FirstOrderMatrix::identity(matrix.m());
    let mut base = matrix.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = result.matmul(&base);
        }
        e >>= 1;
        if e > 0 {
            base = base.matmul(&base);
        }
    }
    result
}

/// State occupation probabilities `π(t) = P(X_t = ·)` for day `t ≥ 1`.
pub fn state_occupation(tensor: &TransitionTensor, init: &ChainInitialization, t: usize) -> Result<Vec<f64>> {
    state_occupation_tracked(tensor, init, t).map(|p| p.distribution)
}

/// As [`state_occupation`], also reporting mass dropped at unsupported pairs.
pub fn state_occupation_tracked(
    tensor: &TransitionTensor,
    init: &ChainInitialization,
    t: usize,
) -> Result<Propagation> {
    if t < 1 {
        return Err(Error::InvalidDay(t));
    }
    if init.m() != tensor.m() {
        return Err(Error::InvalidInit("initialization and tensor sizes differ".into()));
    }
    match t {
        1 => Ok(Propagation { distribution: init.initial_dist.clone(), lost_mass: 0.0 }),
        2 => Ok(Propagation { distribution: init.first_step.left_apply(&init.initial_dist), lost_mass: 0.0 }),
        _ => {
            let mut flow = PairFlow::new(tensor, init.pair_distribution());
            for _ in 2..t {
                flow.step();
            }
            Ok(Propagation { distribution: flow.current(), lost_mass: flow.lost })
        }
    }
}
