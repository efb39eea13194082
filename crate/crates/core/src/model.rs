//! Core domain types: state spaces, daily trajectories, first-order matrices,
//! second-order transition tensors and the lifting of a second-order chain to
//! a first-order chain on consecutive-state pairs.
//!
//! All indices are 0-based inside the library. Every external format and
//! every error message uses 1-based state numbers.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on row sums of stochastic rows.
pub const ROW_TOL: f64 = 1e-12;

/// A finite state space with its one-day transition graph.
///
/// Staying in the current state for another day is always permitted, so
/// every state carries a self-loop. Absorbing states carry nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    labels: Vec<String>,
    adjacency: Vec<bool>,
    absorbing: Vec<bool>,
}

impl StateSpace {
    /// Builds a space from labels, the permitted moves between distinct
    /// states and the absorbing set (all 0-based).
    pub fn new<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        moves: &[(usize, usize)],
        absorbing: &[usize],
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let m = labels.len();
        if m < 2 {
            return Err(Error::InvalidSpace(format!("need at least 2 states, got {m}")));
        }
        let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if distinct.len() != m {
            return Err(Error::InvalidSpace("state labels must be distinct".into()));
        }
        let mut is_absorbing = vec![false; m];
        for &a in absorbing {
            if a >= m {
                return Err(Error::InvalidSpace(format!("absorbing state {} out of range", a + 1)));
            }
            is_absorbing[a] = true;
        }
        let mut adjacency = vec![false; m * m];
        for s in 0..m {
            adjacency[s * m + s] = true;
        }
        for &(h, j) in moves {
            if h >= m || j >= m {
                return Err(Error::InvalidSpace(format!(
                    "move {} -> {} out of range",
                    h + 1,
                    j + 1
                )));
            }
            if h == j {
                continue;
            }
            if is_absorbing[h] {
                return Err(Error::InvalidSpace(format!(
                    "absorbing state {} cannot have outgoing move to {}",
                    h + 1,
                    j + 1
                )));
            }
            adjacency[h * m + j] = true;
        }
        for h in 0..m {
            if !is_absorbing[h] && !(0..m).any(|j| j != h && adjacency[h * m + j]) {
                return Err(Error::InvalidSpace(format!(
                    "transient state {} has no outgoing move",
                    h + 1
                )));
            }
        }
        Ok(Self { labels, adjacency, absorbing: is_absorbing })
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, s: usize) -> &str {
        &self.labels[s]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Replaces the labels, keeping the graph.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.m() {
            return Err(Error::InvalidSpace(format!(
                "expected {} labels, got {}",
                self.m(),
                labels.len()
            )));
        }
        let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if distinct.len() != labels.len() {
            return Err(Error::InvalidSpace("state labels must be distinct".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        self.absorbing[s]
    }

    pub fn absorbing_states(&self) -> Vec<usize> {
        (0..self.m()).filter(|&s| self.absorbing[s]).collect()
    }

    /// Whether a one-day step `h -> j` is permitted (self-loops included).
    pub fn allows(&self, h: usize, j: usize) -> bool {
        self.adjacency[h * self.m() + j]
    }

    pub fn successors(&self, h: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.m()).filter(move |&j| self.allows(h, j))
    }

    /// Moves between distinct states, in row-major order.
    pub fn moves(&self) -> Vec<(usize, usize)> {
        let m = self.m();
        (0..m)
            .flat_map(|h| (0..m).map(move |j| (h, j)))
            .filter(|&(h, j)| h != j && self.allows(h, j))
            .collect()
    }

    /// Whether `to` can be reached from `from` in zero or more steps.
    pub fn can_reach(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.m()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(s) = stack.pop() {
            if s == to {
                return true;
            }
            for n in self.successors(s) {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        false
    }
}

/// One subject's dense day-by-day state sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub subject_id: String,
    /// Day index of `states[0]` (at least 1).
    pub start_day: usize,
    pub states: Vec<usize>,
}

impl Trajectory {
    pub fn new(subject_id: impl Into<String>, start_day: usize, states: Vec<usize>) -> Self {
        Self { subject_id: subject_id.into(), start_day, states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Absolute day of the last observation.
    pub fn end_day(&self) -> usize {
        self.start_day + self.states.len().saturating_sub(1)
    }

    /// State observed on an absolute day, if any.
    pub fn state_on(&self, day: usize) -> Option<usize> {
        day.checked_sub(self.start_day).and_then(|i| self.states.get(i).copied())
    }
}

/// A single problem found while validating a dataset. Days are absolute and
/// states 1-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyTrajectory { subject: String },
    IllegalStep { subject: String, day: usize, from: usize, to: usize },
    StateAfterAbsorption { subject: String, day: usize, absorbed_in: usize, state: usize },
}

impl Violation {
    pub fn subject(&self) -> &str {
        match self {
            Violation::EmptyTrajectory { subject }
            | Violation::IllegalStep { subject, .. }
            | Violation::StateAfterAbsorption { subject, .. } => subject,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTrajectory { subject } => write!(f, "subject {subject}: empty trajectory"),
            Violation::IllegalStep { subject, day, from, to } => {
                write!(f, "subject {subject}: illegal step {from} -> {to} on day {day}")
            }
            Violation::StateAfterAbsorption { subject, day, absorbed_in, state } => write!(
                f,
                "subject {subject}: state {state} on day {day} after absorption in {absorbed_in}"
            ),
        }
    }
}

/// Outcome of [`validate_dataset`]. Violations are sorted, so the report
/// does not depend on trajectory order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub flagged: BTreeSet<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// Drops flagged trajectories.
    pub fn retain_valid(&self, dataset: Vec<Trajectory>) -> Vec<Trajectory> {
        dataset.into_iter().filter(|t| !self.flagged.contains(&t.subject_id)).collect()
    }
}

/// Checks every trajectory against the space. Out-of-range states and an
/// empty dataset are always errors; other problems are errors only in strict
/// mode and are otherwise reported with the offending subjects flagged.
pub fn validate_dataset(
    dataset: &[Trajectory],
    space: &StateSpace,
    strict: bool,
) -> Result<ValidationReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = space.m();
    let mut violations = Vec::new();
    for traj in dataset {
        if let Some(&bad) = traj.states.iter().find(|&&s| s >= m) {
            return Err(Error::StateOutOfRange { subject: traj.subject_id.clone(), index: bad + 1, m });
        }
        if traj.states.is_empty() {
            violations.push(Violation::EmptyTrajectory { subject: traj.subject_id.clone() });
            continue;
        }
        let mut absorbed: Option<usize> = None;
        for (i, w) in traj.states.windows(2).enumerate() {
            let (from, to) = (w[0], w[1]);
            let day = traj.start_day + i + 1;
            if space.is_absorbing(from) && absorbed.is_none() {
                absorbed = Some(from);
            }
            if let Some(a) = absorbed {
                if to != a {
                    violations.push(Violation::StateAfterAbsorption {
                        subject: traj.subject_id.clone(),
                        day,
                        absorbed_in: a + 1,
                        state: to + 1,
                    });
                    break;
                }
                continue;
            }
            if !space.allows(from, to) {
                violations.push(Violation::IllegalStep {
                    subject: traj.subject_id.clone(),
                    day,
                    from: from + 1,
                    to: to + 1,
                });
            }
        }
    }
    violations.sort();
    let flagged = violations.iter().map(|v| v.subject().to_string()).collect();
    let report = ValidationReport { violations, flagged };
    if strict && !report.is_clean() {
        return Err(Error::Validation(report));
    }
    Ok(report)
}

/// A square matrix of one-step probabilities. Each row sums to 1 (a state
/// that can be left) or 0 (a state never used as a source).
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderMatrix {
    m: usize,
    data: Vec<f64>,
}

impl FirstOrderMatrix {
    pub fn new(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::InvalidMatrix(format!("expected {} entries, got {}", m * m, data.len())));
        }
        if let Some(x) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidMatrix(format!("entry {x} outside [0, 1]")));
        }
        for h in 0..m {
            let sum: f64 = data[h * m..(h + 1) * m].iter().sum();
            if sum.abs() > ROW_TOL && (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidMatrix(format!("row {} sums to {sum}", h + 1)));
            }
        }
        Ok(Self { m, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidMatrix("matrix must be square".into()));
        }
        Self::new(m, rows.concat())
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        Self { m, data }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, h: usize, j: usize) -> f64 {
        self.data[h * self.m + j]
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.data[h * self.m..(h + 1) * self.m]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Matrix product. Closed over the row-sum invariant up to rounding;
    /// entries are clamped into [0, 1].
    pub(crate) fn matmul(&self, other: &Self) -> Self {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * m..(k + 1) * m];
                for (o, b) in out[i * m..(i + 1) * m].iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        for x in &mut out {
            *x = x.clamp(0.0, 1.0);
        }
        Self { m, data: out }
    }

    /// Row vector times matrix.
    pub fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for (h, &p) in v.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.row(h)) {
                *o += p * x;
            }
        }
        out
    }
}

#[inline]
pub(crate) fn pair_index(m: usize, h: usize, j: usize) -> usize {
    h * m + j
}

/// Second-order transition probabilities `P[h][j][k] = P(next = k | previous
/// = h, current = j)`, stored as `m` matrices indexed by the previous state,
/// together with an explicit support flag per `(h, j)` pair.
///
/// Entries lie in [0, 1] and unsupported rows are zero. Supported rows are
/// expected to sum to 1; rows produced by the conditional estimator may
/// deviate, which [`TransitionTensor::check_stochastic`] reports.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor {
    m: usize,
    data: Vec<f64>,
    support: Vec<bool>,
}

impl TransitionTensor {
    pub fn new(m: usize, data: Vec<f64>, support: Vec<bool>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidTensor("empty tensor".into()));
        }
        if data.len() != m * m * m || support.len() != m * m {
            return Err(Error::InvalidTensor(format!("tensor shape does not match m = {m}")));
        }
        if let Some(x) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidTensor(format!("entry {x} outside [0, 1]")));
        }
        for h in 0..m {
            for j in 0..m {
                let p = pair_index(m, h, j);
                if !support[p] && data[p * m..(p + 1) * m].iter().any(|&x| x != 0.0) {
                    return Err(Error::InvalidTensor(format!(
                        "unsupported pair ({}, {}) has non-zero entries",
                        h + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { m, data, support })
    }

    pub fn builder(m: usize) -> TensorBuilder {
        TensorBuilder { m, data: vec![0.0; m * m * m], support: vec![false; m * m] }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, h: usize, j: usize, k: usize) -> f64 {
        self.data[pair_index(self.m, h, j) * self.m + k]
    }

    pub fn row(&self, h: usize, j: usize) -> &[f64] {
        let p = pair_index(self.m, h, j);
        &self.data[p * self.m..(p + 1) * self.m]
    }

    pub fn is_supported(&self, h: usize, j: usize) -> bool {
        self.support[pair_index(self.m, h, j)]
    }

    /// Matrix `h`, i.e. `(P[h][j][k])` over `j` and `k`.
    pub fn matrix(&self, h: usize) -> Vec<Vec<f64>> {
        (0..self.m).map(|j| self.row(h, j).to_vec()).collect()
    }

    pub fn support_matrix(&self) -> Vec<Vec<bool>> {
        self.support.chunks(self.m).map(<[bool]>::to_vec).collect()
    }

    pub fn supported_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.m;
        (0..m * m).filter(|&p| self.support[p]).map(move |p| (p / m, p % m))
    }

    pub fn row_sum(&self, h: usize, j: usize) -> f64 {
        self.row(h, j).iter().sum()
    }

    /// Fails if any supported row does not sum to 1 within [`ROW_TOL`].
    pub fn check_stochastic(&self) -> Result<()> {
        for (h, j) in self.supported_pairs() {
            let s = self.row_sum(h, j);
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidTensor(format!(
                    "row ({}, {}) sums to {s}, expected 1",
                    h + 1,
                    j + 1
                )));
            }
        }
        Ok(())
    }

    /// Fails if mass is placed on steps the space forbids, or if an absorbing
    /// matrix holds anything besides its own self-loop.
    pub fn check_against(&self, space: &StateSpace) -> Result<()> {
        if space.m() != self.m {
            return Err(Error::InvalidTensor(format!(
                "tensor has {} states, space has {}",
                self.m,
                space.m()
            )));
        }
        for (h, j) in self.supported_pairs() {
            if space.is_absorbing(h) && j != h {
                return Err(Error::InvalidTensor(format!(
                    "absorbing state {} used as previous state of ({}, {})",
                    h + 1,
                    h + 1,
                    j + 1
                )));
            }
            for (k, &p) in self.row(h, j).iter().enumerate() {
                if p > 0.0 && !space.allows(j, k) {
                    return Err(Error::InvalidTensor(format!(
                        "row ({}, {}) puts mass on forbidden step {} -> {}",
                        h + 1,
                        j + 1,
                        j + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Incremental construction of a [`TransitionTensor`].
#[derive(Debug, Clone)]
pub struct TensorBuilder {
    m: usize,
    data: Vec<f64>,
    support: Vec<bool>,
}

impl TensorBuilder {
    /// Sets row `(h, j)` and marks the pair supported.
    pub fn row(&mut self, h: usize, j: usize, values: &[f64]) -> &mut Self {
        assert_eq!(values.len(), self.m, "row length must equal m");
        let p = pair_index(self.m, h, j);
        self.data[p * self.m..(p + 1) * self.m].copy_from_slice(values);
        self.support[p] = true;
        self
    }

    /// Marks `(h, j)` supported with all mass on `k`.
    pub fn unit(&mut self, h: usize, j: usize, k: usize) -> &mut Self {
        let mut v = vec![0.0; self.m];
        v[k] = 1.0;
        self.row(h, j, &v)
    }

    pub fn build(&self) -> Result<TransitionTensor> {
        TransitionTensor::new(self.m, self.data.clone(), self.support.clone())
    }
}

/// Law of the first two observations, which the tensor alone cannot supply.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainInitialization {
    pub initial_dist: Vec<f64>,
    pub first_step: FirstOrderMatrix,
}

impl ChainInitialization {
    pub fn new(initial_dist: Vec<f64>, first_step: FirstOrderMatrix) -> Result<Self> {
        if initial_dist.len() != first_step.m() {
            return Err(Error::InvalidInit("initial distribution length does not match matrix".into()));
        }
        if initial_dist.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidInit("initial probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = initial_dist.iter().sum();
        if (total - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidInit(format!("initial distribution sums to {total}")));
        }
        for (h, &p) in initial_dist.iter().enumerate() {
            let s: f64 = first_step.row(h).iter().sum();
            if p > 0.0 && (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidInit(format!(
                    "first-step row {} must sum to 1 for a possible initial state",
                    h + 1
                )));
            }
        }
        Ok(Self { initial_dist, first_step })
    }

    pub fn m(&self) -> usize {
        self.initial_dist.len()
    }

    /// Start deterministically in `state`, moving by `first_step`.
    pub fn degenerate(state: usize, first_step: FirstOrderMatrix) -> Result<Self> {
        let mut dist = vec![0.0; first_step.m()];
        dist[state] = 1.0;
        Self::new(dist, first_step)
    }

    /// Joint law of `(X1, X2)` over pair indices `h * m + j`.
    pub fn pair_distribution(&self) -> Vec<f64> {
        let m = self.m();
        let mut nu = vec![0.0; m * m];
        for h in 0..m {
            for j in 0..m {
                nu[pair_index(m, h, j)] = self.initial_dist[h] * self.first_step.get(h, j);
            }
        }
        nu
    }
}

/// A second-order chain rewritten as a first-order chain on pairs
/// `(X_{t-1}, X_t)`, indexed `h * m + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedChain {
    pub m: usize,
    pub matrix: FirstOrderMatrix,
    pub initial: Vec<f64>,
}

impl LiftedChain {
    pub fn pair(&self, h: usize, j: usize) -> usize {
        pair_index(self.m, h, j)
    }
}

/// Lifts the tensor to the `m²` pair space: `L[(h,j),(j,k)] = P[h][j][k]`,
/// zero elsewhere, with initial pair law `initial_dist[h] * first_step[h][j]`.
pub fn lift_to_pairs(tensor: &TransitionTensor, init: &ChainInitialization) -> Result<LiftedChain> {
    tensor.check_stochastic()?;
    let m = tensor.m();
    if init.m() != m {
        return Err(Error::InvalidInit(format!("initialization has {} states, tensor has {m}", init.m())));
    }
    let mm = m * m;
    let mut data = vec![0.0; mm * mm];
    for (h, j) in tensor.supported_pairs() {
        let from = pair_index(m, h, j);
        for k in 0..m {
            data[from * mm + pair_index(m, j, k)] = tensor.get(h, j, k);
        }
    }
    Ok(LiftedChain {
        m,
        matrix: FirstOrderMatrix::new(mm, data)?,
        initial: init.pair_distribution(),
    })
}
