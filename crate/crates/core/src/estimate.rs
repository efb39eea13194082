//! Counting and at-risk processes over daily trajectories, and the two
//! estimators of the second-order tensor: the pooled ratio
//! `Σ_s N_hjl(s) / Σ_s Y_hj(s-1)` and the average of per-day ratios over the
//! support window.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pair_index, ChainInitialization, FirstOrderMatrix, StateSpace, TransitionTensor, Trajectory};

/// Marker for "no previous state" (the spell began at admission) in
/// jump-chain counts.
pub const ADMISSION: usize = usize::MAX;

/// Which estimator fills the tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ratio,
    Conditional,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ratio => "ratio",
            Method::Conditional => "conditional",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(Method::Ratio),
            "conditional" => Ok(Method::Conditional),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Aggregated counting and at-risk processes.
///
/// Day `s` refers to the day of the third state in a triple: `N_hjl(s)` counts
/// subjects in `h, j, l` on days `s-2, s-1, s`, and `Y_hj(s-1)` counts
/// subjects in `h, j` on days `s-2, s-1` that are also observed on day `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCounts {
    space: StateSpace,
    n_subjects: usize,
    days: usize,
    /// `m³ × days`, cell-major.
    triples: Vec<u64>,
    /// `m² × days`, cell-major.
    at_risk: Vec<u64>,
    /// Consecutive `(h, j)` occurrences, with or without a following day.
    pair_seen: Vec<u64>,
    state_seen: Vec<bool>,
    initial: Vec<u64>,
    first_step: Vec<u64>,
    jumps: JumpPathCounts,
}

/// Two-step paths of the jump chain (runs of repeated states collapsed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JumpPathCounts {
    m: usize,
    /// `direct[j * m + l]`: subjects jumping `j -> l`.
    direct: Vec<u64>,
    /// `(m + 1) × m × m`; the prior index `m` stands for admission.
    via: Vec<u64>,
}

impl JumpPathCounts {
    fn new(m: usize) -> Self {
        Self { m, direct: vec![0; m * m], via: vec![0; (m + 1) * m * m] }
    }

    fn prior_slot(&self, prior: usize) -> usize {
        if prior == ADMISSION {
            self.m
        } else {
            prior
        }
    }

    pub fn direct(&self, j: usize, l: usize) -> u64 {
        self.direct[j * self.m + l]
    }

    /// Jumps `j -> l` whose spell in `j` was entered from `prior`
    /// (or [`ADMISSION`]).
    pub fn via(&self, prior: usize, j: usize, l: usize) -> u64 {
        let p = self.prior_slot(prior);
        self.via[(p * self.m + j) * self.m + l]
    }

    fn record(&mut self, seq: &[usize]) {
        let m = self.m;
        for (i, w) in seq.windows(2).enumerate() {
            let (j, l) = (w[0], w[1]);
            self.direct[j * m + l] += 1;
            let p = if i == 0 { m } else { seq[i - 1] };
            self.via[(p * m + j) * m + l] += 1;
        }
    }

    fn merge(&mut self, other: &Self) {
        add_into(&mut self.direct, &other.direct);
        add_into(&mut self.via, &other.via);
    }
}

fn add_into(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

impl PathCounts {
    fn empty(space: &StateSpace, days: usize) -> Self {
        let m = space.m();
        Self {
            space: space.clone(),
            n_subjects: 0,
            days,
            triples: vec![0; m * m * m * days],
            at_risk: vec![0; m * m * days],
            pair_seen: vec![0; m * m],
            state_seen: vec![false; m],
            initial: vec![0; m],
            first_step: vec![0; m * m],
            jumps: JumpPathCounts::new(m),
        }
    }

    fn add(&mut self, traj: &Trajectory) {
        let m = self.space.m();
        let st = &traj.states;
        self.n_subjects += 1;
        if st.is_empty() {
            return;
        }
        for &s in st {
            self.state_seen[s] = true;
        }
        self.initial[st[0]] += 1;
        if st.len() >= 2 {
            self.first_step[st[0] * m + st[1]] += 1;
        }
        for w in st.windows(2) {
            self.pair_seen[pair_index(m, w[0], w[1])] += 1;
        }
        for (t, w) in st.windows(3).enumerate() {
            let s = traj.start_day + t + 2;
            let pair = pair_index(m, w[0], w[1]);
            self.at_risk[pair * self.days + s] += 1;
            self.triples[(pair * m + w[2]) * self.days + s] += 1;
        }
        let mut seq: Vec<usize> = st.clone();
        seq.dedup();
        self.jumps.record(&seq);
    }

    fn merge(mut self, other: Self) -> Self {
        self.n_subjects += other.n_subjects;
        add_into(&mut self.triples, &other.triples);
        add_into(&mut self.at_risk, &other.at_risk);
        add_into(&mut self.pair_seen, &other.pair_seen);
        add_into(&mut self.initial, &other.initial);
        add_into(&mut self.first_step, &other.first_step);
        for (a, b) in self.state_seen.iter_mut().zip(&other.state_seen) {
            *a |= *b;
        }
        self.jumps.merge(&other.jumps);
        self
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    /// One past the largest day index that can carry a count.
    pub fn day_limit(&self) -> usize {
        self.days
    }

    /// `N_hjl(s)`.
    pub fn triple(&self, h: usize, j: usize, l: usize, s: usize) -> u64 {
        let m = self.space.m();
        if s >= self.days {
            return 0;
        }
        self.triples[(pair_index(m, h, j) * m + l) * self.days + s]
    }

    /// `Y_hj(s-1)`, indexed by `s`.
    pub fn at_risk(&self, h: usize, j: usize, s: usize) -> u64 {
        if s >= self.days {
            return 0;
        }
        self.at_risk[pair_index(self.space.m(), h, j) * self.days + s]
    }

    fn triple_series(&self, h: usize, j: usize, l: usize) -> &[u64] {
        let m = self.space.m();
        let c = pair_index(m, h, j) * m + l;
        &self.triples[c * self.days..(c + 1) * self.days]
    }

    fn at_risk_series(&self, h: usize, j: usize) -> &[u64] {
        let c = pair_index(self.space.m(), h, j);
        &self.at_risk[c * self.days..(c + 1) * self.days]
    }

    pub fn triple_total(&self, h: usize, j: usize, l: usize) -> u64 {
        self.triple_series(h, j, l).iter().sum()
    }

    pub fn at_risk_total(&self, h: usize, j: usize) -> u64 {
        self.at_risk_series(h, j).iter().sum()
    }

    /// Support window `[R_hj, T_hj]`: first and last `s` with `Y_hj(s-1) > 0`.
    pub fn window(&self, h: usize, j: usize) -> Option<(usize, usize)> {
        let y = self.at_risk_series(h, j);
        let first = y.iter().position(|&c| c > 0)?;
        let last = y.iter().rposition(|&c| c > 0)?;
        Some((first, last))
    }

    /// Consecutive-day occurrences of `(h, j)`, counted even without a next day.
    pub fn pair_seen(&self, h: usize, j: usize) -> u64 {
        self.pair_seen[pair_index(self.space.m(), h, j)]
    }

    pub fn state_seen(&self, s: usize) -> bool {
        self.state_seen[s]
    }

    pub fn initial_counts(&self) -> &[u64] {
        &self.initial
    }

    pub fn jumps(&self) -> &JumpPathCounts {
        &self.jumps
    }
}

/// Builds the counting and at-risk processes. Trajectories are partitioned
/// across workers and merged by integer addition, so the result does not
/// depend on trajectory order or thread count.
pub fn count_paths(dataset: &[Trajectory], space: &StateSpace) -> Result<PathCounts> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = space.m();
    for t in dataset {
        if let Some(&bad) = t.states.iter().find(|&&s| s >= m) {
            return Err(Error::StateOutOfRange { subject: t.subject_id.clone(), index: bad + 1, m });
        }
    }
    let days = dataset.iter().map(Trajectory::end_day).max().unwrap_or(0) + 1;
    let counts = dataset
        .par_chunks(256)
        .map(|chunk| {
            let mut c = PathCounts::empty(space, days);
            for t in chunk {
                c.add(t);
            }
            c
        })
        .reduce(|| PathCounts::empty(space, days), PathCounts::merge);
    Ok(counts)
}

/// Pooled ratio estimator `Σ_s N_hjl(s) / Σ_s Y_hj(s-1)`.
pub fn estimate_ratio(counts: &PathCounts, h: usize, j: usize, l: usize) -> Result<f64> {
    let y = counts.at_risk_total(h, j);
    if y == 0 {
        return Err(Error::NoSupport { h: h + 1, j: j + 1 });
    }
    Ok(counts.triple_total(h, j, l) as f64 / y as f64)
}

/// Average of per-day ratios `N_hjl(s) / Y_hj(s-1)` over the days of
/// `[R_hj, T_hj]` with positive risk; zero-risk days inside the window are
/// skipped and do not count towards the denominator.
pub fn estimate_conditional(counts: &PathCounts, h: usize, j: usize, l: usize) -> Result<f64> {
    conditional_with_days(counts, h, j, l).map(|(p, _)| p)
}

fn conditional_with_days(counts: &PathCounts, h: usize, j: usize, l: usize) -> Result<(f64, usize)> {
    let (r, t) = counts.window(h, j).ok_or(Error::NoSupport { h: h + 1, j: j + 1 })?;
    let y = counts.at_risk_series(h, j);
    let n = counts.triple_series(h, j, l);
    let mut sum = 0.0;
    let mut used = 0usize;
    for s in r..=t {
        if y[s] > 0 {
            sum += n[s] as f64 / y[s] as f64;
            used += 1;
        }
    }
    Ok((sum / used as f64, used))
}

/// Options for [`estimate_tensor_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Pairs with fewer total at-risk observations are flagged thin.
    pub min_support: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { min_support: 10 }
    }
}

/// How a supported row was filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    Estimated,
    /// Current state is absorbing: unit mass on itself.
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDiagnostic {
    /// 1-based previous state.
    pub h: usize,
    /// 1-based current state.
    pub j: usize,
    pub source: RowSource,
    pub at_risk: u64,
    /// Days of the window that entered the conditional average.
    pub days_used: usize,
    pub thin: bool,
    /// Row sum minus one.
    pub row_sum_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEstimate {
    pub tensor: TransitionTensor,
    pub method: Method,
    /// Per pair, `Σ_s Y_hj(s-1)`, indexed `h * m + j`.
    pub at_risk_totals: Vec<u64>,
    /// Per triple, `Σ_s N_hjl(s)`, indexed `(h * m + j) * m + l`.
    pub event_totals: Vec<u64>,
    pub diagnostics: Vec<CellDiagnostic>,
    /// Empirical admission law and first-day moves, when every possible
    /// admission state has an observed second day (or is absorbing).
    pub init: Option<ChainInitialization>,
}

impl TensorEstimate {
    /// Ratio estimate of cell `(h, j, l)` as an unreduced fraction.
    pub fn fraction(&self, h: usize, j: usize, l: usize) -> Option<(u64, u64)> {
        let m = self.tensor.m();
        let p = pair_index(m, h, j);
        let den = self.at_risk_totals[p];
        (den > 0).then(|| (self.event_totals[p * m + l], den))
    }

    pub fn thin_cells(&self) -> impl Iterator<Item = &CellDiagnostic> {
        self.diagnostics.iter().filter(|d| d.thin)
    }
}

pub fn estimate_tensor(counts: &PathCounts, method: Method) -> TensorEstimate {
    estimate_tensor_with(counts, method, &EstimateOptions::default())
}

/// Fills every observed `(h, j)` row by the chosen estimator. Pairs whose
/// current state is absorbing get unit mass on it; unobserved pairs are
/// left zero and unsupported. Conditional rows are not renormalized.
pub fn estimate_tensor_with(counts: &PathCounts, method: Method, opts: &EstimateOptions) -> TensorEstimate {
    let space = counts.space();
    let m = space.m();
    let mut builder = TransitionTensor::builder(m);
    let mut diagnostics = Vec::new();
    let mut at_risk_totals = vec![0u64; m * m];
    let mut event_totals = vec![0u64; m * m * m];

    for h in 0..m {
        for j in 0..m {
            let p = pair_index(m, h, j);
            at_risk_totals[p] = counts.at_risk_total(h, j);
            for l in 0..m {
                event_totals[p * m + l] = counts.triple_total(h, j, l);
            }
            if space.is_absorbing(h) && h != j {
                continue;
            }
            if space.is_absorbing(j) {
                let observed = counts.pair_seen(h, j) > 0 || (h == j && counts.state_seen(j));
                if observed {
                    builder.unit(h, j, j);
                    diagnostics.push(CellDiagnostic {
                        h: h + 1,
                        j: j + 1,
                        source: RowSource::Absorbing,
                        at_risk: at_risk_totals[p],
                        days_used: 0,
                        thin: false,
                        row_sum_deviation: 0.0,
                    });
                }
                continue;
            }
            let y = at_risk_totals[p];
            if y == 0 {
                continue;
            }
            let mut row = vec![0.0; m];
            let mut days_used = 0;
            for (l, x) in row.iter_mut().enumerate() {
                *x = match method {
                    Method::Ratio => event_totals[p * m + l] as f64 / y as f64,
                    Method::Conditional => {
                        let (v, used) = conditional_with_days(counts, h, j, l).expect("pair has support");
                        days_used = used;
                        v
                    }
                };
            }
            if method == Method::Ratio {
                days_used = counts.window(h, j).map_or(0, |(r, t)| {
                    (r..=t).filter(|&s| counts.at_risk(h, j, s) > 0).count()
                });
            }
            let row_sum: f64 = row.iter().sum();
            builder.row(h, j, &row);
            diagnostics.push(CellDiagnostic {
                h: h + 1,
                j: j + 1,
                source: RowSource::Estimated,
                at_risk: y,
                days_used,
                thin: y < opts.min_support,
                row_sum_deviation: row_sum - 1.0,
            });
        }
    }
    let tensor = builder.build().expect("estimated rows are probabilities");
    TensorEstimate {
        tensor,
        method,
        at_risk_totals,
        event_totals,
        diagnostics,
        init: estimate_initialization(counts).ok(),
    }
}

/// Empirical law of the first observed state and of the first-day move.
pub fn estimate_initialization(counts: &PathCounts) -> Result<ChainInitialization> {
    let space = counts.space();
    let m = space.m();
    let total: u64 = counts.initial.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let dist: Vec<f64> = counts.initial.iter().map(|&c| c as f64 / total as f64).collect();
    let mut data = vec![0.0; m * m];
    for h in 0..m {
        let row = &counts.first_step[h * m..(h + 1) * m];
        let n: u64 = row.iter().sum();
        if n > 0 {
            for (k, &c) in row.iter().enumerate() {
                data[h * m + k] = c as f64 / n as f64;
            }
        } else if space.is_absorbing(h) {
            data[h * m + h] = 1.0;
        }
    }
    ChainInitialization::new(dist, FirstOrderMatrix::new(m, data)?)
}

/// One-step relative frequencies `#(h -> j) / #(days in h with a next day)`.
/// Absorbing rows are unit self-loops; unobserved transient rows are zero.
pub fn estimate_first_order(dataset: &[Trajectory], space: &StateSpace) -> Result<FirstOrderMatrix> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = space.m();
    let mut moves = vec![0u64; m * m];
    for t in dataset {
        if let Some(&bad) = t.states.iter().find(|&&s| s >= m) {
            return Err(Error::StateOutOfRange { subject: t.subject_id.clone(), index: bad + 1, m });
        }
        for w in t.states.windows(2) {
            moves[w[0] * m + w[1]] += 1;
        }
    }
    let mut data = vec![0.0; m * m];
    for h in 0..m {
        if space.is_absorbing(h) {
            data[h * m + h] = 1.0;
            continue;
        }
        let n: u64 = moves[h * m..(h + 1) * m].iter().sum();
        if n > 0 {
            for j in 0..m {
                data[h * m + j] = moves[h * m + j] as f64 / n as f64;
            }
        }
    }
    FirstOrderMatrix::new(m, data)
}
