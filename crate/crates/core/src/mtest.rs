//! Log-rank test of the first-order assumption for one transition `l -> m`.
//!
//! At a grid time `s`, subjects are split by whether they occupy the
//! conditioning state `j` on day `⌊s⌋` (subjects that are already absorbed
//! keep their absorbing state). The two groups are then compared on their
//! later `l -> m` transitions with a two-sample log-rank statistic. Under a
//! first-order chain the past carries no information about the future, so
//! the standardized process should look like noise around zero.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{StateSpace, Trajectory};
use crate::rng::{self, DOMAIN_BOOTSTRAP};

/// Evenly spaced grid `t0, t0 + step, ...` up to `t_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestGrid {
    t0: f64,
    t_max: f64,
    step: f64,
    points: Vec<f64>,
}

impl TestGrid {
    pub fn new(t0: f64, t_max: f64, step: f64) -> Result<Self> {
        if !(t0.is_finite() && t_max.is_finite() && step.is_finite()) {
            return Err(Error::InvalidGrid("bounds and step must be finite".into()));
        }
        if t0 >= t_max {
            return Err(Error::InvalidGrid(format!("t0 ({t0}) must be below t_max ({t_max})")));
        }
        if step <= 0.0 {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        let count = ((t_max - t0) / step + 1e-9).floor() as usize + 1;
        let points = (0..count).map(|k| t0 + k as f64 * step).filter(|&s| s <= t_max).collect();
        Ok(Self { t0, t_max, step, points })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl Default for TestGrid {
    /// `[1, 11]` with half-day spacing.
    fn default() -> Self {
        Self::new(1.0, 11.0, 0.5).expect("default grid is valid")
    }
}

/// Weight function for the WM summary.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Number of subjects in the source state `l` on day `⌊s⌋`, counted only
    /// where both groups are non-empty.
    #[default]
    Occupancy,
    Uniform,
    /// One weight per grid point.
    Custom(Vec<f64>),
}

/// The three global statistics of a standardized process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub um: f64,
    pub wm: f64,
    pub sup: f64,
}

impl Summary {
    /// Summaries over the `Some` entries of `values`. Weights are normalized
    /// over those entries; if they all vanish, uniform weights are used.
    pub fn from_values(values: &[Option<f64>], weights: &[f64]) -> Result<Self> {
        assert_eq!(values.len(), weights.len());
        let mut n = 0usize;
        let (mut sum, mut wsum, mut wtot, mut sup) = (0.0, 0.0, 0.0, 0.0f64);
        for (v, &w) in values.iter().zip(weights) {
            if let Some(v) = v {
                let a = v.abs();
                n += 1;
                sum += a;
                wsum += w * a;
                wtot += w;
                sup = sup.max(a);
            }
        }
        if n == 0 {
            return Err(Error::AllDegenerate);
        }
        let um = sum / n as f64;
        let wm = if wtot > 0.0 { wsum / wtot } else { um };
        Ok(Self { um, wm, sup })
    }

    fn get(&self, k: usize) -> f64 {
        [self.um, self.wm, self.sup][k]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self { um: a[0], wm: a[1], sup: a[2] }
    }
}

/// Retained per-subject contributions: `values[g]` summed over subjects is
/// the raw statistic at grid point `g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectContribution {
    pub subject: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogrankProcess {
    pub transition: (usize, usize),
    pub conditioning: usize,
    pub grid: TestGrid,
    pub statistic: Vec<f64>,
    pub variance: Vec<f64>,
    /// `None` at degenerate (zero-variance) points.
    pub standardized: Vec<Option<f64>>,
    /// Subjects occupying the conditioning state on day `⌊s⌋`.
    pub group_size: Vec<usize>,
    /// Subjects occupying the source state on day `⌊s⌋`.
    pub source_occupancy: Vec<usize>,
    /// Subjects observed (or absorbed) on day `⌊s⌋`.
    pub observed: Vec<usize>,
    pub contributions: Vec<SubjectContribution>,
}

impl LogrankProcess {
    pub fn is_degenerate(&self, g: usize) -> bool {
        self.standardized[g].is_none()
    }

    pub fn degenerate_points(&self) -> usize {
        self.standardized.iter().filter(|v| v.is_none()).count()
    }

    pub fn weights(&self, weighting: &Weighting) -> Result<Vec<f64>> {
        let g = self.grid.len();
        match weighting {
            Weighting::Uniform => Ok(vec![1.0; g]),
            Weighting::Occupancy => Ok((0..g)
                .map(|k| {
                    let informative = self.group_size[k] > 0 && self.group_size[k] < self.observed[k];
                    if informative { self.source_occupancy[k] as f64 } else { 0.0 }
                })
                .collect()),
            Weighting::Custom(w) => {
                if w.len() != g {
                    return Err(Error::InvalidGrid(format!("{} custom weights for {g} grid points", w.len())));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidGrid("custom weights must be finite and non-negative".into()));
                }
                Ok(w.clone())
            }
        }
    }
}

/// State on day `⌊s⌋`; absorbed subjects stay in their absorbing state.
fn state_at(t: &Trajectory, space: &StateSpace, day: usize) -> Option<usize> {
    if let Some(x) = t.state_on(day) {
        return Some(x);
    }
    match t.states.last() {
        Some(&last) if day > t.end_day() && space.is_absorbing(last) => Some(last),
        _ => None,
    }
}

/// Days with at least one `l -> m` event, with their risk sets.
struct EventDay {
    t: usize,
    d: usize,
    /// (subject, had the event)
    members: Vec<(usize, bool)>,
}

struct Prepared {
    n: usize,
    days: Vec<EventDay>,
}

fn prepare(dataset: &[Trajectory], l: usize, m: usize) -> Prepared {
    let mut by_day: std::collections::BTreeMap<usize, Vec<(usize, bool)>> = Default::default();
    for (i, traj) in dataset.iter().enumerate() {
        for (k, w) in traj.states.windows(2).enumerate() {
            if w[0] == l {
                by_day.entry(traj.start_day + k + 1).or_default().push((i, w[1] == m));
            }
        }
    }
    let days = by_day
        .into_iter()
        .filter_map(|(t, members)| {
            let d = members.iter().filter(|x| x.1).count();
            (d > 0).then_some(EventDay { t, d, members })
        })
        .collect();
    Prepared { n: dataset.len(), days }
}

fn check_transition(space: &StateSpace, l: usize, m: usize) -> Result<()> {
    let n = space.m();
    if l >= n || m >= n || l == m || !space.allows(l, m) {
        return Err(Error::NotAdjacent { l: l + 1, m: m + 1 });
    }
    Ok(())
}

/// Process for an arbitrary group indicator `delta[g][i]`.
fn process_from_groups(
    prep: &Prepared,
    grid: &TestGrid,
    delta: &[Vec<bool>],
) -> (Vec<f64>, Vec<f64>, Vec<SubjectContribution>) {
    let g_len = grid.len();
    let mut stat = vec![0.0; g_len];
    let mut var = vec![0.0; g_len];
    let mut contrib = vec![0.0; prep.n * g_len];
    for (g, &s) in grid.points().iter().enumerate() {
        let dg = &delta[g];
        for day in prep.days.iter().filter(|d| d.t as f64 > s) {
            let y = day.members.len() as f64;
            let y1 = day.members.iter().filter(|x| dg[x.0]).count() as f64;
            let d = day.d as f64;
            let e = y1 / y;
            let hits = day.members.iter().filter(|x| x.1 && dg[x.0]).count() as f64;
            stat[g] += hits - d * e;
            let tie = if day.members.len() > 1 { (y - d) / (y - 1.0) } else { 1.0 };
            var[g] += d * e * (1.0 - e) * tie;
            let rate = d / y;
            for &(i, ev) in &day.members {
                let di = if dg[i] { 1.0 } else { 0.0 };
                let dn = if ev { 1.0 } else { 0.0 };
                contrib[i * g_len + g] += (di - e) * (dn - rate);
            }
        }
    }
    let contributions = contrib
        .chunks(g_len)
        .enumerate()
        .filter(|(_, c)| c.iter().any(|&x| x != 0.0))
        .map(|(subject, c)| SubjectContribution { subject, values: c.to_vec() })
        .collect();
    (stat, var, contributions)
}

#[allow(clippy::too_many_arguments)]
fn build_process(
    dataset: &[Trajectory],
    space: &StateSpace,
    prep: &Prepared,
    l: usize,
    m: usize,
    j: usize,
    grid: &TestGrid,
    complement: bool,
) -> Result<LogrankProcess> {
    let g_len = grid.len();
    let mut delta = vec![vec![false; prep.n]; g_len];
    let mut group_size = vec![0; g_len];
    let mut source_occupancy = vec![0; g_len];
    let mut observed = vec![0; g_len];
    for (g, &s) in grid.points().iter().enumerate() {
        let day = s.floor().max(0.0) as usize;
        for (i, traj) in dataset.iter().enumerate() {
            let x = state_at(traj, space, day);
            if let Some(x) = x {
                observed[g] += 1;
                if x == j {
                    group_size[g] += 1;
                }
                if x == l {
                    source_occupancy[g] += 1;
                }
            }
            delta[g][i] = (x == Some(j)) != complement;
        }
    }
    if group_size.iter().all(|&c| c == 0) {
        return Err(Error::VacuousConditioning(j + 1));
    }
    let (statistic, variance, contributions) = process_from_groups(prep, grid, &delta);
    let standardized = statistic
        .iter()
        .zip(&variance)
        .map(|(&u, &v)| (v > 0.0).then(|| u / v.sqrt()))
        .collect();
    Ok(LogrankProcess {
        transition: (l, m),
        conditioning: j,
        grid: grid.clone(),
        statistic,
        variance,
        standardized,
        group_size,
        source_occupancy,
        observed,
        contributions,
    })
}

/// Log-rank process for transition `l -> m` conditioning on state `j`.
pub fn logrank_process(
    dataset: &[Trajectory],
    space: &StateSpace,
    l: usize,
    m: usize,
    j: usize,
    grid: &TestGrid,
) -> Result<LogrankProcess> {
    check_transition(space, l, m)?;
    if j >= space.m() {
        return Err(Error::StateOutOfRange { subject: "-".into(), index: j + 1, m: space.m() });
    }
    let prep = prepare(dataset, l, m);
    build_process(dataset, space, &prep, l, m, j, grid, false)
}

/// As [`logrank_process`] with the two group labels swapped.
pub fn logrank_process_complement(
    dataset: &[Trajectory],
    space: &StateSpace,
    l: usize,
    m: usize,
    j: usize,
    grid: &TestGrid,
) -> Result<LogrankProcess> {
    check_transition(space, l, m)?;
    let prep = prepare(dataset, l, m);
    build_process(dataset, space, &prep, l, m, j, grid, true)
}

pub fn summarize_process(process: &LogrankProcess, weighting: &Weighting) -> Result<Summary> {
    let w = process.weights(weighting)?;
    Summary::from_values(&process.standardized, &w)
}

/// `(1 + #{resampled ≥ observed}) / (B + 1)`.
pub fn bootstrap_p_value(observed: f64, resampled: &[f64]) -> f64 {
    let hits = resampled.iter().filter(|&&x| x >= observed).count();
    (1 + hits) as f64 / (resampled.len() + 1) as f64
}

/// Transient states from which `l` can be reached.
pub fn default_conditioning_states(space: &StateSpace, l: usize) -> Vec<usize> {
    (0..space.m()).filter(|&j| !space.is_absorbing(j) && space.can_reach(j, l)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTestOptions {
    pub grid: TestGrid,
    /// Defaults to [`default_conditioning_states`].
    pub conditioning: Option<Vec<usize>>,
    pub resamples: usize,
    pub seed: u64,
    pub weighting: Weighting,
}

impl Default for MarkovTestOptions {
    fn default() -> Self {
        Self { grid: TestGrid::default(), conditioning: None, resamples: 5000, seed: 0, weighting: Weighting::Occupancy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateResult {
    pub conditioning: usize,
    pub observed: Summary,
    pub p_values: Summary,
    pub grid_points: usize,
    pub degenerate_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallResult {
    pub observed: Summary,
    pub p_values: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovTestReport {
    pub transition: (usize, usize),
    pub grid: TestGrid,
    pub weighting: Weighting,
    pub resamples: usize,
    pub seed: u64,
    pub generator: String,
    pub states: Vec<StateResult>,
    /// Mean of the per-state statistics.
    pub overall_mean: OverallResult,
    /// Max of the per-state statistics.
    pub overall_max: OverallResult,
    pub warnings: Vec<String>,
}

impl MarkovTestReport {
    /// Headline p-value: mean-aggregated UM.
    pub fn overall_p_value(&self) -> f64 {
        self.overall_mean.p_values.um
    }
}

struct Usable {
    process: LogrankProcess,
    weights: Vec<f64>,
    observed: Summary,
}

fn aggregate(per_state: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut mean = [0.0; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for s in per_state {
        for k in 0..3 {
            mean[k] += s[k];
            max[k] = max[k].max(s[k]);
        }
    }
    for v in &mut mean {
        *v /= per_state.len() as f64;
    }
    (mean, max)
}

fn resampled_summary(u: &Usable, z: &[f64], g_len: usize, buf: &mut Vec<f64>) -> [f64; 3] {
    buf.clear();
    buf.resize(g_len, 0.0);
    for c in &u.process.contributions {
        let zi = z[c.subject];
        for (b, &v) in buf.iter_mut().zip(&c.values) {
            *b += zi * v;
        }
    }
    let (mut n, mut sum, mut wsum, mut wtot, mut sup) = (0usize, 0.0, 0.0, 0.0, 0.0f64);
    for ((&b, &v), &w) in buf.iter().zip(&u.process.variance).zip(&u.weights) {
        if v > 0.0 {
            let a = (b / v.sqrt()).abs();
            n += 1;
            sum += a;
            wsum += w * a;
            wtot += w;
            sup = sup.max(a);
        }
    }
    let um = sum / n as f64;
    [um, if wtot > 0.0 { wsum / wtot } else { um }, sup]
}

/// Wild-bootstrap test of transition `l -> m` against each conditioning
/// state. Each resample draws one standard normal multiplier per subject,
/// shared across grid points and conditioning states.
pub fn wild_bootstrap_test(
    dataset: &[Trajectory],
    space: &StateSpace,
    l: usize,
    m: usize,
    options: &MarkovTestOptions,
) -> Result<MarkovTestReport> {
    check_transition(space, l, m)?;
    if options.resamples < 1 {
        return Err(Error::InvalidConfig("number of resamples must be at least 1".into()));
    }
    let conditioning = options.conditioning.clone().unwrap_or_else(|| default_conditioning_states(space, l));
    if conditioning.is_empty() {
        return Err(Error::InvalidConfig("no conditioning states".into()));
    }
    let prep = prepare(dataset, l, m);
    let grid = &options.grid;
    let mut warnings = Vec::new();
    let mut usable = Vec::new();
    for &j in &conditioning {
        if j >= space.m() {
            return Err(Error::StateOutOfRange { subject: "-".into(), index: j + 1, m: space.m() });
        }
        let process = match build_process(dataset, space, &prep, l, m, j, grid, false) {
            Ok(p) => p,
            Err(Error::VacuousConditioning(_)) => {
                warnings.push(format!("conditioning state {} is never occupied on the grid; dropped", space.label(j)));
                continue;
            }
            Err(e) => return Err(e),
        };
        let weights = process.weights(&options.weighting)?;
        match Summary::from_values(&process.standardized, &weights) {
            Ok(observed) => usable.push(Usable { process, weights, observed }),
            Err(Error::AllDegenerate) => {
                warnings.push(format!("conditioning state {} gives a fully degenerate process; dropped", space.label(j)));
            }
            Err(e) => return Err(e),
        }
    }
    if usable.is_empty() {
        return Err(Error::AllDegenerate);
    }

    let g_len = grid.len();
    let n = prep.n;
    let seed = options.seed;
    let draws: Vec<Vec<[f64; 3]>> = (0..options.resamples)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(n), Vec::with_capacity(g_len)),
            |(z, buf), b| {
                let mut rng = rng::stream(seed, DOMAIN_BOOTSTRAP, b as u64);
                z.clear();
                z.extend((0..n).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
                usable.iter().map(|u| resampled_summary(u, z, g_len, buf)).collect()
            },
        )
        .collect();

    let p_of = |observed: [f64; 3], pick: &dyn Fn(&Vec<[f64; 3]>) -> [f64; 3]| -> [f64; 3] {
        let mut hits = [0usize; 3];
        for d in &draws {
            let r = pick(d);
            for k in 0..3 {
                if r[k] >= observed[k] {
                    hits[k] += 1;
                }
            }
        }
        hits.map(|h| (1 + h) as f64 / (draws.len() + 1) as f64)
    };

    let mut states = Vec::with_capacity(usable.len());
    for (idx, u) in usable.iter().enumerate() {
        let obs = [u.observed.um, u.observed.wm, u.observed.sup];
        let p = p_of(obs, &|d| d[idx]);
        states.push(StateResult {
            conditioning: u.process.conditioning,
            observed: u.observed,
            p_values: Summary::from_array(p),
            grid_points: g_len,
            degenerate_points: u.process.degenerate_points(),
        });
    }
    let observed_all: Vec<[f64; 3]> = usable.iter().map(|u| [0, 1, 2].map(|k| u.observed.get(k))).collect();
    let (obs_mean, obs_max) = aggregate(&observed_all);
    let p_mean = p_of(obs_mean, &|d| aggregate(d).0);
    let p_max = p_of(obs_max, &|d| aggregate(d).1);

    Ok(MarkovTestReport {
        transition: (l, m),
        grid: grid.clone(),
        weighting: options.weighting.clone(),
        resamples: options.resamples,
        seed,
        generator: rng::GENERATOR.to_string(),
        states,
        overall_mean: OverallResult { observed: Summary::from_array(obs_mean), p_values: Summary::from_array(p_mean) },
        overall_max: OverallResult { observed: Summary::from_array(obs_max), p_values: Summary::from_array(p_max) },
        warnings,
    })
}
