//! File formats: trajectory CSV, state-space JSON, labels CSV, tensor JSON,
//! curve / report / path-summary CSVs. All writers are deterministic.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ck::PredictionCurve;
use crate::error::{Error, Result};
use crate::estimate::{PathCounts, ADMISSION};
use crate::model::{ChainInitialization, FirstOrderMatrix, StateSpace, Trajectory, TransitionTensor};
use crate::mtest::MarkovTestReport;

/// Long-format `subject_id,day,state`. States may be 1-based integers or
/// labels of `space`; each subject's rows must be consecutive days.
pub fn read_trajectories<R: Read>(reader: R, space: &StateSpace) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("trajectory file is missing the '{name}' column")))
    };
    let (c_id, c_day, c_state) = (col("subject_id")?, col("day")?, col("state")?);

    let mut out: Vec<Trajectory> = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(c_id).unwrap_or("");
        let day_raw = record.get(c_day).unwrap_or("");
        let state_raw = record.get(c_state).unwrap_or("");
        if id.is_empty() {
            return Err(Error::Parse(format!("line {line}: empty subject_id")));
        }
        let day: usize = day_raw
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: non-integer day '{day_raw}' for subject {id}")))?;
        if day < 1 {
            return Err(Error::Parse(format!("line {line}: day must be at least 1 for subject {id}")));
        }
        let state = parse_state(state_raw, space, id, line)?;

        match out.last_mut() {
            Some(t) if t.subject_id == id => {
                let next = t.end_day() + 1;
                if day < next {
                    return Err(Error::Parse(format!("line {line}: duplicate or out-of-order day {day} for subject {id}")));
                }
                if day > next {
                    return Err(Error::Parse(format!("line {line}: gap at day {next} for subject {id}")));
                }
                t.states.push(state);
            }
            _ => {
                if let Some(prev) = out.last() {
                    finished.insert(prev.subject_id.clone());
                }
                if finished.contains(id) {
                    return Err(Error::Parse(format!("line {line}: rows for subject {id} are not contiguous")));
                }
                out.push(Trajectory::new(id, day, vec![state]));
            }
        }
    }
    Ok(out)
}

fn parse_state(raw: &str, space: &StateSpace, id: &str, line: u64) -> Result<usize> {
    if let Ok(k) = raw.parse::<usize>() {
        if k < 1 || k > space.m() {
            return Err(Error::StateOutOfRange { subject: id.to_string(), index: k, m: space.m() });
        }
        return Ok(k - 1);
    }
    space
        .index_of(raw)
        .ok_or_else(|| Error::Parse(format!("line {line}: unknown state label '{raw}' for subject {id}")))
}

/// Canonical form: integer states, subjects in dataset order.
pub fn write_trajectories<W: Write>(writer: W, dataset: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "day", "state"])?;
    for t in dataset {
        for (k, &s) in t.states.iter().enumerate() {
            w.write_record([t.subject_id.as_str(), &(t.start_day + k).to_string(), &(s + 1).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// State-space file. States are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub labels: Vec<String>,
    pub transitions: Vec<(usize, usize)>,
    pub absorbing: Vec<usize>,
}

impl SpaceFile {
    pub fn from_space(space: &StateSpace) -> Self {
        Self {
            labels: space.labels().to_vec(),
            transitions: space.moves().into_iter().map(|(a, b)| (a + 1, b + 1)).collect(),
            absorbing: space.absorbing_states().into_iter().map(|s| s + 1).collect(),
        }
    }

    pub fn to_space(&self) -> Result<StateSpace> {
        let m = self.labels.len();
        let idx = |s: usize| {
            if s < 1 || s > m {
                Err(Error::InvalidSpace(format!("state {s} out of range 1..={m}")))
            } else {
                Ok(s - 1)
            }
        };
        let moves = self.transitions.iter().map(|&(a, b)| Ok((idx(a)?, idx(b)?))).collect::<Result<Vec<_>>>()?;
        let absorbing = self.absorbing.iter().map(|&s| idx(s)).collect::<Result<Vec<_>>>()?;
        StateSpace::new(self.labels.clone(), &moves, &absorbing)
    }
}

pub fn read_space<R: Read>(reader: R) -> Result<StateSpace> {
    let file: SpaceFile = serde_json::from_reader(reader)?;
    file.to_space()
}

pub fn write_space<W: Write>(mut writer: W, space: &StateSpace) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, &SpaceFile::from_space(space))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Labels file `index,label` covering `1..=M` exactly once.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let raw = record.get(0).unwrap_or("");
        let idx: usize = raw.parse().map_err(|_| Error::Parse(format!("labels file: bad index '{raw}'")))?;
        let label = record.get(1).unwrap_or("").to_string();
        pairs.push((idx, label));
    }
    pairs.sort();
    for (k, (idx, _)) in pairs.iter().enumerate() {
        if *idx != k + 1 {
            return Err(Error::Parse(format!("labels file must list indices 1..={} exactly once", pairs.len())));
        }
    }
    Ok(pairs.into_iter().map(|(_, l)| l).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDocument {
    pub dist: Vec<f64>,
    pub first_step: Vec<Vec<f64>>,
}

/// JSON layout of a tensor: `matrices[h][j][k] = P[h][j][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDocument {
    pub m: usize,
    pub labels: Vec<String>,
    pub matrices: Vec<Vec<Vec<f64>>>,
    pub support: Vec<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitDocument>,
}

impl TensorDocument {
    pub fn new(tensor: &TransitionTensor, labels: &[String], init: Option<&ChainInitialization>) -> Self {
        let m = tensor.m();
        Self {
            m,
            labels: labels.to_vec(),
            matrices: (0..m).map(|h| tensor.matrix(h)).collect(),
            support: tensor.support_matrix(),
            init: init.map(|i| InitDocument { dist: i.initial_dist.clone(), first_step: i.first_step.rows() }),
        }
    }

    pub fn tensor(&self) -> Result<TransitionTensor> {
        let m = self.m;
        if self.labels.len() != m || self.matrices.len() != m || self.support.len() != m {
            return Err(Error::InvalidTensor(format!("document declares m = {m} but its arrays disagree")));
        }
        let mut data = Vec::with_capacity(m * m * m);
        for mat in &self.matrices {
            if mat.len() != m || mat.iter().any(|r| r.len() != m) {
                return Err(Error::InvalidTensor("every matrix must be m × m".into()));
            }
            mat.iter().for_each(|r| data.extend_from_slice(r));
        }
        if self.support.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidTensor("support must be m × m".into()));
        }
        let support = self.support.iter().flatten().copied().collect();
        TransitionTensor::new(m, data, support)
    }

    pub fn initialization(&self) -> Result<Option<ChainInitialization>> {
        self.init
            .as_ref()
            .map(|i| ChainInitialization::new(i.dist.clone(), FirstOrderMatrix::from_rows(&i.first_step)?))
            .transpose()
    }
}

pub fn write_tensor_json<W: Write>(mut writer: W, doc: &TensorDocument) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, doc)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_tensor_json<R: Read>(reader: R) -> Result<TensorDocument> {
    let doc: TensorDocument = serde_json::from_reader(reader)?;
    doc.tensor()?;
    doc.initialization()?;
    Ok(doc)
}

/// `n,probability`; header only when the curve is empty.
pub fn write_curve<W: Write>(writer: W, curve: &PredictionCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "probability"])?;
    for (k, p) in curve.values.iter().enumerate() {
        w.write_record([(k + 1).to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the two-step path summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStepRow {
    /// Direct jump `j -> l` (0-based).
    pub direct: (usize, usize),
    pub direct_total: u64,
    /// State the spell in `j` was entered from; `None` for admission.
    pub prior: Option<usize>,
    pub count: u64,
}

impl TwoStepRow {
    /// Share of the direct total, in percent.
    pub fn percent(&self) -> f64 {
        if self.direct_total == 0 {
            0.0
        } else {
            100.0 * self.count as f64 / self.direct_total as f64
        }
    }
}

/// For every observed jump `j -> l`, the split by the state preceding the
/// spell in `j`: each state that may move into `j`, then admission in `j`
/// when such admissions occur.
pub fn two_step_summary(counts: &PathCounts) -> Vec<TwoStepRow> {
    let space = counts.space();
    let jumps = counts.jumps();
    let mut rows = Vec::new();
    for (j, l) in space.moves() {
        let total = jumps.direct(j, l);
        if total == 0 {
            continue;
        }
        for h in (0..space.m()).filter(|&h| h != j && space.allows(h, j)) {
            rows.push(TwoStepRow { direct: (j, l), direct_total: total, prior: Some(h), count: jumps.via(h, j, l) });
        }
        if counts.initial_counts()[j] > 0 {
            rows.push(TwoStepRow { direct: (j, l), direct_total: total, prior: None, count: jumps.via(ADMISSION, j, l) });
        }
    }
    rows
}

/// `100 * count / total` to two decimals, rounding halves up, computed
/// exactly in integers.
pub fn format_percent(count: u64, total: u64) -> String {
    if total == 0 {
        return "0.00".to_string();
    }
    let (c, t) = (count as u128, total as u128);
    let hundredths = (c * 20_000 + t) / (2 * t);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Percentages with two decimals.
pub fn write_two_step_csv<W: Write>(writer: W, rows: &[TwoStepRow], space: &StateSpace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["direct_transition", "direct_count", "two_step_path", "count", "percent"])?;
    for r in rows {
        let (j, l) = r.direct;
        let direct = format!("{}->{}", space.label(j), space.label(l));
        let path = match r.prior {
            Some(h) => format!("{}->{}->{}", space.label(h), space.label(j), space.label(l)),
            None => format!("admission->{}->{}", space.label(j), space.label(l)),
        };
        w.write_record([direct, r.direct_total.to_string(), path, r.count.to_string(), format_percent(r.count, r.direct_total)])?;
    }
    w.flush()?;
    Ok(())
}

/// p-values laid out with one row per (transition, statistic) and one column
/// per transient conditioning state, followed by the two overall columns.
pub fn write_markov_csv<W: Write>(writer: W, reports: &[MarkovTestReport], space: &StateSpace) -> Result<()> {
    let columns: Vec<usize> = (0..space.m()).filter(|&s| !space.is_absorbing(s)).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["transition".to_string(), "statistic".to_string()];
    header.extend(columns.iter().map(|&s| space.label(s).to_string()));
    header.extend(["overall_mean".to_string(), "overall_max".to_string()]);
    w.write_record(&header)?;
    for r in reports {
        let (l, m) = r.transition;
        let name = format!("{}->{}", space.label(l), space.label(m));
        for (stat, pick) in [("UM", 0usize), ("WM", 1), ("S", 2)] {
            let get = |s: &crate::mtest::Summary| [s.um, s.wm, s.sup][pick].to_string();
            let mut row = vec![name.clone(), stat.to_string()];
            for &c in &columns {
                row.push(r.states.iter().find(|x| x.conditioning == c).map(|x| get(&x.p_values)).unwrap_or_default());
            }
            row.push(get(&r.overall_mean.p_values));
            row.push(get(&r.overall_max.p_values));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
