//! Test oracles and scenario chains, written independently of the library's
//! propagation and counting code.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secord_core::{
    ChainInitialization, ChainOrder, FirstOrderMatrix, SimulationConfig, StateSpace, Trajectory, TransitionTensor,
};

pub type Mat = Vec<Vec<f64>>;

/// Random tensor on `m` states: most pairs supported, rows with random zeros.
pub fn random_tensor(rng: &mut ChaCha8Rng, m: usize) -> TransitionTensor {
    let mut data = vec![0.0; m * m * m];
    let mut support = vec![false; m * m];
    for p in 0..m * m {
        if p > 0 && rng.random::<f64>() < 0.15 {
            continue;
        }
        support[p] = true;
        let mut row: Vec<f64> = (0..m).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() }).collect();
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            row[rng.random_range(0..m)] = 1.0;
        } else {
            row.iter_mut().for_each(|x| *x /= s);
        }
        data[p * m..(p + 1) * m].copy_from_slice(&row);
    }
    TransitionTensor::new(m, data, support).unwrap()
}

/// Fifty tensors cycling through m = 2, 3, 4.
pub fn tensor_suite(seed: u64) -> Vec<TransitionTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..50).map(|i| random_tensor(&mut rng, 2 + i % 3)).collect()
}

pub fn supported(t: &TransitionTensor) -> Vec<(usize, usize)> {
    let m = t.m();
    (0..m).flat_map(|h| (0..m).map(move |j| (h, j))).filter(|&(h, j)| t.is_supported(h, j)).collect()
}

/// Law of `X_{s+n+2}` by summing over every path of `n + 1` further states.
pub fn enumerate_paths(t: &TransitionTensor, h: usize, j: usize, n: usize) -> Vec<f64> {
    fn walk(t: &TransitionTensor, a: usize, b: usize, left: usize, w: f64, out: &mut [f64]) {
        if left == 0 {
            out[b] += w;
            return;
        }
        for k in 0..t.m() {
            let p = t.get(a, b, k);
            if p > 0.0 {
                walk(t, b, k, left - 1, w * p, out);
            }
        }
    }
    let mut out = vec![0.0; t.m()];
    walk(t, h, j, n + 1, 1.0, &mut out);
    out
}

fn matrix(t: &TransitionTensor, h: usize) -> Mat {
    let m = t.m();
    (0..m).map(|j| (0..m).map(|k| t.get(h, j, k)).collect()).collect()
}

/// `P^(l)[a][b] = P_{b a l}`: column `l` of each matrix, side by side.
fn column_matrix(t: &TransitionTensor, l: usize) -> Mat {
    let m = t.m();
    (0..m).map(|a| (0..m).map(|b| t.get(b, a, l)).collect()).collect()
}

/// Row `v` scales the rows of `a`.
fn star(v: &[f64], a: &Mat) -> Mat {
    a.iter().zip(v).map(|(row, &s)| row.iter().map(|x| s * x).collect()).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let p = b[0].len();
    let mut c = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..b.len() {
            for j in 0..p {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn trace(a: &Mat) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

fn row(t: &TransitionTensor, h: usize, j: usize) -> Vec<f64> {
    (0..t.m()).map(|k| t.get(h, j, k)).collect()
}

/// `Tr(P_{ab·} ∗ P_(b) · P^(l))`
fn trace_term(t: &TransitionTensor, a: usize, b: usize, l: usize) -> f64 {
    trace(&matmul(&star(&row(t, a, b), &matrix(t, b)), &column_matrix(t, l)))
}

/// The closed forms for two to five days ahead (`n = 1..=4`).
pub fn paper_formula(t: &TransitionTensor, h: usize, j: usize, l: usize, n: usize) -> f64 {
    let m = t.m();
    match n {
        1 => (0..m).map(|k| t.get(h, j, k) * t.get(j, k, l)).sum(),
        2 => trace_term(t, h, j, l),
        3 => (0..m).map(|k1| t.get(h, j, k1) * trace_term(t, j, k1, l)).sum(),
        4 => {
            let mut s = 0.0;
            for k2 in 0..m {
                for k1 in 0..m {
                    s += t.get(h, j, k2) * t.get(j, k2, k1) * trace_term(t, k2, k1, l);
                }
            }
            s
        }
        _ => panic!("closed forms cover n = 1..=4"),
    }
}

/// Marginal of `e_(h,j) · L^(n+1)` over the current state.
pub fn lifted_power(t: &TransitionTensor, h: usize, j: usize, n: usize) -> Vec<f64> {
    let m = t.m();
    let init = ChainInitialization::degenerate(0, FirstOrderMatrix::identity(m)).unwrap();
    let lifted = secord_core::lift_to_pairs(t, &init).unwrap();
    let mm = m * m;
    let l: Mat = (0..mm).map(|r| lifted.matrix.row(r).to_vec()).collect();
    let mut power: Mat = (0..mm).map(|r| (0..mm).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..=n {
        power = matmul(&power, &l);
    }
    let start = lifted.pair(h, j);
    let mut out = vec![0.0; m];
    for p in 0..mm {
        out[p % m] += power[start][p];
    }
    out
}

/// Triple and at-risk totals recounted by a plain scan.
pub struct Recount {
    pub triples: HashMap<(usize, usize, usize), u64>,
    pub at_risk: HashMap<(usize, usize), u64>,
    pub by_day: HashMap<(usize, usize, usize, usize), u64>,
}

pub fn recount(dataset: &[Trajectory]) -> Recount {
    let mut r = Recount { triples: HashMap::new(), at_risk: HashMap::new(), by_day: HashMap::new() };
    for t in dataset {
        for i in 0..t.states.len().saturating_sub(2) {
            let (h, j, l) = (t.states[i], t.states[i + 1], t.states[i + 2]);
            *r.triples.entry((h, j, l)).or_default() += 1;
            *r.at_risk.entry((h, j)).or_default() += 1;
            *r.by_day.entry((h, j, l, t.start_day + i + 2)).or_default() += 1;
        }
    }
    r
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const MILD: usize = 0;
pub const SEVERE: usize = 1;
pub const RECOVERED: usize = 2;
pub const DEAD: usize = 3;

pub fn illness_space() -> StateSpace {
    StateSpace::new(
        ["Mild", "Severe", "Recovered", "Dead"],
        &[(MILD, SEVERE), (SEVERE, MILD), (MILD, RECOVERED), (SEVERE, RECOVERED), (SEVERE, DEAD)],
        &[RECOVERED, DEAD],
    )
    .unwrap()
}

pub fn illness_first_order() -> FirstOrderMatrix {
    FirstOrderMatrix::from_rows(&[
        vec![0.8, 0.1, 0.1, 0.0],
        vec![0.1, 0.6, 0.2, 0.1],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap()
}

/// `P[h][j][k] = F[j][k]` on every pair.
pub fn tensor_from_first_order(f: &FirstOrderMatrix) -> TransitionTensor {
    let m = f.m();
    let mut b = TransitionTensor::builder(m);
    for h in 0..m {
        for j in 0..m {
            b.row(h, j, f.row(j));
        }
    }
    b.build().unwrap()
}

/// Recovery from Severe depends strongly on whether the patient just came
/// from Mild (0.5) or was already Severe (0.15).
pub fn illness_second_order() -> TransitionTensor {
    TransitionTensor::builder(4)
        .row(MILD, MILD, &[0.8, 0.1, 0.1, 0.0])
        .row(SEVERE, MILD, &[0.6, 0.2, 0.2, 0.0])
        .row(MILD, SEVERE, &[0.1, 0.3, 0.5, 0.1])
        .row(SEVERE, SEVERE, &[0.1, 0.6, 0.15, 0.15])
        .unit(MILD, RECOVERED, RECOVERED)
        .unit(SEVERE, RECOVERED, RECOVERED)
        .unit(RECOVERED, RECOVERED, RECOVERED)
        .unit(SEVERE, DEAD, DEAD)
        .unit(DEAD, DEAD, DEAD)
        .build()
        .unwrap()
}

pub fn illness_init() -> ChainInitialization {
    ChainInitialization::new(vec![0.7, 0.3, 0.0, 0.0], illness_first_order()).unwrap()
}

pub fn first_order_cohort(n: usize, t_max: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        space: illness_space(),
        tensor: tensor_from_first_order(&illness_first_order()),
        init: illness_init(),
        n_subjects: n,
        t_max,
        seed,
        order: ChainOrder::First,
    }
}

pub fn second_order_cohort(n: usize, t_max: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        space: illness_space(),
        tensor: illness_second_order(),
        init: illness_init(),
        n_subjects: n,
        t_max,
        seed,
        order: ChainOrder::Second,
    }
}

/// Three states, one absorbing, genuinely second order.
pub fn toy_space() -> StateSpace {
    StateSpace::new(["A", "B", "D"], &[(0, 1), (1, 0), (0, 2), (1, 2)], &[2]).unwrap()
}

pub fn toy_tensor() -> TransitionTensor {
    TransitionTensor::builder(3)
        .row(0, 0, &[0.6, 0.3, 0.1])
        .row(1, 0, &[0.2, 0.5, 0.3])
        .row(0, 1, &[0.4, 0.4, 0.2])
        .row(1, 1, &[0.1, 0.7, 0.2])
        .unit(0, 2, 2)
        .unit(1, 2, 2)
        .unit(2, 2, 2)
        .build()
        .unwrap()
}

pub fn toy_config(n: usize, t_max: usize, seed: u64) -> SimulationConfig {
    let first = FirstOrderMatrix::from_rows(&[vec![0.7, 0.2, 0.1], vec![0.3, 0.6, 0.1], vec![0.0, 0.0, 1.0]]).unwrap();
    SimulationConfig {
        space: toy_space(),
        tensor: toy_tensor(),
        init: ChainInitialization::new(vec![0.5, 0.5, 0.0], first).unwrap(),
        n_subjects: n,
        t_max,
        seed,
        order: ChainOrder::Second,
    }
}

/// Chain whose transient states mix quickly, so every pair row gathers
/// tens of thousands of at-risk days in a 20,000-subject cohort.
pub fn mixing_space() -> StateSpace {
    StateSpace::new(["A", "B", "C", "D"], &[(0, 1), (1, 0), (0, 2), (0, 3), (1, 2), (1, 3)], &[2, 3]).unwrap()
}

pub fn mixing_tensor() -> TransitionTensor {
    TransitionTensor::builder(4)
        .row(0, 0, &[0.55, 0.35, 0.07, 0.03])
        .row(1, 0, &[0.40, 0.45, 0.10, 0.05])
        .row(0, 1, &[0.45, 0.40, 0.10, 0.05])
        .row(1, 1, &[0.30, 0.55, 0.05, 0.10])
        .build()
        .unwrap()
}

pub fn mixing_cohort(n: usize, t_max: usize, seed: u64) -> SimulationConfig {
    let first = FirstOrderMatrix::from_rows(&[
        vec![0.5, 0.35, 0.1, 0.05],
        vec![0.4, 0.45, 0.05, 0.1],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    SimulationConfig {
        space: mixing_space(),
        tensor: mixing_tensor(),
        init: ChainInitialization::new(vec![0.6, 0.4, 0.0, 0.0], first).unwrap(),
        n_subjects: n,
        t_max,
        seed,
        order: ChainOrder::Second,
    }
}
