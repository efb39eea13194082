//! Acceptance suite: one line per criterion, every tolerance pinned here.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use secord_core::estimate::RowSource;
use secord_core::fixtures::{divine_printed_tensor, divine_shaped_cohort, DEATH, DISCH, NIMV, NSP, SP};
use secord_core::{
    count_paths, estimate_tensor, n_step_distribution, simulate_cohort, wild_bootstrap_test, MarkovTestOptions, Method,
};

const CK_TOL: f64 = 1e-12;
const CK_RUNTIME: Duration = Duration::from_secs(10);
const MAX_STEPS: usize = 8;
const FIXTURE_TOL: f64 = 1e-4;
const RECOVERY_TOL: f64 = 0.02;
const RECOVERY_MIN_AT_RISK: u64 = 500;
const RECOVERY_N: usize = 20_000;
const ROW_SUM_TOL: f64 = 1e-12;
const RECOVERY_RUNTIME: Duration = Duration::from_secs(60);
const UNBIASED_REPS: usize = 200;
const UNBIASED_N: usize = 1_000;
const UNBIASED_SE: f64 = 3.0;
const ALPHA: f64 = 0.05;
const SIZE_REPS: u64 = 300;
const SIZE_N: usize = 1_000;
const SIZE_B: usize = 500;
const SIZE_RANGE: (f64, f64) = (0.03, 0.08);
const SIZE_RUNTIME: Duration = Duration::from_secs(600);
const POWER_REPS: u64 = 100;
const POWER_N: usize = 2_000;
const POWER_B: usize = 500;
const POWER_MIN_RATE: f64 = 0.80;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_enumeration() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for t in tensor_suite(101) {
        for (h, j) in supported(&t) {
            for n in 1..=MAX_STEPS {
                let got = n_step_distribution(&t, h, j, n).unwrap();
                worst = worst.max(max_abs(&got, &enumerate_paths(&t, h, j, n)));
                cases += 1;
            }
        }
    }
    let took = start.elapsed();
    check(worst <= CK_TOL && took < CK_RUNTIME, format!("{cases} cases, max |diff| {worst:.2e}, {:.2}s", took.as_secs_f64()))
}

fn c2_closed_forms() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for t in tensor_suite(101) {
        for (h, j) in supported(&t) {
            for n in 1..=4 {
                let got = n_step_distribution(&t, h, j, n).unwrap();
                for l in 0..t.m() {
                    worst = worst.max((got[l] - paper_formula(&t, h, j, l, n)).abs());
                    cases += 1;
                }
            }
        }
    }
    check(worst <= CK_TOL, format!("{cases} cells, max |diff| {worst:.2e}"))
}

fn c3_lifting() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for t in tensor_suite(101) {
        for (h, j) in supported(&t) {
            for n in 1..=MAX_STEPS {
                let got = n_step_distribution(&t, h, j, n).unwrap();
                worst = worst.max(max_abs(&got, &lifted_power(&t, h, j, n)));
                cases += 1;
            }
        }
    }
    check(worst <= CK_TOL, format!("{cases} cases, max |diff| {worst:.2e}"))
}

fn c4_printed_matrices() -> Outcome {
    let t = divine_printed_tensor();
    let got = n_step_distribution(&t, NSP, SP, 1).unwrap()[NIMV];
    let hand = (253.0 / 411.0) * (68.0 / 2668.0) + (92.0 / 411.0) * (159.0 / 214.0);
    let diff = (got - hand).abs();
    check(diff < FIXTURE_TOL && (hand - 0.1820).abs() < 5e-5, format!("P = {got:.6}, hand {hand:.6}, |diff| {diff:.1e}"))
}

fn c5_recovery() -> Outcome {
    let start = Instant::now();
    let truth = mixing_tensor();
    let cohort = simulate_cohort(&mixing_cohort(RECOVERY_N, 10, 2024)).unwrap();
    let counts = count_paths(&cohort, &mixing_space()).unwrap();
    let mut worst = [0.0f64; 2];
    let mut cells = 0;
    let mut row_dev = 0.0f64;
    for (k, method) in [Method::Ratio, Method::Conditional].into_iter().enumerate() {
        let est = estimate_tensor(&counts, method);
        for d in &est.diagnostics {
            if d.source != RowSource::Estimated || d.at_risk < RECOVERY_MIN_AT_RISK {
                continue;
            }
            let (h, j) = (d.h - 1, d.j - 1);
            for l in 0..4 {
                worst[k] = worst[k].max((est.tensor.get(h, j, l) - truth.get(h, j, l)).abs());
                cells += 1;
            }
        }
        if method == Method::Ratio {
            for (h, j) in est.tensor.supported_pairs() {
                row_dev = row_dev.max((est.tensor.row_sum(h, j) - 1.0).abs());
            }
        }
    }
    let took = start.elapsed();
    check(
        worst[0] <= RECOVERY_TOL && worst[1] <= RECOVERY_TOL && row_dev <= ROW_SUM_TOL && took < RECOVERY_RUNTIME,
        format!(
            "{cells} cells, max err ratio {:.4} conditional {:.4}, row-sum dev {row_dev:.1e}, {:.2}s",
            worst[0],
            worst[1],
            took.as_secs_f64()
        ),
    )
}

fn c6_unbiasedness() -> Outcome {
    let truth = mixing_tensor();
    let space = mixing_space();
    let pairs = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let mut draws: Vec<Vec<f64>> = (0..16).map(|_| Vec::with_capacity(UNBIASED_REPS)).collect();
    let mut min_at_risk = u64::MAX;
    for r in 0..UNBIASED_REPS {
        let cohort = simulate_cohort(&mixing_cohort(UNBIASED_N, 10, 60_000 + r as u64)).unwrap();
        let counts = count_paths(&cohort, &space).unwrap();
        let est = estimate_tensor(&counts, Method::Conditional);
        for (p, &(h, j)) in pairs.iter().enumerate() {
            min_at_risk = min_at_risk.min(counts.at_risk_total(h, j));
            for l in 0..4 {
                draws[p * 4 + l].push(est.tensor.get(h, j, l));
            }
        }
    }
    let mut worst = 0.0f64;
    for (p, &(h, j)) in pairs.iter().enumerate() {
        for l in 0..4 {
            let (mean, sd) = mean_sd(&draws[p * 4 + l]);
            let se = sd / (UNBIASED_REPS as f64).sqrt();
            if se > 0.0 {
                worst = worst.max((mean - truth.get(h, j, l)).abs() / se);
            }
        }
    }
    check(worst <= UNBIASED_SE, format!("16 cells, min at-risk per replicate {min_at_risk}, max |bias|/SE {worst:.2}"))
}

fn c7_counting_fixture() -> Outcome {
    let counts = count_paths(&divine_shaped_cohort(), &secord_core::fixtures::divine_space()).unwrap();
    let totals = [
        counts.at_risk_total(NSP, NSP),
        counts.triple_total(NSP, NSP, NSP),
        counts.triple_total(NSP, NSP, SP),
        counts.triple_total(NSP, NSP, DISCH),
        counts.triple_total(NSP, NSP, DEATH),
    ];
    let est = estimate_tensor(&counts, Method::Ratio);
    let printed = [8919u64, 257, 0, 0, 0, 1369, 32];
    let rational = (0..7).all(|l| {
        est.fraction(NSP, NSP, l) == Some((printed[l], 10577))
            && est.tensor.get(NSP, NSP, l) == printed[l] as f64 / 10577.0
    });
    check(totals == [10577, 8919, 257, 1369, 32] && rational, format!("totals {totals:?}, row (NSP,NSP) exact: {rational}"))
}

fn overall_p(cohort: &[secord_core::Trajectory], space: &secord_core::StateSpace, b: usize, seed: u64) -> f64 {
    let opts = MarkovTestOptions { resamples: b, seed, ..Default::default() };
    wild_bootstrap_test(cohort, space, SEVERE, RECOVERED, &opts).unwrap().overall_p_value()
}

fn c8_size() -> Outcome {
    let start = Instant::now();
    let mut rejected = 0;
    for r in 0..SIZE_REPS {
        let cfg = first_order_cohort(SIZE_N, 30, 7_000 + r);
        let cohort = simulate_cohort(&cfg).unwrap();
        if overall_p(&cohort, &cfg.space, SIZE_B, r) < ALPHA {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / SIZE_REPS as f64;
    let took = start.elapsed();
    check(
        (SIZE_RANGE.0..=SIZE_RANGE.1).contains(&rate) && took < SIZE_RUNTIME,
        format!("rejection rate {rate:.3} ({rejected}/{SIZE_REPS}), {:.1}s", took.as_secs_f64()),
    )
}

fn c9_power() -> Outcome {
    let mut rejected = 0;
    for r in 0..POWER_REPS {
        let cfg = second_order_cohort(POWER_N, 30, 9_000 + r);
        let cohort = simulate_cohort(&cfg).unwrap();
        if overall_p(&cohort, &cfg.space, POWER_B, r) < ALPHA {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / POWER_REPS as f64;
    check(rate >= POWER_MIN_RATE, format!("p < {ALPHA} in {rejected}/{POWER_REPS} replicates"))
}

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Runs every command in `dir` with relative paths; returns all files written.
fn run_workflow(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    fs::copy(data("illness_simulate.json"), dir.join("sim.json")).unwrap();
    fs::copy(data("illness_space.json"), dir.join("space.json")).unwrap();
    let steps: [&[&str]; 6] = [
        &["simulate", "--config", "sim.json", "--out", "cohort.csv"],
        &["estimate", "--data", "cohort.csv", "--space", "space.json", "--method", "ratio", "--out", "ratio.json"],
        &["estimate", "--data", "cohort.csv", "--space", "space.json", "--method", "conditional", "--out", "cond.json"],
        &["predict", "--tensor", "ratio.json", "--from", "Mild,Severe", "--target", "Recovered", "--horizon", "10", "--out", "curve.csv"],
        &["markov-test", "--data", "cohort.csv", "--space", "space.json", "--transition", "Severe,Recovered", "--transition", "Mild,Severe", "--B", "300", "--seed", "17", "--out", "mt.csv"],
        &["paths", "--data", "cohort.csv", "--space", "space.json", "--out", "paths.csv"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_secord"))
            .current_dir(dir)
            .args(["--threads", threads])
            .args(args)
            .output()
            .unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c10_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let one = run_workflow(a.path(), "1");
    let again = run_workflow(b.path(), "1");
    let many = run_workflow(c.path(), "4");
    let names: Vec<&str> = one.iter().map(|f| f.0.as_str()).collect();
    let same = one == again && one == many;
    check(same && names.len() >= 16, format!("{} files byte-identical across reruns and 1 vs 4 threads: {same}", names.len()))
}

/// Two-decimal rendering by long division, rounding the third digit.
fn long_division_percent(count: u64, total: u64) -> String {
    let mut digits = Vec::new();
    let mut rem = count * 100;
    let whole = rem / total;
    rem %= total;
    for _ in 0..3 {
        rem *= 10;
        digits.push(rem / total);
        rem %= total;
    }
    let mut hundredths = whole * 100 + digits[0] * 10 + digits[1];
    if digits[2] >= 5 {
        hundredths += 1;
    }
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

fn c11_two_step_table() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut buf = Vec::new();
    secord_core::io::write_trajectories(&mut buf, &divine_shaped_cohort()).unwrap();
    fs::write(d.join("cohort.csv"), &buf).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_secord"))
        .current_dir(d)
        .args(["paths", "--data", "cohort.csv", "--space"])
        .arg(data("hospital_space.json"))
        .args(["--out", "paths.csv"])
        .output()
        .unwrap();
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let text = fs::read_to_string(d.join("paths.csv")).unwrap();
    let mut rows = 0;
    let mut mismatched = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (total, count): (u64, u64) = (f[1].parse().unwrap(), f[3].parse().unwrap());
        rows += 1;
        if f[4] != long_division_percent(count, total) {
            mismatched += 1;
        }
    }
    let headline = text.contains("SP->Recov,223,NSP->SP->Recov,171,76.68\n");
    check(headline && mismatched == 0 && rows > 0, format!("{rows} rows, {mismatched} mismatched, 171/223 -> 76.68: {headline}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn report(line: String) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        ("1  propagation = exhaustive path enumeration", c1_enumeration),
        ("2  propagation = trace / star-product closed forms", c2_closed_forms),
        ("3  propagation = lifted pair-chain powers", c3_lifting),
        ("4  printed hospital matrices, two-day NIMV prediction", c4_printed_matrices),
        ("5  estimator recovery on 20,000 subjects", c5_recovery),
        ("6  conditional estimator unbiasedness", c6_unbiasedness),
        ("7  hospital counting fixture", c7_counting_fixture),
        ("8  Markov test size under a first-order chain", c8_size),
        ("9  Markov test power under a second-order chain", c9_power),
        ("10 byte-identical reruns across thread counts", c10_determinism),
        ("11 two-step path table percentages", c11_two_step_table),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(detail) => report(format!("PASS  {name}: {detail}")),
            Err(detail) => {
                report(format!("FAIL  {name}: {detail}"));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
