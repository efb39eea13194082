//! Reference fixtures built around the 7-state COVID-19 hospital model
//! (NSP, SP, Recov, NIMV, IMV, Disch, Death).
//!
//! [`divine_printed_tensor`] holds the two published second-order matrices
//! (previous state NSP and previous state SP) as exact fractions.
//! [`divine_shaped_cohort`] is a synthetic 2076-subject cohort constructed so
//! that its daily path counts reproduce those two matrices exactly and its
//! jump-chain two-step counts reproduce the published two-step table.

use crate::model::{ChainInitialization, FirstOrderMatrix, StateSpace, TransitionTensor, Trajectory};

pub const NSP: usize = 0;
pub const SP: usize = 1;
pub const RECOV: usize = 2;
pub const NIMV: usize = 3;
pub const IMV: usize = 4;
pub const DISCH: usize = 5;
pub const DEATH: usize = 6;

pub const DIVINE_LABELS: [&str; 7] = ["NSP", "SP", "Recov", "NIMV", "IMV", "Disch", "Death"];

/// The 14 permitted moves between distinct states.
pub const DIVINE_MOVES: [(usize, usize); 14] = [
    (NSP, SP),
    (NSP, DISCH),
    (NSP, DEATH),
    (SP, RECOV),
    (SP, NIMV),
    (SP, IMV),
    (SP, DEATH),
    (RECOV, DISCH),
    (RECOV, DEATH),
    (NIMV, RECOV),
    (NIMV, IMV),
    (NIMV, DEATH),
    (IMV, RECOV),
    (IMV, DEATH),
];

pub fn divine_space() -> StateSpace {
    StateSpace::new(DIVINE_LABELS, &DIVINE_MOVES, &[DISCH, DEATH]).expect("static space is valid")
}

fn frac_row(num: [u64; 7], den: u64) -> [f64; 7] {
    num.map(|n| n as f64 / den as f64)
}

/// Published matrices for previous states NSP and SP, plus the absorbing
/// self-loops. All other pairs are unsupported.
pub fn divine_printed_tensor() -> TransitionTensor {
    let mut b = TransitionTensor::builder(7);
    b.row(NSP, NSP, &frac_row([8919, 257, 0, 0, 0, 1369, 32], 10577))
        .row(NSP, SP, &frac_row([0, 253, 3, 92, 62, 0, 1], 411))
        .unit(NSP, DISCH, DISCH)
        .unit(NSP, DEATH, DEATH)
        .row(SP, SP, &frac_row([0, 2307, 220, 68, 49, 0, 24], 2668))
        .row(SP, RECOV, &frac_row([0, 0, 207, 0, 0, 16, 0], 223))
        .row(SP, NIMV, &frac_row([0, 0, 6, 159, 45, 0, 4], 214))
        .row(SP, IMV, &frac_row([0, 0, 3, 0, 160, 0, 3], 166))
        .unit(SP, DEATH, DEATH)
        .unit(DISCH, DISCH, DISCH)
        .unit(DEATH, DEATH, DEATH);
    b.build().expect("printed fractions form a valid tensor")
}

/// Admission law and first-day moves of [`divine_shaped_cohort`].
pub fn divine_init() -> ChainInitialization {
    let mut rows = vec![vec![0.0; 7]; 7];
    rows[NSP] = frac_row([1658, 154, 0, 0, 0, 40, 3], 1855).to_vec();
    rows[SP] = frac_row([0, 108, 0, 54, 55, 0, 4], 221).to_vec();
    rows[DISCH][DISCH] = 1.0;
    rows[DEATH][DEATH] = 1.0;
    let mut dist = vec![0.0; 7];
    dist[NSP] = 1855.0 / 2076.0;
    dist[SP] = 221.0 / 2076.0;
    ChainInitialization::new(dist, FirstOrderMatrix::from_rows(&rows).expect("valid rows"))
        .expect("valid initialization")
}

/// Splits `total` extra days over `n` slots as evenly as possible.
fn spread(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| (i + 1) * total / n - i * total / n).collect()
}

/// Durations of at least two days summing to `sum`, the first equal to `longest`.
fn long_stays(n: usize, sum: usize, longest: usize) -> Vec<usize> {
    let mut out = vec![longest];
    out.extend(spread(sum - longest - 2 * (n - 1), n - 1).into_iter().map(|e| e + 2));
    out
}

/// Expands `count` copies of each destination into a flat list, interleaving
/// destinations round-robin so no single destination clusters at one end.
fn interleave(groups: &[(usize, usize)]) -> Vec<usize> {
    let mut left: Vec<(usize, usize)> = groups.to_vec();
    let mut out = Vec::new();
    while left.iter().any(|&(_, c)| c > 0) {
        for (dest, c) in left.iter_mut() {
            if *c > 0 {
                out.push(*dest);
                *c -= 1;
            }
        }
    }
    out
}

/// Merges one-day plans and longer plans, spreading the longer ones evenly.
fn mix_plans(short: Vec<usize>, long: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let n = short.len() + long.len();
    let k = long.len();
    let mut short = short.into_iter();
    let mut long = long.into_iter();
    (0..n)
        .map(|i| {
            if (i + 1) * k / n > i * k / n {
                long.next().expect("long plan")
            } else {
                (short.next().expect("short plan"), 1)
            }
        })
        .collect()
}

struct Builder {
    states: Vec<usize>,
}

impl Builder {
    fn stay(&mut self, state: usize, days: usize) -> &mut Self {
        self.states.extend(std::iter::repeat_n(state, days));
        self
    }
}

/// Continuation after entering Recov: discharged or dead after `days` there.
fn recov_tail(b: &mut Builder, days: usize, end: usize) {
    b.stay(RECOV, days).stay(end, 1);
}

/// Synthetic DIVINE-shaped cohort of 2076 complete trajectories starting on
/// day 1. See the module docs for what it reproduces.
pub fn divine_shaped_cohort() -> Vec<Trajectory> {
    let mut subjects: Vec<Vec<usize>> = Vec::with_capacity(2076);

    // --- admitted in NSP -------------------------------------------------
    // 1658 subjects stay at least two days in NSP before leaving:
    // 257 to SP, 1369 discharged, 32 dead; total NSP days 12235, longest 43.
    let nsp_exit = interleave(&[(SP, 257), (DISCH, 1369), (DEATH, 32)]);
    let nsp_days = long_stays(nsp_exit.len(), 12235, 43);
    // 154 move to SP after one day, 40 discharged and 3 dead after one day.
    let nsp_short = interleave(&[(SP, 154), (DISCH, 40), (DEATH, 3)]);

    // NSP-origin SP spells (411). First SP-day outcome:
    // Recov 3, NIMV 92, IMV 62, Death 1 after one SP day, 253 stay longer and
    // leave to Recov 168, NIMV 42, IMV 30, Death 13.
    let nsp_origin_sp_short = interleave(&[(RECOV, 3), (NIMV, 92), (IMV, 62), (DEATH, 1)]);
    let nsp_origin_sp_long = interleave(&[(RECOV, 168), (NIMV, 42), (IMV, 30), (DEATH, 13)]);
    // admitted in SP (221): 113 leave after day 1 (NIMV 54, IMV 55, Death 4),
    // 108 stay longer and leave to Recov 52, NIMV 26, IMV 19, Death 11.
    let sp_adm_short = interleave(&[(NIMV, 54), (IMV, 55), (DEATH, 4)]);
    let sp_adm_long = interleave(&[(RECOV, 52), (NIMV, 26), (IMV, 19), (DEATH, 11)]);
    // 361 long SP spells, 3029 SP days in total, the longest (47 days) on an
    // SP-admitted subject.
    let mut sp_long_days = long_stays(361, 3029, 47);
    sp_long_days.rotate_left(1);
    let (nsp_origin_sp_days, sp_adm_days) = sp_long_days.split_at(253);

    // Downstream of SP, shared across origins.
    // Recov entered from SP (223): 16 discharged after one day, 207 later.
    let mut recov_from_sp = (0..223).map(|i| if i % 13 == 12 && i / 13 < 16 { 1 } else { 2 + i % 6 });
    // NIMV entered from SP (214).
    // one NIMV day: Recov 6, IMV 45, Death 4; longer: Recov 95, IMV 57, Death 7
    let nimv_plan: Vec<(usize, usize)> = {
        let short = interleave(&[(RECOV, 6), (IMV, 45), (DEATH, 4)]);
        let long = interleave(&[(RECOV, 95), (IMV, 57), (DEATH, 7)]);
        let mut v: Vec<(usize, usize)> = short.into_iter().map(|d| (d, 1)).collect();
        v.extend(long.into_iter().enumerate().map(|(i, d)| (d, 2 + i % 7)));
        let k = v.len();
        (0..k).map(|i| v[(i * 37) % k]).collect()
    };
    // IMV entered from SP (166). one day: Recov 3, Death 3; longer: Recov 92, Death 68
    let imv_plan: Vec<(usize, usize)> = {
        let short = interleave(&[(RECOV, 3), (DEATH, 3)]);
        let long = interleave(&[(RECOV, 92), (DEATH, 68)]);
        let mut v: Vec<(usize, usize)> = short.into_iter().map(|d| (d, 1)).collect();
        v.extend(long.into_iter().enumerate().map(|(i, d)| (d, 2 + i % 9)));
        let k = v.len();
        (0..k).map(|i| v[(i * 29) % k]).collect()
    };
    // Recov after NIMV (101): 96 discharged, 5 dead.
    let mut recov_after_nimv = interleave(&[(DISCH, 96), (DEATH, 5)]).into_iter();
    // IMV after NIMV (102): 45 to Recov, 57 dead.
    let mut imv_after_nimv = interleave(&[(RECOV, 45), (DEATH, 57)]).into_iter();
    // Recov after IMV (140, from either origin): 133 discharged, 7 dead.
    let mut recov_after_imv = interleave(&[(DISCH, 133), (DEATH, 7)]).into_iter();

    let mut nimv_iter = nimv_plan.into_iter();
    let mut imv_iter = imv_plan.into_iter();
    let mut counter = 0usize;

    let mut after_sp = |b: &mut Builder, dest: usize| {
        counter += 1;
        match dest {
            RECOV => recov_tail(b, recov_from_sp.next().expect("223 Recov entries"), DISCH),
            NIMV => {
                let (d, days) = nimv_iter.next().expect("214 NIMV entries");
                b.stay(NIMV, days);
                match d {
                    RECOV => {
                        let end = recov_after_nimv.next().expect("101 entries");
                        recov_tail(b, 2 + counter % 4, end);
                    }
                    IMV => {
                        b.stay(IMV, 2 + counter % 5);
                        match imv_after_nimv.next().expect("102 entries") {
                            RECOV => {
                                let end = recov_after_imv.next().expect("140 entries");
                                recov_tail(b, 2 + counter % 3, end);
                            }
                            _ => {
                                b.stay(DEATH, 1);
                            }
                        }
                    }
                    _ => {
                        b.stay(DEATH, 1);
                    }
                }
            }
            IMV => {
                let (d, days) = imv_iter.next().expect("166 IMV entries");
                b.stay(IMV, days);
                if d == RECOV {
                    let end = recov_after_imv.next().expect("140 entries");
                    recov_tail(b, 2 + counter % 5, end);
                } else {
                    b.stay(DEATH, 1);
                }
            }
            _ => {
                b.stay(DEATH, 1);
            }
        }
    };

    let mut nsp_origin_plans = mix_plans(
        nsp_origin_sp_short,
        nsp_origin_sp_long.into_iter().zip(nsp_origin_sp_days.iter().copied()).collect(),
    )
    .into_iter();
    let mut nsp_origin_sp = move || nsp_origin_plans.next().expect("411 NSP-origin SP spells");

    for (dest, days) in nsp_exit.iter().zip(&nsp_days) {
        let mut b = Builder { states: Vec::new() };
        b.stay(NSP, *days);
        if *dest == SP {
            let (next, sp_days) = nsp_origin_sp();
            b.stay(SP, sp_days);
            after_sp(&mut b, next);
        } else {
            b.stay(*dest, 1);
        }
        subjects.push(b.states);
    }
    for dest in &nsp_short {
        let mut b = Builder { states: Vec::new() };
        b.stay(NSP, 1);
        if *dest == SP {
            let (next, sp_days) = nsp_origin_sp();
            b.stay(SP, sp_days);
            after_sp(&mut b, next);
        } else {
            b.stay(*dest, 1);
        }
        subjects.push(b.states);
    }

    // --- admitted in SP --------------------------------------------------
    let sp_adm_plans = mix_plans(
        sp_adm_short,
        sp_adm_long.into_iter().zip(sp_adm_days.iter().copied()).collect(),
    );
    for (next, days) in sp_adm_plans {
        let mut b = Builder { states: Vec::new() };
        b.stay(SP, days);
        after_sp(&mut b, next);
        subjects.push(b.states);
    }

    subjects
        .into_iter()
        .enumerate()
        .map(|(i, states)| Trajectory::new(format!("D{:04}", i + 1), 1, states))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_dataset;

    #[test]
    fn cohort_is_valid_and_complete() {
        let c = divine_shaped_cohort();
        assert_eq!(c.len(), 2076);
        let r = validate_dataset(&c, &divine_space(), true).unwrap();
        assert!(r.is_clean());
        let space = divine_space();
        for t in &c {
            assert!(space.is_absorbing(*t.states.last().unwrap()), "{}", t.subject_id);
        }
    }

    #[test]
    fn long_stays_sum() {
        let d = long_stays(1658, 12235, 43);
        assert_eq!(d.iter().sum::<usize>(), 12235);
        assert!(d.iter().all(|&x| (2..=43).contains(&x)));
    }
}
