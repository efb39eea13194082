//! Cohort simulation from a known chain.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pair_index, ChainInitialization, StateSpace, Trajectory, TransitionTensor};
use crate::rng::{self, DOMAIN_SIMULATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainOrder {
    /// Every step is drawn from `init.first_step`.
    First,
    #[default]
    Second,
}

impl fmt::Display for ChainOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainOrder::First => "first",
            ChainOrder::Second => "second",
        })
    }
}

impl FromStr for ChainOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(ChainOrder::First),
            "second" => Ok(ChainOrder::Second),
            other => Err(Error::InvalidConfig(format!("unknown chain order '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub space: StateSpace,
    pub tensor: TransitionTensor,
    pub init: ChainInitialization,
    pub n_subjects: usize,
    pub t_max: usize,
    pub seed: u64,
    pub order: ChainOrder,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.space.m();
        if self.n_subjects < 1 {
            return Err(Error::InvalidConfig("n_subjects must be at least 1".into()));
        }
        if self.t_max < 2 {
            return Err(Error::InvalidConfig("t_max must be at least 2".into()));
        }
        if self.tensor.m() != m || self.init.m() != m {
            return Err(Error::InvalidConfig(format!(
                "size mismatch: space has {m} states, tensor {}, initialization {}",
                self.tensor.m(),
                self.init.m()
            )));
        }
        for h in 0..m {
            for j in 0..m {
                if self.init.first_step.get(h, j) > 0.0 && !self.space.allows(h, j) {
                    return Err(Error::InvalidConfig(format!(
                        "first-step matrix moves {} -> {}, which the state space forbids",
                        h + 1,
                        j + 1
                    )));
                }
            }
        }
        for h in 0..m {
            if self.init.initial_dist[h] > 0.0 && !self.space.is_absorbing(h) && self.init.first_step.row(h).iter().sum::<f64>() == 0.0 {
                return Err(Error::InvalidConfig(format!("first-step row {} is empty", h + 1)));
            }
        }
        if self.order == ChainOrder::First {
            return Ok(());
        }
        self.tensor.check_against(&self.space)?;
        if let Some((h, j)) = self.unsupported_reachable_pair() {
            return Err(Error::InvalidConfig(format!(
                "pair ({}, {}) is reachable from the initialization but not supported by the tensor",
                h + 1,
                j + 1
            )));
        }
        Ok(())
    }

    /// First pair with a transient current state that the chain can reach
    /// but the tensor cannot move out of.
    fn unsupported_reachable_pair(&self) -> Option<(usize, usize)> {
        let m = self.space.m();
        let mut seen = vec![false; m * m];
        let mut stack = Vec::new();
        for (p, &q) in self.init.pair_distribution().iter().enumerate() {
            if q > 0.0 {
                seen[p] = true;
                stack.push(p);
            }
        }
        let mut bad: Option<(usize, usize)> = None;
        while let Some(p) = stack.pop() {
            let (h, j) = (p / m, p % m);
            if self.space.is_absorbing(j) {
                continue;
            }
            if !self.tensor.is_supported(h, j) || (self.tensor.row_sum(h, j) - 1.0).abs() > 1e-9 {
                bad = Some(bad.map_or((h, j), |b| b.min((h, j))));
                continue;
            }
            for (k, &pr) in self.tensor.row(h, j).iter().enumerate() {
                let next = pair_index(m, j, k);
                if pr > 0.0 && !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        bad
    }
}

/// Inverse-CDF draw over `row` in stored order.
fn draw(row: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (k, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(k);
            if u < acc {
                return Some(k);
            }
        }
    }
    last
}

/// One trajectory, starting on day 1, stopping at absorption or `t_max`.
pub fn sample_trajectory(config: &SimulationConfig, subject_id: &str, rng: &mut impl Rng) -> Result<Trajectory> {
    let space = &config.space;
    let x1 = draw(&config.init.initial_dist, rng).ok_or_else(|| Error::InvalidInit("initial distribution is empty".into()))?;
    let mut states = vec![x1];
    while states.len() < config.t_max {
        let cur = *states.last().unwrap();
        if space.is_absorbing(cur) {
            break;
        }
        let next = if states.len() == 1 || config.order == ChainOrder::First {
            draw(config.init.first_step.row(cur), rng)
                .ok_or_else(|| Error::InvalidInit(format!("first-step row {} is empty", cur + 1)))?
        } else {
            let prev = states[states.len() - 2];
            if !config.tensor.is_supported(prev, cur) {
                return Err(Error::UnsupportedPair { h: prev + 1, j: cur + 1 });
            }
            draw(config.tensor.row(prev, cur), rng).ok_or(Error::UnsupportedPair { h: prev + 1, j: cur + 1 })?
        };
        states.push(next);
    }
    Ok(Trajectory::new(subject_id, 1, states))
}

/// Subject `k` is drawn from its own stream, so the cohort does not depend on
/// thread count or scheduling.
pub fn simulate_cohort(config: &SimulationConfig) -> Result<Vec<Trajectory>> {
    config.validate()?;
    (0..config.n_subjects)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(config.seed, DOMAIN_SIMULATION, k as u64);
            sample_trajectory(config, &(k + 1).to_string(), &mut rng)
        })
        .collect()
}

/// Metadata describing how a cohort was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMetadata {
    pub generator: String,
    pub seed: u64,
    pub n_subjects: usize,
    pub t_max: usize,
    pub order: ChainOrder,
}

impl CohortMetadata {
    pub fn of(config: &SimulationConfig) -> Self {
        Self {
            generator: rng::GENERATOR.to_string(),
            seed: config.seed,
            n_subjects: config.n_subjects,
            t_max: config.t_max,
            order: config.order,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FirstOrderMatrix;

    fn space3() -> StateSpace {
        StateSpace::new(["A", "B", "D"], &[(0, 1), (1, 0), (0, 2), (1, 2)], &[2]).unwrap()
    }

    fn config(order: ChainOrder) -> SimulationConfig {
        let space = space3();
        let tensor = TransitionTensor::builder(3)
            .row(0, 0, &[0.6, 0.3, 0.1])
            .row(1, 0, &[0.2, 0.5, 0.3])
            .row(0, 1, &[0.4, 0.4, 0.2])
            .row(1, 1, &[0.1, 0.7, 0.2])
            .unit(0, 2, 2)
            .unit(1, 2, 2)
            .unit(2, 2, 2)
            .build()
            .unwrap();
        let first = FirstOrderMatrix::from_rows(&[vec![0.7, 0.2, 0.1], vec![0.3, 0.6, 0.1], vec![0.0, 0.0, 1.0]]).unwrap();
        let init = ChainInitialization::new(vec![0.5, 0.5, 0.0], first).unwrap();
        SimulationConfig { space, tensor, init, n_subjects: 200, t_max: 12, seed: 11, order }
    }

    #[test]
    fn absorbing_start_gives_single_day() {
        let mut c = config(ChainOrder::Second);
        c.init = ChainInitialization::degenerate(2, c.init.first_step.clone()).unwrap();
        for t in simulate_cohort(&c).unwrap() {
            assert_eq!(t.states, vec![2]);
        }
    }

    #[test]
    fn deterministic_chain_single_path() {
        let space = space3();
        let tensor = TransitionTensor::builder(3)
            .unit(0, 0, 1)
            .unit(0, 1, 0)
            .unit(1, 0, 2)
            .unit(0, 2, 2)
            .unit(1, 2, 2)
            .unit(2, 2, 2)
            .build()
            .unwrap();
        let first = FirstOrderMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let init = ChainInitialization::degenerate(0, first).unwrap();
        let c = SimulationConfig { space, tensor, init, n_subjects: 5, t_max: 20, seed: 3, order: ChainOrder::Second };
        for t in simulate_cohort(&c).unwrap() {
            assert_eq!(t.states, vec![0, 0, 1, 0, 2]);
        }
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let c = config(ChainOrder::Second);
        let a = simulate_cohort(&c).unwrap();
        assert_eq!(a, simulate_cohort(&c).unwrap());
        let mut c2 = c.clone();
        c2.seed += 1;
        assert_ne!(a, simulate_cohort(&c2).unwrap());
    }

    #[test]
    fn subject_depends_only_on_seed_and_index() {
        let c = config(ChainOrder::Second);
        let mut big = c.clone();
        big.n_subjects = 400;
        let a = simulate_cohort(&c).unwrap();
        let b = simulate_cohort(&big).unwrap();
        assert_eq!(a[..], b[..200]);
    }

    #[test]
    fn bounds_respected() {
        for order in [ChainOrder::First, ChainOrder::Second] {
            let c = config(order);
            let cohort = simulate_cohort(&c).unwrap();
            assert_eq!(cohort.len(), 200);
            for t in &cohort {
                assert!(!t.is_empty() && t.len() <= 12);
                assert!(t.states.iter().all(|&s| s < 3));
                let absorbed = t.states.iter().position(|&s| s == 2);
                if let Some(p) = absorbed {
                    assert_eq!(p, t.len() - 1);
                } else {
                    assert_eq!(t.len(), 12);
                }
            }
            let report = crate::model::validate_dataset(&cohort, &c.space, true).unwrap();
            assert!(report.is_clean());
        }
    }

    #[test]
    fn unsupported_reachable_pair_is_rejected() {
        let mut c = config(ChainOrder::Second);
        c.tensor = TransitionTensor::builder(3)
            .row(0, 0, &[0.6, 0.3, 0.1])
            .row(0, 1, &[0.4, 0.4, 0.2])
            .row(1, 1, &[0.1, 0.7, 0.2])
            .unit(2, 2, 2)
            .build()
            .unwrap();
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("(2, 1)"), "{err}");
        c.order = ChainOrder::First;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_sizes() {
        let mut c = config(ChainOrder::Second);
        c.t_max = 1;
        assert!(c.validate().is_err());
        c.t_max = 5;
        c.n_subjects = 0;
        assert!(c.validate().is_err());
    }
}
