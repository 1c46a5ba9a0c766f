//! Brute-force reference solvers for small instances.
//!
//! Both enumerate the full discrete search space and refuse to start when it
//! exceeds the configured budget.

use crate::error::{Error, Result};
use crate::grouping::GroupPartition;
use crate::powermin::{effective_gain, group_waterfill, ChannelState, OfdmaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_subcarriers: usize,
    pub max_groups: usize,
    /// Upper limit on enumerated assignments or count vectors.
    pub max_assignments: u128,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_subcarriers: 12,
            max_groups: 6,
            max_assignments: 1 << 22,
        }
    }
}

impl OracleBudget {
    fn admit(&self, n: usize, groups: usize, candidates: u128) -> Result<()> {
        if n > self.max_subcarriers {
            return Err(Error::BudgetExceeded {
                required: n as u128,
                cap: self.max_subcarriers as u128,
            });
        }
        if groups > self.max_groups {
            return Err(Error::BudgetExceeded {
                required: groups as u128,
                cap: self.max_groups as u128,
            });
        }
        if candidates > self.max_assignments {
            return Err(Error::BudgetExceeded {
                required: candidates,
                cap: self.max_assignments,
            });
        }
        Ok(())
    }
}

/// Minimum total power over every subcarrier-to-group assignment, with each
/// group water-filled over its own subcarriers. Returns the power and the
/// minimizing assignment.
pub fn exhaustive_powermin(
    part: &GroupPartition,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    cfg: &OfdmaConfig,
    budget: &OracleBudget,
) -> Result<(f64, Vec<usize>)> {
    cfg.validate()?;
    let n = ch.n_subcarriers();
    let groups = part.n_groups();
    if groups == 0 {
        return Err(Error::EmptyPartition);
    }
    let candidates = (groups as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    budget.admit(n, groups, candidates)?;
    let eff = effective_gain(part, ch)?;
    let targets: Vec<f64> = part.groups.iter().map(|g| encoding_rate_bps * g.size as f64).collect();

    let mut assignment = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut gains: Vec<Vec<f64>> = vec![Vec::with_capacity(n); groups];
    loop {
        gains.iter_mut().for_each(Vec::clear);
        for (sub, &g) in assignment.iter().enumerate() {
            gains[g].push(eff[sub][g]);
        }
        let feasible = gains.iter().zip(&targets).all(|(g, &t)| t == 0.0 || !g.is_empty());
        if feasible {
            let mut total = 0.0;
            for (g, &t) in gains.iter().zip(&targets) {
                total += group_waterfill(g, t, cfg)?.total_power_w;
            }
            if best.as_ref().is_none_or(|(p, _)| total < *p) {
                best = Some((total, assignment.clone()));
            }
        }
        // odometer step
        let mut pos = 0;
        loop {
            if pos == n {
                return best.ok_or_else(|| Error::Infeasible(format!("{groups} groups but only {n} subcarriers")));
            }
            assignment[pos] += 1;
            if assignment[pos] < groups {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Largest common rate over every integer count vector with each group
/// holding at least one subcarrier, against a flat channel at `min_gain`.
/// Returns the rate and the maximizing counts.
pub fn exhaustive_quality(
    sizes: &[usize],
    cfg: &OfdmaConfig,
    budget_w: f64,
    min_gain: f64,
    budget: &OracleBudget,
) -> Result<(f64, Vec<usize>)> {
    cfg.validate()?;
    let n = cfg.n_subcarriers;
    let groups = sizes.len();
    if groups == 0 {
        return Err(Error::EmptyPartition);
    }
    if groups > n {
        return Err(Error::Infeasible(format!("{groups} groups but only {n} subcarriers")));
    }
    // vectors with every entry >= 1 and sum <= N: C(N, I)
    let candidates = (1..=groups as u128).fold(1u128, |acc, j| acc * (n as u128 - groups as u128 + j) / j);
    budget.admit(n, groups, candidates)?;

    let power = |counts: &[usize], d: f64| -> f64 {
        sizes
            .iter()
            .zip(counts)
            .map(|(&s, &c)| {
                let c = c as f64;
                c * cfg.noise_w / min_gain * ((d * s as f64 / (cfg.bandwidth_hz * c)).exp2() - 1.0)
            })
            .sum()
    };
    let rate = |counts: &[usize]| -> f64 {
        let mut hi = 1.0;
        while power(counts, hi) <= budget_w {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if power(counts, mid) <= budget_w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let mut counts = vec![1usize; groups];
    let mut best = (rate(&counts), counts.clone());
    // enumerate by incrementing the first entry that still fits, resetting
    // the entries before it
    loop {
        let used: usize = counts.iter().sum();
        let mut pos = 0;
        let mut spare = n - used;
        loop {
            if pos == groups {
                return Ok(best);
            }
            if spare > 0 {
                counts[pos] += 1;
                break;
            }
            spare += counts[pos] - 1;
            counts[pos] = 1;
            pos += 1;
        }
        let r = rate(&counts);
        if r > best.0 {
            best = (r, counts.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_lt(n: usize, k: usize) -> usize {
        // count vectors by direct nested recursion
        fn go(left: usize, k: usize) -> usize {
            if k == 0 {
                return 1;
            }
            (1..=left).map(|c| go(left - c, k - 1)).sum()
        }
        go(n, k)
    }

    #[test]
    fn quality_enumerates_every_vector() {
        assert_eq!(sum_lt(6, 3), 20);
        let cfg = OfdmaConfig::new(6, 1.0, 1.0).unwrap();
        let (rate, counts) = exhaustive_quality(&[1, 1, 1], &cfg, 6.0, 1.0, &OracleBudget::default()).unwrap();
        assert_eq!(counts, vec![2, 2, 2]);
        // two subcarriers per group, 2 W each: D = 2 log2(2)
        assert!((rate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn powermin_tiny_by_hand() {
        let part = GroupPartition::from_sizes(&[1]).unwrap();
        let ch = ChannelState::new(vec![vec![1.0], vec![1.0]]).unwrap();
        let cfg = OfdmaConfig::new(2, 1.0, 1.0).unwrap();
        let (p, a) = exhaustive_powermin(&part, &ch, 2.0, &cfg, &OracleBudget::default()).unwrap();
        assert_eq!(a, vec![0, 0]);
        assert!((p - 2.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_instances() {
        let part = GroupPartition::from_sizes(&[1, 1]).unwrap();
        let ch = ChannelState::new(vec![vec![1.0, 1.0]; 30]).unwrap();
        let cfg = OfdmaConfig::new(30, 1.0, 1.0).unwrap();
        assert!(matches!(
            exhaustive_powermin(&part, &ch, 1.0, &cfg, &OracleBudget::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
