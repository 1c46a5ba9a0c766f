use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::TileSet;
use crate::grouping::{partition, GroupPartition};
use crate::oracle::{exhaustive_powermin, exhaustive_quality, OracleBudget};
use crate::powermin::{solve, ChannelState, OfdmaConfig};
use crate::qualitymax::{greedy_quality, power_for, relaxed_quality};
use crate::sim::stream_rng;

const TRIAL_STREAM: u64 = 3;

/// Relative tolerance when the solver certifies its assignment.
pub const CERTIFIED_TOL: f64 = 1e-6;
/// Relative tolerance otherwise.
pub const UNCERTIFIED_TOL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Campaign {
    pub trials: usize,
    pub max_n: usize,
    pub max_groups: usize,
    pub seed: u64,
    /// Inflates every solver result by 10% to check that the campaign notices.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub certified: usize,
    pub worst_certified_gap: f64,
    pub worst_uncertified_gap: f64,
    pub worst_duality_gap: f64,
    pub worst_quality_gap: f64,
    pub failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

/// Random per-user tile sets over a small universe, grouped, with at most
/// `max_groups` groups.
pub fn random_partition<R: Rng>(rng: &mut R, max_groups: usize) -> GroupPartition {
    loop {
        let k = rng.random_range(1..=3);
        let universe = rng.random_range(1..=6u32);
        let per_user: Vec<TileSet> = (0..k)
            .map(|_| {
                let tiles: TileSet = (1..=universe).filter(|_| rng.random_bool(0.5)).collect();
                if tiles.is_empty() {
                    TileSet::new([rng.random_range(1..=universe)])
                } else {
                    tiles
                }
            })
            .collect();
        let part = partition(&per_user).expect("non-empty tile sets");
        if part.n_groups() <= max_groups {
            return part;
        }
    }
}

pub fn random_channel<R: Rng>(rng: &mut R, n: usize, k: usize) -> ChannelState {
    let gains = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let h: f64 = Exp1.sample(rng);
                    h.max(1e-6)
                })
                .collect()
        })
        .collect();
    ChannelState::new(gains).expect("positive gains")
}

pub fn run(c: &Campaign) -> Result<Report> {
    if c.max_n == 0 || c.max_groups == 0 {
        return Err(Error::invalid("max-n/max-groups", "must be >= 1"));
    }
    let budget = OracleBudget {
        max_subcarriers: c.max_n,
        max_groups: c.max_groups,
        ..OracleBudget::default()
    };
    let mut rep = Report {
        trials: c.trials,
        ..Report::default()
    };
    let cfg_for = |n| OfdmaConfig::new(n, 1.0, 1.0).expect("valid");
    for t in 0..c.trials {
        let mut rng = stream_rng(c.seed, TRIAL_STREAM, t as u64);
        let part = random_partition(&mut rng, c.max_groups);
        let i = part.n_groups();
        let n = rng.random_range(i.max(1)..=c.max_n.max(i));
        let cfg = cfg_for(n);
        let ch = random_channel(&mut rng, n, part.n_users());
        let d = 10f64.powf(rng.random_range(-2.0..1.0));

        let oracle = match exhaustive_powermin(&part, &ch, d, &cfg, &budget) {
            Ok((p, _)) => p,
            Err(Error::BudgetExceeded { .. }) => {
                rep.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let res = solve(&part, &ch, d, &cfg)?;
        let mut power = res.primal_power_w;
        if c.inject_fault {
            power *= 1.1;
        }
        let gap = (power - oracle).abs() / oracle.max(f64::MIN_POSITIVE);
        let mut problems = Vec::new();
        if res.unique_argmax {
            rep.certified += 1;
            rep.worst_certified_gap = rep.worst_certified_gap.max(gap);
            if gap > CERTIFIED_TOL {
                problems.push(format!("certified gap {gap:.3e}"));
            }
        } else {
            rep.worst_uncertified_gap = rep.worst_uncertified_gap.max(gap);
            if gap > UNCERTIFIED_TOL {
                problems.push(format!("uncertified gap {gap:.3e}"));
            }
        }
        rep.worst_duality_gap = rep.worst_duality_gap.max(res.duality_gap_w() / oracle.max(f64::MIN_POSITIVE));
        if let Err(e) = res.allocation.verify(&part, &ch, d, &cfg, 1e-6) {
            problems.push(e);
        }
        if !(res.lower_bound_w <= power * (1.0 + 1e-9) && power <= res.upper_bound_w * (1.0 + 1e-9)) {
            problems.push("power outside bounds".into());
        }

        // same trial, quality side
        let sizes = part.sizes();
        let budget_w = 10f64.powf(rng.random_range(-1.0..2.0));
        match exhaustive_quality(&sizes, &cfg, budget_w, 1.0, &budget) {
            Ok((best, _)) => {
                let g = greedy_quality(&sizes, &cfg, budget_w, 1.0)?;
                let relaxed = relaxed_quality(&sizes, &cfg, budget_w, 1.0).rate_bps;
                let tol = 1e-9 * relaxed;
                if c.inject_fault || !(g.rate_bps <= best + tol && best <= relaxed + tol) {
                    problems.push(format!("quality order violated: {} {} {}", g.rate_bps, best, relaxed));
                }
                if power_for(&sizes, &g.counts, g.rate_bps, &cfg, 1.0) > budget_w * (1.0 + 1e-9) {
                    problems.push("greedy rate exceeds the budget".into());
                }
                rep.worst_quality_gap = rep.worst_quality_gap.max((best - g.rate_bps) / best);
            }
            Err(Error::BudgetExceeded { .. }) => {}
            Err(e) => return Err(e),
        }

        if problems.is_empty() {
            rep.passed += 1;
        } else {
            rep.failed += 1;
            rep.failures.push(format!("trial {t}: {}", problems.join("; ")));
        }
    }
    Ok(rep)
}
