//! Reference schemes the multicast allocation is compared against: one
//! unicast session per user, and multicast groups with subcarrier counts fixed
//! in proportion to their tile counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{TileSet, VideoConfig};
use crate::grouping::{partition, required_tiles, signature_sizes, Group, GroupPartition, SystemViewState};
use crate::powermin::{effective_gain, group_waterfill, solve, Allocation, ChannelState, OfdmaConfig};
use crate::qualitymax::{
    greedy_quality_with, max_rate, min_over_states, relaxed_quality, QualityResult, QualityScenario, StateEval,
    StateSpaceOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Unicast,
    EqualSubcarrier,
}

/// One group per user carrying that user's full tile set. Tiles shared by
/// several users are sent once per user.
pub fn unicast_partition(per_user: &[TileSet]) -> Result<GroupPartition> {
    let groups = per_user
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_empty())
        .map(|(k, t)| Group {
            tiles: t.clone(),
            size: t.len(),
            users: vec![k],
        })
        .collect();
    GroupPartition::from_groups(groups)
}

/// Splits `n` subcarriers in proportion to `sizes` by largest remainder,
/// giving every group at least one.
pub fn equal_subcarrier_counts(sizes: &[usize], n: usize) -> Result<Vec<usize>> {
    if sizes.is_empty() {
        return Err(Error::EmptyPartition);
    }
    if sizes.len() > n {
        return Err(Error::Infeasible(format!("{} groups but only {n} subcarriers", sizes.len())));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::invalid("sizes", "all groups are empty"));
    }
    // shares s_i n / total are compared exactly through their numerators
    let num: Vec<i128> = sizes.iter().map(|&s| (s * n) as i128).collect();
    let total = total as i128;
    let mut counts: Vec<usize> = num.iter().map(|&q| ((q / total) as usize).max(1)).collect();
    // first index wins ties in both directions
    let pick = |counts: &[usize], up: bool| {
        let mut best: Option<(usize, i128)> = None;
        for (i, (&c, &q)) in counts.iter().zip(&num).enumerate() {
            let excess = c as i128 * total - q;
            let key = if up { -excess } else { excess };
            if (up || c > 1) && best.is_none_or(|(_, k)| key > k) {
                best = Some((i, key));
            }
        }
        best.map(|(i, _)| i).expect("I <= N leaves a movable group")
    };
    while counts.iter().sum::<usize>() > n {
        let i = pick(&counts, false);
        counts[i] -= 1;
    }
    while counts.iter().sum::<usize>() < n {
        let i = pick(&counts, true);
        counts[i] += 1;
    }
    Ok(counts)
}

/// Places `counts[i]` subcarriers with group `i`: groups take turns in index
/// order, each taking its strongest remaining subcarrier.
pub fn round_robin_assignment(eff: &[Vec<f64>], counts: &[usize]) -> Vec<usize> {
    let n = eff.len();
    // weakest first so that pop() yields the strongest, lowest index on ties
    let mut orders: Vec<Vec<usize>> = (0..counts.len())
        .map(|i| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| eff[a][i].total_cmp(&eff[b][i]).then(b.cmp(&a)));
            o
        })
        .collect();
    let mut assignment = vec![usize::MAX; n];
    let mut held = vec![0usize; counts.len()];
    let mut placed = 0;
    while placed < n {
        for i in 0..counts.len() {
            if held[i] == counts[i] {
                continue;
            }
            while let Some(s) = orders[i].pop() {
                if assignment[s] == usize::MAX {
                    assignment[s] = i;
                    held[i] += 1;
                    placed += 1;
                    break;
                }
            }
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePower {
    pub partition: GroupPartition,
    pub allocation: Allocation,
}

impl BaselinePower {
    pub fn total_power_w(&self) -> f64 {
        self.allocation.total_power_w
    }
}

pub fn baseline_power(
    kind: BaselineKind,
    state: &SystemViewState,
    video: &VideoConfig,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    ofdma: &OfdmaConfig,
) -> Result<BaselinePower> {
    let per_user = required_tiles(state, video)?;
    match kind {
        BaselineKind::Unicast => {
            let part = unicast_partition(&per_user)?;
            let res = solve(&part, ch, encoding_rate_bps, ofdma)?;
            Ok(BaselinePower {
                partition: part,
                allocation: res.allocation,
            })
        }
        BaselineKind::EqualSubcarrier => {
            let part = partition(&per_user)?;
            let allocation = fixed_count_power(&part, ch, encoding_rate_bps, ofdma)?;
            Ok(BaselinePower {
                partition: part,
                allocation,
            })
        }
    }
}

/// Proportional counts, round-robin placement, then per-group water-filling.
pub fn fixed_count_power(
    part: &GroupPartition,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    ofdma: &OfdmaConfig,
) -> Result<Allocation> {
    ofdma.validate()?;
    if ch.n_subcarriers() != ofdma.n_subcarriers {
        return Err(Error::invalid("gains", "subcarrier count does not match the OFDMA config"));
    }
    let counts = equal_subcarrier_counts(&part.sizes(), ofdma.n_subcarriers)?;
    let eff = effective_gain(part, ch)?;
    let assignment = round_robin_assignment(&eff, &counts);
    let n = assignment.len();
    let mut power_w = vec![0.0; n];
    let mut rate_bps = vec![0.0; n];
    let mut total_power_w = 0.0;
    for (i, g) in part.groups.iter().enumerate() {
        let subs: Vec<usize> = (0..n).filter(|&s| assignment[s] == i).collect();
        let gains: Vec<f64> = subs.iter().map(|&s| eff[s][i]).collect();
        let wf = group_waterfill(&gains, encoding_rate_bps * g.size as f64, ofdma)?;
        for (k, &s) in subs.iter().enumerate() {
            power_w[s] = wf.powers[k];
            rate_bps[s] = wf.rates[k];
        }
        total_power_w += wf.total_power_w;
    }
    Ok(Allocation {
        assignment,
        power_w,
        rate_bps,
        total_power_w,
    })
}

pub fn baseline_quality(kind: BaselineKind, scn: &QualityScenario, opts: &StateSpaceOptions) -> Result<QualityResult> {
    let metric = opts.metric;
    min_over_states(scn, opts, |view| match kind {
        BaselineKind::Unicast => {
            let sizes = view.tile_counts.clone();
            let g = greedy_quality_with(&sizes, &scn.ofdma, scn.budget_w, scn.min_gain, metric)?;
            Ok(StateEval {
                sizes,
                counts: g.counts,
                rate_bps: g.rate_bps,
            })
        }
        BaselineKind::EqualSubcarrier => {
            let sizes = signature_sizes(&view.bitmaps);
            let counts = equal_subcarrier_counts(&sizes, scn.ofdma.n_subcarriers)?;
            let hi = relaxed_quality(&sizes, &scn.ofdma, scn.budget_w, scn.min_gain).rate_bps;
            let rate_bps = max_rate(&sizes, &counts, &scn.ofdma, scn.budget_w, scn.min_gain, hi);
            Ok(StateEval {
                sizes,
                counts,
                rate_bps,
            })
        }
    })
}
