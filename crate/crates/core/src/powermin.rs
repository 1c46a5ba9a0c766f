//! Minimum-power subcarrier, power and rate allocation for a fixed per-tile
//! encoding rate.
//!
//! Every group `i` must deliver `D * S_i` bit/s to all of its users, so on a
//! subcarrier it is limited by the weakest member (`H^min`). The relaxed problem
//! (fractional subcarrier sharing) is convex; its Lagrangian decouples per
//! subcarrier into a water-filling term per group and a winner-takes-all choice
//! of the group with the largest metric
//!
//! ```text
//! W(n, i) = w_i ln(w_i H^min / n_0) - w_i + n_0 / H^min     (0 below the floor)
//! ```
//!
//! where `w_i` is group `i`'s water level. The solver runs projected subgradient
//! ascent on the multipliers, in log-water-level coordinates, freezes the
//! induced subcarrier assignment and water-fills every group to meet its rate
//! with equality. When the frozen assignment coincides with a strict argmax of
//! `W` at the repaired water levels, the allocation satisfies the KKT
//! conditions of the relaxation and is therefore globally optimal; the result
//! reports this as `unique_argmax`.

use std::collections::HashSet;
use std::f64::consts::LN_2;
use std::hash::{BuildHasher, BuildHasherDefault, DefaultHasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::GroupPartition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmaConfig {
    pub n_subcarriers: usize,
    /// Bandwidth of one subcarrier.
    pub bandwidth_hz: f64,
    /// Receiver noise power per subcarrier.
    pub noise_w: f64,
}

impl OfdmaConfig {
    pub fn new(n_subcarriers: usize, bandwidth_hz: f64, noise_w: f64) -> Result<Self> {
        let cfg = OfdmaConfig {
            n_subcarriers,
            bandwidth_hz,
            noise_w,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(Error::invalid("n_subcarriers", "must be at least 1"));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::invalid("bandwidth_hz", "must be finite and > 0"));
        }
        if !(self.noise_w.is_finite() && self.noise_w > 0.0) {
            return Err(Error::invalid("noise_w", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Shannon rate of one subcarrier at the given power and gain.
    pub fn capacity(&self, power_w: f64, gain: f64) -> f64 {
        self.bandwidth_hz * (1.0 + power_w * gain / self.noise_w).log2()
    }
}

/// Channel power gains, one row per subcarrier and one column per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelRows", into = "ChannelRows")]
pub struct ChannelState {
    gains: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ChannelRows {
    gains: Vec<Vec<f64>>,
}

impl TryFrom<ChannelRows> for ChannelState {
    type Error = Error;
    fn try_from(rows: ChannelRows) -> Result<Self> {
        ChannelState::new(rows.gains)
    }
}

impl From<ChannelState> for ChannelRows {
    fn from(ch: ChannelState) -> Self {
        ChannelRows { gains: ch.gains }
    }
}

impl ChannelState {
    pub fn new(gains: Vec<Vec<f64>>) -> Result<Self> {
        let k = gains.first().map_or(0, Vec::len);
        if gains.is_empty() || k == 0 {
            return Err(Error::invalid("gains", "need at least one subcarrier and one user"));
        }
        if gains.iter().any(|row| row.len() != k) {
            return Err(Error::invalid("gains", "rows must all have the same length"));
        }
        if let Some(bad) = gains.iter().flatten().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::invalid("gains", format!("entries must be finite and > 0, got {bad}")));
        }
        Ok(ChannelState { gains })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.gains.len()
    }

    pub fn n_users(&self) -> usize {
        self.gains[0].len()
    }

    pub fn gain(&self, subcarrier: usize, user: usize) -> f64 {
        self.gains[subcarrier][user]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.gains
    }

    pub fn max_gain(&self) -> f64 {
        self.gains.iter().flatten().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_gain(&self) -> f64 {
        self.gains.iter().flatten().copied().fold(f64::MAX, f64::min)
    }

    /// Every gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        ChannelState::new(
            self.gains
                .iter()
                .map(|row| row.iter().map(|g| g * factor).collect())
                .collect(),
        )
    }
}

/// Subcarrier assignment with per-subcarrier power and rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Group index served on each subcarrier.
    pub assignment: Vec<usize>,
    pub power_w: Vec<f64>,
    pub rate_bps: Vec<f64>,
    pub total_power_w: f64,
}

impl Allocation {
    /// Total rate delivered to each of `n_groups` groups.
    pub fn group_rates(&self, n_groups: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_groups];
        for (n, &i) in self.assignment.iter().enumerate() {
            out[i] += self.rate_bps[n];
        }
        out
    }

    /// Checks the allocation constraints with relative tolerance `tol`:
    /// one group per subcarrier, non-negative powers and rates, each group
    /// meeting `D` per tile, and every rate supported for every member user.
    pub fn verify(
        &self,
        part: &GroupPartition,
        ch: &ChannelState,
        encoding_rate_bps: f64,
        cfg: &OfdmaConfig,
        tol: f64,
    ) -> std::result::Result<(), String> {
        let n_sub = ch.n_subcarriers();
        let n_groups = part.n_groups();
        if self.assignment.len() != n_sub || self.power_w.len() != n_sub || self.rate_bps.len() != n_sub {
            return Err("allocation vectors do not match the subcarrier count".into());
        }
        if let Some(n) = self.assignment.iter().position(|&i| i >= n_groups) {
            return Err(format!("subcarrier {n} assigned to missing group"));
        }
        for n in 0..n_sub {
            let (p, c) = (self.power_w[n], self.rate_bps[n]);
            if !(p.is_finite() && p >= 0.0 && c.is_finite() && c >= 0.0) {
                return Err(format!("subcarrier {n}: negative or non-finite power/rate"));
            }
            let group = &part.groups[self.assignment[n]];
            for &k in &group.users {
                let cap = cfg.capacity(p, ch.gain(n, k));
                if cap < c * (1.0 - tol) - 1e-12 * cfg.bandwidth_hz {
                    return Err(format!("subcarrier {n}: user {k} supports {cap} < rate {c}"));
                }
            }
        }
        let total: f64 = self.power_w.iter().sum();
        if (total - self.total_power_w).abs() > tol * total.max(f64::MIN_POSITIVE) {
            return Err("total_power_w disagrees with per-subcarrier powers".into());
        }
        for (i, r) in self.group_rates(n_groups).iter().enumerate() {
            let per_tile = r / part.groups[i].size as f64;
            if per_tile < encoding_rate_bps * (1.0 - tol) {
                return Err(format!("group {i}: {per_tile} bit/s per tile below {encoding_rate_bps}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMinResult {
    pub allocation: Allocation,
    pub primal_power_w: f64,
    /// Best Lagrange dual value seen; a lower bound on the optimum.
    pub dual_power_w: f64,
    /// Multiplier of each group's per-tile rate constraint.
    pub multipliers: Vec<f64>,
    pub lower_bound_w: f64,
    pub upper_bound_w: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The final assignment is the strict argmax of the metric at the final
    /// multipliers, which certifies global optimality.
    pub unique_argmax: bool,
}

impl PowerMinResult {
    pub fn duality_gap_w(&self) -> f64 {
        self.primal_power_w - self.dual_power_w
    }
}

/// Tuning knobs of [`solve_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Relative rate residual at which the dual iteration stops.
    pub residual_tol: f64,
    /// Iterations without progress on either bound before giving up.
    pub stall_iterations: usize,
    /// Move-and-swap descent from the cheapest repaired assignments seen during
    /// the dual iteration.
    pub local_search: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 100_000,
            residual_tol: 1e-6,
            stall_iterations: 2_000,
            local_search: true,
        }
    }
}

/// Worst member gain of each group on each subcarrier (`N x I`).
pub fn effective_gain(part: &GroupPartition, ch: &ChannelState) -> Result<Vec<Vec<f64>>> {
    if part.n_users() > ch.n_users() {
        return Err(Error::invalid(
            "partition",
            format!("refers to user {} but channel has {} users", part.n_users() - 1, ch.n_users()),
        ));
    }
    Ok(ch
        .rows()
        .iter()
        .map(|row| {
            part.groups
                .iter()
                .map(|g| g.users.iter().map(|&k| row[k]).fold(f64::INFINITY, f64::min))
                .collect()
        })
        .collect())
}

/// Power-minimal rate split of one group over a fixed set of subcarriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWaterfill {
    /// Power per listed subcarrier, in input order.
    pub powers: Vec<f64>,
    pub rates: Vec<f64>,
    pub total_power_w: f64,
    /// Common level `w` with `p_n = [w - n_0/H_n]^+`.
    pub water_level_w: f64,
    /// Multiplier of the group's total rate constraint, `w ln 2 / B`.
    pub lambda: f64,
}

/// Water-fills `target_rate_bps` over subcarriers with the given gains.
pub fn group_waterfill(gains: &[f64], target_rate_bps: f64, cfg: &OfdmaConfig) -> Result<GroupWaterfill> {
    if !(target_rate_bps.is_finite() && target_rate_bps >= 0.0) {
        return Err(Error::invalid("target_rate_bps", "must be finite and >= 0"));
    }
    if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::invalid("gains", format!("must be finite and > 0, got {g}")));
    }
    if target_rate_bps == 0.0 {
        return Ok(GroupWaterfill {
            powers: vec![0.0; gains.len()],
            rates: vec![0.0; gains.len()],
            total_power_w: 0.0,
            water_level_w: 0.0,
            lambda: 0.0,
        });
    }
    if gains.is_empty() {
        return Err(Error::Infeasible("positive rate over an empty subcarrier set".into()));
    }
    let floors: Vec<f64> = gains.iter().map(|g| cfg.noise_w / g).collect();
    let (level, total) = water_level(&floors, target_rate_bps / cfg.bandwidth_hz);
    let powers: Vec<f64> = floors.iter().map(|t| (level - t).max(0.0)).collect();
    let rates = floors
        .iter()
        .map(|t| if level > *t { cfg.bandwidth_hz * (level / t).log2() } else { 0.0 })
        .collect();
    Ok(GroupWaterfill {
        powers,
        rates,
        total_power_w: total,
        water_level_w: level,
        lambda: level * LN_2 / cfg.bandwidth_hz,
    })
}

/// Water level and total power delivering `bits_per_hz` over noise floors
/// `n_0 / H`. Solved exactly: the active set is a prefix of the sorted floors
/// and, for a given prefix, `log2 w` is the mean of `log2 floor` plus the
/// target spread over the prefix.
fn water_level(floors: &[f64], bits_per_hz: f64) -> (f64, f64) {
    let mut sorted = floors.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut log_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (m, &t) in sorted.iter().enumerate() {
        if m > 0 && level <= t {
            break;
        }
        log_sum += t.log2();
        active = m + 1;
        level = ((bits_per_hz + log_sum) / active as f64).exp2();
    }
    let total = sorted[..active].iter().map(|t| level - t).sum();
    (level, total)
}

/// Bounds on the optimum: all subcarriers at the best gain versus
/// one subcarrier per group at the worst gain.
pub fn power_bounds(
    part: &GroupPartition,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    cfg: &OfdmaConfig,
) -> (f64, f64) {
    let n = cfg.n_subcarriers as f64;
    let bits = encoding_rate_bps * part.total_tiles as f64 / cfg.bandwidth_hz;
    let lower = cfg.noise_w * n / ch.max_gain() * ((bits / n).exp2() - 1.0);
    let upper = cfg.noise_w * part.n_groups() as f64 / ch.min_gain() * (bits.exp2() - 1.0);
    (lower, upper)
}

/// Solves with default options.
pub fn solve(
    part: &GroupPartition,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    cfg: &OfdmaConfig,
) -> Result<PowerMinResult> {
    solve_with(part, ch, encoding_rate_bps, cfg, &SolveOptions::default())
}

pub fn solve_with(
    part: &GroupPartition,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    cfg: &OfdmaConfig,
    opts: &SolveOptions,
) -> Result<PowerMinResult> {
    cfg.validate()?;
    if ch.n_subcarriers() != cfg.n_subcarriers {
        return Err(Error::invalid(
            "gains",
            format!("{} subcarriers, config says {}", ch.n_subcarriers(), cfg.n_subcarriers),
        ));
    }
    if !(encoding_rate_bps.is_finite() && encoding_rate_bps >= 0.0) {
        return Err(Error::invalid("encoding_rate_bps", "must be finite and >= 0"));
    }
    if part.n_groups() == 0 {
        return Err(Error::EmptyPartition);
    }
    let problem = Problem::new(part, ch, encoding_rate_bps, cfg)?;
    let (lower_bound_w, upper_bound_w) = power_bounds(part, ch, encoding_rate_bps, cfg);

    if encoding_rate_bps == 0.0 {
        let n = cfg.n_subcarriers;
        return Ok(PowerMinResult {
            allocation: Allocation {
                assignment: vec![0; n],
                power_w: vec![0.0; n],
                rate_bps: vec![0.0; n],
                total_power_w: 0.0,
            },
            primal_power_w: 0.0,
            dual_power_w: 0.0,
            multipliers: vec![0.0; part.n_groups()],
            lower_bound_w,
            upper_bound_w,
            iterations: 0,
            converged: true,
            unique_argmax: false,
        });
    }
    if part.n_groups() > cfg.n_subcarriers {
        return Err(Error::Infeasible(format!(
            "{} groups but only {} subcarriers",
            part.n_groups(),
            cfg.n_subcarriers
        )));
    }

    let outcome = problem.run(opts);
    let members = outcome.members;
    let allocation = problem.allocation(&members);
    let levels: Vec<f64> = (0..problem.n_groups)
        .map(|i| problem.group_cost(i, &members[i]).1)
        .collect();
    let dual = outcome.best_dual.max(problem.dual_value(&levels));
    let unique = problem.certifies(&levels, &allocation.assignment);
    let multipliers = levels
        .iter()
        .zip(&problem.sizes)
        .map(|(w, s)| w * s * LN_2 / cfg.bandwidth_hz)
        .collect();

    Ok(PowerMinResult {
        primal_power_w: allocation.total_power_w,
        dual_power_w: dual,
        allocation,
        multipliers,
        lower_bound_w,
        upper_bound_w,
        iterations: outcome.iterations,
        converged: outcome.residual_converged || unique,
        unique_argmax: unique,
    })
}

/// Optimal power at `H` and at `H / g`; the latter equals `g` times the former.
pub fn scaling_check(
    part: &GroupPartition,
    ch: &ChannelState,
    encoding_rate_bps: f64,
    cfg: &OfdmaConfig,
    g: f64,
) -> Result<(f64, f64)> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::invalid("g", "must be finite and > 0"));
    }
    let base = solve(part, ch, encoding_rate_bps, cfg)?.primal_power_w;
    let scaled = solve(part, &ch.scaled(1.0 / g)?, encoding_rate_bps, cfg)?.primal_power_w;
    Ok((base, scaled))
}

struct Problem<'a> {
    cfg: &'a OfdmaConfig,
    n_groups: usize,
    /// Noise floor `n_0 / H^min` per subcarrier and group.
    floors: Vec<Vec<f64>>,
    sizes: Vec<f64>,
    /// Required rate `D * S_i` per group.
    targets: Vec<f64>,
}

enum Step {
    Move { from: usize, pos: usize, to: usize, from_cost: f64, to_cost: f64 },
    Swap { from: usize, pos: usize, to: usize, pos_to: usize, from_cost: f64, to_cost: f64 },
}

/// Distinct repaired assignments kept as local-search starting points.
const STARTS: usize = 4;
/// Iterations without dual progress before the Polyak factor halves.
const POLYAK_PATIENCE: usize = 20;

struct Outcome {
    members: Vec<Vec<usize>>,
    best_dual: f64,
    iterations: usize,
    residual_converged: bool,
}

impl<'a> Problem<'a> {
    fn new(part: &GroupPartition, ch: &ChannelState, d: f64, cfg: &'a OfdmaConfig) -> Result<Self> {
        let h = effective_gain(part, ch)?;
        let floors = h
            .iter()
            .map(|row| row.iter().map(|g| cfg.noise_w / g).collect())
            .collect();
        let sizes: Vec<f64> = part.groups.iter().map(|g| g.size as f64).collect();
        let targets = sizes.iter().map(|s| d * s).collect();
        Ok(Problem {
            cfg,
            n_groups: part.n_groups(),
            floors,
            sizes,
            targets,
        })
    }

    fn n_sub(&self) -> usize {
        self.floors.len()
    }

    /// Water-filling power and level for group `i` on `subs`.
    fn group_cost(&self, i: usize, subs: &[usize]) -> (f64, f64) {
        if subs.is_empty() {
            return (f64::INFINITY, f64::INFINITY);
        }
        let floors: Vec<f64> = subs.iter().map(|&n| self.floors[n][i]).collect();
        let (level, power) = water_level(&floors, self.targets[i] / self.cfg.bandwidth_hz);
        (power, level)
    }

    fn total_cost(&self, members: &[Vec<usize>]) -> f64 {
        (0..self.n_groups).map(|i| self.group_cost(i, &members[i]).0).sum()
    }

    fn metric(&self, n: usize, i: usize, level: f64) -> f64 {
        let t = self.floors[n][i];
        if level <= t {
            0.0
        } else {
            level * (level / t).ln() - level + t
        }
    }

    /// Subcarrier owner maximizing the metric, lowest index on ties. A
    /// subcarrier below every group's floor goes to the group closest to it.
    fn argmax(&self, n: usize, levels: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &w) in levels.iter().enumerate() {
            let m = self.metric(n, i, w);
            if m > best.1 {
                best = (i, m);
            }
        }
        if best.1 <= 0.0 {
            let ratio = |i: usize| levels[i] / self.floors[n][i];
            let i = (0..self.n_groups)
                .fold(0, |b, i| if ratio(i) > ratio(b) { i } else { b });
            return (i, 0.0);
        }
        best
    }

    fn dual_value(&self, levels: &[f64]) -> f64 {
        let linear: f64 = levels
            .iter()
            .zip(&self.targets)
            .map(|(w, r)| w * LN_2 * r / self.cfg.bandwidth_hz)
            .sum();
        let metrics: f64 = (0..self.n_sub()).map(|n| self.argmax(n, levels).1).sum();
        linear - metrics
    }

    /// Whether `assignment` is the strict metric argmax at `levels` on every
    /// subcarrier that some group would use.
    fn certifies(&self, levels: &[f64], assignment: &[usize]) -> bool {
        (0..self.n_sub()).all(|n| {
            let mut top = (usize::MAX, 0.0f64);
            let mut second = 0.0f64;
            for (i, &w) in levels.iter().enumerate() {
                let m = self.metric(n, i, w);
                if m > top.1 {
                    second = top.1;
                    top = (i, m);
                } else if m > second {
                    second = m;
                }
            }
            if top.1 <= 0.0 {
                // no group above its floor here: zero power either way
                return true;
            }
            top.0 == assignment[n] && top.1 - second > 1e-12 * top.1
        })
    }

    fn members_of(&self, assignment: &[usize]) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.n_groups];
        for (n, &i) in assignment.iter().enumerate() {
            members[i].push(n);
        }
        members
    }

    /// Hands starved groups the subcarrier whose move costs least.
    fn feed_starved(&self, members: &mut [Vec<usize>]) {
        while let Some(starved) = (0..self.n_groups).find(|&i| members[i].is_empty()) {
            let mut best: Option<(f64, usize, usize)> = None;
            for (donor, held) in members.iter().enumerate() {
                if held.len() < 2 {
                    continue;
                }
                let before = self.group_cost(donor, held).0;
                for (pos, &n) in held.iter().enumerate() {
                    let mut rest = held.clone();
                    rest.remove(pos);
                    let delta = self.group_cost(donor, &rest).0 - before
                        + self.group_cost(starved, &[n]).0;
                    if best.is_none_or(|b| delta < b.0) {
                        best = Some((delta, donor, pos));
                    }
                }
            }
            // I <= N guarantees a donor exists
            let (_, donor, pos) = best.expect("no donor subcarrier");
            let n = members[donor].remove(pos);
            members[starved].push(n);
        }
    }

    /// Best-improvement single-subcarrier moves.
    /// Best-improvement descent over single-subcarrier moves and pairwise
    /// swaps between groups.
    fn local_search(&self, members: &mut [Vec<usize>]) {
        let mut costs: Vec<f64> = (0..self.n_groups).map(|i| self.group_cost(i, &members[i]).0).collect();
        for _ in 0..10 * self.n_sub().max(1) {
            let total: f64 = costs.iter().sum();
            let mut best: Option<(f64, Step)> = None;
            let mut offer = |gain: f64, step: Step| {
                if gain > 1e-12 * total && best.as_ref().is_none_or(|b| gain > b.0) {
                    best = Some((gain, step));
                }
            };
            for from in 0..self.n_groups {
                for (pos, &n) in members[from].iter().enumerate() {
                    if members[from].len() >= 2 {
                        let mut rest = members[from].clone();
                        rest.remove(pos);
                        let from_cost = self.group_cost(from, &rest).0;
                        for to in (0..self.n_groups).filter(|&to| to != from) {
                            let mut grown = members[to].clone();
                            grown.push(n);
                            let to_cost = self.group_cost(to, &grown).0;
                            let gain = costs[from] + costs[to] - from_cost - to_cost;
                            offer(gain, Step::Move { from, pos, to, from_cost, to_cost });
                        }
                    }
                    for to in from + 1..self.n_groups {
                        for (pos_to, &m) in members[to].iter().enumerate() {
                            let mut a = members[from].clone();
                            a[pos] = m;
                            let mut b = members[to].clone();
                            b[pos_to] = n;
                            let (ca, cb) = (self.group_cost(from, &a).0, self.group_cost(to, &b).0);
                            let gain = costs[from] + costs[to] - ca - cb;
                            offer(gain, Step::Swap { from, pos, to, pos_to, from_cost: ca, to_cost: cb });
                        }
                    }
                }
            }
            match best {
                None => break,
                Some((_, Step::Move { from, pos, to, from_cost, to_cost })) => {
                    let n = members[from].remove(pos);
                    members[to].push(n);
                    members[to].sort_unstable();
                    costs[from] = from_cost;
                    costs[to] = to_cost;
                }
                Some((_, Step::Swap { from, pos, to, pos_to, from_cost, to_cost })) => {
                    let n = members[from][pos];
                    members[from][pos] = members[to][pos_to];
                    members[to][pos_to] = n;
                    members[from].sort_unstable();
                    members[to].sort_unstable();
                    costs[from] = from_cost;
                    costs[to] = to_cost;
                }
            }
        }
    }

    fn initial_levels(&self) -> Vec<f64> {
        let total: f64 = self.sizes.iter().sum();
        (0..self.n_groups)
            .map(|i| {
                let share = (self.n_sub() as f64 * self.sizes[i] / total).round().max(1.0) as usize;
                let mut order: Vec<usize> = (0..self.n_sub()).collect();
                order.sort_by(|&a, &b| self.floors[a][i].total_cmp(&self.floors[b][i]));
                order.truncate(share.min(self.n_sub()));
                self.group_cost(i, &order).1
            })
            .collect()
    }

    fn run(&self, opts: &SolveOptions) -> Outcome {
        let b = self.cfg.bandwidth_hz;
        let mut log_levels: Vec<f64> = self.initial_levels().iter().map(|w| w.ln()).collect();
        let hasher = BuildHasherDefault::<DefaultHasher>::default();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut prev: Vec<usize> = Vec::new();
        let mut polyak = 1.0;
        let mut last_dual = 0;

        let mut best_dual = f64::NEG_INFINITY;
        // a few of the cheapest distinct repaired assignments, cheapest first
        let mut best: Vec<(f64, Vec<Vec<usize>>)> = Vec::new();
        let mut last_progress = 0;
        let mut residual_converged = false;
        let mut iterations = 0;

        for t in 1..=opts.max_iterations {
            iterations = t;
            let levels: Vec<f64> = log_levels.iter().map(|u| u.exp()).collect();
            let mut assignment = Vec::with_capacity(self.n_sub());
            let mut metric_sum = 0.0;
            for n in 0..self.n_sub() {
                let (i, m) = self.argmax(n, &levels);
                assignment.push(i);
                metric_sum += m;
            }
            let linear: f64 = levels
                .iter()
                .zip(&self.targets)
                .map(|(w, r)| w * LN_2 * r / b)
                .sum();
            let dual = linear - metric_sum;
            if best_dual == f64::NEG_INFINITY || dual > best_dual + 1e-12 * best_dual.abs() {
                best_dual = dual;
                last_progress = t;
                last_dual = t;
            }

            if assignment != prev {
                if seen.insert(hasher.hash_one(&assignment)) {
                    let mut members = self.members_of(&assignment);
                    self.feed_starved(&mut members);
                    let cost = self.total_cost(&members);
                    if best.first().is_none_or(|(c, _)| cost < *c) {
                        last_progress = t;
                    }
                    let at = best.partition_point(|(c, _)| *c <= cost);
                    if at < STARTS && !best.iter().any(|(_, m)| *m == members) {
                        best.insert(at, (cost, members));
                        best.truncate(STARTS);
                    }
                }
                prev = assignment;
            }

            let mut rates = vec![0.0; self.n_groups];
            let mut active = vec![0usize; self.n_groups];
            for (n, &i) in prev.iter().enumerate() {
                let floor = self.floors[n][i];
                if levels[i] > floor {
                    rates[i] += b * (levels[i] / floor).log2();
                    active[i] += 1;
                }
            }
            if (0..self.n_groups)
                .all(|i| (self.targets[i] - rates[i]).abs() <= opts.residual_tol * self.targets[i])
            {
                residual_converged = true;
                break;
            }
            let best_primal = best.first().map_or(f64::INFINITY, |b| b.0);
            if best_primal - best_dual <= 1e-12 * best_primal {
                break;
            }
            if t - last_progress > opts.stall_iterations {
                break;
            }

            // Polyak step toward the best primal value, in multiplier space
            // (lambda_i = w_i ln2 / B); the factor halves whenever the dual
            // stops improving.
            if t - last_dual > POLYAK_PATIENCE {
                polyak *= 0.5;
                last_dual = t;
            }
            let residuals: Vec<f64> = (0..self.n_groups).map(|i| self.targets[i] - rates[i]).collect();
            let norm2: f64 = residuals.iter().map(|r| r * r).sum();
            if norm2 == 0.0 || !best_primal.is_finite() {
                break;
            }
            let step = polyak * (best_primal - dual).max(0.0) / norm2;
            for i in 0..self.n_groups {
                let lambda = levels[i] * LN_2 / b;
                let next = (lambda + step * residuals[i]).max(0.1 * lambda);
                log_levels[i] = (next * b / LN_2).ln();
            }
        }

        if residual_converged {
            let mut members_now = self.members_of(&prev);
            self.feed_starved(&mut members_now);
            let cost = self.total_cost(&members_now);
            if !best.iter().any(|(_, m)| *m == members_now) {
                best.insert(0, (cost, members_now));
            }
        }
        // The dual iteration always evaluates its first assignment.
        let mut members = best[0].1.clone();
        if opts.local_search {
            let mut best_cost = f64::INFINITY;
            for (_, start) in best {
                let mut m = start;
                self.local_search(&mut m);
                let cost = self.total_cost(&m);
                if cost < best_cost {
                    best_cost = cost;
                    members = m;
                }
            }
        }
        for m in members.iter_mut() {
            m.sort_unstable();
        }
        Outcome {
            members,
            best_dual,
            iterations,
            residual_converged,
        }
    }

    fn allocation(&self, members: &[Vec<usize>]) -> Allocation {
        let n_sub = self.n_sub();
        let mut assignment = vec![0; n_sub];
        let mut power_w = vec![0.0; n_sub];
        let mut rate_bps = vec![0.0; n_sub];
        for (i, subs) in members.iter().enumerate() {
            let (_, level) = self.group_cost(i, subs);
            for &n in subs {
                let t = self.floors[n][i];
                assignment[n] = i;
                if level > t {
                    power_w[n] = level - t;
                    rate_bps[n] = self.cfg.bandwidth_hz * (level / t).log2();
                }
            }
        }
        Allocation {
            total_power_w: power_w.iter().sum(),
            assignment,
            power_w,
            rate_bps,
        }
    }
}
