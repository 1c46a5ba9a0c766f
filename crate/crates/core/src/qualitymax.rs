//! Largest common per-tile encoding rate under a total power budget.
//!
//! Against the worst channel (every gain equal to `min_gain`) the allocation in
//! a view state reduces to choosing integer subcarrier counts `N_i` per group;
//! group `i` then needs `N_i (n_0/min_gain) (2^{D S_i / (B N_i)} - 1)` watts. The
//! continuous relaxation has a closed form with `N_i` proportional to `S_i`.
//! The greedy rule floors the relaxed counts, hands out the leftover
//! subcarriers one at a time and bisects for the largest feasible rate. The
//! scenario rate is the minimum over all view states.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fov_tiles, VideoConfig, ViewDirection};
use crate::grouping::{signature_sizes, SystemViewState, TileBitmap};
use crate::powermin::OfdmaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScenario {
    pub video: VideoConfig,
    pub ofdma: OfdmaConfig,
    pub users: usize,
    pub budget_w: f64,
    /// Smallest channel power in the channel state space.
    pub min_gain: f64,
}

impl QualityScenario {
    pub fn validate(&self) -> Result<()> {
        self.video.validate()?;
        self.ofdma.validate()?;
        if self.users == 0 || self.users > 128 {
            return Err(Error::invalid("users", "must be between 1 and 128"));
        }
        if !(self.min_gain.is_finite() && self.min_gain > 0.0) {
            return Err(Error::invalid("min_gain", "must be finite and > 0"));
        }
        if !(self.budget_w.is_finite() && self.budget_w >= 0.0) {
            return Err(Error::invalid("budget_w", "must be finite and >= 0"));
        }
        if self.budget_w == 0.0 {
            return Err(Error::Infeasible("zero power budget only supports a zero encoding rate".into()));
        }
        Ok(())
    }
}

/// Leftover-subcarrier rule used by the greedy step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GreedyMetric {
    /// `(S_i ln2 / B) 2^{S_i / (B N_i)}`, without the rate in the exponent.
    #[default]
    RateFree,
    /// Same form with the relaxed rate `D†` in the exponent,
    /// `(S_i ln2 / B) 2^{D† S_i / (B N_i)}`.
    WithRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateQuality {
    pub state: SystemViewState,
    pub counts: Vec<usize>,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResult {
    /// Minimum over view states of the per-state rate.
    pub rate_bps: f64,
    /// Per-state table; empty when not requested.
    pub per_state: Vec<StateQuality>,
    /// Relaxed rate at the worst state.
    pub relaxed_rate_bps: f64,
    pub lower_bound_bps: f64,
    pub upper_bound_bps: f64,
    pub worst_state: SystemViewState,
    /// Largest total tile count over the evaluated states.
    pub worst_sum_tiles: usize,
    /// Largest group count over the evaluated states.
    pub worst_groups: usize,
    pub n_states: usize,
    /// The states were sampled rather than enumerated, so `rate_bps` is only
    /// an optimistic estimate of the true minimum.
    pub sampled: bool,
}

/// Power needed to carry rate `d` with `counts[i]` subcarriers per group at
/// the worst channel gain.
pub fn power_for(sizes: &[usize], counts: &[usize], d: f64, ofdma: &OfdmaConfig, min_gain: f64) -> f64 {
    sizes
        .iter()
        .zip(counts)
        .map(|(&s, &n)| {
            let n = n as f64;
            n * ofdma.noise_w / min_gain * (d * s as f64 * LN_2 / (ofdma.bandwidth_hz * n)).exp_m1()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedQuality {
    pub counts: Vec<f64>,
    pub rate_bps: f64,
}

/// Optimum with fractional counts: `N_i = S_i N / sum S`, all groups at the
/// same spectral efficiency.
pub fn relaxed_quality(sizes: &[usize], ofdma: &OfdmaConfig, budget_w: f64, min_gain: f64) -> RelaxedQuality {
    let n = ofdma.n_subcarriers as f64;
    let total: usize = sizes.iter().sum();
    let counts = sizes.iter().map(|&s| s as f64 * n / total as f64).collect();
    let rate_bps = ofdma.bandwidth_hz * n * (budget_w * min_gain / (n * ofdma.noise_w)).ln_1p()
        / (LN_2 * total as f64);
    RelaxedQuality { counts, rate_bps }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyQuality {
    pub counts: Vec<usize>,
    pub rate_bps: f64,
}

pub fn greedy_quality(sizes: &[usize], ofdma: &OfdmaConfig, budget_w: f64, min_gain: f64) -> Result<GreedyQuality> {
    greedy_quality_with(sizes, ofdma, budget_w, min_gain, GreedyMetric::RateFree)
}

pub fn greedy_quality_with(
    sizes: &[usize],
    ofdma: &OfdmaConfig,
    budget_w: f64,
    min_gain: f64,
    metric: GreedyMetric,
) -> Result<GreedyQuality> {
    let n_sub = ofdma.n_subcarriers;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::invalid("sizes", "need at least one non-empty group"));
    }
    if sizes.len() > n_sub {
        return Err(Error::Infeasible(format!("{} groups but only {n_sub} subcarriers", sizes.len())));
    }
    let relaxed = relaxed_quality(sizes, ofdma, budget_w, min_gain);
    let b = ofdma.bandwidth_hz;
    let rate_factor = match metric {
        GreedyMetric::RateFree => 1.0,
        GreedyMetric::WithRate => relaxed.rate_bps,
    };
    let score = |i: usize, count: usize| {
        let s = sizes[i] as f64;
        s * LN_2 / b * (rate_factor * s / (b * count as f64)).exp2()
    };

    let mut counts: Vec<usize> = relaxed.counts.iter().map(|c| (c.floor() as usize).max(1)).collect();
    // Raising empty floors to one can overshoot N; give back where it hurts least.
    while counts.iter().sum::<usize>() > n_sub {
        let i = (0..counts.len())
            .filter(|&i| counts[i] > 1)
            .min_by(|&a, &b| score(a, counts[a] - 1).total_cmp(&score(b, counts[b] - 1)))
            .expect("I <= N leaves a group with more than one subcarrier");
        counts[i] -= 1;
    }
    while counts.iter().sum::<usize>() < n_sub {
        let mut best = 0;
        for i in 1..counts.len() {
            if score(i, counts[i]) > score(best, counts[best]) {
                best = i;
            }
        }
        counts[best] += 1;
    }
    let rate_bps = max_rate(sizes, &counts, ofdma, budget_w, min_gain, relaxed.rate_bps);
    Ok(GreedyQuality { counts, rate_bps })
}

/// Largest rate in `[0, hi]` whose power stays within budget, by bisection.
pub(crate) fn max_rate(
    sizes: &[usize],
    counts: &[usize],
    ofdma: &OfdmaConfig,
    budget_w: f64,
    min_gain: f64,
    hi: f64,
) -> f64 {
    if power_for(sizes, counts, hi, ofdma, min_gain) <= budget_w {
        return hi;
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if power_for(sizes, counts, mid, ofdma, min_gain) <= budget_w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Bounds on the scenario optimum from the worst-case tile total and group
/// count: one subcarrier per group versus the relaxation.
pub fn quality_bounds(scn: &QualityScenario, worst_sum_tiles: usize, worst_groups: usize) -> (f64, f64) {
    let o = &scn.ofdma;
    let n = o.n_subcarriers as f64;
    let snr = scn.budget_w * scn.min_gain / o.noise_w;
    let denom = LN_2 * worst_sum_tiles as f64;
    let lower = o.bandwidth_hz * (snr / worst_groups as f64).ln_1p() / denom;
    let upper = o.bandwidth_hz * n * (snr / n).ln_1p() / denom;
    (lower, upper)
}

/// How the view-state space is covered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpaceOptions {
    /// Largest number of direction multisets enumerated exhaustively.
    pub state_cap: u128,
    /// Draw this many states uniformly instead of enumerating, when the cap
    /// is exceeded.
    pub sample: Option<usize>,
    pub seed: u64,
    pub keep_states: bool,
    pub metric: GreedyMetric,
}

impl Default for StateSpaceOptions {
    fn default() -> Self {
        StateSpaceOptions {
            state_cap: 2_000_000,
            sample: None,
            seed: 0,
            keep_states: true,
            metric: GreedyMetric::RateFree,
        }
    }
}

/// Number of unordered `k`-multisets over `d` directions.
pub fn multiset_count(d: u128, k: u128) -> u128 {
    // C(d + k - 1, k), built incrementally so every step is exact
    (1..=k).fold(1u128, |acc, j| acc * (d + j - 1) / j)
}

pub fn solve_quality(scn: &QualityScenario, opts: &StateSpaceOptions) -> Result<QualityResult> {
    let metric = opts.metric;
    min_over_states(scn, opts, |view| {
        let sizes = signature_sizes(&view.bitmaps);
        let g = greedy_quality_with(&sizes, &scn.ofdma, scn.budget_w, scn.min_gain, metric)?;
        Ok(StateEval {
            sizes,
            counts: g.counts,
            rate_bps: g.rate_bps,
        })
    })
}

/// Cached per-user view of one state.
pub(crate) struct StateView<'a> {
    pub bitmaps: Vec<&'a TileBitmap>,
    pub tile_counts: Vec<usize>,
}

pub(crate) struct StateEval {
    pub sizes: Vec<usize>,
    pub counts: Vec<usize>,
    pub rate_bps: f64,
}

/// Evaluates `eval` on every canonical view state (or a sample) and returns
/// the minimum.
pub(crate) fn min_over_states<F>(scn: &QualityScenario, opts: &StateSpaceOptions, eval: F) -> Result<QualityResult>
where
    F: Fn(&StateView) -> Result<StateEval> + Sync,
{
    scn.validate()?;
    let video = &scn.video;
    let directions: Vec<ViewDirection> = video.directions().collect();
    let (states, sampled) = view_states(directions.len(), scn.users, opts)?;

    let mut bitmaps = Vec::with_capacity(directions.len());
    let mut tile_counts = Vec::with_capacity(directions.len());
    for &d in &directions {
        let tiles = fov_tiles(d, video)?;
        tile_counts.push(tiles.len());
        bitmaps.push(TileBitmap::new(&tiles, video.n_tiles()));
    }

    let evals: Vec<Result<StateEval>> = states
        .par_iter()
        .map(|state| {
            let view = StateView {
                bitmaps: state.iter().map(|&i| &bitmaps[i as usize]).collect(),
                tile_counts: state.iter().map(|&i| tile_counts[i as usize]).collect(),
            };
            eval(&view).map_err(|e| match e {
                Error::Infeasible(msg) => {
                    let dirs: Vec<ViewDirection> = state.iter().map(|&i| directions[i as usize]).collect();
                    Error::Infeasible(format!("{msg} in view state {dirs:?}"))
                }
                other => other,
            })
        })
        .collect();

    let to_state = |s: &[u32]| SystemViewState::new(s.iter().map(|&i| directions[i as usize]).collect());
    let mut worst: Option<(usize, f64)> = None;
    let (mut worst_sum, mut worst_groups) = (0, 0);
    let mut per_state = Vec::new();
    let mut results = Vec::with_capacity(evals.len());
    for (idx, e) in evals.into_iter().enumerate() {
        let e = e?;
        worst_sum = worst_sum.max(e.sizes.iter().sum::<usize>());
        worst_groups = worst_groups.max(e.sizes.len());
        if worst.is_none_or(|(_, r)| e.rate_bps < r) {
            worst = Some((idx, e.rate_bps));
        }
        results.push(e);
    }
    let (worst_idx, rate_bps) = worst.expect("state space is never empty");
    if opts.keep_states {
        per_state = states
            .iter()
            .zip(&results)
            .map(|(s, e)| StateQuality {
                state: to_state(s),
                counts: e.counts.clone(),
                rate_bps: e.rate_bps,
            })
            .collect();
    }
    let relaxed = relaxed_quality(&results[worst_idx].sizes, &scn.ofdma, scn.budget_w, scn.min_gain);
    let (lower_bound_bps, upper_bound_bps) = quality_bounds(scn, worst_sum, worst_groups);
    Ok(QualityResult {
        rate_bps,
        per_state,
        relaxed_rate_bps: relaxed.rate_bps,
        lower_bound_bps,
        upper_bound_bps,
        worst_state: to_state(&states[worst_idx]),
        worst_sum_tiles: worst_sum,
        worst_groups,
        n_states: states.len(),
        sampled,
    })
}

/// Canonical states as sorted direction indices.
fn view_states(n_dirs: usize, k: usize, opts: &StateSpaceOptions) -> Result<(Vec<Vec<u32>>, bool)> {
    let count = multiset_count(n_dirs as u128, k as u128);
    if count > opts.state_cap {
        let Some(m) = opts.sample else {
            return Err(Error::BudgetExceeded {
                required: count,
                cap: opts.state_cap,
            });
        };
        if m == 0 {
            return Err(Error::invalid("sample", "must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut states: Vec<Vec<u32>> = (0..m)
            .map(|_| {
                let mut s: Vec<u32> = (0..k).map(|_| rng.random_range(0..n_dirs as u32)).collect();
                s.sort_unstable();
                s
            })
            .collect();
        states.sort_unstable();
        states.dedup();
        return Ok((states, true));
    }

    let mut states = Vec::with_capacity(count as usize);
    let mut cur = vec![0u32; k];
    let top = n_dirs as u32 - 1;
    loop {
        states.push(cur.clone());
        let Some(pos) = cur.iter().rposition(|&x| x < top) else { break };
        let v = cur[pos] + 1;
        cur[pos..].iter_mut().for_each(|x| *x = v);
    }
    Ok((states, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ofdma(n: usize) -> OfdmaConfig {
        OfdmaConfig::new(n, 1.0, 1.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn power_for_examples() {
        let o = ofdma(4);
        assert_eq!(power_for(&[1, 2], &[1, 2], 0.0, &o, 1.0), 0.0);
        assert!(rel(power_for(&[1, 2], &[1, 2], 1.0, &o, 1.0), 3.0) < 1e-12);
        let single = power_for(&[3], &[4], 2.0, &o, 0.5);
        assert!(rel(single, 4.0 * 2.0 * (2f64.powf(6.0 / 4.0) - 1.0)) < 1e-12);
    }

    #[test]
    fn relaxed_examples() {
        let r = relaxed_quality(&[1], &ofdma(2), 3.0, 1.0);
        assert!(rel(r.rate_bps, 2.0 * 2.5f64.log2()) < 1e-12);
        assert!(rel(r.rate_bps, 2.643856189774724) < 1e-12);
        let r = relaxed_quality(&[3, 3], &ofdma(6), 10.0, 1.0);
        assert_eq!(r.counts, vec![3.0, 3.0]);
        let r = relaxed_quality(&[4], &OfdmaConfig::new(5, 2.0, 0.1).unwrap(), 7.0, 0.3);
        assert!(rel(r.rate_bps, 2.0 * 5.0 / 4.0 * (7.0f64 * 0.3 / (5.0 * 0.1) + 1.0).log2()) < 1e-12);
    }

    #[test]
    fn greedy_single_group_is_tight() {
        let o = OfdmaConfig::new(7, 3.0, 0.2).unwrap();
        let g = greedy_quality(&[5], &o, 12.0, 0.4).unwrap();
        assert_eq!(g.counts, vec![7]);
        let expect = 3.0 * 7.0 / 5.0 * (12.0f64 * 0.4 / (7.0 * 0.2) + 1.0).log2();
        assert!(rel(g.rate_bps, expect) < 1e-9);
    }

    #[test]
    fn greedy_symmetric_needs_no_steps() {
        let o = ofdma(6);
        let g = greedy_quality(&[2, 2, 2], &o, 5.0, 1.0).unwrap();
        assert_eq!(g.counts, vec![2, 2, 2]);
        assert!(rel(g.rate_bps, relaxed_quality(&[2, 2, 2], &o, 5.0, 1.0).rate_bps) < 1e-9);
    }

    #[test]
    fn greedy_clamps_and_stays_within_n() {
        let o = ofdma(3);
        let g = greedy_quality(&[1, 1, 100], &o, 10.0, 1.0).unwrap();
        assert_eq!(g.counts.iter().sum::<usize>(), 3);
        assert!(g.counts.iter().all(|&c| c >= 1));
        assert!(matches!(greedy_quality(&[1, 1, 1, 1], &o, 1.0, 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn greedy_is_feasible_and_below_relaxation() {
        let o = OfdmaConfig::new(9, 2.0, 0.5).unwrap();
        for sizes in [vec![1, 5], vec![3, 1, 7], vec![2, 2, 9, 1]] {
            for metric in [GreedyMetric::RateFree, GreedyMetric::WithRate] {
                let g = greedy_quality_with(&sizes, &o, 20.0, 0.3, metric).unwrap();
                let relaxed = relaxed_quality(&sizes, &o, 20.0, 0.3).rate_bps;
                assert!(g.rate_bps <= relaxed * (1.0 + 1e-12));
                assert!(power_for(&sizes, &g.counts, g.rate_bps, &o, 0.3) <= 20.0 * (1.0 + 1e-9));
                assert!(power_for(&sizes, &g.counts, g.rate_bps, &o, 0.3) >= 20.0 * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn bounds_examples() {
        let video = VideoConfig::new(1, 1, 1, 1, 90.0, 90.0, 0.0).unwrap();
        let scn = QualityScenario {
            video,
            ofdma: ofdma(2),
            users: 1,
            budget_w: 3.0,
            min_gain: 1.0,
        };
        let (lo, hi) = quality_bounds(&scn, 1, 1);
        assert!(rel(lo, 2.0) < 1e-12 && rel(hi, 2.0 * 2.5f64.log2()) < 1e-12);
        let scn1 = QualityScenario { ofdma: ofdma(1), ..scn };
        let (lo, hi) = quality_bounds(&scn1, 4, 1);
        assert!(rel(lo, hi) < 1e-12);
    }

    #[test]
    fn multiset_counts() {
        assert_eq!(multiset_count(60, 3), 37_820);
        assert_eq!(multiset_count(2, 2), 3);
        assert_eq!(multiset_count(1, 5), 1);
        let (states, sampled) = view_states(60, 3, &StateSpaceOptions::default()).unwrap();
        assert!(!sampled);
        assert_eq!(states.len(), 37_820);
        assert!(states.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn singleton_state_space() {
        let video = VideoConfig::new(4, 2, 1, 1, 100.0, 100.0, 15.0).unwrap();
        let scn = QualityScenario {
            video,
            ofdma: ofdma(4),
            users: 1,
            budget_w: 10.0,
            min_gain: 1.0,
        };
        let res = solve_quality(&scn, &StateSpaceOptions::default()).unwrap();
        assert_eq!(res.n_states, 1);
        let s = fov_tiles(ViewDirection::new(1, 1), &video).unwrap().len();
        let g = greedy_quality(&[s], &scn.ofdma, 10.0, 1.0).unwrap();
        assert_eq!(res.rate_bps, g.rate_bps);
    }

    #[test]
    fn two_users_two_directions_by_hand() {
        // 4x1 tiles of 90°, directions at 90° and 270° each see 2 tiles
        let video = VideoConfig::new(4, 1, 2, 1, 180.0, 180.0, 0.0).unwrap();
        let scn = QualityScenario {
            video,
            ofdma: ofdma(4),
            users: 2,
            budget_w: 10.0,
            min_gain: 1.0,
        };
        let res = solve_quality(&scn, &StateSpaceOptions::default()).unwrap();
        assert_eq!(res.n_states, 3);
        let same = greedy_quality(&[2], &scn.ofdma, 10.0, 1.0).unwrap().rate_bps;
        let apart = greedy_quality(&[2, 2], &scn.ofdma, 10.0, 1.0).unwrap().rate_bps;
        let rates: Vec<f64> = res.per_state.iter().map(|s| s.rate_bps).collect();
        assert_eq!(rates, vec![same, apart, same]);
        assert_eq!(res.rate_bps, apart.min(same));
        assert_eq!(res.worst_sum_tiles, 4);
        assert!(res.lower_bound_bps <= res.rate_bps && res.rate_bps <= res.upper_bound_bps);
    }

    #[test]
    fn cap_refuses_or_samples() {
        let video = VideoConfig::new(30, 15, 30, 2, 100.0, 100.0, 15.0).unwrap();
        let scn = QualityScenario {
            video,
            ofdma: OfdmaConfig::new(128, 39e3, 1e-9).unwrap(),
            users: 3,
            budget_w: 1e4,
            min_gain: 1e-6,
        };
        let tight = StateSpaceOptions { state_cap: 100, ..Default::default() };
        assert!(matches!(solve_quality(&scn, &tight), Err(Error::BudgetExceeded { .. })));
        let sampled = StateSpaceOptions { state_cap: 100, sample: Some(50), keep_states: false, ..Default::default() };
        let res = solve_quality(&scn, &sampled).unwrap();
        assert!(res.sampled);
        assert!(res.n_states <= 50);
        assert!(res.per_state.is_empty());
    }

    #[test]
    fn zero_budget_is_infeasible() {
        let video = VideoConfig::new(4, 2, 1, 1, 100.0, 100.0, 15.0).unwrap();
        let scn = QualityScenario {
            video,
            ofdma: ofdma(4),
            users: 1,
            budget_w: 0.0,
            min_gain: 1.0,
        };
        assert!(matches!(solve_quality(&scn, &StateSpaceOptions::default()), Err(Error::Infeasible(_))));
    }
}
