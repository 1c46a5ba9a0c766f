//! Per-user tile requests and their partition into multicast groups.
//!
//! A tile's *signature* is the exact set of users requesting it. Tiles sharing a
//! signature form one group, so every group is delivered to exactly one user
//! subset and no two groups target the same subset. Groups are ordered by their
//! smallest tile index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fov_tiles, TileSet, VideoConfig, ViewDirection};

/// Viewing directions of all `K` users.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemViewState {
    pub directions: Vec<ViewDirection>,
}

impl SystemViewState {
    pub fn new(directions: Vec<ViewDirection>) -> Self {
        SystemViewState { directions }
    }

    pub fn n_users(&self) -> usize {
        self.directions.len()
    }

    pub fn check(&self, cfg: &VideoConfig) -> Result<()> {
        if self.directions.is_empty() {
            return Err(Error::invalid("users", "view state needs at least one user"));
        }
        self.directions.iter().try_for_each(|d| d.check(cfg))
    }

    /// Sorted copy; two states with the same canonical form have the same
    /// multiset of group sizes.
    pub fn canonical(&self) -> SystemViewState {
        let mut directions = self.directions.clone();
        directions.sort_unstable();
        SystemViewState { directions }
    }
}

/// One multicast group: a tile set and the users that need it. User indices
/// are 0-based positions in the view state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub tiles: TileSet,
    pub size: usize,
    pub users: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub groups: Vec<Group>,
    pub total_tiles: usize,
}

impl GroupPartition {
    /// Builds a partition from explicit groups without checking disjointness.
    /// Used for unicast sessions where the same tile travels in several groups.
    pub fn from_groups(groups: Vec<Group>) -> Result<Self> {
        for g in &groups {
            if g.tiles.is_empty() || g.users.is_empty() {
                return Err(Error::invalid("group", "tiles and users must be non-empty"));
            }
            if g.size != g.tiles.len() {
                return Err(Error::invalid("group", "size must equal tile count"));
            }
        }
        let total_tiles = groups.iter().map(|g| g.size).sum();
        Ok(GroupPartition {
            groups,
            total_tiles,
        })
    }

    /// Groups with given sizes, each served to user 0. Tiles are numbered
    /// consecutively; only the sizes matter to the solvers.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut next = 1u32;
        let groups = sizes
            .iter()
            .map(|&s| {
                let tiles = TileSet::new(next..next + s as u32);
                next += s as u32;
                Group {
                    tiles,
                    size: s,
                    users: vec![0],
                }
            })
            .collect();
        GroupPartition::from_groups(groups)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.size).collect()
    }

    /// Largest user index referenced plus one.
    pub fn n_users(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|g| g.users.iter())
            .max()
            .map_or(0, |&u| u + 1)
    }

    /// Union of all group tile sets.
    pub fn union(&self) -> TileSet {
        self.groups.iter().flat_map(|g| g.tiles.iter()).collect()
    }
}

/// Tiles each user must receive.
pub fn required_tiles(state: &SystemViewState, cfg: &VideoConfig) -> Result<Vec<TileSet>> {
    state.check(cfg)?;
    state.directions.iter().map(|&d| fov_tiles(d, cfg)).collect()
}

/// Signature partition of the requested tiles.
pub fn partition(per_user: &[TileSet]) -> Result<GroupPartition> {
    let mut tiles: Vec<u32> = per_user.iter().flat_map(|t| t.iter()).collect();
    tiles.sort_unstable();
    tiles.dedup();
    if tiles.is_empty() {
        return Err(Error::EmptyPartition);
    }

    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut buckets: Vec<(Vec<usize>, Vec<u32>)> = Vec::new();
    for tile in tiles {
        let signature: Vec<usize> = per_user
            .iter()
            .enumerate()
            .filter(|(_, set)| set.contains(tile))
            .map(|(k, _)| k)
            .collect();
        let slot = *index.entry(signature.clone()).or_insert_with(|| {
            buckets.push((signature, Vec::new()));
            buckets.len() - 1
        });
        buckets[slot].1.push(tile);
    }

    let groups = buckets
        .into_iter()
        .map(|(users, tiles)| Group {
            size: tiles.len(),
            tiles: TileSet::new(tiles),
            users,
        })
        .collect();
    GroupPartition::from_groups(groups)
}

/// Group sizes of the signature partition, in the same order as [`partition`],
/// computed with per-user bitmaps. Suited to enumerating many view states.
pub(crate) fn signature_sizes(per_user: &[&TileBitmap]) -> Vec<usize> {
    let words = per_user.first().map_or(0, |b| b.words.len());
    let mut sizes: Vec<usize> = Vec::new();
    let mut slot: HashMap<u128, usize> = HashMap::new();
    for w in 0..words {
        let mut any = 0u64;
        for b in per_user {
            any |= b.words[w];
        }
        while any != 0 {
            let bit = any.trailing_zeros();
            any &= any - 1;
            let mut sig = 0u128;
            for (k, b) in per_user.iter().enumerate() {
                if b.words[w] >> bit & 1 == 1 {
                    sig |= 1 << k;
                }
            }
            match slot.get(&sig) {
                Some(&i) => sizes[i] += 1,
                None => {
                    slot.insert(sig, sizes.len());
                    sizes.push(1);
                }
            }
        }
    }
    sizes
}

/// Dense membership bitmap over tile indices `1..=n_tiles`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TileBitmap {
    words: Vec<u64>,
}

impl TileBitmap {
    pub(crate) fn new(tiles: &TileSet, n_tiles: u32) -> Self {
        let mut words = vec![0u64; (n_tiles as usize).div_ceil(64)];
        for t in tiles.iter() {
            let i = (t - 1) as usize;
            words[i / 64] |= 1 << (i % 64);
        }
        TileBitmap { words }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn ts(v: &[u32]) -> TileSet {
        TileSet::new(v.iter().copied())
    }

    /// Buckets every tile by its requesting-user subset, computed per tile.
    fn bucket_oracle(per_user: &[TileSet]) -> BTreeMap<u32, (Vec<u32>, Vec<usize>)> {
        let mut by_sig: BTreeMap<Vec<usize>, Vec<u32>> = BTreeMap::new();
        for t in 1..=64u32 {
            let sig: Vec<usize> = (0..per_user.len()).filter(|&k| per_user[k].contains(t)).collect();
            if !sig.is_empty() {
                by_sig.entry(sig).or_default().push(t);
            }
        }
        // key by smallest tile
        by_sig.into_iter().map(|(sig, tiles)| (tiles[0], (tiles, sig))).collect()
    }

    fn check_invariants(per_user: &[TileSet], part: &GroupPartition) {
        let union: TileSet = per_user.iter().flat_map(|t| t.iter()).collect();
        assert_eq!(part.union(), union);
        let mut seen = std::collections::HashSet::new();
        let mut sigs = std::collections::HashSet::new();
        for g in &part.groups {
            assert!(!g.tiles.is_empty() && !g.users.is_empty());
            assert_eq!(g.size, g.tiles.len());
            assert!(sigs.insert(g.users.clone()), "duplicate user set");
            for t in g.tiles.iter() {
                assert!(seen.insert(t), "tile {t} in two groups");
            }
        }
        assert_eq!(part.total_tiles, part.groups.iter().map(|g| g.size).sum::<usize>());
        assert_eq!(part.total_tiles, union.len());
        let firsts: Vec<u32> = part.groups.iter().map(|g| g.tiles.as_slice()[0]).collect();
        assert!(firsts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn three_users_by_inspection() {
        let per_user = [ts(&[1, 2]), ts(&[2, 3]), ts(&[2])];
        let p = partition(&per_user).unwrap();
        assert_eq!(p.n_groups(), 3);
        assert_eq!(p.groups[0].tiles, ts(&[1]));
        assert_eq!(p.groups[0].users, vec![0]);
        assert_eq!(p.groups[1].tiles, ts(&[2]));
        assert_eq!(p.groups[1].users, vec![0, 1, 2]);
        assert_eq!(p.groups[2].tiles, ts(&[3]));
        assert_eq!(p.groups[2].users, vec![1]);
        assert_eq!(p.total_tiles, 3);
    }

    #[test]
    fn single_user_single_group() {
        let p = partition(&[ts(&[4, 7])]).unwrap();
        assert_eq!(p.n_groups(), 1);
        assert_eq!(p.groups[0].size, 2);
        assert_eq!(p.groups[0].users, vec![0]);
    }

    #[test]
    fn empty_requests_rejected() {
        assert_eq!(partition(&[ts(&[]), ts(&[])]), Err(Error::EmptyPartition));
        assert_eq!(partition(&[]), Err(Error::EmptyPartition));
    }

    #[test]
    fn identical_directions_give_identical_sets() {
        let cfg = VideoConfig::new(30, 15, 30, 2, 100.0, 100.0, 15.0).unwrap();
        let d = ViewDirection::new(7, 2);
        let sets = required_tiles(&SystemViewState::new(vec![d, d]), &cfg).unwrap();
        assert_eq!(sets[0], sets[1]);
        assert_eq!(sets[0], fov_tiles(d, &cfg).unwrap());
        let p = partition(&sets).unwrap();
        assert_eq!(p.n_groups(), 1);
        assert_eq!(p.groups[0].users, vec![0, 1]);
    }

    #[test]
    fn required_tiles_match_raster_on_full_grid() {
        let cfg = VideoConfig::new(30, 15, 30, 2, 100.0, 100.0, 15.0).unwrap();
        let state = SystemViewState::new(vec![
            ViewDirection::new(1, 1),
            ViewDirection::new(9, 2),
            ViewDirection::new(24, 1),
        ]);
        let sets = required_tiles(&state, &cfg).unwrap();
        for (k, d) in state.directions.iter().enumerate() {
            assert_eq!(sets[k], crate::geometry::tests::raster_oracle(*d, &cfg));
        }
        assert!(required_tiles(&SystemViewState::new(vec![]), &cfg).is_err());
    }

    #[test]
    fn random_instances_match_bucket_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let k = rng.random_range(1..=4);
            let per_user: Vec<TileSet> = (0..k)
                .map(|_| (1..=20u32).filter(|_| rng.random_bool(0.4)).collect())
                .collect();
            if per_user.iter().all(|t| t.is_empty()) {
                continue;
            }
            let p = partition(&per_user).unwrap();
            check_invariants(&per_user, &p);
            let oracle = bucket_oracle(&per_user);
            assert_eq!(p.n_groups(), oracle.len());
            for (g, (_, (tiles, users))) in p.groups.iter().zip(oracle.iter()) {
                assert_eq!(g.tiles.as_slice(), tiles.as_slice());
                assert_eq!(&g.users, users);
            }
            let bitmaps: Vec<TileBitmap> = per_user.iter().map(|t| TileBitmap::new(t, 20)).collect();
            let refs: Vec<&TileBitmap> = bitmaps.iter().collect();
            assert_eq!(signature_sizes(&refs), p.sizes());
        }
    }

    #[test]
    fn counting_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let k = rng.random_range(1..=5usize);
            let per_user: Vec<TileSet> = (0..k)
                .map(|_| (1..=30u32).filter(|_| rng.random_bool(0.3)).collect())
                .collect();
            let Ok(p) = partition(&per_user) else { continue };
            let phi = p.union().len();
            assert!(p.n_groups() <= phi.min((1 << k) - 1));

            // Permuting users keeps the size multiset.
            let mut perm: Vec<TileSet> = per_user.clone();
            perm.reverse();
            let q = partition(&perm).unwrap();
            let (mut a, mut b) = (p.sizes(), q.sizes());
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);

            // Adding a user never shrinks the total.
            let mut more = per_user.clone();
            more.push((1..=30u32).filter(|_| rng.random_bool(0.3)).collect());
            assert!(partition(&more).unwrap().total_tiles >= p.total_tiles);
        }
    }

    #[test]
    fn from_groups_validates() {
        assert!(GroupPartition::from_groups(vec![Group {
            tiles: ts(&[1]),
            size: 2,
            users: vec![0]
        }])
        .is_err());
        let p = GroupPartition::from_sizes(&[2, 3]).unwrap();
        assert_eq!(p.sizes(), vec![2, 3]);
        assert_eq!(p.total_tiles, 5);
    }
}
