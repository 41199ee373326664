//! Automatically ranked datasets built from noise levels, and snippet-pair
//! sampling for reward learning.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cloning::LevelRollouts;
use crate::error::{DrexError, Result};
use crate::mdp::Trajectory;
use crate::rng::rng_from;

/// Rank level assigned to stay-in-place augmentation trajectories. It sits
/// above every real noise level so those trajectories rank below all others.
pub const NOOP_RANK_LEVEL: f64 = 2.0;

/// Noise-level differences closer than this to `min_gap` count as equal.
const GAP_TOL: f64 = 1e-12;

/// Trajectories with their noise levels and every cross-level preference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedDataset {
    pub trajectories: Vec<Trajectory>,
    /// Distinct levels, noisiest first.
    pub levels: Vec<f64>,
    /// Trajectory indices per entry of `levels`.
    pub groups: Vec<Vec<usize>>,
    /// `(i, j)`: trajectory `i` is ranked below trajectory `j`.
    pub pairs: Vec<(usize, usize)>,
    pub min_gap: f64,
}

fn separated(worse: f64, better: f64, min_gap: f64) -> bool {
    worse - better - min_gap > GAP_TOL
}

impl RankedDataset {
    /// Pairs of level indices `(worse, better)` that generate preferences.
    pub fn level_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.levels.len() {
            for j in 0..self.levels.len() {
                if separated(self.levels[i], self.levels[j], self.min_gap) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Groups rollouts by noise level and emits every pair whose levels differ
/// by more than `min_gap`. Trajectories at the same level are unranked.
pub fn build_ranked_dataset(rollouts: &[LevelRollouts], min_gap: f64) -> Result<RankedDataset> {
    if !(min_gap >= 0.0) {
        return Err(DrexError::Domain(format!(
            "min_gap {min_gap} must be non-negative"
        )));
    }
    let mut levels: Vec<f64> = rollouts
        .iter()
        .filter(|g| !g.trajectories.is_empty())
        .map(|g| g.epsilon)
        .collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    if levels.len() < 2 {
        return Err(DrexError::InsufficientLevels {
            found: levels.len(),
        });
    }
    let mut trajectories = Vec::new();
    let mut groups = vec![Vec::new(); levels.len()];
    for g in rollouts {
        let li = match levels.iter().position(|&l| l == g.epsilon) {
            Some(li) => li,
            None => continue,
        };
        for tau in &g.trajectories {
            let mut tau = tau.clone();
            tau.noise_level = Some(g.epsilon);
            groups[li].push(trajectories.len());
            trajectories.push(tau);
        }
    }
    let mut ds = RankedDataset {
        trajectories,
        levels,
        groups,
        pairs: Vec::new(),
        min_gap,
    };
    for (wi, bi) in ds.level_pairs() {
        for &i in &ds.groups[wi] {
            for &j in &ds.groups[bi] {
                ds.pairs.push((i, j));
            }
        }
    }
    ds.pairs.sort_unstable();
    Ok(ds)
}

/// A contiguous window `[start, start + len)` of trajectory `traj`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub traj: usize,
    pub start: usize,
    pub len: usize,
}

impl Snippet {
    pub fn states<'a>(&self, ds: &'a RankedDataset) -> impl Iterator<Item = usize> + 'a {
        ds.trajectories[self.traj].steps[self.start..self.start + self.len]
            .iter()
            .map(|&(s, _)| s)
    }
}

/// `worse ≺ better`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetPair {
    pub worse: Snippet,
    pub better: Snippet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnippetConfig {
    pub n_pairs: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// The preferred snippet starts no earlier than the other one.
    pub progress: bool,
    /// Both snippets of a pair share one sampled length.
    pub equal_lengths: bool,
}

impl Default for SnippetConfig {
    fn default() -> Self {
        SnippetConfig {
            n_pairs: 40_000,
            min_len: 10,
            max_len: 50,
            progress: false,
            equal_lengths: true,
        }
    }
}

/// Samples `n_pairs` snippet pairs: a separated level pair uniformly, one
/// long-enough trajectory from each level, then a crop of each.
pub fn sample_snippet_pairs(
    ds: &RankedDataset,
    cfg: &SnippetConfig,
    seed: u64,
) -> Result<Vec<SnippetPair>> {
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(DrexError::Precondition(format!(
            "snippet lengths need 1 ≤ min_len ≤ max_len, got [{}, {}]",
            cfg.min_len, cfg.max_len
        )));
    }
    // trajectories shorter than min_len are never drawn
    let usable: Vec<Vec<usize>> = ds
        .groups
        .iter()
        .map(|g| {
            g.iter()
                .copied()
                .filter(|&i| ds.trajectories[i].len() >= cfg.min_len)
                .collect()
        })
        .collect();
    let level_pairs: Vec<(usize, usize)> = ds
        .level_pairs()
        .into_iter()
        .filter(|&(w, b)| !usable[w].is_empty() && !usable[b].is_empty())
        .collect();
    if level_pairs.is_empty() {
        return Err(DrexError::NoValidTrajectory {
            min_len: cfg.min_len,
        });
    }
    let mut rng = rng_from(seed, &[0x5A1]);
    let mut out = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let (wl, bl) = level_pairs[rng.random_range(0..level_pairs.len())];
        let wi = usable[wl][rng.random_range(0..usable[wl].len())];
        let bi = usable[bl][rng.random_range(0..usable[bl].len())];
        let (nw, nb) = (ds.trajectories[wi].len(), ds.trajectories[bi].len());
        let (lw, lb) = if cfg.equal_lengths {
            let l = rng.random_range(cfg.min_len..=cfg.max_len.min(nw).min(nb));
            (l, l)
        } else {
            (
                rng.random_range(cfg.min_len..=cfg.max_len.min(nw)),
                rng.random_range(cfg.min_len..=cfg.max_len.min(nb)),
            )
        };
        let (sw, sb) = if cfg.progress {
            let sw = rng.random_range(0..=(nw - lw).min(nb - lb));
            (sw, rng.random_range(sw..=nb - lb))
        } else {
            (rng.random_range(0..=nw - lw), rng.random_range(0..=nb - lb))
        };
        out.push(SnippetPair {
            worse: Snippet {
                traj: wi,
                start: sw,
                len: lw,
            },
            better: Snippet {
                traj: bi,
                start: sb,
                len: lb,
            },
        });
    }
    Ok(out)
}

/// Deterministic shuffle-and-split; the validation part holds
/// `round(val_fraction · n)` items, at least one when `n ≥ 2`.
pub fn train_val_split<T: Clone>(items: &[T], val_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut rng_from(seed, &[0x5B1]));
    let mut n_val = (val_fraction * items.len() as f64).round() as usize;
    if items.len() >= 2 && val_fraction > 0.0 {
        n_val = n_val.clamp(1, items.len() - 1);
    }
    let val = idx[..n_val].iter().map(|&i| items[i].clone()).collect();
    let train = idx[n_val..].iter().map(|&i| items[i].clone()).collect();
    (train, val)
}
