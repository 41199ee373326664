//! Built-in environments: the 8×8 terrain gridworld, the 5×5 lava gridworld,
//! the four-state counterexample MDP, and a random tabular MDP generator.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use crate::error::{DrexError, Result};
use crate::mdp::Mdp;
use crate::rng::Rng;

/// Grid actions, in index order.
pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

pub const BUILTIN_NAMES: [&str; 3] = ["terrain8x8", "lava5x5", "prop1"];

pub fn builtin(name: &str) -> Result<Mdp> {
    match name {
        "terrain8x8" => Ok(terrain_gridworld()),
        "lava5x5" => Ok(lava_gridworld()),
        "prop1" => Ok(prop1_mdp(10.0)),
        other => Err(DrexError::Precondition(format!(
            "unknown built-in environment `{other}` (expected one of {BUILTIN_NAMES:?})"
        ))),
    }
}

/// Grid layout description. Each cell char maps to a feature index; cells
/// listed in `absorbing` never transition out.
struct Grid<'a> {
    layout: &'a [&'a str],
    /// `(cell char, feature index)`.
    legend: &'a [(char, usize)],
    absorbing: &'a [char],
    start: &'a [(usize, usize)],
    weights: Vec<f64>,
    slip: f64,
    discount: f64,
    horizon: usize,
}

impl Grid<'_> {
    fn build(&self) -> Mdp {
        let rows = self.layout.len();
        let cols = self.layout[0].len();
        let ns = rows * cols;
        let na = 4;
        let d = self.weights.len();
        let cells: Vec<char> = self.layout.iter().flat_map(|r| r.chars()).collect();
        assert_eq!(cells.len(), ns, "ragged grid layout");

        let idx = |r: usize, c: usize| r * cols + c;
        let step = |r: usize, c: usize, a: usize| -> usize {
            match a {
                UP if r > 0 => idx(r - 1, c),
                DOWN if r + 1 < rows => idx(r + 1, c),
                LEFT if c > 0 => idx(r, c - 1),
                RIGHT if c + 1 < cols => idx(r, c + 1),
                _ => idx(r, c),
            }
        };

        let mut transitions = vec![0.0; ns * na * ns];
        let mut features = vec![vec![0.0; d]; ns];
        for r in 0..rows {
            for c in 0..cols {
                let s = idx(r, c);
                let ch = cells[s];
                let f = self
                    .legend
                    .iter()
                    .find(|(k, _)| *k == ch)
                    .map(|&(_, f)| f)
                    .unwrap_or_else(|| panic!("no feature for cell `{ch}`"));
                features[s][f] = 1.0;
                for a in 0..na {
                    let row = &mut transitions[(s * na + a) * ns..(s * na + a + 1) * ns];
                    if self.absorbing.contains(&ch) {
                        row[s] = 1.0;
                        continue;
                    }
                    row[step(r, c, a)] += 1.0 - self.slip;
                    for b in 0..na {
                        row[step(r, c, b)] += self.slip / na as f64;
                    }
                }
            }
        }
        let mut init = vec![0.0; ns];
        for &(r, c) in self.start {
            init[idx(r, c)] = 1.0 / self.start.len() as f64;
        }
        Mdp::new(
            ns,
            na,
            transitions,
            features,
            self.weights.clone(),
            self.discount,
            Some(self.horizon),
            init,
        )
        .expect("built-in grid is valid")
    }
}

/// 8×8 terrain world. Features: road, grass, mud, water, goal.
///
/// The road traces one shortest path from the top-left start block to the
/// absorbing goal in the bottom-right corner; every step slips to a uniformly
/// random direction with probability 0.1.
pub fn terrain_gridworld() -> Mdp {
    Grid {
        layout: &[
            "RRRGGMGG", //
            "GGRGMMWG", //
            "GWRRRMWG", //
            "GWWMRGGG", //
            "MMWMRRRG", //
            "GGMWWMRG", //
            "GMMGWWRR", //
            "GGGMGWR*",
        ],
        legend: &[('R', 0), ('G', 1), ('M', 2), ('W', 3), ('*', 4)],
        absorbing: &['*'],
        start: &[(0, 0), (0, 1), (1, 0), (1, 1)],
        weights: vec![0.0, -0.1, -0.3, -0.6, 1.0],
        slip: 0.1,
        discount: 0.95,
        horizon: 40,
    }
    .build()
}

/// 5×5 lava world. Features: floor, lava, goal.
///
/// Floor costs a little every step, so idling against the left wall (what a
/// constant reward with lowest-index tie breaking does) is safe but poor.
pub fn lava_gridworld() -> Mdp {
    Grid {
        layout: &[
            "..L.*", //
            "..L..", //
            "..L..", //
            "....L", //
            "....L",
        ],
        legend: &[('.', 0), ('L', 1), ('*', 2)],
        absorbing: &['*'],
        start: &[(4, 0)],
        weights: vec![-0.1, -1.0, 1.0],
        slip: 0.05,
        discount: 0.95,
        horizon: 30,
    }
    .build()
}

/// Action labels of the counterexample MDP.
pub const PROP1_A: usize = 0;
pub const PROP1_B: usize = 1;
pub const PROP1_C: usize = 2;

/// Four-state, three-action deterministic MDP: from `s₀`, action `a` enters
/// `s₁` (reward 1), `b` enters `s₂` (reward 0), `c` enters `s₃` (reward −δ).
/// `s₁..s₃` are absorbing. Features are state indicators.
pub fn prop1_mdp(delta: f64) -> Mdp {
    let ns = 4;
    let na = 3;
    let mut t = vec![0.0; ns * na * ns];
    for a in 0..na {
        t[a * ns + 1 + a] = 1.0;
    }
    for s in 1..ns {
        for a in 0..na {
            t[(s * na + a) * ns + s] = 1.0;
        }
    }
    let features = (0..ns)
        .map(|s| {
            let mut e = vec![0.0; ns];
            e[s] = 1.0;
            e
        })
        .collect();
    Mdp::new(
        ns,
        na,
        t,
        features,
        vec![0.0, 1.0, 0.0, -delta],
        0.9,
        Some(5),
        vec![1.0, 0.0, 0.0, 0.0],
    )
    .expect("counterexample MDP is valid")
}

/// Random tabular MDP: Dirichlet(1) transition rows, features uniform in
/// [-1, 1], random true weights, random initial distribution.
pub fn random_mdp(
    rng: &mut Rng,
    n_states: usize,
    n_actions: usize,
    dim: usize,
    discount: f64,
) -> Mdp {
    let simplex = |n: usize, rng: &mut Rng| -> Vec<f64> {
        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    };
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut row = simplex(n_states, rng);
        // renormalise so the row sums to 1 to rounding
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= z);
        transitions.extend(row);
    }
    let features = (0..n_states)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let weights = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let init = simplex(n_states, rng);
    Mdp::new(
        n_states,
        n_actions,
        transitions,
        features,
        weights,
        discount,
        None,
        init,
    )
    .expect("random MDP is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        for name in BUILTIN_NAMES {
            let m = builtin(name).unwrap();
            assert!(m.horizon().is_some());
            let l1: f64 = m.true_weights().iter().map(|w| w.abs()).sum();
            assert!(l1 <= 1.0 + 1e-12);
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn terrain_shape() {
        let m = terrain_gridworld();
        assert_eq!((m.n_states(), m.n_actions(), m.feature_dim()), (64, 4, 5));
        // goal is absorbing
        for a in 0..4 {
            assert_eq!(m.transition(63, a)[63], 1.0);
        }
        // intended move keeps 0.9 + 0.1/4
        assert!((m.transition(0, RIGHT)[1] - 0.925).abs() < 1e-12);
        assert!((m.transition(0, UP)[0] - (0.9 + 0.05)).abs() < 1e-12);
    }

    #[test]
    fn prop1_dynamics() {
        let m = prop1_mdp(10.0);
        assert_eq!(m.transition(0, PROP1_A)[1], 1.0);
        assert_eq!(m.transition(0, PROP1_B)[2], 1.0);
        assert_eq!(m.transition(0, PROP1_C)[3], 1.0);
        let r = m.true_reward();
        assert!(r[1] > r[2] && r[2] > r[3]);
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn random_mdp_is_valid() {
        let mut rng = crate::rng::rng_from(5, &[]);
        let m = random_mdp(&mut rng, 6, 3, 4, 0.8);
        assert_eq!(m.n_states(), 6);
        assert_eq!(m.feature_dim(), 4);
    }
}
