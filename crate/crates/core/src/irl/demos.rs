use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{IrlError, SoftPolicy};
use crate::envs::{GridAction, GridMDP};
use crate::scene::{Cell, OccupancyGrid};

/// One demonstration as `(state, action)` pairs over a shared `GridMDP`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoLine {
    pub traj: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Demonstrations {
    pub trajs: Vec<Vec<(usize, usize)>>,
}

impl Demonstrations {
    pub fn new(trajs: Vec<Vec<(usize, usize)>>) -> Self {
        Self { trajs }
    }

    pub fn len(&self) -> usize {
        self.trajs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajs.iter().all(Vec::is_empty)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.trajs.iter().flatten().copied()
    }

    pub fn validate(&self, mdp: &GridMDP) -> Result<(), IrlError> {
        for (i, t) in self.trajs.iter().enumerate() {
            for &(s, a) in t {
                if s >= mdp.n_states() || a >= mdp.n_actions() {
                    return Err(IrlError::InvalidDemo { traj: i, state: s, action: a });
                }
            }
        }
        Ok(())
    }

    /// Distinct states that appear in any demonstration, ascending.
    pub fn visited_states(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs().map(|(s, _)| s).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Empirical distribution of first states.
    pub fn start_distribution(&self, n_states: usize) -> Vec<f64> {
        let mut p = vec![0.0; n_states];
        let starts: Vec<usize> = self.trajs.iter().filter_map(|t| t.first().map(|p| p.0)).collect();
        for &s in &starts {
            p[s] += 1.0 / starts.len() as f64;
        }
        p
    }

    /// Average discounted feature sum `Σ_t γ^t φ(s_t)` over the listed states.
    pub fn feature_expectations(&self, mdp: &GridMDP, discount: f64) -> Vec<f64> {
        let mut mu = vec![0.0; mdp.feature_dim()];
        let n = self.trajs.iter().filter(|t| !t.is_empty()).count().max(1) as f64;
        for t in &self.trajs {
            let mut w = 1.0;
            for &(s, _) in t {
                for (m, f) in mu.iter_mut().zip(&mdp.features[s]) {
                    *m += w * f / n;
                }
                w *= discount;
            }
        }
        mu
    }

    /// Undiscounted state counts over exactly `horizon` steps, averaged over
    /// trajectories. Short trajectories are padded with their final
    /// successor, which is how terminal states hold visitation mass; longer
    /// ones are cut.
    pub fn padded_state_counts(&self, mdp: &GridMDP, horizon: usize) -> Vec<f64> {
        let mut counts = vec![0.0; mdp.n_states()];
        let trajs: Vec<_> = self.trajs.iter().filter(|t| !t.is_empty()).collect();
        let w = 1.0 / trajs.len().max(1) as f64;
        for t in trajs {
            for &(s, _) in t.iter().take(horizon) {
                counts[s] += w;
            }
            if t.len() < horizon {
                let &(s, a) = t.last().expect("non-empty");
                counts[mdp.step(s, a)] += w * (horizon - t.len()) as f64;
            }
        }
        counts
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.trajs {
            out.push_str(&serde_json::to_string(&DemoLine { traj: t.clone() }).expect("plain data"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, IrlError> {
        let mut trajs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| IrlError::Parse { line: i + 1, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let d: DemoLine =
                serde_json::from_str(&line).map_err(|e| IrlError::Parse { line: i + 1, message: e.to_string() })?;
            trajs.push(d.traj);
        }
        Ok(Self { trajs })
    }
}

/// Roll out `policy` from `start` for up to `len` steps, stopping after a
/// terminal state is entered.
pub fn sample_trajectory(mdp: &GridMDP, policy: &SoftPolicy, start: usize, len: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut s = start;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        if mdp.terminal[s] {
            break;
        }
        let u: f64 = rng.random();
        let row = policy.row(s);
        let mut acc = 0.0;
        let mut a = row.len() - 1;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                a = i;
                break;
            }
        }
        out.push((s, a));
        s = mdp.step(s, a);
    }
    out
}

/// Turn a footprint (positions over time) into a demonstration: positions
/// snap to grid cells, repeats collapse, and each cell change becomes one or
/// more moves. A move that matches the displacement exactly is used when the
/// MDP has it; otherwise the cardinal move along the axis with the larger
/// displacement (x on equal magnitude). Gaps that cannot be walked start a
/// new trajectory. With `grasp_at_end` a grasp closes the last trajectory.
pub fn demos_from_footprint(mdp: &GridMDP, grid: &OccupancyGrid, footprint: &[[f64; 2]], grasp_at_end: bool) -> Demonstrations {
    let state_of = |c: Cell| mdp.state_of(c, false);
    let mut cells: Vec<usize> = Vec::new();
    for p in footprint {
        if let Some(s) = grid.cell_at(*p).and_then(state_of) {
            if cells.last() != Some(&s) {
                cells.push(s);
            }
        }
    }
    let mut trajs = Vec::new();
    let mut cur: Vec<(usize, usize)> = Vec::new();
    let Some(&first) = cells.first() else {
        return Demonstrations::default();
    };
    let mut s = first;
    for &target in &cells[1..] {
        while s != target {
            let Some(a) = move_toward(mdp, s, target) else { break };
            cur.push((s, a));
            s = mdp.step(s, a);
        }
        if s != target {
            if !cur.is_empty() {
                trajs.push(std::mem::take(&mut cur));
            }
            s = target;
        }
    }
    if grasp_at_end {
        if let Some(g) = mdp.action_index(GridAction::Grasp) {
            cur.push((s, g));
        }
    }
    if !cur.is_empty() {
        trajs.push(cur);
    }
    Demonstrations { trajs }
}

fn move_toward(mdp: &GridMDP, s: usize, target: usize) -> Option<usize> {
    let (x, y) = mdp.cells[s];
    let (tx, ty) = mdp.cells[target];
    let (dx, dy) = (tx as i64 - x as i64, ty as i64 - y as i64);
    let exact = mdp.actions.iter().position(|a| *a != GridAction::Grasp && a.delta() == (dx, dy));
    let along_x = (dx.signum(), 0);
    let along_y = (0, dy.signum());
    let (first, second) = if dx.abs() >= dy.abs() { (along_x, along_y) } else { (along_y, along_x) };
    let by_delta = |d: (i64, i64)| {
        if d == (0, 0) {
            return None;
        }
        mdp.actions.iter().position(|a| *a != GridAction::Grasp && a.delta() == d)
    };
    [exact, by_delta(first), by_delta(second)].into_iter().flatten().find(|&a| mdp.step(s, a) != s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{load_scene, occupancy_grid};

    #[test]
    fn jsonl_round_trip() {
        let d = Demonstrations::new(vec![vec![(0, 1), (3, 2)], vec![(5, 0)]]);
        let text = d.to_jsonl();
        assert_eq!(text.lines().next(), Some(r#"{"traj":[[0,1],[3,2]]}"#));
        assert_eq!(Demonstrations::from_jsonl(text.as_bytes()).unwrap(), d);
    }

    #[test]
    fn invalid_pairs_rejected() {
        let m = GridMDP::open(2, 2, &GridAction::CARDINAL, 0.9).unwrap();
        assert!(Demonstrations::new(vec![vec![(0, 4)]]).validate(&m).is_err());
        assert!(Demonstrations::new(vec![vec![(4, 0)]]).validate(&m).is_err());
        assert!(Demonstrations::new(vec![vec![(3, 3)]]).validate(&m).is_ok());
    }

    #[test]
    fn discounted_feature_expectations() {
        let m = GridMDP::open(2, 1, &[GridAction::E, GridAction::W], 0.9).unwrap();
        let d = Demonstrations::new(vec![vec![(0, 0), (1, 0)], vec![(1, 1)]]);
        let mu = d.feature_expectations(&m, 0.5);
        assert_eq!(mu, vec![0.5, 0.75]);
    }

    #[test]
    fn footprint_snaps_and_infers_moves() {
        let scene = load_scene("#######\n#.....#\n#.....#\n#######").unwrap();
        let grid = occupancy_grid(&scene, 1.0);
        let m = GridMDP::from_grid(&grid, &GridAction::CARDINAL, 0.9).unwrap();
        let c = |x: usize, y: usize| grid.cell_center((x, y));
        // jumps two columns and one row at once: x has the larger displacement
        let fp = [c(1, 1), c(1, 1), c(3, 2), c(3, 2), c(4, 2)];
        let d = demos_from_footprint(&m, &grid, &fp, false);
        assert_eq!(d.len(), 1);
        let cells: Vec<(Cell, GridAction)> = d.trajs[0].iter().map(|&(s, a)| (m.cells[s], m.actions[a])).collect();
        assert_eq!(
            cells,
            vec![((1, 1), GridAction::E), ((2, 1), GridAction::E), ((3, 1), GridAction::N), ((3, 2), GridAction::E)]
        );
    }
}
