use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::scene::{Cell, OccupancyGrid};

/// 8-connected moves; a diagonal needs both orthogonal neighbours free.
pub fn neighbours(grid: &OccupancyGrid, (x, y): Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
    const STEPS: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    let free = move |x: i64, y: i64| grid.in_bounds(x, y) && grid.is_free((x as usize, y as usize));
    STEPS.iter().filter_map(move |&(dx, dy)| {
        let (tx, ty) = (x as i64 + dx, y as i64 + dy);
        if !free(tx, ty) {
            return None;
        }
        if dx != 0 && dy != 0 {
            if !(free(x as i64 + dx, y as i64) && free(x as i64, y as i64 + dy)) {
                return None;
            }
            return Some(((tx as usize, ty as usize), SQRT_2));
        }
        Some(((tx as usize, ty as usize), 1.0))
    })
}

/// Octile distance in cells.
pub fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    dx.max(dy) - dx.min(dy) + SQRT_2 * dx.min(dy)
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    cell: Cell,
}

impl Eq for Open {}

impl Ord for Open {
    // min-heap on f, then on the cell
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest 8-connected path with unit/√2 step costs, in cells. Unreachable
/// or blocked endpoints give `(∞, [])`.
pub fn a_star(grid: &OccupancyGrid, from: Cell, to: Cell) -> (f64, Vec<Cell>) {
    let inside = |c: Cell| c.0 < grid.width && c.1 < grid.height && grid.is_free(c);
    if !inside(from) || !inside(to) {
        return (f64::INFINITY, Vec::new());
    }
    let n = grid.width * grid.height;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[grid.index(from)] = 0.0;
    open.push(Open { f: octile(from, to), cell: from });
    while let Some(Open { cell, .. }) = open.pop() {
        let i = grid.index(cell);
        if closed[i] {
            continue;
        }
        closed[i] = true;
        if cell == to {
            let mut path = vec![to];
            let mut j = i;
            while parent[j] != usize::MAX {
                j = parent[j];
                path.push(grid.cell_of_index(j));
            }
            path.reverse();
            return (g[i], path);
        }
        for (next, step) in neighbours(grid, cell) {
            let k = grid.index(next);
            let cand = g[i] + step;
            if !closed[k] && cand < g[k] {
                g[k] = cand;
                parent[k] = i;
                open.push(Open { f: cand + octile(next, to), cell: next });
            }
        }
    }
    (f64::INFINITY, Vec::new())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn open_grid(w: usize, h: usize) -> OccupancyGrid {
        OccupancyGrid { origin: [0.0, 0.0], resolution: 1.0, width: w, height: h, blocked: vec![false; w * h] }
    }

    /// Plain Dijkstra over the same neighbourhood.
    fn dijkstra(grid: &OccupancyGrid, from: Cell, to: Cell) -> f64 {
        if grid.is_blocked(from) || grid.is_blocked(to) {
            return f64::INFINITY;
        }
        let n = grid.width * grid.height;
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[grid.index(from)] = 0.0;
        loop {
            let Some(i) = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else {
                return f64::INFINITY;
            };
            done[i] = true;
            let c = grid.cell_of_index(i);
            if c == to {
                return dist[i];
            }
            for (m, w) in neighbours(grid, c) {
                let k = grid.index(m);
                dist[k] = dist[k].min(dist[i] + w);
            }
        }
    }

    #[test]
    fn same_cell_costs_nothing() {
        assert_eq!(a_star(&open_grid(3, 3), (1, 1), (1, 1)), (0.0, vec![(1, 1)]));
    }

    #[test]
    fn open_corner_to_corner_is_diagonal() {
        let (c, path) = a_star(&open_grid(5, 5), (0, 0), (4, 4));
        assert!((c - 4.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(path.len(), 5);
    }

    #[test]
    fn walled_target_unreachable() {
        let mut g = open_grid(5, 5);
        for c in [(3, 3), (3, 4), (4, 3)] {
            let i = g.index(c);
            g.blocked[i] = true;
        }
        assert_eq!(a_star(&g, (0, 0), (4, 4)).0, f64::INFINITY);
    }

    #[test]
    fn no_corner_cutting() {
        let mut g = open_grid(2, 2);
        let i = g.index((1, 0));
        g.blocked[i] = true;
        let (c, _) = a_star(&g, (0, 0), (1, 1));
        assert_eq!(c, 2.0);
    }

    #[test]
    fn matches_dijkstra_on_random_grids() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (w, h) = (rng.random_range(2..12), rng.random_range(2..12));
            let mut g = open_grid(w, h);
            for b in g.blocked.iter_mut() {
                *b = rng.random_bool(0.3);
            }
            let from = (rng.random_range(0..w), rng.random_range(0..h));
            let to = (rng.random_range(0..w), rng.random_range(0..h));
            let (a, path) = a_star(&g, from, to);
            let d = dijkstra(&g, from, to);
            assert!(a == d || (a - d).abs() < 1e-9, "{a} vs {d}");
            if a.is_finite() {
                let walked: f64 = path.windows(2).map(|p| octile(p[0], p[1])).sum();
                assert!((walked - a).abs() < 1e-9);
            }
        }
    }
}
