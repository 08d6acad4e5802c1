use serde::{Deserialize, Serialize};

use super::{Aabb, SceneGraph};

/// Grid cell index `(ix, iy)`; `ix` grows with x, `iy` with y.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub origin: [f64; 2],
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major by `iy * width + ix`; `true` means blocked.
    pub blocked: Vec<bool>,
}

impl OccupancyGrid {
    pub fn index(&self, (ix, iy): Cell) -> usize {
        iy * self.width + ix
    }

    pub fn cell_of_index(&self, i: usize) -> Cell {
        (i % self.width, i / self.width)
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.blocked[self.index(c)]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        !self.is_blocked(c)
    }

    pub fn cell_box(&self, (ix, iy): Cell) -> Aabb {
        let r = self.resolution;
        let min = [self.origin[0] + ix as f64 * r, self.origin[1] + iy as f64 * r];
        Aabb { min, max: [min[0] + r, min[1] + r] }
    }

    pub fn cell_center(&self, (ix, iy): Cell) -> [f64; 2] {
        let r = self.resolution;
        [self.origin[0] + (ix as f64 + 0.5) * r, self.origin[1] + (iy as f64 + 0.5) * r]
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_at(&self, p: [f64; 2]) -> Option<Cell> {
        let fx = ((p[0] - self.origin[0]) / self.resolution).floor();
        let fy = ((p[1] - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.width && iy < self.height).then_some((ix, iy))
    }

    pub fn free_count(&self) -> usize {
        self.blocked.iter().filter(|b| !**b).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |iy| (0..self.width).map(move |ix| (ix, iy)))
    }
}

/// Rasterize walls and closed doors over the scene's bounding box.
pub fn occupancy_grid(scene: &SceneGraph, resolution: f64) -> OccupancyGrid {
    match scene.bounds() {
        Some(b) => occupancy_grid_in(scene, resolution, b),
        None => OccupancyGrid { origin: [0.0, 0.0], resolution, width: 0, height: 0, blocked: Vec::new() },
    }
}

/// Rasterize over explicit bounds. A cell is blocked iff its interior
/// overlaps a wall or closed-door box.
pub fn occupancy_grid_in(scene: &SceneGraph, resolution: f64, bounds: Aabb) -> OccupancyGrid {
    assert!(resolution > 0.0, "resolution must be positive");
    let span = |k: usize| (((bounds.max[k] - bounds.min[k]) / resolution) - 1e-9).ceil().max(0.0) as usize;
    let mut grid = OccupancyGrid {
        origin: bounds.min,
        resolution,
        width: span(0),
        height: span(1),
        blocked: Vec::new(),
    };
    grid.blocked = vec![false; grid.width * grid.height];
    for e in scene.entities.values().filter(|e| e.is_static_blocker()) {
        let b = e.aabb();
        let lo = |k: usize| (((b.min[k] - grid.origin[k]) / resolution).floor().max(0.0)) as usize;
        let hi = |k: usize, n: usize| ((((b.max[k] - grid.origin[k]) / resolution).ceil()) as usize).min(n);
        for iy in lo(1)..hi(1, grid.height) {
            for ix in lo(0)..hi(0, grid.width) {
                if grid.cell_box((ix, iy)).overlaps(&b) {
                    let i = grid.index((ix, iy));
                    grid.blocked[i] = true;
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{interact, load_scene, ActionRequest, Verb};

    #[test]
    fn ring_map_has_one_free_cell() {
        let s = load_scene("###\n#.#\n###").unwrap();
        let g = occupancy_grid(&s, 1.0);
        assert_eq!((g.width, g.height), (3, 3));
        assert_eq!(g.blocked.iter().filter(|b| **b).count(), 8);
        assert!(g.is_free((1, 1)));
    }

    #[test]
    fn empty_scene_all_free() {
        let s = load_scene(r#"{"entities":[]}"#).unwrap();
        for r in [0.1, 1.0, 3.0] {
            assert!(occupancy_grid(&s, r).blocked.iter().all(|b| !b));
        }
        let g = occupancy_grid_in(&s, 0.5, Aabb { min: [0.0, 0.0], max: [2.0, 2.0] });
        assert_eq!(g.free_count(), 16);
    }

    #[test]
    fn open_door_frees_exactly_its_cells() {
        let s = load_scene("#####\n#AD.#\n#####").unwrap();
        let closed = occupancy_grid(&s, 0.5);
        let (open, _) = interact(&s, &ActionRequest::new("agent1", Verb::PushDoor, Some("door1"))).unwrap();
        let opened = occupancy_grid(&open, 0.5);
        let door_box = s.get("door1").unwrap().aabb();
        for c in closed.cells() {
            let differs = closed.is_blocked(c) != opened.is_blocked(c);
            assert_eq!(differs, closed.cell_box(c).overlaps(&door_box), "{c:?}");
        }
    }

    #[test]
    fn point_lookup() {
        let s = load_scene("###\n#.#\n###").unwrap();
        let g = occupancy_grid(&s, 1.0);
        assert_eq!(g.cell_at([1.5, 1.5]), Some((1, 1)));
        assert_eq!(g.cell_at([-0.1, 1.5]), None);
        assert_eq!(g.cell_at([3.5, 1.5]), None);
        assert_eq!(g.cell_center((2, 0)), [2.5, 0.5]);
    }
}
