use serde::{Deserialize, Serialize};

/// Overlaps thinner than this count as touching.
pub(crate) const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn around(x: f64, y: f64, half: [f64; 2]) -> Self {
        Self { min: [x - half[0], y - half[1]], max: [x + half[0], y + half[1]] }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    /// Interior overlap; boxes that merely touch do not overlap.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..2).all(|k| self.min[k] < other.max[k] - CONTACT_EPS && other.min[k] < self.max[k] - CONTACT_EPS)
    }

    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn strictly_contains_point(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] > self.min[k] && p[k] < self.max[k])
    }

    /// Euclidean distance from a point to the box (0 inside).
    pub fn distance_to_point(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(0.0).max(p[0] - self.max[0]);
        let dy = (self.min[1] - p[1]).max(0.0).max(p[1] - self.max[1]);
        dx.hypot(dy)
    }

    /// Slab test. Returns entry distance and the outward normal of the entry
    /// face for a ray starting outside the box.
    pub fn ray_entry(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        let mut normal = [0.0, 0.0];
        for k in 0..2 {
            if dir[k] == 0.0 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let (t0, t1) = {
                let a = (self.min[k] - origin[k]) * inv;
                let b = (self.max[k] - origin[k]) * inv;
                if a <= b { (a, b) } else { (b, a) }
            };
            // ties between axes keep the earlier (x) face
            if t0 > t_enter {
                t_enter = t0;
                normal = [0.0, 0.0];
                normal[k] = if dir[k] > 0.0 { -1.0 } else { 1.0 };
            }
            t_exit = t_exit.min(t1);
        }
        if t_enter > t_exit || t_exit < 0.0 || t_enter < 0.0 || !t_enter.is_finite() {
            return None;
        }
        Some((t_enter, normal))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = Aabb::around(0.0, 0.0, [0.5, 0.5]);
        let b = Aabb::around(1.0, 0.0, [0.5, 0.5]);
        assert!(!a.overlaps(&b));
        let c = Aabb::around(0.9, 0.0, [0.5, 0.5]);
        assert!(a.overlaps(&c));
    }

    #[test]
    fn ray_hits_near_face() {
        let b = Aabb::around(5.0, 0.0, [1.0, 1.0]);
        let (t, n) = b.ray_entry([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(t, 4.0);
        assert_eq!(n, [-1.0, 0.0]);
        assert!(b.ray_entry([0.0, 0.0], [-1.0, 0.0]).is_none());
        assert!(b.ray_entry([0.0, 5.0], [1.0, 0.0]).is_none());
    }

    #[test]
    fn point_distance() {
        let b = Aabb::around(0.0, 0.0, [1.0, 1.0]);
        assert_eq!(b.distance_to_point([0.5, 0.5]), 0.0);
        assert_eq!(b.distance_to_point([4.0, 0.0]), 3.0);
        assert!((b.distance_to_point([4.0, 5.0]) - 5.0).abs() < 1e-12);
    }
}
