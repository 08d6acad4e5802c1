use serde::Serialize;

use super::{Entity, SceneError, SceneGraph};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayHit {
    pub depth: f64,
    pub label: String,
    pub normal: [f64; 2],
}

/// First-person range image. Rays that hit nothing report infinite depth,
/// no label and a zero normal (serialized as `null` depth).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthScan {
    pub n_rays: usize,
    pub fov: f64,
    pub angles: Vec<f64>,
    pub depths: Vec<f64>,
    pub labels: Vec<Option<String>>,
    pub normals: Vec<[f64; 2]>,
}

/// Nearest entity box along the ray; ties go to the smaller id.
pub fn cast_ray(
    scene: &SceneGraph,
    origin: [f64; 2],
    dir: [f64; 2],
    skip: impl Fn(&Entity) -> bool,
) -> Option<RayHit> {
    let mut best: Option<(f64, &str, [f64; 2])> = None;
    for e in scene.entities.values() {
        if skip(e) || e.is_open_door() {
            continue;
        }
        if let Some((t, n)) = e.aabb().ray_entry(origin, dir) {
            if best.is_none_or(|(bt, _, _)| t < bt) {
                best = Some((t, &e.id, n));
            }
        }
    }
    best.map(|(depth, label, normal)| RayHit { depth, label: label.to_owned(), normal })
}

/// Ray-cast a planar depth scan from a camera mounted at the agent's front
/// face. Ray `i` points at `yaw - fov/2 + i·fov/(n-1)`; a single ray looks
/// straight ahead.
pub fn render_first_person(scene: &SceneGraph, agent_id: &str, n_rays: usize, fov: f64) -> Result<DepthScan, SceneError> {
    let agent = scene.agent(agent_id)?;
    if n_rays == 0 {
        return Err(SceneError::InvalidSensor("n_rays must be at least 1".into()));
    }
    let fov_ok = if n_rays == 1 { (0.0..=std::f64::consts::TAU).contains(&fov) } else { fov > 0.0 && fov <= std::f64::consts::TAU };
    if !fov_ok {
        return Err(SceneError::InvalidSensor(format!("fov {fov} outside (0, 2π]")));
    }
    let pose = agent.pose;
    let [hx, hy] = pose.heading();
    let origin = [pose.x + agent.half_extents[0] * hx, pose.y + agent.half_extents[0] * hy];
    let skip = |e: &Entity| e.id == agent_id || e.attached_to.as_deref() == Some(agent_id);

    let mut scan = DepthScan {
        n_rays,
        fov,
        angles: Vec::with_capacity(n_rays),
        depths: Vec::with_capacity(n_rays),
        labels: Vec::with_capacity(n_rays),
        normals: Vec::with_capacity(n_rays),
    };
    for i in 0..n_rays {
        let angle = if n_rays == 1 { pose.yaw } else { pose.yaw - fov / 2.0 + i as f64 * fov / (n_rays - 1) as f64 };
        let (s, c) = angle.sin_cos();
        let hit = cast_ray(scene, origin, [c, s], skip);
        scan.angles.push(angle);
        match hit {
            Some(h) => {
                scan.depths.push(h.depth);
                scan.labels.push(Some(h.label));
                scan.normals.push(h.normal);
            }
            None => {
                scan.depths.push(f64::INFINITY);
                scan.labels.push(None);
                scan.normals.push([0.0, 0.0]);
            }
        }
    }
    Ok(scan)
}
