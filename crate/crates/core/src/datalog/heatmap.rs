use serde::{Deserialize, Serialize};

use super::{GraspContactEvent, LogError};

pub const PATCH_FACES: usize = 4;
pub const PATCH_U: usize = 8;
pub const PATCH_V: usize = 8;

/// Contact patch on one of an object's four side faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Patch {
    pub face: usize,
    pub u: usize,
    pub v: usize,
}

/// Grasp-contact frequency per patch. Export form:
/// `{"object":id,"dims":[4,8,8],"counts":[...]}` plus `normalized` when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    #[serde(rename = "object")]
    pub object_id: String,
    pub dims: [usize; 3],
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Vec<f64>>,
}

impl HeatMap {
    pub fn zeros(object_id: impl Into<String>, dims: [usize; 3]) -> Self {
        Self { object_id: object_id.into(), dims, counts: vec![0; dims.iter().product()], normalized: None }
    }

    pub fn index(&self, p: Patch) -> Option<usize> {
        let [f, nu, nv] = self.dims;
        (p.face < f && p.u < nu && p.v < nv).then(|| (p.face * nu + p.u) * nv + p.v)
    }

    pub fn count(&self, p: Patch) -> Option<u64> {
        self.index(p).map(|i| self.counts[i])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `counts / max(counts)`, or all zeros for an empty map.
    pub fn normalize(&self) -> Vec<f64> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / max as f64).collect()
    }

    pub fn with_normalized(mut self) -> Self {
        self.normalized = Some(self.normalize());
        self
    }
}

pub fn heatmap_accumulate(events: &[GraspContactEvent], object_id: &str, dims: [usize; 3]) -> Result<HeatMap, LogError> {
    let mut map = HeatMap::zeros(object_id, dims);
    for e in events {
        if e.object_id != object_id {
            return Err(LogError::WrongObject { want: object_id.to_owned(), got: e.object_id.clone() });
        }
        let i = map.index(e.patch).ok_or(LogError::PatchOutOfRange { patch: e.patch, dims })?;
        map.counts[i] += 1;
    }
    Ok(map.with_normalized())
}

/// Normalize each subject's map to its own maximum, then take the per-patch
/// mean. The result's `counts` are the pooled raw counts.
pub fn heatmap_average(maps: &[HeatMap]) -> Result<HeatMap, LogError> {
    let first = maps.first().ok_or(LogError::EmptyList)?;
    if maps.iter().any(|m| m.dims != first.dims || m.object_id != first.object_id || m.counts.len() != first.counts.len()) {
        return Err(LogError::DimensionMismatch);
    }
    let n = first.counts.len();
    let mut mean = vec![0.0; n];
    let mut pooled = vec![0u64; n];
    for m in maps {
        for (i, v) in m.normalize().into_iter().enumerate() {
            mean[i] += v;
            pooled[i] += m.counts[i];
        }
    }
    let k = maps.len() as f64;
    mean.iter_mut().for_each(|v| *v /= k);
    Ok(HeatMap { object_id: first.object_id.clone(), dims: first.dims, counts: pooled, normalized: Some(mean) })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIMS: [usize; 3] = [PATCH_FACES, PATCH_U, PATCH_V];

    fn contact(p: Patch) -> GraspContactEvent {
        GraspContactEvent { tick: 0, agent_id: "a".into(), object_id: "mug".into(), patch: p }
    }

    fn map_with(p: Patch, count: u64) -> HeatMap {
        let events: Vec<_> = (0..count).map(|_| contact(p)).collect();
        heatmap_accumulate(&events, "mug", DIMS).unwrap()
    }

    #[test]
    fn accumulate_counts() {
        let empty = heatmap_accumulate(&[], "mug", DIMS).unwrap();
        assert_eq!(empty.counts.len(), 256);
        assert!(empty.counts.iter().all(|c| *c == 0));

        let p = Patch { face: 2, u: 3, v: 7 };
        let m = map_with(p, 5);
        assert_eq!(m.count(p), Some(5));
        assert_eq!(m.total(), 5);
    }

    #[test]
    fn accumulate_errors() {
        let bad = contact(Patch { face: 4, u: 0, v: 0 });
        assert!(matches!(heatmap_accumulate(&[bad], "mug", DIMS), Err(LogError::PatchOutOfRange { .. })));
        let mut other = contact(Patch { face: 0, u: 0, v: 0 });
        other.object_id = "bowl".into();
        assert!(matches!(heatmap_accumulate(&[other], "mug", DIMS), Err(LogError::WrongObject { .. })));
    }

    #[test]
    fn average_of_disjoint_peaks() {
        let p = Patch { face: 0, u: 1, v: 1 };
        let q = Patch { face: 3, u: 6, v: 2 };
        let avg = heatmap_average(&[map_with(p, 2), map_with(q, 4)]).unwrap();
        let norm = avg.normalized.as_ref().unwrap();
        assert_eq!(norm[avg.index(p).unwrap()], 0.5);
        assert_eq!(norm[avg.index(q).unwrap()], 0.5);
        assert_eq!(norm.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn average_identity_and_errors() {
        let p = Patch { face: 1, u: 0, v: 4 };
        let m = map_with(p, 3);
        assert_eq!(heatmap_average(&[m.clone()]).unwrap().normalized, Some(m.normalize()));
        assert_eq!(heatmap_average(&[m.clone(), m.clone()]).unwrap().normalized, Some(m.normalize()));
        assert!(matches!(heatmap_average(&[]), Err(LogError::EmptyList)));
        let other = HeatMap::zeros("mug", [4, 4, 4]);
        assert!(matches!(heatmap_average(&[m, other]), Err(LogError::DimensionMismatch)));
    }

    #[test]
    fn export_shape() {
        let m = HeatMap::zeros("mug", DIMS);
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["object"], "mug");
        assert_eq!(v["dims"], serde_json::json!([4, 8, 8]));
        assert_eq!(v["counts"].as_array().unwrap().len(), 256);
    }
}
