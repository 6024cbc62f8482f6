use std::collections::BTreeMap;

use super::{GeometryError, PointCloud, Vec3};

/// Replaces the points of every occupied cell of an origin-anchored grid
/// (cell size `leaf`) by their centroid. Normals, when present, are averaged
/// and renormalized. Output is ordered by cell index.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud, GeometryError> {
    if !(leaf > 0.0) || !leaf.is_finite() {
        return Err(GeometryError::Parameter(format!("voxel leaf must be positive, got {leaf}")));
    }
    struct Cell {
        sum: Vec3,
        normal_sum: Vec3,
        count: usize,
    }
    let mut cells: BTreeMap<[i64; 3], Cell> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = voxel_key(p, leaf);
        let cell = cells.entry(key).or_insert(Cell { sum: Vec3::zeros(), normal_sum: Vec3::zeros(), count: 0 });
        cell.sum += p;
        cell.count += 1;
        if let Some(ns) = &cloud.normals {
            cell.normal_sum += ns[i];
        }
    }
    let points = cells.values().map(|c| c.sum / c.count as f64).collect();
    let normals = cloud.normals.as_ref().map(|_| {
        cells
            .values()
            .map(|c| c.normal_sum.try_normalize(1e-12).unwrap_or_else(Vec3::z))
            .collect()
    });
    Ok(PointCloud { points, normals, degenerate: None, frame: cloud.frame.clone() })
}

pub(crate) fn voxel_key(p: &Vec3, leaf: f64) -> [i64; 3] {
    [(p.x / leaf).floor() as i64, (p.y / leaf).floor() as i64, (p.z / leaf).floor() as i64]
}
