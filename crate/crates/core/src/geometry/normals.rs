use nalgebra::{Matrix3, SymmetricEigen};

use super::{GeometryError, KdTree, PointCloud, Vec3};

/// Point count above which a cloud counts as dense.
pub const DENSE_POINT_COUNT: usize = 110_000;
pub const DENSE_NORMAL_RADIUS: f64 = 0.10;
pub const SPARSE_NORMAL_RADIUS: f64 = 0.20;

/// Neighborhood radius for normal estimation; the sparse side of the
/// threshold is inclusive.
pub fn select_normal_radius(point_count: usize) -> f64 {
    if point_count > DENSE_POINT_COUNT {
        DENSE_NORMAL_RADIUS
    } else {
        SPARSE_NORMAL_RADIUS
    }
}

/// Plane-fit normals: the eigenvector of the smallest eigenvalue of the
/// neighborhood covariance, flipped to face the origin of the cloud's frame
/// (the sensor). Points with fewer than three neighbors (self included) get
/// `+z` and are flagged degenerate.
pub fn estimate_normals(cloud: &PointCloud, radius: f64) -> Result<PointCloud, GeometryError> {
    if !(radius > 0.0) {
        return Err(GeometryError::Parameter(format!("normal radius must be positive, got {radius}")));
    }
    if cloud.is_empty() {
        return Err(GeometryError::Parameter("cannot estimate normals of an empty cloud".into()));
    }
    let tree = KdTree::build(&cloud.points);
    let mut normals = Vec::with_capacity(cloud.len());
    let mut degenerate = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let nbrs = tree.within_radius(p, radius);
        if nbrs.len() < 3 {
            normals.push(Vec3::z());
            degenerate.push(true);
            continue;
        }
        let mean = nbrs.iter().map(|&i| cloud.points[i]).sum::<Vec3>() / nbrs.len() as f64;
        let mut cov = Matrix3::zeros();
        for &i in &nbrs {
            let d = cloud.points[i] - mean;
            cov += d * d.transpose();
        }
        cov /= nbrs.len() as f64;
        let eig = SymmetricEigen::new(cov);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("three eigenvalues");
        let mut n: Vec3 = eig.eigenvectors.column(imin).into_owned().normalize();
        if n.dot(&(-p)) < 0.0 {
            n = -n;
        }
        normals.push(n);
        degenerate.push(false);
    }
    Ok(PointCloud {
        points: cloud.points.clone(),
        normals: Some(normals),
        degenerate: Some(degenerate),
        frame: cloud.frame.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CAMERA_FRAME;

    #[test]
    fn radius_threshold() {
        assert_eq!(select_normal_radius(200_000), 0.10);
        assert_eq!(select_normal_radius(50_000), 0.20);
        assert_eq!(select_normal_radius(110_000), 0.20);
        assert_eq!(select_normal_radius(110_001), 0.10);
    }

    #[test]
    fn plane_normals_are_vertical() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(Vec3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0));
            }
        }
        let out = estimate_normals(&PointCloud::new(pts, CAMERA_FRAME), 0.03).unwrap();
        out.validate().unwrap();
        for n in out.normals.unwrap() {
            assert!((n.z.abs() - 1.0).abs() < 1e-9, "{n:?}");
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
        assert!(out.degenerate.unwrap().iter().all(|d| !d));
    }

    #[test]
    fn sphere_normals_are_radial() {
        // Fibonacci sphere, viewed from a sensor outside at the origin.
        let center = Vec3::new(0.0, 0.0, 3.0);
        let n = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                center + Vec3::new(r * th.cos(), y, r * th.sin())
            })
            .collect();
        let out = estimate_normals(&PointCloud::new(pts.clone(), CAMERA_FRAME), 0.15).unwrap();
        let max_angle = 5f64.to_radians();
        for (p, nrm) in pts.iter().zip(out.normals.unwrap()) {
            let radial = (p - center).normalize();
            let angle = nrm.dot(&radial).abs().min(1.0).acos();
            assert!(angle < max_angle, "angle {angle}");
            // Oriented toward the sensor at the origin.
            assert!(nrm.dot(&(-p)) >= 0.0);
        }
    }

    #[test]
    fn isolated_point_is_degenerate() {
        let out = estimate_normals(&PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0)], CAMERA_FRAME), 0.1).unwrap();
        assert_eq!(out.degenerate.unwrap(), vec![true]);
        assert_eq!(out.normals.unwrap(), vec![Vec3::z()]);
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(estimate_normals(&PointCloud::empty(CAMERA_FRAME), 0.1).is_err());
    }
}
