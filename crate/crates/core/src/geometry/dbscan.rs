use std::collections::VecDeque;

use super::{KdTree, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbscanLabel {
    Noise,
    Cluster(usize),
}

/// Standard DBSCAN. A point is core when its closed `eps`-ball holds at least
/// `min_pts` points (itself included). Clusters are numbered in the order of
/// their lowest-index core point; a border point reachable from several
/// clusters joins the lowest-numbered one.
pub fn dbscan_labels(cloud: &PointCloud, eps: f64, min_pts: usize) -> Vec<DbscanLabel> {
    let n = cloud.len();
    let tree = KdTree::build(&cloud.points);
    let neighbors: Vec<Vec<usize>> = cloud.points.iter().map(|p| tree.within_radius(p, eps)).collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts.max(1)).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next_id = 0;
    for seed in 0..n {
        if !is_core[seed] || labels[seed].is_some() {
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[seed] = Some(id);
        let mut queue = VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(id);
                    if is_core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    labels
        .into_iter()
        .map(|l| l.map_or(DbscanLabel::Noise, DbscanLabel::Cluster))
        .collect()
}

/// Points of the largest DBSCAN cluster in input order; empty when every
/// point is noise. Ties go to the lowest cluster id.
pub fn dbscan_largest_cluster(cloud: &PointCloud, eps: f64, min_pts: usize) -> PointCloud {
    let labels = dbscan_labels(cloud, eps, min_pts);
    let mut sizes: Vec<usize> = Vec::new();
    for l in &labels {
        if let DbscanLabel::Cluster(id) = *l {
            if sizes.len() <= id {
                sizes.resize(id + 1, 0);
            }
            sizes[id] += 1;
        }
    }
    let best = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (id, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((id, s)),
        })
        .map(|(id, _)| id);
    let keep: Vec<usize> = match best {
        Some(b) => (0..cloud.len()).filter(|&i| labels[i] == DbscanLabel::Cluster(b)).collect(),
        None => Vec::new(),
    };
    PointCloud {
        points: keep.iter().map(|&i| cloud.points[i]).collect(),
        normals: cloud.normals.as_ref().map(|ns| keep.iter().map(|&i| ns[i]).collect()),
        degenerate: cloud.degenerate.as_ref().map(|ds| keep.iter().map(|&i| ds[i]).collect()),
        frame: cloud.frame.clone(),
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Vec3, CAMERA_FRAME};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut ChaCha8Rng, center: Vec3, n: usize, spread: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| center + Vec3::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread), rng.random_range(-spread..spread)))
            .collect()
    }

    #[test]
    fn single_blob_returned_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = blob(&mut rng, Vec3::zeros(), 500, 0.02);
        let out = dbscan_largest_cluster(&PointCloud::new(pts.clone(), CAMERA_FRAME), 0.10, 50);
        assert_eq!(out.points, pts);
    }

    #[test]
    fn larger_of_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = blob(&mut rng, Vec3::zeros(), 300, 0.05);
        let b = blob(&mut rng, Vec3::new(1.0, 0.0, 0.0), 100, 0.05);
        let mut pts = b.clone();
        pts.extend(a.iter().copied());
        let out = dbscan_largest_cluster(&PointCloud::new(pts.clone(), CAMERA_FRAME), 0.1, 50);
        assert_eq!(out.points, a);
        assert_eq!(oracle::largest(&pts, 0.1, 50), a);
    }

    #[test]
    fn all_noise_gives_empty() {
        let pts: Vec<Vec3> = (0..40).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(dbscan_largest_cluster(&PointCloud::new(pts, CAMERA_FRAME), 0.1, 50).is_empty());
    }

    #[test]
    fn tie_goes_to_first_cluster() {
        let mut pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        pts.extend((0..5).map(|i| Vec3::new(5.0 + i as f64 * 0.01, 0.0, 0.0)));
        let out = dbscan_largest_cluster(&PointCloud::new(pts.clone(), CAMERA_FRAME), 0.05, 3);
        assert_eq!(out.points, pts[..5].to_vec());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn labels_match_brute_force(
            seed in any::<u64>(),
            n in 1usize..300,
            eps in 0.02f64..0.3,
            min_pts in 1usize..12,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..0.2))).collect();
            let labels = dbscan_labels(&PointCloud::new(pts.clone(), CAMERA_FRAME), eps, min_pts);
            let expected = oracle::brute_force_labels(&pts, eps, min_pts);
            let got: Vec<Option<usize>> = labels.iter().map(|l| match l { DbscanLabel::Cluster(c) => Some(*c), DbscanLabel::Noise => None }).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
