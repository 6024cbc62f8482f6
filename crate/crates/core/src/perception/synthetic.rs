//! Seeded fixture clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{PointCloud, Vec3, CAMERA_FRAME};

/// Noisy samples of an axis-aligned cube surface followed by uniform clutter.
///
/// Inliers come first: a face is picked uniformly, a point uniformly on it,
/// then isotropic Gaussian noise of `sigma` is added. Outliers are uniform in
/// a box 0.6 m beyond the cube and at least 0.15 m outside it.
pub fn noisy_cube_cloud(center: Vec3, side: f64, sigma: f64, inliers: usize, outliers: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let h = side / 2.0;
    let mut points = Vec::with_capacity(inliers + outliers);
    for _ in 0..inliers {
        let axis = rng.random_range(0..3usize);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut p = Vec3::new(rng.random_range(-h..h), rng.random_range(-h..h), rng.random_range(-h..h));
        p[axis] = sign * h;
        points.push(center + p + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)));
    }
    let reach = h + 0.6;
    while points.len() < inliers + outliers {
        let p = Vec3::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach), rng.random_range(-reach..reach));
        if p.abs().max() > h + 0.15 {
            points.push(center + p);
        }
    }
    PointCloud::new(points, CAMERA_FRAME)
}
