use super::Vec3;

/// Static 3-d tree over a borrowed point slice, for fixed-radius queries.
pub struct KdTree<'a> {
    points: &'a [Vec3],
    nodes: Vec<Node>,
    root: Option<usize>,
}

struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut tree = KdTree { points, nodes: Vec::with_capacity(points.len()), root: None };
        tree.root = tree.build_rec(&mut order, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let mid = idx.len() / 2;
        let pts = self.points;
        idx.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let point = idx[mid];
        let node = self.nodes.len();
        self.nodes.push(Node { point, axis, left: None, right: None });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(&mut hi[1..], depth + 1);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        Some(node)
    }

    /// Indices of all points within `radius` (inclusive) of `query`, ascending.
    pub fn within_radius(&self, query: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let p = &self.points[node.point];
            if (p - query).norm_squared() <= r2 {
                out.push(node.point);
            }
            let diff = query[node.axis] - p[node.axis];
            let (near, far) = if diff <= 0.0 { (node.left, node.right) } else { (node.right, node.left) };
            if let Some(c) = near {
                stack.push(c);
            }
            if diff.abs() <= radius {
                if let Some(c) = far {
                    stack.push(c);
                }
            }
        }
        out.sort_unstable();
        out
    }
}
