use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced 3D KD-tree with exact radius and k-nearest queries.
///
/// The tree stores a copy of the positions and is immutable once built.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl KdTree {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn from_cloud(cloud: &crate::pointcloud::PointCloud) -> Self {
        Self::new(cloud.positions())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64; 3] {
        &self.points[i]
    }

    /// Indices of all points with Euclidean distance strictly below `r`,
    /// ascending.
    pub fn radius_query(&self, center: &[f64; 3], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || r <= 0.0 {
            return out;
        }
        let r2 = r * r;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if dist2(&self.points[i], center) < r2 {
                            out.push(i);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = center[axis] - value;
                    if diff - r < 0.0 {
                        stack.push(left);
                    }
                    if diff + r >= 0.0 {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points as `(index, squared distance)`, ordered by
    /// distance then index. `skip` excludes one index (typically the query
    /// point itself).
    pub fn knn(&self, center: &[f64; 3], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(0, center, k, skip, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|c| (c.index, c.dist2)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn nearest(&self, center: &[f64; 3]) -> Option<(usize, f64)> {
        self.knn(center, 1, None).into_iter().next()
    }

    fn knn_visit(
        &self,
        id: usize,
        center: &[f64; 3],
        k: usize,
        skip: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let cand = Candidate {
                        dist2: dist2(&self.points[i], center),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = center[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_visit(near, center, k, skip, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |c| c.dist2)
                };
                if diff * diff <= worst {
                    self.knn_visit(far, center, k, skip, heap);
                }
            }
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Splits on the axis of largest spread at the median. Points with
/// coordinate `< value` go left, `>= value` right.
fn build(points: &[[f64; 3]], order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] <= 0.0 {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let mut value = points[order[mid]][axis];
    let mut split = partition(order, |&i| points[i][axis] < value);
    if split == 0 {
        // the median is the minimum: send the whole tie group left instead
        split = partition(order, |&i| points[i][axis] <= value);
        value = value.next_up();
    }
    if split == order.len() {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(split);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + split, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

fn partition(order: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let mut k = 0;
    for i in 0..order.len() {
        if pred(&order[i]) {
            order.swap(i, k);
            k += 1;
        }
    }
    k
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as RandRng;

    fn brute_radius(points: &[[f64; 3]], c: &[f64; 3], r: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| dist2(&points[i], c) < r * r).collect()
    }

    fn brute_knn(points: &[[f64; 3]], c: &[f64; 3], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = (0..points.len())
            .filter(|&i| Some(i) != skip)
            .map(|i| (i, dist2(&points[i], c)))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    fn random_points(n: usize, seed: u64, scale: f64) -> Vec<[f64; 3]> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| [r.random_range(-scale..scale), r.random_range(-scale..scale), r.random_range(-scale..scale)])
            .collect()
    }

    #[test]
    fn integer_grid_unit_ball() {
        let mut pts = Vec::new();
        for x in -3..=3 {
            for y in -3..=3 {
                for z in -3..=3 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        let tree = KdTree::new(pts.clone());
        let hits = tree.radius_query(&[0.0, 0.0, 0.0], 1.1);
        assert_eq!(hits.len(), 7);
        assert_eq!(hits, brute_radius(&pts, &[0.0, 0.0, 0.0], 1.1));
        assert!(tree.radius_query(&[0.5, 0.5, 0.5], 0.1).is_empty());
        assert_eq!(tree.radius_query(&pts[40], 1e-9), vec![40]);
    }

    #[test]
    fn duplicates_and_empty() {
        let pts = vec![[1.0, 1.0, 1.0]; 40];
        let tree = KdTree::new(pts);
        assert_eq!(tree.radius_query(&[1.0, 1.0, 1.0], 0.5).len(), 40);
        assert_eq!(tree.knn(&[0.0, 0.0, 0.0], 3, None), vec![(0, 3.0), (1, 3.0), (2, 3.0)]);
        let empty = KdTree::new(Vec::new());
        assert!(empty.radius_query(&[0.0; 3], 1.0).is_empty());
        assert!(empty.nearest(&[0.0; 3]).is_none());
    }

    #[test]
    fn exhaustive_on_500_points() {
        let pts = random_points(500, 17, 5.0);
        let tree = KdTree::new(pts.clone());
        for (q, c) in pts.iter().enumerate().step_by(7) {
            for r in [0.3, 1.0, 2.5] {
                assert_eq!(tree.radius_query(c, r), brute_radius(&pts, c, r));
            }
            assert_eq!(tree.knn(c, 16, Some(q)), brute_knn(&pts, c, 16, Some(q)));
        }
    }

    #[test]
    fn randomized_on_10k_points() {
        let pts = random_points(10_000, 3, 20.0);
        let tree = KdTree::new(pts.clone());
        let queries = random_points(30, 4, 22.0);
        for c in &queries {
            assert_eq!(tree.radius_query(c, 3.0), brute_radius(&pts, c, 3.0));
            assert_eq!(tree.knn(c, 5, None), brute_knn(&pts, c, 5, None));
        }
    }

    proptest! {
        #[test]
        fn radius_matches_brute_force(seed in 0u64..5000, n in 1usize..300, r in 0.01f64..4.0) {
            // quantized coordinates produce many axis ties
            let pts: Vec<[f64; 3]> = random_points(n, seed, 3.0)
                .into_iter()
                .map(|p| [(p[0] * 2.0).round() / 2.0, (p[1] * 2.0).round() / 2.0, p[2]])
                .collect();
            let tree = KdTree::new(pts.clone());
            let c = random_points(1, seed + 1, 3.0)[0];
            prop_assert_eq!(tree.radius_query(&c, r), brute_radius(&pts, &c, r));
            prop_assert_eq!(tree.knn(&c, 4, None), brute_knn(&pts, &c, 4, None));
        }
    }
}
