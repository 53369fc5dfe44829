//! Static kd-tree under the max-norm, specialised to the two queries the
//! k-NN estimators need: distance to the k-th neighbour of a stored point, and
//! the number of stored points strictly inside a max-norm ball.

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Node {
    start: usize,
    end: usize,
    // Child indices; `left == 0` marks a leaf (the root is never a child).
    left: usize,
    right: usize,
    split_dim: usize,
    split: f64,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    // Points in tree order, row-major.
    points: Vec<f64>,
    // Original row index of each point in tree order.
    order: Vec<usize>,
    nodes: Vec<Node>,
    // Per-node bounding boxes, `dim` entries each.
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl KdTree {
    /// Builds over `n = data.len() / dim` row-major points.
    pub fn build(data: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        let n = data.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let mut tree = KdTree {
            dim,
            points: Vec::new(),
            order: Vec::new(),
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            lo: Vec::new(),
            hi: Vec::new(),
        };
        tree.build_node(data, &mut order, 0, n);
        tree.points = Vec::with_capacity(data.len());
        for &i in &order {
            tree.points.extend_from_slice(&data[i * dim..(i + 1) * dim]);
        }
        tree.order = order;
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn build_node(&mut self, data: &[f64], order: &mut [usize], start: usize, end: usize) -> usize {
        let dim = self.dim;
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, left: 0, right: 0, split_dim: 0, split: 0.0 });
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &order[start..end] {
            for d in 0..dim {
                let v = data[i * dim + d];
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        let (mut split_dim, mut spread) = (0, -1.0);
        for d in 0..dim {
            if hi[d] - lo[d] > spread {
                spread = hi[d] - lo[d];
                split_dim = d;
            }
        }
        self.lo.extend_from_slice(&lo);
        self.hi.extend_from_slice(&hi);
        if end - start <= LEAF_SIZE || spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[a * dim + split_dim].total_cmp(&data[b * dim + split_dim])
        });
        let split = data[order[mid] * dim + split_dim];
        let left = self.build_node(data, order, start, mid);
        let right = self.build_node(data, order, mid, end);
        let node = &mut self.nodes[id];
        node.left = left;
        node.right = right;
        node.split_dim = split_dim;
        node.split = split;
        id
    }

    #[inline]
    fn box_min_dist(&self, node: usize, q: &[f64]) -> f64 {
        let base = node * self.dim;
        let mut m = 0.0f64;
        for (d, &v) in q.iter().enumerate() {
            let lo = self.lo[base + d];
            let hi = self.hi[base + d];
            let gap = if v < lo { lo - v } else if v > hi { v - hi } else { 0.0 };
            m = m.max(gap);
        }
        m
    }

    /// Max-norm distance from `q` to its k-th nearest stored point, ignoring
    /// the stored point with original index `exclude`.
    pub fn kth_neighbor_distance(&self, q: &[f64], k: usize, exclude: Option<usize>) -> f64 {
        debug_assert!(k >= 1);
        // Sorted ascending, at most k entries.
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        self.knn_visit(0, q, k, exclude, &mut best);
        best.get(k - 1).copied().unwrap_or(f64::INFINITY)
    }

    fn knn_visit(&self, node: usize, q: &[f64], k: usize, exclude: Option<usize>, best: &mut Vec<f64>) {
        let worst = if best.len() == k { best[k - 1] } else { f64::INFINITY };
        if self.box_min_dist(node, q) > worst {
            return;
        }
        let n = self.nodes[node];
        if n.left == 0 {
            let dim = self.dim;
            for pos in n.start..n.end {
                if exclude == Some(self.order[pos]) {
                    continue;
                }
                let worst = if best.len() == k { best[k - 1] } else { f64::INFINITY };
                let p = &self.points[pos * dim..(pos + 1) * dim];
                let mut dist = 0.0f64;
                for d in 0..dim {
                    dist = dist.max((p[d] - q[d]).abs());
                    if dist >= worst {
                        break;
                    }
                }
                if dist < worst {
                    let at = best.partition_point(|&b| b <= dist);
                    best.insert(at, dist);
                    best.truncate(k);
                }
            }
            return;
        }
        let (near, far) = if q[n.split_dim] < n.split { (n.left, n.right) } else { (n.right, n.left) };
        self.knn_visit(near, q, k, exclude, best);
        self.knn_visit(far, q, k, exclude, best);
    }

    /// Number of stored points at max-norm distance strictly below `radius`.
    pub fn count_within(&self, q: &[f64], radius: f64) -> usize {
        if self.is_empty() {
            return 0;
        }
        self.count_visit(0, q, radius)
    }

    fn count_visit(&self, node: usize, q: &[f64], radius: f64) -> usize {
        let n = self.nodes[node];
        let base = node * self.dim;
        let (mut near, mut far) = (0.0f64, 0.0f64);
        for (d, &v) in q.iter().enumerate() {
            let lo = self.lo[base + d];
            let hi = self.hi[base + d];
            let gap = if v < lo { lo - v } else if v > hi { v - hi } else { 0.0 };
            near = near.max(gap);
            far = far.max(v - lo).max(hi - v);
        }
        if near >= radius {
            return 0;
        }
        if far < radius {
            return n.end - n.start;
        }
        if n.left == 0 {
            let dim = self.dim;
            let mut count = 0;
            'points: for pos in n.start..n.end {
                let p = &self.points[pos * dim..(pos + 1) * dim];
                for d in 0..dim {
                    if (p[d] - q[d]).abs() >= radius {
                        continue 'points;
                    }
                }
                count += 1;
            }
            return count;
        }
        self.count_visit(n.left, q, radius) + self.count_visit(n.right, q, radius)
    }
}
