use super::{point_segment_distance_sq, Aabb};

const LEAF: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    // leaf: first..first+count into `order`; inner: children at `left`, `left + 1`
    left: u32,
    first: u32,
    count: u32,
}

/// Bounding-volume hierarchy over segments, answering "distance from a point
/// to the nearest segment" for walk-on-spheres over unions of capsules.
#[derive(Debug, Clone)]
pub struct CapsuleBvh {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl CapsuleBvh {
    /// Builds the hierarchy over the consecutive segments of a polyline whose
    /// vertices are stored flat (`dim` coordinates per vertex). A single
    /// vertex yields one degenerate segment.
    pub fn from_polyline(dim: usize, vertices: &[f64]) -> Self {
        let n = vertices.len() / dim;
        assert!(n >= 1, "polyline needs at least one vertex");
        let mut a = Vec::with_capacity(n.max(2) * dim);
        let mut b = Vec::with_capacity(n.max(2) * dim);
        if n == 1 {
            a.extend_from_slice(vertices);
            b.extend_from_slice(vertices);
        } else {
            for k in 0..n - 1 {
                a.extend_from_slice(&vertices[k * dim..(k + 1) * dim]);
                b.extend_from_slice(&vertices[(k + 1) * dim..(k + 2) * dim]);
            }
        }
        Self::from_segments(dim, a, b)
    }

    /// Builds over explicit segments `[a_k, b_k]` stored flat.
    pub fn from_segments(dim: usize, a: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), b.len());
        let n = a.len() / dim;
        assert!(n >= 1);
        let mut bvh = Self { dim, a, b, order: (0..n as u32).collect(), nodes: Vec::with_capacity(2 * n / LEAF + 2) };
        let centroids: Vec<f64> = (0..n * dim).map(|k| 0.5 * (bvh.a[k] + bvh.b[k])).collect();
        bvh.nodes.push(Node { bbox: Aabb::empty(dim), left: 0, first: 0, count: n as u32 });
        bvh.split(0, &centroids);
        bvh
    }

    fn seg_box(&self, k: usize) -> Aabb {
        let d = self.dim;
        let mut bx = Aabb::empty(d);
        bx.grow(&self.a[k * d..(k + 1) * d]);
        bx.grow(&self.b[k * d..(k + 1) * d]);
        bx
    }

    fn split(&mut self, node: usize, centroids: &[f64]) {
        let first = self.nodes[node].first as usize;
        let count = self.nodes[node].count as usize;
        let mut bbox = Aabb::empty(self.dim);
        for &k in &self.order[first..first + count] {
            bbox = bbox.union(&self.seg_box(k as usize));
        }
        self.nodes[node].bbox = bbox;
        if count <= LEAF {
            return;
        }
        let axis = (0..self.dim).max_by(|&i, &j| bbox.edge(i).total_cmp(&bbox.edge(j))).unwrap_or(0);
        let d = self.dim;
        let slice = &mut self.order[first..first + count];
        let mid = count / 2;
        slice.select_nth_unstable_by(mid, |&x, &y| {
            centroids[x as usize * d + axis].total_cmp(&centroids[y as usize * d + axis])
        });
        let left = self.nodes.len();
        self.nodes.push(Node { bbox: Aabb::empty(d), left: 0, first: first as u32, count: mid as u32 });
        self.nodes.push(Node {
            bbox: Aabb::empty(d),
            left: 0,
            first: (first + mid) as u32,
            count: (count - mid) as u32,
        });
        self.nodes[node].left = left as u32;
        self.nodes[node].count = 0;
        self.split(left, centroids);
        self.split(left + 1, centroids);
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn bounds(&self) -> &Aabb {
        &self.nodes[0].bbox
    }

    /// Distance from `p` to the nearest segment center line.
    pub fn nearest_distance(&self, p: &[f64]) -> f64 {
        let d = self.dim;
        let mut best = f64::INFINITY;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bbox.distance_sq_to(p)));
        while let Some((ni, lb)) = stack.pop() {
            if lb >= best {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let first = node.first as usize;
                for &k in &self.order[first..first + node.count as usize] {
                    let k = k as usize;
                    let dd = point_segment_distance_sq(p, &self.a[k * d..(k + 1) * d], &self.b[k * d..(k + 1) * d]);
                    if dd < best {
                        best = dd;
                    }
                }
            } else {
                let l = node.left;
                let dl = self.nodes[l as usize].bbox.distance_sq_to(p);
                let dr = self.nodes[l as usize + 1].bbox.distance_sq_to(p);
                // visit the closer child first
                if dl < dr {
                    stack.push((l + 1, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((l + 1, dr));
                }
            }
        }
        best.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dim = 4;
        let n = 300;
        let mut verts = vec![0.0; dim];
        for k in 1..n {
            for i in 0..dim {
                let prev = verts[(k - 1) * dim + i];
                verts.push(prev + rng.random_range(-0.3..0.3));
            }
        }
        let bvh = CapsuleBvh::from_polyline(dim, &verts);
        for _ in 0..200 {
            let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let brute = (0..n - 1)
                .map(|k| {
                    point_segment_distance_sq(&p, &verts[k * dim..(k + 1) * dim], &verts[(k + 1) * dim..(k + 2) * dim])
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert!((bvh.nearest_distance(&p) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn single_vertex_is_a_point() {
        let bvh = CapsuleBvh::from_polyline(3, &[1.0, 2.0, 3.0]);
        assert!((bvh.nearest_distance(&[1.0, 2.0, 5.0]) - 2.0).abs() < 1e-12);
    }
}
