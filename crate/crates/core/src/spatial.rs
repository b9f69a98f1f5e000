//! Spatial indices: a bounding-volume hierarchy over triangles for distance
//! queries, and a kd-tree over sites for power-distance pruning.

use crate::geometry::{point_triangle_distance, Aabb, Triangle, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: Aabb,
    // leaf: items[start..start + count]; inner: children at `left` and `left + 1`
    start: usize,
    count: usize,
    left: usize,
}

/// Median-split AABB tree over a triangle list.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    nodes: Vec<BvhNode>,
    items: Vec<usize>,
    triangles: Vec<Triangle>,
}

impl TriangleBvh {
    pub fn new(triangles: Vec<Triangle>) -> Self {
        let mut items: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            let boxes: Vec<Aabb> = triangles.iter().map(|t| t.aabb()).collect();
            let centers: Vec<Vec3> = triangles.iter().map(|t| t.centroid()).collect();
            nodes.push(BvhNode {
                bounds: Aabb::EMPTY,
                start: 0,
                count: items.len(),
                left: 0,
            });
            build(&mut nodes, 0, &mut items, &boxes, &centers);
        }
        TriangleBvh {
            nodes,
            items,
            triangles,
        }
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Exact distance to the nearest triangle and its index.
    pub fn nearest(&self, p: Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_squared(p) >= best.1 * best.1 {
                continue;
            }
            if node.count > 0 {
                for &t in &self.items[node.start..node.start + node.count] {
                    let d = point_triangle_distance(p, &self.triangles[t]);
                    if d < best.1 || (d == best.1 && t < best.0) {
                        best = (t, d);
                    }
                }
            } else {
                let (a, b) = (node.left, node.left + 1);
                let (da, db) = (
                    self.nodes[a].bounds.distance_squared(p),
                    self.nodes[b].bounds.distance_squared(p),
                );
                // visit the closer child first
                if da <= db {
                    stack.push(b);
                    stack.push(a);
                } else {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        Some(best)
    }
}

fn build(nodes: &mut Vec<BvhNode>, ni: usize, items: &mut [usize], boxes: &[Aabb], centers: &[Vec3]) {
    let (start, count) = (nodes[ni].start, nodes[ni].count);
    let slice = &mut items[start..start + count];
    let bounds = slice.iter().fold(Aabb::EMPTY, |b, &i| b.union(boxes[i]));
    nodes[ni].bounds = bounds;
    if count <= LEAF_SIZE {
        return;
    }
    let cb = slice.iter().fold(Aabb::EMPTY, |b, &i| b.grow(centers[i]));
    let axis = cb.longest_axis();
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        centers[a]
            .axis(axis)
            .total_cmp(&centers[b].axis(axis))
            .then(a.cmp(&b))
    });
    let left = nodes.len();
    nodes.push(BvhNode {
        bounds: Aabb::EMPTY,
        start,
        count: mid,
        left: 0,
    });
    nodes.push(BvhNode {
        bounds: Aabb::EMPTY,
        start: start + mid,
        count: count - mid,
        left: 0,
    });
    nodes[ni].count = 0;
    nodes[ni].left = left;
    build(nodes, left, items, boxes, centers);
    build(nodes, left + 1, items, boxes, centers);
}

#[derive(Debug, Clone)]
struct KdNode {
    bounds: Aabb,
    start: usize,
    count: usize,
    left: usize,
}

/// Static kd-tree over site positions.
///
/// Weights change every Newton step while positions do not, so the tree is
/// built once and queries take per-node weight minima computed by
/// [`SiteTree::node_min_weights`].
#[derive(Debug, Clone)]
pub struct SiteTree {
    nodes: Vec<KdNode>,
    items: Vec<usize>,
    positions: Vec<Vec3>,
}

impl SiteTree {
    pub fn new(positions: &[Vec3]) -> Self {
        let mut items: Vec<usize> = (0..positions.len()).collect();
        let mut nodes = Vec::new();
        if !positions.is_empty() {
            nodes.push(KdNode {
                bounds: Aabb::EMPTY,
                start: 0,
                count: items.len(),
                left: 0,
            });
            build_kd(&mut nodes, 0, &mut items, positions);
        }
        SiteTree {
            nodes,
            items,
            positions: positions.to_vec(),
        }
    }

    pub fn node_min_weights(&self, weights: &[f64]) -> Vec<f64> {
        let mut mins = vec![f64::INFINITY; self.nodes.len()];
        // children are always stored after their parent
        for ni in (0..self.nodes.len()).rev() {
            let n = &self.nodes[ni];
            mins[ni] = if n.count > 0 {
                self.items[n.start..n.start + n.count]
                    .iter()
                    .map(|&i| weights[i])
                    .fold(f64::INFINITY, f64::min)
            } else {
                mins[n.left].min(mins[n.left + 1])
            };
        }
        mins
    }

    /// Branch-and-bound minimum of `score(i)` where `lower(node_box, node_min_weight)`
    /// bounds the score of every site inside a node from below.
    pub fn minimize(
        &self,
        node_mins: &[f64],
        lower: impl Fn(&Aabb, f64) -> f64,
        score: impl Fn(usize) -> f64,
    ) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni];
            if lower(&n.bounds, node_mins[ni]) >= best.1 {
                continue;
            }
            if n.count > 0 {
                for &i in &self.items[n.start..n.start + n.count] {
                    let s = score(i);
                    if s < best.1 || (s == best.1 && i < best.0) {
                        best = (i, s);
                    }
                }
            } else {
                stack.push(n.left + 1);
                stack.push(n.left);
            }
        }
        Some(best)
    }

    /// All sites whose node lower bound and own `keep(i)` pass; sorted by index.
    pub fn collect(
        &self,
        node_mins: &[f64],
        admit_node: impl Fn(&Aabb, f64) -> bool,
        keep: impl Fn(usize) -> bool,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let n = &self.nodes[ni];
            if !admit_node(&n.bounds, node_mins[ni]) {
                continue;
            }
            if n.count > 0 {
                out.extend(self.items[n.start..n.start + n.count].iter().copied().filter(|&i| keep(i)));
            } else {
                stack.push(n.left + 1);
                stack.push(n.left);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }
}

fn build_kd(nodes: &mut Vec<KdNode>, ni: usize, items: &mut [usize], pos: &[Vec3]) {
    let (start, count) = (nodes[ni].start, nodes[ni].count);
    let slice = &mut items[start..start + count];
    nodes[ni].bounds = Aabb::from_points(slice.iter().map(|&i| &pos[i]));
    if count <= LEAF_SIZE {
        return;
    }
    let axis = nodes[ni].bounds.longest_axis();
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        pos[a].axis(axis).total_cmp(&pos[b].axis(axis)).then(a.cmp(&b))
    });
    let left = nodes.len();
    nodes.push(KdNode {
        bounds: Aabb::EMPTY,
        start,
        count: mid,
        left: 0,
    });
    nodes.push(KdNode {
        bounds: Aabb::EMPTY,
        start: start + mid,
        count: count - mid,
        left: 0,
    });
    nodes[ni].count = 0;
    nodes[ni].left = left;
    build_kd(nodes, left, items, pos);
    build_kd(nodes, left + 1, items, pos);
}
