//! Exact point-to-triangle distance and a bounding-volume hierarchy for
//! nearest-triangle queries.

use crate::geometry::Point3;

/// Triangles whose doubled area is below this (relative to squared edge
/// length) are handled as segments.
const DEGENERATE_AREA_RELATIVE: f64 = 1e-14;

pub fn point_segment_distance(p: Point3, a: Point3, b: Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Closest point on the closed triangle `abc` to `p` (Voronoi-region walk).
///
/// Returns `None` for a zero-area triangle.
fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Option<Point3> {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(ac);
    let scale = ab.norm_squared().max(ac.norm_squared()).max((c - b).norm_squared());
    if !(n.norm() > DEGENERATE_AREA_RELATIVE * scale) {
        return None;
    }

    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return Some(a);
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return Some(b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return Some(a + ab * v);
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return Some(c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return Some(a + ac * w);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return Some(b + (c - b) * w);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    Some(a + ab * v + ac * w)
}

/// Euclidean distance from `p` to the closed triangle `tri`.
///
/// Zero-area triangles are treated as the union of their edges.
pub fn point_triangle_distance(p: Point3, tri: [Point3; 3]) -> f64 {
    let [a, b, c] = tri;
    match closest_point_on_triangle(p, a, b, c) {
        Some(q) => p.distance(q),
        None => point_segment_distance(p, a, b)
            .min(point_segment_distance(p, b, c))
            .min(point_segment_distance(p, c, a)),
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: Point3) {
        self.lo = self.lo.min_by_component(p);
        self.hi = self.hi.max_by_component(p);
    }

    fn union(&self, o: &Aabb) -> Aabb {
        Aabb { lo: self.lo.min_by_component(o.lo), hi: self.hi.max_by_component(o.hi) }
    }

    fn distance_squared(&self, p: Point3) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let v = p.component(i);
            let lo = self.lo.component(i);
            let hi = self.hi.component(i);
            let d = if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, first: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Static hierarchy over triangles for exact nearest-distance queries.
///
/// A point set can be indexed by passing degenerate `[p, p, p]` triangles.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Point3; 3]>,
    /// Permutation of `triangles` so leaves own contiguous ranges.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl TriangleBvh {
    pub fn new(triangles: Vec<[Point3; 3]>) -> Self {
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            let centroids: Vec<Point3> =
                triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
            build(&triangles, &centroids, &mut order, 0, triangles.len(), &mut nodes);
        }
        Self { triangles, order, nodes }
    }

    pub fn from_points(points: &[Point3]) -> Self {
        Self::new(points.iter().map(|p| [*p, *p, *p]).collect())
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Distance from `p` to the nearest triangle, or `None` when empty.
    pub fn nearest_distance(&self, p: Point3) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let bd = node.bounds().distance_squared(p);
            if bd >= best * best {
                continue;
            }
            match node {
                Node::Leaf { first, count, .. } => {
                    for &ti in &self.order[*first..*first + *count] {
                        let d = point_triangle_distance(p, self.triangles[ti]);
                        if d < best {
                            best = d;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    // Visit the nearer child first.
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        Some(best)
    }
}

fn build(
    tris: &[[Point3; 3]],
    centroids: &[Point3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &ti in &order[start..end] {
        for v in tris[ti] {
            bounds.grow(v);
        }
        cbounds.grow(centroids[ti]);
    }
    let index = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, first: start, count: end - start });
        return index;
    }
    let span = cbounds.hi - cbounds.lo;
    let axis = if span.x >= span.y && span.x >= span.z {
        0
    } else if span.y >= span.z {
        1
    } else {
        2
    };
    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a].component(axis).total_cmp(&centroids[b].component(axis))
    });
    nodes.push(Node::Leaf { bounds, first: start, count: 0 });
    let left = build(tris, centroids, order, start, mid, nodes);
    let right = build(tris, centroids, order, mid, end, nodes);
    let merged = nodes[left].bounds().union(nodes[right].bounds());
    nodes[index] = Node::Inner { bounds: merged, left, right };
    index
}

/// Smallest distance between any point of `a` and any point of `b`.
pub fn min_set_distance(a: &[Point3], b: &[Point3]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    if a.len() * b.len() <= 4096 {
        let mut best = f64::INFINITY;
        for p in a {
            for q in b {
                best = best.min(p.distance_squared_to(*q));
            }
        }
        return Some(best.sqrt());
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let bvh = TriangleBvh::from_points(large);
    small.iter().filter_map(|p| bvh.nearest_distance(*p)).reduce(f64::min)
}
