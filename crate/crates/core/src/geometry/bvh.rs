use super::distance::closest_point_on_triangle;
use super::{TriangleMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    /// Squared distance from `p` to the box (zero inside).
    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Nearest surface point found by a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub point: Vec3,
    pub distance: f64,
    pub triangle: usize,
}

/// Bounding-volume hierarchy over mesh triangles for exact nearest-distance
/// queries. Owns a copy of the mesh and is immutable once built.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    mesh: TriangleMesh,
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        build_node(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        Self {
            mesh: mesh.clone(),
            tris,
            order,
            nodes,
        }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn closest(&self, p: &Vec3) -> ClosestHit {
        let mut best = ClosestHit {
            point: *p,
            distance: f64::INFINITY,
            triangle: usize::MAX,
        };
        let mut best_d2 = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds().dist2(p) > best_d2 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = &self.tris[t];
                        let q = closest_point_on_triangle(p, a, b, c);
                        let d2 = (p - q).norm_squared();
                        if d2 < best_d2 || (d2 == best_d2 && t < best.triangle) {
                            best_d2 = d2;
                            best = ClosestHit {
                                point: q,
                                distance: 0.0,
                                triangle: t,
                            };
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().dist2(p);
                    let dr = self.nodes[right].bounds().dist2(p);
                    // push the farther child first so the nearer one is visited next
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.distance = (p - best.point).norm();
        best
    }

    pub fn udf(&self, p: &Vec3) -> f64 {
        self.closest(p).distance
    }

    pub fn udf_batch(&self, points: &[Vec3]) -> Vec<f64> {
        points.iter().map(|p| self.udf(p)).collect()
    }
}

fn build_node(
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in &order[start..end] {
        for v in &tris[t] {
            bounds.grow(v);
        }
        cbounds.grow(&centroids[t]);
    }
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    let ext = cbounds.hi - cbounds.lo;
    let axis = ext.imax();
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start, end }); // placeholder
    let left = build_node(tris, centroids, order, start, mid, nodes);
    let right = build_node(tris, centroids, order, mid, end, nodes);
    let merged = nodes[left].bounds().merge(nodes[right].bounds());
    nodes[id] = Node::Inner {
        bounds: merged,
        left,
        right,
    };
    id
}
