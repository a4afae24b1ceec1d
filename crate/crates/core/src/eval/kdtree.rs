use crate::geometry::Vec3;

const LEAF: usize = 8;

/// Static 3-d tree over a point set, built by recursive median splits.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    /// original index of each stored point
    index: Vec<usize>,
    /// split axis of the node whose median sits at this position
    axis: Vec<u8>,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axis = vec![0u8; points.len()];
        split(points, &mut order, 0, &mut axis);
        Self {
            points: order.iter().map(|&i| points[i]).collect(),
            index: order,
            axis,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest stored point and its squared distance. Ties go to
    /// whichever point the traversal reaches first.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, self.points.len(), q, &mut best);
        Some((self.index[best.0], best.1))
    }

    fn search(&self, lo: usize, hi: usize, q: &Vec3, best: &mut (usize, f64)) {
        if hi - lo <= LEAF {
            for i in lo..hi {
                let d = (self.points[i] - q).norm_squared();
                if d < best.1 {
                    *best = (i, d);
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let a = self.axis[mid] as usize;
        let d = (self.points[mid] - q).norm_squared();
        if d < best.1 {
            *best = (mid, d);
        }
        let diff = q[a] - self.points[mid][a];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff < best.1 {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn split(points: &[Vec3], order: &mut [usize], offset: usize, axis: &mut [u8]) {
    let n = order.len();
    if n <= LEAF {
        return;
    }
    // widest extent picks the axis
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let a = (hi - lo).imax();
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&x, &y| points[x][a].total_cmp(&points[y][a]));
    axis[offset + mid] = a as u8;
    let (left, rest) = order.split_at_mut(mid);
    split(points, left, offset, axis);
    split(points, &mut rest[1..], offset + mid + 1, axis);
}
