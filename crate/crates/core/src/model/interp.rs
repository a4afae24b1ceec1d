//! Trilinear lookup of the feature pyramid at a 7-point axis stencil.
//!
//! Grid node `i` of a `K`-grid sits at `-0.5 + (i + 0.5) / K` on each axis;
//! lookups beyond the outermost nodes clamp to the edge. Query points outside
//! the unit cube are clamped onto it first.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::tensor::Real;

use super::encoder::{FeatureGrid, FeaturePyramid};

pub const STENCIL_POINTS: usize = 7;

/// Center, then `±d` along x, y, z.
pub fn stencil_offsets(d: f64) -> [Vec3; STENCIL_POINTS] {
    [
        Vec3::zeros(),
        Vec3::new(d, 0.0, 0.0),
        Vec3::new(-d, 0.0, 0.0),
        Vec3::new(0.0, d, 0.0),
        Vec3::new(0.0, -d, 0.0),
        Vec3::new(0.0, 0.0, d),
        Vec3::new(0.0, 0.0, -d),
    ]
}

#[derive(Debug, Clone, Copy)]
struct AxisLerp {
    i0: usize,
    i1: usize,
    t: f64,
    /// d t / d coordinate; zero on clamped lookups
    dt: f64,
}

fn axis_lerp(coord: f64, k: usize) -> AxisLerp {
    if k == 1 {
        return AxisLerp {
            i0: 0,
            i1: 0,
            t: 0.0,
            dt: 0.0,
        };
    }
    let u = (coord + 0.5) * k as f64 - 0.5;
    let last = (k - 1) as f64;
    if u <= 0.0 {
        AxisLerp {
            i0: 0,
            i1: 1,
            t: 0.0,
            dt: 0.0,
        }
    } else if u >= last {
        AxisLerp {
            i0: k - 2,
            i1: k - 1,
            t: 1.0,
            dt: 0.0,
        }
    } else {
        let i0 = (u.floor() as usize).min(k - 2);
        AxisLerp {
            i0,
            i1: i0 + 1,
            t: u - i0 as f64,
            dt: k as f64,
        }
    }
}

/// The eight weighted nodes touched by one lookup.
struct Corners {
    /// offsets into the channel-last data
    base: [usize; 8],
    w: [f64; 8],
    /// d w / d p per axis
    dw: [[f64; 8]; 3],
}

fn corners(q: &Vec3, k: usize, channels: usize, live: [bool; 3]) -> Corners {
    let ax = [0, 1, 2].map(|a| {
        let mut l = axis_lerp(q[a], k);
        if !live[a] {
            l.dt = 0.0;
        }
        l
    });
    let mut c = Corners {
        base: [0; 8],
        w: [0.0; 8],
        dw: [[0.0; 8]; 3],
    };
    for j in 0..8 {
        let bit = [j & 1, (j >> 1) & 1, (j >> 2) & 1];
        let idx = [0, 1, 2].map(|a| if bit[a] == 1 { ax[a].i1 } else { ax[a].i0 });
        let wa = [0, 1, 2].map(|a| if bit[a] == 1 { ax[a].t } else { 1.0 - ax[a].t });
        let da = [0, 1, 2].map(|a| if bit[a] == 1 { ax[a].dt } else { -ax[a].dt });
        c.base[j] = ((idx[2] * k + idx[1]) * k + idx[0]) * channels;
        c.w[j] = wa[0] * wa[1] * wa[2];
        c.dw[0][j] = da[0] * wa[1] * wa[2];
        c.dw[1][j] = wa[0] * da[1] * wa[2];
        c.dw[2][j] = wa[0] * wa[1] * da[2];
    }
    c
}

/// Clamps `p` into the unit cube and reports which axes stay differentiable.
fn clamp_query(p: &Vec3) -> (Vec3, [bool; 3]) {
    let mut live = [true; 3];
    let mut q = *p;
    for a in 0..3 {
        let c = p[a].clamp(-0.5, 0.5);
        live[a] = c == p[a];
        q[a] = c;
    }
    (q, live)
}

fn check_point(p: &Vec3) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite query point {p:?}")))
    }
}

/// Visits every (stencil point, scale) lookup of `p`, passing the slot
/// offset in the feature vector.
fn for_each_lookup<T: Real>(
    pyr: &FeaturePyramid<T>,
    p: &Vec3,
    mut f: impl FnMut(usize, usize, &FeatureGrid<T>, &Corners),
) {
    let (pc, live) = clamp_query(p);
    let total = pyr.total_channels();
    for (s, off) in stencil_offsets(pyr.stencil_displacement).iter().enumerate() {
        let q = pc + off;
        let mut slot = s * total;
        for (gi, g) in pyr.grids.iter().enumerate() {
            let c = corners(&q, g.resolution(), g.channels(), live);
            f(slot, gi, g, &c);
            slot += g.channels();
        }
    }
}

fn interpolate_into<T: Real>(pyr: &FeaturePyramid<T>, p: &Vec3, out: &mut [T]) {
    out.fill(T::zero());
    for_each_lookup(pyr, p, |slot, _, g, c| {
        let ch = g.channels();
        let dst = &mut out[slot..slot + ch];
        for j in 0..8 {
            let w = T::from_f64_lossy(c.w[j]);
            if w == T::zero() {
                continue;
            }
            for (o, &v) in dst.iter_mut().zip(&g.data()[c.base[j]..c.base[j] + ch]) {
                *o += w * v;
            }
        }
    });
}

/// Feature vector of length `7 · Σ channels` at `p`.
pub fn interpolate<T: Real>(pyramid: &FeaturePyramid<T>, p: &Vec3) -> Result<Vec<T>> {
    check_point(p)?;
    let mut out = vec![T::zero(); STENCIL_POINTS * pyramid.total_channels()];
    interpolate_into(pyramid, p, &mut out);
    Ok(out)
}

/// Features for many points, one row per point (B×F).
pub(crate) fn interpolate_rows<T: Real>(pyramid: &FeaturePyramid<T>, points: &[Vec3]) -> Result<Vec<T>> {
    let f = STENCIL_POINTS * pyramid.total_channels();
    let mut out = vec![T::zero(); f * points.len()];
    for (p, row) in points.iter().zip(out.chunks_mut(f)) {
        check_point(p)?;
        interpolate_into(pyramid, p, row);
    }
    Ok(out)
}

/// Scatters per-point feature gradients (B×F rows) onto the grids.
pub(crate) fn backward_grids<T: Real>(
    pyramid: &FeaturePyramid<T>,
    points: &[Vec3],
    grad_rows: &[T],
    grad_grids: &mut [FeatureGrid<T>],
) {
    let f = STENCIL_POINTS * pyramid.total_channels();
    for (p, g) in points.iter().zip(grad_rows.chunks(f)) {
        for_each_lookup(pyramid, p, |slot, gi, grid, c| {
            let ch = grid.channels();
            let src = &g[slot..slot + ch];
            let dst = grad_grids[gi].data_mut();
            for j in 0..8 {
                let w = T::from_f64_lossy(c.w[j]);
                if w == T::zero() {
                    continue;
                }
                for (d, &v) in dst[c.base[j]..c.base[j] + ch].iter_mut().zip(src) {
                    *d += w * v;
                }
            }
        });
    }
}

/// Chains per-point feature gradients (B×F rows) into gradients with respect to the points.
pub(crate) fn backward_points<T: Real>(pyramid: &FeaturePyramid<T>, points: &[Vec3], grad_rows: &[T]) -> Vec<Vec3> {
    let f = STENCIL_POINTS * pyramid.total_channels();
    points
        .iter()
        .zip(grad_rows.chunks(f))
        .map(|(p, g)| {
            let mut grad = Vec3::zeros();
            for_each_lookup(pyramid, p, |slot, _, grid, c| {
                let ch = grid.channels();
                let src = &g[slot..slot + ch];
                for j in 0..8 {
                    if c.dw[0][j] == 0.0 && c.dw[1][j] == 0.0 && c.dw[2][j] == 0.0 {
                        continue;
                    }
                    let vals = &grid.data()[c.base[j]..c.base[j] + ch];
                    let dot: T = vals.iter().zip(src).map(|(&v, &gv)| v * gv).sum();
                    let dot = dot.to_f64_lossy();
                    for a in 0..3 {
                        grad[a] += c.dw[a][j] * dot;
                    }
                }
            });
            grad
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn node_pos(i: usize, k: usize) -> f64 {
        -0.5 + (i as f64 + 0.5) / k as f64
    }

    fn pyramid(grids: Vec<FeatureGrid<f64>>) -> FeaturePyramid<f64> {
        FeaturePyramid::new(grids, 0.0722).unwrap()
    }

    #[test]
    fn reproduces_node_values_at_cell_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = FeatureGrid::<f64>::from_fn(8, 3, |_, _, _, _| rng.random_range(-1.0..1.0));
        let pyr = FeaturePyramid::new(vec![g.clone()], 0.0).unwrap();
        for (ix, iy, iz) in [(0, 0, 0), (3, 5, 7), (7, 2, 1)] {
            let p = Vec3::new(node_pos(ix, 8), node_pos(iy, 8), node_pos(iz, 8));
            let f = interpolate(&pyr, &p).unwrap();
            for s in 0..STENCIL_POINTS {
                for c in 0..3 {
                    assert!((f[s * 3 + c] - g.node(ix, iy, iz)[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_grids_give_constant_features() {
        let pyr = pyramid(vec![
            FeatureGrid::from_fn(8, 2, |_, _, _, c| c as f64 + 0.5),
            FeatureGrid::from_fn(1, 1, |_, _, _, _| -3.0),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = Vec3::new(
                rng.random_range(-0.7..0.7),
                rng.random_range(-0.7..0.7),
                rng.random_range(-0.7..0.7),
            );
            let f = interpolate(&pyr, &p).unwrap();
            for s in 0..STENCIL_POINTS {
                for (v, e) in f[s * 3..s * 3 + 3].iter().zip([0.5, 1.5, -3.0]) {
                    assert!((v - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_on_trilinear_polynomials() {
        let g = |x: f64, y: f64, z: f64| 2.0 * x - y + 3.0 * z + 1.0 + 0.5 * x * y * z;
        let k = 16;
        let grid = FeatureGrid::from_fn(k, 1, |ix, iy, iz, _| {
            g(node_pos(ix, k), node_pos(iy, k), node_pos(iz, k))
        });
        let d = 0.05;
        let pyr = FeaturePyramid::new(vec![grid], d).unwrap();
        let lim = 0.5 - 0.5 / k as f64 - d;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = Vec3::new(
                rng.random_range(-lim..lim),
                rng.random_range(-lim..lim),
                rng.random_range(-lim..lim),
            );
            let f = interpolate(&pyr, &p).unwrap();
            for (s, off) in stencil_offsets(d).iter().enumerate() {
                let q = p + off;
                assert!((f[s] - g(q.x, q.y, q.z)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn continuous_across_cell_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = FeatureGrid::<f64>::from_fn(8, 2, |_, _, _, _| rng.random_range(-1.0..1.0));
        let range = 2.0;
        let pyr = pyramid(vec![grid]);
        for i in 1..7 {
            // straddle the plane between node i-1 and i along x
            let x = node_pos(i, 8);
            let a = interpolate(&pyr, &Vec3::new(x - 5e-7, 0.1, -0.2)).unwrap();
            let b = interpolate(&pyr, &Vec3::new(x + 5e-7, 0.1, -0.2)).unwrap();
            let lipschitz = range * 8.0 * 3.0;
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= lipschitz * 1e-6);
            }
        }
    }

    #[test]
    fn outside_points_clamp_to_the_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pyr = pyramid(vec![FeatureGrid::<f64>::from_fn(4, 1, |_, _, _, _| {
            rng.random_range(-1.0..1.0)
        })]);
        let a = interpolate(&pyr, &Vec3::new(0.9, 0.1, -3.0)).unwrap();
        let b = interpolate(&pyr, &Vec3::new(0.5, 0.1, -0.5)).unwrap();
        assert_eq!(a, b);
        assert!(interpolate(&pyr, &Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
    }
}
