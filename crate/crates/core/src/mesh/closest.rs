use super::{BaryCoord, TriMesh, Vec3};
use crate::error::{Error, Result};

/// Closest point on triangle `(a, b, c)` to `p`, as barycentric weights.
///
/// Voronoi-region walk over vertices, edges and interior. Degenerate
/// triangles fall through to the edge regions and never divide by zero.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        if denom > 0.0 {
            let v = d1 / denom;
            return [1.0 - v, v, 0.0];
        }
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        if denom > 0.0 {
            let w = d2 / denom;
            return [1.0 - w, 0.0, w];
        }
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        if denom > 0.0 {
            let w = (d4 - d3) / denom;
            return [0.0, 1.0 - w, w];
        }
    }
    let denom = va + vb + vc;
    if denom > 0.0 && denom.is_finite() {
        let v = vb / denom;
        let w = vc / denom;
        return [1.0 - v - w, v, w];
    }
    degenerate_fallback(p, a, b, c)
}

fn degenerate_fallback(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let seg = |x: &Vec3, y: &Vec3| -> (f64, f64) {
        let d = y - x;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 {
            ((p - x).dot(&d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (t, (x + d * t - p).norm_squared())
    };
    let (t0, e0) = seg(a, b);
    let (t1, e1) = seg(b, c);
    let (t2, e2) = seg(c, a);
    if e0 <= e1 && e0 <= e2 {
        [1.0 - t0, t0, 0.0]
    } else if e1 <= e2 {
        [0.0, 1.0 - t1, t1]
    } else {
        [t2, 0.0, 1.0 - t2]
    }
}

/// Global closest surface point by exhaustive search; ties go to the lowest
/// face index.
pub fn closest_point(mesh: &TriMesh, query: &Vec3) -> Result<(BaryCoord, f64)> {
    if mesh.face_count() == 0 {
        return Err(Error::invalid("closest_point on a mesh without faces"));
    }
    let mut best = (BaryCoord::corner(0, 0), f64::INFINITY);
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.corners(f);
        let w = closest_point_on_triangle(query, &a, &b, &c);
        let p = a * w[0] + b * w[1] + c * w[2];
        let d2 = (p - query).norm_squared();
        if d2 < best.1 {
            best = (BaryCoord { face: f, weights: w }, d2);
        }
    }
    Ok((best.0, best.1.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::super::primitives::icosphere;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn vertex_query_hits_corner() {
        let m = icosphere(1);
        let (b, d) = closest_point(&m, &m.vertices()[5]).unwrap();
        assert_eq!(d, 0.0);
        let corner = m.faces()[b.face].iter().position(|&v| v == 5).unwrap();
        assert_eq!(b.weights[corner], 1.0);
    }

    #[test]
    fn above_centroid() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let q = Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.25);
        let (b, d) = closest_point(&m, &q).unwrap();
        for w in b.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((d - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_mesh_errors() {
        let m = TriMesh::new(vec![Vec3::zeros()], vec![]).unwrap();
        assert!(closest_point(&m, &Vec3::zeros()).is_err());
    }

    #[test]
    fn degenerate_triangle_is_safe() {
        let w = closest_point_on_triangle(
            &Vec3::new(0.5, 1.0, 0.0),
            &Vec3::zeros(),
            &Vec3::x(),
            &(Vec3::x() * 2.0),
        );
        assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// Independent per-face oracle: plane projection when it lands inside the
    /// triangle, otherwise the nearest of the three edges.
    fn oracle_face_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
        let n = (b - a).cross(&(c - a));
        let n2 = n.norm_squared();
        let proj = p - n * ((p - a).dot(&n) / n2);
        let inside = |x: &Vec3, y: &Vec3| (y - x).cross(&(proj - x)).dot(&n) >= 0.0;
        if inside(a, b) && inside(b, c) && inside(c, a) {
            return (p - proj).norm();
        }
        let seg = |x: &Vec3, y: &Vec3| {
            let d = y - x;
            let t = ((p - x).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            (x + d * t - p).norm()
        };
        seg(a, b).min(seg(b, c)).min(seg(c, a))
    }

    #[test]
    fn matches_exhaustive_oracle() {
        let mut m = icosphere(2);
        // Squash into an ellipsoid so faces are not all congruent.
        let v: Vec<Vec3> = m.vertices().iter().map(|p| Vec3::new(p.x * 0.8, p.y, p.z * 1.3)).collect();
        m = m.with_vertices(v).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        for _ in 0..1000 {
            let q = Vec3::new(
                rng.random_range(-1.6..1.6),
                rng.random_range(-1.6..1.6),
                rng.random_range(-1.6..1.6),
            );
            let (b, d) = closest_point(&m, &q).unwrap();
            let mut best = (usize::MAX, f64::INFINITY);
            for f in 0..m.face_count() {
                let [a, bb, c] = m.corners(f);
                let od = oracle_face_distance(&q, &a, &bb, &c);
                if od < best.1 - 1e-12 {
                    best = (f, od);
                }
            }
            assert!((d - best.1).abs() <= 1e-9, "distance {d} vs {}", best.1);
            if b.face != best.0 {
                // Equal-distance ties (shared edges/vertices) are legitimate.
                let [a, bb, c] = m.corners(best.0);
                let od = oracle_face_distance(&q, &a, &bb, &c);
                assert!((od - d).abs() <= 1e-9);
                assert!(b.face < best.0 || (d - best.1).abs() <= 1e-12);
            }
            assert!(b.is_valid());
            // Never farther than the nearest vertex.
            let vmin = m.vertices().iter().map(|v| (v - q).norm()).fold(f64::INFINITY, f64::min);
            assert!(d <= vmin + 1e-12);
        }
    }
}
