//! Closed convex-hull membership and hull volumes in one to three dimensions.
//!
//! Membership tolerates `GEOMETRY_EPS` on signed areas/volumes so that
//! points on faces and edges count as inside. Degenerate simplices fall back
//! to their lower-dimensional faces.

/// Absolute tolerance on signed areas and volumes.
pub const GEOMETRY_EPS: f64 = 1e-9;

fn sub(a: &[f64], b: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        out[i] = x - y;
    }
    out
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Twice the signed area of triangle `abc` (2D).
fn orient2(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Six times the signed volume of tetrahedron `abcd`.
fn orient3(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    dot(&sub(b, a), &cross(&sub(c, a), &sub(d, a)))
}

/// Distance from `p` to the closed segment `ab` is within tolerance.
fn in_segment(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot(&ab, &ab);
    let t = if len2 > 0.0 { (dot(&ap, &ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let closest = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    norm(&closest) <= GEOMETRY_EPS
}

fn in_triangle2(p: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> bool {
    let area = orient2(a, b, c) / 2.0;
    if area.abs() <= GEOMETRY_EPS {
        return in_segment(p, a, b) || in_segment(p, b, c) || in_segment(p, c, a);
    }
    let s = area.signum();
    [orient2(a, b, p), orient2(b, c, p), orient2(c, a, p)]
        .iter()
        .all(|o| s * o / 2.0 >= -GEOMETRY_EPS)
}

fn in_triangle3(p: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> bool {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let normal = cross(&ab, &ac);
    let twice_area = norm(&normal);
    if twice_area / 2.0 <= GEOMETRY_EPS {
        return in_segment(p, a, b) || in_segment(p, b, c) || in_segment(p, c, a);
    }
    if (dot(&normal, &sub(p, a)) / 6.0).abs() > GEOMETRY_EPS {
        return false;
    }
    // Signed sub-areas measured along the unit normal.
    let unit = [normal[0] / twice_area, normal[1] / twice_area, normal[2] / twice_area];
    [
        cross(&sub(b, a), &sub(p, a)),
        cross(&sub(c, b), &sub(p, b)),
        cross(&sub(a, c), &sub(p, c)),
    ]
    .iter()
    .all(|x| dot(&unit, x) / 2.0 >= -GEOMETRY_EPS)
}

fn in_tetrahedron(p: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> bool {
    let vol = orient3(a, b, c, d) / 6.0;
    if vol.abs() <= GEOMETRY_EPS {
        return in_triangle3(p, a, b, c)
            || in_triangle3(p, a, b, d)
            || in_triangle3(p, a, c, d)
            || in_triangle3(p, b, c, d);
    }
    let s = vol.signum();
    [
        orient3(p, b, c, d),
        orient3(a, p, c, d),
        orient3(a, b, p, d),
        orient3(a, b, c, p),
    ]
    .iter()
    .all(|o| s * o / 6.0 >= -GEOMETRY_EPS)
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order until it
/// returns true.
fn any_subset(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if k > n {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return true;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + n - k) else {
            return false;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Closed convex-hull membership of `p` among `vertices` (all of dimension
/// `p.len()` ≤ 3). With more than `d + 1` vertices the hull is the union of
/// its vertex simplices.
pub fn in_hull(p: &[f64], vertices: &[&[f64]]) -> bool {
    match p.len() {
        1 => {
            let (lo, hi) = vertices
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[0]), hi.max(v[0])));
            lo <= p[0] && p[0] <= hi
        }
        2 => match vertices.len() {
            0 => false,
            1 => in_segment(p, vertices[0], vertices[0]),
            2 => in_segment(p, vertices[0], vertices[1]),
            r => any_subset(r, 3, |s| in_triangle2(p, vertices[s[0]], vertices[s[1]], vertices[s[2]])),
        },
        3 => match vertices.len() {
            0 => false,
            1 => in_segment(p, vertices[0], vertices[0]),
            2 => in_segment(p, vertices[0], vertices[1]),
            3 => in_triangle3(p, vertices[0], vertices[1], vertices[2]),
            r => any_subset(r, 4, |s| {
                in_tetrahedron(p, vertices[s[0]], vertices[s[1]], vertices[s[2]], vertices[s[3]])
            }),
        },
        d => panic!("unsupported dimension {d}"),
    }
}

/// Area of the 2D convex hull (Andrew's monotone chain, shoelace).
fn hull_area2(vertices: &[&[f64]]) -> f64 {
    let mut pts: Vec<[f64; 2]> = vertices.iter().map(|v| [v[0], v[1]]).collect();
    if pts.len() < 3 {
        return 0.0;
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let chain = |points: &mut dyn Iterator<Item = &[f64; 2]>| {
        let mut out: Vec<[f64; 2]> = Vec::new();
        for p in points {
            while out.len() >= 2 && cross(&out[out.len() - 2], &out[out.len() - 1], p) <= 0.0 {
                out.pop();
            }
            out.push(*p);
        }
        out.pop();
        out
    };
    let mut hull = chain(&mut pts.iter());
    hull.extend(chain(&mut pts.iter().rev()));
    let twice: f64 = (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    twice.abs() / 2.0
}

/// Volume of the 3D convex hull. Exact for tetrahedra; for more vertices the
/// hull faces are enumerated, which assumes no four vertices are coplanar.
fn hull_volume3(vertices: &[&[f64]]) -> f64 {
    match vertices.len() {
        0..=3 => 0.0,
        4 => orient3(vertices[0], vertices[1], vertices[2], vertices[3]).abs() / 6.0,
        r => {
            let mut centroid = [0.0; 3];
            for v in vertices {
                for k in 0..3 {
                    centroid[k] += v[k] / r as f64;
                }
            }
            let mut total = 0.0;
            any_subset(r, 3, |s| {
                let (a, b, c) = (vertices[s[0]], vertices[s[1]], vertices[s[2]]);
                let signs: Vec<f64> = (0..r)
                    .filter(|i| !s.contains(i))
                    .map(|i| orient3(a, b, c, vertices[i]))
                    .collect();
                let face = signs.iter().all(|&o| o <= GEOMETRY_EPS) || signs.iter().all(|&o| o >= -GEOMETRY_EPS);
                if face {
                    total += orient3(a, b, c, &centroid).abs() / 6.0;
                }
                false
            });
            total
        }
    }
}

/// Lebesgue measure of the convex hull of `vertices` in their own dimension.
pub fn hull_volume(vertices: &[&[f64]]) -> f64 {
    let Some(first) = vertices.first() else { return 0.0 };
    match first.len() {
        1 => {
            let (lo, hi) = vertices
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[0]), hi.max(v[0])));
            hi - lo
        }
        2 => hull_area2(vertices),
        3 => hull_volume3(vertices),
        d => panic!("unsupported dimension {d}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: [&[f64]; 3] = [&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]];

    #[test]
    fn triangle_membership() {
        assert!(in_hull(&[0.1, 0.1], &TRI));
        assert!(!in_hull(&[1.0, 1.0], &TRI));
        assert!(in_hull(&[0.5, 0.0], &TRI));
        assert!(in_hull(&[0.5, 0.5], &TRI));
        assert!(in_hull(&[1.0, 0.0], &TRI));
        assert!(!in_hull(&[0.5, -1e-6], &TRI));
    }

    #[test]
    fn collinear_triangle_uses_segments() {
        let line: [&[f64]; 3] = [&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]];
        assert!(in_hull(&[1.5, 1.5], &line));
        assert!(!in_hull(&[3.0, 3.0], &line));
        assert!(!in_hull(&[1.0, 0.0], &line));
        assert_eq!(hull_volume(&line), 0.0);
    }

    #[test]
    fn tetrahedron_membership_and_volume() {
        let tet: [&[f64]; 4] = [&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]];
        assert!(in_hull(&[0.1, 0.1, 0.1], &tet));
        assert!(in_hull(&[0.0, 0.0, 0.5], &tet));
        assert!(!in_hull(&[0.5, 0.5, 0.5], &tet));
        assert!((hull_volume(&tet) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn flat_tetrahedron_uses_faces() {
        let flat: [&[f64]; 4] = [&[0.0, 0.0, 0.0], &[2.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[1.0, 1.0, 0.0]];
        assert!(in_hull(&[0.5, 0.5, 0.0], &flat));
        assert!(!in_hull(&[0.5, 0.5, 0.1], &flat));
        assert_eq!(hull_volume(&flat), 0.0);
    }

    #[test]
    fn quadrilateral_hull_in_2d() {
        let quad: [&[f64]; 4] = [&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]];
        assert!((hull_volume(&quad) - 1.0).abs() < 1e-15);
        assert!(in_hull(&[0.9, 0.9], &quad));
        // interior vertex does not change the hull
        let with_inner: [&[f64]; 4] = [&[0.0, 0.0], &[2.0, 0.0], &[0.0, 2.0], &[0.2, 0.2]];
        assert!((hull_volume(&with_inner) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_area() {
        assert!((hull_volume(&TRI) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional() {
        let seg: [&[f64]; 3] = [&[1.0], &[3.0], &[2.0]];
        assert!(in_hull(&[1.0], &seg));
        assert!(!in_hull(&[3.5], &seg));
        assert_eq!(hull_volume(&seg), 2.0);
    }

    #[test]
    fn subsets_enumerated() {
        let mut seen = Vec::new();
        any_subset(4, 2, |s| {
            seen.push(s.to_vec());
            false
        });
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }
}
