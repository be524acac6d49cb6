//! Polygon helpers for instance annotations: even-odd rasterization,
//! rectangle clipping and the rigid transforms used by augmentation.
//!
//! Coordinates are `(x, y)` in pixel units with the origin at the top-left
//! corner of pixel `(0, 0)`; pixel `(row, col)` is sampled at its center
//! `(col + 0.5, row + 0.5)`.

use crate::types::BinaryMask;

pub type Point = (f64, f64);

/// Even-odd scanline fill sampled at pixel centers.
///
/// A center lying exactly on an edge counts as inside. Together with the
/// half-open vertex rule in `y`, this makes the result mirror-exact:
/// rasterizing `mirror_x(p, w)` gives the column-mirrored mask of `p` for
/// integer-vertex polygons.
pub fn rasterize_polygon(poly: &[Point], height: usize, width: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(height, width);
    if poly.len() < 3 {
        return mask;
    }
    let mut crossings: Vec<f64> = Vec::new();
    for r in 0..height {
        let y = r as f64 + 0.5;
        crossings.clear();
        for i in 0..poly.len() {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % poly.len()];
            if (y0 <= y) != (y1 <= y) {
                crossings.push(x0 + (y - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        let mut left = 0;
        for c in 0..width {
            let x = c as f64 + 0.5;
            while left < crossings.len() && crossings[left] < x {
                left += 1;
            }
            let on_edge = left < crossings.len() && crossings[left] == x;
            if on_edge || left % 2 == 1 {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

/// Reflects `x` about the vertical line `x = axis / 2`.
pub fn mirror_x(poly: &[Point], axis: f64) -> Vec<Point> {
    poly.iter().map(|&(x, y)| (axis - x, y)).collect()
}

pub fn translate(poly: &[Point], dx: f64, dy: f64) -> Vec<Point> {
    poly.iter().map(|&(x, y)| (x + dx, y + dy)).collect()
}

/// Sutherland-Hodgman clip against the rectangle `[0, width] x [0, height]`.
pub fn clip_to_rect(poly: &[Point], height: f64, width: f64) -> Vec<Point> {
    let mut out = poly.to_vec();
    // (axis, bound, keep-if-below)
    for (axis_x, bound, below) in [
        (true, 0.0, false),
        (true, width, true),
        (false, 0.0, false),
        (false, height, true),
    ] {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let coord = |p: Point| if axis_x { p.0 } else { p.1 };
        let inside = |p: Point| {
            if below {
                coord(p) <= bound
            } else {
                coord(p) >= bound
            }
        };
        let cut = |a: Point, b: Point| {
            let t = (bound - coord(a)) / (coord(b) - coord(a));
            if axis_x {
                (bound, a.1 + t * (b.1 - a.1))
            } else {
                (a.0 + t * (b.0 - a.0), bound)
            }
        };
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cut(prev, cur)),
                (false, true) => {
                    out.push(cut(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

/// Axis-aligned rectangle with corners at integer pixel boundaries.
pub fn rect_polygon(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
}

/// Rotated ellipse approximated by `n` vertices.
pub fn ellipse_polygon(cx: f64, cy: f64, rx: f64, ry: f64, angle: f64, n: usize) -> Vec<Point> {
    let (sin, cos) = angle.sin_cos();
    (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            let (ex, ey) = (rx * t.cos(), ry * t.sin());
            (cx + ex * cos - ey * sin, cy + ex * sin + ey * cos)
        })
        .collect()
}

/// Outline of a polyline thickened to `width`, using averaged normals at
/// interior joints. Assumes gentle bends (turns well under 90 degrees).
pub fn thick_polyline(points: &[Point], width: f64) -> Vec<Point> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let half = width / 2.0;
    let normal = |a: Point, b: Point| {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = (dx * dx + dy * dy).sqrt().max(f64::EPSILON);
        (-dy / len, dx / len)
    };
    let offsets: Vec<Point> = (0..n)
        .map(|i| {
            let (nx, ny) = if i == 0 {
                normal(points[0], points[1])
            } else if i == n - 1 {
                normal(points[n - 2], points[n - 1])
            } else {
                let a = normal(points[i - 1], points[i]);
                let b = normal(points[i], points[i + 1]);
                let (sx, sy) = (a.0 + b.0, a.1 + b.1);
                let len = (sx * sx + sy * sy).sqrt().max(f64::EPSILON);
                // miter length so the band keeps its width at the joint
                let cos_half = (sx / len) * a.0 + (sy / len) * a.1;
                let scale = 1.0 / cos_half.max(0.5);
                (sx / len * scale, sy / len * scale)
            };
            (nx * half, ny * half)
        })
        .collect();
    let mut outline: Vec<Point> = points
        .iter()
        .zip(&offsets)
        .map(|(&(x, y), &(ox, oy))| (x + ox, y + oy))
        .collect();
    outline.extend(
        points
            .iter()
            .zip(&offsets)
            .rev()
            .map(|(&(x, y), &(ox, oy))| (x - ox, y - oy)),
    );
    outline
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rectangle_covers_its_pixels() {
        let m = rasterize_polygon(&rect_polygon(1.0, 2.0, 4.0, 3.0), 5, 5);
        let ones: Vec<usize> = m.ones().collect();
        assert_eq!(ones, vec![11, 12, 13]);
    }

    #[test]
    fn degenerate_polygon_is_empty() {
        assert_eq!(rasterize_polygon(&[(0.0, 0.0), (3.0, 3.0)], 4, 4).count_ones(), 0);
    }

    #[test]
    fn triangle_matches_direct_point_test() {
        let tri = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0)];
        let m = rasterize_polygon(&tri, 8, 8);
        for r in 0..8 {
            for c in 0..8 {
                let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                assert_eq!(m.get(r, c), x + y <= 8.0, "({r}, {c})");
            }
        }
    }

    #[test]
    fn clipping_keeps_interior_samples() {
        let poly = [(-3.0, -2.0), (7.0, 1.0), (2.0, 9.0)];
        let clipped = clip_to_rect(&poly, 6.0, 5.0);
        assert!(clipped
            .iter()
            .all(|&(x, y)| (0.0..=5.0).contains(&x) && (0.0..=6.0).contains(&y)));
        assert_eq!(rasterize_polygon(&clipped, 6, 5), rasterize_polygon(&poly, 6, 5));
    }

    #[test]
    fn clipping_outside_polygon_yields_nothing() {
        assert!(clip_to_rect(&rect_polygon(10.0, 10.0, 12.0, 12.0), 5.0, 5.0).is_empty());
    }

    #[test]
    fn thick_horizontal_line_is_a_band() {
        let poly = thick_polyline(&[(1.0, 4.0), (9.0, 4.0)], 2.0);
        let m = rasterize_polygon(&poly, 8, 10);
        for r in 0..8 {
            for c in 0..10 {
                assert_eq!(m.get(r, c), (3..5).contains(&r) && (1..9).contains(&c));
            }
        }
    }

    proptest! {
        #[test]
        fn mirror_is_exact_for_integer_polygons(
            pts in proptest::collection::vec((0i32..=12, 0i32..=10), 3..7)
        ) {
            let (h, w) = (10usize, 12usize);
            let poly: Vec<Point> = pts.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
            let m = rasterize_polygon(&poly, h, w);
            let mirrored = rasterize_polygon(&mirror_x(&poly, w as f64), h, w);
            for r in 0..h {
                for c in 0..w {
                    prop_assert_eq!(m.get(r, c), mirrored.get(r, w - 1 - c));
                }
            }
        }
    }
}
