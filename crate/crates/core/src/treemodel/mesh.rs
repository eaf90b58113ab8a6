use std::fmt::Write as _;

use super::{Branch, Point, Tree};
use crate::error::{Error, Result};

/// Sweeps circular cross-sections of radius `r(s)` along every branch and
/// writes the result as Wavefront OBJ text, one `g branch/<path>` group per
/// branch (`0` for the main branch, `0/i/j` for descendants). Branches with
/// zero radius everywhere are emitted as a polyline.
pub fn export_mesh(t: &Tree, segments: usize) -> Result<Vec<u8>> {
    if segments < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 circle segments, got {segments}"
        )));
    }
    let mut out = String::new();
    out.push_str("# arbor4d generalized-cylinder mesh\n");
    let mut next_vertex = 1usize;
    t.visit(&mut |path, node| {
        let mut name = String::from("0");
        for i in path {
            let _ = write!(name, "/{i}");
        }
        let _ = writeln!(out, "g branch/{name}");
        next_vertex = emit_branch(&mut out, &node.main, segments, next_vertex);
    });
    Ok(out.into_bytes())
}

fn emit_branch(out: &mut String, b: &Branch, segments: usize, first: usize) -> usize {
    let pts = b.points();
    let n = pts.len();
    if b.radii().iter().all(|r| *r == 0.0) {
        for p in pts {
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
        let idx: Vec<String> = (first..first + n).map(|i| i.to_string()).collect();
        let _ = writeln!(out, "l {}", idx.join(" "));
        return first + n;
    }

    let tangents = tangents(pts);
    let mut normal = any_perpendicular(&tangents[0]);
    for (i, (p, r)) in pts.iter().zip(b.radii()).enumerate() {
        let t = tangents[i];
        // Transport the previous normal onto the new tangent's normal plane.
        let projected = normal - t * normal.dot(&t);
        normal = if projected.norm() > 1e-12 {
            projected.normalize()
        } else {
            any_perpendicular(&t)
        };
        let binormal = t.cross(&normal);
        for k in 0..segments {
            let a = std::f64::consts::TAU * k as f64 / segments as f64;
            let v = p + (normal * a.cos() + binormal * a.sin()) * *r;
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
    }
    for i in 0..n - 1 {
        for k in 0..segments {
            let a = first + i * segments + k;
            let b = first + i * segments + (k + 1) % segments;
            let c = first + (i + 1) * segments + k;
            let d = first + (i + 1) * segments + (k + 1) % segments;
            let _ = writeln!(out, "f {a} {b} {d}");
            let _ = writeln!(out, "f {a} {d} {c}");
        }
    }
    first + n * segments
}

fn tangents(pts: &[Point]) -> Vec<Point> {
    let n = pts.len();
    let mut out: Vec<Point> = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i == 0 {
            pts[1] - pts[0]
        } else if i == n - 1 {
            pts[n - 1] - pts[n - 2]
        } else {
            pts[i + 1] - pts[i - 1]
        };
        let t = if d.norm() > 1e-12 {
            d.normalize()
        } else if let Some(prev) = out.last() {
            *prev
        } else {
            Point::z()
        };
        out.push(t);
    }
    out
}

fn any_perpendicular(t: &Point) -> Point {
    let axis = if t.x.abs() < 0.9 { Point::x() } else { Point::y() };
    (axis - t * axis.dot(t)).normalize()
}
