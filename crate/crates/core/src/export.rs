//! OBJ meshes through stereographic projection of `S³`, and flat CSV dumps.

use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::GridSpec;
use crate::lie::LieVector;
use crate::sweep::PointRecord;

/// Points with `x4` (or `−x4` with the pole flipped) above `1 − POLE_MARGIN` are clipped.
pub const POLE_MARGIN: f64 = 1e-6;

/// `(x1, x2, x3) / (1 − x4)`, or `/(1 + x4)` from the opposite pole.
pub fn stereographic(x: &[f64], pole_flip: bool) -> Option<[f64; 3]> {
    let h = if pole_flip { -x[3] } else { x[3] };
    if h > 1.0 - POLE_MARGIN {
        return None;
    }
    let s = 1.0 - h;
    Some([x[0] / s, x[1] / s, x[2] / s])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshExport {
    pub vertices: Vec<[f64; 3]>,
    /// 1-based quads.
    pub faces: Vec<[usize; 4]>,
    /// Grid nodes dropped near the projection pole.
    pub clipped: usize,
}

impl MeshExport {
    /// Projects the spatial part of one Lie vector per grid node (row-major).
    /// Clipped nodes are removed together with every quad touching them.
    pub fn from_points(grid: &GridSpec, points: &[LieVector], pole_flip: bool) -> Self {
        let points: Vec<Option<&LieVector>> = points.iter().map(Some).collect();
        Self::from_masked_points(grid, &points, pole_flip)
    }

    /// As [`MeshExport::from_points`], with missing nodes treated as clipped.
    pub fn from_masked_points(grid: &GridSpec, points: &[Option<&LieVector>], pole_flip: bool) -> Self {
        assert_eq!(points.len(), grid.len());
        let mut slot = vec![None; points.len()];
        let mut vertices = Vec::with_capacity(points.len());
        for (k, p) in points.iter().enumerate() {
            if let Some(v) = p.and_then(|p| stereographic(p.spatial(), pole_flip)) {
                vertices.push(v);
                slot[k] = Some(vertices.len());
            }
        }
        let mut faces = Vec::with_capacity(grid.cells(0) * grid.cells(1));
        for i in 0..grid.cells(0) {
            let i1 = grid.next(0, i).unwrap();
            for j in 0..grid.cells(1) {
                let j1 = grid.next(1, j).unwrap();
                let corners = [(i, j), (i1, j), (i1, j1), (i, j1)].map(|(a, b)| slot[grid.index(a, b)]);
                if let [Some(a), Some(b), Some(c), Some(d)] = corners {
                    faces.push([a, b, c, d]);
                }
            }
        }
        let clipped = points.len() - vertices.len();
        MeshExport { vertices, faces, clipped }
    }

    /// `v` lines then `f` lines; coordinates in shortest round-trip form.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            writeln!(out, "v {:?} {:?} {:?}", v[0], v[1], v[2]).unwrap();
        }
        for f in &self.faces {
            writeln!(out, "f {} {} {} {}", f[0], f[1], f[2], f[3]).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ObjError {
    pub line: usize,
    pub message: String,
}

/// Vertices and 1-based faces.
pub type ObjMesh = (Vec<[f64; 3]>, Vec<Vec<usize>>);

/// Reads back the `v`/`f` subset written by [`MeshExport::to_obj`].
pub fn parse_obj(text: &str) -> Result<ObjMesh, ObjError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let err = |message: String| ObjError { line: n + 1, message };
        let mut parts = raw.split_whitespace();
        match parts.next() {
            None => {}
            Some(c) if c.starts_with('#') => {}
            Some("v") => {
                let xs: Vec<f64> = parts
                    .map(|s| s.parse::<f64>().map_err(|e| err(format!("bad coordinate {s:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                if xs.len() != 3 {
                    return Err(err(format!("expected 3 coordinates, found {}", xs.len())));
                }
                vertices.push([xs[0], xs[1], xs[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or(s);
                        head.parse::<usize>().map_err(|e| err(format!("bad index {s:?}: {e}")))
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(err("face with fewer than 3 vertices".into()));
                }
                faces.push(idx);
            }
            Some(other) => return Err(err(format!("unsupported statement {other:?}"))),
        }
    }
    let nv = vertices.len();
    if let Some(bad) = faces.iter().flatten().find(|&&i| i == 0 || i > nv) {
        return Err(ObjError { line: 0, message: format!("face index {bad} outside 1..={nv}") });
    }
    Ok((vertices, faces))
}

pub const CSV_HEADER: &str =
    "u,v,tau,a,b,mu2,alpha_u,alpha_v,dalpha,frame_relations,leg_relation,reverse_check,alpha_sum,involution,curvature_identity";

/// One row per regular node.
pub fn records_csv(records: &[PointRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let s = &r.residuals;
        let row = [
            r.point[0],
            r.point[1],
            r.tau,
            r.a,
            r.b,
            r.mu2,
            r.alpha[0],
            r.alpha[1],
            r.dalpha,
            s.frame_relations,
            s.leg_relation,
            s.reverse_check,
            s.alpha_sum,
            s.involution,
            s.curvature_identity,
        ];
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{ChartSpec, Domain};
    use crate::jet::Jet2;
    use crate::sweep::frames_on_grid;
    use crate::transform::transform;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn torus_points(n: usize) -> (GridSpec, Vec<LieVector>) {
        let chart = ChartSpec::clifford_torus(FRAC_1_SQRT_2).compile().unwrap();
        let g = GridSpec::new(Domain::torus(), n, n).unwrap();
        let pts = frames_on_grid(&chart, &g).unwrap().iter().map(|f| f.f.value()).collect();
        (g, pts)
    }

    #[test]
    fn torus_mesh_counts() {
        let (g, pts) = torus_points(8);
        let mesh = MeshExport::from_points(&g, &pts, false);
        assert_eq!((mesh.vertices.len(), mesh.faces.len(), mesh.clipped), (64, 64, 0));
        // seam quads wrap to the first row and column
        assert!(mesh.faces.contains(&[57, 1, 2, 58]));
        assert!(mesh.faces.contains(&[64, 8, 1, 57]));
    }

    #[test]
    fn obj_round_trip_is_bit_identical() {
        let (g, pts) = torus_points(8);
        let mesh = MeshExport::from_points(&g, &pts, false);
        let text = mesh.to_obj();
        let (v, f) = parse_obj(&text).unwrap();
        assert_eq!(v, mesh.vertices);
        assert_eq!(f.len(), 64);
        assert!(f.iter().zip(&mesh.faces).all(|(a, b)| a.as_slice() == b.as_slice()));
        assert_eq!(MeshExport::from_points(&g, &pts, false).to_obj(), text);
    }

    #[test]
    fn antipodal_image() {
        // π(−x) = −π(x) / |π(x)|²
        let chart = ChartSpec::clifford_torus(FRAC_1_SQRT_2).compile().unwrap();
        let fr = chart.frame(&[0.7, 2.1]).unwrap();
        let r = transform(&fr, &Jet2::constant(2, 0.0), 1e-10).unwrap();
        let p = stereographic(fr.f.value().spatial(), false).unwrap();
        let q = stereographic(r.f_hat.value().spatial(), false).unwrap();
        let n2 = p.iter().map(|x| x * x).sum::<f64>();
        for k in 0..3 {
            assert!((q[k] + p[k] / n2).abs() < 1e-14);
        }
    }

    #[test]
    fn pole_is_clipped() {
        assert!(stereographic(&[0.0, 0.0, 0.0, 1.0], false).is_none());
        assert_eq!(stereographic(&[0.0, 0.0, 0.0, 1.0], true), Some([0.0; 3]));
        let g = GridSpec::new(Domain::patch([0.0, 1.0], [0.0, 1.0]), 4, 4).unwrap();
        let mut pts = vec![LieVector::spatial_vec(&[1.0, 0.0, 0.0, 0.0]); 16];
        pts[5] = LieVector::spatial_vec(&[0.0, 0.0, 0.0, 1.0]);
        let mesh = MeshExport::from_points(&g, &pts, false);
        assert_eq!(mesh.clipped, 1);
        assert_eq!(mesh.vertices.len(), 15);
        assert_eq!(mesh.faces.len(), 9 - 4);
    }

    #[test]
    fn malformed_obj() {
        assert!(parse_obj("v 1 2\n").is_err());
        assert!(parse_obj("v 1 2 3\nf 1 2 5\n").is_err());
        assert!(parse_obj("vt 0 0\n").is_err());
    }
}
