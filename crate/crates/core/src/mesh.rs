//! Structured triangulations of the computational box and element
//! quadrature that resolves the diffuse band.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::geometry::{ComputationalBox, Point2, SharpDomain};
use crate::phasefield::PhaseField;

/// Default cap on the number of mesh vertices.
pub const DEFAULT_VERTEX_CAP: usize = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: Point2,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

/// Triangulation with counter-clockwise triangles.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Point2>,
    pub triangles: Vec<[u32; 3]>,
    /// Requested edge length.
    pub h: f64,
    grid: Grid,
}

impl TriMesh {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn triangle(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Largest element diameter (the cell diagonal).
    pub fn h_max(&self) -> f64 {
        self.grid.hx.hypot(self.grid.hy)
    }

    /// Index of a triangle containing `p`, or `None` outside the box.
    pub fn locate(&self, p: Point2) -> Option<usize> {
        let g = &self.grid;
        let sx = (p.x - g.origin.x) / g.hx;
        let sy = (p.y - g.origin.y) / g.hy;
        if !(sx >= 0.0 && sy >= 0.0 && sx <= g.nx as f64 && sy <= g.ny as f64) {
            return None;
        }
        let i = (sx.floor() as usize).min(g.nx - 1);
        let j = (sy.floor() as usize).min(g.ny - 1);
        let upper = (sy - j as f64) > (sx - i as f64);
        Some(2 * (j * g.nx + i) + usize::from(upper))
    }

    /// Writes `v x y` lines followed by `t i j k` lines.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {} {}", v.x, v.y)?;
        }
        for t in &self.triangles {
            writeln!(out, "t {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

pub fn build_structured_mesh(bx: &ComputationalBox, h: f64) -> Result<TriMesh> {
    build_structured_mesh_capped(bx, h, DEFAULT_VERTEX_CAP)
}

/// Uniform grid of cells of side at most `h`, each split along its
/// lower-left to upper-right diagonal.
pub fn build_structured_mesh_capped(bx: &ComputationalBox, h: f64, cap: usize) -> Result<TriMesh> {
    let min_extent = bx.width().min(bx.height());
    if !(h > 0.0 && h <= 0.5 * min_extent) {
        return Err(Error::Config(format!(
            "mesh size h = {h} must lie in (0, {}]",
            0.5 * min_extent
        )));
    }
    let cells = |len: f64| ((len / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let nx = cells(bx.width());
    let ny = cells(bx.height());
    let requested = (nx + 1).saturating_mul(ny + 1);
    if requested > cap || requested > u32::MAX as usize {
        return Err(Error::ResourceLimit { requested, cap });
    }
    let hx = bx.width() / nx as f64;
    let hy = bx.height() / ny as f64;

    let mut vertices = Vec::with_capacity(requested);
    for j in 0..=ny {
        let y = if j == ny { bx.max.y } else { bx.min.y + j as f64 * hy };
        for i in 0..=nx {
            let x = if i == nx { bx.max.x } else { bx.min.x + i as f64 * hx };
            vertices.push(Point2::new(x, y));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
        h,
        grid: Grid { origin: bx.min, nx, ny, hx, hy },
    })
}

/// Symmetric quadrature rule on the reference triangle, stored as
/// barycentric coordinates with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<([f64; 3], f64)>,
}

impl TriangleRule {
    pub fn centroid() -> Self {
        TriangleRule { degree: 1, points: vec![([1.0 / 3.0; 3], 1.0)] }
    }

    pub fn degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        TriangleRule {
            degree: 2,
            points: vec![([a, b, b], 1.0 / 3.0), ([b, a, b], 1.0 / 3.0), ([b, b, a], 1.0 / 3.0)],
        }
    }

    /// Six-point rule exact for polynomials of degree four.
    pub fn degree4() -> Self {
        let a1 = 0.445_948_490_915_965;
        let w1 = 0.223_381_589_678_011;
        let a2 = 0.091_576_213_509_771;
        let w2 = 0.109_951_743_655_322;
        let b1 = 1.0 - 2.0 * a1;
        let b2 = 1.0 - 2.0 * a2;
        TriangleRule {
            degree: 4,
            points: vec![
                ([b1, a1, a1], w1),
                ([a1, b1, a1], w1),
                ([a1, a1, b1], w1),
                ([b2, a2, a2], w2),
                ([a2, b2, a2], w2),
                ([a2, a2, b2], w2),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends the physical points and weights of this rule on `tri`.
    pub fn push_points(&self, tri: &[Point2; 3], out: &mut Vec<(Point2, f64)>) {
        let area = signed_area(tri);
        for (b, w) in &self.points {
            out.push((barycentric_point(tri, b), w * area));
        }
    }
}

/// Base rule plus the number of uniform refinements applied to band
/// elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementQuadrature {
    pub base_rule: TriangleRule,
    pub band_subdivision_depth: usize,
}

impl Default for ElementQuadrature {
    fn default() -> Self {
        ElementQuadrature { base_rule: TriangleRule::degree4(), band_subdivision_depth: 2 }
    }
}

/// Where an element sits relative to the band `|d| < eps`. Conservative:
/// anything that might touch the band is `Band`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementBand {
    Inside,
    Band,
    Outside,
}

pub fn element_band(tri: &[Point2; 3], domain: &SharpDomain, eps: f64) -> ElementBand {
    let diam = diameter(tri);
    let mut dmin = f64::INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    for p in tri {
        let d = domain.signed_distance(*p);
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmax + diam <= -eps {
        ElementBand::Inside
    } else if dmin - diam >= eps {
        ElementBand::Outside
    } else {
        ElementBand::Band
    }
}

/// Quadrature points of one element: band elements are refined
/// `band_subdivision_depth` times before the base rule is applied. Weights
/// sum to the element area.
pub fn quadrature_points(
    tri: &[Point2; 3],
    quad: &ElementQuadrature,
    pf: &PhaseField,
    out: &mut Vec<(Point2, f64)>,
) {
    out.clear();
    let depth = match element_band(tri, &pf.domain, pf.eps) {
        ElementBand::Band => quad.band_subdivision_depth,
        _ => 0,
    };
    push_subdivided(tri, &quad.base_rule, depth, out);
}

/// Applies `rule` on each of the `4^depth` congruent children of `tri`.
pub fn push_subdivided(tri: &[Point2; 3], rule: &TriangleRule, depth: usize, out: &mut Vec<(Point2, f64)>) {
    if depth == 0 {
        rule.push_points(tri, out);
        return;
    }
    for child in split4(tri) {
        push_subdivided(&child, rule, depth - 1, out);
    }
}

/// Quadrature of `χ_D` times the integrand: elements cut by `∂D` are
/// refined `depth` times and each child is kept or dropped according to the
/// sign of the distance at its centroid. Elements away from the boundary
/// are kept or dropped whole.
pub fn push_inside_points(
    tri: &[Point2; 3],
    rule: &TriangleRule,
    domain: &SharpDomain,
    depth: usize,
    out: &mut Vec<(Point2, f64)>,
) {
    let diam = diameter(tri);
    let dc = domain.signed_distance(centroid(tri));
    if dc.abs() >= diam || depth == 0 {
        if dc < 0.0 {
            rule.push_points(tri, out);
        }
        return;
    }
    for child in split4(tri) {
        push_inside_points(&child, rule, domain, depth - 1, out);
    }
}

pub fn split4(tri: &[Point2; 3]) -> [[Point2; 3]; 4] {
    let [a, b, c] = *tri;
    let ab = (a + b) * 0.5;
    let bc = (b + c) * 0.5;
    let ca = (c + a) * 0.5;
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
}

#[inline]
pub fn signed_area(tri: &[Point2; 3]) -> f64 {
    let [a, b, c] = *tri;
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

#[inline]
pub fn centroid(tri: &[Point2; 3]) -> Point2 {
    (tri[0] + tri[1] + tri[2]) * (1.0 / 3.0)
}

pub fn diameter(tri: &[Point2; 3]) -> f64 {
    let [a, b, c] = *tri;
    (a - b).norm().max((b - c).norm()).max((c - a).norm())
}

#[inline]
fn barycentric_point(tri: &[Point2; 3], b: &[f64; 3]) -> Point2 {
    Point2::new(
        b[0] * tri[0].x + b[1] * tri[1].x + b[2] * tri[2].x,
        b[0] * tri[0].y + b[1] * tri[1].y + b[2] * tri[2].y,
    )
}

/// Linear Lagrange element: barycentric shape functions and their constant
/// gradients.
#[derive(Debug, Clone, Copy)]
pub struct P1Element {
    pub vertices: [Point2; 3],
    pub area: f64,
    pub gradients: [Point2; 3],
}

impl P1Element {
    pub fn new(tri: &[Point2; 3]) -> Result<Self> {
        let area = signed_area(tri);
        let h = diameter(tri);
        if !(area > 1e-14 * h * h) {
            return Err(Error::DegenerateElement { area });
        }
        let [a, b, c] = *tri;
        let inv = 1.0 / (2.0 * area);
        let gradients = [
            Point2::new(b.y - c.y, c.x - b.x) * inv,
            Point2::new(c.y - a.y, a.x - c.x) * inv,
            Point2::new(a.y - b.y, b.x - a.x) * inv,
        ];
        Ok(P1Element { vertices: *tri, area, gradients })
    }

    #[inline]
    pub fn shape_values(&self, p: Point2) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let inv = 1.0 / (2.0 * self.area);
        let l0 = ((b.x - p.x) * (c.y - p.y) - (c.x - p.x) * (b.y - p.y)) * inv;
        let l1 = ((c.x - p.x) * (a.y - p.y) - (a.x - p.x) * (c.y - p.y)) * inv;
        [l0, l1, 1.0 - l0 - l1]
    }
}
