//! Sharp domains, their oriented distance functions and the bounding box the
//! diffuse problems are posed on.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::gauss::gauss_legendre_on;

/// Points closer than this to the ridge set of a distance function have no
/// well-defined gradient.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// The domain `D` on which the original boundary value problem is posed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SharpDomain {
    Disk { center: Point2, radius: f64 },
    Rectangle { min: Point2, max: Point2 },
}

/// Position of a point relative to the tubular band `|d| < eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandClass {
    Inside,
    Band,
    Outside,
}

impl SharpDomain {
    pub fn disk(center: Point2, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
            return Err(Error::Config(format!("disk radius must be positive, got {radius}")));
        }
        Ok(SharpDomain::Disk { center, radius })
    }

    pub fn rectangle(min: Point2, max: Point2) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Config("rectangle requires min < max componentwise".into()));
        }
        Ok(SharpDomain::Rectangle { min, max })
    }

    /// Oriented distance: negative inside, zero on the boundary, positive
    /// outside.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        match *self {
            SharpDomain::Disk { center, radius } => (p - center).norm() - radius,
            SharpDomain::Rectangle { min, max } => {
                let dx = (min.x - p.x).max(p.x - max.x);
                let dy = (min.y - p.y).max(p.y - max.y);
                if dx <= 0.0 && dy <= 0.0 {
                    dx.max(dy)
                } else {
                    dx.max(0.0).hypot(dy.max(0.0))
                }
            }
        }
    }

    /// Unit gradient of the oriented distance, i.e. the outward normal of
    /// the level set through `p`.
    /// Nearest boundary point of `p` and the unit normal `∇d` there, taken
    /// as the limit along the segment from the boundary point to `p`.
    /// Interior points equidistant from two edges of a rectangle go to the
    /// vertical edge.
    pub fn closest_point(&self, p: Point2) -> Result<(Point2, Point2)> {
        match *self {
            SharpDomain::Disk { center, radius } => {
                let n = self.distance_gradient(p)?;
                Ok((center + n * radius, n))
            }
            SharpDomain::Rectangle { min, max } => {
                let q = Point2::new(p.x.clamp(min.x, max.x), p.y.clamp(min.y, max.y));
                if q != p {
                    let r = p - q;
                    return Ok((q, r * (1.0 / r.norm())));
                }
                let gaps = [p.x - min.x, max.x - p.x, p.y - min.y, max.y - p.y];
                let k = (0..4).fold(0, |best, k| if gaps[k] < gaps[best] { k } else { best });
                Ok(match k {
                    0 => (Point2::new(min.x, p.y), Point2::new(-1.0, 0.0)),
                    1 => (Point2::new(max.x, p.y), Point2::new(1.0, 0.0)),
                    2 => (Point2::new(p.x, min.y), Point2::new(0.0, -1.0)),
                    _ => (Point2::new(p.x, max.y), Point2::new(0.0, 1.0)),
                })
            }
        }
    }

    pub fn distance_gradient(&self, p: Point2) -> Result<Point2> {
        match *self {
            SharpDomain::Disk { center, .. } => {
                let r = p - center;
                let n = r.norm();
                if n < SINGULAR_TOL {
                    return Err(Error::SingularPoint(p));
                }
                Ok(r * (1.0 / n))
            }
            SharpDomain::Rectangle { min, max } => {
                let sx = if p.x - max.x > min.x - p.x { 1.0 } else { -1.0 };
                let sy = if p.y - max.y > min.y - p.y { 1.0 } else { -1.0 };
                let dx = (min.x - p.x).max(p.x - max.x);
                let dy = (min.y - p.y).max(p.y - max.y);
                if dx <= 0.0 && dy <= 0.0 {
                    // Interior: nearest edge wins, ties lie on the ridge.
                    if (dx - dy).abs() < SINGULAR_TOL {
                        Err(Error::SingularPoint(p))
                    } else if dx > dy {
                        Ok(Point2::new(sx, 0.0))
                    } else {
                        Ok(Point2::new(0.0, sy))
                    }
                } else if dx > 0.0 && dy > 0.0 {
                    let n = dx.hypot(dy);
                    Ok(Point2::new(sx * dx / n, sy * dy / n))
                } else if dx > 0.0 {
                    Ok(Point2::new(sx, 0.0))
                } else {
                    Ok(Point2::new(0.0, sy))
                }
            }
        }
    }

    pub fn band_classify(&self, p: Point2, eps: f64) -> BandClass {
        let d = self.signed_distance(p);
        if d <= -eps {
            BandClass::Inside
        } else if d >= eps {
            BandClass::Outside
        } else {
            BandClass::Band
        }
    }

    /// Nodes and weights approximating `∫_{∂D} h dσ`.
    ///
    /// `order` is a refinement level: the disk uses `64 * order` uniformly
    /// spaced angular nodes (spectrally accurate for smooth periodic
    /// integrands), the rectangle splits each edge into `order` panels with
    /// an 8-point Gauss rule on each.
    pub fn boundary_quadrature(&self, order: usize) -> Vec<(Point2, f64)> {
        let order = order.max(1);
        match *self {
            SharpDomain::Disk { center, radius } => {
                let n = 64 * order;
                let w = 2.0 * PI * radius / n as f64;
                (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        (center + Point2::new(t.cos(), t.sin()) * radius, w)
                    })
                    .collect()
            }
            SharpDomain::Rectangle { min, max } => {
                let corners = [
                    min,
                    Point2::new(max.x, min.y),
                    max,
                    Point2::new(min.x, max.y),
                ];
                let mut out = Vec::with_capacity(4 * order * 8);
                for e in 0..4 {
                    let a = corners[e];
                    let b = corners[(e + 1) % 4];
                    let len = (b - a).norm();
                    for panel in 0..order {
                        let s0 = panel as f64 / order as f64;
                        let s1 = (panel + 1) as f64 / order as f64;
                        for (s, w) in gauss_legendre_on(8, s0, s1) {
                            out.push((a + (b - a) * s, w * len));
                        }
                    }
                }
                out
            }
        }
    }

    /// Axis-aligned bounding box of the closure of `D`.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        match *self {
            SharpDomain::Disk { center, radius } => (
                center - Point2::new(radius, radius),
                center + Point2::new(radius, radius),
            ),
            SharpDomain::Rectangle { min, max } => (min, max),
        }
    }

    /// Largest interface width for which the closest-point projection from
    /// the band onto `∂D` stays single-valued away from the gradient
    /// singularities. Disk widths must stay strictly below this value,
    /// rectangle widths may reach it.
    pub fn max_eps(&self) -> f64 {
        match *self {
            SharpDomain::Disk { radius, .. } => radius,
            SharpDomain::Rectangle { min, max } => 0.5 * (max.x - min.x).min(max.y - min.y),
        }
    }

    pub fn check_eps(&self, eps: f64) -> Result<()> {
        let limit = self.max_eps();
        let ok = match self {
            SharpDomain::Disk { .. } => eps > 0.0 && eps < limit,
            SharpDomain::Rectangle { .. } => eps > 0.0 && eps <= limit,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "eps = {eps} outside the admissible range (0, {limit}) for this domain"
            )))
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            SharpDomain::Disk { radius, .. } => PI * radius * radius,
            SharpDomain::Rectangle { min, max } => (max.x - min.x) * (max.y - min.y),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            SharpDomain::Disk { radius, .. } => 2.0 * PI * radius,
            SharpDomain::Rectangle { min, max } => 2.0 * ((max.x - min.x) + (max.y - min.y)),
        }
    }
}

/// The simple computational domain `Ω` that contains `D` and its band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputationalBox {
    pub min: Point2,
    pub max: Point2,
}

impl ComputationalBox {
    pub fn new(min: Point2, max: Point2) -> Result<Self> {
        if !(min.x < max.x && min.y < max.y) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Config("computational box requires min < max".into()));
        }
        Ok(ComputationalBox { min, max })
    }

    /// Bounding box of `D` grown by `margin` on every side.
    pub fn around(domain: &SharpDomain, margin: f64) -> Self {
        let (lo, hi) = domain.bounding_box();
        let m = Point2::new(margin, margin);
        ComputationalBox { min: lo - m, max: hi + m }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Checks that `D_eps` lies strictly inside the box.
    pub fn check_contains(&self, domain: &SharpDomain, eps: f64) -> Result<()> {
        let (lo, hi) = domain.bounding_box();
        let fits = lo.x - eps > self.min.x
            && lo.y - eps > self.min.y
            && hi.x + eps < self.max.x
            && hi.y + eps < self.max.y;
        if fits {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "computational box does not contain the domain with margin {eps}"
            )))
        }
    }
}
