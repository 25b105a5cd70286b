//! Built-in named integrands used by the integral experiments and sources.
//!
//! Accepted spellings: `const1`, `const{2.5}`, `caseA`, `singular{mu=0.5,angle=1}`
//! and `poly{c0,c1,...}` with coefficients of `1, x, y, x², xy, y², x³, ...`
//! in graded order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ddlab_core::integrals::ScalarField;
use ddlab_core::{Point2, SharpDomain};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    /// `10 sin(πx) − 5y²`.
    CaseA,
    /// `|x − y|^(−mu)` with `y` on `∂D` in direction `angle` from the center.
    Singular { mu: f64, angle: f64 },
    Poly(Vec<f64>),
}

impl FieldSpec {
    pub fn to_field(&self, domain: &SharpDomain) -> ScalarField {
        match self {
            FieldSpec::Constant(c) => ScalarField::constant(*c),
            FieldSpec::CaseA => ScalarField::smooth(|p| 10.0 * (PI * p.x).sin() - 5.0 * p.y * p.y),
            FieldSpec::Singular { mu, angle } => ScalarField::inverse_power(boundary_point(domain, *angle), *mu),
            FieldSpec::Poly(c) => {
                let c = c.clone();
                ScalarField::smooth(move |p| eval_poly(&c, p))
            }
        }
    }
}

/// Graded monomial order: degree 0, then `x, y`, then `x², xy, y²`, ...
fn eval_poly(c: &[f64], p: Point2) -> f64 {
    let mut acc = 0.0;
    let mut k = 0;
    let mut deg = 0;
    while k < c.len() {
        for j in 0..=deg {
            if k == c.len() {
                break;
            }
            acc += c[k] * p.x.powi((deg - j) as i32) * p.y.powi(j as i32);
            k += 1;
        }
        deg += 1;
    }
    acc
}

/// Point of `∂D` on the ray from the bounding-box center at `angle`.
pub fn boundary_point(domain: &SharpDomain, angle: f64) -> Point2 {
    let (lo, hi) = domain.bounding_box();
    let center = (lo + hi) * 0.5;
    let dir = Point2::new(angle.cos(), angle.sin());
    if let SharpDomain::Disk { center, radius } = *domain {
        return center + dir * radius;
    }
    let (mut a, mut b) = (0.0, (hi - lo).norm());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if domain.signed_distance(center + dir * m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    center + dir * (0.5 * (a + b))
}

fn parse_err(spec: &str, message: &str) -> HarnessError {
    HarnessError::config("field", format!("`{spec}`: {message}"))
}

fn number(spec: &str, s: &str) -> Result<f64, HarnessError> {
    s.trim().parse::<f64>().map_err(|_| parse_err(spec, &format!("`{s}` is not a number")))
}

impl FromStr for FieldSpec {
    type Err = HarnessError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let s = spec.trim();
        let (name, args) = match s.find(['{', ':']) {
            Some(i) => {
                let rest = s[i + 1..].trim_end_matches('}');
                (&s[..i], Some(rest))
            }
            None => (s, None),
        };
        match (name.to_ascii_lowercase().as_str(), args) {
            ("const1", None) => Ok(FieldSpec::Constant(1.0)),
            ("const", Some(a)) => Ok(FieldSpec::Constant(number(spec, a)?)),
            ("casea", None) => Ok(FieldSpec::CaseA),
            ("singular", args) => {
                let (mut mu, mut angle) = (None, 1.0);
                for kv in args.unwrap_or("").split(',').filter(|t| !t.trim().is_empty()) {
                    let (k, v) = kv.split_once('=').ok_or_else(|| parse_err(spec, "expected key=value"))?;
                    match k.trim() {
                        "mu" => mu = Some(number(spec, v)?),
                        "angle" => angle = number(spec, v)?,
                        other => return Err(parse_err(spec, &format!("unknown parameter `{other}`"))),
                    }
                }
                let mu = mu.ok_or_else(|| parse_err(spec, "singular needs mu"))?;
                if !(0.0..2.0).contains(&mu) {
                    return Err(parse_err(spec, "mu must lie in [0, 2)"));
                }
                Ok(FieldSpec::Singular { mu, angle })
            }
            ("poly", Some(a)) => {
                let c = a.split(',').map(|t| number(spec, t)).collect::<Result<Vec<_>, _>>()?;
                Ok(FieldSpec::Poly(c))
            }
            _ => Err(parse_err(spec, "expected const1, const{c}, caseA, singular{mu=..,angle=..} or poly{..}")),
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Constant(c) if *c == 1.0 => f.write_str("const1"),
            FieldSpec::Constant(c) => write!(f, "const{{{c}}}"),
            FieldSpec::CaseA => f.write_str("caseA"),
            FieldSpec::Singular { mu, angle } => write!(f, "singular{{mu={mu},angle={angle}}}"),
            FieldSpec::Poly(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "poly{{{}}}", parts.join(","))
            }
        }
    }
}
