use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use ddlab_core::analysis::{
    largest_generalized_eigenvalue, restricted_error, restricted_errors, weighted_norm, EigenOptions,
    InequalityOperators, NormKind,
};
use ddlab_core::fem::FeFunction;
use ddlab_core::integrals::{diffuse_volume_integral, ScalarField};
use ddlab_core::mesh::{build_structured_mesh, push_subdivided, ElementQuadrature, TriMesh, TriangleRule};
use ddlab_core::sparse::CsrMatrix;
use ddlab_core::{ComputationalBox, Error, ExecPolicy, PhaseField, Point2, SProfile, SharpDomain};

const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn disk() -> SharpDomain {
    SharpDomain::disk(Point2::default(), R).unwrap()
}

fn setup(eps: f64, h: f64) -> (TriMesh, PhaseField) {
    let mesh = build_structured_mesh(&ComputationalBox::around(&disk(), 1.25 * eps), h).unwrap();
    (mesh, PhaseField::new(SProfile::Linear, eps, disk()).unwrap())
}

fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.n, m.n, |i, j| d[i][j])
}

/// Largest `λ` of `L v = λ R v` by Cholesky reduction, optionally on the
/// complement of `m`.
fn dense_top_eigenvalue(l: &CsrMatrix, r: &CsrMatrix, m: Option<&[f64]>) -> f64 {
    let (mut l, mut r) = (dense(l), dense(r));
    if let Some(m) = m {
        let n = m.len();
        let mm: f64 = m.iter().map(|v| v * v).sum();
        let p = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - m[i] * m[j] / mm);
        let eig = SymmetricEigen::new(p);
        let cols: Vec<_> =
            (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).map(|k| eig.eigenvectors.column(k).into_owned()).collect();
        let z = DMatrix::from_columns(&cols);
        l = z.transpose() * l * &z;
        r = z.transpose() * r * &z;
    }
    let chol = r.cholesky().expect("positive definite");
    let linv = chol.l().try_inverse().unwrap();
    let c = &linv * l * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    SymmetricEigen::new(c).eigenvalues.max()
}

#[test]
fn linear_reference_is_reproduced() {
    let (mesh, _) = setup(0.25, 0.05);
    let lin = |p: Point2| (2.0 + 3.0 * p.x - p.y, Point2::new(3.0, -1.0));
    let u = FeFunction::interpolate(&mesh, |p| lin(p).0);
    let errs = restricted_errors(&u, lin, &disk(), &mesh, &NormKind::RESTRICTED, 4, ExecPolicy::default()).unwrap();
    for (k, e) in errs {
        assert!(e < 1e-12, "{k}: {e}");
    }
}

#[test]
fn constant_shift_gives_its_size() {
    let (mesh, _) = setup(0.25, 0.05);
    let u = FeFunction::interpolate(&mesh, |_| 1.1);
    let e = restricted_error(&u, |_| (1.0, Point2::default()), &disk(), &mesh, NormKind::L2D).unwrap();
    assert!((e - 0.1).abs() < 1e-12);
    let zero = FeFunction::zeros(mesh.n_vertices());
    assert!(matches!(
        restricted_error(&zero, |_| (0.0, Point2::default()), &disk(), &mesh, NormKind::L2D),
        Err(Error::ZeroReference(_))
    ));
}

#[test]
fn nodal_values_outside_do_not_matter() {
    let (mesh, _) = setup(0.25, 0.05);
    let reference = |p: Point2| ((2.0 * p.x).sin() + p.y * p.y, Point2::new(2.0 * (2.0 * p.x).cos(), 2.0 * p.y));
    let u = FeFunction::interpolate(&mesh, |p| reference(p).0 + 0.01 * p.x);
    let mut bumped = u.clone();
    let h = mesh.h_max();
    for (v, p) in mesh.vertices.iter().enumerate() {
        // Hat functions of these vertices have support away from the closure of D.
        if disk().signed_distance(*p) > 2.0 * h {
            bumped.values[v] += 5.0 + p.y;
        }
    }
    let a = restricted_errors(&u, reference, &disk(), &mesh, &NormKind::RESTRICTED, 4, ExecPolicy::default()).unwrap();
    let b = restricted_errors(&bumped, reference, &disk(), &mesh, &NormKind::RESTRICTED, 4, ExecPolicy::default()).unwrap();
    for ((_, x), (_, y)) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn weighted_norm_examples() {
    let eps = 0.125;
    let (mesh, pf) = setup(eps, 0.5 * eps * eps);
    let q = ElementQuadrature::default();
    let ones = FeFunction::interpolate(&mesh, |_| 1.0);
    let got = weighted_norm(&ones, &pf, &mesh, &q, NormKind::L2Weighted, ExecPolicy::default()).unwrap();
    let want = (PI * (R * R + eps * eps / 3.0)).sqrt();
    assert!((got - want).abs() < 1e-4 * want);

    let zero = FeFunction::zeros(mesh.n_vertices());
    assert_eq!(weighted_norm(&zero, &pf, &mesh, &q, NormKind::W12Weighted, ExecPolicy::default()).unwrap(), 0.0);
    assert!(weighted_norm(&zero, &pf, &mesh, &q, NormKind::L2D, ExecPolicy::default()).is_err());
}

#[test]
fn weighted_norm_of_x_against_direct_quadrature() {
    let eps = 0.125;
    let (mesh, pf) = setup(eps, 1.0 / 64.0);
    let v = FeFunction::interpolate(&mesh, |p| p.x);
    let got = weighted_norm(&v, &pf, &mesh, &ElementQuadrature::default(), NormKind::L2Weighted, ExecPolicy::default())
        .unwrap();
    // Every element refined three times with the degree-2 rule.
    let rule = TriangleRule::degree2();
    let mut pts = Vec::new();
    let mut acc = 0.0;
    for t in 0..mesh.n_triangles() {
        pts.clear();
        push_subdivided(&mesh.triangle(t), &rule, 3, &mut pts);
        for &(p, w) in &pts {
            acc += w * pf.omega(p) * p.x * p.x;
        }
    }
    let want = acc.sqrt();
    assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
}

#[test]
fn weighted_norm_matches_volume_integral_bitwise() {
    let eps = 0.125;
    let (mesh, pf) = setup(eps, 0.5 * eps * eps);
    let q = ElementQuadrature::default();
    let mesh = Arc::new(mesh);
    let v = Arc::new(FeFunction::interpolate(&mesh, |p| (3.0 * p.x).cos() + p.y));
    for exec in [ExecPolicy::Sequential, ExecPolicy::Parallel] {
        let norm = weighted_norm(&v, &pf, &mesh, &q, NormKind::L2Weighted, exec).unwrap();
        let (m, vv) = (mesh.clone(), v.clone());
        let sq = ScalarField::smooth(move |p| {
            let (x, _) = vv.eval(&m, p).unwrap();
            x * x
        });
        let integral = diffuse_volume_integral(&sq, &pf, &mesh, &q, exec).unwrap();
        assert_eq!(norm.to_bits(), integral.sqrt().to_bits());
    }
}

#[test]
fn inequality_constants_match_dense_oracle() {
    let (mesh, pf) = setup(0.25, 0.125);
    let ops = InequalityOperators::assemble(&mesh, &pf, &ElementQuadrature::default(), ExecPolicy::default()).unwrap();
    assert!(ops.n_dofs() <= 300, "{}", ops.n_dofs());
    let opts = EigenOptions::default();
    let h1 = ops.stiffness.add_scaled(1.0, &ops.mass);
    let kb = ops.stiffness.add_scaled(1.0, &ops.boundary);

    let checks = [
        ("trace", ops.trace_constant(&opts).unwrap().value, dense_top_eigenvalue(&ops.boundary, &h1, None)),
        (
            "poincare-friedrichs",
            ops.poincare_friedrichs_constant(&opts).unwrap().value,
            dense_top_eigenvalue(&ops.mass, &kb, None),
        ),
        (
            "poincare-mean",
            ops.poincare_mean_constant(&opts).unwrap().value,
            dense_top_eigenvalue(&ops.mass, &ops.stiffness, Some(&ops.mean)),
        ),
    ];
    for (name, got, want) in checks {
        assert!((got - want).abs() < 1e-5 * want, "{name}: {got} vs {want}");
    }
}

#[test]
fn stronger_boundary_term_does_not_raise_the_constant() {
    let (mesh, pf) = setup(0.25, 1.0 / 32.0);
    let mut ops = InequalityOperators::assemble(&mesh, &pf, &ElementQuadrature::default(), ExecPolicy::default()).unwrap();
    let opts = EigenOptions::default();
    let before = ops.poincare_friedrichs_constant(&opts).unwrap().value;
    ops.boundary = ops.boundary.scaled(10.0);
    let after = ops.poincare_friedrichs_constant(&opts).unwrap().value;
    assert!(after <= before * (1.0 + 1e-9), "{before} -> {after}");
}

#[test]
fn vanishing_boundary_mass_gives_zero() {
    let (mesh, pf) = setup(0.25, 0.125);
    let ops = InequalityOperators::assemble(&mesh, &pf, &ElementQuadrature::default(), ExecPolicy::default()).unwrap();
    let h1 = ops.stiffness.add_scaled(1.0, &ops.mass);
    let zero = ops.boundary.scaled(0.0);
    let est = largest_generalized_eigenvalue(&zero, &h1, None, vec![vec![1.0; ops.n_dofs()]], &EigenOptions::default()).unwrap();
    assert_eq!(est.value, 0.0);
}

#[test]
fn mean_constant_ignores_constants() {
    // A constant start vector is projected away entirely; the estimate
    // still comes from the mean-free part.
    let (mesh, pf) = setup(0.25, 0.125);
    let ops = InequalityOperators::assemble(&mesh, &pf, &ElementQuadrature::default(), ExecPolicy::default()).unwrap();
    let ones = vec![1.0; ops.n_dofs()];
    let projected: f64 = {
        let mm: f64 = ops.mean.iter().map(|v| v * v).sum();
        let s: f64 = ops.mean.iter().zip(&ones).map(|(a, b)| a * b).sum::<f64>() / mm;
        ones.iter().zip(&ops.mean).map(|(o, m)| (o - s * m).abs()).fold(0.0, f64::max)
    };
    // Constants are not orthogonal to the weighted mean, so they never
    // enter the deflated problem.
    assert!(projected > 0.0);
    let rq_of_ones = {
        let mo = ops.mass.mul(&ones, ExecPolicy::Sequential);
        let ko = ops.stiffness.mul(&ones, ExecPolicy::Sequential);
        let num: f64 = ones.iter().zip(&mo).map(|(a, b)| a * b).sum();
        let den: f64 = ones.iter().zip(&ko).map(|(a, b)| a * b).sum();
        (num, den)
    };
    assert!(rq_of_ones.1.abs() < 1e-10 * rq_of_ones.0);
    let c = ops.poincare_mean_constant(&EigenOptions::default()).unwrap().value;
    assert!(c.is_finite() && c > 0.0);
}
