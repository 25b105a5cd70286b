use std::f64::consts::PI;

use ddlab_core::integrals::{
    diffuse_surface_integral, diffuse_volume_integral, sharp_surface_integral, surface_error_study,
    volume_error_study, ScalarField, StudySetup,
};
use ddlab_core::mesh::{build_structured_mesh, ElementQuadrature};
use ddlab_core::{ComputationalBox, ExecPolicy, PhaseField, Point2, SProfile, SharpDomain};

const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn disk() -> SharpDomain {
    SharpDomain::disk(Point2::default(), R).unwrap()
}

/// Profile evaluated independently of the library.
fn s_test(profile: &str, t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    match profile {
        "linear" => t,
        "cubic" => 0.5 * (3.0 * t - t.powi(3)),
        "quintic" => 15.0 / 8.0 * t - 1.25 * t.powi(3) + 3.0 / 8.0 * t.powi(5),
        _ => unreachable!(),
    }
}

/// Composite Simpson on [a, b].
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// `∫ ω dx` over the plane for the disk, as a radial integral split at the
/// band edges where the profile has kinks.
fn radial_area_oracle(profile: &str, eps: f64) -> f64 {
    let omega = |r: f64| 0.5 * (1.0 + s_test(profile, -(r - R) / eps));
    let inner = PI * (R - eps).powi(2);
    inner + simpson(|r| 2.0 * PI * r * omega(r), R - eps, R + eps, 20_000)
}

fn mesh_for(domain: &SharpDomain, eps: f64, h: f64) -> ddlab_core::mesh::TriMesh {
    build_structured_mesh(&ComputationalBox::around(domain, 1.25 * eps), h).unwrap()
}

#[test]
fn radial_oracle_agrees_with_closed_form() {
    // ∫ω = πR² + πε²(1 − m), m = 2/3 (linear), 4/5 (cubic).
    for (name, m) in [("linear", 2.0 / 3.0), ("cubic", 0.8)] {
        let eps = 0.1;
        let closed = PI * R * R + PI * eps * eps * (1.0 - m);
        assert!((radial_area_oracle(name, eps) - closed).abs() < 1e-10 * closed);
    }
}

#[test]
fn diffuse_area_of_disk() {
    let eps = 0.1;
    let q = ElementQuadrature::default();
    for (profile, name) in [(SProfile::Linear, "linear"), (SProfile::Cubic, "cubic"), (SProfile::Quintic, "quintic")] {
        let pf = PhaseField::new(profile, eps, disk()).unwrap();
        let mesh = mesh_for(&disk(), eps, 0.5 * eps * eps);
        let got = diffuse_volume_integral(&ScalarField::constant(1.0), &pf, &mesh, &q, ExecPolicy::default()).unwrap();
        let want = radial_area_oracle(name, eps);
        assert!((got - want).abs() < 1e-4 * want, "{name}: {got} vs {want}");
    }
}

#[test]
fn diffuse_perimeter_of_circle_is_exact() {
    let q = ElementQuadrature::default();
    for profile in SProfile::builtin() {
        for eps in [0.25, 0.1] {
            let pf = PhaseField::new(profile.clone(), eps, disk()).unwrap();
            let mesh = mesh_for(&disk(), eps, 0.5 * eps * eps);
            let got = diffuse_surface_integral(&ScalarField::constant(1.0), &pf, &mesh, &q, ExecPolicy::default()).unwrap();
            let want = 2.0 * PI * R;
            assert!((got - want).abs() < 1e-4 * want, "{profile} eps={eps}: {got}");
        }
    }
}

#[test]
fn diffuse_perimeter_of_square() {
    // Band area 8ε + πε² − 4ε² times the constant density 1/(2ε).
    let sq = SharpDomain::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap();
    let eps = 1.0 / 16.0;
    let pf = PhaseField::new(SProfile::Linear, eps, sq).unwrap();
    let mesh = mesh_for(&sq, eps, 0.5 * eps * eps);
    let got = diffuse_surface_integral(
        &ScalarField::constant(1.0),
        &pf,
        &mesh,
        &ElementQuadrature::default(),
        ExecPolicy::default(),
    )
    .unwrap();
    let want = 4.0 + eps * (PI / 2.0 - 2.0);
    assert!((got - want).abs() < 1e-4 * want, "{got} vs {want}");
    assert!((got - 4.0).abs() < 2e-2 * 4.0);
}

#[test]
fn odd_boundary_data_vanishes() {
    let eps = 0.125;
    let g = ScalarField::smooth(|p| p.y);
    let pf = PhaseField::new(SProfile::Cubic, eps, disk()).unwrap();
    let mesh = mesh_for(&disk(), eps, 0.5 * eps * eps);
    let got = diffuse_surface_integral(&g, &pf, &mesh, &ElementQuadrature::default(), ExecPolicy::default()).unwrap();
    assert!(got.abs() < 1e-8);
    assert!(sharp_surface_integral(&g, &disk(), 8).unwrap().abs() < 1e-8);
}

#[test]
fn constant_integrand_error_matches_closed_form() {
    for (profile, m) in [(SProfile::Linear, 2.0 / 3.0), (SProfile::Cubic, 0.8)] {
        let setup = StudySetup::new(profile, disk(), vec![0.25, 0.125, 0.0625]);
        let study = volume_error_study(&ScalarField::constant(1.0), &setup).unwrap();
        for row in &study.rows {
            let want = PI * row.eps * row.eps * (1.0 - m);
            assert!((row.error - want).abs() < 1e-3 * want, "{row:?}");
        }
        for rate in &study.eoc {
            assert!((rate - 2.0).abs() < 0.02);
        }
        // |∫ω − |D|| ≈ C ε² with C = π(1 − m) recovered within 10%.
        let c_fit = study.rows.last().map(|r| r.error / (r.eps * r.eps)).unwrap();
        assert!((c_fit / (PI * (1.0 - m)) - 1.0).abs() < 0.1);
    }
}

#[test]
fn mirror_even_integrand_is_second_order() {
    // Even under reflection across the circle, so the first-order term cancels.
    let h = ScalarField::smooth(|p: Point2| 1.0 + 3.0 * (p.norm() - R).powi(2) + p.x * 0.0);
    let setup = StudySetup::new(SProfile::Linear, disk(), vec![0.25, 0.125, 0.0625]);
    let study = volume_error_study(&h, &setup).unwrap();
    for rate in &study.eoc {
        assert!(*rate >= 1.9, "{:?}", study.eoc);
    }
}

#[test]
fn singular_integrand_rate_lower_bound() {
    let mu = 0.8;
    let pole = Point2::new(R * 1f64.cos(), R * 1f64.sin());
    let h = ScalarField::inverse_power(pole, mu);
    let setup = StudySetup::new(SProfile::Linear, disk(), vec![0.25, 0.125, 0.0625]);
    let study = volume_error_study(&h, &setup).unwrap();
    for rate in &study.eoc {
        assert!(*rate >= 1.0 - mu / 2.0 - 0.1, "{:?}", study.eoc);
    }
}

#[test]
fn surface_errors() {
    let setup = StudySetup::new(SProfile::Linear, disk(), vec![0.25, 0.125, 0.0625]);
    let ones = surface_error_study(&ScalarField::constant(1.0), &setup).unwrap();
    // Relative to the perimeter, matching the exactness invariant.
    assert!(ones.rows.iter().all(|r| r.error < 1e-4 * r.sharp_value), "{:?}", ones.rows);

    let study = surface_error_study(&ScalarField::smooth(|p| p.x * p.x), &setup).unwrap();
    let last = *study.eoc.last().unwrap();
    assert!((last - 2.0).abs() < 0.2, "{:?}", study.eoc);
}

#[test]
fn parallel_and_sequential_agree_bitwise() {
    let eps = 0.125;
    let h = ScalarField::smooth(|p| 10.0 * (PI * p.x).sin() - 5.0 * p.y * p.y);
    let pf = PhaseField::new(SProfile::Quintic, eps, disk()).unwrap();
    let mesh = mesh_for(&disk(), eps, 0.5 * eps * eps);
    let q = ElementQuadrature::default();
    let a = diffuse_volume_integral(&h, &pf, &mesh, &q, ExecPolicy::Sequential).unwrap();
    let b = diffuse_volume_integral(&h, &pf, &mesh, &q, ExecPolicy::Parallel).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let a = diffuse_surface_integral(&h, &pf, &mesh, &q, ExecPolicy::Sequential).unwrap();
    let b = diffuse_surface_integral(&h, &pf, &mesh, &q, ExecPolicy::Parallel).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}
