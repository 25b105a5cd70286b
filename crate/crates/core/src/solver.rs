//! Jacobi-preconditioned conjugate gradients, optionally restricted to the
//! orthogonal complement of a single constraint vector.

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Preconditioner {
    #[default]
    Jacobi,
    /// Symmetric successive over-relaxation with the given factor in (0, 2).
    /// The sweeps are sequential.
    Ssor { omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Target for `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    /// Iteration cap; `None` means `50 √n`.
    pub max_iter: Option<usize>,
    pub exec: ExecPolicy,
    pub preconditioner: Preconditioner,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-10, max_iter: None, exec: ExecPolicy::default(), preconditioner: Preconditioner::Jacobi }
    }
}

impl CgOptions {
    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| ((50.0 * (n as f64).sqrt()).ceil() as usize).max(50))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: f64,
    /// Multiplier of the constraint row, zero when unconstrained.
    pub multiplier: f64,
}

/// Orthogonal projector `I − m mᵀ / mᵀm`.
struct Projector<'a> {
    m: &'a [f64],
    mm: f64,
}

impl Projector<'_> {
    fn apply(&self, v: &mut [f64], exec: ExecPolicy) {
        let s = dot(self.m, v, exec) / self.mm;
        for (vi, mi) in v.iter_mut().zip(self.m) {
            *vi -= s * mi;
        }
    }
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from the
/// contents of `x`.
///
/// With a `constraint` vector `m` the bordered system
/// `[A m; mᵀ 0] [x; λ] = [b; 0]` is solved instead, by running CG on the
/// complement of `m` where `A` only needs to be positive definite. The
/// returned residual is that of the bordered system.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    constraint: Option<&[f64]>,
    opts: &CgOptions,
) -> Result<CgReport> {
    let n = a.n;
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let exec = opts.exec;
    let proj = constraint.map(|m| Projector { m, mm: dot(m, m, exec) });
    let project = |v: &mut [f64]| {
        if let Some(p) = &proj {
            p.apply(v, exec);
        }
    };

    let diag: Vec<f64> = a.diagonal().into_iter().map(|d| if d > 0.0 { d } else { 1.0 }).collect();
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let precondition = |r: &[f64], z: &mut [f64]| match opts.preconditioner {
        Preconditioner::Jacobi => exec.fill(z, |i| inv_diag[i] * r[i]),
        Preconditioner::Ssor { omega } => ssor_apply(a, &diag, omega, r, z),
    };

    let mut rhs = b.to_vec();
    project(&mut rhs);
    let b_norm = norm2(&rhs, exec);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, residual: 0.0, multiplier: multiplier(a, b, x, constraint, exec) });
    }
    project(x);

    let cap = opts.iteration_cap(n);
    let mut iterations = 0;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];

    // Restart a few times if the recursive residual drifted from the true one.
    for _restart in 0..4 {
        a.matvec(x, &mut r, exec);
        exec.fill(&mut q, |i| b[i] - r[i]);
        std::mem::swap(&mut r, &mut q);
        project(&mut r);
        let true_res = norm2(&r, exec) / b_norm;
        if true_res <= opts.tol {
            return Ok(CgReport {
                iterations,
                residual: true_res,
                multiplier: multiplier(a, b, x, constraint, exec),
            });
        }
        if iterations >= cap {
            return Err(Error::NoConvergence { iterations, residual: true_res });
        }

        precondition(&r, &mut z);
        project(&mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z, exec);
        while iterations < cap {
            iterations += 1;
            a.matvec(&p, &mut q, exec);
            project(&mut q);
            let pq = dot(&p, &q, exec);
            if !(pq > 0.0) {
                let res = norm2(&r, exec) / b_norm;
                return Err(Error::NoConvergence { iterations, residual: res });
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            if norm2(&r, exec) <= 0.5 * opts.tol * b_norm {
                break;
            }
            precondition(&r, &mut z);
            project(&mut z);
            let rz_new = dot(&r, &z, exec);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    a.matvec(x, &mut r, exec);
    exec.fill(&mut q, |i| b[i] - r[i]);
    project(&mut q);
    Err(Error::NoConvergence { iterations, residual: norm2(&q, exec) / b_norm })
}

/// `z = M⁻¹ r` with `M = (D + ωL) D⁻¹ (D + ωU) / (ω (2 − ω))`.
fn ssor_apply(a: &CsrMatrix, diag: &[f64], omega: f64, r: &[f64], z: &mut [f64]) {
    let n = a.n;
    for i in 0..n {
        let mut s = r[i];
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[k] as usize;
            if j < i {
                s -= omega * a.values[k] * z[j];
            }
        }
        z[i] = s / diag[i];
    }
    for i in 0..n {
        z[i] *= diag[i];
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[k] as usize;
            if j > i {
                s -= omega * a.values[k] * z[j];
            }
        }
        z[i] = s / diag[i];
    }
    let scale = omega * (2.0 - omega);
    z.iter_mut().for_each(|v| *v *= scale);
}

fn multiplier(a: &CsrMatrix, b: &[f64], x: &[f64], constraint: Option<&[f64]>, exec: ExecPolicy) -> f64 {
    match constraint {
        Some(m) => {
            let ax = a.mul(x, exec);
            let num = exec.sum(b.len(), |i| m[i] * (b[i] - ax[i]));
            num / dot(m, m, exec)
        }
        None => 0.0,
    }
}
