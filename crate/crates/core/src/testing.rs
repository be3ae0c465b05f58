//! Finite-difference oracles used by tests and the acceptance suite.
//!
//! Everything here is independent of the differentiation engine and the
//! integrator internals: plain central differences on black-box functions.

use crate::provider::HamiltonianProvider;

/// Central finite difference of a scalar function along one coordinate.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Assert that a provider's gradient matches central finite differences of
/// its value to the given relative tolerance.
pub fn check_gradient_fd<H: HamiltonianProvider>(
    h: &H,
    q: &[f64],
    p: &[f64],
    step: f64,
    rel_tol: f64,
) {
    let (gq, gp) = h.gradient(q, p);
    let n = q.len();
    for i in 0..n {
        let fd = central_difference(
            |v| {
                let mut qq = q.to_vec();
                qq[i] = v;
                h.value(&qq, p)
            },
            q[i],
            step,
        );
        assert_rel_close(gq[i], fd, rel_tol, &format!("dH/dq[{i}]"));
        let fd = central_difference(
            |v| {
                let mut pp = p.to_vec();
                pp[i] = v;
                h.value(q, &pp)
            },
            p[i],
            step,
        );
        assert_rel_close(gp[i], fd, rel_tol, &format!("dH/dp[{i}]"));
    }
}

/// Relative error with an absolute floor so near-zero references do not
/// produce spurious failures.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn assert_rel_close(got: f64, want: f64, rel_tol: f64, what: &str) {
    let e = rel_error(got, want);
    assert!(
        e <= rel_tol,
        "{what}: got {got}, finite differences give {want} (rel err {e:.3e} > {rel_tol:.1e})"
    );
}

/// Dense finite-difference Jacobian of a vector-valued map, column by column.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let m = f(x).len();
    let n = x.len();
    let mut jac = vec![vec![0.0; n]; m];
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..m {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Canonical symplectic matrix for the two-form `dq^dp + dx^dy` on the
/// coordinate ordering `(q, p, x, y)`, each block of length `n`.
pub fn symplectic_form(n: usize) -> Vec<Vec<f64>> {
    let d = 4 * n;
    let mut omega = vec![vec![0.0; d]; d];
    for i in 0..n {
        // dq ^ dp block
        omega[i][n + i] = 1.0;
        omega[n + i][i] = -1.0;
        // dx ^ dy block
        omega[2 * n + i][3 * n + i] = 1.0;
        omega[3 * n + i][2 * n + i] = -1.0;
    }
    omega
}

/// `||J^T Omega J - Omega||_inf` for a map Jacobian `J` on `(q, p, x, y)`.
pub fn symplectic_defect(jac: &[Vec<f64>], n: usize) -> f64 {
    let omega = symplectic_form(n);
    let d = 4 * n;
    assert_eq!(jac.len(), d);
    // J^T Omega J
    let mut oj = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += omega[i][k] * jac[k][j];
            }
            oj[i][j] = s;
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += jac[k][i] * oj[k][j];
            }
            worst = worst.max((s - omega[i][j]).abs());
        }
    }
    worst
}
