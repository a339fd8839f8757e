//! Riccati and Lyapunov solvers for linearized error dynamics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Solves `AᵀX + XA + Q = 0` through the Kronecker form.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let x = k.lu().solve(&rhs).ok_or_else(|| Error::NotStabilizable("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn care_residual(a: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a - p * s * p + q).norm()
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
///
/// The matrix sign function of the Hamiltonian gives a first solution,
/// which Newton–Kleinman steps then polish.
pub fn care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let rinv = r.clone().try_inverse().ok_or_else(|| Error::NotStabilizable("singular input weight".into()))?;
    let s = b * &rinv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let det = z.determinant().abs();
        if !(det.is_finite() && det > 0.0) {
            return Err(Error::NotStabilizable("Hamiltonian has eigenvalues on the imaginary axis".into()));
        }
        let c = det.powf(1.0 / (2 * n) as f64);
        let zi = z.clone().try_inverse().ok_or_else(|| Error::NotStabilizable("singular sign iterate".into()))?;
        let next = (&z / c + zi * c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if delta <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotStabilizable("sign iteration did not converge".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let w11 = z.view((0, 0), (n, n)).clone_owned();
    let w12 = z.view((0, n), (n, n)).clone_owned();
    let w21 = z.view((n, 0), (n, n)).clone_owned();
    let w22 = z.view((n, n), (n, n)).clone_owned();
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::NotStabilizable(e.to_string()))?;
    let mut p = (&p + p.transpose()) * 0.5;

    let mut res = care_residual(a, &s, q, &p);
    for _ in 0..8 {
        let k = &rinv * b.transpose() * &p;
        let ak = a - b * &k;
        if !is_hurwitz(&ak) {
            break;
        }
        let Ok(next) = lyapunov(&ak, &(q + k.transpose() * r * &k)) else { break };
        let r_next = care_residual(a, &s, q, &next);
        if !(r_next < res) {
            break;
        }
        p = next;
        res = r_next;
    }
    let k = &rinv * b.transpose() * &p;
    if !is_hurwitz(&(a - b * k)) || !p.iter().all(|x| x.is_finite()) {
        return Err(Error::NotStabilizable("closed loop is not Hurwitz".into()));
    }
    Ok(p)
}

/// LQR gain for `u = K e`: `K = −R⁻¹BᵀP`.
pub fn lqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = care(a, b, q, r)?;
    let rinv = r.clone().try_inverse().ok_or_else(|| Error::NotStabilizable("singular input weight".into()))?;
    Ok((-(rinv * b.transpose() * &p), p))
}
