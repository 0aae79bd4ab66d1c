//! Data-consistency update: `l` conjugate-gradient steps on the normal
//! equations `AᵀA X = AᵀY`, started from the denoised estimate.
//!
//! The iteration is the CGLS arrangement of CG, which keeps the measurement
//! residual `Y − A X_k` explicitly and touches `A` only through one forward
//! and one adjoint call per step. Its iterates minimize `‖Y − A X‖` over
//! `X_0 + K_k(AᵀA, Aᵀ(Y − A X_0))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{dot, norm, Degradation};
use crate::tensor::VideoTensor;

/// Absolute measurement residual below which the solve stops.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Largest problem [`krylov_membership`] accepts.
pub const KRYLOV_CHECK_CAPACITY: usize = 4096;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub iterations_run: usize,
    /// `‖Y − A X_k‖` for `k = 0..=iterations_run`.
    pub residual_history: Vec<f64>,
    /// Set when a search direction had vanishing curvature.
    pub breakdown: bool,
}

impl CgReport {
    pub fn initial_residual(&self) -> f64 {
        self.residual_history.first().copied().unwrap_or(0.0)
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Runs up to `steps` CG iterations on 64-bit buffers.
pub fn cg_solve(
    x0: &[f64],
    y: &[f64],
    a: &Degradation,
    steps: usize,
) -> Result<(Vec<f64>, CgReport)> {
    if steps == 0 {
        return Err(Error::param("CG needs at least one step"));
    }
    let mut x = x0.to_vec();
    let ax = a.apply(&x)?;
    if y.len() != ax.len() {
        return Err(Error::shape(format!(
            "measurement has {} samples, operator produces {}",
            y.len(),
            ax.len()
        )));
    }
    let mut r: Vec<f64> = y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
    let mut s = a.adjoint(&r)?;
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let gamma0 = gamma;

    let mut report = CgReport {
        residual_history: vec![norm(&r)],
        ..CgReport::default()
    };

    for _ in 0..steps {
        if report.final_residual() <= RESIDUAL_TOL
            || gamma <= (RESIDUAL_TOL * RESIDUAL_TOL) * gamma0
        {
            break;
        }
        let q = a.apply(&p)?;
        let curvature = dot(&q, &q);
        if !(curvature > 0.0 && curvature.is_finite()) {
            report.breakdown = true;
            break;
        }
        let alpha = gamma / curvature;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        s = a.adjoint(&r)?;
        let gamma_next = dot(&s, &s);
        let beta = gamma_next / gamma;
        p.iter_mut()
            .zip(&s)
            .for_each(|(pi, si)| *pi = si + beta * *pi);
        gamma = gamma_next;
        report.iterations_run += 1;
        report.residual_history.push(norm(&r));
    }
    Ok((x, report))
}

/// CG data-consistency step on video tensors. The result keeps `x0`'s range.
pub fn cg_data_consistency(
    x0: &VideoTensor,
    y: &VideoTensor,
    a: &Degradation,
    steps: usize,
) -> Result<(VideoTensor, CgReport)> {
    if x0.shape() != a.input_shape() {
        return Err(Error::shape(format!(
            "initial iterate is {}, operator expects {}",
            x0.shape(),
            a.input_shape()
        )));
    }
    if y.shape() != a.output_shape() {
        return Err(Error::shape(format!(
            "measurement is {}, operator produces {}",
            y.shape(),
            a.output_shape()
        )));
    }
    let (x, report) = cg_solve(&x0.to_f64(), &y.to_f64(), a, steps)?;
    Ok((VideoTensor::from_f64(x0.shape(), x0.range(), &x)?, report))
}

/// Relative distance of `x_bar − x0` from the Krylov space
/// `span{r, Mr, …, M^{l−1} r}`, `M = AᵀA`, `r = Aᵀ(Y − A x0)`.
/// Returns 0 when `x_bar == x0`.
pub fn krylov_membership(
    x0: &[f64],
    x_bar: &[f64],
    y: &[f64],
    a: &Degradation,
    l: usize,
) -> Result<f64> {
    if x0.len() > KRYLOV_CHECK_CAPACITY {
        return Err(Error::Capacity(format!(
            "Krylov membership check limited to {KRYLOV_CHECK_CAPACITY} unknowns, got {}",
            x0.len()
        )));
    }
    if x_bar.len() != x0.len() {
        return Err(Error::shape("x_bar and x0 differ in length"));
    }
    let d: Vec<f64> = x_bar.iter().zip(x0).map(|(b, a)| b - a).collect();
    let d_norm = norm(&d);
    if d_norm == 0.0 {
        return Ok(0.0);
    }

    let ax0 = a.apply(x0)?;
    let resid: Vec<f64> = y.iter().zip(&ax0).map(|(yi, ai)| yi - ai).collect();
    let r = a.adjoint(&resid)?;

    // Arnoldi with two Gram-Schmidt passes.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut v = r;
    for _ in 0..l {
        let scale = norm(&v);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let n = norm(&v);
        if n <= 1e-12 * scale.max(f64::MIN_POSITIVE) || n == 0.0 {
            break;
        }
        v.iter_mut().for_each(|vi| *vi /= n);
        basis.push(v.clone());
        v = a.adjoint(&a.apply(&v)?)?;
    }

    let mut rest = d;
    for _ in 0..2 {
        for q in &basis {
            let c = dot(q, &rest);
            rest.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
        }
    }
    Ok(norm(&rest) / d_norm)
}
