//! Sparse count-vector recovery.
//!
//! The combined measurement is ȳ ≈ P z + n̄ with z a nonnegative integer
//! histogram, so detection is LASSO on the real-stacked model. Provided here:
//! plain ISTA (proximal gradient with step 1/λ_max), the "improved" integer
//! rounding step, a matched-filter receiver for orthonormal preambles, and a
//! trainable unfolded solver in [`lista`].

pub mod lista;

pub use lista::{
    lista_forward, lista_gradient, lista_init, lista_train, ListaGradients, ListaParams,
    LossKind, TrainConfig, TrainOutcome, TrainSample,
};

use num_complex::Complex64;

use crate::airlink::{RealStackedModel, SensingKind, SensingMatrix};
use crate::error::{Error, Result};
use crate::mat::{norm_sq, RMat};

/// Relative safety margin applied to the power-iteration eigenvalue before
/// taking the ISTA step 1/λ. The Rayleigh quotient approaches λ_max from
/// below, so stepping with exactly 1/estimate could overshoot and break the
/// descent guarantee.
const STEP_MARGIN: f64 = 1e-6;

/// One LASSO instance: real-stacked measurement model plus the ℓ1 weight.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub model: RealStackedModel,
    pub rho: f64,
}

impl LassoProblem {
    pub fn new(model: RealStackedModel, rho: f64) -> Result<Self> {
        if rho < 0.0 || !rho.is_finite() {
            return Err(Error::InvalidInput(format!("lasso weight must be >= 0, got {rho}")));
        }
        if model.y_r.len() != model.p_r.rows() {
            return Err(Error::ShapeMismatch(format!(
                "measurement length {} vs operator rows {}",
                model.y_r.len(),
                model.p_r.rows()
            )));
        }
        Ok(Self { model, rho })
    }
}

/// Soft-thresholding operator: sign(x) · max(0, |x| − β).
#[inline]
pub fn soft_threshold(x: f64, beta: f64) -> f64 {
    debug_assert!(beta >= 0.0, "threshold must be nonnegative");
    if x > beta {
        x - beta
    } else if x < -beta {
        x + beta
    } else {
        0.0
    }
}

/// Element-wise soft thresholding.
pub fn soft_threshold_slice(x: &mut [f64], beta: f64) {
    assert!(beta >= 0.0, "threshold must be nonnegative");
    for v in x.iter_mut() {
        *v = soft_threshold(*v, beta);
    }
}

/// Largest eigenvalue of p_rᵀ p_r by power iteration on the Gram matrix,
/// relative tolerance 1e-8, iteration cap 10_000.
pub fn max_eigen_gram(p_r: &RMat) -> Result<f64> {
    if norm_sq(p_r.data()) == 0.0 {
        return Err(Error::InvalidInput("power iteration needs a nonzero matrix".into()));
    }
    let gram = p_r.gram();
    max_eigen_symmetric(&gram)
}

/// Power iteration on a symmetric PSD matrix.
pub(crate) fn max_eigen_symmetric(gram: &RMat) -> Result<f64> {
    let n = gram.cols();
    // Fixed pseudo-random start vector so a structured start cannot be
    // orthogonal to the dominant eigenvector.
    let mut v: Vec<f64> = {
        let mut state = 0x9E37_79B9_7F4A_7C15u64;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    };
    let nv = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);

    let mut gv = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        gram.matvec(&v, &mut gv);
        let num = crate::mat::dot(&v, &gv);
        let norm = norm_sq(&gv).sqrt();
        if norm == 0.0 {
            // v is in the null space; the matrix is nonzero, so restart off it.
            return Err(Error::Convergence {
                context: "power iteration (null-space start)".into(),
                last_estimate: num,
            });
        }
        let new_lambda = num; // Rayleigh quotient with ‖v‖ = 1.
        for (vi, gi) in v.iter_mut().zip(gv.iter()) {
            *vi = gi / norm;
        }
        if (new_lambda - lambda).abs() <= 1e-8 * new_lambda.abs().max(f64::MIN_POSITIVE) {
            return Ok(new_lambda);
        }
        lambda = new_lambda;
    }
    Err(Error::Convergence { context: "power iteration".into(), last_estimate: lambda })
}

/// The LASSO objective 0.5‖y − Pz‖² + ρ‖z‖₁ on the real-stacked model.
pub fn lasso_objective(p_r: &RMat, y_r: &[f64], rho: f64, z: &[f64]) -> f64 {
    let mut pz = vec![0.0; p_r.rows()];
    p_r.matvec(z, &mut pz);
    let resid: f64 = pz.iter().zip(y_r.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * resid + rho * z.iter().map(|x| x.abs()).sum::<f64>()
}

/// Prepared ISTA operator for repeated solves against one sensing matrix:
/// caches the Gram matrix and the step size.
#[derive(Debug, Clone)]
pub struct IstaSolver {
    gram: RMat,
    p_r_t: RMat,
    step: f64,
}

impl IstaSolver {
    pub fn new(p_r: &RMat) -> Result<Self> {
        let gram = p_r.gram();
        let lambda = max_eigen_symmetric(&gram)?;
        Ok(Self { gram, p_r_t: p_r.transpose(), step: 1.0 / (lambda * (1.0 + STEP_MARGIN)) })
    }

    /// Step size μ = 1 / λ_max (with the safety margin).
    #[inline]
    pub fn step(&self) -> f64 {
        self.step
    }

    /// p_rᵀ y, the constant term of the gradient.
    pub fn correlate(&self, y_r: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.p_r_t.rows()];
        self.p_r_t.matvec(y_r, &mut c);
        c
    }

    /// Run `iters` proximal-gradient iterations from z⁰ = 0 with threshold
    /// β = μρ; returns every iterate z⁽¹⁾..z⁽ᵀ⁾ for convergence plots.
    pub fn solve_trajectory(&self, y_r: &[f64], rho: f64, iters: usize) -> Vec<Vec<f64>> {
        let q = self.gram.cols();
        let c = self.correlate(y_r);
        let beta = self.step * rho;
        let mut z = vec![0.0; q];
        let mut gz = vec![0.0; q];
        let mut traj = Vec::with_capacity(iters);
        for _ in 0..iters {
            self.gram.matvec(&z, &mut gz);
            for i in 0..q {
                z[i] = soft_threshold(z[i] - self.step * (gz[i] - c[i]), beta);
            }
            traj.push(z.clone());
        }
        traj
    }

    /// Final iterate only.
    pub fn solve(&self, y_r: &[f64], rho: f64, iters: usize) -> Vec<f64> {
        let q = self.gram.cols();
        let c = self.correlate(y_r);
        let beta = self.step * rho;
        let mut z = vec![0.0; q];
        let mut gz = vec![0.0; q];
        for _ in 0..iters {
            self.gram.matvec(&z, &mut gz);
            for i in 0..q {
                z[i] = soft_threshold(z[i] - self.step * (gz[i] - c[i]), beta);
            }
        }
        z
    }
}

/// Solve one LASSO instance with `t` ISTA iterations, returning the full
/// per-iteration trajectory.
pub fn ista_solve(prob: &LassoProblem, t: usize) -> Result<Vec<Vec<f64>>> {
    if t == 0 {
        return Err(Error::InvalidInput("ista needs at least one iteration".into()));
    }
    let solver = IstaSolver::new(&prob.model.p_r)?;
    Ok(solver.solve_trajectory(&prob.model.y_r, prob.rho, t))
}

/// Integer rounding of a raw detector output: round half away from zero,
/// then clamp below at 0. The total count is deliberately not restored.
pub fn improve_round(z_hat: &[f64]) -> Vec<u32> {
    z_hat
        .iter()
        .map(|&x| {
            let r = x.round();
            if r <= 0.0 {
                0
            } else if r >= u32::MAX as f64 {
                u32::MAX
            } else {
                r as u32
            }
        })
        .collect()
}

/// Matched-filter receiver for orthonormal (DFT-kind) preambles:
/// ẑ = clamp₀(round(Re(Pᴴ ȳ))).
pub fn matched_filter_detect(p: &SensingMatrix, y_bar: &[Complex64]) -> Result<Vec<u32>> {
    if p.kind() != SensingKind::Dft {
        return Err(Error::InvalidInput(
            "matched filter requires an orthonormal (dft) sensing matrix".into(),
        ));
    }
    if y_bar.len() != p.l() {
        return Err(Error::ShapeMismatch(format!(
            "measurement length {} vs preamble length {}",
            y_bar.len(),
            p.l()
        )));
    }
    let mut corr = vec![Complex64::new(0.0, 0.0); p.q()];
    p.p().conj_t_matvec(y_bar, &mut corr);
    Ok(improve_round(&corr.iter().map(|z| z.re).collect::<Vec<_>>()))
}

/// KKT residual diagnostics for a LASSO iterate: max violation of
/// |p_rᵀ(y − Pz)|_q ≤ ρ on the zero set and |(p_rᵀ(y − Pz))_q − ρ sign(z_q)|
/// on the support.
pub fn kkt_violation(p_r: &RMat, y_r: &[f64], rho: f64, z: &[f64]) -> f64 {
    let mut pz = vec![0.0; p_r.rows()];
    p_r.matvec(z, &mut pz);
    let resid: Vec<f64> = y_r.iter().zip(pz.iter()).map(|(y, p)| y - p).collect();
    let mut corr = vec![0.0; p_r.cols()];
    p_r.tr_matvec(&resid, &mut corr);
    let mut worst: f64 = 0.0;
    for (q, &g) in corr.iter().enumerate() {
        let v = if z[q] == 0.0 {
            (g.abs() - rho).max(0.0)
        } else {
            (g - rho * z[q].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}
