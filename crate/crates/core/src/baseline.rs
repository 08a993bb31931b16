//! Riemannian gradient descent on `P_d` under the affine-invariant metric
//! `⟨A, B⟩_X = tr(X⁻¹ A X⁻¹ B)`, used as a reference method.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::cone::thompson;
use crate::datum::{check_accepted, BlDatum};
use crate::error::{Error, Result};
use crate::matcore::{sym_eig, SpdMatrix, SymEig, SymMatrix};
use crate::objective::{eval_f, whitened_gradient};
use crate::solve::{elapsed_ns, probe, IterTrace, SolveResult, SolveStatus, TraceRow, X0};

const SHRINK: f64 = 0.5;
const SUFFICIENT_DECREASE: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;
#[derive(Clone, Debug, PartialEq)]
pub struct RgdConfig {
    pub step_size: f64,
    pub backtracking: bool,
    pub tol_grad: f64,
    pub max_iter: usize,
    pub x0: X0,
}

impl Default for RgdConfig {
    fn default() -> Self {
        RgdConfig {
            step_size: 0.1,
            backtracking: true,
            tol_grad: 1e-8,
            max_iter: 10_000,
            x0: X0::Identity,
        }
    }
}

/// `X ∇F(X) X`.
pub fn riem_grad(datum: &BlDatum, x: &SpdMatrix) -> Result<SymMatrix> {
    let g = eval_f(datum, x)?.gradient;
    SymMatrix::new(x.as_matrix() * g.as_matrix() * x.as_matrix())
}

/// `sqrt(tr(X⁻¹ ξ X⁻¹ ξ))` for `ξ = X ∇F(X) X`.
pub fn riem_grad_norm(datum: &BlDatum, x: &SpdMatrix) -> Result<f64> {
    Ok(whitened_gradient(datum, x)?.frobenius_norm())
}

/// The geodesic `η ↦ Exp_X(−η grad F)` through `X = LLᵀ`, which equals
/// `L exp(−ηM) Lᵀ` with `M = Lᵀ∇F L`.
struct Geodesic {
    l: DMatrix<f64>,
    eig: SymEig,
    /// Orthonormal bases of the row spaces of `L_j L`.
    frames: Vec<DMatrix<f64>>,
}

impl Geodesic {
    fn new(datum: &BlDatum, x: &SpdMatrix) -> Result<Self> {
        let l = x.cholesky_factor();
        let eig = sym_eig(&whitened_gradient(datum, x)?)?;
        let frames = datum
            .maps()
            .iter()
            .map(|lj| (lj * &l).transpose().qr().q())
            .collect();
        Ok(Geodesic { l, eig, frames })
    }

    /// `‖M‖_F²`, the squared Riemannian gradient norm.
    fn sq_norm(&self) -> f64 {
        self.eig.values.iter().map(|v| v * v).sum()
    }

    /// The point at `η` and `F(point) − F(X)`. Both are formed from
    /// `exp(−ηM) − I` so they stay accurate when the step is short.
    fn at(&self, datum: &BlDatum, x: &SpdMatrix, eta: f64) -> Result<(SpdMatrix, f64)> {
        let shifted: Vec<f64> = self.eig.values.iter().map(|v| (-eta * v).exp_m1()).collect();
        let delta = self.eig.reassemble(&shifted);
        let point = SpdMatrix::named(x.as_matrix() + &self.l * &delta * self.l.transpose(), "exponential map")?;
        let mut change = eta * self.eig.values.iter().sum::<f64>();
        for (q, &w) in self.frames.iter().zip(datum.weights()) {
            let inner = SymMatrix::new(q.transpose() * &delta * q)?;
            change += w * inner.eigenvalues()?.iter().map(|v| v.ln_1p()).sum::<f64>();
        }
        Ok((point, change))
    }
}

/// `Exp_X(−η grad F) = X^{1/2} exp(−η X^{1/2} ∇F X^{1/2}) X^{1/2}`.
pub fn rgd_step(datum: &BlDatum, x: &SpdMatrix, eta: f64) -> Result<SpdMatrix> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be non-negative, got {eta}")));
    }
    Ok(Geodesic::new(datum, x)?.at(datum, x, eta)?.0)
}

pub fn solve_rgd(datum: &BlDatum, config: &RgdConfig) -> Result<(SolveResult, IterTrace)> {
    if !(config.step_size > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step_size must be positive, got {}",
            config.step_size
        )));
    }
    if !(config.tol_grad > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol_grad must be positive, got {}",
            config.tol_grad
        )));
    }
    check_accepted(datum)?;
    let start = Instant::now();
    let mut trace = IterTrace::default();
    let mut x = config.x0.materialize(datum.d())?;
    let mut prev: Option<SpdMatrix> = None;
    let mut k = 0;

    let (status, last) = loop {
        let p = probe(datum, &x).map_err(|e| e.at(k))?;
        let step = match &prev {
            Some(px) => thompson(&x, px).map_err(|e| e.at(k))?,
            None => 0.0,
        };
        trace.rows.push(TraceRow {
            iter: k,
            f: p.f,
            f_mu: p.f,
            grad_norm: p.riem_grad_norm,
            thompson_step: step,
            min_eig: p.min_eig,
            max_eig: p.max_eig,
            time_ns: elapsed_ns(start),
        });
        if p.riem_grad_norm <= config.tol_grad {
            break (SolveStatus::Converged, p);
        }
        if k >= config.max_iter {
            break (SolveStatus::MaxIter, p);
        }

        let mut eta = config.step_size;
        let next = if config.backtracking {
            let path = Geodesic::new(datum, &x).map_err(|e| e.at(k))?;
            let sq = path.sq_norm();
            loop {
                // A candidate too degenerate to evaluate counts as a rejected step.
                if let Ok((cand, change)) = path.at(datum, &x, eta) {
                    if change <= -SUFFICIENT_DECREASE * eta * sq {
                        break cand;
                    }
                }
                eta *= SHRINK;
                if eta < MIN_STEP {
                    return Err(Error::StepFailure(k + 1));
                }
            }
        } else {
            rgd_step(datum, &x, eta).map_err(|e| e.at(k + 1))?
        };
        k += 1;
        prev = Some(std::mem::replace(&mut x, next));
    };

    let result = SolveResult {
        bl_constant: (-last.f / 2.0).exp(),
        f_value: last.f,
        iterations: k,
        converged: status == SolveStatus::Converged,
        residual: last.riem_grad_norm,
        stop_tol: config.tol_grad,
        grad_norm: last.grad_norm,
        riem_grad_norm: last.riem_grad_norm,
        status,
        mu: None,
        x_star: x,
    };
    Ok((result, trace))
}
