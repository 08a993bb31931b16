//! Thompson and Hilbert metric geometry on the positive definite cone.
//!
//! Both metrics are read off the spectrum of the pencil `(X, Y)`: with
//! `μ_min ≤ … ≤ μ_max` its eigenvalues, `M(X/Y) = μ_max` and `M(Y/X) = 1/μ_min`.

use crate::error::{Error, Result};
use crate::matcore::{check_dims, gen_eigenvalues, SpdMatrix, SymMatrix};

/// Values below this are reported as exactly zero.
const THOMPSON_ZERO: f64 = 1e-14;

/// Relative slack used by [`in_box`].
const BOX_SLACK: f64 = 1e-10;

fn pencil_extremes(x: &SpdMatrix, y: &SpdMatrix) -> Result<(f64, f64)> {
    let vals = gen_eigenvalues(x, y)?;
    Ok((vals[0], vals[vals.len() - 1]))
}

/// Thompson part metric `log max{M(X/Y), M(Y/X)}`.
pub fn thompson(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    let (lo, hi) = pencil_extremes(x, y)?;
    let d = hi.ln().max(-lo.ln());
    Ok(if d < THOMPSON_ZERO { 0.0 } else { d })
}

/// Hilbert projective metric `log(M(X/Y) M(Y/X))`.
pub fn hilbert(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    let (lo, hi) = pencil_extremes(x, y)?;
    Ok((hi.ln() - lo.ln()).max(0.0))
}

/// The order interval `{δI ⪯ X ⪯ ΔI}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeBox {
    delta: f64,
    upper: f64,
    dim: usize,
}

impl ConeBox {
    pub fn new(delta: f64, upper: f64, dim: usize) -> Result<Self> {
        if !(delta > 0.0) || !(upper >= delta) || !upper.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "box needs 0 < delta <= Delta < inf, got delta = {delta}, Delta = {upper}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("box dimension must be positive".into()));
        }
        Ok(ConeBox { delta, upper, dim })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Thompson diameter, attained by the corners `δI` and `ΔI`.
    pub fn diameter(&self) -> f64 {
        (self.upper / self.delta).ln()
    }
}

pub fn in_box(x: &SpdMatrix, cone_box: &ConeBox) -> Result<bool> {
    check_dims(cone_box.dim, x.dim())?;
    let (lo, hi) = x.min_max_eig()?;
    Ok(lo >= cone_box.delta - BOX_SLACK && hi <= cone_box.upper + BOX_SLACK)
}

/// Schatten exponent supported by [`schatten_norm`] and [`snyder_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schatten {
    One,
    Two,
    Inf,
}

impl Schatten {
    fn inv_p(self) -> f64 {
        match self {
            Schatten::One => 1.0,
            Schatten::Two => 0.5,
            Schatten::Inf => 0.0,
        }
    }
}

pub fn schatten_norm(s: &SymMatrix, p: Schatten) -> Result<f64> {
    Ok(match p {
        Schatten::Two => s.frobenius_norm(),
        Schatten::One => s.eigenvalues()?.iter().map(|v| v.abs()).sum(),
        Schatten::Inf => s.op_norm()?,
    })
}

/// Right-hand side of Snyder's inequality
/// `‖X−Y‖_p ≤ 2^{1/p} (e^{δ_T} − 1)/e^{δ_T} · max{‖X‖_p, ‖Y‖_p}`.
pub fn snyder_bound(x: &SpdMatrix, y: &SpdMatrix, p: Schatten) -> Result<f64> {
    let t = thompson(x, y)?;
    let factor = -(-t).exp_m1();
    let nx = schatten_norm(&x.to_sym(), p)?;
    let ny = schatten_norm(&y.to_sym(), p)?;
    Ok(2f64.powf(p.inv_p()) * factor * nx.max(ny))
}
