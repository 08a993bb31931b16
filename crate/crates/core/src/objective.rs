//! The objective `F(X) = Σ_j w_j log det T_j(X) − log det X`, its regularization
//! `F_μ(X) = F(X) + μ tr X`, and the Brascamp-Lieb functional of Gaussian inputs.
//!
//! The minimizer of `F` is a fixed point `X*` of `G(X) = S(X)⁻¹`, where
//! `S(X) = Σ_j w_j L_jᵀ T_j(X)⁻¹ L_j`. Setting `X_thm = X*⁻¹` and
//! `Z_j = T_j(X*)⁻¹` gives `Σ_j w_j L_jᵀ Z_j L_j = X*⁻¹`, so
//!
//! ```text
//! BL(Z) = (∏ det Z_j^{w_j} / det X*⁻¹)^{1/2} = exp(−F(X*)/2),
//! ```
//!
//! which is how [`bl_constant_from_x`] reads the constant off a fixed point.

use nalgebra::DMatrix;

use crate::datum::BlDatum;
use crate::error::{Error, Result};
use crate::matcore::{check_dims, SpdMatrix, SymMatrix};

/// Gaussian input `Z = {Z_j}`, one `d′ × d′` block per map.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianInput {
    pub blocks: Vec<SpdMatrix>,
}

#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: SymMatrix,
    /// `T_j(X) = L_j X L_jᵀ`.
    pub pushforwards: Vec<SpdMatrix>,
    /// `S(X) = Σ_j w_j L_jᵀ T_j(X)⁻¹ L_j`, the matrix that `G` inverts.
    pub pre_inversion: SymMatrix,
}

pub fn pushforward(l: &DMatrix<f64>, x: &SpdMatrix) -> Result<SpdMatrix> {
    check_dims(l.ncols(), x.dim())?;
    SpdMatrix::named(l * x.as_matrix() * l.transpose(), "pushforward")
}

fn accumulate(datum: &BlDatum, x: &SpdMatrix) -> Result<(Vec<SpdMatrix>, DMatrix<f64>)> {
    check_dims(datum.d(), x.dim())?;
    let d = datum.d();
    let mut sum = DMatrix::zeros(d, d);
    let mut pushes = Vec::with_capacity(datum.m());
    for (l, &w) in datum.maps().iter().zip(datum.weights()) {
        let t = pushforward(l, x)?;
        let t_inv_l = t.solve(l)?;
        sum += (l.transpose() * t_inv_l) * w;
        pushes.push(t);
    }
    Ok((pushes, sum))
}

/// `S(X) = G(X)⁻¹` as a positive definite matrix.
pub fn pre_inversion_sum(datum: &BlDatum, x: &SpdMatrix) -> Result<SpdMatrix> {
    let (_, sum) = accumulate(datum, x)?;
    SpdMatrix::named(sum, "pre-inversion sum")
}

pub fn eval_f(datum: &BlDatum, x: &SpdMatrix) -> Result<ObjectiveEval> {
    let (pushforwards, sum) = accumulate(datum, x)?;
    let value = pushforwards
        .iter()
        .zip(datum.weights())
        .map(|(t, &w)| w * t.log_det())
        .sum::<f64>()
        - x.log_det();
    let x_inv = x.solve(&DMatrix::identity(datum.d(), datum.d()))?;
    Ok(ObjectiveEval {
        value,
        gradient: SymMatrix::new(&sum - x_inv)?,
        pushforwards,
        pre_inversion: SymMatrix::new(sum)?,
    })
}

pub fn eval_f_mu(datum: &BlDatum, x: &SpdMatrix, mu: f64) -> Result<ObjectiveEval> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be non-negative, got {mu}")));
    }
    let mut e = eval_f(datum, x)?;
    e.value += mu * x.trace();
    let d = datum.d();
    e.gradient = SymMatrix::new(e.gradient.as_matrix() + DMatrix::identity(d, d) * mu)?;
    Ok(e)
}

/// `‖X^{1/2} A X^{1/2}‖_F`, the affine-invariant norm of the Riemannian
/// gradient `XAX` when `A` is a Euclidean gradient.
pub fn riemannian_norm(x: &SpdMatrix, a: &SymMatrix) -> Result<f64> {
    check_dims(x.dim(), a.dim())?;
    // LᵀAL is similar to X^{1/2} A X^{1/2}, so their Frobenius norms agree.
    let l = x.cholesky_factor();
    Ok((l.transpose() * a.as_matrix() * &l).norm())
}

/// `Lᵀ ∇F(X) L` for the Cholesky factor `X = LLᵀ`, computed as
/// `Σ_j w_j B_jᵀ (B_j B_jᵀ)⁻¹ B_j − I` with `B_j = L_j L`. Each term is an
/// orthogonal projection, so nothing large cancels when `X` is ill-conditioned.
pub fn whitened_gradient(datum: &BlDatum, x: &SpdMatrix) -> Result<SymMatrix> {
    check_dims(datum.d(), x.dim())?;
    let d = datum.d();
    let l = x.cholesky_factor();
    let mut sum = -DMatrix::identity(d, d);
    for (lj, &w) in datum.maps().iter().zip(datum.weights()) {
        let b = lj * &l;
        let t = SpdMatrix::named(&b * b.transpose(), "pushforward")?;
        sum += (b.transpose() * t.solve(&b)?) * w;
    }
    SymMatrix::new(sum)
}

/// `BL(Z) = (∏ det Z_j^{w_j} / det Σ_j w_j L_jᵀ Z_j L_j)^{1/2}`, evaluated in log space.
pub fn bl_value_z(datum: &BlDatum, z: &GaussianInput) -> Result<f64> {
    if z.blocks.len() != datum.m() {
        return Err(Error::ShapeMismatch(format!(
            "{} Gaussian blocks for {} maps",
            z.blocks.len(),
            datum.m()
        )));
    }
    let d = datum.d();
    let mut sum = DMatrix::zeros(d, d);
    let mut log_num = 0.0;
    for ((l, &w), zj) in datum.maps().iter().zip(datum.weights()).zip(&z.blocks) {
        check_dims(datum.dprime(), zj.dim())?;
        sum += l.transpose() * zj.as_matrix() * l * w;
        log_num += w * zj.log_det();
    }
    let denom = SpdMatrix::named(sum, "BL denominator")?;
    Ok(((log_num - denom.log_det()) / 2.0).exp())
}

/// `Z_j = T_j(X)⁻¹`.
pub fn recover_z(datum: &BlDatum, x: &SpdMatrix) -> Result<GaussianInput> {
    check_dims(datum.d(), x.dim())?;
    let blocks = datum
        .maps()
        .iter()
        .map(|l| Ok(pushforward(l, x)?.inverse()))
        .collect::<Result<_>>()?;
    Ok(GaussianInput { blocks })
}

pub fn bl_constant_from_x(datum: &BlDatum, x: &SpdMatrix) -> Result<f64> {
    Ok((-eval_f(datum, x)?.value / 2.0).exp())
}
