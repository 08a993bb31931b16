//! Brascamp-Lieb constants computed as fixed points of a map on the cone of
//! positive definite matrices.
//!
//! A datum consists of surjective maps `L_j: ℝ^d → ℝ^{d′}` and weights `w_j`.
//! The constant equals `exp(−F(X*)/2)` where `X*` minimizes
//! `F(X) = Σ_j w_j log det(L_j X L_jᵀ) − log det X`, and `X*` is a fixed point of
//! `G(X) = (Σ_j w_j L_jᵀ (L_j X L_jᵀ)⁻¹ L_j)⁻¹`.
//!
//! ```
//! use blfix::{gen_young, solve_fixed_point, SolveConfig};
//!
//! let (result, _trace) = solve_fixed_point(&gen_young(), &SolveConfig::default()).unwrap();
//! assert!((result.bl_constant - 3f64.sqrt() / 2.0).abs() < 1e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cone;
pub mod datum;
pub mod error;
pub mod io;
pub mod matcore;
pub mod objective;
pub mod solve;

pub use baseline::{riem_grad, riem_grad_norm, rgd_step, solve_rgd, RgdConfig};
pub use cone::{hilbert, in_box, schatten_norm, snyder_bound, thompson, ConeBox, Schatten};
pub use datum::{
    check_accepted, critical_c, gen_holder, gen_random, gen_young, load_datum, save_datum, validate, BlDatum,
    ValidationReport,
};
pub use error::{Error, Result};
pub use matcore::{read_matrix, write_matrix, SpdMatrix, SymMatrix};
pub use objective::{
    bl_constant_from_x, bl_value_z, eval_f, eval_f_mu, recover_z, GaussianInput, ObjectiveEval,
};
pub use solve::{
    choose_mu, contraction_diagnostic, solve_fixed_point, step_g, step_g_mu, step_g_tilde, IterTrace,
    SolveConfig, SolveResult, SolveStatus, SolverKind, TraceRow, X0,
};
