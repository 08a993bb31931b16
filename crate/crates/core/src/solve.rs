//! Picard iterations for the fixed point of `G(X) = S(X)⁻¹`.
//!
//! Three maps are available:
//!
//! * `G(X) = S(X)⁻¹`, non-expansive in the Thompson metric;
//! * `G_μ(X) = (μI + S(X))⁻¹`, a strict contraction with ratio `γ/(γ+μ)`;
//! * `G̃(X) = G(X) / tr G(X)`, which keeps iterates on the unit-trace slice.
//!
//! `G` is homogeneous of degree one, so its fixed points form a ray. `G_μ` is
//! not homogeneous: on feasible data `⟨∇F(X), X⟩ = 0`, so `G_μ` has no fixed
//! point and its iterates slowly shrink along the ray, each step moving by
//! about `log(1 + μ tr X / d) ≤ μ‖X‖`. The regularized solver therefore stops
//! once the Thompson step falls below `max(tol, 2μR)` with `R` the running
//! bound on `‖X_k‖`, which is the precision the regularization allows.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cone::thompson;
use crate::datum::{check_accepted, BlDatum};
use crate::error::{Error, Result};
use crate::matcore::{check_dims, SpdMatrix};
use crate::objective::{eval_f, pre_inversion_sum, whitened_gradient};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    PlainG,
    Regularized,
    Normalized,
}

#[derive(Clone, Debug, PartialEq)]
pub enum X0 {
    Identity,
    Given(SpdMatrix),
}

impl X0 {
    pub(crate) fn materialize(&self, d: usize) -> Result<SpdMatrix> {
        match self {
            X0::Identity => Ok(SpdMatrix::identity(d)),
            X0::Given(x) => {
                check_dims(d, x.dim())?;
                Ok(x.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub solver: SolverKind,
    /// Thompson step length at which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Target accuracy used to pick `μ`.
    pub epsilon: f64,
    pub mu_override: Option<f64>,
    pub x0: X0,
    /// Condition number of an iterate past which infeasibility is suspected.
    pub blowup_cond: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            solver: SolverKind::Regularized,
            tol: 1e-10,
            max_iter: 10_000,
            epsilon: 1e-6,
            mu_override: None,
            x0: X0::Identity,
            blowup_cond: 1e12,
        }
    }
}

impl SolveConfig {
    pub fn new(solver: SolverKind) -> Self {
        SolveConfig { solver, ..Default::default() }
    }

    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if let Some(mu) = self.mu_override {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
            }
        }
        if !(self.blowup_cond > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "blowup_cond must exceed 1, got {}",
                self.blowup_cond
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibilitySuspected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub x_star: SpdMatrix,
    pub bl_constant: f64,
    /// Unregularized `F` at `x_star`.
    pub f_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Last Thompson step (or Riemannian gradient norm for the gradient baseline).
    pub residual: f64,
    /// Threshold the residual was compared against.
    pub stop_tol: f64,
    /// Operator norm of `∇F(x_star)`.
    pub grad_norm: f64,
    /// `‖X^{1/2} ∇F X^{1/2}‖_F` at `x_star`.
    pub riem_grad_norm: f64,
    pub status: SolveStatus,
    /// Final regularization weight, for the regularized solver.
    pub mu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "F_mu")]
    pub f_mu: f64,
    /// Riemannian norm of the unregularized gradient.
    pub grad_norm: f64,
    /// `δ_T(X_k, X_{k−1})`; zero on the first row.
    pub thompson_step: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub time_ns: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterTrace {
    pub rows: Vec<TraceRow>,
    /// `(iteration, μ)` for the initial choice and every later change.
    pub mu_changes: Vec<(usize, f64)>,
}

impl IterTrace {
    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["iter", "F", "F_mu", "grad_norm", "thompson_step", "min_eig", "max_eig", "time_ns"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv_string()?.as_bytes())
    }
}

pub fn step_g(datum: &BlDatum, x: &SpdMatrix) -> Result<SpdMatrix> {
    Ok(pre_inversion_sum(datum, x)?.inverse())
}

pub fn step_g_mu(datum: &BlDatum, x: &SpdMatrix, mu: f64) -> Result<SpdMatrix> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be non-negative, got {mu}")));
    }
    let s = pre_inversion_sum(datum, x)?;
    let d = datum.d();
    Ok(SpdMatrix::named(s.into_matrix() + DMatrix::identity(d, d) * mu, "regularized sum")?.inverse())
}

pub fn step_g_tilde(datum: &BlDatum, x: &SpdMatrix) -> Result<SpdMatrix> {
    let g = step_g(datum, x)?;
    g.scale(1.0 / g.trace())
}

/// `μ = ε′ / (2R(d − ε′/2))` with `ε′ = ε/2`.
pub fn choose_mu(epsilon: f64, r_est: f64, d: usize) -> Result<f64> {
    if !(epsilon > 0.0) || !(r_est > 0.0) || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "choose_mu needs epsilon > 0, R > 0, d >= 1; got {epsilon}, {r_est}, {d}"
        )));
    }
    let eps_half = epsilon / 2.0;
    let gap = d as f64 - eps_half / 2.0;
    if !(gap > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "d = {d} must exceed epsilon/4 = {}",
            epsilon / 4.0
        )));
    }
    Ok(eps_half / (2.0 * r_est * gap))
}

/// `(δ_T(G_μ(X), G_μ(Y)), γ/(γ+μ) δ_T(X, Y))` with `γ = max(‖S(X)‖, ‖S(Y)‖)`.
pub fn contraction_diagnostic(datum: &BlDatum, x: &SpdMatrix, y: &SpdMatrix, mu: f64) -> Result<(f64, f64)> {
    check_dims(x.dim(), y.dim())?;
    let gamma = pre_inversion_sum(datum, x)?
        .op_norm()?
        .max(pre_inversion_sum(datum, y)?.op_norm()?);
    let lhs = thompson(&step_g_mu(datum, x, mu)?, &step_g_mu(datum, y, mu)?)?;
    Ok((lhs, gamma / (gamma + mu) * thompson(x, y)?))
}

/// Iterate diagnostics shared with the gradient baseline.
pub(crate) struct Probe {
    pub f: f64,
    pub grad_norm: f64,
    pub riem_grad_norm: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

pub(crate) fn probe(datum: &BlDatum, x: &SpdMatrix) -> Result<Probe> {
    let e = eval_f(datum, x)?;
    let (min_eig, max_eig) = x.min_max_eig()?;
    Ok(Probe {
        f: e.value,
        grad_norm: e.gradient.op_norm()?,
        riem_grad_norm: whitened_gradient(datum, x)?.frobenius_norm(),
        min_eig,
        max_eig,
    })
}

pub(crate) fn elapsed_ns(start: Instant) -> u64 {
    u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

/// Runs the selected Picard iteration from `config.x0`.
pub fn solve_fixed_point(datum: &BlDatum, config: &SolveConfig) -> Result<(SolveResult, IterTrace)> {
    config.check()?;
    check_accepted(datum)?;
    let d = datum.d();
    let start = Instant::now();
    let mut trace = IterTrace::default();
    let mut x = config.x0.materialize(d)?;

    let regularized = config.solver == SolverKind::Regularized;
    let mut r_obs = x.op_norm()?.max(1.0);
    let mut r_used = r_obs;
    let mut mu = 0.0;
    if regularized {
        mu = match config.mu_override {
            Some(m) => m,
            None => choose_mu(config.epsilon, r_used, d)?,
        };
        trace.mu_changes.push((0, mu));
    }

    let mut prev: Option<SpdMatrix> = None;
    let mut steps = Vec::new();
    let mut k = 0;
    let (status, residual, stop_tol, last) = loop {
        let p = probe(datum, &x).map_err(|e| e.at(k))?;
        let step = match &prev {
            Some(px) => thompson(&x, px).map_err(|e| e.at(k))?,
            None => 0.0,
        };
        steps.push(step);
        trace.rows.push(TraceRow {
            iter: k,
            f: p.f,
            f_mu: p.f + mu * x.trace(),
            grad_norm: p.riem_grad_norm,
            thompson_step: step,
            min_eig: p.min_eig,
            max_eig: p.max_eig,
            time_ns: elapsed_ns(start),
        });

        let stop_tol = if regularized { config.tol.max(2.0 * mu * r_obs) } else { config.tol };
        if p.max_eig / p.min_eig > config.blowup_cond {
            break (SolveStatus::InfeasibilitySuspected, step, stop_tol, p);
        }
        if k >= 1 && step <= stop_tol {
            break (SolveStatus::Converged, step, stop_tol, p);
        }
        if k >= config.max_iter {
            let growing = step > steps[config.max_iter / 2];
            let status = if growing { SolveStatus::InfeasibilitySuspected } else { SolveStatus::MaxIter };
            break (status, step, stop_tol, p);
        }

        let next = match config.solver {
            SolverKind::PlainG => step_g(datum, &x),
            SolverKind::Regularized => step_g_mu(datum, &x, mu),
            SolverKind::Normalized => step_g_tilde(datum, &x),
        }
        .map_err(|e| e.at(k + 1))?;
        k += 1;

        if regularized {
            r_obs = r_obs.max(next.op_norm().map_err(|e| e.at(k))?);
            if config.mu_override.is_none() && r_obs > 2.0 * r_used {
                r_used = r_obs;
                mu = choose_mu(config.epsilon, r_used, d)?;
                trace.mu_changes.push((k, mu));
            }
        }
        prev = Some(std::mem::replace(&mut x, next));
    };

    let result = SolveResult {
        bl_constant: (-last.f / 2.0).exp(),
        f_value: last.f,
        iterations: k,
        converged: status == SolveStatus::Converged,
        residual,
        stop_tol,
        grad_norm: last.grad_norm,
        riem_grad_norm: last.riem_grad_norm,
        status,
        mu: regularized.then_some(mu),
        x_star: x,
    };
    Ok((result, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::{gen_holder, gen_young};
    use crate::matcore::SymMatrix;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn assert_close(a: &SpdMatrix, want: &[&[f64]], tol: f64) {
        let w = crate::matcore::matrix_from_rows(want).unwrap();
        let diff = (a.as_matrix() - w).amax();
        assert!(diff <= tol, "{a:?} differs from {want:?} by {diff}");
    }

    fn x_star() -> SpdMatrix {
        SpdMatrix::from_rows(&[&[1.0, 0.5], &[0.5, 1.0]]).unwrap()
    }

    #[test]
    fn step_g_examples() {
        let x = SpdMatrix::from_rows(&[&[2.0, -0.4], &[-0.4, 0.7]]).unwrap();
        assert_close(&step_g(&gen_holder(2, 1), &x).unwrap(), &[&[2.0, -0.4], &[-0.4, 0.7]], 1e-14);
        let y = gen_young();
        assert_close(
            &step_g(&y, &SpdMatrix::identity(2)).unwrap(),
            &[&[9.0 / 8.0, 3.0 / 8.0], &[3.0 / 8.0, 9.0 / 8.0]],
            1e-14,
        );
        assert_close(&step_g(&y, &x_star()).unwrap(), &[&[1.0, 0.5], &[0.5, 1.0]], 1e-14);
    }

    #[test]
    fn step_g_mu_examples() {
        let y = gen_young();
        let i2 = SpdMatrix::identity(2);
        let a = step_g_mu(&y, &x_star(), 1e-14).unwrap();
        assert!((a.as_matrix() - step_g(&y, &x_star()).unwrap().as_matrix()).amax() < 1e-10);

        let det = 1.1 * 1.1 - 1.0 / 9.0;
        let m = step_g_mu(&y, &i2, 0.1).unwrap();
        assert_close(&m, &[&[1.1 / det, (1.0 / 3.0) / det], &[(1.0 / 3.0) / det, 1.1 / det]], 1e-14);
        assert_abs_diff_eq!(m.as_matrix()[(0, 0)], 1.00101, epsilon = 1e-5);
        assert_abs_diff_eq!(m.as_matrix()[(0, 1)], 0.30334, epsilon = 1e-5);
        assert!(m.op_norm().unwrap() < 10.0);

        assert_close(&step_g_mu(&gen_holder(2, 1), &i2, 1.0).unwrap(), &[&[0.5, 0.0], &[0.0, 0.5]], 1e-15);
    }

    #[test]
    fn step_g_tilde_examples() {
        let h = gen_holder(2, 1);
        let x = SpdMatrix::from_rows(&[&[0.7, 0.1], &[0.1, 0.3]]).unwrap();
        assert_close(&step_g_tilde(&h, &x).unwrap(), &[&[0.7, 0.1], &[0.1, 0.3]], 1e-14);
        assert_close(&step_g_tilde(&h, &SpdMatrix::identity(2)).unwrap(), &[&[0.5, 0.0], &[0.0, 0.5]], 1e-15);
        assert_close(
            &step_g_tilde(&gen_young(), &SpdMatrix::identity(2)).unwrap(),
            &[&[0.5, 1.0 / 6.0], &[1.0 / 6.0, 0.5]],
            1e-14,
        );
    }

    #[test]
    fn choose_mu_examples() {
        let a = choose_mu(1e-6, 1.0, 2).unwrap();
        assert_abs_diff_eq!(a, 2.5e-7 / (2.0 - 2.5e-7), epsilon = 1e-22);
        assert_relative_eq!(a, 1.25000002e-7, max_relative = 1e-6);
        assert_eq!(choose_mu(1e-6, 2.0, 2).unwrap(), a / 2.0);
        assert_relative_eq!(choose_mu(1e-2, 1.0, 2).unwrap(), 5e-3 / (2.0 * (2.0 - 2.5e-3)), max_relative = 1e-15);
        assert_abs_diff_eq!(choose_mu(1e-2, 1.0, 2).unwrap(), 1.2515645e-3, epsilon = 1e-10);
        assert!(matches!(choose_mu(8.0, 1.0, 2), Err(Error::InvalidArgument(_))));
        assert!(choose_mu(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn contraction_examples() {
        let y = gen_young();
        let x = SpdMatrix::from_rows(&[&[1.3, 0.2], &[0.2, 0.8]]).unwrap();
        assert_eq!(contraction_diagnostic(&y, &x, &x, 0.1).unwrap(), (0.0, 0.0));

        let z = SpdMatrix::from_rows(&[&[0.5, -0.1], &[-0.1, 2.0]]).unwrap();
        let (lhs, bound) = contraction_diagnostic(&y, &x, &z, 0.0).unwrap();
        assert_eq!(bound, thompson(&x, &z).unwrap());
        assert!(lhs <= bound + 1e-12);

        let i2 = SpdMatrix::identity(2);
        let (lhs, bound) = contraction_diagnostic(&y, &i2, &SpdMatrix::scaled_identity(2, 2.0), 0.1).unwrap();
        assert!(lhs < 2f64.ln());
        assert!(lhs <= bound + 1e-8);
    }

    #[test]
    fn holder_converges_at_once() {
        let (r, trace) = solve_fixed_point(&gen_holder(2, 3), &SolveConfig::new(SolverKind::PlainG)).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.iterations, 1);
        assert_abs_diff_eq!(r.bl_constant, 1.0, epsilon = 1e-15);
        assert!(r.grad_norm <= 1e-12);
        assert_eq!(trace.rows.len(), 2);
        assert_eq!(trace.rows[0].thompson_step, 0.0);
    }

    #[test]
    fn young_regularized() {
        let (r, trace) = solve_fixed_point(&gen_young(), &SolveConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        let want = 3f64.sqrt() / 2.0;
        assert!(r.bl_constant >= want - 1e-5 && r.bl_constant <= want * (1.0 + 1e-6) + 1e-5);
        assert!(r.residual <= r.stop_tol);
        assert_eq!(trace.mu_changes.len(), 1);
    }

    #[test]
    fn young_plain_ray() {
        let (r, _) = solve_fixed_point(&gen_young(), &SolveConfig::new(SolverKind::PlainG)).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        let n = r.x_star.scale(1.0 / r.x_star.trace()).unwrap();
        assert_close(&n, &[&[0.5, 0.25], &[0.25, 0.5]], 1e-8);
    }

    #[test]
    fn rejects_infeasible_and_bad_config() {
        let h = gen_holder(2, 3);
        let bad = BlDatum::new(2, 2, h.maps().to_vec(), vec![0.5; 3]).unwrap();
        assert!(matches!(
            solve_fixed_point(&bad, &SolveConfig::default()),
            Err(Error::ValidationFailed(_))
        ));
        let cfg = SolveConfig { tol: 0.0, ..Default::default() };
        assert!(matches!(solve_fixed_point(&h, &cfg), Err(Error::InvalidArgument(_))));
        let cfg = SolveConfig { x0: X0::Given(SpdMatrix::identity(3)), ..Default::default() };
        assert!(matches!(solve_fixed_point(&h, &cfg), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn max_iter_is_reported() {
        let cfg = SolveConfig { max_iter: 3, tol: 1e-300, ..SolveConfig::new(SolverKind::PlainG) };
        let (r, trace) = solve_fixed_point(&gen_young(), &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::MaxIter);
        assert_eq!(r.iterations, 3);
        assert_eq!(trace.rows.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn trace_csv_layout() {
        let (_, trace) = solve_fixed_point(&gen_young(), &SolveConfig::new(SolverKind::PlainG)).unwrap();
        let csv = trace.to_csv_string().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iter,F,F_mu,grad_norm,thompson_step,min_eig,max_eig,time_ns"));
        assert!(lines.next().unwrap().starts_with("0,"));
        assert_eq!(
            IterTrace::default().to_csv_string().unwrap().trim_end(),
            "iter,F,F_mu,grad_norm,thompson_step,min_eig,max_eig,time_ns"
        );
    }

    #[test]
    fn normalized_stays_on_slice() {
        let (r, _) = solve_fixed_point(&gen_young(), &SolveConfig::new(SolverKind::Normalized)).unwrap();
        assert_abs_diff_eq!(r.x_star.trace(), 1.0, epsilon = 1e-12);
        let g = step_g(&gen_young(), &r.x_star).unwrap();
        let lambda = g.trace();
        let diff = SymMatrix::new(g.as_matrix() - r.x_star.as_matrix() * lambda).unwrap();
        assert!(diff.op_norm().unwrap() < 1e-8);
    }
}
