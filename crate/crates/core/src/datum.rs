//! Brascamp-Lieb data: storage, validation, generators, persistence, and the
//! brute-force subdeterminant constant.
//!
//! Each map is stored as a `d′ × d` matrix `L_j` acting `ℝ^d → ℝ^{d′}`. The
//! pushforward of `X ∈ P_d` under map `j` is `T_j(X) = L_j X L_jᵀ ∈ P_{d′}`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{sym_eig, SymMatrix};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
pub const SCALING_TOL: f64 = 1e-10;
/// Coordinate subspaces are enumerated exhaustively only up to this ambient dimension.
pub const MAX_COORDINATE_DIM: usize = 12;
pub const RANDOM_SUBSPACES_PER_DIM: usize = 100;
const MAX_REPORTED_VIOLATIONS: usize = 20;
const HEURISTIC_SEED: u64 = 0x5eed_b1f1;

#[derive(Clone, Debug, PartialEq)]
pub struct BlDatum {
    d: usize,
    dprime: usize,
    maps: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
}

impl BlDatum {
    /// Structural checks only; see [`validate`] for the feasibility conditions.
    pub fn new(d: usize, dprime: usize, maps: Vec<DMatrix<f64>>, weights: Vec<f64>) -> Result<Self> {
        if d == 0 || dprime == 0 {
            return Err(Error::InvalidShape(format!(
                "dimensions must be positive, got d = {d}, dprime = {dprime}"
            )));
        }
        if maps.is_empty() {
            return Err(Error::InvalidShape("a datum needs at least one map".into()));
        }
        if weights.len() != maps.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} maps",
                weights.len(),
                maps.len()
            )));
        }
        for (j, l) in maps.iter().enumerate() {
            if l.nrows() != dprime || l.ncols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "map {j} is {}x{}, expected {dprime}x{d}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(BlDatum { d, dprime, maps, weights })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dprime(&self) -> usize {
        self.dprime
    }

    pub fn m(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_j w_j d′ − d`; zero exactly when the scaling condition holds.
    pub fn scaling_residual(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.dprime as f64 - self.d as f64
    }

    pub fn to_json(&self) -> DatumJson {
        DatumJson {
            d: self.d,
            dprime: self.dprime,
            m: self.m(),
            weights: self.weights.clone(),
            maps: self
                .maps
                .iter()
                .map(|l| l.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

/// On-disk datum layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatumJson {
    pub d: usize,
    pub dprime: usize,
    pub m: usize,
    pub weights: Vec<f64>,
    pub maps: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<DatumJson> for BlDatum {
    type Error = Error;

    fn try_from(j: DatumJson) -> Result<Self> {
        if j.maps.len() != j.m {
            return Err(Error::ShapeMismatch(format!(
                "m = {} but {} maps given",
                j.m,
                j.maps.len()
            )));
        }
        let mut maps = Vec::with_capacity(j.m);
        for (idx, rows) in j.maps.iter().enumerate() {
            if rows.len() != j.dprime || rows.iter().any(|r| r.len() != j.d) {
                return Err(Error::ShapeMismatch(format!(
                    "map {idx} must have {} rows of length {}",
                    j.dprime, j.d
                )));
            }
            maps.push(DMatrix::from_fn(j.dprime, j.d, |r, c| rows[r][c]));
        }
        BlDatum::new(j.d, j.dprime, maps, j.weights)
    }
}

pub fn load_datum(path: &Path) -> Result<BlDatum> {
    let text = fs::read_to_string(path)?;
    let parsed: DatumJson = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    BlDatum::try_from(parsed)
}

pub fn datum_to_string(datum: &BlDatum) -> String {
    let mut s = serde_json::to_string_pretty(&datum.to_json()).expect("serializable");
    s.push('\n');
    s
}

pub fn save_datum(datum: &BlDatum, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, datum_to_string(datum).as_bytes())
}

/// Outcome of [`validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub rank_ok: Vec<bool>,
    pub scaling_ok: bool,
    pub scaling_residual: f64,
    pub weight_range_ok: bool,
    /// `true` means no violated subspace inequality was found among the sampled subspaces.
    pub subspace_heuristic_ok: bool,
    pub sampled_violations: Vec<String>,
}

impl ValidationReport {
    /// Hard checks only; the subspace condition is never certified.
    pub fn accepted(&self) -> bool {
        self.rank_ok.iter().all(|&r| r) && self.scaling_ok && self.weight_range_ok
    }

    pub fn failure_summary(&self) -> String {
        let mut parts = Vec::new();
        let bad: Vec<String> = self
            .rank_ok
            .iter()
            .enumerate()
            .filter(|(_, &ok)| !ok)
            .map(|(j, _)| j.to_string())
            .collect();
        if !bad.is_empty() {
            parts.push(format!("rank-deficient maps [{}]", bad.join(", ")));
        }
        if !self.scaling_ok {
            parts.push(format!(
                "scaling condition fails (sum w_j d' - d = {})",
                self.scaling_residual
            ));
        }
        if !self.weight_range_ok {
            parts.push("weights must lie in (0, 1]".to_string());
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("; ")
        }
    }
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

fn numerical_rank(m: &DMatrix<f64>, reference: f64) -> usize {
    let cutoff = RANK_TOL * reference;
    singular_values(m).iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

/// Orthonormal basis of `ker L`, or `None` when the kernel is trivial.
fn kernel_basis(l: &DMatrix<f64>, reference: f64) -> Option<DMatrix<f64>> {
    let gram = SymMatrix::new(l.transpose() * l).ok()?;
    let eig = sym_eig(&gram).ok()?;
    // Eigenvalues ascend, so the null space is spanned by the leading vectors.
    let nullity = l.ncols() - numerical_rank(l, reference);
    (nullity > 0).then(|| eig.vectors.columns(0, nullity).into_owned())
}

fn sigma_max(m: &DMatrix<f64>) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

fn rank_checks(datum: &BlDatum, refs: &[f64]) -> Vec<bool> {
    datum
        .maps
        .iter()
        .zip(refs)
        .map(|(l, &s)| numerical_rank(l, s) == datum.dprime)
        .collect()
}

/// Unit weight is admitted so that a lone unit-weight map stays solvable.
fn weights_in_range(datum: &BlDatum) -> bool {
    datum.weights.iter().all(|&w| w > 0.0 && w <= 1.0)
}

/// The acceptance test of [`validate`] without the subspace sampling.
pub fn check_accepted(datum: &BlDatum) -> Result<()> {
    let refs: Vec<f64> = datum.maps.iter().map(sigma_max).collect();
    let scaling_residual = datum.scaling_residual();
    let report = ValidationReport {
        rank_ok: rank_checks(datum, &refs),
        scaling_ok: scaling_residual.abs() <= SCALING_TOL,
        scaling_residual,
        weight_range_ok: weights_in_range(datum),
        subspace_heuristic_ok: true,
        sampled_violations: Vec::new(),
    };
    if report.accepted() {
        Ok(())
    } else {
        Err(Error::ValidationFailed(report.failure_summary()))
    }
}

pub fn validate(datum: &BlDatum) -> ValidationReport {
    let refs: Vec<f64> = datum.maps.iter().map(sigma_max).collect();
    let rank_ok = rank_checks(datum, &refs);
    let scaling_residual = datum.scaling_residual();
    let weight_range_ok = weights_in_range(datum);

    let mut violations = Vec::new();
    let mut violated = false;
    let mut record = |desc: String| {
        violated = true;
        if violations.len() < MAX_REPORTED_VIOLATIONS {
            violations.push(desc);
        }
    };
    let image_dim = |basis: &DMatrix<f64>| -> f64 {
        datum
            .maps
            .iter()
            .zip(&datum.weights)
            .zip(&refs)
            .map(|((l, &w), &s)| w * numerical_rank(&(l * basis), s) as f64)
            .sum()
    };

    let d = datum.d;
    if d <= MAX_COORDINATE_DIM {
        for mask in 1u32..(1u32 << d) - 1 {
            let cols: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
            let basis = DMatrix::from_fn(d, cols.len(), |r, c| if r == cols[c] { 1.0 } else { 0.0 });
            let rhs = image_dim(&basis);
            if cols.len() as f64 > rhs + SCALING_TOL {
                record(format!(
                    "coordinate subspace {cols:?}: dim {} > sum w_j dim(L_j H) = {rhs}",
                    cols.len()
                ));
            }
        }
    }
    // Kernels and pairwise kernel sums are where generic maps lose the most rank.
    let kernels: Vec<DMatrix<f64>> = datum
        .maps
        .iter()
        .zip(&refs)
        .filter_map(|(l, &s)| kernel_basis(l, s))
        .collect();
    let mut candidates: Vec<(String, DMatrix<f64>)> = Vec::new();
    for (i, ki) in kernels.iter().enumerate() {
        candidates.push((format!("kernel {i}"), ki.clone()));
        for (j, kj) in kernels.iter().enumerate().skip(i + 1) {
            let mut both = DMatrix::zeros(d, ki.ncols() + kj.ncols());
            both.columns_mut(0, ki.ncols()).copy_from(ki);
            both.columns_mut(ki.ncols(), kj.ncols()).copy_from(kj);
            candidates.push((format!("kernels {i} + {j}"), both));
        }
    }
    for (name, basis) in candidates {
        let h = numerical_rank(&basis, sigma_max(&basis));
        if h == 0 || h == d {
            continue;
        }
        let rhs = image_dim(&basis);
        if h as f64 > rhs + SCALING_TOL {
            record(format!("{name} (dim {h}): sum w_j dim(L_j H) = {rhs}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(HEURISTIC_SEED);
    for h in 1..d {
        for sample in 0..RANDOM_SUBSPACES_PER_DIM {
            let g = DMatrix::from_fn(d, h, |_, _| StandardNormal.sample(&mut rng));
            let basis = g.qr().q();
            let rhs = image_dim(&basis);
            if h as f64 > rhs + SCALING_TOL {
                record(format!(
                    "random subspace (dim {h}, sample {sample}): sum w_j dim(L_j H) = {rhs}"
                ));
            }
        }
    }

    ValidationReport {
        rank_ok,
        scaling_ok: scaling_residual.abs() <= SCALING_TOL,
        scaling_residual,
        weight_range_ok,
        subspace_heuristic_ok: !violated,
        sampled_violations: violations,
    }
}

/// `m` identity maps on `ℝ^d` with weights `1/m`.
pub fn gen_holder(d: usize, m: usize) -> BlDatum {
    assert!(d >= 1 && m >= 1, "gen_holder needs d >= 1 and m >= 1");
    BlDatum::new(d, d, vec![DMatrix::identity(d, d); m], vec![1.0 / m as f64; m])
        .expect("well-formed")
}

/// `x`, `y`, `x − y` on `ℝ²` with weights `2/3` each.
pub fn gen_young() -> BlDatum {
    let maps = vec![
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
    ];
    BlDatum::new(2, 1, maps, vec![2.0 / 3.0; 3]).expect("well-formed")
}

/// Gaussian maps with uniform weights `d / (m d′)`, deterministic in `seed`.
pub fn gen_random(d: usize, dprime: usize, m: usize, seed: u64) -> Result<BlDatum> {
    if d == 0 || dprime == 0 || m == 0 || dprime > d {
        return Err(Error::InvalidShape(format!(
            "need 1 <= dprime <= d and m >= 1, got d = {d}, dprime = {dprime}, m = {m}"
        )));
    }
    let w = d as f64 / (m * dprime) as f64;
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::InvalidShape(format!(
            "uniform weight d/(m d') = {w} is outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maps = Vec::with_capacity(m);
    while maps.len() < m {
        let l = DMatrix::from_fn(dprime, d, |_, _| StandardNormal.sample(&mut rng));
        if numerical_rank(&l, sigma_max(&l)) == dprime {
            maps.push(l);
        }
    }
    BlDatum::new(d, dprime, maps, vec![w; m])
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Fraction-free (Bareiss) elimination with partial pivoting. Every
/// intermediate is a minor of the input, so integer inputs give exact results.
fn bareiss_det(mut a: DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sign = 1.0;
    let mut prev = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs()))
            .expect("non-empty range");
        if a[(p, k)] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap_rows(p, k);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[(i, j)] = (a[(i, j)] * a[(k, k)] - a[(i, k)] * a[(k, j)]) / prev;
            }
        }
        prev = a[(k, k)];
    }
    sign * a[(n - 1, n - 1)]
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `max_{|I| = d′} |det((L)_I)|` over column index sets.
pub fn max_subdeterminant(l: &DMatrix<f64>) -> f64 {
    let (k, n) = (l.nrows(), l.ncols());
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = 0.0_f64;
    loop {
        let sub = l.select_columns(idx.iter());
        best = best.max(bareiss_det(sub).abs());
        if !next_combination(&mut idx, n) {
            return best;
        }
    }
}

/// `c = min_j max_{|I| = d′} |det((L_j)_I)|`, by exhaustive enumeration.
pub fn critical_c(datum: &BlDatum, limit: u128) -> Result<f64> {
    let count = binomial(datum.d, datum.dprime);
    if count > limit {
        return Err(Error::TooLarge { count, limit });
    }
    Ok(datum
        .maps
        .iter()
        .map(max_subdeterminant)
        .fold(f64::INFINITY, f64::min))
}
