#![allow(dead_code)]

use blfix::{gen_random, BlDatum, SpdMatrix, SymMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    gaussian(rng, d, d).qr().q()
}

/// `Q₁ diag(e^{u_i}) Q₂` with `u_i` uniform in `[−1/2, 1/2]`.
pub fn well_conditioned(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let vals: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..=0.5f64).exp()).collect();
    orthogonal(rng, d) * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * orthogonal(rng, d)
}

/// `Q diag(e^{u_i}) Qᵀ` with `u_i` uniform in `[−spread, spread]`.
pub fn random_spd(rng: &mut impl Rng, d: usize, spread: f64) -> SpdMatrix {
    let q = orthogonal(rng, d);
    let vals: Vec<f64> = (0..d).map(|_| rng.random_range(-spread..=spread).exp()).collect();
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals));
    SpdMatrix::new(&q * diag * q.transpose()).unwrap()
}

pub fn random_sym(rng: &mut impl Rng, d: usize) -> SymMatrix {
    SymMatrix::new(gaussian(rng, d, d)).unwrap()
}

/// Random datum from one of two families that are feasible by construction:
///
/// * `d′ = 1` with `m > d` Gaussian rows and weights `d/m`: a subspace of
///   dimension `h` lies in the kernel of at most `d − h` rows, so
///   `Σ w_j dim(L_j H) ≥ (d/m)(m − d + h) ≥ h`.
/// * cyclic coordinate windows of width `d′` on `ℝ^d` with `m = d`, weights
///   `1/d′`, so every coordinate carries total weight one, then mixed by random
///   invertible maps `L_j = C_j E_j B`, which leaves every `dim(L_j H)` intact.
pub fn random_feasible(rng: &mut impl Rng, d_max: usize, m_max: usize) -> BlDatum {
    if rng.random_bool(0.5) {
        let d = rng.random_range(2..=d_max.min(m_max - 1));
        let m = rng.random_range(d + 1..=m_max);
        gen_random(d, 1, m, rng.random()).unwrap()
    } else {
        let d = rng.random_range(3..=d_max.min(m_max));
        let dprime = rng.random_range(2..d);
        let b = well_conditioned(rng, d);
        let maps = (0..d)
            .map(|j| {
                let window = DMatrix::from_fn(dprime, d, |r, c| if c == (j + r) % d { 1.0 } else { 0.0 });
                well_conditioned(rng, dprime) * window * &b
            })
            .collect();
        BlDatum::new(d, dprime, maps, vec![1.0 / dprime as f64; d]).unwrap()
    }
}

pub fn sym_from(m: DMatrix<f64>) -> SymMatrix {
    SymMatrix::new(m).unwrap()
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_from(m.clone()).eigenvalues().unwrap()[0]
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    sym_from(m.clone()).op_norm().unwrap()
}

pub fn report(criterion: u32, pass: bool, detail: &str) {
    println!("criterion {criterion:>2}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
}
