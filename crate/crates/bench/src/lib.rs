//! Fixtures shared by the criterion benchmarks under `benches/`.

use blfix::{gen_random, gen_young, BlDatum, SpdMatrix};

/// A named datum and a positive definite point of matching dimension.
pub struct Fixture {
    pub name: String,
    pub datum: BlDatum,
    pub point: SpdMatrix,
}

/// The sharp Young datum and random data of growing dimension with `d′ = d/2`.
pub fn fixtures() -> Vec<Fixture> {
    let mut out = vec![Fixture {
        name: "young".into(),
        datum: gen_young(),
        point: SpdMatrix::from_rows(&[&[1.5, 0.2], &[0.2, 0.8]]).expect("fixed matrix is positive definite"),
    }];
    for d in [4, 8, 16, 32] {
        let datum = gen_random(d, d / 2, 4, d as u64).expect("sizes are admissible");
        let point = SpdMatrix::from_diagonal(&(0..d).map(|i| 1.0 + i as f64 / d as f64).collect::<Vec<_>>())
            .expect("positive diagonal");
        out.push(Fixture { name: format!("random_d{d}"), datum, point });
    }
    out
}

/// The datum the solver comparison is run on.
pub fn comparison_datum() -> BlDatum {
    gen_random(10, 5, 8, 42).expect("sizes are admissible")
}
