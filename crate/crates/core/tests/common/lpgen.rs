//! Random and classic LP instances.

use nalgebra::DMatrix;
use neural_rld::lpsolve::{LinearProgram, Tag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random feasible, bounded standard-form LP: `b = A x0` with `x0 > 0` and
/// `c = A^T y0 + s0` with `s0 > 0`.
pub fn random_lp(n: usize, m: usize, seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lp = LinearProgram::new(n);
    lp.b_eq = (0..m).map(|i| (0..n).map(|j| a[(i, j)] * x0[j]).sum()).collect();
    lp.c = (0..n)
        .map(|j| (0..m).map(|i| a[(i, j)] * y0[i]).sum::<f64>() + rng.random_range(0.01..1.0))
        .collect();
    lp.a_eq = a;
    lp.row_labels = (0..m).map(|i| Tag::new("row", i)).collect();
    lp.var_labels = (0..n).map(|j| Tag::new("x", j)).collect();
    lp
}

pub fn lp_from(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
    let mut lp = LinearProgram::new(c.len());
    lp.c = c.to_vec();
    lp.a_eq = DMatrix::from_fn(a.len(), c.len(), |i, j| a[i][j]);
    lp.b_eq = b.to_vec();
    lp.row_labels = vec![Tag::new("row", 0); b.len()];
    lp
}

/// Beale's cycling example; optimum -0.05.
pub fn beale() -> LinearProgram {
    lp_from(
        &[0.0, 0.0, 0.0, -0.75, 150.0, -0.02, 6.0],
        &[
            &[1.0, 0.0, 0.0, 0.25, -60.0, -0.04, 9.0],
            &[0.0, 1.0, 0.0, 0.5, -90.0, -0.02, 3.0],
            &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        ],
        &[0.0, 0.0, 1.0],
    )
}

/// Marshall and Suurballe's cycling example with slack columns; optimum -2.
pub fn marshall_suurballe() -> LinearProgram {
    lp_from(
        &[-2.0, -3.0, 1.0, 12.0, 0.0, 0.0, 0.0],
        &[
            &[-2.0, -9.0, 1.0, 9.0, 1.0, 0.0, 0.0],
            &[1.0 / 3.0, 1.0, -1.0 / 3.0, -2.0, 0.0, 1.0, 0.0],
            &[2.0, 3.0, -1.0, -12.0, 0.0, 0.0, 1.0],
        ],
        &[0.0, 0.0, 2.0],
    )
}
