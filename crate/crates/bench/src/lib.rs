//! Fixtures shared by the benchmarks.

use gpmidas::dgp::{simulate_dgp, split_holdout, DgpSpec};
use gpmidas::rng::stream;
use gpmidas::MidasSample;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Gaussian design with `n` rows and `d` columns.
pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed, &[0]);
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[1]);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Training and holdout samples from one simulated `NL-fast-K10` panel.
pub fn simulated_sample(t_l: usize, seed: u64) -> (MidasSample, MidasSample) {
    let mut spec: DgpSpec = "NL-fast-K10".parse().expect("valid DGP code");
    spec.t_l = t_l;
    let mut rng = stream(seed, &[2]);
    let (panel, truth) = simulate_dgp(&spec, 4, &mut rng).expect("simulation");
    split_holdout(&panel, &truth, 4, 12).expect("holdout split")
}
