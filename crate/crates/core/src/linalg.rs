//! Dense linear-algebra helpers shared by the samplers.
//!
//! The Cholesky factor is stored row-major so that the inner products of the
//! Crout recurrence run over contiguous memory; every MCMC iteration of the
//! GP and BLR samplers factors at least one matrix, so this is the hot path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Diagonal jitter ladder, relative to the mean absolute diagonal.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise without reassociation.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Lower Cholesky factor `A + jitter I = L L'`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    /// Row-major `n x n`; entries above the diagonal are zero.
    rows: Vec<f64>,
    pub jitter: f64,
}

impl CholFactor {
    fn try_factor(a: &DMatrix<f64>, jitter: f64) -> Option<Self> {
        let n = a.nrows();
        let mut rows = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..j {
                let (ri, rj) = (i * n, j * n);
                let s = a[(j, i)] - dot(&rows[rj..rj + i], &rows[ri..ri + i]);
                rows[rj + i] = s / rows[ri + i];
            }
            let rj = j * n;
            let d = a[(j, j)] + jitter - dot(&rows[rj..rj + j], &rows[rj..rj + j]);
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            rows[rj + j] = d.sqrt();
        }
        Some(CholFactor { n, rows, jitter })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..i * self.n + i + 1]
    }

    /// Dense copy of `L`.
    pub fn l(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.rows[i * self.n + j] } else { 0.0 })
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        for j in 0..self.n {
            let r = self.row(j);
            let s = x[j] - dot(&r[..j], &x.as_slice()[..j]);
            x[j] = s / r[j];
        }
        x
    }

    /// `L'^{-1} b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        for j in (0..self.n).rev() {
            let r = self.row(j);
            x[j] /= r[j];
            let xj = x[j];
            for i in 0..j {
                x[i] -= r[i] * xj;
            }
        }
        x
    }

    /// `(L L')^{-1} b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Column-wise `L^{-1} B`.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for c in 0..b.ncols() {
            let col = self.solve_lower(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for c in 0..b.ncols() {
            let col = self.solve(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| dot(self.row(i), &z.as_slice()[..=i])),
        )
    }

    /// `log |L L'|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.rows[i * self.n + i].ln()).sum::<f64>()
    }
}

/// Factor a symmetric matrix, climbing the jitter ladder on failure.
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<CholFactor> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("cholesky of a non-square matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite entries in matrix to factor"));
    }
    let scale = if n == 0 {
        1.0
    } else {
        (a.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n as f64).max(f64::MIN_POSITIVE)
    };
    JITTER_LADDER
        .iter()
        .find_map(|&rel| CholFactor::try_factor(a, rel * scale))
        .ok_or_else(|| {
            Error::numerical(format!("cholesky failed for {n}x{n} matrix after maximum jitter"))
        })
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draw from the inverse Gamma with the given shape and scale
/// (density proportional to `x^{-shape-1} exp(-scale / x)`).
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = rand_distr::Gamma::new(shape, 1.0)
        .expect("inverse-gamma shape must be positive")
        .sample(rng);
    scale / g
}

/// Symmetrize in place: `A <- (A + A') / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &b * b.transpose() + DMatrix::identity(n, n)
    }

    #[test]
    fn factor_reconstructs_and_solves() {
        let a = random_spd(9, 1);
        let f = cholesky_jittered(&a).unwrap();
        assert_eq!(f.jitter, 0.0);
        let l = f.l();
        assert!((&l * l.transpose() - &a).abs().max() < 1e-10);
        let b = DVector::from_fn(9, |i, _| i as f64 - 3.0);
        let x = f.solve(&b);
        assert!((&a * x - &b).abs().max() < 1e-10);
        let z = DVector::from_fn(9, |i, _| (i as f64).sin());
        assert!((f.mul_lower(&z) - &l * &z).abs().max() < 1e-12);
        assert!((f.solve_lower(&(&l * &z)) - &z).abs().max() < 1e-10);
        let nal = nalgebra::Cholesky::new(a.clone()).unwrap();
        let det: f64 = nal.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        assert!((f.log_det() - det).abs() < 1e-10);
    }

    #[test]
    fn jitter_rescues_singular_psd_matrix() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let f = cholesky_jittered(&a).unwrap();
        assert!(f.jitter > 0.0);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_jittered(&a), Err(Error::Numerical(_))));
    }
}
