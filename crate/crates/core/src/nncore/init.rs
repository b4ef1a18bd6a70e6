use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::Matrix;

/// Seeded orthogonal matrix.
///
/// Draws a Gaussian `rows × cols` matrix and orthonormalises its columns
/// (when `rows >= cols`) or its rows (otherwise), so that `WᵀW = I` or
/// `WWᵀ = I` respectively.
pub fn orthogonal_init(rows: usize, cols: usize, seed: u64) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "orthogonal_init needs positive dims");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tall = rows >= cols;
    // Work on vectors of length `long`, `short` of them.
    let (long, short) = if tall { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..long).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    orthonormalize(&mut vecs);
    if tall {
        Matrix::from_fn(rows, cols, |r, c| vecs[c][r])
    } else {
        Matrix::from_fn(rows, cols, |r, c| vecs[r][c])
    }
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass.
///
/// Vectors that collapse numerically are replaced by standard basis vectors
/// orthogonalised against the rest, so the result is always orthonormal.
pub(crate) fn orthonormalize(vecs: &mut [Vec<f64>]) {
    let n = vecs.first().map_or(0, Vec::len);
    let mut fallback = 0usize;
    for i in 0..vecs.len() {
        let mut attempts = 0;
        loop {
            for _ in 0..2 {
                for j in 0..i {
                    let (done, rest) = vecs.split_at_mut(i);
                    let d = dot(&done[j], &rest[0]);
                    for (x, q) in rest[0].iter_mut().zip(&done[j]) {
                        *x -= d * q;
                    }
                }
            }
            let norm = dot(&vecs[i], &vecs[i]).sqrt();
            if norm > 1e-10 {
                for x in &mut vecs[i] {
                    *x /= norm;
                }
                break;
            }
            attempts += 1;
            assert!(attempts <= n, "cannot complete an orthonormal set");
            let mut e = vec![0.0; n];
            e[fallback % n] = 1.0;
            fallback += 1;
            vecs[i] = e;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_dev_from_identity(m: &Matrix) -> f64 {
        m.max_abs_diff(&Matrix::identity(m.rows()))
    }

    #[test]
    fn square_is_orthogonal() {
        let w = orthogonal_init(12, 12, 3);
        assert!(max_dev_from_identity(&w.gram_t()) < 1e-8);
    }

    #[test]
    fn tall_has_orthonormal_columns() {
        let w = orthogonal_init(50, 7, 1);
        assert!(max_dev_from_identity(&w.gram_t()) < 1e-8);
    }

    #[test]
    fn wide_has_orthonormal_rows() {
        let w = orthogonal_init(4, 30, 1);
        let wwt = w.matmul(&w.transpose());
        assert!(max_dev_from_identity(&wwt) < 1e-8);
    }

    #[test]
    fn seeds_differ_and_repeat() {
        let a = orthogonal_init(6, 5, 1);
        let b = orthogonal_init(6, 5, 2);
        let mut d = a.clone();
        d.scale(-1.0);
        d.add_assign(&b);
        assert!(d.frobenius_norm() > 0.0);
        assert_eq!(a, orthogonal_init(6, 5, 1));
    }

    #[test]
    fn degenerate_input_is_completed() {
        let mut v = vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]];
        orthonormalize(&mut v);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&v[i], &v[j]) - want).abs() < 1e-12);
            }
        }
    }
}
