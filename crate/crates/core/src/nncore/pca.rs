//! Principal component projection used to shrink raw frames before the
//! encoder sees them.

use nalgebra::{DMatrix, SymmetricEigen};

use super::init::orthonormalize;
use super::matrix::{gemm, Matrix, Trans};
use crate::error::{Error, Result};

/// Raw dimensions above this use the Gram-matrix route.
pub const COVARIANCE_DIM_LIMIT: usize = 4096;

/// How the principal directions are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaMethod {
    /// Pick by raw dimension (`<= 4096` uses the covariance).
    Auto,
    /// Eigen-decompose the `d × d` sample covariance.
    Covariance,
    /// Eigen-decompose the `n × n` Gram matrix and lift back.
    Gram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjector {
    mean: Vec<f64>,
    /// `raw_dim × p`, orthonormal columns.
    basis: Matrix,
    /// Sample variance along each retained direction, non-increasing.
    explained_variance: Vec<f64>,
    /// Trailing directions that carry no variance (orthonormal completion).
    completed: usize,
}

impl PcaProjector {
    /// Assemble from stored parts. The basis must have orthonormal columns.
    pub fn from_parts(mean: Vec<f64>, basis: Matrix) -> Result<Self> {
        if basis.rows() != mean.len() {
            return Err(Error::dim("PCA basis rows", mean.len(), basis.rows()));
        }
        let p = basis.cols();
        Ok(PcaProjector {
            mean,
            basis,
            explained_variance: vec![f64::NAN; p],
            completed: 0,
        })
    }

    pub fn fit(samples: &[Vec<f64>], p: usize) -> Result<Self> {
        Self::fit_with(samples, p, PcaMethod::Auto)
    }

    pub fn fit_with(samples: &[Vec<f64>], p: usize, method: PcaMethod) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().map_or(0, Vec::len);
        if p == 0 {
            return Err(Error::InvalidArgument("PCA needs p >= 1".into()));
        }
        if n < p {
            return Err(Error::InvalidArgument(format!("PCA with p = {p} needs at least {p} samples, got {n}")));
        }
        if p > d {
            return Err(Error::InvalidArgument(format!("PCA p = {p} exceeds raw dimension {d}")));
        }

        let data = Matrix::from_rows(samples)?;
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, x) in mean.iter_mut().zip(data.row(r)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut centered = data;
        for r in 0..n {
            for (x, m) in centered.row_mut(r).iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        let denom = (n.max(2) - 1) as f64;

        let method = match method {
            PcaMethod::Auto if d <= COVARIANCE_DIM_LIMIT => PcaMethod::Covariance,
            PcaMethod::Auto => PcaMethod::Gram,
            m => m,
        };

        let (vectors, values) = match method {
            PcaMethod::Covariance => {
                let mut cov = centered.gram_t();
                cov.scale(1.0 / denom);
                let (vals, vecs) = sorted_eigen(&cov);
                let top: Vec<Vec<f64>> = (0..p).map(|k| (0..d).map(|i| vecs[(i, k)]).collect()).collect();
                (top, vals[..p].to_vec())
            }
            PcaMethod::Gram => {
                let mut gram = Matrix::zeros(n, n);
                gemm(1.0 / denom, &centered, Trans::No, &centered, Trans::Yes, 0.0, &mut gram);
                let (vals, vecs) = sorted_eigen(&gram);
                let k = p.min(n);
                let mut top = Vec::with_capacity(p);
                let mut values = Vec::with_capacity(p);
                for j in 0..k {
                    let u: Vec<f64> = (0..n).map(|i| vecs[(i, j)]).collect();
                    // Covariance eigenvector v = Xcᵀ u / sqrt((n-1) λ).
                    let mut v = centered.t_matvec(&u);
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        v.iter_mut().for_each(|x| *x /= norm);
                    }
                    top.push(v);
                    values.push(vals[j].max(0.0));
                }
                (top, values)
            }
            PcaMethod::Auto => unreachable!(),
        };

        // Directions without variance are not determined by the data; replace
        // them with an orthonormal completion of the informative ones.
        let scale = values.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
        let informative = values.iter().take_while(|&&v| v > scale * 1e-12).count();
        let mut basis_vecs: Vec<Vec<f64>> = vectors.into_iter().take(informative).collect();
        let completed = p - informative;
        let start = basis_vecs.len();
        basis_vecs.extend((0..completed).map(|k| {
            let mut e = vec![0.0; d];
            e[k % d] = 1.0;
            e
        }));
        orthonormalize(&mut basis_vecs);
        debug_assert_eq!(start, informative);

        let mut explained_variance = values;
        explained_variance.truncate(informative);
        explained_variance.resize(p, 0.0);

        let basis = Matrix::from_fn(d, p, |i, k| basis_vecs[k][i]);
        Ok(PcaProjector {
            mean,
            basis,
            explained_variance,
            completed,
        })
    }

    pub fn raw_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn components(&self) -> usize {
        self.basis.cols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Number of trailing directions that came from orthonormal completion.
    pub fn completed_directions(&self) -> usize {
        self.completed
    }

    /// `basisᵀ (raw − mean)`.
    pub fn project(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.raw_dim() {
            return Err(Error::dim("PCA project input", self.raw_dim(), raw.len()));
        }
        let centered: Vec<f64> = raw.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self.basis.t_matvec(&centered))
    }

    /// Project many raw vectors at once (one per row).
    pub fn project_batch(&self, raw: &Matrix) -> Result<Matrix> {
        if raw.cols() != self.raw_dim() {
            return Err(Error::dim("PCA project input", self.raw_dim(), raw.cols()));
        }
        let mut centered = raw.clone();
        for r in 0..centered.rows() {
            for (x, m) in centered.row_mut(r).iter_mut().zip(&self.mean) {
                *x -= m;
            }
        }
        Ok(centered.matmul(&self.basis))
    }

    /// `mean + basis · code`.
    pub fn reconstruct(&self, code: &[f64]) -> Result<Vec<f64>> {
        if code.len() != self.components() {
            return Err(Error::dim("PCA reconstruct code", self.components(), code.len()));
        }
        let mut out = self.basis.matvec(code);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
        Ok(out)
    }
}

/// Eigen-decomposition sorted by non-increasing eigenvalue.
fn sorted_eigen(sym: &Matrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = sym.rows();
    let m = DMatrix::from_row_slice(n, n, sym.data());
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Anisotropic so the eigenvalues are well separated.
        (0..n)
            .map(|_| (0..d).map(|j| rng.random_range(-1.0..1.0) * (1.0 + j as f64)).collect())
            .collect()
    }

    fn check_orthonormal(p: &PcaProjector) {
        let g = p.basis().gram_t();
        assert!(g.max_abs_diff(&Matrix::identity(p.components())) < 1e-8);
    }

    /// Cyclic Jacobi eigenvalue sweep; independent of nalgebra.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn explained_variance_matches_jacobi_oracle() {
        let samples = random_samples(40, 6, 7);
        let pca = PcaProjector::fit(&samples, 4).unwrap();
        let n = samples.len() as f64;
        let d = 6;
        let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (n - 1.0))
                    .collect()
            })
            .collect();
        let oracle = jacobi_eigenvalues(cov);
        for k in 0..4 {
            assert!((pca.explained_variance()[k] - oracle[k]).abs() < 1e-6);
        }
        check_orthonormal(&pca);
    }

    #[test]
    fn recovers_points_on_an_affine_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let origin = [1.0, -2.0, 0.5, 3.0, 0.0];
        let a = [0.3, 0.1, -0.7, 0.2, 0.5];
        let b = [-0.4, 0.9, 0.0, 0.1, 0.3];
        let samples: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (s, t): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                (0..5).map(|i| origin[i] + s * a[i] + t * b[i]).collect()
            })
            .collect();
        let pca = PcaProjector::fit(&samples, 2).unwrap();
        check_orthonormal(&pca);
        for x in &samples {
            let back = pca.reconstruct(&pca.project(x).unwrap()).unwrap();
            for (u, v) in back.iter().zip(x) {
                assert!((u - v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_rank_round_trip_is_lossless() {
        let samples = random_samples(20, 8, 11);
        let pca = PcaProjector::fit(&samples, 8).unwrap();
        for x in samples.iter().take(5) {
            let back = pca.reconstruct(&pca.project(x).unwrap()).unwrap();
            for (u, v) in back.iter().zip(x) {
                assert!((u - v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        let samples = random_samples(12, 30, 5);
        let cov = PcaProjector::fit_with(&samples, 6, PcaMethod::Covariance).unwrap();
        let gram = PcaProjector::fit_with(&samples, 6, PcaMethod::Gram).unwrap();
        check_orthonormal(&gram);
        for k in 0..6 {
            assert!((cov.explained_variance()[k] - gram.explained_variance()[k]).abs() < 1e-6);
            // Same direction up to sign.
            let dot: f64 = (0..30).map(|i| cov.basis()[(i, k)] * gram.basis()[(i, k)]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-6, "component {k}: {dot}");
        }
    }

    #[test]
    fn rank_deficient_fit_is_completed_and_flagged() {
        // Three samples span at most two centred directions.
        let samples = random_samples(4, 6, 2)[..3].to_vec();
        for method in [PcaMethod::Covariance, PcaMethod::Gram] {
            let pca = PcaProjector::fit_with(&samples, 3, method).unwrap();
            check_orthonormal(&pca);
            assert_eq!(pca.completed_directions(), 1, "{method:?}");
            assert_eq!(pca.explained_variance()[2], 0.0);
        }
    }

    #[test]
    fn rejects_bad_p() {
        let samples = random_samples(5, 4, 1);
        assert!(PcaProjector::fit(&samples, 0).is_err());
        assert!(PcaProjector::fit(&samples, 5).is_err());
        assert!(PcaProjector::fit(&samples[..2], 3).is_err());
    }

    #[test]
    fn projection_never_expands_norms() {
        let samples = random_samples(30, 10, 9);
        let pca = PcaProjector::fit(&samples, 3).unwrap();
        let probe = random_samples(20, 10, 10);
        for x in &probe {
            let code = pca.project(x).unwrap();
            let cn = code.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xn = x.iter().zip(pca.mean()).map(|(a, m)| (a - m) * (a - m)).sum::<f64>().sqrt();
            assert!(cn <= xn + 1e-9);
        }
    }
}
