use advlin::RngStream;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` flipped so that `diag(R) > 0`.
pub fn haar_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_iterator(n, n, (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Singular values `d_i ∝ condition^{-i/(n−1)}`, scaled to unit Euclidean norm.
pub fn conditioned_spectrum(n: usize, condition: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                condition.powf(-(i as f64) / (n - 1) as f64)
            }
        })
        .collect();
    let norm = raw.iter().map(|d| d * d).sum::<f64>().sqrt();
    raw.into_iter().map(|d| d / norm).collect()
}

/// `U·D·Vᵀ` with Haar `U`, `V` and geometric singular values of ratio
/// `condition`, normalized so that `‖A‖_F = 1`. For `n = 1` the result is `±1`.
///
/// # Panics
/// If `n == 0` or `condition < 1`.
pub fn generate_conditioned_matrix(n: usize, condition: f64, stream: &RngStream) -> DMatrix<f64> {
    assert!(n > 0, "matrix size must be positive");
    assert!(condition >= 1.0, "condition number must be >= 1, got {condition}");
    let mut rng = stream.substream(0);
    let u = haar_orthogonal(n, &mut rng);
    let v = haar_orthogonal(n, &mut rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(conditioned_spectrum(n, condition)));
    u * d * v.transpose()
}
