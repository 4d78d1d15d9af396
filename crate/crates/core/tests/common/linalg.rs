//! Slow, dependency-free reference solvers.

#![allow(dead_code)]

/// Cyclic Jacobi eigendecomposition of a symmetric `n × n` row-major matrix.
/// Returns `(eigenvalues, eigenvectors)` sorted by descending eigenvalue,
/// with eigenvectors as rows.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| (m[j * n + j], (0..n).map(|k| v[k * n + j]).collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.into_iter().unzip()
}

/// Minimize `‖HW − Y‖² + λ‖W‖²` by plain gradient descent. `h` is
/// `n × p` and `y` is `n × m`, both row-major; returns `p × m` row-major.
pub fn ridge_gradient_descent(
    h: &[f64],
    y: &[f64],
    n: usize,
    p: usize,
    m: usize,
    lambda: f64,
) -> Vec<f64> {
    // ‖H‖_F² bounds the largest eigenvalue of HᵀH
    let lipschitz = 2.0 * (h.iter().map(|v| v * v).sum::<f64>() + lambda);
    let step = 1.0 / lipschitz;
    let mut w = vec![0.0; p * m];
    for _ in 0..200_000 {
        let mut resid = vec![0.0; n * m];
        for i in 0..n {
            for c in 0..m {
                let pred: f64 = (0..p).map(|k| h[i * p + k] * w[k * m + c]).sum();
                resid[i * m + c] = pred - y[i * m + c];
            }
        }
        let mut max_grad: f64 = 0.0;
        for k in 0..p {
            for c in 0..m {
                let g = 2.0
                    * ((0..n).map(|i| h[i * p + k] * resid[i * m + c]).sum::<f64>()
                        + lambda * w[k * m + c]);
                w[k * m + c] -= step * g;
                max_grad = max_grad.max(g.abs());
            }
        }
        if max_grad < 1e-12 {
            break;
        }
    }
    w
}
