use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Principal component projection of a point set.
#[derive(Debug, Clone)]
pub struct Pca {
    /// `N × out_dims` projected coordinates.
    pub projected: Vec<Vec<f64>>,
    /// Covariance eigenvalues (unbiased, `N - 1` denominator), descending.
    pub eigenvalues: Vec<f64>,
    /// `out_dims` unit directions of length `D`.
    pub components: Vec<Vec<f64>>,
    /// Set when every input point was identical; `projected` is all zeros.
    pub degenerate: bool,
}

/// Centers `points` and projects them onto the top `out_dims` principal
/// directions. Each direction is signed so its largest-magnitude loading is
/// positive.
///
/// When `N < D` the eigenproblem is solved on the `N × N` Gram matrix instead
/// of the covariance.
pub fn pca_reduce(points: &[Vec<f64>], out_dims: usize) -> Result<Pca> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid("points", "PCA needs at least two points"));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points have differing dimensions".into()));
    }
    if out_dims == 0 || out_dims > n.min(d) {
        return Err(Error::invalid("out_dims", format!("{out_dims} not in 1..={}", n.min(d))));
    }

    let mut x = DMatrix::from_fn(n, d, |i, j| points[i][j]);
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let scale = 1.0 / (n - 1) as f64;
    let total_var: f64 = x.iter().map(|v| v * v).sum::<f64>() * scale;
    if total_var <= f64::EPSILON * f64::EPSILON {
        log::warn!("PCA input is degenerate (all points identical)");
        return Ok(Pca {
            projected: vec![vec![0.0; out_dims]; n],
            eigenvalues: vec![0.0; out_dims],
            components: vec![vec![0.0; d]; out_dims],
            degenerate: true,
        });
    }

    let (eigenvalues, components) = if d <= n {
        let cov = x.transpose() * &x * scale;
        let (vals, vecs) = sorted_eigen(cov);
        let comps: Vec<Vec<f64>> = (0..out_dims).map(|k| vecs.column(k).iter().copied().collect()).collect();
        (vals[..out_dims].to_vec(), comps)
    } else {
        // Gram route: covariance eigenvectors are X^T u / sqrt((N-1) λ).
        let gram = &x * x.transpose() * scale;
        let (vals, vecs) = sorted_eigen(gram);
        let tol = vals[0].abs() * 1e-12;
        let comps = (0..out_dims)
            .map(|k| {
                if vals[k] <= tol {
                    return vec![0.0; d];
                }
                let v = x.transpose() * vecs.column(k) / (vals[k] / scale).sqrt();
                v.iter().copied().collect()
            })
            .collect();
        (vals[..out_dims].iter().map(|v| v.max(0.0)).collect(), comps)
    };

    let components: Vec<Vec<f64>> = components.into_iter().map(fix_sign).collect();
    let projected = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| x.row(i).iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Pca {
        projected,
        eigenvalues,
        components,
        degenerate: false,
    })
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, vecs)
}

fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let pivot = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best });
    if pivot.1 < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn collinear_points_keep_distances() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 3.0, 7.0]
            .iter()
            .map(|&s| vec![1.0 + 3.0 * s, -2.0 + 4.0 * s])
            .collect();
        let p = pca_reduce(&pts, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = dist(&pts[i], &pts[j]);
                let got = (p.projected[i][0] - p.projected[j][0]).abs();
                assert!((want - got).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn full_rank_is_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..12).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let p = pca_reduce(&pts, 5).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!((dist(&pts[i], &pts[j]) - dist(&p.projected[i], &p.projected[j])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // 6 points in 10-D take the Gram route. Duplicating every point keeps
        // the principal directions and pushes N past D.
        let pts: Vec<Vec<f64>> = (0..6).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let wide = pca_reduce(&pts, 3).unwrap();
        let mut tall = pts.clone();
        tall.extend(pts.iter().cloned());
        let tall = pca_reduce(&tall, 3).unwrap();
        for k in 0..3 {
            for (a, b) in wide.components[k].iter().zip(&tall.components[k]) {
                assert!((a - b).abs() < 1e-8, "component {k}");
            }
        }
    }

    /// Cyclic Jacobi rotations on a symmetric matrix; returns eigenvalues and
    /// eigenvectors as columns of `v`.
    fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-26 {
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
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let (vp, vq) = (row[p], row[q]);
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        ((0..n).map(|i| a[i][i]).collect(), v)
    }

    #[test]
    fn matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (n, d, k) in [(30, 6, 3), (15, 4, 4), (40, 8, 2)] {
            // anisotropic cloud so eigenvalues are well separated
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect())
                .collect();
            let mean: Vec<f64> = (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
            let cov: Vec<Vec<f64>> = (0..d)
                .map(|a| {
                    (0..d)
                        .map(|b| pts.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / (n - 1) as f64)
                        .collect()
                })
                .collect();
            let (vals, vecs) = jacobi(cov);
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
            let got = pca_reduce(&pts, k).unwrap();
            for (rank, &i) in order.iter().take(k).enumerate() {
                assert!((got.eigenvalues[rank] - vals[i]).abs() < 1e-9 * vals[i].max(1.0));
                let want = fix_sign(vecs.iter().map(|row| row[i]).collect());
                for (a, b) in got.components[rank].iter().zip(&want) {
                    assert!((a - b).abs() < 1e-7, "n={n} d={d} component {rank}");
                }
            }
        }
    }

    #[test]
    fn degenerate_input_flags() {
        let pts = vec![vec![1.0, 2.0, 3.0]; 4];
        let p = pca_reduce(&pts, 2).unwrap();
        assert!(p.degenerate);
        assert!(p.projected.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let p = pca_reduce(&pts, 4).unwrap();
        for c in &p.components {
            let m = c.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(m > 0.0);
        }
    }

    #[test]
    fn rejects_bad_dims() {
        let pts = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        assert!(pca_reduce(&pts, 3).is_err());
        assert!(pca_reduce(&pts[..1], 1).is_err());
    }
}
