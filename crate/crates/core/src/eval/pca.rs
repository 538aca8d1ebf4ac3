use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{check_dims, dot, norm};
use crate::error::{invalid, Error, Result};

const MAX_BLOCK: usize = 6;
const MAX_ITERS: usize = 20_000;

/// Two-component principal projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub points: Vec<[f64; 2]>,
    /// Unit principal directions, largest variance first.
    pub components: [Vec<f64>; 2],
    /// Covariance eigenvalues (unbiased, `n - 1` denominator).
    pub explained_variance: [f64; 2],
    pub mean: Vec<f64>,
}

/// Projects centered data onto its top two principal directions.
///
/// Directions come from block subspace iteration on the sample covariance
/// with Rayleigh-Ritz extraction, applied implicitly as `X^T (X q)`. Each
/// direction is signed so its first non-negligible loading is positive.
pub fn pca_project<V: AsRef<[f64]>>(embeddings: &[V]) -> Result<PcaProjection> {
    let n = embeddings.len();
    if n < 3 {
        return Err(invalid(
            "embeddings",
            format!("need at least 3 points, got {n}"),
        ));
    }
    let dim = embeddings[0].as_ref().len();
    if dim < 2 {
        return Err(invalid("embeddings", "need at least 2 dimensions"));
    }
    for e in embeddings {
        check_dims(dim, e.as_ref().len())?;
        if e.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pca input"));
        }
    }

    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.as_ref().iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let scale: f64 = embeddings
        .iter()
        .map(|e| dot(e.as_ref(), e.as_ref()))
        .sum::<f64>()
        / n as f64;
    let total_var: f64 = centered.iter().map(|c| dot(c, c)).sum::<f64>() / (n - 1) as f64;
    if total_var <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient);
    }

    let cov_apply = |q: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for row in &centered {
            let s = dot(row, q);
            if s != 0.0 {
                for (o, r) in out.iter_mut().zip(row) {
                    *o += s * r;
                }
            }
        }
        out.iter_mut().for_each(|o| *o /= (n - 1) as f64);
        out
    };

    let block = dim.min(MAX_BLOCK);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut basis);

    let mut ritz = vec![0.0; block];
    let mut previous = [f64::INFINITY; 2];
    for _ in 0..MAX_ITERS {
        let images: Vec<Vec<f64>> = basis.iter().map(|q| cov_apply(q)).collect();
        // Rayleigh-Ritz on span(basis).
        let mut t = vec![vec![0.0; block]; block];
        for i in 0..block {
            for j in i..block {
                let v = dot(&basis[i], &images[j]);
                t[i][j] = v;
                t[j][i] = v;
            }
        }
        let (values, vectors) = jacobi_eigen(t);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let rotate = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
            order
                .iter()
                .map(|&k| {
                    let mut v = vec![0.0; dim];
                    for (i, s) in src.iter().enumerate() {
                        let c = vectors[i][k];
                        for (o, x) in v.iter_mut().zip(s) {
                            *o += c * x;
                        }
                    }
                    v
                })
                .collect()
        };
        let new_basis = rotate(&basis);
        let new_images = rotate(&images);
        for (r, &k) in ritz.iter_mut().zip(&order) {
            *r = values[k];
        }

        let exact = block == dim;
        let residual = (0..2)
            .map(|i| {
                let r: Vec<f64> = new_images[i]
                    .iter()
                    .zip(&new_basis[i])
                    .map(|(a, b)| a - ritz[i] * b)
                    .collect();
                norm(&r)
            })
            .fold(0.0, f64::max);
        let settled = (0..2).all(|i| (ritz[i] - previous[i]).abs() <= 1e-14 * ritz[0].abs());
        basis = new_basis;
        if exact || (residual <= 1e-11 * ritz[0].abs() && settled) {
            break;
        }
        previous = [ritz[0], ritz[1]];
        basis = new_images;
        orthonormalize(&mut basis);
    }

    let mut components = [basis[0].clone(), basis[1].clone()];
    for c in &mut components {
        let n = norm(c);
        c.iter_mut().for_each(|v| *v /= n);
        let largest = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = c.iter().find(|v| v.abs() > 1e-9 * largest) {
            if *first < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    let points = centered
        .iter()
        .map(|row| [dot(row, &components[0]), dot(row, &components[1])])
        .collect();
    Ok(PcaProjection {
        points,
        explained_variance: [ritz[0].max(0.0), ritz[1].max(0.0)],
        components,
        mean,
    })
}

/// Modified Gram-Schmidt, run twice. Columns that collapse are replaced by
/// coordinate vectors outside the current span.
fn orthonormalize(vectors: &mut [Vec<f64>]) {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut next_axis = 0;
    for i in 0..vectors.len() {
        loop {
            let original = norm(&vectors[i]);
            for _ in 0..2 {
                for j in 0..i {
                    let p = dot(&vectors[i], &vectors[j]);
                    let (head, tail) = vectors.split_at_mut(i);
                    for (v, u) in tail[0].iter_mut().zip(&head[j]) {
                        *v -= p * u;
                    }
                }
            }
            let remaining = norm(&vectors[i]);
            if remaining > 1e-10 * original.max(f64::MIN_POSITIVE) && remaining > 0.0 {
                vectors[i].iter_mut().for_each(|v| *v /= remaining);
                break;
            }
            let mut axis = vec![0.0; dim];
            axis[next_axis % dim] = 1.0;
            next_axis += 1;
            vectors[i] = axis;
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix. Returns
/// eigenvalues and a matrix whose columns are the eigenvectors.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
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
