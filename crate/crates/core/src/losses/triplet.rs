use crate::distance::{check_dims, distance_unchecked, Embedding};
use crate::error::{invalid, Error, Result};

use super::{LossOutput, DISTANCE_EPS};

/// For each sample, the in-batch index of its farthest positive and its
/// nearest negative. Ties go to the lower index. Samples without a positive
/// other than themselves pair with themselves.
pub fn batch_hard_hardest(features: &[Embedding], labels: &[usize]) -> Result<Vec<(usize, usize)>> {
    if features.is_empty() {
        return Err(Error::Empty("triplet batch"));
    }
    check_dims(features.len(), labels.len())?;
    let dim = features[0].dim();
    for f in features {
        f.expect_dim(dim)?;
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleIdentityBatch);
    }
    let n = features.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut pos = (i, f64::NEG_INFINITY);
        let mut neg = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            let d = distance_unchecked(&features[i], &features[j]);
            if labels[j] == labels[i] {
                if j != i && d > pos.1 {
                    pos = (j, d);
                }
            } else if d < neg.1 {
                neg = (j, d);
            }
        }
        out.push((pos.0, neg.0));
    }
    Ok(out)
}

/// Batch-hard triplet loss `sum_i max(0, m + d(a_i, p_i) - d(a_i, n_i))`.
///
/// Every sample acts as an anchor. The hardest positive and negative are
/// themselves batch features, so the returned gradient for sample `k`
/// collects its contributions in all three roles.
pub fn triplet_loss_batchhard(
    features: &[Embedding],
    labels: &[usize],
    margin: f64,
) -> Result<LossOutput> {
    if margin.is_nan() || margin < 0.0 {
        return Err(invalid("margin", format!("{margin} must be >= 0")));
    }
    let hardest = batch_hard_hardest(features, labels)?;
    if hardest.iter().enumerate().all(|(i, &(p, _))| p == i) {
        return Err(invalid("batch", "no identity has two samples"));
    }
    let dim = features[0].dim();
    let mut value = 0.0;
    let mut gradients = vec![vec![0.0; dim]; features.len()];
    for (i, &(p, n)) in hardest.iter().enumerate() {
        if p == i {
            continue;
        }
        let (a, pf, nf) = (&features[i], &features[p], &features[n]);
        let d_ap = distance_unchecked(a, pf);
        let d_an = distance_unchecked(a, nf);
        let hinge = margin + d_ap - d_an;
        if hinge <= 0.0 {
            continue;
        }
        value += hinge;
        let inv_ap = 1.0 / d_ap.max(DISTANCE_EPS);
        let inv_an = 1.0 / d_an.max(DISTANCE_EPS);
        for k in 0..dim {
            let u_ap = (a[k] - pf[k]) * inv_ap;
            let u_an = (a[k] - nf[k]) * inv_an;
            gradients[i][k] += u_ap - u_an;
            gradients[p][k] -= u_ap;
            gradients[n][k] += u_an;
        }
    }
    LossOutput::checked(value, gradients)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn inactive_hinge_is_zero() {
        // anchor 0: positive at distance 1, negative at distance 2.
        let f = [emb(&[0.0]), emb(&[1.0]), emb(&[-2.0]), emb(&[-3.5])];
        let out = triplet_loss_batchhard(&f, &[0, 0, 1, 1], 0.3).unwrap();
        assert_eq!(out.gradients[0], vec![0.0]);
        assert!(out.value >= 0.0);
    }

    #[test]
    fn hinge_arithmetic() {
        // d_ap = 1, d_an = 1.1 for anchor 0; the other anchors see large margins.
        let f = [
            emb(&[0.0, 0.0]),
            emb(&[1.0, 0.0]),
            emb(&[0.0, 1.1]),
            emb(&[0.0, 1.1 + 1e-9]),
        ];
        let hardest = batch_hard_hardest(&f, &[0, 0, 1, 1]).unwrap();
        assert_eq!(hardest[0], (1, 2));
        let a = &f[0];
        let per_anchor =
            (0.3 + distance_unchecked(a, &f[1]) - distance_unchecked(a, &f[2])).max(0.0);
        assert!((per_anchor - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_identity_rejected() {
        let f = [emb(&[0.0]), emb(&[1.0])];
        assert!(matches!(
            triplet_loss_batchhard(&f, &[3, 3], 0.3),
            Err(Error::SingleIdentityBatch)
        ));
    }

    #[test]
    fn needs_a_positive_pair() {
        let f = [emb(&[0.0]), emb(&[1.0])];
        assert!(triplet_loss_batchhard(&f, &[0, 1], 0.3).is_err());
    }
}
