use super::{DenseMatrix, Real};
use crate::error::{Result, SfrError};

/// Rows with a smaller L2 norm are divided by this value instead.
pub const NORM_FLOOR: f64 = 1e-12;

/// Masked mean negative log-likelihood and its gradient w.r.t. `log_probs`.
pub fn nll_loss<T: Real>(
    log_probs: &DenseMatrix<T>,
    labels: &[usize],
    mask: &[bool],
) -> Result<(T, DenseMatrix<T>)> {
    let (n, c) = log_probs.shape();
    if labels.len() != n || mask.len() != n {
        return Err(SfrError::validation(format!(
            "nll_loss: {n} rows but {} labels and {} mask entries",
            labels.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(SfrError::validation("nll_loss: empty mask"));
    }
    let scale = T::one() / T::of(count as f64);
    let mut loss = T::zero();
    let mut grad = DenseMatrix::zeros(n, c);
    for i in (0..n).filter(|&i| mask[i]) {
        let y = labels[i];
        if y >= c {
            return Err(SfrError::validation(format!(
                "nll_loss: label {y} out of range for {c} classes"
            )));
        }
        loss -= log_probs.get(i, y);
        grad.set(i, y, -scale);
    }
    Ok((loss * scale, grad))
}

/// Result of the contrastive loss.
#[derive(Clone, Debug)]
pub struct InfoNceOutput<T> {
    pub loss: T,
    pub grad_z: DenseMatrix<T>,
    pub grad_z_aug: DenseMatrix<T>,
}

/// InfoNCE with cosine similarity over the masked rows.
///
/// Anchor `z[v]` is contrasted against every masked `z_aug[u]`; the positive
/// is `z_aug[v]`. Gradients flow into both views and are zero outside the
/// mask.
pub fn infonce_loss<T: Real>(
    z: &DenseMatrix<T>,
    z_aug: &DenseMatrix<T>,
    mask: &[bool],
    temperature: f64,
) -> Result<InfoNceOutput<T>> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(SfrError::validation(format!(
            "infonce_loss: temperature must be > 0, got {temperature}"
        )));
    }
    if z.shape() != z_aug.shape() {
        return Err(SfrError::validation(format!(
            "infonce_loss: view shapes differ ({}x{} vs {}x{})",
            z.rows(),
            z.cols(),
            z_aug.rows(),
            z_aug.cols()
        )));
    }
    let (n, dim) = z.shape();
    if mask.len() != n {
        return Err(SfrError::validation(
            "infonce_loss: mask length differs from row count",
        ));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let t = idx.len();
    if t == 0 {
        return Err(SfrError::validation("infonce_loss: empty mask"));
    }

    let normalize = |m: &DenseMatrix<T>| -> (DenseMatrix<T>, Vec<T>) {
        let mut unit = DenseMatrix::zeros(t, dim);
        let mut norms = Vec::with_capacity(t);
        for (r, &i) in idx.iter().enumerate() {
            let row = m.row(i);
            let norm = row
                .iter()
                .map(|&x| x * x)
                .sum::<T>()
                .sqrt()
                .max(T::of(NORM_FLOOR));
            for (u, &x) in unit.row_mut(r).iter_mut().zip(row) {
                *u = x / norm;
            }
            norms.push(norm);
        }
        (unit, norms)
    };
    let (u, u_norm) = normalize(z);
    let (v, v_norm) = normalize(z_aug);

    let inv_tau = T::of(1.0 / temperature);
    // sim[a][b] = cos(z[a], z_aug[b]) / tau
    let mut sim = u.matmul_t(&v)?;
    for s in sim.data_mut() {
        *s *= inv_tau;
    }

    // d loss / d sim = (softmax_row - I) / T
    let inv_t = T::one() / T::of(t as f64);
    let mut loss = T::zero();
    let mut d_sim = DenseMatrix::zeros(t, t);
    for a in 0..t {
        let row = sim.row(a);
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[a];
        let d_row = d_sim.row_mut(a);
        for (b, d) in d_row.iter_mut().enumerate() {
            *d = (row[b] - log_z).exp() * inv_t;
        }
        d_row[a] -= inv_t;
    }
    loss *= inv_t;
    for d in d_sim.data_mut() {
        *d *= inv_tau;
    }

    let d_u = d_sim.matmul(&v)?;
    let d_v = d_sim.t_matmul(&u)?;

    let unnormalize =
        |d_unit: &DenseMatrix<T>, unit: &DenseMatrix<T>, norms: &[T]| -> DenseMatrix<T> {
            let mut grad = DenseMatrix::zeros(n, dim);
            for (r, &i) in idx.iter().enumerate() {
                let du = d_unit.row(r);
                let un = unit.row(r);
                let norm = norms[r];
                let g = grad.row_mut(i);
                if norm > T::of(NORM_FLOOR) {
                    // d(z/|z|) = (I - u uᵀ) dz / |z|
                    let proj: T = du.iter().zip(un).map(|(&a, &b)| a * b).sum();
                    for ((o, &a), &b) in g.iter_mut().zip(du).zip(un) {
                        *o = (a - b * proj) / norm;
                    }
                } else {
                    for (o, &a) in g.iter_mut().zip(du) {
                        *o = a / norm;
                    }
                }
            }
            grad
        };

    let grad_z = unnormalize(&d_u, &u, &u_norm);
    let grad_z_aug = unnormalize(&d_v, &v, &v_norm);
    Ok(InfoNceOutput {
        loss: loss.max(T::zero()),
        grad_z,
        grad_z_aug,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_log_probs_give_log_c() {
        let c = 7;
        let lp = DenseMatrix::from_fn(4, c, |_, _| -(c as f64).ln());
        let (loss, grad) = nll_loss(&lp, &[0, 3, 6, 2], &[true, true, false, true]).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
        assert!((loss - 1.9459).abs() < 1e-4);
        assert!(grad.row(2).iter().all(|&g| g == 0.0));
        assert!((grad.get(0, 0) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_is_zero_loss() {
        let lp = DenseMatrix::from_vec(2, 2, vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0])
            .unwrap();
        let (loss, _) = nll_loss(&lp, &[0, 1], &[true, true]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn two_node_hand_arithmetic() {
        // rows: [ln .6, ln .4] with label 0, [ln .6, ln .4] with label 1
        let (a, b) = (0.6f64.ln(), 0.4f64.ln());
        let lp = DenseMatrix::from_vec(2, 2, vec![a, b, a, b]).unwrap();
        let (loss, _) = nll_loss(&lp, &[0, 1], &[true, true]).unwrap();
        // -(ln .6 + ln .4) / 2 = 0.7136...
        let want = -(0.6f64.ln() + 0.4f64.ln()) / 2.0;
        assert!((loss - want).abs() < 1e-15);
        assert!((loss - 0.713_557_7).abs() < 1e-6);
    }

    #[test]
    fn nll_errors() {
        let lp = DenseMatrix::<f64>::zeros(2, 2);
        assert!(nll_loss(&lp, &[0, 1], &[false, false]).is_err());
        assert!(nll_loss(&lp, &[0], &[true, true]).is_err());
        assert!(nll_loss(&lp, &[0, 2], &[true, true]).is_err());
    }

    #[test]
    fn single_anchor_has_zero_loss() {
        let z = DenseMatrix::<f64>::from_vec(2, 2, vec![1.0, 2.0, 3.0, -1.0]).unwrap();
        let out = infonce_loss(&z, &z.map(|x| -x), &[false, true], 1.0).unwrap();
        assert!(out.loss.abs() < 1e-15);
        assert!(out.grad_z.data().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn orthogonal_unit_rows_closed_form() {
        let z = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = infonce_loss(&z, &z, &[true, true], 1.0).unwrap();
        let want = (1.0 + (-1f64).exp()).ln();
        assert!((out.loss - want).abs() < 1e-14);
        assert!((out.loss - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn zero_rows_use_norm_floor() {
        let z = DenseMatrix::<f64>::from_vec(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = infonce_loss(&z, &z, &[true, true], 1.0).unwrap();
        assert!(out.loss.is_finite());
        assert!(out.grad_z.data().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn infonce_errors() {
        let z = DenseMatrix::<f64>::zeros(2, 2);
        assert!(infonce_loss(&z, &z, &[true, true], 0.0).is_err());
        assert!(infonce_loss(&z, &z, &[true, true], -1.0).is_err());
        assert!(infonce_loss(&z, &DenseMatrix::zeros(2, 3), &[true, true], 1.0).is_err());
        assert!(infonce_loss(&z, &z, &[false, false], 1.0).is_err());
    }
}
