//! Training objectives: supervised NLL and the contrastive mutual-information loss.

use thiserror::Error;

use crate::tensor::{sigmoid, Matrix, Tape, Tensor, TensorError};

/// Probability clamp applied before every logarithm in [`mi_loss`].
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("label {label} is not below the class count {classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{indices} indices but {labels} labels")]
    LengthMismatch { indices: usize, labels: usize },
    #[error("objective over an empty node set")]
    Empty,
}

/// `−(1/N) Σ_i Z[idx_i, y_i]` over the rows `idx` of log-probabilities `z`.
pub fn nll_loss<'t>(
    z: Tensor<'t>,
    idx: &[usize],
    labels: &[usize],
) -> Result<Tensor<'t>, ObjectiveError> {
    if idx.len() != labels.len() {
        return Err(ObjectiveError::LengthMismatch {
            indices: idx.len(),
            labels: labels.len(),
        });
    }
    if idx.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    let classes = z.shape().1;
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(ObjectiveError::LabelOutOfRange { label, classes });
    }
    Ok(z.gather_rows(idx)?
        .pick_per_row(labels)?
        .mean()?
        .scale(-1.0)?)
}

/// `g = softmax(mean over rows of H)`, a `1 × d` tensor.
pub fn graph_summary(h: Tensor<'_>) -> Result<Tensor<'_>, ObjectiveError> {
    Ok(h.mean_rows()?.softmax_row()?)
}

/// `S_i = sigmoid(h_iᵀ M g)` for every row, `n × 1`.
pub fn discriminate<'t>(
    h: Tensor<'t>,
    m: Tensor<'t>,
    g: Tensor<'t>,
) -> Result<Tensor<'t>, ObjectiveError> {
    Ok(h.bilinear(m, g)?.sigmoid()?)
}

/// `(1/N) Σ_i [log S(h_i, g) + log(1 − S(h̃_i, g))]` with `g` taken from the
/// real embeddings. Training maximizes this value; it is bounded above by 0.
pub fn mi_loss<'t>(
    real: Tensor<'t>,
    fake: Tensor<'t>,
    m: Tensor<'t>,
) -> Result<Tensor<'t>, ObjectiveError> {
    if real.shape().0 == 0 {
        return Err(ObjectiveError::Empty);
    }
    let g = graph_summary(real)?;
    let pos = discriminate(real, m, g)?
        .log_clamped(LOG_EPS, 1.0 - LOG_EPS)?
        .mean()?;
    let neg = discriminate(fake, m, g)?
        .scale(-1.0)?
        .add_scalar(1.0)?
        .log_clamped(LOG_EPS, 1.0 - LOG_EPS)?
        .mean()?;
    Ok(pos.add(neg)?)
}

/// Plain-value [`mi_loss`].
pub fn mi_loss_value(real: &Matrix, fake: &Matrix, m: &Matrix) -> Result<f64, ObjectiveError> {
    let tape = Tape::new();
    let loss = mi_loss(
        tape.constant(real.clone()),
        tape.constant(fake.clone()),
        tape.constant(m.clone()),
    )?;
    Ok(loss.value().item())
}

/// Plain-value [`graph_summary`].
pub fn graph_summary_value(h: &Matrix) -> Result<Vec<f64>, ObjectiveError> {
    let tape = Tape::new();
    Ok(graph_summary(tape.constant(h.clone()))?
        .value()
        .as_slice()
        .to_vec())
}

/// `sigmoid(hᵀ M g)` for single vectors.
pub fn discriminate_value(h: &[f64], m: &Matrix, g: &[f64]) -> f64 {
    let mut s = 0.0;
    for (j, hj) in h.iter().enumerate() {
        s += hj * m.row(j).iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    }
    sigmoid(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nll_uniform_row() {
        let tape = Tape::new();
        let half = 0.5f64.ln();
        let z = tape.constant(Matrix::from_rows(&[vec![half, half]]));
        let loss = nll_loss(z, &[0], &[0]).unwrap();
        assert!((loss.value().item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn nll_hand_case() {
        let tape = Tape::new();
        let z = Matrix::from_rows(&[vec![-0.1, -2.4], vec![-1.2, -0.4], vec![-0.7, -0.7]]);
        let loss = nll_loss(tape.constant(z), &[0, 1, 2], &[0, 1, 1])
            .unwrap()
            .value()
            .item();
        assert!((loss - (0.1 + 0.4 + 0.7) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nll_rejects_bad_label() {
        let tape = Tape::new();
        let z = tape.constant(Matrix::zeros(2, 2));
        assert!(matches!(
            nll_loss(z, &[0], &[2]),
            Err(ObjectiveError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn summary_examples() {
        let g = graph_summary_value(&Matrix::filled(3, 4, 2.5)).unwrap();
        assert!(g.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let h = Matrix::from_rows(&[vec![1.0, 2.0, 0.0]]);
        let g = graph_summary_value(&h).unwrap();
        let z: f64 = [1.0f64, 2.0, 0.0].iter().map(|v| v.exp()).sum();
        assert!((g[1] - 2f64.exp() / z).abs() < 1e-15);
    }

    #[test]
    fn discriminator_examples() {
        let e1 = [1.0, 0.0, 0.0];
        assert!(
            (discriminate_value(&e1, &Matrix::identity(3), &e1) - 0.731_058_578_630_004_9).abs()
                < 1e-15
        );
        assert_eq!(
            discriminate_value(&[0.3, -1.0, 2.0], &Matrix::zeros(3, 3), &[0.1, 0.2, 0.7]),
            0.5
        );
    }

    #[test]
    fn chance_level_mi() {
        let h = Matrix::from_fn(4, 3, |r, c| (r + c) as f64);
        let v = mi_loss_value(&h, &h, &Matrix::zeros(3, 3)).unwrap();
        assert!((v + 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mi_hand_case() {
        let real = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
        let fake = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![-0.5, 0.2]]);
        let m = Matrix::from_rows(&[vec![2.0, -1.0], vec![0.5, 1.0]]);
        let g = graph_summary_value(&real).unwrap();
        let mut want = 0.0;
        for i in 0..3 {
            want += discriminate_value(real.row(i), &m, &g).ln();
            want += (1.0 - discriminate_value(fake.row(i), &m, &g)).ln();
        }
        want /= 3.0;
        assert!((mi_loss_value(&real, &fake, &m).unwrap() - want).abs() < 1e-14);
        assert!(want < 0.0);
    }
}
