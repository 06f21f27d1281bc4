#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("{truth} true values but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("metric undefined: target is constant")]
    Undefined,
}

fn check_len(truth: usize, pred: usize) -> Result<(), MetricError> {
    if truth == pred {
        Ok(())
    } else {
        Err(MetricError::LengthMismatch { truth, pred })
    }
}

fn class_f1(y_true: &[usize], y_pred: &[usize], class: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == class, p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// F1 over class indices. With two classes this is the F1 of class 1, the
/// lexicographically last label; otherwise the macro average over every
/// class present in either vector.
pub fn f1_score(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64, MetricError> {
    check_len(y_true.len(), y_pred.len())?;
    if n_classes == 2 {
        return Ok(class_f1(y_true, y_pred, 1));
    }
    let mut present: Vec<usize> = y_true.iter().chain(y_pred).copied().collect();
    present.sort_unstable();
    present.dedup();
    if present.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = present.iter().map(|&c| class_f1(y_true, y_pred, c)).sum();
    Ok(total / present.len() as f64)
}

/// One minus the relative absolute error against the mean predictor.
pub fn one_minus_rae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check_len(y_true.len(), y_pred.len())?;
    if y_true.is_empty() {
        return Err(MetricError::Undefined);
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let denom: f64 = y_true.iter().map(|y| (mean - y).abs()).sum();
    if denom == 0.0 {
        return Err(MetricError::Undefined);
    }
    let num: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (p - y).abs()).sum();
    Ok(1.0 - num / denom)
}
