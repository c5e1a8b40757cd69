//! L2-regularized logistic head trained by deterministic full-batch gradient
//! descent with Armijo backtracking line search.
//!
//! Reproducibility beats speed at these scales: no minibatching, no
//! stochasticity, start from the origin, identical hyperparameters give
//! identical heads.

use super::ParityError;

/// Linear head over frozen embeddings. The bias is never penalized.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_lambda: f64,
}

impl LogisticHead {
    /// Raw margin `w . x + b`; monotone in the probability, so ranking
    /// metrics can use it directly.
    pub fn score(&self, row: &[f32]) -> f64 {
        let mut z = self.bias;
        for (w, &x) in self.weights.iter().zip(row) {
            z += w * x as f64;
        }
        z
    }

    pub fn predict_proba(&self, row: &[f32]) -> f64 {
        sigmoid(self.score(row))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { l2_lambda: 1e-4, max_iters: 500, tol: 1e-6 }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss plus (lambda/2)||w||^2.
pub fn logistic_loss(rows: &[&[f32]], y: &[bool], w: &[f64], b: f64, l2_lambda: f64) -> f64 {
    let m = rows.len() as f64;
    let mut loss = 0.0f64;
    for (row, &label) in rows.iter().zip(y) {
        let mut z = b;
        for (wi, &x) in w.iter().zip(*row) {
            z += wi * x as f64;
        }
        loss += softplus(z) - if label { z } else { 0.0 };
    }
    loss / m + 0.5 * l2_lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`logistic_loss`] with respect to (w, b).
pub fn logistic_gradient(
    rows: &[&[f32]],
    y: &[bool],
    w: &[f64],
    b: f64,
    l2_lambda: f64,
) -> (Vec<f64>, f64) {
    let m = rows.len() as f64;
    let mut grad_w = vec![0.0f64; w.len()];
    let mut grad_b = 0.0f64;
    for (row, &label) in rows.iter().zip(y) {
        let mut z = b;
        for (wi, &x) in w.iter().zip(*row) {
            z += wi * x as f64;
        }
        let err = sigmoid(z) - if label { 1.0 } else { 0.0 };
        for (g, &x) in grad_w.iter_mut().zip(*row) {
            *g += err * x as f64;
        }
        grad_b += err;
    }
    for (g, wi) in grad_w.iter_mut().zip(w) {
        *g = *g / m + l2_lambda * wi;
    }
    (grad_w, grad_b / m)
}

pub fn train_logistic(
    rows: &[&[f32]],
    y: &[bool],
    cfg: &TrainConfig,
) -> Result<LogisticHead, ParityError> {
    Ok(train_logistic_traced(rows, y, cfg)?.0)
}

/// As [`train_logistic`], additionally returning the loss after every
/// accepted step (the first entry is the loss at the origin).
pub fn train_logistic_traced(
    rows: &[&[f32]],
    y: &[bool],
    cfg: &TrainConfig,
) -> Result<(LogisticHead, Vec<f64>), ParityError> {
    if rows.len() != y.len() {
        return Err(ParityError::Shape {
            reason: format!("{} rows for {} labels", rows.len(), y.len()),
        });
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(ParityError::SingleClass);
    }
    let dim = rows[0].len();

    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut loss = logistic_loss(rows, y, &w, b, cfg.l2_lambda);
    let mut losses = vec![loss];
    let mut step = 1.0f64;

    const ARMIJO_C: f64 = 1e-4;
    const SHRINK: f64 = 0.5;
    const MIN_STEP: f64 = 1e-18;

    for _ in 0..cfg.max_iters {
        let (grad_w, grad_b) = logistic_gradient(rows, y, &w, b, cfg.l2_lambda);
        let grad_inf = grad_w
            .iter()
            .chain(std::iter::once(&grad_b))
            .fold(0.0f64, |acc, g| acc.max(g.abs()));
        if grad_inf < cfg.tol {
            break;
        }
        let grad_sq: f64 =
            grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;

        // Backtrack along -grad until the Armijo condition holds.
        let mut alpha = (step * 2.0).min(1e6);
        let (new_w, new_b, new_loss) = loop {
            let cand_w: Vec<f64> =
                w.iter().zip(&grad_w).map(|(wi, g)| wi - alpha * g).collect();
            let cand_b = b - alpha * grad_b;
            let cand_loss = logistic_loss(rows, y, &cand_w, cand_b, cfg.l2_lambda);
            if cand_loss.is_nan() {
                return Err(ParityError::Diverged);
            }
            if cand_loss <= loss - ARMIJO_C * alpha * grad_sq {
                break (cand_w, cand_b, cand_loss);
            }
            alpha *= SHRINK;
            if alpha < MIN_STEP {
                // No acceptable step left; treat as converged.
                break (w.clone(), b, loss);
            }
        };
        if new_loss >= loss && alpha < MIN_STEP {
            break;
        }
        w = new_w;
        b = new_b;
        loss = new_loss;
        step = alpha;
        losses.push(loss);
        if !loss.is_finite() {
            return Err(ParityError::Diverged);
        }
    }

    Ok((LogisticHead { weights: w, bias: b, l2_lambda: cfg.l2_lambda }, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parity::roc_auc;

    #[test]
    fn zero_head_predicts_half() {
        let head = LogisticHead { weights: vec![0.0; 3], bias: 0.0, l2_lambda: 0.0 };
        assert_eq!(head.predict_proba(&[0.4, -2.0, 11.0]), 0.5);
    }

    #[test]
    fn gradient_at_origin_single_sample() {
        let rows: Vec<&[f32]> = vec![&[1.0]];
        let (gw, gb) = logistic_gradient(&rows, &[true], &[0.0], 0.0, 0.0);
        assert!((gw[0] + 0.5).abs() < 1e-15);
        assert!((gb + 0.5).abs() < 1e-15);
    }

    #[test]
    fn separable_1d_converges() {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..20 {
            data.push([-1.0f32]);
            y.push(false);
            data.push([1.0f32]);
            y.push(true);
        }
        let rows: Vec<&[f32]> = data.iter().map(|r| r.as_slice()).collect();
        let cfg = TrainConfig { l2_lambda: 1e-4, ..TrainConfig::default() };
        let (head, losses) = train_logistic_traced(&rows, &y, &cfg).unwrap();

        assert!(head.predict_proba(&[1.0]) > 0.9, "p = {}", head.predict_proba(&[1.0]));
        let scores: Vec<f64> = rows.iter().map(|r| head.score(r)).collect();
        let auc = roc_auc(&scores, &y).unwrap();
        assert!(auc >= 0.99, "auc = {auc}");
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "loss increased: {pair:?}");
        }

        // Cross-check against an independent Newton solver on the same
        // two-parameter problem.
        let (newton_w, newton_b) = newton_1d(&rows, &y, 1e-4);
        let newton_loss = logistic_loss(&rows, &y, &[newton_w], newton_b, 1e-4);
        let gd_loss = *losses.last().unwrap();
        assert!(
            (gd_loss - newton_loss).abs() < 1e-6,
            "gd {gd_loss} vs newton {newton_loss}"
        );
    }

    // Full Newton iteration for d = 1 (two parameters), used only as a
    // second-order reference optimizer.
    fn newton_1d(rows: &[&[f32]], y: &[bool], lambda: f64) -> (f64, f64) {
        let m = rows.len() as f64;
        let (mut w, mut b) = (0.0f64, 0.0f64);
        for _ in 0..200 {
            let mut g = [0.0f64; 2];
            let mut h = [[0.0f64; 2]; 2];
            for (row, &label) in rows.iter().zip(y) {
                let x = row[0] as f64;
                let p = sigmoid(w * x + b);
                let err = p - if label { 1.0 } else { 0.0 };
                let s = p * (1.0 - p);
                g[0] += err * x;
                g[1] += err;
                h[0][0] += s * x * x;
                h[0][1] += s * x;
                h[1][1] += s;
            }
            g[0] = g[0] / m + lambda * w;
            g[1] /= m;
            h[0][0] = h[0][0] / m + lambda;
            h[0][1] /= m;
            h[1][0] = h[0][1];
            h[1][1] /= m;
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let dw = (h[1][1] * g[0] - h[0][1] * g[1]) / det;
            let db = (h[0][0] * g[1] - h[1][0] * g[0]) / det;
            w -= dw;
            b -= db;
            if dw.abs().max(db.abs()) < 1e-12 {
                break;
            }
        }
        (w, b)
    }

    #[test]
    fn single_class_rejected() {
        let data = [[0.0f32], [1.0f32]];
        let rows: Vec<&[f32]> = data.iter().map(|r| r.as_slice()).collect();
        assert!(matches!(
            train_logistic(&rows, &[true, true], &TrainConfig::default()),
            Err(ParityError::SingleClass)
        ));
    }
}
