//! Logistic regression heads trained by full-batch gradient descent.
//!
//! The objective for one head over `n` examples is the mean log loss plus
//! `l2 / 2 * ||w||^2` (the bias is not penalized). Several heads over the same
//! features are trained jointly by summing their objectives; heads do not share
//! parameters, so the joint gradient is the per-head gradients stacked.
//!
//! The step size is `learning_rate / L`, where `L` bounds the smoothness
//! constant of a single head's objective: `max_i(||x_i||^2 + 1) / 4 + l2`. Any
//! `learning_rate <= 1` therefore gives a non-increasing loss sequence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::FeatureVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training data contains a single class")]
    SingleClassDataset,
    #[error("loss became non-finite at epoch {epoch}; learning rate too large")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyperparameter: {0}")]
    BadHyper(String),
    #[error("label matrix does not match the number of examples")]
    ShapeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { learning_rate: 1.0, epochs: 200, l2: 1e-4 }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::BadHyper(format!("learning_rate {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(TrainError::BadHyper("epochs must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(TrainError::BadHyper(format!("l2 {}", self.l2)));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticHead {
    pub fn zeros(dim: usize) -> Self {
        LogisticHead { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn logit(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn probability(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Mean log loss plus the L2 penalty.
    pub fn loss(&self, xs: &[FeatureVector], ys: &[bool], l2: f64) -> f64 {
        let n = xs.len().max(1) as f64;
        let data: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                let z = self.logit(x);
                softplus(z) - if y { z } else { 0.0 }
            })
            .sum();
        data / n + 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Analytic gradient of [`LogisticHead::loss`]: weights part and bias part.
    pub fn gradient(&self, xs: &[FeatureVector], ys: &[bool], l2: f64) -> (Vec<f64>, f64) {
        let n = xs.len().max(1) as f64;
        let mut gw: Vec<f64> = self.weights.iter().map(|w| l2 * w).collect();
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let residual = (self.probability(x) - if y { 1.0 } else { 0.0 }) / n;
            for (i, v) in &x.entries {
                gw[*i] += residual * v;
            }
            gb += residual;
        }
        (gw, gb)
    }
}

/// Smoothness bound used to scale the step size.
pub fn lipschitz_bound(xs: &[FeatureVector], l2: f64) -> f64 {
    let max_sq = xs.iter().map(|x| x.squared_norm()).fold(0.0, f64::max);
    (max_sq + 1.0) / 4.0 + l2
}

/// Outcome of a joint training run.
#[derive(Debug, Clone)]
pub struct Trained {
    pub heads: Vec<LogisticHead>,
    /// Joint loss before the first update and after every epoch.
    pub loss_history: Vec<f64>,
}

/// Trains one head per label column from zero initialization.
///
/// `labels[k][i]` is the target of head `k` on example `i`. Every head must see
/// both classes.
pub fn train_joint(
    xs: &[FeatureVector],
    labels: &[Vec<bool>],
    dim: usize,
    hyper: &Hyper,
) -> Result<Trained, TrainError> {
    hyper.validate()?;
    for column in labels {
        if column.len() != xs.len() {
            return Err(TrainError::ShapeMismatch);
        }
        if !(column.iter().any(|y| *y) && column.iter().any(|y| !*y)) {
            return Err(TrainError::SingleClassDataset);
        }
    }
    let step = hyper.learning_rate / lipschitz_bound(xs, hyper.l2);
    let mut heads: Vec<LogisticHead> = labels.iter().map(|_| LogisticHead::zeros(dim)).collect();
    let joint_loss =
        |heads: &[LogisticHead]| -> f64 { heads.iter().zip(labels).map(|(h, ys)| h.loss(xs, ys, hyper.l2)).sum() };
    let mut history = Vec::with_capacity(hyper.epochs + 1);
    history.push(joint_loss(&heads));
    for epoch in 1..=hyper.epochs {
        for (head, ys) in heads.iter_mut().zip(labels) {
            let (gw, gb) = head.gradient(xs, ys, hyper.l2);
            for (w, g) in head.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            head.bias -= step * gb;
        }
        let loss = joint_loss(&heads);
        if !loss.is_finite() || heads.iter().any(|h| !h.bias.is_finite()) {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        history.push(loss);
    }
    Ok(Trained { heads, loss_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(entries: &[(usize, f64)]) -> FeatureVector {
        FeatureVector { entries: entries.to_vec() }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let xs = vec![fv(&[(0, 1.5), (2, 0.3)]), fv(&[(1, 2.0)]), fv(&[(0, 0.2), (1, 0.7), (2, 1.1)])];
        let ys = vec![true, false, true];
        let head = LogisticHead { weights: vec![0.3, -0.2, 0.5], bias: 0.1 };
        let l2 = 0.01;
        let (gw, gb) = head.gradient(&xs, &ys, l2);
        let h = 1e-5;
        for (i, g) in gw.iter().enumerate() {
            let mut plus = head.clone();
            plus.weights[i] += h;
            let mut minus = head.clone();
            minus.weights[i] -= h;
            let numeric = (plus.loss(&xs, &ys, l2) - minus.loss(&xs, &ys, l2)) / (2.0 * h);
            assert!((numeric - g).abs() / numeric.abs().max(g.abs()) < 1e-6);
        }
        let mut plus = head.clone();
        plus.bias += h;
        let mut minus = head.clone();
        minus.bias -= h;
        let numeric = (plus.loss(&xs, &ys, l2) - minus.loss(&xs, &ys, l2)) / (2.0 * h);
        assert!((numeric - gb).abs() < 1e-8);
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![fv(&[(0, 1.0)]), fv(&[(0, 2.0)])];
        let err = train_joint(&xs, &[vec![true, true]], 1, &Hyper::default()).unwrap_err();
        assert_eq!(err, TrainError::SingleClassDataset);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let xs = vec![fv(&[(0, 1.0)]), fv(&[(0, -1.0)])];
        let hyper = Hyper { learning_rate: 1e308, epochs: 5, l2: 0.0 };
        let err = train_joint(&xs, &[vec![true, false]], 1, &hyper).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { .. }));
    }

    #[test]
    fn loss_is_non_increasing() {
        let xs: Vec<_> = (0..20).map(|i| fv(&[(i % 4, 1.0 + i as f64 / 10.0), (4, 0.5)])).collect();
        let ys: Vec<bool> = (0..20).map(|i| i % 4 < 2).collect();
        let t = train_joint(&xs, &[ys.clone(), ys.iter().map(|y| !y).collect()], 5, &Hyper::default()).unwrap();
        for w in t.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(t.heads[0].probability(&xs[0]) > 0.5);
        assert!(t.heads[1].probability(&xs[0]) < 0.5);
    }

    #[test]
    fn bad_hyper() {
        let xs = vec![fv(&[(0, 1.0)]), fv(&[(0, -1.0)])];
        for h in [
            Hyper { learning_rate: 0.0, ..Hyper::default() },
            Hyper { epochs: 0, ..Hyper::default() },
            Hyper { l2: -1.0, ..Hyper::default() },
        ] {
            assert!(matches!(train_joint(&xs, &[vec![true, false]], 1, &h), Err(TrainError::BadHyper(_))));
        }
    }
}
