//! Mini-batch gradient descent on mean squared error in scaled coordinates.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MlpModel, Scaling};
use crate::error::NeuralError;
use crate::scalar::Real;
use crate::telemetry::TelemetrySeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Half-open sample interval `[start, end)`.
    pub train_range: (usize, usize),
    pub test_range: (usize, usize),
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            train_range: (0, 8400),
            test_range: (8400, 9600),
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, samples: usize) -> Result<(), NeuralError> {
        let (a, b) = (self.train_range, self.test_range);
        if a.0 >= a.1 || b.0 >= b.1 {
            return Err(NeuralError::Config("ranges must be nonempty".into()));
        }
        if a.0 < b.1 && b.0 < a.1 {
            return Err(NeuralError::Config(format!(
                "train range {a:?} overlaps test range {b:?}"
            )));
        }
        if a.1.max(b.1) > samples {
            return Err(NeuralError::Config(format!(
                "ranges exceed the {samples} available samples"
            )));
        }
        if self.batch_size == 0 {
            return Err(NeuralError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NeuralError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-layer parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T: Real> {
    pub weights: Vec<DMatrix<T>>,
    pub biases: Vec<DVector<T>>,
}

/// Mean squared error `Σ(ŷ − y)² / (n·m)` of the network on already scaled
/// inputs `x` and targets `y` (column per sample), with its gradient by
/// backpropagation.
pub fn loss_and_gradient<T: Real>(
    model: &MlpModel<T>,
    x: &DMatrix<T>,
    y: &DMatrix<T>,
) -> Result<(T, Gradients<T>), NeuralError> {
    if x.nrows() != model.input_dim() {
        return Err(NeuralError::Dimension {
            expected: model.input_dim(),
            got: x.nrows(),
        });
    }
    if y.nrows() != model.output_dim() || y.ncols() != x.ncols() {
        return Err(NeuralError::Dimension {
            expected: model.output_dim(),
            got: y.nrows(),
        });
    }
    let trace = model.forward_trace(x.clone());
    let layers = model.weights.len();
    let mut delta = &trace[layers] - y;
    let scale = T::one() / T::of_usize(delta.len());
    let loss = delta.norm_squared() * scale;
    delta *= T::of(2.0) * scale;

    let mut weights = vec![DMatrix::zeros(0, 0); layers];
    let mut biases = vec![DVector::zeros(0); layers];
    for l in (0..layers).rev() {
        weights[l] = &delta * trace[l].transpose();
        biases[l] = delta.column_sum();
        if l > 0 {
            let mut back = model.weights[l].transpose() * &delta;
            back.zip_apply(&trace[l], |d, a| *d *= model.hidden_activation.slope(a));
            delta = back;
        }
    }
    Ok((loss, Gradients { weights, biases }))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Real> {
    pub model: MlpModel<T>,
    /// Training-range loss (scaled units) after each epoch.
    pub loss_history: Vec<T>,
}

/// Fits `model` (layer sizes `sizes`, initialized from `cfg.seed`) to map
/// states to injections over the training range.
pub fn train<T: Real>(
    series: &TelemetrySeries<T>,
    cfg: &TrainConfig,
    sizes: &[usize],
) -> Result<TrainOutcome<T>, NeuralError> {
    cfg.validate(series.len())?;
    let p = series.dim();
    if sizes.first() != Some(&p) || sizes.last() != Some(&p) {
        return Err(NeuralError::Dimension {
            expected: p,
            got: *sizes.first().unwrap_or(&0),
        });
    }
    let mut model = MlpModel::new(sizes, cfg.seed)?;
    let (start, end) = cfg.train_range;
    let x_raw = series.x.columns(start, end - start).into_owned();
    let y_raw = series.y.columns(start, end - start).into_owned();
    model.input_scaling = Scaling::fit(&x_raw);
    model.output_scaling = Scaling::fit(&y_raw);
    let x = model.input_scaling.forward(&x_raw);
    let y = model.output_scaling.forward(&y_raw);

    let lr = T::of(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) =
                loss_and_gradient(&model, &x.select_columns(batch), &y.select_columns(batch))?;
            if !loss.is_finite_value() {
                return Err(NeuralError::Divergence { epoch });
            }
            for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
                *w -= g * lr;
            }
            for (b, g) in model.biases.iter_mut().zip(&grad.biases) {
                *b -= g * lr;
            }
        }
        let out = model.forward_trace(x.clone()).pop().expect("nonempty");
        let loss = (out - &y).norm_squared() / T::of_usize(y.len());
        if !loss.is_finite_value() {
            return Err(NeuralError::Divergence { epoch });
        }
        loss_history.push(loss);
    }
    Ok(TrainOutcome {
        model,
        loss_history,
    })
}

/// `‖prediction − truth‖₂ / ‖truth‖₂` over a trace.
pub fn relative_rmse<T: Real>(prediction: &[T], truth: &[T]) -> Result<T, NeuralError> {
    if prediction.len() != truth.len() {
        return Err(NeuralError::Dimension {
            expected: truth.len(),
            got: prediction.len(),
        });
    }
    let err: T = prediction
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let norm: T = truth.iter().map(|&b| b * b).sum();
    Ok((err / norm).sqrt())
}
