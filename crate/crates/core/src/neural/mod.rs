//! A small multilayer perceptron that regresses injections from states, and
//! its chain-rule Jacobian.

mod train;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NeuralError;
use crate::powerflow::{JacobianMatrix, Provenance, StateIndexMap};
use crate::scalar::Real;

pub use train::{loss_and_gradient, relative_rmse, train, Gradients, TrainConfig, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply<T: Real>(self, z: &mut DMatrix<T>) {
        if self == Activation::Tanh {
            z.apply(|v| *v = v.tanh());
        }
    }

    /// Derivative expressed through the activation's output `a`.
    fn slope<T: Real>(self, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Identity => T::one(),
        }
    }
}

/// Per-feature affine map `z = (v − mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling<T: Real> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> Scaling<T> {
    pub fn identity(n: usize) -> Self {
        Scaling {
            mean: vec![T::zero(); n],
            std: vec![T::one(); n],
        }
    }

    /// Fitted on the columns of `data` (features × samples); constant
    /// features keep unit scale.
    pub fn fit(data: &DMatrix<T>) -> Self {
        let n = T::of_usize(data.ncols());
        let (mean, std) = data
            .row_iter()
            .map(|row| {
                let m = row.iter().copied().sum::<T>() / n;
                let var = row.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
                let s = var.sqrt();
                (m, if s > T::zero() { s } else { T::one() })
            })
            .unzip();
        Scaling { mean, std }
    }

    fn forward(&self, data: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |r, c| {
            (data[(r, c)] - self.mean[r]) / self.std[r]
        })
    }

    fn inverse(&self, data: &DMatrix<T>) -> DMatrix<T> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |r, c| {
            data[(r, c)] * self.std[r] + self.mean[r]
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel<T: Real> {
    layer_sizes: Vec<usize>,
    /// `W^l`, `sizes[l+1] × sizes[l]`.
    pub(crate) weights: Vec<DMatrix<T>>,
    pub(crate) biases: Vec<DVector<T>>,
    /// Applied on every layer except the last, which is linear.
    pub(crate) hidden_activation: Activation,
    pub(crate) input_scaling: Scaling<T>,
    pub(crate) output_scaling: Scaling<T>,
    seed: u64,
}

/// Activations of every layer for a batch (column per sample); `[0]` is the
/// scaled input.
pub(crate) type Trace<T> = Vec<DMatrix<T>>;

impl<T: Real> MlpModel<T> {
    /// Seeded initialization: weights uniform in `±1/√fan_in`, zero biases,
    /// identity scaling.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self, NeuralError> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = layer_sizes
            .windows(2)
            .map(|w| {
                let limit = 1.0 / (w[0] as f64).sqrt();
                // Row-major draw order, independent of storage layout.
                let mut m = DMatrix::zeros(w[1], w[0]);
                for r in 0..w[1] {
                    for c in 0..w[0] {
                        m[(r, c)] = T::of(rng.random_range(-limit..limit));
                    }
                }
                m
            })
            .collect();
        let biases = layer_sizes[1..]
            .iter()
            .map(|&n| DVector::zeros(n))
            .collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation: Activation::Tanh,
            input_scaling: Scaling::identity(layer_sizes[0]),
            output_scaling: Scaling::identity(*layer_sizes.last().expect("checked")),
            seed,
        })
    }

    /// Model with explicit parameters and identity scaling.
    pub fn from_parameters(
        weights: Vec<DMatrix<T>>,
        biases: Vec<DVector<T>>,
        hidden_activation: Activation,
    ) -> Result<Self, NeuralError> {
        let first = weights
            .first()
            .ok_or_else(|| NeuralError::Config("no layers".into()))?;
        let mut sizes = vec![first.ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            let expected = *sizes.last().expect("nonempty");
            if w.ncols() != expected {
                return Err(NeuralError::Dimension {
                    expected,
                    got: w.ncols(),
                });
            }
            if b.len() != w.nrows() {
                return Err(NeuralError::Dimension {
                    expected: w.nrows(),
                    got: b.len(),
                });
            }
            sizes.push(w.nrows());
        }
        if biases.len() != weights.len() {
            return Err(NeuralError::Dimension {
                expected: weights.len(),
                got: biases.len(),
            });
        }
        check_sizes(&sizes)?;
        Ok(MlpModel {
            input_scaling: Scaling::identity(sizes[0]),
            output_scaling: Scaling::identity(*sizes.last().expect("nonempty")),
            layer_sizes: sizes,
            weights,
            biases,
            hidden_activation,
            seed: 0,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn weights(&self) -> &[DMatrix<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<T>] {
        &self.biases
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_scaling(&self) -> &Scaling<T> {
        &self.input_scaling
    }

    pub fn output_scaling(&self) -> &Scaling<T> {
        &self.output_scaling
    }

    /// Forward pass in scaled coordinates, keeping every layer's output.
    pub(crate) fn forward_trace(&self, z0: DMatrix<T>) -> Trace<T> {
        let last = self.weights.len() - 1;
        let mut trace = Vec::with_capacity(self.weights.len() + 1);
        trace.push(z0);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * trace.last().expect("nonempty");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                self.hidden_activation.apply(&mut z);
            }
            trace.push(z);
        }
        trace
    }

    /// Predictions for a batch of states (column per sample), in physical
    /// units.
    pub fn predict_batch(&self, x: &DMatrix<T>) -> Result<DMatrix<T>, NeuralError> {
        if x.nrows() != self.input_dim() {
            return Err(NeuralError::Dimension {
                expected: self.input_dim(),
                got: x.nrows(),
            });
        }
        let mut trace = self.forward_trace(self.input_scaling.forward(x));
        Ok(self.output_scaling.inverse(&trace.pop().expect("nonempty")))
    }

    pub fn predict(&self, x: &[T]) -> Result<Vec<T>, NeuralError> {
        let col = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.predict_batch(&col)?.as_slice().to_vec())
    }

    /// `∂y/∂x` at `x` in physical units:
    /// `diag(σ_y) · W^L Γ^{L−1} W^{L−1} ⋯ Γ¹ W¹ · diag(1/σ_x)`, with `Γ^l` the
    /// diagonal of activation derivatives.
    pub fn jacobian_matrix(&self, x: &[T]) -> Result<DMatrix<T>, NeuralError> {
        if x.len() != self.input_dim() {
            return Err(NeuralError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let col = DMatrix::from_column_slice(x.len(), 1, x);
        let trace = self.forward_trace(self.input_scaling.forward(&col));
        let mut j = self.weights[0].clone();
        // trace[l] holds the activations feeding weights[l].
        for (w, a) in self.weights[1..].iter().zip(&trace[1..]) {
            for (r, mut row) in j.row_iter_mut().enumerate() {
                row.scale_mut(self.hidden_activation.slope(a[r]));
            }
            j = w * j;
        }
        for (r, mut row) in j.row_iter_mut().enumerate() {
            row.scale_mut(self.output_scaling.std[r]);
        }
        for (c, mut column) in j.column_iter_mut().enumerate() {
            column.unscale_mut(self.input_scaling.std[c]);
        }
        Ok(j)
    }

    /// Chain-rule Jacobian laid out on `index_map` (plain partials, not
    /// V-scaled).
    pub fn chain_rule_jacobian(
        &self,
        x: &[T],
        index_map: &StateIndexMap,
    ) -> Result<JacobianMatrix<T>, NeuralError> {
        if index_map.dim() != self.input_dim() || index_map.dim() != self.output_dim() {
            return Err(NeuralError::Dimension {
                expected: index_map.dim(),
                got: self.input_dim(),
            });
        }
        Ok(JacobianMatrix {
            values: self.jacobian_matrix(x)?,
            index_map: index_map.clone(),
            provenance: Provenance::ChainRule,
            v_scaled: false,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            layer_sizes: self.layer_sizes.clone(),
            activation: self.hidden_activation,
            output_activation: Activation::Identity,
            seed: self.seed,
            weights: self
                .weights
                .iter()
                .map(|w| {
                    let mut v = Vec::with_capacity(w.len());
                    for r in 0..w.nrows() {
                        v.extend(w.row(r).iter().map(|e| e.as_f64()));
                    }
                    v
                })
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.iter().map(|e| e.as_f64()).collect())
                .collect(),
            input_scaling: ScalingDocument::of(&self.input_scaling),
            output_scaling: ScalingDocument::of(&self.output_scaling),
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| NeuralError::Format(e.to_string()))?;
        check_sizes(&doc.layer_sizes)?;
        if doc.output_activation != Activation::Identity {
            return Err(NeuralError::Format(
                "output activation must be identity".into(),
            ));
        }
        let layers = doc.layer_sizes.len() - 1;
        if doc.weights.len() != layers || doc.biases.len() != layers {
            return Err(NeuralError::Format(format!("expected {layers} layers")));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (l, w) in doc.layer_sizes.windows(2).enumerate() {
            let (rows, cols) = (w[1], w[0]);
            if doc.weights[l].len() != rows * cols || doc.biases[l].len() != rows {
                return Err(NeuralError::Format(format!(
                    "layer {l} has the wrong shape"
                )));
            }
            weights.push(DMatrix::from_row_iterator(
                rows,
                cols,
                doc.weights[l].iter().map(|&v| T::of(v)),
            ));
            biases.push(DVector::from_iterator(
                rows,
                doc.biases[l].iter().map(|&v| T::of(v)),
            ));
        }
        let input_scaling = doc.input_scaling.to(doc.layer_sizes[0])?;
        let output_scaling = doc.output_scaling.to(doc.layer_sizes[layers])?;
        Ok(MlpModel {
            layer_sizes: doc.layer_sizes,
            weights,
            biases,
            hidden_activation: doc.activation,
            input_scaling,
            output_scaling,
            seed: doc.seed,
        })
    }
}

fn check_sizes(sizes: &[usize]) -> Result<(), NeuralError> {
    if sizes.len() < 2 {
        return Err(NeuralError::Config(
            "need at least input and output layer sizes".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(NeuralError::Config(format!("empty layer in {sizes:?}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScalingDocument {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl ScalingDocument {
    fn of<T: Real>(s: &Scaling<T>) -> Self {
        ScalingDocument {
            mean: s.mean.iter().map(|v| v.as_f64()).collect(),
            std: s.std.iter().map(|v| v.as_f64()).collect(),
        }
    }

    fn to<T: Real>(&self, n: usize) -> Result<Scaling<T>, NeuralError> {
        if self.mean.len() != n || self.std.len() != n {
            return Err(NeuralError::Format(format!(
                "scaling must have {n} entries"
            )));
        }
        Ok(Scaling {
            mean: self.mean.iter().map(|&v| T::of(v)).collect(),
            std: self.std.iter().map(|&v| T::of(v)).collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    layer_sizes: Vec<usize>,
    activation: Activation,
    output_activation: Activation,
    seed: u64,
    /// Row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_scaling: ScalingDocument,
    output_scaling: ScalingDocument,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_predict_zero() {
        let mut m = MlpModel::<f64>::new(&[3, 4, 2], 1).unwrap();
        m.weights.iter_mut().for_each(|w| w.fill(0.0));
        assert_eq!(m.predict(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let b = DVector::from_vec(vec![0.1, -0.2]);
        let m = MlpModel::from_parameters(vec![w], vec![b], Activation::Tanh).unwrap();
        let y: Vec<f64> = m.predict(&[3.0, 4.0]).unwrap();
        assert!((y[0] - 11.1).abs() < 1e-14 && (y[1] - -1.2).abs() < 1e-14);
    }

    #[test]
    fn init_respects_fan_in_limit() {
        let m = MlpModel::<f64>::new(&[16, 8, 3], 9).unwrap();
        assert!(m.weights[0].amax() < 0.25);
        assert!(m.weights[1].amax() < 1.0 / 8f64.sqrt());
        assert_eq!(m, MlpModel::new(&[16, 8, 3], 9).unwrap());
        assert_ne!(m, MlpModel::new(&[16, 8, 3], 10).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpModel::<f64>::new(&[3], 0).is_err());
        assert!(MlpModel::<f64>::new(&[3, 0, 2], 0).is_err());
        let m = MlpModel::<f64>::new(&[3, 2], 0).unwrap();
        assert_eq!(
            m.predict(&[1.0]),
            Err(NeuralError::Dimension {
                expected: 3,
                got: 1
            })
        );
        let bad = MlpModel::from_parameters(
            vec![DMatrix::<f64>::zeros(2, 3), DMatrix::zeros(1, 3)],
            vec![DVector::zeros(2), DVector::zeros(1)],
            Activation::Tanh,
        );
        assert!(matches!(
            bad,
            Err(NeuralError::Dimension {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = MlpModel::<f64>::new(&[3, 5, 2], 4).unwrap();
        m.input_scaling.mean = vec![0.1, 0.2, 1.0 / 3.0];
        let back = MlpModel::<f64>::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let small = MlpModel::<f32>::new(&[2, 2], 4).unwrap();
        assert_eq!(MlpModel::<f32>::from_json(&small.to_json()).unwrap(), small);
        assert!(matches!(
            MlpModel::<f64>::from_json("{}"),
            Err(NeuralError::Format(_))
        ));
    }
}
