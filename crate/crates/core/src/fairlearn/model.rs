use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Affine map with identity output.
    Linear,
    /// Affine map with sigmoid output.
    Logistic,
    /// ReLU hidden layers followed by an affine output layer.
    Mlp { hidden: Vec<usize> },
}

impl Architecture {
    /// One hidden ReLU layer of `width` units.
    pub fn two_layer(width: usize) -> Self {
        Architecture::Mlp {
            hidden: vec![width],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub link: Link,
    pub layers: Vec<Layer>,
}

/// Intermediate values kept by [`ModelParams::forward`] for backprop.
pub struct ForwardPass {
    /// Input to each layer (row-major samples), then the output pre-link.
    activations: Vec<DMatrix<f64>>,
    pub outputs: DMatrix<f64>,
}

impl ForwardPass {
    /// Pre-link outputs (logits for a sigmoid link).
    pub fn raw(&self) -> &DMatrix<f64> {
        self.activations.last().expect("at least one activation")
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ModelParams {
    /// Weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init(
        architecture: Architecture,
        task: Task,
        inputs: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if inputs == 0 {
            return Err(Error::InvalidArgument(
                "model needs at least one input".into(),
            ));
        }
        let (widths, link) = match &architecture {
            Architecture::Linear => (vec![inputs, 1], Link::Identity),
            Architecture::Logistic => (vec![inputs, 1], Link::Sigmoid),
            Architecture::Mlp { hidden } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::InvalidArgument(format!(
                        "bad hidden sizes {hidden:?}"
                    )));
                }
                let mut w = vec![inputs];
                w.extend(hidden);
                w.push(1);
                let link = match task {
                    Task::Classification => Link::Sigmoid,
                    Task::Regression => Link::Identity,
                };
                (w, link)
            }
        };
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                    bias: DVector::from_fn(w[1], |_, _| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self {
            architecture,
            link,
            layers,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_width(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::Dimension(format!(
                "model expects {} inputs, got {}",
                self.n_inputs(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<ForwardPass> {
        self.check_width(x)?;
        let mut activations = vec![x.clone()];
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let mut z = input * layer.weights.transpose();
            for mut r in z.row_iter_mut() {
                r += layer.bias.transpose();
            }
            if k < last {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        let raw = activations.last().unwrap();
        let outputs = match self.link {
            Link::Identity => raw.clone(),
            Link::Sigmoid => raw.map(sigmoid),
        };
        Ok(ForwardPass {
            activations,
            outputs,
        })
    }

    /// Gradients (same layout as `layers`) given `∂L/∂raw`, the loss
    /// derivative with respect to the pre-link outputs.
    pub fn backward(&self, pass: &ForwardPass, d_raw: &DMatrix<f64>) -> Vec<Layer> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_raw.clone();
        for k in (0..self.layers.len()).rev() {
            let input = &pass.activations[k];
            let weights = delta.transpose() * input;
            let bias = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            grads.push(Layer { weights, bias });
            if k > 0 {
                let mut back = &delta * &self.layers[k].weights;
                // ReLU mask from the stored post-activation
                back.zip_apply(input, |b, a| {
                    if a <= 0.0 {
                        *b = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        grads
    }

    pub(crate) fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub(crate) fn apply_flat(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().expect("parameter count");
            }
        }
    }
}

pub(crate) fn flatten(grads: &[Layer]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

/// Class-1 probabilities for classification models, raw outputs otherwise.
pub fn predict(model: &ModelParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(model.forward(x)?.outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_logistic_predicts_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m =
            ModelParams::init(Architecture::Logistic, Task::Classification, 3, &mut rng).unwrap();
        m.apply_flat(&vec![0.0; m.n_params()]);
        let x = DMatrix::from_fn(5, 3, |i, j| (i + j) as f64);
        assert!(predict(&m, &x).unwrap().iter().all(|p| *p == 0.5));
    }

    #[test]
    fn identity_linear_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ModelParams::init(Architecture::Linear, Task::Regression, 1, &mut rng).unwrap();
        m.apply_flat(&[1.0, 0.0]);
        let x = DMatrix::from_column_slice(4, 1, &[-1.5, 0.0, 2.0, 7.25]);
        assert_eq!(predict(&m, &x).unwrap(), x);
        assert!(predict(&m, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn row_permutation_permutes_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ModelParams::init(
            Architecture::two_layer(8),
            Task::Classification,
            4,
            &mut rng,
        )
        .unwrap();
        let x = DMatrix::from_fn(6, 4, |i, j| ((i * 3 + j) % 5) as f64 - 2.0);
        let perm = [3, 0, 5, 1, 4, 2];
        let px = x.select_rows(&perm);
        assert_eq!(
            predict(&m, &px).unwrap(),
            predict(&m, &x).unwrap().select_rows(&perm)
        );
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ModelParams::init(
            Architecture::Mlp { hidden: vec![5, 4] },
            Task::Regression,
            3,
            &mut rng,
        )
        .unwrap();
        let x = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-1.0..1.0));
        let w = DMatrix::from_fn(7, 1, |_, _| rng.random_range(-1.0..1.0));
        // loss = Σ w_i · out_i
        let loss = |m: &ModelParams| m.forward(&x).unwrap().outputs.component_mul(&w).sum();
        let pass = m.forward(&x).unwrap();
        let grad = flatten(&m.backward(&pass, &w));
        let base = m.flat();
        let h = 1e-6;
        for (k, g) in grad.iter().enumerate() {
            let mut plus = m.clone();
            let mut minus = m.clone();
            let mut v = base.clone();
            v[k] += h;
            plus.apply_flat(&v);
            v[k] -= 2.0 * h;
            minus.apply_flat(&v);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - g).abs() < 1e-6, "param {k}: {fd} vs {g}");
        }
    }
}
