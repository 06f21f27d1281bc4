use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;

/// Fully connected layer with `n_out × n_in` row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            out.push(self.biases[o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

/// Multilayer perceptron mapping a state vector to one value per action.
/// Hidden layers use ReLU; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Parameter-shaped gradient of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.biases);
    }
    out
}

impl QNetwork {
    /// Xavier-uniform weights, zero biases. `sizes` lists the input width,
    /// each hidden width and the number of actions.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self, AgentError> {
        // a zero-width input is allowed: the output then depends on biases only
        if sizes.len() < 2 || sizes[1..].contains(&0) {
            return Err(AgentError::BadConfig("network needs an output layer and non-empty hidden layers"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (6.0 / (n_in + n_out) as f64).sqrt();
                let mut l = Layer::zeros(n_in, n_out);
                l.weights.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
                l
            })
            .collect();
        Ok(Self { layers })
    }

    /// A network with the given sizes and every parameter zero.
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, AgentError> {
        if layers.is_empty() {
            return Err(AgentError::BadConfig("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.biases.len() != l.n_out {
                return Err(AgentError::BadConfig("layer parameter count does not match its shape"));
            }
            if i > 0 && layers[i - 1].n_out != l.n_in {
                return Err(AgentError::BadConfig("consecutive layers do not connect"));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_actions(&self) -> usize {
        self.layers.last().expect("non-empty").n_out
    }

    /// Activations of every layer, input first; hidden entries are post-ReLU.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(l.n_out);
            l.apply(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        if input.len() != self.n_inputs() {
            return Err(AgentError::DimensionMismatch {
                expected: self.n_inputs(),
                found: input.len(),
            });
        }
        Ok(self.activations(input).pop().expect("output layer"))
    }

    /// Adds `scale · ∂q[action]/∂θ` at `input` into `grad`; returns q[action].
    pub(crate) fn accumulate_gradient(&self, input: &[f64], action: usize, scale: f64, grad: &mut Gradients) -> f64 {
        let acts = self.activations(input);
        let q = acts[acts.len() - 1][action];
        let mut delta = vec![0.0; self.n_actions()];
        delta[action] = scale;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let a_in = &acts[i];
            let g = &mut grad.layers[i];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * l.n_in..(o + 1) * l.n_in];
                for (gw, a) in row.iter_mut().zip(a_in) {
                    *gw += d * a;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; l.n_in];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU derivative of the hidden layer feeding this one
            for (p, a) in prev.iter_mut().zip(a_in) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        q
    }

    pub(crate) fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    pub(crate) fn descend(&mut self, grad: &Gradients, learning_rate: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, d) in l.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * d;
            }
            for (b, d) in l.biases.iter_mut().zip(&g.biases) {
                *b -= learning_rate * d;
            }
        }
    }

    /// All parameters in layer order, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<(), AgentError> {
        let expected: usize = self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum();
        if params.len() != expected {
            return Err(AgentError::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v = *it.next().expect("counted"));
        }
        Ok(())
    }

    /// Overwrites this network's parameters with `source`'s.
    pub fn copy_from(&mut self, source: &QNetwork) -> Result<(), AgentError> {
        if self.sizes() != source.sizes() {
            return Err(AgentError::ArchitectureMismatch {
                target: self.sizes(),
                found: source.sizes(),
            });
        }
        self.layers.clone_from(&source.layers);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let net: QNetwork = serde_json::from_str(text)?;
        Self::from_layers(net.layers)
    }
}
