use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::OWN_BUILDS;
use crate::encoder::STATE_DIM;
use crate::error::NetError;

/// Probability floor inside the log of the cross-entropy loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkTopology {
    layer_sizes: Vec<usize>,
}

impl Default for NetworkTopology {
    /// 210 inputs, four hidden layers of 128, 58 outputs.
    fn default() -> Self {
        NetworkTopology { layer_sizes: vec![STATE_DIM, 128, 128, 128, 128, OWN_BUILDS] }
    }
}

impl NetworkTopology {
    /// Needs at least one hidden layer and no zero-width layer.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self, NetError> {
        if layer_sizes.len() < 3 {
            return Err(NetError::Topology(format!(
                "need input, at least one hidden and an output layer, got {} sizes",
                layer_sizes.len()
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(NetError::Topology("layer sizes must be positive".into()));
        }
        Ok(NetworkTopology { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// A fully connected layer. Weights are stored input-major:
/// `weights[i * outputs + o]` connects input `i` to output `o`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    /// Weight from input `i` to output `o`.
    #[inline]
    pub fn weight(&self, o: usize, i: usize) -> f64 {
        self.weights[i * self.outputs + o]
    }

    #[inline]
    pub fn weight_mut(&mut self, o: usize, i: usize) -> &mut f64 {
        &mut self.weights[i * self.outputs + o]
    }

    fn fill(&mut self, value: f64) {
        self.weights.iter_mut().for_each(|w| *w = value);
        self.biases.iter_mut().for_each(|b| *b = value);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    topology: NetworkTopology,
    pub layers: Vec<Layer>,
}

/// Per-parameter loss gradients, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients { layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn clear(&mut self) {
        self.layers.iter_mut().for_each(|l| l.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|g| *g *= factor);
        }
    }

    /// Weights then biases, layer by layer.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

/// Reusable activation buffers for one forward/backward pass.
#[derive(Clone, Debug)]
pub struct Workspace {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    active: Vec<usize>,
}

impl Workspace {
    pub fn new(topology: &NetworkTopology) -> Self {
        let acts = topology.layer_sizes.iter().map(|&n| vec![0.0; n]).collect();
        let deltas = topology.layer_sizes.iter().map(|&n| vec![0.0; n]).collect();
        let widest = topology.layer_sizes.iter().copied().max().unwrap_or(0);
        Workspace { acts, deltas, active: Vec::with_capacity(widest) }
    }

    /// Output distribution of the most recent forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty")
    }
}

/// Max-subtracted softmax.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    let inv = 1.0 / sum;
    z.iter_mut().for_each(|v| *v *= inv);
}

/// `-ln(max(p[target], 1e-12))`.
pub fn cross_entropy(dist: &[f64], target: usize) -> f64 {
    -libm::log(dist[target].max(PROB_FLOOR))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Network {
    /// Biases zero, weights uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn init(topology: NetworkTopology, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = topology
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in layer.weights.iter_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
                layer
            })
            .collect();
        Network { topology, layers }
    }

    /// Every weight and bias zero.
    pub fn zeros(topology: NetworkTopology) -> Self {
        let layers = topology.layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Network { topology, layers }
    }

    /// Rebuilds a network from layers, checking they chain into a valid topology.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NetError> {
        let mut sizes = Vec::with_capacity(layers.len() + 1);
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(NetError::Topology(format!("layer {i} has inconsistent parameter shapes")));
            }
            match sizes.last() {
                None => sizes.push(l.inputs),
                Some(&prev) if prev != l.inputs => {
                    return Err(NetError::Topology(format!("layer {i} expects {} inputs, previous has {prev}", l.inputs)))
                }
                _ => {}
            }
            sizes.push(l.outputs);
        }
        Ok(Network { topology: NetworkTopology::new(sizes)?, layers })
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.topology)
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(f64::is_finite)
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NetError> {
        if input.len() != self.topology.inputs() {
            return Err(NetError::Shape { expected: self.topology.inputs(), actual: input.len() });
        }
        Ok(())
    }

    /// Forward pass into `ws`; returns the output distribution.
    pub fn forward_into<'w>(&self, input: &[f64], ws: &'w mut Workspace) -> Result<&'w [f64], NetError> {
        self.check_input(input)?;
        ws.acts[0].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let x = &before[l];
            let z = &mut after[0];
            z.copy_from_slice(&layer.biases);
            // Inputs are sparse (encoded counts, ReLU outputs); skip zeros.
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    axpy(z, xi, &layer.weights[i * layer.outputs..(i + 1) * layer.outputs]);
                }
            }
            if l == last {
                softmax_in_place(z);
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(ws.output())
    }

    /// Allocating convenience wrapper around [`Network::forward_into`].
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        let mut ws = self.workspace();
        self.forward_into(input, &mut ws).map(<[f64]>::to_vec)
    }

    /// Adds the loss gradient for one example into `grads`; returns the loss.
    /// The workspace is left holding this example's forward pass.
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        target: usize,
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> Result<f64, NetError> {
        let outputs = self.topology.outputs();
        if target >= outputs {
            return Err(NetError::Shape { expected: outputs, actual: target + 1 });
        }
        self.forward_into(input, ws)?;
        let n_layers = self.layers.len();
        let loss = cross_entropy(&ws.acts[n_layers], target);

        // Softmax + cross-entropy: dL/dz = p - onehot(target).
        {
            let delta = &mut ws.deltas[n_layers];
            delta.copy_from_slice(&ws.acts[n_layers]);
            delta[target] -= 1.0;
        }
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let (lower, upper) = ws.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let x = &ws.acts[l];
            axpy(&mut g.biases, 1.0, delta);
            ws.active.clear();
            ws.active.extend(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i));
            for &i in &ws.active {
                axpy(&mut g.weights[i * layer.outputs..(i + 1) * layer.outputs], x[i], delta);
            }
            if l > 0 {
                // x = relu(z) so relu'(z) is 1 exactly where x > 0.
                let dx = &mut lower[l];
                dx.iter_mut().for_each(|d| *d = 0.0);
                for &i in &ws.active {
                    dx[i] = dot(&layer.weights[i * layer.outputs..(i + 1) * layer.outputs], delta);
                }
            }
        }
        Ok(loss)
    }

    /// Gradient and loss of a single example.
    pub fn backward(&self, input: &[f64], target: usize) -> Result<(Gradients, f64), NetError> {
        let mut ws = self.workspace();
        let mut grads = Gradients::zeros_like(self);
        let loss = self.accumulate_gradient(input, target, &mut ws, &mut grads)?;
        Ok((grads, loss))
    }

    /// Mean loss gradient over a batch, accumulated in batch order.
    pub fn batch_gradient(&self, batch: &[(&[f64], usize)]) -> Result<(Gradients, f64), NetError> {
        let mut ws = self.workspace();
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (x, t) in batch {
            loss += self.accumulate_gradient(x, *t, &mut ws, &mut grads)?;
        }
        let n = batch.len().max(1) as f64;
        grads.scale(1.0 / n);
        Ok((grads, loss / n))
    }

    pub fn loss(&self, input: &[f64], target: usize) -> Result<f64, NetError> {
        let dist = self.forward(input)?;
        Ok(cross_entropy(&dist, target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkTopology {
        NetworkTopology::new(vec![7, 5, 4]).unwrap()
    }

    #[test]
    fn topology_validation() {
        assert!(NetworkTopology::new(vec![3, 2]).is_err());
        assert!(NetworkTopology::new(vec![3, 0, 2]).is_err());
        assert_eq!(NetworkTopology::default().layer_sizes(), &[210, 128, 128, 128, 128, 58]);
    }

    #[test]
    fn zero_network_outputs_uniform() {
        let net = Network::zeros(NetworkTopology::default());
        let out = net.forward(&[0.3; 210]).unwrap();
        for p in &out {
            assert!((p - 1.0 / 58.0).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_loss_is_ln_classes() {
        let net = Network::zeros(NetworkTopology::default());
        let loss = net.loss(&[0.0; 210], 11).unwrap();
        assert!((loss - libm::log(58.0)).abs() < 1e-12);
        assert!((loss - 4.0604).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_reference_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], 0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((cross_entropy(&[1.0, 0.0], 1) - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn zero_network_output_delta() {
        let net = Network::zeros(NetworkTopology::default());
        let (g, _) = net.backward(&[0.0; 210], 5).unwrap();
        // with all-zero hidden activations only the output biases see a gradient
        let out = g.layers.last().unwrap();
        for (k, b) in out.biases.iter().enumerate() {
            let expected = 1.0 / 58.0 - if k == 5 { 1.0 } else { 0.0 };
            assert!((b - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let net = Network::init(small(), 1);
        assert_eq!(net.forward(&[0.0; 6]), Err(NetError::Shape { expected: 7, actual: 6 }));
        assert!(net.backward(&[0.0; 7], 4).is_err());
    }

    #[test]
    fn init_is_seeded_and_bias_free() {
        let a = Network::init(NetworkTopology::default(), 9);
        assert_eq!(a, Network::init(NetworkTopology::default(), 9));
        assert_ne!(a, Network::init(NetworkTopology::default(), 10));
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn from_layers_checks_chaining() {
        let net = Network::init(small(), 3);
        assert_eq!(Network::from_layers(net.layers.clone()).unwrap(), net);
        let mut broken = net.layers.clone();
        broken[1] = Layer::zeros(6, 4);
        assert!(Network::from_layers(broken).is_err());
    }

    #[test]
    fn batch_gradient_is_mean_of_examples() {
        let net = Network::init(small(), 4);
        let x1 = [0.1, 0.0, 0.5, 0.9, 0.2, 0.0, 0.3];
        let x2 = [0.7, 0.2, 0.0, 0.1, 0.0, 0.6, 0.4];
        let (g1, _) = net.backward(&x1, 0).unwrap();
        let (g2, _) = net.backward(&x2, 3).unwrap();
        let (gb, _) = net.batch_gradient(&[(&x1, 0), (&x2, 3)]).unwrap();
        for ((a, b), m) in g1.values().zip(g2.values()).zip(gb.values()) {
            assert!(((a + b) / 2.0 - m).abs() < 1e-15);
        }
    }
}
