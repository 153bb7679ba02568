//! Fully-connected feedforward networks with exact reverse-mode gradients.
//!
//! Weights are stored row-major per layer (`outputs × inputs`). Everything is
//! `f64` and deterministic; a network is a plain value that can be cloned,
//! serialized, and shared read-only between threads.

use rand::Rng;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"BDNN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("network stream truncated at byte {0}")]
    Truncated(usize),
    #[error("bad magic tag; not a network stream")]
    BadMagic,
    #[error("unsupported network format version: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt network stream: {0}")]
    Corrupt(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => logistic(z),
        }
    }

    /// Derivative expressed through the activation value `a = f(z)`.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.biases[o];
            out.push(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Activations recorded by a forward pass; reused by backward passes.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `activations[0]` is the input, the last entry is the network output.
    activations: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("forward pass always has an input layer")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

/// Parameter-shaped buffer: one (weights, biases) pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self { layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        self.values_mut().for_each(|v| *v *= k);
    }

    /// `self += k · other`
    pub fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += k * b;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    fn shape_matches(&self, net: &Network) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len())
    }
}

impl Network {
    /// Network with every parameter zero.
    pub fn zeros(layer_sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(layer_sizes.len() >= 2, "a network needs at least an input and an output layer");
        assert!(layer_sizes.iter().all(|&n| n > 0), "layer sizes must be positive");
        let layers = layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self { layer_sizes: layer_sizes.to_vec(), layers, hidden_activation: hidden, output_activation: output }
    }

    /// Uniform ±√(6/(fan_in+fan_out)) weights, zero biases.
    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(layer_sizes, hidden, output);
        for layer in &mut net.layers {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_layers(layers: Vec<Layer>, hidden: Activation, output: Activation) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Corrupt("no layers".into()));
        }
        let mut sizes = vec![layers[0].inputs];
        for (k, l) in layers.iter().enumerate() {
            if l.inputs != *sizes.last().unwrap() {
                return Err(NetError::DimensionMismatch { what: "layer inputs", expected: sizes[k], found: l.inputs });
            }
            if l.weights.len() != l.inputs * l.outputs {
                return Err(NetError::DimensionMismatch {
                    what: "weight matrix",
                    expected: l.inputs * l.outputs,
                    found: l.weights.len(),
                });
            }
            if l.biases.len() != l.outputs {
                return Err(NetError::DimensionMismatch { what: "bias vector", expected: l.outputs, found: l.biases.len() });
            }
            sizes.push(l.outputs);
        }
        let net = Self { layer_sizes: sizes, layers, hidden_activation: hidden, output_activation: output };
        if !net.is_finite() {
            return Err(NetError::NonFinite("network parameters"));
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NetError> {
        if params.len() != self.param_count() {
            return Err(NetError::DimensionMismatch { what: "parameter vector", expected: self.param_count(), found: params.len() });
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = *it.next().unwrap();
            }
        }
        Ok(())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NetError> {
        if input.len() != self.input_dim() {
            return Err(NetError::DimensionMismatch { what: "network input", expected: self.input_dim(), found: input.len() });
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(NetError::NonFinite("network input"));
        }
        Ok(())
    }

    pub fn forward_pass(&self, input: &[f64]) -> Result<ForwardPass, NetError> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let act = self.activation_for(k);
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(activations.last().unwrap(), &mut z);
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            activations.push(z);
        }
        Ok(ForwardPass { activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        self.forward_pass(input).map(|p| p.activations.into_iter().last().unwrap())
    }

    /// Reverse pass for the scalar `output · cotangent`.
    ///
    /// Returns the parameter gradient and the gradient with respect to the input.
    pub fn backward(&self, pass: &ForwardPass, cotangent: &[f64]) -> Result<(Gradients, Vec<f64>), NetError> {
        if cotangent.len() != self.output_dim() {
            return Err(NetError::DimensionMismatch { what: "output cotangent", expected: self.output_dim(), found: cotangent.len() });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta: Vec<f64> = cotangent.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let act = self.activation_for(k);
            let out = &pass.activations[k + 1];
            let inp = &pass.activations[k];
            for (d, a) in delta.iter_mut().zip(out) {
                *d *= act.slope(*a);
            }
            let g = &mut grads.layers[k];
            for o in 0..layer.outputs {
                g.biases[o] = delta[o];
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, x) in row.iter_mut().zip(inp) {
                    *w = delta[o] * x;
                }
            }
            let mut next = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += w * delta[o];
                }
            }
            delta = next;
        }
        Ok((grads, delta))
    }

    /// Exact gradient of `output(input) · cotangent` with respect to every weight and bias.
    pub fn grad_params(&self, input: &[f64], cotangent: &[f64]) -> Result<Gradients, NetError> {
        let pass = self.forward_pass(input)?;
        self.backward(&pass, cotangent).map(|(g, _)| g)
    }

    /// `n_out × n_in` Jacobian of the output with respect to the input.
    pub fn input_jacobian(&self, input: &[f64]) -> Result<Matrix, NetError> {
        let pass = self.forward_pass(input)?;
        Ok(self.jacobian_from_pass(&pass))
    }

    pub fn jacobian_from_pass(&self, pass: &ForwardPass) -> Matrix {
        let mut jac = Matrix::identity(self.input_dim());
        for (k, layer) in self.layers.iter().enumerate() {
            let act = self.activation_for(k);
            let out = &pass.activations[k + 1];
            let mut next = Matrix::zeros(layer.outputs, jac.cols);
            for o in 0..layer.outputs {
                let slope = act.slope(out[o]);
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for c in 0..jac.cols {
                    let s: f64 = row.iter().enumerate().map(|(i, w)| w * jac.get(i, c)).sum();
                    next.set(o, c, slope * s);
                }
            }
            jac = next;
        }
        jac
    }

    /// Versioned little-endian byte stream.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.layer_sizes.len() + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &n in &self.layer_sizes {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        out.push(self.hidden_activation.tag());
        out.push(self.output_activation.tag());
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.biases) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NetError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NetError::VersionMismatch { expected: FORMAT_VERSION, found: version });
        }
        let count = r.u32()? as usize;
        if !(2..=64).contains(&count) {
            return Err(NetError::Corrupt(format!("layer count {count}")));
        }
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            let n = r.u32()? as usize;
            if n == 0 || n > 1 << 16 {
                return Err(NetError::Corrupt(format!("layer size {n}")));
            }
            sizes.push(n);
        }
        let hidden = Activation::from_tag(r.take(1)?[0]).ok_or_else(|| NetError::Corrupt("hidden activation tag".into()))?;
        let output = Activation::from_tag(r.take(1)?[0]).ok_or_else(|| NetError::Corrupt("output activation tag".into()))?;
        let mut net = Network::zeros(&sizes, hidden, output);
        for l in &mut net.layers {
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
            }
        }
        if r.pos != bytes.len() {
            return Err(NetError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if !net.is_finite() {
            return Err(NetError::NonFinite("serialized parameters"));
        }
        Ok(net)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(NetError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    /// Heavy-ball momentum: `v ← μv + g`, `w ← w − η v`.
    #[default]
    Momentum,
    /// Adam with β₁ = `momentum`, β₂ = 0.999.
    Adam,
}

pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Optimizer and schedule settings for one network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_gradient_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { optimizer: Optimizer::Momentum, learning_rate: 1e-2, momentum: 0.9, max_gradient_norm: 1.0, epochs: 100, batch_size: 32, rng_seed: 0 }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        // zero learning rate is allowed: it freezes the network
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidConfig(format!("learning_rate {} must be non-negative", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NetError::InvalidConfig(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.max_gradient_norm > 0.0) {
            return Err(NetError::InvalidConfig(format!("max_gradient_norm {} must be positive", self.max_gradient_norm)));
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer state carried between [`apply_update`] calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    first: Gradients,
    second: Gradients,
    steps: i32,
}

impl Velocity {
    pub fn new(net: &Network) -> Self {
        Velocity { first: Gradients::zeros_like(net), second: Gradients::zeros_like(net), steps: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub gradient_norm: f64,
    pub clipped: bool,
}

/// One descent step after clipping the gradient to `max_gradient_norm`.
///
/// Non-finite gradients leave the network and optimizer state untouched and return an error.
pub fn apply_update(
    net: &mut Network,
    grads: &Gradients,
    config: &TrainingConfig,
    velocity: &mut Velocity,
) -> Result<UpdateOutcome, NetError> {
    if !grads.shape_matches(net) || !velocity.first.shape_matches(net) {
        return Err(NetError::DimensionMismatch { what: "gradient shape", expected: net.param_count(), found: grads.flatten().len() });
    }
    if !grads.is_finite() {
        return Err(NetError::NonFinite("gradients"));
    }
    let norm = grads.norm();
    let clipped = norm > config.max_gradient_norm;
    let k = if clipped { config.max_gradient_norm / norm } else { 1.0 };
    let lr = config.learning_rate;
    match config.optimizer {
        Optimizer::Momentum => {
            velocity.first.scale(config.momentum);
            velocity.first.add_scaled(grads, k);
            for (w, v) in net.params_mut().zip(velocity.first.values()) {
                *w -= lr * v;
            }
        }
        Optimizer::Adam => {
            let b1 = config.momentum;
            velocity.steps = velocity.steps.saturating_add(1);
            for ((m, s), g) in velocity.first.values_mut().zip(velocity.second.values_mut()).zip(grads.values()) {
                let g = k * g;
                *m = b1 * *m + (1.0 - b1) * g;
                *s = ADAM_BETA2 * *s + (1.0 - ADAM_BETA2) * g * g;
            }
            let c1 = 1.0 - b1.powi(velocity.steps);
            let c2 = 1.0 - ADAM_BETA2.powi(velocity.steps);
            for ((w, m), s) in net.params_mut().zip(velocity.first.values()).zip(velocity.second.values()) {
                *w -= lr * (m / c1) / ((s / c2).sqrt() + ADAM_EPSILON);
            }
        }
    }
    Ok(UpdateOutcome { gradient_norm: norm, clipped })
}

/// Backprop against central differences of `cotangent · net(input)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖) over all parameters.
    pub params: f64,
    /// Same, for the input Jacobian entries.
    pub input_jacobian: f64,
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn check_gradients(net: &Network, input: &[f64], cotangent: &[f64], step: f64) -> Result<GradientCheck, NetError> {
    let score = |n: &Network, x: &[f64]| -> Result<f64, NetError> {
        Ok(n.forward(x)?.iter().zip(cotangent).map(|(y, c)| y * c).sum())
    };
    let analytic = net.grad_params(input, cotangent)?.flatten();
    let base = net.params();
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + step;
        probe.set_params(&p)?;
        let up = score(&probe, input)?;
        p[k] = base[k] - step;
        probe.set_params(&p)?;
        let down = score(&probe, input)?;
        numeric.push((up - down) / (2.0 * step));
    }

    let jac = net.input_jacobian(input)?;
    let mut jac_numeric = Vec::with_capacity(jac.data.len());
    for r in 0..jac.rows {
        for c in 0..jac.cols {
            let mut x = input.to_vec();
            x[c] = input[c] + step;
            let up = net.forward(&x)?[r];
            x[c] = input[c] - step;
            let down = net.forward(&x)?[r];
            jac_numeric.push((up - down) / (2.0 * step));
        }
    }
    Ok(GradientCheck { params: relative_gap(&analytic, &numeric), input_jacobian: relative_gap(&jac.data, &jac_numeric) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(weights: Vec<f64>, biases: Vec<f64>, n_in: usize) -> Network {
        let n_out = biases.len();
        Network::from_layers(
            vec![Layer { inputs: n_in, outputs: n_out, weights, biases }],
            Activation::Tanh,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(&[3, 5, 5, 2], Activation::Tanh, Activation::Identity);
        assert_eq!(net.forward(&[0.3, -2.0, 7.0]).unwrap(), vec![0.0, 0.0]);
        let jac = net.input_jacobian(&[0.3, -2.0, 7.0]).unwrap();
        assert!(jac.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_is_identity_map() {
        let net = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2);
        assert_eq!(net.forward(&[0.25, -4.0]).unwrap(), vec![0.25, -4.0]);
    }

    #[test]
    fn hand_evaluated_2_3_1() {
        // Weights fixed by hand; expected value evaluated independently below.
        let l1 = Layer { inputs: 2, outputs: 3, weights: vec![0.2, -0.4, 0.7, 0.1, -0.3, 0.5], biases: vec![0.1, 0.0, -0.2] };
        let l2 = Layer { inputs: 3, outputs: 1, weights: vec![0.6, -0.8, 0.3], biases: vec![0.05] };
        let net = Network::from_layers(vec![l1, l2], Activation::Tanh, Activation::Identity).unwrap();
        let (x0, x1) = (0.5f64, -0.5f64);
        let h0 = (0.2 * x0 - 0.4 * x1 + 0.1).tanh();
        let h1 = (0.7 * x0 + 0.1 * x1).tanh();
        let h2 = (-0.3 * x0 + 0.5 * x1 - 0.2).tanh();
        let y = 0.6 * h0 - 0.8 * h1 + 0.3 * h2 + 0.05;
        let out = net.forward(&[x0, x1]).unwrap();
        assert!((out[0] - y).abs() < 1e-15);
        // tanh(0.4) = 0.379948962255225, tanh(0.3) = 0.291312612451591, tanh(-0.6) = -0.537049566998035
        assert!((out[0] - (-0.116_195_582_707_548)).abs() < 1e-12, "{}", out[0]);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::random(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let g = net.grad_params(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn affine_layer_gradient_closed_form() {
        let net = linear(vec![0.3, -0.2, 0.5, 0.9, 1.1, -0.7], vec![0.1, -0.1], 3);
        let x = [0.4, -1.2, 2.0];
        let c = [0.7, -0.3];
        let g = net.grad_params(&x, &c).unwrap();
        for o in 0..2 {
            assert_eq!(g.layers[0].biases[o], c[o]);
            for i in 0..3 {
                assert!((g.layers[0].weights[o * 3 + i] - c[o] * x[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_net_jacobian_is_weight_product() {
        let l1 = Layer { inputs: 2, outputs: 2, weights: vec![1.0, 2.0, 3.0, 4.0], biases: vec![0.5, 0.5] };
        let l2 = Layer { inputs: 2, outputs: 1, weights: vec![-1.0, 0.5], biases: vec![0.0] };
        let net = Network::from_layers(vec![l1, l2], Activation::Identity, Activation::Identity).unwrap();
        let jac = net.input_jacobian(&[3.0, -7.0]).unwrap();
        // [-1, 0.5] · [[1,2],[3,4]] = [0.5, 0.0]
        assert_eq!(jac.data, vec![0.5, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = Network::zeros(&[3, 2], Activation::Tanh, Activation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(NetError::DimensionMismatch { .. })));
        assert!(matches!(net.grad_params(&[1.0, 2.0, 3.0], &[1.0]), Err(NetError::DimensionMismatch { .. })));
        assert!(matches!(net.input_jacobian(&[1.0, 2.0]), Err(NetError::DimensionMismatch { .. })));
    }

    #[test]
    fn update_arithmetic() {
        let mut net = linear(vec![1.0], vec![0.0], 1);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].weights[0] = 2.0;
        let cfg = TrainingConfig { learning_rate: 0.1, momentum: 0.0, max_gradient_norm: 10.0, ..Default::default() };
        let mut vel = Velocity::new(&net);
        let outcome = apply_update(&mut net, &grads, &cfg, &mut vel).unwrap();
        assert!(!outcome.clipped);
        assert!((net.layers()[0].weights[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn update_clips_to_max_norm() {
        let mut net = linear(vec![0.0, 0.0], vec![0.0], 2);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].weights = vec![6.0, 8.0];
        let cfg = TrainingConfig { learning_rate: 1.0, momentum: 0.0, max_gradient_norm: 1.0, ..Default::default() };
        let mut vel = Velocity::new(&net);
        let outcome = apply_update(&mut net, &grads, &cfg, &mut vel).unwrap();
        assert!(outcome.clipped);
        assert_eq!(outcome.gradient_norm, 10.0);
        assert!((net.layers()[0].weights[0] + 0.6).abs() < 1e-15);
        assert!((net.layers()[0].weights[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_and_zero_rate_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::random(&[2, 3, 1], Activation::Tanh, Activation::Identity, &mut rng);
        let before = net.clone();
        let mut vel = Velocity::new(&net);
        let zero = Gradients::zeros_like(&net);
        apply_update(&mut net, &zero, &TrainingConfig::default(), &mut vel).unwrap();
        assert_eq!(net, before);

        let g = net.grad_params(&[0.3, 0.1], &[1.0]).unwrap();
        let frozen = TrainingConfig { learning_rate: 0.0, ..Default::default() };
        apply_update(&mut net, &g, &frozen, &mut vel).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_change() {
        let mut net = linear(vec![1.0], vec![0.0], 1);
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].biases[0] = f64::NAN;
        let mut vel = Velocity::new(&net);
        let err = apply_update(&mut net, &grads, &TrainingConfig::default(), &mut vel).unwrap_err();
        assert_eq!(err, NetError::NonFinite("gradients"));
        assert_eq!(net, before);
    }

    #[test]
    fn serialization_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::random(&[4, 8, 8, 1], Activation::Tanh, Activation::Identity, &mut rng);
        let bytes = net.to_bytes();
        assert_eq!(Network::from_bytes(&bytes).unwrap(), net);
        assert!(matches!(Network::from_bytes(&bytes[..bytes.len() - 3]), Err(NetError::Truncated(_))));
        let mut bumped = bytes.clone();
        bumped[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert_eq!(Network::from_bytes(&bumped), Err(NetError::VersionMismatch { expected: 1, found: 7 }));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Network::from_bytes(&bad), Err(NetError::BadMagic));
        let mut longer = bytes;
        longer.push(0);
        assert!(matches!(Network::from_bytes(&longer), Err(NetError::Corrupt(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        assert!(TrainingConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { max_gradient_norm: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
    }
}
