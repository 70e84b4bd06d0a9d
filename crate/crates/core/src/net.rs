//! Scalar-output feed-forward score network with reverse-mode gradients.
//!
//! The network g_θ: ℝ^d → ℝ approximates the reduced Hamiltonian on phase
//! space. Layers are dense with a C² activation on hidden layers and a linear
//! output. Reverse-mode differentiation is implemented by hand for both the
//! input gradient ∇_x g (which drives the dynamics operator) and parameter
//! gradients of the smooth-L1 training loss.
//!
//! Weights are stored row-major per layer (`weights[l][o * in_w + i]`), so the
//! forward pass walks memory contiguously.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has length {got}, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("invalid layer widths: {0}")]
    BadWidths(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("gradient shapes do not match network parameters")]
    ShapeMismatch,
    #[error("{what} must be positive, got {value}")]
    BadHyperparameter { what: &'static str, value: f64 },
    #[error("non-finite parameter encountered in layer {layer}")]
    NonFiniteParameter { layer: usize },
}

/// Twice continuously differentiable activations for hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            // ln(1 + e^z), computed stably for large |z|.
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else if z < -30.0 {
                    z.exp()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            // Logistic sigmoid, the derivative of softplus.
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "softplus" => Some(Activation::Softplus),
            _ => None,
        }
    }
}

/// Where a replay-memory label came from: the environment's true score at the
/// trajectory's deepest trusted position, or the previous network's own
/// prediction at an earlier position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    TrueScore,
    Bootstrapped,
}

/// A labeled phase point (x, y) with bookkeeping for audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: f64,
    pub stage: usize,
    pub provenance: Provenance,
}

/// Parameter-shaped gradient buffers (same layout as `ScoreNet` weights/biases).
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &ScoreNet) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.iter_mut().for_each(|v| *v *= factor);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn shape_matches(&self, net: &ScoreNet) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.len() == b.len())
    }
}

/// Reusable forward/backward scratch space so the training loop allocates
/// nothing per sample.
#[derive(Debug, Clone)]
pub struct Scratch {
    /// acts[l]: activations entering layer l (acts[0] = input copy).
    acts: Vec<Vec<f64>>,
    /// pres[l]: pre-activations produced by layer l (before the nonlinearity).
    pres: Vec<Vec<f64>>,
    /// delta[l]: dL/d(pre-activation of layer l).
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    pub fn for_net(net: &ScoreNet) -> Self {
        let widths = &net.widths;
        Self {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            pres: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            deltas: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

/// The scalar score network g_θ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreNet {
    widths: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

impl ScoreNet {
    /// Zero-initialized network. `widths` runs input → hidden… → output and
    /// must end in exactly 1.
    pub fn zeros(widths: Vec<usize>, activation: Activation) -> Result<Self, NetError> {
        if widths.len() < 2 {
            return Err(NetError::BadWidths(format!("need at least input and output layers, got {widths:?}")));
        }
        if widths.contains(&0) {
            return Err(NetError::BadWidths(format!("zero-width layer in {widths:?}")));
        }
        if *widths.last().expect("nonempty") != 1 {
            return Err(NetError::BadWidths(format!("output width must be 1, got {widths:?}")));
        }
        let weights = widths.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = widths[1..].iter().map(|&w| vec![0.0; w]).collect();
        Ok(Self { widths, weights, biases, activation })
    }

    /// Random initialization: per layer, uniform in ±1/√fan_in for both
    /// weights and biases, with the output layer additionally multiplied by
    /// `scale`. A small `scale` (the trainer uses 1e-2) keeps the output —
    /// and therefore the induced policy displacement Δt·S∇g — small, so the
    /// policy starts near the identity map while the hidden layers still
    /// provide well-conditioned features for the optimizer to work with.
    pub fn init_random<R: Rng>(
        widths: Vec<usize>,
        activation: Activation,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        if !(scale > 0.0) {
            return Err(NetError::BadHyperparameter { what: "init scale", value: scale });
        }
        let mut net = Self::zeros(widths, activation)?;
        let last = net.weights.len() - 1;
        for l in 0..net.weights.len() {
            let head = if l == last { scale } else { 1.0 };
            let bound = head / (net.widths[l] as f64).sqrt();
            for w in &mut net.weights[l] {
                *w = rng.gen_range(-bound..bound);
            }
            for b in &mut net.biases[l] {
                *b = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Build from explicit parts (used by tests and checkpoint loading).
    pub fn from_parts(
        widths: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self, NetError> {
        let template = Self::zeros(widths, activation)?;
        if weights.len() != template.weights.len()
            || biases.len() != template.biases.len()
            || weights.iter().zip(&template.weights).any(|(a, b)| a.len() != b.len())
            || biases.iter().zip(&template.biases).any(|(a, b)| a.len() != b.len())
        {
            return Err(NetError::ShapeMismatch);
        }
        for (layer, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(NetError::NonFiniteParameter { layer });
            }
        }
        Ok(Self { widths: template.widths, weights, biases, activation })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flatten parameters in declared order: layer 0 weights, layer 0 biases,
    /// layer 1 weights, … Used by checkpoints.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`flat_params`]: rebuild parameters from the flat layout.
    pub fn from_flat_params(
        widths: Vec<usize>,
        activation: Activation,
        flat: &[f64],
    ) -> Result<Self, NetError> {
        let mut net = Self::zeros(widths, activation)?;
        if flat.len() != net.param_count() {
            return Err(NetError::ShapeMismatch);
        }
        let mut cursor = 0;
        for l in 0..net.weights.len() {
            let wl = net.weights[l].len();
            net.weights[l].copy_from_slice(&flat[cursor..cursor + wl]);
            cursor += wl;
            let bl = net.biases[l].len();
            net.biases[l].copy_from_slice(&flat[cursor..cursor + bl]);
            cursor += bl;
        }
        for (layer, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(NetError::NonFiniteParameter { layer });
            }
        }
        Ok(net)
    }

    pub(crate) fn weights_mut(&mut self) -> (&mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>) {
        (&mut self.weights, &mut self.biases)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.widths[0] {
            return Err(NetError::InputDim { expected: self.widths[0], got: x.len() });
        }
        Ok(())
    }

    /// Forward pass, filling the scratch trace; returns the scalar output.
    fn forward_trace(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        scratch.acts[0].copy_from_slice(x);
        let layers = self.weights.len();
        for l in 0..layers {
            let in_w = self.widths[l];
            let (head, tail) = scratch.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let pre = &mut scratch.pres[l];
            let weights = &self.weights[l];
            for (o, (pre_o, bias)) in pre.iter_mut().zip(&self.biases[l]).enumerate() {
                let row = &weights[o * in_w..(o + 1) * in_w];
                let mut acc = *bias;
                for (w, a) in row.iter().zip(input.iter()) {
                    acc += w * a;
                }
                *pre_o = acc;
            }
            let last = l + 1 == layers;
            for (out_o, &pre_o) in out.iter_mut().zip(pre.iter()) {
                *out_o = if last { pre_o } else { self.activation.apply(pre_o) };
            }
        }
        scratch.acts[layers][0]
    }

    /// g_θ(x).
    pub fn forward(&self, x: &[f64]) -> Result<f64, NetError> {
        self.check_input(x)?;
        let mut scratch = Scratch::for_net(self);
        Ok(self.forward_trace(x, &mut scratch))
    }

    /// Backward pass through pre-activation deltas. `upstream` is dL/d(output).
    /// Must be called right after `forward_trace` on the same scratch.
    fn backward_deltas(&self, scratch: &mut Scratch, upstream: f64) {
        let layers = self.weights.len();
        scratch.deltas[layers - 1][0] = upstream;
        for l in (0..layers - 1).rev() {
            let in_w = self.widths[l + 1];
            let (lower, upper) = scratch.deltas.split_at_mut(l + 1);
            let delta_next = &upper[0];
            let delta = &mut lower[l];
            let weights_next = &self.weights[l + 1];
            delta.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in delta_next.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &weights_next[o * in_w..(o + 1) * in_w];
                for (dv, w) in delta.iter_mut().zip(row) {
                    *dv += d * w;
                }
            }
            for (dv, &pre) in delta.iter_mut().zip(scratch.pres[l].iter()) {
                *dv *= self.activation.derivative(pre);
            }
        }
    }

    /// Accumulate parameter gradients for one sample into `grads` (+=),
    /// given deltas already computed in the scratch.
    fn accumulate_param_grads(&self, scratch: &Scratch, grads: &mut Grads) {
        for l in 0..self.weights.len() {
            let in_w = self.widths[l];
            let input = &scratch.acts[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in scratch.deltas[l].iter().enumerate() {
                grads.biases[l][o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * in_w..(o + 1) * in_w];
                for (g, a) in row.iter_mut().zip(input.iter()) {
                    *g += d * a;
                }
            }
        }
    }

    /// Input gradient, given deltas already computed in the scratch.
    fn input_grad_from_deltas(&self, scratch: &Scratch, out: &mut [f64]) {
        let in_w = self.widths[0];
        out.iter_mut().for_each(|v| *v = 0.0);
        for (o, &d) in scratch.deltas[0].iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &self.weights[0][o * in_w..(o + 1) * in_w];
            for (g, w) in out.iter_mut().zip(row) {
                *g += d * w;
            }
        }
    }

    /// ∇_x g_θ(x) by reverse-mode differentiation.
    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check_input(x)?;
        let mut scratch = Scratch::for_net(self);
        let mut out = vec![0.0; x.len()];
        self.grad_input_with(x, &mut scratch, &mut out);
        Ok(out)
    }

    /// Allocation-free variant of [`grad_input`] for hot loops. Panics on
    /// dimension mismatch (callers own the shapes).
    pub fn grad_input_with(&self, x: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        assert_eq!(x.len(), self.widths[0], "input length must match network input width");
        self.forward_trace(x, scratch);
        self.backward_deltas(scratch, 1.0);
        self.input_grad_from_deltas(scratch, out);
    }

    /// One sample's smooth-L1 loss contribution, accumulating its parameter
    /// gradient (un-normalized) into `grads`. Returns the sample loss.
    pub fn accumulate_sample(
        &self,
        x: &[f64],
        y: f64,
        beta: f64,
        scratch: &mut Scratch,
        grads: &mut Grads,
    ) -> f64 {
        let out = self.forward_trace(x, scratch);
        let residual = out - y;
        self.backward_deltas(scratch, smooth_l1_grad(residual, beta));
        self.accumulate_param_grads(scratch, grads);
        smooth_l1(residual, beta)
    }

    /// Mean smooth-L1 loss and its parameter gradient over a batch.
    pub fn loss_and_grads(&self, batch: &[LabeledSample], beta: f64) -> Result<(f64, Grads), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let mut scratch = Scratch::for_net(self);
        let mut grads = Grads::zeros_like(self);
        let mut loss = 0.0;
        for sample in batch {
            self.check_input(&sample.x)?;
            loss += self.accumulate_sample(&sample.x, sample.y, beta, &mut scratch, &mut grads);
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        Ok((loss * inv, grads))
    }

    /// Gradient of the mean smooth-L1 loss over a batch with respect to all
    /// parameters.
    pub fn grad_params(&self, batch: &[LabeledSample], beta: f64) -> Result<Grads, NetError> {
        Ok(self.loss_and_grads(batch, beta)?.1)
    }

    /// Mean smooth-L1 loss over samples (no gradients).
    pub fn mean_loss<'a, I>(&self, samples: I, beta: f64) -> Result<f64, NetError>
    where
        I: IntoIterator<Item = &'a LabeledSample>,
    {
        let mut scratch = Scratch::for_net(self);
        let mut loss = 0.0;
        let mut n = 0usize;
        for sample in samples {
            self.check_input(&sample.x)?;
            let out = self.forward_trace(&sample.x, &mut scratch);
            loss += smooth_l1(out - sample.y, beta);
            n += 1;
        }
        if n == 0 {
            return Err(NetError::EmptyBatch);
        }
        Ok(loss / n as f64)
    }

    /// Compare `grad_input` against central finite differences with step `h`.
    ///
    /// Returns the max over coordinates of |g_i − fd_i| relative to the
    /// gradient's overall scale (max of the two ∞-norms). A coordinate where
    /// both sides are below the absolute floor 1e-12 contributes 0; relating
    /// each coordinate to the gradient's scale rather than its own magnitude
    /// keeps the check meaningful on coordinates whose true derivative is
    /// incidentally tiny, where finite differences carry only absolute
    /// (roundoff-level) accuracy.
    pub fn finite_diff_check(&self, x: &[f64], h: f64) -> Result<f64, NetError> {
        self.check_input(x)?;
        const FLOOR: f64 = 1e-12;
        let grad = self.grad_input(x)?;
        let mut probe = x.to_vec();
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = self.forward(&probe)?;
            probe[i] = orig - h;
            let minus = self.forward(&probe)?;
            probe[i] = orig;
            fd[i] = (plus - minus) / (2.0 * h);
        }
        let scale = grad
            .iter()
            .chain(fd.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(FLOOR);
        let mut worst = 0.0f64;
        for (g, f) in grad.iter().zip(&fd) {
            if g.abs() < FLOOR && f.abs() < FLOOR {
                continue;
            }
            worst = worst.max((g - f).abs() / scale);
        }
        Ok(worst)
    }
}

/// Smooth-L1 loss: quadratic within β of zero, linear outside.
pub fn smooth_l1(residual: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0, "beta must be positive");
    let a = residual.abs();
    if a < beta {
        0.5 * residual * residual / beta
    } else {
        a - 0.5 * beta
    }
}

/// Derivative of [`smooth_l1`] with respect to the residual.
pub fn smooth_l1_grad(residual: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0, "beta must be positive");
    if residual.abs() < beta {
        residual / beta
    } else {
        residual.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn single_layer(w: Vec<f64>, b: f64, in_w: usize) -> ScoreNet {
        ScoreNet::from_parts(vec![in_w, 1], vec![w], vec![vec![b]], Activation::Tanh).unwrap()
    }

    #[test]
    fn forward_zero_net_is_zero() {
        let net = ScoreNet::zeros(vec![3, 4, 1], Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn forward_affine_layer() {
        let net = single_layer(vec![2.0, -1.0], 0.5, 2);
        assert!((net.forward(&[1.0, 1.0]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn forward_one_hidden_tanh_unit() {
        // w1 = (1, 0), b1 = 0, w2 = 1, b2 = 0: g(x) = tanh(x_0).
        let net = ScoreNet::from_parts(
            vec![2, 1, 1],
            vec![vec![1.0, 0.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
            Activation::Tanh,
        )
        .unwrap();
        let got = net.forward(&[0.5, 7.0]).unwrap();
        assert!((got - 0.5f64.tanh()).abs() < 1e-15);
        assert!((got - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = ScoreNet::zeros(vec![3, 1], Activation::Tanh).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(NetError::InputDim { expected: 3, got: 2 })));
        assert!(matches!(net.grad_input(&[1.0, 2.0]), Err(NetError::InputDim { .. })));
    }

    #[test]
    fn grad_input_zero_net() {
        let net = ScoreNet::zeros(vec![4, 8, 1], Activation::Tanh).unwrap();
        assert_eq!(net.grad_input(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn grad_input_affine_layer_is_weights() {
        let net = single_layer(vec![2.0, -1.0], 0.5, 2);
        let g = net.grad_input(&[13.0, -4.2]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15);
        assert!((g[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn grad_input_one_hidden_tanh_unit() {
        let net = ScoreNet::from_parts(
            vec![2, 1, 1],
            vec![vec![1.0, 0.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
            Activation::Tanh,
        )
        .unwrap();
        let g = net.grad_input(&[0.5, 7.0]).unwrap();
        let t = 0.5f64.tanh();
        assert!((g[0] - (1.0 - t * t)).abs() < 1e-15);
        assert!((g[0] - 0.78644).abs() < 1e-5);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn smooth_l1_reference_values() {
        assert_eq!(smooth_l1(0.0, 1.0), 0.0);
        assert!((smooth_l1(0.5, 1.0) - 0.125).abs() < 1e-15);
        assert!((smooth_l1(2.0, 1.0) - 1.5).abs() < 1e-15);
        assert!((smooth_l1(-2.0, 1.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_joint_is_c1() {
        // Value and slope agree across branches at |r| = β, for several β.
        for &beta in &[0.25, 1.0, 3.0] {
            let eps = 1e-9;
            let below = smooth_l1(beta - eps, beta);
            let above = smooth_l1(beta + eps, beta);
            assert!((below - above).abs() < 1e-8, "value continuity at beta={beta}");
            let g_below = smooth_l1_grad(beta - eps, beta);
            let g_above = smooth_l1_grad(beta + eps, beta);
            assert!((g_below - g_above).abs() < 1e-8, "slope continuity at beta={beta}");
            // Exactly at the joint both expressions give the same numbers.
            assert_eq!(0.5 * beta * beta / beta, beta - 0.5 * beta);
        }
    }

    #[test]
    fn grad_params_at_loss_minimum_is_zero() {
        let net = single_layer(vec![1.0, 2.0], 0.25, 2);
        let batch: Vec<LabeledSample> = (0..5)
            .map(|i| {
                let x = vec![i as f64, -0.5 * i as f64];
                let y = net.forward(&x).unwrap();
                LabeledSample { x, y, stage: 1, provenance: Provenance::TrueScore }
            })
            .collect();
        let grads = net.grad_params(&batch, 1.0).unwrap();
        for g in grads.weights.iter().flatten().chain(grads.biases.iter().flatten()) {
            assert_eq!(*g, 0.0);
        }
    }

    #[test]
    fn grad_params_linear_branch_sign() {
        // Linear net w=(1,0), b=0, x=(0,0), y=2: residual −2 lies in the
        // linear regime of smooth-L1, so the bias gradient is sign(r) = −1.
        let net = single_layer(vec![1.0, 0.0], 0.0, 2);
        let batch = [LabeledSample { x: vec![0.0, 0.0], y: 2.0, stage: 1, provenance: Provenance::TrueScore }];
        let grads = net.grad_params(&batch, 1.0).unwrap();
        assert_eq!(grads.biases[0][0], -1.0);
        // Input is zero, so weight gradients vanish.
        assert_eq!(grads.weights[0], vec![0.0, 0.0]);
    }

    #[test]
    fn grad_params_rejects_empty_batch() {
        let net = single_layer(vec![1.0], 0.0, 1);
        assert!(matches!(net.grad_params(&[], 1.0), Err(NetError::EmptyBatch)));
    }

    #[test]
    fn grad_params_matches_finite_differences() {
        let mut rng = stream(21, "net-test", 0);
        let mut net = ScoreNet::init_random(vec![3, 5, 1], Activation::Tanh, 1.0, &mut rng).unwrap();
        let batch: Vec<LabeledSample> = (0..3)
            .map(|_| LabeledSample {
                x: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                y: rng.gen_range(-1.0..1.0),
                stage: 1,
                provenance: Provenance::TrueScore,
            })
            .collect();
        let beta = 1.0;
        let grads = net.grad_params(&batch, beta).unwrap();
        let h = 1e-6;
        let mut check = |get: &dyn Fn(&ScoreNet) -> f64, set: &mut dyn FnMut(&mut ScoreNet, f64), analytic: f64| {
            let orig = get(&net);
            set(&mut net, orig + h);
            let plus = net.mean_loss(batch.iter(), beta).unwrap();
            set(&mut net, orig - h);
            let minus = net.mean_loss(batch.iter(), beta).unwrap();
            set(&mut net, orig);
            let fd = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic - fd).abs() / denom < 1e-6,
                "param gradient mismatch: analytic {analytic}, fd {fd}"
            );
        };
        for l in 0..2 {
            for idx in 0..grads.weights[l].len() {
                let analytic = grads.weights[l][idx];
                check(
                    &|n: &ScoreNet| n.weights[l][idx],
                    &mut |n: &mut ScoreNet, v| n.weights[l][idx] = v,
                    analytic,
                );
            }
            for idx in 0..grads.biases[l].len() {
                let analytic = grads.biases[l][idx];
                check(
                    &|n: &ScoreNet| n.biases[l][idx],
                    &mut |n: &mut ScoreNet, v| n.biases[l][idx] = v,
                    analytic,
                );
            }
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_per_sample_gradients() {
        let mut rng = stream(22, "net-test", 1);
        let net = ScoreNet::init_random(vec![4, 6, 1], Activation::Tanh, 1.0, &mut rng).unwrap();
        let batch: Vec<LabeledSample> = (0..7)
            .map(|_| LabeledSample {
                x: (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                y: rng.gen_range(-2.0..2.0),
                stage: 1,
                provenance: Provenance::TrueScore,
            })
            .collect();
        let full = net.grad_params(&batch, 1.0).unwrap();
        let mut mean = Grads::zeros_like(&net);
        for sample in &batch {
            let single = net.grad_params(std::slice::from_ref(sample), 1.0).unwrap();
            for (m, s) in mean.weights.iter_mut().zip(&single.weights) {
                for (a, b) in m.iter_mut().zip(s) {
                    *a += b / batch.len() as f64;
                }
            }
            for (m, s) in mean.biases.iter_mut().zip(&single.biases) {
                for (a, b) in m.iter_mut().zip(s) {
                    *a += b / batch.len() as f64;
                }
            }
        }
        for (a, b) in full.weights.iter().flatten().zip(mean.weights.iter().flatten()) {
            let denom = a.abs().max(b.abs()).max(1e-12);
            assert!((a - b).abs() / denom < 1e-10);
        }
        for (a, b) in full.biases.iter().flatten().zip(mean.biases.iter().flatten()) {
            let denom = a.abs().max(b.abs()).max(1e-12);
            assert!((a - b).abs() / denom < 1e-10);
        }
    }

    #[test]
    fn finite_diff_check_zero_net_is_zero() {
        let net = ScoreNet::zeros(vec![3, 4, 1], Activation::Tanh).unwrap();
        assert_eq!(net.finite_diff_check(&[0.1, 0.2, 0.3], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn finite_diff_check_linear_net_rounding_scale() {
        let net = single_layer(vec![2.0, -1.0, 0.5], 0.1, 3);
        let err = net.finite_diff_check(&[0.4, -0.7, 1.1], 1e-5).unwrap();
        assert!(err < 1e-9, "affine map finite differences should be exact to rounding, got {err}");
    }

    #[test]
    fn finite_diff_check_random_tanh_nets() {
        let mut rng = stream(23, "net-test", 2);
        for trial in 0..20 {
            let d = rng.gen_range(1..6);
            let net = ScoreNet::init_random(vec![d, 8, 8, 1], Activation::Tanh, 1.0, &mut rng).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let err = net.finite_diff_check(&x, 1e-5).unwrap();
                assert!(err < 1e-5, "trial {trial}: finite-diff error {err}");
            }
        }
    }

    #[test]
    fn finite_diff_check_softplus_nets() {
        let mut rng = stream(24, "net-test", 3);
        for _ in 0..5 {
            let net = ScoreNet::init_random(vec![3, 8, 1], Activation::Softplus, 1.0, &mut rng).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let err = net.finite_diff_check(&x, 1e-5).unwrap();
            assert!(err < 1e-5, "softplus finite-diff error {err}");
        }
    }

    #[test]
    fn forward_is_deterministic_bitwise() {
        let mut rng = stream(25, "net-test", 4);
        let net = ScoreNet::init_random(vec![5, 16, 16, 1], Activation::Tanh, 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let ga = net.grad_input(&x).unwrap();
        let gb = net.grad_input(&x).unwrap();
        assert!(ga.iter().zip(&gb).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = stream(26, "net-test", 5);
        let net = ScoreNet::init_random(vec![4, 7, 1], Activation::Softplus, 0.5, &mut rng).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.param_count());
        let back = ScoreNet::from_flat_params(vec![4, 7, 1], Activation::Softplus, &flat).unwrap();
        assert_eq!(net.flat_params(), back.flat_params());
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap().to_bits(), back.forward(&x).unwrap().to_bits());
    }

    #[test]
    fn constructors_reject_bad_widths() {
        assert!(matches!(ScoreNet::zeros(vec![3], Activation::Tanh), Err(NetError::BadWidths(_))));
        assert!(matches!(ScoreNet::zeros(vec![3, 2], Activation::Tanh), Err(NetError::BadWidths(_))));
        assert!(matches!(ScoreNet::zeros(vec![3, 0, 1], Activation::Tanh), Err(NetError::BadWidths(_))));
        assert!(matches!(
            ScoreNet::from_flat_params(vec![2, 1], Activation::Tanh, &[1.0]),
            Err(NetError::ShapeMismatch)
        ));
    }
}
