use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, dropout_backward, dropout_forward, linear_backward, linear_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, softmax_bce, Tensor,
};
use super::WINDOW;
use crate::error::{Error, Result};

pub const DROPOUT_P: f64 = 0.5;

/// Conv channel plan: input → 16 → 16 → 32 → 64.
pub const CONV_CHANNELS: [(usize, usize); 4] = [(1, 16), (16, 16), (16, 32), (32, 64)];
pub const FC1: (usize, usize) = (64, 8);
pub const FC2: (usize, usize) = (8, 2);
pub const PARAMETER_COUNT: usize = 26_154;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Weights are stored (out, in, 3, 3) for convolutions and (out, in) for
/// dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    pub conv_w: [Vec<f64>; 4],
    pub conv_b: [Vec<f64>; 4],
    pub fc1_w: Vec<f64>,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Vec<f64>,
    pub fc2_b: Vec<f64>,
}

impl CnnParams {
    pub fn zeros() -> Self {
        CnnParams {
            conv_w: CONV_CHANNELS.map(|(i, o)| vec![0.0; o * i * 9]),
            conv_b: CONV_CHANNELS.map(|(_, o)| vec![0.0; o]),
            fc1_w: vec![0.0; FC1.0 * FC1.1],
            fc1_b: vec![0.0; FC1.1],
            fc2_w: vec![0.0; FC2.0 * FC2.1],
            fc2_b: vec![0.0; FC2.1],
        }
    }

    /// Kaiming-uniform on fan-in, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros();
        let mut fill = |w: &mut Vec<f64>, fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        };
        for (w, (i, _)) in p.conv_w.iter_mut().zip(CONV_CHANNELS) {
            fill(w, i * 9);
        }
        fill(&mut p.fc1_w, FC1.0);
        fill(&mut p.fc2_w, FC2.0);
        p
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut v: Vec<&Vec<f64>> = Vec::with_capacity(12);
        for i in 0..4 {
            v.push(&self.conv_w[i]);
            v.push(&self.conv_b[i]);
        }
        v.extend([&self.fc1_w, &self.fc1_b, &self.fc2_w, &self.fc2_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let (cw, cb) = (&mut self.conv_w, &mut self.conv_b);
        let mut v: Vec<&mut Vec<f64>> = Vec::with_capacity(12);
        for (w, b) in cw.iter_mut().zip(cb.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v.extend([&mut self.fc1_w, &mut self.fc1_b, &mut self.fc2_w, &mut self.fc2_b]);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Shapes of each tensor in `tensors()` order.
    pub fn shapes() -> Vec<Vec<usize>> {
        let mut v = Vec::new();
        for (i, o) in CONV_CHANNELS {
            v.push(vec![o, i, 3, 3]);
            v.push(vec![o]);
        }
        v.extend([vec![FC1.1, FC1.0], vec![FC1.1], vec![FC2.1, FC2.0], vec![FC2.1]]);
        v
    }

    pub fn check_shapes(&self) -> Result<()> {
        for (t, s) in self.tensors().iter().zip(Self::shapes()) {
            let expected: usize = s.iter().product();
            if t.len() != expected {
                return Err(Error::DimensionMismatch { expected, got: t.len() });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("CNN parameters contain non-finite values"));
            }
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &CnnParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// Activations kept from the forward pass for backpropagation.
pub struct ForwardCache {
    input: Tensor,
    conv_out: [Tensor; 4],
    pool_in_shapes: [[usize; 4]; 4],
    pool_arg: [Vec<usize>; 4],
    pooled: [Tensor; 4],
    fc1_out: Tensor,
    keep: Vec<bool>,
    dropped: Tensor,
    pub logits: Tensor,
}

impl ForwardCache {
    /// Post-ReLU output of the 8-unit hidden layer.
    pub fn hidden(&self) -> &Tensor {
        &self.fc1_out
    }
}

/// (h, w) after each pooling stage: 40 → 20 → 10 → 5 → 1.
const POOLS: [usize; 4] = [2, 2, 2, 5];

/// Runs the network. `dropout_rng` drives the dropout mask and is required
/// in train mode.
pub fn forward(params: &CnnParams, input: &Tensor, mode: Mode, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<ForwardCache> {
    if input.shape[1..] != [1, WINDOW, WINDOW] {
        return Err(Error::invalid(format!(
            "CNN expects (n, 1, {WINDOW}, {WINDOW}) input, got {:?}",
            input.shape
        )));
    }
    params.check_shapes()?;
    // conv1 → conv2 → pool → conv3 → pool → conv4 → pool → global pool
    let c1 = relu_forward(&conv2d_forward(input, &params.conv_w[0], &params.conv_b[0])?);
    let c2 = relu_forward(&conv2d_forward(&c1, &params.conv_w[1], &params.conv_b[1])?);
    let (p1, a1) = maxpool_forward(&c2, POOLS[0])?;
    let c3 = relu_forward(&conv2d_forward(&p1, &params.conv_w[2], &params.conv_b[2])?);
    let (p2, a2) = maxpool_forward(&c3, POOLS[1])?;
    let c4 = relu_forward(&conv2d_forward(&p2, &params.conv_w[3], &params.conv_b[3])?);
    let (p3, a3) = maxpool_forward(&c4, POOLS[2])?;
    let (p4, a4) = maxpool_forward(&p3, POOLS[3])?;
    let fc1_out = relu_forward(&linear_forward(&p4, &params.fc1_w, &params.fc1_b)?);
    let keep: Vec<bool> = match (mode, dropout_rng) {
        (Mode::Eval, _) => vec![true; fc1_out.data.len()],
        (Mode::Train, Some(rng)) => (0..fc1_out.data.len()).map(|_| rng.random::<f64>() >= DROPOUT_P).collect(),
        (Mode::Train, None) => return Err(Error::invalid("train-mode forward needs a dropout RNG")),
    };
    let dropped = match mode {
        Mode::Eval => fc1_out.clone(),
        Mode::Train => dropout_forward(&fc1_out, &keep, DROPOUT_P),
    };
    let logits = linear_forward(&dropped, &params.fc2_w, &params.fc2_b)?;
    Ok(ForwardCache {
        input: input.clone(),
        pool_in_shapes: [c2.shape, c3.shape, c4.shape, p3.shape],
        conv_out: [c1, c2, c3, c4],
        pool_arg: [a1, a2, a3, a4],
        pooled: [p1, p2, p3, p4],
        fc1_out,
        keep,
        dropped,
        logits,
    })
}

/// Activation shapes (c, h, w) after every stage for one input window.
pub fn shape_trace(params: &CnnParams) -> Result<Vec<[usize; 3]>> {
    let input = Tensor::zeros([1, 1, WINDOW, WINDOW]);
    let c = forward(params, &input, Mode::Eval, None)?;
    let s = |t: &Tensor| [t.shape[1], t.shape[2], t.shape[3]];
    Ok(vec![
        s(&c.input),
        s(&c.conv_out[0]),
        s(&c.conv_out[1]),
        s(&c.pooled[0]),
        s(&c.conv_out[2]),
        s(&c.pooled[1]),
        s(&c.conv_out[3]),
        s(&c.pooled[2]),
        s(&c.pooled[3]),
        [c.pooled[3].item_len(), 1, 1],
        s(&c.fc1_out),
        s(&c.logits),
    ])
}

/// Gradients of all parameters given d(loss)/d(logits).
pub fn backward(params: &CnnParams, cache: &ForwardCache, grad_logits: &Tensor, dropout_active: bool) -> CnnParams {
    let mut g = CnnParams::zeros();
    let l2 = linear_backward(&cache.dropped, &params.fc2_w, grad_logits);
    g.fc2_w = l2.weight;
    g.fc2_b = l2.bias;
    let d_fc1 = if dropout_active { dropout_backward(&l2.input, &cache.keep, DROPOUT_P) } else { l2.input };
    let d_fc1 = relu_backward(&cache.fc1_out, &d_fc1);
    let l1 = linear_backward(&cache.pooled[3], &params.fc1_w, &d_fc1);
    g.fc1_w = l1.weight;
    g.fc1_b = l1.bias;

    let d_p3 = maxpool_backward(cache.pool_in_shapes[3], &cache.pool_arg[3], &l1.input);
    let d_c4 = maxpool_backward(cache.pool_in_shapes[2], &cache.pool_arg[2], &d_p3);
    let d_c4 = relu_backward(&cache.conv_out[3], &d_c4);
    let k4 = conv2d_backward(&cache.pooled[1], &params.conv_w[3], &d_c4, true);
    let d_c3 = maxpool_backward(cache.pool_in_shapes[1], &cache.pool_arg[1], k4.input.as_ref().expect("requested"));
    let d_c3 = relu_backward(&cache.conv_out[2], &d_c3);
    let k3 = conv2d_backward(&cache.pooled[0], &params.conv_w[2], &d_c3, true);
    let d_c2 = maxpool_backward(cache.pool_in_shapes[0], &cache.pool_arg[0], k3.input.as_ref().expect("requested"));
    let d_c2 = relu_backward(&cache.conv_out[1], &d_c2);
    let k2 = conv2d_backward(&cache.conv_out[0], &params.conv_w[1], &d_c2, true);
    let d_c1 = relu_backward(&cache.conv_out[0], k2.input.as_ref().expect("requested"));
    let k1 = conv2d_backward(&cache.input, &params.conv_w[0], &d_c1, false);
    for (i, k) in [k1, k2, k3, k4].into_iter().enumerate() {
        g.conv_w[i] = k.weight;
        g.conv_b[i] = k.bias;
    }
    g
}

/// Mean loss, gradients and PD probabilities for one batch.
pub fn loss_and_grad(
    params: &CnnParams,
    input: &Tensor,
    labels: &[u8],
    mode: Mode,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, CnnParams, Vec<f64>)> {
    let cache = forward(params, input, mode, dropout_rng)?;
    let (loss, grad, probs) = softmax_bce(&cache.logits, labels);
    Ok((loss, backward(params, &cache, &grad, mode == Mode::Train), probs))
}

/// PD probability per input window, eval mode.
pub fn cnn_forward(params: &CnnParams, input: &Tensor) -> Result<Vec<[f64; 2]>> {
    let cache = forward(params, input, Mode::Eval, None)?;
    Ok((0..input.batch())
        .map(|i| {
            let z = cache.logits.item(i);
            let p = super::layers::pd_probability(z[0], z[1]);
            [1.0 - p, p]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(CnnParams::zeros().parameter_count(), PARAMETER_COUNT);
        let per_layer: Vec<usize> = CnnParams::shapes()
            .chunks(2)
            .map(|pair| pair.iter().map(|s| s.iter().product::<usize>()).sum())
            .collect();
        assert_eq!(per_layer, vec![160, 2320, 4640, 18496, 520, 18]);
    }

    #[test]
    fn shapes_follow_the_layer_table() {
        let trace = shape_trace(&CnnParams::init(1)).unwrap();
        assert_eq!(
            trace,
            vec![
                [1, 40, 40],
                [16, 40, 40],
                [16, 40, 40],
                [16, 20, 20],
                [32, 20, 20],
                [32, 10, 10],
                [64, 10, 10],
                [64, 5, 5],
                [64, 1, 1],
                [64, 1, 1],
                [8, 1, 1],
                [2, 1, 1],
            ]
        );
    }

    #[test]
    fn zero_network_outputs_half() {
        let out = cnn_forward(&CnnParams::zeros(), &Tensor::zeros([2, 1, 40, 40])).unwrap();
        assert_eq!(out, vec![[0.5, 0.5]; 2]);
    }

    #[test]
    fn wrong_input_shape() {
        assert!(cnn_forward(&CnnParams::zeros(), &Tensor::zeros([1, 1, 39, 40])).is_err());
    }

    #[test]
    fn train_mode_without_rng_fails() {
        let p = CnnParams::init(0);
        assert!(forward(&p, &Tensor::zeros([1, 1, 40, 40]), Mode::Train, None).is_err());
    }
}
