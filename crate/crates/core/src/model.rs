//! Fully connected score functions `g(x; θ)` with hand-written
//! backpropagation.
//!
//! A network is a stack of affine layers. Hidden layers use ReLU and the
//! output layer is linear, so a single layer is the linear model `d → K`.
//!
//! # Checkpoint format
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes   "LWPLNET\0"
//! version    u32       1
//! layers     u32       L
//! L times:   u32 inputs, u32 outputs, u8 activation (0 = identity, 1 = relu)
//! L times:   f64 × (outputs · inputs)  weight, row-major (out × in)
//!            f64 × outputs             bias
//! ```

use std::io::{Read, Write};

use rand::Rng;

use crate::rng::{self, streams};
use crate::scalar::Scalar;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LWPLNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            _ => Err(Error::format("checkpoint", format!("unknown activation code {c}"))),
        }
    }
}

/// Affine map followed by an activation. `weight` is `outputs × inputs`,
/// row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
    inputs: usize,
    outputs: usize,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
            activation,
            inputs,
            outputs,
        }
    }

    pub fn new(inputs: usize, outputs: usize, weight: Vec<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if weight.len() != inputs * outputs {
            return Err(Error::DimensionMismatch {
                what: "layer weight",
                expected: inputs * outputs,
                actual: weight.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::DimensionMismatch {
                what: "layer bias",
                expected: outputs,
                actual: bias.len(),
            });
        }
        Ok(Self {
            weight,
            bias,
            activation,
            inputs,
            outputs,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            out.push(acc);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

/// Activations cached by [`Network::forward_into`] for a subsequent
/// [`Network::accumulate_gradient`].
#[derive(Clone, Debug, Default)]
pub struct Workspace<T> {
    /// `pre[l]`: pre-activation of layer `l`.
    pre: Vec<Vec<T>>,
    /// `post[l]`: output of layer `l`.
    post: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Self {
            pre: Vec::new(),
            post: Vec::new(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    /// Output of the last forward pass.
    pub fn scores(&self) -> &[T] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Pre-activation of every layer from the last forward pass.
    pub fn pre_activations(&self) -> impl Iterator<Item = &[T]> {
        self.pre.iter().map(Vec::as_slice)
    }
}

/// Parameter gradients, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.weight.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, b)| *a += *b);
            b.iter_mut().zip(ob).for_each(|(a, b)| *a += *b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= s);
        }
    }

    /// Flattened in checkpoint order (per layer: weight then bias).
    pub fn to_flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

impl<T: Scalar> Network<T> {
    /// Zero-initialized network with the given widths `[d, h…, K]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("invalid architecture {widths:?}")));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { Activation::Relu };
                Layer::zeros(w[0], w[1], act)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn linear(inputs: usize, classes: usize) -> Result<Self> {
        Self::zeros(&[inputs, classes])
    }

    pub fn mlp(inputs: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(inputs)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect();
        Self::zeros(&widths)
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    what: "consecutive layer widths",
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers })
    }

    /// Uniform `[-1/√fan_in, 1/√fan_in]` initialization of weights and biases
    /// from the init stream of `seed`.
    pub fn initialized(mut self, seed: u64) -> Self {
        let mut rng = rng::stream(seed, streams::INIT);
        for layer in &mut self.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = T::lit(rng.gen_range(-bound..bound));
            }
        }
        self
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// `[d, h…, K]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters flattened in checkpoint order.
    pub fn to_flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::DimensionMismatch {
                what: "flat parameter vector",
                expected: self.num_parameters(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "feature vector",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut ws = Workspace::new();
        self.forward_into(x, &mut ws)?;
        Ok(ws.post.pop().unwrap_or_default())
    }

    /// Forward pass keeping every intermediate activation in `ws`.
    pub fn forward_into<'w>(&self, x: &[T], ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        self.check_input(x)?;
        let n = self.layers.len();
        ws.pre.resize_with(n, Vec::new);
        ws.post.resize_with(n, Vec::new);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = ws.post.split_at_mut(l);
            let input: &[T] = if l == 0 { x } else { &done[l - 1] };
            layer.affine(input, &mut ws.pre[l]);
            let out = &mut rest[0];
            out.clear();
            out.extend(ws.pre[l].iter().map(|&v| match layer.activation {
                Activation::Identity => v,
                Activation::Relu => v.max(T::zero()),
            }));
        }
        Ok(ws.scores())
    }

    /// Adds `∂(upstream · g)/∂θ` to `grads`, using the activations left in
    /// `ws` by [`Network::forward_into`] on the same `x`. ReLU at exactly zero
    /// passes no gradient.
    pub fn accumulate_gradient(&self, x: &[T], ws: &mut Workspace<T>, upstream: &[T], grads: &mut Gradients<T>) -> Result<()> {
        if upstream.len() != self.num_classes() {
            return Err(Error::DimensionMismatch {
                what: "upstream gradient",
                expected: self.num_classes(),
                actual: upstream.len(),
            });
        }
        ws.delta.clear();
        ws.delta.extend_from_slice(upstream);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                for (d, &z) in ws.delta.iter_mut().zip(&ws.pre[l]) {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let input: &[T] = if l == 0 { x } else { &ws.post[l - 1] };
            let (gw, gb) = &mut grads.layers[l];
            for o in 0..layer.outputs {
                let d = ws.delta[o];
                gb[o] += d;
                if d != T::zero() {
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, &xi) in row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                }
            }
            if l > 0 {
                ws.delta_prev.clear();
                ws.delta_prev.resize(layer.inputs, T::zero());
                for o in 0..layer.outputs {
                    let d = ws.delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weight[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in ws.delta_prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
        Ok(())
    }

    /// Parameter gradients of `upstream · g(x; θ)`.
    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<Gradients<T>> {
        let mut ws = Workspace::new();
        self.forward_into(x, &mut ws)?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradient(x, &mut ws, upstream, &mut grads)?;
        Ok(grads)
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.inputs as u32).to_le_bytes())?;
            w.write_all(&(l.outputs as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
        }
        for v in self.to_flat() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = ByteCursor::new(&bytes);
        if cur.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let n = cur.u32()? as usize;
        if n == 0 {
            return Err(Error::format("checkpoint", "no layers"));
        }
        let mut shapes = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let inputs = cur.u32()? as usize;
            let outputs = cur.u32()? as usize;
            let act = Activation::from_code(cur.take(1)?[0])?;
            shapes.push((inputs, outputs, act));
        }
        let mut layers = Vec::with_capacity(n);
        for (inputs, outputs, act) in shapes {
            let weight = cur.f64s(inputs * outputs)?.into_iter().map(T::lit).collect();
            let bias = cur.f64s(outputs)?.into_iter().map(T::lit).collect();
            layers.push(Layer::new(inputs, outputs, weight, bias, act)?);
        }
        if !cur.is_empty() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Self::from_layers(layers)
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::<f64>::mlp(4, &[3, 3], 2).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(net.widths(), vec![4, 3, 3, 2]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Network::<f64>::linear(3, 3).unwrap();
        let l = &mut net.layers_mut()[0];
        for i in 0..3 {
            l.weight[i * 3 + i] = 1.0;
        }
        let x = [0.5, -1.5, 2.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn two_layer_forward_by_hand() {
        // 3 → 2 (ReLU) → 2; products written out explicitly.
        let w1 = vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.5];
        let b1 = vec![0.1, -0.2];
        let w2 = vec![1.0, -2.0, 0.5, 3.0];
        let b2 = vec![0.0, 1.0];
        let net = Network::from_layers(vec![
            Layer::new(3, 2, w1, b1, Activation::Relu).unwrap(),
            Layer::new(2, 2, w2, b2, Activation::Identity).unwrap(),
        ])
        .unwrap();
        let x = [1.0, 2.0, 0.5];
        let h0 = (0.5 * 1.0 - 1.0 * 2.0 + 2.0 * 0.5 + 0.1f64).max(0.0);
        let h1 = (1.5 * 1.0 + 0.25 * 2.0 - 0.5 * 0.5 - 0.2f64).max(0.0);
        let expect = [1.0 * h0 - 2.0 * h1, 0.5 * h0 + 3.0 * h1 + 1.0];
        let g = net.forward(&x).unwrap();
        assert!((g[0] - expect[0]).abs() < 1e-15 && (g[1] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn forward_checks_dimensions() {
        let net = Network::<f64>::linear(3, 2).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(Network::<f64>::zeros(&[3]).is_err());
        assert!(Network::<f64>::zeros(&[3, 0, 2]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Network::<f64>::mlp(4, &[5], 3).unwrap().initialized(1);
        let g = net.backward(&[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let net = Network::<f64>::linear(3, 2).unwrap().initialized(2);
        let x = [0.5, -1.0, 2.0];
        let up = [0.3, -0.7];
        let g = net.backward(&x, &up).unwrap();
        let (gw, gb) = &g.layers[0];
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(gw[o * 3 + i], up[o] * x[i]);
            }
            assert_eq!(gb[o], up[o]);
        }
    }

    #[test]
    fn relu_zero_passes_no_gradient() {
        let net = Network::from_layers(vec![
            Layer::new(1, 1, vec![1.0], vec![0.0], Activation::Relu).unwrap(),
            Layer::new(1, 1, vec![1.0], vec![0.0], Activation::Identity).unwrap(),
        ])
        .unwrap();
        let g = net.backward(&[0.0], &[1.0]).unwrap();
        assert_eq!(g.layers[0], (vec![0.0], vec![0.0]));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[-1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Network::<f64>::mlp(5, &[4, 3], 3).unwrap().initialized(3);
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        assert_eq!(buf.len(), 8 + 4 + 4 + 3 * 9 + 8 * net.num_parameters());
        let back = Network::<f64>::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let net = Network::<f64>::linear(2, 2).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Network::<f64>::read_checkpoint(&bad[..]).is_err());
        assert!(Network::<f64>::read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(Network::<f64>::read_checkpoint(&long[..]).is_err());
    }

    #[test]
    fn single_precision_forward() {
        let net = Network::<f32>::mlp(3, &[4], 2).unwrap().initialized(4);
        let net64 = Network::<f64>::mlp(3, &[4], 2).unwrap().initialized(4);
        let a = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let b = net64.forward(&[0.1, 0.2, 0.3]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((*x as f64 - y).abs() < 1e-5);
        }
    }
}
