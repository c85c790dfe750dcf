use std::fmt;
use std::str::FromStr;

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::fwb::Container;

/// Above this value of `beta * z` softplus returns `z` directly.
pub const SOFTPLUS_THRESHOLD: f64 = 20.0;
const SOFTPLUS_SATURATION: f64 = 37.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Linear,
    Relu,
    Softplus { beta: f64 },
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Softplus { beta } => softplus(beta, z).0,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus { beta } => sigmoid(beta * z),
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    /// Value and derivative together, sharing the exponential.
    pub fn apply_with_derivative(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Softplus { beta } => softplus(beta, z),
            Activation::Sigmoid => {
                let s = sigmoid(z);
                (s, s * (1.0 - s))
            }
            _ => (self.apply(z), self.derivative(z)),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::Softplus { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::invalid(format!("softplus beta must be positive, got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

/// Softplus `ln(1 + e^{bz}) / b` and its slope, via the overflow-free
/// form `max(bz, 0) + ln(1 + e^{-|bz|})`.
fn softplus(beta: f64, z: f64) -> (f64, f64) {
    let bz = beta * z;
    if bz > SOFTPLUS_THRESHOLD {
        return (z, sigmoid(bz));
    }
    let e = (-bz.abs()).exp();
    if bz < -SOFTPLUS_SATURATION {
        // e is below half an ulp of 1, so ln_1p(e) and e/(1+e) round to e.
        return (e / beta, e);
    }
    let slope = if bz >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    ((bz.max(0.0) + e.ln_1p()) / beta, slope)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Linear => f.write_str("linear"),
            Activation::Relu => f.write_str("relu"),
            Activation::Softplus { beta } => write!(f, "softplus:{beta:?}"),
            Activation::Sigmoid => f.write_str("sigmoid"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => match s.strip_prefix("softplus:") {
                Some(b) => {
                    let beta = b
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad softplus beta `{b}`")))?;
                    let act = Activation::Softplus { beta };
                    act.validate()?;
                    Ok(act)
                }
                None => Err(Error::invalid(format!("unknown activation `{s}`"))),
            },
        }
    }
}

/// Fully connected layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    layers: Vec<Dense>,
    hidden: Activation,
    output: Activation,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }
}

/// Activation and gradient buffers for one batch size.
#[derive(Debug, Clone)]
pub struct GradWorkspace {
    acts: Vec<Array2<f64>>,
    derivs: Vec<Array2<f64>>,
    upstream: Vec<Array2<f64>>,
    pub grads: MlpGrads,
}

impl GradWorkspace {
    pub fn new(net: &Mlp, batch: usize) -> Self {
        let bufs = || net.widths[1..].iter().map(|&w| Array2::zeros((batch, w))).collect::<Vec<_>>();
        Self {
            acts: bufs(),
            derivs: bufs(),
            upstream: bufs(),
            grads: MlpGrads {
                layers: net
                    .layers
                    .iter()
                    .map(|l| Dense {
                        weight: Array2::zeros(l.weight.raw_dim()),
                        bias: Array1::zeros(l.bias.len()),
                    })
                    .collect(),
            },
        }
    }

    fn fits(&self, net: &Mlp, batch: usize) -> bool {
        self.acts.len() == net.layers.len()
            && self.acts.iter().zip(&net.widths[1..]).all(|(a, &w)| a.dim() == (batch, w))
            && self.grads.layers.iter().zip(&net.layers).all(|(g, l)| g.weight.dim() == l.weight.dim())
    }
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        hidden.validate()?;
        output.validate()?;
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            hidden,
            output,
        })
    }

    /// Kaiming-uniform weights with leaky slope `sqrt(5)`, i.e. bound
    /// `1 / sqrt(fan_in)`; zero biases.
    pub fn kaiming<R: Rng>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, hidden, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.ncols() as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Dense>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        hidden.validate()?;
        output.validate()?;
        let mut widths = vec![layers[0].weight.ncols()];
        for (i, l) in layers.iter().enumerate() {
            if l.weight.ncols() != *widths.last().unwrap() || l.bias.len() != l.weight.nrows() {
                return Err(Error::dim(format!("layer {i} shape does not chain")));
            }
            widths.push(l.weight.nrows());
        }
        Ok(Self {
            widths,
            layers,
            hidden,
            output,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    pub fn output(&self) -> Activation {
        self.output
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Dense { weight, bias } = l;
                [weight.as_slice_mut().unwrap(), bias.as_slice_mut().unwrap()]
            })
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::dim(format!(
                "network input width {} but got {} values",
                self.input_width(),
                x.len()
            )));
        }
        let mut a = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            a = l
                .weight
                .outer_iter()
                .zip(&l.bias)
                .map(|(row, b)| act.apply(row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>() + b))
                .collect();
        }
        Ok(a)
    }

    /// Forward pass over rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Array2::zeros((a.nrows(), l.weight.nrows()));
            z.assign(&l.bias.view().insert_axis(Axis(0)));
            general_mat_mul(1.0, &a, &l.weight.t(), 1.0, &mut z);
            let act = self.activation(i);
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        Ok(a)
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::dim(format!(
                "network input width {} but batch has {} columns",
                self.input_width(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Mean squared error over every output element of the batch, and its
    /// exact gradient with respect to all parameters.
    pub fn mse_gradients(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(MlpGrads, f64)> {
        let mut ws = GradWorkspace::new(self, inputs.nrows());
        let loss = self.mse_gradients_into(inputs, targets, &mut ws)?;
        Ok((ws.grads, loss))
    }

    /// As [`Mlp::mse_gradients`], writing into reusable buffers. The
    /// gradients are left in `ws.grads`.
    pub fn mse_gradients_into(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>, ws: &mut GradWorkspace) -> Result<f64> {
        self.check_input(inputs)?;
        if inputs.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if targets.dim() != (inputs.nrows(), self.output_width()) {
            return Err(Error::dim(format!(
                "targets are {:?}, expected ({}, {})",
                targets.dim(),
                inputs.nrows(),
                self.output_width()
            )));
        }
        if !ws.fits(self, inputs.nrows()) {
            *ws = GradWorkspace::new(self, inputs.nrows());
        }
        let n_layers = self.layers.len();
        // Forward: acts[i] is the output of layer i, derivs[i] its activation slope.
        for (i, l) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(i);
            let z = &mut after[0];
            z.assign(&l.bias.view().insert_axis(Axis(0)));
            match before.last() {
                Some(prev) => general_mat_mul(1.0, prev, &l.weight.t(), 1.0, z),
                None => general_mat_mul(1.0, &inputs, &l.weight.t(), 1.0, z),
            }
            let act = self.activation(i);
            ndarray::Zip::from(z).and(&mut ws.derivs[i]).for_each(|a, d| {
                let (v, dv) = act.apply_with_derivative(*a);
                *a = v;
                *d = dv;
            });
        }

        let out = &ws.acts[n_layers - 1];
        let scale = 1.0 / (out.len() as f64);
        let mut loss = 0.0;
        // upstream[n-1] holds dL/da of the last layer.
        ndarray::Zip::from(&mut ws.upstream[n_layers - 1])
            .and(out)
            .and(&targets)
            .for_each(|u, &o, &t| {
                let d = o - t;
                loss += d * d;
                *u = 2.0 * d * scale;
            });
        loss *= scale;

        for i in (0..n_layers).rev() {
            let (lower, upper) = ws.upstream.split_at_mut(i);
            let delta = &mut upper[0];
            delta.zip_mut_with(&ws.derivs[i], |d, &dz| *d *= dz);
            let grad = &mut ws.grads.layers[i];
            match i.checked_sub(1) {
                Some(prev) => {
                    general_mat_mul(1.0, &delta.t(), &ws.acts[prev], 0.0, &mut grad.weight);
                    general_mat_mul(1.0, &*delta, &self.layers[i].weight, 0.0, &mut lower[prev]);
                }
                None => general_mat_mul(1.0, &delta.t(), &inputs, 0.0, &mut grad.weight),
            }
            grad.bias.fill(0.0);
            for row in delta.outer_iter() {
                grad.bias += &row;
            }
        }
        Ok(loss)
    }

    pub fn meta_text(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!(
            "widths = {}\nhidden = {}\noutput = {}\n",
            widths.join(","),
            self.hidden,
            self.output
        )
    }

    /// Writes `{prefix}w{i}`, `{prefix}b{i}` and `{prefix}meta`.
    pub fn write_chunks(&self, c: &mut Container, prefix: &str, extra_meta: &str) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            let (r, k) = l.weight.dim();
            c.put_f64(&format!("{prefix}w{i}"), &[r, k], l.weight.iter().copied().collect())?;
            c.put_f64(&format!("{prefix}b{i}"), &[r], l.bias.to_vec())?;
        }
        c.put_text(&format!("{prefix}meta"), &format!("{}{extra_meta}", self.meta_text()))
    }

    pub fn read_chunks(c: &Container, prefix: &str) -> Result<(Self, KeyValues)> {
        let meta = KeyValues::parse(&c.text(&format!("{prefix}meta"))?, format!("{prefix}meta"))?;
        let hidden: Activation = meta
            .get_str("hidden")
            .ok_or_else(|| Error::Container("meta lacks `hidden`".into()))?
            .parse()?;
        let output: Activation = meta
            .get_str("output")
            .ok_or_else(|| Error::Container("meta lacks `output`".into()))?
            .parse()?;
        let mut layers = Vec::new();
        let mut i = 0;
        while c.contains(&format!("{prefix}w{i}")) {
            let (wd, w) = c.f64(&format!("{prefix}w{i}"))?;
            let (_, b) = c.f64(&format!("{prefix}b{i}"))?;
            if wd.len() != 2 {
                return Err(Error::Container(format!("{prefix}w{i} must be rank 2")));
            }
            let weight = Array2::from_shape_vec((wd[0], wd[1]), w.to_vec())
                .map_err(|e| Error::Container(e.to_string()))?;
            layers.push(Dense {
                weight,
                bias: Array1::from(b.to_vec()),
            });
            i += 1;
        }
        let net = Self::from_layers(layers, hidden, output)?;
        if let Some(w) = meta.get_str("widths") {
            let declared: Vec<usize> = w.split(',').filter_map(|s| s.trim().parse().ok()).collect();
            if declared != net.widths {
                return Err(Error::Container(format!(
                    "meta widths {declared:?} disagree with stored layers {:?}",
                    net.widths
                )));
            }
        }
        Ok((net, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn zero_weights_return_bias() {
        let mut net = Mlp::zeros(&[3, 2], Activation::Relu, Activation::Linear).unwrap();
        net.layers_mut()[0].bias = array![0.25, -4.0];
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.25, -4.0]);
    }

    #[test]
    fn relu_identity_layer() {
        let mut net = Mlp::zeros(&[2, 2], Activation::Linear, Activation::Relu).unwrap();
        net.layers_mut()[0].weight = Array2::eye(2);
        assert_eq!(net.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn softplus_saturated_branch() {
        let sp = Activation::Softplus { beta: 100.0 };
        assert!((sp.apply(1.0) - 1.0).abs() < 1e-9);
        // Oracle: ln(1 + e^{bz})/b evaluated directly for moderate bz.
        let z = 0.05;
        assert!((sp.apply(z) - (1.0 + (100.0f64 * z).exp()).ln() / 100.0).abs() < 1e-15);
        assert!(sp.apply(-10.0) >= 0.0);
    }

    #[test]
    fn width_mismatch_errors() {
        let net = Mlp::zeros(&[3, 4, 2], Activation::Relu, Activation::Linear).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
        assert!(net.forward_batch(Array2::zeros((5, 2)).view()).is_err());
        assert!(Mlp::zeros(&[3], Activation::Relu, Activation::Linear).is_err());
        assert!(Mlp::zeros(&[3, 1], Activation::Softplus { beta: 0.0 }, Activation::Linear).is_err());
    }

    #[test]
    fn batch_agrees_with_single() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let net = Mlp::kaiming(&[4, 8, 8, 3], Activation::Softplus { beta: 10.0 }, Activation::Sigmoid, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let batch = net.forward_batch(x.view()).unwrap();
        for (i, row) in x.outer_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let net = Mlp::kaiming(&[3, 5, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let y = net.forward_batch(x.view()).unwrap();
        let (g, loss) = net.mse_gradients(x.view(), y.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.slices().iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn single_linear_neuron() {
        let mut net = Mlp::zeros(&[1, 1], Activation::Linear, Activation::Linear).unwrap();
        net.layers_mut()[0].weight[[0, 0]] = 1.5;
        let (x, t) = (2.0, 1.0);
        let (g, loss) = net.mse_gradients(array![[x]].view(), array![[t]].view()).unwrap();
        assert_eq!(loss, (1.5 * x - t) * (1.5 * x - t));
        assert_eq!(g.layers[0].weight[[0, 0]], 2.0 * x * (1.5 * x - t));
        assert_eq!(g.layers[0].bias[0], 2.0 * (1.5 * x - t));
    }

    #[test]
    fn empty_batch_errors() {
        let net = Mlp::zeros(&[2, 1], Activation::Relu, Activation::Linear).unwrap();
        assert!(net.mse_gradients(Array2::zeros((0, 2)).view(), Array2::zeros((0, 1)).view()).is_err());
    }

    #[test]
    fn chunk_round_trip() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let net = Mlp::kaiming(&[6, 4, 2], Activation::Softplus { beta: 100.0 }, Activation::Sigmoid, &mut rng).unwrap();
        let mut c = Container::new();
        net.write_chunks(&mut c, "light.0.diffuse.", "seed = 3\n").unwrap();
        let (back, meta) = Mlp::read_chunks(&c, "light.0.diffuse.").unwrap();
        assert_eq!(back, net);
        assert_eq!(meta.get::<u64>("seed").unwrap(), Some(3));
    }
}
