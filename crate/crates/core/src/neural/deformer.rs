use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{Activation, AdamConfig, AdamState, GradWorkspace, Mlp, SinusoidalEncoding};
use crate::deform::DeformModel;
use crate::error::{Error, Result};
use crate::fwb::Container;
use crate::mesh::Vec3;

pub const DEFAULT_HIDDEN: [usize; 4] = [128; 4];
pub const DEFAULT_SOFTPLUS_BETA: f64 = 100.0;
pub const DEFAULT_ITERATIONS: usize = 5000;
pub const DEFAULT_LR: f64 = 2e-4;

/// Neural expression basis: maps an encoded canonical position to a
/// `3 x n_e` offset basis, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformer {
    pub net: Mlp,
    pub encoding: SinusoidalEncoding,
}

impl Deformer {
    /// Softplus hidden stack with a linear output of width `3 * n_expr`.
    /// Hidden layers are Kaiming-initialized; the output layer starts at
    /// zero so the initial basis is zero rather than O(1).
    pub fn new(encoding: SinusoidalEncoding, n_expr: usize, hidden: &[usize], beta: f64, seed: u64) -> Result<Self> {
        let mut widths = vec![encoding.output_len()];
        widths.extend_from_slice(hidden);
        widths.push(3 * n_expr);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut net = Mlp::kaiming(&widths, Activation::Softplus { beta }, Activation::Linear, &mut rng)?;
        net.layers_mut().last_mut().unwrap().weight.fill(0.0);
        Ok(Self { net, encoding })
    }

    pub fn from_parts(net: Mlp, encoding: SinusoidalEncoding) -> Result<Self> {
        if net.input_width() != encoding.output_len() {
            return Err(Error::dim(format!(
                "network input width {} but encoding produces {}",
                net.input_width(),
                encoding.output_len()
            )));
        }
        if net.output_width() % 3 != 0 {
            return Err(Error::dim(format!(
                "network output width {} is not a multiple of 3",
                net.output_width()
            )));
        }
        Ok(Self { net, encoding })
    }

    pub fn n_expr(&self) -> usize {
        self.net.output_width() / 3
    }

    pub fn encode_batch(&self, positions: &[Vec3]) -> Array2<f64> {
        let mut flat = Vec::with_capacity(positions.len() * self.encoding.output_len());
        for p in positions {
            self.encoding.encode_into(p, &mut flat);
        }
        Array2::from_shape_vec((positions.len(), self.encoding.output_len()), flat)
            .expect("encoding length is consistent")
    }

    /// Basis blocks at `positions`, `3 * n_e` values per point.
    pub fn eval(&self, positions: &[Vec3]) -> Result<Vec<f64>> {
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let out = self.net.forward_batch(self.encode_batch(positions).view())?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        let extra = format!(
            "frequencies = {}\ninclude_input = {}\n",
            self.encoding.frequencies, self.encoding.include_input
        );
        self.net.write_chunks(&mut c, "", &extra)?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (net, meta) = Mlp::read_chunks(c, "")?;
        let encoding = SinusoidalEncoding::new(
            meta.get("frequencies")?.unwrap_or(10),
            meta.get("include_input")?.unwrap_or(true),
        );
        Self::from_parts(net, encoding)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub iterations: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_LR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub deformer: Deformer,
    /// Mean squared error over all basis entries before each update.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
}

/// Full-batch supervised fit of the deformer to the model's expression basis
/// at the canonical vertices.
pub fn pretrain_deformer(model: &DeformModel, deformer: Deformer, config: &PretrainConfig) -> Result<PretrainOutcome> {
    let n_e = model.n_expr();
    if deformer.net.output_width() != 3 * n_e {
        return Err(Error::dim(format!(
            "network output width {} but the model has 3 x {n_e} basis entries",
            deformer.net.output_width()
        )));
    }
    let deformer = Deformer::from_parts(deformer.net, deformer.encoding)?;
    let inputs = deformer.encode_batch(model.canonical());
    let targets = ArrayView2::from_shape((model.vertex_count(), 3 * n_e), model.expr_basis())
        .map_err(|e| Error::dim(e.to_string()))?;
    let Deformer { mut net, encoding } = deformer;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr));
    let mut loss_history = Vec::with_capacity(config.iterations);
    let mut ws = GradWorkspace::new(&net, inputs.nrows());
    for it in 0..config.iterations {
        let loss = net.mse_gradients_into(inputs.view(), targets, &mut ws)?;
        loss_history.push(loss);
        adam.step(&mut net.param_slices_mut(), &ws.grads.slices())?;
        if it % 1000 == 0 {
            log::debug!("deformer pretraining iteration {it}: loss {loss:.3e}");
        }
    }
    let out = net.forward_batch(inputs.view())?;
    let final_loss = (&out - &targets).iter().map(|d| d * d).sum::<f64>() / out.len().max(1) as f64;
    Ok(PretrainOutcome {
        deformer: Deformer { net, encoding },
        loss_history,
        final_loss,
    })
}

/// Root-mean-square of the basis entries.
pub fn basis_rms(basis: &[f64]) -> f64 {
    if basis.is_empty() {
        return 0.0;
    }
    (basis.iter().map(|b| b * b).sum::<f64>() / basis.len() as f64).sqrt()
}
