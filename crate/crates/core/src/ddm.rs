//! Deep dynamical model: encoder, decoder and latent predictor, trained
//! jointly on reconstruction, frame prediction and latent consistency.
//!
//! ```text
//! z_t      = enc(x_t)
//! x̃_t      = dec(z_t)
//! ẑ_{t+1}  = pred([z_{t-1}; z_t; u_t])
//! x̂_{t+1}  = dec(ẑ_{t+1})
//! ```
//!
//! The training objective over a set of transitions is
//! `Σ ‖x̃_t − x_t‖² + ‖x̂_{t+1} − x_{t+1}‖² + α‖ẑ_{t+1} − enc(x_{t+1})‖²`,
//! minimised over all three networks at once. The latent target
//! `enc(x_{t+1})` is differentiated like every other term.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::nncore::segment::{read_segment, write_segment};
use crate::nncore::{AdamConfig, AdamState, Matrix, Mlp, Parameters, PcaProjector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdmDims {
    /// Reduced input dimension (PCA components).
    pub n_x: usize,
    /// Latent dimension.
    pub n_z: usize,
    /// Control dimension.
    pub n_u: usize,
}

impl DdmDims {
    pub fn predictor_input(&self) -> usize {
        2 * self.n_z + self.n_u
    }
}

/// Hidden-layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub enc_hidden: Vec<usize>,
    pub pred_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
}

impl Architecture {
    /// 100×50 – 50×50 – 50×2 encoder, 5×100 – 100×100 – 100×2 predictor.
    pub fn single() -> Self {
        Architecture {
            enc_hidden: vec![50, 50],
            pred_hidden: vec![100, 100],
            dec_hidden: vec![50, 50],
        }
    }

    /// 512×256 – 256×256 – 256×4 encoder, 10×200 – 200×200 – 200×4 predictor.
    pub fn double() -> Self {
        Architecture {
            enc_hidden: vec![256, 256],
            pred_hidden: vec![200, 200],
            dec_hidden: vec![256, 256],
        }
    }

    fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdmModel {
    pub enc: Mlp,
    pub dec: Mlp,
    pub pred: Mlp,
    dims: DdmDims,
}

/// One training example: two consecutive inputs, the control applied at the
/// second, and the input that followed. All from the same trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTriple {
    pub x_prev: Vec<f64>,
    pub x_cur: Vec<f64>,
    pub x_next: Vec<f64>,
    pub u: Vec<f64>,
}

/// Summed loss terms over a set of transitions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub pred_img: f64,
    pub latent: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(recon: f64, pred_img: f64, latent: f64, alpha: f64) -> Self {
        LossBreakdown {
            recon,
            pred_img,
            latent,
            alpha,
            total: recon + pred_img + alpha * latent,
        }
    }

    fn accumulate(&mut self, other: &LossBreakdown) {
        *self = LossBreakdown::new(
            self.recon + other.recon,
            self.pred_img + other.pred_img,
            self.latent + other.latent,
            other.alpha,
        );
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.recon.is_finite() && self.pred_img.is_finite() && self.latent.is_finite()
    }
}

impl DdmModel {
    /// Assemble from networks, checking that their shapes chain as
    /// `enc: n_x→n_z`, `dec: n_z→n_x`, `pred: 2n_z+n_u→n_z`.
    pub fn from_parts(enc: Mlp, dec: Mlp, pred: Mlp, dims: DdmDims) -> Result<Self> {
        let checks = [
            ("encoder input", dims.n_x, enc.input_dim()),
            ("encoder output", dims.n_z, enc.output_dim()),
            ("decoder input", dims.n_z, dec.input_dim()),
            ("decoder output", dims.n_x, dec.output_dim()),
            ("predictor input", dims.predictor_input(), pred.input_dim()),
            ("predictor output", dims.n_z, pred.output_dim()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(Error::dim(what, expected, got));
            }
        }
        Ok(DdmModel { enc, dec, pred, dims })
    }

    /// Orthogonally initialised model; biases start at zero.
    pub fn init(dims: DdmDims, arch: &Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = Mlp::orthogonal(&Architecture::widths(dims.n_x, &arch.enc_hidden, dims.n_z), &mut rng)?;
        let dec = Mlp::orthogonal(&Architecture::widths(dims.n_z, &arch.dec_hidden, dims.n_x), &mut rng)?;
        let pred = Mlp::orthogonal(
            &Architecture::widths(dims.predictor_input(), &arch.pred_hidden, dims.n_z),
            &mut rng,
        )?;
        DdmModel::from_parts(enc, dec, pred, dims)
    }

    /// All parameters zero.
    pub fn zeros(dims: DdmDims, arch: &Architecture) -> Result<Self> {
        DdmModel::from_parts(
            Mlp::zeros(&Architecture::widths(dims.n_x, &arch.enc_hidden, dims.n_z))?,
            Mlp::zeros(&Architecture::widths(dims.n_z, &arch.dec_hidden, dims.n_x))?,
            Mlp::zeros(&Architecture::widths(dims.predictor_input(), &arch.pred_hidden, dims.n_z))?,
            dims,
        )
    }

    pub fn dims(&self) -> DdmDims {
        self.dims
    }

    /// Trainable parameters across all three networks.
    pub fn param_count(&self) -> usize {
        self.enc.param_count() + self.dec.param_count() + self.pred.param_count()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.enc.infer_vec(x)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.dec.infer_vec(z)
    }

    /// Next latent from `[z_prev; z_cur; u]`.
    pub fn predict_latent(&self, z_prev: &[f64], z_cur: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let n_z = self.dims.n_z;
        if z_prev.len() != n_z {
            return Err(Error::dim("previous latent", n_z, z_prev.len()));
        }
        if z_cur.len() != n_z {
            return Err(Error::dim("current latent", n_z, z_cur.len()));
        }
        if u.len() != self.dims.n_u {
            return Err(Error::dim("control", self.dims.n_u, u.len()));
        }
        let input: Vec<f64> = z_prev.iter().chain(z_cur).chain(u).copied().collect();
        self.pred.infer_vec(&input)
    }

    /// `dec(pred(enc(x_prev), enc(x_cur), u))`.
    pub fn predict_frame(&self, x_prev: &[f64], x_cur: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let z_prev = self.encode(x_prev)?;
        let z_cur = self.encode(x_cur)?;
        self.decode(&self.predict_latent(&z_prev, &z_cur, u)?)
    }

    /// Iterate the predictor over `controls`, feeding predictions back.
    /// Returns `ẑ_1 … ẑ_K`.
    pub fn rollout_latent(&self, z_prev: &[f64], z_cur: &[f64], controls: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if controls.is_empty() {
            return Err(Error::InvalidArgument("rollout needs at least one control".into()));
        }
        let mut prev = z_prev.to_vec();
        let mut cur = z_cur.to_vec();
        let mut out = Vec::with_capacity(controls.len());
        for (k, u) in controls.iter().enumerate() {
            let next = self.predict_latent(&prev, &cur, u)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("latent rollout at step {}", k + 1)));
            }
            prev = std::mem::replace(&mut cur, next.clone());
            out.push(next);
        }
        Ok(out)
    }

    /// Open-loop multi-step frame prediction: decoded [`Self::rollout_latent`].
    pub fn predict_frames(&self, x_prev: &[f64], x_cur: &[f64], controls: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let z_prev = self.encode(x_prev)?;
        let z_cur = self.encode(x_cur)?;
        self.rollout_latent(&z_prev, &z_cur, controls)?
            .iter()
            .map(|z| self.decode(z))
            .collect()
    }

    /// Re-express the encoder input and decoder output in a new PCA basis
    /// over the same pixels. With `M = Bₒᵀ Bₙ` the encoder's first layer
    /// becomes `W M`, `b + W Bₒᵀ(μₙ − μₒ)` and the decoder's last layer
    /// `Mᵀ V`, `Mᵀ c + Bₙᵀ(μₒ − μₙ)`. Exact on frames inside both subspaces.
    pub fn rebase(&self, old: &PcaProjector, new: &PcaProjector) -> Result<DdmModel> {
        let n_x = self.dims.n_x;
        if old.components() != n_x || new.components() != n_x {
            return Err(Error::dim("PCA components for rebase", n_x, if old.components() != n_x { old.components() } else { new.components() }));
        }
        if old.raw_dim() != new.raw_dim() {
            return Err(Error::dim("PCA raw dim for rebase", old.raw_dim(), new.raw_dim()));
        }
        let m = old.basis().transpose().matmul(new.basis());
        let shift: Vec<f64> = new.mean().iter().zip(old.mean()).map(|(n, o)| n - o).collect();
        let mut out = self.clone();

        let first = &mut out.enc.layers_mut()[0];
        let w_shift = first.weights.matvec(&old.basis().t_matvec(&shift));
        first.weights = first.weights.matmul(&m);
        for (b, s) in first.biases.iter_mut().zip(&w_shift) {
            *b += s;
        }

        let last_index = out.dec.layers().len() - 1;
        let last = &mut out.dec.layers_mut()[last_index];
        let back = new.basis().t_matvec(&shift);
        last.weights = m.transpose().matmul(&last.weights);
        last.biases = m.t_matvec(&last.biases);
        for (c, s) in last.biases.iter_mut().zip(&back) {
            *c -= s;
        }
        Ok(out)
    }

    fn check_triple(&self, t: &TransitionTriple) -> Result<()> {
        let n_x = self.dims.n_x;
        for (what, v) in [("x_prev", &t.x_prev), ("x_cur", &t.x_cur), ("x_next", &t.x_next)] {
            if v.len() != n_x {
                return Err(Error::dim(format!("transition {what}"), n_x, v.len()));
            }
        }
        if t.u.len() != self.dims.n_u {
            return Err(Error::dim("transition control", self.dims.n_u, t.u.len()));
        }
        Ok(())
    }
}

impl Parameters for DdmModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.enc.tensors();
        t.extend(self.dec.tensors());
        t.extend(self.pred.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.enc.tensors_mut();
        t.extend(self.dec.tensors_mut());
        t.extend(self.pred.tensors_mut());
        t
    }

    fn tensor_name(&self, index: usize) -> String {
        let ne = self.enc.tensors().len();
        let nd = self.dec.tensors().len();
        if index < ne {
            format!("encoder {}", self.enc.tensor_name(index))
        } else if index < ne + nd {
            format!("decoder {}", self.dec.tensor_name(index - ne))
        } else {
            format!("predictor {}", self.pred.tensor_name(index - ne - nd))
        }
    }
}

/// A minibatch of transitions packed row-wise.
struct Batch {
    x_prev: Matrix,
    x_cur: Matrix,
    x_next: Matrix,
    u: Matrix,
}

impl Batch {
    fn gather(triples: &[TransitionTriple], idx: &[usize]) -> Result<Self> {
        let pick = |f: fn(&TransitionTriple) -> &Vec<f64>| {
            Matrix::from_rows(&idx.iter().map(|&i| f(&triples[i]).as_slice()).collect::<Vec<_>>())
        };
        Ok(Batch {
            x_prev: pick(|t| &t.x_prev)?,
            x_cur: pick(|t| &t.x_cur)?,
            x_next: pick(|t| &t.x_next)?,
            u: pick(|t| &t.u)?,
        })
    }

    fn len(&self) -> usize {
        self.x_cur.rows()
    }
}

fn sq_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn diff(a: &Matrix, b: &Matrix, scale: f64) -> Matrix {
    let mut out = a.clone();
    for (o, y) in out.data_mut().iter_mut().zip(b.data()) {
        *o = scale * (*o - y);
    }
    out
}

fn batch_loss(model: &DdmModel, batch: &Batch, alpha: f64) -> Result<LossBreakdown> {
    let b = batch.len();
    let z_all = model.enc.infer(&Matrix::vstack(&[&batch.x_prev, &batch.x_cur, &batch.x_next])?)?;
    let (z_prev, z_cur, z_next) = (z_all.row_block(0, b), z_all.row_block(b, b), z_all.row_block(2 * b, b));
    let z_hat = model.pred.infer(&Matrix::hstack(&[&z_prev, &z_cur, &batch.u])?)?;
    let x_out = model.dec.infer(&Matrix::vstack(&[&z_cur, &z_hat])?)?;
    Ok(LossBreakdown::new(
        sq_diff(&x_out.row_block(0, b), &batch.x_cur),
        sq_diff(&x_out.row_block(b, b), &batch.x_next),
        sq_diff(&z_hat, &z_next),
        alpha,
    ))
}

/// Summed loss over a batch and the gradient of `scale · total` with
/// respect to every parameter of the model.
fn batch_loss_and_grad(model: &DdmModel, batch: &Batch, alpha: f64, scale: f64) -> Result<(LossBreakdown, DdmModel)> {
    let b = batch.len();
    let n_z = model.dims.n_z;

    let (z_all, enc_tape) = model
        .enc
        .forward_batch(&Matrix::vstack(&[&batch.x_prev, &batch.x_cur, &batch.x_next])?)?;
    let (z_prev, z_cur, z_next) = (z_all.row_block(0, b), z_all.row_block(b, b), z_all.row_block(2 * b, b));
    let (z_hat, pred_tape) = model.pred.forward_batch(&Matrix::hstack(&[&z_prev, &z_cur, &batch.u])?)?;
    let (x_out, dec_tape) = model.dec.forward_batch(&Matrix::vstack(&[&z_cur, &z_hat])?)?;
    let (x_rec, x_hat) = (x_out.row_block(0, b), x_out.row_block(b, b));

    let loss = LossBreakdown::new(
        sq_diff(&x_rec, &batch.x_cur),
        sq_diff(&x_hat, &batch.x_next),
        sq_diff(&z_hat, &z_next),
        alpha,
    );

    let mut grads = DdmModel {
        enc: model.enc.zeros_like(),
        dec: model.dec.zeros_like(),
        pred: model.pred.zeros_like(),
        dims: model.dims,
    };

    let d_x_out = Matrix::vstack(&[&diff(&x_rec, &batch.x_cur, 2.0 * scale), &diff(&x_hat, &batch.x_next, 2.0 * scale)])?;
    let d_dec_in = model.dec.backward_into(&dec_tape, &d_x_out, &mut grads.dec)?;
    let d_z_cur_rec = d_dec_in.row_block(0, b);
    let mut d_z_hat = d_dec_in.row_block(b, b);
    let latent_grad = diff(&z_hat, &z_next, 2.0 * alpha * scale);
    d_z_hat.add_assign(&latent_grad);

    let d_pred_in = model.pred.backward_into(&pred_tape, &d_z_hat, &mut grads.pred)?;
    let d_z_prev = d_pred_in.columns(0, n_z);
    let mut d_z_cur = d_pred_in.columns(n_z, n_z);
    d_z_cur.add_assign(&d_z_cur_rec);
    let mut d_z_next = latent_grad;
    d_z_next.scale(-1.0);

    let d_z_all = Matrix::vstack(&[&d_z_prev, &d_z_cur, &d_z_next])?;
    model.enc.backward_into(&enc_tape, &d_z_all, &mut grads.enc)?;
    Ok((loss, grads))
}

const EVAL_CHUNK: usize = 512;

/// Summed loss terms over `dataset`.
pub fn loss(model: &DdmModel, dataset: &[TransitionTriple], alpha: f64) -> Result<LossBreakdown> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("loss over an empty dataset".into()));
    }
    for t in dataset {
        model.check_triple(t)?;
    }
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let mut total = LossBreakdown::new(0.0, 0.0, 0.0, alpha);
    for chunk in idx.chunks(EVAL_CHUNK) {
        total.accumulate(&batch_loss(model, &Batch::gather(dataset, chunk)?, alpha)?);
    }
    Ok(total)
}

/// Loss and gradient of the summed objective over `dataset`.
pub fn loss_and_grad(model: &DdmModel, dataset: &[TransitionTriple], alpha: f64) -> Result<(LossBreakdown, DdmModel)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("gradient over an empty dataset".into()));
    }
    for t in dataset {
        model.check_triple(t)?;
    }
    let idx: Vec<usize> = (0..dataset.len()).collect();
    batch_loss_and_grad(model, &Batch::gather(dataset, &idx)?, alpha, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            epochs: 300,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Minibatch Adam on the joint objective.
///
/// Each minibatch step follows the gradient of the mean per-transition loss.
/// The returned history has `epochs + 1` entries: the full-dataset loss
/// before training and after every epoch.
pub fn train(model: &DdmModel, dataset: &[TransitionTriple], config: &TrainConfig) -> Result<(DdmModel, Vec<LossBreakdown>)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one transition".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut model = model.clone();
    let mut history = Vec::with_capacity(config.epochs + 1);
    let initial = loss(&model, dataset, config.alpha)?;
    if !initial.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: 0,
            batch: 0,
            detail: "initial loss is not finite".into(),
        });
    }
    history.push(initial);

    let mut adam = AdamState::new(&model, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::gather(dataset, chunk)?;
            let (l, grads) = batch_loss_and_grad(&model, &batch, config.alpha, 1.0 / chunk.len() as f64)?;
            if !l.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: bi,
                    detail: format!("minibatch loss {l:?}"),
                });
            }
            adam.step(&mut model, &grads).map_err(|e| Error::TrainingDiverged {
                epoch,
                batch: bi,
                detail: e.to_string(),
            })?;
        }
        let l = loss(&model, dataset, config.alpha)?;
        if !l.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
                detail: "full-dataset loss is not finite".into(),
            });
        }
        history.push(l);
    }
    Ok((model, history))
}

/// Build transitions from one trial: `(x_{t-1}, x_t, u_t, x_{t+1})` for
/// `t = 1 … n-2`.
pub fn triples_from_trial(inputs: &[Vec<f64>], controls: &[Vec<f64>]) -> Result<Vec<TransitionTriple>> {
    if inputs.len() != controls.len() {
        return Err(Error::dim("controls per trial", inputs.len(), controls.len()));
    }
    Ok((1..inputs.len().saturating_sub(1))
        .map(|t| TransitionTriple {
            x_prev: inputs[t - 1].clone(),
            x_cur: inputs[t].clone(),
            x_next: inputs[t + 1].clone(),
            u: controls[t].clone(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDMC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with the PCA it expects its inputs from.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DdmModel,
    pub alpha: f64,
    pub pca: PcaProjector,
}

impl Checkpoint {
    pub fn new(model: DdmModel, alpha: f64, pca: PcaProjector) -> Result<Self> {
        if pca.components() != model.dims().n_x {
            return Err(Error::dim("PCA components vs model n_x", model.dims().n_x, pca.components()));
        }
        Ok(Checkpoint { model, alpha, pca })
    }

    /// Layout (little-endian):
    ///
    /// ```text
    /// "DDMC" u32 version u32 n_x u32 n_z u32 n_u f64 alpha u32 pca_p
    /// segment(enc) segment(dec) segment(pred)
    /// u32 raw_dim f64 mean[raw_dim] f64 basis[raw_dim * pca_p] (row-major)
    /// ```
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let d = self.model.dims();
        w.write_all(CHECKPOINT_MAGIC)?;
        binio::write_u32(w, CHECKPOINT_VERSION)?;
        binio::write_u32(w, d.n_x as u32)?;
        binio::write_u32(w, d.n_z as u32)?;
        binio::write_u32(w, d.n_u as u32)?;
        binio::write_f64(w, self.alpha)?;
        binio::write_u32(w, self.pca.components() as u32)?;
        write_segment(w, &self.model.enc)?;
        write_segment(w, &self.model.dec)?;
        write_segment(w, &self.model.pred)?;
        binio::write_u32(w, self.pca.raw_dim() as u32)?;
        binio::write_f64s(w, self.pca.mean())?;
        binio::write_f64s(w, self.pca.basis().data())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        const WHAT: &str = "checkpoint";
        binio::expect_magic(r, CHECKPOINT_MAGIC, WHAT)?;
        let version = binio::read_u32(r, WHAT, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(WHAT, "version", format!("unsupported version {version}")));
        }
        let n_x = binio::read_u32(r, WHAT, "n_x")? as usize;
        let n_z = binio::read_u32(r, WHAT, "n_z")? as usize;
        let n_u = binio::read_u32(r, WHAT, "n_u")? as usize;
        let alpha = binio::read_f64(r, WHAT, "alpha")?;
        let p = binio::read_u32(r, WHAT, "pca_p")? as usize;
        if p != n_x {
            return Err(Error::parse(WHAT, "pca_p", format!("{p} does not match n_x = {n_x}")));
        }
        let enc = read_segment(r)?;
        let dec = read_segment(r)?;
        let pred = read_segment(r)?;
        let dims = DdmDims { n_x, n_z, n_u };
        let model = DdmModel::from_parts(enc, dec, pred, dims)
            .map_err(|e| Error::parse(WHAT, "network segments", e.to_string()))?;
        let raw = binio::read_u32(r, WHAT, "raw_dim")? as usize;
        if raw < p {
            return Err(Error::parse(WHAT, "raw_dim", format!("{raw} is smaller than pca_p = {p}")));
        }
        let mean = binio::read_f64s(r, raw, WHAT, "pca mean")?;
        let basis = binio::read_f64s(r, raw * p, WHAT, "pca basis")?;
        let pca = PcaProjector::from_parts(mean, Matrix::from_vec(raw, p, basis)?)?;
        Checkpoint::new(model, alpha, pca)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::read_from(&mut BufReader::new(f))
    }
}
