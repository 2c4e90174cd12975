use super::features::{PointFeatures, FEATURE_DIM};
use crate::linalg::{dot, sigmoid, Matrix};
use crate::{Error, Result};

pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_HEAD_HIDDEN: usize = 16;
pub const DEFAULT_K_ENC: usize = 8;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub k_enc: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub head_hidden: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        EncoderShape {
            k_enc: DEFAULT_K_ENC,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden: DEFAULT_HIDDEN,
            head_hidden: DEFAULT_HEAD_HIDDEN,
        }
    }
}

impl EncoderShape {
    pub fn validate(&self) -> Result<()> {
        if self.k_enc == 0 || self.embed_dim < 2 || self.hidden == 0 || self.head_hidden == 0 {
            return Err(Error::config(format!("invalid encoder shape {self:?}")));
        }
        Ok(())
    }
}

/// Dense layer, `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn new(out: usize, inp: usize, rng: &mut crate::Rng) -> Self {
        Layer {
            weight: Matrix::glorot(out, inp, rng),
            bias: vec![0.0; out],
        }
    }

    fn zeros_like(&self) -> Self {
        Layer {
            weight: Matrix::zeros(self.weight.rows, self.weight.cols),
            bias: vec![0.0; self.bias.len()],
        }
    }

    #[inline]
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        self.weight.matvec(x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }
}

/// Fixed standardisation `(f - shift) * scale` of raw features before the
/// trunk. It is fit once on training features and never trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputNorm {
    pub shift: PointFeatures,
    pub scale: PointFeatures,
}

impl Default for InputNorm {
    fn default() -> Self {
        InputNorm {
            shift: [0.0; FEATURE_DIM],
            scale: [1.0; FEATURE_DIM],
        }
    }
}

impl InputNorm {
    /// Per-dimension mean and inverse standard deviation. Constant
    /// dimensions keep scale 1.
    pub fn fit(feats: &[PointFeatures]) -> Self {
        if feats.is_empty() {
            return InputNorm::default();
        }
        let n = feats.len() as f64;
        let mut norm = InputNorm::default();
        for j in 0..FEATURE_DIM {
            let mean = feats.iter().map(|f| f[j]).sum::<f64>() / n;
            let var = feats.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n;
            norm.shift[j] = mean;
            norm.scale[j] = if var > 1e-24 { 1.0 / var.sqrt() } else { 1.0 };
        }
        norm
    }

    #[inline]
    pub fn apply(&self, f: &PointFeatures) -> PointFeatures {
        std::array::from_fn(|j| (f[j] - self.shift[j]) * self.scale[j])
    }
}

/// The embedding trunk `f` (3 layers) and heads `h` (regression) and `g`
/// (baseline segmentation), 2 layers each.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub shape: EncoderShape,
    pub input: InputNorm,
    pub trunk: [Layer; 3],
    pub reg_head: [Layer; 2],
    pub seg_head: [Layer; 2],
}

/// Gradient buffers with the parameter layout of [`EncoderModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub trunk: [Layer; 3],
    pub reg_head: [Layer; 2],
    pub seg_head: [Layer; 2],
}

fn layer_slices(layers: &[Layer]) -> impl Iterator<Item = &[f64]> {
    layers
        .iter()
        .flat_map(|l| [l.weight.data.as_slice(), l.bias.as_slice()])
}

fn layer_slices_mut(layers: &mut [Layer]) -> impl Iterator<Item = &mut [f64]> {
    layers
        .iter_mut()
        .flat_map(|l| [l.weight.data.as_mut_slice(), l.bias.as_mut_slice()])
}

impl EncoderGrads {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        EncoderGrads {
            trunk: model.trunk.each_ref().map(Layer::zeros_like),
            reg_head: model.reg_head.each_ref().map(Layer::zeros_like),
            seg_head: model.seg_head.each_ref().map(Layer::zeros_like),
        }
    }

    /// Parameter slices in the canonical order shared with [`EncoderModel::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        layer_slices(&self.trunk)
            .chain(layer_slices(&self.reg_head))
            .chain(layer_slices(&self.seg_head))
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        layer_slices_mut(&mut self.trunk)
            .chain(layer_slices_mut(&mut self.reg_head))
            .chain(layer_slices_mut(&mut self.seg_head))
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for sl in self.slices_mut() {
            sl.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Cached activations of a forward pass, consumed by [`EncoderModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub n: usize,
    /// Unit-norm embeddings, `n x d`.
    pub embeddings: Matrix,
    /// Traversability head output in (0,1).
    pub t: Vec<f64>,
    /// Segmentation head probability in (0,1).
    pub s_prob: Vec<f64>,
    /// Standardised trunk inputs.
    feats: Vec<PointFeatures>,
    a1: Matrix,
    a2: Matrix,
    z_norm: Vec<f64>,
    reg_hidden: Matrix,
    seg_hidden: Matrix,
}

impl EncoderModel {
    pub fn new(shape: EncoderShape, rng: &mut crate::Rng) -> Result<Self> {
        shape.validate()?;
        let EncoderShape {
            embed_dim: d,
            hidden: h,
            head_hidden: hh,
            ..
        } = shape;
        Ok(EncoderModel {
            shape,
            input: InputNorm::default(),
            trunk: [
                Layer::new(h, FEATURE_DIM, rng),
                Layer::new(h, h, rng),
                Layer::new(d, h, rng),
            ],
            reg_head: [Layer::new(hh, d, rng), Layer::new(1, hh, rng)],
            seg_head: [Layer::new(hh, d, rng), Layer::new(1, hh, rng)],
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.shape.embed_dim
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        layer_slices(&self.trunk)
            .chain(layer_slices(&self.reg_head))
            .chain(layer_slices(&self.seg_head))
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        layer_slices_mut(&mut self.trunk)
            .chain(layer_slices_mut(&mut self.reg_head))
            .chain(layer_slices_mut(&mut self.seg_head))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Unit-norm embeddings for every feature row.
    pub fn encode(&self, feats: &[PointFeatures]) -> Result<Matrix> {
        Ok(self.forward(feats)?.embeddings)
    }

    /// Head outputs `(t, s_prob)` for given unit embeddings.
    pub fn heads(&self, embeddings: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let hh = self.shape.head_hidden;
        let mut hid = vec![0.0; hh];
        let mut t = Vec::with_capacity(embeddings.rows);
        let mut s = Vec::with_capacity(embeddings.rows);
        for i in 0..embeddings.rows {
            let x = embeddings.row(i);
            t.push(head_forward(&self.reg_head, x, &mut hid));
            s.push(head_forward(&self.seg_head, x, &mut hid));
        }
        (t, s)
    }

    /// Full forward pass with cached activations.
    pub fn forward(&self, feats: &[PointFeatures]) -> Result<ForwardPass> {
        let n = feats.len();
        let EncoderShape {
            embed_dim: d,
            hidden: h,
            head_hidden: hh,
            ..
        } = self.shape;
        let mut a1 = Matrix::zeros(n, h);
        let mut a2 = Matrix::zeros(n, h);
        let mut emb = Matrix::zeros(n, d);
        let mut z_norm = vec![0.0; n];
        let mut reg_hidden = Matrix::zeros(n, hh);
        let mut seg_hidden = Matrix::zeros(n, hh);
        let mut t = vec![0.0; n];
        let mut s = vec![0.0; n];
        let inputs: Vec<PointFeatures> = feats.iter().map(|f| self.input.apply(f)).collect();
        for (i, f) in inputs.iter().enumerate() {
            let r1 = a1.row_mut(i);
            self.trunk[0].forward(f, r1);
            r1.iter_mut().for_each(|v| *v = v.tanh());
            let r1 = a1.row(i).to_vec();
            let r2 = a2.row_mut(i);
            self.trunk[1].forward(&r1, r2);
            r2.iter_mut().for_each(|v| *v = v.tanh());
            let r2 = a2.row(i).to_vec();
            let x = emb.row_mut(i);
            self.trunk[2].forward(&r2, x);
            let norm = crate::linalg::normalize(x);
            if !(norm.is_finite() && norm > 0.0) || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "embedding pre-normalisation norm {norm} at point {i}"
                )));
            }
            z_norm[i] = norm;
            let x = emb.row(i);
            t[i] = head_forward(&self.reg_head, x, reg_hidden.row_mut(i));
            s[i] = head_forward(&self.seg_head, x, seg_hidden.row_mut(i));
        }
        Ok(ForwardPass {
            n,
            embeddings: emb,
            t,
            s_prob: s,
            feats: inputs,
            a1,
            a2,
            z_norm,
            reg_hidden,
            seg_hidden,
        })
    }

    /// Accumulates parameter gradients into `grads` given upstream gradients on
    /// the embeddings (`n x d`), on `t` and on `s_prob`. Any of the upstream
    /// inputs may be `None` for zero.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        grad_emb: Option<&Matrix>,
        grad_t: Option<&[f64]>,
        grad_s: Option<&[f64]>,
        grads: &mut EncoderGrads,
    ) {
        let EncoderShape {
            embed_dim: d,
            hidden: h,
            head_hidden: hh,
            ..
        } = self.shape;
        let mut gx = vec![0.0; d];
        let mut gz = vec![0.0; d];
        let mut g_hid = vec![0.0; hh];
        let mut g_a2 = vec![0.0; h];
        let mut g_a1 = vec![0.0; h];
        for i in 0..pass.n {
            gx.iter_mut().for_each(|v| *v = 0.0);
            if let Some(ge) = grad_emb {
                gx.copy_from_slice(ge.row(i));
            }
            let x = pass.embeddings.row(i);
            if let Some(gt) = grad_t {
                head_backward(
                    &self.reg_head,
                    &mut grads.reg_head,
                    x,
                    pass.reg_hidden.row(i),
                    pass.t[i],
                    gt[i],
                    &mut g_hid,
                    &mut gx,
                );
            }
            if let Some(gs) = grad_s {
                head_backward(
                    &self.seg_head,
                    &mut grads.seg_head,
                    x,
                    pass.seg_hidden.row(i),
                    pass.s_prob[i],
                    gs[i],
                    &mut g_hid,
                    &mut gx,
                );
            }
            if gx.iter().all(|&v| v == 0.0) {
                continue;
            }
            // x = z/|z|  =>  dL/dz = (I - x xᵀ) dL/dx / |z|
            let proj = dot(x, &gx);
            let inv = 1.0 / pass.z_norm[i];
            for k in 0..d {
                gz[k] = (gx[k] - x[k] * proj) * inv;
            }
            let a2 = pass.a2.row(i);
            grads.trunk[2].weight.add_outer(&gz, a2);
            crate::linalg::axpy(1.0, &gz, &mut grads.trunk[2].bias);
            g_a2.iter_mut().for_each(|v| *v = 0.0);
            self.trunk[2].weight.matvec_t_acc(&gz, &mut g_a2);
            for (g, a) in g_a2.iter_mut().zip(a2) {
                *g *= 1.0 - a * a;
            }
            let a1 = pass.a1.row(i);
            grads.trunk[1].weight.add_outer(&g_a2, a1);
            crate::linalg::axpy(1.0, &g_a2, &mut grads.trunk[1].bias);
            g_a1.iter_mut().for_each(|v| *v = 0.0);
            self.trunk[1].weight.matvec_t_acc(&g_a2, &mut g_a1);
            for (g, a) in g_a1.iter_mut().zip(a1) {
                *g *= 1.0 - a * a;
            }
            grads.trunk[0].weight.add_outer(&g_a1, &pass.feats[i]);
            crate::linalg::axpy(1.0, &g_a1, &mut grads.trunk[0].bias);
        }
    }
}

/// Two-layer logistic head. Writes the hidden activations into `hid`.
fn head_forward(head: &[Layer; 2], x: &[f64], hid: &mut [f64]) -> f64 {
    head[0].forward(x, hid);
    hid.iter_mut().for_each(|v| *v = v.tanh());
    sigmoid(dot(head[1].weight.row(0), hid) + head[1].bias[0])
}

#[allow(clippy::too_many_arguments)]
fn head_backward(
    head: &[Layer; 2],
    grads: &mut [Layer; 2],
    x: &[f64],
    hid: &[f64],
    out: f64,
    g_out: f64,
    g_hid: &mut [f64],
    gx: &mut [f64],
) {
    if g_out == 0.0 {
        return;
    }
    let g_logit = g_out * out * (1.0 - out);
    crate::linalg::axpy(g_logit, hid, grads[1].weight.row_mut(0));
    grads[1].bias[0] += g_logit;
    for (k, g) in g_hid.iter_mut().enumerate() {
        *g = g_logit * head[1].weight.get(0, k) * (1.0 - hid[k] * hid[k]);
    }
    grads[0].weight.add_outer(g_hid, x);
    crate::linalg::axpy(1.0, g_hid, &mut grads[0].bias);
    head[0].weight.matvec_t_acc(g_hid, gx);
}
