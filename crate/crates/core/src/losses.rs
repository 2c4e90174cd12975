//! Training objectives and their analytic gradients.
//!
//! Per-point terms:
//! - [`reg_loss`]: squared error of the traversability head.
//! - [`bce_seg_loss`]: binary cross-entropy of the baseline segmentation head.
//! - [`proxy_seg_loss`]: two-class SoftTriple loss on the proxy bank,
//!   `softplus(λ S_other - λ (S_y - δ))`.
//! - [`unsup_loss`]: the same with the frozen pseudo-class in place of `y`.
//!
//! Episode reductions ([`supervised_total`], [`proxy_total`],
//! [`traverse_loss`]) average query-positive terms over `|Q_P|`, support terms
//! over `|S|` and unlabeled terms over `|Q_U|`, with unit weights.

use crate::linalg::{axpy, Matrix};
use crate::proxybank::{pseudo_class_from, Class, ProxyBank, PseudoLabelRule, Similarity};
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 20.0;
pub const DEFAULT_DELTA: f64 = 0.01;

/// Probability clamp for the cross-entropy.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossHyper {
    pub lambda: f64,
    pub delta: f64,
    pub pseudo_rule: PseudoLabelRule,
}

impl Default for LossHyper {
    fn default() -> Self {
        LossHyper {
            lambda: DEFAULT_LAMBDA,
            delta: DEFAULT_DELTA,
            pseudo_rule: PseudoLabelRule::Soft,
        }
    }
}

impl LossHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.delta >= 0.0) {
            return Err(Error::config(format!(
                "loss hyperparameters need lambda > 0 and delta >= 0 (got {}, {})",
                self.lambda, self.delta
            )));
        }
        Ok(())
    }
}

/// Gradient buffers shaped like a [`ProxyBank`]'s proxies.
#[derive(Debug, Clone, PartialEq)]
pub struct BankGrads {
    pub positive: Matrix,
    pub negative: Matrix,
}

impl BankGrads {
    pub fn zeros_like(bank: &ProxyBank) -> Self {
        BankGrads {
            positive: Matrix::zeros(bank.k(), bank.dim()),
            negative: Matrix::zeros(bank.k(), bank.dim()),
        }
    }

    pub fn of_mut(&mut self, c: Class) -> &mut Matrix {
        match c {
            Class::Positive => &mut self.positive,
            Class::Negative => &mut self.negative,
        }
    }

    pub fn of(&self, c: Class) -> &Matrix {
        match c {
            Class::Positive => &self.positive,
            Class::Negative => &self.negative,
        }
    }

    pub fn slices(&self) -> [&[f64]; 2] {
        [&self.positive.data, &self.negative.data]
    }

    pub fn is_finite(&self) -> bool {
        self.positive.is_finite() && self.negative.is_finite()
    }
}

/// `(t - a)²` and its derivative in `t`.
pub fn reg_loss(t: f64, a: f64) -> (f64, f64) {
    let r = t - a;
    (r * r, 2.0 * r)
}

/// `-(y ln s + (1-y) ln(1-s))` with `s` clamped to `[1e-12, 1 - 1e-12]`, and
/// its derivative in `s` (zero where the clamp is active).
pub fn bce_seg_loss(s: f64, y: u8) -> (f64, f64) {
    let sc = s.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let clamped = sc != s;
    if y == 1 {
        (-sc.ln(), if clamped { 0.0 } else { -1.0 / sc })
    } else {
        (
            -(1.0 - sc).ln(),
            if clamped { 0.0 } else { 1.0 / (1.0 - sc) },
        )
    }
}

/// `ln(1 + e^z)` without overflow or cancellation.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Value and full gradients of a proxy loss for one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyLossEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_bank: BankGrads,
}

/// Accumulates `weight * dL/dx` into `gx` and `weight * dL/dp` into `gb`;
/// returns the unweighted loss.
pub(crate) fn proxy_seg_loss_acc(
    x: &[f64],
    y: Class,
    bank: &ProxyBank,
    hyper: &LossHyper,
    weight: f64,
    gx: &mut [f64],
    gb: Option<&mut BankGrads>,
) -> f64 {
    let sy = bank.similarity(x, y);
    let so = bank.similarity(x, y.other());
    accumulate(x, y, &sy, &so, bank, hyper, weight, gx, gb)
}

/// [`proxy_seg_loss_acc`] with the similarities to the target class `y`
/// (`sy`) and to the other class (`so`) already computed.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    x: &[f64],
    y: Class,
    sy: &Similarity,
    so: &Similarity,
    bank: &ProxyBank,
    hyper: &LossHyper,
    weight: f64,
    gx: &mut [f64],
    gb: Option<&mut BankGrads>,
) -> f64 {
    let a = hyper.lambda * (sy.value - hyper.delta);
    let b = hyper.lambda * so.value;
    let value = softplus(b - a);
    // q = e^b / (e^a + e^b)
    let q = crate::linalg::sigmoid(b - a);
    let d_sy = -hyper.lambda * q * weight;
    let d_so = hyper.lambda * q * weight;
    let mut gb = gb;
    for (sim, c, d_s) in [(sy, y, d_sy), (so, y.other(), d_so)] {
        let proxies = bank.proxies(c);
        for (k, &dc) in sim.dcos.iter().enumerate() {
            let g = d_s * dc;
            if g == 0.0 {
                continue;
            }
            axpy(g, proxies.row(k), gx);
            if let Some(gb) = gb.as_deref_mut() {
                axpy(g, x, gb.of_mut(c).row_mut(k));
            }
        }
    }
    value
}

/// Two-class SoftTriple segmentation loss on the proxy bank.
pub fn proxy_seg_loss(x: &[f64], y: Class, bank: &ProxyBank, hyper: &LossHyper) -> ProxyLossEval {
    let mut grad_x = vec![0.0; x.len()];
    let mut grad_bank = BankGrads::zeros_like(bank);
    let value = proxy_seg_loss_acc(x, y, bank, hyper, 1.0, &mut grad_x, Some(&mut grad_bank));
    ProxyLossEval {
        value,
        grad_x,
        grad_bank,
    }
}

/// Unsupervised loss: the proxy loss against the pseudo-class, which is held
/// constant (no gradient flows through the assignment).
pub fn unsup_loss(x: &[f64], bank: &ProxyBank, hyper: &LossHyper) -> (Class, ProxyLossEval) {
    let y_hat = bank.assign_pseudo_class(x, hyper.pseudo_rule);
    (y_hat, proxy_seg_loss(x, y_hat, bank, hyper))
}

/// Role of a point within an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Role {
    QueryPositive { target: f64 },
    QueryUnlabeled,
    Support(Class),
}

/// Forward outputs of an episode, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutputs {
    pub embeddings: Matrix,
    pub t: Vec<f64>,
    pub s_prob: Vec<f64>,
    pub roles: Vec<Role>,
}

impl EpisodeOutputs {
    fn counts(&self) -> (usize, usize, usize) {
        let mut qp = 0;
        let mut qu = 0;
        let mut s = 0;
        for r in &self.roles {
            match r {
                Role::QueryPositive { .. } => qp += 1,
                Role::QueryUnlabeled => qu += 1,
                Role::Support(_) => s += 1,
            }
        }
        (qp, qu, s)
    }
}

/// Loss values of one episode and the gradients of `total`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub reg: f64,
    pub seg_supervised: f64,
    pub seg_proxy_query: f64,
    pub seg_proxy_support: f64,
    pub unsup: f64,
    pub total: f64,
    /// `d total / d embedding`, one row per point.
    pub grad_emb: Matrix,
    pub grad_t: Vec<f64>,
    pub grad_s: Vec<f64>,
    /// `d total / d proxies`; `None` for the supervised objective.
    pub grad_bank: Option<BankGrads>,
}

impl LossBreakdown {
    fn zeros(n: usize, d: usize, bank: Option<&ProxyBank>) -> Self {
        LossBreakdown {
            reg: 0.0,
            seg_supervised: 0.0,
            seg_proxy_query: 0.0,
            seg_proxy_support: 0.0,
            unsup: 0.0,
            total: 0.0,
            grad_emb: Matrix::zeros(n, d),
            grad_t: vec![0.0; n],
            grad_s: vec![0.0; n],
            grad_bank: bank.map(BankGrads::zeros_like),
        }
    }

    /// All segmentation terms.
    pub fn seg(&self) -> f64 {
        self.seg_supervised + self.seg_proxy_query + self.seg_proxy_support
    }
}

fn require_partitions(qp: usize, s: usize) -> Result<()> {
    if qp == 0 {
        return Err(Error::data("episode has no query positives"));
    }
    if s == 0 {
        return Err(Error::data("episode has no support points"));
    }
    Ok(())
}

/// Supervised objective: regression plus BCE on query positives, BCE on support.
pub fn supervised_total(out: &EpisodeOutputs) -> Result<LossBreakdown> {
    let (qp, _, s) = out.counts();
    require_partitions(qp, s)?;
    let n = out.roles.len();
    let mut lb = LossBreakdown::zeros(n, out.embeddings.cols, None);
    let wq = 1.0 / qp as f64;
    let ws = 1.0 / s as f64;
    for (i, role) in out.roles.iter().enumerate() {
        match *role {
            Role::QueryPositive { target } => {
                let (r, gr) = reg_loss(out.t[i], target);
                let (b, gb) = bce_seg_loss(out.s_prob[i], 1);
                lb.reg += wq * r;
                lb.seg_supervised += wq * b;
                lb.grad_t[i] = wq * gr;
                lb.grad_s[i] = wq * gb;
            }
            Role::Support(c) => {
                let y = u8::from(c == Class::Positive);
                let (b, gb) = bce_seg_loss(out.s_prob[i], y);
                lb.seg_supervised += ws * b;
                lb.grad_s[i] = ws * gb;
            }
            Role::QueryUnlabeled => {}
        }
    }
    lb.total = lb.reg + lb.seg_supervised;
    Ok(lb)
}

/// Proxy objective without unlabeled data.
pub fn proxy_total(
    out: &EpisodeOutputs,
    bank: &ProxyBank,
    hyper: &LossHyper,
) -> Result<LossBreakdown> {
    proxy_objective(out, bank, hyper, false)
}

/// Full objective: [`proxy_total`] plus the mean unsupervised loss over
/// unlabeled query points (zero when there are none).
pub fn traverse_loss(
    out: &EpisodeOutputs,
    bank: &ProxyBank,
    hyper: &LossHyper,
) -> Result<LossBreakdown> {
    proxy_objective(out, bank, hyper, true)
}

fn proxy_objective(
    out: &EpisodeOutputs,
    bank: &ProxyBank,
    hyper: &LossHyper,
    with_unlabeled: bool,
) -> Result<LossBreakdown> {
    hyper.validate()?;
    let (qp, qu, s) = out.counts();
    require_partitions(qp, s)?;
    if out.embeddings.cols != bank.dim() {
        return Err(Error::data(format!(
            "embedding dimension {} differs from proxy dimension {}",
            out.embeddings.cols,
            bank.dim()
        )));
    }
    let n = out.roles.len();
    let mut lb = LossBreakdown::zeros(n, out.embeddings.cols, Some(bank));
    let mut gb = lb.grad_bank.take().expect("proxy objective has bank grads");
    let wq = 1.0 / qp as f64;
    let ws = 1.0 / s as f64;
    let wu = if qu > 0 { 1.0 / qu as f64 } else { 0.0 };
    for (i, role) in out.roles.iter().enumerate() {
        let x = out.embeddings.row(i);
        let gx = lb.grad_emb.row_mut(i);
        match *role {
            Role::QueryPositive { target } => {
                let (r, gr) = reg_loss(out.t[i], target);
                lb.reg += wq * r;
                lb.grad_t[i] = wq * gr;
                let v = proxy_seg_loss_acc(x, Class::Positive, bank, hyper, wq, gx, Some(&mut gb));
                lb.seg_proxy_query += wq * v;
            }
            Role::Support(c) => {
                let v = proxy_seg_loss_acc(x, c, bank, hyper, ws, gx, Some(&mut gb));
                lb.seg_proxy_support += ws * v;
            }
            Role::QueryUnlabeled if with_unlabeled => {
                let sp = bank.similarity(x, Class::Positive);
                let sn = bank.similarity(x, Class::Negative);
                let y_hat = pseudo_class_from(&sp, &sn, hyper.pseudo_rule);
                let (sy, so) = match y_hat {
                    Class::Positive => (&sp, &sn),
                    Class::Negative => (&sn, &sp),
                };
                let v = accumulate(x, y_hat, sy, so, bank, hyper, wu, gx, Some(&mut gb));
                lb.unsup += wu * v;
            }
            Role::QueryUnlabeled => {}
        }
    }
    lb.grad_bank = Some(gb);
    lb.total = lb.reg + lb.seg_proxy_query + lb.seg_proxy_support + lb.unsup;
    Ok(lb)
}
