//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written as plain scalar loops over the public fields of
//! the library types, without calling the library's numerical routines, so a
//! match is evidence rather than self-agreement.

#![allow(dead_code)]

use rand::Rng as _;
use travmetric::encoder::{EncoderModel, EncoderShape, PointFeatures, FEATURE_DIM};
use travmetric::linalg::Matrix;
use travmetric::losses::{EpisodeOutputs, Role};
use travmetric::proxybank::{Class, ProxyBank};

// ---------------------------------------------------------------- similarity

/// Soft class similarity: softmax-weighted mean of cosines.
pub fn soft_similarity(x: &[f64], proxies: &[Vec<f64>], temperature: f64) -> f64 {
    let cos: Vec<f64> = proxies.iter().map(|p| dot(x, p)).collect();
    let mut z = 0.0;
    for c in &cos {
        z += (c / temperature).exp();
    }
    let mut s = 0.0;
    for c in &cos {
        s += (c / temperature).exp() / z * c;
    }
    s
}

/// Derivative of the soft similarity with respect to each cosine.
pub fn soft_similarity_dcos(x: &[f64], proxies: &[Vec<f64>], temperature: f64) -> Vec<f64> {
    let cos: Vec<f64> = proxies.iter().map(|p| dot(x, p)).collect();
    let s = soft_similarity(x, proxies, temperature);
    let z: f64 = cos.iter().map(|c| (c / temperature).exp()).sum();
    cos.iter()
        .map(|c| (c / temperature).exp() / z * (1.0 + (c - s) / temperature))
        .collect()
}

/// Two-class SoftTriple value given the two similarities.
pub fn softtriple(s_y: f64, s_other: f64, lambda: f64, delta: f64) -> f64 {
    let a = (lambda * (s_y - delta)).exp();
    let b = (lambda * s_other).exp();
    -(a / (a + b)).ln()
}

/// `(dL/dS_y, dL/dS_other)` of [`softtriple`].
pub fn softtriple_grad(s_y: f64, s_other: f64, lambda: f64, delta: f64) -> (f64, f64) {
    let a = (lambda * (s_y - delta)).exp();
    let b = (lambda * s_other).exp();
    let q = b / (a + b);
    (-lambda * q, lambda * q)
}

/// Argmax over the two soft similarities, ties to Negative.
pub fn pseudo_class(x: &[f64], bank: &PlainBank) -> Class {
    let sp = soft_similarity(x, &bank.positive, bank.temperature);
    let sn = soft_similarity(x, &bank.negative, bank.temperature);
    if sp > sn {
        Class::Positive
    } else {
        Class::Negative
    }
}

/// Proxies as nested vectors.
#[derive(Debug, Clone)]
pub struct PlainBank {
    pub positive: Vec<Vec<f64>>,
    pub negative: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl PlainBank {
    pub fn of(bank: &ProxyBank) -> Self {
        PlainBank {
            positive: rows(&bank.positive),
            negative: rows(&bank.negative),
            temperature: bank.temperature,
        }
    }

    /// Copy with proxy `r` of class `c` shifted by `by` in coordinate `j`.
    pub fn nudged(&self, c: Class, r: usize, j: usize, by: f64) -> PlainBank {
        let mut b = self.clone();
        match c {
            Class::Positive => b.positive[r][j] += by,
            Class::Negative => b.negative[r][j] += by,
        }
        b
    }

    /// Central difference of `f` with respect to one proxy coordinate.
    pub fn diff(
        &self,
        c: Class,
        r: usize,
        j: usize,
        eps: f64,
        f: impl Fn(&PlainBank) -> f64,
    ) -> f64 {
        (f(&self.nudged(c, r, j, eps)) - f(&self.nudged(c, r, j, -eps))) / (2.0 * eps)
    }

    pub fn class(&self, c: Class) -> &Vec<Vec<f64>> {
        match c {
            Class::Positive => &self.positive,
            Class::Negative => &self.negative,
        }
    }
}

// ---------------------------------------------------------------- episode losses

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Supervised,
    Proxy,
    Traverse,
}

/// Per-role reference gradients of an episode objective.
#[derive(Debug, Clone)]
pub struct EpisodeGrad {
    pub total: f64,
    pub reg: f64,
    pub unsup: f64,
    pub emb: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub positive: Vec<Vec<f64>>,
    pub negative: Vec<Vec<f64>>,
}

fn bce(s: f64, y: f64) -> f64 {
    let s = s.clamp(1e-12, 1.0 - 1e-12);
    -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
}

fn class_target(c: Class) -> f64 {
    match c {
        Class::Positive => 1.0,
        Class::Negative => 0.0,
    }
}

/// Scalar-loop evaluation of an episode objective with its gradients.
///
/// `frozen` overrides the pseudo-classes of unlabeled rows (in row order of
/// the unlabeled points); `None` recomputes them from the bank.
pub fn episode_objective(
    emb: &[Vec<f64>],
    t: &[f64],
    s: &[f64],
    roles: &[Role],
    bank: &PlainBank,
    lambda: f64,
    delta: f64,
    objective: Objective,
    frozen: Option<&[Class]>,
) -> EpisodeGrad {
    let n = emb.len();
    let d = emb[0].len();
    let k = bank.positive.len();
    let n_qp = roles
        .iter()
        .filter(|r| matches!(r, Role::QueryPositive { .. }))
        .count() as f64;
    let n_qu = roles
        .iter()
        .filter(|r| matches!(r, Role::QueryUnlabeled))
        .count() as f64;
    let n_s = roles
        .iter()
        .filter(|r| matches!(r, Role::Support(_)))
        .count() as f64;

    let mut g = EpisodeGrad {
        total: 0.0,
        reg: 0.0,
        unsup: 0.0,
        emb: vec![vec![0.0; d]; n],
        t: vec![0.0; n],
        s: vec![0.0; n],
        positive: vec![vec![0.0; d]; k],
        negative: vec![vec![0.0; d]; k],
    };

    let mut unlabeled_seen = 0;
    for i in 0..n {
        let x = &emb[i];
        // (class label, weight) of the segmentation term for this row
        let seg: Option<(Class, f64, bool)> = match roles[i] {
            Role::QueryPositive { target } => {
                let r = (t[i] - target).powi(2);
                g.total += r / n_qp;
                g.reg += r / n_qp;
                g.t[i] += 2.0 * (t[i] - target) / n_qp;
                Some((Class::Positive, 1.0 / n_qp, false))
            }
            Role::Support(c) => Some((c, 1.0 / n_s, false)),
            Role::QueryUnlabeled => {
                if objective != Objective::Traverse {
                    None
                } else {
                    let c = match frozen {
                        Some(f) => f[unlabeled_seen],
                        None => pseudo_class(x, bank),
                    };
                    unlabeled_seen += 1;
                    Some((c, 1.0 / n_qu, true))
                }
            }
        };
        let Some((c, w, unsup)) = seg else { continue };
        if objective == Objective::Supervised {
            let y = class_target(c);
            g.total += w * bce(s[i], y);
            g.s[i] += w * (-(y / s[i]) + (1.0 - y) / (1.0 - s[i]));
            continue;
        }
        let (own, other) = (bank.class(c), bank.class(opposite(c)));
        let sy = soft_similarity(x, own, bank.temperature);
        let so = soft_similarity(x, other, bank.temperature);
        let v = softtriple(sy, so, lambda, delta);
        g.total += w * v;
        if unsup {
            g.unsup += w * v;
        }
        let (gy, go) = softtriple_grad(sy, so, lambda, delta);
        let dy = soft_similarity_dcos(x, own, bank.temperature);
        let d_o = soft_similarity_dcos(x, other, bank.temperature);
        for kk in 0..k {
            for j in 0..d {
                g.emb[i][j] += w * (gy * dy[kk] * own[kk][j] + go * d_o[kk] * other[kk][j]);
            }
            let (gown, goth) = match c {
                Class::Positive => (&mut g.positive, &mut g.negative),
                Class::Negative => (&mut g.negative, &mut g.positive),
            };
            for j in 0..d {
                gown[kk][j] += w * gy * dy[kk] * x[j];
            }
            for j in 0..d {
                goth[kk][j] += w * go * d_o[kk] * x[j];
            }
        }
    }
    g
}

pub fn opposite(c: Class) -> Class {
    match c {
        Class::Positive => Class::Negative,
        Class::Negative => Class::Positive,
    }
}

/// Pseudo-classes of the unlabeled rows, in row order.
pub fn frozen_pseudo(emb: &[Vec<f64>], roles: &[Role], bank: &PlainBank) -> Vec<Class> {
    emb.iter()
        .zip(roles)
        .filter(|(_, r)| matches!(r, Role::QueryUnlabeled))
        .map(|(x, _)| pseudo_class(x, bank))
        .collect()
}

// ---------------------------------------------------------------- encoder

/// Scalar-loop forward pass: unit embeddings, `t` and `s_prob`.
pub fn model_forward(
    model: &EncoderModel,
    feats: &[PointFeatures],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut emb = Vec::new();
    let mut ts = Vec::new();
    let mut ss = Vec::new();
    for f in feats {
        let mut inp = vec![0.0; FEATURE_DIM];
        for j in 0..FEATURE_DIM {
            inp[j] = (f[j] - model.input.shift[j]) * model.input.scale[j];
        }
        let h1 = dense(&model.trunk[0].weight, &model.trunk[0].bias, &inp, true);
        let h2 = dense(&model.trunk[1].weight, &model.trunk[1].bias, &h1, true);
        let z = dense(&model.trunk[2].weight, &model.trunk[2].bias, &h2, false);
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x: Vec<f64> = z.iter().map(|v| v / nz).collect();
        ts.push(head(&model.reg_head, &x));
        ss.push(head(&model.seg_head, &x));
        emb.push(x);
    }
    (emb, ts, ss)
}

fn head(layers: &[travmetric::encoder::Layer; 2], x: &[f64]) -> f64 {
    let h = dense(&layers[0].weight, &layers[0].bias, x, true);
    let o = dense(&layers[1].weight, &layers[1].bias, &h, false)[0];
    1.0 / (1.0 + (-o).exp())
}

fn dense(w: &Matrix, b: &[f64], x: &[f64], tanh: bool) -> Vec<f64> {
    let mut out = vec![0.0; w.rows];
    for r in 0..w.rows {
        let mut acc = b[r];
        for c in 0..w.cols {
            acc += w.data[r * w.cols + c] * x[c];
        }
        out[r] = if tanh { acc.tanh() } else { acc };
    }
    out
}

// ---------------------------------------------------------------- metrics

/// Traversability precision error evaluated by hand from labelled rows
/// `(gt_positive, predicted_positive, t)`.
pub fn tpe_by_hand(rows: &[(bool, bool, f64)], weight_by_t: bool) -> f64 {
    let mut tn = 0.0;
    let mut fp_w = 0.0;
    let mut fn_ = 0.0;
    for &(gt, pred, t) in rows {
        match (gt, pred) {
            (false, false) => tn += 1.0,
            (false, true) => fp_w += if weight_by_t { t } else { 1.0 - t },
            (true, false) => fn_ += 1.0,
            (true, true) => {}
        }
    }
    let den = tn + fp_w + fn_;
    if den == 0.0 {
        1.0
    } else {
        tn / den
    }
}

// ---------------------------------------------------------------- clustering

/// Minimum within-cluster sum of squares over all two-way partitions, as a
/// label vector (point 0 always in cluster 0).
pub fn brute_force_two_means(points: &[Vec<f64>]) -> Vec<usize> {
    let n = points.len();
    let d = points[0].len();
    let mut best = (f64::INFINITY, vec![0; n]);
    for mask in 0u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n)
            .map(|i| {
                if i == 0 {
                    0
                } else {
                    ((mask >> (i - 1)) & 1) as usize
                }
            })
            .collect();
        if labels.iter().all(|&l| l == 0) {
            continue;
        }
        let mut cost = 0.0;
        for c in 0..2 {
            let members: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| labels[i] == c)
                .map(|i| &points[i])
                .collect();
            let mut mean = vec![0.0; d];
            for p in &members {
                for j in 0..d {
                    mean[j] += p[j] / members.len() as f64;
                }
            }
            for p in &members {
                for j in 0..d {
                    cost += (p[j] - mean[j]).powi(2);
                }
            }
        }
        if cost < best.0 {
            best = (cost, labels);
        }
    }
    best.1
}

// ---------------------------------------------------------------- helpers

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|r| m.data[r * m.cols..(r + 1) * m.cols].to_vec())
        .collect()
}

pub fn matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_vec(rows.len(), rows[0].len(), rows.concat())
}

pub fn random_unit(d: usize, rng: &mut travmetric::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` at `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let x0 = x[i];
    x[i] = x0 + eps;
    let fp = f(x);
    x[i] = x0 - eps;
    let fm = f(x);
    x[i] = x0;
    (fp - fm) / (2.0 * eps)
}

/// A small random encoder with a non-trivial input standardisation.
pub fn random_model(d: usize, rng: &mut travmetric::Rng) -> EncoderModel {
    let shape = EncoderShape {
        k_enc: 4,
        embed_dim: d,
        hidden: 6,
        head_hidden: 4,
    };
    let mut model = EncoderModel::new(shape, rng).expect("valid shape");
    for s in model.param_slices_mut() {
        for v in s.iter_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    for j in 0..FEATURE_DIM {
        model.input.shift[j] = rng.random_range(-0.5..0.5);
        model.input.scale[j] = rng.random_range(0.5..2.0);
    }
    model
}

pub fn random_features(n: usize, rng: &mut travmetric::Rng) -> Vec<PointFeatures> {
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect()
}

/// Random roles with at least one query positive and one support point of
/// each class; `unlabeled` controls whether unlabeled rows may appear.
pub fn random_roles(n: usize, unlabeled: bool, rng: &mut travmetric::Rng) -> Vec<Role> {
    assert!(n >= 3);
    let mut roles = vec![
        Role::QueryPositive {
            target: rng.random_range(0.0..1.0),
        },
        Role::Support(Class::Positive),
        Role::Support(Class::Negative),
    ];
    while roles.len() < n {
        let pick = rng.random_range(0..if unlabeled { 4 } else { 3 });
        roles.push(match pick {
            0 => Role::QueryPositive {
                target: rng.random_range(0.0..1.0),
            },
            1 => Role::Support(Class::Positive),
            2 => Role::Support(Class::Negative),
            _ => Role::QueryUnlabeled,
        });
    }
    roles
}

pub fn outputs(emb: &[Vec<f64>], t: &[f64], s: &[f64], roles: &[Role]) -> EpisodeOutputs {
    EpisodeOutputs {
        embeddings: matrix(emb),
        t: t.to_vec(),
        s_prob: s.to_vec(),
        roles: roles.to_vec(),
    }
}
