use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::em::Prototypes;
use crate::linalg::{dot, normalize, Matrix};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 128;
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Positive,
    Negative,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::Positive, Class::Negative];

    pub fn other(self) -> Class {
        match self {
            Class::Positive => Class::Negative,
            Class::Negative => Class::Positive,
        }
    }

    /// `y = 1` for Positive.
    pub fn from_target(y: u8) -> Class {
        if y == 1 {
            Class::Positive
        } else {
            Class::Negative
        }
    }
}

/// Address of a single proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProxyId {
    pub class: Class,
    pub index: usize,
}

/// How a pseudo-class is chosen for unlabeled embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PseudoLabelRule {
    /// `argmax_c S_c` with the soft similarity.
    #[default]
    Soft,
    /// Class of the single most similar proxy.
    Hard,
}

/// Class similarity together with `dS/d(xᵀp_k)` for each proxy of the class.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    pub value: f64,
    pub dcos: Vec<f64>,
    /// Cosines `xᵀp_k`.
    pub cos: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyBank {
    pub temperature: f64,
    pub positive: Matrix,
    pub negative: Matrix,
    membership: Vec<u64>,
    counted: bool,
}

/// Pseudo-class from already computed class similarities. `Soft` compares
/// `S_P` with `S_N`, `Hard` the single most similar proxy of each class.
/// Ties go to Negative.
pub(crate) fn pseudo_class_from(sp: &Similarity, sn: &Similarity, rule: PseudoLabelRule) -> Class {
    let (a, b) = match rule {
        PseudoLabelRule::Soft => (sp.value, sn.value),
        PseudoLabelRule::Hard => {
            let best = |s: &Similarity| s.cos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (best(sp), best(sn))
        }
    };
    if a > b {
        Class::Positive
    } else {
        Class::Negative
    }
}

impl ProxyBank {
    /// `2K` i.i.d. standard-normal proxies, each L2-normalised.
    pub fn init(k: usize, dim: usize, temperature: f64, rng: &mut crate::Rng) -> Result<Self> {
        if k == 0 || dim < 2 {
            return Err(Error::config(format!(
                "proxy bank needs K >= 1 and d >= 2 (got K = {k}, d = {dim})"
            )));
        }
        if !(temperature > 0.0) {
            return Err(Error::config("temperature must be > 0"));
        }
        let mut positive = Matrix::standard_normal(k, dim, rng);
        let mut negative = Matrix::standard_normal(k, dim, rng);
        for m in [&mut positive, &mut negative] {
            for r in 0..k {
                normalize(m.row_mut(r));
            }
        }
        Ok(ProxyBank {
            temperature,
            positive,
            negative,
            membership: vec![0; 2 * k],
            counted: false,
        })
    }

    /// Wraps explicit proxy matrices. Rows are used as given.
    pub fn from_proxies(positive: Matrix, negative: Matrix, temperature: f64) -> Result<Self> {
        if positive.rows != negative.rows || positive.cols != negative.cols || positive.rows == 0 {
            return Err(Error::data(
                "proxy matrices must be non-empty and equally shaped",
            ));
        }
        if !(temperature > 0.0) {
            return Err(Error::config("temperature must be > 0"));
        }
        let k = positive.rows;
        Ok(ProxyBank {
            temperature,
            positive,
            negative,
            membership: vec![0; 2 * k],
            counted: false,
        })
    }

    pub fn k(&self) -> usize {
        self.positive.rows
    }

    pub fn dim(&self) -> usize {
        self.positive.cols
    }

    pub fn proxies(&self, c: Class) -> &Matrix {
        match c {
            Class::Positive => &self.positive,
            Class::Negative => &self.negative,
        }
    }

    pub fn proxies_mut(&mut self, c: Class) -> &mut Matrix {
        match c {
            Class::Positive => &mut self.positive,
            Class::Negative => &mut self.negative,
        }
    }

    pub fn proxy(&self, id: ProxyId) -> &[f64] {
        self.proxies(id.class).row(id.index)
    }

    /// `S_c = Σ_k softmax_k(xᵀp_k / T) xᵀp_k`.
    pub fn class_similarity(&self, x: &[f64], c: Class) -> f64 {
        self.similarity(x, c).value
    }

    /// Similarity and its derivative with respect to each cosine:
    /// `dS/dc_k = w_k (1 + (c_k - S) / T)`.
    pub fn similarity(&self, x: &[f64], c: Class) -> Similarity {
        let p = self.proxies(c);
        let cos: Vec<f64> = (0..p.rows).map(|k| dot(x, p.row(k))).collect();
        let t = self.temperature;
        let m = cos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = cos.iter().map(|&c| ((c - m) / t).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
        let value: f64 = w.iter().zip(&cos).map(|(a, b)| a * b).sum();
        let dcos = w
            .iter()
            .zip(&cos)
            .map(|(&wk, &ck)| wk * (1.0 + (ck - value) / t))
            .collect();
        Similarity { value, dcos, cos }
    }

    /// Pseudo-class for an unlabeled embedding. Ties go to Negative.
    pub fn assign_pseudo_class(&self, x: &[f64], rule: PseudoLabelRule) -> Class {
        let sp = self.similarity(x, Class::Positive);
        let sn = self.similarity(x, Class::Negative);
        pseudo_class_from(&sp, &sn, rule)
    }

    /// Most similar proxy over all `2K`; ties go to Positive, then lower index.
    pub fn nearest_proxy(&self, x: &[f64]) -> ProxyId {
        let mut best = ProxyId {
            class: Class::Positive,
            index: 0,
        };
        let mut best_cos = f64::NEG_INFINITY;
        for c in Class::BOTH {
            let p = self.proxies(c);
            for k in 0..p.rows {
                let v = dot(x, p.row(k));
                if v > best_cos {
                    best_cos = v;
                    best = ProxyId { class: c, index: k };
                }
            }
        }
        best
    }

    fn slot(&self, id: ProxyId) -> usize {
        match id.class {
            Class::Positive => id.index,
            Class::Negative => self.k() + id.index,
        }
    }

    pub fn membership(&self, id: ProxyId) -> u64 {
        self.membership[self.slot(id)]
    }

    /// Counters in slot order: Positive proxies, then Negative.
    pub fn membership_counts(&self) -> &[u64] {
        &self.membership
    }

    pub fn reset_membership(&mut self) {
        self.membership.iter_mut().for_each(|c| *c = 0);
        self.counted = false;
    }

    /// Adds one membership to the nearest proxy of every embedding row.
    pub fn count_membership(&mut self, embeddings: &Matrix) {
        for i in 0..embeddings.rows {
            let s = self.slot(self.nearest_proxy(embeddings.row(i)));
            self.membership[s] += 1;
        }
        self.counted = true;
    }

    /// Proxies with zero membership since the last reset. Empty until at
    /// least one counting pass has run.
    pub fn empty_proxies(&self) -> Vec<ProxyId> {
        if !self.counted {
            return Vec::new();
        }
        let k = self.k();
        Class::BOTH
            .into_iter()
            .flat_map(|class| (0..k).map(move |index| ProxyId { class, index }))
            .filter(|&id| self.membership(id) == 0)
            .collect()
    }

    /// Replaces every empty proxy of class `c` by a uniformly chosen prototype
    /// of class `c` plus `N(0, sigma²)` per coordinate, re-normalised. With
    /// `sigma == 0` the prototype is copied verbatim. Membership is reset.
    /// Returns the replaced proxies.
    pub fn reinit_empty(
        &mut self,
        prototypes: &Prototypes,
        sigma: f64,
        rng: &mut crate::Rng,
    ) -> Result<Vec<ProxyId>> {
        let empty = self.empty_proxies();
        if empty.is_empty() {
            return Ok(empty);
        }
        if prototypes.positive.cols != self.dim() || prototypes.negative.cols != self.dim() {
            return Err(Error::data(
                "prototype dimension differs from proxy dimension",
            ));
        }
        let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::config(e.to_string()))?;
        for &id in &empty {
            let mu = prototypes.of(id.class);
            if mu.rows == 0 {
                return Err(Error::data(format!("no prototypes for {:?}", id.class)));
            }
            let m = rng.random_range(0..mu.rows);
            let src = mu.row(m).to_vec();
            let dst = self.proxies_mut(id.class).row_mut(id.index);
            dst.copy_from_slice(&src);
            if sigma > 0.0 {
                for v in dst.iter_mut() {
                    *v += noise.sample(rng);
                }
                normalize(dst);
            }
        }
        self.reset_membership();
        Ok(empty)
    }

    /// Projects every proxy back onto the unit sphere.
    pub fn renormalize(&mut self) {
        for c in Class::BOTH {
            let p = self.proxies_mut(c);
            for r in 0..p.rows {
                normalize(p.row_mut(r));
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positive.is_finite() && self.negative.is_finite()
    }

    /// `[positive, negative]` data, the canonical parameter order.
    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.positive.data.as_mut_slice(),
            self.negative.data.as_mut_slice(),
        ]
    }

    /// Cosines between every pair of proxies, rows and columns in slot order.
    pub fn pairwise_cosines(&self) -> Matrix {
        let k = self.k();
        let all: Vec<&[f64]> = (0..k)
            .map(|i| self.positive.row(i))
            .chain((0..k).map(|i| self.negative.row(i)))
            .collect();
        let mut out = Matrix::zeros(2 * k, 2 * k);
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                out.set(i, j, dot(a, b));
            }
        }
        out
    }
}
