//! Spherical Gaussian mixture EM (soft k-means) for support prototypes.
//!
//! Mixing weights are uniform and the variance is isotropic and fixed for the
//! whole run, so EM reduces to soft k-means and the negative log-likelihood
//! cannot increase between iterations.

use crate::linalg::{normalize, Matrix};
use crate::{Error, Result};

use super::bank::Class;

pub const DEFAULT_M: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    /// Fixed per-coordinate variance as a fraction of the data's mean
    /// per-coordinate variance around its centroid.
    pub variance_scale: f64,
    /// Centres whose final mass is below this share of the average cluster
    /// mass `n / M` are left out by [`EmFit::significant_centers`].
    pub min_share: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 50,
            tol: 1e-9,
            variance_scale: 0.1,
            min_share: 0.25,
        }
    }
}

/// Unit-norm cluster centres of support embeddings, `M x d` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub positive: Matrix,
    pub negative: Matrix,
}

impl Prototypes {
    pub fn of(&self, c: Class) -> &Matrix {
        match c {
            Class::Positive => &self.positive,
            Class::Negative => &self.negative,
        }
    }
}

/// Result of one EM run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    /// Unit-norm centres, `M x d`.
    pub centers: Matrix,
    /// Centres before the final normalisation.
    pub raw_centers: Matrix,
    /// Negative log-likelihood at the initial centres and after every M-step.
    pub objective: Vec<f64>,
    /// Hard assignment (argmax responsibility) of every point at the end.
    pub assignment: Vec<usize>,
    /// Total responsibility of every centre at the end.
    pub mass: Vec<f64>,
    pub variance: f64,
}

impl EmFit {
    /// Unit centres carrying at least `min_share * n / M` mass. Farthest-point
    /// seeding tends to spend centres on isolated outliers; those end up with
    /// almost no mass and are dropped here. The heaviest centre is always kept.
    pub fn significant_centers(&self, min_share: f64) -> Matrix {
        let m = self.mass.len();
        let total: f64 = self.mass.iter().sum();
        let floor = min_share * total / m as f64;
        let heaviest = (0..m).fold(0, |b, j| if self.mass[j] > self.mass[b] { j } else { b });
        let keep: Vec<usize> = (0..m)
            .filter(|&j| j == heaviest || self.mass[j] >= floor)
            .collect();
        let data = keep
            .iter()
            .flat_map(|&j| self.centers.row(j).to_vec())
            .collect();
        Matrix::from_vec(keep.len(), self.centers.cols, data)
    }
}

/// Fits `m` centres to the rows of `points`.
pub fn em_prototypes(points: &Matrix, m: usize, cfg: &EmConfig) -> Result<EmFit> {
    let n = points.rows;
    let d = points.cols;
    if m == 0 {
        return Err(Error::config("EM needs M >= 1"));
    }
    if n < m {
        return Err(Error::data(format!(
            "EM needs at least M = {m} points, got {n}"
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        crate::linalg::axpy(1.0 / n as f64, points.row(i), &mut mean);
    }
    let spread: f64 = (0..n).map(|i| sq_dist(points.row(i), &mean)).sum::<f64>() / (n * d) as f64;
    let variance = (cfg.variance_scale * spread).max(1e-12);

    let mut centers = farthest_point_seeds(points, &mean, m);
    let mut resp = Matrix::zeros(n, m);
    let mut objective = vec![e_step(points, &centers, variance, &mut resp)];
    for _ in 0..cfg.max_iters {
        m_step(points, &resp, &mut centers);
        let obj = e_step(points, &centers, variance, &mut resp);
        let prev = *objective.last().expect("non-empty");
        objective.push(obj);
        if prev - obj <= cfg.tol * prev.abs().max(1.0) {
            break;
        }
    }
    let assignment = (0..n)
        .map(|i| {
            let r = resp.row(i);
            (0..m).fold(0, |b, j| if r[j] > r[b] { j } else { b })
        })
        .collect();
    let mut mass = vec![0.0; m];
    for i in 0..n {
        crate::linalg::axpy(1.0, resp.row(i), &mut mass);
    }
    let raw_centers = centers.clone();
    for j in 0..m {
        normalize(centers.row_mut(j));
    }
    Ok(EmFit {
        centers,
        raw_centers,
        objective,
        assignment,
        mass,
        variance,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// First seed is the point closest to the mean, then repeatedly the point
/// farthest from all chosen seeds. Ties go to the lower index.
fn farthest_point_seeds(points: &Matrix, mean: &[f64], m: usize) -> Matrix {
    let n = points.rows;
    let first = (0..n).fold(0, |b, i| {
        if sq_dist(points.row(i), mean) < sq_dist(points.row(b), mean) {
            i
        } else {
            b
        }
    });
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < m {
        let next = (0..n).fold(0, |b, i| if min_d[i] > min_d[b] { i } else { b });
        chosen.push(next);
        for i in 0..n {
            min_d[i] = min_d[i].min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let data = chosen
        .iter()
        .flat_map(|&i| points.row(i).to_vec())
        .collect();
    Matrix::from_vec(m, points.cols, data)
}

/// Fills responsibilities and returns the negative log-likelihood.
fn e_step(points: &Matrix, centers: &Matrix, variance: f64, resp: &mut Matrix) -> f64 {
    let m = centers.rows;
    let d = points.cols as f64;
    let log_norm = -(m as f64).ln() - 0.5 * d * (2.0 * std::f64::consts::PI * variance).ln();
    let mut nll = 0.0;
    let mut logp = vec![0.0; m];
    for i in 0..points.rows {
        let x = points.row(i);
        for (j, lp) in logp.iter_mut().enumerate() {
            *lp = log_norm - sq_dist(x, centers.row(j)) / (2.0 * variance);
        }
        let mx = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logp.iter().map(|&l| (l - mx).exp()).sum();
        let lse = mx + z.ln();
        nll -= lse;
        let r = resp.row_mut(i);
        for (rj, &l) in r.iter_mut().zip(&logp) {
            *rj = (l - lse).exp();
        }
    }
    nll
}

/// Centres become responsibility-weighted means. A centre with no mass keeps
/// its position.
fn m_step(points: &Matrix, resp: &Matrix, centers: &mut Matrix) {
    let m = centers.rows;
    let d = points.cols;
    let mut acc = Matrix::zeros(m, d);
    let mut mass = vec![0.0; m];
    for i in 0..points.rows {
        let x = points.row(i);
        for j in 0..m {
            let r = resp.get(i, j);
            if r > 0.0 {
                mass[j] += r;
                crate::linalg::axpy(r, x, acc.row_mut(j));
            }
        }
    }
    for j in 0..m {
        if mass[j] > 0.0 {
            let inv = 1.0 / mass[j];
            for (c, a) in centers.row_mut(j).iter_mut().zip(acc.row(j)) {
                *c = a * inv;
            }
        }
    }
}
