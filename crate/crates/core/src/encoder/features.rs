use crate::pointcloud::{KnnIndex, Point};
use crate::{Error, Result};

pub const FEATURE_DIM: usize = 8;

/// Per-point raw features from the `k_enc` nearest neighbours (the point
/// itself included):
///
/// `[mean offset (3), offset std (3), height range, mean neighbour distance]`
///
/// Only offsets relative to the point enter, so features are invariant to
/// translating the cloud and to the order of neighbours.
pub type PointFeatures = [f64; FEATURE_DIM];

pub fn featurize(points: &[Point], k_enc: usize) -> Result<Vec<PointFeatures>> {
    let all: Vec<usize> = (0..points.len()).collect();
    featurize_subset(points, &all, k_enc)
}

/// Features for `indices` only, with neighbours searched in the whole cloud.
pub fn featurize_subset(
    points: &[Point],
    indices: &[usize],
    k_enc: usize,
) -> Result<Vec<PointFeatures>> {
    if k_enc == 0 {
        return Err(Error::config("k_enc must be >= 1"));
    }
    if points.len() < k_enc {
        return Err(Error::data(format!(
            "featurize: cloud has {} points, fewer than k_enc = {k_enc}",
            points.len()
        )));
    }
    let index = KnnIndex::new(points);
    indices
        .iter()
        .map(|&i| {
            let nb = index.query(&points[i], k_enc)?;
            Ok(local_features(&points[i], nb.iter().map(|&j| &points[j])))
        })
        .collect()
}

pub(crate) fn local_features<'a>(
    center: &Point,
    neighbours: impl Iterator<Item = &'a Point> + Clone,
) -> PointFeatures {
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut dist = 0.0;
    let mut zmin = f64::INFINITY;
    let mut zmax = f64::NEG_INFINITY;
    let mut k = 0usize;
    for q in neighbours {
        let o = [q[0] - center[0], q[1] - center[1], q[2] - center[2]];
        for a in 0..3 {
            sum[a] += o[a];
            sq[a] += o[a] * o[a];
        }
        dist += (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
        zmin = zmin.min(o[2]);
        zmax = zmax.max(o[2]);
        k += 1;
    }
    let kf = k as f64;
    let mut f = [0.0; FEATURE_DIM];
    for a in 0..3 {
        let mean = sum[a] / kf;
        f[a] = mean;
        f[3 + a] = (sq[a] / kf - mean * mean).max(0.0).sqrt();
    }
    f[6] = zmax - zmin;
    f[7] = dist / kf;
    f
}
