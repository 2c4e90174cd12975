use rand::Rng as _;

use super::knn::KnnIndex;
use super::scene::{Label, Point, Scene};
use crate::{Error, Result};

pub const DEFAULT_N_QUERY: usize = 2048;
pub const DEFAULT_N_SUPPORT: usize = 512;

/// One training unit: a KNN patch of a query scene and a class-balanced
/// support sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub query_scene_id: usize,
    pub support_scene_id: usize,
    pub query_indices: Vec<usize>,
    pub support_indices: Vec<usize>,
}

/// Samples an episode.
///
/// The query patch is the `n_query` nearest neighbours of a uniformly drawn
/// query point. The support sample is `n_support / 2` nearest Positive points
/// around a random Positive seed plus as many nearest Negative points around a
/// random Negative seed. Sizes are clamped to what the scenes hold.
pub fn sample_episode(
    query: &Scene,
    query_scene_id: usize,
    support: &Scene,
    support_scene_id: usize,
    n_query: usize,
    n_support: usize,
    rng: &mut crate::Rng,
) -> Result<Episode> {
    if query.is_empty() || support.is_empty() {
        return Err(Error::data("episode sampling needs non-empty scenes"));
    }
    if n_support < 2 || !n_support.is_multiple_of(2) {
        return Err(Error::config(format!(
            "n_support must be even and >= 2, got {n_support}"
        )));
    }
    if n_query == 0 {
        return Err(Error::config("n_query must be >= 1"));
    }
    let pos = support.indices_with(Label::Positive);
    let neg = support.indices_with(Label::Negative);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::data(format!(
            "support scene {support_scene_id} lacks a class ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }

    let q_center = query.points()[rng.random_range(0..query.len())];
    let query_indices = KnnIndex::new(query.points()).query(&q_center, n_query.min(query.len()))?;

    let half = n_support / 2;
    let mut support_indices = class_patch(support.points(), &pos, half, rng)?;
    support_indices.extend(class_patch(support.points(), &neg, half, rng)?);

    Ok(Episode {
        query_scene_id,
        support_scene_id,
        query_indices,
        support_indices,
    })
}

/// `k` nearest members of `subset` around a random member of `subset`.
fn class_patch(
    points: &[Point],
    subset: &[usize],
    k: usize,
    rng: &mut crate::Rng,
) -> Result<Vec<usize>> {
    let sub: Vec<Point> = subset.iter().map(|&i| points[i]).collect();
    let center = sub[rng.random_range(0..sub.len())];
    let local = KnnIndex::new(&sub).query(&center, k.min(sub.len()))?;
    Ok(local.into_iter().map(|j| subset[j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::SceneKind;

    fn support_pair() -> Scene {
        Scene::new(
            SceneKind::Support,
            vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![Label::Positive, Label::Unlabeled, Label::Negative],
            vec![None; 3],
        )
        .unwrap()
    }

    fn query_line(n: usize) -> Scene {
        Scene::new(
            SceneKind::Query,
            (0..n).map(|i| [i as f64, 0.0, 0.0]).collect(),
            vec![Label::Unlabeled; n],
            vec![None; n],
        )
        .unwrap()
    }

    #[test]
    fn minimal_support_includes_both() {
        let mut rng = crate::seeded_rng(0);
        let ep = sample_episode(&query_line(5), 0, &support_pair(), 0, 3, 2, &mut rng).unwrap();
        assert_eq!(ep.support_indices, vec![0, 2]);
    }

    #[test]
    fn full_query_when_sizes_match() {
        let mut rng = crate::seeded_rng(0);
        let ep = sample_episode(&query_line(7), 0, &support_pair(), 0, 7, 2, &mut rng).unwrap();
        let mut q = ep.query_indices.clone();
        q.sort();
        assert_eq!(q, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn missing_class_is_error() {
        let s = Scene::new(
            SceneKind::Support,
            vec![[0.0; 3]],
            vec![Label::Positive],
            vec![None],
        )
        .unwrap();
        let mut rng = crate::seeded_rng(0);
        assert!(sample_episode(&query_line(3), 0, &s, 0, 3, 2, &mut rng).is_err());
    }

    #[test]
    fn odd_support_size_rejected() {
        let mut rng = crate::seeded_rng(0);
        assert!(sample_episode(&query_line(3), 0, &support_pair(), 0, 3, 3, &mut rng).is_err());
    }
}
