//! Collections of query, support and eval scenes on disk.
//!
//! A dataset directory holds `query/`, `support/` and `eval/`, each with
//! `scene_NNN.txt` files in the scene format. Files are read in name order.

use std::path::Path;

use rand::seq::SliceRandom;

use super::io::{load_scene, save_scene};
use super::scene::{Label, Scene, SceneKind};
use super::synthetic::{generate_synthetic_scene, SyntheticSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_query: usize,
    pub n_support: usize,
    pub n_eval: usize,
    /// Template for every scene; its `seed` is replaced per scene.
    pub scene: SyntheticSpec,
    pub seed: u64,
    /// When set, labeled support points are thinned at random so that their
    /// total is this fraction of all query points (each class keeps at least one).
    pub support_ratio: Option<f64>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_query: 20,
            n_support: 2,
            n_eval: 4,
            scene: SyntheticSpec::default(),
            seed: 1,
            support_ratio: None,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_query == 0 || self.n_support == 0 {
            return Err(Error::config(
                "dataset needs at least one query and one support scene",
            ));
        }
        if let Some(r) = self.support_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::config(format!(
                    "support_ratio must be in (0,1], got {r}"
                )));
            }
        }
        self.scene.validate()
    }

    /// Seed of scene `index` in split `role` (0 query, 1 support, 2 eval).
    fn scene_seed(&self, role: u64, index: usize) -> u64 {
        // splitmix64 finaliser over (seed, role, index)
        let mut z = self
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(role << 32)
            .wrapping_add(index as u64 + 1);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn spec_for(&self, role: u64, index: usize) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.scene_seed(role, index),
            ..self.scene.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub query: Vec<(String, Scene)>,
    pub support: Vec<(String, Scene)>,
    pub eval: Vec<(String, Scene)>,
}

fn scene_name(i: usize) -> String {
    format!("scene_{i:03}")
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let split = |role: u64, count: usize, pick: fn(super::SyntheticScenes) -> Scene| {
        (0..count)
            .map(|i| {
                Ok((
                    scene_name(i),
                    pick(generate_synthetic_scene(&spec.spec_for(role, i))?),
                ))
            })
            .collect::<Result<Vec<_>>>()
    };
    let query = split(0, spec.n_query, |s| s.query)?;
    let mut support = split(1, spec.n_support, |s| s.support)?;
    let eval = split(2, spec.n_eval, |s| s.eval)?;
    if let Some(ratio) = spec.support_ratio {
        let total_query: usize = query.iter().map(|(_, s)| s.len()).sum();
        let budget = ((total_query as f64 * ratio).round() as usize).max(2 * support.len());
        let mut rng = crate::seeded_rng(spec.scene_seed(3, 0));
        support = thin_support(support, budget, &mut rng)?;
    }
    Ok(Dataset {
        query,
        support,
        eval,
    })
}

/// Keeps `budget` labeled support points in total, spread over scenes and
/// classes in proportion to what they hold, at least one per class and scene.
fn thin_support(
    scenes: Vec<(String, Scene)>,
    budget: usize,
    rng: &mut crate::Rng,
) -> Result<Vec<(String, Scene)>> {
    let labeled: usize = scenes
        .iter()
        .map(|(_, s)| s.count(Label::Positive) + s.count(Label::Negative))
        .sum();
    if labeled <= budget {
        return Ok(scenes);
    }
    let frac = budget as f64 / labeled as f64;
    scenes
        .into_iter()
        .map(|(name, s)| {
            let mut labels = s.labels().to_vec();
            for class in [Label::Positive, Label::Negative] {
                let mut idx = s.indices_with(class);
                if idx.is_empty() {
                    continue;
                }
                let keep = ((idx.len() as f64 * frac).round() as usize).clamp(1, idx.len());
                idx.shuffle(rng);
                for &i in &idx[keep..] {
                    labels[i] = Label::Unlabeled;
                }
            }
            let trav = s.trav().to_vec();
            Ok((name, s.relabel(SceneKind::Support, labels, trav)?))
        })
        .collect()
}

impl Dataset {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (sub, scenes) in [
            ("query", &self.query),
            ("support", &self.support),
            ("eval", &self.eval),
        ] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            for (name, scene) in scenes {
                save_scene(scene, d.join(format!("{name}.txt")))?;
            }
        }
        Ok(())
    }

    /// Loads a dataset directory. A missing `eval/` yields no eval scenes.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let query = load_split(&dir.join("query"), SceneKind::Query, true)?;
        let support = load_split(&dir.join("support"), SceneKind::Support, true)?;
        let eval = load_split(&dir.join("eval"), SceneKind::Eval, false)?;
        Ok(Dataset {
            query,
            support,
            eval,
        })
    }
}

/// Loads every `*.txt` scene of a directory in file-name order.
pub fn load_split(dir: &Path, kind: SceneKind, required: bool) -> Result<Vec<(String, Scene)>> {
    if !dir.is_dir() {
        return if required {
            Err(Error::data(format!(
                "missing {kind} directory {}",
                dir.display()
            )))
        } else {
            Ok(Vec::new())
        };
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "txt"));
    paths.sort();
    if required && paths.is_empty() {
        return Err(Error::data(format!("no scene files in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, load_scene(&p, kind)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSpec {
        DatasetSpec {
            n_query: 2,
            n_support: 1,
            n_eval: 1,
            scene: SyntheticSpec {
                n_points: 600,
                ..SyntheticSpec::default()
            },
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn scenes_differ_but_regenerate_identically() {
        let a = generate_dataset(&small()).unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.query[0].1.points(), a.query[1].1.points());
        assert_ne!(a.query[0].1.points(), a.support[0].1.points());
    }

    #[test]
    fn support_ratio_thins_labels() {
        let spec = DatasetSpec {
            support_ratio: Some(0.01),
            ..small()
        };
        let d = generate_dataset(&spec).unwrap();
        let s = &d.support[0].1;
        let labeled = s.count(Label::Positive) + s.count(Label::Negative);
        assert!((10..=14).contains(&labeled), "{labeled}");
        assert!(s.count(Label::Positive) >= 1 && s.count(Label::Negative) >= 1);
    }

    #[test]
    fn save_load_round_trip() {
        let d = generate_dataset(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), d);
    }
}
