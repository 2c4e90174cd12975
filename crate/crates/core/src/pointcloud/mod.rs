//! Scenes, the line-per-point scene format, synthetic terrain generation,
//! datasets, nearest-neighbour search and episode sampling.

mod dataset;
mod episode;
mod io;
mod knn;
mod scene;
pub mod synthetic;

pub use dataset::{generate_dataset, load_split, Dataset, DatasetSpec};
pub use episode::{sample_episode, Episode, DEFAULT_N_QUERY, DEFAULT_N_SUPPORT};
pub use io::{format_scene, load_scene, parse_scene, save_scene};
pub use knn::{knn, KnnIndex, EXHAUSTIVE_THRESHOLD};
pub use scene::{Label, Point, Scene, SceneKind};
pub use synthetic::{generate_synthetic_scene, SyntheticScenes, SyntheticSpec};
