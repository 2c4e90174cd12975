//! Procedural off-road terrain scenes.
//!
//! A scene is a rolling height field crossed by a robot path, with trees,
//! rocks, bushes and walls scattered off the path. Every generated triple
//! shares one point set:
//!
//! - the eval scene labels ground Positive and obstacles Negative;
//! - the query scene labels only path ground Positive, with traversability
//!   `1 - rescaled local height variance`, and leaves the rest unlabeled;
//! - the support scene labels the path core Positive and obstacle cores
//!   Negative, leaving a boundary band unlabeled.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::knn::KnnIndex;
use super::scene::{Label, Point, Scene, SceneKind};
use crate::{Error, Result};

/// Neighbourhood used for the roughness estimate behind traversability.
const ROUGHNESS_NEIGHBOURS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Side length of the square scene, metres.
    pub extent: f64,
    pub n_points: usize,
    /// Baseline per-point height noise (std, metres).
    pub roughness: f64,
    /// Additional noise std modulated by a smooth spatial field.
    pub roughness_variation: f64,
    /// Amplitude of the low-frequency hills.
    pub hill_amplitude: f64,
    /// Number of distinct ground textures laid out as stripes along x (1..=4).
    pub ground_kinds: usize,
    pub n_trees: usize,
    pub n_rocks: usize,
    pub n_bushes: usize,
    pub n_walls: usize,
    /// Share of all points spent on obstacles when any exist.
    pub obstacle_fraction: f64,
    pub path_width: f64,
    /// Width of the unlabeled band at the edge of evident support regions.
    pub support_band: f64,
    /// Fraction by which height noise is reduced on the path, in [0,1]. A
    /// positive value makes the traversed trail smoother than its surroundings.
    pub trail_smoothing: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            extent: 24.0,
            n_points: 5000,
            roughness: 0.01,
            roughness_variation: 0.04,
            hill_amplitude: 0.6,
            ground_kinds: 1,
            n_trees: 2,
            n_rocks: 2,
            n_bushes: 1,
            n_walls: 0,
            obstacle_fraction: 0.3,
            path_width: 3.0,
            support_band: 0.3,
            trail_smoothing: 0.0,
            seed: 1,
        }
    }
}

/// Centre line of the robot path, `y = c(x)`, and its width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCurve {
    pub offset: f64,
    pub amplitude: f64,
    pub wavenumber: f64,
    pub phase: f64,
    pub width: f64,
}

impl PathCurve {
    pub fn center_y(&self, x: f64) -> f64 {
        self.offset + self.amplitude * (self.wavenumber * x + self.phase).sin()
    }

    /// Vertical offset from the centre line.
    pub fn lateral(&self, x: f64, y: f64) -> f64 {
        (y - self.center_y(x)).abs()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.lateral(x, y) <= self.width / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleKind {
    Tree,
    Rock,
    Bush,
    Wall,
}

#[derive(Debug, Clone)]
struct Obstacle {
    kind: ObstacleKind,
    center: [f64; 2],
    /// Horizontal clearance radius.
    radius: f64,
    base: f64,
    size: [f64; 3],
    yaw: f64,
}

#[derive(Debug, Clone)]
struct Terrain {
    extent: f64,
    hills: [(f64, f64, f64, f64); 3],
    rough_phase: [f64; 2],
    ground_kinds: usize,
}

impl Terrain {
    fn kind_at(&self, x: f64) -> usize {
        let stripe = self.extent / self.ground_kinds as f64;
        ((x / stripe).floor().max(0.0) as usize).min(self.ground_kinds - 1)
    }

    /// Smooth ground height without per-point noise.
    fn height(&self, x: f64, y: f64) -> f64 {
        let mut h = 0.0;
        for &(amp, kx, ky, ph) in &self.hills {
            h += amp * (kx * x + ky * y + ph).sin();
        }
        let stripe = self.extent / self.ground_kinds as f64;
        let x0 = self.kind_at(x) as f64 * stripe;
        h + match self.kind_at(x) {
            0 => 0.0,
            // gravel: short-wavelength bumps
            1 => 0.05 * (5.0 * x).sin() * (5.0 * y).sin(),
            // ramp: tent-shaped tilt, continuous at the stripe edges
            2 => 0.35 * (x - x0).min(x0 + stripe - x),
            // furrows across the stripe
            _ => 0.12 * (2.5 * y).sin(),
        }
    }

    /// Roughness modulation in [0,1].
    fn roughness_field(&self, x: f64, y: f64) -> f64 {
        let k = 2.0 * PI / self.extent;
        0.5 + 0.5
            * (1.5 * k * x + self.rough_phase[0]).sin()
            * (1.5 * k * y + self.rough_phase[1]).cos()
    }
}

/// The three labelings of one generated point set.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenes {
    pub query: Scene,
    pub support: Scene,
    pub eval: Scene,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::config("synthetic n_points must be > 0"));
        }
        if !(self.extent > 0.0) {
            return Err(Error::config("synthetic extent must be > 0"));
        }
        if !(1..=4).contains(&self.ground_kinds) {
            return Err(Error::config("ground_kinds must be in 1..=4"));
        }
        if !(0.0..1.0).contains(&self.obstacle_fraction) {
            return Err(Error::config("obstacle_fraction must be in [0,1)"));
        }
        if !(self.path_width > 0.0) || self.path_width >= self.extent {
            return Err(Error::config("path_width must be in (0, extent)"));
        }
        if !(0.0..=1.0).contains(&self.trail_smoothing) {
            return Err(Error::config("trail_smoothing must be in [0,1]"));
        }
        if self.support_band < 0.0 || self.roughness < 0.0 || self.roughness_variation < 0.0 {
            return Err(Error::config("band and roughness parameters must be >= 0"));
        }
        Ok(())
    }

    pub fn n_obstacles(&self) -> usize {
        self.n_trees + self.n_rocks + self.n_bushes + self.n_walls
    }

    /// The path drawn for this seed. Depends only on `seed`, `extent` and `path_width`.
    pub fn path(&self) -> PathCurve {
        let mut rng = crate::seeded_rng(self.seed ^ 0x9a7b_11c3_5d2e_0f41);
        let e = self.extent;
        PathCurve {
            offset: e * rng.random_range(0.4..0.6),
            amplitude: e * rng.random_range(0.05..0.15),
            wavenumber: 2.0 * PI / e * rng.random_range(0.5..1.25),
            phase: rng.random_range(0.0..2.0 * PI),
            width: self.path_width,
        }
    }
}

pub fn generate_synthetic_scene(spec: &SyntheticSpec) -> Result<SyntheticScenes> {
    spec.validate()?;
    let mut rng = crate::seeded_rng(spec.seed);
    let e = spec.extent;
    let path = spec.path();

    let mut hills = [(0.0, 0.0, 0.0, 0.0); 3];
    for (i, h) in hills.iter_mut().enumerate() {
        let k = 2.0 * PI / e * (i + 1) as f64 * 0.5;
        let dir: f64 = rng.random_range(0.0..2.0 * PI);
        *h = (
            spec.hill_amplitude / (i + 1) as f64,
            k * dir.cos(),
            k * dir.sin(),
            rng.random_range(0.0..2.0 * PI),
        );
    }
    let terrain = Terrain {
        extent: e,
        hills,
        rough_phase: [
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
        ],
        ground_kinds: spec.ground_kinds,
    };

    let obstacles = place_obstacles(spec, &terrain, &path, &mut rng);

    let n_obstacle_pts = if obstacles.is_empty() {
        0
    } else {
        ((spec.n_points as f64 * spec.obstacle_fraction).round() as usize).min(spec.n_points - 1)
    };
    let n_ground = spec.n_points - n_obstacle_pts;

    let mut points: Vec<Point> = Vec::with_capacity(spec.n_points);
    let mut is_obstacle: Vec<bool> = Vec::with_capacity(spec.n_points);
    let mut height_above: Vec<f64> = Vec::with_capacity(spec.n_points);

    // ground, rejecting samples under an obstacle footprint
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    while points.len() < n_ground {
        let x = rng.random_range(0.0..e);
        let y = rng.random_range(0.0..e);
        if obstacles.iter().any(|o| under_footprint(o, x, y)) {
            continue;
        }
        let mut sd = spec.roughness + spec.roughness_variation * terrain.roughness_field(x, y);
        if path.contains(x, y) {
            sd *= 1.0 - spec.trail_smoothing;
        }
        let z = terrain.height(x, y) + sd * unit.sample(&mut rng);
        points.push([x, y, z]);
        is_obstacle.push(false);
        height_above.push(0.0);
    }

    // obstacles share the remaining budget evenly
    for (oi, o) in obstacles.iter().enumerate() {
        let share =
            n_obstacle_pts / obstacles.len() + usize::from(oi < n_obstacle_pts % obstacles.len());
        for _ in 0..share {
            let (p, above) = sample_obstacle_point(o, &mut rng);
            points.push(p);
            is_obstacle.push(true);
            height_above.push(above);
        }
    }

    let n = points.len();
    let in_path: Vec<bool> = (0..n)
        .map(|i| !is_obstacle[i] && path.contains(points[i][0], points[i][1]))
        .collect();

    let trav = path_traversability(&points, &is_obstacle, &in_path);

    let eval_labels: Vec<Label> = is_obstacle
        .iter()
        .map(|&o| if o { Label::Negative } else { Label::Positive })
        .collect();

    let query_labels: Vec<Label> = in_path
        .iter()
        .map(|&p| if p { Label::Positive } else { Label::Unlabeled })
        .collect();
    let query_trav: Vec<Option<f64>> = (0..n).map(|i| in_path[i].then(|| trav[i])).collect();

    let core_half_width = (spec.path_width / 2.0 - spec.support_band).max(0.0);
    let support_labels: Vec<Label> = (0..n)
        .map(|i| {
            let p = points[i];
            if is_obstacle[i] {
                if height_above[i] >= spec.support_band {
                    Label::Negative
                } else {
                    Label::Unlabeled
                }
            } else if in_path[i] && path.lateral(p[0], p[1]) <= core_half_width {
                Label::Positive
            } else {
                Label::Unlabeled
            }
        })
        .collect();

    let eval = Scene::new(SceneKind::Eval, points.clone(), eval_labels, vec![None; n])?;
    let query = Scene::new(SceneKind::Query, points.clone(), query_labels, query_trav)?;
    let support = Scene::new(SceneKind::Support, points, support_labels, vec![None; n])?;
    Ok(SyntheticScenes {
        query,
        support,
        eval,
    })
}

fn place_obstacles(
    spec: &SyntheticSpec,
    terrain: &Terrain,
    path: &PathCurve,
    rng: &mut crate::Rng,
) -> Vec<Obstacle> {
    let kinds = std::iter::repeat_n(ObstacleKind::Tree, spec.n_trees)
        .chain(std::iter::repeat_n(ObstacleKind::Rock, spec.n_rocks))
        .chain(std::iter::repeat_n(ObstacleKind::Bush, spec.n_bushes))
        .chain(std::iter::repeat_n(ObstacleKind::Wall, spec.n_walls));
    let e = spec.extent;
    let mut out: Vec<Obstacle> = Vec::new();
    for kind in kinds {
        let (size, radius) = match kind {
            ObstacleKind::Tree => {
                let h = rng.random_range(3.0..5.0);
                let crown = rng.random_range(0.9..1.4);
                ([0.2, crown, h], crown)
            }
            ObstacleKind::Rock => {
                let a: f64 = rng.random_range(0.6..1.0);
                let b = rng.random_range(0.6..1.0);
                let c = rng.random_range(0.5..0.9);
                ([a, b, c], a.max(b))
            }
            ObstacleKind::Bush => {
                let r = rng.random_range(0.7..1.0);
                ([r, r, rng.random_range(0.5..0.8)], r)
            }
            ObstacleKind::Wall => {
                let l = rng.random_range(1.5..2.5);
                ([l, 0.3, rng.random_range(1.0..1.5)], l / 2.0 + 0.2)
            }
        };
        let margin = radius + 0.5;
        let mut center = [e / 2.0, e / 2.0];
        for attempt in 0..10_000 {
            let x = rng.random_range(margin.min(e / 2.0)..(e - margin).max(e / 2.0 + 1e-9));
            let y = rng.random_range(margin.min(e / 2.0)..(e - margin).max(e / 2.0 + 1e-9));
            let clear_path = path.lateral(x, y) > path.width / 2.0 + radius + 0.5;
            let clear_others = out.iter().all(|o| {
                let d = ((o.center[0] - x).powi(2) + (o.center[1] - y).powi(2)).sqrt();
                d > o.radius + radius + 0.3
            });
            center = [x, y];
            if clear_path && (clear_others || attempt > 5_000) {
                break;
            }
        }
        out.push(Obstacle {
            kind,
            center,
            radius,
            base: terrain.height(center[0], center[1]),
            size,
            yaw: rng.random_range(0.0..PI),
        });
    }
    out
}

fn under_footprint(o: &Obstacle, x: f64, y: f64) -> bool {
    let dx = x - o.center[0];
    let dy = y - o.center[1];
    match o.kind {
        ObstacleKind::Tree => dx * dx + dy * dy < o.size[0] * o.size[0],
        ObstacleKind::Rock => (dx / o.size[0]).powi(2) + (dy / o.size[1]).powi(2) < 1.0,
        ObstacleKind::Bush => dx * dx + dy * dy < (0.6 * o.size[0]).powi(2),
        ObstacleKind::Wall => {
            let (s, c) = o.yaw.sin_cos();
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            u.abs() < o.size[0] / 2.0 && v.abs() < o.size[1] / 2.0
        }
    }
}

/// One obstacle surface or volume sample and its height above the obstacle base.
fn sample_obstacle_point(o: &Obstacle, rng: &mut crate::Rng) -> (Point, f64) {
    let [cx, cy] = o.center;
    let (local, above) = match o.kind {
        ObstacleKind::Tree => {
            let [trunk_r, crown_r, h] = o.size;
            if rng.random_bool(0.4) {
                let th = rng.random_range(0.0..2.0 * PI);
                let z = rng.random_range(0.0..h);
                ([trunk_r * th.cos(), trunk_r * th.sin(), z], z)
            } else {
                let d = unit_vector(rng);
                let r = crown_r * rng.random_range(0.7f64..1.0).cbrt();
                let z = h + r * d[2];
                ([r * d[0], r * d[1], z], z)
            }
        }
        ObstacleKind::Rock => {
            let mut d = unit_vector(rng);
            d[2] = d[2].abs();
            let z = o.size[2] * d[2];
            ([o.size[0] * d[0], o.size[1] * d[1], z], z)
        }
        ObstacleKind::Bush => {
            let d = unit_vector(rng);
            let r = rng.random_range(0.3f64..1.0).cbrt();
            let zc = o.size[2];
            let z = (zc + o.size[0] * r * d[2]).max(0.05);
            ([o.size[0] * r * d[0], o.size[1] * r * d[1], z], z)
        }
        ObstacleKind::Wall => {
            let [l, w, h] = o.size;
            let face = rng.random_range(0..3);
            let u = rng.random_range(-l / 2.0..l / 2.0);
            let z = rng.random_range(0.0..h);
            let (u, v, z) = match face {
                0 => (u, w / 2.0, z),
                1 => (u, -w / 2.0, z),
                _ => (u, rng.random_range(-w / 2.0..w / 2.0), h),
            };
            let (s, c) = o.yaw.sin_cos();
            ([c * u - s * v, s * u + c * v, z], z)
        }
    };
    ([cx + local[0], cy + local[1], o.base + local[2]], above)
}

fn unit_vector(rng: &mut crate::Rng) -> [f64; 3] {
    let z: f64 = rng.random_range(-1.0..1.0);
    let th: f64 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    [r * th.cos(), r * th.sin(), z]
}

/// `1 - minmax(local height variance)` over path points; others get 0.
fn path_traversability(points: &[Point], is_obstacle: &[bool], in_path: &[bool]) -> Vec<f64> {
    let ground_idx: Vec<usize> = (0..points.len()).filter(|&i| !is_obstacle[i]).collect();
    let ground: Vec<Point> = ground_idx.iter().map(|&i| points[i]).collect();
    let mut trav = vec![0.0; points.len()];
    if ground.is_empty() {
        return trav;
    }
    let index = KnnIndex::new(&ground);
    let k = ROUGHNESS_NEIGHBOURS.min(ground.len());
    let mut var = vec![0.0; points.len()];
    for i in (0..points.len()).filter(|&i| in_path[i]) {
        let nb = index.query(&points[i], k).expect("k <= ground size");
        let mean = nb.iter().map(|&j| ground[j][2]).sum::<f64>() / k as f64;
        var[i] = nb
            .iter()
            .map(|&j| (ground[j][2] - mean).powi(2))
            .sum::<f64>()
            / k as f64;
    }
    let (lo, hi) = (0..points.len())
        .filter(|&i| in_path[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(var[i]), hi.max(var[i]))
        });
    for i in (0..points.len()).filter(|&i| in_path[i]) {
        trav[i] = if hi > lo {
            (1.0 - (var[i] - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            1.0
        };
    }
    trav
}
