use std::fmt::Write as _;
use std::path::Path;

use crate::encoder::{featurize, EncoderModel, PointFeatures};
use crate::pointcloud::{Point, Scene};
use crate::proxybank::{Class, ProxyBank};
use crate::trainer::TrainMode;
use crate::{Error, Result};

/// Per-point inference output. `t_masked = t * s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub points: Vec<Point>,
    /// Binary segmentation, `true` = traversable.
    pub s: Vec<bool>,
    pub t: Vec<f64>,
    pub t_masked: Vec<f64>,
}

impl Prediction {
    pub fn new(points: Vec<Point>, s: Vec<bool>, t: Vec<f64>) -> Self {
        let t_masked = s
            .iter()
            .zip(&t)
            .map(|(&si, &ti)| if si { ti } else { 0.0 })
            .collect();
        Prediction {
            points,
            s,
            t,
            t_masked,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Runs the encoder on a scene and masks the traversability map.
///
/// Proxy modes segment with `S_P > S_N` (ties to non-traversable); the
/// supervised mode thresholds the segmentation head at 0.5.
pub fn infer_scene(
    model: &EncoderModel,
    bank: &ProxyBank,
    scene: &Scene,
    mode: TrainMode,
) -> Result<Prediction> {
    let feats = featurize(scene.points(), model.shape.k_enc)?;
    infer_features(model, bank, scene.points(), &feats, mode)
}

/// As [`infer_scene`] with precomputed features.
pub fn infer_features(
    model: &EncoderModel,
    bank: &ProxyBank,
    points: &[Point],
    feats: &[PointFeatures],
    mode: TrainMode,
) -> Result<Prediction> {
    if bank.dim() != model.embed_dim() {
        return Err(Error::data(
            "checkpoint encoder and proxy bank dimensions differ",
        ));
    }
    let emb = model.encode(feats)?;
    let (t, s_prob) = model.heads(&emb);
    let s: Vec<bool> = if mode.uses_proxies() {
        (0..emb.rows)
            .map(|i| {
                let x = emb.row(i);
                bank.class_similarity(x, Class::Positive)
                    > bank.class_similarity(x, Class::Negative)
            })
            .collect()
    } else {
        s_prob.iter().map(|&p| p > 0.5).collect()
    };
    Ok(Prediction::new(points.to_vec(), s, t))
}

/// `x y z s t T` per line.
pub fn format_predictions(pred: &Prediction) -> String {
    let mut out = String::with_capacity(pred.len() * 48);
    for i in 0..pred.len() {
        let p = pred.points[i];
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            p[0],
            p[1],
            p[2],
            u8::from(pred.s[i]),
            pred.t[i],
            pred.t_masked[i]
        );
    }
    out
}

pub fn save_predictions(pred: &Prediction, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_predictions(pred)).map_err(|e| Error::io(path, e))
}

pub fn parse_predictions(text: &str, origin: &Path) -> Result<Prediction> {
    let mut points = Vec::new();
    let mut s = Vec::new();
    let mut t = Vec::new();
    let mut tm = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", toks.len())));
        }
        let num = |tok: &str| {
            tok.parse::<f64>()
                .map_err(|_| err(format!("bad number {tok:?}")))
        };
        points.push([num(toks[0])?, num(toks[1])?, num(toks[2])?]);
        s.push(match toks[3] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("segmentation must be 0 or 1, got {other:?}"))),
        });
        t.push(num(toks[4])?);
        tm.push(num(toks[5])?);
    }
    Ok(Prediction {
        points,
        s,
        t,
        t_masked: tm,
    })
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Prediction> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, path)
}
