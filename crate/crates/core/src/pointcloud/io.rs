//! Scene text format: one point per line, `x y z label [trav]`, `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::scene::{check_point, Label, Scene, SceneKind};
use crate::{Error, Result};

pub fn load_scene(path: impl AsRef<Path>, kind: SceneKind) -> Result<Scene> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, kind, path)
}

/// Parses scene text. `origin` is only used in error messages.
pub fn parse_scene(text: &str, kind: SceneKind, origin: &Path) -> Result<Scene> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut trav = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 && toks.len() != 5 {
            return Err(err(format!("expected 4 or 5 fields, found {}", toks.len())));
        }
        let mut p = [0.0; 3];
        for (c, tok) in p.iter_mut().zip(&toks[..3]) {
            *c = tok
                .parse::<f64>()
                .map_err(|_| err(format!("bad coordinate {tok:?}")))?;
        }
        let label =
            Label::from_token(toks[3]).ok_or_else(|| err(format!("bad label {:?}", toks[3])))?;
        let t = match toks.get(4) {
            Some(tok) => Some(
                tok.parse::<f64>()
                    .map_err(|_| err(format!("bad traversability {tok:?}")))?,
            ),
            None => None,
        };
        check_point(kind, &p, label, t).map_err(err)?;
        points.push(p);
        labels.push(label);
        trav.push(t);
    }
    Scene::new(kind, points, labels, trav)
}

pub fn format_scene(scene: &Scene) -> String {
    let mut out = String::with_capacity(scene.len() * 32);
    for ((p, l), t) in scene.points().iter().zip(scene.labels()).zip(scene.trav()) {
        let _ = write!(out, "{} {} {} {}", p[0], p[1], p[2], l.as_char());
        if let Some(t) = t {
            let _ = write!(out, " {t}");
        }
        out.push('\n');
    }
    out
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_scene(scene)).map_err(|e| Error::io(path, e))
}
