use std::fmt;

use crate::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
    Unlabeled,
}

impl Label {
    pub fn as_char(self) -> char {
        match self {
            Label::Positive => 'P',
            Label::Negative => 'N',
            Label::Unlabeled => 'U',
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "P" => Some(Label::Positive),
            "N" => Some(Label::Negative),
            "U" => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneKind {
    Query,
    Support,
    Eval,
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::Query => "query",
            SceneKind::Support => "support",
            SceneKind::Eval => "eval",
        })
    }
}

/// A labelled point cloud.
///
/// Query scenes hold positives (with traversability) and unlabeled points only.
/// Support and eval scenes carry no traversability values.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    points: Vec<Point>,
    labels: Vec<Label>,
    trav: Vec<Option<f64>>,
    kind: SceneKind,
}

impl Scene {
    pub fn new(
        kind: SceneKind,
        points: Vec<Point>,
        labels: Vec<Label>,
        trav: Vec<Option<f64>>,
    ) -> Result<Self> {
        if points.len() != labels.len() || points.len() != trav.len() {
            return Err(Error::data(format!(
                "scene column lengths differ: {} points, {} labels, {} trav",
                points.len(),
                labels.len(),
                trav.len()
            )));
        }
        for (i, ((p, &l), &t)) in points.iter().zip(&labels).zip(&trav).enumerate() {
            check_point(kind, p, l, t).map_err(|m| Error::data(format!("point {i}: {m}")))?;
        }
        Ok(Scene {
            points,
            labels,
            trav,
            kind,
        })
    }

    pub fn kind(&self) -> SceneKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn trav(&self) -> &[Option<f64>] {
        &self.trav
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn indices_with(&self, label: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Same points with labels replaced, re-validated against `kind`.
    pub fn relabel(
        &self,
        kind: SceneKind,
        labels: Vec<Label>,
        trav: Vec<Option<f64>>,
    ) -> Result<Scene> {
        Scene::new(kind, self.points.clone(), labels, trav)
    }

    /// Copy with replaced positions and unchanged labels.
    pub fn with_points(&self, points: Vec<Point>) -> Result<Scene> {
        Scene::new(self.kind, points, self.labels.clone(), self.trav.clone())
    }
}

/// Validates a single row against the scene-kind rules. Returns a message on failure.
pub(crate) fn check_point(
    kind: SceneKind,
    p: &Point,
    label: Label,
    trav: Option<f64>,
) -> std::result::Result<(), String> {
    if p.iter().any(|c| !c.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    match kind {
        SceneKind::Query => {
            if label == Label::Negative {
                return Err("negative label in a query scene".into());
            }
            match (label, trav) {
                (Label::Positive, None) => {
                    return Err("positive query point without traversability".into())
                }
                (Label::Unlabeled, Some(_)) => {
                    return Err("traversability on an unlabeled point".into())
                }
                _ => {}
            }
        }
        SceneKind::Support | SceneKind::Eval => {
            if trav.is_some() {
                return Err(format!("traversability present in a {kind} scene"));
            }
        }
    }
    if let Some(t) = trav {
        if !(0.0..=1.0).contains(&t) {
            return Err(format!("traversability {t} outside [0,1]"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_rejects_negative() {
        let err = Scene::new(
            SceneKind::Query,
            vec![[0.0; 3]],
            vec![Label::Negative],
            vec![None],
        )
        .unwrap_err();
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn support_rejects_trav() {
        assert!(Scene::new(
            SceneKind::Support,
            vec![[0.0; 3]],
            vec![Label::Positive],
            vec![Some(0.5)],
        )
        .is_err());
    }

    #[test]
    fn trav_range_checked() {
        assert!(Scene::new(
            SceneKind::Query,
            vec![[0.0; 3]],
            vec![Label::Positive],
            vec![Some(1.5)],
        )
        .is_err());
    }
}
