use std::fmt::Write as _;

use super::infer::{infer_scene, Prediction};
use super::metrics::{tpe_from_counts, Confusion, IouScores, TpeVariant};
use crate::checkpoint::Checkpoint;
use crate::pointcloud::Scene;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneReport {
    pub name: String,
    pub confusion: Confusion,
    pub tpe: f64,
    pub iou: IouScores,
}

impl SceneReport {
    fn new(name: String, confusion: Confusion, variant: TpeVariant) -> Self {
        SceneReport {
            name,
            tpe: tpe_from_counts(&confusion, variant),
            iou: IouScores::from_counts(&confusion),
            confusion,
        }
    }
}

/// Metrics pooled over all scenes (micro-average), with per-scene rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: TpeVariant,
    pub scenes: Vec<SceneReport>,
    pub confusion: Confusion,
    pub tpe: f64,
    pub iou_positive: Option<f64>,
    pub iou_negative: Option<f64>,
    pub miou: Option<f64>,
}

impl EvalReport {
    /// Builds a report from per-scene confusions.
    pub fn from_confusions(rows: Vec<(String, Confusion)>, variant: TpeVariant) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::data("evaluation needs at least one scene"));
        }
        let mut pooled = Confusion::default();
        for (_, c) in &rows {
            pooled.merge(c);
        }
        let iou = IouScores::from_counts(&pooled);
        Ok(EvalReport {
            variant,
            scenes: rows
                .into_iter()
                .map(|(n, c)| SceneReport::new(n, c, variant))
                .collect(),
            tpe: tpe_from_counts(&pooled, variant),
            iou_positive: iou.positive,
            iou_negative: iou.negative,
            miou: iou.miou,
            confusion: pooled,
        })
    }

    /// One row per scene and a final `TOTAL` row.
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("scene,tp,tn,fp,fn,fp_weight,tpe,iou_positive,iou_negative,miou\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let weight = |c: &Confusion| match self.variant {
            TpeVariant::AsPrinted => c.fp_one_minus_t,
            TpeVariant::TraversabilityWeighted => c.fp_t,
        };
        for r in &self.scenes {
            let c = &r.confusion;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.name,
                c.tp,
                c.tn,
                c.fp,
                c.fn_,
                weight(c),
                r.tpe,
                fmt(r.iou.positive),
                fmt(r.iou.negative),
                fmt(r.iou.miou)
            );
        }
        let c = &self.confusion;
        let _ = writeln!(
            s,
            "TOTAL,{},{},{},{},{},{},{},{},{}",
            c.tp,
            c.tn,
            c.fp,
            c.fn_,
            weight(c),
            self.tpe,
            fmt(self.iou_positive),
            fmt(self.iou_negative),
            fmt(self.miou)
        );
        s
    }

    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "scenes evaluated : {}", self.scenes.len());
        let _ = writeln!(s, "labeled points   : {}", self.confusion.labeled());
        let _ = writeln!(
            s,
            "TP / TN / FP / FN: {} / {} / {} / {}",
            self.confusion.tp, self.confusion.tn, self.confusion.fp, self.confusion.fn_
        );
        let _ = writeln!(s, "TPE              : {:.4}", self.tpe);
        let _ = writeln!(s, "IoU traversable  : {}", pct(self.iou_positive));
        let _ = writeln!(s, "IoU non-trav.    : {}", pct(self.iou_negative));
        let _ = writeln!(s, "mIoU             : {}", pct(self.miou));
        for r in &self.scenes {
            let _ = writeln!(
                s,
                "  {:<24} TPE {:.4}  mIoU {}",
                r.name,
                r.tpe,
                pct(r.iou.miou)
            );
        }
        s
    }
}

/// Infers every scene with the checkpoint and pools the metrics.
pub fn evaluate_dataset(
    ckpt: &Checkpoint,
    scenes: &[(String, Scene)],
    variant: TpeVariant,
) -> Result<EvalReport> {
    let rows = scenes
        .iter()
        .map(|(name, scene)| {
            let pred = infer_scene(&ckpt.model, &ckpt.bank, scene, ckpt.mode)?;
            Ok((
                name.clone(),
                Confusion::from_predictions(&pred.s, &pred.t, scene.labels()),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_confusions(rows, variant)
}

/// Scores stored predictions against ground-truth scenes, matched by position.
pub fn evaluate_predictions(
    preds: &[(String, Prediction)],
    gts: &[Scene],
    variant: TpeVariant,
) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::data(format!(
            "{} prediction files but {} ground-truth scenes",
            preds.len(),
            gts.len()
        )));
    }
    let rows = preds
        .iter()
        .zip(gts)
        .map(|((name, p), gt)| {
            if p.len() != gt.len() {
                return Err(Error::data(format!(
                    "{name}: {} predicted points vs {} ground-truth points",
                    p.len(),
                    gt.len()
                )));
            }
            Ok((
                name.clone(),
                Confusion::from_predictions(&p.s, &p.t, gt.labels()),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_confusions(rows, variant)
}
