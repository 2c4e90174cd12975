use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::adam::AdamState;
use super::config::{TrainConfig, TrainMode};
use crate::checkpoint::Checkpoint;
use crate::encoder::{
    featurize, featurize_subset, EncoderGrads, EncoderModel, InputNorm, PointFeatures,
};
use crate::eval::{infer_features, Confusion, EvalReport, TpeVariant};
use crate::linalg::Matrix;
use crate::losses::{
    proxy_total, supervised_total, traverse_loss, EpisodeOutputs, LossBreakdown, Role,
};
use crate::pointcloud::{sample_episode, Dataset, Label, Scene};
use crate::proxybank::{em_prototypes, Class, Prototypes, ProxyBank};
use crate::{seeded_rng, Error, Result};

/// Attempts at drawing a query patch that contains a positive point.
const EPISODE_RETRIES: usize = 10;

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: EncoderModel,
    pub bank: ProxyBank,
    pub epoch: usize,
    pub step: u64,
    rng: crate::Rng,
    adam_model: AdamState,
    adam_bank: AdamState,
}

impl TrainState {
    pub fn checkpoint(&self, mode: TrainMode) -> Checkpoint {
        Checkpoint {
            mode,
            model: self.model.clone(),
            bank: self.bank.clone(),
        }
    }
}

/// Fresh model and bank drawn from the config seed.
pub fn init_state(config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed);
    let model = EncoderModel::new(config.encoder, &mut rng)?;
    let bank = ProxyBank::init(
        config.proxies,
        config.encoder.embed_dim,
        config.temperature,
        &mut rng,
    )?;
    let sizes = |s: Vec<&[f64]>| s.iter().map(|v| v.len()).collect::<Vec<_>>();
    let adam_model = AdamState::new(&sizes(model.param_slices()));
    let adam_bank = AdamState::new(&[bank.positive.data.len(), bank.negative.data.len()]);
    Ok(TrainState {
        model,
        bank,
        epoch: 0,
        step: 0,
        rng,
        adam_model,
        adam_bank,
    })
}

/// One optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub step: u64,
    pub epoch: usize,
    pub reg: f64,
    pub seg: f64,
    pub unsup: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_reg: f64,
    pub loss_seg: f64,
    pub loss_unsup: f64,
    pub episodes: usize,
    pub empty_proxies_before_reinit: usize,
    pub reinitialized: usize,
    pub miou_eval: Option<f64>,
    pub tpe_eval: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub epochs: Vec<EpochStats>,
    pub steps: Vec<StepRow>,
}

impl TrainOutcome {
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.epochs)
    }

    pub fn steps_csv(&self) -> String {
        steps_csv(&self.steps)
    }
}

/// Scenes with their encoder features computed once.
pub struct PreparedData<'a> {
    query: Vec<(&'a Scene, Vec<PointFeatures>)>,
    support: Vec<(&'a Scene, Vec<PointFeatures>)>,
    eval: Vec<(&'a Scene, Vec<PointFeatures>)>,
}

impl<'a> PreparedData<'a> {
    pub fn new(data: &'a Dataset, k_enc: usize) -> Result<Self> {
        let prep = |split: &'a [(String, Scene)]| {
            split
                .iter()
                .map(|(_, s)| Ok((s, featurize(s.points(), k_enc)?)))
                .collect::<Result<Vec<_>>>()
        };
        if data.query.is_empty() || data.support.is_empty() {
            return Err(Error::data("training needs query and support scenes"));
        }
        Ok(PreparedData {
            query: prep(&data.query)?,
            support: prep(&data.support)?,
            eval: prep(&data.eval)?,
        })
    }

    /// Features of every query and support point.
    pub fn training_features(&self) -> Vec<PointFeatures> {
        self.query
            .iter()
            .chain(&self.support)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

fn loss_for(
    mode: TrainMode,
    out: &EpisodeOutputs,
    bank: &ProxyBank,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let hyper = config.loss_hyper();
    match mode {
        TrainMode::Supervised => supervised_total(out),
        TrainMode::ProxyNoUnlabeled => proxy_total(out, bank, &hyper),
        TrainMode::ProxyNoReinit | TrainMode::Full => traverse_loss(out, bank, &hyper),
    }
}

/// Query features for an episode, recomputed on a z-perturbed copy of the
/// scene when augmentation is on.
fn query_features(
    scene: &Scene,
    cached: &[PointFeatures],
    indices: &[usize],
    config: &TrainConfig,
    rng: &mut crate::Rng,
) -> Result<Vec<PointFeatures>> {
    if !config.augment || config.augment_sigma == 0.0 || config.augment_fraction == 0.0 {
        return Ok(indices.iter().map(|&i| cached[i]).collect());
    }
    let noise = Normal::new(0.0, config.augment_sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut points = scene.points().to_vec();
    for &i in indices {
        if scene.labels()[i] == Label::Positive && rng.random_bool(config.augment_fraction) {
            points[i][2] += noise.sample(rng);
        }
    }
    featurize_subset(&points, indices, config.encoder.k_enc)
}

/// Embeddings of all labeled support points, per class.
fn support_embeddings(model: &EncoderModel, data: &PreparedData) -> Result<(Matrix, Matrix)> {
    let mut out = Vec::with_capacity(2);
    for label in [Label::Positive, Label::Negative] {
        let feats: Vec<PointFeatures> = data
            .support
            .iter()
            .flat_map(|(s, f)| s.indices_with(label).into_iter().map(move |i| f[i]))
            .collect();
        out.push(model.encode(&feats)?);
    }
    let neg = out.pop().expect("two classes");
    let pos = out.pop().expect("two classes");
    Ok((pos, neg))
}

fn prototypes(
    model: &EncoderModel,
    data: &PreparedData,
    config: &TrainConfig,
) -> Result<Prototypes> {
    let (pos, neg) = support_embeddings(model, data)?;
    let fit = |m: &Matrix| -> Result<Matrix> {
        if m.rows == 0 {
            return Ok(Matrix::zeros(0, m.cols));
        }
        Ok(em_prototypes(m, config.prototypes.min(m.rows), &config.em)?
            .significant_centers(config.em.min_share))
    };
    Ok(Prototypes {
        positive: fit(&pos)?,
        negative: fit(&neg)?,
    })
}

fn evaluate(
    state: &TrainState,
    data: &PreparedData,
    mode: TrainMode,
) -> Result<Option<EvalReport>> {
    if data.eval.is_empty() {
        return Ok(None);
    }
    let rows = data
        .eval
        .iter()
        .enumerate()
        .map(|(i, (scene, feats))| {
            let p = infer_features(&state.model, &state.bank, scene.points(), feats, mode)?;
            Ok((
                format!("eval_{i}"),
                Confusion::from_predictions(&p.s, &p.t, scene.labels()),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_confusions(rows, TpeVariant::AsPrinted).map(Some)
}

/// Runs one epoch: one episode per query scene, then membership-driven
/// re-initialisation of empty proxies. Steps are appended to `steps`.
pub fn train_epoch(
    state: &mut TrainState,
    data: &PreparedData,
    config: &TrainConfig,
    steps: &mut Vec<StepRow>,
) -> Result<EpochStats> {
    let mode = config.mode;
    let epoch = state.epoch;
    let lr = config.lr_at(epoch);
    let warmup = mode.uses_proxies() && epoch < config.proxy_warmup_epochs;
    state.bank.reset_membership();

    let mut sums = [0.0; 4];
    let mut episodes = 0usize;
    for (qi, (query, qfeats)) in data.query.iter().enumerate() {
        let si = state.rng.random_range(0..data.support.len());
        let (support, sfeats) = &data.support[si];
        let mut episode = None;
        for _ in 0..EPISODE_RETRIES {
            let ep = sample_episode(
                query,
                qi,
                support,
                si,
                config.n_query,
                config.n_support,
                &mut state.rng,
            )?;
            if ep
                .query_indices
                .iter()
                .any(|&i| query.labels()[i] == Label::Positive)
            {
                episode = Some(ep);
                break;
            }
        }
        let Some(ep) = episode else {
            debug!("epoch {epoch}: query scene {qi} yielded no positives, skipped");
            continue;
        };

        let keep_unlabeled = mode.uses_unlabeled();
        let q_idx: Vec<usize> = ep
            .query_indices
            .iter()
            .copied()
            .filter(|&i| keep_unlabeled || query.labels()[i] == Label::Positive)
            .collect();
        let mut feats = query_features(query, qfeats, &q_idx, config, &mut state.rng)?;
        let mut roles: Vec<Role> = q_idx
            .iter()
            .map(|&i| match query.trav()[i] {
                Some(target) => Role::QueryPositive { target },
                None => Role::QueryUnlabeled,
            })
            .collect();
        for &i in &ep.support_indices {
            feats.push(sfeats[i]);
            roles.push(Role::Support(match support.labels()[i] {
                Label::Positive => Class::Positive,
                _ => Class::Negative,
            }));
        }

        let pass = state.model.forward(&feats)?;
        let out = EpisodeOutputs {
            embeddings: pass.embeddings.clone(),
            t: pass.t.clone(),
            s_prob: pass.s_prob.clone(),
            roles,
        };
        let lb = loss_for(mode, &out, &state.bank, config)?;
        state.step += 1;
        let row = StepRow {
            step: state.step,
            epoch,
            reg: lb.reg,
            seg: lb.seg(),
            unsup: lb.unsup,
            total: lb.total,
        };
        steps.push(row);
        if !lb.total.is_finite() {
            return Err(Error::numeric(format!(
                "loss diverged at step {} (epoch {epoch}, query scene {qi}): total = {}",
                state.step, lb.total
            )));
        }
        if mode.uses_proxies() {
            state.bank.count_membership(&pass.embeddings);
        }

        if !warmup {
            let mut grads = EncoderGrads::zeros_like(&state.model);
            state.model.backward(
                &pass,
                Some(&lb.grad_emb),
                Some(&lb.grad_t),
                Some(&lb.grad_s),
                &mut grads,
            );
            if !grads.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite encoder gradient at step {} (epoch {epoch})",
                    state.step
                )));
            }
            let g = grads.slices();
            state
                .adam_model
                .step(&mut state.model.param_slices_mut(), &g, lr)?;
        }
        if let Some(gb) = &lb.grad_bank {
            let g = gb.slices();
            state
                .adam_bank
                .step(&mut state.bank.param_slices_mut(), &g, lr)?;
            state.bank.renormalize();
        }
        if !state.model.is_finite() || !state.bank.is_finite() {
            return Err(Error::numeric(format!(
                "parameters diverged at step {}",
                state.step
            )));
        }

        sums[0] += row.total;
        sums[1] += row.reg;
        sums[2] += row.seg;
        sums[3] += row.unsup;
        episodes += 1;
    }

    let empty = if mode.uses_proxies() {
        state.bank.empty_proxies().len()
    } else {
        0
    };
    let mut reinitialized = 0;
    if mode.reinitializes() && empty > 0 {
        let protos = prototypes(&state.model, data, config)?;
        reinitialized = state
            .bank
            .reinit_empty(&protos, config.sigma_perturb, &mut state.rng)?
            .len();
    }

    let report = evaluate(state, data, mode)?;
    let mean = |v: f64| {
        if episodes > 0 {
            v / episodes as f64
        } else {
            0.0
        }
    };
    let stats = EpochStats {
        epoch,
        lr,
        loss_total: mean(sums[0]),
        loss_reg: mean(sums[1]),
        loss_seg: mean(sums[2]),
        loss_unsup: mean(sums[3]),
        episodes,
        empty_proxies_before_reinit: empty,
        reinitialized,
        miou_eval: report.as_ref().and_then(|r| r.miou),
        tpe_eval: report.as_ref().map(|r| r.tpe),
    };
    info!(
        "epoch {:>3} lr {:.3e} loss {:.5} (reg {:.5} seg {:.5} unsup {:.5}) empty {} miou {} tpe {}",
        epoch,
        lr,
        stats.loss_total,
        stats.loss_reg,
        stats.loss_seg,
        stats.loss_unsup,
        empty,
        fmt_opt(stats.miou_eval),
        fmt_opt(stats.tpe_eval)
    );
    state.epoch += 1;
    Ok(stats)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn run(
    config: &TrainConfig,
    data: &Dataset,
    epochs: &mut Vec<EpochStats>,
    steps: &mut Vec<StepRow>,
) -> Result<TrainState> {
    let mut state = init_state(config)?;
    let prepared = PreparedData::new(data, config.encoder.k_enc)?;
    state.model.input = InputNorm::fit(&prepared.training_features());
    for _ in 0..config.epochs {
        epochs.push(train_epoch(&mut state, &prepared, config, steps)?);
    }
    Ok(state)
}

/// Trains from scratch for `config.epochs` epochs.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    let state = run(config, data, &mut epochs, &mut steps)?;
    Ok(TrainOutcome {
        state,
        epochs,
        steps,
    })
}

/// Trains and writes `checkpoint.txt`, `metrics.csv`, `steps.csv` and
/// `config.txt` into `out`. On divergence the CSVs up to the failing step are
/// still written before the error is returned.
pub fn train_to_dir(
    config: &TrainConfig,
    data: &Dataset,
    out: impl AsRef<Path>,
) -> Result<TrainOutcome> {
    let out = out.as_ref();
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("config.txt", config.to_text())?;
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    let result = run(config, data, &mut epochs, &mut steps);
    write("metrics.csv", metrics_csv(&epochs))?;
    write("steps.csv", steps_csv(&steps))?;
    let state = result?;
    state
        .checkpoint(config.mode)
        .save(out.join("checkpoint.txt"))?;
    Ok(TrainOutcome {
        state,
        epochs,
        steps,
    })
}

pub fn metrics_csv(epochs: &[EpochStats]) -> String {
    let mut s = String::from(
        "epoch,lr,loss_total,loss_reg,loss_seg,loss_unsup,empty_proxies_before_reinit,miou_eval,tpe_eval\n",
    );
    for e in epochs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            e.epoch,
            e.lr,
            e.loss_total,
            e.loss_reg,
            e.loss_seg,
            e.loss_unsup,
            e.empty_proxies_before_reinit,
            fmt_opt(e.miou_eval),
            fmt_opt(e.tpe_eval)
        );
    }
    s
}

pub fn steps_csv(steps: &[StepRow]) -> String {
    let mut s = String::from("step,epoch,reg,seg,unsup,total\n");
    for r in steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.step, r.epoch, r.reg, r.seg, r.unsup, r.total
        );
    }
    s
}
