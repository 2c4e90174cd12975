//! Trainer contracts on a small synthetic set.

use travmetric::encoder::InputNorm;
use travmetric::pointcloud::{generate_dataset, Dataset, DatasetSpec, SyntheticSpec};
use travmetric::trainer::{
    init_state, train, train_epoch, PreparedData, TrainConfig, TrainMode, TrainState,
};

fn small_data() -> Dataset {
    generate_dataset(&DatasetSpec {
        n_query: 3,
        n_support: 1,
        n_eval: 1,
        scene: SyntheticSpec {
            n_points: 800,
            ..SyntheticSpec::default()
        },
        seed: 11,
        support_ratio: None,
    })
    .unwrap()
}

fn small_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        proxy_warmup_epochs: 1,
        proxies: 16,
        n_query: 256,
        n_support: 64,
        mode,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn start<'a>(config: &TrainConfig, data: &'a Dataset) -> (TrainState, PreparedData<'a>) {
    let prepared = PreparedData::new(data, config.encoder.k_enc).unwrap();
    let mut state = init_state(config).unwrap();
    state.model.input = InputNorm::fit(&prepared.training_features());
    (state, prepared)
}

#[test]
fn warm_up_freezes_the_encoder_only() {
    let data = small_data();
    let config = small_config(TrainMode::Full);
    let (mut state, prepared) = start(&config, &data);
    let model0 = state.model.clone();
    let bank0 = state.bank.clone();
    let mut steps = Vec::new();
    train_epoch(&mut state, &prepared, &config, &mut steps).unwrap();
    assert_eq!(state.model, model0, "encoder changed during warm-up");
    assert_ne!(
        state.bank.positive, bank0.positive,
        "proxies did not move during warm-up"
    );
    train_epoch(&mut state, &prepared, &config, &mut steps).unwrap();
    assert_ne!(state.model, model0, "encoder frozen after warm-up");
}

#[test]
fn supervised_mode_leaves_the_bank_alone() {
    let data = small_data();
    let config = small_config(TrainMode::Supervised);
    let (mut state, prepared) = start(&config, &data);
    let bank0 = state.bank.clone();
    let model0 = state.model.clone();
    let mut steps = Vec::new();
    let stats = train_epoch(&mut state, &prepared, &config, &mut steps).unwrap();
    assert_eq!(state.bank.positive, bank0.positive);
    assert_eq!(state.bank.negative, bank0.negative);
    assert_eq!(stats.reinitialized, 0);
    assert_eq!(stats.loss_unsup, 0.0);
    assert_ne!(state.model, model0, "supervised mode has no warm-up");
}

#[test]
fn no_reinit_mode_never_reinitializes() {
    let data = small_data();
    let config = small_config(TrainMode::ProxyNoReinit);
    let (mut state, prepared) = start(&config, &data);
    let mut steps = Vec::new();
    let stats = train_epoch(&mut state, &prepared, &config, &mut steps).unwrap();
    assert!(
        stats.empty_proxies_before_reinit > 0,
        "fixture should leave empty proxies"
    );
    assert_eq!(stats.reinitialized, 0);
}

#[test]
fn full_mode_leaves_no_empty_proxy_after_reinit() {
    let data = small_data();
    let config = small_config(TrainMode::Full);
    let (mut state, prepared) = start(&config, &data);
    let mut steps = Vec::new();
    let stats = train_epoch(&mut state, &prepared, &config, &mut steps).unwrap();
    assert!(stats.reinitialized > 0);
    assert!(state.bank.empty_proxies().is_empty());
}

#[test]
fn no_unlabeled_mode_has_no_unsupervised_term() {
    let data = small_data();
    let config = small_config(TrainMode::ProxyNoUnlabeled);
    let (mut state, prepared) = start(&config, &data);
    let mut steps = Vec::new();
    let stats = train_epoch(&mut state, &prepared, &config, &mut steps).unwrap();
    assert_eq!(stats.loss_unsup, 0.0);
    assert!(steps.iter().all(|r| r.unsup == 0.0));
}

#[test]
fn one_epoch_is_deterministic() {
    let data = small_data();
    let config = small_config(TrainMode::Full);
    let run = || {
        let (mut state, prepared) = start(&config, &data);
        let mut steps = Vec::new();
        let stats = train_epoch(&mut state, &prepared, &config, &mut steps).unwrap();
        (stats.loss_total, state.bank, state.model)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn full_run_reports_every_epoch_with_the_documented_schedule() {
    let data = small_data();
    let config = small_config(TrainMode::Full);
    let outcome = train(&config, &data).unwrap();
    assert_eq!(outcome.epochs.len(), 3);
    for (e, s) in outcome.epochs.iter().enumerate() {
        assert_eq!(s.epoch, e);
        assert_eq!(s.lr, config.lr * config.lr_decay.powi(e as i32));
        assert!(s.loss_total.is_finite());
        let m = s.miou_eval.unwrap();
        assert!((0.0..=1.0).contains(&m));
    }
    let csv = outcome.metrics_csv();
    assert!(csv.starts_with(
        "epoch,lr,loss_total,loss_reg,loss_seg,loss_unsup,empty_proxies_before_reinit,miou_eval,tpe_eval\n"
    ));
    assert_eq!(csv.lines().count(), 4);
    assert!(outcome
        .steps_csv()
        .starts_with("step,epoch,reg,seg,unsup,total\n"));
}

#[test]
fn invalid_configs_are_rejected() {
    let data = small_data();
    for bad in [
        TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            lr_decay: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            proxy_warmup_epochs: 50,
            ..TrainConfig::default()
        },
        TrainConfig {
            n_support: 7,
            ..TrainConfig::default()
        },
    ] {
        assert!(train(&bad, &data).is_err());
    }
}
