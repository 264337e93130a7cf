use curriculum_core::dataset_io::stratified_split;
use curriculum_core::samplers::Strategy;
use curriculum_core::scoring::{rank_examples, Direction};
use curriculum_core::synthetic::{generate, CorpusSpec};
use curriculum_core::toy_model::{load_checkpoint, save_checkpoint};
use curriculum_core::trainer::{
    epoch_plans, evaluate, initial_scores, train, train_with_scores, TrainConfig,
};

fn splits(size: usize, seed: u64, graded: bool) -> [curriculum_core::dataset_io::Dataset; 3] {
    let spec = if graded {
        CorpusSpec::graded(size, 0.1)
    } else {
        CorpusSpec::separable(size)
    };
    let parts = stratified_split(&generate(&spec, seed), &[0.8, 0.1, 0.1], seed).unwrap();
    let mut it = parts.into_iter().map(|s| s.dataset);
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

#[test]
fn training_loss_falls_every_epoch_on_separable_data() {
    let [tr, va, te] = splits(500, 1, false);
    for strategy in [Strategy::Random, Strategy::E2D, Strategy::PMD] {
        let config = TrainConfig {
            strategy,
            epochs: 5,
            ..TrainConfig::default()
        };
        let out = train(&tr, &va, &te, &config, 66).unwrap();
        let losses = &out.report.epoch_train_loss;
        assert_eq!(losses.len(), 5);
        assert!(
            losses.windows(2).all(|w| w[1] < w[0]),
            "{strategy}: {losses:?}"
        );
    }
}

#[test]
fn identical_runs_serialize_identically() {
    let [tr, va, te] = splits(400, 2, true);
    let config = TrainConfig {
        strategy: Strategy::SMD,
        epochs: 2,
        rescore: true,
        ..TrainConfig::default()
    };
    let a = train(&tr, &va, &te, &config, 88).unwrap();
    let b = train(&tr, &va, &te, &config, 88).unwrap();
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
    assert_eq!(a.best_model, b.best_model);
    let c = train(&tr, &va, &te, &config, 99).unwrap();
    assert_ne!(a.report.checkpoints, c.report.checkpoints);
}

#[test]
fn e2d_first_epoch_walks_the_descending_ranking() {
    let [tr, _, _] = splits(300, 3, true);
    let config = TrainConfig {
        strategy: Strategy::E2D,
        epochs: 2,
        ..TrainConfig::default()
    };
    let scores = initial_scores(&tr, &config, 66).unwrap();
    let plans = epoch_plans(&tr, &config, 66, Some(&scores.table)).unwrap();
    let ranking = rank_examples(&scores.table, Direction::Descending);
    assert_eq!(plans[0].order, ranking.order);
    assert_eq!(plans[1].order, ranking.order);
    let s = &scores.table.scores;
    assert!(plans[0].order.windows(2).all(|w| s[w[0]] >= s[w[1]]));
}

#[test]
fn best_model_survives_a_checkpoint_round_trip() {
    let [tr, va, te] = splits(300, 4, true);
    let config = TrainConfig {
        strategy: Strategy::PME,
        epochs: 2,
        ..TrainConfig::default()
    };
    let scores = initial_scores(&tr, &config, 66).unwrap();
    let out = train_with_scores(&tr, &va, &te, &config, 66, Some(&scores)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.json");
    save_checkpoint(&path, &out.best_model, None).unwrap();
    let (model, opt) = load_checkpoint(&path).unwrap();
    assert!(opt.is_none());
    assert_eq!(model, out.best_model);
    assert_eq!(evaluate(&model, &te).unwrap().metrics, out.report.test);
}

#[test]
fn external_scores_drive_the_same_plans_as_equal_probe_scores() {
    let [tr, va, te] = splits(200, 5, true);
    let config = TrainConfig {
        strategy: Strategy::SME,
        epochs: 1,
        ..TrainConfig::default()
    };
    let probe = initial_scores(&tr, &config, 66).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.jsonl");
    let lines: Vec<String> = probe
        .table
        .distributions
        .iter()
        .enumerate()
        .map(|(id, d)| serde_json::json!({ "id": id, "probs": d.probs() }).to_string())
        .collect();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let external = TrainConfig {
        scores: curriculum_core::trainer::ScoreSourceConfig::External { path },
        ..config.clone()
    };
    let a = train(&tr, &va, &te, &config, 66).unwrap();
    let b = train(&tr, &va, &te, &external, 66).unwrap();
    assert_eq!(a.report.checkpoints, b.report.checkpoints);
    assert_eq!(a.report.test, b.report.test);
}
