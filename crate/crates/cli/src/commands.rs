use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use curriculum_core::dataset_io::{
    load_dataset_as, stratified_split, DataFormat, Dataset, SplitTag,
};
use curriculum_core::rng::{stream, Purpose};
use curriculum_core::samplers::{write_plan_jsonl, Strategy};
use curriculum_core::scoring::{
    difficulty_score, score_histogram, write_histograms_csv, ClassDistribution, ScoreSource,
    ScoreTable,
};
use curriculum_core::trainer::{
    aggregate_with_gaps, epoch_plans, few_shot_select, format_aggregate_table, initial_scores,
    train_with_scores, write_aggregate_csv, write_checkpoints_csv, InitialScores, RunOutcome,
    RunReport, ScoreSourceConfig, TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{
    prepare_out_dir, prepare_out_file, sidecar_manifest, write_atomic, Manifest, MANIFEST_NAME,
};
use crate::settings::{resolve, Layer, Resolved};
use crate::{
    AnalyzeArgs, CommonArgs, CompareArgs, DataArgs, FewshotArgs, PlanArgs, ScoreArgs, TrainArgs,
    UsageError,
};

pub const SPLIT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

fn resolve_layers(config: Option<&Path>, flags: Layer) -> Result<Resolved> {
    let file = match config {
        Some(p) => Layer::from_file(p)?,
        None => Layer::default(),
    };
    resolve(flags, file)
}

fn command_settings(data: &DataArgs, common: &CommonArgs, extra: Layer) -> Result<Resolved> {
    resolve_layers(
        common.config.as_deref(),
        extra.over(data.layer()).over(common.layer()),
    )
}

fn class_count(r: &Resolved) -> Result<usize> {
    r.class_count.ok_or_else(|| {
        anyhow!(UsageError(
            "class count is required: pass --classes or set data.class_count".into()
        ))
    })
}

fn load(path: &Path, class_count: usize, tag: SplitTag) -> Result<Dataset> {
    let format = DataFormat::from_path(path).ok_or_else(|| {
        anyhow!(UsageError(format!(
            "cannot infer the format of {}: expected a .jsonl or .csv extension",
            path.display()
        )))
    })?;
    Ok(load_dataset_as(path, format, class_count, tag)?)
}

struct Splits {
    train: Dataset,
    validation: Dataset,
    test: Dataset,
}

/// Input files with their manifest roles.
fn data_inputs(data: &DataArgs, common: &CommonArgs) -> Vec<(&'static str, PathBuf)> {
    let mut v = Vec::new();
    for (role, p) in [
        ("data", &data.data),
        ("train", &data.train),
        ("validation", &data.val),
        ("test", &data.test),
        ("scores", &common.scores),
        ("config", &common.config),
    ] {
        if let Some(p) = p {
            v.push((role, p.clone()));
        }
    }
    v
}

fn add_inputs(manifest: &mut Manifest, inputs: &[(&str, PathBuf)], r: &Resolved) -> Result<()> {
    for (role, p) in inputs {
        manifest.add_input(role, p)?;
    }
    // A scores path set only in the config file is still an input.
    if let ScoreSourceConfig::External { path } = &r.train.scores {
        if !inputs.iter().any(|(role, _)| *role == "scores") {
            manifest.add_input("scores", path)?;
        }
    }
    Ok(())
}

/// The dataset to score or plan over: `--data`, or else `--train`.
fn single_dataset(data: &DataArgs, r: &Resolved) -> Result<(Dataset, PathBuf)> {
    let path = data.data.as_ref().or(data.train.as_ref()).ok_or_else(|| {
        anyhow!(UsageError(
            "an input dataset is required: pass --data".into()
        ))
    })?;
    Ok((load(path, class_count(r)?, SplitTag::Train)?, path.clone()))
}

fn load_splits(data: &DataArgs, r: &Resolved) -> Result<Splits> {
    let c = class_count(r)?;
    if let Some(path) = &data.data {
        let full = load(path, c, SplitTag::Train)?;
        let mut parts = stratified_split(&full, &SPLIT_FRACTIONS, r.split_seed)?.into_iter();
        let mut next = || {
            parts
                .next()
                .expect("three fractions give three splits")
                .dataset
        };
        return Ok(Splits {
            train: next(),
            validation: next(),
            test: next(),
        });
    }
    match (&data.train, &data.val, &data.test) {
        (Some(tr), Some(va), Some(te)) => Ok(Splits {
            train: load(tr, c, SplitTag::Train)?,
            validation: load(va, c, SplitTag::Validation)?,
            test: load(te, c, SplitTag::Test)?,
        }),
        _ => bail!(UsageError(
            "pass either --data or all of --train, --val and --test".into()
        )),
    }
}

fn needs_initial_scores(config: &TrainConfig) -> bool {
    config.strategy.needs_scores() || config.rescore
}

fn run_stem(strategy: Strategy, seed: u64) -> String {
    format!("{}_seed{seed}", strategy.name())
}

/// Writes the report, progression CSV and (when present) histograms of
/// one run; returns the file names written.
fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<Vec<String>> {
    let mut report: RunReport = outcome.report.clone();
    report.manifest = Some(MANIFEST_NAME.to_string());
    let stem = run_stem(report.strategy, report.seed);
    let mut written = Vec::new();

    let name = format!("report_{stem}.json");
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    write_atomic(&dir.join(&name), &bytes)?;
    written.push(name);

    let name = format!("checkpoints_{stem}.csv");
    let mut buf = Vec::new();
    write_checkpoints_csv(&report, &mut buf)?;
    write_atomic(&dir.join(&name), &buf)?;
    written.push(name);

    if !report.histograms.is_empty() {
        let name = format!("histograms_{stem}.csv");
        let mut buf = Vec::new();
        write_histograms_csv(&report.histograms, &mut buf)?;
        write_atomic(&dir.join(&name), &buf)?;
        written.push(name);
    }
    Ok(written)
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    id: usize,
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

pub fn score(a: &ScoreArgs) -> Result<bool> {
    let r = command_settings(&a.data, &a.common, Layer::default())?;
    let (dataset, _) = single_dataset(&a.data, &r)?;
    prepare_out_file(&a.common.out, a.common.force)?;
    let mut manifest = Manifest::new("score", r.to_flat_json());
    add_inputs(&mut manifest, &data_inputs(&a.data, &a.common), &r)?;

    let seed = r.train.seeds[0];
    let table = initial_scores(&dataset, &r.train, seed)?.table;
    let mut out = Vec::new();
    for (id, (dist, &score)) in table.distributions.iter().zip(&table.scores).enumerate() {
        serde_json::to_writer(
            &mut out,
            &ScoreLine {
                id,
                probs: dist.probs().to_vec(),
                score: Some(score),
            },
        )?;
        out.push(b'\n');
    }
    write_atomic(&a.common.out, &out)?;
    manifest.outputs.push(a.common.out.display().to_string());
    manifest.write(&sidecar_manifest(&a.common.out))?;
    Ok(true)
}

pub fn plan(a: &PlanArgs) -> Result<bool> {
    let extra = Layer {
        strategy: a.strategy,
        epochs: a.epochs,
        batch_size: a.batch_size,
        ..Default::default()
    };
    let r = command_settings(&a.data, &a.common, extra)?;
    let (dataset, _) = single_dataset(&a.data, &r)?;
    prepare_out_file(&a.common.out, a.common.force)?;
    let mut manifest = Manifest::new("plan", r.to_flat_json());
    add_inputs(&mut manifest, &data_inputs(&a.data, &a.common), &r)?;

    let seed = r.train.seeds[0];
    let scores = if r.train.strategy.needs_scores() {
        Some(initial_scores(&dataset, &r.train, seed)?.table)
    } else {
        None
    };
    let plans = epoch_plans(&dataset, &r.train, seed, scores.as_ref())?;
    let mut out = Vec::new();
    write_plan_jsonl(&plans, &mut out)?;
    write_atomic(&a.common.out, &out)?;
    manifest.outputs.push(a.common.out.display().to_string());
    manifest.write(&sidecar_manifest(&a.common.out))?;
    Ok(true)
}

fn training_settings(
    data: &DataArgs,
    common: &CommonArgs,
    training: &crate::TrainingArgs,
    extra: Layer,
) -> Result<Resolved> {
    command_settings(data, common, extra.over(training.layer()))
}

fn report_failure(manifest: &mut Manifest, what: String, e: &anyhow::Error) {
    let line = format!("{what}: {e:#}");
    eprintln!("error: {line}");
    manifest.failures.push(line);
}

pub fn train(a: &TrainArgs) -> Result<bool> {
    let extra = Layer {
        strategy: a.strategy,
        ..Default::default()
    };
    let r = training_settings(&a.data, &a.common, &a.training, extra)?;
    let splits = load_splits(&a.data, &r)?;
    prepare_out_dir(&a.common.out, a.common.force)?;
    let mut manifest = Manifest::new("train", r.to_flat_json());
    add_inputs(&mut manifest, &data_inputs(&a.data, &a.common), &r)?;

    for &seed in &r.train.seeds {
        let result = (|| -> Result<Vec<String>> {
            let scores = needs_initial_scores(&r.train)
                .then(|| initial_scores(&splits.train, &r.train, seed))
                .transpose()?;
            let outcome = train_with_scores(
                &splits.train,
                &splits.validation,
                &splits.test,
                &r.train,
                seed,
                scores.as_ref(),
            )?;
            write_run(&a.common.out, &outcome)
        })();
        match result {
            Ok(files) => manifest.outputs.extend(files),
            Err(e) => report_failure(&mut manifest, run_stem(r.train.strategy, seed), &e),
        }
    }
    let ok = manifest.failures.is_empty();
    manifest.write(&a.common.out.join(MANIFEST_NAME))?;
    Ok(ok)
}

#[derive(Serialize)]
struct Selection<'a> {
    strategy: Strategy,
    seed: u64,
    k: usize,
    parent_ids: &'a [usize],
}

pub fn fewshot(a: &FewshotArgs) -> Result<bool> {
    let extra = Layer {
        strategy: a.strategy,
        k: a.k.map(|k| k as usize),
        ..Default::default()
    };
    let r = training_settings(&a.data, &a.common, &a.training, extra)?;
    let splits = load_splits(&a.data, &r)?;
    if r.k > splits.train.len() {
        bail!(UsageError(format!(
            "k = {} exceeds the training split size {}",
            r.k,
            splits.train.len()
        )));
    }
    prepare_out_dir(&a.common.out, a.common.force)?;
    let mut manifest = Manifest::new("fewshot", r.to_flat_json());
    add_inputs(&mut manifest, &data_inputs(&a.data, &a.common), &r)?;
    let config = &r.train;

    for &seed in &config.seeds {
        let result = (|| -> Result<Vec<String>> {
            let full_scores = config
                .strategy
                .needs_scores()
                .then(|| initial_scores(&splits.train, config, seed))
                .transpose()?;
            let mut rng = stream(seed, Purpose::FewShot, 0);
            let subset = few_shot_select(
                config.strategy,
                full_scores.as_ref().map(|s| &s.table),
                &splits.train,
                r.k,
                &config.plan_config(),
                &mut rng,
            )?;
            // Rescoring analyses the subset itself, so it needs scores even
            // when the strategy does not.
            let full_scores = match full_scores {
                None if config.rescore => Some(initial_scores(&splits.train, config, seed)?),
                other => other,
            };
            let scores: Option<InitialScores> = full_scores.map(|s| s.select(&subset.parent_ids));
            let outcome = train_with_scores(
                &subset.dataset,
                &splits.validation,
                &splits.test,
                config,
                seed,
                scores.as_ref(),
            )?;
            let mut files = write_run(&a.common.out, &outcome)?;
            let name = format!("selection_{}.json", run_stem(config.strategy, seed));
            let mut bytes = serde_json::to_vec_pretty(&Selection {
                strategy: config.strategy,
                seed,
                k: r.k,
                parent_ids: &subset.parent_ids,
            })?;
            bytes.push(b'\n');
            write_atomic(&a.common.out.join(&name), &bytes)?;
            files.push(name);
            Ok(files)
        })();
        match result {
            Ok(files) => manifest.outputs.extend(files),
            Err(e) => report_failure(&mut manifest, run_stem(config.strategy, seed), &e),
        }
    }
    let ok = manifest.failures.is_empty();
    manifest.write(&a.common.out.join(MANIFEST_NAME))?;
    Ok(ok)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

/// Orders records by id, requiring ids to be exactly `0..n`.
fn dense_by_id<T>(path: &Path, records: Vec<T>, id: impl Fn(&T) -> usize) -> Result<Vec<T>> {
    let n = records.len();
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for rec in records {
        let i = id(&rec);
        if i >= n {
            bail!("{}: id {i} out of range for {n} records", path.display());
        }
        if slots[i].is_some() {
            bail!("{}: duplicate id {i}", path.display());
        }
        slots[i] = Some(rec);
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("n records fill n slots"))
        .collect())
}

fn read_score_table(path: &Path) -> Result<ScoreTable> {
    let lines = dense_by_id(path, read_jsonl::<ScoreLine>(path)?, |l| l.id)?;
    let dists = lines
        .into_iter()
        .map(|l| {
            let d = ClassDistribution::new(l.probs)
                .with_context(|| format!("{}: id {}", path.display(), l.id))?;
            difficulty_score(&d).with_context(|| format!("{}: id {}", path.display(), l.id))?;
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::from_distributions(
        dists,
        ScoreSource::External,
    )?)
}

#[derive(Deserialize)]
struct PredictionLine {
    id: usize,
    predicted: usize,
    label: usize,
}

pub fn analyze(a: &AnalyzeArgs) -> Result<bool> {
    let flags = Layer {
        bins: a.bins.map(|b| b as usize),
        ..Default::default()
    };
    let r = resolve_layers(a.config.as_deref(), flags)?;
    let np = a.predictions.len();
    if np > 1 && np != a.scores.len() {
        bail!(UsageError(format!(
            "got {np} prediction files for {} score files: pass one for all or one per score file",
            a.scores.len()
        )));
    }
    prepare_out_file(&a.out, a.force)?;
    let mut manifest = Manifest::new("analyze", r.to_flat_json());
    for p in &a.scores {
        manifest.add_input("scores", p)?;
    }
    for p in &a.predictions {
        manifest.add_input("predictions", p)?;
    }
    if let Some(c) = &a.config {
        manifest.add_input("config", c)?;
    }

    let predictions = a
        .predictions
        .iter()
        .map(|p| {
            let lines = dense_by_id(p, read_jsonl::<PredictionLine>(p)?, |l| l.id)?;
            Ok((
                p.clone(),
                lines.iter().map(|l| l.predicted).collect::<Vec<_>>(),
                lines.iter().map(|l| l.label).collect::<Vec<_>>(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    for (tag, path) in a.scores.iter().enumerate() {
        let table = read_score_table(path)?;
        let pred = match predictions.len() {
            0 => None,
            1 => Some(&predictions[0]),
            _ => Some(&predictions[tag]),
        };
        if let Some((ppath, p, _)) = pred {
            if p.len() != table.len() {
                bail!(
                    "mismatched ids: {} has ids 0..{} but {} has ids 0..{}",
                    path.display(),
                    table.len(),
                    ppath.display(),
                    p.len()
                );
            }
        }
        let pair = pred.map(|(_, p, g)| (p.as_slice(), g.as_slice()));
        reports.push(score_histogram(&table, pair, r.train.bins, tag)?);
    }
    let mut out = Vec::new();
    write_histograms_csv(&reports, &mut out)?;
    write_atomic(&a.out, &out)?;
    manifest.outputs.push(a.out.display().to_string());
    manifest.write(&sidecar_manifest(&a.out))?;
    Ok(true)
}

/// One grid cell: its report and the files written, or the failure.
type CellResult = (Strategy, u64, Result<(RunReport, Vec<String>)>);

pub fn compare(a: &CompareArgs) -> Result<bool> {
    let extra = Layer {
        strategies: (!a.strategies.is_empty()).then(|| a.strategies.clone()),
        jobs: a.jobs,
        ..Default::default()
    };
    let r = training_settings(&a.data, &a.common, &a.training, extra)?;
    if r.strategies.is_empty() {
        bail!(UsageError(format!(
            "empty strategy list: pass --strategy (one or more of {})",
            Strategy::ALL.map(|s| s.name()).join(", ")
        )));
    }
    let splits = load_splits(&a.data, &r)?;
    prepare_out_dir(&a.common.out, a.common.force)?;
    let mut manifest = Manifest::new("compare", r.to_flat_json());
    add_inputs(&mut manifest, &data_inputs(&a.data, &a.common), &r)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(r.jobs)
        .build()
        .context("cannot start worker pool")?;

    let configs: Vec<TrainConfig> = r
        .strategies
        .iter()
        .map(|&strategy| TrainConfig {
            strategy,
            ..r.train.clone()
        })
        .collect();
    let seeds = &r.train.seeds;
    let score_needed = configs.iter().any(needs_initial_scores);

    let (scores_by_seed, results) = pool.install(|| {
        // Initial scores depend only on the seed; compute each once.
        let scores_by_seed: BTreeMap<u64, std::result::Result<InitialScores, String>> =
            if score_needed {
                seeds
                    .par_iter()
                    .map(|&seed| {
                        let s = initial_scores(&splits.train, &r.train, seed)
                            .map_err(|e| e.to_string());
                        (seed, s)
                    })
                    .collect()
            } else {
                BTreeMap::new()
            };
        let cells: Vec<(&TrainConfig, u64)> = configs
            .iter()
            .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
            .collect();
        let results: Vec<CellResult> = cells
            .par_iter()
            .map(|&(config, seed)| {
                let result = (|| {
                    let scores = if needs_initial_scores(config) {
                        match &scores_by_seed[&seed] {
                            Ok(s) => Some(s),
                            Err(e) => bail!("initial scoring failed: {e}"),
                        }
                    } else {
                        None
                    };
                    let outcome = train_with_scores(
                        &splits.train,
                        &splits.validation,
                        &splits.test,
                        config,
                        seed,
                        scores,
                    )?;
                    let files = write_run(&a.common.out, &outcome)?;
                    Ok((outcome.report, files))
                })();
                (config.strategy, seed, result)
            })
            .collect();
        (scores_by_seed, results)
    });
    drop(scores_by_seed);

    let mut groups: Vec<(Strategy, Vec<RunReport>)> =
        r.strategies.iter().map(|&s| (s, Vec::new())).collect();
    for (strategy, seed, result) in results {
        match result {
            Ok((report, files)) => {
                manifest.outputs.extend(files);
                let slot = groups
                    .iter_mut()
                    .find(|(s, _)| *s == strategy)
                    .expect("grid row");
                slot.1.push(report);
            }
            Err(e) => report_failure(&mut manifest, run_stem(strategy, seed), &e),
        }
    }
    let rows = aggregate_with_gaps(&groups, seeds);
    let mut csv = Vec::new();
    write_aggregate_csv(&rows, &mut csv)?;
    write_atomic(&a.common.out.join("aggregate.csv"), &csv)?;
    let table = format_aggregate_table(&rows);
    write_atomic(&a.common.out.join("aggregate.txt"), table.as_bytes())?;
    print!("{table}");
    manifest
        .outputs
        .extend(["aggregate.csv".to_string(), "aggregate.txt".to_string()]);

    let ok = manifest.failures.is_empty();
    manifest.write(&a.common.out.join(MANIFEST_NAME))?;
    Ok(ok)
}
