//! One function per subcommand.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use pslosses_core::data::{apply_idf, idf_weights, parse_xmc, read_cache, select_top_labels};
use pslosses_core::eval::{evaluate_dataset, EvalConfig};
use pslosses_core::io::{read_propensities, write_propensities};
use pslosses_core::propensity::{empirical_propensity, linear_inverse_by_frequency, EmpiricalModelParams};
use pslosses_core::simulate::{
    generate_linear_datasets, recall_variance_sweep, LinearDataSpec, RecallSweepOptions, SyntheticSpec,
};
use pslosses_core::train::{
    mask_dataset, noise_pattern_gap, predict, prepare_splits, regularization_sweep, train, train_with_trace,
    Regime, Selection, SweepResult, SweepSplits,
};
use pslosses_core::{Error, LinearModel, Propensities, ScoreVector, SparseDataset, UpperBoundForm, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::config::resolve;
use crate::error::{CliError, CliResult};
use crate::output::{create, finish, to_json, write_csv, write_json, Cell, RunRecorder};

const CACHE_MAGIC: &[u8; 8] = b"PSLDATA\0";

/// Stream of the label mask applied by `train --inject-noise`.
const TRAIN_MASK_STREAM: u64 = 4;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Propensity(a) => propensity(a),
        Command::SimulateRecall(a) => simulate_recall(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Train(a) => train_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::GapAnalysis(a) => gap_analysis(a),
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::file(path, e))
}

fn with_path<T>(path: &Path, r: pslosses_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        Error::Io(source) => CliError::file(path, source),
        Error::Parse { line, msg } => CliError::Config { path: path.to_path_buf(), msg: format!("line {line}: {msg}") },
        other => CliError::Core(other),
    })
}

/// Loads the binary cache format or, failing the magic check, the XMC text
/// format.
pub fn load_dataset(path: &Path) -> CliResult<SparseDataset> {
    let mut reader = BufReader::new(open(path)?);
    let head = reader.fill_buf().map_err(|e| CliError::file(path, e))?;
    if head.starts_with(CACHE_MAGIC) {
        with_path(path, read_cache(reader))
    } else {
        with_path(path, parse_xmc(reader))
    }
}

fn load_propensities(path: &Path, num_labels: usize) -> CliResult<Propensities> {
    let p = with_path(path, read_propensities(BufReader::new(open(path)?)))?;
    if p.len() != num_labels {
        return Err(Error::Dimension { expected: num_labels, got: p.len() }.into());
    }
    Ok(p)
}

/// Dense whitespace-separated scores, one row per example. Blank lines and
/// lines starting with `#` are skipped.
fn load_scores(path: &Path, num_examples: usize, num_labels: usize) -> CliResult<Vec<ScoreVector>> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|e| CliError::file(path, e))?;
    let bad = |line: usize, msg: String| CliError::Config { path: path.to_path_buf(), msg: format!("line {line}: {msg}") };
    let mut rows = Vec::with_capacity(num_examples);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(i + 1, format!("bad score '{v}'"))))
            .collect::<CliResult<Vec<f64>>>()?;
        if row.len() != num_labels {
            return Err(bad(i + 1, format!("expected {num_labels} scores, got {}", row.len())));
        }
        rows.push(ScoreVector::new(row));
    }
    if rows.len() != num_examples {
        return Err(Error::Validation(format!(
            "{}: {} score rows for {num_examples} examples",
            path.display(),
            rows.len()
        ))
        .into());
    }
    Ok(rows)
}

fn propensity(a: PropensityArgs) -> CliResult<()> {
    let mut run = RunRecorder::new("propensity");
    let ds = load_dataset(&a.data)?;
    let counts = ds.label_counts();
    let p = match a.model {
        PropensityModel::Empirical => {
            let (Some(pa), Some(pb)) = (a.a, a.b) else {
                return Err(CliError::usage("--model empirical needs --a and --b"));
            };
            let n = a.n.unwrap_or(ds.num_examples() as u64);
            run.config = json!({"model": "empirical", "a": pa, "b": pb, "n": n, "data": a.data});
            empirical_propensity(&EmpiricalModelParams::new(pa, pb, n)?, &counts)?
        }
        PropensityModel::LinearInverse => {
            run.config = json!({"model": "linear_inverse", "top": a.top, "bottom": a.bottom, "data": a.data});
            linear_inverse_by_frequency(&counts, a.top, a.bottom)?
        }
    };
    let mut w = create(&a.out)?;
    with_path(&a.out, write_propensities(&p, &mut w))?;
    finish(&a.out, w)?;
    run.outputs.push(a.out.clone());
    run.write(&a.out)?;
    Ok(())
}

fn simulate_recall(a: SimulateArgs) -> CliResult<()> {
    let mut run = RunRecorder::new("simulate-recall");
    let spec = SyntheticSpec { num_labels: a.labels, label_prob: a.label_prob, num_examples: a.examples, seed: a.seed };
    let opts = RecallSweepOptions {
        skip_empty: a.skip_empty,
        upper_bound_form: match a.upper_bound_form {
            UpperBoundFormArg::ExcludeSelf => UpperBoundForm::ExcludeSelf,
            UpperBoundFormArg::IncludeAll => UpperBoundForm::IncludeAll,
        },
        ..Default::default()
    };
    run.seed = Some(a.seed);
    run.config = to_json(&json!({"spec": spec, "p_grid": a.p_grid, "reps": a.reps, "options": opts}));
    let rows = recall_variance_sweep(&spec, &a.p_grid, a.reps, &opts)?;
    let header: Vec<String> = ["p", "estimator", "mean", "std", "true_recall"].map(String::from).to_vec();
    let cells: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| vec![r.p.into(), r.estimator.name().into(), r.mean.into(), r.std.into(), r.true_recall.into()])
        .collect();
    write_csv(&a.out, &header, &cells)?;
    run.outputs.push(a.out.clone());
    run.write(&a.out)?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let mut run = RunRecorder::new("evaluate");
    let truth = load_dataset(&a.truth)?;
    let scores = match (&a.scores, &a.model) {
        (Some(path), _) => load_scores(path, truth.num_examples(), truth.num_labels())?,
        (None, Some(path)) => {
            let model = with_path(path, LinearModel::read(BufReader::new(open(path)?)))?;
            if model.num_features() != truth.num_features() || model.num_labels() != truth.num_labels() {
                return Err(Error::Validation(format!(
                    "model is {}x{} but the data is {}x{}",
                    model.num_features(),
                    model.num_labels(),
                    truth.num_features(),
                    truth.num_labels()
                ))
                .into());
            }
            predict(&model, &truth)
        }
        (None, None) => return Err(CliError::usage("--scores or --model is required")),
    };
    let p = match &a.propensities {
        Some(path) => Some(load_propensities(path, truth.num_labels())?),
        None => None,
    };
    let cfg = EvalConfig {
        ks: a.k.clone(),
        propensity_scored: a.ps,
        lower_q: a.filter_q,
        upper_q: a.filter_q,
        seed: a.seed,
        ..Default::default()
    };
    run.seed = Some(a.seed);
    run.config = to_json(&json!({"eval": cfg, "truth": a.truth, "scores": a.scores, "model": a.model,
                                 "propensities": a.propensities}));
    let labels: Vec<_> = truth.labels().cloned().collect();
    let report = evaluate_dataset(&labels, &scores, p.as_ref(), &cfg)?;
    let doc = json!({
        "num_examples": truth.num_examples(),
        "filter_quantile": to_json(&a.filter_q),
        "metrics": to_json(&report),
    });
    write_json(&a.out, &doc)?;
    run.outputs.push(a.out.clone());
    run.write(&a.out)?;
    Ok(())
}

fn propensities_for(src: &PropensitySource, train: &SparseDataset) -> CliResult<(Propensities, serde_json::Value)> {
    match (&src.propensities, &src.linear_inverse) {
        (Some(path), _) => Ok((load_propensities(path, train.num_labels())?, json!({"file": path}))),
        (None, Some(tb)) if tb.len() != 2 => Err(CliError::usage("--linear-inverse takes top,bottom")),
        (None, Some(tb)) => Ok((
            linear_inverse_by_frequency(&train.label_counts(), tb[0], tb[1])?,
            json!({"linear_inverse": tb}),
        )),
        (None, None) => Ok((Propensities::uniform(train.num_labels(), 1.0)?, json!("clean"))),
    }
}

/// Applies the label restriction and tf-idf fitted on `train` to every set.
fn preprocess(pre: &Preprocess, train: SparseDataset, others: Vec<SparseDataset>) -> CliResult<Vec<SparseDataset>> {
    let mut sets = vec![train];
    sets.extend(others);
    if let Some(n) = pre.top_labels {
        let keep = select_top_labels(&sets[0], n)?;
        sets = sets.iter().map(|d| d.restrict_labels(&keep)).collect::<pslosses_core::Result<_>>()?;
    }
    if pre.tfidf {
        let idf = idf_weights(&sets[0], pre.idf_smooth)?;
        sets = sets.iter().map(|d| apply_idf(d, &idf)).collect::<pslosses_core::Result<_>>()?;
    }
    if pre.drop_unlabeled {
        sets = sets.iter().map(|d| d.drop_unlabeled()).collect();
    }
    Ok(sets)
}

fn config_json(cfg: &TrainConfig) -> serde_json::Value {
    to_json(&json!({"loss": cfg.loss.to_string(), "link": cfg.link(), "train": cfg}))
}

#[derive(Serialize)]
struct SweepModel {
    l2: f64,
    final_objective: f64,
    path: PathBuf,
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let mut run = RunRecorder::new("train");
    let (cfg, grid) = resolve(&a.train)?;
    let data = preprocess(&a.preprocess, load_dataset(&a.data)?, vec![])?.remove(0);
    let (p, p_source) = propensities_for(&a.propensity, &data)?;
    let data = if a.inject_noise { mask_dataset(&data, &p, cfg.seed, TRAIN_MASK_STREAM)? } else { data };
    run.seed = Some(cfg.seed);
    run.config = json!({"train": config_json(&cfg), "propensities": p_source, "data": a.data,
                        "inject_noise": a.inject_noise, "l2_grid": to_json(&grid)});

    match grid {
        None => {
            let (model, trace) = train_with_trace(&data, &p, &cfg)?;
            write_model(&a.out, &model)?;
            run.outputs.push(a.out.clone());
            if let Some(path) = &a.trace {
                let rows: Vec<Vec<Cell>> = trace
                    .epoch_objective
                    .iter()
                    .enumerate()
                    .map(|(e, &v)| vec![(e + 1).into(), v.into()])
                    .collect();
                write_csv(path, &["epoch".into(), "objective".into()], &rows)?;
                run.outputs.push(path.clone());
            }
            run.summary = to_json(&json!({"final_objective": trace.epoch_objective.last(), "steps": trace.steps}));
            run.write(&a.out)?;
        }
        Some(grid) => {
            std::fs::create_dir_all(&a.out).map_err(|e| CliError::file(&a.out, e))?;
            let trained: Vec<(LinearModel, f64)> = grid
                .par_iter()
                .map(|&l2| {
                    let (m, t) = train_with_trace(&data, &p, &TrainConfig { l2, ..cfg.clone() })?;
                    Ok((m, t.epoch_objective.last().copied().unwrap_or(f64::NAN)))
                })
                .collect::<pslosses_core::Result<_>>()?;
            let mut models = Vec::new();
            for (i, (&l2, (model, objective))) in grid.iter().zip(&trained).enumerate() {
                let path = a.out.join(format!("model-{i:03}.bin"));
                write_model(&path, model)?;
                run.outputs.push(path.clone());
                models.push(SweepModel { l2, final_objective: *objective, path });
            }
            let summary = a.out.join("sweep.csv");
            let rows: Vec<Vec<Cell>> = models
                .iter()
                .map(|m| vec![m.l2.into(), m.final_objective.into(), m.path.display().to_string().into()])
                .collect();
            write_csv(&summary, &["l2".into(), "final_objective".into(), "model".into()], &rows)?;
            run.outputs.push(summary);
            run.summary = to_json(&models);
            run.write(&a.out)?;
        }
    }
    Ok(())
}

fn write_model(path: &Path, model: &LinearModel) -> CliResult<()> {
    let mut w = create(path)?;
    with_path(path, model.write(&mut w))?;
    finish(path, w)
}

struct Experiment {
    splits: SweepSplits,
    p: Propensities,
    description: serde_json::Value,
}

fn experiment(d: &ExperimentData, seed: u64) -> CliResult<Experiment> {
    let (train, test, source) = match (&d.train_data, &d.test_data) {
        (Some(tr), Some(te)) => (load_dataset(tr)?, load_dataset(te)?, json!({"train": tr, "test": te})),
        _ => {
            let spec = LinearDataSpec {
                num_examples: d.synthetic_examples,
                num_features: d.synthetic_features,
                num_labels: d.synthetic_labels,
                seed: d.data_seed,
                ..Default::default()
            };
            let mut sets = generate_linear_datasets(&spec, &[d.synthetic_examples, d.synthetic_examples])?;
            let test = sets.pop().expect("two sets");
            (sets.pop().expect("two sets"), test, to_json(&json!({"synthetic": spec})))
        }
    };
    let mut sets = preprocess(&d.preprocess, train, vec![test])?;
    let test = sets.pop().expect("test set");
    let train = sets.pop().expect("train set");
    let (p, p_source) = match (&d.propensity.propensities, &d.propensity.linear_inverse) {
        (None, None) => (linear_inverse_by_frequency(&train.label_counts(), 2.0, 10.0)?, json!({"linear_inverse": [2.0, 10.0]})),
        _ => propensities_for(&d.propensity, &train)?,
    };
    let splits = prepare_splits(&train, &test, &p, d.val_fraction, seed)?;
    let description = to_json(&json!({"data": source, "propensities": p_source, "val_fraction": d.val_fraction,
                                      "preprocess": {"top_labels": d.preprocess.top_labels, "tfidf": d.preprocess.tfidf,
                                                     "idf_smooth": d.preprocess.idf_smooth,
                                                     "drop_unlabeled": d.preprocess.drop_unlabeled}}));
    Ok(Experiment { splits, p, description })
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let mut run = RunRecorder::new("sweep");
    let (cfg, grid) = resolve(&a.train)?;
    let grid = grid.unwrap_or_else(|| vec![cfg.l2]);
    let exp = experiment(&a.data, cfg.seed)?;
    let selection = a.selection.map(|s| match s {
        SelectionArg::NoisyValUnbiased => Selection::NoisyValUnbiased,
        SelectionArg::CleanValVanilla => Selection::CleanValVanilla,
    });
    let regimes = match a.regime {
        RegimeArg::Clean => vec![Regime::Clean],
        RegimeArg::Noisy => vec![Regime::Noisy],
        RegimeArg::Both => vec![Regime::Clean, Regime::Noisy],
    };
    run.seed = Some(cfg.seed);
    run.config = json!({"train": config_json(&cfg), "l2_grid": to_json(&grid), "experiment": exp.description,
                        "selection": selection});

    let results: Vec<SweepResult> = regimes
        .iter()
        .map(|&r| regularization_sweep(&exp.splits, &exp.p, &cfg, &grid, r, selection))
        .collect::<pslosses_core::Result<_>>()?;

    let ks = &results[0].ks;
    let mut header: Vec<String> = ["regime", "l2", "split", "loss"].map(String::from).to_vec();
    header.extend(ks.iter().map(|k| format!("precision@{k}")));
    header.extend(ks.iter().map(|k| format!("recall@{k}")));
    header.push("selected".into());
    let mut rows = Vec::new();
    for res in &results {
        let regime = to_json(&res.regime).as_str().unwrap_or_default().to_string();
        for row in &res.rows {
            let mut cells: Vec<Cell> =
                vec![regime.clone().into(), row.l2.into(), row.split.name().into(), row.metrics.loss.into()];
            cells.extend(row.metrics.precision.iter().map(|&v| Cell::from(v)));
            cells.extend(row.metrics.recall.iter().map(|&v| Cell::from(v)));
            cells.push((row.l2 == res.best_l2).into());
            rows.push(cells);
        }
    }
    write_csv(&a.out, &header, &rows)?;
    run.outputs.push(a.out.clone());
    run.summary = to_json(
        &results.iter().map(|r| json!({"regime": r.regime, "selection": r.selection, "best_l2": r.best_l2})).collect::<Vec<_>>(),
    );
    run.write(&a.out)?;
    Ok(())
}

fn gap_analysis(a: GapArgs) -> CliResult<()> {
    let mut run = RunRecorder::new("gap-analysis");
    let (cfg, grid) = resolve(&a.train)?;
    let grid = grid.unwrap_or_else(|| vec![cfg.l2]);
    let exp = experiment(&a.data, cfg.seed)?;
    run.seed = Some(cfg.seed);
    run.config = json!({"train": config_json(&cfg), "l2_grid": to_json(&grid), "experiment": exp.description});
    let s = &exp.splits;
    let gaps = grid
        .par_iter()
        .map(|&l2| {
            let model = train(&s.noisy_train, &exp.p, &TrainConfig { l2, ..cfg.clone() })?;
            noise_pattern_gap(&model, &s.clean_train, &s.noisy_train, &s.clean_test, &exp.p, &cfg.loss, cfg.link())
        })
        .collect::<pslosses_core::Result<Vec<_>>>()?;
    let header: Vec<String> =
        ["l2", "true_risk", "clean_empirical", "noisy_estimate", "finite_sample", "noise_pattern", "total"]
            .map(String::from)
            .to_vec();
    let rows: Vec<Vec<Cell>> = grid
        .iter()
        .zip(&gaps)
        .map(|(&l2, g)| {
            vec![
                l2.into(),
                g.true_risk.into(),
                g.clean_empirical.into(),
                g.noisy_estimate.into(),
                g.finite_sample.into(),
                g.noise_pattern.into(),
                g.total.into(),
            ]
        })
        .collect();
    write_csv(&a.out, &header, &rows)?;
    run.outputs.push(a.out.clone());
    run.write(&a.out)?;
    Ok(())
}
