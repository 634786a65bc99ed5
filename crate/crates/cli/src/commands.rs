use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use wcnn::adversarial::{evaluate_robustness, AttackConfig};
use wcnn::data::{boundary_dataset, load_cifar_bin, load_dataset, load_idx, Dataset, Split};
use wcnn::expressibility::{compare_trends, fit_decay, sweep, SweepConfig};
use wcnn::nn::{load_checkpoint, save_checkpoint, train, variable_count_report, Model, ModelSpec, TrainConfig, TrainReport};
use wcnn::rng;

use crate::config::{DatasetFormat, ExperimentConfig, ModelConfig};
use crate::output::{write_csv, write_record, ExperimentRecord};
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    SweepNr,
    Express,
    Attack,
    Qdemo,
    Report,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Train,
        Command::SweepNr,
        Command::Express,
        Command::Attack,
        Command::Qdemo,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::SweepNr => "sweep-nr",
            Command::Express => "express",
            Command::Attack => "attack",
            Command::Qdemo => "qdemo",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown command {s:?}")))
    }
}

/// Validates the config for `command`, runs it inside a pool of
/// `config.workers` threads and writes the outputs under `config.out`.
pub fn run(command: Command, config: &ExperimentConfig) -> CliResult<ExperimentRecord> {
    config.validate_common()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let hash = config.hash(command.name());
    let (metrics, summary, seeds) = pool.install(|| match command {
        Command::Train => cmd_train(config, &hash),
        Command::SweepNr => cmd_sweep_nr(config, &hash),
        Command::Express => cmd_express(config, &hash),
        Command::Attack => cmd_attack(config, &hash),
        Command::Qdemo => cmd_qdemo(config, &hash),
        Command::Report => cmd_report(config, &hash),
    })?;
    let record = ExperimentRecord {
        command: command.name().to_string(),
        config: config.clone(),
        config_hash: hash,
        seeds,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        metrics,
        summary,
    };
    write_record(&config.out, &record)?;
    Ok(record)
}

type Outcome = CliResult<(Vec<Value>, Value, Vec<u64>)>;

fn finish<T: Serialize>(out: &Path, rows: &[T], summary: Value, seeds: Vec<u64>) -> Outcome {
    write_csv(out, "metrics.csv", rows)?;
    let values = rows.iter().map(serde_json::to_value).collect::<Result<Vec<_>, _>>()?;
    Ok((values, summary, seeds))
}

/// Loads the configured train and test splits, reduced to the selected
/// classes and sizes.
pub fn load_data(config: &ExperimentConfig) -> CliResult<(Dataset, Dataset)> {
    config.validate_dataset()?;
    let d = &config.dataset;
    let dir = &d.dir;
    let (train_full, test_full) = match d.format {
        DatasetFormat::Idx => (
            load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
                Split::Train,
            )?,
            load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
                Split::Test,
            )?,
        ),
        DatasetFormat::Cifar => {
            let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            let refs: Vec<&Path> = batches.iter().map(PathBuf::as_path).collect();
            (
                load_cifar_bin(&refs, Split::Train)?,
                load_cifar_bin(&[&dir.join("test_batch.bin")], Split::Test)?,
            )
        }
        DatasetFormat::Saved => (load_dataset(dir, "train")?, load_dataset(dir, "test")?),
    };
    let train = train_full.select_classes(&d.classes, d.train_n, d.seed)?;
    let test = test_full.select_classes(&d.classes, d.test_n, d.seed)?;
    Ok((train, test))
}

fn resolve_models(models: &[ModelConfig], data: &Dataset) -> CliResult<Vec<(String, ModelSpec)>> {
    if models.is_empty() {
        return Err(CliError::Config("model list is empty".into()));
    }
    models
        .iter()
        .map(|m| Ok((m.label(), m.resolve(data.sample_shape(), data.n_classes())?)))
        .collect()
}

fn check_train(t: &TrainConfig) -> CliResult<()> {
    if t.batch_size == 0 {
        return Err(CliError::Config("batch_size must be positive".into()));
    }
    if !(t.lr > 0.0) || !t.lr.is_finite() {
        return Err(CliError::Config(format!("learning rate {} must be positive", t.lr)));
    }
    Ok(())
}

fn fit_model(spec: &ModelSpec, train_set: &Dataset, test: &Dataset, train_cfg: &TrainConfig, seed: u64) -> CliResult<(Model, TrainReport)> {
    let mut model = Model::build(spec, seed)?;
    let cfg = TrainConfig { seed, ..*train_cfg };
    let report = train(&mut model, train_set, test, &cfg)?;
    Ok((model, report))
}

#[derive(Debug, Serialize)]
struct TrainRow<'a> {
    model: &'a str,
    seed: u64,
    epoch: usize,
    train_loss: f64,
    train_accuracy: f64,
    test_loss: f64,
    test_accuracy: f64,
    config_hash: &'a str,
}

fn cmd_train(config: &ExperimentConfig, hash: &str) -> Outcome {
    check_train(&config.train)?;
    let (train_set, test) = load_data(config)?;
    let models = resolve_models(&config.models, &train_set)?;
    let jobs: Vec<(usize, u64)> = (0..models.len())
        .flat_map(|m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let (model, report) = fit_model(&models[m].1, &train_set, &test, &config.train, seed)?;
            let dir = config
                .out
                .join("checkpoints")
                .join(format!("{}-seed{seed}", models[m].1.arch.tag()));
            save_checkpoint(&model, &dir)?;
            Ok((m, seed, model.n_variables(), report))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (m, seed, n_variables, report) in &results {
        let name = models[*m].0.as_str();
        for e in std::iter::once(&report.initial).chain(&report.epochs) {
            rows.push(TrainRow {
                config_hash: hash,
                model: name,
                seed: *seed,
                epoch: e.epoch,
                train_loss: e.train_loss,
                train_accuracy: e.train_accuracy,
                test_loss: e.test_loss,
                test_accuracy: e.test_accuracy,
            });
        }
        runs.push(json!({
            "model": name,
            "seed": seed,
            "n_variables": n_variables,
            "best_epoch": report.best_epoch,
            "accuracy": report.accuracy,
            "checksum": report.checksum,
            "wall_clock_s": report.wall_clock_s,
        }));
    }
    finish(&config.out, &rows, json!({ "runs": runs }), config.seeds.clone())
}

#[derive(Debug, Serialize)]
struct SweepRow<'a> {
    model: &'a str,
    #[serde(rename = "N")]
    n_angles: usize,
    r: usize,
    seed: u64,
    best_epoch: usize,
    accuracy: f64,
    config_hash: &'a str,
}

#[derive(Debug, Serialize)]
struct CellRow<'a> {
    #[serde(rename = "N")]
    n_angles: usize,
    r: usize,
    runs: usize,
    best: f64,
    median: f64,
    seeds: &'a str,
    config_hash: &'a str,
}

/// Space-separated seed list for rows that summarize several runs.
fn join_seeds(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn cmd_sweep_nr(config: &ExperimentConfig, hash: &str) -> Outcome {
    let s = &config.sweep_nr;
    if s.n_values.is_empty() || s.r_values.is_empty() || s.runs_per_cell == 0 {
        return Err(CliError::Config("sweep grid and runs_per_cell must be non-empty".into()));
    }
    if !s.arch.is_constrained() {
        return Err(CliError::Config(format!("sweep-nr needs a constrained model, got {}", s.arch.tag())));
    }
    check_train(&config.train)?;
    let (train_set, test) = load_data(config)?;
    let mut cells = Vec::new();
    for &n in &s.n_values {
        for &r in &s.r_values {
            let mc = ModelConfig {
                hidden: config.models.iter().find(|m| m.arch == s.arch).and_then(|m| m.hidden.clone()),
                ..ModelConfig::constrained(s.arch, n, r)
            };
            cells.push((n, r, mc.label(), mc.resolve(train_set.sample_shape(), train_set.n_classes())?));
        }
    }
    let base = config.seeds[0];
    let seeds: Vec<u64> = (0..s.runs_per_cell as u64).map(|i| base + i).collect();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&sd| (c, sd)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(c, seed)| Ok(fit_model(&cells[c].3, &train_set, &test, &config.train, seed)?.1))
        .collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<SweepRow> = jobs
        .iter()
        .zip(&reports)
        .map(|(&(c, seed), rep)| SweepRow {
            config_hash: hash,
            model: &cells[c].2,
            n_angles: cells[c].0,
            r: cells[c].1,
            seed,
            best_epoch: rep.best_epoch,
            accuracy: rep.accuracy,
        })
        .collect();
    let seed_list = join_seeds(&seeds);
    let cell_rows: Vec<CellRow> = cells
        .iter()
        .map(|(n, r, _, _)| {
            let mut acc: Vec<f64> = rows
                .iter()
                .filter(|row| row.n_angles == *n && row.r == *r)
                .map(|row| row.accuracy)
                .collect();
            CellRow {
                config_hash: hash,
                n_angles: *n,
                r: *r,
                runs: acc.len(),
                best: acc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                median: median(&mut acc),
                seeds: &seed_list,
            }
        })
        .collect();
    write_csv(&config.out, "cells.csv", &cell_rows)?;
    let summary = json!({ "cells": serde_json::to_value(&cell_rows)? });
    finish(&config.out, &rows, summary, seeds)
}

#[derive(Debug, Serialize)]
struct ExpressRow<'a> {
    #[serde(rename = "N")]
    n_angles: usize,
    r: usize,
    kl: f64,
    kl_inv: f64,
    delta: f64,
    delta_inv: f64,
    samples: usize,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Debug, Serialize)]
struct FitRow<'a> {
    #[serde(rename = "N")]
    n_angles: usize,
    seed: u64,
    decay_base: f64,
    decay_base_lo: f64,
    decay_base_hi: f64,
    decay_r2: f64,
    delta_inv_linear_rss: f64,
    delta_inv_exponential_rss: f64,
    delta_inv_linear_wins: bool,
    config_hash: &'a str,
}

fn cmd_express(config: &ExperimentConfig, hash: &str) -> Outcome {
    let e = &config.express;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut baselines = Vec::new();
    for &seed in &config.seeds {
        let result = sweep(&SweepConfig {
            n_values: e.n_values.clone(),
            r_values: e.r_values.clone(),
            dim: e.dim,
            samples: e.samples,
            seed,
            mode: e.mode,
        })?;
        baselines.push(json!({ "seed": seed, "mean": result.baseline.mean, "delta": result.baseline.delta }));
        rows.extend(result.cells.iter().map(|c| ExpressRow {
            config_hash: hash,
            n_angles: c.n_angles,
            r: c.r,
            seed,
            samples: c.samples,
            kl: c.kl,
            kl_inv: c.kl_inv,
            delta: c.delta,
            delta_inv: c.delta_inv,
        }));
        for &n in &e.n_values {
            let cells: Vec<_> = result.cells.iter().filter(|c| c.n_angles == n).collect();
            if cells.len() < 4 {
                continue;
            }
            let r: Vec<f64> = cells.iter().map(|c| c.r as f64).collect();
            let kl_inv: Vec<f64> = cells.iter().map(|c| c.kl_inv).collect();
            let delta_inv: Vec<f64> = cells.iter().map(|c| c.delta_inv).collect();
            let decay = fit_decay(&r, &kl_inv)?;
            let trend = compare_trends(&r, &delta_inv)?;
            fits.push(FitRow {
                config_hash: hash,
                n_angles: n,
                seed,
                decay_base: decay.base,
                decay_base_lo: decay.base_ci.0,
                decay_base_hi: decay.base_ci.1,
                decay_r2: decay.r2,
                delta_inv_linear_rss: trend.linear.rss,
                delta_inv_exponential_rss: trend.exponential_rss,
                delta_inv_linear_wins: trend.linear_wins,
            });
        }
    }
    write_csv(&config.out, "fits.csv", &fits)?;
    let summary = json!({ "baselines": baselines, "fits": serde_json::to_value(&fits)? });
    finish(&config.out, &rows, summary, config.seeds.clone())
}

#[derive(Debug, Serialize)]
struct AttackRow<'a> {
    model: &'a str,
    seed: u64,
    p: f64,
    epsilon: f64,
    accuracy: f64,
    n_samples: usize,
    config_hash: &'a str,
}

fn cmd_attack(config: &ExperimentConfig, hash: &str) -> Outcome {
    let a = &config.attack;
    let attack = |seed| AttackConfig {
        epsilons: a.epsilons.clone(),
        dropout_ps: a.dropout_ps.clone(),
        seed,
    };
    attack(0).validate()?;
    if let Some(path) = &a.checkpoint {
        if !path.is_dir() {
            return Err(CliError::Config(format!("checkpoint {} does not exist", path.display())));
        }
    } else {
        check_train(&config.train)?;
        if !a.model.arch.supports_dropout() && a.dropout_ps.iter().any(|&p| p > 0.0) {
            return Err(CliError::Config(format!(
                "{} has no trigonometric factors or Rz gates to drop",
                a.model.arch.tag()
            )));
        }
    }
    let (train_set, test) = load_data(config)?;
    let label = a.model.label();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let model = match &a.checkpoint {
            Some(path) => load_checkpoint(path)?,
            None => {
                let spec = a.model.resolve(train_set.sample_shape(), train_set.n_classes())?;
                let (model, report) = fit_model(&spec, &train_set, &test, &config.train, seed)?;
                save_checkpoint(&model, &config.out.join("checkpoints").join(format!("{}-seed{seed}", spec.arch.tag())))?;
                runs.push(json!({ "seed": seed, "accuracy": report.accuracy, "checksum": report.checksum }));
                model
            }
        };
        for &p in &a.dropout_ps {
            model.dropout_draw(p, 0)?;
        }
        let curve = evaluate_robustness(&model, &test, &attack(seed))?;
        rows.extend(curve.points.iter().map(|pt| AttackRow {
            config_hash: hash,
            model: &label,
            seed,
            p: pt.p,
            epsilon: pt.epsilon,
            accuracy: pt.accuracy,
            n_samples: pt.n_samples,
        }));
    }
    finish(&config.out, &rows, json!({ "trained": runs }), config.seeds.clone())
}

#[derive(Debug, Serialize)]
struct QdemoRow<'a> {
    encoding: &'a str,
    boundary: &'a str,
    seed: u64,
    initial_accuracy: f64,
    best_epoch: usize,
    accuracy: f64,
    config_hash: &'a str,
}

fn cmd_qdemo(config: &ExperimentConfig, hash: &str) -> Outcome {
    let q = &config.qdemo;
    if q.encodings.is_empty() || q.boundaries.is_empty() {
        return Err(CliError::Config("qdemo needs at least one encoding and one boundary".into()));
    }
    check_train(&q.train)?;
    let mut jobs = Vec::new();
    for &seed in &config.seeds {
        for &boundary in &q.boundaries {
            for &encoding in &q.encodings {
                let spec = ModelSpec::hnn(encoding, [1, 1, 2], 2, q.circuit_depth);
                spec.validate()?;
                jobs.push((seed, boundary, encoding, spec));
            }
        }
    }
    let reports = jobs
        .par_iter()
        .map(|(seed, boundary, _, spec)| {
            let tr = boundary_dataset(*boundary, q.train_n, rng::derive_seed(*seed, &[0]))?.to_dataset(Split::Train)?;
            let te = boundary_dataset(*boundary, q.test_n, rng::derive_seed(*seed, &[1]))?.to_dataset(Split::Test)?;
            Ok(fit_model(spec, &tr, &te, &q.train, *seed)?.1)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let names: Vec<(String, String)> = jobs
        .iter()
        .map(|(_, b, e, _)| (json_name(e), json_name(b)))
        .collect();
    let rows: Vec<QdemoRow> = jobs
        .iter()
        .zip(&reports)
        .zip(&names)
        .map(|(((seed, _, _, _), rep), (e, b))| QdemoRow {
            config_hash: hash,
            encoding: e,
            boundary: b,
            seed: *seed,
            initial_accuracy: rep.initial.test_accuracy,
            best_epoch: rep.best_epoch,
            accuracy: rep.accuracy,
        })
        .collect();
    let mut margins = Vec::new();
    for &seed in &config.seeds {
        for b in &q.boundaries {
            let b = json_name(b);
            let find = |enc: &str| {
                rows.iter()
                    .find(|r| r.seed == seed && r.boundary == b && r.encoding == enc)
                    .map(|r| r.accuracy)
            };
            if let (Some(angle), Some(amp)) = (find("angle"), find("amplitude")) {
                margins.push(json!({ "seed": seed, "boundary": b, "angle_minus_amplitude": angle - amp }));
            }
        }
    }
    finish(&config.out, &rows, json!({ "margins": margins }), config.seeds.clone())
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    model: &'a str,
    layer: usize,
    kind: &'a str,
    variables: usize,
    unconstrained: usize,
    seeds: &'a str,
    config_hash: &'a str,
}

fn cmd_report(config: &ExperimentConfig, hash: &str) -> Outcome {
    let rc = &config.report;
    if config.models.is_empty() {
        return Err(CliError::Config("model list is empty".into()));
    }
    let mut reports = Vec::new();
    for m in &config.models {
        let spec = m.resolve(rc.input_shape, rc.n_classes)?;
        reports.push((m.label(), variable_count_report(&spec)?));
    }
    let seed_list = join_seeds(&config.seeds);
    let mut rows = Vec::new();
    let mut totals = Vec::new();
    for (name, rep) in &reports {
        for l in &rep.layers {
            rows.push(ReportRow {
                config_hash: hash,
                model: name,
                layer: l.layer,
                kind: &l.kind,
                variables: l.variables,
                unconstrained: l.unconstrained,
                seeds: &seed_list,
            });
        }
        totals.push(json!({
            "model": name,
            "total": rep.total,
            "unconstrained_total": rep.unconstrained_total,
            "layer_ratio": rep.layer_ratio,
            "network_ratio": rep.network_ratio,
        }));
    }
    finish(&config.out, &rows, json!({ "models": totals }), config.seeds.clone())
}
