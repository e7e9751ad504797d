use std::io::Write;
use std::path::{Path, PathBuf};

use eapred::data::{
    generate_synthetic, ingest, read_store, write_store, Dataset, DatasetManifest, IngestConfig, EVENTS_FILE, FUNDAMENTALS_FILE,
    MANIFEST_FILE as DATASET_MANIFEST, NEWS_FILE, PRICES_FILE,
};
use eapred::evaluation::{ablation_report, render_table, EvaluationReport};
use eapred::exec::Execution;
use eapred::features::{read_windows, write_windows, FeatureMask, Sample, WindowStoreHeader, SPLIT_NAMES};
use eapred::labeling::{distribution, render_labels};
use eapred::models::{load_params, write_checkpoint, Checkpoint, ModelConfig, ModelKind, ModelParams};
use eapred::numerics::GradCheckConfig;
use eapred::pipeline::{evaluate, fit_samples, prepare_dataset, ExperimentConfig, FitOutcome};
use eapred::training::{check_model_gradients, gradient_suite, reduced_config, Control, EpochLog, LossSpec, TrainError};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Kind};
use crate::run::RunDir;

const DATA_FILES: [&str; 5] = [PRICES_FILE, FUNDAMENTALS_FILE, NEWS_FILE, EVENTS_FILE, DATASET_MANIFEST];

pub struct Context {
    pub cfg: RunConfig,
    pub exec: Execution,
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
    s.push('\n');
    s.into_bytes()
}

fn mask_tag(mask: FeatureMask) -> &'static str {
    if mask.uses_sentiment() {
        "with_sentiment"
    } else {
        "without_sentiment"
    }
}

/// File name of one split under one mask inside `windows/`.
pub fn window_file(split: &str, mask: FeatureMask) -> String {
    format!("windows/{split}_d{}.bin", mask.dim())
}

fn store_dataset(run: &mut RunDir, dataset: &Dataset) -> CliResult<DatasetManifest> {
    let manifest = write_store(dataset, &run.path.join("dataset"))?;
    for f in DATA_FILES {
        run.record(&format!("dataset/{f}"))?;
    }
    run.dataset_digest = Some(manifest.digest.clone());
    Ok(manifest)
}

/// Loads the dataset named by the config: a store, a raw directory, or
/// generated data.
fn load_dataset(ctx: &Context, run: &mut RunDir) -> CliResult<Dataset> {
    let d = &ctx.cfg.data;
    if let Some(store) = &d.store {
        let (dataset, manifest) = read_store(store, ctx.exec)?;
        for f in DATA_FILES {
            run.input(&store.join(f))?;
        }
        run.dataset_digest = Some(manifest.digest);
        Ok(dataset)
    } else if let Some(dir) = &d.dir {
        let icfg = IngestConfig::in_dir(dir);
        let (dataset, _) = ingest(&icfg, ctx.exec)?;
        for p in [&icfg.prices, &icfg.fundamentals, &icfg.news, &icfg.events] {
            run.input(p)?;
        }
        Ok(dataset)
    } else if d.synthetic.is_some() {
        Ok(generate_synthetic(&ctx.cfg.synthetic_spec(), ctx.exec)?)
    } else {
        Err(CliError::new(
            Kind::Config,
            "no data source: set data.dir, data.store or data.synthetic (or pass --data/--store/--synthetic)",
        ))
    }
}

/// Runs `body` inside a fresh run directory and writes the manifest on success.
fn with_run(command: &str, cfg: &RunConfig, body: impl FnOnce(&mut RunDir) -> CliResult<()>) -> CliResult<PathBuf> {
    let mut run = RunDir::create(command, cfg)?;
    body(&mut run)?;
    run.finish()
}

pub fn synth(ctx: &Context) -> CliResult<PathBuf> {
    with_run("synth", &ctx.cfg, |run| {
        let dataset = generate_synthetic(&ctx.cfg.synthetic_spec(), ctx.exec)?;
        let manifest = store_dataset(run, &dataset)?;
        println!(
            "synthetic dataset: {} firms, {} events, digest {}",
            dataset.firms.len(),
            dataset.event_count(),
            manifest.digest
        );
        Ok(())
    })
}

pub fn ingest_cmd(ctx: &Context) -> CliResult<PathBuf> {
    with_run("ingest", &ctx.cfg, |run| {
        let d = &ctx.cfg.data;
        let (dataset, report) = if let Some(dir) = &d.dir {
            let icfg = IngestConfig::in_dir(dir);
            let out = ingest(&icfg, ctx.exec)?;
            for p in [&icfg.prices, &icfg.fundamentals, &icfg.news, &icfg.events] {
                run.input(p)?;
            }
            (out.0, Some(out.1))
        } else if d.synthetic.is_some() {
            (generate_synthetic(&ctx.cfg.synthetic_spec(), ctx.exec)?, None)
        } else {
            return Err(CliError::new(Kind::Config, "ingest needs data.dir or data.synthetic"));
        };
        let manifest = store_dataset(run, &dataset)?;
        run.write(
            "ingest_report.json",
            &pretty(&json!({ "report": report, "row_counts": manifest.row_counts, "digest": manifest.digest })),
        )?;
        let c = &manifest.row_counts;
        println!(
            "ingested {} firms: {} prices, {} fundamentals, {} news, {} events",
            dataset.firms.len(),
            c.prices,
            c.fundamentals,
            c.news,
            c.events
        );
        if let Some(r) = report {
            if !r.flagged_firms.is_empty() {
                println!("{} firms have no announcements", r.flagged_firms.len());
            }
        }
        Ok(())
    })
}

pub fn prepare(ctx: &Context) -> CliResult<PathBuf> {
    with_run("prepare", &ctx.cfg, |run| {
        let dataset = load_dataset(ctx, run)?;
        let exp = ctx.cfg.experiment();
        let prepared = prepare_dataset(&dataset, &exp, ctx.exec)?;
        let splits: [&[Sample]; 3] = [&prepared.train, &prepared.val, &prepared.test];
        for mask in [FeatureMask::WithSentiment, FeatureMask::WithoutSentiment] {
            for (name, samples) in SPLIT_NAMES.iter().zip(splits) {
                let rel = window_file(name, mask);
                let path = run.path.join(&rel);
                std::fs::create_dir_all(path.parent().expect("windows/ has a parent")).map_err(|e| CliError::new(Kind::Other, e.to_string()))?;
                write_windows(&path, name, samples, mask, exp.window_len, exp.tau, &prepared.impute, &prepared.scaler)?;
                run.record(&rel)?;
            }
        }
        let labels: Vec<_> = splits.iter().flat_map(|s| s.iter().map(|x| x.label.clone())).collect();
        run.write("labels.csv", render_labels(&labels, exp.tau).as_bytes())?;
        let mut dist = serde_json::Map::new();
        for (name, samples) in SPLIT_NAMES.iter().zip(splits) {
            let d = distribution(samples.iter().map(|s| s.label.label))?;
            dist.insert(name.to_string(), serde_json::to_value(d).expect("serializes"));
        }
        dist.insert(
            "all".into(),
            serde_json::to_value(distribution(labels.iter().map(|l| l.label))?).expect("serializes"),
        );
        run.write("class_distribution.json", &pretty(&dist))?;
        run.write("prepare_report.json", &pretty(&json!({ "tau": exp.tau, "window_len": exp.window_len, "report": prepared.report })))?;
        let b = prepared.report.built;
        println!("windows built: train {}, val {}, test {}; skipped {}", b[0], b[1], b[2], prepared.report.skipped.len());
        Ok(())
    })
}

/// One split of a prepared directory, read under `mask`.
pub fn read_split(run: &mut RunDir, prepared: &Path, split: &str, mask: FeatureMask) -> CliResult<(WindowStoreHeader, Vec<Sample>)> {
    let path = prepared.join(window_file(split, mask));
    if !path.exists() {
        return Err(CliError::new(Kind::Input, format!("{}: no such window store", path.display())));
    }
    run.input(&path)?;
    read_windows(&path).map_err(|e| CliError::new(Kind::Input, e.to_string()))
}

fn check_header(header: &WindowStoreHeader, exp: &ExperimentConfig) -> CliResult<()> {
    if header.window_len != exp.window_len {
        return Err(CliError::new(
            Kind::Comparability,
            format!("windows have length {} but the config asks for {}", header.window_len, exp.window_len),
        ));
    }
    if header.tau != exp.tau {
        return Err(CliError::new(
            Kind::Comparability,
            format!("windows were labeled with tau {} but the config asks for {}", header.tau, exp.tau),
        ));
    }
    Ok(())
}

fn checkpoint_bytes(params: &ModelParams) -> CliResult<Vec<u8>> {
    Ok(write_checkpoint(&Checkpoint {
        params: params.clone(),
        rng: None,
    })?)
}

/// Trains one mask, streaming the epoch log and periodic checkpoints into
/// `prefix` inside the run directory.
fn train_into(
    run: &mut RunDir,
    train: &[Sample],
    val: &[Sample],
    exp: &ExperimentConfig,
    mask: FeatureMask,
    exec: Execution,
    prefix: &str,
) -> CliResult<FitOutcome> {
    let log_rel = format!("{prefix}train_log.jsonl");
    if let Some(parent) = run.path.join(&log_rel).parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::new(Kind::Other, e.to_string()))?;
    }
    let mut log = run.create_file(&log_rel)?;
    let every = exp.train.checkpoint_every;
    let mut saved = Vec::new();
    let outcome = {
        let mut hook = |e: &EpochLog, p: &ModelParams| -> Result<Control, TrainError> {
            let line = serde_json::to_string(e).expect("logs serialize");
            writeln!(log, "{line}").map_err(|err| TrainError::Hook(err.to_string()))?;
            let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
            eprintln!(
                "epoch {:>3}: train loss {:.5}, val loss {}, val macro-F1 {}",
                e.epoch,
                e.train_loss,
                opt(e.val_loss, 5),
                opt(e.val_macro_f1, 4)
            );
            if every > 0 && e.epoch.is_multiple_of(every) {
                saved.push((e.epoch, p.clone()));
            }
            Ok(Control::Continue)
        };
        fit_samples(train, val, exp, mask, exec, &mut hook)
    };
    run.record(&log_rel)?;
    let outcome = outcome?;
    for (epoch, p) in saved {
        run.write(&format!("{prefix}checkpoints/epoch-{epoch:03}.ckpt"), &checkpoint_bytes(&p)?)?;
    }
    run.write(&format!("{prefix}model.ckpt"), &checkpoint_bytes(&outcome.params)?)?;
    run.write(
        &format!("{prefix}loss.json"),
        &pretty(&json!({ "class_weights": outcome.loss.weights, "warnings": outcome.warnings })),
    )?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    Ok(outcome)
}

pub fn train(ctx: &Context, prepared: &Path) -> CliResult<PathBuf> {
    with_run("train", &ctx.cfg, |run| {
        let exp = ctx.cfg.experiment();
        let mask = ctx.cfg.mask();
        let (header, train) = read_split(run, prepared, "train", mask)?;
        check_header(&header, &exp)?;
        let (_, val) = read_split(run, prepared, "val", mask)?;
        let out = train_into(run, &train, &val, &exp, mask, ctx.exec, "")?;
        let last = out.log.epochs.last();
        println!(
            "trained {} (d = {}) for {} epochs; final val macro-F1 {}",
            exp.model.display_name(),
            mask.dim(),
            out.log.epochs.len(),
            last.and_then(|e| e.val_macro_f1).map_or("-".to_string(), |v| format!("{v:.4}"))
        );
        Ok(())
    })
}

fn write_report(run: &mut RunDir, prefix: &str, report: &EvaluationReport) -> CliResult<()> {
    run.write(&format!("{prefix}report.json"), report.to_json().as_bytes())?;
    run.write(&format!("{prefix}report.txt"), render_table(std::slice::from_ref(report)).as_bytes())?;
    run.write(&format!("{prefix}confusion.csv"), report.confusion.to_csv().as_bytes())?;
    Ok(())
}

pub fn evaluate_cmd(ctx: &Context, checkpoint: &Path, prepared: &Path, split: &str) -> CliResult<PathBuf> {
    if !SPLIT_NAMES.contains(&split) {
        return Err(CliError::new(Kind::Config, format!("unknown split {split:?}; use train, val or test")));
    }
    with_run("evaluate", &ctx.cfg, |run| {
        if !checkpoint.exists() {
            return Err(CliError::new(Kind::Input, format!("{}: no such checkpoint", checkpoint.display())));
        }
        run.input(checkpoint)?;
        let params = load_params(checkpoint)?.params;
        let mask = match params.config.input_dim {
            d if d == FeatureMask::WithSentiment.dim() => FeatureMask::WithSentiment,
            d if d == FeatureMask::WithoutSentiment.dim() => FeatureMask::WithoutSentiment,
            d => return Err(CliError::new(Kind::Comparability, format!("checkpoint expects d = {d}, which matches no feature layout"))),
        };
        let (header, samples) = read_split(run, prepared, split, mask)?;
        if header.window_len != params.config.seq_len {
            return Err(CliError::new(
                Kind::Comparability,
                format!("checkpoint expects windows of length {} but the store holds {}", params.config.seq_len, header.window_len),
            ));
        }
        let exp = ExperimentConfig {
            seed: params.config.seed,
            tau: header.tau,
            ..ctx.cfg.experiment()
        };
        let report = evaluate(&params, &samples, split, mask, &exp, ctx.exec)?;
        write_report(run, "", &report)?;
        print!("{}", render_table(std::slice::from_ref(&report)));
        Ok(())
    })
}

pub fn ablate(ctx: &Context, prepared: &Path) -> CliResult<PathBuf> {
    with_run("ablate", &ctx.cfg, |run| {
        let exp = ctx.cfg.experiment();
        let mut reports = Vec::new();
        for mask in [FeatureMask::WithSentiment, FeatureMask::WithoutSentiment] {
            let (header, train) = read_split(run, prepared, "train", mask)?;
            check_header(&header, &exp)?;
            let (_, val) = read_split(run, prepared, "val", mask)?;
            let (_, test) = read_split(run, prepared, "test", mask)?;
            let prefix = format!("{}/", mask_tag(mask));
            eprintln!("training {} with d = {}", exp.model.display_name(), mask.dim());
            let out = train_into(run, &train, &val, &exp, mask, ctx.exec, &prefix)?;
            let report = evaluate(&out.params, &test, "test", mask, &exp, ctx.exec)?;
            write_report(run, &prefix, &report)?;
            reports.push(report);
        }
        let ablation = ablation_report(&reports[0], &reports[1])?;
        run.write("ablation.json", &pretty(&ablation))?;
        let table = render_table(&reports);
        run.write("table.txt", table.as_bytes())?;
        print!("{table}");
        for d in &ablation.deltas {
            let movement = serde_json::to_value(d.movement).expect("serializes");
            println!("{:<18} {:+.4}  {}", d.metric, d.delta, movement.as_str().unwrap_or_default());
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct GradcheckRow {
    model: ModelKind,
    mode: String,
    size: &'static str,
    probes: usize,
    max_rel_error: f64,
    passed: bool,
}

/// Reduced-size checks on every coordinate; with `full_coords`, also the
/// default sizes on a sample of coordinates per tensor.
pub fn gradcheck(ctx: &Context, full_coords: Option<usize>) -> CliResult<PathBuf> {
    with_run("gradcheck", &ctx.cfg, |run| {
        let kinds = [ModelKind::LogReg, ModelKind::Lstm, ModelKind::Attention];
        let dim = ctx.cfg.mask().dim();
        let configs: Vec<ModelConfig> = kinds.iter().map(|&k| reduced_config(k, dim, ctx.cfg.seed)).collect();
        let check = GradCheckConfig {
            seed: ctx.cfg.seed,
            ..GradCheckConfig::default()
        };
        let mut rows: Vec<GradcheckRow> = gradient_suite(&configs, &check, ctx.exec)
            .map_err(|e| CliError::new(Kind::Numerical, e.to_string()))?
            .into_iter()
            .map(|e| GradcheckRow {
                model: e.model,
                mode: e.mode,
                size: "reduced",
                probes: e.probes,
                max_rel_error: e.max_rel_error,
                passed: e.passed,
            })
            .collect();
        if let Some(coords) = full_coords {
            // Large ReLU networks put kinks within 1e-5 of some coordinates.
            let sampled = GradCheckConfig {
                step: 1e-6,
                tolerance: 1e-3,
                max_coords_per_param: Some(coords),
                seed: ctx.cfg.seed,
            };
            let exp = ctx.cfg.experiment();
            let spec = LossSpec {
                weights: [2.0, 1.5, 0.5],
            };
            for kind in kinds {
                let mc = ExperimentConfig { model: kind, ..exp.clone() }.model_config(ctx.cfg.mask());
                let params = ModelParams::init(&mc)?;
                let mut rng = eapred::numerics::RngStream::named(ctx.cfg.seed, "gradcheck-input");
                let x = eapred::numerics::Tensor::matrix(mc.seq_len, mc.input_dim, (0..mc.seq_len * mc.input_dim).map(|_| rng.normal()).collect())
                    .map_err(|e| CliError::new(Kind::Numerical, e.to_string()))?;
                let class = eapred::labeling::Direction::ALL[rng.index(3)];
                for dropout in [None, Some(ctx.cfg.seed)] {
                    let r = check_model_gradients(&params, &x, class, &spec, dropout, &sampled)
                        .map_err(|e| CliError::new(Kind::Numerical, e.to_string()))?;
                    rows.push(GradcheckRow {
                        model: kind,
                        mode: if dropout.is_some() { "train" } else { "eval" }.into(),
                        size: "full",
                        probes: r.probes,
                        max_rel_error: r.max_rel_error,
                        passed: r.passed,
                    });
                }
            }
        }
        run.write("gradcheck.json", &pretty(&rows))?;
        for r in &rows {
            println!(
                "{} {:<10} {:<5} {:<7} {:>6} probes  max rel error {:.2e}",
                if r.passed { "PASS" } else { "FAIL" },
                r.model.name(),
                r.mode,
                r.size,
                r.probes,
                r.max_rel_error
            );
        }
        let failed = rows.iter().filter(|r| !r.passed).count();
        if failed > 0 {
            return Err(CliError::new(Kind::Numerical, format!("{failed} gradient checks failed")));
        }
        Ok(())
    })
}
