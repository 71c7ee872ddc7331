use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use hypee::analysis::{
    collect_embeddings, delta_from_distances, delta_hyperbolicity, delta_subsampled, layer_delta_table, hyperbolic_kmeans, lookahead_sweep, norm_histogram,
    select_exits, tangent_csv, traverse, HyperbolicityReport, Metric,
};
use hypee::data::{generate_synthetic, load_csv_features, read_checkpoint, read_embeddings, write_csv_features, Checkpoint, Dataset, EmbeddingSet, PointMode};
use hypee::entailment::ConeConfig;
use hypee::experiment::{ablation_csv, latent_ablation};
use hypee::geometry::Curvature;
use hypee::trainer::{evaluate, train as fit, BackboneConfig, CostModel, MultiExitModel, TrainConfig};
use hypee::trigger::{calibrate as fit_stats, infer as run_gate, NormStats, Strategy, TriggerReport};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputDir;
use crate::{Analysis, Common, StrategyArg};

fn setup(common: &Common) -> Result<(RunConfig, OutputDir), CliError> {
    let cfg = RunConfig::load(&common.config)?;
    let out = OutputDir::create(&common.out, &cfg)?;
    Ok((cfg, out))
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.data.csv {
        Some(path) => Ok(load_csv_features(path, &cfg.data.schema)?),
        None => {
            let spec = hypee::data::SyntheticSpec {
                seed: cfg.seed,
                ..cfg.data.synthetic.clone()
            };
            Ok(generate_synthetic(&spec)?.dataset)
        }
    }
}

fn load_model(path: &Path) -> Result<MultiExitModel, CliError> {
    Ok(read_checkpoint(path)?.into_model()?)
}

fn load_labeled(cfg: &RunConfig, path: &Path, model: &MultiExitModel) -> Result<Dataset, CliError> {
    let data = load_csv_features(path, &cfg.data.schema)?;
    let classes = model.config().num_classes;
    if data.input_dim != model.config().input_dim {
        return Err(CliError::Data(format!(
            "{}: {} features, the checkpoint expects {}",
            path.display(),
            data.input_dim,
            model.config().input_dim
        )));
    }
    if data.num_classes() > classes {
        return Err(CliError::Data(format!("{}: label {} exceeds the {classes} model classes", path.display(), data.num_classes() - 1)));
    }
    Ok(data)
}

pub fn train(common: &Common) -> Result<(), CliError> {
    let (cfg, mut out) = setup(common)?;
    let data = load_data(&cfg)?;
    cfg.split.validate()?;
    let (train_set, rest) = data.split(cfg.split.train, cfg.seed);
    let (reference, test) = rest.split(cfg.split.reference / (1.0 - cfg.split.train), cfg.seed.wrapping_add(1));
    if train_set.is_empty() || reference.is_empty() || test.is_empty() {
        return Err(CliError::Data("data split left a partition empty".into()));
    }
    let backbone = BackboneConfig {
        input_dim: data.input_dim,
        hidden_dims: cfg.architecture.hidden_dims.clone(),
        exit_after: cfg.architecture.exit_after.clone(),
        latent_dim: cfg.architecture.latent_dim,
        num_classes: data.num_classes(),
        mode: cfg.mode,
        curvature: Curvature::new(cfg.architecture.curvature)?,
    };
    let mut model = MultiExitModel::new(backbone, cfg.seed)?;
    let tc = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    eprintln!("training {} for {} epochs on {} samples", cfg.run_label(), tc.epochs, train_set.len());
    let outcome = fit(&mut model, &train_set, &tc)?;
    let metrics = evaluate(&model, &test, &tc.loss, &tc.cone(&model)?)?;

    let mut rows = vec![json!({
        "kind": "header",
        "label": cfg.run_label(),
        "mode": cfg.mode,
        "lambda": cfg.train.loss.lambda,
        "entailment": cfg.mode == hypee::trainer::Mode::Hyperbolic && cfg.train.loss.lambda > 0.0,
        "seed": cfg.seed,
        "macs": CostModel::from_model(&model).cumulative_macs(),
    })];
    for epoch in &outcome.epochs {
        let mut row = serde_json::to_value(epoch)?;
        row["kind"] = json!("epoch");
        rows.push(row);
    }
    let mut row = serde_json::to_value(&metrics)?;
    row["kind"] = json!("test");
    rows.push(row);
    out.jsonl("metrics.jsonl", &rows)?;

    let ckpt = Checkpoint::from_model(&model, cfg.seed).to_json()?;
    out.file("checkpoint.json", "checkpoint", ckpt.as_bytes())?;
    // Split files keep the feature schema so later commands can read them back.
    for (name, set) in [("train.csv", &train_set), ("reference.csv", &reference), ("test.csv", &test)] {
        write_csv_features(set, &out.path(name), &cfg.data.schema)?;
        out.register(name, "features");
    }
    eprintln!("test exit accuracy {:?}", metrics.exit_accuracy);
    out.finish("train")
}

pub fn calibrate(common: &Common, checkpoint: &Path, reference: &Path) -> Result<(), CliError> {
    let (cfg, mut out) = setup(common)?;
    let model = load_model(checkpoint)?;
    let data = load_labeled(&cfg, reference, &model)?;
    let stats = fit_stats(&model, &data, &cfg.calibration)?;
    out.json("stats.json", &json!({ "stats": stats }))?;
    out.finish("calibrate")
}

fn load_stats(path: &Path) -> Result<NormStats, CliError> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)?;
    let inner = v.get("stats").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

pub fn infer(
    common: &Common,
    checkpoint: &Path,
    data: &Path,
    stats: Option<&Path>,
    strategy: StrategyArg,
    exit: usize,
    thresholds: Vec<f64>,
) -> Result<(), CliError> {
    let (cfg, mut out) = setup(common)?;
    let model = load_model(checkpoint)?;
    let data = load_labeled(&cfg, data, &model)?;
    let strategy = match strategy {
        StrategyArg::Class => Strategy::ClassNorm,
        StrategyArg::Global => Strategy::GlobalNorm,
        StrategyArg::Entropy => Strategy::Entropy {
            thresholds: if thresholds.is_empty() { cfg.entropy_thresholds.clone() } else { thresholds },
        },
        StrategyArg::Fixed => Strategy::Fixed { exit },
    };
    let stats = match (&strategy, stats) {
        (Strategy::ClassNorm | Strategy::GlobalNorm, None) => return Err(CliError::Usage("norm strategies need --stats".into())),
        (_, Some(p)) => Some(load_stats(p)?),
        (_, None) => None,
    };
    let mut decisions = Vec::with_capacity(data.len());
    let mut table = String::from("index,label,exit,predicted,reason,norm,macs\n");
    for (i, (x, y)) in data.features.iter().zip(&data.labels).enumerate() {
        let r = run_gate(&model, &strategy, stats.as_ref(), &cfg.trigger, x)?;
        let reason = serde_json::to_value(r.decision.reason)?;
        let _ = writeln!(
            table,
            "{i},{y},{},{},{},{},{}",
            r.decision.exit_taken,
            r.decision.predicted_class,
            reason.as_str().unwrap_or_default(),
            r.decision.norm,
            r.macs
        );
        decisions.push(r.decision);
    }
    let report = TriggerReport::from_decisions(&strategy.label(), &decisions, &data.labels, &CostModel::from_model(&model))?;
    out.csv("decisions.csv", &table)?;
    out.csv("report.csv", &report.to_csv())?;
    out.json("report.json", &report)?;
    eprintln!(
        "{}: accuracy {:.4}, MACs saved {:.1}%",
        report.strategy,
        report.accuracy,
        100.0 * report.macs_saved_fraction
    );
    out.finish("infer")
}

pub fn embed(common: &Common, checkpoint: &Path, data: &Path) -> Result<(), CliError> {
    let (cfg, mut out) = setup(common)?;
    let model = load_model(checkpoint)?;
    let data = load_labeled(&cfg, data, &model)?;
    let set = collect_embeddings(&model, &data)?;
    out.file("embeddings.hyee", "embeddings", &set.to_bytes())?;
    out.csv("tangent.csv", &tangent_csv(&set)?)?;
    out.finish("embed")
}

fn read_set(path: &Path) -> Result<EmbeddingSet, CliError> {
    Ok(read_embeddings(path)?)
}

fn read_distances(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = record?
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>()
                    .map_err(|_| CliError::Data(format!("{}: row {}, column {}: not a number: {v:?}", path.display(), r + 1, c + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if (v - rows[j][i]).abs() > 1e-9 * v.abs().max(1.0) {
                return Err(CliError::Data(format!("{}: matrix is not symmetric at ({}, {})", path.display(), i + 1, j + 1)));
            }
        }
        if row.len() != n {
            return Err(CliError::Data(format!("{}: row {} has {} entries, expected {n}", path.display(), i + 1, row.len())));
        }
    }
    Ok(rows)
}

fn metric_of(set: &EmbeddingSet) -> Metric {
    match set.mode {
        PointMode::Hyperbolic => Metric::Lorentz(set.curvature),
        PointMode::Euclidean => Metric::Euclidean,
    }
}

fn emit(stdout: bool, text: &str) {
    if stdout {
        print!("{text}");
    }
}

pub fn analyze(analysis: Analysis) -> Result<(), CliError> {
    match analysis {
        Analysis::Delta {
            common,
            distances,
            embeddings,
            exits,
            sample,
            trials,
            layers,
            stdout,
        } => {
            let (cfg, mut out) = setup(&common)?;
            let report: HyperbolicityReport = match (distances, embeddings) {
                (Some(d), _) => delta_from_distances(&read_distances(&d)?)?,
                (None, Some(e)) => {
                    let mut set = read_set(&e)?;
                    if !exits.is_empty() {
                        set = select_exits(&set, |x| exits.contains(&x))?;
                    }
                    if layers {
                        let mut table = String::from("exit_a,exit_b,points,delta,diameter,delta_rel,c_estimate\n");
                        for r in layer_delta_table(&set, sample.unwrap_or(100), trials, cfg.seed)? {
                            let h = r.report;
                            let c = h.c_estimate.map_or(String::new(), |c| c.to_string());
                            table.push_str(&format!("{},{},{},{},{},{},{c}\n", r.x, r.y, h.points, h.delta, h.diameter, h.delta_rel));
                        }
                        out.csv("layer_delta.csv", &table)?;
                    }
                    let points = set.vectors();
                    match sample {
                        Some(size) => delta_subsampled(&points, metric_of(&set), size, trials, cfg.seed)?,
                        None => delta_hyperbolicity(&points, metric_of(&set))?,
                    }
                }
                (None, None) => return Err(CliError::Usage("one of --distances or --embeddings is required".into())),
            };
            let text = out.json("delta.json", &report)?;
            emit(stdout, &text);
            out.finish("analyze delta")
        }
        Analysis::Kmeans {
            common,
            embeddings,
            k,
            max_iters,
            stdout,
        } => {
            let (cfg, mut out) = setup(&common)?;
            let set = read_set(&embeddings)?;
            if set.mode != PointMode::Hyperbolic {
                return Err(CliError::Usage("k-means needs hyperbolic embeddings".into()));
            }
            let result = hyperbolic_kmeans(&set.points()?, set.curvature()?, k, max_iters, cfg.seed)?;
            let mut table = String::from("index,label,exit,cluster\n");
            for (i, c) in result.assignments.iter().enumerate() {
                let label = set.labels.as_ref().map_or(String::new(), |l| l[i].to_string());
                let exit = set.exit_ids.as_ref().map_or(String::new(), |e| e[i].to_string());
                let _ = writeln!(table, "{i},{label},{exit},{c}");
            }
            out.csv("assignments.csv", &table)?;
            let text = out.json("kmeans.json", &json!({ "summary": result.summary(), "objective_trace": result.objective }))?;
            emit(stdout, &text);
            out.finish("analyze kmeans")
        }
        Analysis::Lookahead {
            common,
            queries,
            references,
            thresholds,
            query_exit,
            stdout,
        } => {
            let (cfg, mut out) = setup(&common)?;
            let refs = read_set(&references)?;
            let queries = select_exits(&read_set(&queries)?, |e| e == query_exit)?;
            let cone = ConeConfig::new(cfg.train.cone_k, refs.curvature()?)?;
            let rows = lookahead_sweep(&queries, &refs, &thresholds, &cone)?;
            let mut table = String::from("threshold,queries,coverage,precision,majority_accuracy,mean_retrieved\n");
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            for r in &rows {
                let _ = writeln!(
                    table,
                    "{},{},{},{},{},{}",
                    r.threshold,
                    r.queries,
                    r.coverage,
                    opt(r.precision),
                    opt(r.majority_accuracy),
                    r.mean_retrieved
                );
            }
            let text = out.csv("lookahead.csv", &table)?;
            emit(stdout, &text);
            out.finish("analyze lookahead")
        }
        Analysis::Traverse {
            common,
            references,
            start,
            index,
            steps,
            stdout,
        } => {
            let (_, mut out) = setup(&common)?;
            let refs = read_set(&references)?;
            let source = match start {
                Some(p) => read_set(&p)?,
                None => refs.clone(),
            };
            if index >= source.len() {
                return Err(CliError::Usage(format!("--index {index} out of range for {} rows", source.len())));
            }
            let start: Vec<f64> = source.row(index).iter().map(|&v| v as f64).collect();
            let path = traverse(&start, None, steps, &refs)?;
            let mut table = String::from("step,nearest,nearest_label,nearest_exit,similarity");
            for k in 0..refs.dim {
                let _ = write!(table, ",p{k}");
            }
            table.push('\n');
            for s in &path {
                let opt = |v: Option<u32>| v.map_or(String::new(), |v| v.to_string());
                let _ = write!(table, "{},{},{},{},{}", s.step, s.nearest, opt(s.nearest_label), opt(s.nearest_exit), s.similarity);
                for v in &s.point {
                    let _ = write!(table, ",{v}");
                }
                table.push('\n');
            }
            let text = out.csv("traverse.csv", &table)?;
            emit(stdout, &text);
            out.finish("analyze traverse")
        }
        Analysis::Hist {
            common,
            embeddings,
            bins,
            stdout,
        } => {
            let (_, mut out) = setup(&common)?;
            let hist = norm_histogram(&read_set(&embeddings)?, bins)?;
            let text = out.csv("hist.csv", &hist.to_csv())?;
            emit(stdout, &text);
            out.finish("analyze hist")
        }
    }
}

pub fn ablate(common: &Common) -> Result<(), CliError> {
    let (cfg, mut out) = setup(common)?;
    if cfg.data.csv.is_some() {
        return Err(CliError::Usage("ablate runs on synthetic data; remove data.csv".into()));
    }
    let exp = cfg.experiment(&cfg.ablation.seeds);
    let rows = latent_ablation(&exp, &cfg.ablation.latent_dims, &cfg.ablation.modes)?;
    out.csv("ablation.csv", &ablation_csv(&rows))?;
    out.finish("ablate")
}
