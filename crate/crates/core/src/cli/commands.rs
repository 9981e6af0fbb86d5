use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use super::config::Settings;
use super::manifest::ManifestBuilder;
use super::{
    create_dir, write_json, ApplyArgs, CliError, CommonArgs, EraseArgs, EvalArgs, InModule,
    SynthArgs,
};
use crate::baselines::{inlp_fit, pca_diff_fit, InlpConfig};
use crate::closedform::{
    pls_equilibrium, rayleigh_equilibrium, regression_equilibrium, EquilibriumResult,
    RayleighProblem,
};
use crate::dataio::{
    encode_labels, load_labels, load_projection, load_vectors_text, save_projection,
    write_labels_text, write_vectors_text, Dataset, ErasureProjection, Labels, Method, Reduction,
    TaskKind, Vectors,
};
use crate::error::Error;
use crate::eval::{
    group_shares, kmeans_cluster, probe_accuracy, similarity_correlation, tpr_gap_suite,
    v_measure, weat_statistic, ClusterScore, EvalReport, SimilarityScore, SweepPoint,
    WeatSpecFile,
};
use crate::glm::GlmSpec;
use crate::linalg::{covariance, orthonormalize_rows, pca_reduce};
use crate::probe::ProbeConfig;
use crate::rlace::{rlace_fit, RlaceConfig};
use crate::synth::{generate, FixtureKind};

fn resolve_settings(common: &CommonArgs) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = &common.config {
        s.merge_file(path)?;
    }
    for pair in &common.set {
        s.set_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        s.set("seed", &seed.to_string())?;
    }
    Ok(s)
}

fn set_opt(s: &mut Settings, key: &str, value: Option<impl ToString>) -> Result<(), CliError> {
    match value {
        Some(v) => s.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::usage(format!("{flag} is required")))
}

fn probe_config(s: &Settings) -> Result<ProbeConfig, CliError> {
    Ok(ProbeConfig {
        max_iter: s.require("probe_max_iter")?,
        tol: s.require("probe_tol")?,
        l2: s.require("probe_l2")?,
        ..ProbeConfig::default()
    })
}

fn rlace_config(s: &Settings, k: usize) -> Result<RlaceConfig, CliError> {
    Ok(RlaceConfig {
        k,
        outer_loops: s.require("outer_loops")?,
        inner_loops: s.require("inner_loops")?,
        lr_theta: s.require("lr_theta")?,
        lr_eraser: s.require("lr_eraser")?,
        weight_decay: s.require("weight_decay")?,
        batch_size: s.require("batch_size")?,
        eval_every: s.require("eval_every")?,
        probe: probe_config(s)?,
        seed: s.require("seed")?,
        dev_fraction: s.require("dev_fraction")?,
    })
}

fn parse_rank(s: &Settings) -> Result<usize, CliError> {
    let raw = s
        .raw("rank")
        .ok_or_else(|| CliError::usage("--rank is required"))?;
    let rank: i64 = raw
        .parse()
        .map_err(|_| CliError::usage(format!("invalid rank '{raw}'")))?;
    if rank < 1 {
        return Err(CliError::usage("rank must be ≥ 1"));
    }
    Ok(rank as usize)
}

/// Labelled rows: vectors restricted to ids that have a label.
struct Labelled {
    raw: Vec<String>,
    data: Dataset,
}

fn infer_task(s: &Settings, raw: &[String]) -> Result<TaskKind, CliError> {
    match s.raw("task").unwrap_or("auto") {
        "classification" | "binary-classification" => Ok(TaskKind::BinaryClassification),
        "regression" => Ok(TaskKind::Regression),
        "auto" => {
            let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
            Ok(if distinct.len() == 2 {
                TaskKind::BinaryClassification
            } else {
                TaskKind::Regression
            })
        }
        other => Err(CliError::usage(format!(
            "task must be auto, classification or regression, got '{other}'"
        ))),
    }
}

fn task_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::BinaryClassification => "classification",
        TaskKind::Regression => "regression",
    }
}

fn label_rows(
    vectors: &Vectors,
    x: &DMatrix<f64>,
    labels: &Labels,
    s: &Settings,
) -> Result<Labelled, CliError> {
    let rows = labels.ids_present(&vectors.ids);
    let ids: Vec<String> = rows.iter().map(|&i| vectors.ids[i].clone()).collect();
    let raw = labels.align(&ids).in_module("dataio")?;
    let task = infer_task(s, &raw)?;
    let y = encode_labels(&raw, task, s.raw("positive_label")).in_module("dataio")?;
    let x = x.select_rows(&rows);
    let data = Dataset::with_ids(x, DVector::from_vec(y), Some(ids), task)
        .in_module("dataio")?;
    Ok(Labelled { raw, data })
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::runtime(Error::io(path, e), "cli"))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        match fields.as_slice() {
            [a, b] => pairs.push((a.to_string(), b.to_string())),
            _ => {
                return Err(CliError::runtime(
                    Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: "expected two ids".into(),
                    },
                    "dataio",
                ))
            }
        }
    }
    Ok(pairs)
}

fn equilibrium_diagnostics(r: &EquilibriumResult) -> Value {
    json!({
        "game_value": r.game_value,
        "theta_star": r.theta_star.as_slice(),
        "warnings": r.warnings,
    })
}

fn method_from(name: &str) -> Result<&'static str, CliError> {
    const METHODS: [&str; 6] = ["rlace", "inlp", "regression", "rayleigh", "pls", "pca-diff"];
    METHODS
        .into_iter()
        .find(|m| *m == name)
        .ok_or_else(|| {
            CliError::usage(format!(
                "unknown method '{name}'; expected one of {}",
                METHODS.join(", ")
            ))
        })
}

pub fn erase(args: EraseArgs) -> Result<(), CliError> {
    let mut s = resolve_settings(&args.common)?;
    set_opt(&mut s, "method", args.method.as_ref())?;
    set_opt(&mut s, "rank", args.rank.as_ref())?;
    set_opt(&mut s, "pca_dim", args.pca_dim)?;
    set_opt(&mut s, "task", args.task.as_ref())?;
    if args.common.print_config {
        print!("{}", s.render());
        return Ok(());
    }
    let method = method_from(
        s.raw("method")
            .ok_or_else(|| CliError::usage("--method is required"))?,
    )?;
    let k = parse_rank(&s)?;
    let seed: u64 = s.require("seed")?;
    let vectors_path = required(&args.vectors, "--vectors")?;
    let out = required(&args.out, "--out")?;
    let needs_labels = matches!(method, "rlace" | "inlp" | "regression" | "pls");
    let labels_path = if needs_labels {
        Some(required(&args.labels, "--labels")?)
    } else {
        None
    };
    let pairs_path = if method == "pca-diff" {
        Some(required(&args.pairs, "--pairs")?)
    } else {
        None
    };
    if method == "regression" && k != 1 {
        return Err(CliError::usage(format!(
            "regression removes exactly one direction, got rank {k}"
        )));
    }

    let mut manifest = ManifestBuilder::start("erase", s.as_map(), seed);
    for p in [Some(vectors_path), labels_path, pairs_path, args.common.config.as_deref()]
        .into_iter()
        .flatten()
    {
        manifest.input(p)?;
    }

    let vectors = load_vectors_text(vectors_path).in_module("dataio")?;
    let pca_dim: Option<usize> = s.get("pca_dim")?;
    let (x, reduction) = match pca_dim {
        Some(n) => {
            let pca = pca_reduce(&vectors.matrix, n).in_module("linalg")?;
            (pca.projected.clone(), Some(Reduction::from_pca(&pca)))
        }
        None => (vectors.matrix.clone(), None),
    };
    let labelled = match labels_path {
        Some(p) => {
            let labels = load_labels(p).in_module("dataio")?;
            Some(label_rows(&vectors, &x, &labels, &s)?)
        }
        None => None,
    };
    let task = labelled.as_ref().map(|l| l.data.task());
    match (method, task) {
        ("regression", Some(TaskKind::BinaryClassification)) => {
            return Err(CliError::usage(
                "method 'regression' needs a regression task, but the labels are two-valued \
                 (classification task); use rlace or inlp, or pass --task regression",
            ))
        }
        ("rlace", Some(TaskKind::Regression)) => {
            return Err(CliError::usage(
                "method 'rlace' needs a binary classification task, but the labels form a \
                 regression task; use regression, pls or inlp",
            ))
        }
        _ => {}
    }

    let (projection, diagnostics): (ErasureProjection, Value) = match method {
        "rlace" => {
            let data = &labelled.as_ref().unwrap().data;
            let cfg = rlace_config(&s, k)?;
            let (p, d) = rlace_fit(data, &GlmSpec::logistic(), &cfg).in_module("rlace")?;
            (p, serde_json::to_value(d).unwrap_or(Value::Null))
        }
        "inlp" => {
            let data = &labelled.as_ref().unwrap().data;
            let spec = match data.task() {
                TaskKind::BinaryClassification => GlmSpec::logistic(),
                TaskKind::Regression => GlmSpec::squared_error(),
            };
            let cfg = InlpConfig {
                iterations: k,
                probe: probe_config(&s)?,
                seed,
            };
            let (p, d) = inlp_fit(data, &spec, &cfg).in_module("baselines")?;
            (p, serde_json::to_value(d).unwrap_or(Value::Null))
        }
        "regression" => {
            let r = regression_equilibrium(&labelled.as_ref().unwrap().data)
                .in_module("closedform")?;
            (r.erasure().in_module("closedform")?, equilibrium_diagnostics(&r))
        }
        "pls" => {
            let r = pls_equilibrium(&labelled.as_ref().unwrap().data, k).in_module("closedform")?;
            (r.erasure().in_module("closedform")?, equilibrium_diagnostics(&r))
        }
        "rayleigh" => {
            let a = covariance(&x).in_module("linalg")?;
            let problem = RayleighProblem::new(a, k).in_module("closedform")?;
            let r = rayleigh_equilibrium(&problem).in_module("closedform")?;
            (r.erasure().in_module("closedform")?, equilibrium_diagnostics(&r))
        }
        "pca-diff" => {
            let index = vectors.index();
            let row = |id: &str| -> Result<DVector<f64>, CliError> {
                index
                    .get(id)
                    .map(|&i| x.row(i).transpose())
                    .ok_or_else(|| {
                        CliError::runtime(
                            Error::InvalidInput(format!("pair word \"{id}\" has no vector")),
                            "dataio",
                        )
                    })
            };
            let pairs = read_pairs(pairs_path.unwrap())?
                .iter()
                .map(|(a, b)| Ok((row(a)?, row(b)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let center: bool = s.require("center_pairs")?;
            let p = pca_diff_fit(&pairs, k, center).in_module("baselines")?;
            (p, json!({ "pairs": pairs.len(), "centered": center }))
        }
        _ => unreachable!(),
    };
    let mut projection = projection.with_seed(seed);
    if let Some(t) = task {
        projection = projection.with_meta("task", task_name(t));
    }
    projection.reduction = reduction;

    create_dir(out)?;
    save_projection(&projection, out.join("projection.json")).in_module("dataio")?;
    write_json(&out.join("diagnostics.json"), &diagnostics)?;
    manifest.output("projection.json");
    manifest.output("diagnostics.json");
    manifest.finish(out)?;
    println!("{}", out.join("projection.json").display());
    Ok(())
}

pub fn apply(args: ApplyArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::start("apply", &BTreeMap::new(), 0);
    manifest.input(&args.projection)?;
    manifest.input(&args.vectors)?;
    let projection = load_projection(&args.projection).in_module("dataio")?;
    let vectors = load_vectors_text(&args.vectors).in_module("dataio")?;
    let x = projection.apply_raw(&vectors.matrix).in_module("dataio")?;
    create_dir(&args.out)?;
    write_vectors_text(args.out.join("vectors.txt"), &vectors.ids, &x).in_module("dataio")?;
    manifest.output("vectors.txt");
    manifest.finish(&args.out)?;
    Ok(())
}

fn parse_clusters(spec: &str) -> Result<Vec<usize>, CliError> {
    spec.split(',')
        .map(|c| {
            c.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| CliError::usage(format!("invalid cluster count '{c}'")))
        })
        .collect()
}

fn parse_range(spec: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::usage(format!("rank sweep must look like 'A..B' with A ≤ B, got '{spec}'"));
    let (a, b) = spec.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

/// `id true pred group` rows; the lexicographically larger group value is
/// the protected group.
struct Predictions {
    y_true: Vec<String>,
    y_pred: Vec<String>,
    z: Vec<bool>,
}

fn read_predictions(path: &Path) -> Result<Predictions, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::runtime(Error::io(path, e), "cli"))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        match fields.as_slice() {
            [] => continue,
            [_, t, p, g] => rows.push((t.to_string(), p.to_string(), g.to_string())),
            _ => {
                return Err(CliError::runtime(
                    Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: "expected 'id true pred group'".into(),
                    },
                    "eval",
                ))
            }
        }
    }
    let groups: BTreeSet<&str> = rows.iter().map(|r| r.2.as_str()).collect();
    if groups.len() != 2 {
        return Err(CliError::runtime(
            Error::InvalidInput(format!("expected two group values, found {}", groups.len())),
            "eval",
        ));
    }
    let protected = *groups.iter().next_back().unwrap();
    Ok(Predictions {
        z: rows.iter().map(|r| r.2 == protected).collect(),
        y_true: rows.iter().map(|r| r.0.clone()).collect(),
        y_pred: rows.iter().map(|r| r.1.clone()).collect(),
    })
}

fn read_simpairs(path: &Path) -> Result<Vec<(String, String, f64)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::runtime(Error::Format(e.to_string()), "eval"))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::runtime(Error::Format(e.to_string()), "eval"))?;
        if rec.len() != 3 {
            return Err(CliError::runtime(
                Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected 'id1,id2,score'".into(),
                },
                "eval",
            ));
        }
        match rec[2].parse::<f64>() {
            Ok(score) => out.push((rec[0].to_string(), rec[1].to_string(), score)),
            // A header line.
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(CliError::runtime(
                    Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("unparseable score '{}'", &rec[2]),
                    },
                    "eval",
                ))
            }
        }
    }
    Ok(out)
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::runtime(Error::Format(e.to_string()), "cli");
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush()
        .map_err(|e| CliError::runtime(Error::io(path, e), "cli"))
}

#[derive(Serialize)]
struct WeatRow {
    d: f64,
    p_value: f64,
    n_permutations: u64,
    exact: bool,
}

#[derive(Serialize)]
struct GapRow<'a> {
    class: &'a str,
    gap: f64,
}

fn sweep(
    train: &Dataset,
    test: &Dataset,
    range: (usize, usize),
    s: &Settings,
    jobs: usize,
) -> Result<Vec<SweepPoint>, CliError> {
    let probe = probe_config(s)?;
    let seed: u64 = s.require("seed")?;
    let (lo, hi) = range;
    if hi >= train.dim() {
        return Err(CliError::usage(format!(
            "rank sweep must stay below the dimension {}, got {hi}",
            train.dim()
        )));
    }
    let point = |rank: usize, p: Option<&ErasureProjection>| -> Result<SweepPoint, CliError> {
        let r = probe_accuracy(train, test, p, &probe).in_module("eval")?;
        Ok(SweepPoint {
            rank,
            accuracy: r.accuracy,
            loss: r.loss,
        })
    };
    match s.raw("sweep_method").unwrap_or("inlp") {
        "inlp" => {
            let mut points = Vec::new();
            if lo == 0 {
                points.push(point(0, None)?);
            }
            if hi == 0 {
                return Ok(points);
            }
            let cfg = InlpConfig {
                iterations: hi,
                probe,
                seed,
            };
            let (_, diag) = inlp_fit(train, &GlmSpec::logistic(), &cfg).in_module("baselines")?;
            let dirs: Vec<&Vec<f64>> = diag.iterations.iter().map(|it| &it.direction).collect();
            for rank in lo.max(1)..=hi.min(dirs.len()) {
                let rows = DMatrix::from_fn(rank, train.dim(), |i, j| dirs[i][j]);
                let basis = orthonormalize_rows(&rows, 1e-10);
                let p = ErasureProjection::from_basis(basis, Method::Inlp).in_module("baselines")?;
                points.push(point(rank, Some(&p))?);
            }
            Ok(points)
        }
        "rlace" => {
            // Every rank is an independent fit, so ranks can run in parallel.
            let ranks: Vec<usize> = (lo..=hi).collect();
            let fit_one = |rank: usize| -> Result<SweepPoint, CliError> {
                if rank == 0 {
                    return point(0, None);
                }
                let cfg = rlace_config(s, rank)?;
                let (p, _) = rlace_fit(train, &GlmSpec::logistic(), &cfg).in_module("rlace")?;
                point(rank, Some(&p))
            };
            let jobs = jobs.max(1);
            let mut results: Vec<Option<Result<SweepPoint, CliError>>> =
                (0..ranks.len()).map(|_| None).collect();
            for chunk in ranks.chunks(jobs).zip(results.chunks_mut(jobs)) {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunk
                        .0
                        .iter()
                        .map(|&r| scope.spawn(move || fit_one(r)))
                        .collect();
                    for (slot, h) in chunk.1.iter_mut().zip(handles) {
                        *slot = Some(h.join().unwrap_or_else(|_| {
                            Err(CliError::runtime(
                                Error::Internal("sweep worker panicked".into()),
                                "cli",
                            ))
                        }));
                    }
                });
            }
            results.into_iter().map(|r| r.unwrap()).collect()
        }
        other => Err(CliError::usage(format!(
            "sweep_method must be inlp or rlace, got '{other}'"
        ))),
    }
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let mut s = resolve_settings(&args.common)?;
    set_opt(&mut s, "task", args.task.as_ref())?;
    if args.common.print_config {
        print!("{}", s.render());
        return Ok(());
    }
    let seed: u64 = s.require("seed")?;
    let clusters = parse_clusters(&args.clusters)?;
    let range = args.sweep_rank.as_deref().map(parse_range).transpose()?;
    let wants_vectors =
        args.probe || args.weat.is_some() || args.vmeasure || args.simpairs.is_some() || range.is_some();
    let wants_labels = args.probe || args.vmeasure || range.is_some();
    if !wants_vectors && args.tpr_gap.is_none() {
        return Err(CliError::usage(
            "select at least one metric: --probe, --weat, --vmeasure, --tpr-gap, --simpairs or --sweep-rank",
        ));
    }

    let mut manifest = ManifestBuilder::start("eval", s.as_map(), seed);
    let inputs = [
        args.vectors.as_deref(),
        args.labels.as_deref(),
        args.projection.as_deref(),
        args.weat.as_deref(),
        args.tpr_gap.as_deref(),
        args.simpairs.as_deref(),
        args.common.config.as_deref(),
    ];
    for p in inputs.into_iter().flatten() {
        manifest.input(p)?;
    }

    let mut report = EvalReport::default();
    let vectors = if wants_vectors {
        let raw = load_vectors_text(required(&args.vectors, "--vectors")?).in_module("dataio")?;
        match &args.projection {
            Some(p) => {
                let proj = load_projection(p).in_module("dataio")?;
                let matrix = proj.apply_raw(&raw.matrix).in_module("dataio")?;
                Some(Vectors { matrix, ..raw })
            }
            None => Some(raw),
        }
    } else {
        None
    };
    let labelled = if wants_labels {
        let labels = load_labels(required(&args.labels, "--labels")?).in_module("dataio")?;
        let v = vectors.as_ref().unwrap();
        Some(label_rows(v, &v.matrix, &labels, &s)?)
    } else {
        None
    };

    let split = match &labelled {
        Some(l) if args.probe || range.is_some() => {
            if l.data.task() != TaskKind::BinaryClassification {
                return Err(CliError::usage(
                    "the probe needs two-valued labels (classification task)",
                ));
            }
            let frac: f64 = s.require("test_fraction")?;
            Some(l.data.split(frac, seed).in_module("dataio")?)
        }
        _ => None,
    };
    if args.probe {
        let (train, test) = split.as_ref().unwrap();
        report.probe = Some(
            probe_accuracy(train, test, None, &probe_config(&s)?).in_module("eval")?,
        );
    }
    if let Some(path) = &args.weat {
        let text = fs::read_to_string(path).map_err(|e| CliError::runtime(Error::io(path, e), "cli"))?;
        let file: WeatSpecFile = serde_json::from_str(&text)
            .map_err(|e| CliError::runtime(Error::Format(e.to_string()), "eval"))?;
        let spec = file.resolve(vectors.as_ref().unwrap()).in_module("eval")?;
        report.weat = Some(weat_statistic(&spec, seed).in_module("eval")?);
    }
    if args.vmeasure {
        let l = labelled.as_ref().unwrap();
        let restarts: usize = s.require("kmeans_restarts")?;
        for &n in &clusters {
            let km = kmeans_cluster(l.data.x(), n, seed, restarts).in_module("eval")?;
            let v = v_measure(&l.raw, &km.labels, 1.0).in_module("eval")?;
            report.v_measure.push(ClusterScore {
                n_clusters: n,
                v_measure: v.v_measure,
                homogeneity: v.homogeneity,
                completeness: v.completeness,
            });
        }
    }
    if let Some(path) = &args.tpr_gap {
        let p = read_predictions(path)?;
        let shares = group_shares(&p.y_true, &p.z).in_module("eval")?;
        report.tpr_gap =
            Some(tpr_gap_suite(&p.y_true, &p.y_pred, &p.z, Some(&shares)).in_module("eval")?);
    }
    if let Some(path) = &args.simpairs {
        let v = vectors.as_ref().unwrap();
        let index = v.index();
        let all = read_simpairs(path)?;
        let mut pairs = Vec::new();
        for (a, b, score) in &all {
            if let (Some(&i), Some(&j)) = (index.get(a.as_str()), index.get(b.as_str())) {
                pairs.push((v.matrix.row(i).transpose(), v.matrix.row(j).transpose(), *score));
            }
        }
        report.similarity = Some(SimilarityScore {
            correlation: similarity_correlation(&pairs).in_module("eval")?,
            pairs_used: pairs.len(),
            pairs_skipped: all.len() - pairs.len(),
        });
    }
    if let Some(range) = range {
        let (train, test) = split.as_ref().unwrap();
        report.rank_sweep = sweep(train, test, range, &s, args.jobs)?;
    }

    let Some(out) = &args.out else {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::runtime(Error::Format(e.to_string()), "cli"))?;
        println!("{text}");
        return Ok(());
    };
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    manifest.output("report.json");
    let mut csv_out = |name: &str, write: &dyn Fn(&Path) -> Result<(), CliError>| {
        write(&out.join(name))?;
        manifest.output(name);
        Ok::<(), CliError>(())
    };
    if let Some(p) = &report.probe {
        csv_out("probe.csv", &|path| write_csv(path, &[p]))?;
    }
    if let Some(w) = &report.weat {
        let row = WeatRow {
            d: w.d,
            p_value: w.p_value,
            n_permutations: w.n_permutations,
            exact: w.exact,
        };
        csv_out("weat.csv", &|path| write_csv(path, &[&row]))?;
    }
    if !report.v_measure.is_empty() {
        csv_out("vmeasure.csv", &|path| write_csv(path, &report.v_measure))?;
    }
    if let Some(t) = &report.tpr_gap {
        let rows: Vec<GapRow> = t
            .gaps
            .iter()
            .map(|g| GapRow {
                class: &g.class,
                gap: g.gap,
            })
            .collect();
        csv_out("tpr_gap.csv", &|path| write_csv(path, &rows))?;
    }
    if let Some(sim) = &report.similarity {
        csv_out("similarity.csv", &|path| write_csv(path, &[sim]))?;
    }
    if !report.rank_sweep.is_empty() {
        csv_out("rank_sweep.csv", &|path| write_csv(path, &report.rank_sweep))?;
    }
    manifest.finish(out)?;
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let kind: FixtureKind = args
        .kind
        .parse()
        .map_err(|e: Error| CliError::usage(e.to_string()))?;
    let fixture = generate(kind, args.n, args.dim, args.seed)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let config: BTreeMap<String, String> = [
        ("kind", kind.name().to_string()),
        ("n", args.n.to_string()),
        ("dim", args.dim.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mut manifest = ManifestBuilder::start("synth", &config, args.seed);
    create_dir(&args.out)?;
    write_vectors_text(args.out.join("vectors.txt"), &fixture.ids, fixture.data.x())
        .in_module("dataio")?;
    write_labels_text(args.out.join("labels.txt"), &fixture.ids, fixture.data.y())
        .in_module("dataio")?;
    manifest.output("vectors.txt");
    manifest.output("labels.txt");
    manifest.finish(&args.out)?;
    Ok(())
}
