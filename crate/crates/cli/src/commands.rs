use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use lfa::assignment::{label_entropy, ulfa, ColumnMarginal, SinkhornConfig};
use lfa::data::{
    aggregate_labeled, beta_sweep, default_beta_grid, group_aggregate, read_archive, read_map, synth_generate,
    write_archive, write_map, AggregateMode, Archive, Manifest, PlantedMap, Split, SweepConfig, SweepResult, SynthSpec,
};
use lfa::eval::{classify, evaluate, gt_rank, modality_gap, pca_project, predict, rank_histogram, top1_accuracy};
use lfa::presets::{preset, Preset};
use lfa::procrustes::procrustes_objective;
use lfa::refine::{average_maps, write_trace_csv};
use lfa::{
    beta_procrustes, least_squares_map, orthogonal_procrustes, refine, BetaParam, FeatureMatrix, LabeledFeatures,
    LfaError, LinearMap, LossKind, MapKind, Mat, PrototypeMatrix, Real, RefineConfig, Result,
};

use crate::record::{ensure_dir, write_csv, PhaseTimer, RunRecord};
use crate::{
    ApproxArgs, BetaChoice, EvalArgs, FitArgs, FoldArgs, GapArgs, HubnessArgs, Planted, Precision, RefineArgs,
    SweepBetaArgs, SynthArgs, UnsupArgs, Which,
};

fn resolve_refine(a: &RefineArgs) -> Result<(RefineConfig, Option<Preset>)> {
    let mut cfg = RefineConfig::default();
    let preset = a.preset.as_deref().map(preset).transpose()?;
    if let Some(p) = &preset {
        p.apply(&mut cfg);
    }
    if let Some(l) = &a.loss {
        cfg.loss = l.parse::<LossKind>()?;
    }
    macro_rules! set {
        ($($field:ident <- $flag:ident),*) => {
            $(if let Some(v) = a.$flag { cfg.$field = v; })*
        };
    }
    set!(k <- k, s <- s, steps <- steps, lr <- lr, lr_min <- lr_min, weight_decay <- wd,
         noise_std <- noise, dropout_p <- dropout, tau <- loss_tau, triplet_margin <- triplet_margin);
    cfg.batch = a.batch;
    cfg.ema = a.ema;
    cfg.seed = a.seed;
    cfg.validate()?;
    Ok((cfg, preset))
}

fn sweep_config(f: &FoldArgs, seed: u64) -> SweepConfig {
    SweepConfig {
        grid: default_beta_grid(),
        folds: f.folds,
        val_frac: f.val_frac,
        train_frac: f.train_frac,
        seed,
    }
}

fn load_labeled<T: Real>(path: &Path, mode: AggregateMode) -> Result<LabeledFeatures<T>> {
    load_labeled_from(read_archive(path)?, mode)
}

/// Features and, when the manifest has them, labels.
fn load_features<T: Real>(path: &Path, mode: AggregateMode) -> Result<(FeatureMatrix<T>, Option<Vec<usize>>)> {
    let archive: Archive<T> = read_archive(path)?;
    if archive.manifest.labels.is_some() {
        let data = load_labeled_from(archive, mode)?;
        return Ok((data.features, Some(data.labels)));
    }
    let features = match mode {
        AggregateMode::Expand => archive.features,
        m => group_aggregate(&archive.features, m)?,
    };
    Ok((features, None))
}

fn load_labeled_from<T: Real>(archive: Archive<T>, mode: AggregateMode) -> Result<LabeledFeatures<T>> {
    let data = archive.labeled()?;
    match mode {
        AggregateMode::Expand => Ok(data),
        m => aggregate_labeled(&data, m),
    }
}

fn load_prototypes<T: Real>(path: &Path) -> Result<PrototypeMatrix<T>> {
    read_archive::<T>(path)?.prototypes()
}

fn check_dims(features: usize, prototypes: usize) -> Result<()> {
    if features != prototypes {
        return Err(LfaError::DimensionMismatch(format!(
            "features d = {features}, prototypes d = {prototypes}"
        )));
    }
    Ok(())
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

fn train_top1<T: Real>(data: &LabeledFeatures<T>, w: &LinearMap<T>, y: &PrototypeMatrix<T>) -> Result<f64> {
    top1_accuracy(&predict(&data.features, w, y)?, &data.labels)
}

pub fn fit<T: Real>(a: &FitArgs, precision: Precision) -> Result<Value> {
    let (cfg, preset) = resolve_refine(&a.refine)?;
    let beta_choice = a
        .beta
        .or_else(|| preset.and_then(|p| p.beta).map(BetaChoice::Value))
        .unwrap_or(BetaChoice::Auto);
    let mode: AggregateMode = a.refine.aggregate.parse()?;
    let sweep_cfg = sweep_config(&a.folds, cfg.seed);
    ensure_dir(&a.out)?;

    let mut timer = PhaseTimer::default();
    let (data, y) = timer.time("feature_load", || -> Result<_> {
        Ok((load_labeled::<T>(&a.train, mode)?, load_prototypes::<T>(&a.prototypes)?))
    })?;
    check_dims(data.features.dim(), y.dim())?;

    let (beta, sweep): (BetaParam, Option<SweepResult>) = match beta_choice {
        BetaChoice::Value(b) => (BetaParam::new(b)?, None),
        BetaChoice::Auto => {
            let r = timer.time("beta_sweep", || beta_sweep(&data, &y, &cfg, &sweep_cfg))?;
            (BetaParam::new(r.best_beta)?, Some(r))
        }
    };
    let (w_op, w0) = timer.time("procrustes_init", || -> Result<_> {
        let w_op = orthogonal_procrustes(&data.features, &y.gather(&data.labels))?;
        let w0 = beta_procrustes(&w_op, beta);
        Ok((w_op, w0))
    })?;
    let out = timer.time("refinement", || refine(&w0, &data, &y, &cfg))?;

    write_map(&out.w, a.out.join("w.npy"))?;
    if let Some(tt) = &out.w_tt {
        write_map(tt, a.out.join("w_tt.npy"))?;
    }
    write_csv(&a.out.join("trace.csv"), |b| write_trace_csv(&out.trace, b))?;
    if let Some(s) = &sweep {
        write_csv(&a.out.join("sweep.csv"), |b| s.write_csv(b))?;
    }

    let metrics = json!({
        "beta": beta.value(),
        "n": data.len(),
        "classes": y.num_classes(),
        "dim": y.dim(),
        "train_top1_procrustes": train_top1(&data, &w_op, &y)?,
        "train_top1_init": train_top1(&data, &w0, &y)?,
        "train_top1": train_top1(&data, &out.w, &y)?,
        "final_loss": out.trace.last().map(|r| r.loss),
    });
    let record = RunRecord {
        command_line: command_line(),
        subcommand: "fit",
        config: json!({
            "train": a.train,
            "prototypes": a.prototypes,
            "precision": precision,
            "preset": a.refine.preset,
            "aggregate": mode,
            "beta": beta_choice,
            "refine": cfg,
            "sweep": sweep.as_ref().map(|_| &sweep_cfg),
        }),
        seed: cfg.seed,
        timings: timer.into_phases(),
        metrics: metrics.clone(),
    };
    let path = record.write(&a.out)?;
    Ok(json!({ "out": a.out, "record": path, "metrics": metrics }))
}

pub fn fit_unsup<T: Real>(a: &UnsupArgs, precision: Precision) -> Result<Value> {
    let (cfg, _) = resolve_refine(&a.refine)?;
    let beta = BetaParam::new(a.beta)?;
    let mode: AggregateMode = a.refine.aggregate.parse()?;
    let sk = SinkhornConfig {
        epsilon: a.epsilon,
        iters: a.sinkhorn_iters,
        tol: a.sinkhorn_tol,
        col_marginal: ColumnMarginal::Uniform,
    };
    ensure_dir(&a.out)?;

    let mut timer = PhaseTimer::default();
    let ((x, labels), y) = timer.time("feature_load", || -> Result<_> {
        Ok((load_features::<T>(&a.features, mode)?, load_prototypes::<T>(&a.prototypes)?))
    })?;
    check_dims(x.dim(), y.dim())?;
    let out = timer.time("alignment", || ulfa(&x, &y, a.n, beta, &cfg, &sk))?;
    write_map(&out.w, a.out.join("w.npy"))?;

    let c = y.num_classes();
    let score = |pred: &[usize]| -> Result<Option<f64>> {
        labels.as_deref().map(|l| top1_accuracy(pred, l)).transpose()
    };
    let metrics = json!({
        "n": x.len(),
        "classes": c,
        "rounds": a.n,
        "entropy": label_entropy(&out.labels, c),
        "initial_entropy": label_entropy(&out.initial_labels, c),
        "max_entropy": (c as f64).ln(),
        "assignment_accuracy": score(&out.labels)?,
        "initial_assignment_accuracy": score(&out.initial_labels)?,
    });
    let record = RunRecord {
        command_line: command_line(),
        subcommand: "fit-unsup",
        config: json!({
            "features": a.features,
            "prototypes": a.prototypes,
            "precision": precision,
            "aggregate": mode,
            "n": a.n,
            "beta": a.beta,
            "sinkhorn": sk,
            "refine": cfg,
        }),
        seed: cfg.seed,
        timings: timer.into_phases(),
        metrics: metrics.clone(),
    };
    let path = record.write(&a.out)?;
    Ok(json!({ "out": a.out, "record": path, "metrics": metrics }))
}

fn select_map<T: Real>(a: &EvalArgs) -> Result<LinearMap<T>> {
    let tt = || -> Result<LinearMap<T>> {
        let path = a
            .mapping_tt
            .as_ref()
            .ok_or_else(|| LfaError::InvalidConfig("--mapping-tt is required for this --which".into()))?;
        read_map(path, MapKind::Ema)
    };
    match a.which {
        Which::W => read_map(&a.mapping, MapKind::Refined),
        Which::WTt => tt(),
        Which::Average => average_maps(&read_map(&a.mapping, MapKind::Refined)?, &tt()?),
    }
}

pub fn eval<T: Real>(a: &EvalArgs) -> Result<Value> {
    let mode: AggregateMode = a.aggregate.parse()?;
    let data = load_labeled::<T>(&a.test, mode)?;
    let y = load_prototypes::<T>(&a.prototypes)?;
    let w = select_map::<T>(a)?;
    let report = evaluate(&data, &w, &y)?;
    if let Some(p) = &a.histogram {
        write_csv(p, |b| report.write_histogram_csv(b))?;
    }
    if let Some(p) = &a.probs {
        let (probs, preds) = classify(&data.features, &w, &y, a.tau)?;
        write_csv(p, |b| {
            write!(b, "label,pred")?;
            for j in 0..y.num_classes() {
                write!(b, ",p{j}")?;
            }
            writeln!(b)?;
            for (i, row) in probs.row_iter().enumerate() {
                write!(b, "{},{}", data.labels[i], preds[i])?;
                for v in row {
                    write!(b, ",{v:e}")?;
                }
                writeln!(b)?;
            }
            Ok(())
        })?;
    }
    let value = serde_json::to_value(&report).expect("report serializes");
    if let Some(p) = &a.out {
        let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
        text.push('\n');
        crate::record::write_file(p, text.as_bytes())?;
    }
    Ok(value)
}

pub fn sweep_beta<T: Real>(a: &SweepBetaArgs) -> Result<Value> {
    let (cfg, _) = resolve_refine(&a.refine)?;
    let mode: AggregateMode = a.refine.aggregate.parse()?;
    let data = load_labeled::<T>(&a.train, mode)?;
    let y = load_prototypes::<T>(&a.prototypes)?;
    check_dims(data.features.dim(), y.dim())?;
    let result = beta_sweep(&data, &y, &cfg, &sweep_config(&a.folds, cfg.seed))?;
    write_csv(&a.out, |b| result.write_csv(b))?;
    Ok(json!({
        "best_beta": result.best_beta,
        "mean_acc": result.mean_acc.iter().map(|&(b, acc)| json!({"beta": b, "val_acc": acc})).collect::<Vec<_>>(),
        "table": a.out,
    }))
}

fn manifest_for(labels: Option<Vec<usize>>, names: &[String], split: Split) -> Manifest {
    Manifest {
        labels,
        class_names: names.to_vec(),
        group_ids: None,
        split,
        source_model: "synthetic".into(),
    }
}

pub fn synth<T: Real>(a: &SynthArgs) -> Result<Value> {
    let planted = match a.planted {
        Planted::Identity => PlantedMap::Identity,
        Planted::Orthogonal => PlantedMap::RandomOrthogonal,
        Planted::NearIdentity => PlantedMap::NearIdentity { strength: a.strength },
        Planted::Invertible => PlantedMap::RandomInvertible,
    };
    let spec = SynthSpec {
        classes: a.classes,
        dim: a.dim,
        shots_per_class: a.shots,
        test_per_class: a.test_per_class,
        noise_std: a.noise,
        planted_map: planted,
        seed: a.seed,
    };
    let set = synth_generate::<T>(&spec)?;
    ensure_dir(&a.out)?;
    let names = set.prototypes.class_names();
    let train_labels = (!a.drop_labels).then(|| set.train.labels.clone());
    write_archive(set.train.features.matrix(), &manifest_for(train_labels, names, Split::Train), a.out.join("train"))?;
    if let Some(test) = &set.test {
        write_archive(test.features.matrix(), &manifest_for(Some(test.labels.clone()), names, Split::Test), a.out.join("test"))?;
    }
    write_archive(set.prototypes.matrix(), &manifest_for(None, names, Split::Train), a.out.join("prototypes"))?;
    write_map(&set.planted, a.out.join("planted.npy"))?;
    Ok(json!({
        "out": a.out,
        "spec": spec,
        "train_rows": set.train.len(),
        "test_rows": set.test.as_ref().map_or(0, |t| t.len()),
    }))
}

fn optional_map<T: Real>(path: Option<&Path>, d: usize) -> Result<LinearMap<T>> {
    match path {
        Some(p) => read_map(p, MapKind::Refined),
        None => Ok(LinearMap::identity(d)),
    }
}

pub fn hubness<T: Real>(a: &HubnessArgs) -> Result<Value> {
    let data = load_labeled::<T>(&a.test, AggregateMode::Expand)?;
    let y = load_prototypes::<T>(&a.prototypes)?;
    let w = optional_map::<T>(a.mapping.as_deref(), y.dim())?;
    let ranks = gt_rank(&data.features, &w, &y, &data.labels)?;
    let hist = rank_histogram(&ranks, y.num_classes());
    write_csv(&a.out, |b| {
        writeln!(b, "rank,count")?;
        for (r, c) in hist.iter().enumerate() {
            writeln!(b, "{},{}", r + 1, c)?;
        }
        Ok(())
    })?;
    let mean = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
    Ok(json!({ "mean_gt_rank": mean, "rank_histogram": hist, "table": a.out }))
}

pub fn gap<T: Real>(a: &GapArgs) -> Result<Value> {
    let data = load_labeled::<T>(&a.features, AggregateMode::Expand)?;
    let y = load_prototypes::<T>(&a.prototypes)?;
    let w = optional_map::<T>(a.mapping.as_deref(), y.dim())?;
    let mapped = w.apply(data.features.matrix())?;
    let matched = y.gather(&data.labels);
    let gap = modality_gap(&mapped, &matched)?;
    let n = mapped.rows();
    let stacked = Mat::from_fn(2 * n, mapped.cols(), |r, c| {
        if r < n {
            mapped[(r, c)]
        } else {
            matched[(r - n, c)]
        }
    });
    let pca = pca_project(&stacked, a.dims)?;
    write_csv(&a.out, |b| {
        write!(b, "source,index,label")?;
        for k in 0..a.dims {
            write!(b, ",pc{}", k + 1)?;
        }
        writeln!(b)?;
        for r in 0..2 * n {
            let (source, i) = if r < n { ("image", r) } else { ("text", r - n) };
            write!(b, "{source},{i},{}", data.labels[i])?;
            for v in pca.coords.row(r) {
                write!(b, ",{v:e}")?;
            }
            writeln!(b)?;
        }
        Ok(())
    })?;
    Ok(json!({
        "modality_gap": gap.f64(),
        "explained_variance": pca.variances.iter().map(|v| v.f64()).collect::<Vec<_>>(),
        "table": a.out,
    }))
}

pub fn approx_prompts<T: Real>(a: &ApproxArgs) -> Result<Value> {
    let source: Archive<T> = read_archive(&a.source)?;
    let target: Archive<T> = read_archive(&a.target)?;
    let (s, t) = (source.features.matrix(), target.features.matrix());
    let w = least_squares_map(s, t)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_map(&w, &a.out)?;
    let residual = procrustes_objective(s, &w.data, t)?.sqrt();
    Ok(json!({
        "dim": w.dim(),
        "residual": residual.f64(),
        "orthogonality_error": w.orthogonality_error().f64(),
        "out": a.out,
    }))
}
