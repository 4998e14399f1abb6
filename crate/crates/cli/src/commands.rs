use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};
use voxc_core::complete::{cluster, Completer};
use voxc_core::datagen::{build_dataset, DatasetConfig, HoldoutModels, Split, SplitConfig};
use voxc_core::formats::{atomic_write, load_cloud, load_dataset, load_mesh, save_dataset, save_mesh, Table};
use voxc_core::geom::TriMesh;
use voxc_core::net::io::{load_model, save_model};
use voxc_core::net::{train, Architecture, Model, TrainConfig};
use voxc_core::postprocess::{fast_mesh, partial_mesh, reconstruct_detailed, ReconstructConfig};
use voxc_core::shapes::{desk_set, Family};
use voxc_core::timing::{timed, TimingReport};
use voxc_core::{EmbedTransform, Error, OccupancyGrid, PointCloud};

use crate::args::{ArchKind, CompleteArgs, EvaluateArgs, GenDataArgs, GenShapesArgs, TrainArgs};
use crate::eval::{evaluate, EvalOptions, Method, Truth};

type Result<T> = anyhow::Result<T>;

pub fn gen_shapes(a: &GenShapesArgs) -> Result<()> {
    let families: Vec<Family> = if a.families.is_empty() {
        Family::ALL.to_vec()
    } else {
        a.families.clone()
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let set = desk_set(&families, a.per_family, a.seed);
    for (id, m) in &set {
        save_mesh(&a.out_dir.join(format!("{id}.off")), m)?;
    }
    println!("meshes\t{}", set.len());
    Ok(())
}

/// Every `.off` / `.stl` file in `dir`, sorted by file name, keyed by stem.
/// Unreadable files are skipped with a warning.
pub fn read_mesh_dir(dir: &Path) -> Result<Vec<(String, TriMesh)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::invalid(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension()
                        .and_then(|e| e.to_str())
                        .map(str::to_ascii_lowercase)
                        .as_deref(),
                    Some("off" | "stl")
                )
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        match load_mesh(&p).and_then(|m| m.validate().map(|_| m)) {
            Ok(m) if !id.is_empty() => out.push((id, m)),
            Ok(_) => warn!("skipping {}: no usable file name", p.display()),
            Err(e) => warn!("skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let meshes = read_mesh_dir(&a.mesh_dir)?;
    if meshes.len() < 2 {
        return Err(Error::invalid(format!(
            "{} usable meshes in {}, at least 2 are needed",
            meshes.len(),
            a.mesh_dir.display()
        ))
        .into());
    }
    let holdout_models = if a.holdout_meshes.is_empty() {
        HoldoutModels::Fraction(a.holdout_frac)
    } else {
        HoldoutModels::Named(a.holdout_meshes.clone())
    };
    let cfg = DatasetConfig {
        views: a.views.0,
        split: SplitConfig {
            holdout_models,
            holdout_view_frac: a.holdout_view_frac,
        },
        ..DatasetConfig::default()
    };
    info!("rendering {} meshes", meshes.len());
    let ds = build_dataset(&meshes, &cfg, a.grid_side, a.seed)?;
    save_dataset(&a.out, &ds)?;
    let mut t = Table::new(&["split", "pairs"]);
    for s in Split::ALL {
        t.push(vec![s.name().into(), ds.count(s).to_string()]);
    }
    t.push(vec!["total".into(), ds.len().to_string()]);
    print!("{}", t.to_tsv());
    Ok(())
}

fn architecture(kind: ArchKind, side: usize) -> voxc_core::Result<Architecture> {
    match kind {
        ArchKind::Compact => Architecture::compact(side),
        ArchKind::Standard => Architecture::standard(side),
        ArchKind::Reference => Architecture::reference(side),
    }
}

/// `<out>.peak` and `<out>.history.tsv` next to the final model.
pub fn train_outputs(out: &Path) -> (PathBuf, PathBuf) {
    let with = |suffix: &str| {
        let mut s = out.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with(".peak"), with(".history.tsv"))
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let arch = architecture(a.arch, ds.side)?;
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        max_batches: a.batches,
        eval_every: a.eval_every,
        eval_samples: a.eval_samples,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let model = Model::init(arch, a.seed)?;

    let mut header = Table::new(&["arch", "params", "side", "pairs", "batches", "batch_size", "lr", "seed"]);
    header.push(vec![
        a.arch.name().into(),
        model.arch().param_count().to_string(),
        ds.side.to_string(),
        ds.len().to_string(),
        a.batches.to_string(),
        a.batch_size.to_string(),
        a.lr.to_string(),
        a.seed.to_string(),
    ]);
    print!("{}", header.to_tsv());

    let outcome = train(model, &ds, &cfg)?;
    let (peak_path, history_path) = train_outputs(&a.out);
    save_model(&a.out, &outcome.model)?;
    let peak = outcome.peak.as_ref().map(|(_, m)| m).unwrap_or(&outcome.model);
    save_model(&peak_path, peak)?;

    let mut hist = Table::new(&["batch", "split", "jaccard"]);
    for r in &outcome.history {
        hist.push(vec![
            r.batch.to_string(),
            r.split.name().into(),
            format!("{:.6}", r.jaccard),
        ]);
    }
    atomic_write(&history_path, hist.to_tsv().as_bytes())?;
    if let Some((b, _)) = &outcome.peak {
        println!("peak_batch\t{b}");
    }
    Ok(())
}

/// Completion grid for `cloud` with the method's own surface extraction:
/// the fast path unless `detailed` is set.
pub fn complete_object(
    c: &Completer,
    cloud: &PointCloud,
    side: usize,
    detailed: bool,
    rc: &ReconstructConfig,
) -> voxc_core::Result<(OccupancyGrid, EmbedTransform, TriMesh)> {
    let out = c.complete(cloud, side)?;
    let mesh = if detailed {
        reconstruct_detailed(&out.grid, cloud, &out.transform, rc)?.mesh
    } else if matches!(c, Completer::Partial) {
        partial_mesh(&out.grid, &out.transform)
    } else {
        fast_mesh(&out.grid, &out.transform)
    };
    Ok((out.grid, out.transform, mesh))
}

pub fn complete_cmd(a: &CompleteArgs) -> Result<TimingReport> {
    let cloud = load_cloud(&a.cloud).with_context(|| format!("reading {}", a.cloud.display()))?;
    let (model, side) = match (a.method, &a.model) {
        (Method::Cnn, Some(p)) => {
            let m = load_model(p)?;
            let side = m.input_side();
            (Some(m), side)
        }
        (Method::Cnn, None) => return Err(Error::invalid("--method cnn needs --model").into()),
        (Method::Oracle, _) => bail!(Error::invalid("the oracle method needs ground truth")),
        (_, _) => (None, a.grid_side),
    };
    let completer = crate::eval::completer(a.method, model.as_ref())?.expect("non-oracle method");

    let (clusters, t_segment) = timed(|| cluster(&cloud, a.cluster_tol));
    let clusters = clusters?;
    if clusters.is_empty() {
        return Err(Error::invalid(format!(
            "no cluster of at least {} points at tolerance {}",
            voxc_core::complete::MIN_CLUSTER_POINTS,
            a.cluster_tol
        ))
        .into());
    }
    if a.cluster_index >= clusters.len() {
        let list: Vec<String> = clusters
            .iter()
            .enumerate()
            .map(|(i, c)| format!("  {i}: {} points", c.len()))
            .collect();
        return Err(Error::invalid(format!(
            "cluster index {} out of range; available clusters:\n{}",
            a.cluster_index,
            list.join("\n")
        ))
        .into());
    }

    let rc = ReconstructConfig::default();
    let target = &clusters[a.cluster_index];
    let (res, t_target) = timed(|| complete_object(&completer, target, side, !a.fast, &rc));
    let (_, _, mesh) = res?;

    let mut non_target = Vec::new();
    for (i, c) in clusters.iter().enumerate() {
        if i != a.cluster_index {
            let (r, t) = timed(|| complete_object(&completer, c, side, false, &rc));
            r?;
            non_target.push(t);
        }
    }

    let out = if a.stl {
        a.out.with_extension("stl")
    } else {
        a.out.clone()
    };
    save_mesh(&out, &mesh)?;
    let report = TimingReport::new(t_segment, t_target, &non_target);
    println!("{report}");
    Ok(report)
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    if a.methods.is_empty() {
        return Err(Error::invalid("--methods is empty").into());
    }
    let ds = load_dataset(&a.dataset)?;
    let model = a.model.as_deref().map(load_model).transpose()?;
    let meshes: Option<HashMap<String, TriMesh>> = a
        .mesh_dir
        .as_deref()
        .map(|d| read_mesh_dir(d).map(|v| v.into_iter().collect()))
        .transpose()?;
    let truth = match &meshes {
        Some(m) => Truth::Meshes(m, DatasetConfig::default().camera),
        None => Truth::Grids,
    };
    let mut opts = EvalOptions {
        methods: a.methods.clone(),
        detailed: a.detailed,
        grid_jaccard: a.grid_jaccard,
        max_per_split: a.max_per_split,
        ..EvalOptions::default()
    };
    opts.metrics.seed = a.seed;
    let report = evaluate(&ds, model.as_ref(), &truth, &opts)?;
    atomic_write(&a.out, report.to_table().to_tsv().as_bytes())?;

    let mut t = Table::new(&["method", "split", "n", "jaccard", "hausdorff_mm", "geodesic_js"]);
    for c in &report.cells {
        t.push(vec![
            c.method.clone(),
            c.split.name().into(),
            c.count.to_string(),
            format!("{:.4}", c.mean.jaccard),
            format!("{:.3}", c.mean.hausdorff_mm),
            format!("{:.4}", c.mean.geodesic_js),
        ]);
    }
    print!("{}", t.to_tsv());
    Ok(())
}
