use voxc_core::complete::{cluster, Completer};
use voxc_core::datagen::{build_dataset, render_view_cloud, DatasetConfig, HoldoutModels, Split, SplitConfig};
use voxc_core::formats::{decode_dataset, encode_dataset, load_mesh, save_mesh};
use voxc_core::geom::marching_cubes_closed;
use voxc_core::metrics::{jaccard, score, MetricConfig};
use voxc_core::net::io::{decode_model, encode_model};
use voxc_core::net::{train, Architecture, Model, TrainConfig};
use voxc_core::postprocess::{reconstruct, ReconstructConfig};
use voxc_core::shapes::{desk_set, Family};
use voxc_core::{PointCloud, Vec3};

fn small_config() -> DatasetConfig {
    DatasetConfig {
        views: [2, 2, 2],
        split: SplitConfig {
            holdout_models: HoldoutModels::Named(vec!["torus_0".into()]),
            holdout_view_frac: 0.25,
        },
        ..DatasetConfig::default()
    }
}

#[test]
fn dataset_is_deterministic_and_round_trips() {
    let meshes = desk_set(&[Family::Box, Family::Sphere, Family::Torus], 1, 4);
    let a = build_dataset(&meshes, &small_config(), 24, 9).unwrap();
    let b = build_dataset(&meshes, &small_config(), 24, 9).unwrap();
    let bytes = encode_dataset(&a).unwrap();
    assert_eq!(bytes, encode_dataset(&b).unwrap());
    assert_eq!(decode_dataset(&bytes).unwrap(), a);

    assert!(a
        .indices(Split::HoldoutModel)
        .iter()
        .all(|&i| a.manifest[i].mesh_id == "torus_0"));
    assert!(a.count(Split::HoldoutView) > 0 && a.count(Split::TrainView) > 0);
    for p in &a.pairs {
        // the observed surface lies inside the solid up to rasterization slack
        let extra = p.x.occupied().filter(|&[x, y, z]| !p.y.get(x, y, z)).count();
        assert!(extra as f64 <= 0.05 * p.x.occupied_count() as f64);
    }
}

#[test]
fn train_complete_reconstruct_score() {
    let meshes = desk_set(&[Family::Box, Family::Sphere, Family::Torus], 1, 4);
    let ds = build_dataset(&meshes, &small_config(), 24, 1).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        max_batches: 6,
        eval_every: 3,
        eval_samples: 4,
        seed: 2,
        ..TrainConfig::default()
    };
    let model = Model::init(Architecture::compact(24).unwrap(), 2).unwrap();
    let out = train(model, &ds, &cfg).unwrap();
    assert_eq!(out.history.len(), 2 * 3);
    let model = decode_model(&encode_model(&out.model)).unwrap();
    assert_eq!(model, out.model);

    let i = ds.indices(Split::TrainView)[0];
    let spec = &ds.manifest[i];
    let mesh = &meshes.iter().find(|(id, _)| *id == spec.mesh_id).unwrap().1;
    let cloud = render_view_cloud(mesh, &spec.pose, &DatasetConfig::default().camera).unwrap();
    let c = Completer::cnn(model)
        .complete_in_frame(&cloud, &ds.pairs[i].transform, 24)
        .unwrap();
    assert!(jaccard(&c.grid, &ds.pairs[i].y).unwrap() > 0.0);

    let m = reconstruct(&c.grid, &cloud, &c.transform, true, &ReconstructConfig::default()).unwrap();
    assert!(m.is_closed());
    let truth = spec.pose.mesh_to_camera(mesh);
    let r = score(&m, &truth, &MetricConfig::default()).unwrap();
    assert!((0.0..=1.0).contains(&r.jaccard));
    assert!(r.hausdorff_mm.is_finite() && r.hausdorff_mm >= 0.0);
    assert!(r.geodesic_js.is_finite());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.off");
    save_mesh(&path, &m).unwrap();
    let back = load_mesh(&path).unwrap();
    assert_eq!(back.triangles, m.triangles);
}

#[test]
fn two_object_scene_splits_and_completes() {
    let mut pts = Vec::new();
    for (k, cx) in [0.0, 0.4].into_iter().enumerate() {
        for i in 0..40 {
            for j in 0..40 {
                let (u, v) = (i as f64 / 39.0 - 0.5, j as f64 / 39.0 - 0.5);
                pts.push(Vec3::new(cx + 0.1 * u, 0.1 * v, 0.5 + 0.01 * k as f64));
            }
        }
    }
    let cs = cluster(&PointCloud::new(pts), 0.02).unwrap();
    assert_eq!(cs.len(), 2);
    for c in &cs {
        let out = Completer::Mirror.complete(c, 24).unwrap();
        let m = marching_cubes_closed(&out.grid.to_weighted(), 0.5, 0.0, &out.transform);
        assert!(!m.is_empty() && m.is_closed());
    }
}
