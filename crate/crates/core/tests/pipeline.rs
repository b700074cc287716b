use approx::assert_relative_eq;
use fmrc_core::diagnostics::{model_diagnostics, DiagnosticsConfig};
use fmrc_core::dynamics::{
    euler_maruyama_simulate, extract_pairs, PotentialSpec, SdeConfig, SwissRollMap,
};
use fmrc_core::flowmatch::{
    evaluate_loss, full_fm_minibatch_loss, train, ArchitectureConfig, Direction, FlowModels,
    ModelManifest, TrainConfig, TrainMode, VelocityFieldModel, V0_ID, V1_ID,
};
use fmrc_core::format::{read_pairs, read_trajectory, write_pairs, write_trajectory, FileMetadata};
use fmrc_core::msm::{count_transition_matrix, kmeans_discretize, pcca_plus};
use fmrc_core::neural::{check_gradients, Activation};
use fmrc_core::rng;
use ndarray::Array2;

fn short_trajectory(steps: usize, seed: u64) -> fmrc_core::dynamics::Trajectory {
    let cfg = SdeConfig {
        n_steps: steps,
        burn_in: 0,
        seed,
        ..Default::default()
    };
    euler_maruyama_simulate(&PotentialSpec::seven_well(), &cfg, &[1.0, 0.0, 0.0]).unwrap()
}

fn small_arch() -> ArchitectureConfig {
    ArchitectureConfig {
        encoder_hidden: vec![8],
        velocity_hidden: vec![8, 8],
        s_features: 2,
        ..Default::default()
    }
}

#[test]
fn full_baseline_gradient_matches_finite_differences() {
    let mut r = rng::stream(4);
    let x = Array2::from_shape_fn((16, 3), |_| rng::normal(&mut r));
    let y = Array2::from_shape_fn((16, 3), |_| rng::normal(&mut r));
    let arch = small_arch();
    let field = |dir, seed| {
        VelocityFieldModel::new(
            3,
            3,
            dir,
            &arch.velocity_hidden,
            arch.s_features,
            Activation::Tanh,
            seed,
        )
        .unwrap()
    };
    let (v0, v1) = (field(Direction::Forward, 1), field(Direction::Backward, 2));
    let (_, g) = full_fm_minibatch_loss(&v0, &v1, x.view(), y.view(), 9).unwrap();
    let analytic = vec![
        v0.net.flat_gradient(&g, V0_ID),
        v1.net.flat_gradient(&g, V1_ID),
    ];
    let mut params = vec![v0.net.flat_params(), v1.net.flat_params()];
    let indices: Vec<(usize, usize)> = (0..2)
        .flat_map(|g| (0..params[g].len()).map(move |i| (g, i)))
        .collect();
    let (mut a, mut b) = (v0.clone(), v1.clone());
    let report = check_gradients(&mut params, &analytic, &indices, 1e-3, 1e-6, |p| {
        a.net.set_flat_params(&p[0]).unwrap();
        b.net.set_flat_params(&p[1]).unwrap();
        full_fm_minibatch_loss(&a, &b, x.view(), y.view(), 9)
            .unwrap()
            .0
            .total
    });
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

#[test]
fn trajectory_and_pair_files_round_trip() {
    let t = short_trajectory(500, 3);
    let obs = SwissRollMap::default().apply_to_trajectory(&t).unwrap();
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &obs).unwrap();
    let back = read_trajectory(&mut buf.as_slice()).unwrap();
    assert_eq!(back, obs);

    let pairs = extract_pairs(&obs, 25).unwrap();
    let mut buf = Vec::new();
    let meta = FileMetadata::from_origin(&obs.origin, obs.dt);
    write_pairs(&mut buf, &pairs, &meta).unwrap();
    let (back, m) = read_pairs(&mut buf.as_slice()).unwrap();
    assert_eq!(back.x, pairs.x);
    assert_eq!(back.y, pairs.y);
    assert_eq!(back.lag_steps, 25);
    assert_eq!(m.seed, meta.seed);
}

#[test]
fn swiss_roll_inverse_recovers_clean_trajectory() {
    let t = short_trajectory(300, 8);
    let map = SwissRollMap::default();
    for p in t.iter_points() {
        let q = map.inverse(&map.forward(p).unwrap()).unwrap();
        for k in 0..3 {
            assert_relative_eq!(q[k], p[k], epsilon = 1e-9);
        }
    }
}

#[test]
fn trained_models_survive_save_and_load() {
    let t = short_trajectory(3000, 5);
    let pairs = extract_pairs(&t, 20).unwrap();
    let cfg = TrainConfig {
        iterations: 30,
        batch_size: 32,
        eval_every: 10,
        architecture: small_arch(),
        seed: 2,
        ..Default::default()
    };
    let outcome = train(&pairs, TrainMode::Fmrc, &cfg).unwrap();
    assert!(outcome.best_validation.unwrap().is_finite());

    let dir = tempfile::tempdir().unwrap();
    let mut manifest = ModelManifest::new("fmrc", "hash", 3, 20);
    outcome
        .best
        .save(dir.path(), &mut manifest, serde_json::Value::Null)
        .unwrap();
    let (loaded, m) = FlowModels::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.dataset_hash, "hash");

    let before = evaluate_loss(&outcome.best, &pairs, 11).unwrap();
    let after = evaluate_loss(&loaded, &pairs, 11).unwrap();
    assert_eq!(before.total, after.total);
}

#[test]
fn msm_pipeline_labels_every_active_state() {
    let t = short_trajectory(20_000, 6).project(&[0, 1]);
    let rows: Vec<f64> = t.iter_points().flatten().copied().collect();
    let pts = Array2::from_shape_vec((t.len(), 2), rows).unwrap();
    let (disc, labels) = kmeans_discretize(pts.view(), 10, 1).unwrap();
    let tm = count_transition_matrix(&[labels], 10, 10).unwrap();
    let res = pcca_plus(&tm, 2).unwrap();
    assert_eq!(res.labels.len(), tm.n_active());
    for a in 0..res.states.len() {
        assert_relative_eq!(res.membership(a).iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }
    assert_eq!(disc.k, 10);
}

#[test]
fn diagnostics_run_on_trained_models() {
    let t = short_trajectory(3000, 7);
    let pairs = extract_pairs(&t, 20).unwrap();
    let cfg = TrainConfig {
        iterations: 20,
        batch_size: 32,
        eval_every: 10,
        architecture: small_arch(),
        ..Default::default()
    };
    let models = train(&pairs, TrainMode::Full, &cfg).unwrap().best;
    let dcfg = DiagnosticsConfig {
        max_samples: 300,
        w2_samples: 100,
        ..Default::default()
    };
    let d = model_diagnostics(&pairs, &models, &dcfg).unwrap();
    assert!(d.forward.weak_error >= 0.0 && d.backward.weak_error >= 0.0);
    assert!(d.w2_pairs.is_finite());
}
