use nngpiu::bench::{generate_data, run_experiment, Design, ExperimentConfig, TargetFunction};
use nngpiu::engine::Standardize;
use nngpiu::kernel::{KernelFamily, KernelSpec};
use nngpiu::zoo::{ModelConfig, ModelKind};

fn small(grid: usize) -> ExperimentConfig {
    let mut models = vec![
        ModelConfig::new(ModelKind::ShallowGp, Some(KernelSpec::rbf(1.0, 1.0, 0)), None),
        ModelConfig::new(ModelKind::Nngp, Some(KernelSpec::composite(KernelFamily::ArcSine, 2, 1.0, 1.0, 0)), None),
        ModelConfig::new(ModelKind::Kale, Some(KernelSpec::rbf(1.0, 1.0, 0)), None),
    ];
    for m in &mut models {
        m.opt.restarts = 2;
        m.opt.standardize = Standardize::InputsAndOutput;
    }
    ExperimentConfig {
        target: TargetFunction::zigzag(),
        n_train: 12,
        design: Design::Uniform,
        sigma_u_sq: 0.05,
        sigma_eps_sq: 0.01,
        replications: 3,
        eval_grid_size: grid,
        master_seed: 77,
        pin_sigma_eps_sq: true,
        models,
    }
}

#[test]
fn same_seed_same_report() {
    let cfg = small(200);
    let a = serde_json::to_string(&run_experiment(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_experiment(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.master_seed += 1;
    let c = serde_json::to_string(&run_experiment(&other).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn replications_draw_fresh_data() {
    let cfg = small(200);
    let d0 = generate_data(&cfg, 0).unwrap();
    let d1 = generate_data(&cfg, 1).unwrap();
    assert_ne!(d0.inputs, d1.inputs);
    assert_eq!(d0.inputs, generate_data(&cfg, 0).unwrap().inputs);
    // every replication seeds its models independently
    assert_ne!(cfg.model_for(2, 0).noise.unwrap().seed, cfg.model_for(2, 1).noise.unwrap().seed);
    assert_ne!(cfg.model_for(0, 0).opt.seed, cfg.model_for(1, 0).opt.seed);
}

#[test]
fn metric_is_stable_under_grid_doubling() {
    let coarse = run_experiment(&small(1000)).unwrap();
    let fine = run_experiment(&small(2000)).unwrap();
    for (a, b) in coarse.models.iter().zip(&fine.models) {
        assert_eq!(a.failures, 0, "{}", a.label);
        let (a, b) = (a.mean.unwrap(), b.mean.unwrap());
        assert!((a - b).abs() / b < 0.01, "{a} vs {b}");
    }
}
