use mvembed::data::{synth_generate, Dataset, SynthSpec};
use mvembed::deep::{
    embed_grad, embedding_objective, fit_deep, gradient_check, method_laplacian, mlp_forward, project_deep,
    solve_projection, Activation, DeepMethod, TrainConfig,
};
use mvembed::graphs::{class_indicators, laplacian_within};
use mvembed::linalg::{regularize, Matrix};
use mvembed::linear::{assemble_views, fit_linear, project, Method, MethodSpec};
use mvembed_testkit as tk;

fn data(n: usize, seed: u64) -> Dataset {
    let mut spec = SynthSpec::new(n, vec![6, 5], 2);
    spec.classes = 2;
    spec.noise = 0.3;
    spec.seed = seed;
    synth_generate(&spec).unwrap().dataset
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 40,
        learning_rate: 1e-3,
        seed: 3,
        d: 2,
        hidden: vec![8],
        output_dim: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn gradient_matches_testkit_differences() {
    for method in DeepMethod::ALL {
        for (views, n) in [(2usize, 5usize), (3, 8)] {
            let mut r = tk::rng(n as u64 + views as u64);
            let ws: Vec<Matrix> = (0..views).map(|_| tk::random_matrix(&mut r, 3, 2)).collect();
            let hs: Vec<Matrix> = (0..views).map(|_| tk::random_matrix(&mut r, 3, n)).collect();
            let labels: Vec<usize> = (0..n).map(|i| i % 2 + 1).collect();
            let l = method_laplacian(method, Some(&labels), n).unwrap();
            let g = embed_grad(&ws, &hs, &l, method).unwrap();
            for v in 0..views {
                let f = |h: &Matrix| {
                    let mut hv = hs.clone();
                    hv[v] = h.clone();
                    embedding_objective(&ws, &hv, &l, method).unwrap()
                };
                let fd = tk::central_difference(f, &hs[v], 1e-5);
                let rel = (&g[v] - &fd).norm() / fd.norm();
                assert!(rel <= 1e-4, "{method} V={views} N={n}: {rel}");
            }
            assert!(gradient_check(method, views, n, 1, 0.0).unwrap().relative_error <= 1e-4);
        }
    }
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let d = data(80, 1);
    let mut cfg = small_config();
    cfg.learning_rate = 0.0;
    let trained = fit_deep(&d, DeepMethod::DmvCca, &cfg).unwrap();
    cfg.epochs = 1;
    let reference = fit_deep(&d, DeepMethod::DmvCca, &cfg).unwrap();
    for (a, b) in trained.nets.iter().zip(&reference.nets) {
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert!(la.weight.iter().zip(lb.weight.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(la.bias.iter().zip(lb.bias.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn training_is_seed_deterministic() {
    let d = data(80, 2);
    for method in DeepMethod::ALL {
        let a = fit_deep(&d, method, &small_config()).unwrap();
        let b = fit_deep(&d, method, &small_config()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 5);
        assert_eq!(a, b);
    }
}

#[test]
fn constraints_hold_after_each_solve() {
    let mut r = tk::rng(4);
    let n = 30;
    let hs: Vec<Matrix> = (0..3).map(|_| tk::random_matrix(&mut r, 4, n)).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 3 + 1).collect();
    for method in DeepMethod::ALL {
        for delta in [0.0, 1e-6] {
            let sol = solve_projection(method, &hs, Some(&labels), 3, delta).unwrap();
            let pair = assemble_views(&hs, Some(&labels), method.linear()).unwrap();
            let effective = if method == DeepMethod::DmvPls { 0.0 } else { delta };
            let q = regularize(&pair.q, effective);
            let gram = sol.w.transpose() * q * &sol.w;
            assert!((gram - Matrix::identity(3, 3)).amax() <= 1e-6, "{method} delta {delta}");
        }
        // Unregularized constraint forms, written out per method.
        let sol = solve_projection(method, &hs, Some(&labels), 3, 0.0).unwrap();
        let ws: Vec<Matrix> = (0..3).map(|v| sol.view_block(v)).collect();
        let mut sum = Matrix::zeros(3, 3);
        for (w, h) in ws.iter().zip(&hs) {
            sum += match method {
                DeepMethod::DmvCca => {
                    let l = method_laplacian(method, None, n).unwrap();
                    w.transpose() * h * l * h.transpose() * w
                }
                DeepMethod::DmvPls => w.transpose() * w,
                DeepMethod::DmvMda => {
                    let lw = laplacian_within(&class_indicators(&labels).unwrap());
                    w.transpose() * h * lw * h.transpose() * w
                }
            };
        }
        assert!((sum - Matrix::identity(3, 3)).amax() <= 1e-6, "{method}");
    }
}

#[test]
fn linear_single_layer_matches_closed_form_cca() {
    let d = data(200, 5);
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 50,
        learning_rate: 1e-3,
        seed: 1,
        d: 2,
        hidden: vec![],
        output_dim: 6,
        activation: Activation::Identity,
        ..TrainConfig::default()
    };
    let model = fit_deep(&d, DeepMethod::DmvCca, &cfg).unwrap();
    let ys = project_deep(&model, &d).unwrap();
    let exact = project(&fit_linear(&d, &MethodSpec::new(Method::MvCca).with_dim(2)).unwrap(), &d).unwrap();
    for k in 0..2 {
        let row = |m: &Matrix| m.row(k).iter().copied().collect::<Vec<_>>();
        let deep = tk::correlation(&row(&ys[0]), &row(&ys[1]));
        let lin = tk::correlation(&row(&exact[0]), &row(&exact[1]));
        assert!((deep - lin).abs() <= 0.05, "dim {k}: {deep} vs {lin}");
    }
}

#[test]
fn projection_is_per_sample_and_consistent() {
    let d = data(60, 6);
    let model = fit_deep(&d, DeepMethod::DmvMda, &small_config()).unwrap();
    let ys = project_deep(&model, &d).unwrap();
    assert!(ys.iter().all(|y| y.iter().all(|v| v.is_finite())));
    // The last logged objective is the final full-batch solve.
    let rho: f64 = model.eigenvalues.iter().sum();
    assert_eq!(*model.log.last().unwrap(), rho);

    let perm: Vec<usize> = (0..60).rev().collect();
    let permuted = d.subset(&perm).unwrap();
    let yp = project_deep(&model, &permuted).unwrap();
    for (y, p) in ys.iter().zip(&yp) {
        for (j, &src) in perm.iter().enumerate() {
            assert!((p.column(j) - y.column(src)).amax() <= 1e-12 * y.amax().max(1.0));
        }
    }
    let wrong = Dataset::new(vec![Matrix::zeros(3, 4), Matrix::zeros(5, 4)], None).unwrap();
    assert!(project_deep(&model, &wrong).is_err());
}

#[test]
fn supervised_deep_needs_labels() {
    let d = data(40, 7).without_labels();
    assert!(fit_deep(&d, DeepMethod::DmvMda, &small_config()).is_err());
    let bad = TrainConfig { batch_size: 1, ..small_config() };
    assert!(fit_deep(&d, DeepMethod::DmvCca, &bad).is_err());
}

#[test]
fn forward_pass_rejects_wrong_width() {
    let d = data(20, 8);
    let model = fit_deep(&d, DeepMethod::DmvPls, &small_config()).unwrap();
    assert!(mlp_forward(&model.nets[0], &Matrix::zeros(2, 3)).is_err());
}

#[test]
fn epoch_objective_rises_late_in_training() {
    let logs: Vec<Vec<f64>> = (0..3)
        .map(|seed| {
            let mut spec = SynthSpec::new(200, vec![6, 5], 2);
            spec.noise = 0.5;
            spec.seed = seed;
            let d = synth_generate(&spec).unwrap().dataset;
            let cfg = TrainConfig {
                seed,
                d: 2,
                hidden: vec![16],
                output_dim: 4,
                ..TrainConfig::default()
            };
            fit_deep(&d, DeepMethod::DmvCca, &cfg).unwrap().log
        })
        .collect();
    let median: Vec<f64> = (0..50).map(|e| tk::median(&logs.iter().map(|l| l[e]).collect::<Vec<_>>())).collect();
    for e in 11..50 {
        assert!(median[e] >= median[e - 1], "epoch {e}: {} < {}", median[e], median[e - 1]);
    }
}
