use mvembed::data::{synth_generate, Dataset, SynthSpec};
use mvembed::kernel::{
    center_gram, fit_kernel, fit_rff, gram, project_kernel, rff_transform, sigma_heuristic, KernelFunction,
    RffMap,
};
use mvembed::linalg::Matrix;
use mvembed::linear::{fit_linear, project, Method, MethodSpec};
use mvembed_testkit as tk;

fn labeled(n: usize, seed: u64) -> Dataset {
    let mut spec = SynthSpec::new(n, vec![5, 4, 3], 2);
    spec.classes = 3;
    spec.noise = 0.5;
    spec.seed = seed;
    synth_generate(&spec).unwrap().dataset
}

fn row(m: &Matrix, k: usize) -> Vec<f64> {
    m.row(k).iter().copied().collect()
}

#[test]
fn linear_kernel_reproduces_linear_latents() {
    // Three classes: the discriminant spectra have C - 1 = 2 informative
    // directions, beyond which eigenvectors are not identifiable.
    let data = labeled(60, 1);
    for method in Method::ALL {
        let spec = MethodSpec::new(method).with_dim(2);
        let lin = project(&fit_linear(&data, &spec).unwrap(), &data).unwrap();
        let ker = project_kernel(&fit_kernel(&data, &spec, &KernelFunction::Linear).unwrap(), &data).unwrap();
        for v in 0..3 {
            for k in 0..2 {
                let c = tk::correlation(&row(&lin[v], k), &row(&ker[v], k)).abs();
                assert!(c >= 1.0 - 1e-6, "{method} view {v} dim {k}: {c}");
            }
        }
    }
}

#[test]
fn linear_kernel_out_of_sample_matches_linear_path() {
    let data = labeled(100, 2);
    let (train, test) = mvembed::data::split(&data, 0.7, 3).unwrap();
    // The two paths place the ridge in different spaces (feature space versus
    // coefficient space), so compare them with a negligible ridge.
    let spec = MethodSpec::new(Method::MvCca).with_dim(2).with_delta(1e-10);
    let lin = project(&fit_linear(&train, &spec).unwrap(), &test).unwrap();
    let ker = project_kernel(&fit_kernel(&train, &spec, &KernelFunction::Linear).unwrap(), &test).unwrap();
    for v in 0..3 {
        for k in 0..2 {
            let a = row(&lin[v], k);
            let b = row(&ker[v], k);
            let sign = if a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
            let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - sign * y).abs()));
            assert!(err <= 1e-6 * scale.max(1.0), "view {v} dim {k}: {err}");
        }
    }
}

#[test]
fn training_projection_and_duplicates() {
    let data = labeled(40, 4);
    let sigma = sigma_heuristic(&data).unwrap();
    let model = fit_kernel(&data, &MethodSpec::new(Method::MvCca).with_dim(2), &KernelFunction::rbf(sigma).unwrap()).unwrap();
    let a = project_kernel(&model, &data).unwrap();
    let b = project_kernel(&model, &data).unwrap();
    assert_eq!(a, b);
    // A one-sample batch equal to a training column lands on that column's latent.
    let single: Vec<Matrix> = data.views().iter().map(|x| x.columns(5, 1).into_owned()).collect();
    for (v, x) in single.iter().enumerate() {
        let y = model.project_view(v, x).unwrap();
        let scale = a[v].amax().max(1.0);
        assert!((y - a[v].columns(5, 1)).amax() <= 1e-9 * scale);
    }
}

#[test]
fn duplicated_views_reach_unit_correlation() {
    let mut r = tk::rng(5);
    let x = tk::random_matrix(&mut r, 3, 50);
    let data = Dataset::new(vec![x.clone(), x], None).unwrap();
    let sigma = sigma_heuristic(&data).unwrap();
    let model = fit_kernel(&data, &MethodSpec::new(Method::MvCca).with_dim(1), &KernelFunction::rbf(sigma).unwrap()).unwrap();
    assert!((model.eigenvalues[0] - 1.0).abs() < 1e-3, "{}", model.eigenvalues[0]);
}

#[test]
fn rbf_latents_translation_invariant() {
    let data = labeled(50, 6);
    let shifted = Dataset::new(data.views().iter().map(|x| x.add_scalar(3.25)).collect(), data.labels().map(<[usize]>::to_vec)).unwrap();
    let spec = MethodSpec::new(Method::MvMda).with_dim(2);
    let k = KernelFunction::rbf(2.0).unwrap();
    let a = project_kernel(&fit_kernel(&data, &spec, &k).unwrap(), &data).unwrap();
    let b = project_kernel(&fit_kernel(&shifted, &spec, &k).unwrap(), &shifted).unwrap();
    for (ya, yb) in a.iter().zip(&b) {
        assert!((ya - yb).amax() <= 1e-6 * ya.amax().max(1.0));
    }
}

#[test]
fn sigma_heuristic_matches_all_pairs_oracle() {
    let mut r = tk::rng(8);
    let x1 = tk::random_matrix(&mut r, 4, 40);
    let x2 = tk::random_matrix(&mut r, 7, 40) * 2.0;
    let expected = 0.5 * (tk::mean_pairwise_distance(&x1) + tk::mean_pairwise_distance(&x2));
    let data = Dataset::new(vec![x1, x2], None).unwrap();
    let sigma = sigma_heuristic(&data).unwrap();
    assert!((sigma - expected).abs() < 1e-12 * expected);
}

#[test]
fn centered_gram_identities() {
    let mut r = tk::rng(9);
    let x = tk::random_matrix(&mut r, 3, 12);
    let k = gram(&x, &x, &KernelFunction::rbf(1.5).unwrap()).unwrap();
    assert!((&k - tk::rbf_gram(&x, 1.5)).amax() < 1e-14);
    let kc = center_gram(&k).unwrap();
    let e = Matrix::from_element(12, 1, 1.0);
    assert!((&kc * &e).amax() < 1e-12);
    assert!((center_gram(&kc).unwrap() - &kc).amax() < 1e-12);
}

#[test]
fn rff_inner_products_bounded_and_converging() {
    let mut r = tk::rng(10);
    let x = tk::random_matrix(&mut r, 5, 80);
    let exact = tk::rbf_gram(&x, 2.0);
    let mut errors = Vec::new();
    for dr in [64usize, 1024] {
        let mut per_seed = Vec::new();
        for seed in 0..5 {
            let z = rff_transform(&RffMap::new(5, dr, 2.0, seed).unwrap(), &x).unwrap();
            let approx = z.transpose() * &z;
            for i in 0..80 {
                assert!((0.0..=2.0 + 1e-12).contains(&approx[(i, i)]));
            }
            per_seed.push((approx - &exact).norm() / exact.norm());
        }
        errors.push(tk::median(&per_seed));
    }
    assert!(errors[1] < errors[0], "{errors:?}");
}

#[test]
fn rff_model_round_trips_through_projection() {
    let data = labeled(60, 12);
    let model = fit_rff(&data, &MethodSpec::new(Method::MvCca).with_dim(2), 2.0, 64, 3).unwrap();
    let a = mvembed::kernel::project_rff(&model, &data).unwrap();
    let b = mvembed::kernel::project_rff(&model, &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].shape(), (2, 60));
}
