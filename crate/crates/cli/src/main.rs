use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use mvembed::data::{
    load_dataset, load_model, save_model, synth_generate, write_csv_matrix, write_labels, Manifest, ModelDocument,
    Squash, SynthSpec, ViewEntry, MANIFEST_VERSION,
};
use mvembed::deep::{gradient_check, DeepMethod};
use mvembed_cli::output::{accuracy_csv, create_dir, map_csv, pr_csv, pr_svg, write_file, write_json};
use mvembed_cli::pipeline::{
    build_probe, evaluate, fit_model, train_and_test, FitOptions, KernelChoice, MethodName, Probe, Variant,
};
use mvembed_cli::{CliError, Result};
use serde::Serialize;

const GRADCHECK_TOL: f64 = 1e-4;
const DEFAULT_GRID: [usize; 6] = [10, 20, 50, 100, 150, 200];

#[derive(Parser)]
#[command(name = "mvembed", version, about = "Multi-view embedding toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write it with a fit report.
    Fit(FitArgs),
    /// Evaluate a fitted model: retrieval MAP, PR curves and recognition accuracy.
    Eval(EvalArgs),
    /// Retrieval MAP over a grid of latent dimensions.
    SweepD(SweepArgs),
    /// Finite-difference check of the deep embedding gradients.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic multi-view dataset with its manifest.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Linear,
    Kernel,
    Rff,
    Deep,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Linear => Variant::Linear,
            VariantArg::Kernel => Variant::Kernel,
            VariantArg::Rff => Variant::Rff,
            VariantArg::Deep => Variant::Deep,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// mvcca, mvpls, slmvda, mvmda, mvda, dmvcca, dmvpls or dmvmda.
    #[arg(long)]
    method: String,
    #[arg(long, value_enum, default_value = "linear")]
    variant: VariantArg,
    /// Ridge factor on the constraint matrix.
    #[arg(long, default_value_t = mvembed::linalg::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// RBF bandwidth.
    #[arg(long, conflicts_with = "sigma_auto")]
    sigma: Option<f64>,
    /// Pick the RBF bandwidth from mean pairwise distances (the default).
    #[arg(long)]
    sigma_auto: bool,
    #[arg(long, default_value_t = mvembed::kernel::DEFAULT_RFF_FEATURES)]
    rff_features: usize,
    /// Reduce each view by PCA before embedding (linear variant).
    #[arg(long)]
    pca: bool,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 200)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Hidden layer widths of the deep variant.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    hidden: Vec<usize>,
    /// Network output width of the deep variant.
    #[arg(long, default_value_t = 32)]
    output_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fit on a seeded, stratified share of the samples.
    #[arg(long)]
    train_fraction: Option<f64>,
}

impl ModelArgs {
    fn options(&self, d: Option<usize>) -> Result<FitOptions> {
        let mut o = FitOptions::new(self.method.parse::<MethodName>()?, self.variant.into());
        o.d = d;
        o.delta = self.delta;
        o.kernel = match self.kernel {
            KernelArg::Rbf => KernelChoice::Rbf,
            KernelArg::Linear => KernelChoice::Linear,
        };
        o.sigma = if self.sigma_auto { None } else { self.sigma };
        o.rff_features = self.rff_features;
        o.pca = self.pca;
        o.epochs = self.epochs;
        o.batch_size = self.batch_size;
        o.learning_rate = self.lr;
        o.hidden = self.hidden.clone();
        o.output_dim = self.output_dim;
        o.seed = self.seed;
        Ok(o)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Latent dimension; 50 for shallow variants and 10 for deep by default.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Evaluate on the held-out share of this split instead of all samples.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Latent dimensions to try.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    d_grid: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Added to every analytic gradient entry; a negative control.
    #[arg(long, default_value_t = 0.0, hide = true)]
    perturb: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SquashArg {
    Tanh,
    Sine,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    views: usize,
    /// Features per view, used when --dims is absent.
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Features of each view, overriding --views and --dim.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Dimension of the shared latent.
    #[arg(long, default_value_t = 5)]
    latent: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Class count; 0 writes no labels.
    #[arg(long, default_value_t = 0)]
    classes: usize,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, value_enum)]
    squash: Option<SquashArg>,
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct FitReport<'a> {
    method: &'a str,
    variant: &'a str,
    d: usize,
    views: usize,
    samples: usize,
    rho: f64,
    eigenvalues: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    epoch_objective: Option<&'a [f64]>,
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let opts = args.model.options(args.d)?;
    let data = load_dataset(&args.manifest)?;
    let (train, _) = train_and_test(&data, args.model.train_fraction, args.model.seed)?;
    let start = Instant::now();
    let model = fit_model(&train, &opts)?;
    info!("fit took {:.3} s", start.elapsed().as_secs_f64());
    let probe = build_probe(&model, &train)?;

    let eigenvalues = model.eigenvalues().to_vec();
    let rho = eigenvalues.iter().sum();
    let log = match &model {
        mvembed::data::Model::Deep(m) => Some(m.log.clone()),
        _ => None,
    };
    let metadata = serde_json::json!({
        "variant": opts.variant.name(),
        "seed": opts.seed,
        "train_fraction": args.model.train_fraction,
        "probe": probe,
    });
    let doc = ModelDocument::new(model, metadata);
    create_dir(&args.out)?;
    save_model(&doc, &args.out.join("model.json"))?;
    let report = FitReport {
        method: &doc.method,
        variant: opts.variant.name(),
        d: eigenvalues.len(),
        views: train.num_views(),
        samples: train.num_samples(),
        rho,
        eigenvalues: &eigenvalues,
        epoch_objective: log.as_deref(),
    };
    write_json(&args.out.join("report.json"), &report)?;
    println!("{} ({}): rho = {rho}", doc.method, opts.variant.name());
    Ok(())
}

fn stored_probe(doc: &ModelDocument, path: &Path) -> Result<Option<Probe>> {
    match doc.metadata.get("probe") {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::Core(mvembed::Error::Parse(format!("{}: probe: {e}", path.display())))),
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let doc = load_model(&args.model)?;
    let probe = stored_probe(&doc, &args.model)?;
    let data = load_dataset(&args.manifest)?;
    let (_, test) = train_and_test(&data, args.train_fraction, args.seed)?;
    let eval = evaluate(&doc.model, probe.as_ref(), &test)?;

    create_dir(&args.out)?;
    write_file(&args.out.join("map.csv"), &map_csv(&eval))?;
    write_file(&args.out.join("pr.csv"), &pr_csv(&eval))?;
    write_file(&args.out.join("pr.svg"), &pr_svg(&eval))?;
    if !eval.accuracy.is_empty() {
        write_file(&args.out.join("accuracy.csv"), &accuracy_csv(&eval))?;
    }
    print!("{}", map_csv(&eval));
    if !eval.accuracy.is_empty() {
        print!("{}", accuracy_csv(&eval));
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.d_grid.is_empty() || args.d_grid.contains(&0) {
        return Err(CliError::Usage("--d-grid needs positive dimensions".into()));
    }
    let data = load_dataset(&args.manifest)?;
    let fraction = args.model.train_fraction.unwrap_or(0.8);
    let (train, test) = train_and_test(&data, Some(fraction), args.model.seed)?;
    let mut csv = String::from("d,method,direction,map\n");
    for &d in &args.d_grid {
        let opts = args.model.options(Some(d))?;
        let model = fit_model(&train, &opts)?;
        let probe = build_probe(&model, &train)?;
        let eval = evaluate(&model, probe.as_ref(), &test)?;
        for r in &eval.retrieval {
            let direction = mvembed_cli::pipeline::Evaluation::direction(r);
            csv.push_str(&format!("{d},{},{direction},{}\n", opts.method.name(), r.map));
        }
        info!("d = {d}: mean MAP {:.4}", eval.mean_map());
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let shapes = [(2usize, 5usize), (3, 8), (4, 6)];
    let mut worst: Option<(f64, String)> = None;
    for method in DeepMethod::ALL {
        let mut max_err = 0.0f64;
        for (k, &(views, samples)) in shapes.iter().enumerate() {
            let seed = args.seed.wrapping_add(k as u64);
            let check = gradient_check(method, views, samples, seed, args.perturb)?;
            max_err = max_err.max(check.relative_error);
            let case = format!("{method} V={views} N={samples} seed={seed}");
            if worst.as_ref().is_none_or(|(e, _)| check.relative_error > *e) {
                worst = Some((check.relative_error, case));
            }
        }
        println!("{method}: max relative error {max_err:.3e}");
    }
    let (err, case) = worst.expect("at least one check");
    if err <= GRADCHECK_TOL {
        println!("gradient check passed (tolerance {GRADCHECK_TOL:e})");
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "gradient check failed: worst case {case} has relative error {err:.3e} > {GRADCHECK_TOL:e}"
        )))
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let dims = match &args.dims {
        Some(d) => d.clone(),
        None => vec![args.dim; args.views],
    };
    let mut spec = SynthSpec::new(args.n, dims, args.latent);
    spec.noise = args.noise;
    spec.classes = args.classes;
    spec.separation = args.separation;
    spec.seed = args.seed;
    spec.squash = args.squash.map(|s| match s {
        SquashArg::Tanh => Squash::Tanh { gain: args.gain },
        SquashArg::Sine => Squash::Sine { gain: args.gain },
    });
    let out = synth_generate(&spec)?;

    create_dir(&args.out)?;
    let mut views = Vec::new();
    for (v, x) in out.dataset.views().iter().enumerate() {
        let name = format!("view{}", v + 1);
        let file = format!("{name}.csv");
        write_csv_matrix(&args.out.join(&file), x)?;
        views.push(ViewEntry {
            name,
            path: file.into(),
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    let labels_path = match out.dataset.labels() {
        Some(l) => {
            write_labels(&args.out.join("labels.csv"), l)?;
            Some("labels.csv".into())
        }
        None => None,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION.into(),
        views,
        labels_path,
        attributes: Some(serde_json::json!({ "ground_truth": "truth.json" })),
    };
    manifest.write(&args.out.join("manifest.json"))?;
    write_json(&args.out.join("truth.json"), &out.truth)?;
    println!("wrote {} views of {} samples to {}", spec.num_views(), spec.n, args.out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepD(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MVEMBED_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
