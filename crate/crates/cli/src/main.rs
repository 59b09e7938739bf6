use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qsvm_core::kernels::{
    feature_hash, linear_kernel, normalize, pauli_z_features, projected_kernel, quantum_kernel_with,
    rbf_kernel, read_qkmx, scale_gamma, write_qkmx, KernelMatrix, KernelOptions, KernelSidecar,
    Normalization,
};
use qsvm_core::metrics::{evaluate, paired_bootstrap, DEFAULT_BOOTSTRAP_SEED, DEFAULT_RESAMPLES};
use qsvm_core::numerics::{Matrix, Rng};
use qsvm_core::pipeline::{Dataset, PcaBasis};
use qsvm_core::runner::{
    synthetic_dataset, Experiment, ExperimentConfig, ExperimentOutput, Runner, SynthSpec,
};
use qsvm_core::spectra::{spectrum, variance_stats};
use qsvm_core::statevec::{CircuitConfig, Dof};
use qsvm_core::svc::{decision_scores, labels_from_scores, train, SvcModel, SvcParams};
use qsvm_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qsvm", version, about = "Quantum fidelity kernel SVM experiments")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed override: split seed for experiments, resampling seed for
    /// `bootstrap`, generator seed for `synth`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a kernel matrix from a feature CSV and write it as `.qkmx`.
    Kernel(KernelArgs),
    /// Train an SVC on a precomputed kernel.
    Train(TrainArgs),
    /// Tier-1: untuned QSVM vs untuned linear SVC.
    Tier1,
    /// Tier-2: untuned QSVM vs RBF SVC with C tuned on validation F1.
    Tier2,
    /// QSVM over the qubit list, with circuit/normalisation variants.
    Sweep,
    /// QSVM vs RBF SVC with bandwidth matched to the quantum effective rank.
    Rankmatch,
    /// Projected quantum kernel with (gamma, C) tuned on validation accuracy.
    Projected,
    /// Eigenspectrum and variance statistics of a kernel file.
    Spectrum(SpectrumArgs),
    /// Paired bootstrap of the F1 difference between two prediction columns.
    Bootstrap(BootstrapArgs),
    /// Write a synthetic labelled embedding CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Quantum,
    Linear,
    Rbf,
    Projected,
}

#[derive(Args)]
struct KernelArgs {
    /// Row samples (`id,label,e0,...`).
    #[arg(long)]
    data: PathBuf,
    /// Column samples; defaults to `--data` (square kernel).
    #[arg(long)]
    right: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "quantum")]
    kind: KindArg,
    /// Reduce to this many PCA components (fitted on `--data`) and rescale to
    /// [-1, 1] first.
    #[arg(long)]
    pca: Option<usize>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    dof: u8,
    /// RBF/projected bandwidth; RBF defaults to 1/(q·Var).
    #[arg(long)]
    gamma: Option<f64>,
    /// Normalisation of a square kernel.
    #[arg(long, default_value = "none")]
    normalization: String,
    #[arg(long)]
    memory_cap_bytes: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Square training kernel.
    #[arg(long)]
    kernel: PathBuf,
    /// CSV whose `label` column holds the training labels.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Where to write the model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Test × train kernel to score.
    #[arg(long, requires = "test_labels")]
    test_kernel: Option<PathBuf>,
    #[arg(long, requires = "test_kernel")]
    test_labels: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    kernel: PathBuf,
    /// Labels for the within/between-class statistics.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    subsample: usize,
    /// Also dump eigenvalues as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    /// CSV with columns `y_true,pred_a,pred_b`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0.3)]
    minority: f64,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let experiment = match &cli.command {
        Command::Tier1 => Some(Experiment::Tier1),
        Command::Tier2 => Some(Experiment::Tier2),
        Command::Sweep => Some(Experiment::Sweep),
        Command::Rankmatch => Some(Experiment::RankMatched),
        Command::Projected => Some(Experiment::Projected),
        _ => None,
    };
    if let Some(exp) = experiment {
        return run_experiment(&cli, exp);
    }
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Train(a) => cmd_train(a),
        Command::Spectrum(a) => cmd_spectrum(a, cli.out.as_deref()),
        Command::Bootstrap(a) => cmd_bootstrap(a, cli.seed.unwrap_or(DEFAULT_BOOTSTRAP_SEED)),
        Command::Synth(a) => cmd_synth(a, cli.seed.unwrap_or(0)),
        _ => unreachable!("experiments handled above"),
    }
}

fn run_experiment(cli: &Cli, exp: Experiment) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config(format!("`{}` needs --config", exp.as_str())))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.split_seed = seed;
    }
    let out = Runner::new(cfg.clone()).run(exp)?;
    print_summary(&out, &cfg.output_dir);
    Ok(())
}

fn print_summary(out: &ExperimentOutput, dir: &Path) {
    let mut stdout = std::io::stdout().lock();
    for c in &out.comparisons {
        let _ = writeln!(
            stdout,
            "{} q={:<2} {} F1 {:.3}±{:.3} vs {} F1 {:.3}±{:.3}  ΔF1 {:+.3} CI [{:+.3}, {:+.3}] p={:.4}  {}",
            c.model_tag,
            c.q,
            c.method_a,
            c.f1_a.mean,
            c.f1_a.std,
            c.method_b,
            c.f1_b.mean,
            c.f1_b.std,
            c.delta_f1,
            c.pooled_bootstrap.ci_lo,
            c.pooled_bootstrap.ci_hi,
            c.pooled_bootstrap.p_value,
            c.verdict
        );
    }
    if out.comparisons.is_empty() {
        for g in &out.groups {
            let _ = writeln!(
                stdout,
                "{} q={:<2} {} reps={} dof={} {}  F1 {:.3}±{:.3}  acc {:.3}±{:.3}",
                g.key.model_tag,
                g.key.q,
                g.key.method,
                g.key.reps.map_or("-".into(), |r| r.to_string()),
                g.key.dof.map_or("-".into(), |d| d.to_string()),
                g.key.normalization,
                g.f1.mean,
                g.f1.std,
                g.accuracy.mean,
                g.accuracy.std
            );
        }
    }
    let _ = writeln!(
        stdout,
        "{} records written to {}",
        out.records.len(),
        dir.join("results.csv").display()
    );
}

fn parse_dof(d: u8) -> Result<Dof> {
    Dof::try_from(d).map_err(Error::InvalidInput)
}

fn cmd_kernel(a: &KernelArgs) -> Result<()> {
    let left_ds = Dataset::from_csv(&a.data)?;
    let right_ds = match &a.right {
        Some(p) => Some(Dataset::from_csv(p)?),
        None => None,
    };
    let (mut left, mut right) = (
        left_ds.features.clone(),
        right_ds.as_ref().map(|d| d.features.clone()),
    );
    if let Some(q) = a.pca {
        let all: Vec<usize> = (0..left.rows()).collect();
        let pipe = PcaBasis::fit(&left, &all)?.truncate(q)?;
        left = pipe.transform(&left)?;
        right = right.map(|r| pipe.transform(&r)).transpose()?;
    }
    let right_ref = right.as_ref().unwrap_or(&left);
    let q = left.cols();
    let circuit = CircuitConfig::new(q, a.reps, parse_dof(a.dof)?);
    let mut gamma = a.gamma;
    let k: KernelMatrix = match a.kind {
        KindArg::Quantum => {
            let opts = KernelOptions {
                memory_cap_bytes: a.memory_cap_bytes,
            };
            quantum_kernel_with(&left, right_ref, &circuit?, &opts)?
        }
        KindArg::Linear => linear_kernel(&left, right_ref)?,
        KindArg::Rbf => {
            let g = match gamma {
                Some(g) => g,
                None => scale_gamma(&left)?,
            };
            gamma = Some(g);
            rbf_kernel(&left, right_ref, g)?
        }
        KindArg::Projected => {
            let g = gamma.ok_or_else(|| Error::Config("projected kernel needs --gamma".into()))?;
            let c = circuit?;
            projected_kernel(
                &pauli_z_features(&left, &c)?,
                &pauli_z_features(right_ref, &c)?,
                g,
            )?
        }
    };
    let mode: Normalization = a
        .normalization
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let k = if mode == Normalization::None {
        k
    } else if right.is_some() {
        return Err(Error::Config(
            "normalisation applies to square kernels; normalise cross blocks through an experiment".into(),
        ));
    } else {
        normalize(&k, mode)?.0
    };
    let sidecar = KernelSidecar {
        kind: k.kind,
        normalization: k.normalization,
        train_trace: k.train_trace,
        circuit: matches!(a.kind, KindArg::Quantum | KindArg::Projected)
            .then(|| CircuitConfig::new(q, a.reps, Dof::try_from(a.dof).unwrap_or(Dof::One)))
            .transpose()?,
        gamma,
        feature_hash: feature_hash(&left),
    };
    write_qkmx(&a.output, &k, &sidecar)?;
    println!(
        "{} kernel {}x{} written to {}",
        k.kind,
        k.values.rows(),
        k.values.cols(),
        a.output.display()
    );
    Ok(())
}

fn read_kernel(path: &Path) -> Result<Matrix> {
    Ok(read_qkmx(path)?.0.values)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let k = read_kernel(&a.kernel)?;
    let labels = Dataset::from_csv(&a.labels)?.labels;
    let params = SvcParams {
        tol: a.tol,
        ..SvcParams::with_c(a.c)
    };
    let mut model = train(&k, &labels, &params)?;
    model.kernel_sidecar_reference = Some(
        qsvm_core::kernels::sidecar_path(&a.kernel)
            .to_string_lossy()
            .into_owned(),
    );
    model.save_json(&a.model)?;
    println!(
        "trained on {} samples: {} support vectors, {} iterations{}",
        labels.len(),
        model.support.len(),
        model.iterations,
        if model.converged {
            ""
        } else {
            " (iteration cap reached)"
        }
    );
    if let (Some(tk), Some(tl)) = (&a.test_kernel, &a.test_labels) {
        report_test(&model, &read_kernel(tk)?, &Dataset::from_csv(tl)?.labels)?;
    }
    Ok(())
}

fn report_test(model: &SvcModel, k_test: &Matrix, labels: &[u8]) -> Result<()> {
    let scores = decision_scores(model, k_test)?;
    let pred = labels_from_scores(&scores);
    let m = evaluate(labels, &pred, &scores)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs, out: Option<&Path>) -> Result<()> {
    let k = read_kernel(&a.kernel)?;
    let report = spectrum(&k)?;
    let variance = match &a.labels {
        Some(p) => {
            let labels = Dataset::from_csv(p)?.labels;
            Some(variance_stats(
                &k,
                &labels,
                a.subsample.min(labels.len()),
                &mut Rng::new(0),
            )?)
        }
        None => None,
    };
    if let Some(p) = &a.csv {
        report.write_csv(p)?;
    }
    let json = serde_json::json!({ "spectrum": report, "variance": variance });
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("spectrum.json");
            serde_json::to_writer_pretty(std::fs::File::create(&path)?, &json)?;
            println!(
                "eff_rank {:.4}, {} eigenvalues above {:e}; report at {}",
                report.eff_rank,
                report.n_positive,
                report.threshold,
                path.display()
            );
        }
        None => println!("{}", serde_json::to_string_pretty(&json)?),
    }
    Ok(())
}

fn cmd_bootstrap(a: &BootstrapArgs, seed: u64) -> Result<()> {
    let data_err = |msg: String| Error::Data {
        path: a.predictions.clone(),
        msg,
    };
    let text = std::fs::read_to_string(&a.predictions).map_err(|e| data_err(e.to_string()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| data_err(format!("missing column `{name}`")))
    };
    let (iy, ia, ib) = (col("y_true")?, col("pred_a")?, col("pred_b")?);
    let (mut y, mut pa, mut pb) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| -> Result<u8> {
            match f.get(i).copied() {
                Some("0") => Ok(0),
                Some("1") => Ok(1),
                other => Err(data_err(format!("row {}: expected 0 or 1, got {other:?}", n + 2))),
            }
        };
        y.push(get(iy)?);
        pa.push(get(ia)?);
        pb.push(get(ib)?);
    }
    let r = paired_bootstrap(&y, &pa, &pb, a.resamples, seed)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let spec = SynthSpec {
        minority_fraction: a.minority,
        ..SynthSpec::new(a.n, a.dim, seed)
    };
    let ds = synthetic_dataset(&spec)?;
    ds.to_csv(&a.output)?;
    println!(
        "{} samples ({} minority), {} dims written to {}",
        ds.len(),
        ds.labels.iter().filter(|&&l| l == 1).count(),
        ds.dim(),
        a.output.display()
    );
    Ok(())
}
