//! `rankspec` command-line front end.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rankspec::blockmodel::{population_matrices, sample_matrix};
use rankspec::clustering::{relative_errors, select_dimension, spectral_cluster};
use rankspec::experiments::{default_config_json, format_value, run_by_name, verify_moments, VerifyMomentsConfig, EXPERIMENTS};
use rankspec::linalg::symmetric_eigen;
use rankspec::ranks::pass_to_ranks;
use rankspec::{BlockModelSpec, DimensionMode, DimensionRule, ExperimentReport, SeedStream, SymMatrix, TieMode};

use io::{LabelsFile, MatrixFormat, Missing};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "RANKSPEC_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Arg(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Arg(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<rankspec::Error> for CliError {
    fn from(e: rankspec::Error) -> Self {
        use rankspec::Error as E;
        match e {
            E::Tie { .. } | E::Quadrature { .. } | E::Numerical(_) | E::Model(_) => CliError::Numerical(e.to_string()),
            E::Argument(_) | E::Io(_) | E::Json(_) | E::Csv(_) => CliError::Arg(e.to_string()),
        }
    }
}

/// Pass-to-ranks spectral clustering for weighted blockmodels.
#[derive(Debug, Parser)]
#[command(name = "rankspec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replace entries by normalized ranks.
    Ptr {
        #[command(flatten)]
        input: MatrixInput,
        #[arg(long, value_enum, default_value = "strict")]
        ties: Ties,
        /// Destination CSV.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Leading eigenvectors; the first data row holds the eigenvalues.
    Embed {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        ranks: RankOptions,
        #[command(flatten)]
        dim: DimOptions,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Spectral clustering into K groups.
    Cluster {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        ranks: RankOptions,
        #[arg(short, long)]
        k: usize,
        #[command(flatten)]
        dim: DimOptions,
        /// Approximation slack recorded for the k-means step.
        #[arg(long, default_value_t = 0.05)]
        eps_k: f64,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Labels JSON to score the result against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Destination JSON; printed to stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the embedding dimension chosen by a rule.
    SelectDim {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        ranks: RankOptions,
        #[arg(long, value_enum, default_value = "practical")]
        rule: Rule,
        #[arg(long, default_value_t = 0.05)]
        eps_p: f64,
        #[arg(long, default_value_t = 10)]
        max_d: usize,
    },
    /// Draw a matrix from a blockmodel spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
        /// Also write the true 1-based labels as JSON.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Population block matrices of a spec.
    Moments {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Compare exact rank moments with simulation.
    VerifyMoments {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment.
    Experiment {
        /// One of the experiment names; `list` prints them.
        name: String,
        /// Output directory for the report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Full configuration JSON replacing the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one top-level configuration field, `key=value` with a JSON value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
}

#[derive(Debug, Args)]
struct MatrixInput {
    /// Matrix file: dense CSV, or a `.tsv` edge list.
    #[arg(long, short)]
    input: PathBuf,
    /// Overrides the format inferred from the extension.
    #[arg(long, value_enum)]
    format: Option<MatrixFormat>,
    /// Dense CSV has a header row.
    #[arg(long)]
    header: bool,
    /// Handling of node pairs absent from an edge list.
    #[arg(long, value_enum, default_value = "error")]
    missing: Missing,
}

impl MatrixInput {
    fn load(&self) -> Result<SymMatrix, CliError> {
        io::read_matrix(&self.input, self.format, self.header, self.missing)
    }
}

#[derive(Debug, Args)]
struct RankOptions {
    /// Pass to ranks before the eigendecomposition.
    #[arg(long)]
    ptr: bool,
    #[arg(long, value_enum, default_value = "strict")]
    ties: Ties,
}

impl RankOptions {
    fn tie_mode(&self) -> Option<TieMode> {
        self.ptr.then(|| self.ties.into())
    }
}

#[derive(Debug, Args)]
struct DimOptions {
    /// Embedding dimension, or `auto`.
    #[arg(short, long = "dim", default_value = "auto")]
    d: Dim,
    /// Rule used when the dimension is `auto`.
    #[arg(long, value_enum, default_value = "practical")]
    rule: Rule,
    #[arg(long, default_value_t = 0.05)]
    eps_p: f64,
    #[arg(long, default_value_t = 10)]
    max_d: usize,
}

impl DimOptions {
    fn mode(&self) -> DimensionMode {
        match self.d {
            Dim::Fixed(d) => DimensionMode::Fixed(d),
            Dim::Auto => DimensionMode::Auto(self.rule.to_rule(self.eps_p, self.max_d)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Dim {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for Dim {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Dim::Auto);
        }
        match s.parse() {
            Ok(d) if d >= 1 => Ok(Dim::Fixed(d)),
            _ => Err(format!("expected a positive integer or `auto`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ties {
    Strict,
    Midrank,
}

impl From<Ties> for TieMode {
    fn from(t: Ties) -> Self {
        match t {
            Ties::Strict => TieMode::Strict,
            Ties::Midrank => TieMode::Midrank,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Rule {
    Lemma,
    Practical,
    Profile,
}

impl Rule {
    fn to_rule(self, eps_p: f64, max_d: usize) -> DimensionRule {
        match self {
            Rule::Lemma => DimensionRule::Lemma { eps_p },
            Rule::Practical => DimensionRule::Practical,
            Rule::Profile => DimensionRule::ProfileLikelihood { max_d },
        }
    }
}

#[derive(Serialize)]
struct ClusterOutput {
    labels: Vec<usize>,
    d: usize,
    eigenvalues: Vec<f64>,
    cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<rankspec::LossReport>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t >= 1)
        .ok_or_else(|| CliError::Arg(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Arg(format!("cannot configure {threads} threads: {e}")))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ptr { input, ties, output } => {
            let r = pass_to_ranks(&input.load()?, ties.into())?;
            io::write_matrix(&output, r.matrix().as_matrix())
        }
        Command::Embed { input, ranks, dim, output } => embed(&input, &ranks, &dim, &output),
        Command::Cluster {
            input,
            ranks,
            k,
            dim,
            eps_k,
            restarts,
            seed,
            truth,
            output,
        } => {
            let a = input.load()?;
            let fit = spectral_cluster(&a, k, dim.mode(), ranks.tie_mode(), eps_k, restarts, SeedStream::new(seed))?;
            let loss = truth
                .map(|path| Ok::<_, CliError>(relative_errors(&fit.membership_hat, &io::read_labels(&path)?)?))
                .transpose()?;
            let out = ClusterOutput {
                labels: fit.membership_hat.one_based_labels(),
                d: fit.selected_d,
                eigenvalues: fit.eigenvalues,
                cost: fit.cost,
                loss,
            };
            match output {
                Some(path) => io::write_json(&path, &out),
                None => {
                    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::Arg(e.to_string()))?);
                    Ok(())
                }
            }
        }
        Command::SelectDim {
            input,
            ranks,
            rule,
            eps_p,
            max_d,
        } => {
            let m = transformed(&input, &ranks)?;
            let spectrum = symmetric_eigen(&m)?.eigenvalues;
            println!("{}", select_dimension(&spectrum, m.n(), rule.to_rule(eps_p, max_d))?);
            Ok(())
        }
        Command::Simulate { spec, seed, output, labels } => {
            let spec = load_spec(&spec)?;
            let a = sample_matrix(&spec, SeedStream::new(seed));
            io::write_matrix(&output, a.as_matrix())?;
            if let Some(path) = labels {
                io::write_json(
                    &path,
                    &LabelsFile {
                        labels: spec.membership().one_based_labels(),
                    },
                )?;
            }
            Ok(())
        }
        Command::Moments { spec, output } => {
            let p = population_matrices(&load_spec(&spec)?)?;
            std::fs::create_dir_all(&output).map_err(|e| CliError::Arg(format!("{}: {e}", output.display())))?;
            io::write_matrix(&output.join("median.csv"), &p.median)?;
            io::write_partial_matrix(&output.join("mean.csv"), &p.mean)?;
            io::write_partial_matrix(&output.join("variance.csv"), &p.variance)?;
            io::write_matrix(&output.join("b_tilde.csv"), &p.b_tilde)?;
            io::write_matrix(&output.join("s2_tilde.csv"), &p.s2_tilde)
        }
        Command::VerifyMoments {
            spec,
            replicates,
            seed,
            out,
        } => {
            let cfg = VerifyMomentsConfig::for_spec(load_spec(&spec)?, replicates);
            let report = verify_moments(&cfg, seed)?;
            finish_report(&report, out.as_deref())
        }
        Command::Experiment {
            name,
            out,
            seed,
            config,
            overrides,
            print_config,
        } => {
            if name == "list" {
                EXPERIMENTS.iter().for_each(|e| println!("{e}"));
                return Ok(());
            }
            let json = experiment_config(&name, config.as_deref(), &overrides)?;
            if print_config {
                println!("{json}");
                return Ok(());
            }
            let out = out.ok_or_else(|| CliError::Arg("--out is required to run an experiment".into()))?;
            let report = run_by_name(&name, Some(&json), seed)?;
            finish_report(&report, Some(&out))
        }
    }
}

fn transformed(input: &MatrixInput, ranks: &RankOptions) -> Result<SymMatrix, CliError> {
    let a = input.load()?;
    Ok(match ranks.tie_mode() {
        Some(t) => pass_to_ranks(&a, t)?.into_matrix(),
        None => a,
    })
}

fn embed(input: &MatrixInput, ranks: &RankOptions, dim: &DimOptions, output: &Path) -> Result<(), CliError> {
    let m = transformed(input, ranks)?;
    let full = symmetric_eigen(&m)?;
    let d = match dim.mode() {
        DimensionMode::Fixed(d) => d,
        DimensionMode::Auto(rule) => select_dimension(&full.eigenvalues, m.n(), rule)?.max(1),
    };
    let e = full.truncate(d)?;
    let header = std::iter::once("row".to_string())
        .chain((1..=d).map(|j| format!("u{j}")))
        .collect();
    let eigen_row = std::iter::once("eigenvalue".to_string())
        .chain(e.eigenvalues.iter().map(|&v| format_value(v)))
        .collect();
    let rows = (0..e.n()).map(|i| {
        std::iter::once(i.to_string())
            .chain(e.vectors.row(i).iter().map(|&v| format_value(v)))
            .collect()
    });
    io::write_rows(output, Some(header), std::iter::once(eigen_row).chain(rows))
}

fn load_spec(path: &Path) -> Result<BlockModelSpec, CliError> {
    BlockModelSpec::from_json(&io::read_to_string(path)?).map_err(|e| CliError::Arg(format!("{}: {e}", path.display())))
}

/// Default configuration, replaced by `--config` and then patched by `--set`.
fn experiment_config(name: &str, config: Option<&Path>, overrides: &[String]) -> Result<String, CliError> {
    let base = match config {
        Some(path) => io::read_to_string(path)?,
        None => default_config_json(name)?,
    };
    let mut value: serde_json::Value =
        serde_json::from_str(&base).map_err(|e| CliError::Arg(format!("configuration is not valid JSON: {e}")))?;
    let object = value
        .as_object_mut()
        .ok_or_else(|| CliError::Arg("configuration must be a JSON object".into()))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Arg(format!("--set expects key=value, got {item:?}")))?;
        if !object.contains_key(key) {
            let known: Vec<&str> = object.keys().map(String::as_str).collect();
            return Err(CliError::Arg(format!("unknown configuration field {key:?}; fields are {}", known.join(", "))));
        }
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.into()));
        object.insert(key.into(), parsed);
    }
    serde_json::to_string_pretty(&value).map_err(|e| CliError::Arg(e.to_string()))
}

/// Prints the pass flags, writes the report, and fails if any flag failed.
fn finish_report(report: &ExperimentReport, out: Option<&Path>) -> Result<(), CliError> {
    for (name, flag) in &report.pass_flags {
        println!(
            "{} {name}: statistic {} threshold {} ({})",
            if flag.passed { "PASS" } else { "FAIL" },
            format_value(flag.statistic),
            format_value(flag.threshold),
            flag.criterion
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    if let Some(dir) = out {
        report.write_dir(dir)?;
    }
    let failed = report.failed_flags();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} failed: {}", report.name, failed.join(", "))))
    }
}
