//! Command-line front end: completability tests, reconstruction, phase-diagram
//! sweeps, oracle spot-checks, and model generation.
//!
//! Exit codes: 0 for completable/success, 1 for flexible or not-unique
//! verdicts (so shell scripts can branch), 2 for usage errors, 3 for
//! numerical or consistency errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gramrig::error::Error;
use gramrig::global::{
    build_criterion, factor_data, global_test, knowledge_side, reconstruct_gram,
    recover_symmetric_unknown, GlobalVerdict,
};
use gramrig::local::{jacobian, local_test, LocalVerdict, TestBackend, DEFAULT_TRIALS};
use gramrig::model::mask::combined_scenario_mask;
use gramrig::model::{
    born_data, extract_knowledge, gaussian_configuration, random_quantum_model, DataMatrix,
    OmegaMask, ProblemShape, Scenario,
};
use gramrig::oracle::{
    criterion_from_factors, fd_jacobian, linear_uniqueness_oracle, perturbation_search,
};
use gramrig::rank::{svd_rank, DEFAULT_REL_TOL};
use gramrig::seeding::{derive_seed, rng_from_seed};
use gramrig::sweep::{emit, run_sweep, SweepFormat, SweepRequest, TestKind};
use gramrig::{io, Result};

const EXIT_OK: u8 = 0;
const EXIT_NEGATIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gramrig",
    about = "Local and global completability of inner-product-constrained vector configurations",
    version
)]
struct Cli {
    /// JSON file mirroring the flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Log level (error, warn, info, debug, trace); overrides GRAMRIG_LOG.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized test for generic local completability (Jacobian rank).
    LocalTest(TestArgs),
    /// Randomized test for generic global completability (criterion rank).
    GlobalTest(TestArgs),
    /// Reconstruct the unique Gram matrix from data plus side knowledge.
    Reconstruct(ReconstructArgs),
    /// Sweep a (W, V) grid into a completability phase diagram.
    Sweep(SweepArgs),
    /// Run an independent oracle against the main implementation.
    Oracle(OracleArgs),
    /// Generate a random quantum model and write its configuration and data.
    GenModel(GenModelArgs),
}

#[derive(Args, Clone)]
struct ShapeArgs {
    /// Hilbert dimension d (sets D = d^2).
    #[arg(long = "d", value_name = "HILBERT_DIM")]
    hilbert_dim: Option<usize>,
    /// Ambient dimension D (non-quantum mode).
    #[arg(long = "D", value_name = "AMBIENT_DIM", conflicts_with = "hilbert_dim")]
    ambient_dim: Option<usize>,
    /// Number of states W.
    #[arg(long = "W", value_name = "NUM")]
    num_states: Option<usize>,
    /// Number of measurements V.
    #[arg(long = "V", value_name = "NUM")]
    num_measurements: Option<usize>,
    /// Outcomes per measurement K (defaults to d for quantum shapes).
    #[arg(long = "K", alias = "k", value_name = "NUM")]
    outcomes: Option<usize>,
}

#[derive(Args, Clone)]
struct TestArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Knowledge scenario: pure, proj-known, proj-unknown, custom, or a
    /// combination like pure+proj-known.
    #[arg(long)]
    scenario: Option<String>,
    /// Mask JSON file (required for --scenario custom).
    #[arg(long, value_name = "FILE")]
    mask_file: Option<PathBuf>,
    /// Rank backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Relative SVD tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Random draws per test; the maximum observed rank decides.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rank the test at an exactly projective (non-generic) sample instead of
    /// a generic one; a pass is then sufficient but not necessary.
    #[arg(long)]
    exact_special: bool,
    /// Print the verdict as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone)]
struct ReconstructArgs {
    /// CSV of the data block (W rows, V*K columns, no header).
    #[arg(long, value_name = "FILE")]
    data_file: PathBuf,
    /// GramKnowledge JSON (mask plus values).
    #[arg(long, value_name = "FILE")]
    knowledge_file: PathBuf,
    /// Output CSV for the reconstructed N x N Gram matrix.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long)]
    scenario: Option<String>,
    /// Which test to run at each grid point.
    #[arg(long = "test", value_enum)]
    test_kind: Option<TestKindArg>,
    #[arg(long)]
    wmin: Option<usize>,
    #[arg(long)]
    wmax: Option<usize>,
    #[arg(long)]
    vmin: Option<usize>,
    #[arg(long)]
    vmax: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid cells.
    #[arg(long)]
    jobs: Option<usize>,
    /// Writes <prefix>.csv, <prefix>.json, <prefix>.svg.
    #[arg(long, value_name = "PREFIX")]
    out_prefix: PathBuf,
    /// Record per-cell runtimes (off keeps emitted files byte-stable).
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Clone)]
struct OracleArgs {
    /// Which oracle to run.
    #[arg(long, value_enum)]
    check: OracleCheck,
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_name = "FILE")]
    mask_file: Option<PathBuf>,
    /// Number of random instances to check.
    #[arg(long)]
    instances: Option<usize>,
    /// Restarts per instance for the perturbation search.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone)]
struct GenModelArgs {
    #[arg(long = "d", value_name = "HILBERT_DIM")]
    hilbert_dim: Option<usize>,
    #[arg(long = "W", value_name = "NUM")]
    num_states: Option<usize>,
    #[arg(long = "V", value_name = "NUM")]
    num_measurements: Option<usize>,
    #[arg(long = "K", value_name = "NUM")]
    outcomes: Option<usize>,
    /// Generate exactly projective measurements.
    #[arg(long)]
    projective: bool,
    /// Comma-separated projector ranks per measurement, e.g. 1,1.
    #[arg(long, value_name = "LIST")]
    degeneracies: Option<String>,
    /// Also write <prefix>.knowledge.json for this scenario's mask.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Writes <prefix>.config.json and <prefix>.data.csv.
    #[arg(long, value_name = "PREFIX")]
    out_prefix: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BackendArg {
    Svd,
    Gf,
    Consensus,
}

impl From<BackendArg> for TestBackend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Svd => TestBackend::Svd,
            BackendArg::Gf => TestBackend::FiniteField,
            BackendArg::Consensus => TestBackend::Consensus,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TestKindArg {
    Local,
    Global,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum OracleCheck {
    Jacobian,
    Criterion,
    Uniqueness,
    Perturb,
}

/// Optional values loaded from --config; explicit flags take precedence.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    d: Option<usize>,
    #[serde(rename = "D")]
    ambient_dim: Option<usize>,
    #[serde(rename = "W")]
    num_states: Option<usize>,
    #[serde(rename = "V")]
    num_measurements: Option<usize>,
    #[serde(rename = "K")]
    outcomes: Option<usize>,
    scenario: Option<String>,
    backend: Option<String>,
    tol: Option<f64>,
    trials: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    log_level: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    fn backend_arg(&self) -> Result<Option<BackendArg>> {
        match self.backend.as_deref() {
            None => Ok(None),
            Some(s) => BackendArg::from_str(s, true)
                .map(Some)
                .map_err(|_| Error::invalid(format!("config backend `{s}` unknown"))),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match FileConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: cannot load config: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    init_logging(cli.log_level.as_deref().or(config.log_level.as_deref()));
    let outcome = match &cli.command {
        Command::LocalTest(args) => run_test(args, &config, TestKind::Local),
        Command::GlobalTest(args) => run_test(args, &config, TestKind::Global),
        Command::Reconstruct(args) => run_reconstruct(args, &config),
        Command::Sweep(args) => run_sweep_command(args, &config),
        Command::Oracle(args) => run_oracle(args, &config),
        Command::GenModel(args) => run_gen_model(args, &config),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::BadScenario { .. } | Error::BadDegeneracies { .. } => EXIT_USAGE,
        Error::NotUnique { .. } => EXIT_NEGATIVE,
        _ => EXIT_NUMERICAL,
    }
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter("GRAMRIG_LOG");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    let _ = builder.try_init();
}

fn parse_scenarios(names: &str) -> Result<Vec<Scenario>> {
    names
        .split(['+', ','])
        .map(|name| match name.trim() {
            "pure" => Ok(Scenario::PureStates),
            "proj-known" => Ok(Scenario::ProjKnownDeg),
            "proj-unknown" => Ok(Scenario::ProjUnknownDeg),
            other => Err(Error::invalid(format!(
                "unknown scenario `{other}`; valid: pure, proj-known, proj-unknown, custom"
            ))),
        })
        .collect()
}

struct ResolvedInstance {
    shape: ProblemShape,
    mask: OmegaMask,
    scenario_label: String,
}

/// Builds shape and mask from flags, config, and an optional mask file.
fn resolve_instance(
    shape_args: &ShapeArgs,
    scenario: Option<&str>,
    mask_file: Option<&Path>,
    config: &FileConfig,
) -> Result<ResolvedInstance> {
    let scenario_name = scenario
        .map(str::to_string)
        .or_else(|| config.scenario.clone())
        .unwrap_or_else(|| "pure".to_string());
    if scenario_name == "custom" {
        let path =
            mask_file.ok_or_else(|| Error::invalid("--scenario custom needs --mask-file"))?;
        let mask = io::read_mask(path)?;
        let shape = *mask.shape();
        // shape flags are redundant with the mask file; reject contradictions
        for (flag, given, from_file) in [
            ("--d", shape_args.hilbert_dim, shape.hilbert_dim),
            ("--D", shape_args.ambient_dim, Some(shape.ambient_dim)),
            ("--W", shape_args.num_states, Some(shape.num_states)),
            (
                "--V",
                shape_args.num_measurements,
                Some(shape.num_measurements),
            ),
            ("--K", shape_args.outcomes, Some(shape.outcomes)),
        ] {
            if let Some(v) = given {
                if Some(v) != from_file {
                    return Err(Error::invalid(format!(
                        "{flag} {v} contradicts the mask file ({flag} = {})",
                        from_file.map_or("unset".to_string(), |x| x.to_string())
                    )));
                }
            }
        }
        return Ok(ResolvedInstance {
            shape,
            mask,
            scenario_label: "custom".to_string(),
        });
    }
    let scenarios = parse_scenarios(&scenario_name)?;
    let hilbert = shape_args.hilbert_dim.or(config.d);
    let ambient = shape_args.ambient_dim.or(config.ambient_dim);
    let num_states = shape_args
        .num_states
        .or(config.num_states)
        .ok_or_else(|| Error::invalid("--W is required"))?;
    let num_measurements = shape_args
        .num_measurements
        .or(config.num_measurements)
        .ok_or_else(|| Error::invalid("--V is required"))?;
    let shape = match (hilbert, ambient) {
        (Some(d), None) => {
            let outcomes = shape_args.outcomes.or(config.outcomes).unwrap_or(d);
            ProblemShape::quantum(d, num_states, num_measurements, outcomes)?
        }
        (None, Some(dd)) => {
            let outcomes = shape_args
                .outcomes
                .or(config.outcomes)
                .ok_or_else(|| Error::invalid("--K is required with --D"))?;
            ProblemShape::ambient(dd, num_states, num_measurements, outcomes)?
        }
        (None, None) => return Err(Error::invalid("one of --d or --D is required")),
        (Some(_), Some(_)) => return Err(Error::invalid("--d and --D are mutually exclusive")),
    };
    let mask = combined_scenario_mask(shape, &scenarios)?;
    Ok(ResolvedInstance {
        shape,
        mask,
        scenario_label: scenarios
            .iter()
            .map(Scenario::label)
            .collect::<Vec<_>>()
            .join("+"),
    })
}

#[derive(Serialize)]
struct TestOutput<'a> {
    test: &'a str,
    #[serde(rename = "d", skip_serializing_if = "Option::is_none")]
    hilbert_dim: Option<usize>,
    #[serde(rename = "D")]
    ambient_dim: usize,
    #[serde(rename = "W")]
    num_states: usize,
    #[serde(rename = "V")]
    num_measurements: usize,
    #[serde(rename = "K")]
    outcomes: usize,
    scenario: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    caveat: Option<&'a str>,
    #[serde(flatten)]
    verdict: VerdictOutput<'a>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum VerdictOutput<'a> {
    Local(&'a LocalVerdict),
    Global(&'a GlobalVerdict),
}

const NON_GENERIC_CAVEAT: &str = "non-generic sample: a passing rank test is sufficient but not \
     necessary for completability of exactly projective configurations";

fn run_test(args: &TestArgs, config: &FileConfig, kind: TestKind) -> Result<u8> {
    let instance = resolve_instance(
        &args.shape,
        args.scenario.as_deref(),
        args.mask_file.as_deref(),
        config,
    )?;
    let backend: TestBackend = args
        .backend
        .or(config.backend_arg()?)
        .unwrap_or(BackendArg::Svd)
        .into();
    let tol = args.tol.or(config.tol).unwrap_or(DEFAULT_REL_TOL);
    let trials = args.trials.or(config.trials).unwrap_or(DEFAULT_TRIALS);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    if args.exact_special {
        return run_exact_special(&instance, kind, tol, trials, seed, args.json);
    }
    let (completable, local_verdict, global_verdict);
    match kind {
        TestKind::Local => {
            let v = local_test(instance.shape, &instance.mask, trials, backend, tol, seed)?;
            completable = v.completable;
            local_verdict = Some(v);
            global_verdict = None;
        }
        TestKind::Global => {
            let v = global_test(instance.shape, &instance.mask, trials, backend, tol, seed)?;
            completable = v.completable;
            global_verdict = Some(v);
            local_verdict = None;
        }
    }
    let verdict = match (&local_verdict, &global_verdict) {
        (Some(l), _) => VerdictOutput::Local(l),
        (_, Some(g)) => VerdictOutput::Global(g),
        _ => unreachable!(),
    };
    report_test(&instance, kind, seed, None, verdict, completable, args.json)?;
    Ok(if completable { EXIT_OK } else { EXIT_NEGATIVE })
}

/// Ranks the test at an exactly projective sample instead of a generic one.
fn run_exact_special(
    instance: &ResolvedInstance,
    kind: TestKind,
    tol: f64,
    trials: usize,
    seed: u64,
    json: bool,
) -> Result<u8> {
    let shape = instance.shape;
    let d = shape
        .hilbert_dim
        .ok_or_else(|| Error::invalid("--exact-special needs a quantum shape (--d)"))?;
    let target_local = shape.ambient_dim * shape.num_columns() - shape.orbit_dim();
    let target_global = shape.sym_dim();
    let mut best_rank = 0usize;
    let mut best_report = None;
    for trial in 0..trials.max(1) {
        let model = random_quantum_model(
            d,
            shape.num_states,
            shape.num_measurements,
            shape.outcomes,
            None,
            true,
            derive_seed(seed, &[trial as u64]),
        )?;
        let p = model.to_configuration()?;
        let report = match kind {
            TestKind::Local => svd_rank(&jacobian(&p, &instance.mask)?, tol)?,
            TestKind::Global => {
                let data = DataMatrix::from_configuration(&p);
                let fact = factor_data(&data, shape.ambient_dim)?;
                let crit = build_criterion(&fact, &instance.mask)?;
                svd_rank(&crit.entries, tol)?
            }
        };
        if report.computed_rank >= best_rank {
            best_rank = report.computed_rank;
            best_report = Some(report);
        }
    }
    let target = match kind {
        TestKind::Local => target_local,
        TestKind::Global => target_global,
    };
    let completable = best_rank == target;
    let report = best_report.expect("at least one trial").with_target(target);
    match kind {
        TestKind::Local => {
            let v = LocalVerdict {
                completable,
                target,
                jacobian_dims: (instance.mask.len(), shape.ambient_dim * shape.num_columns()),
                rank_report: report,
            };
            report_test(
                instance,
                kind,
                seed,
                Some(NON_GENERIC_CAVEAT),
                VerdictOutput::Local(&v),
                completable,
                json,
            )?;
        }
        TestKind::Global => {
            let v = GlobalVerdict {
                completable,
                target,
                rank_report: report,
                block: knowledge_side(&instance.mask)?,
            };
            report_test(
                instance,
                kind,
                seed,
                Some(NON_GENERIC_CAVEAT),
                VerdictOutput::Global(&v),
                completable,
                json,
            )?;
        }
    }
    Ok(if completable { EXIT_OK } else { EXIT_NEGATIVE })
}

#[allow(clippy::too_many_arguments)]
fn report_test(
    instance: &ResolvedInstance,
    kind: TestKind,
    seed: u64,
    caveat: Option<&str>,
    verdict: VerdictOutput<'_>,
    completable: bool,
    json: bool,
) -> Result<()> {
    let shape = instance.shape;
    if json {
        let out = TestOutput {
            test: match kind {
                TestKind::Local => "local",
                TestKind::Global => "global",
            },
            hilbert_dim: shape.hilbert_dim,
            ambient_dim: shape.ambient_dim,
            num_states: shape.num_states,
            num_measurements: shape.num_measurements,
            outcomes: shape.outcomes,
            scenario: &instance.scenario_label,
            seed,
            caveat,
            verdict,
        };
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        let (rank, target) = match &verdict {
            VerdictOutput::Local(v) => (v.rank_report.computed_rank, v.target),
            VerdictOutput::Global(v) => (v.rank_report.computed_rank, v.target),
        };
        println!(
            "{} completability: {} (rank {} / target {}, D={}, W={}, V={}, K={}, scenario {})",
            kind,
            if completable {
                "completable"
            } else {
                "flexible"
            },
            rank,
            target,
            shape.ambient_dim,
            shape.num_states,
            shape.num_measurements,
            shape.outcomes,
            instance.scenario_label
        );
        if let Some(c) = caveat {
            eprintln!("note: {c}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ReconstructOutput {
    completable: bool,
    criterion_rank: usize,
    target: usize,
    #[serde(rename = "N")]
    gram_size: usize,
    max_knowledge_residual: f64,
    out: String,
}

fn run_reconstruct(args: &ReconstructArgs, config: &FileConfig) -> Result<u8> {
    let tol = args.tol.or(config.tol).unwrap_or(DEFAULT_REL_TOL);
    let data = DataMatrix {
        entries: io::read_matrix_csv(&args.data_file)?,
    };
    let knowledge = io::read_knowledge(&args.knowledge_file)?;
    let shape = *knowledge.mask.shape();
    if data.nrows() != shape.num_states || data.ncols() != shape.meas_columns() {
        return Err(Error::invalid(format!(
            "data file is {}x{}, mask shape needs {}x{}",
            data.nrows(),
            data.ncols(),
            shape.num_states,
            shape.meas_columns()
        )));
    }
    let fact = factor_data(&data, shape.ambient_dim)?;
    let crit = build_criterion(&fact, &knowledge.mask)?;
    let report = svd_rank(&crit.entries, tol)?;
    let target = shape.sym_dim();
    if report.computed_rank < target {
        eprintln!(
            "not uniquely determined: criterion rank {} < {}",
            report.computed_rank, target
        );
        return Ok(EXIT_NEGATIVE);
    }
    let side = knowledge_side(&knowledge.mask)?;
    let m = recover_symmetric_unknown(&fact, &knowledge)?;
    let gram = reconstruct_gram(&fact, &m, side)?;
    // audit: reconstructed entries must match the supplied knowledge to 1e-8
    let mut max_residual = 0.0f64;
    for (idx, (i, j)) in knowledge.mask.global_pairs().iter().enumerate() {
        max_residual = max_residual.max((gram[(*i, *j)] - knowledge.values[idx]).abs());
    }
    let scale = knowledge.values.amax().max(1.0);
    if max_residual > 1e-8 * scale {
        return Err(Error::InconsistentKnowledge {
            residual: max_residual,
            allowed: 1e-8 * scale,
        });
    }
    io::write_matrix_csv(&args.out, &gram)?;
    let summary = ReconstructOutput {
        completable: true,
        criterion_rank: report.computed_rank,
        target,
        gram_size: gram.nrows(),
        max_knowledge_residual: max_residual,
        out: args.out.display().to_string(),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!(
            "reconstructed {}x{} Gram matrix -> {} (criterion rank {}/{}, max knowledge residual {:.3e})",
            summary.gram_size,
            summary.gram_size,
            summary.out,
            summary.criterion_rank,
            summary.target,
            summary.max_knowledge_residual
        );
    }
    Ok(EXIT_OK)
}

fn run_sweep_command(args: &SweepArgs, config: &FileConfig) -> Result<u8> {
    let hilbert = args.shape.hilbert_dim.or(config.d);
    let ambient = args.shape.ambient_dim.or(config.ambient_dim);
    let (hilbert_dim, ambient_dim) = match (hilbert, ambient) {
        (Some(d), None) => (Some(d), d * d),
        (None, Some(dd)) => (None, dd),
        (None, None) => return Err(Error::invalid("one of --d or --D is required")),
        (Some(_), Some(_)) => return Err(Error::invalid("--d and --D are mutually exclusive")),
    };
    let outcomes = args
        .shape
        .outcomes
        .or(config.outcomes)
        .or(hilbert_dim)
        .ok_or_else(|| Error::invalid("--K is required with --D"))?;
    let scenario_name = args
        .scenario
        .clone()
        .or_else(|| config.scenario.clone())
        .unwrap_or_else(|| "pure".to_string());
    let scenarios = parse_scenarios(&scenario_name)?;
    let default_extent = 3 * ambient_dim;
    let request = SweepRequest {
        hilbert_dim,
        ambient_dim,
        scenarios,
        test_kind: match args.test_kind.unwrap_or(TestKindArg::Local) {
            TestKindArg::Local => TestKind::Local,
            TestKindArg::Global => TestKind::Global,
        },
        w_range: (args.wmin.unwrap_or(1), args.wmax.unwrap_or(default_extent)),
        v_range: (args.vmin.unwrap_or(1), args.vmax.unwrap_or(default_extent)),
        outcomes,
        backend: args
            .backend
            .or(config.backend_arg()?)
            .unwrap_or(BackendArg::Svd)
            .into(),
        rel_tol: args.tol.or(config.tol).unwrap_or(DEFAULT_REL_TOL),
        trials: args.trials.or(config.trials).unwrap_or(DEFAULT_TRIALS),
        seed: args.seed.or(config.seed).unwrap_or(0),
        jobs: args.jobs.or(config.jobs).unwrap_or_else(num_cpus),
        measure_runtime: args.timing,
    };
    let diagram = run_sweep(&request)?;
    let prefix = args.out_prefix.display();
    for (format, ext) in [
        (SweepFormat::Csv, "csv"),
        (SweepFormat::Json, "json"),
        (SweepFormat::Svg, "svg"),
    ] {
        emit(&diagram, format, &PathBuf::from(format!("{prefix}.{ext}")))?;
    }
    let completable = diagram
        .grid
        .iter()
        .filter(|c| {
            matches!(
                c.verdict,
                gramrig::sweep::CellVerdict::Completable
                    | gramrig::sweep::CellVerdict::ForcedCompletableByConvention
            )
        })
        .count();
    println!(
        "swept {} cells ({} completable) -> {prefix}.{{csv,json,svg}}",
        diagram.grid.len(),
        completable
    );
    Ok(EXIT_OK)
}

fn num_cpus() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Serialize)]
struct OracleReport {
    check: String,
    instances: usize,
    agreements: usize,
    pass: bool,
    details: Vec<serde_json::Value>,
}

fn run_oracle(args: &OracleArgs, config: &FileConfig) -> Result<u8> {
    let instances = args.instances.unwrap_or(20);
    let restarts = args.restarts.unwrap_or(30);
    let tol = args.tol.or(config.tol).unwrap_or(DEFAULT_REL_TOL);
    let trials = args.trials.or(config.trials).unwrap_or(DEFAULT_TRIALS);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    // desk-scale defaults so `oracle --check ...` works without shape flags
    let hilbert = args.shape.hilbert_dim.or(config.d);
    let ambient = args.shape.ambient_dim.or(config.ambient_dim);
    let shape_args = ShapeArgs {
        hilbert_dim: if hilbert.is_none() && ambient.is_none() {
            Some(2)
        } else {
            hilbert
        },
        ambient_dim: ambient,
        num_states: args.shape.num_states.or(config.num_states).or(Some(10)),
        num_measurements: args
            .shape
            .num_measurements
            .or(config.num_measurements)
            .or(Some(4)),
        outcomes: args.shape.outcomes.or(config.outcomes),
    };
    let instance = resolve_instance(
        &shape_args,
        args.scenario.as_deref(),
        args.mask_file.as_deref(),
        config,
    )?;
    let mut agreements = 0usize;
    let mut details = Vec::new();
    for k in 0..instances {
        let inst_seed = derive_seed(seed, &[k as u64]);
        let mut rng = rng_from_seed(inst_seed);
        let agrees = match args.check {
            OracleCheck::Jacobian => {
                let p = gaussian_configuration(instance.shape, &mut rng);
                let analytic = jacobian(&p, &instance.mask)?;
                let fd = fd_jacobian(&p, &instance.mask, 1e-5)?;
                let rel = (&analytic - &fd).amax() / analytic.amax().max(1.0);
                details.push(serde_json::json!({"instance": k, "rel_error": rel}));
                rel <= 1e-6
            }
            OracleCheck::Criterion => {
                let p = gaussian_configuration(instance.shape, &mut rng);
                let data = DataMatrix::from_configuration(&p);
                let fact = factor_data(&data, instance.shape.ambient_dim)?;
                let direct = build_criterion(&fact, &instance.mask)?;
                let duplicate = criterion_from_factors(&fact, &instance.mask)?;
                let r1 = svd_rank(&direct.entries, tol)?.computed_rank;
                let r2 = svd_rank(&duplicate.entries, tol)?.computed_rank;
                details.push(serde_json::json!({"instance": k, "direct": r1, "from_factors": r2}));
                r1 == r2
            }
            OracleCheck::Uniqueness => {
                let verdict = global_test(
                    instance.shape,
                    &instance.mask,
                    trials,
                    TestBackend::Svd,
                    tol,
                    inst_seed,
                )?;
                let p = gaussian_configuration(instance.shape, &mut rng);
                let data = DataMatrix::from_configuration(&p);
                let fact = factor_data(&data, instance.shape.ambient_dim)?;
                let unique = linear_uniqueness_oracle(&fact, &instance.mask)?;
                details.push(serde_json::json!({
                    "instance": k, "global_test": verdict.completable, "oracle": unique
                }));
                verdict.completable == unique
            }
            OracleCheck::Perturb => {
                let verdict = local_test(
                    instance.shape,
                    &instance.mask,
                    trials,
                    TestBackend::Svd,
                    tol,
                    inst_seed,
                )?;
                let p = gaussian_configuration(instance.shape, &mut rng);
                let knowledge = extract_knowledge(&p, &instance.mask)?;
                let result = perturbation_search(&p, &knowledge, restarts, inst_seed)?;
                details.push(serde_json::json!({
                    "instance": k,
                    "local_test_completable": verdict.completable,
                    "deformation_found": result.found_nontrivial_deformation,
                    "orbit_distance": result.orbit_distance,
                }));
                verdict.completable != result.found_nontrivial_deformation
            }
        };
        if agrees {
            agreements += 1;
        }
    }
    let report = OracleReport {
        check: format!("{:?}", args.check).to_lowercase(),
        instances,
        agreements,
        pass: agreements == instances,
        details,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "oracle {}: {}/{} instances agree -> {}",
            report.check,
            report.agreements,
            report.instances,
            if report.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_NEGATIVE })
}

fn run_gen_model(args: &GenModelArgs, config: &FileConfig) -> Result<u8> {
    let d = args
        .hilbert_dim
        .or(config.d)
        .ok_or_else(|| Error::invalid("--d is required"))?;
    let num_states = args
        .num_states
        .or(config.num_states)
        .ok_or_else(|| Error::invalid("--W is required"))?;
    let num_measurements = args
        .num_measurements
        .or(config.num_measurements)
        .ok_or_else(|| Error::invalid("--V is required"))?;
    let outcomes = args.outcomes.or(config.outcomes).unwrap_or(d);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let degeneracies: Option<Vec<usize>> = match &args.degeneracies {
        None => None,
        Some(list) => Some(
            list.split(',')
                .map(|part| {
                    part.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::invalid(format!("bad degeneracy `{part}`: {e}")))
                })
                .collect::<Result<_>>()?,
        ),
    };
    let model = random_quantum_model(
        d,
        num_states,
        num_measurements,
        outcomes,
        degeneracies.as_deref(),
        args.projective,
        seed,
    )?;
    let configuration = model.to_configuration()?;
    let data = born_data(&model)?;
    let prefix = args.out_prefix.display();
    let config_path = PathBuf::from(format!("{prefix}.config.json"));
    let data_path = PathBuf::from(format!("{prefix}.data.csv"));
    io::write_configuration(&config_path, &configuration)?;
    io::write_matrix_csv(&data_path, &data.entries)?;
    let mut written = vec![
        config_path.display().to_string(),
        data_path.display().to_string(),
    ];
    if let Some(scenario_name) = args.scenario.as_deref().or(config.scenario.as_deref()) {
        let scenarios = parse_scenarios(scenario_name)?;
        let mask = combined_scenario_mask(configuration.shape, &scenarios)?;
        let knowledge = extract_knowledge(&configuration, &mask)?;
        let knowledge_path = PathBuf::from(format!("{prefix}.knowledge.json"));
        io::write_knowledge(&knowledge_path, &knowledge)?;
        written.push(knowledge_path.display().to_string());
    }
    println!(
        "generated quantum model (d={d}, W={num_states}, V={num_measurements}, K={outcomes}, {}) -> {}",
        if args.projective { "projective" } else { "generic" },
        written.join(", ")
    );
    Ok(EXIT_OK)
}
