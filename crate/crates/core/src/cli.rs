//! Command-line entry points: `simulate`, `replicate`, `analyze`, `diagnose`.
//!
//! Every command writes to `--out` (or standard output) and is a pure
//! function of its settings and seed, independent of the thread count.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bart::{BartHyper, McmcConfig};
use crate::config::{Mode, RunConfig};
use crate::data::{load_dataset, write_dataset_to, DatasetSchema, TrialDataset};
use crate::diagnostics::{default_permutation_settings, permutation_test_ci};
use crate::effects::{test_superiority, EffectMatrix, EffectSummary};
use crate::error::{input, Error, Result};
use crate::models::{fit_methods, FitSettings, MethodList};
use crate::posterior::Method;
use crate::rng::derive_seed;
use crate::sim::{generate_scenario, run_replications, write_report, ScenarioSpec, Variant};
use crate::synth::{synthesize_external, SynthMode};

/// Seed role for the Bayesian-bootstrap weights of the population effect.
const PATE_ROLE: u64 = 9;
/// Seed roles for diagnose: scenario data, synthetic external rows, the test.
const DIAGNOSE_DATA_ROLE: u64 = 10;
const SYNTH_ROLE: u64 = 11;
const DIAGNOSE_TEST_ROLE: u64 = 12;

#[derive(Parser, Debug)]
#[command(
    name = "bart-borrow",
    version,
    about = "Borrowing external controls with Bayesian additive regression trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one simulated dataset.
    Simulate(SimulateArgs),
    /// Run repeated simulations and write an operating-characteristics report.
    Replicate(ReplicateArgs),
    /// Fit methods to a dataset and report treatment-effect summaries.
    Analyze(AnalyzeArgs),
    /// Permutation test of whether the data source predicts control outcomes.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// MCMC iterations, burn-in included.
    #[arg(long)]
    iters: Option<usize>,
    /// Burn-in iterations discarded.
    #[arg(long)]
    burn: Option<usize>,
    /// Output file (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of trees per forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Worker threads (default: BARTBORROW_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// Scenario 1, 2 or 3.
    #[arg(long)]
    scenario: Option<u8>,
    /// cond-indep, violated or multi-source.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    n_trial: Option<usize>,
    /// Rows per external source.
    #[arg(long)]
    n_external: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args, Debug)]
struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of replications (default 100).
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated methods or `all` (default).
    #[arg(long)]
    methods: Option<String>,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `native` (default), `acupuncture`, or a JSON schema file.
    #[arg(long)]
    schema: Option<String>,
    /// Append this many synthetic external controls to the data.
    #[arg(long)]
    synth_external: Option<usize>,
    /// mimic, covariate-shift or outcome-shift.
    #[arg(long)]
    synth_mode: Option<String>,
    /// Baseline covariate for the shift modes (default: first covariate).
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated methods or `all` (default: BART).
    #[arg(long)]
    methods: Option<String>,
    /// cate, pate or both (default: both).
    #[arg(long)]
    estimand: Option<String>,
    /// Report P(effect > t) for each threshold (repeatable).
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,
    /// Per-patient effect summaries for plotting.
    #[arg(long)]
    points: Option<PathBuf>,
    /// z-score continuous covariates for the linear models.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Generate the data from a scenario instead of reading a file.
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of permutations (default 100).
    #[arg(long)]
    n_perm: Option<usize>,
}

impl Common {
    fn config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            iters: self.iters,
            burn: self.burn,
            out: self.out.clone(),
            trees: self.trees,
            threads: self.threads,
            ..RunConfig::default()
        }
    }
}

impl ScenarioArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.scenario = self.scenario;
        c.variant = self.variant.clone();
        c.n_trial = self.n_trial;
        c.n_external = self.n_external;
    }
}

impl DataArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.data = self.data.clone();
        c.schema = self.schema.clone();
        c.synth_external = self.synth_external;
        c.synth_mode = self.synth_mode.clone();
        c.baseline = self.baseline.clone();
    }
}

impl Command {
    fn mode_and_config(&self) -> (Mode, &Common, RunConfig) {
        match self {
            Command::Simulate(a) => {
                let mut c = a.common.config();
                a.scenario.apply(&mut c);
                (Mode::Simulate, &a.common, c)
            }
            Command::Replicate(a) => {
                let mut c = a.common.config();
                a.scenario.apply(&mut c);
                c.reps = a.reps;
                c.methods = a.methods.clone();
                (Mode::Replicate, &a.common, c)
            }
            Command::Analyze(a) => {
                let mut c = a.common.config();
                a.data.apply(&mut c);
                c.methods = a.methods.clone();
                c.estimand = a.estimand.clone();
                c.thresholds = (!a.thresholds.is_empty()).then(|| a.thresholds.clone());
                c.points = a.points.clone();
                c.standardize = a.standardize.then_some(true);
                (Mode::Analyze, &a.common, c)
            }
            Command::Diagnose(a) => {
                let mut c = a.common.config();
                a.data.apply(&mut c);
                a.scenario.apply(&mut c);
                c.n_perm = a.n_perm;
                (Mode::Diagnose, &a.common, c)
            }
        }
    }
}

fn scenario_spec(c: &RunConfig, seed: u64) -> Result<ScenarioSpec> {
    let variant: Variant = c.variant.as_deref().unwrap_or("cond-indep").parse()?;
    let mut spec = ScenarioSpec::new(c.scenario.unwrap_or(1), variant, seed);
    if let Some(n) = c.n_trial {
        spec.n_trial = n;
    }
    if let Some(n) = c.n_external {
        spec.n_external = n;
    }
    spec.validate()?;
    Ok(spec)
}

fn fit_settings(
    c: &RunConfig,
    default_trees: usize,
    default_mcmc: McmcConfig,
) -> Result<FitSettings> {
    let mcmc = McmcConfig::new(
        c.iters.unwrap_or(default_mcmc.n_iter),
        c.burn.unwrap_or(default_mcmc.n_burn),
        c.seed.unwrap_or(0),
    );
    mcmc.validate()?;
    let n_trees = c.trees.unwrap_or(default_trees);
    if n_trees < 1 {
        return input("--trees must be at least 1");
    }
    Ok(FitSettings {
        hyper: BartHyper {
            n_trees,
            ..BartHyper::default()
        },
        mcmc,
        standardize: c.standardize.unwrap_or(false),
    })
}

fn schema(c: &RunConfig) -> Result<DatasetSchema> {
    match c.schema.as_deref() {
        None | Some("native") => Ok(DatasetSchema::default()),
        Some("acupuncture") => Ok(DatasetSchema::acupuncture()),
        Some(path) => DatasetSchema::from_json_file(path),
    }
}

/// Reads `--data` and appends synthetic external controls if requested.
fn dataset(c: &RunConfig, seed: u64) -> Result<TrialDataset> {
    let path = c
        .data
        .as_ref()
        .ok_or_else(|| Error::Input("--data is required".into()))?;
    let data = load_dataset(path, &schema(c)?)?;
    match c.synth_external {
        None => Ok(data),
        Some(n) => {
            let mode: SynthMode = c.synth_mode.as_deref().unwrap_or("mimic").parse()?;
            let baseline = match &c.baseline {
                Some(b) => b.clone(),
                None => data
                    .names
                    .first()
                    .cloned()
                    .ok_or_else(|| Error::Input("no covariates".into()))?,
            };
            let trial = data.trial_only();
            let ext =
                synthesize_external(&trial, n, mode, &baseline, derive_seed(seed, &[SYNTH_ROLE]))?;
            trial.with_external(&ext)
        }
    }
}

fn simulate(c: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let gen = generate_scenario(&scenario_spec(c, c.seed.unwrap_or(0))?)?;
    write_dataset_to(&gen.dataset, out)
}

fn replicate(c: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    let spec = scenario_spec(c, seed)?;
    let methods = MethodList::parse(c.methods.as_deref().unwrap_or("all"))?.0;
    let settings = fit_settings(c, BartHyper::default().n_trees, McmcConfig::default())?;
    let (report, _) = run_replications(&spec, &methods, c.reps.unwrap_or(100), &settings, seed)?;
    write_report(&report, out)
}

fn csv_f64(v: f64) -> String {
    v.to_string()
}

fn analyze(c: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    let data = dataset(c, seed)?;
    let methods: Vec<Method> = MethodList::parse(c.methods.as_deref().unwrap_or("BART"))?.0;
    let (cate, pate) = match c
        .estimand
        .as_deref()
        .unwrap_or("both")
        .to_ascii_lowercase()
        .as_str()
    {
        "cate" => (true, false),
        "pate" => (false, true),
        "both" => (true, true),
        other => return input(format!("unknown estimand `{other}`")),
    };
    let thresholds = c.thresholds.clone().unwrap_or_else(|| vec![0.0]);
    let settings = fit_settings(c, BartHyper::default().n_trees, McmcConfig::default())?;
    let fits = fit_methods(&data, &methods, &settings)?;
    let points = data.trial_covariates();

    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "method",
        "estimand",
        "mean",
        "ci_low",
        "ci_high",
        "ci_length",
        "n_draws",
    ]
    .map(String::from)
    .to_vec();
    header.extend(thresholds.iter().map(|t| format!("pr_gt_{t}")));
    w.write_record(&header)?;
    let mut point_rows = Vec::new();
    for post in &fits {
        let m = EffectMatrix::new(post, &points)?;
        let mut summaries: Vec<EffectSummary> = Vec::new();
        if cate {
            summaries.push(m.cate());
        }
        if pate {
            summaries.push(m.pate(derive_seed(seed, &[PATE_ROLE])));
        }
        for s in &summaries {
            let mut rec = vec![
                post.method.name().to_string(),
                s.estimand.name().to_string(),
                csv_f64(s.mean),
                csv_f64(s.ci_low),
                csv_f64(s.ci_high),
                csv_f64(s.ci_length()),
                s.draws.len().to_string(),
            ];
            rec.extend(
                thresholds
                    .iter()
                    .map(|&t| csv_f64(test_superiority(s, t, 0.95).posterior_prob)),
            );
            w.write_record(&rec)?;
        }
        point_rows.push((post.method, m.point_summaries()));
    }
    w.flush()?;
    if let Some(path) = &c.points {
        let mut p = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let mut header = vec!["method".to_string(), "patient".into()];
        header.extend(data.names.iter().cloned());
        header.extend(["mean", "ci_low", "ci_high"].map(String::from));
        p.write_record(&header)?;
        for (method, effects) in &point_rows {
            for (i, (x, e)) in points.iter().zip(effects).enumerate() {
                let mut rec = vec![method.name().to_string(), i.to_string()];
                rec.extend(x.iter().copied().map(csv_f64));
                rec.extend([e.mean, e.ci_low, e.ci_high].map(csv_f64));
                p.write_record(&rec)?;
            }
        }
        p.flush()?;
    }
    Ok(())
}

fn diagnose(c: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    let data = if c.data.is_some() {
        dataset(c, seed)?
    } else {
        generate_scenario(&scenario_spec(c, derive_seed(seed, &[DIAGNOSE_DATA_ROLE]))?)?.dataset
    };
    let (hyper, mcmc) = default_permutation_settings();
    let settings = fit_settings(c, hyper.n_trees, mcmc)?;
    let n_perm = c.n_perm.unwrap_or(100);
    let r = permutation_test_ci(
        &data,
        n_perm,
        &settings.hyper,
        &settings.mcmc,
        derive_seed(seed, &[DIAGNOSE_TEST_ROLE]),
    )?;
    writeln!(out, "# observed_r2={}", r.observed_r2)?;
    writeln!(out, "# p_value={}", r.p_value)?;
    writeln!(out, "# n_perm={}", r.n_perm)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["permutation", "pseudo_r2"])?;
    w.write_record(["observed".to_string(), csv_f64(r.observed_r2)])?;
    for (k, v) in r.null_r2.iter().enumerate() {
        w.write_record([(k + 1).to_string(), csv_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

fn execute(mode: Mode, c: &RunConfig, out: &mut dyn Write) -> Result<()> {
    match mode {
        Mode::Simulate => simulate(c, out),
        Mode::Replicate => replicate(c, out),
        Mode::Analyze => analyze(c, out),
        Mode::Diagnose => diagnose(c, out),
    }
}

fn open_out(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs an already-parsed command line; `stdout` receives output when no
/// `--out` is given.
fn run_command(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let (mode, common, flags) = cli.command.mode_and_config();
    let file = match &common.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => RunConfig::default(),
    };
    let c = file.overlay(flags);
    c.validate_for(mode)?;
    // Output is buffered so the pool's workers never touch `stdout`.
    let work = || -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        execute(mode, &c, &mut buf)?;
        Ok(buf)
    };
    let bytes = match c.thread_count()? {
        Some(0) => return input("thread count must be positive"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Input(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    match &c.out {
        Some(p) => {
            let mut f = open_out(p)?;
            f.write_all(&bytes)?;
            f.flush()?;
        }
        None => stdout.write_all(&bytes)?,
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 on success, 1 on a run error, 2 on a usage error.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run_command(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}
