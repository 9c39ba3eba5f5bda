//! `nrld` command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_dataset, load_dataset, make_omega, save_dataset, split, Dataset, DEFAULT_NOISE_SCALE};
use crate::evalbound::{
    c_ell, estimate_lipschitz, evaluate_against, feature_norm_bound, hindsight_objectives, median, pac_bound,
    BoundInputs, EvalReport, FeatureNorm,
};
use crate::grid::{load_case, validate_case, NetworkCase};
use crate::neural::{load_params, save_params, MlpParams};
use crate::recourse::{DispatchOptions, RecourseModel};
use crate::train::{
    fit_conditional_gaussian, load_predictor, save_predictor, train_imitation, train_neural_rld,
    two_step_decide, GaussianPredictor, TrainConfig, TrainReport, DEFAULT_SCENARIOS,
};

#[derive(Debug, Parser)]
#[command(name = "nrld", version, about = "Learned two-stage DC dispatch under demand uncertainty")]
pub struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "nrld-out")]
    pub out: PathBuf,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a case file and list every problem found.
    Validate(ValidateArgs),
    /// Generate a synthetic feature/demand dataset.
    GenData(GenDataArgs),
    /// Train one method and write a run directory.
    Train(TrainArgs),
    /// Score a trained model (or a reference policy) on test data.
    Eval(EvalArgs),
    /// Train and evaluate several methods with shared seeds.
    Bench(BenchArgs),
    /// Evaluate the PAC excess-cost bound.
    Bound(BoundArgs),
    /// Solve one recourse or hindsight dispatch problem.
    Solve(SolveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NeuralRld,
    Imitation,
    TwoStep,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::NeuralRld => "neural-rld",
            Method::Imitation => "imitation",
            Method::TwoStep => "two-step",
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub case: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub samples: usize,
    /// Feature dimension; defaults to the bus count.
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_NOISE_SCALE)]
    pub noise: f64,
    /// Expected total demand (MW) at the mean feature vector.
    #[arg(long, default_value_t = 10.0)]
    pub target_load: f64,
    /// Also write `train.csv` and `test.csv` split at this row.
    #[arg(long)]
    pub n_train: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Rows `[0, n)` are training data and the rest test data. Without it the
    /// whole file is used.
    #[arg(long)]
    pub n_train: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Learning rate; defaults to 1e-4 for neural-rld and 1e-3 for imitation.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub w_max: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "5,5,5")]
    pub hidden: Vec<usize>,
    #[arg(long)]
    pub cosine: bool,
    #[arg(long)]
    pub no_shuffle: bool,
    /// Scenario count for the two-step method.
    #[arg(long, default_value_t = DEFAULT_SCENARIOS)]
    pub scenarios: usize,
}

impl HyperArgs {
    fn train_config(&self, method: Method, seed: u64) -> TrainConfig {
        let default_lr = match method {
            Method::Imitation => 1e-3,
            _ => 1e-4,
        };
        TrainConfig {
            learning_rate: self.lr.unwrap_or(default_lr),
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            w_max: self.w_max,
            hidden: self.hidden.clone(),
            shuffle: !self.no_shuffle,
            cosine_decay: self.cosine,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Run directory written by `train`.
    #[arg(long, group = "policy")]
    pub run: Option<PathBuf>,
    /// Network checkpoint file.
    #[arg(long, group = "policy")]
    pub checkpoint: Option<PathBuf>,
    /// Gaussian predictor file for the two-step method.
    #[arg(long, group = "policy")]
    pub predictor: Option<PathBuf>,
    /// Score the hindsight-optimal dispatch, which sees the realized demand.
    #[arg(long, group = "policy")]
    pub hindsight: bool,
    /// Score the all-zero dispatch.
    #[arg(long, group = "policy")]
    pub zero: bool,
    #[arg(long, default_value_t = DEFAULT_SCENARIOS)]
    pub scenarios: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "neural-rld,imitation,two-step")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Repetitions per latency measurement; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub timing_reps: usize,
    /// Decisions per batch latency measurement.
    #[arg(long, default_value_t = 1000)]
    pub timing_batch: usize,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("feature_bound").required(true).args(["x_max", "from_data"])))]
pub struct BoundArgs {
    #[arg(long)]
    pub w_max: f64,
    /// Number of weight matrices.
    #[arg(long)]
    pub layers: usize,
    /// Training sample count.
    #[arg(long)]
    pub samples: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    /// Loss Lipschitz constant, used as given.
    #[arg(long, conflicts_with_all = ["c_g", "estimate_cg"])]
    pub c_ell: Option<f64>,
    /// Lipschitz constant of the recourse solution map.
    #[arg(long)]
    pub c_g: Option<f64>,
    /// Estimate C_g empirically (a lower bound) instead of supplying it.
    #[arg(long, conflicts_with = "c_g")]
    pub estimate_cg: bool,
    /// Case used to assemble the loss constant from C_g.
    #[arg(long)]
    pub case: Option<PathBuf>,
    #[arg(long, conflicts_with = "from_data")]
    pub x_max: Option<f64>,
    /// Dataset whose feature norms give X^max.
    #[arg(long)]
    pub from_data: Option<PathBuf>,
    /// Use the root-mean-square feature norm instead of the maximum.
    #[arg(long)]
    pub rms: bool,
    #[arg(long, default_value_t = 2000)]
    pub lipschitz_pairs: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub case: PathBuf,
    /// Realized net demand per bus, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub d: Vec<f64>,
    /// Day-ahead dispatch per bus, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "hindsight")]
    pub u: Vec<f64>,
    /// Solve for the hindsight-optimal dispatch instead.
    #[arg(long)]
    pub hindsight: bool,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Snapshot written to `config.json` in every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: PathBuf,
    pub data: PathBuf,
    pub n_train: Option<usize>,
    pub method: Method,
    pub seed: u64,
    pub train: TrainConfig,
    pub scenarios: usize,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out.clone(),
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Validate(a) => cmd_validate(&ctx, a),
        Command::GenData(a) => cmd_gen_data(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::Bound(a) => cmd_bound(&ctx, a),
        Command::Solve(a) => cmd_solve(&ctx, a),
    }
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn read_case(path: &Path) -> anyhow::Result<NetworkCase> {
    let case = load_case(path).with_context(|| format!("loading case {}", path.display()))?;
    Ok(case.validated()?)
}

/// Loads the dataset and applies the optional train/test split.
fn read_split(args: &DataArgs) -> anyhow::Result<(Dataset, Option<Dataset>)> {
    let ds = load_dataset(&args.data).with_context(|| format!("loading dataset {}", args.data.display()))?;
    match args.n_train {
        Some(n) => {
            let (tr, te) = split(&ds, n)?;
            Ok((tr, Some(te)))
        }
        None => Ok((ds, None)),
    }
}

fn cmd_validate(ctx: &Ctx, a: &ValidateArgs) -> anyhow::Result<()> {
    let case = load_case(&a.case).with_context(|| format!("loading case {}", a.case.display()))?;
    let diags = validate_case(&case);
    if diags.is_empty() {
        ctx.say(format!(
            "{}: valid ({} buses, {} lines)",
            case.name,
            case.n_bus,
            case.n_line()
        ));
        return Ok(());
    }
    for d in &diags {
        eprintln!("{d}");
    }
    bail!("{} problem(s) in {}", diags.len(), a.case.display())
}

fn cmd_gen_data(ctx: &Ctx, a: &GenDataArgs) -> anyhow::Result<()> {
    let case = read_case(&a.case)?;
    let p = a.features.unwrap_or(case.n_bus);
    let omega = make_omega(&case, p, ctx.seed, a.target_load)?;
    let ds = gen_dataset(&case, &omega, a.samples, a.noise, ctx.seed.wrapping_add(1))?;
    let dir = ctx.out_dir()?;
    save_dataset(&ds, dir.join("dataset.csv"))?;
    if let Some(n) = a.n_train {
        let (tr, te) = split(&ds, n)?;
        save_dataset(&tr, dir.join("train.csv"))?;
        save_dataset(&te, dir.join("test.csv"))?;
    }
    let mean_total = ds.demands.iter().map(|d| d.iter().sum::<f64>()).sum::<f64>() / ds.len() as f64;
    ctx.say(format!(
        "wrote {} rows (p = {p}, buses = {}) to {}; mean total demand {mean_total:.4} MW",
        ds.len(),
        case.n_bus,
        dir.join("dataset.csv").display()
    ));
    Ok(())
}

fn write_loss_csv(path: &Path, report: &TrainReport) -> anyhow::Result<()> {
    let mut text = String::from("epoch,loss\n");
    for (k, l) in report.epoch_losses.iter().enumerate() {
        text.push_str(&format!("{},{}\n", k + 1, l));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_timing_csv(path: &Path, report: &TrainReport) -> anyhow::Result<()> {
    let mut text = String::from("epoch,seconds\n");
    for (k, s) in report.epoch_seconds.iter().enumerate() {
        text.push_str(&format!("{},{}\n", k + 1, s));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// A trained policy of any method.
enum Policy {
    Network(MlpParams),
    TwoStep {
        predictor: GaussianPredictor,
        scenarios: usize,
        seed: u64,
    },
}

impl Policy {
    fn decide(&self, model: &RecourseModel, x: &[f64]) -> anyhow::Result<Vec<f64>> {
        Ok(match self {
            Policy::Network(p) => p.predict(x)?,
            Policy::TwoStep {
                predictor,
                scenarios,
                seed,
            } => two_step_decide(model, predictor, x, *scenarios, *seed)?,
        })
    }
}

fn train_method(
    case: &NetworkCase,
    train: &Dataset,
    method: Method,
    cfg: &TrainConfig,
    scenarios: usize,
) -> anyhow::Result<(Policy, Option<TrainReport>)> {
    Ok(match method {
        Method::NeuralRld => {
            let (p, r) = train_neural_rld(case, train, cfg)?;
            (Policy::Network(p), Some(r))
        }
        Method::Imitation => {
            let (p, r) = train_imitation(case, train, cfg)?;
            (Policy::Network(p), Some(r))
        }
        Method::TwoStep => (
            Policy::TwoStep {
                predictor: fit_conditional_gaussian(train)?,
                scenarios,
                seed: cfg.seed,
            },
            None,
        ),
    })
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> anyhow::Result<()> {
    let case = read_case(&a.data.case)?;
    let (train, _) = read_split(&a.data)?;
    let cfg = a.hyper.train_config(a.method, ctx.seed);
    let dir = ctx.out_dir()?;
    let config_path = dir.join("config.json");
    if config_path.exists() {
        bail!(
            "{} already holds a run; choose a fresh --out directory",
            dir.display()
        );
    }
    let snapshot = RunConfig {
        case: a.data.case.clone(),
        data: a.data.data.clone(),
        n_train: a.data.n_train,
        method: a.method,
        seed: ctx.seed,
        train: cfg.clone(),
        scenarios: a.hyper.scenarios,
    };
    fs::write(&config_path, serde_json::to_string_pretty(&snapshot)?)
        .with_context(|| format!("writing {}", config_path.display()))?;

    let (policy, report) = train_method(&case, &train, a.method, &cfg, a.hyper.scenarios)?;
    match &policy {
        Policy::Network(p) => save_params(p, dir.join("checkpoint.json"))?,
        Policy::TwoStep { predictor, .. } => save_predictor(predictor, dir.join("predictor.json"))?,
    }
    if let Some(r) = &report {
        write_loss_csv(&dir.join("loss.csv"), r)?;
        write_timing_csv(&dir.join("timing.csv"), r)?;
        if let Some(last) = r.epoch_losses.last() {
            ctx.say(format!("{}: final epoch loss {last:.6}", a.method.name()));
        } else {
            ctx.say(format!("{}: no epochs run", a.method.name()));
        }
    } else {
        ctx.say(format!("{}: predictor fitted on {} samples", a.method.name(), train.len()));
    }
    Ok(())
}

fn load_run_policy(run: &Path) -> anyhow::Result<Policy> {
    let cfg_path = run.join("config.json");
    let text = fs::read_to_string(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", cfg_path.display()))?;
    Ok(match cfg.method {
        Method::TwoStep => Policy::TwoStep {
            predictor: load_predictor(run.join("predictor.json"))?,
            scenarios: cfg.scenarios,
            seed: cfg.seed,
        },
        _ => Policy::Network(load_params(run.join("checkpoint.json"))?),
    })
}

fn write_report(ctx: &Ctx, rep: &EvalReport, label: &str) -> anyhow::Result<()> {
    let dir = ctx.out_dir()?;
    rep.write_csv(dir.join("eval.csv"))?;
    let summary = format!("{label}: {}\n", rep.summary());
    fs::write(dir.join("summary.txt"), &summary).with_context(|| "writing summary.txt")?;
    ctx.say(summary.trim_end());
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> anyhow::Result<()> {
    let case = read_case(&a.data.case)?;
    let (all, test) = read_split(&a.data)?;
    let test = test.unwrap_or(all);
    let model = RecourseModel::new(&case);
    let hindsight = hindsight_objectives(&case, &test)?;

    let (label, decisions): (String, Vec<Vec<f64>>) = if a.hindsight {
        let d = test
            .demands
            .iter()
            .map(|d| Ok(model.hindsight(d, DispatchOptions::default())?.u_star))
            .collect::<crate::Result<_>>()?;
        ("hindsight".into(), d)
    } else if a.zero {
        ("zero".into(), vec![vec![0.0; case.n_bus]; test.len()])
    } else {
        let (label, policy) = if let Some(run) = &a.run {
            (run.display().to_string(), load_run_policy(run)?)
        } else if let Some(ck) = &a.checkpoint {
            let p = load_params(ck).with_context(|| format!("loading checkpoint {}", ck.display()))?;
            (ck.display().to_string(), Policy::Network(p))
        } else if let Some(pr) = &a.predictor {
            let g = load_predictor(pr).with_context(|| format!("loading predictor {}", pr.display()))?;
            let policy = Policy::TwoStep {
                predictor: g,
                scenarios: a.scenarios,
                seed: ctx.seed,
            };
            (pr.display().to_string(), policy)
        } else {
            bail!("one of --run, --checkpoint, --predictor, --hindsight or --zero is required");
        };
        let d = test
            .features
            .iter()
            .map(|x| policy.decide(&model, x))
            .collect::<anyhow::Result<_>>()?;
        (label, d)
    };
    let rep = evaluate_against(&case, &decisions, &test, &hindsight)?;
    write_report(ctx, &rep, &label)
}

/// Median wall-clock seconds of `reps` runs of `f`.
fn median_seconds(reps: usize, mut f: impl FnMut() -> anyhow::Result<()>) -> anyhow::Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&times))
}

struct BenchRow {
    method: Method,
    report: EvalReport,
    train_seconds: f64,
    single_seconds: f64,
    batch_seconds_per_decision: f64,
}

fn bench_method(
    case: &NetworkCase,
    train: &Dataset,
    test: &Dataset,
    hindsight: &[f64],
    method: Method,
    a: &BenchArgs,
    seed: u64,
) -> anyhow::Result<BenchRow> {
    let model = RecourseModel::new(case);
    let cfg = a.hyper.train_config(method, seed);
    let t = Instant::now();
    let (policy, _) = train_method(case, train, method, &cfg, a.hyper.scenarios)?;
    let train_seconds = t.elapsed().as_secs_f64();
    let decisions = test
        .features
        .iter()
        .map(|x| policy.decide(&model, x))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = evaluate_against(case, &decisions, test, hindsight)?;

    let x0 = &test.features[0];
    let single_seconds = median_seconds(a.timing_reps, || policy.decide(&model, x0).map(|_| ()))?;
    let n = a.timing_batch.max(1);
    let batch = median_seconds(a.timing_reps, || {
        for k in 0..n {
            policy.decide(&model, &test.features[k % test.len()])?;
        }
        Ok(())
    })?;
    Ok(BenchRow {
        method,
        report,
        train_seconds,
        single_seconds,
        batch_seconds_per_decision: batch / n as f64,
    })
}

fn cmd_bench(ctx: &Ctx, a: &BenchArgs) -> anyhow::Result<()> {
    let case = read_case(&a.data.case)?;
    let (train, test) = read_split(&a.data)?;
    let test = test.context("bench needs --n-train to hold out test rows")?;
    let hindsight = hindsight_objectives(&case, &test)?;
    let mut rows = Vec::new();
    for &m in &a.methods {
        match bench_method(&case, &train, &test, &hindsight, m, a, ctx.seed) {
            Ok(r) => rows.push(r),
            Err(e) => eprintln!("{}: failed: {e:#}", m.name()),
        }
    }
    if rows.is_empty() {
        bail!("every method failed");
    }
    let dir = ctx.out_dir()?;
    let mut table = String::from("method,mean_suboptimality,median_suboptimality,p95_suboptimality,excluded\n");
    let mut timing = String::from("method,train_seconds,single_decision_seconds,batch_seconds_per_decision\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method.name(),
            r.report.mean,
            r.report.median,
            r.report.p95,
            r.report.excluded
        ));
        timing.push_str(&format!(
            "{},{},{},{}\n",
            r.method.name(),
            r.train_seconds,
            r.single_seconds,
            r.batch_seconds_per_decision
        ));
    }
    fs::write(dir.join("bench.csv"), &table).context("writing bench.csv")?;
    fs::write(dir.join("bench_timing.csv"), &timing).context("writing bench_timing.csv")?;

    ctx.say(format!(
        "{:<12} {:>12} {:>12} {:>10} {:>14} {:>14}",
        "method", "mean", "median", "train s", "single us", "batch us/dec"
    ));
    for r in &rows {
        ctx.say(format!(
            "{:<12} {:>12.6} {:>12.6} {:>10.3} {:>14.2} {:>14.2}",
            r.method.name(),
            r.report.mean,
            r.report.median,
            r.train_seconds,
            r.single_seconds * 1e6,
            r.batch_seconds_per_decision * 1e6
        ));
    }
    let find = |m: Method| rows.iter().find(|r| r.method == m);
    if let (Some(n), Some(t)) = (find(Method::NeuralRld), find(Method::TwoStep)) {
        ctx.say(format!(
            "two-step / neural-rld per-decision latency ratio: {:.1}",
            t.batch_seconds_per_decision / n.batch_seconds_per_decision
        ));
    }
    Ok(())
}

fn cmd_bound(ctx: &Ctx, a: &BoundArgs) -> anyhow::Result<()> {
    let x_max = match (&a.from_data, a.x_max) {
        (Some(path), _) => {
            let ds = load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
            let kind = if a.rms { FeatureNorm::Rms } else { FeatureNorm::Max };
            feature_norm_bound(&ds, kind)
        }
        (None, Some(x)) => x,
        (None, None) => unreachable!("clap requires --x-max or --from-data"),
    };
    let (c_ell_value, c_g_note) = match a.c_ell {
        Some(v) => (v, String::from("C_l supplied directly")),
        None => {
            let path = a.case.as_ref().context("--case is required unless --c-ell is given")?;
            let case = read_case(path)?;
            let (c_g, note) = match (a.c_g, a.estimate_cg) {
                (Some(c), _) => (c, format!("C_g = {c} (supplied)")),
                (None, true) => {
                    let c = estimate_lipschitz(&case, a.lipschitz_pairs, 1.0, ctx.seed)?;
                    (c, format!("C_g = {c:.6} (empirical lower bound, {} pairs)", a.lipschitz_pairs))
                }
                (None, false) => bail!("one of --c-g, --estimate-cg or --c-ell is required"),
            };
            (c_ell(&case, c_g)?, note)
        }
    };
    let res = pac_bound(BoundInputs {
        w_max: a.w_max,
        k_layers: a.layers,
        c_ell: c_ell_value,
        x_max,
        m: a.samples,
        delta: a.delta,
    })?;
    let norm = if a.from_data.is_some() && a.rms { "rms" } else { "max" };
    ctx.say(&c_g_note);
    ctx.say(format!(
        "W_max = {}  K = {}  C_l = {}  X_max = {} ({norm})  M = {}  delta = {}",
        a.w_max, a.layers, c_ell_value, x_max, a.samples, a.delta
    ));
    ctx.say(format!(
        "complexity term {:.6}  confidence term {:.6}",
        res.complexity_term, res.confidence_term
    ));
    if ctx.quiet {
        println!("{}", res.bound);
    } else {
        println!("bound = {:.6}", res.bound);
    }
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

fn cmd_solve(ctx: &Ctx, a: &SolveArgs) -> anyhow::Result<()> {
    let case = read_case(&a.case)?;
    let model = RecourseModel::new(&case);
    if a.hindsight {
        let h = model.hindsight(&a.d, DispatchOptions::default())?;
        if a.json {
            println!("{}", serde_json::json!({ "u_star": h.u_star, "objective": h.objective }));
        } else {
            ctx.say(format!("u*        = [{}]", fmt_vec(&h.u_star)));
            ctx.say(format!("objective = {:.6}", h.objective));
        }
        return Ok(());
    }
    let sol = model.solve(&a.u, &a.d)?;
    if a.json {
        println!(
            "{}",
            serde_json::json!({
                "q": sol.q,
                "g": sol.g,
                "theta": sol.theta,
                "flow": sol.flow,
                "mu_bal": sol.mu_bal,
                "nu_lo": sol.nu_lo,
                "nu_hi": sol.nu_hi,
            })
        );
    } else {
        ctx.say(format!("q      = {:.6}", sol.q));
        ctx.say(format!("g      = [{}]", fmt_vec(&sol.g)));
        ctx.say(format!("theta  = [{}]", fmt_vec(&sol.theta)));
        ctx.say(format!("flow   = [{}]", fmt_vec(&sol.flow)));
        ctx.say(format!("mu_bal = [{}]", fmt_vec(&sol.mu_bal)));
        ctx.say(format!("nu_lo  = [{}]", fmt_vec(&sol.nu_lo)));
        ctx.say(format!("nu_hi  = [{}]", fmt_vec(&sol.nu_hi)));
    }
    Ok(())
}
