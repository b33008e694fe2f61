//! Command-line front end. `run` parses arguments, dispatches and maps
//! errors to exit codes: 0 success, 1 usage, 2 data, 3 estimation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bootstrap::{bootstrap_variance, BootstrapResult};
use crate::data::{parse_sample, SampleMeta, StratifiedSample};
use crate::error::{Error, ErrorKind, Result};
use crate::estimate::{cell_means, estimate, fit_mpele, overall_mean, simple_estimators};
use crate::impute::{impute, post_imputation_estimates, ImputationMethod};
use crate::model::{CategoryModel, ModelConfig, ProportionalOddsModel};
use crate::optimize::SearchConfig;
use crate::simulation::{run_study, PopulationMode, SimulationConfig};

#[derive(Debug, Parser)]
#[command(name = "pelsurv", version, about = "Pseudo empirical likelihood estimation for stratified samples with nonresponse")]
pub struct Cli {
    /// Worker threads for bootstrap and simulation.
    #[arg(long, global = true, env = "PELSURV_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Input {
    /// Sample CSV with columns stratum,weight,z,y.
    #[arg(long)]
    pub data: PathBuf,
    /// Stratum sizes and category labels (JSON).
    #[arg(long)]
    pub meta: PathBuf,
    /// Category model (JSON); defaults to proportional odds with cutpoints 1..s-1.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Optimizer settings (JSON).
    #[arg(long)]
    pub optimizer: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and report point estimates.
    Estimate {
        #[command(flatten)]
        input: Input,
        /// Add bootstrap variances with this many replicates.
        #[arg(long = "B")]
        b: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill in missing y values.
    Impute {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_parser = parse_method)]
        method: ImputationMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bootstrap variances and confidence intervals.
    Bootstrap {
        #[command(flatten)]
        input: Input,
        #[arg(long = "B", default_value_t = 200)]
        b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also bootstrap estimators after imputation with these methods.
        #[arg(long, value_parser = parse_method, value_delimiter = ',')]
        method: Vec<ImputationMethod>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Monte Carlo study.
    Simulate {
        /// Study configuration (JSON); flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gamma: Vec<f64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long = "B")]
        b: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_population_mode)]
        population_mode: Option<PopulationMode>,
        /// JSON report; the text table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the text table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> std::result::Result<ImputationMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_population_mode(s: &str) -> std::result::Result<PopulationMode, String> {
    match s {
        "fixed" => Ok(PopulationMode::Fixed),
        "regenerated" => Ok(PopulationMode::Regenerated),
        _ => Err(format!("unknown population mode {s:?}")),
    }
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Estimation => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(stdout, "{e}");
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { 0 };
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let _ = writeln!(stderr, "{}", line.trim());
            return 1;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.to_string().replace('\n', " "));
            exit_code(e.kind())
        }
    }
}

/// One artifact produced by a command; `None` means stdout.
struct Output {
    path: Option<PathBuf>,
    contents: Vec<u8>,
}

impl Output {
    fn to(path: Option<PathBuf>, contents: Vec<u8>) -> Self {
        Output { path, contents }
    }
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let command = cli.command;
    let outputs = match cli.threads {
        Some(0) => return Err(Error::InvalidConfig("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(|| dispatch(command))?,
        None => dispatch(command)?,
    };
    for o in outputs {
        write_output(o.path.as_deref(), stdout, &o.contents)?;
    }
    Ok(())
}

struct Loaded {
    sample: StratifiedSample,
    model: ProportionalOddsModel,
    search: SearchConfig,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn load(input: &Input) -> Result<Loaded> {
    let meta = SampleMeta::from_json(&read_text(&input.meta)?)?;
    let file = fs::File::open(&input.data)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", input.data.display())))?;
    let sample = parse_sample(file, &meta)?;
    let model_config = match &input.model {
        Some(p) => ModelConfig::from_json(&read_text(p)?)?,
        None => ModelConfig::standard(sample.num_categories()),
    };
    let model = model_config.build(sample.num_categories())?;
    let search = match &input.optimizer {
        Some(p) => serde_json::from_str::<SearchConfig>(&read_text(p)?)
            .map_err(|e| Error::InvalidConfig(format!("optimizer: {e}")))?,
        None => SearchConfig::default(),
    }
    .fitted_to(model.param_dim());
    search.validate()?;
    Ok(Loaded { sample, model, search })
}

/// Writes to `path` through a temporary file in the same directory, or to
/// `stdout` when no path is given.
pub fn write_output(path: Option<&Path>, stdout: &mut dyn Write, contents: &[u8]) -> Result<()> {
    match path {
        None => {
            stdout.write_all(contents)?;
            stdout.flush()?;
        }
        Some(p) => {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(contents)?;
            tmp.as_file().sync_all()?;
            tmp.persist(p).map_err(|e| e.error)?;
        }
    }
    Ok(())
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json serializes");
    out.push(b'\n');
    out
}

/// Statistic names for a data bootstrap: `beta` (or `beta_k`), `Y`, `Y_<label>`,
/// the simple estimators, then one block per imputation method.
pub fn statistic_names(sample: &StratifiedSample, param_dim: usize, methods: &[ImputationMethod]) -> Vec<String> {
    let mut names = Vec::new();
    if param_dim == 1 {
        names.push("beta".to_string());
    } else {
        names.extend((1..=param_dim).map(|k| format!("beta_{k}")));
    }
    let labels = sample.categories().labels();
    let block = |prefix: &str, names: &mut Vec<String>| {
        names.push(format!("{prefix}Y"));
        names.extend(labels.iter().map(|l| format!("{prefix}Y_{l}")));
    };
    block("", &mut names);
    block("simple.", &mut names);
    for m in methods {
        block(&format!("{}.", m.name()), &mut names);
    }
    names
}

/// Values in the order of [`statistic_names`]. A failed fit is an error; a
/// simple or imputed estimator that cannot be computed gives `NaN`.
pub fn data_statistics(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    search: &SearchConfig,
    methods: &[ImputationMethod],
    imputation_seed: u64,
) -> Result<Vec<f64>> {
    sample.check_respondents()?;
    let s = sample.num_categories();
    let fit = fit_mpele(sample, model, search)?;
    let mut out = fit.params.0.clone();
    out.push(overall_mean(&fit.weights, sample)?);
    out.extend(cell_means(&fit.weights, sample, model, &fit.params)?);
    let mut block = |est: Result<(f64, Vec<f64>)>| match est {
        Ok((y, cells)) => {
            out.push(y);
            out.extend(cells);
        }
        Err(_) => out.extend(std::iter::repeat_n(f64::NAN, s + 1)),
    };
    block(simple_estimators(sample).map(|e| (e.overall, e.cell_means)));
    for &m in methods {
        let est = impute(m, sample, Some((model, &fit.params, &fit.weights)), imputation_seed)
            .and_then(|imp| post_imputation_estimates(&imp))
            .map(|e| (e.overall, e.cell_means));
        block(est);
    }
    Ok(out)
}

/// Bootstraps every statistic of [`statistic_names`].
pub fn bootstrap_sample(
    sample: &StratifiedSample,
    model: &dyn CategoryModel,
    search: &SearchConfig,
    methods: &[ImputationMethod],
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let names = statistic_names(sample, model.param_dim(), methods);
    let point = data_statistics(sample, model, search, methods, seed)?;
    let warm = search.clone().with_initial(crate::model::ModelParams(point[..model.param_dim()].to_vec()));
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    bootstrap_variance(
        sample,
        &refs,
        &point,
        |rep, rep_seed| data_statistics(rep, model, &warm, methods, rep_seed),
        b,
        seed,
    )
}

fn dispatch(command: Command) -> Result<Vec<Output>> {
    match command {
        Command::Estimate { input, b, seed, out } => {
            let l = load(&input)?;
            let report = estimate(&l.sample, &l.model, &l.search)?;
            let mut json = report.to_json_value();
            if let Some(b) = b {
                if b < 2 {
                    return Err(Error::InvalidConfig("--B must be at least 2".into()));
                }
                let boot = bootstrap_sample(&l.sample, &l.model, &l.search, &[], b, seed)?;
                json["bootstrap"] = boot.to_json_value();
            }
            Ok(vec![Output::to(out, json_bytes(&json))])
        }
        Command::Impute { input, method, seed, out } => {
            let l = load(&input)?;
            let imputed = if method.uses_model() {
                let fit = fit_mpele(&l.sample, &l.model, &l.search)?;
                impute(method, &l.sample, Some((&l.model, &fit.params, &fit.weights)), seed)?
            } else {
                l.sample.check_respondents()?;
                impute(method, &l.sample, None, seed)?
            };
            let mut buf = Vec::new();
            imputed.write_csv(&mut buf)?;
            Ok(vec![Output::to(out, buf)])
        }
        Command::Bootstrap { input, b, seed, method, out } => {
            if b < 2 {
                return Err(Error::InvalidConfig("--B must be at least 2".into()));
            }
            let l = load(&input)?;
            let boot = bootstrap_sample(&l.sample, &l.model, &l.search, &method, b, seed)?;
            Ok(vec![Output::to(out, json_bytes(&boot.to_json_value()))])
        }
        Command::Simulate { config, gamma, replicates, b, seed, population_mode, out, table } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_str::<SimulationConfig>(&read_text(&p)?)
                    .map_err(|e| Error::InvalidConfig(format!("simulation config: {e}")))?,
                None => SimulationConfig::default(),
            };
            if !gamma.is_empty() {
                cfg.gammas = gamma;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(b) = b {
                cfg.b = b;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = population_mode {
                cfg.population_mode = m;
            }
            let report = run_study(&cfg)?;
            let rendered = report.render_table().into_bytes();
            let mut outputs = Vec::new();
            if out.is_some() {
                let mut json = report.to_json().into_bytes();
                json.push(b'\n');
                outputs.push(Output::to(out, json));
            }
            if table.is_some() {
                outputs.push(Output::to(table, rendered.clone()));
            }
            outputs.push(Output::to(None, rendered));
            Ok(outputs)
        }
    }
}
