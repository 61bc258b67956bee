use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uqnet::dlm::{PrecisionFitConfig, PrecisionPrior};
use uqnet::pipeline::{
    fit_case_study, ingest_path, write_rows_csv, CaseStudyConfig, CaseStudyData, DocumentKind, ForecastRow, ModelStore,
    Scenario, Schema,
};
use uqnet::simulators::{read_ensemble_csv, write_ensemble_csv, Simulator};
use uqnet::Error;
use uqnet_server::api::{
    self, DesignSource, FitDlmRequest, FitGpRequest, ForecastRequest, GraphRequest, ScenarioRequest, SimulatorSource,
};
use uqnet_server::http::DEFAULT_FIT_TIMEOUT;
use uqnet_server::ServerConfig;

#[derive(Parser)]
#[command(name = "uqnet", version, about = "Fit emulators and DLMs, link them into graphs, forecast with propagated uncertainty")]
struct Cli {
    /// Model store directory.
    #[arg(long, global = true, env = "UQNET_STORE_DIR", default_value = "uqnet-store")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a GP emulator and store it.
    FitGp(FitGpArgs),
    /// Fit a random-walk DLM and store it.
    FitDlm(FitDlmArgs),
    /// Store a graph over stored models.
    BuildGraph(BuildGraphArgs),
    /// Forecast a stored graph on its baseline paths.
    Forecast(ForecastArgs),
    /// Scenario analysis.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Leave-one-out diagnostics of a stored GP emulator.
    Diagnostics(DiagnosticsArgs),
    /// Run a simulator over a maximin Latin hypercube and write the runs as CSV.
    SimulateEnsemble(SimulateArgs),
    /// Fit the planning study's models and store them with their graph.
    CaseStudy(CaseStudyArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Forecast under a scenario: a stored graph (--model-id) or the study in --config.
    Run(ScenarioArgs),
}

#[derive(Args)]
struct FitGpArgs {
    /// Fit request as JSON (the body of POST /models/gp).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model_id: Option<String>,
    /// Simulator to run (or whose domains describe --ensemble).
    #[arg(long)]
    simulator: Option<Simulator>,
    #[arg(long)]
    runs: Option<usize>,
    /// Ensemble CSV as written by simulate-ensemble.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Seeds both the design and the hyperparameter search.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    overwrite: bool,
    /// Where to write the fit summary (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitDlmArgs {
    /// Either a fit request (the body of POST /models/dlm) or a CSV source.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    overwrite: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildGraphArgs {
    /// Graph request (the body of POST /graphs).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    overwrite: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    /// Graph id.
    #[arg(long)]
    model_id: String,
    #[arg(long)]
    horizon: Option<usize>,
    /// Forecast request (the body of POST /graphs/{id}/forecast).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also report the target's model parents.
    #[arg(long)]
    parents: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Stored graph to run.
    #[arg(long, conflicts_with = "config")]
    model_id: Option<String>,
    /// Study config; the models are fitted in memory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name or a JSON scenario request. Defaults to every configured
    /// scenario of the study, or scenario1 for a stored graph.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnosticsArgs {
    #[arg(long)]
    model_id: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    simulator: Simulator,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CaseStudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Graph id; the models are stored as <id>-heat_demand and so on.
    #[arg(long, default_value = "case-study")]
    model_id: String,
    /// Quarters of baseline paths stored with the graph (default: the config's horizon).
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    overwrite: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "UQNET_BIND_ADDR", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "UQNET_FIT_TIMEOUT_SECS", default_value_t = DEFAULT_FIT_TIMEOUT.as_secs())]
    fit_timeout_secs: u64,
    /// Browser origin allowed to call the API.
    #[arg(long, env = "UQNET_CORS_ORIGIN")]
    cors_origin: Option<String>,
}

/// DLM fit from a factor CSV: `target` regressed on `regressors` (column
/// names or "intercept"), in the schema's model units.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DlmCsvConfig {
    #[serde(default)]
    id: Option<String>,
    csv: PathBuf,
    schema: Schema,
    target: String,
    regressors: Vec<String>,
    #[serde(default)]
    prior: PrecisionPrior,
    #[serde(default)]
    fit: PrecisionFitConfig,
}

enum CliError {
    Core(Error),
    Usage(String),
    Io(io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_validation() || matches!(e.root(), Error::NotFound(_) | Error::AlreadyExists(_)) => 2,
            _ => 1,
        }
    }

    fn report(&self) -> String {
        match self {
            CliError::Core(e) => format!("error[{}]: {e}", e.code()),
            CliError::Usage(m) => format!("error[usage]: {m}"),
            CliError::Io(e) => format!("error[io_error]: {e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())).into())
}

fn output(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).map_err(|e| Error::from(e).context(format!("creating {}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    Ok(())
}

fn write_rows(out: Option<&Path>, rows: &[ForecastRow]) -> CliResult {
    write_rows_csv(output(out)?, rows)?;
    Ok(())
}

fn require_id(flag: Option<String>, config: Option<String>) -> CliResult<String> {
    flag.or(config)
        .ok_or_else(|| CliError::Usage("a model id is required (--model-id or \"id\" in the config)".into()))
}

fn open_store(dir: &Path) -> CliResult<ModelStore> {
    Ok(ModelStore::open(dir)?)
}

fn fit_gp(store: &Path, a: FitGpArgs) -> CliResult {
    let mut req: FitGpRequest = match &a.config {
        Some(p) => read_json(p)?,
        None => FitGpRequest {
            id: None,
            simulator: None,
            design: None,
            trend: uqnet::gp::TrendBasis::ConstantLinear,
            search: Default::default(),
            overwrite: false,
        },
    };
    match (&a.ensemble, a.simulator) {
        (Some(path), Some(sim)) => {
            let file = File::open(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
            let ens = read_ensemble_csv(file, sim.domains())?;
            req.simulator = None;
            req.design = Some(DesignSource {
                inputs: (0..ens.len()).map(|i| ens.x.row(i).iter().copied().collect()).collect(),
                outputs: ens.y,
                domains: ens.domains,
            });
        }
        (Some(_), None) => return Err(CliError::Usage("--ensemble needs --simulator for the input domains".into())),
        (None, Some(sim)) => {
            let runs = a
                .runs
                .or(req.simulator.as_ref().map(|s| s.runs))
                .ok_or_else(|| CliError::Usage("--simulator needs --runs".into()))?;
            req.design = None;
            req.simulator = Some(SimulatorSource {
                name: sim,
                runs,
                seed: a.seed.unwrap_or(0),
            });
        }
        (None, None) => {}
    }
    if let Some(seed) = a.seed {
        req.search.seed = seed;
        if let Some(s) = req.simulator.as_mut() {
            s.seed = seed;
        }
    }
    let id = require_id(a.model_id, req.id.clone())?;
    let overwrite = a.overwrite || req.overwrite;
    let store = open_store(store)?;
    api::check_free(&store, &id, DocumentKind::Gp, overwrite)?;
    let em = api::fit_gp_model(&req)?;
    store.save_gp(&id, &em, overwrite)?;
    write_json(a.out.as_deref(), &api::GpSummary::new(&id, &em))
}

fn dlm_request(path: &Path) -> CliResult<FitDlmRequest> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("csv").is_none() {
        return serde_json::from_value(value).map_err(|e| Error::Validation(format!("{}: {e}", path.display())).into());
    }
    let cfg: DlmCsvConfig =
        serde_json::from_value(value).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let csv = if cfg.csv.is_relative() {
        path.parent().unwrap_or_else(|| Path::new(".")).join(&cfg.csv)
    } else {
        cfg.csv.clone()
    };
    let series = ingest_path(&csv, cfg.schema)?;
    let columns = cfg
        .regressors
        .iter()
        .map(|n| if n == "intercept" { Ok(None) } else { series.column(n).map(Some) })
        .collect::<uqnet::Result<Vec<_>>>()?;
    Ok(FitDlmRequest {
        id: cfg.id.clone(),
        y: series.column(&cfg.target)?.iter().map(|v| Some(*v)).collect(),
        regressors: (0..series.len())
            .map(|t| columns.iter().map(|c| c.map_or(1.0, |c| c[t])).collect())
            .collect(),
        scale_factors: Some(cfg.regressors.iter().map(|n| series.scale_of(n)).collect()),
        regressor_names: cfg.regressors,
        prior: cfg.prior,
        fit: cfg.fit,
        overwrite: false,
    })
}

fn fit_dlm(store: &Path, a: FitDlmArgs) -> CliResult {
    let req = dlm_request(&a.config)?;
    let id = require_id(a.model_id, req.id.clone())?;
    let overwrite = a.overwrite || req.overwrite;
    let store = open_store(store)?;
    api::check_free(&store, &id, DocumentKind::Dlm, overwrite)?;
    let fitted = api::fit_dlm_model(&req)?;
    store.save_dlm(&id, &fitted.model, overwrite)?;
    write_json(a.out.as_deref(), &api::DlmSummary::new(&id, &fitted))
}

fn build_graph(store: &Path, a: BuildGraphArgs) -> CliResult {
    let mut req: GraphRequest = read_json(&a.config)?;
    if let Some(id) = a.model_id {
        req.id = id;
    }
    req.overwrite |= a.overwrite;
    let store = open_store(store)?;
    api::check_free(&store, &req.id, DocumentKind::Graph, req.overwrite)?;
    let (doc, summary) = api::check_graph(&store, &req)?;
    store.save_graph(&doc, req.overwrite)?;
    write_json(a.out.as_deref(), &summary)
}

fn forecast(store: &Path, a: ForecastArgs) -> CliResult {
    let mut req = match &a.config {
        Some(p) => read_json(p)?,
        None => ForecastRequest {
            horizon: 4,
            exogenous: Default::default(),
            options: Default::default(),
            parents: false,
        },
    };
    if let Some(h) = a.horizon {
        req.horizon = h;
    }
    req.parents |= a.parents;
    let rows = api::forecast(&open_store(store)?, &a.model_id, &req)?;
    write_rows(a.out.as_deref(), &rows)
}

/// A preset name, or a path to a JSON scenario request.
fn scenario_request(arg: &str, horizon: Option<usize>) -> CliResult<ScenarioRequest> {
    let mut req = if arg.ends_with(".json") {
        read_json(Path::new(arg))?
    } else {
        ScenarioRequest::preset(arg, 4)
    };
    if let Some(h) = horizon {
        req.horizon = h;
    }
    Ok(req)
}

fn scenario_run(store: &Path, a: ScenarioArgs) -> CliResult {
    if a.horizon == Some(0) {
        return Err(Error::Validation("horizon must be ≥ 1".into()).into());
    }
    let rows = match (&a.model_id, &a.config) {
        (Some(id), None) => {
            let req = scenario_request(a.scenario.as_deref().unwrap_or("scenario1"), a.horizon)?;
            api::scenario(&open_store(store)?, id, &req)?
        }
        (None, Some(path)) => {
            let cfg = CaseStudyConfig::load(path)?;
            let horizon = a.horizon.unwrap_or(cfg.horizon);
            let scenarios: Vec<Scenario> = match &a.scenario {
                Some(s) if s.ends_with(".json") => vec![scenario_request(s, Some(horizon))?.scenario()?],
                Some(s) => vec![cfg.scenario(s)?],
                None => cfg.scenarios.clone(),
            };
            let data = CaseStudyData::load(&cfg)?;
            let models = fit_case_study(&cfg, &data)?;
            let mut rows = Vec::new();
            for s in &scenarios {
                rows.extend(api::case_study_scenario(&cfg, &data, &models, s, horizon)?);
            }
            rows
        }
        _ => return Err(CliError::Usage("give --model-id (stored graph) or --config (study config)".into())),
    };
    write_rows(a.out.as_deref(), &rows)
}

fn diagnostics(store: &Path, a: DiagnosticsArgs) -> CliResult {
    let d = api::diagnostics(&open_store(store)?, &a.model_id)?;
    write_json(a.out.as_deref(), &d)
}

fn simulate(a: SimulateArgs) -> CliResult {
    let ens = a.simulator.ensemble(a.runs, a.seed)?;
    write_ensemble_csv(output(a.out.as_deref())?, &ens)?;
    Ok(())
}

fn case_study(store: &Path, a: CaseStudyArgs) -> CliResult {
    let cfg = CaseStudyConfig::load(&a.config)?;
    let horizon = a.horizon.unwrap_or(cfg.horizon);
    if horizon == 0 {
        return Err(Error::Validation("horizon must be ≥ 1".into()).into());
    }
    let store = open_store(store)?;
    let data = CaseStudyData::load(&cfg)?;
    let doc = api::case_study_document(&cfg, &data, &a.model_id, horizon)?;
    for (id, _) in api::case_study_ids(&a.model_id) {
        ModelStore::validate_id(&id)?;
    }
    let models = fit_case_study(&cfg, &data)?;
    let summary = api::store_case_study(&store, &doc, &models, a.overwrite)?;
    write_json(a.out.as_deref(), &summary)
}

fn serve(store: PathBuf, a: ServeArgs) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let cfg = ServerConfig {
        store_dir: store,
        bind: a.bind,
        fit_timeout: Duration::from_secs(a.fit_timeout_secs),
        cors_origin: a.cors_origin,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(uqnet_server::serve(cfg))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let store = cli.store;
    match cli.command {
        Command::FitGp(a) => fit_gp(&store, a),
        Command::FitDlm(a) => fit_dlm(&store, a),
        Command::BuildGraph(a) => build_graph(&store, a),
        Command::Forecast(a) => forecast(&store, a),
        Command::Scenario(ScenarioCommand::Run(a)) => scenario_run(&store, a),
        Command::Diagnostics(a) => diagnostics(&store, a),
        Command::SimulateEnsemble(a) => simulate(a),
        Command::CaseStudy(a) => case_study(&store, a),
        Command::Serve(a) => serve(store, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}
