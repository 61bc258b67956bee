//! Request and response types shared by the HTTP service and the CLI, and the
//! operations behind them. Both surfaces call these functions, so identical
//! inputs give identical numbers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use uqnet::dlm::{fit_random_walk, FittedDlm, PrecisionFitConfig, PrecisionPrior};
use uqnet::gp::{coverage, fit_gp, loo_diagnostics, Design, Diagnostic, Domain, GpEmulator, HyperparamSearchConfig, TrendBasis};
use uqnet::network::PropagationOptions;
use uqnet::pipeline::store::{NodeDocument, NodeType, DOCUMENT_VERSION};
use uqnet::pipeline::{
    baseline_futures, rows_for_step, scenario_propagation, step_labels, CaseStudyConfig, CaseStudyData,
    CaseStudyModels, DocumentKind, ForecastRow, GraphDocument, ModelStore, Quarter, Scenario, StepKind, COST_NODE,
    ELEC_NODE, ELEC_REGRESSORS, GAS_NODE, GAS_REGRESSORS, HEAT_NODE, PARAMS,
};
use uqnet::simulators::Simulator;
use uqnet::{Error, Result};

/// Scenario name used for plain forecasts.
pub const BASELINE: &str = "baseline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSource {
    pub name: Simulator,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Training runs given directly: one row of `inputs` per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSource {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub domains: Vec<Domain>,
}

/// Fit a GP emulator, either to a fresh simulator ensemble or to given runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitGpRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub simulator: Option<SimulatorSource>,
    #[serde(default)]
    pub design: Option<DesignSource>,
    #[serde(default = "default_trend")]
    pub trend: TrendBasis,
    #[serde(default)]
    pub search: HyperparamSearchConfig,
    #[serde(default)]
    pub overwrite: bool,
}

fn default_trend() -> TrendBasis {
    TrendBasis::ConstantLinear
}

impl FitGpRequest {
    pub fn design(&self) -> Result<Design> {
        match (&self.simulator, &self.design) {
            (Some(s), None) => s.name.ensemble(s.runs, s.seed)?.design(),
            (None, Some(d)) => Design::from_rows(&d.inputs, &d.outputs, d.domains.clone()),
            _ => Err(Error::Validation("give exactly one of 'simulator' and 'design'".into())),
        }
    }
}

/// Fit a random-walk DLM. Regressor rows are in model units (already
/// multiplied by `scale_factors`, which default to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDlmRequest {
    #[serde(default)]
    pub id: Option<String>,
    pub y: Vec<Option<f64>>,
    pub regressor_names: Vec<String>,
    pub regressors: Vec<Vec<f64>>,
    #[serde(default)]
    pub scale_factors: Option<Vec<f64>>,
    #[serde(default)]
    pub prior: PrecisionPrior,
    #[serde(default)]
    pub fit: PrecisionFitConfig,
    #[serde(default)]
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRequest {
    pub id: String,
    pub target: String,
    pub nodes: Vec<NodeDocument>,
    #[serde(default)]
    pub exogenous: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub first_quarter: Option<String>,
    #[serde(default)]
    pub overwrite: bool,
}

impl GraphRequest {
    pub fn document(&self) -> GraphDocument {
        GraphDocument {
            version: DOCUMENT_VERSION,
            kind: "graph".into(),
            id: self.id.clone(),
            target: self.target.clone(),
            nodes: self.nodes.clone(),
            exogenous: self.exogenous.clone(),
            first_quarter: self.first_quarter.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub horizon: usize,
    /// Replacement baseline paths for exogenous nodes.
    #[serde(default)]
    pub exogenous: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub options: PropagationOptions,
    /// Also report the target's model parents.
    #[serde(default)]
    pub parents: bool,
}

/// A preset by name, or a custom scenario when any of `factors`, `offsets`
/// or `params` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub name: String,
    pub horizon: usize,
    #[serde(default)]
    pub factors: BTreeMap<String, f64>,
    #[serde(default)]
    pub offsets: BTreeMap<String, f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub exogenous: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub options: PropagationOptions,
}

impl ScenarioRequest {
    pub fn preset(name: &str, horizon: usize) -> Self {
        Self {
            name: name.into(),
            horizon,
            factors: BTreeMap::new(),
            offsets: BTreeMap::new(),
            params: BTreeMap::new(),
            exogenous: BTreeMap::new(),
            options: PropagationOptions::default(),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        if self.factors.is_empty() && self.offsets.is_empty() && self.params.is_empty() {
            return Scenario::preset(&self.name);
        }
        Ok(Scenario {
            name: self.name.clone(),
            factors: self.factors.clone(),
            offsets: self.offsets.clone(),
            params: self.params.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSummary {
    pub id: String,
    pub kind: DocumentKind,
    pub runs: usize,
    pub inputs: usize,
    pub trend: TrendBasis,
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub log_posterior: Option<f64>,
}

impl GpSummary {
    pub fn new(id: &str, em: &GpEmulator) -> Self {
        Self {
            id: id.into(),
            kind: DocumentKind::Gp,
            runs: em.design().n(),
            inputs: em.input_dim(),
            trend: em.trend(),
            lengthscales: em.kernel().lengthscales.clone(),
            nugget: em.kernel().nugget,
            beta_hat: em.beta_hat().iter().copied().collect(),
            sigma2_hat: em.sigma2_hat(),
            log_posterior: em.fit_report().map(|r| r.log_posterior),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlmSummary {
    pub id: String,
    pub kind: DocumentKind,
    pub regressor_names: Vec<String>,
    #[serde(rename = "V")]
    pub v: f64,
    pub w: f64,
    pub observations: usize,
    pub log_posterior: f64,
    pub data_digest: String,
}

impl DlmSummary {
    pub fn new(id: &str, fitted: &FittedDlm) -> Self {
        Self {
            id: id.into(),
            kind: DocumentKind::Dlm,
            regressor_names: fitted.model.regressor_names.clone(),
            v: fitted.fit.v,
            w: fitted.fit.w,
            observations: fitted.states.len(),
            log_posterior: fitted.fit.log_posterior,
            data_digest: fitted.model.data_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub id: String,
    pub kind: DocumentKind,
    pub target: String,
    pub order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsResponse {
    pub id: String,
    pub kind: DocumentKind,
    /// Fraction of leave-one-out predictions within two sd.
    pub coverage: f64,
    pub rows: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub kind: DocumentKind,
}

/// Fails early when `id` is taken and the request does not allow overwriting.
pub fn check_free(store: &ModelStore, id: &str, kind: DocumentKind, overwrite: bool) -> Result<()> {
    ModelStore::validate_id(id)?;
    match store.kind_of(id) {
        Some(k) if !overwrite || k != kind => Err(Error::AlreadyExists(format!(
            "id '{id}' is already used by a {k:?} document"
        ))),
        _ => Ok(()),
    }
}

pub fn fit_gp_model(req: &FitGpRequest) -> Result<GpEmulator> {
    fit_gp(req.design()?, req.trend, &req.search)
}

pub fn fit_dlm_model(req: &FitDlmRequest) -> Result<FittedDlm> {
    if req.y.len() != req.regressors.len() {
        return Err(Error::dims("regressor rows", req.y.len(), req.regressors.len()));
    }
    if req.y.iter().all(Option::is_none) {
        return Err(Error::Validation("the series has no observations".into()));
    }
    let scales = req
        .scale_factors
        .clone()
        .unwrap_or_else(|| vec![1.0; req.regressor_names.len()]);
    fit_random_walk(req.regressor_names.clone(), scales, &req.y, &req.regressors, req.prior, req.fit)
}

/// Validates a graph request by building it against the stored models.
pub fn check_graph(store: &ModelStore, req: &GraphRequest) -> Result<(GraphDocument, GraphSummary)> {
    let doc = req.document();
    if let Some(q) = &doc.first_quarter {
        q.parse::<Quarter>()?;
    }
    let graph = doc.build(store)?;
    let summary = GraphSummary {
        id: doc.id.clone(),
        kind: DocumentKind::Graph,
        target: graph.target().to_string(),
        order: graph.order(),
    };
    Ok((doc, summary))
}

fn run_graph(
    store: &ModelStore,
    id: &str,
    scenario: &Scenario,
    horizon: usize,
    overrides: &BTreeMap<String, Vec<f64>>,
    opts: &PropagationOptions,
    parents: bool,
) -> Result<Vec<ForecastRow>> {
    if horizon == 0 {
        return Err(Error::Validation("horizon must be ≥ 1".into()));
    }
    let doc = store.load_graph(id)?;
    let graph = doc.build(store)?;
    let mut baseline = doc.exogenous.clone();
    for (name, path) in overrides {
        if !baseline.contains_key(name) && !graph.exogenous_ids().contains(name) {
            return Err(Error::Validation(format!("graph '{id}' has no exogenous node '{name}'")));
        }
        baseline.insert(name.clone(), path.clone());
    }
    let first = doc.first_quarter.as_deref().map(str::parse::<Quarter>).transpose()?;
    forecast_rows(&graph, &baseline, scenario, horizon, opts, first, parents)
}

fn forecast_rows(
    graph: &uqnet::network::NodeGraph,
    baseline: &BTreeMap<String, Vec<f64>>,
    scenario: &Scenario,
    horizon: usize,
    opts: &PropagationOptions,
    first: Option<Quarter>,
    parents: bool,
) -> Result<Vec<ForecastRow>> {
    let props = scenario_propagation(graph, baseline, scenario, horizon, opts)?;
    let mut rows = Vec::new();
    for (label, p) in step_labels(first, horizon).iter().zip(&props) {
        rows.extend(rows_for_step(graph, p, &scenario.name, label, StepKind::Forecast, parents)?);
    }
    Ok(rows)
}

/// k-step forecasts of a stored graph on its baseline paths.
pub fn forecast(store: &ModelStore, id: &str, req: &ForecastRequest) -> Result<Vec<ForecastRow>> {
    run_graph(
        store,
        id,
        &Scenario::identity(BASELINE),
        req.horizon,
        &req.exogenous,
        &req.options,
        req.parents,
    )
}

/// Composite, plain and parent forecasts of a stored graph under a scenario.
pub fn scenario(store: &ModelStore, id: &str, req: &ScenarioRequest) -> Result<Vec<ForecastRow>> {
    let s = req.scenario()?;
    run_graph(store, id, &s, req.horizon, &req.exogenous, &req.options, true)
}

/// Leave-one-out table of a stored GP emulator.
pub fn diagnostics(store: &ModelStore, id: &str) -> Result<DiagnosticsResponse> {
    match store.kind_of(id) {
        Some(DocumentKind::Gp) => {
            let rows = loo_diagnostics(&store.load_gp(id)?)?;
            Ok(DiagnosticsResponse {
                id: id.into(),
                kind: DocumentKind::Gp,
                coverage: coverage(&rows),
                rows,
            })
        }
        Some(k) => Err(Error::Unsupported(format!(
            "diagnostics are computed for GP emulators; '{id}' is a {k:?} document"
        ))),
        None => {
            ModelStore::validate_id(id)?;
            Err(Error::NotFound(format!("no model with id '{id}'")))
        }
    }
}

pub fn list(store: &ModelStore) -> Result<Vec<ModelEntry>> {
    Ok(store
        .list()?
        .into_iter()
        .map(|(id, kind)| ModelEntry { id, kind })
        .collect())
}

/// Ids under which [`store_case_study`] saves the study's models.
pub fn case_study_ids(graph_id: &str) -> [(String, &'static str); 4] {
    [HEAT_NODE, GAS_NODE, ELEC_NODE, COST_NODE].map(|node| (format!("{graph_id}-{node}"), node))
}

/// The study graph as a document over models stored under [`case_study_ids`],
/// with baseline paths for `horizon` quarters after the data.
pub fn case_study_document(
    cfg: &CaseStudyConfig,
    data: &CaseStudyData,
    graph_id: &str,
    horizon: usize,
) -> Result<GraphDocument> {
    let ids: BTreeMap<&str, String> = case_study_ids(graph_id).into_iter().map(|(id, node)| (node, id)).collect();
    let node = |id: &str, node_type: NodeType, inputs: &[&str]| NodeDocument {
        id: id.into(),
        model: ids.get(id).cloned(),
        node_type,
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
    };
    let mut nodes: Vec<NodeDocument> = ["hdd", "prod", "imports", "storage", "coal", "ets", "offshore_wind"]
        .iter()
        .chain(PARAMS.iter())
        .map(|id| node(id, NodeType::Exogenous, &[]))
        .collect();
    nodes.push(node(HEAT_NODE, NodeType::Gp, &["hdd", "efficiency", "transmission"]));
    nodes.push(node(GAS_NODE, NodeType::Dlm, &GAS_REGRESSORS));
    nodes.push(node(ELEC_NODE, NodeType::Dlm, &ELEC_REGRESSORS));
    nodes.push(node(
        COST_NODE,
        NodeType::Gp,
        &[HEAT_NODE, GAS_NODE, ELEC_NODE, "boiler_efficiency", "cop"],
    ));
    let mut exogenous = baseline_futures(cfg, data, horizon)?;
    exogenous.retain(|k, _| nodes.iter().any(|n| n.id == *k && n.node_type == NodeType::Exogenous));
    Ok(GraphDocument {
        version: DOCUMENT_VERSION,
        kind: "graph".into(),
        id: graph_id.into(),
        target: COST_NODE.into(),
        nodes,
        exogenous,
        first_quarter: data.quarters().last().map(|q| q.next().to_string()),
    })
}

/// Saves the four fitted study models and the graph linking them.
pub fn store_case_study(
    store: &ModelStore,
    doc: &GraphDocument,
    models: &CaseStudyModels,
    overwrite: bool,
) -> Result<GraphSummary> {
    let [heat, gas, elec, cost] = case_study_ids(&doc.id).map(|(id, _)| id);
    for (id, kind) in [
        (&heat, DocumentKind::Gp),
        (&gas, DocumentKind::Dlm),
        (&elec, DocumentKind::Dlm),
        (&cost, DocumentKind::Gp),
        (&doc.id, DocumentKind::Graph),
    ] {
        check_free(store, id, kind, overwrite)?;
    }
    store.save_gp(&heat, &models.heat, overwrite)?;
    store.save_dlm(&gas, &models.gas.model, overwrite)?;
    store.save_dlm(&elec, &models.elec.model, overwrite)?;
    store.save_gp(&cost, &models.cost, overwrite)?;
    store.save_graph(doc, overwrite)?;
    let graph = doc.build(store)?;
    Ok(GraphSummary {
        id: doc.id.clone(),
        kind: DocumentKind::Graph,
        target: graph.target().to_string(),
        order: graph.order(),
    })
}

/// Forecast rows of the study graph under `scenario`, from models fitted in
/// memory rather than loaded from a store.
pub fn case_study_scenario(
    cfg: &CaseStudyConfig,
    data: &CaseStudyData,
    models: &CaseStudyModels,
    scenario: &Scenario,
    horizon: usize,
) -> Result<Vec<ForecastRow>> {
    let graph = models.graph()?;
    let baseline = baseline_futures(cfg, data, horizon)?;
    let first = data.quarters().last().map(|q| q.next());
    forecast_rows(&graph, &baseline, scenario, horizon, &cfg.options(), first, true)
}
