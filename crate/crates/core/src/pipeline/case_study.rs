//! The heat-network planning study: two simulator emulators, two price DLMs
//! and the graph that links them into a forecast of quarterly operating cost.
//!
//! ```text
//! hdd, efficiency, transmission ──► heat_demand (GP) ─────────────┐
//! prod, imports, storage, coal ──► gas_price (DLM) ──┬────────────┤
//!                      ets, offshore_wind ──► elec_price (DLM) ───┼──► cost (GP)
//!                                     boiler_efficiency, cop ─────┘
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forecast::{rows_for_step, scenario_propagation, step_labels, ForecastRow, StepKind};
use super::ingest::{ingest_path, Quarter, QuarterSeries, Schema};
use super::scenario::Scenario;
use crate::dlm::{fit_random_walk, FittedDlm, PrecisionFitConfig, PrecisionPrior};
use crate::error::{Error, Result};
use crate::gp::{fit_gp, holdout_diagnostics, Diagnostic, GpEmulator, HyperparamSearchConfig, TrendBasis};
use crate::network::{propagate, Node, NodeGraph, Propagation, PropagationOptions, ShockSide, StepInputs};
use crate::simulators::Simulator;

pub const HEAT_NODE: &str = "heat_demand";
pub const GAS_NODE: &str = "gas_price";
pub const ELEC_NODE: &str = "elec_price";
pub const COST_NODE: &str = "cost";
pub const PARAMS: [&str; 4] = ["efficiency", "transmission", "boiler_efficiency", "cop"];
pub const GAS_REGRESSORS: [&str; 5] = ["intercept", "prod", "imports", "storage", "coal"];
pub const ELEC_REGRESSORS: [&str; 4] = ["intercept", "gas_price", "ets", "offshore_wind"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub runs: usize,
    pub train: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub gas_factors: PathBuf,
    pub elec_factors: PathBuf,
    #[serde(default = "default_heat")]
    pub heat: EnsembleConfig,
    #[serde(default = "default_cost")]
    pub cost: EnsembleConfig,
    #[serde(default)]
    pub gp_search: HyperparamSearchConfig,
    #[serde(default)]
    pub dlm_prior: PrecisionPrior,
    /// Heating degree days for Q1..Q4.
    pub hdd_by_quarter: [f64; 4],
    /// efficiency, transmission, boiler_efficiency and cop.
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "Scenario::presets")]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub shock_side: ShockSide,
    #[serde(default = "default_scale")]
    pub parent_variance_scale: f64,
}

fn default_heat() -> EnsembleConfig {
    EnsembleConfig {
        runs: 100,
        train: 80,
        seed: 1,
    }
}

fn default_cost() -> EnsembleConfig {
    EnsembleConfig {
        runs: 160,
        train: 120,
        seed: 2,
    }
}

fn default_horizon() -> usize {
    4
}

fn default_scale() -> f64 {
    1.0
}

impl CaseStudyConfig {
    /// Reads a JSON config; data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading config {}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.gas_factors, &mut cfg.elec_factors] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for name in PARAMS {
            if !self.params.contains_key(name) {
                return Err(Error::Validation(format!("config params is missing '{name}'")));
            }
        }
        if let Some(k) = self.params.keys().find(|k| !PARAMS.contains(&k.as_str())) {
            return Err(Error::Validation(format!("config params has unknown entry '{k}'")));
        }
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be ≥ 1".into()));
        }
        for e in [&self.heat, &self.cost] {
            if e.train == 0 || e.train > e.runs {
                return Err(Error::Validation(format!(
                    "training split {} must be in 1..={}",
                    e.train, e.runs
                )));
            }
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        Ok(())
    }

    pub fn scenario(&self, name: &str) -> Result<Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .cloned()
            .map_or_else(|| Scenario::preset(name), Ok)
    }

    pub fn hdd(&self, q: Quarter) -> f64 {
        self.hdd_by_quarter[usize::from(q.quarter) - 1]
    }

    pub fn options(&self) -> PropagationOptions {
        PropagationOptions {
            parent_variance_scale: self.parent_variance_scale,
            shock_side: self.shock_side,
            ..Default::default()
        }
    }
}

/// Both factor files over the same quarters.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyData {
    pub gas: QuarterSeries,
    pub elec: QuarterSeries,
}

impl CaseStudyData {
    pub fn new(gas: QuarterSeries, elec: QuarterSeries) -> Result<Self> {
        if gas.quarters != elec.quarters {
            return Err(Error::Validation(format!(
                "gas factors cover {}..{} but electricity factors cover {}..{}",
                gas.quarters[0],
                gas.quarters[gas.len() - 1],
                elec.quarters[0],
                elec.quarters[elec.len() - 1]
            )));
        }
        Ok(Self { gas, elec })
    }

    pub fn load(cfg: &CaseStudyConfig) -> Result<Self> {
        Self::new(
            ingest_path(&cfg.gas_factors, Schema::GasFactors)?,
            ingest_path(&cfg.elec_factors, Schema::ElecFactors)?,
        )
    }

    pub fn quarters(&self) -> &[Quarter] {
        &self.gas.quarters
    }

    fn rows(series: &QuarterSeries, names: &[&str]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<Option<&[f64]>> = names
            .iter()
            .map(|n| if *n == "intercept" { Ok(None) } else { series.column(n).map(Some) })
            .collect::<Result<_>>()?;
        Ok((0..series.len())
            .map(|t| cols.iter().map(|c| c.map_or(1.0, |c| c[t])).collect())
            .collect())
    }

    fn scales(series: &QuarterSeries, names: &[&str]) -> Vec<f64> {
        names.iter().map(|n| series.scale_of(n)).collect()
    }

    /// Observed values of every exogenous series of the graph, plus both prices.
    pub fn history(&self) -> BTreeMap<String, Vec<f64>> {
        let mut h = BTreeMap::new();
        for s in [&self.gas, &self.elec] {
            for (k, v) in &s.columns {
                h.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        h
    }
}

/// Everything fitted for the study.
#[derive(Debug, Clone)]
pub struct CaseStudyModels {
    pub heat: GpEmulator,
    pub cost: GpEmulator,
    pub gas: FittedDlm,
    pub elec: FittedDlm,
    pub heat_validation: Vec<Diagnostic>,
    pub cost_validation: Vec<Diagnostic>,
}

fn fit_emulator(sim: Simulator, e: &EnsembleConfig, search: &HyperparamSearchConfig) -> Result<(GpEmulator, Vec<Diagnostic>)> {
    let ensemble = sim.ensemble(e.runs, e.seed)?;
    let (train, validation) = ensemble.split(e.train)?;
    let search = HyperparamSearchConfig {
        seed: e.seed,
        ..*search
    };
    let em = fit_gp(train.design()?, TrendBasis::ConstantLinear, &search)
        .map_err(|err| err.context(format!("fitting the {} emulator", sim.output_name())))?;
    let diags = if validation.is_empty() {
        Vec::new()
    } else {
        holdout_diagnostics(&em, &validation.design()?)?
    };
    Ok((em, diags))
}

pub fn fit_dlms(data: &CaseStudyData, prior: PrecisionPrior) -> Result<(FittedDlm, FittedDlm)> {
    let fit = |series: &QuarterSeries, target: &str, names: &[&str]| -> Result<FittedDlm> {
        let ys: Vec<Option<f64>> = series.column(target)?.iter().map(|v| Some(*v)).collect();
        fit_random_walk(
            names.iter().map(|s| s.to_string()).collect(),
            CaseStudyData::scales(series, names),
            &ys,
            &CaseStudyData::rows(series, names)?,
            prior,
            PrecisionFitConfig::default(),
        )
        .map_err(|e| e.context(format!("fitting the {target} DLM")))
    };
    Ok((
        fit(&data.gas, GAS_NODE, &GAS_REGRESSORS)?,
        fit(&data.elec, ELEC_NODE, &ELEC_REGRESSORS)?,
    ))
}

/// Fits both emulators (on fresh simulator ensembles) and both DLMs.
pub fn fit_case_study(cfg: &CaseStudyConfig, data: &CaseStudyData) -> Result<CaseStudyModels> {
    let (heat, cost) = rayon::join(
        || fit_emulator(Simulator::HeatDemand, &cfg.heat, &cfg.gp_search),
        || fit_emulator(Simulator::Dispatch, &cfg.cost, &cfg.gp_search),
    );
    let ((heat, heat_validation), (cost, cost_validation)) = (heat?, cost?);
    let (gas, elec) = fit_dlms(data, cfg.dlm_prior)?;
    Ok(CaseStudyModels {
        heat,
        cost,
        gas,
        elec,
        heat_validation,
        cost_validation,
    })
}

/// The study graph over the fitted models.
pub fn case_study_graph(
    heat: Arc<GpEmulator>,
    cost: Arc<GpEmulator>,
    gas: Arc<crate::dlm::DlmModel>,
    elec: Arc<crate::dlm::DlmModel>,
) -> Result<NodeGraph> {
    let mut nodes: Vec<Node> = ["hdd", "prod", "imports", "storage", "coal", "ets", "offshore_wind"]
        .iter()
        .chain(PARAMS.iter())
        .map(|id| Node::exogenous(*id))
        .collect();
    nodes.push(Node::gp(HEAT_NODE, heat, &["hdd", "efficiency", "transmission"]));
    nodes.push(Node::dlm(GAS_NODE, gas, &GAS_REGRESSORS));
    nodes.push(Node::dlm(ELEC_NODE, elec, &ELEC_REGRESSORS));
    nodes.push(Node::gp(
        COST_NODE,
        cost,
        &[HEAT_NODE, GAS_NODE, ELEC_NODE, "boiler_efficiency", "cop"],
    ));
    NodeGraph::new(nodes, COST_NODE)
}

impl CaseStudyModels {
    pub fn graph(&self) -> Result<NodeGraph> {
        case_study_graph(
            Arc::new(self.heat.clone()),
            Arc::new(self.cost.clone()),
            Arc::new(self.gas.model.clone()),
            Arc::new(self.elec.model.clone()),
        )
    }
}

/// One-step-ahead propagation at every observed quarter. Each DLM node uses
/// its prior (a(t), R(t)) from the filter run over the data.
pub fn filter_propagations(
    cfg: &CaseStudyConfig,
    data: &CaseStudyData,
    models: &CaseStudyModels,
    graph: &NodeGraph,
    opts: &PropagationOptions,
) -> Result<Vec<(Quarter, Propagation)>> {
    let history = data.history();
    data.quarters()
        .par_iter()
        .enumerate()
        .map(|(t, &q)| {
            let mut exogenous: HashMap<String, f64> = cfg.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
            exogenous.insert("hdd".into(), cfg.hdd(q));
            for id in ["prod", "imports", "storage", "coal", "ets", "offshore_wind"] {
                exogenous.insert(id.into(), history[id][t]);
            }
            let prior = |f: &FittedDlm| f.states[t].prior.clone().expect("filtered states carry priors");
            let step = StepInputs {
                exogenous,
                dlm_states: [
                    (GAS_NODE.to_string(), prior(&models.gas)),
                    (ELEC_NODE.to_string(), prior(&models.elec)),
                ]
                .into_iter()
                .collect(),
            };
            let p = propagate(graph, &step, opts).map_err(|e| e.context(format!("quarter {q}")))?;
            Ok((q, p))
        })
        .collect()
}

/// Baseline future paths for the study's exogenous nodes: observed series
/// carried forward from their last value, HDD by quarter of year, and the
/// configured parameters held constant.
pub fn baseline_futures(cfg: &CaseStudyConfig, data: &CaseStudyData, horizon: usize) -> Result<BTreeMap<String, Vec<f64>>> {
    let last = data
        .quarters()
        .last()
        .copied()
        .ok_or_else(|| Error::Validation("no observed quarters".into()))?;
    let mut out = super::scenario::carry_forward(&data.history(), horizon)?;
    out.insert("hdd".into(), last.following(horizon).iter().map(|q| cfg.hdd(*q)).collect());
    for (k, v) in &cfg.params {
        out.insert(k.clone(), vec![*v; horizon]);
    }
    Ok(out)
}

/// Output of a full study run.
#[derive(Debug, Clone)]
pub struct CaseStudyRun {
    pub models: CaseStudyModels,
    pub rows: Vec<ForecastRow>,
}

/// Rows for each scenario: one-step predictions over the observed quarters
/// (scenarios only act over the horizon, so these are shared) followed by
/// k-step forecasts.
pub fn scenario_rows(
    cfg: &CaseStudyConfig,
    data: &CaseStudyData,
    models: &CaseStudyModels,
    scenarios: &[Scenario],
    horizon: usize,
    opts: &PropagationOptions,
) -> Result<Vec<ForecastRow>> {
    let graph = models.graph()?;
    let filtered = filter_propagations(cfg, data, models, &graph, opts)?;
    let baseline = baseline_futures(cfg, data, horizon)?;
    let labels = step_labels(data.quarters().last().map(|q| q.next()), horizon);
    let per_scenario: Vec<Vec<ForecastRow>> = scenarios
        .par_iter()
        .map(|s| {
            let mut rows = Vec::new();
            for (q, p) in &filtered {
                rows.extend(rows_for_step(&graph, p, &s.name, &q.to_string(), StepKind::Filter, false)?);
            }
            let props = scenario_propagation(&graph, &baseline, s, horizon, opts)?;
            for (label, p) in labels.iter().zip(&props) {
                rows.extend(rows_for_step(&graph, p, &s.name, label, StepKind::Forecast, false)?);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_scenario.into_iter().flatten().collect())
}

/// Loads the data, fits every model and runs every configured scenario.
pub fn run_case_study(cfg: &CaseStudyConfig) -> Result<CaseStudyRun> {
    cfg.validate()?;
    let data = CaseStudyData::load(cfg)?;
    let models = fit_case_study(cfg, &data)?;
    let rows = scenario_rows(cfg, &data, &models, &cfg.scenarios, cfg.horizon, &cfg.options())?;
    Ok(CaseStudyRun { models, rows })
}
