use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ingest::Quarter;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::network::{propagate_horizon, NodeGraph, NodeModel, Propagation, PropagationOptions, Shock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// One-step-ahead prediction of an observed quarter.
    Filter,
    /// k-step-ahead forecast beyond the data.
    Forecast,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Filter => "filter",
            StepKind::Forecast => "forecast",
        }
    }
}

/// One output record. `model` is "composite" (full propagation), "plain"
/// (target model with inputs at their means) or the id of a parent node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub scenario: String,
    pub quarter: String,
    pub step_kind: StepKind,
    pub model: String,
    pub mean: f64,
    pub variance: f64,
}

/// Labels for `horizon` forecast steps: consecutive quarters from `first`, or
/// "t+1", "t+2", … when no calendar is known.
pub fn step_labels(first: Option<Quarter>, horizon: usize) -> Vec<String> {
    match first {
        Some(q) => std::iter::successors(Some(q), |q| Some(q.next()))
            .take(horizon)
            .map(|q| q.to_string())
            .collect(),
        None => (1..=horizon).map(|k| format!("t+{k}")).collect(),
    }
}

/// Composite and plain rows for the graph target, optionally followed by the
/// target's non-exogenous parents.
pub fn rows_for_step(
    graph: &NodeGraph,
    prop: &Propagation,
    scenario: &str,
    quarter: &str,
    step_kind: StepKind,
    with_parents: bool,
) -> Result<Vec<ForecastRow>> {
    let target = graph.target();
    let row = |model: &str, mean: f64, variance: f64| ForecastRow {
        scenario: scenario.to_string(),
        quarter: quarter.to_string(),
        step_kind,
        model: model.to_string(),
        mean,
        variance,
    };
    let composite = prop
        .node(target)
        .ok_or_else(|| Error::Binding(format!("target '{target}' missing from propagation")))?;
    let mut rows = vec![row("composite", composite.mean, composite.variance)];
    if let Some(p) = prop.plain.get(target) {
        rows.push(row("plain", p.mean, p.variance));
    }
    if with_parents {
        let node = graph.node(target).expect("target exists");
        for parent in node.parents() {
            let pn = graph.node(parent).expect("validated");
            if matches!(pn.model, NodeModel::Exogenous) {
                continue;
            }
            let m = prop.node(parent).expect("every node is propagated");
            rows.push(row(parent, m.mean, m.variance));
        }
    }
    Ok(rows)
}

/// Propagates a scenario through `graph` over `horizon` steps. Scenario
/// factors and offsets on exogenous nodes transform their baseline paths;
/// on model nodes they become output shocks. Parameter overrides replace the
/// path of the exogenous node of that name.
pub fn scenario_propagation(
    graph: &NodeGraph,
    baseline: &BTreeMap<String, Vec<f64>>,
    scenario: &Scenario,
    horizon: usize,
    opts: &PropagationOptions,
) -> Result<Vec<Propagation>> {
    if horizon == 0 {
        return Err(Error::Validation("horizon must be ≥ 1".into()));
    }
    scenario.validate()?;
    let mut futures = BTreeMap::new();
    for id in graph.exogenous_ids() {
        let path = baseline
            .get(&id)
            .ok_or_else(|| Error::Validation(format!("no baseline path for exogenous series '{id}'")))?;
        if path.len() < horizon {
            return Err(Error::Validation(format!(
                "exogenous series '{id}' covers {} of {horizon} forecast steps",
                path.len()
            )));
        }
        futures.insert(id, path[..horizon].to_vec());
    }
    let mut opts = opts.clone();
    for name in scenario.series() {
        let (factor, offset) = scenario.transform(name);
        match graph.node(name).map(|n| &n.model) {
            Some(NodeModel::Exogenous) => {
                for v in futures.get_mut(name).expect("collected above") {
                    *v = factor * *v + offset;
                }
            }
            Some(_) => {
                opts.shocks.insert(name.clone(), Shock { factor, offset });
            }
            None => {
                return Err(Error::Validation(format!(
                    "scenario '{}' refers to unknown series '{name}'",
                    scenario.name
                )))
            }
        }
    }
    for (name, value) in &scenario.params {
        match futures.get_mut(name) {
            Some(path) => path.iter_mut().for_each(|v| *v = *value),
            None => {
                return Err(Error::Validation(format!(
                    "scenario '{}' overrides unknown parameter '{name}'",
                    scenario.name
                )))
            }
        }
    }
    propagate_horizon(graph, horizon, &futures, &opts).map_err(|e| e.context(format!("scenario '{}'", scenario.name)))
}

pub fn write_rows_csv<W: Write>(writer: W, rows: &[ForecastRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(reader: R) -> Result<Vec<ForecastRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
