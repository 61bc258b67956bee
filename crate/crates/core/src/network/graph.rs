use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linked::linked_gp_moments;
use super::mdm::mdm_moments;
use crate::dlm::{forecast_states, DlmModel, StateMoments};
use crate::error::{Error, Result};
use crate::gp::{GpEmulator, Prediction};
use crate::moments::GaussianMoments;

/// What feeds one input of a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Input {
    Node(String),
    /// The constant 1 (DLM regressors only).
    Intercept,
}

impl Input {
    pub fn parse(s: &str) -> Self {
        if s == "intercept" {
            Input::Intercept
        } else {
            Input::Node(s.to_string())
        }
    }
}

#[derive(Debug, Clone)]
pub enum NodeModel {
    /// Known value per step, supplied at propagation time under the node id.
    Exogenous,
    Gp(Arc<GpEmulator>),
    Dlm(Arc<DlmModel>),
}

impl NodeModel {
    pub fn kind(&self) -> &'static str {
        match self {
            NodeModel::Exogenous => "exogenous",
            NodeModel::Gp(_) => "gp",
            NodeModel::Dlm(_) => "dlm",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub model: NodeModel,
    /// One entry per GP input or DLM regressor, in model order.
    pub inputs: Vec<Input>,
}

impl Node {
    pub fn exogenous(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            model: NodeModel::Exogenous,
            inputs: Vec::new(),
        }
    }

    pub fn gp(id: impl Into<String>, em: Arc<GpEmulator>, inputs: &[&str]) -> Self {
        Self {
            id: id.into(),
            model: NodeModel::Gp(em),
            inputs: inputs.iter().map(|s| Input::parse(s)).collect(),
        }
    }

    pub fn dlm(id: impl Into<String>, model: Arc<DlmModel>, regressors: &[&str]) -> Self {
        Self {
            id: id.into(),
            model: NodeModel::Dlm(model),
            inputs: regressors.iter().map(|s| Input::parse(s)).collect(),
        }
    }

    /// Ids of the nodes feeding this one, in input order.
    pub fn parents(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().filter_map(|i| match i {
            Input::Node(id) => Some(id.as_str()),
            Input::Intercept => None,
        })
    }
}

/// A validated feed-forward graph with its nodes stored in topological order.
#[derive(Debug, Clone)]
pub struct NodeGraph {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    target: String,
}

impl NodeGraph {
    /// Validates bindings and sorts topologically; among nodes that are ready
    /// at the same time, declaration order is kept.
    pub fn new(nodes: Vec<Node>, target: impl Into<String>) -> Result<Self> {
        let target = target.into();
        let mut declared = HashMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if node.id.is_empty() || node.id == "intercept" {
                return Err(Error::Binding(format!("invalid node id '{}'", node.id)));
            }
            if declared.insert(node.id.clone(), i).is_some() {
                return Err(Error::Binding(format!("duplicate node id '{}'", node.id)));
            }
        }
        for node in &nodes {
            let expected = match &node.model {
                NodeModel::Exogenous => 0,
                NodeModel::Gp(em) => em.input_dim(),
                NodeModel::Dlm(m) => m.dim(),
            };
            if node.inputs.len() != expected {
                return Err(Error::Binding(format!(
                    "node '{}' binds {} inputs but its {} model takes {expected}",
                    node.id,
                    node.inputs.len(),
                    node.model.kind()
                )));
            }
            if matches!(node.model, NodeModel::Gp(_)) && node.inputs.contains(&Input::Intercept) {
                return Err(Error::Binding(format!(
                    "node '{}': 'intercept' can only bind a DLM regressor",
                    node.id
                )));
            }
            for p in node.parents() {
                if !declared.contains_key(p) {
                    return Err(Error::Binding(format!(
                        "node '{}' refers to unknown node '{p}'",
                        node.id
                    )));
                }
                if p == node.id {
                    return Err(Error::Binding(format!("node '{p}' feeds itself")));
                }
            }
        }
        if !declared.contains_key(&target) {
            return Err(Error::Binding(format!("target node '{target}' is not defined")));
        }

        let mut placed = vec![false; nodes.len()];
        let mut order = Vec::with_capacity(nodes.len());
        while order.len() < nodes.len() {
            let ready = (0..nodes.len()).find(|&i| {
                !placed[i] && nodes[i].parents().all(|p| placed[declared[p]])
            });
            match ready {
                Some(i) => {
                    placed[i] = true;
                    order.push(i);
                }
                None => {
                    let stuck: Vec<&str> = (0..nodes.len())
                        .filter(|&i| !placed[i])
                        .map(|i| nodes[i].id.as_str())
                        .collect();
                    return Err(Error::Binding(format!(
                        "graph has a cycle through [{}]",
                        stuck.join(", ")
                    )));
                }
            }
        }
        let mut slots: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<Node> = order.iter().map(|&i| slots[i].take().expect("placed once")).collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        Ok(Self { nodes, index, target })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn order(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    pub fn exogenous_ids(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.model, NodeModel::Exogenous))
            .map(|n| n.id.clone())
            .collect()
    }
}

/// Affine transform y ↦ factor·y + offset applied to a node's output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub factor: f64,
    #[serde(default)]
    pub offset: f64,
}

impl Shock {
    pub fn scale(factor: f64) -> Self {
        Self { factor, offset: 0.0 }
    }
}

/// Where a node shock takes effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockSide {
    /// The shocked law is what GP consumers see and what is reported; DLM
    /// regressions on the node keep the unshocked value.
    #[default]
    Output,
    /// Only DLM regressions on the node see the shock.
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationOptions {
    /// Multiplies the covariance of every node's input law (cross-covariances
    /// by its square root). 0 propagates means only; 1 is the full model.
    pub parent_variance_scale: f64,
    pub shocks: BTreeMap<String, Shock>,
    pub shock_side: ShockSide,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            parent_variance_scale: 1.0,
            shocks: BTreeMap::new(),
            shock_side: ShockSide::Output,
        }
    }
}

impl PropagationOptions {
    fn validate(&self, graph: &NodeGraph) -> Result<()> {
        let a = self.parent_variance_scale;
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::Validation(format!(
                "parent variance scale must be non-negative, got {a}"
            )));
        }
        for (id, s) in &self.shocks {
            if graph.node(id).is_none() {
                return Err(Error::Binding(format!("shock targets unknown node '{id}'")));
            }
            if !(s.factor.is_finite() && s.factor > 0.0 && s.offset.is_finite()) {
                return Err(Error::Validation(format!(
                    "shock on '{id}' needs a positive factor, got {}",
                    s.factor
                )));
            }
        }
        Ok(())
    }
}

/// Known quantities for one time step.
#[derive(Debug, Clone, Default)]
pub struct StepInputs {
    pub exogenous: HashMap<String, f64>,
    /// State moments (a, R) of each DLM node at this step.
    pub dlm_states: HashMap<String, StateMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMoments {
    pub id: String,
    pub kind: String,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Joint moments of all nodes, in graph order, before output-side shocks.
    pub joint: GaussianMoments,
    /// Reported per-node moments (after output-side shocks).
    pub nodes: Vec<NodeMoments>,
    /// Input law each GP node was evaluated under.
    pub input_laws: BTreeMap<String, GaussianMoments>,
    /// Each model node's prediction with its inputs fixed at their means:
    /// the plain emulator for GP nodes, the conditional forecast for DLM nodes.
    pub plain: BTreeMap<String, Prediction>,
}

impl Propagation {
    pub fn node(&self, id: &str) -> Option<&NodeMoments> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

enum View {
    Shocked,
    Base,
}

struct Sweep<'a> {
    graph: &'a NodeGraph,
    opts: &'a PropagationOptions,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Sweep<'_> {
    fn shock(&self, k: usize) -> Shock {
        self.opts
            .shocks
            .get(&self.graph.nodes[k].id)
            .copied()
            .unwrap_or(Shock::scale(1.0))
    }

    /// Law of the parents as seen by node `k`, plus Cov(node j, seen parent c)
    /// for every earlier node j.
    fn parent_law(&self, k: usize, parents: &[usize], view: View) -> (GaussianMoments, DMatrix<f64>) {
        let alpha = self.opts.parent_variance_scale;
        let root = alpha.sqrt();
        let shocks: Vec<Shock> = parents
            .iter()
            .map(|&i| match view {
                View::Shocked => self.shock(i),
                View::Base => Shock::scale(1.0),
            })
            .collect();
        let m = parents.len();
        let mean = DVector::from_fn(m, |c, _| shocks[c].factor * self.mean[parents[c]] + shocks[c].offset);
        let cov = DMatrix::from_fn(m, m, |a, b| {
            alpha * shocks[a].factor * shocks[b].factor * self.cov[(parents[a], parents[b])]
        });
        let cross = DMatrix::from_fn(k, m, |j, c| root * shocks[c].factor * self.cov[(j, parents[c])]);
        (GaussianMoments { mean, cov }, cross)
    }

    fn record(&mut self, k: usize, mean: f64, variance: f64, cross: &DMatrix<f64>, weights: &DVector<f64>) {
        self.mean[k] = mean;
        self.cov[(k, k)] = variance;
        let c = cross * weights;
        for j in 0..k {
            self.cov[(j, k)] = c[j];
            self.cov[(k, j)] = c[j];
        }
    }
}

/// One topological sweep: exogenous nodes are point masses, DLM nodes get the
/// moments of Fᵀθ + v with F drawn from their parents' joint law, GP nodes get
/// linked-emulator moments under their parents' joint law. Cross-covariances
/// with earlier nodes follow from Cov(Z, g(X)) = Cov(Z, X)·E[∇g(X)].
pub fn propagate(graph: &NodeGraph, step: &StepInputs, opts: &PropagationOptions) -> Result<Propagation> {
    opts.validate(graph)?;
    let n = graph.nodes.len();
    let mut sweep = Sweep {
        graph,
        opts,
        mean: DVector::zeros(n),
        cov: DMatrix::zeros(n, n),
    };
    let mut input_laws = BTreeMap::new();
    let mut plain = BTreeMap::new();
    for (k, node) in graph.nodes.iter().enumerate() {
        let parents: Vec<usize> = node.parents().map(|p| graph.index[p]).collect();
        match &node.model {
            NodeModel::Exogenous => {
                let v = step.exogenous.get(&node.id).copied().ok_or_else(|| {
                    Error::Binding(format!("no value supplied for exogenous series '{}'", node.id))
                })?;
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "exogenous series '{}' has non-finite value {v}",
                        node.id
                    )));
                }
                sweep.mean[k] = v;
            }
            NodeModel::Gp(em) => {
                let view = match opts.shock_side {
                    ShockSide::Output => View::Shocked,
                    ShockSide::Input => View::Base,
                };
                let (law, cross) = sweep.parent_law(k, &parents, view);
                let lm = linked_gp_moments(em, &law)
                    .map_err(|e| e.context(format!("node '{}'", node.id)))?;
                plain.insert(node.id.clone(), em.predict(law.mean.as_slice())?);
                sweep.record(k, lm.mean, lm.variance, &cross, &lm.mean_gradient);
                input_laws.insert(node.id.clone(), law);
            }
            NodeModel::Dlm(model) => {
                let view = match opts.shock_side {
                    ShockSide::Output => View::Base,
                    ShockSide::Input => View::Shocked,
                };
                let (law, cross) = sweep.parent_law(k, &parents, view);
                let state = step.dlm_states.get(&node.id).ok_or_else(|| {
                    Error::Binding(format!("no state moments supplied for DLM node '{}'", node.id))
                })?;
                let p = node.inputs.len();
                // Expand the parent law to the full regression vector.
                let mut slot_of = Vec::with_capacity(parents.len());
                let mut f_mean = DVector::zeros(p);
                let mut c = 0;
                for (s, input) in node.inputs.iter().enumerate() {
                    match input {
                        Input::Intercept => f_mean[s] = 1.0,
                        Input::Node(_) => {
                            f_mean[s] = law.mean[c];
                            slot_of.push(s);
                            c += 1;
                        }
                    }
                }
                let mut f_cov = DMatrix::zeros(p, p);
                for (a, &sa) in slot_of.iter().enumerate() {
                    for (b, &sb) in slot_of.iter().enumerate() {
                        f_cov[(sa, sb)] = law.cov[(a, b)];
                    }
                }
                let (plain_mean, plain_var) = mdm_moments(state, model.spec.v, &GaussianMoments::degenerate(f_mean.as_slice()))
                    .map_err(|e| e.context(format!("node '{}'", node.id)))?;
                plain.insert(
                    node.id.clone(),
                    Prediction {
                        mean: plain_mean,
                        variance: plain_var,
                    },
                );
                let (mean, var) = mdm_moments(state, model.spec.v, &GaussianMoments { mean: f_mean, cov: f_cov })
                    .map_err(|e| e.context(format!("node '{}'", node.id)))?;
                let weights = DVector::from_fn(slot_of.len(), |a, _| state.a[slot_of[a]]);
                sweep.record(k, mean, var, &cross, &weights);
            }
        }
    }

    let nodes = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(k, node)| {
            let s = match opts.shock_side {
                ShockSide::Output => sweep.shock(k),
                ShockSide::Input => Shock::scale(1.0),
            };
            NodeMoments {
                id: node.id.clone(),
                kind: node.model.kind().to_string(),
                mean: s.factor * sweep.mean[k] + s.offset,
                variance: s.factor * s.factor * sweep.cov[(k, k)],
            }
        })
        .collect();
    Ok(Propagation {
        joint: GaussianMoments {
            mean: sweep.mean,
            cov: sweep.cov,
        },
        nodes,
        input_laws,
        plain,
    })
}

/// k-step forecasts for steps 1..=horizon from each DLM node's last filtered
/// state. `exogenous` maps every exogenous node to its future path.
pub fn propagate_horizon(
    graph: &NodeGraph,
    horizon: usize,
    exogenous: &BTreeMap<String, Vec<f64>>,
    opts: &PropagationOptions,
) -> Result<Vec<Propagation>> {
    if horizon == 0 {
        return Err(Error::Validation("horizon must be ≥ 1".into()));
    }
    for id in graph.exogenous_ids() {
        let have = exogenous.get(&id).map_or(0, Vec::len);
        if have < horizon {
            return Err(Error::Validation(format!(
                "exogenous series '{id}' covers {have} of {horizon} forecast steps"
            )));
        }
    }
    let states: HashMap<String, Vec<StateMoments>> = graph
        .nodes
        .iter()
        .filter_map(|n| match &n.model {
            NodeModel::Dlm(m) => Some((n.id.clone(), forecast_states(&m.spec, &m.state, horizon))),
            _ => None,
        })
        .collect();
    (0..horizon)
        .map(|j| {
            let step = StepInputs {
                exogenous: graph
                    .exogenous_ids()
                    .into_iter()
                    .map(|id| {
                        let v = exogenous[&id][j];
                        (id, v)
                    })
                    .collect(),
                dlm_states: states.iter().map(|(id, s)| (id.clone(), s[j].clone())).collect(),
            };
            propagate(graph, &step, opts).map_err(|e| e.context(format!("forecast step {}", j + 1)))
        })
        .collect()
}
