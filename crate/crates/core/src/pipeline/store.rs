//! JSON documents for fitted models and graphs, and a directory-backed store.
//!
//! Factorisations are never written; loading a GP re-conditions it on the
//! stored design and checks that the stored coefficients are reproduced.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dlm::{DlmModel, DlmSpec, FilterState};
use crate::error::{Error, Result};
use crate::gp::{Design, Domain, FitReport, GpEmulator, KernelSpec, TrendBasis};
use crate::linalg;
use crate::network::{Input, Node, NodeGraph};

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpDocument {
    pub version: u32,
    pub kind: String,
    pub domains: Vec<[f64; 2]>,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    pub f: Vec<f64>,
    pub trend: String,
    pub delta: Vec<f64>,
    pub tau2: f64,
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

impl GpDocument {
    pub fn from_emulator(em: &GpEmulator) -> Self {
        let d = em.design();
        Self {
            version: DOCUMENT_VERSION,
            kind: "gp".into(),
            domains: d.domains.iter().map(|dm| [dm.lower, dm.upper]).collect(),
            x: linalg::matrix_to_rows(&d.x),
            f: d.f.iter().cloned().collect(),
            trend: em.trend().as_str().into(),
            delta: em.kernel().lengthscales.clone(),
            tau2: em.kernel().nugget,
            beta_hat: em.beta_hat().iter().cloned().collect(),
            sigma2_hat: em.sigma2_hat(),
            seed: em.seed(),
            fit: em.fit_report().cloned(),
        }
    }

    pub fn to_emulator(&self) -> Result<GpEmulator> {
        check_header(self.version, &self.kind, "gp")?;
        let domains = self.domains.iter().map(|[l, u]| Domain::new(*l, *u)).collect();
        let design = Design::new(
            linalg::rows_to_matrix(&self.x, "X")?,
            DVector::from_column_slice(&self.f),
            domains,
        )?;
        let trend: TrendBasis = self.trend.parse()?;
        let kernel = KernelSpec::new(self.delta.clone(), self.tau2)?;
        let em = GpEmulator::condition(design, trend, kernel)?.with_fit_info(self.seed, self.fit.clone());
        if em.kernel().nugget != self.tau2 {
            return Err(Error::Corrupt(format!(
                "stored nugget {:e} does not factorise the stored design",
                self.tau2
            )));
        }
        let stored = DVector::from_column_slice(&self.beta_hat);
        if stored.len() != em.beta_hat().len() {
            return Err(Error::Corrupt(format!(
                "beta_hat has {} entries, trend '{}' needs {}",
                stored.len(),
                self.trend,
                em.beta_hat().len()
            )));
        }
        let scale = stored.amax().max(1.0);
        if (&stored - em.beta_hat()).amax() > 1e-8 * scale
            || (self.sigma2_hat - em.sigma2_hat()).abs() > 1e-8 * self.sigma2_hat.abs().max(f64::MIN_POSITIVE)
        {
            return Err(Error::Corrupt(
                "stored beta_hat / sigma2_hat disagree with the stored design".into(),
            ));
        }
        Ok(em)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlmDocument {
    pub version: u32,
    pub kind: String,
    pub regressor_names: Vec<String>,
    pub scale_factors: Vec<f64>,
    #[serde(rename = "V")]
    pub v: f64,
    pub w: f64,
    pub m: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub t: usize,
    pub data_digest: String,
}

impl DlmDocument {
    /// Only random-walk models (G = I, W = w·I) have a document form.
    pub fn from_model(model: &DlmModel) -> Result<Self> {
        let p = model.dim();
        let spec = &model.spec;
        let w = spec.w[(0, 0)];
        if spec.g != DMatrix::identity(p, p) || spec.w != DMatrix::identity(p, p) * w {
            return Err(Error::Unsupported(
                "only models with G = I and W = w·I can be saved".into(),
            ));
        }
        Ok(Self {
            version: DOCUMENT_VERSION,
            kind: "dlm".into(),
            regressor_names: model.regressor_names.clone(),
            scale_factors: model.scale_factors.clone(),
            v: spec.v,
            w,
            m: model.state.m.iter().cloned().collect(),
            c: linalg::matrix_to_rows(&model.state.c),
            t: model.state.t,
            data_digest: model.data_digest.clone(),
        })
    }

    pub fn to_model(&self) -> Result<DlmModel> {
        check_header(self.version, &self.kind, "dlm")?;
        let p = self.regressor_names.len();
        if self.scale_factors.len() != p {
            return Err(Error::dims("scale_factors", p, self.scale_factors.len()));
        }
        if self.m.len() != p {
            return Err(Error::dims("m", p, self.m.len()));
        }
        let c = linalg::rows_to_matrix(&self.c, "C")?;
        if c.nrows() != p || c.ncols() != p {
            return Err(Error::dims("C", p, c.nrows()));
        }
        linalg::check_psd(&c, "C")?;
        let spec = DlmSpec::random_walk(p, self.v, self.w)?;
        Ok(DlmModel {
            regressor_names: self.regressor_names.clone(),
            scale_factors: self.scale_factors.clone(),
            spec,
            state: FilterState {
                t: self.t,
                m: DVector::from_column_slice(&self.m),
                c,
                prior: None,
                forecast: None,
                innovation: None,
            },
            data_digest: self.data_digest.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Exogenous,
    Gp,
    Dlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub id: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    /// Stored model id (GP and DLM nodes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// GP inputs or DLM regressors in model order: node ids or "intercept".
    #[serde(default)]
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    #[serde(default = "graph_kind")]
    pub kind: String,
    pub id: String,
    pub target: String,
    pub nodes: Vec<NodeDocument>,
    /// Baseline future path of every exogenous node.
    #[serde(default)]
    pub exogenous: BTreeMap<String, Vec<f64>>,
    /// Label of the first forecast step, e.g. "2022-Q1".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_quarter: Option<String>,
}

fn graph_kind() -> String {
    "graph".into()
}

impl GraphDocument {
    /// Builds the graph, resolving model ids through `store`.
    pub fn build(&self, store: &ModelStore) -> Result<NodeGraph> {
        check_header(self.version, &self.kind, "graph")?;
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let model_id = || {
                    n.model.clone().ok_or_else(|| {
                        Error::Binding(format!("nodes[{}].model is required for {:?} nodes", n.id, n.node_type))
                    })
                };
                let inputs: Vec<Input> = n.inputs.iter().map(|s| Input::parse(s)).collect();
                Ok(match n.node_type {
                    NodeType::Exogenous => {
                        if !n.inputs.is_empty() {
                            return Err(Error::Binding(format!("exogenous node '{}' cannot have inputs", n.id)));
                        }
                        Node::exogenous(n.id.clone())
                    }
                    NodeType::Gp => Node {
                        id: n.id.clone(),
                        model: crate::network::NodeModel::Gp(Arc::new(store.load_gp(&model_id()?)?)),
                        inputs,
                    },
                    NodeType::Dlm => Node {
                        id: n.id.clone(),
                        model: crate::network::NodeModel::Dlm(Arc::new(store.load_dlm(&model_id()?)?)),
                        inputs,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        NodeGraph::new(nodes, self.target.clone())
    }
}

fn check_header(version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != DOCUMENT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DOCUMENT_VERSION,
        });
    }
    if kind != expected {
        return Err(Error::Corrupt(format!("document kind '{kind}', expected '{expected}'")));
    }
    Ok(())
}

/// Reads just enough of a document to report a version mismatch before
/// complaining about fields the version may not have.
fn parse_document<T: DeserializeOwned>(text: &str) -> Result<T> {
    #[derive(Deserialize)]
    struct Header {
        version: Option<serde_json::Value>,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
    match header.version {
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(u64::from(DOCUMENT_VERSION)) => {}
        Some(serde_json::Value::Number(n)) => {
            return Err(Error::Version {
                found: n.as_u64().and_then(|v| u32::try_from(v).ok()).unwrap_or(u32::MAX),
                expected: DOCUMENT_VERSION,
            })
        }
        _ => return Err(Error::Corrupt("missing or non-numeric 'version'".into())),
    }
    serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn gp_to_json(em: &GpEmulator) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GpDocument::from_emulator(em))?)
}

pub fn gp_from_json(text: &str) -> Result<GpEmulator> {
    parse_document::<GpDocument>(text)?.to_emulator()
}

pub fn dlm_to_json(model: &DlmModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&DlmDocument::from_model(model)?)?)
}

pub fn dlm_from_json(text: &str) -> Result<DlmModel> {
    parse_document::<DlmDocument>(text)?.to_model()
}

pub fn graph_from_json(text: &str) -> Result<GraphDocument> {
    let doc: GraphDocument = parse_document(text)?;
    check_header(doc.version, &doc.kind, "graph")?;
    Ok(doc)
}

/// Writes to a temporary file in the target directory and renames it into
/// place, so readers never observe a partial document.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("document");
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
}

/// Kind of a stored document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentKind {
    Gp,
    Dlm,
    Graph,
}

impl DocumentKind {
    fn suffix(self) -> &'static str {
        match self {
            DocumentKind::Gp => "gp.json",
            DocumentKind::Dlm => "dlm.json",
            DocumentKind::Graph => "graph.json",
        }
    }
}

/// One JSON file per id under a directory: `<id>.gp.json`, `<id>.dlm.json`,
/// `<id>.graph.json`. Ids share one namespace across kinds.
#[derive(Debug, Clone)]
pub struct ModelStore {
    dir: PathBuf,
}

impl ModelStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::from(e).context(format!("creating store {}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn validate_id(id: &str) -> Result<()> {
        let ok = !id.is_empty()
            && id.len() <= 128
            && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            && !id.starts_with('-');
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "invalid id '{id}': use letters, digits, '-' and '_' (max 128)"
            )))
        }
    }

    fn path(&self, id: &str, kind: DocumentKind) -> PathBuf {
        self.dir.join(format!("{id}.{}", kind.suffix()))
    }

    /// Kind of the document stored under `id`, if any.
    pub fn kind_of(&self, id: &str) -> Option<DocumentKind> {
        [DocumentKind::Gp, DocumentKind::Dlm, DocumentKind::Graph]
            .into_iter()
            .find(|k| self.path(id, *k).exists())
    }

    fn put(&self, id: &str, kind: DocumentKind, text: &str, overwrite: bool) -> Result<()> {
        Self::validate_id(id)?;
        match self.kind_of(id) {
            Some(k) if !overwrite || k != kind => {
                return Err(Error::AlreadyExists(format!("id '{id}' is already used by a {k:?} document")))
            }
            _ => {}
        }
        write_atomic(&self.path(id, kind), text)
    }

    fn read(&self, id: &str, kind: DocumentKind) -> Result<String> {
        Self::validate_id(id)?;
        let path = self.path(id, kind);
        fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("no {kind:?} model with id '{id}'")),
            _ => Error::from(e).context(format!("reading {}", path.display())),
        })
    }

    pub fn save_gp(&self, id: &str, em: &GpEmulator, overwrite: bool) -> Result<()> {
        self.put(id, DocumentKind::Gp, &gp_to_json(em)?, overwrite)
    }

    pub fn load_gp(&self, id: &str) -> Result<GpEmulator> {
        gp_from_json(&self.read(id, DocumentKind::Gp)?).map_err(|e| e.context(format!("model '{id}'")))
    }

    pub fn save_dlm(&self, id: &str, model: &DlmModel, overwrite: bool) -> Result<()> {
        self.put(id, DocumentKind::Dlm, &dlm_to_json(model)?, overwrite)
    }

    pub fn load_dlm(&self, id: &str) -> Result<DlmModel> {
        dlm_from_json(&self.read(id, DocumentKind::Dlm)?).map_err(|e| e.context(format!("model '{id}'")))
    }

    pub fn save_graph(&self, doc: &GraphDocument, overwrite: bool) -> Result<()> {
        check_header(doc.version, &doc.kind, "graph")?;
        self.put(&doc.id, DocumentKind::Graph, &serde_json::to_string_pretty(doc)?, overwrite)
    }

    pub fn load_graph(&self, id: &str) -> Result<GraphDocument> {
        graph_from_json(&self.read(id, DocumentKind::Graph)?).map_err(|e| e.context(format!("graph '{id}'")))
    }

    /// Raw stored document.
    pub fn document(&self, id: &str) -> Result<(DocumentKind, serde_json::Value)> {
        Self::validate_id(id)?;
        let kind = self
            .kind_of(id)
            .ok_or_else(|| Error::NotFound(format!("no model with id '{id}'")))?;
        let text = self.read(id, kind)?;
        Ok((kind, serde_json::from_str(&text).map_err(|e| Error::Corrupt(e.to_string()))?))
    }

    pub fn list(&self) -> Result<Vec<(String, DocumentKind)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            for kind in [DocumentKind::Gp, DocumentKind::Dlm, DocumentKind::Graph] {
                if let Some(id) = name.strip_suffix(&format!(".{}", kind.suffix())) {
                    out.push((id.to_string(), kind));
                }
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
