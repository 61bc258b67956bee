use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named shocks over the forecast horizon: y ↦ factor·y + offset per series,
/// plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub factors: BTreeMap<String, f64>,
    pub offsets: BTreeMap<String, f64>,
    pub params: BTreeMap<String, f64>,
}

impl Scenario {
    pub fn identity(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_factor(mut self, series: &str, factor: f64) -> Self {
        self.factors.insert(series.to_string(), factor);
        self
    }

    /// Prices as observed.
    pub fn scenario1() -> Self {
        Self::identity("scenario1")
    }

    /// Gas and electricity prices 25% higher.
    pub fn scenario2() -> Self {
        Self::identity("scenario2")
            .with_factor("gas_price", 1.25)
            .with_factor("elec_price", 1.25)
    }

    /// Supply shock: electricity +30%, gas +65%, imports +40%, storage −50%.
    pub fn scenario3() -> Self {
        Self::identity("scenario3")
            .with_factor("elec_price", 1.30)
            .with_factor("gas_price", 1.65)
            .with_factor("imports", 1.40)
            .with_factor("storage", 0.50)
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::scenario1(), Self::scenario2(), Self::scenario3()]
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::presets()
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Validation(format!("unknown scenario '{name}' (presets: scenario1, scenario2, scenario3)")))
    }

    pub fn validate(&self) -> Result<()> {
        for (k, f) in &self.factors {
            if !(f.is_finite() && *f > 0.0) {
                return Err(Error::Validation(format!(
                    "scenario '{}': factor for '{k}' must be positive, got {f}",
                    self.name
                )));
            }
        }
        for (k, v) in self.offsets.iter().chain(&self.params) {
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "scenario '{}': value for '{k}' is not finite",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Series names the scenario transforms.
    pub fn series(&self) -> impl Iterator<Item = &String> {
        let mut names: Vec<&String> = self.factors.keys().chain(self.offsets.keys()).collect();
        names.sort();
        names.dedup();
        names.into_iter()
    }

    /// (factor, offset) for a series; identity if untouched.
    pub fn transform(&self, series: &str) -> (f64, f64) {
        (
            self.factors.get(series).copied().unwrap_or(1.0),
            self.offsets.get(series).copied().unwrap_or(0.0),
        )
    }

    /// `self` followed by `next`: factors multiply, offsets map through the
    /// later factor, and later parameter overrides win.
    pub fn then(&self, next: &Scenario) -> Scenario {
        let mut out = Scenario {
            name: format!("{}+{}", self.name, next.name),
            params: self.params.clone(),
            ..Default::default()
        };
        let names: Vec<String> = self.series().chain(next.series()).cloned().collect();
        for s in names {
            let (f1, o1) = self.transform(&s);
            let (f2, o2) = next.transform(&s);
            out.factors.insert(s.clone(), f1 * f2);
            let o = f2 * o1 + o2;
            if o != 0.0 {
                out.offsets.insert(s, o);
            }
        }
        out.params.extend(next.params.clone());
        out
    }
}

/// Exogenous inputs for a forecast, after a scenario has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInputs {
    /// Future path of every series, `horizon` values each.
    pub futures: BTreeMap<String, Vec<f64>>,
    pub params: BTreeMap<String, f64>,
}

/// Baseline future paths: each series' last observed value carried forward.
pub fn carry_forward(history: &BTreeMap<String, Vec<f64>>, horizon: usize) -> Result<BTreeMap<String, Vec<f64>>> {
    history
        .iter()
        .map(|(name, values)| {
            let last = values
                .last()
                .ok_or_else(|| Error::Validation(format!("series '{name}' is empty")))?;
            Ok((name.clone(), vec![*last; horizon]))
        })
        .collect()
}

/// Applies `scenario` to carry-forward futures of `history` and to `params`.
/// Every name the scenario mentions must be a series or parameter; names in
/// `extra_series` (model outputs shocked elsewhere) are also accepted.
pub fn apply_scenario(
    history: &BTreeMap<String, Vec<f64>>,
    params: &BTreeMap<String, f64>,
    scenario: &Scenario,
    horizon: usize,
    extra_series: &[&str],
) -> Result<ScenarioInputs> {
    if horizon == 0 {
        return Err(Error::Validation("horizon must be ≥ 1".into()));
    }
    scenario.validate()?;
    for name in scenario.series() {
        if !history.contains_key(name) && !extra_series.contains(&name.as_str()) {
            return Err(Error::Validation(format!(
                "scenario '{}' refers to unknown series '{name}'",
                scenario.name
            )));
        }
    }
    for name in scenario.params.keys() {
        if !params.contains_key(name) {
            return Err(Error::Validation(format!(
                "scenario '{}' overrides unknown parameter '{name}'",
                scenario.name
            )));
        }
    }
    let mut futures = carry_forward(history, horizon)?;
    for (name, path) in futures.iter_mut() {
        let (f, o) = scenario.transform(name);
        if f != 1.0 || o != 0.0 {
            for v in path.iter_mut() {
                *v = f * *v + o;
            }
        }
    }
    let mut params = params.clone();
    params.extend(scenario.params.clone());
    Ok(ScenarioInputs { futures, params })
}
