//! Reconstructed stand-ins for the two computer models of the energy case study
//! (a degree-day heating-demand model and a least-cost heat dispatch model) and
//! the space-filling designs used to build training ensembles for them.

mod design;

pub use design::{
    lhc_design, lhc_unit, min_pairwise_distance, random_lhc_unit, read_ensemble_csv,
    write_ensemble_csv, Ensemble,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Domain;

/// Input domains of the heating-demand emulator: HDD per quarter, equipment
/// efficiency, building transmission coefficient (kW/K).
pub const HEAT_DOMAINS: [(f64, f64); 3] = [(200.0, 1200.0), (0.5, 1.0), (10.0, 25.0)];
pub const HEAT_INPUTS: [&str; 3] = ["hdd", "efficiency", "transmission"];

/// Input domains of the operational-cost emulator: quarterly heating demand
/// (kWh), gas price (p/kWh), electricity price (p/kWh), boiler efficiency and
/// heat-pump COP.
pub const DISPATCH_DOMAINS: [(f64, f64); 5] = [
    (48_000.0, 1_450_000.0),
    (1.0, 5.0),
    (4.0, 25.0),
    (0.3, 1.0),
    (2.0, 6.0),
];
pub const DISPATCH_INPUTS: [&str; 5] = ["demand", "gas_price", "elec_price", "boiler_efficiency", "cop"];

pub fn heat_domains() -> Vec<Domain> {
    HEAT_DOMAINS.iter().map(|&(l, u)| Domain::new(l, u)).collect()
}

pub fn dispatch_domains() -> Vec<Domain> {
    DISPATCH_DOMAINS.iter().map(|&(l, u)| Domain::new(l, u)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatDemandParams {
    /// Heating degree days in the quarter (K·day).
    pub hdd: f64,
    pub efficiency: f64,
    /// Global building transmission coefficient (kW/K).
    pub transmission: f64,
    /// Baseline load in kWh per quarter.
    #[serde(default)]
    pub baseline: f64,
}

impl HeatDemandParams {
    pub fn from_inputs(x: &[f64]) -> Result<Self> {
        match *x {
            [hdd, efficiency, transmission] => Ok(Self {
                hdd,
                efficiency,
                transmission,
                baseline: 0.0,
            }),
            _ => Err(Error::dims("heat-demand inputs", 3, x.len())),
        }
    }
}

/// Quarterly heating demand in kWh: `H · HDD · 24 / η + baseline`.
pub fn heating_demand(p: &HeatDemandParams) -> Result<f64> {
    if !(p.efficiency > 0.0) {
        return Err(Error::Validation(format!(
            "efficiency must be positive, got {}",
            p.efficiency
        )));
    }
    if !p.hdd.is_finite() || !p.transmission.is_finite() || !p.baseline.is_finite() {
        return Err(Error::Validation("heat-demand inputs must be finite".into()));
    }
    Ok(p.transmission * p.hdd * 24.0 / p.efficiency + p.baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchParams {
    /// Heat to deliver over the quarter (kWh).
    pub demand: f64,
    /// p/kWh
    pub gas_price: f64,
    /// p/kWh
    pub elec_price: f64,
    pub boiler_efficiency: f64,
    pub cop: f64,
}

impl DispatchParams {
    pub fn from_inputs(x: &[f64]) -> Result<Self> {
        match *x {
            [demand, gas_price, elec_price, boiler_efficiency, cop] => Ok(Self {
                demand,
                gas_price,
                elec_price,
                boiler_efficiency,
                cop,
            }),
            _ => Err(Error::dims("dispatch inputs", 5, x.len())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Technology {
    GasBoiler,
    HeatPump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchOutcome {
    pub technology: Technology,
    /// p per kWh of delivered heat.
    pub unit_cost: f64,
    /// £ per quarter.
    pub cost: f64,
}

/// Winner-takes-all least-cost dispatch between a gas boiler and a heat pump.
/// Ties go to the heat pump.
pub fn dispatch(p: &DispatchParams) -> Result<DispatchOutcome> {
    let fields = [
        ("demand", p.demand),
        ("gas_price", p.gas_price),
        ("elec_price", p.elec_price),
        ("boiler_efficiency", p.boiler_efficiency),
        ("cop", p.cop),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(Error::Validation(format!("{name} must be finite")));
        }
    }
    if p.demand < 0.0 || p.gas_price < 0.0 || p.elec_price < 0.0 {
        return Err(Error::Validation(
            "demand and prices must be non-negative".into(),
        ));
    }
    if !(p.boiler_efficiency > 0.0) || !(p.cop > 0.0) {
        return Err(Error::Validation(
            "boiler efficiency and COP must be positive".into(),
        ));
    }
    let gas_unit = p.gas_price / p.boiler_efficiency;
    let hp_unit = p.elec_price / p.cop;
    let (technology, unit_cost) = if hp_unit <= gas_unit {
        (Technology::HeatPump, hp_unit)
    } else {
        (Technology::GasBoiler, gas_unit)
    };
    Ok(DispatchOutcome {
        technology,
        unit_cost,
        cost: p.demand * unit_cost / 100.0,
    })
}

/// Quarterly operational cost in £.
pub fn dispatch_cost(p: &DispatchParams) -> Result<f64> {
    dispatch(p).map(|o| o.cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Simulator {
    HeatDemand,
    Dispatch,
}

impl Simulator {
    pub fn domains(self) -> Vec<Domain> {
        match self {
            Simulator::HeatDemand => heat_domains(),
            Simulator::Dispatch => dispatch_domains(),
        }
    }

    pub fn input_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            Simulator::HeatDemand => &HEAT_INPUTS,
            Simulator::Dispatch => &DISPATCH_INPUTS,
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn output_name(self) -> &'static str {
        match self {
            Simulator::HeatDemand => "heat_demand",
            Simulator::Dispatch => "cost",
        }
    }

    pub fn run(self, x: &[f64]) -> Result<f64> {
        match self {
            Simulator::HeatDemand => heating_demand(&HeatDemandParams::from_inputs(x)?),
            Simulator::Dispatch => dispatch_cost(&DispatchParams::from_inputs(x)?),
        }
    }

    /// Runs the simulator over an `n`-point maximin Latin hypercube on its
    /// declared domains.
    pub fn ensemble(self, n: usize, seed: u64) -> Result<Ensemble> {
        let domains = self.domains();
        let x = lhc_design(n, &domains, seed)?;
        let y = (0..n)
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().cloned().collect();
                self.run(&row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble {
            input_names: self.input_names(),
            output_name: self.output_name().to_string(),
            domains,
            x,
            y,
        })
    }
}

impl std::str::FromStr for Simulator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat-demand" | "heat" => Ok(Simulator::HeatDemand),
            "dispatch" | "energy" => Ok(Simulator::Dispatch),
            other => Err(Error::Validation(format!(
                "unknown simulator '{other}' (expected heat-demand or dispatch)"
            ))),
        }
    }
}
