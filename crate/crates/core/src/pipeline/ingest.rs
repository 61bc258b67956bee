use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar quarter, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Validation(format!("quarter must be 1..4, got {quarter}")));
        }
        Ok(Self { year, quarter })
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Self {
                year: self.year + 1,
                quarter: 1,
            }
        } else {
            Self {
                quarter: self.quarter + 1,
                ..self
            }
        }
    }

    /// The `k` quarters following this one.
    pub fn following(self, k: usize) -> Vec<Quarter> {
        std::iter::successors(Some(self.next()), |q| Some(q.next()))
            .take(k)
            .collect()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.quarter)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("'{s}' is not a quarter label like 2012-Q1"));
        let (y, q) = s.trim().split_once("-Q").ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let quarter = q.parse().map_err(|_| bad())?;
        Quarter::new(year, quarter).map_err(|_| bad())
    }
}

impl TryFrom<String> for Quarter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Quarter> for String {
    fn from(q: Quarter) -> String {
        q.to_string()
    }
}

/// Known CSV layouts for the quarterly factor files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    GasFactors,
    ElecFactors,
}

/// Production, imports and storage are reported in GWh and brought to a scale
/// comparable with prices before fitting.
pub const VOLUME_SCALE: f64 = 1e-5;

impl Schema {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Schema::GasFactors => &["gas_price", "prod", "imports", "storage", "coal"],
            Schema::ElecFactors => &["elec_price", "gas_price", "ets", "offshore_wind"],
        }
    }

    pub fn scale(self, column: &str) -> f64 {
        match (self, column) {
            (Schema::GasFactors, "prod" | "imports" | "storage") => VOLUME_SCALE,
            _ => 1.0,
        }
    }
}

impl FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gas-factors" => Ok(Schema::GasFactors),
            "elec-factors" => Ok(Schema::ElecFactors),
            _ => Err(Error::Validation(format!(
                "unknown schema '{s}' (expected gas-factors or elec-factors)"
            ))),
        }
    }
}

/// Consecutive quarterly records of named columns, stored in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterSeries {
    pub quarters: Vec<Quarter>,
    pub columns: BTreeMap<String, Vec<f64>>,
    /// Multiplier applied to each column at ingestion.
    pub scales: BTreeMap<String, f64>,
}

impl QuarterSeries {
    pub fn len(&self) -> usize {
        self.quarters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quarters.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Validation(format!("series has no column '{name}'")))
    }

    pub fn scale_of(&self, name: &str) -> f64 {
        self.scales.get(name).copied().unwrap_or(1.0)
    }

    /// Column values in the units of the source file.
    pub fn raw(&self, name: &str) -> Result<Vec<f64>> {
        let s = self.scale_of(name);
        Ok(self.column(name)?.iter().map(|v| v / s).collect())
    }

    pub fn last_quarter(&self) -> Option<Quarter> {
        self.quarters.last().copied()
    }
}

pub fn ingest<R: Read>(reader: R, schema: Schema) -> Result<QuarterSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let position = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            Error::data(
                "header",
                format!("missing column '{name}' (found: {})", header.join(", ")),
            )
        })
    };
    let date_col = position("date")?;
    let cols: Vec<(&str, usize)> = schema
        .columns()
        .iter()
        .map(|c| Ok((*c, position(c)?)))
        .collect::<Result<_>>()?;

    let mut quarters: Vec<Quarter> = Vec::new();
    let mut columns: BTreeMap<String, Vec<f64>> =
        cols.iter().map(|(c, _)| (c.to_string(), Vec::new())).collect();
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers count the header as row 1, as a spreadsheet would.
        let row = i + 2;
        let rec = rec?;
        let label = rec.get(date_col).unwrap_or("");
        let q: Quarter = label
            .parse()
            .map_err(|e: Error| Error::data(format!("row {row}, column date"), e.to_string()))?;
        if let Some(&prev) = quarters.last() {
            if q == prev || quarters.contains(&q) {
                return Err(Error::data(format!("row {row}, column date"), format!("duplicate quarter {q}")));
            }
            if q != prev.next() {
                return Err(Error::data(
                    format!("row {row}, column date"),
                    format!("expected {} after {prev}, found {q}", prev.next()),
                ));
            }
        }
        quarters.push(q);
        for (name, idx) in &cols {
            let cell = rec.get(*idx).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!("row {row}, column {name}"), format!("cannot parse '{cell}' as a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!("row {row}, column {name}"), "value is not finite"));
            }
            columns.get_mut(*name).expect("declared").push(v * schema.scale(name));
        }
    }
    if quarters.is_empty() {
        return Err(Error::data("body", "no records"));
    }
    let scales = cols
        .iter()
        .map(|(c, _)| (c.to_string(), schema.scale(c)))
        .collect();
    Ok(QuarterSeries {
        quarters,
        columns,
        scales,
    })
}

pub fn ingest_path(path: &Path, schema: Schema) -> Result<QuarterSeries> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    ingest(file, schema).map_err(|e| e.context(path.display().to_string()))
}
