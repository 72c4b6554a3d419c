//! Structured results shared by the diagnostics and the experiment runner.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Where a reported number comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    Solver,
    /// Sup over a finite sample: a lower bound.
    Sampled,
    /// Least-squares fit over a finite range.
    Fitted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub tolerance: f64,
    pub provenance: Provenance,
}

impl Measured {
    pub fn new(value: f64, tolerance: f64, provenance: Provenance) -> Self {
        Self {
            value,
            tolerance,
            provenance,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub scalars: BTreeMap<String, Measured>,
    pub tables: BTreeMap<String, Table>,
    pub notes: Vec<String>,
    /// Set when the numbers are finite-scale evidence rather than certified values.
    pub heuristic: bool,
}

impl Report {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn scalar(&mut self, key: impl Into<String>, m: Measured) {
        self.scalars.insert(key.into(), m);
    }

    pub fn table(&mut self, key: impl Into<String>, t: Table) {
        self.tables.insert(key.into(), t);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).map(|m| m.value)
    }
}
