use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical column. `levels[0]` is the reference level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub levels: Vec<String>,
    pub values: Vec<String>,
}

/// Column store of modelling covariates, addressed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    n: usize,
    continuous: BTreeMap<String, Vec<f64>>,
    categorical: BTreeMap<String, CategoricalColumn>,
}

impl Frame {
    pub fn new(n: usize) -> Self {
        Self { n, ..Default::default() }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn insert_continuous(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` has {} values, frame has {} rows",
                values.len(),
                self.n
            )));
        }
        self.continuous.insert(name.to_string(), values);
        Ok(())
    }

    pub fn insert_categorical(&mut self, name: &str, column: CategoricalColumn) -> Result<()> {
        if column.values.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` has {} values, frame has {} rows",
                column.values.len(),
                self.n
            )));
        }
        self.categorical.insert(name.to_string(), column);
        Ok(())
    }

    pub fn continuous(&self, name: &str) -> Result<&[f64]> {
        self.continuous
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Schema(format!("no continuous covariate `{name}`")))
    }

    pub fn continuous_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.continuous.get_mut(name)
    }

    pub fn categorical(&self, name: &str) -> Result<&CategoricalColumn> {
        self.categorical
            .get(name)
            .ok_or_else(|| Error::Schema(format!("no categorical covariate `{name}`")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.continuous.contains_key(name) || self.categorical.contains_key(name)
    }

    pub fn continuous_names(&self) -> impl Iterator<Item = &str> {
        self.continuous.keys().map(String::as_str)
    }

    pub fn categorical_names(&self) -> impl Iterator<Item = &str> {
        self.categorical.keys().map(String::as_str)
    }

    /// Rows `rows` in the given order.
    pub fn select(&self, rows: &[usize]) -> Frame {
        let continuous = self
            .continuous
            .iter()
            .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i]).collect()))
            .collect();
        let categorical = self
            .categorical
            .iter()
            .map(|(k, c)| {
                let values = rows.iter().map(|&i| c.values[i].clone()).collect();
                (k.clone(), CategoricalColumn { levels: c.levels.clone(), values })
            })
            .collect();
        Frame { n: rows.len(), continuous, categorical }
    }
}
