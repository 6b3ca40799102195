use std::fmt::Write;

use serde::Serialize;

use super::{ExperimentError, ModelRun};
use crate::data::Split;
use crate::nn::ResidualNet;
use crate::sim::SimClient;

/// Accuracy of every trained model on every silo's test split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossEvalMatrix {
    pub models: Vec<String>,
    pub silos: Vec<String>,
    /// `cells[model][silo]`; `None` where the model failed to train.
    pub cells: Vec<Vec<Option<f64>>>,
}

/// Headline numbers of a matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixSummary {
    pub centralized_mean: f64,
    pub federated_mean: f64,
    /// Mean over local models of each one's mean cross-silo accuracy.
    pub local_mean: f64,
    pub best_local_mean: f64,
    /// Lowest accuracy of any local model on a silo other than its own.
    pub worst_local_foreign: f64,
    pub worst_local_foreign_cell: (String, String),
}

fn mean(xs: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = xs.iter().map(|x| x.unwrap_or(0.0)).collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl CrossEvalMatrix {
    pub fn evaluate(
        net: &ResidualNet,
        models: &[&ModelRun],
        clients: &[SimClient],
    ) -> Result<Self, ExperimentError> {
        let silos: Vec<String> = clients.iter().map(|c| c.silo.silo_id.clone()).collect();
        let tests: Vec<_> = clients.iter().map(|c| c.silo.labelled(Split::Test)).collect();
        if let Some(i) = tests.iter().position(|t| t.is_empty()) {
            return Err(ExperimentError::Config(format!(
                "silo `{}` has no test images",
                silos[i]
            )));
        }
        let mut cells = Vec::with_capacity(models.len());
        for m in models {
            let row = match &m.weights {
                Ok(w) => tests
                    .iter()
                    .map(|t| net.evaluate(w, t).map(|e| Some(e.accuracy)))
                    .collect::<Result<Vec<_>, _>>()?,
                Err(_) => vec![None; silos.len()],
            };
            cells.push(row);
        }
        Ok(Self {
            models: models.iter().map(|m| m.name.clone()).collect(),
            silos,
            cells,
        })
    }

    pub fn row(&self, model: &str) -> Option<&[Option<f64>]> {
        let i = self.models.iter().position(|m| m == model)?;
        Some(&self.cells[i])
    }

    pub fn row_mean(&self, model: &str) -> Option<f64> {
        self.row(model).map(mean)
    }

    pub fn summary(&self) -> MatrixSummary {
        let mut local_means = Vec::new();
        let mut worst = (f64::INFINITY, String::new(), String::new());
        for (name, row) in self.models.iter().zip(&self.cells) {
            let Some(own) = name.strip_prefix("local_") else {
                continue;
            };
            local_means.push(mean(row));
            for (silo, cell) in self.silos.iter().zip(row) {
                let acc = cell.unwrap_or(0.0);
                if silo != own && acc < worst.0 {
                    worst = (acc, name.clone(), silo.clone());
                }
            }
        }
        MatrixSummary {
            centralized_mean: self.row_mean("centralized").unwrap_or(0.0),
            federated_mean: self.row_mean("federated").unwrap_or(0.0),
            local_mean: local_means.iter().sum::<f64>() / local_means.len().max(1) as f64,
            best_local_mean: local_means.iter().copied().fold(0.0, f64::max),
            worst_local_foreign: worst.0,
            worst_local_foreign_cell: (worst.1, worst.2),
        }
    }

    /// Inverse of [`CrossEvalMatrix::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, ExperimentError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ExperimentError::Parse("empty matrix file".into()))?;
        let silos: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let mut models = Vec::new();
        let mut cells = Vec::new();
        for line in lines {
            let mut fields = line.split(',');
            models.push(fields.next().unwrap_or_default().to_string());
            let row = fields
                .map(|f| match f {
                    "failed" => Ok(None),
                    v => v
                        .parse()
                        .map(Some)
                        .map_err(|_| ExperimentError::Parse(format!("bad cell `{v}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != silos.len() {
                return Err(ExperimentError::Parse(format!(
                    "row `{line}` has {} cells for {} silos",
                    row.len(),
                    silos.len()
                )));
            }
            cells.push(row);
        }
        Ok(Self {
            models,
            silos,
            cells,
        })
    }

    /// Header of silo names, then one row per model; 4 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for s in &self.silos {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        for (name, row) in self.models.iter().zip(&self.cells) {
            out.push_str(name);
            for c in row {
                match c {
                    Some(a) => write!(out, ",{a:.4}").expect("writing to a String"),
                    None => out.push_str(",failed"),
                }
            }
            out.push('\n');
        }
        out
    }
}
