//! Result matrix and the four continual-learning summary metrics.
//!
//! Task indices are 1-based throughout. `R[i][j]` is the test accuracy on
//! task `j` measured right after training on task `i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    num_tasks: usize,
    rows: Vec<Option<Vec<f64>>>,
    baseline: Option<Vec<f64>>,
    best: Vec<f64>,
}

fn check_accuracies(values: &[f64], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(Error::invalid(format!(
            "expected {expected} accuracies, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("accuracy {v} outside [0, 1]")));
    }
    Ok(())
}

impl ResultMatrix {
    pub fn new(num_tasks: usize) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::invalid("a result matrix needs at least one task"));
        }
        Ok(Self {
            num_tasks,
            rows: vec![None; num_tasks],
            baseline: None,
            best: vec![0.0; num_tasks],
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    /// Accuracies on all tasks after learning task `i`. A second write to the
    /// same row replaces it; the running column maxima keep the larger value.
    pub fn record_row(&mut self, i: usize, accuracies: &[f64]) -> Result<()> {
        if i == 0 || i > self.num_tasks {
            return Err(Error::invalid(format!(
                "task index {i} outside [1, {}]",
                self.num_tasks
            )));
        }
        check_accuracies(accuracies, self.num_tasks)?;
        for (b, &a) in self.best.iter_mut().zip(accuracies) {
            *b = b.max(a);
        }
        self.rows[i - 1] = Some(accuracies.to_vec());
        Ok(())
    }

    /// Accuracy per task of the freshly initialized model.
    pub fn record_baseline(&mut self, accuracies: &[f64]) -> Result<()> {
        check_accuracies(accuracies, self.num_tasks)?;
        self.baseline = Some(accuracies.to_vec());
        Ok(())
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.rows.get(i.wrapping_sub(1))?.as_deref()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.row(i).and_then(|r| r.get(j.wrapping_sub(1)).copied())
    }

    pub fn baseline(&self) -> Option<&[f64]> {
        self.baseline.as_deref()
    }

    /// Best accuracy seen so far on each task (column maxima).
    pub fn best(&self) -> &[f64] {
        &self.best
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(Option::is_some)
    }

    fn last_row(&self) -> Result<&[f64]> {
        self.row(self.num_tasks)
            .ok_or_else(|| Error::IncompleteRun(format!("row {} not recorded", self.num_tasks)))
    }

    fn complete_rows(&self) -> Result<Vec<&[f64]>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.as_deref()
                    .ok_or_else(|| Error::IncompleteRun(format!("row {} not recorded", i + 1)))
            })
            .collect()
    }

    fn transfer_tasks(&self) -> Result<usize> {
        if self.num_tasks < 2 {
            return Err(Error::UndefinedMetric(
                "transfer and forgetting need at least two tasks".into(),
            ));
        }
        Ok(self.num_tasks - 1)
    }
}

/// Mean of the final row.
pub fn average_accuracy(m: &ResultMatrix) -> Result<f64> {
    let last = m.last_row()?;
    Ok(last.iter().sum::<f64>() / m.num_tasks as f64)
}

/// Mean drop from best to final accuracy over the first `T-1` tasks.
pub fn forgetting(m: &ResultMatrix) -> Result<f64> {
    let n = m.transfer_tasks()?;
    m.complete_rows()?;
    let last = m.last_row()?;
    Ok((0..n).map(|i| m.best[i] - last[i]).sum::<f64>() / n as f64)
}

/// Mean change from just-learned to final accuracy over the first `T-1` tasks.
pub fn backward_transfer(m: &ResultMatrix) -> Result<f64> {
    let n = m.transfer_tasks()?;
    let rows = m.complete_rows()?;
    let last = rows[m.num_tasks - 1];
    Ok((0..n).map(|i| last[i] - rows[i][i]).sum::<f64>() / n as f64)
}

/// Mean gain of just-learned accuracy over the random-init baseline,
/// first `T-1` tasks.
pub fn forward_transfer(m: &ResultMatrix) -> Result<f64> {
    let n = m.transfer_tasks()?;
    let rows = m.complete_rows()?;
    let base = m
        .baseline
        .as_deref()
        .ok_or_else(|| Error::IncompleteRun("random-init baseline not recorded".into()))?;
    Ok((0..n).map(|i| rows[i][i] - base[i]).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub acc: f64,
    pub forget: Option<f64>,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
}

impl MetricSet {
    /// Whatever is defined for the matrix; accuracy is required.
    pub fn from_matrix(m: &ResultMatrix) -> Result<Self> {
        Ok(Self {
            acc: average_accuracy(m)?,
            forget: forgetting(m).ok(),
            bwt: backward_transfer(m).ok(),
            fwt: forward_transfer(m).ok(),
        })
    }
}
