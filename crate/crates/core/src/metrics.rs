//! Per-epoch evaluation metrics, the metric-history CSV, and Best/Last
//! summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::classifier::ClassifierModel;
use crate::dataset::LabeledDataset;
use crate::dilution::DilutedLabelStore;
use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "epoch,test_acc,train_diluted_acc,train_predicted_acc,sel_precision,sel_recall,sel_fraction,loss,lr";

/// Number of trailing epochs averaged into the "Last" accuracy.
pub const LAST_WINDOW: usize = 10;

/// Integer selection tallies for one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelectionCounts {
    /// Examples that went through a training step this epoch.
    pub processed: usize,
    pub selected: usize,
    /// Processed examples whose observed label is correct.
    pub clean: usize,
    pub selected_clean: usize,
}

impl SelectionCounts {
    /// `selected_clean / selected`, or `(1.0, true)` when nothing was selected.
    pub fn precision(&self) -> (f64, bool) {
        if self.selected == 0 {
            (1.0, true)
        } else {
            (self.selected_clean as f64 / self.selected as f64, false)
        }
    }

    /// `selected_clean / clean`; 1.0 when no processed example was clean.
    pub fn recall(&self) -> f64 {
        if self.clean == 0 {
            1.0
        } else {
            self.selected_clean as f64 / self.clean as f64
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.processed == 0 {
            0.0
        } else {
            self.selected as f64 / self.processed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub test_accuracy: f64,
    pub diluted_label_accuracy: f64,
    pub predicted_label_accuracy: f64,
    pub selection_precision: f64,
    /// Set when no example was selected and precision is reported as 1.0.
    pub precision_undefined: bool,
    pub selection_recall: f64,
    pub selection_fraction: f64,
    pub mean_loss: f64,
    pub learning_rate: f64,
    pub counts: SelectionCounts,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.test_accuracy,
            self.diluted_label_accuracy,
            self.predicted_label_accuracy,
            self.selection_precision,
            self.selection_recall,
            self.selection_fraction,
            self.mean_loss,
            self.learning_rate
        )
    }
}

/// Fraction of examples whose stored diluted argmax equals the clean label.
///
/// `clean_by_id[id]` is the clean label of example `id`.
pub fn diluted_accuracy(store: &DilutedLabelStore, clean_by_id: &[usize]) -> Result<f64> {
    if store.is_empty() {
        return Err(Error::InvalidParameter("diluted accuracy of an empty store".into()));
    }
    if store.len() != clean_by_id.len() {
        return Err(Error::DimensionMismatch { what: "store vs clean labels", expected: store.len(), got: clean_by_id.len() });
    }
    let mut hits = 0usize;
    for (id, &clean) in clean_by_id.iter().enumerate() {
        if store.diluted_argmax(id)? == clean {
            hits += 1;
        }
    }
    Ok(hits as f64 / clean_by_id.len() as f64)
}

/// Fraction of examples the model classifies as their clean label.
pub fn predicted_accuracy(model: &ClassifierModel, dataset: &LabeledDataset) -> Result<f64> {
    let predicted = model.predict(dataset.features())?;
    let hits = predicted.iter().zip(dataset.clean_labels()).filter(|(p, c)| p == c).count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Clean labels reindexed by example id.
pub fn clean_by_id(dataset: &LabeledDataset) -> Vec<usize> {
    let mut out = vec![0; dataset.len()];
    for (&id, &label) in dataset.ids().iter().zip(dataset.clean_labels()) {
        out[id] = label;
    }
    out
}

pub fn history_to_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HISTORY_HEADER}");
    for m in history {
        let _ = writeln!(out, "{}", m.csv_row());
    }
    out
}

pub fn write_history_csv(history: &[EpochMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, history_to_csv(history)).map_err(|e| Error::io(path, e))
}

/// One parsed row of a metric-history CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub test_acc: f64,
    pub train_diluted_acc: f64,
    pub train_predicted_acc: f64,
    pub sel_precision: f64,
    pub sel_recall: f64,
    pub sel_fraction: f64,
    pub loss: f64,
    pub lr: f64,
}

pub fn parse_history_csv(text: &str) -> Result<Vec<HistoryRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HISTORY_HEADER => {}
        other => return Err(Error::MalformedHeader(format!("expected metric header, found {other:?}"))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::RowLength { line: line_no, expected: 9, found: f.len() });
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse { line: line_no, field: s.to_string() });
        rows.push(HistoryRow {
            epoch: f[0].parse().map_err(|_| Error::Parse { line: line_no, field: f[0].to_string() })?,
            test_acc: num(f[1])?,
            train_diluted_acc: num(f[2])?,
            train_predicted_acc: num(f[3])?,
            sel_precision: num(f[4])?,
            sel_recall: num(f[5])?,
            sel_fraction: num(f[6])?,
            loss: num(f[7])?,
            lr: num(f[8])?,
        });
    }
    Ok(rows)
}

/// Best (max over epochs) and Last (mean of the final ten epochs) test accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub best: f64,
    pub last: f64,
    pub best_epoch: usize,
    pub epochs: usize,
}

/// Summarizes a test-accuracy curve; `None` for an empty curve.
pub fn summarize(test_accuracy: &[f64]) -> Option<Summary> {
    if test_accuracy.is_empty() {
        return None;
    }
    let mut best_epoch = 0;
    for (e, &acc) in test_accuracy.iter().enumerate() {
        if acc > test_accuracy[best_epoch] {
            best_epoch = e;
        }
    }
    let window = &test_accuracy[test_accuracy.len().saturating_sub(LAST_WINDOW)..];
    let last = window.iter().sum::<f64>() / window.len() as f64;
    Some(Summary { best: test_accuracy[best_epoch], last, best_epoch, epochs: test_accuracy.len() })
}

pub fn summarize_history(history: &[EpochMetrics]) -> Option<Summary> {
    summarize(&history.iter().map(|m| m.test_accuracy).collect::<Vec<_>>())
}
