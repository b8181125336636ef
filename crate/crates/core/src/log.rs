//! Per-epoch training records and their CSV form.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::StructureEvent;
use crate::error::Result;

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 9] = [
    "epoch", "layer", "energy", "error", "wd_c", "wd_w", "n_hidden", "n_layers", "event",
];

/// One epoch of one layer. `epoch` and `layer` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub layer: usize,
    /// Mean data energy under the layer after the epoch.
    pub energy: f64,
    /// Mean per-unit cross-entropy on the layer's training input.
    pub error: f64,
    /// Total variance of the hidden-bias gradients.
    pub wd_c: f64,
    /// Total variance of the weight gradients.
    pub wd_w: f64,
    pub n_hidden: usize,
    pub n_layers: usize,
    /// Structure events separated by `;`.
    pub event: String,
}

impl LogRow {
    pub fn push_events(&mut self, events: &[StructureEvent]) {
        for e in events {
            if !self.event.is_empty() {
                self.event.push(';');
            }
            self.event.push_str(&e.to_string());
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = LogRow>) {
        self.rows.extend(rows);
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<LogRow>, _>>()?;
        Ok(Self { rows })
    }
}
