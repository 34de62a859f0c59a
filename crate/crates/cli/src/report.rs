//! Rendering of the per-language tables, the scatter data and the
//! arrow-format comparison.

use std::collections::BTreeMap;

use serde::Deserialize;
use vocab_mixin::coverage::{group_summary, scatter_csv, scatter_rows, DeltaRecord};
use vocab_mixin::tagger::ComparisonTable;
use vocab_mixin::{Error, Result};

use crate::args::{Format, ReportKind};

/// Input for `table2` and `fig1`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFile {
    pub records: Vec<DeltaRecord>,
    /// Language -> group label (table2).
    #[serde(default)]
    pub groups: BTreeMap<String, String>,
    /// Language -> type label (fig1).
    #[serde(default)]
    pub types: BTreeMap<String, String>,
    /// Language -> script (fig1).
    #[serde(default)]
    pub scripts: BTreeMap<String, String>,
}

fn schema<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Validation(format!("{source}: {e}")))
}

fn unsupported(kind: ReportKind, format: Format) -> Error {
    Error::Parameter(format!("{kind:?} cannot be rendered as {format:?}").to_lowercase())
}

pub fn default_format(kind: ReportKind) -> Format {
    match kind {
        ReportKind::Table2 | ReportKind::Table4 => Format::Text,
        ReportKind::Fig1 => Format::Csv,
    }
}

/// Renders one report from the text of a record file.
pub fn emit_report(kind: ReportKind, text: &str, source: &str, format: Format) -> Result<String> {
    match kind {
        ReportKind::Table2 => {
            let file: RecordFile = schema(text, source)?;
            let summary = group_summary(&file.records, &file.groups)?;
            match format {
                Format::Text => Ok(summary.to_text()),
                Format::Json => Ok(serde_json::to_string_pretty(&summary)? + "\n"),
                Format::Csv => Err(unsupported(kind, format)),
            }
        }
        ReportKind::Fig1 => {
            let file: RecordFile = schema(text, source)?;
            let rows = scatter_rows(&file.records, &file.types, &file.scripts)?;
            match format {
                Format::Csv => Ok(scatter_csv(&rows)),
                Format::Json => Ok(serde_json::to_string_pretty(&rows)? + "\n"),
                Format::Text => Err(unsupported(kind, format)),
            }
        }
        ReportKind::Table4 => {
            let table: ComparisonTable = schema(text, source)?;
            let pairs: Vec<(String, String)> = table
                .deltas
                .iter()
                .map(|d| (d.before.clone(), d.after.clone()))
                .collect();
            // Means and deltas are recomputed from the per-seed runs.
            let table = ComparisonTable::from_runs(&table.task, &table.seeds, table.runs, &pairs)?;
            match format {
                Format::Text => Ok(table.to_text()),
                Format::Json => Ok(table.to_json()? + "\n"),
                Format::Csv => Err(unsupported(kind, format)),
            }
        }
    }
}
