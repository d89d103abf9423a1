use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

use super::{RunStatus, RunStore, StoreError};
use crate::case::{normalize_text, MedicationAction, Prescription};
use crate::eval::{radar_export, MetricReport, RadarDocument, RadarInput, RatioPair, Rational};
use crate::workflow::PipelineKind;

/// One (pipeline, model) combination, labeled `C1`, `C2`, ... in table order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub label: String,
    pub pipeline: PipelineKind,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Cell {
    Ratio(RatioPair),
    Real(Rational),
    Bool(bool),
    /// The run's revised plan equals that of the named column.
    SameAs(String),
    Missing,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Ratio(pair) => pair.to_string(),
            Cell::Real(r) => format_real(*r),
            Cell::Bool(true) => "Yes".into(),
            Cell::Bool(false) => "No".into(),
            Cell::SameAs(label) => format!("Same as {label}"),
            Cell::Missing => "-".into(),
        }
    }
}

/// Two decimals at most, trailing zeros dropped.
fn format_real(r: Rational) -> String {
    let text = format!("{:.2}", r.to_f64());
    text.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    /// One cell per column, with the run it came from.
    pub cells: Vec<(Cell, Option<String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseGroup {
    pub case_id: String,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub columns: Vec<Column>,
    pub groups: Vec<CaseGroup>,
}

/// What "same plan" means: medications with their action, dose and
/// frequency, plus monitoring, all normalized. Rationale text is ignored.
type PlanKey = (Vec<(String, MedicationAction, String, String)>, Vec<String>);

fn plan_key(plan: &Prescription) -> PlanKey {
    let norm = |s: &Option<String>| s.as_deref().map(normalize_text).unwrap_or_default();
    let mut meds: Vec<_> =
        plan.medications.iter().map(|m| (m.canonical.clone(), m.action, norm(&m.dose), norm(&m.frequency))).collect();
    meds.sort();
    let mut monitoring: Vec<String> = plan.monitoring.iter().map(|m| normalize_text(m)).collect();
    monitoring.sort();
    (meds, monitoring)
}

struct RunView {
    run_id: String,
    key: PlanKey,
    metrics: Option<MetricReport>,
}

const METRICS: [&str; 6] =
    ["Correctness", "Completeness", "DDI Ratio", "Contraindication Ratio", "Medication Ratio", "Met-goal Ratio"];
const PREFERRED: &str = "Is the preferred option set included?";

fn metric_cell(report: &MetricReport, metric: &str) -> Cell {
    match metric {
        PREFERRED => report.preferred_included.map_or(Cell::Missing, Cell::Bool),
        "Correctness" => Cell::Ratio(report.correctness),
        "Completeness" => Cell::Ratio(report.completeness),
        "DDI Ratio" => Cell::Ratio(report.ddi_ratio),
        "Contraindication Ratio" => Cell::Ratio(report.contraindication_ratio),
        "Medication Ratio" => Cell::Ratio(report.medication_ratio),
        "Met-goal Ratio" => report.met_goal_ratio.map_or(Cell::Missing, Cell::Real),
        _ => Cell::Missing,
    }
}

/// Builds the per-case metric table over every valid run in the store.
/// When several runs share a case and column, the greatest run id wins.
pub fn report_table(store: &RunStore) -> Result<ReportTable, StoreError> {
    let mut by_cell: BTreeMap<(String, (PipelineKind, String)), RunView> = BTreeMap::new();
    let mut combos = BTreeSet::new();
    for entry in store.list_runs()? {
        if entry.status == RunStatus::Invalid {
            continue;
        }
        let record = store.load_run(&entry.run_id)?;
        let metrics = store.load_metrics(&entry.run_id)?;
        let combo = (record.pipeline, record.model_id.clone());
        combos.insert(combo.clone());
        by_cell.insert(
            (record.case_id.clone(), combo),
            RunView { run_id: entry.run_id, key: plan_key(&record.revised_plan), metrics },
        );
    }
    let columns: Vec<Column> = combos
        .iter()
        .enumerate()
        .map(|(i, (pipeline, model))| Column {
            label: format!("C{}", i + 1),
            pipeline: *pipeline,
            model_id: model.clone(),
        })
        .collect();

    let cases: BTreeSet<String> = by_cell.keys().map(|(case, _)| case.clone()).collect();
    let mut groups = Vec::new();
    for case in cases {
        let views: Vec<Option<&RunView>> =
            combos.iter().map(|combo| by_cell.get(&(case.clone(), combo.clone()))).collect();
        // Earliest column with an identical plan, per column.
        let same_as: Vec<Option<usize>> = views
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let v = (*v)?;
                (0..j).find(|&i| views[i].is_some_and(|w| w.key == v.key))
            })
            .collect();
        let has_preferred =
            views.iter().flatten().any(|v| v.metrics.as_ref().is_some_and(|m| m.preferred_included.is_some()));
        let metric_names = has_preferred.then_some(PREFERRED).into_iter().chain(METRICS);
        let rows = metric_names
            .map(|metric| MetricRow {
                metric: metric.to_string(),
                cells: views
                    .iter()
                    .zip(&same_as)
                    .map(|(view, same)| match (view, same) {
                        (None, _) => (Cell::Missing, None),
                        (Some(v), Some(i)) => (Cell::SameAs(columns[*i].label.clone()), Some(v.run_id.clone())),
                        (Some(v), None) => (
                            v.metrics.as_ref().map_or(Cell::Missing, |m| metric_cell(m, metric)),
                            Some(v.run_id.clone()),
                        ),
                    })
                    .collect(),
            })
            .collect();
        groups.push(CaseGroup { case_id: case, rows });
    }
    Ok(ReportTable { columns, groups })
}

/// Fixed-width text rendering with a column legend.
pub fn render_table(table: &ReportTable) -> String {
    let mut out = String::new();
    for c in &table.columns {
        out.push_str(&format!("{}: {} / {}\n", c.label, c.pipeline, c.model_id));
    }
    if !table.columns.is_empty() {
        out.push('\n');
    }
    let mut lines: Vec<Vec<String>> = vec![["Case", "Metric"]
        .iter()
        .map(|s| s.to_string())
        .chain(table.columns.iter().map(|c| c.label.clone()))
        .collect()];
    for group in &table.groups {
        for (i, row) in group.rows.iter().enumerate() {
            let case = if i == 0 { group.case_id.clone() } else { String::new() };
            lines.push(
                [case, row.metric.clone()].into_iter().chain(row.cells.iter().map(|(c, _)| c.render())).collect(),
            );
        }
    }
    let widths: Vec<usize> =
        (0..lines[0].len()).map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0)).collect();
    for line in &lines {
        let cells: Vec<String> = line.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Long-form CSV: one line per cell, each traceable to its run.
pub fn render_csv(table: &ReportTable) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["case_id", "metric", "column", "pipeline", "model_id", "run_id", "value"])?;
    for group in &table.groups {
        for row in &group.rows {
            for ((cell, run_id), column) in row.cells.iter().zip(&table.columns) {
                writer.write_record([
                    group.case_id.as_str(),
                    row.metric.as_str(),
                    column.label.as_str(),
                    column.pipeline.as_str(),
                    column.model_id.as_str(),
                    run_id.as_deref().unwrap_or(""),
                    cell.render().as_str(),
                ])?;
            }
        }
    }
    let bytes = writer.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Radar data over the store's multi-agent runs, rated or not.
pub fn radar_from_store(store: &RunStore) -> Result<RadarDocument, StoreError> {
    let mut inputs = Vec::new();
    for entry in store.list_runs()? {
        if entry.status == RunStatus::Invalid || entry.pipeline != Some(PipelineKind::MultiAgent) {
            continue;
        }
        let record = store.load_run(&entry.run_id)?;
        let summaries = store.load_ratings(&entry.run_id)?.summaries()?.into_values().collect();
        inputs.push(RadarInput { case_id: record.case_id, model_id: record.model_id, summaries });
    }
    Ok(radar_export(&inputs))
}
