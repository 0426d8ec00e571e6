//! CSV and JSON writers. Formatting is deterministic, so identical results
//! give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use smpc_core::turnpike::TurnpikeProfile;
use smpc_core::{ClosedLoopTrace, DiscreteDistribution, PerformanceSeries};

use crate::error::{AppError, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| AppError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).map_err(|e| AppError::io(path, e))?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct TraceRow {
    path_id: u64,
    k: usize,
    x: f64,
    u: f64,
    w: f64,
    stage_cost: f64,
}

pub fn write_traces(path: &Path, traces: &[ClosedLoopTrace]) -> Result<PathBuf> {
    write_rows(
        path,
        traces.iter().flat_map(|t| {
            (0..t.steps()).map(move |k| TraceRow {
                path_id: t.path_id,
                k,
                x: t.states[k],
                u: t.controls[k],
                w: t.noises[k],
                stage_cost: t.stage_costs[k],
            })
        }),
    )
}

#[derive(Serialize)]
struct SeriesRow {
    #[serde(rename = "K")]
    k: usize,
    cumulative: f64,
    averaged: f64,
    shifted_cumulative: f64,
    ci_halfwidth: f64,
}

pub fn write_series(path: &Path, s: &PerformanceSeries) -> Result<PathBuf> {
    write_rows(
        path,
        (0..s.k_max()).map(|i| SeriesRow {
            k: i + 1,
            cumulative: s.cumulative[i],
            averaged: s.averaged[i],
            shifted_cumulative: s.shifted_cumulative[i],
            ci_halfwidth: s.confidence_halfwidth[i],
        }),
    )
}

#[derive(Serialize)]
struct LawRow {
    #[serde(rename = "N")]
    horizon: usize,
    k: usize,
    x: f64,
    probability: f64,
    value: f64,
}

/// Per-depth optimal laws; `value` repeats `V_N` on every row.
pub fn write_ocp_laws(path: &Path, horizon: usize, laws: &[DiscreteDistribution], value: f64) -> Result<PathBuf> {
    write_rows(
        path,
        laws.iter().enumerate().flat_map(|(k, law)| {
            law.atoms().iter().map(move |a| LawRow { horizon, k, x: a.value, probability: a.probability, value })
        }),
    )
}

#[derive(Serialize)]
struct DistanceRow {
    #[serde(rename = "N")]
    horizon: usize,
    k: usize,
    distance: f64,
}

pub fn write_profiles(path: &Path, profiles: &[TurnpikeProfile]) -> Result<PathBuf> {
    write_rows(
        path,
        profiles.iter().flat_map(|p| {
            p.distances.iter().enumerate().map(|(k, &distance)| DistanceRow { horizon: p.horizon, k, distance })
        }),
    )
}

/// One row per horizon, one count column per threshold.
pub fn write_counts(path: &Path, profiles: &[TurnpikeProfile]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(first) = profiles.first() {
        let mut header = vec!["N".to_string()];
        header.extend(first.thresholds.iter().map(|t| format!("count_eps_{t}")));
        w.write_record(&header)?;
    }
    for p in profiles {
        let mut row = vec![p.horizon.to_string()];
        row.extend(p.exceptional_counts.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct MarginRow {
    #[serde(rename = "K")]
    k: usize,
    margin: f64,
}

pub fn write_margins(path: &Path, margins: &[f64]) -> Result<PathBuf> {
    write_rows(path, margins.iter().enumerate().map(|(i, &margin)| MarginRow { k: i + 1, margin }))
}
