//! The four CLI commands. Each writes its files into `out` and returns their
//! paths.

use std::path::{Path, PathBuf};

use serde::Serialize;
use smpc_core::ocp::solution_tree;
use smpc_core::performance::{averaged_performance, PerformanceReport};
use smpc_core::turnpike::TurnpikeProfile;
use smpc_core::{PerformanceSeries, StationaryEstimate, ValueTable};

use crate::error::Result;
use crate::experiment::{
    horizon_summaries, DppSummary, Equivalence, Experiment, HorizonSummary, OracleGap, PolicySlack,
    StationarySummary, REFERENCE_STATIONARY_COST,
};
use crate::export::{self, ensure_dir};
use crate::svg::{self, Fan, Line, Panel, PALETTE};

fn color(i: usize) -> String {
    PALETTE[i % PALETTE.len()].to_string()
}

/// Optimal laws per horizon (`ocp_N{N}.csv`) and fan plots of all scenario
/// state and control paths.
pub fn solve_ocp(exp: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let mut files = Vec::new();
    let mut state_fans = Vec::new();
    let mut control_fans = Vec::new();
    for (i, &n) in exp.config.turnpike.horizons.iter().enumerate() {
        let solution = exp.solve(n)?;
        let tree = solution_tree(&exp.model, exp.config.mpc.x0, &solution)?;
        let laws = tree.state_distributions();
        files.push(export::write_ocp_laws(&out.join(format!("ocp_N{n}.csv")), n, &laws, solution.value)?);
        if exp.config.output.emit_svg {
            let s = tree.branching();
            let mut xs = Vec::new();
            let mut us = Vec::new();
            for k in 0..n {
                let (here, next) = (tree.level_states(k), tree.level_states(k + 1));
                for (node, &x) in here.iter().enumerate() {
                    for j in 0..s {
                        xs.push([(k as f64, x), ((k + 1) as f64, next[node * s + j])]);
                    }
                }
                if k + 1 < n {
                    let (uk, un) = (solution.controls.level(k), solution.controls.level(k + 1));
                    for (node, &u) in uk.iter().enumerate() {
                        for j in 0..s {
                            us.push([(k as f64, u), ((k + 1) as f64, un[node * s + j])]);
                        }
                    }
                }
            }
            let label = format!("N={n}");
            state_fans.push(Fan { label: label.clone(), color: color(i), segments: xs });
            control_fans.push(Fan { label, color: color(i), segments: us });
        }
    }
    if exp.config.output.emit_svg {
        let states = Panel {
            title: "Optimal state paths".into(),
            x_label: "k".into(),
            y_label: "x".into(),
            fans: state_fans,
            ..Panel::default()
        };
        let controls = Panel {
            title: "Optimal control paths".into(),
            x_label: "k".into(),
            y_label: "u".into(),
            fans: control_fans,
            ..Panel::default()
        };
        files.push(export::write_text(&out.join("ocp_states.svg"), &svg::render(&[states]))?);
        files.push(export::write_text(&out.join("ocp_controls.svg"), &svg::render(&[controls]))?);
    }
    Ok(files)
}

struct Context {
    table: ValueTable,
    stationary: StationaryEstimate,
}

fn context(exp: &Experiment) -> Result<Context> {
    let table = exp.value_table(exp.table_horizon())?;
    let stationary = exp.stationary(&table)?;
    if stationary.estimators_disagree() {
        eprintln!(
            "warning: stationary-cost estimators disagree by {:.2}% (mid-horizon {}, marginal {:?})",
            100.0 * stationary.estimator_disagreement().unwrap_or(0.0),
            stationary.stationary_cost,
            stationary.marginal_cost
        );
    }
    Ok(Context { table, stationary })
}

fn closed_loop_series(exp: &Experiment, ctx: &Context, out: &Path, files: &mut Vec<PathBuf>) -> Result<Vec<(usize, PerformanceSeries)>> {
    let m = &exp.config.mpc;
    let retain = m.paths == 1 || exp.config.output.traces;
    let mut all = Vec::new();
    let mut traces = Vec::new();
    for &n in &m.horizons {
        let mc = exp.closed_loop(&ctx.table, n, ctx.stationary.stationary_cost, retain)?;
        files.push(export::write_series(&out.join(format!("performance_N{n}.csv")), &mc.series)?);
        if retain {
            files.push(export::write_traces(&out.join(format!("trace_N{n}.csv")), &mc.traces)?);
            traces.push((n, mc.traces[0].states.clone()));
        }
        all.push((n, mc.series));
    }
    if exp.config.output.emit_svg && m.paths == 1 {
        let lines = traces
            .iter()
            .enumerate()
            .map(|(i, (n, xs))| Line {
                label: format!("N={n}"),
                color: color(i),
                points: xs.iter().enumerate().map(|(k, &x)| (k as f64, x)).collect(),
            })
            .collect();
        let panel = Panel { title: "Closed-loop state (single path)".into(), x_label: "k".into(), y_label: "x".into(), lines, ..Panel::default() };
        files.push(export::write_text(&out.join("trace.svg"), &svg::render(&[panel]))?);
    }
    Ok(all)
}

fn performance_svg(series: &[(usize, PerformanceSeries)], stationary_cost: f64) -> String {
    let line = |i: usize, n: usize, ys: &[f64]| Line {
        label: format!("N={n}"),
        color: color(i),
        points: ys.iter().enumerate().map(|(k, &y)| ((k + 1) as f64, y)).collect(),
    };
    let cumulative = Panel {
        title: "Cumulative cost".into(),
        x_label: "K".into(),
        y_label: "J_K".into(),
        lines: series.iter().enumerate().map(|(i, (n, s))| line(i, *n, &s.cumulative)).collect(),
        ..Panel::default()
    };
    let averaged = Panel {
        title: "Averaged cost".into(),
        x_label: "K".into(),
        y_label: "J_K / K".into(),
        lines: series.iter().enumerate().map(|(i, (n, s))| line(i, *n, &s.averaged)).collect(),
        reference: vec![(stationary_cost, format!("stationary {stationary_cost:.3}"))],
        ..Panel::default()
    };
    svg::render(&[cumulative, averaged])
}

/// Monte-Carlo closed loops per horizon (`performance_N{N}.csv`) and the
/// cumulative/averaged cost plot.
pub fn run_mpc(exp: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let ctx = context(exp)?;
    let mut files = Vec::new();
    let series = closed_loop_series(exp, &ctx, out, &mut files)?;
    files.push(export::write_json(&out.join("stationary.json"), &StationarySummary::from(&ctx.stationary))?);
    if exp.config.output.emit_svg {
        let text = performance_svg(&series, ctx.stationary.stationary_cost);
        files.push(export::write_text(&out.join("performance.svg"), &text)?);
    }
    Ok(files)
}

#[derive(Serialize)]
struct HorizonCounts {
    horizon: usize,
    counts: Vec<usize>,
    max_middle_distance: f64,
    middle_below_endpoints: bool,
}

#[derive(Serialize)]
struct TurnpikeSummary {
    stationary: StationarySummary,
    thresholds: Vec<f64>,
    horizons: Vec<HorizonCounts>,
}

fn turnpike_summary(stationary: &StationaryEstimate, profiles: &[TurnpikeProfile], thresholds: &[f64]) -> TurnpikeSummary {
    TurnpikeSummary {
        stationary: stationary.into(),
        thresholds: thresholds.to_vec(),
        horizons: profiles
            .iter()
            .map(|p| HorizonCounts {
                horizon: p.horizon,
                counts: p.exceptional_counts.clone(),
                max_middle_distance: p.max_middle_distance(),
                middle_below_endpoints: p.middle_below_endpoints(),
            })
            .collect(),
    }
}

/// Distances of the optimal laws to the estimated stationary law and the
/// exceptional-set counts.
pub fn turnpike(exp: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let ctx = context(exp)?;
    let profiles = exp.profiles(&ctx.stationary)?;
    let t = &exp.config.turnpike;
    let mut files = vec![
        export::write_profiles(&out.join("turnpike_profiles.csv"), &profiles)?,
        export::write_counts(&out.join("turnpike_counts.csv"), &profiles)?,
        export::write_json(&out.join("turnpike.json"), &turnpike_summary(&ctx.stationary, &profiles, &t.thresholds))?,
    ];
    if exp.config.output.emit_svg {
        let lines = profiles
            .iter()
            .enumerate()
            .map(|(i, p)| Line {
                label: format!("N={}", p.horizon),
                color: color(i),
                points: p.distances.iter().enumerate().map(|(k, &d)| (k as f64, d)).collect(),
            })
            .collect();
        let panel = Panel {
            title: "W1 distance to the stationary law".into(),
            x_label: "k".into(),
            y_label: "distance".into(),
            lines,
            ..Panel::default()
        };
        files.push(export::write_text(&out.join("turnpike_distances.svg"), &svg::render(&[panel]))?);
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, limit: f64, pass: bool) -> Check {
    Check { name: name.into(), value, limit, pass }
}

#[derive(Serialize)]
struct PerformanceSection {
    k_max: usize,
    paths: usize,
    seed: u64,
    horizons: Vec<HorizonSummary>,
    delta_strictly_decreasing: bool,
    delta_nonincreasing: bool,
}

#[derive(Serialize)]
struct OvertakingSection {
    mpc_horizon: usize,
    reference_horizon: usize,
    delta: f64,
    margins: Vec<f64>,
}

#[derive(Serialize)]
struct Report {
    stationary: StationarySummary,
    reference_stationary_cost: f64,
    oracle: Vec<OracleGap>,
    dpp: DppSummary,
    performance: PerformanceSection,
    equivalence: Equivalence,
    optimal_operation: Vec<PolicySlack>,
    overtaking: OvertakingSection,
    turnpike: TurnpikeSummary,
    checks: Vec<Check>,
}

fn checks(
    exp: &Experiment,
    r: &Report,
    perf: &PerformanceReport,
    profiles: &[TurnpikeProfile],
) -> Vec<Check> {
    let reference = REFERENCE_STATIONARY_COST;
    let s = &r.stationary;
    let mut out = vec![
        check(
            "stationary cost within 2% of reference",
            (s.stationary_cost - reference).abs() / reference,
            0.02,
            (s.stationary_cost - reference).abs() <= 0.02 * reference,
        ),
        check(
            "stationary estimators agree within 2%",
            s.estimator_disagreement.unwrap_or(f64::INFINITY),
            0.02,
            s.estimator_disagreement.is_some_and(|d| d <= 0.02),
        ),
    ];
    let gap = r.oracle.iter().map(|g| g.relative_gap).fold(0.0, f64::max);
    out.push(check("tree vs grid DP relative gap", gap, 1e-3, gap <= 1e-3));
    let dpp = r.dpp.max_relative_residual;
    out.push(check("DPP relative residual", dpp, 2e-3, dpp <= 2e-3));

    let counts: Vec<usize> = profiles
        .iter()
        .filter(|p| (10..=15).contains(&p.horizon))
        .filter_map(|p| p.count_for(0.1))
        .collect();
    if let (Some(lo), Some(hi)) = (counts.iter().min(), counts.iter().max()) {
        out.push(check("exceptional count spread at eps=0.1, N=10..15", (hi - lo) as f64, 2.0, hi - lo <= 2));
    }
    let mid_ok = profiles.iter().filter(|p| p.horizon >= 8).all(TurnpikeProfile::middle_below_endpoints);
    out.push(check("mid-horizon distances below endpoints (N>=8)", mid_ok as u8 as f64, 1.0, mid_ok));

    if let Some(h) = perf.get(exp.config.performance.mpc_horizon) {
        let dev = (h.averaged_cost_limit - reference).abs() / reference;
        out.push(check("averaged cost at K_max within 5% of reference", dev, 0.05, dev <= 0.05));
    }
    let dec = perf.delta_strictly_decreasing();
    out.push(check("delta strictly decreasing beyond CI", dec as u8 as f64, 1.0, dec));
    let r2 = perf.horizons.iter().map(|h| h.slope_r2).fold(f64::INFINITY, f64::min);
    out.push(check("cumulative cost linear fit R^2", r2, 0.99, r2 > 0.99));
    let e = &r.equivalence;
    out.push(check("exact propagation inside MC interval", e.max_excess, 0.0, e.inside_all && e.merge_loss <= 1e-6));
    let op = r.optimal_operation.iter().all(|p| p.holds);
    out.push(check("no tested policy beats the stationary cost", op as u8 as f64, 1.0, op));
    let worst = r
        .overtaking
        .margins
        .iter()
        .enumerate()
        .map(|(i, m)| m + 1e-3 * (i + 1) as f64 * reference)
        .fold(f64::INFINITY, f64::min);
    out.push(check("overtaking margin + 1e-3*K*reference", worst, 0.0, worst >= 0.0));
    out
}

/// Consolidated `report.json` with every diagnostic and its check.
pub fn report(exp: &Experiment, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let ctx = context(exp)?;
    let ls = ctx.stationary.stationary_cost;
    let mut files = Vec::new();
    let series = closed_loop_series(exp, &ctx, out, &mut files)?;
    let refs: Vec<(usize, &PerformanceSeries)> = series.iter().map(|(n, s)| (*n, s)).collect();
    let perf = averaged_performance(&refs, ls, exp.config.performance.k_min)?;

    let p = &exp.config.performance;
    let mpc_series = series
        .iter()
        .find(|(n, _)| *n == p.mpc_horizon)
        .map(|(_, s)| s.clone())
        .map_or_else(|| exp.closed_loop(&ctx.table, p.mpc_horizon, ls, false).map(|m| m.series), Ok)?;
    let delta = perf
        .get(p.mpc_horizon)
        .map_or(mpc_series.averaged[mpc_series.k_max() - 1] - ls, |h| h.delta_estimate);
    let margins = exp.overtaking(&ctx.table, delta)?;
    files.push(export::write_margins(&out.join("overtaking_margin.csv"), &margins)?);

    let profiles = exp.profiles(&ctx.stationary)?;
    let mut report = Report {
        stationary: (&ctx.stationary).into(),
        reference_stationary_cost: REFERENCE_STATIONARY_COST,
        oracle: exp.oracle_gaps(&ctx.table)?,
        dpp: exp.dpp_summary(&ctx.table)?,
        performance: PerformanceSection {
            k_max: exp.config.mpc.k_max,
            paths: exp.config.mpc.paths,
            seed: exp.config.mpc.seed,
            horizons: horizon_summaries(&perf),
            delta_strictly_decreasing: perf.delta_strictly_decreasing(),
            delta_nonincreasing: perf.delta_nonincreasing(),
        },
        equivalence: exp.equivalence(&ctx.table, &mpc_series)?,
        optimal_operation: exp.policy_slacks(&ctx.table, ls, &refs)?,
        overtaking: OvertakingSection {
            mpc_horizon: p.mpc_horizon,
            reference_horizon: p.reference_horizon,
            delta,
            margins,
        },
        turnpike: turnpike_summary(&ctx.stationary, &profiles, &exp.config.turnpike.thresholds),
        checks: Vec::new(),
    };
    report.checks = checks(exp, &report, &perf, &profiles);
    files.push(export::write_json(&out.join("report.json"), &report)?);
    if exp.config.output.emit_svg {
        files.push(export::write_text(&out.join("performance.svg"), &performance_svg(&series, ls))?);
    }
    Ok(files)
}
