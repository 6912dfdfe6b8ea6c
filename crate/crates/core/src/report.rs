//! Tables and CSV for the command-line front end.
//!
//! CSV column order is fixed. When timestamps are enabled the first line of
//! every CSV is `# generated_at=<RFC 3339 UTC>`; nothing else in the output
//! depends on wall-clock time.

use std::fmt::Write as _;

use crate::codec::TcontClass;
use crate::latency::{
    compute_budget, reduction_between, rounded_percent, LatencyBudget, LatencyParams, Mode, Stage,
};
use crate::sim::{self, summarize, RunResult, Scenario, SimError};

/// Allowed gap between a pinned-variance simulated mean and its budget.
pub const PINNED_DEVIATION_LIMIT_PCT: f64 = 1.0;

pub fn timestamp_line() -> String {
    format!(
        "# generated_at={}\n",
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    )
}

fn fmt_us(v: f64) -> String {
    format!("{v:.3}")
}

fn csv_text(header: Option<&str>, rows: Vec<Vec<String>>) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.write_record(&row).expect("in-memory csv write");
    }
    let body = String::from_utf8(wtr.into_inner().expect("in-memory csv flush"))
        .expect("csv output is utf-8");
    match header {
        Some(h) => format!("{h}{body}"),
        None => body,
    }
}

fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// Parses `all` or a comma list of mode names; short forms `classical`,
/// `virtual` and `fast` are accepted.
pub fn parse_modes(list: &str) -> Result<Vec<Mode>, String> {
    if list.trim() == "all" {
        return Ok(Mode::ALL.to_vec());
    }
    let mut modes = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let mode = match part {
            "classical" | "classical_oem" => Mode::ClassicalOem,
            "virtual" | "virtual_pon" => Mode::VirtualPon,
            "fast" | "fast_intercept" => Mode::FastIntercept,
            other => {
                return Err(format!(
                    "unknown mode '{other}', expected all or a list of: classical, virtual, fast"
                ))
            }
        };
        if !modes.contains(&mode) {
            modes.push(mode);
        }
    }
    if modes.is_empty() {
        return Err("no modes given".into());
    }
    Ok(modes)
}

// ---------------------------------------------------------------------------
// budget

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetRow {
    pub budget: LatencyBudget,
    pub reduction_vs_classical: f64,
    pub reduction_vs_virtual: f64,
}

const BUDGET_STAGES: [Stage; 11] = [
    Stage::PiggybackWait,
    Stage::FiberUp,
    Stage::NicToCpu,
    Stage::DbaWindow,
    Stage::DbaCompute,
    Stage::BwmapWait,
    Stage::FastComputeExcess,
    Stage::BwmapModify,
    Stage::CpuToNic,
    Stage::FiberDown,
    Stage::GrantOffset,
];

pub fn budget_rows(params: &LatencyParams, modes: &[Mode]) -> Vec<BudgetRow> {
    let classical = compute_budget(params, Mode::ClassicalOem).total_us;
    let virt = compute_budget(params, Mode::VirtualPon).total_us;
    modes
        .iter()
        .map(|&mode| {
            let budget = compute_budget(params, mode);
            BudgetRow {
                reduction_vs_classical: reduction_between(classical, budget.total_us),
                reduction_vs_virtual: reduction_between(virt, budget.total_us),
                budget,
            }
        })
        .collect()
}

fn budget_header() -> Vec<String> {
    let mut h = vec!["mode".to_string()];
    h.extend(BUDGET_STAGES.iter().map(|s| s.label().to_string()));
    h.extend(
        [
            "total_us",
            "reduction_vs_classical_pct",
            "reduction_vs_virtual_pct",
            "reduction_vs_classical_exact",
            "reduction_vs_virtual_exact",
        ]
        .map(String::from),
    );
    h
}

fn budget_record(row: &BudgetRow) -> Vec<String> {
    let mut r = vec![row.budget.mode.as_str().to_string()];
    r.extend(
        BUDGET_STAGES
            .iter()
            .map(|&s| row.budget.stage(s).map(fmt_us).unwrap_or_default()),
    );
    r.push(fmt_us(row.budget.total_us));
    r.push(rounded_percent(row.reduction_vs_classical).to_string());
    r.push(rounded_percent(row.reduction_vs_virtual).to_string());
    r.push(format!("{:.2}", row.reduction_vs_classical));
    r.push(format!("{:.2}", row.reduction_vs_virtual));
    r
}

pub fn budget_csv(rows: &[BudgetRow], header: Option<&str>) -> String {
    let mut records = vec![budget_header()];
    records.extend(rows.iter().map(budget_record));
    csv_text(header, records)
}

pub fn budget_table(rows: &[BudgetRow]) -> String {
    let mut records = vec![vec![
        "mode".to_string(),
        "total_us".into(),
        "vs classical".into(),
        "vs virtual".into(),
    ]];
    for row in rows {
        records.push(vec![
            row.budget.mode.as_str().to_string(),
            format!("{:.2}", row.budget.total_us),
            format!(
                "{}% ({:.2})",
                rounded_percent(row.reduction_vs_classical),
                row.reduction_vs_classical
            ),
            format!(
                "{}% ({:.2})",
                rounded_percent(row.reduction_vs_virtual),
                row.reduction_vs_virtual
            ),
        ]);
    }
    render_table(&records)
}

// ---------------------------------------------------------------------------
// simulate

pub fn samples_csv(result: &RunResult, header: Option<&str>) -> String {
    let mut head: Vec<String> = [
        "alloc_id",
        "class",
        "arrival_us",
        "transmit_us",
        "latency_us",
    ]
    .map(String::from)
    .to_vec();
    head.extend(Stage::ALL.iter().map(|s| s.label().to_string()));
    let mut records = vec![head];
    for s in &result.samples {
        let mut r = vec![
            s.alloc_id.to_string(),
            s.class.as_str().to_string(),
            fmt_us(s.arrival_us),
            fmt_us(s.transmit_us),
            fmt_us(s.latency_us()),
        ];
        r.extend(s.stages.iter().map(|&v| fmt_us(v)));
        records.push(r);
    }
    csv_text(header, records)
}

pub fn summary_csv(results: &[&RunResult], header: Option<&str>) -> String {
    let mut records = vec![["class", "mode", "mean", "p50", "p99", "count"]
        .map(String::from)
        .to_vec()];
    for result in results {
        for s in &result.summary {
            records.push(vec![
                s.class.as_str().to_string(),
                result.mode.as_str().to_string(),
                fmt_us(s.mean_us),
                fmt_us(s.p50_us),
                fmt_us(s.p99_us),
                s.count.to_string(),
            ]);
        }
    }
    csv_text(header, records)
}

pub fn summary_table(result: &RunResult) -> String {
    let mut records = vec![["class", "mode", "count", "mean_us", "p50_us", "p99_us"]
        .map(String::from)
        .to_vec()];
    for s in &result.summary {
        records.push(vec![
            s.class.as_str().to_string(),
            result.mode.as_str().to_string(),
            s.count.to_string(),
            format!("{:.2}", s.mean_us),
            format!("{:.2}", s.p50_us),
            format!("{:.2}", s.p99_us),
        ]);
    }
    render_table(&records)
}

/// Invariant counters that must stay at zero.
pub fn invariant_failures(result: &RunResult) -> Vec<String> {
    let c = &result.counters;
    let mut out = Vec::new();
    if c.double_grant_violations > 0 {
        out.push(format!(
            "{}: {} frames granted a low-latency id through both schedulers",
            result.mode, c.double_grant_violations
        ));
    }
    if c.over_grant_violations > 0 {
        out.push(format!(
            "{}: {} grants exceeded reported demand",
            result.mode, c.over_grant_violations
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// compare

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub mode: Mode,
    pub class: TcontClass,
    pub count: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub budget_us: f64,
    pub deviation_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionRow {
    pub baseline: Mode,
    pub baseline_mean_us: f64,
    pub improved_mean_us: f64,
    pub reduction_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub pinned: bool,
    /// Class the reductions are computed on.
    pub focus: Option<TcontClass>,
    pub rows: Vec<CompareRow>,
    pub reductions: Vec<ReductionRow>,
    pub flags: Vec<String>,
    pub invariant_failures: Vec<String>,
}

/// Analytic budget that applies to `class` traffic in a run of `mode`.
pub fn budget_for(params: &LatencyParams, mode: Mode, class: TcontClass, fast_active: bool) -> f64 {
    let effective = match mode {
        Mode::FastIntercept if class == TcontClass::LowLatency && fast_active => {
            Mode::FastIntercept
        }
        Mode::FastIntercept => Mode::VirtualPon,
        other => other,
    };
    compute_budget(params, effective).total_us
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs the scenario under all three modes with identical traffic and seed.
pub fn compare(base: &Scenario) -> Result<CompareReport, SimError> {
    let scenarios: Vec<Scenario> = Mode::ALL
        .iter()
        .map(|&mode| Scenario {
            mode,
            ..base.clone()
        })
        .collect();
    let results = sim::sweep(&scenarios)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compare_results(base, &results))
}

pub fn compare_results(base: &Scenario, results: &[RunResult]) -> CompareReport {
    let has_low_latency = results
        .iter()
        .any(|r| r.samples_of(TcontClass::LowLatency).next().is_some());
    let focus = has_low_latency.then_some(TcontClass::LowLatency);

    let mut rows = Vec::new();
    let mut flags = Vec::new();
    let mut invariant = Vec::new();
    for result in results {
        invariant.extend(invariant_failures(result));
        for s in &result.summary {
            let budget_us = budget_for(&base.params, result.mode, s.class, result.fast_path_active);
            let deviation_pct = 100.0 * (s.mean_us - budget_us) / budget_us;
            if base.pin_variance && deviation_pct.abs() > PINNED_DEVIATION_LIMIT_PCT {
                flags.push(format!(
                    "DEVIATION {} {}: mean {:.2} us is {:+.2}% off the {:.2} us budget",
                    result.mode, s.class, s.mean_us, deviation_pct, budget_us
                ));
            }
            rows.push(CompareRow {
                mode: result.mode,
                class: s.class,
                count: s.count,
                mean_us: s.mean_us,
                p50_us: s.p50_us,
                p99_us: s.p99_us,
                budget_us,
                deviation_pct,
            });
        }
    }

    let focus_mean = |mode: Mode| -> Option<f64> {
        let r = results.iter().find(|r| r.mode == mode)?;
        match focus {
            Some(class) => mean(r.samples_of(class).map(|s| s.latency_us())),
            None => mean(r.samples.iter().map(|s| s.latency_us())),
        }
    };
    let mut reductions = Vec::new();
    if let Some(fast) = focus_mean(Mode::FastIntercept) {
        for baseline in [Mode::ClassicalOem, Mode::VirtualPon] {
            if let Some(b) = focus_mean(baseline) {
                reductions.push(ReductionRow {
                    baseline,
                    baseline_mean_us: b,
                    improved_mean_us: fast,
                    reduction_pct: reduction_between(b, fast),
                });
            }
        }
        if let Some(fast_run) = results.iter().find(|r| r.mode == Mode::FastIntercept) {
            if !fast_run.fast_path_active {
                flags.push(
                    "DEGRADED fast_intercept: no reserved window and preemption off, \
                     low-latency requests fall back to the CPU DBA"
                        .to_string(),
                );
            } else if focus_mean(Mode::VirtualPon).is_some_and(|v| fast >= v) {
                flags.push(format!(
                    "DEGRADED fast_intercept: mean {fast:.2} us is not below the virtual PON mean"
                ));
            }
        }
    }

    CompareReport {
        pinned: base.pin_variance,
        focus,
        rows,
        reductions,
        flags,
        invariant_failures: invariant,
    }
}

pub fn compare_csv(report: &CompareReport, header: Option<&str>) -> String {
    let mut records = vec![[
        "mode",
        "class",
        "count",
        "mean_us",
        "p50_us",
        "p99_us",
        "budget_us",
        "deviation_pct",
    ]
    .map(String::from)
    .to_vec()];
    for r in &report.rows {
        records.push(vec![
            r.mode.as_str().to_string(),
            r.class.as_str().to_string(),
            r.count.to_string(),
            fmt_us(r.mean_us),
            fmt_us(r.p50_us),
            fmt_us(r.p99_us),
            fmt_us(r.budget_us),
            format!("{:.3}", r.deviation_pct),
        ]);
    }
    csv_text(header, records)
}

pub fn reductions_csv(report: &CompareReport, header: Option<&str>) -> String {
    let mut records = vec![[
        "baseline",
        "class",
        "baseline_mean_us",
        "fast_intercept_mean_us",
        "reduction_pct",
        "reduction_exact",
    ]
    .map(String::from)
    .to_vec()];
    let class = report.focus.map_or("all", TcontClass::as_str);
    for r in &report.reductions {
        records.push(vec![
            r.baseline.as_str().to_string(),
            class.to_string(),
            fmt_us(r.baseline_mean_us),
            fmt_us(r.improved_mean_us),
            rounded_percent(r.reduction_pct).to_string(),
            format!("{:.2}", r.reduction_pct),
        ]);
    }
    csv_text(header, records)
}

pub fn compare_text(report: &CompareReport) -> String {
    let mut records = vec![
        ["mode", "class", "count", "mean_us", "budget_us", "dev_pct"]
            .map(String::from)
            .to_vec(),
    ];
    for r in &report.rows {
        records.push(vec![
            r.mode.as_str().to_string(),
            r.class.as_str().to_string(),
            r.count.to_string(),
            format!("{:.2}", r.mean_us),
            format!("{:.2}", r.budget_us),
            format!("{:+.2}", r.deviation_pct),
        ]);
    }
    let mut out = render_table(&records);
    out.push('\n');
    let class = report.focus.map_or("all", TcontClass::as_str);
    for r in &report.reductions {
        let _ = writeln!(
            out,
            "reduction vs {} ({class}): {}% ({:.2})",
            r.baseline,
            rounded_percent(r.reduction_pct),
            r.reduction_pct
        );
    }
    if !report.pinned {
        out.push_str(
            "note: stochastic run under the configured load; analytic budgets assume an unloaded PON\n",
        );
    }
    for flag in report.flags.iter().chain(&report.invariant_failures) {
        let _ = writeln!(out, "{flag}");
    }
    out
}

// ---------------------------------------------------------------------------
// sweep

pub fn sweep_csv(labelled: &[(String, RunResult)], header: Option<&str>) -> String {
    let mut records = vec![[
        "scenario", "mode", "class", "count", "mean_us", "p50_us", "p99_us",
    ]
    .map(String::from)
    .to_vec()];
    for (label, result) in labelled {
        for s in summarize(&result.samples) {
            records.push(vec![
                label.clone(),
                result.mode.as_str().to_string(),
                s.class.as_str().to_string(),
                s.count.to_string(),
                fmt_us(s.mean_us),
                fmt_us(s.p50_us),
                fmt_us(s.p99_us),
            ]);
        }
    }
    csv_text(header, records)
}
