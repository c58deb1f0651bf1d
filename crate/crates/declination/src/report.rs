//! Batch reporting: per-election metric tables, extreme-value rankings,
//! per-cycle sign-persistence summaries, and SVG declination diagrams.
//!
//! Rendered CSV values follow the display precision used throughout the
//! tables: two decimals for the declination and its `ln(N)/2` variant, one
//! decimal for the seat-equivalent variant, four decimals for everything
//! else. Undefined metrics render as empty cells. JSON output carries full
//! precision. All output is deterministic: identical inputs produce
//! byte-identical bytes.

use crate::impute::ResolvedGroup;
use crate::ingest::Chamber;
use crate::metrics::{Election, MetricsError, TauGap};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("declination is undefined: one party won all of the seats")]
    UndefinedDeclination,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One election's metrics, ready for rendering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionRow {
    pub state: String,
    pub chamber: Chamber,
    pub year: i32,
    pub cycle_id: String,
    pub seats: usize,
    pub delta_tilde: Option<f64>,
    pub declination: Option<f64>,
    pub delta_n: Option<f64>,
    pub efficiency_gap: f64,
    pub tau_gaps: Vec<TauGap>,
    pub mean_median: f64,
    pub seat_share_p: f64,
    pub vote_share_p: f64,
    pub n_imputed: usize,
    pub imputed_fraction: f64,
}

/// Computes one row per resolved election, in input order. The requested
/// `tau` values are sorted and deduplicated once for the whole table.
pub fn election_table(
    resolved: &[ResolvedGroup],
    taus: &[f64],
) -> Result<Vec<ElectionRow>, MetricsError> {
    resolved
        .iter()
        .map(|group| {
            let election = group.election();
            let metrics = election.metric_set(taus)?;
            Ok(ElectionRow {
                state: group.key.state.clone(),
                chamber: group.key.chamber,
                year: group.key.year,
                cycle_id: group.key.cycle_id.clone(),
                seats: election.n_districts(),
                delta_tilde: metrics.delta_tilde,
                declination: metrics.declination,
                delta_n: metrics.delta_n,
                efficiency_gap: metrics.efficiency_gap,
                tau_gaps: metrics.tau_gaps,
                mean_median: metrics.mean_median,
                seat_share_p: metrics.seat_share_p,
                vote_share_p: metrics.vote_share_p,
                n_imputed: group.n_imputed(),
                imputed_fraction: group.imputed_fraction(),
            })
        })
        .collect()
}

impl ElectionRow {
    /// The `Gap_tau` value computed for this row at exactly `tau`, when it
    /// was among the requested evaluation points.
    pub fn gap_for(&self, tau: f64) -> Option<f64> {
        self.tau_gaps.iter().find(|t| t.tau == tau).map(|t| t.gap)
    }
}

/// Pearson r-squared between two metric columns over the rows where both
/// are defined. `None` with fewer than two such rows or when either
/// column is constant. Useful for checking how closely a `Gap_tau`
/// tracks the declination on a given dataset.
pub fn metric_r_squared(
    rows: &[ElectionRow],
    x_of: impl Fn(&ElectionRow) -> Option<f64>,
    y_of: impl Fn(&ElectionRow) -> Option<f64>,
) -> Option<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((x_of(r)?, y_of(r)?)))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let syy: f64 = points.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy * sxy / (sxx * syy))
}

fn fmt_opt(value: Option<f64>, decimals: usize) -> String {
    value.map_or(String::new(), |v| format!("{v:.decimals$}"))
}

/// Shortest exact label for a tau value: 0.4 renders as "0.4", 2 as "2".
pub fn tau_label(tau: f64) -> String {
    let mut s = String::new();
    write!(s, "{tau}").expect("formatting f64 cannot fail");
    s
}

/// Writes the table as CSV at display precision. Tau columns are labeled
/// `gap_tau_<tau>` in ascending order.
pub fn write_table_csv<W: Write>(rows: &[ElectionRow], out: W) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_writer(out);
    let taus: Vec<f64> = rows
        .first()
        .map(|r| r.tau_gaps.iter().map(|t| t.tau).collect())
        .unwrap_or_default();
    let mut header = vec![
        "state".to_owned(),
        "chamber".to_owned(),
        "year".to_owned(),
        "cycle".to_owned(),
        "seats".to_owned(),
        "delta_tilde".to_owned(),
        "delta".to_owned(),
        "delta_n".to_owned(),
        "efficiency_gap".to_owned(),
    ];
    for &tau in &taus {
        header.push(format!("gap_tau_{}", tau_label(tau)));
    }
    header.extend([
        "mean_median".to_owned(),
        "seat_share_p".to_owned(),
        "vote_share_p".to_owned(),
        "imputed_fraction".to_owned(),
    ]);
    writer.write_record(&header)?;

    for row in rows {
        let mut record = vec![
            row.state.clone(),
            row.chamber.to_string(),
            row.year.to_string(),
            row.cycle_id.clone(),
            row.seats.to_string(),
            fmt_opt(row.delta_tilde, 2),
            fmt_opt(row.declination, 2),
            fmt_opt(row.delta_n, 1),
            format!("{:.4}", row.efficiency_gap),
        ];
        for gap in &row.tau_gaps {
            record.push(format!("{:.4}", gap.gap));
        }
        record.extend([
            format!("{:.4}", row.mean_median),
            format!("{:.4}", row.seat_share_p),
            format!("{:.4}", row.vote_share_p),
            format!("{:.4}", row.imputed_fraction),
        ]);
        writer.write_record(&record)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Ranked most-positive and most-negative `delta_tilde` rows. The lists
/// partition by sign (exact zeros appear in neither), so they are always
/// disjoint. Ties break by (year, state, chamber).
#[derive(Debug, Clone, Serialize)]
pub struct Extremes {
    pub most_positive: Vec<ElectionRow>,
    pub most_negative: Vec<ElectionRow>,
}

pub fn extremes(rows: &[ElectionRow], limit: usize) -> Extremes {
    let tie_key = |r: &ElectionRow| (r.year, r.state.clone(), r.chamber);
    let mut positive: Vec<ElectionRow> = rows
        .iter()
        .filter(|r| r.delta_tilde.is_some_and(|v| v > 0.0))
        .cloned()
        .collect();
    positive.sort_by(|a, b| {
        b.delta_tilde
            .partial_cmp(&a.delta_tilde)
            .expect("defined delta_tilde is finite")
            .then_with(|| tie_key(a).cmp(&tie_key(b)))
    });
    positive.truncate(limit);

    let mut negative: Vec<ElectionRow> = rows
        .iter()
        .filter(|r| r.delta_tilde.is_some_and(|v| v < 0.0))
        .cloned()
        .collect();
    negative.sort_by(|a, b| {
        a.delta_tilde
            .partial_cmp(&b.delta_tilde)
            .expect("defined delta_tilde is finite")
            .then_with(|| tie_key(a).cmp(&tie_key(b)))
    });
    negative.truncate(limit);

    Extremes {
        most_positive: positive,
        most_negative: negative,
    }
}

/// Writes both extreme lists as one CSV with a `direction` column.
pub fn write_extremes_csv<W: Write>(extremes: &Extremes, out: W) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "direction",
        "rank",
        "year",
        "state",
        "chamber",
        "seats",
        "delta_tilde",
        "delta",
        "delta_n",
    ])?;
    let mut emit = |direction: &str, rows: &[ElectionRow]| -> Result<(), csv::Error> {
        for (i, row) in rows.iter().enumerate() {
            writer.write_record([
                direction.to_owned(),
                (i + 1).to_string(),
                row.year.to_string(),
                row.state.clone(),
                row.chamber.to_string(),
                row.seats.to_string(),
                fmt_opt(row.delta_tilde, 2),
                fmt_opt(row.declination, 2),
                fmt_opt(row.delta_n, 1),
            ])?;
        }
        Ok(())
    };
    emit("positive", &extremes.most_positive)?;
    emit("negative", &extremes.most_negative)?;
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One year's `delta_tilde` within a cycle; `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearValue {
    pub year: i32,
    pub delta_tilde: Option<f64>,
}

/// Range and sign persistence of `delta_tilde` over one districting cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleSummary {
    pub state: String,
    pub chamber: Chamber,
    pub cycle_id: String,
    pub values: Vec<YearValue>,
    pub min_delta_tilde: f64,
    pub max_delta_tilde: f64,
    /// True when every defined value in the cycle has the same strict
    /// sign; a zero or a sign change breaks persistence.
    pub sign_persistent: bool,
    pub n_defined: usize,
}

/// Groups rows by (state, chamber, cycle) and summarizes each cycle.
/// Cycles without a single defined `delta_tilde` are dropped.
pub fn cycle_summary(rows: &[ElectionRow]) -> Vec<CycleSummary> {
    let mut cycles: BTreeMap<(String, Chamber, String), Vec<YearValue>> = BTreeMap::new();
    for row in rows {
        cycles
            .entry((row.state.clone(), row.chamber, row.cycle_id.clone()))
            .or_default()
            .push(YearValue {
                year: row.year,
                delta_tilde: row.delta_tilde,
            });
    }
    cycles
        .into_iter()
        .filter_map(|((state, chamber, cycle_id), mut values)| {
            values.sort_by_key(|v| v.year);
            let defined: Vec<f64> = values.iter().filter_map(|v| v.delta_tilde).collect();
            if defined.is_empty() {
                return None;
            }
            let min = defined.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = defined.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sign_persistent =
                defined.iter().all(|&v| v > 0.0) || defined.iter().all(|&v| v < 0.0);
            Some(CycleSummary {
                state,
                chamber,
                cycle_id,
                n_defined: defined.len(),
                min_delta_tilde: min,
                max_delta_tilde: max,
                sign_persistent,
                values,
            })
        })
        .collect()
}

/// Among elections with `|delta_tilde| > threshold`, the fraction whose
/// cycle is sign-persistent. `None` when no election clears the
/// threshold.
pub fn persistence_rate(summaries: &[CycleSummary], threshold: f64) -> Option<f64> {
    let mut qualifying = 0usize;
    let mut persistent = 0usize;
    for summary in summaries {
        for value in &summary.values {
            if let Some(v) = value.delta_tilde {
                if v.abs() > threshold {
                    qualifying += 1;
                    if summary.sign_persistent {
                        persistent += 1;
                    }
                }
            }
        }
    }
    (qualifying > 0).then(|| persistent as f64 / qualifying as f64)
}

const SVG_PLOT_WIDTH: f64 = 800.0;
const SVG_PLOT_HEIGHT: f64 = 500.0;
const SVG_MARGIN: f64 = 40.0;

/// Renders the declination geometry for one election as a standalone SVG
/// document: district shares at x = (i - 1/2)/N, the mass centers of the
/// lost and won blocks, the pivot at (k/N, 1/2), and the two line
/// segments whose angle is the declination. Same election, same bytes.
pub fn declination_diagram(election: &Election) -> Result<String, ReportError> {
    let delta = election
        .declination()
        .ok_or(ReportError::UndefinedDeclination)?;
    let split = election.split();
    let n = election.n_districts() as f64;
    let px = |x: f64| SVG_MARGIN + SVG_PLOT_WIDTH * x;
    let py = |y: f64| SVG_MARGIN + SVG_PLOT_HEIGHT * (1.0 - y);

    let width = SVG_PLOT_WIDTH + 2.0 * SVG_MARGIN;
    let height = SVG_PLOT_HEIGHT + 2.0 * SVG_MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{:.2}" y="{:.2}" width="{SVG_PLOT_WIDTH}" height="{SVG_PLOT_HEIGHT}" fill="none" stroke="#cccccc" stroke-width="1"/>"##,
        px(0.0),
        py(1.0),
    );
    // share gridline and midline through (0, 1/2) and (1, 1/2)
    for (y, dash) in [(0.25, true), (0.5, false), (0.75, true)] {
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1"{}/>"#,
            px(0.0),
            py(y),
            px(1.0),
            py(y),
            if dash { "#eeeeee" } else { "#888888" },
            if dash {
                r#" stroke-dasharray="4 4""#
            } else {
                ""
            },
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="#555555" text-anchor="end">{y:.2}</text>"##,
            px(0.0) - 6.0,
            py(y) + 4.0,
        );
    }
    // district shares at x = (i - 1/2)/N, colored by which party wins
    for (i, &p) in election.shares().iter().enumerate() {
        let x = (i as f64 + 0.5) / n;
        let fill = if p <= 0.5 { "#c03a2b" } else { "#2362a2" };
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}"/>"#,
            px(x),
            py(p),
        );
    }

    let y_bar = split.y_bar.expect("declination defined implies k >= 1");
    let z_bar = split.z_bar.expect("declination defined implies k' >= 1");
    let f = (split.k as f64 / (2.0 * n), y_bar);
    let g = (split.k as f64 / n, 0.5);
    let h = (split.k as f64 / n + split.k_prime as f64 / (2.0 * n), z_bar);
    for (a, b) in [(f, g), (g, h)] {
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            px(a.0),
            py(a.1),
            px(b.0),
            py(b.1),
        );
    }
    for (point, label) in [(f, "F"), (h, "H")] {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="black"/>"#,
            px(point.0),
            py(point.1),
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" fill="black">{label}</text>"#,
            px(point.0) + 8.0,
            py(point.1) - 8.0,
        );
    }
    let _ = writeln!(
        svg,
        r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="white" stroke="black" stroke-width="2"/>"#,
        px(g.0),
        py(g.1),
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" fill="black">G</text>"#,
        px(g.0) + 8.0,
        py(g.1) + 18.0,
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="16" fill="black">declination = {delta:.2}</text>"#,
        px(0.0) + 10.0,
        py(1.0) + 24.0,
    );
    let _ = writeln!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="#555555">{} share by district, sorted</text>"##,
        px(0.0),
        py(0.0) + 28.0,
        election.party_p_name(),
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}
