//! Delimiter-separated and human-readable renderings of the analytics
//! aggregates. All output is deterministic given the inputs.

use crate::analytics::{
    BlocklistCoverage, ContaminationReport, Direction, RecallBucketCurve, SplitComparison,
    SubsetAccuracy,
};
use crate::pipeline::RescanReport;

fn fmt_acc(acc: Option<f64>) -> String {
    match acc {
        Some(a) => format!("{a:.4}"),
        None => "undefined".to_string(),
    }
}

fn fmt_dir(dir: Option<Direction>) -> &'static str {
    match dir {
        Some(d) => d.arrow(),
        None => "-",
    }
}

pub fn contamination_tsv(report: &ContaminationReport) -> String {
    let mut out = String::from(
        "benchmark\ttotal\tonline\tdirty\tdirty_pct\tinput_only\tinput_only_pct\t\
         input_and_label\tinput_and_label_pct\tskipped\tunknown\n",
    );
    for row in &report.rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.benchmark,
            row.total,
            row.online,
            row.dirty,
            row.dirty_pct(),
            row.input_only,
            row.input_only_pct(),
            row.input_and_label,
            row.input_and_label_pct(),
            row.skipped,
            row.unknown,
        ));
    }
    out
}

pub fn contamination_table(report: &ContaminationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>8} {:>8} {:>16} {:>16} {:>18} {:>8} {:>8}\n",
        "benchmark",
        "total",
        "online",
        "dirty",
        "input-only",
        "input-and-label",
        "skipped",
        "unknown"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>16} {:>16} {:>18} {:>8} {:>8}\n",
            row.benchmark,
            row.total,
            row.online,
            format!("{} ({}%)", row.dirty, row.dirty_pct()),
            format!("{} ({}%)", row.input_only, row.input_only_pct()),
            format!("{} ({}%)", row.input_and_label, row.input_and_label_pct()),
            row.skipped,
            row.unknown,
        ));
    }
    out
}

fn subset_cells(subset: &SubsetAccuracy) -> String {
    format!(
        "{}\t{}\t{}",
        subset.n,
        subset.correct,
        fmt_acc(subset.accuracy())
    )
}

pub fn splits_tsv(comparison: &SplitComparison) -> String {
    let mut out = String::from(
        "model\tbenchmark\tclean_n\tclean_correct\tclean_acc\t\
         all_dirty_n\tall_dirty_correct\tall_dirty_acc\tall_dirty_marker\t\
         input_label_n\tinput_label_correct\tinput_label_acc\tinput_label_marker\n",
    );
    for row in &comparison.rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.model,
            row.benchmark,
            subset_cells(&row.clean),
            subset_cells(&row.all_dirty),
            fmt_dir(row.all_dirty_direction),
            subset_cells(&row.input_label),
            fmt_dir(row.input_label_direction),
        ));
    }
    for avg in &comparison.averages {
        out.push_str(&format!(
            "{}\taverage\t-\t-\t{}\t-\t-\t{}\t{}\t-\t-\t{}\t{}\n",
            avg.model,
            fmt_acc(avg.clean),
            fmt_acc(avg.all_dirty),
            fmt_dir(avg.all_dirty_direction),
            fmt_acc(avg.input_label),
            fmt_dir(avg.input_label_direction),
        ));
    }
    out
}

pub fn splits_table(comparison: &SplitComparison) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:<14} {:>10} {:>12} {:>16}\n",
        "model", "benchmark", "clean", "all-dirty", "input-label"
    ));
    for row in &comparison.rows {
        out.push_str(&format!(
            "{:<14} {:<14} {:>10} {:>12} {:>16}\n",
            row.model,
            row.benchmark,
            fmt_acc(row.clean.accuracy()),
            format!(
                "{} {}",
                fmt_acc(row.all_dirty.accuracy()),
                fmt_dir(row.all_dirty_direction)
            ),
            format!(
                "{} {}",
                fmt_acc(row.input_label.accuracy()),
                fmt_dir(row.input_label_direction)
            ),
        ));
    }
    for avg in &comparison.averages {
        out.push_str(&format!(
            "{:<14} {:<14} {:>10} {:>12} {:>16}\n",
            avg.model,
            "average",
            fmt_acc(avg.clean),
            format!(
                "{} {}",
                fmt_acc(avg.all_dirty),
                fmt_dir(avg.all_dirty_direction)
            ),
            format!(
                "{} {}",
                fmt_acc(avg.input_label),
                fmt_dir(avg.input_label_direction)
            ),
        ));
    }
    if !comparison.warnings.is_empty() {
        out.push('\n');
        for warning in &comparison.warnings {
            out.push_str(&format!("warning: {warning}\n"));
        }
    }
    out
}

pub fn buckets_tsv(curves: &[(String, RecallBucketCurve)]) -> String {
    let mut out = String::from("model\tbucket_low\tbucket_high\tn\taccuracy\n");
    for (model, curve) in curves {
        for bucket in &curve.buckets {
            out.push_str(&format!(
                "{}\t{:.2}\t{:.2}\t{}\t{:.4}\n",
                model,
                bucket.bucket_low,
                bucket.bucket_high,
                bucket.n,
                bucket.accuracy(),
            ));
        }
    }
    out
}

pub fn blocklist_tsv(coverage: &BlocklistCoverage) -> String {
    let mut out = String::from("level\tmatched\tdirty_total\tpct\n");
    out.push_str(&format!(
        "exact_url\t{}\t{}\t{}\n",
        coverage.exact_matches,
        coverage.dirty_total,
        coverage.exact_pct()
    ));
    out.push_str(&format!(
        "domain\t{}\t{}\t{}\n",
        coverage.domain_matches,
        coverage.dirty_total,
        coverage.domain_pct()
    ));
    for warning in &coverage.warnings {
        out.push_str(&format!("# warning: {warning}\n"));
    }
    out
}

pub fn rescan_tsv(report: &RescanReport) -> String {
    let mut out = String::from(
        "benchmark\ttotal\tbaseline_range\tbaseline_dirty\tbaseline_pct\t\
         alternate_range\talternate_dirty\talternate_pct\n",
    );
    let mut rows: Vec<crate::pipeline::RescanRow> = report.rows.clone();
    rows.push(report.overall());
    for row in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.benchmark,
            row.total,
            report.baseline_range,
            row.baseline_dirty,
            crate::analytics::percent_two_sig(row.baseline_dirty, row.total),
            report.alternate_range,
            row.alternate_dirty,
            crate::analytics::percent_two_sig(row.alternate_dirty, row.total),
        ));
    }
    out
}

pub fn rescan_table(report: &RescanReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "crawl range comparison: {} vs {}\n\n",
        report.baseline_range, report.alternate_range
    ));
    render_rescan_rows(report, &mut out);
    out
}

fn render_rescan_rows(report: &RescanReport, out: &mut String) {
    out.push_str(&format!(
        "{:<16} {:>8} {:>20} {:>20}\n",
        "benchmark", "total", "baseline dirty", "alternate dirty"
    ));
    let mut rows = report.rows.clone();
    rows.push(report.overall());
    for row in rows {
        out.push_str(&format!(
            "{:<16} {:>8} {:>20} {:>20}\n",
            row.benchmark,
            row.total,
            format!(
                "{} ({}%)",
                row.baseline_dirty,
                crate::analytics::percent_two_sig(row.baseline_dirty, row.total)
            ),
            format!(
                "{} ({}%)",
                row.alternate_dirty,
                crate::analytics::percent_two_sig(row.alternate_dirty, row.total)
            ),
        ));
    }
}
