use serde::{Deserialize, Serialize};

use super::EvalReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub class: String,
    pub model: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl TableRow {
    /// One row per class, then a macro-average row carrying the overall
    /// accuracy.
    pub fn from_report(report: &EvalReport, model: &str) -> Vec<TableRow> {
        let mut rows: Vec<TableRow> = report
            .per_class
            .iter()
            .map(|c| TableRow {
                class: c.label.clone(),
                model: model.to_string(),
                precision: c.precision,
                recall: c.recall,
                f1: c.f1,
                accuracy: c.accuracy,
            })
            .collect();
        rows.push(TableRow {
            class: "Macro avg".into(),
            model: model.to_string(),
            precision: report.macro_avg.precision,
            recall: report.macro_avg.recall,
            f1: report.macro_avg.f1,
            accuracy: report.accuracy,
        });
        rows
    }
}

/// Aligned text table: `Class | Model | Precision | Recall | F1-Score | Accuracy`.
pub fn render_table(rows: &[TableRow]) -> String {
    let header = ["Class", "Model", "Precision", "Recall", "F1-Score", "Accuracy"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.class.clone(),
                r.model.clone(),
                format!("{:.2}", r.precision),
                format!("{:.2}", r.recall),
                format!("{:.2}", r.f1),
                format!("{:.2}", r.accuracy),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: Vec<&str>| {
        cols.iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&widths.map(|w| "-".repeat(w)).join("-|-"));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_multiclass;

    #[test]
    fn renders_aligned_columns() {
        let r = evaluate_multiclass(&["Heroin", "Alcohol"], &["Heroin", "Heroin"], &["Alcohol", "Heroin"]).unwrap();
        let text = render_table(&TableRow::from_report(&r, "NB"));
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Class"));
        assert!(lines[0].contains("F1-Score"));
        assert_eq!(lines.len(), 5);
        assert!(lines.iter().all(|l| l.chars().count() == lines[0].chars().count()));
        assert!(lines[3].contains("0.50"));
    }
}
